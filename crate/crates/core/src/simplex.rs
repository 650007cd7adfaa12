//! Points of the probability simplex, the projected simplex, and the maps
//! between them and logit space.
//!
//! `softmax⁺` treats the last class as carrying an implicit logit fixed at
//! zero, which makes it a bijection from `ℝ^{C-1}` onto the open projected
//! simplex. Everything is evaluated through the shifted log-domain form in
//! [`log_probs_plus`], so large logits neither overflow nor lose the
//! probability of the reference class.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};

/// Tolerance on simplex membership (sums and range checks).
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over `C` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::NotInSimplex("empty vector".into()));
        }
        if let Some((i, v)) = p
            .iter()
            .enumerate()
            .find(|(_, &v)| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&v))
        {
            return Err(Error::NotInSimplex(format!("component {i} = {v}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotInSimplex(format!("components sum to {sum}")));
        }
        Ok(Self(p))
    }

    /// The uniform distribution over `classes` outcomes.
    pub fn uniform(classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / classes as f64; classes])
    }

    /// Point mass on the zero-based class `i`.
    pub fn vertex(classes: usize, i: usize) -> Result<Self> {
        if i >= classes {
            return Err(Error::LabelOutOfRange {
                label: i + 1,
                classes,
            });
        }
        let mut p = vec![0.0; classes];
        p[i] = 1.0;
        Ok(Self(p))
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Zero-based index of the largest probability; ties go to the smallest
    /// index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}

/// First `C-1` coordinates of a simplex point.
///
/// The mass of the dropped class is kept alongside: it equals `1 - Σ p̃_i`
/// in exact arithmetic, but when it is tiny that subtraction cancels
/// catastrophically, so maps that know it more precisely record it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSimplexPoint {
    p: Vec<f64>,
    remainder: f64,
}

impl ProjectedSimplexPoint {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = p
            .iter()
            .enumerate()
            .find(|(_, &v)| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&v))
        {
            return Err(Error::NotInSimplex(format!("component {i} = {v}")));
        }
        let sum: f64 = p.iter().sum();
        if sum > 1.0 + SIMPLEX_TOL {
            return Err(Error::NotInSimplex(format!(
                "projected components sum to {sum} > 1"
            )));
        }
        let remainder = (1.0 - sum).clamp(0.0, 1.0);
        Ok(Self { p, remainder })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Probability of the implicit last class.
    pub fn remainder(&self) -> f64 {
        self.remainder
    }

    /// All components strictly positive and the remainder strictly positive.
    pub fn is_interior(&self) -> bool {
        self.remainder > 0.0 && self.p.iter().all(|&v| v > 0.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }
}

/// A vector of `C-1` finite logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("logit {i} = {v}")));
        }
        Ok(Self(x))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LogitVector> for Vec<f64> {
    fn from(x: LogitVector) -> Self {
        x.0
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `Π`: drop the last coordinate.
pub fn project(p: &SimplexPoint) -> Result<ProjectedSimplexPoint> {
    let c = p.classes();
    if c < 2 {
        return Err(Error::TooFewClasses { min: 2, found: c });
    }
    Ok(ProjectedSimplexPoint {
        p: p.0[..c - 1].to_vec(),
        remainder: p.0[c - 1],
    })
}

/// `Π⁻¹`: append the remaining mass.
pub fn unproject(p: &ProjectedSimplexPoint) -> Result<SimplexPoint> {
    if p.p.is_empty() {
        return Err(Error::TooFewClasses { min: 2, found: 1 });
    }
    let mut full = Vec::with_capacity(p.p.len() + 1);
    full.extend_from_slice(&p.p);
    full.push(p.remainder);
    Ok(SimplexPoint(full))
}

/// The shift used by the stable forms: the largest logit, including the
/// implicit zero of the reference class.
fn shift_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(0.0, f64::max)
}

/// `log Π⁻¹(softmax⁺(x))` on any [`Arith`], as
/// `(x_i − x* − log S, …, −x* − log S)` with
/// `S = e^{−x*} + Σ e^{x_k − x*}`.
///
/// `x*` only enters as a constant: it cancels analytically, so its
/// derivative is never needed.
pub fn log_probs_plus<A: Arith>(ar: &mut A, x: &[A::S]) -> Vec<A::S> {
    let vals: Vec<f64> = x.iter().map(|&v| ar.value(v)).collect();
    let m = shift_of(&vals);
    let shifted: Vec<A::S> = x.iter().map(|&v| ar.shift(v, -m)).collect();
    let mut terms = Vec::with_capacity(x.len() + 1);
    terms.push(ar.constant((-m).exp()));
    for &s in &shifted {
        terms.push(ar.exp(s));
    }
    let total = ar.sum(&terms);
    let log_s = ar.ln(total);
    let mut out: Vec<A::S> = shifted.iter().map(|&s| ar.sub(s, log_s)).collect();
    let last = ar.neg(log_s);
    out.push(ar.shift(last, -m));
    out
}

/// `LogSumExp⁺(x) = log(1 + Σ e^{x_k})` on any [`Arith`].
pub fn log_sum_exp_plus_with<A: Arith>(ar: &mut A, x: &[A::S]) -> A::S {
    let vals: Vec<f64> = x.iter().map(|&v| ar.value(v)).collect();
    let m = shift_of(&vals);
    let mut terms = Vec::with_capacity(x.len() + 1);
    terms.push(ar.constant((-m).exp()));
    for &v in x {
        let s = ar.shift(v, -m);
        terms.push(ar.exp(s));
    }
    let total = ar.sum(&terms);
    let l = ar.ln(total);
    ar.shift(l, m)
}

/// `log(1 + Σ e^{x_k})`, finite for every finite input.
pub fn log_sum_exp_plus(x: &LogitVector) -> f64 {
    log_sum_exp_plus_with(&mut Plain, &x.0)
}

/// Log-probabilities of all `C` classes for logits `x`.
pub fn stable_log_probs(x: &LogitVector) -> Vec<f64> {
    log_probs_plus(&mut Plain, &x.0)
}

/// `softmax⁺(x)_i = e^{x_i} / (1 + Σ e^{x_k})`.
pub fn softmax_plus(x: &LogitVector) -> ProjectedSimplexPoint {
    softmax_plus_slice(&x.0)
}

pub(crate) fn softmax_plus_slice(x: &[f64]) -> ProjectedSimplexPoint {
    let mut lp = log_probs_plus(&mut Plain, x);
    let remainder = lp.pop().map(f64::exp).unwrap_or(1.0);
    ProjectedSimplexPoint {
        p: lp.into_iter().map(f64::exp).collect(),
        remainder,
    }
}

/// Inverse of `softmax⁺` on the open projected simplex:
/// `x_i = log(p̃_i / (1 − Σ p̃_k))`.
pub fn softmax_plus_inverse(p: &ProjectedSimplexPoint) -> Result<LogitVector> {
    if p.p.is_empty() {
        return Err(Error::TooFewClasses { min: 2, found: 1 });
    }
    if !p.is_interior() {
        return Err(Error::Domain(
            "softmax⁺ inverse needs every probability strictly inside (0, 1)".into(),
        ));
    }
    let log_last = p.remainder.ln();
    LogitVector::new(p.p.iter().map(|&v| v.ln() - log_last).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(x: &[f64]) -> LogitVector {
        LogitVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn project_drops_last_component() {
        let p = SimplexPoint::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(project(&p).unwrap().as_slice(), &[0.2, 0.3]);
        let p = SimplexPoint::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(project(&p).unwrap().as_slice(), &[1.0]);
        let p = SimplexPoint::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(project(&p).unwrap().as_slice(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn project_needs_two_classes() {
        let p = SimplexPoint::new(vec![1.0]).unwrap();
        assert!(matches!(project(&p), Err(Error::TooFewClasses { .. })));
    }

    #[test]
    fn unproject_appends_remaining_mass() {
        let q = ProjectedSimplexPoint::new(vec![0.2, 0.3]).unwrap();
        assert_eq!(unproject(&q).unwrap().as_slice(), &[0.2, 0.3, 0.5]);
        let third = 1.0 / 3.0;
        let q = ProjectedSimplexPoint::new(vec![third, third]).unwrap();
        let full = unproject(&q).unwrap();
        for v in full.as_slice() {
            assert!((v - third).abs() < 1e-15);
        }
        let empty = ProjectedSimplexPoint::new(vec![]).unwrap();
        assert!(unproject(&empty).is_err());
    }

    #[test]
    fn projected_point_rejects_excess_mass() {
        assert!(ProjectedSimplexPoint::new(vec![0.6, 0.5]).is_err());
        assert!(ProjectedSimplexPoint::new(vec![0.5, 0.5 + 1e-13]).is_ok());
        assert!(ProjectedSimplexPoint::new(vec![-0.1, 0.5]).is_err());
    }

    #[test]
    fn simplex_point_validation() {
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![1.2, -0.2]).is_err());
        assert!(SimplexPoint::new(vec![]).is_err());
        assert!(SimplexPoint::new(vec![0.25; 4]).is_ok());
    }

    #[test]
    fn log_sum_exp_plus_values() {
        assert!((log_sum_exp_plus(&lv(&[0.0, 0.0])) - 3f64.ln()).abs() < 1e-15);
        // log(1 + e^10000) = 10000 + log(1 + e^-10000) = 10000 to double precision
        assert!((log_sum_exp_plus(&lv(&[10000.0])) - 10000.0).abs() < 1e-9);
        assert!(log_sum_exp_plus(&lv(&[-10000.0])).abs() < 1e-12);
    }

    #[test]
    fn softmax_plus_values() {
        let u = softmax_plus(&lv(&[0.0, 0.0]));
        for v in u.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let u = softmax_plus(&lv(&[2f64.ln()]));
        assert!((u.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        // frozen from mpmath at 30 digits:
        // e^3/(1+e^3+e^-1) = 0.936239551876505718..., e^-1/(...) = 0.0171478255455203901...
        let u = softmax_plus(&lv(&[3.0, -1.0]));
        assert!((u.as_slice()[0] - 0.936_239_551_876_505_7).abs() < 1e-15);
        assert!((u.as_slice()[1] - 0.017_147_825_545_520_39).abs() < 1e-15);
    }

    #[test]
    fn softmax_plus_is_the_sigmoid_for_two_classes() {
        for &x in &[-30.0, -2.5, 0.0, 0.7, 12.0] {
            let u = softmax_plus(&lv(&[x])).as_slice()[0];
            let s = 1.0 / (1.0 + (-x).exp());
            assert!((u - s).abs() < 1e-15, "{x}: {u} vs {s}");
        }
    }

    #[test]
    fn softmax_plus_inverse_values() {
        let third = 1.0 / 3.0;
        let x = softmax_plus_inverse(&ProjectedSimplexPoint::new(vec![third, third]).unwrap())
            .unwrap();
        for v in x.as_slice() {
            assert!(v.abs() < 1e-15);
        }
        let x =
            softmax_plus_inverse(&ProjectedSimplexPoint::new(vec![2.0 / 3.0]).unwrap()).unwrap();
        assert!((x.as_slice()[0] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_plus_inverse_rejects_boundary() {
        for p in [vec![0.0, 0.5], vec![0.5, 0.5], vec![1.0]] {
            let q = ProjectedSimplexPoint::new(p).unwrap();
            assert!(matches!(softmax_plus_inverse(&q), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn stable_log_probs_values() {
        let lp = stable_log_probs(&lv(&[0.0, 0.0]));
        for v in &lp {
            assert!((v + 3f64.ln()).abs() < 1e-15);
        }
        let lp = stable_log_probs(&lv(&[10000.0]));
        assert!(lp.iter().all(|v| v.is_finite()));
        assert!(lp[0].abs() < 1e-300);
        assert!((lp[1] + 10000.0).abs() < 1e-9);
        // the naive route overflows here
        assert!(!(10000f64.exp()).is_finite());

        let x = [-50.0, -50.0];
        let lp = stable_log_probs(&lv(&x));
        let denom = 1.0 + 2.0 * (-50f64).exp();
        let naive = [((-50f64).exp() / denom).ln(), ((-50f64).exp() / denom).ln(), (1.0 / denom).ln()];
        for (a, b) in lp.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn very_negative_logits_stay_finite() {
        let lp = stable_log_probs(&lv(&[-10000.0, -20000.0]));
        assert!(lp.iter().all(|v| v.is_finite()));
        assert!(lp[2].abs() < 1e-300);
    }

    #[test]
    fn logit_vector_rejects_non_finite() {
        assert!(LogitVector::new(vec![f64::NAN]).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
    }
}
