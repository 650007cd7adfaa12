//! Proper losses: partial losses, conditional risk, properness checks, and
//! the canonical loss induced by an inverse link.
//!
//! An inverse link `f = u ∘ v⁻¹` is the gradient of a convex potential `F`
//! on logit space. `F` has no closed form for a learned chain, so
//! [`potential`] reconstructs it as the line integral of `f` from a base
//! point; the field is conservative, so the path does not matter. The
//! canonical loss at logits `x` is then `(F(x) − x_1, …, F(x) − x_{C−1},
//! F(x))`, defined up to the additive constant `F(x₀)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::simplex::{stable_log_probs, LogitVector, SimplexPoint};

/// Threshold on `L(p,p) − L(p,q)` above which a pair counts as a violation.
pub const PROPERNESS_TOL: f64 = 1e-9;

/// Default number of quadrature nodes for [`potential`].
pub const DEFAULT_QUAD_NODES: usize = 64;

/// Loss per outcome class. Entries are non-negative; `+∞` is allowed (log
/// loss at a zero probability).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialLossVector(Vec<f64>);

impl PartialLossVector {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if let Some(bad) = v.iter().find(|x| x.is_nan() || **x < 0.0) {
            return Err(Error::Domain(format!("partial loss must be non-negative, got {bad}")));
        }
        Ok(Self(v))
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
}

/// Binary proper losses, as the partial loss `ℓ₁(q)` for the positive
/// class given its predicted probability `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryProperLoss {
    /// Misclassification indicator; the positive class is predicted when
    /// `q ≥ 1/2`.
    ZeroOne,
    Square,
    Log,
    Matsushita,
}

fn check_probability(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {q} outside [0, 1]")))
    }
}

impl BinaryProperLoss {
    pub const ALL: [BinaryProperLoss; 4] = [
        BinaryProperLoss::ZeroOne,
        BinaryProperLoss::Square,
        BinaryProperLoss::Log,
        BinaryProperLoss::Matsushita,
    ];

    /// `ℓ₁(q)`. Log and Matsushita return `+∞` at `q = 0`.
    pub fn partial_loss(self, q: f64) -> Result<f64> {
        check_probability(q)?;
        Ok(match self {
            BinaryProperLoss::ZeroOne => {
                if q >= 0.5 {
                    0.0
                } else {
                    1.0
                }
            }
            BinaryProperLoss::Square => (1.0 - q) * (1.0 - q),
            BinaryProperLoss::Log => -q.ln(),
            BinaryProperLoss::Matsushita => 0.5 * ((1.0 - q) / q).sqrt(),
        })
    }

    /// `(ℓ₁(q), ℓ₋₁(q))`: losses when the outcome is positive and negative.
    pub fn partial_losses(self, q: f64) -> Result<PartialLossVector> {
        let pos = self.partial_loss(q)?;
        let neg = match self {
            BinaryProperLoss::ZeroOne => {
                if q >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.partial_loss(1.0 - q)?,
        };
        PartialLossVector::new(vec![pos, neg])
    }
}

/// Multiclass proper losses on the full simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MulticlassLoss {
    /// `ℓ_i(q) = −log q_i`.
    Log,
    /// Brier score `ℓ_i(q) = ‖e_i − q‖²`.
    Square,
}

impl MulticlassLoss {
    pub fn partial_losses(self, q: &SimplexPoint) -> PartialLossVector {
        let q = q.as_slice();
        let v = match self {
            MulticlassLoss::Log => q.iter().map(|&qi| -qi.ln()).collect(),
            MulticlassLoss::Square => {
                let sq: f64 = q.iter().map(|v| v * v).sum();
                q.iter().map(|&qi| (sq - 2.0 * qi + 1.0).max(0.0)).collect()
            }
        };
        PartialLossVector(v)
    }
}

/// `L(p, q) = Σ p_i ℓ_i(q)` with `0 · ∞ = 0`.
pub fn conditional_risk(p: &SimplexPoint, losses: &PartialLossVector) -> Result<f64> {
    if p.classes() != losses.classes() {
        return Err(Error::Dimension {
            expected: p.classes(),
            found: losses.classes(),
        });
    }
    Ok(p.as_slice()
        .iter()
        .zip(&losses.0)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(pi, li)| pi * li)
        .sum())
}

/// `D(p ‖ q) = Σ p_i log(p_i / q_i)` with `0 log 0 = 0`.
pub fn kl_divergence(p: &SimplexPoint, q: &SimplexPoint) -> Result<f64> {
    if p.classes() != q.classes() {
        return Err(Error::Dimension {
            expected: p.classes(),
            found: q.classes(),
        });
    }
    Ok(p.as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum())
}

/// Bregman divergence `f(x) − f(y) − ⟨∇f(y), x − y⟩`.
pub fn bregman_divergence<F, G>(f: F, grad_f: G, x: &[f64], y: &[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let g = grad_f(y);
    let inner: f64 = g.iter().zip(x.iter().zip(y)).map(|(gi, (xi, yi))| gi * (xi - yi)).sum();
    f(x) - f(y) - inner
}

/// Negative log-likelihood of class `y ∈ 1..=C` under `softmax⁺` logits.
pub fn nll(x: &LogitVector, y: usize) -> Result<f64> {
    let classes = x.dim() + 1;
    if y == 0 || y > classes {
        return Err(Error::LabelOutOfRange { label: y, classes });
    }
    Ok(-stable_log_probs(x)[y - 1])
}

/// Where the potential is anchored and how it is integrated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialSpec {
    pub base_point: Vec<f64>,
    /// Value assigned to the potential at the base point.
    pub base_value: f64,
    pub nodes: usize,
}

impl PotentialSpec {
    /// Anchored at the origin with value 0 and the default node count.
    pub fn at_origin(dim: usize) -> Self {
        Self {
            base_point: vec![0.0; dim],
            base_value: 0.0,
            nodes: DEFAULT_QUAD_NODES,
        }
    }
}

/// `∫₀¹ ⟨f(a + t(b − a)), b − a⟩ dt` with an `n`-node Gauss-Legendre rule.
pub fn line_integral<F>(field: F, a: &[f64], b: &[f64], nodes: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let path = Path::new(a, b)?;
    let rule = GaussLegendre::new(nodes)?;
    path.panel(&field, &rule, 0.0, 1.0)
}

/// [`line_integral`] with recursive bisection: a panel is accepted once it
/// agrees with the sum of its two halves to `tol · max(1, |I|)`, with `I`
/// the single-panel estimate over the whole path.
/// Learned links can be much steeper than `softmax⁺`, where a single
/// panel is not enough.
pub fn line_integral_adaptive<F>(field: F, a: &[f64], b: &[f64], nodes: usize, tol: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let path = Path::new(a, b)?;
    let rule = GaussLegendre::new(nodes)?;
    let whole = path.panel(&field, &rule, 0.0, 1.0)?;
    let abs_tol = tol * whole.abs().max(1.0);
    path.refine(&field, &rule, 0.0, 1.0, whole, abs_tol, MAX_BISECTIONS)
}

/// Bisection depth limit of [`line_integral_adaptive`].
pub const MAX_BISECTIONS: usize = 20;

/// Relative tolerance used by [`potential`].
pub const POTENTIAL_TOL: f64 = 1e-12;

struct Path<'a> {
    a: &'a [f64],
    dir: Vec<f64>,
}

impl<'a> Path<'a> {
    fn new(a: &'a [f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension {
                expected: a.len(),
                found: b.len(),
            });
        }
        Ok(Self {
            a,
            dir: b.iter().zip(a).map(|(bi, ai)| bi - ai).collect(),
        })
    }

    fn panel<F>(&self, field: &F, rule: &GaussLegendre, t0: f64, t1: f64) -> Result<f64>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut point = vec![0.0; self.a.len()];
        let mut bad = None;
        let value = rule.integrate(t0, t1, |t| {
            for ((p, ai), di) in point.iter_mut().zip(self.a).zip(&self.dir) {
                *p = ai + t * di;
            }
            let y = field(&point);
            let v: f64 = y.iter().zip(&self.dir).map(|(yi, di)| yi * di).sum();
            if !v.is_finite() && bad.is_none() {
                bad = Some(t);
            }
            v
        });
        match bad {
            Some(t) => Err(Error::NonFinite(format!("field along the path at t = {t}"))),
            None => Ok(value),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F>(&self, field: &F, rule: &GaussLegendre, t0: f64, t1: f64, whole: f64, abs_tol: f64, depth: usize) -> Result<f64>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mid = 0.5 * (t0 + t1);
        let left = self.panel(field, rule, t0, mid)?;
        let right = self.panel(field, rule, mid, t1)?;
        let halves = left + right;
        if depth == 0 || (halves - whole).abs() <= abs_tol {
            return Ok(halves);
        }
        Ok(self.refine(field, rule, t0, mid, left, abs_tol, depth - 1)?
            + self.refine(field, rule, mid, t1, right, abs_tol, depth - 1)?)
    }
}

/// Potential `F(x)` of the inverse link `link`, reconstructed from the
/// base point of `spec` along the straight segment, with adaptive
/// panels of `spec.nodes` nodes each.
pub fn potential<F>(link: F, x: &[f64], spec: &PotentialSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if spec.nodes < 8 {
        return Err(Error::Config(format!(
            "potential needs at least 8 quadrature nodes, got {}",
            spec.nodes
        )));
    }
    Ok(spec.base_value + line_integral_adaptive(link, &spec.base_point, x, spec.nodes, POTENTIAL_TOL)?)
}

/// Canonical loss components at logits `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalLoss {
    /// `(F(x) − x_1, …, F(x) − x_{C−1}, F(x))`.
    pub components: Vec<f64>,
    pub potential: f64,
    /// Every component is shifted by the potential's value here.
    pub base_point: Vec<f64>,
    pub base_value: f64,
}

pub fn canonical_loss<F>(link: F, x: &[f64], spec: &PotentialSpec) -> Result<CanonicalLoss>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let f = potential(link, x, spec)?;
    let mut components: Vec<f64> = x.iter().map(|xi| f - xi).collect();
    components.push(f);
    Ok(CanonicalLoss {
        components,
        potential: f,
        base_point: spec.base_point.clone(),
        base_value: spec.base_value,
    })
}

/// Outcome of [`properness_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropernessReport {
    pub classes: usize,
    pub trials: usize,
    pub seed: u64,
    /// Largest `L(p,p) − L(p,q)` seen (negative when every pair is strict).
    pub max_violation: f64,
    /// Pairs with `L(p,p) − L(p,q) > PROPERNESS_TOL`.
    pub violations: usize,
    pub worst_p: Vec<f64>,
    pub worst_q: Vec<f64>,
    pub passed: bool,
}

/// Uniform draw from the open simplex (Dirichlet with unit concentration).
pub fn sample_simplex<R: rand::Rng + ?Sized>(classes: usize, rng: &mut R) -> SimplexPoint {
    loop {
        let e: Vec<f64> = (0..classes).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / total).collect();
        if p.iter().all(|&v| v > 0.0) {
            if let Ok(p) = SimplexPoint::new(p) {
                return p;
            }
        }
    }
}

/// Samples `trials` pairs `(p, q)` of interior simplex points and checks
/// `L(p,p) ≤ L(p,q)`.
pub fn properness_check<L>(loss: L, classes: usize, trials: usize, seed: u64) -> Result<PropernessReport>
where
    L: Fn(&SimplexPoint) -> PartialLossVector,
{
    if classes < 2 {
        return Err(Error::TooFewClasses { min: 2, found: classes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropernessReport {
        classes,
        trials,
        seed,
        max_violation: f64::NEG_INFINITY,
        violations: 0,
        worst_p: Vec::new(),
        worst_q: Vec::new(),
        passed: true,
    };
    for _ in 0..trials {
        let p = sample_simplex(classes, &mut rng);
        let q = sample_simplex(classes, &mut rng);
        let gap = conditional_risk(&p, &loss(&p))? - conditional_risk(&p, &loss(&q))?;
        if gap > PROPERNESS_TOL {
            report.violations += 1;
        }
        if gap > report.max_violation {
            report.max_violation = gap;
            report.worst_p = p.as_slice().to_vec();
            report.worst_q = q.as_slice().to_vec();
        }
    }
    report.passed = report.violations == 0;
    Ok(report)
}
