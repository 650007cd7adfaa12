//! Sampling-based checks that an inverse link is the gradient of a strictly
//! convex function: Jacobian symmetry and definiteness, monotonicity, and
//! cyclic monotonicity.
//!
//! None of this is a proof. Every report records its sample size and seed
//! so a run can be repeated exactly. Maximal monotonicity follows from
//! continuity plus monotonicity and is not checked separately.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::autodiff::Tape;
use crate::blocks::GradientChain;
use crate::error::{Error, Result};
use crate::model::LinkModel;

/// Default sampling radius in logit space.
pub const DEFAULT_RADIUS: f64 = 10.0;
/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Largest Jacobian asymmetry accepted by [`certify_link`].
pub const SYMMETRY_TOL: f64 = 1e-5;
/// Threshold on the smallest eigenvalue for semi-definiteness.
pub const SEMIDEFINITE_TOL: f64 = -1e-8;
/// Largest cycle sum accepted by [`check_cyclic`].
pub const CYCLIC_TOL: f64 = 1e-9;

/// Central-difference Jacobian; column `j` is
/// `(F(x + h e_j) − F(x − h e_j)) / 2h`.
pub fn numerical_jacobian<F>(field: F, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut probe = x.to_vec();
    let mut rows = None;
    for j in 0..n {
        // Divide by the step actually taken after rounding.
        let (hi, lo) = (x[j] + step, x[j] - step);
        probe[j] = hi;
        let fp = field(&probe);
        probe[j] = lo;
        let fm = field(&probe);
        probe[j] = x[j];
        let width = hi - lo;
        if fp.len() != fm.len() || rows.is_some_and(|r| r != fp.len()) {
            return Err(Error::Dimension {
                expected: rows.unwrap_or(fm.len()),
                found: fp.len(),
            });
        }
        rows = Some(fp.len());
        if fp.iter().chain(&fm).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field near {x:?} (coordinate {j})")));
        }
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / width).collect::<Vec<_>>());
    }
    let m = rows.unwrap_or(0);
    Ok(DMatrix::from_fn(m, n, |i, j| cols[j][i]))
}

/// Jacobian of the chain by reverse passes, one output row at a time.
pub fn chain_jacobian(chain: &GradientChain, x: &[f64]) -> Result<DMatrix<f64>> {
    let mut tape = Tape::new();
    let thetas: Vec<Vec<_>> = chain.blocks().iter().map(|b| tape.constants(b.params())).collect();
    let xs = tape.vars(x);
    let out = chain.apply_on_tape(&mut tape, &thetas, &xs)?;
    let mut jac = DMatrix::zeros(out.len(), x.len());
    for (i, &o) in out.iter().enumerate() {
        let adj = tape.backward(o)?;
        for (j, &v) in xs.iter().enumerate() {
            jac[(i, j)] = adj.value(v);
        }
    }
    Ok(jac)
}

/// Eigenvalues of `(A + Aᵀ) / 2` in ascending order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Symmetry and spectrum of a Jacobian at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianReport {
    pub point: Vec<f64>,
    /// `max |J_ij − J_ji|`.
    pub max_asymmetry: f64,
    /// Extreme eigenvalues of the symmetrized Jacobian.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl JacobianReport {
    pub fn from_jacobian(point: &[f64], jac: &DMatrix<f64>) -> Self {
        let n = jac.nrows().min(jac.ncols());
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((jac[(i, j)] - jac[(j, i)]).abs());
            }
        }
        let ev = symmetric_eigenvalues(jac);
        Self {
            point: point.to_vec(),
            max_asymmetry: asym,
            min_eigenvalue: ev.first().copied().unwrap_or(f64::NAN),
            max_eigenvalue: ev.last().copied().unwrap_or(f64::NAN),
        }
    }

    pub fn is_semidefinite(&self) -> bool {
        self.min_eigenvalue > SEMIDEFINITE_TOL
    }

    pub fn is_definite(&self) -> bool {
        self.min_eigenvalue > 0.0
    }
}

pub fn jacobian_report<F>(field: F, x: &[f64], step: f64) -> Result<JacobianReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    Ok(JacobianReport::from_jacobian(x, &numerical_jacobian(field, x, step)?))
}

/// Uniform draw from the ball of the given radius.
pub fn sample_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            return g.into_iter().map(|v| v * r / norm).collect();
        }
    }
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Outcome of [`check_monotone`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub pairs: usize,
    pub seed: u64,
    pub radius: f64,
    /// Smallest `⟨F(x) − F(z), x − z⟩` over the sampled pairs.
    pub min_inner_product: f64,
    /// Pairs with a negative inner product.
    pub violations: usize,
    pub worst_pair: (Vec<f64>, Vec<f64>),
    /// Every inner product was strictly positive.
    pub strictly_monotone: bool,
}

/// Samples `pairs` point pairs in the ball of radius `radius` and reports
/// the smallest `⟨F(x) − F(z), x − z⟩`.
pub fn check_monotone<F>(field: F, dim: usize, pairs: usize, radius: f64, seed: u64) -> MonotoneReport
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MonotoneReport {
        pairs,
        seed,
        radius,
        min_inner_product: f64::INFINITY,
        violations: 0,
        worst_pair: (Vec::new(), Vec::new()),
        strictly_monotone: false,
    };
    for _ in 0..pairs {
        let x = sample_ball(dim, radius, &mut rng);
        let z = sample_ball(dim, radius, &mut rng);
        let v = inner(&diff(&field(&x), &field(&z)), &diff(&x, &z));
        if !(v >= 0.0) {
            report.violations += 1;
        }
        if !(v >= report.min_inner_product) {
            report.min_inner_product = v;
            report.worst_pair = (x, z);
        }
    }
    report.strictly_monotone = pairs > 0 && report.min_inner_product > 0.0;
    report
}

/// `Σ_i ⟨F(x_i), x_{i+1} − x_i⟩` around a closed cycle.
pub fn cycle_sum<F>(field: F, cycle: &[Vec<f64>]) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = cycle.len();
    (0..n)
        .map(|i| inner(&field(&cycle[i]), &diff(&cycle[(i + 1) % n], &cycle[i])))
        .sum()
}

/// Outcome of [`check_cyclic`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyclicReport {
    pub cycle_len: usize,
    pub cycles: usize,
    pub seed: u64,
    pub radius: f64,
    pub max_sum: f64,
    /// Cycles whose sum exceeds [`CYCLIC_TOL`].
    pub violations: usize,
    pub worst_cycle: Vec<Vec<f64>>,
    pub passed: bool,
}

/// Samples `cycles` closed cycles of `cycle_len` points and checks that
/// every cycle sum is at most [`CYCLIC_TOL`].
pub fn check_cyclic<F>(field: F, dim: usize, cycle_len: usize, cycles: usize, radius: f64, seed: u64) -> Result<CyclicReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if cycle_len < 2 {
        return Err(Error::Config(format!("cycle length must be at least 2, got {cycle_len}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CyclicReport {
        cycle_len,
        cycles,
        seed,
        radius,
        max_sum: f64::NEG_INFINITY,
        violations: 0,
        worst_cycle: Vec::new(),
        passed: true,
    };
    for _ in 0..cycles {
        let cycle: Vec<Vec<f64>> = (0..cycle_len).map(|_| sample_ball(dim, radius, &mut rng)).collect();
        let s = cycle_sum(&field, &cycle);
        if !(s <= CYCLIC_TOL) {
            report.violations += 1;
        }
        if !(s <= report.max_sum) {
            report.max_sum = s;
            report.worst_cycle = cycle;
        }
    }
    report.passed = report.violations == 0;
    Ok(report)
}

/// A pair `(a, b)` with `⟨F(a) − F(b), a − b⟩ < 0`, found by stepping
/// along the eigenvector of the most negative eigenvalue of the
/// symmetrized Jacobian at `x`.
pub fn monotonicity_witness<F>(field: F, x: &[f64], step: f64) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let jac = numerical_jacobian(&field, x, step)?;
    let sym = (&jac + jac.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (k, &lambda) = match eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
    {
        Some(v) => v,
        None => return Ok(None),
    };
    if lambda >= 0.0 {
        return Ok(None);
    }
    let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let mut eps = 1.0;
    for _ in 0..40 {
        let a: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi + eps * vi).collect();
        let b: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi - eps * vi).collect();
        let ip = inner(&diff(&field(&a), &field(&b)), &diff(&a, &b));
        if ip < 0.0 {
            return Ok(Some((a, b, ip)));
        }
        eps *= 0.5;
    }
    Ok(None)
}

/// Outcome of [`certify_link`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    pub points: usize,
    pub seed: u64,
    pub radius: f64,
    pub step: f64,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    /// Asymmetry below [`SYMMETRY_TOL`] and a positive smallest eigenvalue
    /// at every point.
    pub passed: bool,
    pub reports: Vec<JacobianReport>,
}

/// Checks the Jacobian of `z ↦ softmax⁺(v⁻¹(z))` at `points` logit
/// vectors drawn uniformly from the ball of radius [`DEFAULT_RADIUS`].
pub fn certify_link(model: &LinkModel, points: usize, seed: u64) -> Result<Certification> {
    certify_field(
        |z: &[f64]| model.inverse_link(z).expect("point has the link dimension"),
        model.link_dim(),
        points,
        DEFAULT_RADIUS,
        seed,
    )
}

/// [`certify_link`] for an arbitrary field on `R^dim`. Points are evaluated
/// in parallel and reported in sample order.
pub fn certify_field<F>(field: F, dim: usize, points: usize, radius: f64, seed: u64) -> Result<Certification>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..points).map(|_| sample_ball(dim, radius, &mut rng)).collect();
    let reports = xs
        .par_iter()
        .map(|x| jacobian_report(&field, x, DEFAULT_STEP))
        .collect::<Result<Vec<_>>>()?;
    let max_asymmetry = reports.iter().map(|r| r.max_asymmetry).fold(0.0, f64::max);
    let min_eigenvalue = reports.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min);
    Ok(Certification {
        points,
        seed,
        radius,
        step: DEFAULT_STEP,
        max_asymmetry,
        min_eigenvalue,
        passed: points > 0 && max_asymmetry < SYMMETRY_TOL && min_eigenvalue > 0.0,
        reports,
    })
}
