//! Acceptance suite. Each test prints one `criterion N [PASS|FAIL]` line
//! with the measured numbers, then asserts.
//!
//! cargo test --release --test acceptance -- --test-threads 1

mod common;

use std::time::Instant;

use common::{blobs, dataset, fixture, note, rel_err, report};
use legendretron::autodiff::{Arith, Tape};
use legendretron::bench::{run_bench, BenchConfig};
use legendretron::data::{
    inject_symmetric_noise, load_libsvm, parse_libsvm_str, sample_projected_categorical, to_libsvm_string,
    LabeledDataset, NoiseSpec, SparseVector,
};
use legendretron::losses::{
    canonical_loss, conditional_risk, kl_divergence, line_integral_adaptive, nll, potential, properness_check, sample_simplex,
    BinaryProperLoss, MulticlassLoss, PartialLossVector, PotentialSpec, DEFAULT_QUAD_NODES, POTENTIAL_TOL,
};
use legendretron::model::LinkModel;
use legendretron::simplex::{
    log_sum_exp_plus, log_sum_exp_plus_with, softmax_plus, softmax_plus_inverse, stable_log_probs, unproject,
    LogitVector, ProjectedSimplexPoint, SimplexPoint,
};
use legendretron::train::{fit, train_legendretron, Algo, TrainConfig};
use legendretron::verify::{
    certify_link, check_cyclic, check_monotone, sample_ball, Certification, CyclicReport, MonotoneReport,
    CYCLIC_TOL, DEFAULT_RADIUS,
};
use legendretron::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

// ---------------------------------------------------------------------------
// 1. gradients

fn random_model(classes: usize, p: usize, blocks: usize, seed: u64) -> LinkModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LinkModel::new(classes, p, blocks, 2, 4, &mut rng).unwrap();
    for w in model.weights_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *w = 0.7 * e;
    }
    for b in model.bias_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *b = 0.3 * e;
    }
    // Move the softplus-wrapped scalars away from their zero init so that
    // every parameter has a generic gradient.
    for block in model.chain_mut().blocks_mut() {
        let w1 = rng.random_range(-1.0..1.0);
        block.set_raw_w1(w1);
    }
    model
}

fn loss_at(model: &LinkModel, x: &SparseVector, y: usize) -> f64 {
    -model.log_probs(x).unwrap()[y - 1]
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let h = 1e-5;
    let mut worst_param = 0.0f64;
    let mut worst_param_full = 0.0f64;
    let mut worst_block = 0.0f64;
    let mut coords = 0usize;
    let mut seed = 0u64;
    for blocks in [0, 1, 2] {
        for classes in [2, 3, 5] {
            for p in [3, 10] {
                seed += 1;
                let mut model = random_model(classes, p, blocks, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
                let x = SparseVector::from_dense(&x);
                let y = rng.random_range(1..=classes);

                let (_, grad) = model.loss_grad(&x, y).unwrap();
                let (_, full) = model.loss_param_gradient(&x, y).unwrap();
                let theta = model.params_flat();
                assert_eq!(grad.len(), theta.len());
                for i in 0..theta.len() {
                    let mut t = theta.clone();
                    t[i] = theta[i] + h;
                    model.set_params_flat(&t).unwrap();
                    let up = loss_at(&model, &x, y);
                    t[i] = theta[i] - h;
                    model.set_params_flat(&t).unwrap();
                    let down = loss_at(&model, &x, y);
                    let fd = (up - down) / (2.0 * h);
                    worst_param = worst_param.max(rel_err(grad[i], fd, 1e-6));
                    worst_param_full = worst_param_full.max(rel_err(full.get(i).value(), fd, 1e-6));
                    coords += 1;
                }
                model.set_params_flat(&theta).unwrap();

                for block in model.chain().blocks() {
                    let z: Vec<f64> = (0..classes - 1).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let g = block.grad(&z).unwrap();
                    for j in 0..z.len() {
                        let mut zp = z.clone();
                        zp[j] += h;
                        let mut zm = z.clone();
                        zm[j] -= h;
                        let fd = (block.eval(&zp).unwrap() - block.eval(&zm).unwrap()) / (2.0 * h);
                        worst_block = worst_block.max(rel_err(g[j], fd, 1e-6));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = worst_param < 1e-4 && worst_param_full < 1e-4 && worst_block < 1e-5 && secs < 60.0;
    report(
        1,
        "gradient correctness",
        passed,
        &format!(
            "{coords} parameter coordinates, worst relative error {worst_param:.2e} (tape) / {worst_param_full:.2e} \
             (leaf route), block gradients {worst_block:.2e}, {secs:.1}s"
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 2. link certification

struct LinkAudit {
    label: String,
    cert: Certification,
    mono: MonotoneReport,
    cyclic: Vec<CyclicReport>,
}

impl LinkAudit {
    fn run(label: String, model: &LinkModel, seed: u64) -> Self {
        let cert = certify_link(model, 100, seed).unwrap();
        let link = |z: &[f64]| model.inverse_link(z).unwrap();
        let dim = model.link_dim();
        let mono = check_monotone(link, dim, 1000, DEFAULT_RADIUS, seed + 1);
        let cyclic = (2..=4)
            .map(|n| check_cyclic(link, dim, n, 200, DEFAULT_RADIUS, seed + n as u64).unwrap())
            .collect();
        Self {
            label,
            cert,
            mono,
            cyclic,
        }
    }

    fn passed(&self) -> bool {
        self.cert.max_asymmetry < 1e-5
            && self.cert.min_eigenvalue > 0.0
            && self.mono.min_inner_product > 0.0
            && self.cyclic.iter().all(|c| c.max_sum <= CYCLIC_TOL)
    }

    fn line(&self) -> String {
        let cyc = self.cyclic.iter().map(|c| c.max_sum).fold(f64::NEG_INFINITY, f64::max);
        format!(
            "{}: asym {:.2e} min eig {:.2e} monotone {:.2e} cycle {:.2e} {}",
            self.label,
            self.cert.max_asymmetry,
            self.cert.min_eigenvalue,
            self.mono.min_inner_product,
            cyc,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

fn trained_models() -> Vec<(String, LinkModel)> {
    let cfg = TrainConfig::default();
    let mut out = Vec::new();
    for name in ["iris.scale", "wine.scale"] {
        let (m, _) = train_legendretron(&dataset(name), &cfg).unwrap();
        out.push((format!("trained {name} C={}", m.n_classes()), m));
    }
    for (classes, seed) in [(2, 21), (2, 22), (5, 23)] {
        let data = blobs(classes, 60, 6, 1.5, seed);
        let (m, _) = train_legendretron(&data, &cfg).unwrap();
        out.push((format!("trained blobs C={classes} seed {seed}"), m));
    }
    out
}

#[test]
fn criterion_02_link_certification() {
    let start = Instant::now();
    let mut audits = Vec::new();
    for i in 0..20u64 {
        let classes = [2, 3, 5][(i % 3) as usize];
        let blocks = 1 + (i % 2) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(500 + i);
        let model = LinkModel::new(classes, 4, blocks, 2, 4, &mut rng).unwrap();
        audits.push(LinkAudit::run(format!("random C={classes} B={blocks} #{i}"), &model, 40 + 10 * i));
    }
    for (j, (label, model)) in trained_models().into_iter().enumerate() {
        audits.push(LinkAudit::run(label, &model, 900 + 10 * j as u64));
    }
    let failed: Vec<&LinkAudit> = audits.iter().filter(|a| !a.passed()).collect();
    for a in &audits {
        note(&a.line());
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = failed.is_empty() && secs < 120.0;
    let worst_asym = audits.iter().map(|a| a.cert.max_asymmetry).fold(0.0, f64::max);
    let worst_eig = audits.iter().map(|a| a.cert.min_eigenvalue).fold(f64::INFINITY, f64::min);
    let binary_ok = audits
        .iter()
        .filter(|a| a.label.contains("C=2"))
        .all(LinkAudit::passed);
    report(
        2,
        "link certification",
        passed,
        &format!(
            "{}/{} models certified; worst asymmetry {worst_asym:.2e}, worst min eigenvalue {worst_eig:.2e}; \
             all binary links certified: {binary_ok}; {secs:.1}s",
            audits.len() - failed.len(),
            audits.len()
        ),
    );
    assert!(passed, "{} of {} links failed certification", failed.len(), audits.len());
}

// ---------------------------------------------------------------------------
// 3. softmax⁺ algebra

fn naive_log_probs(x: &[f64]) -> Vec<f64> {
    let denom = (1.0 + x.iter().map(|v| v.exp()).sum::<f64>()).ln();
    let mut out: Vec<f64> = x.iter().map(|v| v - denom).collect();
    out.push(-denom);
    out
}

#[test]
fn criterion_03_softmax_plus_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut roundtrip = 0.0f64;
    let mut hessian = 0.0f64;
    let mut naive = 0.0f64;
    for trial in 0..500 {
        let d = 1 + trial % 6;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-20.0..=20.0)).collect();
        let lv = LogitVector::new(x.clone()).unwrap();
        let back = softmax_plus_inverse(&softmax_plus(&lv)).unwrap();
        for (a, b) in back.as_slice().iter().zip(&x) {
            roundtrip = roundtrip.max((a - b).abs());
        }

        for (a, b) in stable_log_probs(&lv).iter().zip(naive_log_probs(&x)) {
            naive = naive.max((a - b).abs());
        }

        // Hessian of log-sum-exp⁺ by differentiating its recorded gradient,
        // against diag(μ) − μμᵀ.
        let mu = softmax_plus(&lv).into_vec();
        let mut tape = Tape::new();
        let xs = tape.vars(&x);
        let lse = log_sum_exp_plus_with(&mut tape, &xs);
        let g = tape.grad(lse, &xs).unwrap();
        for i in 0..d {
            let row = tape.grad(g[i], &xs).unwrap();
            for j in 0..d {
                let expected = if i == j { mu[i] } else { 0.0 } - mu[i] * mu[j];
                hessian = hessian.max((tape.value(row[j]) - expected).abs());
            }
        }
    }
    let extreme = [
        vec![1e4, 1e4 - 3.0, -1e4],
        vec![1e4],
        vec![-1e4, -1e4],
        vec![1e4, 0.0, 1e4],
    ];
    let finite = extreme.iter().all(|x| {
        let lv = LogitVector::new(x.clone()).unwrap();
        stable_log_probs(&lv).iter().all(|v| v.is_finite())
            && log_sum_exp_plus(&lv).is_finite()
            && softmax_plus(&lv).as_slice().iter().all(|v| v.is_finite())
    });
    let passed = roundtrip < 1e-9 && hessian < 1e-6 && naive < 1e-12 && finite;
    report(
        3,
        "softmax+ algebra",
        passed,
        &format!(
            "round trip {roundtrip:.2e}, Hessian vs diag(mu) - mu mu^T {hessian:.2e}, stable vs naive {naive:.2e}, \
             finite at 1e4: {finite}"
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 4. MLR equivalence

#[test]
fn criterion_04_mlr_equivalence() {
    let data = dataset("iris.scale");
    let cfg = TrainConfig {
        blocks: 0,
        seed: 4,
        ..TrainConfig::default()
    };
    let (lt, lt_trace) = fit(&data, &cfg, Algo::Lt, |_, _| {}).unwrap();
    let (mlr, mlr_trace) = fit(&data, &cfg, Algo::Mlr, |_, _| {}).unwrap();
    let trace_gap = lt_trace
        .iter()
        .zip(&mlr_trace)
        .map(|(a, b)| (a.train_nll - b.train_nll).abs())
        .fold(0.0, f64::max);
    let same_len = lt_trace.len() == mlr_trace.len() && lt_trace.len() == cfg.epochs;
    let mismatched = data
        .rows()
        .iter()
        .filter(|x| lt.predict_class(x).unwrap() != mlr.predict_class(x).unwrap())
        .count();
    let passed = same_len && trace_gap < 1e-12 && mismatched == 0;
    report(
        4,
        "MLR equivalence",
        passed,
        &format!(
            "{} epochs, max per-epoch NLL gap {trace_gap:.2e}, {mismatched} of {} predictions differ",
            lt_trace.len(),
            data.len()
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 5. canonical-loss reconstruction

fn softmax_link(z: &[f64]) -> Vec<f64> {
    softmax_plus(&LogitVector::new(z.to_vec()).unwrap()).into_vec()
}

struct LearnedPotential {
    label: String,
    path_gap: f64,
    midpoint_violation: f64,
}

fn audit_potential(label: &str, model: &LinkModel, seed: u64) -> LearnedPotential {
    let d = model.link_dim();
    let link = |z: &[f64]| model.inverse_link(z).unwrap();
    let spec = PotentialSpec::at_origin(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path_gap = 0.0f64;
    let mut midpoint_violation = f64::NEG_INFINITY;
    for _ in 0..100 {
        let x = sample_ball(d, DEFAULT_RADIUS, &mut rng);
        let via = sample_ball(d, DEFAULT_RADIUS, &mut rng);
        let direct = potential(link, &x, &spec).unwrap();
        let detour = line_integral_adaptive(link, &spec.base_point, &via, DEFAULT_QUAD_NODES, POTENTIAL_TOL).unwrap()
            + line_integral_adaptive(link, &via, &x, DEFAULT_QUAD_NODES, POTENTIAL_TOL).unwrap();
        path_gap = path_gap.max(rel_err(direct, detour, 1.0));

        let a = sample_ball(d, DEFAULT_RADIUS, &mut rng);
        let b = sample_ball(d, DEFAULT_RADIUS, &mut rng);
        let m: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
        let fa = potential(link, &a, &spec).unwrap();
        let fb = potential(link, &b, &spec).unwrap();
        let fm = potential(link, &m, &spec).unwrap();
        midpoint_violation = midpoint_violation.max(fm - 0.5 * (fa + fb));
    }
    LearnedPotential {
        label: label.to_string(),
        path_gap,
        midpoint_violation,
    }
}

#[test]
fn criterion_05_canonical_loss_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut potential_gap = 0.0f64;
    let mut nll_gap = 0.0f64;
    for i in 0..100 {
        let d = 1 + i % 4;
        let x = sample_ball(d, DEFAULT_RADIUS, &mut rng);
        let base = sample_ball(d, 1.0, &mut rng);
        let lv = |v: &[f64]| LogitVector::new(v.to_vec()).unwrap();
        let spec = PotentialSpec {
            base_point: base.clone(),
            base_value: 0.0,
            nodes: DEFAULT_QUAD_NODES,
        };
        let f = potential(softmax_link, &x, &spec).unwrap();
        let expected = log_sum_exp_plus(&lv(&x)) - log_sum_exp_plus(&lv(&base));
        potential_gap = potential_gap.max((f - expected).abs());

        // Anchored so that the potential equals log-sum-exp⁺, the
        // components are exactly the per-class negative log-likelihoods.
        let anchored = PotentialSpec {
            base_point: vec![0.0; d],
            base_value: ((d + 1) as f64).ln(),
            nodes: DEFAULT_QUAD_NODES,
        };
        let loss = canonical_loss(softmax_link, &x, &anchored).unwrap();
        for (y, c) in loss.components.iter().enumerate() {
            nll_gap = nll_gap.max((c - nll(&lv(&x), y + 1).unwrap()).abs());
        }
    }

    let cfg = TrainConfig::default();
    let mut learned = Vec::new();
    let (iris, _) = train_legendretron(&dataset("iris.scale"), &cfg).unwrap();
    learned.push(audit_potential("iris C=3", &iris, 51));
    let (bin, _) = train_legendretron(&blobs(2, 60, 4, 1.5, 52), &cfg).unwrap();
    learned.push(audit_potential("blobs C=2", &bin, 53));
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let fresh = LinkModel::new(4, 3, 2, 2, 4, &mut rng).unwrap();
    learned.push(audit_potential("random init C=4", &fresh, 55));
    for l in &learned {
        note(&format!(
            "{}: path independence {:.2e}, worst midpoint excess {:.2e}",
            l.label, l.path_gap, l.midpoint_violation
        ));
    }
    let learned_ok = learned.iter().all(|l| l.path_gap < 1e-6 && l.midpoint_violation <= 1e-8);
    let passed = potential_gap < 1e-8 && nll_gap < 1e-6 && learned_ok;
    let worst_path = learned.iter().map(|l| l.path_gap).fold(0.0, f64::max);
    let worst_mid = learned.iter().map(|l| l.midpoint_violation).fold(f64::NEG_INFINITY, f64::max);
    report(
        5,
        "canonical-loss reconstruction",
        passed,
        &format!(
            "potential vs log-sum-exp+ {potential_gap:.2e}, components vs NLL {nll_gap:.2e}, learned links: \
             path independence {worst_path:.2e}, midpoint excess {worst_mid:.2e}"
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 6. properness

fn log_losses(q: &SimplexPoint) -> PartialLossVector {
    MulticlassLoss::Log.partial_losses(q)
}

#[test]
fn criterion_06_properness() {
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for loss in [MulticlassLoss::Log, MulticlassLoss::Square] {
        for classes in [2, 3, 5, 10] {
            let r = properness_check(|q| loss.partial_losses(q), classes, 10_000, classes as u64).unwrap();
            violations += r.violations;
            worst = worst.max(r.max_violation);
        }
    }
    for loss in [BinaryProperLoss::Log, BinaryProperLoss::Square] {
        let r = properness_check(|q| loss.partial_losses(q.as_slice()[0]).unwrap(), 2, 10_000, 60).unwrap();
        violations += r.violations;
        worst = worst.max(r.max_violation);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut kl_gap = 0.0f64;
    for i in 0..1000 {
        let classes = 2 + i % 6;
        let p = sample_simplex(classes, &mut rng);
        let q = sample_simplex(classes, &mut rng);
        let gap = conditional_risk(&p, &log_losses(&q)).unwrap() - conditional_risk(&p, &log_losses(&p)).unwrap();
        kl_gap = kl_gap.max((gap - kl_divergence(&p, &q).unwrap()).abs());
    }

    let absolute =
        |q: &SimplexPoint| PartialLossVector::new(q.as_slice().iter().map(|v| 1.0 - v).collect()).unwrap();
    let planted = properness_check(absolute, 3, 10_000, 62).unwrap();
    let passed = violations == 0 && kl_gap < 1e-9 && !planted.passed && planted.violations > 0;
    report(
        6,
        "properness",
        passed,
        &format!(
            "{violations} violations (worst L(p,p)-L(p,q) {worst:.2e}), log-loss regret vs KL {kl_gap:.2e}, \
             improper loss flagged with {} violations",
            planted.violations
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 7. benchmark reproduction

fn bench_mean(data: &LabeledDataset, eta: f64) -> (f64, Option<f64>, usize) {
    let cfg = BenchConfig {
        runs: 20,
        etas: vec![eta],
        algos: vec![Algo::Lt],
        ..BenchConfig::default()
    };
    let report = run_bench(data, &cfg).unwrap();
    let row = &report.summary[0];
    (row.mean_acc.unwrap_or(f64::NAN), row.stderr_acc, row.failed)
}

#[test]
fn criterion_07_benchmark_reproduction() {
    let start = Instant::now();
    let segment = dataset("segment.scale");
    let cases: [(&str, LabeledDataset, f64, f64, f64); 4] = [
        ("iris", dataset("iris.scale"), 0.0, 86.67, 3.0 * 3.89),
        ("wine", dataset("wine.scale"), 0.0, 96.94, 3.0 * 1.14),
        ("segment", segment.clone(), 0.0, 95.95, 3.0),
        ("segment eta=0.5", segment, 0.5, 86.56, 5.0),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, data, eta, target, band) in &cases {
        let (mean, se, failed) = bench_mean(data, *eta);
        let mut ok = failed == 0 && (mean - target).abs() <= *band;
        if *eta > 0.0 {
            ok &= mean > 100.0 / 7.0;
        }
        passed &= ok;
        let se = se.map_or("NA".to_string(), |s| format!("{s:.2}"));
        parts.push(format!("{name} {mean:.2} ± {se} (target {target} ± {band:.2}) {}", if ok { "ok" } else { "out" }));
    }
    report(
        7,
        "benchmark reproduction",
        passed,
        &format!("{}; {:.0}s", parts.join("; "), start.elapsed().as_secs_f64()),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 8. noise statistics

#[test]
fn criterion_08_noise_statistics() {
    let (n, classes, eta) = (100_000usize, 10usize, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(1..=classes)).collect();
    let noisy = inject_symmetric_noise(&labels, classes, &NoiseSpec::new(eta, 80).unwrap()).unwrap();
    let flipped = labels.iter().zip(&noisy).filter(|(a, b)| a != b).count();
    let rate = flipped as f64 / n as f64;
    let sigma = (eta * (1.0 - eta) / n as f64).sqrt();
    let z = (rate - eta) / sigma;

    // Offset of the replacement from the original label, cyclically; uniform
    // over the C − 1 other classes.
    let mut counts = vec![0usize; classes - 1];
    for (&a, &b) in labels.iter().zip(&noisy) {
        if a != b {
            counts[(b + classes - a) % classes - 1] += 1;
        }
    }
    let expected = flipped as f64 / (classes - 1) as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p_value = 1.0 - ChiSquared::new((classes - 2) as f64).unwrap().cdf(chi2);

    // Same statistic against the replacement class directly, per original
    // class.
    let mut per_class_min_p = 1.0f64;
    for y in 1..=classes {
        let mut c = vec![0usize; classes];
        for (&a, &b) in labels.iter().zip(&noisy) {
            if a == y && b != y {
                c[b - 1] += 1;
            }
        }
        let total: usize = c.iter().sum();
        let e = total as f64 / (classes - 1) as f64;
        let stat: f64 = c
            .iter()
            .enumerate()
            .filter(|&(k, _)| k + 1 != y)
            .map(|(_, &v)| (v as f64 - e).powi(2) / e)
            .sum();
        let p = 1.0 - ChiSquared::new((classes - 2) as f64).unwrap().cdf(stat);
        per_class_min_p = per_class_min_p.min(p);
    }
    // Bonferroni over the ten per-class tests.
    let passed = z.abs() <= 3.0 && p_value > 0.01 && per_class_min_p > 0.01 / classes as f64;
    report(
        8,
        "noise statistics",
        passed,
        &format!(
            "corruption rate {rate:.4} (z = {z:.2}), replacement chi-square {chi2:.2} p = {p_value:.3}, \
             smallest per-class p {per_class_min_p:.3}"
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 9. parser conformance

enum Expect {
    Ok { rows: usize, features: usize, classes: usize },
    ParseErr { line: usize, column: usize },
    Empty,
}

#[test]
fn criterion_09_parser_conformance() {
    use Expect::*;
    let cases = [
        ("01_basic.svm", Ok { rows: 4, features: 4, classes: 3 }),
        ("02_blank_lines.svm", Ok { rows: 2, features: 2, classes: 2 }),
        ("03_crlf_signed.svm", Ok { rows: 2, features: 2, classes: 2 }),
        ("04_high_index.svm", Ok { rows: 2, features: 70000, classes: 2 }),
        ("05_label_only_rows.svm", Ok { rows: 3, features: 2, classes: 2 }),
        ("06_bad_label.svm", ParseErr { line: 3, column: 1 }),
        ("07_zero_index.svm", ParseErr { line: 2, column: 3 }),
        ("08_decreasing_index.svm", ParseErr { line: 2, column: 11 }),
        ("09_duplicate_index.svm", ParseErr { line: 1, column: 7 }),
        ("10_missing_colon.svm", ParseErr { line: 2, column: 7 }),
        ("11_bad_value.svm", ParseErr { line: 3, column: 5 }),
        ("12_empty.svm", Empty),
    ];
    let mut failures = Vec::new();
    let mut roundtrips = 0;
    for (name, expect) in &cases {
        let got = load_libsvm(fixture(name));
        let ok = match (expect, &got) {
            (Ok { rows, features, classes }, Result::Ok(d)) => {
                let shape = d.len() == *rows && d.n_features() == *features && d.n_classes() == *classes;
                let text = to_libsvm_string(d);
                let again = parse_libsvm_str(&text).unwrap();
                let same = again == *d && to_libsvm_string(&again) == text;
                roundtrips += same as usize;
                shape && same
            }
            (ParseErr { line, column }, Err(Error::Parse { line: l, column: c, .. })) => l == line && c == column,
            (Empty, Err(Error::EmptyDataset)) => true,
            _ => false,
        };
        if !ok {
            failures.push(format!("{name}: {:?}", got.map(|d| d.summary())));
        }
    }
    let passed = failures.is_empty();
    report(
        9,
        "parser conformance",
        passed,
        &format!(
            "{}/{} fixtures as expected, {roundtrips} round trips identical{}",
            cases.len() - failures.len(),
            cases.len(),
            if passed { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------------------
// 10. projected categorical

#[test]
fn criterion_10_projected_categorical() {
    let n = 100_000;
    let p = 0.3;
    let draws = sample_projected_categorical(&ProjectedSimplexPoint::new(vec![p]).unwrap(), n, 10);
    let mean = draws.iter().map(|s| s[0] as f64).sum::<f64>() / n as f64;
    let bern_z = (mean - p) / (p * (1.0 - p) / n as f64).sqrt();

    let mu = [0.2, 0.3, 0.1];
    let pt = ProjectedSimplexPoint::new(mu.to_vec()).unwrap();
    let draws = sample_projected_categorical(&pt, n, 11);
    let one_hot = draws.iter().all(|s| {
        let full = unproject(&ProjectedSimplexPoint::new(s.iter().map(|&v| v as f64).collect()).unwrap()).unwrap();
        full.as_slice().iter().filter(|&&v| v == 1.0).count() == 1
            && full.as_slice().iter().all(|&v| v == 0.0 || v == 1.0)
    });
    let d = mu.len();
    let xs: Vec<Vec<f64>> = draws.iter().map(|s| s.iter().map(|&v| v as f64).collect()).collect();
    let means: Vec<f64> = (0..d).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / n as f64).collect();
    let mut worst_z = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let prods: Vec<f64> = xs.iter().map(|x| (x[i] - means[i]) * (x[j] - means[j])).collect();
            let cov = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let expected = if i == j { mu[i] } else { 0.0 } - mu[i] * mu[j];
            worst_z = worst_z.max(((cov - expected) / se).abs());
        }
    }
    let passed = bern_z.abs() <= 3.0 && worst_z <= 5.0 && one_hot;
    report(
        10,
        "projected categorical",
        passed,
        &format!(
            "Bernoulli mean {mean:.4} (z = {bern_z:.2}), covariance worst |z| {worst_z:.2}, all samples one-hot: {one_hot}"
        ),
    );
    assert!(passed);
}
