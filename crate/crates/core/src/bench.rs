//! Repeated random-split experiments comparing learners under label noise.
//!
//! Each run `r` splits the data with seed `seed + r`, corrupts the training
//! labels only, trains every algorithm, and scores it on the clean test
//! split. Runs execute on a worker pool; results are reported in task order
//! no matter which finishes first.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{split, LabeledDataset, NoiseSpec, Standardizer};
use crate::error::{Error, Result};
use crate::train::{evaluate, train, Algo, TrainConfig};

/// CSV header of [`write_runs_csv`].
pub const RUNS_CSV_HEADER: &str = "run,seed,eta,algo,test_acc,test_nll,epochs,wall_s";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub runs: usize,
    pub train_frac: f64,
    pub etas: Vec<f64>,
    pub algos: Vec<Algo>,
    pub train: TrainConfig,
    /// Base seed; run `r` uses `seed + r` for its split, noise and model.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub standardize: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            runs: 20,
            train_frac: 0.8,
            etas: vec![0.0],
            algos: vec![Algo::Lt, Algo::Mlr],
            train: TrainConfig::default(),
            seed: 0,
            jobs: 0,
            standardize: false,
        }
    }
}

/// One (run, η, algorithm) result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub eta: f64,
    pub algo: Algo,
    pub test_acc: Option<f64>,
    pub test_nll: Option<f64>,
    pub epochs: usize,
    pub wall_s: f64,
    /// Set when this run failed; the sweep continues regardless.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean ± standard error of test accuracy (in percent) for one η and
/// algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub eta: f64,
    pub algo: Algo,
    pub runs: usize,
    pub failed: usize,
    pub mean_acc: Option<f64>,
    /// Absent with fewer than two successful runs.
    pub stderr_acc: Option<f64>,
    pub mean_nll: Option<f64>,
}

/// Welch t-test of LT against MLR accuracies at one η.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub eta: f64,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub comparisons: Vec<Comparison>,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("need at least one run".into()));
        }
        if self.etas.is_empty() || self.algos.is_empty() {
            return Err(Error::Config("need at least one noise level and one algorithm".into()));
        }
        for &eta in &self.etas {
            NoiseSpec::new(eta, 0)?;
        }
        self.train.validate()
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }
}

fn one_run(data: &LabeledDataset, cfg: &BenchConfig, run: usize, eta: f64, algo: Algo) -> RunRecord {
    let seed = cfg.run_seed(run);
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, f64)> {
        let (train_set, test_set) = split(data, cfg.train_frac, seed)?;
        let (train_set, test_set) = if cfg.standardize {
            let s = Standardizer::fit(&train_set);
            (s.apply(&train_set)?, s.apply(&test_set)?)
        } else {
            (train_set, test_set)
        };
        let noisy = train_set.with_symmetric_noise(&NoiseSpec::new(eta, seed)?)?;
        let tc = cfg.train.clone().with_seed(seed);
        let (model, _) = train(&noisy, &tc, algo)?;
        let m = evaluate(&model, &test_set)?;
        Ok((m.accuracy, m.mean_nll))
    })();
    let wall_s = start.elapsed().as_secs_f64();
    let (test_acc, test_nll, error) = match outcome {
        Ok((a, n)) => (Some(a), Some(n), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    RunRecord {
        run,
        seed,
        eta,
        algo,
        test_acc,
        test_nll,
        epochs: cfg.train.epochs,
        wall_s,
        error,
    }
}

/// Runs the full `runs × etas × algos` grid.
pub fn run_bench(data: &LabeledDataset, cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let tasks: Vec<(usize, f64, Algo)> = (0..cfg.runs)
        .flat_map(|r| {
            cfg.etas
                .iter()
                .flat_map(move |&eta| cfg.algos.iter().map(move |&a| (r, eta, a)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(r, eta, algo)| one_run(data, cfg, r, eta, algo))
            .collect()
    });
    let summary = summarize(&records, &cfg.etas, &cfg.algos);
    let comparisons = cfg
        .etas
        .iter()
        .map(|&eta| compare(&records, eta, Algo::Lt, Algo::Mlr))
        .collect();
    Ok(BenchReport {
        config: cfg.clone(),
        records,
        summary,
        comparisons,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (None, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

fn accuracies(records: &[RunRecord], eta: f64, algo: Algo) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.eta == eta && r.algo == algo)
        .filter_map(|r| r.test_acc.map(|a| 100.0 * a))
        .collect()
}

pub fn summarize(records: &[RunRecord], etas: &[f64], algos: &[Algo]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &eta in etas {
        for &algo in algos {
            let subset: Vec<&RunRecord> = records.iter().filter(|r| r.eta == eta && r.algo == algo).collect();
            let acc = accuracies(records, eta, algo);
            let nlls: Vec<f64> = subset.iter().filter_map(|r| r.test_nll).collect();
            let (mean_acc, stderr_acc) = mean_stderr(&acc);
            rows.push(SummaryRow {
                eta,
                algo,
                runs: subset.len(),
                failed: subset.iter().filter(|r| r.error.is_some()).count(),
                mean_acc,
                stderr_acc,
                mean_nll: mean_stderr(&nlls).0,
            });
        }
    }
    rows
}

/// Two-sided Welch t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<(f64, f64, f64)> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, sa) = mean_stderr(a);
    let (mb, sb) = mean_stderr(b);
    let (va, vb) = (sa? * sa?, sb? * sb?);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return None;
    }
    let t = (ma? - mb?) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Some((t, df, p))
}

fn compare(records: &[RunRecord], eta: f64, a: Algo, b: Algo) -> Comparison {
    match welch_t_test(&accuracies(records, eta, a), &accuracies(records, eta, b)) {
        Some((t, df, p)) => Comparison {
            eta,
            t: Some(t),
            df: Some(df),
            p_value: Some(p),
        },
        None => Comparison {
            eta,
            t: None,
            df: None,
            p_value: None,
        },
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes one CSV line per record under [`RUNS_CSV_HEADER`]; failed runs
/// have `NA` accuracy and NLL.
pub fn write_runs_csv<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    writeln!(out, "{RUNS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{:.3}",
            r.run,
            r.seed,
            r.eta,
            r.algo.name(),
            opt(r.test_acc),
            opt(r.test_nll),
            r.epochs,
            r.wall_s
        )?;
    }
    Ok(())
}

/// Human-readable summary table in the `mean ± stderr` style.
pub fn format_summary(report: &BenchReport) -> String {
    let mut s = String::from("eta    algo  runs  accuracy (%)\n");
    for row in &report.summary {
        let acc = match (row.mean_acc, row.stderr_acc) {
            (Some(m), Some(e)) => format!("{m:.2} ± {e:.2}"),
            (Some(m), None) => format!("{m:.2} ± NA"),
            _ => "NA".to_string(),
        };
        let failed = if row.failed > 0 {
            format!("  ({} failed)", row.failed)
        } else {
            String::new()
        };
        s.push_str(&format!("{:<6} {:<5} {:>4}  {acc}{failed}\n", row.eta, row.algo.name(), row.runs));
    }
    for c in &report.comparisons {
        if let Some(p) = c.p_value {
            s.push_str(&format!("eta {}: Welch t-test lt vs mlr p = {p:.4}\n", c.eta));
        }
    }
    s
}
