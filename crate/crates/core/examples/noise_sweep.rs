//! Test accuracy of LT and MLR as symmetric label noise increases.
//!
//! cargo run --release --example noise_sweep -- [data/wine.scale] [runs]

use legendretron::bench::{format_summary, run_bench, BenchConfig};
use legendretron::data::load_libsvm;

fn main() -> legendretron::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/wine.scale").into());
    let runs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let data = load_libsvm(&path)?;
    let cfg = BenchConfig {
        runs,
        etas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        ..BenchConfig::default()
    };
    let report = run_bench(&data, &cfg)?;
    print!("{}", format_summary(&report));
    Ok(())
}
