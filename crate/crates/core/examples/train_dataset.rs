//! Trains LegendreTron and MLR on one 80/20 split of a LIBSVM file.
//!
//! cargo run --release --example train_dataset -- data/iris.scale [seed]

use std::time::Instant;

use legendretron::data::{load_libsvm, split};
use legendretron::train::{evaluate, train, Algo, TrainConfig};

fn main() -> legendretron::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.scale").into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let data = load_libsvm(&path)?;
    let (tr, te) = split(&data, 0.8, seed)?;
    println!("{path}: {} rows, {} features, {} classes", data.len(), data.n_features(), data.n_classes());
    let cfg = TrainConfig::default().with_seed(seed);
    for algo in [Algo::Lt, Algo::Mlr] {
        let start = Instant::now();
        let (model, fit) = train(&tr, &cfg, algo)?;
        let test = evaluate(&model, &te)?;
        println!(
            "{:>3}: train acc {:.4}  test acc {:.4}  test nll {:.4}  ({:.1}s)",
            algo.name(),
            fit.accuracy,
            test.accuracy,
            test.mean_nll,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
