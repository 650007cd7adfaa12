//! Certifies that learned inverse links are gradients of strictly convex
//! functions: Jacobian symmetry, positive eigenvalues, monotonicity and
//! cyclic monotonicity at sampled logits.
//!
//! cargo run --release --example certify_link -- [data/iris.scale] [epochs]

use legendretron::data::load_libsvm;
use legendretron::train::{train_legendretron, TrainConfig};
use legendretron::verify::{certify_link, check_cyclic, check_monotone, DEFAULT_RADIUS};

fn main() -> legendretron::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/iris.scale").into());
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(240);
    let data = load_libsvm(&path)?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let (model, fit) = train_legendretron(&data, &cfg)?;
    println!("trained on {path}: train accuracy {:.4}", fit.accuracy);

    let cert = certify_link(&model, 100, 7)?;
    println!(
        "certification over {} points: max asymmetry {:.3e}, min eigenvalue {:.3e}, passed {}",
        cert.points, cert.max_asymmetry, cert.min_eigenvalue, cert.passed
    );
    let link = |z: &[f64]| model.inverse_link(z).expect("link dimension");
    let mono = check_monotone(link, model.link_dim(), 1000, DEFAULT_RADIUS, 8);
    println!("monotone: min inner product {:.3e} over {} pairs", mono.min_inner_product, mono.pairs);
    for n in 2..=4 {
        let cyc = check_cyclic(link, model.link_dim(), n, 200, DEFAULT_RADIUS, 9)?;
        println!("{n}-cycles: max sum {:.3e}, passed {}", cyc.max_sum, cyc.passed);
    }
    Ok(())
}
