//! Reconstructs the proper loss determined by an inverse link. For the
//! plain softmax⁺ link the reconstruction recovers the log loss up to the
//! constant log C.
//!
//! cargo run --example canonical_loss

use legendretron::losses::{canonical_loss, PotentialSpec};
use legendretron::simplex::{softmax_plus, stable_log_probs, LogitVector};

fn main() -> legendretron::Result<()> {
    let link = |z: &[f64]| softmax_plus(&LogitVector::new(z.to_vec()).unwrap()).into_vec();
    let z = vec![1.5, -0.3, 0.2];
    let classes = z.len() + 1;
    let loss = canonical_loss(link, &z, &PotentialSpec::at_origin(z.len()))?;
    let log_loss: Vec<f64> = stable_log_probs(&LogitVector::new(z.clone())?).iter().map(|l| -l).collect();
    println!("potential at z       {:.12}", loss.potential);
    println!("component  reconstructed + log C    −log p");
    for (i, (c, l)) in loss.components.iter().zip(&log_loss).enumerate() {
        println!("{:>9}  {:>24.12}  {:>9.6}", i + 1, c + (classes as f64).ln(), l);
    }
    Ok(())
}
