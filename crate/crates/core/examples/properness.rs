//! Checks L(p, p) ≤ L(p, q) for the built-in proper losses, binary and
//! multiclass, and shows a loss that fails.
//!
//! cargo run --example properness

use legendretron::losses::{properness_check, BinaryProperLoss, MulticlassLoss, PartialLossVector};
use legendretron::simplex::SimplexPoint;

fn main() -> legendretron::Result<()> {
    for loss in BinaryProperLoss::ALL {
        let f = |q: &SimplexPoint| loss.partial_losses(q.as_slice()[0]).unwrap();
        let r = properness_check(f, 2, 10_000, 1)?;
        println!("{loss:?}: max violation {:.3e}, passed {}", r.max_violation, r.passed);
    }
    for loss in [MulticlassLoss::Log, MulticlassLoss::Square] {
        for classes in [3, 5] {
            let r = properness_check(|q| loss.partial_losses(q), classes, 10_000, 2)?;
            println!("{loss:?} C={classes}: max violation {:.3e}, passed {}", r.max_violation, r.passed);
        }
    }
    // Absolute loss is not proper: reporting the mode beats honesty.
    let absolute = |q: &SimplexPoint| PartialLossVector::new(q.as_slice().iter().map(|v| 1.0 - v).collect()).unwrap();
    let r = properness_check(absolute, 3, 10_000, 3)?;
    println!("absolute C=3: max violation {:.3e}, passed {}", r.max_violation, r.passed);
    Ok(())
}
