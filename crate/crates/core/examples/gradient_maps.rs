//! A convex block, its gradient map, and the Hessian of the block obtained
//! by differentiating the recorded gradient a second time.
//!
//! cargo run --example gradient_maps

use legendretron::autodiff::{Arith, Tape};
use legendretron::blocks::{BlockShape, ConvexBlock, GradientChain};
use legendretron::verify::{chain_jacobian, symmetric_eigenvalues, JacobianReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> legendretron::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shape = BlockShape::new(2, 4, 3)?;
    let block = ConvexBlock::init(shape, &mut rng);
    let x = [0.7, -1.2];
    println!("g(x)  = {:.6}", block.eval(&x)?);
    println!("∇g(x) = {:?}", block.grad(&x)?);
    println!("strong convexity modulus {:.4}", block.strong_convexity());

    // Second derivatives: record ∇g on the tape, then differentiate each
    // component again.
    let mut tape = Tape::new();
    let theta = tape.constants(block.params());
    let xs = tape.vars(&x);
    let g = block.grad_on_tape(&mut tape, &theta, &xs)?;
    let mut rows = Vec::new();
    for &gi in &g {
        let row = tape.grad(gi, &xs)?;
        rows.push(tape.values(&row));
    }
    println!("Hessian rows {rows:?}");

    // Nested differentiation of a plain expression: d/dx and d²/dx² of x³ at 3 are 27 and 18.
    let mut t = Tape::new();
    let v = t.var(3.0);
    let sq = t.mul(v, v);
    let cube = t.mul(sq, v);
    let d1 = t.grad(cube, &[v])?[0];
    let d2 = t.grad(d1, &[v])?[0];
    println!("x³ at 3: first {} second {}", t.value(d1), t.value(d2));

    let chain = GradientChain::init(2, shape, &mut rng);
    let jac = chain_jacobian(&chain, &x)?;
    let report = JacobianReport::from_jacobian(&x, &jac);
    println!(
        "two-block chain: asymmetry {:.3e}, eigenvalues of the symmetric part {:?}",
        report.max_asymmetry,
        symmetric_eigenvalues(&((&jac + jac.transpose()) * 0.5))
    );
    Ok(())
}
