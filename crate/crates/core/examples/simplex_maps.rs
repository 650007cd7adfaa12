//! Round trips between logits, the projected simplex and the full simplex.
//!
//! cargo run --example simplex_maps

use legendretron::simplex::{
    log_sum_exp_plus, project, softmax_plus, softmax_plus_inverse, unproject, LogitVector, SimplexPoint,
};

fn main() -> legendretron::Result<()> {
    let z = LogitVector::new(vec![3.0, -1.0, 0.5])?;
    let q = softmax_plus(&z);
    println!("logits          {:?}", z.as_slice());
    println!("projected probs {:?} (remainder {:.6})", q.as_slice(), q.remainder());
    println!("log-sum-exp⁺    {:.12}", log_sum_exp_plus(&z));

    let p = unproject(&q)?;
    println!("full simplex    {:?}, predicted class {}", p.as_slice(), p.argmax() + 1);
    let back = softmax_plus_inverse(&project(&p)?)?;
    let err = back
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("inverse error   {err:.3e}");

    // Large logits stay finite thanks to the shifted evaluation.
    let big = LogitVector::new(vec![800.0, 799.0])?;
    println!("softmax⁺(800, 799) = {:?}", softmax_plus(&big).as_slice());

    let u = SimplexPoint::uniform(4)?;
    println!("uniform on 4 classes maps to logits {:?}", softmax_plus_inverse(&project(&u)?)?.as_slice());
    Ok(())
}
