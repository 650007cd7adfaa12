//! Parses LIBSVM text, reports label mapping and malformed-input positions,
//! and applies a split plus label noise.
//!
//! cargo run --example parse_libsvm

use legendretron::data::{parse_libsvm_str, split, to_libsvm_string, NoiseSpec};

fn main() -> legendretron::Result<()> {
    let text = "-1 1:0.5 3:2\n+1 2:1.5\n-1 1:-1 2:0.25 3:1\n+1 3:4\n-1 2:2\n+1 1:1\n";
    let data = parse_libsvm_str(text)?;
    let summary = data.summary();
    println!("{} rows, {} features, {} classes", summary.n_rows, summary.n_features, summary.n_classes);
    for m in &summary.label_map {
        println!("  raw label {} -> class {}", m.raw, m.class);
    }
    print!("round trip:\n{}", to_libsvm_string(&data));

    for bad in ["1 2:1 1:1", "1 0:3", "x 1:1", "1 1:abc"] {
        match parse_libsvm_str(bad) {
            Ok(_) => println!("{bad:?} parsed"),
            Err(e) => println!("{bad:?}: {e}"),
        }
    }

    let (train, test) = split(&data, 0.5, 11)?;
    let noisy = train.clone().with_symmetric_noise(&NoiseSpec::new(0.5, 11)?)?;
    println!("train labels {:?}, noisy {:?}, test labels {:?}", train.labels(), noisy.labels(), test.labels());
    Ok(())
}
