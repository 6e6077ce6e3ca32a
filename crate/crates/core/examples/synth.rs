//! Writes a small synthetic dataset with known probability maps.
//!
//!     cargo run --example synth -- <dir> [images]

use segxai::synthetic::{generate, SyntheticSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        eprintln!("usage: synth <dir> [images]");
        std::process::exit(2);
    };
    let images = args.next().map_or(20, |n| n.parse().expect("image count"));
    let spec = SyntheticSpec {
        images,
        ..Default::default()
    };
    match generate(dir.as_ref(), &spec) {
        Ok(ids) => println!("{} images, methods {:?}", ids.len(), spec.method_ids()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
