//! Regenerates the shipped parameter files: `cargo run --example gen_params -- <dir> [seed]`.

use zklab::permutations::{generate_params, HashKind};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "params".to_string());
    let seed: u64 = args.next().map(|s| s.parse().expect("seed is a u64")).unwrap_or(0);
    std::fs::create_dir_all(&dir).expect("create output directory");
    for kind in HashKind::ALL {
        let path = format!("{dir}/{}.json", kind.name());
        generate_params(kind, seed).save(&path).expect("write parameter file");
        println!("wrote {path}");
    }
}
