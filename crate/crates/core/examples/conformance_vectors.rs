//! Build the eleven conformance vectors, run them, and export the fixtures.
//!
//! Pass a directory to write `vector-NN.sad.json`, the per-vector trust
//! roots and `manifest.json` there.

use atsa::conformance::{build_vectors, export_vectors, run_vectors, ProductionVerifier};
use atsa::sad::KeyPair;

fn main() {
    let key = KeyPair::generate("S", &mut rand::rngs::OsRng);
    let vectors = build_vectors(&key);
    let report = run_vectors(&vectors, &ProductionVerifier);
    print!("{}", report.render());

    if let Some(dir) = std::env::args().nth(1) {
        let manifest = export_vectors(&vectors, dir.as_ref()).expect("export");
        println!("exported {} vectors to {dir}", manifest.len());
    }
    assert!(report.all_passed());
}
