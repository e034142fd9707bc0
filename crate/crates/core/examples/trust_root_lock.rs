//! Replace a trust root during bootstrap, lock it, and watch later
//! replacement attempts fail.

use atsa::sad::KeyPair;
use atsa::trustroot::{SignerRecord, TrustRoot, TrustRootContent};

fn main() {
    let mut rng = rand::rngs::OsRng;
    let community = KeyPair::generate("community", &mut rng);
    let bundled = KeyPair::generate("bundled", &mut rng);
    let vendor = KeyPair::generate("vendor-high", &mut rng);

    let root = TrustRoot::new(TrustRootContent::dev_bundle(&community, &bundled, &vendor));
    println!("dev bundle: {} signers", root.snapshot().len());

    let production = TrustRootContent::new([SignerRecord::for_key(&vendor, &["public", "internal", "restricted"])]).unwrap();
    root.set(production).unwrap();
    root.lock();
    println!("locked with {} signer(s)", root.snapshot().len());

    let attacker = KeyPair::generate("attacker", &mut rng);
    let attempt = TrustRootContent::new([SignerRecord::for_key(&attacker, &["restricted"])]).unwrap();
    match root.set(attempt) {
        Ok(()) => unreachable!("a locked root accepted a replacement"),
        Err(e) => println!("replacement after lock: {e}"),
    }
    assert!(root.find("attacker").is_none());
    println!("\ntrust root file:\n{}", root.snapshot().to_file_json());
}
