//! Generate the seeded evasion and forgery corpus and run it against a
//! hermetic gateway. Usage: `adversarial_campaign [seed] [per-category]`.

use std::collections::BTreeSet;

use atsa::conformance::{generate_corpus, run_campaign, CampaignFixture, DEFAULT_ALLOWLIST};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(1);
    let per_category: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(200);

    let allowlist: BTreeSet<String> = DEFAULT_ALLOWLIST.iter().map(|s| s.to_string()).collect();
    let cases = generate_corpus(seed, &allowlist, per_category);
    let report = run_campaign(&cases, &allowlist, &CampaignFixture::from_seed(seed)).unwrap();
    print!("{}", report.render());
    assert!(report.passed());
}
