//! Compare clearances in each built-in scheme and load a custom one.

use atsa::lattice::{builtin_schemes, load_scheme};

fn main() {
    for scheme in builtin_schemes() {
        let names: Vec<_> = scheme.levels().iter().map(|l| l.canonical_name.as_str()).collect();
        println!("{}: {}", scheme.name(), names.join(" < "));
    }

    let default = &builtin_schemes()[0];
    for (server, required) in [("restricted-plus", "SECRET"), ("cui", "Internal"), ("internal", "confidential")] {
        println!("{server:>16} meets {required:<12} -> {}", default.meets(server, required).unwrap());
    }

    let custom = br#"{
        "name": "lab",
        "levels": [
            {"rank": 0, "canonicalName": "OPEN"},
            {"rank": 1, "canonicalName": "LAB-ONLY", "aliases": ["STAFF"]},
            {"rank": 2, "canonicalName": "EXPORT-CONTROLLED"}
        ]
    }"#;
    let lab = load_scheme(custom).unwrap();
    println!("lab: staff meets open -> {}", lab.meets("staff", "open").unwrap());

    let gap = br#"{"name":"gap","levels":[{"rank":0,"canonicalName":"A"},{"rank":2,"canonicalName":"C"}]}"#;
    println!("ranks 0,2: {}", load_scheme(gap).unwrap_err());
}
