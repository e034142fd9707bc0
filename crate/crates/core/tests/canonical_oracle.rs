mod common;

use atsa::canonical::{to_canonical_bytes, CanonicalError};
use atsa::conformance::build_vectors;
use atsa::sad::{canonical_body, parse_document, sign_document, verify_signature, AttestationDocument};
use common::*;
use proptest::prelude::*;
use serde_json::{json, Value};

#[test]
fn golden_vector1_body_matches_the_oracle_and_the_crate() {
    let key = signer_s();
    let vectors = build_vectors(&key);
    let raw: Value = serde_json::from_slice(&vectors[0].document).unwrap();
    assert_eq!(oracle_body(&raw), GOLDEN_VECTOR1_BODY);
    let doc = parse_document(&vectors[0].document).unwrap();
    assert_eq!(canonical_body(&doc).unwrap(), GOLDEN_VECTOR1_BODY.as_bytes());
}

#[test]
fn fractional_numbers_have_no_canonical_form() {
    assert!(matches!(to_canonical_bytes(&json!({"a": 1.5})), Err(CanonicalError::NonIntegerNumber(_))));
    assert_eq!(to_canonical_bytes(&json!([-3, 18446744073709551615u64])).unwrap(), b"[-3,18446744073709551615]");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn canonical_bytes_match_oracle(v in arb_json()) {
        prop_assert_eq!(String::from_utf8(to_canonical_bytes(&v).unwrap()).unwrap(), oracle_canonical(&v));
    }

    #[test]
    fn canonical_body_matches_oracle((text, value) in arb_document_text()) {
        let doc = parse_document(text.as_bytes()).unwrap();
        prop_assert_eq!(String::from_utf8(canonical_body(&doc).unwrap()).unwrap(), oracle_body(&value));
    }

    #[test]
    fn body_ignores_signature_and_array_order((text, _) in arb_document_text(), seed in any::<u64>()) {
        let doc = parse_document(text.as_bytes()).unwrap();
        let mut other = doc.clone();
        other.signature = None;
        other.capabilities.reverse();
        if let Some(h) = other.net_allowed_hosts.as_mut() {
            let n = h.len().max(1);
            h.rotate_left(seed as usize % n);
        }
        other.extra.insert("zzUnknown".into(), json!(seed));
        prop_assert_eq!(canonical_body(&doc).unwrap(), canonical_body(&other).unwrap());
    }

    #[test]
    fn any_body_field_mutation_breaks_the_signature(field in 0usize..8, tail in "[a-z]{1,4}") {
        let key = signer_s();
        let mut doc = AttestationDocument::new("mcp.example.gmail", "example-corp", "2.3.1", "internal", vec!["mcp-server".into()]);
        doc.net_allowed_hosts = Some(vec!["a.example".into()]);
        doc.verification = Some("tested".into());
        let mut signed = sign_document(&doc, &key).unwrap();
        match field {
            0 => signed.id.push_str(&tail),
            1 => signed.publisher.push_str(&tail),
            2 => signed.version.push_str(&tail),
            3 => signed.clearance.push_str(&tail),
            4 => signed.capabilities.push(tail),
            5 => signed.signer_key_id = Some(format!("S{tail}")),
            6 => signed.net_allowed_hosts.as_mut().unwrap().push(tail),
            _ => signed.verification = Some(tail),
        }
        prop_assert!(!verify_signature(&signed, &key.public_key_bytes()));
    }
}
