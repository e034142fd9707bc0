//! Acceptance run: one PASS or FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use atsa::admission::{ConnectStatus, DenyReason, Flavor, HttpFetcher, StaticFetcher};
use atsa::audit::{parse_jsonl, verify_chain, verify_jsonl, verify_jsonl_anchored, AuditEvent, ChainHead};
use atsa::conformance::{
    build_vectors, generate_corpus, run_campaign, run_vectors, CampaignFixture, Category, ConformanceVector,
    ProductionVerifier, DEFAULT_ALLOWLIST,
};
use atsa::gateway::{CountingTransport, DispatchResult, DispatchStatus, Gateway, HttpTransport, RegistryEntry, ToolCall};
use atsa::lattice::{builtin_schemes, load_scheme};
use atsa::sad::{canonical_body, parse_document, KeyPair};
use atsa::trustroot::{SignerRecord, TrustRootContent, TrustRootError};
use atsa::wellknown_server::{serve, StubServerConfig, ToolBehavior};
use common::*;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn vector(i: usize) -> ConformanceVector {
    build_vectors(&signer_s()).swap_remove(i - 1)
}

fn harness_for(v: &ConformanceVector) -> Harness {
    harness_with(v.setup.trust_root.clone(), Arc::new(StaticFetcher::serving(v.document.clone())))
}

fn ac1_conformance_vectors() -> Outcome {
    let start = Instant::now();
    let key = KeyPair::generate("S", &mut rand::rngs::OsRng);
    let report = run_vectors(&build_vectors(&key), &ProductionVerifier);
    let elapsed = start.elapsed();
    ensure!(report.results.len() == 11, "{} vectors", report.results.len());
    ensure!(report.all_passed(), "{}", report.render());
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{} in {elapsed:.2?}", report.summary()))
}

fn ac2_tool_least_privilege() -> Outcome {
    let key = signer_s();
    let h = harness_serving(&key, &signed_baseline(&key));
    let transport = Arc::new(CountingTransport::echo());
    let gw = Gateway::new(h.admission.clone());
    gw.register(RegistryEntry::new("https://a.example/mcp", "gmail", "restricted-plus", ALLOWED, transport.clone()))
        .map_err(|e| e.to_string())?;
    gw.freeze();

    let categories: BTreeSet<&str> = HANDWRITTEN_EVASIONS.iter().map(|(c, _)| *c).collect();
    let all: BTreeSet<&str> = Category::ALL.iter().map(|c| c.as_str()).collect();
    ensure!(categories == all, "evasions span {categories:?}");
    ensure!(HANDWRITTEN_EVASIONS.len() >= 31, "only {} evasions", HANDWRITTEN_EVASIONS.len());

    for (_, name) in HANDWRITTEN_EVASIONS {
        let r = gw.invoke("https://a.example/mcp", &ToolCall::new(name, json!({})), Flavor::Enclaved).map_err(|e| e.to_string())?;
        ensure!(r.deny_reason() == Some(DenyReason::ToolNotAdmitted), "{name:?} gave {r:?}");
        ensure!(h.sink.events().last() == Some(&AuditEvent::ToolDeny), "{name:?} left no mcp.tool.deny");
    }
    let after_denials = transport.calls();
    ensure!(after_denials == 0, "{after_denials} writes after denials");
    let deny_records = h.sink.events().iter().filter(|e| **e == AuditEvent::ToolDeny).count();
    ensure!(deny_records == HANDWRITTEN_EVASIONS.len(), "{deny_records} deny records");

    for name in ALLOWED {
        let r = gw.invoke("https://a.example/mcp", &ToolCall::new(name, json!({})), Flavor::Enclaved).map_err(|e| e.to_string())?;
        ensure!(r.status() == DispatchStatus::Ok, "{name} gave {r:?}");
    }
    ensure!(transport.calls() == 2, "{} writes after admitted calls", transport.calls());
    Ok(format!("{} evasions denied, counter 0 then 2", HANDWRITTEN_EVASIONS.len()))
}

fn ac3_seeded_campaign() -> Outcome {
    let start = Instant::now();
    let allowlist: BTreeSet<String> = DEFAULT_ALLOWLIST.iter().map(|s| s.to_string()).collect();
    let cases = generate_corpus(1, &allowlist, 200);
    let report = run_campaign(&cases, &allowlist, &CampaignFixture::from_seed(1)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for (cat, t) in &report.categories {
        ensure!(t.cases >= 200, "{cat} has {} cases", t.cases);
    }
    ensure!(report.categories.len() == Category::ALL.len(), "{} categories", report.categories.len());
    ensure!(report.unique_tool_names() >= 1500, "{} unique names", report.unique_tool_names());
    ensure!(report.forgery_cases() >= 500, "{} forgeries", report.forgery_cases());
    ensure!(report.passed(), "{}", report.render());
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{} names denied, {} admitted, {} forgeries at target, {} network writes in {elapsed:.2?}",
        report.denied(),
        report.admitted(),
        report.forgeries_at_target(),
        report.network_writes
    ))
}

fn ac4_flavor_semantics() -> Outcome {
    let forged = vector(7);
    let enclaved = harness_for(&forged);
    let r = enclaved
        .admission
        .connect(&forged.setup.server_url, &forged.setup.required_level, Flavor::Enclaved, false)
        .map_err(|e| e.to_string())?;
    ensure!(r.status == ConnectStatus::Denied, "enclaved gave {:?}", r.status);
    ensure!(enclaved.sink.events() == vec![AuditEvent::ConnectDeny], "enclaved records {:?}", enclaved.sink.events());

    let open = harness_for(&forged);
    let r = open
        .admission
        .connect(&forged.setup.server_url, &forged.setup.required_level, Flavor::Open, false)
        .map_err(|e| e.to_string())?;
    ensure!(r.status == ConnectStatus::Warn, "open gave {:?}", r.status);
    ensure!(open.sink.events() == vec![AuditEvent::ConnectWarn], "open records {:?}", open.sink.events());

    let good = vector(1);
    let passing = harness_for(&good);
    let r = passing
        .admission
        .connect(&good.setup.server_url, &good.setup.required_level, Flavor::Enclaved, false)
        .map_err(|e| e.to_string())?;
    ensure!(r.status == ConnectStatus::Ok, "passing gave {:?}", r.status);
    let records = passing.sink.records();
    ensure!(records.len() == 1 && records[0].event == AuditEvent::ConnectAllow, "passing records {records:?}");
    ensure!(records[0].payload["level"] == json!("restricted-plus"), "level {}", records[0].payload["level"]);
    ensure!(records[0].payload["signerKeyId"] == json!("S"), "signerKeyId {}", records[0].payload["signerKeyId"]);
    Ok("enclaved denied, open warn, allow carries level and signerKeyId".into())
}

fn ac5_trust_root_lock() -> Outcome {
    let v4 = vector(4);
    let h = harness_for(&v4);
    let root = h.admission.trust_root();
    let before = root.snapshot().to_file_json();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for attempt in 0..100 {
        let n = rng.gen_range(0..5);
        let signers = (0..n).map(|i| {
            let id = if i == 0 && attempt % 2 == 0 { "unknown".to_string() } else { format!("k{attempt}-{i}") };
            let approved = &UP_TO_RP[..rng.gen_range(0..=UP_TO_RP.len())];
            SignerRecord::for_key(&KeyPair::from_seed(id, rng.gen()), approved)
        });
        let content = TrustRootContent::new(signers.collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        ensure!(matches!(root.set(content), Err(TrustRootError::Locked)), "attempt {attempt} was not refused");
    }
    ensure!(root.snapshot().to_file_json() == before, "content changed");
    let reason = h.admission.verify(&v4.setup.server_url, &v4.setup.required_level).reason();
    ensure!(reason == Some(DenyReason::SignerNotTrusted), "vector 4 gave {reason:?}");
    Ok("100 set attempts refused, vector 4 still signer_not_trusted".into())
}

fn ac6_audit_tamper() -> Outcome {
    let data = sample_log(100);
    let lines = split_records(&data);
    let n = lines.len();
    ensure!(n == 100, "{n} records");
    ensure!(verify_jsonl(&data) == Ok(n) && oracle_first_bad(&data).is_none(), "clean log rejected");
    let records = parse_jsonl(&data).map_err(|i| format!("clean log unparsable at {i}"))?;
    let head = ChainHead { len: n as u64, hash: records[n - 1].hash };

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut flips = 0usize;
    for k in 0..n {
        for pos in 0..lines[k].len() {
            let mask: u8 = rng.gen_range(1..=255);
            let mut tampered = lines.clone();
            tampered[k][pos] ^= mask;
            let bytes = join_records(&tampered);
            let got = verify_jsonl(&bytes);
            ensure!(got == Err(k), "flip record {k} byte {pos} mask {mask:#x}: {got:?}");
            ensure!(oracle_first_bad(&bytes) == Some(k), "oracle disagrees at record {k} byte {pos}");
            flips += 1;
        }
    }

    for k in 0..n {
        let mut cut = records.clone();
        cut.remove(k);
        if k + 1 < n {
            ensure!(verify_chain(&cut) == Err(k), "deletion {k}: {:?}", verify_chain(&cut));
        }
        let mut cut_lines = lines.clone();
        cut_lines.remove(k);
        let got = verify_jsonl_anchored(&join_records(&cut_lines), head);
        ensure!(got == Err(k), "anchored deletion {k}: {got:?}");
    }
    for k in 0..=n {
        let mut dup = records.clone();
        dup.insert(k, records[(k + 1) % n].clone());
        ensure!(verify_chain(&dup) == Err(k), "insertion {k}: {:?}", verify_chain(&dup));
    }
    for k in 0..n - 1 {
        let mut swapped = records.clone();
        swapped.swap(k, k + 1);
        ensure!(verify_chain(&swapped) == Err(k), "swap {k}: {:?}", verify_chain(&swapped));
    }
    Ok(format!("{flips} byte flips, {n} deletions, {} insertions, {} swaps located", n + 1, n - 1))
}

fn ac7_canonical_oracle() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config::default(),
        proptest::test_runner::TestRng::from_seed(proptest::test_runner::RngAlgorithm::ChaCha, &[7; 32]),
    );
    let strategy = arb_document_text();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let (text, value) = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let doc = parse_document(text.as_bytes()).map_err(|e| format!("case {i}: {e}"))?;
        let ours = canonical_body(&doc).map_err(|e| format!("case {i}: {e}"))?;
        let theirs = oracle_body(&value);
        ensure!(ours == theirs.as_bytes(), "case {i}: {text}");

        let mut permuted = doc.clone();
        let len = permuted.capabilities.len().max(1);
        permuted.capabilities.rotate_left(rng.gen_range(0..len));
        if let Some(hosts) = permuted.net_allowed_hosts.as_mut() {
            hosts.reverse();
        }
        ensure!(canonical_body(&permuted).map_err(|e| e.to_string())? == ours, "case {i}: array order leaked");
    }
    Ok("1000 randomized documents byte-identical to the oracle".into())
}

fn ac8_lattice() -> Outcome {
    let schemes = builtin_schemes();
    ensure!(schemes.len() == 5, "{} builtin schemes", schemes.len());
    let mut checks = 0;
    for s in &schemes {
        checks += check_lattice(s)?;
    }
    let fixtures = non_contiguous_fixtures();
    for raw in &fixtures {
        ensure!(load_scheme(raw).is_err(), "accepted {}", String::from_utf8_lossy(raw));
    }
    Ok(format!("{checks} comparisons over 5 schemes, {} bad fixtures rejected", fixtures.len()))
}

fn ac9_loopback() -> Outcome {
    let v1 = vector(1);
    let mut server = serve(
        StubServerConfig::default()
            .with_raw_document(v1.document.clone())
            .with_tool("list_labels", ToolBehavior::Echo)
            .with_tool("delete_everything", ToolBehavior::Echo),
    )
    .map_err(|e| e.to_string())?;
    let endpoint = server.mcp_url();
    let h = harness_with(v1.setup.trust_root.clone(), Arc::new(HttpFetcher::default()));
    let connected = h.admission.connect(&endpoint, "restricted-plus", Flavor::Enclaved, false).map_err(|e| e.to_string())?;
    ensure!(connected.is_ok(), "connect gave {:?}", connected.verdict);

    let gw = Gateway::new(h.admission.clone());
    gw.register(RegistryEntry::new(&endpoint, "gmail", "restricted-plus", ALLOWED, Arc::new(HttpTransport::new(&endpoint))))
        .map_err(|e| e.to_string())?;
    gw.freeze();
    let r = gw.invoke(&endpoint, &ToolCall::new("list_labels", json!({"max": 1})), Flavor::Enclaved).map_err(|e| e.to_string())?;
    let echo = json!({"echo": {"name": "list_labels", "arguments": {"max": 1}}});
    ensure!(r == DispatchResult::Ok(echo), "allowlisted call gave {r:?}");
    let before = server.counters().tool_calls();
    let r = gw.invoke(&endpoint, &ToolCall::new("delete_everything", json!({})), Flavor::Enclaved).map_err(|e| e.to_string())?;
    ensure!(r.deny_reason() == Some(DenyReason::ToolNotAdmitted), "denied call gave {r:?}");
    let after = server.counters().tool_calls();
    server.shutdown();
    ensure!(after == before, "{} tools/call POSTs for the denial", after - before);
    Ok(format!("connect ok, echo returned, 0 tools/call POSTs for the denial ({before} total)"))
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 9] = [
        ("AC1", "conformance vectors", ac1_conformance_vectors),
        ("AC2", "tool least-privilege", ac2_tool_least_privilege),
        ("AC3", "seeded campaign", ac3_seeded_campaign),
        ("AC4", "flavor semantics", ac4_flavor_semantics),
        ("AC5", "trust-root immutability", ac5_trust_root_lock),
        ("AC6", "audit tamper evidence", ac6_audit_tamper),
        ("AC7", "canonicalization oracle", ac7_canonical_oracle),
        ("AC8", "lattice properties", ac8_lattice),
        ("AC9", "loopback end to end", ac9_loopback),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {id} {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {id} {name}: panicked");
            }
        }
    }
    println!("{}/9 criteria pass", 9 - failed);
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
