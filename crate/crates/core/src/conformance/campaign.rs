//! Runs a corpus against a hermetic gateway and admission path.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::admission::{
    host_of, verify_server_clearance, Admission, DenyReason, Flavor, StaticFetcher,
    VerificationRequest, Verdict,
};
use crate::audit::{AuditError, AuditEvent, AuditLog};
use crate::clock::FixedClock;
use crate::gateway::{CountingTransport, DispatchResult, Gateway, RegistryEntry, ToolCall};
use crate::sad::{sign_document, AttestationDocument};
use crate::trustroot::TrustRoot;

use super::corpus::{CampaignFixture, Category, CorpusCase, ForgeryKind};

pub const CAMPAIGN_ENDPOINT: &str = "https://a.example/mcp";
pub const CAMPAIGN_BRIDGE: &str = "campaign-bridge";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryTally {
    pub cases: usize,
    pub unique: usize,
    pub denied: usize,
    pub admitted: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForgeryTally {
    pub cases: usize,
    pub at_target: usize,
    /// Reasons seen other than the target, with counts.
    pub misses: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignReport {
    pub seed: u64,
    pub categories: BTreeMap<Category, CategoryTally>,
    pub forgeries: BTreeMap<ForgeryKind, ForgeryTally>,
    pub tool_deny_records: usize,
    pub network_writes: u64,
    /// First few offending inputs, for diagnosis.
    pub violations: Vec<String>,
}

impl CampaignReport {
    pub fn tool_name_cases(&self) -> usize {
        self.categories.values().map(|t| t.cases).sum()
    }

    pub fn unique_tool_names(&self) -> usize {
        self.categories.values().map(|t| t.unique).sum()
    }

    pub fn admitted(&self) -> usize {
        self.categories.values().map(|t| t.admitted).sum()
    }

    pub fn denied(&self) -> usize {
        self.categories.values().map(|t| t.denied).sum()
    }

    pub fn forgery_cases(&self) -> usize {
        self.forgeries.values().map(|t| t.cases).sum()
    }

    pub fn forgeries_at_target(&self) -> usize {
        self.forgeries.values().map(|t| t.at_target).sum()
    }

    pub fn passed(&self) -> bool {
        self.admitted() == 0
            && self.denied() == self.tool_name_cases()
            && self.tool_deny_records == self.tool_name_cases()
            && self.network_writes == 0
            && self.forgeries_at_target() == self.forgery_cases()
    }

    /// Plain-text report. Contains no timings, so equal inputs render equal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "{:<26} {:>6} {:>6} {:>6} {:>8}", "category", "cases", "unique", "denied", "admitted");
        for (cat, t) in &self.categories {
            let _ = writeln!(out, "{:<26} {:>6} {:>6} {:>6} {:>8}", cat.as_str(), t.cases, t.unique, t.denied, t.admitted);
        }
        let _ = writeln!(out, "{:<26} {:>6} {:>6} {:>6} {:>8}", "total", self.tool_name_cases(), self.unique_tool_names(), self.denied(), self.admitted());
        let _ = writeln!(out, "{:<22} {:<20} {:>6} {:>9}", "forgery", "target", "cases", "at_target");
        for (kind, t) in &self.forgeries {
            let _ = writeln!(out, "{:<22} {:<20} {:>6} {:>9}", kind.as_str(), kind.target().as_str(), t.cases, t.at_target);
            for (reason, n) in &t.misses {
                let _ = writeln!(out, "  miss {reason}: {n}");
            }
        }
        let _ = writeln!(out, "{:<43} {:>6} {:>9}", "total", self.forgery_cases(), self.forgeries_at_target());
        let _ = writeln!(out, "mcp.tool.deny records: {}", self.tool_deny_records);
        let _ = writeln!(out, "network writes: {}", self.network_writes);
        for v in &self.violations {
            let _ = writeln!(out, "violation: {v}");
        }
        let _ = writeln!(out, "{}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "seed": self.seed,
            "categories": self.categories.iter().map(|(c, t)| (c.as_str().to_string(), json!({
                "cases": t.cases, "unique": t.unique, "denied": t.denied, "admitted": t.admitted,
            }))).collect::<serde_json::Map<_, _>>(),
            "forgeries": self.forgeries.iter().map(|(k, t)| (k.as_str().to_string(), json!({
                "target": k.target(), "cases": t.cases, "atTarget": t.at_target, "misses": t.misses,
            }))).collect::<serde_json::Map<_, _>>(),
            "toolDenyRecords": self.tool_deny_records,
            "networkWrites": self.network_writes,
            "violations": self.violations,
            "pass": self.passed(),
        })
    }
}

/// Dispatch every tool-name case through a gateway whose only registered
/// endpoint admits `allowlist`, and evaluate every forgery against the
/// fixture's trust root.
pub fn run_campaign(
    cases: &[CorpusCase],
    allowlist: &BTreeSet<String>,
    fixture: &CampaignFixture,
) -> Result<CampaignReport, AuditError> {
    let clock = Arc::new(FixedClock::new(fixture.now));
    let (log, sink) = AuditLog::recording(clock.clone());
    let trust_root = fixture.trust_root();
    let mut genuine = AttestationDocument::new(
        "mcp.example.campaign",
        "example-corp",
        "1.0.0",
        "restricted-plus",
        vec!["mcp-server".into()],
    );
    genuine.net_allowed_hosts = Some(vec![host_of(CAMPAIGN_ENDPOINT).expect("static url")]);
    let genuine = sign_document(&genuine, &fixture.high).expect("fixture key signs");
    let admission = Arc::new(Admission::new(
        Arc::new(fixture.scheme.clone()),
        Arc::new(TrustRoot::new(trust_root.clone())),
        Arc::new(StaticFetcher::serving(genuine.to_json_bytes())),
        clock,
        Arc::new(log),
    ));
    admission.trust_root().lock();
    let transport = Arc::new(CountingTransport::echo());
    let gateway = Gateway::new(admission);
    gateway
        .register(RegistryEntry::new(
            CAMPAIGN_ENDPOINT,
            CAMPAIGN_BRIDGE,
            "restricted-plus",
            allowlist.iter().cloned(),
            transport.clone(),
        ))
        .expect("campaign entry registers");
    gateway.freeze();

    let mut report = CampaignReport {
        seed: fixture.seed,
        categories: BTreeMap::new(),
        forgeries: BTreeMap::new(),
        tool_deny_records: 0,
        network_writes: 0,
        violations: Vec::new(),
    };
    let mut seen: BTreeMap<Category, BTreeSet<&str>> = BTreeMap::new();
    let violation = |report: &mut CampaignReport, msg: String| {
        if report.violations.len() < 20 {
            report.violations.push(msg);
        }
    };

    for case in cases {
        match case {
            CorpusCase::ToolName { category, name } => {
                let tally = report.categories.entry(*category).or_default();
                tally.cases += 1;
                if seen.entry(*category).or_default().insert(name) {
                    tally.unique += 1;
                }
                let call = ToolCall::new(name.clone(), json!({}));
                match gateway.invoke(CAMPAIGN_ENDPOINT, &call, Flavor::Enclaved)? {
                    DispatchResult::Denied { reason: DenyReason::ToolNotAdmitted, .. } => tally.denied += 1,
                    DispatchResult::Denied { reason, .. } => {
                        tally.denied += 1;
                        violation(&mut report, format!("{category} {name:?}: denied as {reason}, not tool_not_admitted"));
                    }
                    _ => {
                        tally.admitted += 1;
                        violation(&mut report, format!("{category} {name:?}: admitted"));
                    }
                }
            }
            CorpusCase::Forgery(f) => {
                let fetcher = StaticFetcher::serving(f.document.as_bytes().to_vec());
                let verdict = verify_server_clearance(&VerificationRequest {
                    server_url: &f.server_url,
                    required_level: &f.required_level,
                    now: fixture.now,
                    scheme: &fixture.scheme,
                    trust_root: &trust_root,
                    fetcher: &fetcher,
                });
                let tally = report.forgeries.entry(f.kind).or_default();
                tally.cases += 1;
                match verdict {
                    Verdict::Deny { reason, .. } if reason == f.kind.target() => tally.at_target += 1,
                    other => {
                        let got = match &other {
                            Verdict::Deny { reason, .. } => reason.as_str().to_string(),
                            Verdict::Allow { .. } => "ADMIT".to_string(),
                        };
                        *tally.misses.entry(got.clone()).or_default() += 1;
                        violation(&mut report, format!("forgery {} got {got}", f.kind));
                    }
                }
            }
        }
    }

    report.tool_deny_records = sink
        .events()
        .into_iter()
        .filter(|e| *e == AuditEvent::ToolDeny)
        .count();
    report.network_writes = transport.calls();
    Ok(report)
}
