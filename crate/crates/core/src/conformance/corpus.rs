//! Seeded adversarial corpus: tool-name evasions per category plus forged
//! attestation documents, each aimed at one admission clause.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::admission::DenyReason;
use crate::lattice::{default_scheme, ClassificationScheme};
use crate::sad::{sign_document, AttestationDocument, KeyPair};
use crate::trustroot::{SignerRecord, TrustRootContent};

use super::vectors::{vector_now, UP_TO_INTERNAL, UP_TO_RESTRICTED_PLUS};

pub const DEFAULT_ALLOWLIST: [&str; 2] = ["list_labels", "get_message"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    WhitespaceControl,
    SeparatorChaining,
    NearMiss,
    PathTraversal,
    HomoglyphZeroWidthRtl,
    CaseVariant,
    PrototypeProbe,
    JsonSmuggling,
    Unclassified,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::WhitespaceControl,
        Category::SeparatorChaining,
        Category::NearMiss,
        Category::PathTraversal,
        Category::HomoglyphZeroWidthRtl,
        Category::CaseVariant,
        Category::PrototypeProbe,
        Category::JsonSmuggling,
        Category::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::WhitespaceControl => "whitespace_control",
            Category::SeparatorChaining => "separator_chaining",
            Category::NearMiss => "near_miss",
            Category::PathTraversal => "path_traversal",
            Category::HomoglyphZeroWidthRtl => "homoglyph_zero_width_rtl",
            Category::CaseVariant => "case_variant",
            Category::PrototypeProbe => "prototype_probe",
            Category::JsonSmuggling => "json_smuggling",
            Category::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryKind {
    Unsigned,
    WrongSigner,
    SelfPromotion,
    SignatureTamper,
    PostSigningUpgrade,
    CapabilityOmission,
    LevelShortfall,
    ExpiredSigner,
    HostReplay,
    Malformed,
}

impl ForgeryKind {
    pub const ALL: [ForgeryKind; 10] = [
        ForgeryKind::Unsigned,
        ForgeryKind::WrongSigner,
        ForgeryKind::SelfPromotion,
        ForgeryKind::SignatureTamper,
        ForgeryKind::PostSigningUpgrade,
        ForgeryKind::CapabilityOmission,
        ForgeryKind::LevelShortfall,
        ForgeryKind::ExpiredSigner,
        ForgeryKind::HostReplay,
        ForgeryKind::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ForgeryKind::Unsigned => "unsigned",
            ForgeryKind::WrongSigner => "wrong_signer",
            ForgeryKind::SelfPromotion => "self_promotion",
            ForgeryKind::SignatureTamper => "signature_tamper",
            ForgeryKind::PostSigningUpgrade => "post_signing_upgrade",
            ForgeryKind::CapabilityOmission => "capability_omission",
            ForgeryKind::LevelShortfall => "level_shortfall",
            ForgeryKind::ExpiredSigner => "expired_signer",
            ForgeryKind::HostReplay => "host_replay",
            ForgeryKind::Malformed => "malformed",
        }
    }

    /// The reason each recipe must be rejected with.
    pub fn target(self) -> DenyReason {
        match self {
            ForgeryKind::Unsigned => DenyReason::Unsigned,
            ForgeryKind::WrongSigner => DenyReason::SignerNotTrusted,
            ForgeryKind::SelfPromotion => DenyReason::SignerNotApproved,
            ForgeryKind::SignatureTamper => DenyReason::BadSignature,
            ForgeryKind::PostSigningUpgrade => DenyReason::BadSignature,
            ForgeryKind::CapabilityOmission => DenyReason::NotMcpServer,
            ForgeryKind::LevelShortfall => DenyReason::BelowRequired,
            ForgeryKind::ExpiredSigner => DenyReason::SignerExpired,
            ForgeryKind::HostReplay => DenyReason::HostNotBound,
            ForgeryKind::Malformed => DenyReason::ManifestInvalid,
        }
    }
}

impl fmt::Display for ForgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForgeryKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ForgeryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    DeniedZeroWrites,
    RejectedAt(DenyReason),
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::DeniedZeroWrites => f.write_str("denied_zero_writes"),
            Expectation::RejectedAt(r) => write!(f, "rejected_at:{r}"),
        }
    }
}

impl FromStr for Expectation {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "denied_zero_writes" {
            return Ok(Expectation::DeniedZeroWrites);
        }
        s.strip_prefix("rejected_at:")
            .and_then(|r| r.parse().ok())
            .map(Expectation::RejectedAt)
            .ok_or_else(|| CorpusError::UnknownExpectation(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgedAssertion {
    pub kind: ForgeryKind,
    /// Bytes served at the well-known path, kept as text so they round-trip
    /// through JSONL.
    pub document: String,
    pub server_url: String,
    pub required_level: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusCase {
    ToolName { category: Category, name: String },
    Forgery(ForgedAssertion),
}

impl CorpusCase {
    pub fn expectation(&self) -> Expectation {
        match self {
            CorpusCase::ToolName { .. } => Expectation::DeniedZeroWrites,
            CorpusCase::Forgery(f) => Expectation::RejectedAt(f.kind.target()),
        }
    }

    pub fn category_label(&self) -> &'static str {
        match self {
            CorpusCase::ToolName { category, .. } => category.as_str(),
            CorpusCase::Forgery(_) => FORGED_ASSERTION,
        }
    }
}

pub const FORGED_ASSERTION: &str = "forged_assertion";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown forgery kind `{0}`")]
    UnknownKind(String),
    #[error("unknown expectation `{0}`")]
    UnknownExpectation(String),
    #[error("case expectation `{found}` disagrees with `{derived}`")]
    ExpectationMismatch { found: String, derived: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CaseLine {
    category: String,
    input: String,
    expectation: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    server_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    required: Option<String>,
}

pub fn corpus_to_jsonl(cases: &[CorpusCase]) -> String {
    let mut out = String::new();
    for case in cases {
        let line = match case {
            CorpusCase::ToolName { category, name } => CaseLine {
                category: category.as_str().into(),
                input: name.clone(),
                expectation: case.expectation().to_string(),
                kind: None,
                server_url: None,
                required: None,
            },
            CorpusCase::Forgery(f) => CaseLine {
                category: FORGED_ASSERTION.into(),
                input: f.document.clone(),
                expectation: case.expectation().to_string(),
                kind: Some(f.kind.as_str().into()),
                server_url: Some(f.server_url.clone()),
                required: Some(f.required_level.clone()),
            },
        };
        out.push_str(&serde_json::to_string(&line).expect("case line serializes"));
        out.push('\n');
    }
    out
}

/// Parse a JSONL corpus. Blank lines are skipped; line numbers are 1-based.
pub fn corpus_from_jsonl(text: &str) -> Result<Vec<CorpusCase>, CorpusError> {
    let mut cases = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::Line { line: line_no, message };
        let line: CaseLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let expectation: Expectation = line.expectation.parse().map_err(|e: CorpusError| err(e.to_string()))?;
        let case = if line.category == FORGED_ASSERTION {
            let kind: ForgeryKind = line
                .kind
                .as_deref()
                .ok_or_else(|| err("forged_assertion requires `kind`".into()))?
                .parse()
                .map_err(|e: CorpusError| err(e.to_string()))?;
            CorpusCase::Forgery(ForgedAssertion {
                kind,
                document: line.input,
                server_url: line
                    .server_url
                    .ok_or_else(|| err("forged_assertion requires `serverUrl`".into()))?,
                required_level: line
                    .required
                    .ok_or_else(|| err("forged_assertion requires `required`".into()))?,
            })
        } else {
            let category: Category = line.category.parse().map_err(|e: CorpusError| err(e.to_string()))?;
            CorpusCase::ToolName { category, name: line.input }
        };
        if case.expectation() != expectation {
            return Err(err(
                CorpusError::ExpectationMismatch {
                    found: expectation.to_string(),
                    derived: case.expectation().to_string(),
                }
                .to_string(),
            ));
        }
        cases.push(case);
    }
    Ok(cases)
}

/// Keys and trust root the forgeries are built against. Derived from the
/// seed so a corpus exported under one seed replays under the same seed.
#[derive(Debug, Clone)]
pub struct CampaignFixture {
    pub seed: u64,
    /// Approved up to RESTRICTED-PLUS.
    pub high: KeyPair,
    /// Approved up to INTERNAL.
    pub low: KeyPair,
    /// Approved up to RESTRICTED-PLUS but expired.
    pub expired: KeyPair,
    /// Not in the trust root.
    pub attacker: KeyPair,
    pub now: DateTime<Utc>,
    pub scheme: ClassificationScheme,
}

impl CampaignFixture {
    pub fn from_seed(seed: u64) -> Self {
        let key = |role: &str| {
            let mut h = Sha256::new();
            h.update(b"atsa-campaign-key");
            h.update(seed.to_be_bytes());
            h.update(role.as_bytes());
            KeyPair::from_seed(format!("campaign-{role}"), h.finalize().into())
        };
        Self {
            seed,
            high: key("high"),
            low: key("low"),
            expired: key("expired"),
            attacker: key("attacker"),
            now: vector_now(),
            scheme: default_scheme(),
        }
    }

    pub fn trust_root(&self) -> TrustRootContent {
        TrustRootContent::new([
            SignerRecord::for_key(&self.high, UP_TO_RESTRICTED_PLUS),
            SignerRecord::for_key(&self.low, UP_TO_INTERNAL),
            SignerRecord::for_key(&self.expired, UP_TO_RESTRICTED_PLUS)
                .with_not_after(self.now - Duration::days(30)),
        ])
        .expect("distinct campaign key ids")
    }
}

/// Forgeries per kind for a given per-category count.
pub fn forgeries_per_kind(per_category: usize) -> usize {
    per_category.div_ceil(3).max(1)
}

/// Generate the corpus: `per_category` distinct evasions for every category,
/// then `forgeries_per_kind(per_category)` forgeries of every kind.
///
/// No tool-name case is byte-equal to an allowlist member and no string
/// appears twice across categories. A category whose template space is
/// exhausted (tiny allowlist names under `case_variant`) yields fewer cases.
pub fn generate_corpus(seed: u64, allowlist: &BTreeSet<String>, per_category: usize) -> Vec<CorpusCase> {
    let fixture = CampaignFixture::from_seed(seed);
    let mut cases = generate_tool_names(seed, allowlist, per_category);
    cases.extend(generate_forgeries(&fixture, forgeries_per_kind(per_category)));
    cases
}

pub fn generate_tool_names(seed: u64, allowlist: &BTreeSet<String>, per_category: usize) -> Vec<CorpusCase> {
    let bases: Vec<&str> = if allowlist.is_empty() {
        DEFAULT_ALLOWLIST.to_vec()
    } else {
        allowlist.iter().map(String::as_str).collect()
    };
    let mut seen: HashSet<String> = HashSet::new();
    let mut cases = Vec::new();
    for (ci, category) in Category::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((ci as u64 + 1) << 48));
        let mut produced = 0;
        let mut misses = 0;
        let budget = per_category * 50 + 1000;
        while produced < per_category && misses < budget {
            let name = mutate(category, &bases, &mut rng, misses);
            if name.is_empty() || allowlist.contains(&name) || bases.contains(&name.as_str()) || !seen.insert(name.clone()) {
                misses += 1;
                continue;
            }
            cases.push(CorpusCase::ToolName { category, name });
            produced += 1;
        }
    }
    cases
}

const WHITESPACE_CONTROL: &[char] = &[
    ' ', '\t', '\n', '\r', '\0', '\u{0b}', '\u{0c}', '\u{1b}', '\u{7f}', '\u{07}', '\u{08}',
    '\u{a0}', '\u{85}', '\u{1680}', '\u{2000}', '\u{2009}', '\u{2028}', '\u{2029}', '\u{202f}',
    '\u{3000}',
];

const SEPARATORS: &[&str] = &[
    ";", "; ", " ; ", "&&", " && ", "||", "|", " | ", "\n", "\r\n", ",", " ", "&", "`", "$(",
    "\t", ";;", "%0a", "%3b", "/", "+",
];

const DESTRUCTIVE: &[&str] = &[
    "delete_everything", "delete_all_messages", "send_email", "drop_table", "rm -rf /",
    "forward_all", "exfiltrate", "create_filter", "empty_trash", "share_drive", "grant_admin",
    "modify_labels", "batch_delete", "trash_message", "set_forwarding", "delete_labels",
    "purge", "shutdown", "export_contacts", "update_settings",
];

const NEAR_MISS_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_-.";

const TRAVERSAL: &[&str] = &[
    "../", "..\\", "./", "%2e%2e%2f", "%2e%2e/", "..%2f", "%252e%252e%252f", "....//", "..;/",
    "%c0%ae%c0%ae/", "/", "\\",
];

const TRAVERSAL_TARGETS: &[&str] = &[
    "etc/passwd", "admin", "delete_everything", "config", ".env", "root", "tools/admin",
    "windows/system32", "proc/self/environ", "internal",
];

/// Latin letters and visually matching code points.
const CONFUSABLES: &[(char, &[char])] = &[
    ('a', &['\u{430}', '\u{3b1}', '\u{ff41}', '\u{251}']),
    ('b', &['\u{432}', '\u{ff42}', '\u{184}']),
    ('c', &['\u{441}', '\u{3f2}', '\u{ff43}', '\u{217d}']),
    ('d', &['\u{501}', '\u{ff44}', '\u{217e}']),
    ('e', &['\u{435}', '\u{3b5}', '\u{ff45}', '\u{4bd}']),
    ('g', &['\u{261}', '\u{ff47}', '\u{581}']),
    ('h', &['\u{4bb}', '\u{ff48}', '\u{570}']),
    ('i', &['\u{456}', '\u{3b9}', '\u{ff49}', '\u{131}']),
    ('j', &['\u{458}', '\u{ff4a}', '\u{3f3}']),
    ('k', &['\u{3ba}', '\u{ff4b}', '\u{43a}']),
    ('l', &['\u{4cf}', '\u{ff4c}', '\u{217c}', '\u{6c3}', '1', 'I']),
    ('m', &['\u{ff4d}', '\u{217f}', '\u{43c}']),
    ('n', &['\u{578}', '\u{ff4e}', '\u{3b7}']),
    ('o', &['\u{43e}', '\u{3bf}', '\u{ff4f}', '0', '\u{585}']),
    ('p', &['\u{440}', '\u{3c1}', '\u{ff50}']),
    ('q', &['\u{51b}', '\u{ff51}', '\u{563}']),
    ('r', &['\u{433}', '\u{ff52}', '\u{1d26}']),
    ('s', &['\u{455}', '\u{ff53}', '\u{15f}', '5']),
    ('t', &['\u{442}', '\u{3c4}', '\u{ff54}']),
    ('u', &['\u{3c5}', '\u{ff55}', '\u{57d}']),
    ('v', &['\u{3bd}', '\u{ff56}', '\u{475}']),
    ('w', &['\u{ff57}', '\u{561}', '\u{51d}']),
    ('x', &['\u{445}', '\u{3c7}', '\u{ff58}']),
    ('y', &['\u{443}', '\u{3b3}', '\u{ff59}']),
    ('z', &['\u{ff5a}', '\u{1d22}']),
    ('_', &['\u{ff3f}', '\u{2017}', '\u{fe4d}']),
];

const INVISIBLE: &[char] = &[
    '\u{200b}', '\u{200c}', '\u{200d}', '\u{2060}', '\u{feff}', '\u{00ad}', '\u{180e}',
    '\u{202e}', '\u{202d}', '\u{202a}', '\u{202b}', '\u{202c}', '\u{2066}', '\u{2067}',
    '\u{2068}', '\u{2069}', '\u{200e}', '\u{200f}', '\u{061c}',
];

const PROTO_PROBES: &[&str] = &[
    "__proto__", "constructor", "prototype", "__proto__.polluted", "constructor.prototype",
    "hasOwnProperty", "toString", "valueOf", "__defineGetter__", "__defineSetter__",
    "__lookupGetter__", "__lookupSetter__", "Object.prototype", "isPrototypeOf",
    "propertyIsEnumerable", "toLocaleString",
];

const PROTO_PROPS: &[&str] = &["polluted", "isAdmin", "allowedTools", "admin", "role", "allow"];

fn mutate(category: Category, bases: &[&str], rng: &mut ChaCha8Rng, misses: usize) -> String {
    let base = *bases.choose(rng).expect("non-empty bases");
    // More misses widen the mutation depth so the space keeps growing.
    let depth = 1 + misses / 64;
    match category {
        Category::WhitespaceControl => {
            let mut chars: Vec<char> = base.chars().collect();
            let n = rng.gen_range(1..=depth + 1);
            for _ in 0..n {
                let c = *WHITESPACE_CONTROL.choose(rng).unwrap();
                let at = match rng.gen_range(0..3) {
                    0 => 0,
                    1 => chars.len(),
                    _ => rng.gen_range(0..=chars.len()),
                };
                chars.insert(at, c);
            }
            chars.into_iter().collect()
        }
        Category::SeparatorChaining => {
            let mut s = base.to_string();
            for _ in 0..rng.gen_range(1..=depth) {
                s.push_str(SEPARATORS.choose(rng).unwrap());
                s.push_str(DESTRUCTIVE.choose(rng).unwrap());
            }
            if rng.gen_bool(0.1) {
                format!("{}{}{}", DESTRUCTIVE.choose(rng).unwrap(), SEPARATORS.choose(rng).unwrap(), s)
            } else {
                s
            }
        }
        Category::NearMiss => {
            let mut bytes = base.as_bytes().to_vec();
            for _ in 0..rng.gen_range(1..=2) {
                let letter = *NEAR_MISS_ALPHABET.choose(rng).unwrap();
                match rng.gen_range(0..5) {
                    0 if !bytes.is_empty() => {
                        bytes.remove(rng.gen_range(0..bytes.len()));
                    }
                    1 if !bytes.is_empty() => {
                        let at = rng.gen_range(0..bytes.len());
                        bytes[at] = letter;
                    }
                    2 if bytes.len() >= 2 => {
                        let at = rng.gen_range(0..bytes.len() - 1);
                        bytes.swap(at, at + 1);
                    }
                    3 => {
                        // Truncation.
                        let keep = rng.gen_range(0..bytes.len().max(1));
                        bytes.truncate(keep.max(1).min(bytes.len()));
                    }
                    _ => {
                        let at = rng.gen_range(0..=bytes.len());
                        bytes.insert(at, letter);
                    }
                }
            }
            String::from_utf8(bytes).expect("ASCII alphabet")
        }
        Category::PathTraversal => {
            let trav = |rng: &mut ChaCha8Rng| TRAVERSAL.choose(rng).unwrap().repeat(rng.gen_range(1..=depth + 3));
            match rng.gen_range(0..5) {
                0 => format!("{}{base}", trav(rng)),
                1 => format!("{base}/{}{}", trav(rng), TRAVERSAL_TARGETS.choose(rng).unwrap()),
                2 => format!("{}{}", trav(rng), TRAVERSAL_TARGETS.choose(rng).unwrap()),
                3 => format!("tools/{}{base}", trav(rng)),
                _ => format!("{}/{base}{}", bases.choose(rng).unwrap(), trav(rng)),
            }
        }
        Category::HomoglyphZeroWidthRtl => {
            let mut out: Vec<String> = base.chars().map(String::from).collect();
            let mut changed = false;
            for _ in 0..rng.gen_range(1..=depth + 1) {
                if rng.gen_bool(0.5) {
                    let at = rng.gen_range(0..out.len());
                    let ch = out[at].chars().next().unwrap();
                    if let Some((_, subs)) = CONFUSABLES.iter().find(|(c, _)| *c == ch) {
                        out[at] = subs.choose(rng).unwrap().to_string();
                        changed = true;
                    }
                } else {
                    let at = rng.gen_range(0..=out.len());
                    out.insert(at, INVISIBLE.choose(rng).unwrap().to_string());
                    changed = true;
                }
            }
            if !changed {
                out.insert(0, '\u{200b}'.to_string());
            }
            out.concat()
        }
        Category::CaseVariant => {
            let letters: Vec<usize> = base
                .char_indices()
                .filter(|(_, c)| c.is_ascii_alphabetic())
                .map(|(i, _)| i)
                .collect();
            match rng.gen_range(0..6) {
                0 => base.to_ascii_uppercase(),
                1 => {
                    let mut s = base.to_string();
                    if let Some(first) = s.get_mut(0..1) {
                        first.make_ascii_uppercase();
                    }
                    s
                }
                _ => base
                    .char_indices()
                    .map(|(i, c)| {
                        if letters.contains(&i) && rng.gen_bool(0.5) {
                            c.to_ascii_uppercase()
                        } else {
                            c
                        }
                    })
                    .collect(),
            }
        }
        Category::PrototypeProbe => {
            let probe = PROTO_PROBES.choose(rng).unwrap();
            let prop = PROTO_PROPS.choose(rng).unwrap();
            match rng.gen_range(0..8) {
                0 => probe.to_string(),
                1 => format!("{base}.{probe}"),
                2 => format!("{probe}.{base}"),
                3 => format!("{base}[\"{probe}\"]"),
                4 => format!("{probe}[{base}]"),
                5 => format!("{probe}.{prop}"),
                6 => format!("{base}/{probe}/{prop}"),
                _ => format!("{probe}[\"{prop}\"]={base}"),
            }
        }
        Category::JsonSmuggling => {
            let target = DESTRUCTIVE.choose(rng).unwrap();
            match rng.gen_range(0..8) {
                0 => format!("{base}\",\"name\":\"{target}"),
                1 => format!("{{\"name\":\"{base}\"}}"),
                2 => format!("[\"{base}\",\"{target}\"]"),
                3 => format!("{base}\",\"arguments\":{{\"{target}\":true}},\"x\":\""),
                4 => format!("{base}\\u0000{target}"),
                5 => escape_some(base, rng),
                6 => format!("{base}\"}}],\"method\":\"tools/call\",\"params\":{{\"name\":\"{target}"),
                _ => format!("{{\"$ref\":\"#/{base}\",\"name\":\"{target}\"}}"),
            }
        }
        Category::Unclassified => {
            let len = rng.gen_range(1..=24 + depth);
            (0..len).map(|_| rng.gen_range(0x20u8..0x7f) as char).collect()
        }
    }
}

/// Spell some characters of `base` as literal JSON `\uXXXX` escapes.
fn escape_some(base: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut any = false;
    for c in base.chars() {
        if rng.gen_bool(0.3) {
            out.push_str(&format!("\\u{:04x}", c as u32));
            any = true;
        } else {
            out.push(c);
        }
    }
    if !any {
        let mut chars = base.chars();
        let first = chars.next().map(|c| c as u32).unwrap_or(0);
        out = format!("\\u{first:04x}{}", chars.as_str());
    }
    out
}

const HOST_POOL: &[&str] = &[
    "a.example", "b.example", "mcp.example.com", "tools.example.org", "gmail.example",
    "api.example.net", "internal.example", "bridge.example.io",
];

const CAPABILITY_DECOYS: &[&[&str]] = &[
    &[],
    &["tool.invoke"],
    &["MCP-SERVER"],
    &["mcp-server "],
    &["mcp_server"],
    &["mcp-client"],
    &["mcp\u{2011}server"],
    &["tool.invoke", "resources.read"],
    &["m\u{0441}p-server"],
    &["mcpserver"],
];

fn random_body(rng: &mut ChaCha8Rng, clearance: &str) -> AttestationDocument {
    let id = format!("mcp.example.{}", DESTRUCTIVE.choose(rng).unwrap().replace([' ', '/'], ""));
    let mut doc = AttestationDocument::new(
        format!("{id}.{}", rng.gen_range(0..10_000)),
        ["example-corp", "acme", "contoso", "initech"].choose(rng).unwrap().to_string(),
        format!("{}.{}.{}", rng.gen_range(0..10), rng.gen_range(0..20), rng.gen_range(0..100)),
        clearance,
        vec!["mcp-server".into()],
    );
    if rng.gen_bool(0.5) {
        doc.net_allowed_hosts = Some(vec![]);
    }
    if rng.gen_bool(0.3) {
        doc.capabilities.push("tool.invoke".into());
    }
    doc
}

/// Canonical names at or below `max_rank`, plus a case-varied alias now and then.
fn level_at_most(scheme: &ClassificationScheme, rng: &mut ChaCha8Rng, min: u32, max: u32) -> String {
    let rank = rng.gen_range(min..=max);
    let name = scheme.level(rank).expect("rank in range").canonical_name.clone();
    match rng.gen_range(0..3) {
        0 => name.to_ascii_lowercase(),
        1 => name,
        _ => name
            .chars()
            .map(|c| if rng.gen_bool(0.5) { c.to_ascii_lowercase() } else { c })
            .collect(),
    }
}

fn rank(scheme: &ClassificationScheme, name: &str) -> u32 {
    scheme.resolve(name).expect("built-in level")
}

fn flip_signature(doc: &mut AttestationDocument, rng: &mut ChaCha8Rng) {
    let mut sig = BASE64.decode(doc.signature.as_deref().unwrap()).unwrap();
    let at = rng.gen_range(0..sig.len());
    sig[at] ^= 1 << rng.gen_range(0..8);
    doc.signature = Some(BASE64.encode(sig));
}

pub fn generate_forgeries(fixture: &CampaignFixture, per_kind: usize) -> Vec<CorpusCase> {
    let scheme = &fixture.scheme;
    let internal = rank(scheme, "internal");
    let restricted_plus = rank(scheme, "restricted-plus");
    let sign = |doc: &AttestationDocument, key: &KeyPair| sign_document(doc, key).expect("fixture key signs");
    let mut out = Vec::new();
    for (ki, kind) in ForgeryKind::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(fixture.seed ^ 0xF0F0_0000 ^ ((ki as u64 + 1) << 40));
        for _ in 0..per_kind {
            let host = *HOST_POOL.choose(&mut rng).unwrap();
            let mut server_url = format!("https://{host}/mcp");
            let clearance = level_at_most(scheme, &mut rng, 0, restricted_plus);
            let required = level_at_most(scheme, &mut rng, 0, rank(scheme, &clearance));
            let mut required_level = required;
            let document = match kind {
                ForgeryKind::Unsigned => {
                    let mut doc = sign(&random_body(&mut rng, &clearance), &fixture.high);
                    match rng.gen_range(0..3) {
                        0 => doc.signature = None,
                        1 => doc.signer_key_id = None,
                        _ => {
                            doc.signature = None;
                            doc.signer_key_id = None;
                        }
                    }
                    doc.to_json_bytes()
                }
                ForgeryKind::WrongSigner => {
                    let mut doc = sign(&random_body(&mut rng, &clearance), &fixture.attacker);
                    if rng.gen_bool(0.3) {
                        doc.signer_key_id = Some(
                            ["unknown", "campaign-High", "campaign-high ", "root", "*"]
                                .choose(&mut rng)
                                .unwrap()
                                .to_string(),
                        );
                    }
                    doc.to_json_bytes()
                }
                ForgeryKind::SelfPromotion => {
                    let above = level_at_most(scheme, &mut rng, internal + 1, scheme.highest().rank);
                    required_level = level_at_most(scheme, &mut rng, 0, rank(scheme, &above));
                    sign(&random_body(&mut rng, &above), &fixture.low).to_json_bytes()
                }
                ForgeryKind::SignatureTamper => {
                    let mut doc = sign(&random_body(&mut rng, &clearance), &fixture.high);
                    if rng.gen_bool(0.7) {
                        flip_signature(&mut doc, &mut rng);
                    } else {
                        // Attacker signature presented under the trusted key id.
                        let forged = sign(&doc, &fixture.attacker);
                        doc.signature = forged.signature;
                    }
                    doc.to_json_bytes()
                }
                ForgeryKind::PostSigningUpgrade => {
                    let low_level = level_at_most(scheme, &mut rng, 0, restricted_plus - 1);
                    let mut doc = sign(&random_body(&mut rng, &low_level), &fixture.high);
                    match rng.gen_range(0..5) {
                        0 | 1 => {
                            let higher = level_at_most(scheme, &mut rng, rank(scheme, &low_level) + 1, restricted_plus);
                            required_level = level_at_most(scheme, &mut rng, 0, rank(scheme, &higher));
                            doc.clearance = higher;
                        }
                        2 => doc.id.push_str(".evil"),
                        3 => doc.version.push_str("-patched"),
                        _ => doc.net_allowed_hosts = Some(vec!["evil.example".into()]),
                    }
                    if doc.net_allowed_hosts.as_deref().is_some_and(|h| h.contains(&"evil.example".to_string())) {
                        server_url = "https://evil.example/mcp".into();
                    }
                    if rank(scheme, &required_level) > rank(scheme, &doc.clearance) {
                        required_level = doc.clearance.clone();
                    }
                    doc.to_json_bytes()
                }
                ForgeryKind::CapabilityOmission => {
                    let mut body = random_body(&mut rng, &clearance);
                    body.capabilities = CAPABILITY_DECOYS.choose(&mut rng).unwrap().iter().map(|s| s.to_string()).collect();
                    sign(&body, &fixture.high).to_json_bytes()
                }
                ForgeryKind::LevelShortfall => {
                    let low_level = level_at_most(scheme, &mut rng, 0, restricted_plus - 1);
                    required_level = level_at_most(scheme, &mut rng, rank(scheme, &low_level) + 1, scheme.highest().rank);
                    sign(&random_body(&mut rng, &low_level), &fixture.high).to_json_bytes()
                }
                ForgeryKind::ExpiredSigner => {
                    sign(&random_body(&mut rng, &clearance), &fixture.expired).to_json_bytes()
                }
                ForgeryKind::HostReplay => {
                    let mut body = random_body(&mut rng, &clearance);
                    let n = rng.gen_range(1..=3);
                    let bound: Vec<String> = HOST_POOL
                        .choose_multiple(&mut rng, n)
                        .map(|h| h.to_string())
                        .collect();
                    let foreign = HOST_POOL
                        .iter()
                        .chain(["attacker.example", "a.example.evil", "xa.example"].iter())
                        .filter(|h| !bound.iter().any(|b| b.eq_ignore_ascii_case(h)))
                        .collect::<Vec<_>>();
                    server_url = format!("https://{}/mcp", foreign.choose(&mut rng).unwrap());
                    body.net_allowed_hosts = Some(bound);
                    sign(&body, &fixture.high).to_json_bytes()
                }
                ForgeryKind::Malformed => malformed(&sign(&random_body(&mut rng, &clearance), &fixture.high), &mut rng),
            };
            out.push(CorpusCase::Forgery(ForgedAssertion {
                kind,
                document: String::from_utf8(document).expect("documents are UTF-8"),
                server_url,
                required_level,
            }));
        }
    }
    out
}

fn malformed(valid: &AttestationDocument, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut value: Value = serde_json::from_slice(&valid.to_json_bytes()).unwrap();
    let obj = value.as_object_mut().unwrap();
    match rng.gen_range(0..12) {
        0 => {
            obj.insert("v".into(), json!(2));
        }
        1 => {
            obj.insert("v".into(), json!("1"));
        }
        2 => {
            obj.remove(*["id", "publisher", "version", "clearance", "v"].choose(rng).unwrap());
        }
        3 => {
            obj.insert("capabilities".into(), json!("mcp-server"));
        }
        4 => {
            obj.insert("clearance".into(), json!(5));
        }
        5 => {
            obj.insert("id".into(), json!(""));
        }
        6 => {
            obj.insert("netAllowedHosts".into(), json!("a.example"));
        }
        7 => {
            obj.insert("signerKeyId".into(), json!(""));
        }
        8 => {
            let bytes = valid.to_json_bytes();
            let cut = rng.gen_range(1..bytes.len() - 1);
            return bytes[..cut].to_vec();
        }
        9 => return b"[]".to_vec(),
        10 => {
            obj.insert("v".into(), json!(1.5));
        }
        _ => {
            obj.insert("capabilities".into(), json!(["mcp-server", 7]));
        }
    }
    serde_json::to_vec(&value).unwrap()
}
