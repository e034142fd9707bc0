//! Classification schemes: totally ordered level ladders with aliases.
//!
//! A server level meets a required level iff its rank is at least the
//! required rank. Names and aliases match ASCII case-insensitively.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("scheme JSON is malformed: {0}")]
    Malformed(String),
    #[error("scheme `{0}` has no levels")]
    Empty(String),
    #[error("ranks must be contiguous from 0; found {found:?}")]
    NonContiguousRanks { found: Vec<u32> },
    #[error("rank {0} is defined more than once")]
    DuplicateRank(u32),
    #[error("name `{name}` resolves to both rank {first} and rank {second}")]
    AmbiguousName { name: String, first: u32, second: u32 },
    #[error("level names must not be empty")]
    EmptyName,
    #[error("unknown level `{0}`")]
    UnknownLevel(String),
    #[error("unknown built-in scheme `{0}`")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassificationLevel {
    pub rank: u32,
    pub canonical_name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl ClassificationLevel {
    pub fn new(rank: u32, canonical_name: &str, aliases: &[&str]) -> Self {
        Self {
            rank,
            canonical_name: canonical_name.to_string(),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
        }
    }

    fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical_name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }
}

/// A validated ladder. Construct through [`ClassificationScheme::new`],
/// [`load_scheme`] or [`builtin_schemes`]; each enforces contiguous ranks and
/// unambiguous names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassificationScheme {
    name: String,
    levels: Vec<ClassificationLevel>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    compartments: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    markings: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SchemeFile {
    name: String,
    levels: Vec<ClassificationLevel>,
    #[serde(default)]
    compartments: Vec<String>,
    #[serde(default)]
    markings: Vec<String>,
}

impl ClassificationScheme {
    pub fn new(
        name: impl Into<String>,
        mut levels: Vec<ClassificationLevel>,
        compartments: Vec<String>,
        markings: Vec<String>,
    ) -> Result<Self, LatticeError> {
        let name = name.into();
        if levels.is_empty() {
            return Err(LatticeError::Empty(name));
        }
        levels.sort_by_key(|l| l.rank);
        for pair in levels.windows(2) {
            if pair[0].rank == pair[1].rank {
                return Err(LatticeError::DuplicateRank(pair[0].rank));
            }
        }
        if levels.iter().enumerate().any(|(i, l)| l.rank as usize != i) {
            return Err(LatticeError::NonContiguousRanks {
                found: levels.iter().map(|l| l.rank).collect(),
            });
        }

        let mut index = HashMap::new();
        for level in &levels {
            for n in level.names() {
                if n.is_empty() {
                    return Err(LatticeError::EmptyName);
                }
                let key = n.to_ascii_lowercase();
                match index.get(&key) {
                    Some(&existing) if existing != level.rank => {
                        return Err(LatticeError::AmbiguousName {
                            name: n.to_string(),
                            first: existing,
                            second: level.rank,
                        })
                    }
                    _ => {
                        index.insert(key, level.rank);
                    }
                }
            }
        }

        Ok(Self {
            name,
            levels,
            compartments,
            markings,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Levels in ascending rank order.
    pub fn levels(&self) -> &[ClassificationLevel] {
        &self.levels
    }

    pub fn compartments(&self) -> &[String] {
        &self.compartments
    }

    pub fn markings(&self) -> &[String] {
        &self.markings
    }

    pub fn resolve(&self, name: &str) -> Option<u32> {
        self.index.get(&name.to_ascii_lowercase()).copied()
    }

    pub fn level(&self, rank: u32) -> Option<&ClassificationLevel> {
        self.levels.get(rank as usize)
    }

    pub fn canonical_name(&self, name: &str) -> Option<&str> {
        self.resolve(name)
            .and_then(|r| self.level(r))
            .map(|l| l.canonical_name.as_str())
    }

    pub fn highest(&self) -> &ClassificationLevel {
        self.levels.last().expect("schemes are never empty")
    }

    /// `server_level` dominates `required_level`.
    pub fn meets(&self, server_level: &str, required_level: &str) -> Result<bool, LatticeError> {
        let s = self
            .resolve(server_level)
            .ok_or_else(|| LatticeError::UnknownLevel(server_level.to_string()))?;
        let r = self
            .resolve(required_level)
            .ok_or_else(|| LatticeError::UnknownLevel(required_level.to_string()))?;
        Ok(s >= r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schemes always serialize")
    }
}

/// Parse and validate a custom scheme.
pub fn load_scheme(raw: &[u8]) -> Result<ClassificationScheme, LatticeError> {
    let file: SchemeFile =
        serde_json::from_slice(raw).map_err(|e| LatticeError::Malformed(e.to_string()))?;
    ClassificationScheme::new(file.name, file.levels, file.compartments, file.markings)
}

fn ladder(names: &[(&str, &[&str])]) -> Vec<ClassificationLevel> {
    names
        .iter()
        .enumerate()
        .map(|(rank, (name, aliases))| ClassificationLevel::new(rank as u32, name, aliases))
        .collect()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn default_scheme() -> ClassificationScheme {
    ClassificationScheme::new(
        "default",
        ladder(&[
            ("PUBLIC", &[]),
            ("INTERNAL", &["CUI"]),
            ("CONFIDENTIAL", &[]),
            ("RESTRICTED", &["SECRET"]),
            ("RESTRICTED-PLUS", &[]),
            ("SCI", &[]),
        ]),
        vec![],
        vec![],
    )
    .expect("built-in scheme is valid")
}

pub fn us_government_scheme() -> ClassificationScheme {
    ClassificationScheme::new(
        "us-government",
        ladder(&[
            ("UNCLASSIFIED", &[]),
            ("CUI", &[]),
            ("CONFIDENTIAL", &[]),
            ("SECRET", &[]),
            ("TOP SECRET", &[]),
            ("TS//SCI", &[]),
        ]),
        vec![],
        strings(&["NOFORN"]),
    )
    .expect("built-in scheme is valid")
}

pub fn healthcare_hipaa_scheme() -> ClassificationScheme {
    ClassificationScheme::new(
        "healthcare-hipaa",
        ladder(&[
            ("PUBLIC", &[]),
            ("INTERNAL", &[]),
            ("PHI", &[]),
            ("SENSITIVE-PHI", &[]),
            ("RESEARCH-EMBARGOED", &[]),
        ]),
        strings(&["MENTAL-HEALTH", "GENETICS"]),
        strings(&["BAA-COVERED"]),
    )
    .expect("built-in scheme is valid")
}

pub fn financial_services_scheme() -> ClassificationScheme {
    ClassificationScheme::new(
        "financial-services",
        ladder(&[
            ("PUBLIC", &[]),
            ("INTERNAL", &[]),
            ("CONFIDENTIAL", &[]),
            ("MNPI", &[]),
        ]),
        strings(&["M_AND_A"]),
        vec![],
    )
    .expect("built-in scheme is valid")
}

pub fn generic_three_tier_scheme() -> ClassificationScheme {
    ClassificationScheme::new(
        "generic-3-tier",
        ladder(&[("LOW", &[]), ("MEDIUM", &[]), ("HIGH", &[])]),
        vec![],
        vec![],
    )
    .expect("built-in scheme is valid")
}

pub fn builtin_schemes() -> Vec<ClassificationScheme> {
    vec![
        default_scheme(),
        us_government_scheme(),
        healthcare_hipaa_scheme(),
        financial_services_scheme(),
        generic_three_tier_scheme(),
    ]
}

pub fn builtin_scheme(name: &str) -> Result<ClassificationScheme, LatticeError> {
    builtin_schemes()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| LatticeError::UnknownScheme(name.to_string()))
}
