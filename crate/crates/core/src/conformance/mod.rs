//! Conformance vectors and the seeded adversarial campaign.

pub mod campaign;
pub mod corpus;
pub mod vectors;

pub use campaign::{run_campaign, CampaignReport};
pub use corpus::{
    corpus_from_jsonl, corpus_to_jsonl, generate_corpus, CampaignFixture, Category, CorpusCase,
    ForgeryKind, DEFAULT_ALLOWLIST,
};
pub use vectors::{
    build_vectors, export_vectors, run_vectors, ConformanceReport, ConformanceVector,
    ProductionVerifier, VectorVerifier,
};
