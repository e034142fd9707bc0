//! Attested tool-server admission for MCP hosts.
//!
//! A server publishes a signed attestation document at a well-known path.
//! The host verifies it against a pinned trust root and a classification
//! lattice before connecting, then dispatches only exactly allowlisted tool
//! names. Every decision lands in a hash-chained audit log.

pub mod admission;
pub mod audit;
pub mod canonical;
pub mod cli;
pub mod clock;
pub mod conformance;
pub mod gateway;
pub mod lattice;
pub mod sad;
pub mod trustroot;
pub mod wellknown_server;

pub use admission::{Admission, DenyReason, Flavor, Verdict};
pub use audit::{AuditEvent, AuditLog, AuditRecord};
pub use gateway::{Gateway, RegistryEntry, ToolCall};
pub use lattice::ClassificationScheme;
pub use sad::{AttestationDocument, KeyPair};
pub use trustroot::{SignerRecord, TrustRoot, TrustRootContent};
