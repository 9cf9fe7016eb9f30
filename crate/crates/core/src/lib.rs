//! Screening, staged LLM stance classification, inter-rater agreement and
//! trend analytics over corpora of scholarly bibliographic records.
//!
//! The pipeline runs in four steps, each backed by one module:
//!
//! 1. [`corpus`]: ingest, DOI de-duplication, rule-based screening, abstract
//!    recovery and the PRISMA ledger.
//! 2. [`classify`]: pre-screening, stance classification and self-reflection
//!    through the prompt/response machinery in [`gateway`].
//! 3. [`irr`]: Cohen's and Fleiss' kappa, Landis–Koch bands and seeded sampling
//!    for human validation.
//! 4. [`themes`]: theme extraction, reconciliation and two-theme labelling.
//!
//! [`analytics`] turns a classified store into plot-ready tables, and
//! [`store`] persists everything as JSONL so every command can resume.

pub mod analytics;
pub mod classify;
pub mod corpus;
pub mod exec;
pub mod gateway;
pub mod irr;
pub mod labels;
pub mod store;
pub mod themes;

pub use exec::Execution;
pub use labels::{Confidence, PrescreenLabel, StanceLabel};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes.as_ref()))
}
