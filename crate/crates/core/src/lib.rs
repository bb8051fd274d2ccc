//! Execution-grounded credit assignment for critic-free policy gradients
//! over generated programs.
//!
//! Candidates written in MiniLang, a small indentation-structured language,
//! are parsed, checked against structural constraints, compared with a
//! canonical reference through a comparability gate, and executed under
//! statement-level tracing. Samples are routed to one of four failure modes
//! and each sample's group-relative advantage is turned into a token-level
//! advantage vector: spread uniformly, or concentrated on a syntax error
//! span or on the statement where execution first diverges from the
//! reference.

pub mod cfg;
pub mod constraints;
pub mod credit;
pub mod divergence;
pub mod exec;
pub mod pipeline;
pub mod program;
pub mod sim;
pub mod syntax;

pub use program::Program;
