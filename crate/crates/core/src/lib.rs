//! Robust stability certificates for networks of LTI agents coupled through
//! uncertain links.
//!
//! The crate assembles localized integral-quadratic-constraint certificates
//! over an edge partition of the network graph, turns each into a KYP-lemma
//! LMI, and solves the resulting semidefinite programs.

pub mod graph;
pub mod lti;
pub mod multiplier;
pub mod certify;
pub mod sweep;
pub mod validate;
