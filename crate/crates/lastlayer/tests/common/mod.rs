//! Shared fixtures for the integration test targets: a synthetic posterior
//! with closed-form moments, brute-force metric oracles, a finite-difference
//! gradient checker, and the property suites that both the per-module
//! invariant targets and the acceptance gate execute.
//!
//! Every integration target compiles its own copy of this module; not every
//! target uses every item.
#![allow(dead_code)]

pub mod brute;
pub mod fd;
pub mod gaussian;
pub mod props;
