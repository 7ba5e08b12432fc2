//! Matched difference-in-differences for inventor retention after acquisitions.
//!
//! The crate rebuilds an event-study pipeline over patent data:
//!
//! 1. [`corpus`] loads patent and deal files and resolves post-deal assignee aliases.
//! 2. [`cohort`] lays out recruitment / before / after windows around each deal and
//!    attributes inventors to firms.
//! 3. [`matching`] pairs treated firms with similar never-acquired firms, then
//!    treated inventors one-to-one with control inventors.
//! 4. [`panel`] turns the pairs into a two-period inventor panel (Active, Stay, covariates).
//! 5. [`estimators`] runs OLS, probit, two-step Heckman and the DiD variants on that panel.
//! 6. [`geo`] computes relocation diagnostics; [`synth`] generates corpora with known
//!    treatment effects so the whole chain can be checked end to end.
//!
//! [`pipeline`] wires the stages together behind the subcommands of the
//! `inventor-did` binary.

pub mod cohort;
pub mod corpus;
pub mod error;
pub mod estimators;
pub mod geo;
pub mod matching;
pub mod panel;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
