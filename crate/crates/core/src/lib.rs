//! Net survival estimation for cancer-registry data with population life
//! tables corrected for the cancer patients and cancer deaths they contain.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the command
//! line and the parallel experiment pool live in the `netadjust` crate.
//!
//! Pipeline, bottom-up:
//!
//! - [`registry`]: patient records, strata, Kaplan-Meier and Nelson-Aalen.
//! - [`lifetable`]: annual death probabilities and survival along a Lexis diagonal.
//! - [`incidence`]: incidence rates, prevalence and diagnosis-lag distributions.
//! - [`extrapolation`]: log-linear tails for overall survival and log-linear interpolation.
//! - [`adjustment`]: the discrete integral equation for non-cancer population survival.
//! - [`estimators`]: Pohar-Perme, Ederer I and the crude probability of death.
//! - [`simulation`]: the birth-cohort generator and the bias/rMSE study.

#![cfg_attr(not(test), no_std)]
// Range checks are written `!(x >= lo)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adjustment;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod extrapolation;
pub mod incidence;
pub mod lifetable;
pub mod registry;
pub mod simulation;

pub use error::{Error, Result};
pub use registry::{Demographics, PatientRecord, StratumKey};
