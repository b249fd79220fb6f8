use core::fmt;

use crate::registry::StratumKey;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptyInput(&'static str),
    InvalidRecord {
        index: usize,
        reason: &'static str,
    },
    InvalidProbability {
        what: &'static str,
        key: StratumKey,
        value: f64,
    },
    DuplicateCell {
        what: &'static str,
        key: StratumKey,
    },
    MissingCell {
        what: &'static str,
        key: StratumKey,
    },
    UnknownDemographics {
        what: &'static str,
        key: StratumKey,
    },
    InfiniteHazard {
        key: StratumKey,
    },
    ZeroPersonYears {
        key: StratumKey,
        diagnoses: f64,
    },
    PrevalenceNotBelowOne {
        key: StratumKey,
        value: f64,
    },
    Extrapolation {
        reason: &'static str,
    },
    SmallDenominator {
        key: StratumKey,
        t: usize,
        value: f64,
    },
    NonPositiveNumerator {
        key: StratumKey,
        t: usize,
        value: f64,
    },
    MissingProvider {
        key: StratumKey,
    },
    InvalidConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::InvalidRecord { index, reason } => {
                write!(f, "invalid patient record #{index}: {reason}")
            }
            Error::InvalidProbability { what, key, value } => {
                write!(f, "{what} value {value} out of range at {key}")
            }
            Error::DuplicateCell { what, key } => write!(f, "duplicate {what} cell at {key}"),
            Error::MissingCell { what, key } => write!(f, "missing {what} cell at {key}"),
            Error::UnknownDemographics { what, key } => {
                write!(f, "{what} has no entries for the demographics of {key}")
            }
            Error::InfiniteHazard { key } => {
                write!(f, "death probability 1 gives an infinite hazard at {key}")
            }
            Error::ZeroPersonYears { key, diagnoses } => {
                write!(f, "{diagnoses} diagnoses but zero person-years at {key}")
            }
            Error::PrevalenceNotBelowOne { key, value } => write!(
                f,
                "estimated prevalence {value} is not below 1 at {key}; incidence and survival inputs are inconsistent"
            ),
            Error::Extrapolation { reason } => write!(f, "tail extrapolation failed: {reason}"),
            Error::SmallDenominator { key, t, value } => write!(
                f,
                "integral-equation denominator r({t}) = {value} is below the 1e-6 floor at {key}"
            ),
            Error::NonPositiveNumerator { key, t, value } => write!(
                f,
                "life-table survival net of prevalent cases is {value} (not positive) at {key}, t = {t}"
            ),
            Error::MissingProvider { key } => {
                write!(f, "no population survival available for {key}")
            }
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
        }
    }
}

impl core::error::Error for Error {}
