//! Overall survival beyond the end of follow-up, and log-linear
//! interpolation between annual grid points.
//!
//! A stratum's Kaplan-Meier curve is trusted up to a cutoff `tau`, the last
//! observed time with a large enough risk set. Past the cutoff the curve
//! continues as `exp(-g0 - g1 t)`, fitted by least squares to `-log S` at the
//! last few integer times before the cutoff.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::diagnostics::Counter;
use crate::error::{Error, Result};
use crate::registry::{
    kaplan_meier, EventTable, StepSurvivalCurve, Strata, StratumKey, SurvivalFunction,
};

/// Overall survival of patients diagnosed with covariates `key`, `t` years
/// after diagnosis.
pub trait OverallSurvival {
    fn overall_survival(&self, key: &StratumKey, t: f64) -> f64;
}

impl<F> OverallSurvival for F
where
    F: Fn(&StratumKey, f64) -> f64,
{
    fn overall_survival(&self, key: &StratumKey, t: f64) -> f64 {
        self(key, t)
    }
}

/// How the tail is fitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailConfig {
    /// Number of anchor points `H`.
    pub anchor_points: usize,
    /// Smallest risk set at which the curve is still trusted.
    pub min_at_risk: usize,
    /// The same bound as a share of the stratum's initial size; the larger
    /// of the two applies.
    pub min_at_risk_fraction: f64,
}

impl TailConfig {
    fn risk_set_floor(&self, initial: usize) -> usize {
        let share = libm::ceil(self.min_at_risk_fraction * initial as f64) as usize;
        self.min_at_risk.max(share)
    }
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            anchor_points: 4,
            min_at_risk: 5,
            min_at_risk_fraction: 0.2,
        }
    }
}

/// The last `h` integer times in `[0, tau]` where `curve` is positive.
///
/// Fewer are returned when fewer exist; fewer than two is an error.
pub fn select_anchor_points(curve: &StepSurvivalCurve, tau: f64, h: usize) -> Result<Vec<f64>> {
    if h < 2 {
        return Err(Error::InvalidConfig(
            "at least two anchor points are needed",
        ));
    }
    if !(tau >= 0.0) {
        return Err(Error::Extrapolation {
            reason: "cutoff must be >= 0",
        });
    }
    let last = libm::floor(tau) as i64;
    let mut anchors: Vec<f64> = (0..=last)
        .rev()
        .map(|k| k as f64)
        .filter(|&t| curve.survival_at(t) > 0.0)
        .take(h)
        .collect();
    if anchors.len() < 2 {
        return Err(Error::Extrapolation {
            reason: "fewer than two positive integer points before the cutoff",
        });
    }
    anchors.reverse();
    Ok(anchors)
}

/// Coefficients of the tail `exp(-intercept - slope * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub intercept: f64,
    pub slope: f64,
    /// The least-squares slope was negative and was replaced by 0.
    pub slope_clipped: bool,
}

impl TailFit {
    pub fn value_at(&self, t: f64) -> f64 {
        libm::exp(-self.intercept - self.slope * t)
    }
}

/// Ordinary least squares of `-log S(t)` on `t` over the anchors.
pub fn fit_tail<S: SurvivalFunction + ?Sized>(curve: &S, anchors: &[f64]) -> Result<TailFit> {
    let points: Vec<(f64, f64)> = anchors
        .iter()
        .map(|&t| (t, -libm::log(curve.survival_at(t))))
        .collect();
    fit_log_linear(&points)
}

fn fit_log_linear(points: &[(f64, f64)]) -> Result<TailFit> {
    if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::Extrapolation {
            reason: "survival must be positive at every anchor",
        });
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - t_mean) * (p.0 - t_mean)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Extrapolation {
            reason: "anchor times are all equal",
        });
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - t_mean) * (p.1 - y_mean)).sum();
    let slope = sxy / sxx;
    if slope < 0.0 {
        log::warn!("tail slope {slope} is negative; clipped to 0");
        return Ok(TailFit {
            intercept: y_mean,
            slope: 0.0,
            slope_clipped: true,
        });
    }
    Ok(TailFit {
        intercept: y_mean - slope * t_mean,
        slope,
        slope_clipped: false,
    })
}

/// A step survival curve continued past its cutoff by a fitted tail.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSurvival {
    base: StepSurvivalCurve,
    cutoff: f64,
    at_cutoff: f64,
    /// `None` when no tail could be fitted; the value at the cutoff is then
    /// carried forward.
    tail: Option<TailFit>,
}

impl ExtendedSurvival {
    pub fn new(base: StepSurvivalCurve, cutoff: f64, anchor_points: usize) -> Self {
        let at_cutoff = base.survival_at(cutoff);
        let tail = select_anchor_points(&base, cutoff, anchor_points)
            .and_then(|anchors| fit_tail(&base, &anchors));
        let tail = match tail {
            Ok(fit) => Some(fit),
            Err(e) => {
                log::info!("{e}; carrying S({cutoff}) = {at_cutoff} forward");
                None
            }
        };
        ExtendedSurvival {
            base,
            cutoff,
            at_cutoff,
            tail,
        }
    }

    /// Kaplan-Meier of `table`, cut off at the last time whose risk set
    /// meets the configured floor.
    pub fn from_event_table(table: &EventTable, config: TailConfig) -> Self {
        let initial = table.at_risk.first().copied().unwrap_or(0);
        let cutoff = table
            .last_time_with_at_risk(config.risk_set_floor(initial))
            .or_else(|| table.times.last().copied())
            .unwrap_or(0.0);
        Self::new(kaplan_meier(table), cutoff, config.anchor_points)
    }

    pub fn base(&self) -> &StepSurvivalCurve {
        &self.base
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn tail(&self) -> Option<&TailFit> {
        self.tail.as_ref()
    }
}

impl SurvivalFunction for ExtendedSurvival {
    fn survival_at(&self, t: f64) -> f64 {
        if t <= self.cutoff {
            return self.base.survival_at(t);
        }
        match &self.tail {
            Some(fit) => fit.value_at(t).min(self.at_cutoff),
            None => self.at_cutoff,
        }
    }
}

/// Extended value at `t`.
pub fn extended_survival_at(ext: &ExtendedSurvival, t: f64) -> f64 {
    ext.survival_at(t)
}

/// Log-linear interpolation of `values` given at t = 0, 1, ..., K.
///
/// Exact at grid points. A zero right endpoint is replaced by the geometric
/// decay of the previous interval; past K the last interval's decay is
/// extended.
pub fn loglinear_interpolate(values: &[f64], t: f64) -> f64 {
    interpolate(values, t).0
}

fn interpolate(values: &[f64], t: f64) -> (f64, bool) {
    let k_max = values.len() - 1;
    if t <= 0.0 {
        return (values[0], false);
    }
    if k_max == 0 {
        return (values[0], false);
    }
    let whole = libm::floor(t);
    if whole == t && (whole as usize) <= k_max {
        return (values[whole as usize], false);
    }
    let lo = (whole as usize).min(k_max - 1);
    let frac = t - lo as f64;
    let (a, b) = (values[lo], values[lo + 1]);
    if a <= 0.0 {
        return (0.0, false);
    }
    if b > 0.0 {
        return (a * libm::pow(b / a, frac), false);
    }
    let ratio = if lo >= 1 && values[lo - 1] > 0.0 {
        a / values[lo - 1]
    } else {
        0.0
    };
    log::debug!(
        "zero grid value at {}; using the previous interval's decay",
        lo + 1
    );
    (a * libm::pow(ratio, frac), true)
}

/// Survival on an annual grid with log-linear interpolation in between.
#[derive(Debug, Clone)]
pub struct GridSurvival {
    values: Vec<f64>,
    fallbacks: Counter,
}

impl GridSurvival {
    /// `values[0]` must be 1.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&1.0) {
            return Err(Error::InvalidConfig("grid survival must start at 1"));
        }
        Ok(GridSurvival {
            values,
            fallbacks: Counter::new(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn fallback_count(&self) -> u64 {
        self.fallbacks.get()
    }

    /// `-log S(t)`, piecewise linear between grid points.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        -libm::log(self.survival_at(t))
    }
}

impl SurvivalFunction for GridSurvival {
    fn survival_at(&self, t: f64) -> f64 {
        let (v, fell_back) = interpolate(&self.values, t);
        if fell_back {
            self.fallbacks.bump();
        }
        v
    }
}

/// Extended Kaplan-Meier curves for every stratum of a registry.
///
/// Lookups for covariates outside the registry are banded, clamped into
/// the registry's age and year range, and finally sent to the nearest
/// stratum with the same demographics.
#[derive(Debug, Clone)]
pub struct OverallSurvivalSet {
    strata: Strata,
    curves: BTreeMap<StratumKey, ExtendedSurvival>,
    ages: (i32, i32),
    years: (i32, i32),
    clamps: Counter,
    fallbacks: u64,
    slope_clips: u64,
}

impl OverallSurvivalSet {
    pub fn new(strata: Strata, config: TailConfig) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::EmptyInput("no strata"));
        }
        let curves: BTreeMap<StratumKey, ExtendedSurvival> = strata
            .tables()
            .map(|(k, table)| (*k, ExtendedSurvival::from_event_table(table, config)))
            .collect();
        let fallbacks = curves.values().filter(|c| c.tail.is_none()).count() as u64;
        let slope_clips = curves
            .values()
            .filter(|c| c.tail.is_some_and(|f| f.slope_clipped))
            .count() as u64;
        let ages = min_max(strata.keys().map(|k| k.age));
        let years = min_max(strata.keys().map(|k| k.year));
        Ok(OverallSurvivalSet {
            strata,
            curves,
            ages,
            years,
            clamps: Counter::new(),
            fallbacks,
            slope_clips,
        })
    }

    pub fn strata(&self) -> &Strata {
        &self.strata
    }

    pub fn curves(&self) -> impl Iterator<Item = (&StratumKey, &ExtendedSurvival)> {
        self.curves.iter()
    }

    /// Lookups that needed clamping or a nearest-stratum fallback.
    pub fn clamp_count(&self) -> u64 {
        self.clamps.get()
    }

    /// Strata whose tail could not be fitted.
    pub fn tail_fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn slope_clips(&self) -> u64 {
        self.slope_clips
    }

    /// The stratum whose curve serves `key`.
    pub fn stratum_for(&self, key: &StratumKey) -> StratumKey {
        if let Some(k) = self.strata.resolve(key) {
            return k;
        }
        self.clamps.bump();
        let clamped = StratumKey::new(
            key.age.clamp(self.ages.0, self.ages.1),
            key.year.clamp(self.years.0, self.years.1),
            key.demographics,
        );
        if let Some(k) = self.strata.resolve(&clamped) {
            return k;
        }
        *self
            .curves
            .keys()
            .min_by_key(|k| {
                let distance = (k.age - clamped.age).abs() + (k.year - clamped.year).abs();
                (k.demographics != clamped.demographics, distance)
            })
            .expect("set is not empty")
    }

    pub fn curve_for(&self, key: &StratumKey) -> &ExtendedSurvival {
        &self.curves[&self.stratum_for(key)]
    }
}

impl OverallSurvival for OverallSurvivalSet {
    fn overall_survival(&self, key: &StratumKey, t: f64) -> f64 {
        self.curve_for(key).survival_at(t)
    }
}

fn min_max(values: impl Iterator<Item = i32>) -> (i32, i32) {
    values.fold((i32::MAX, i32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
