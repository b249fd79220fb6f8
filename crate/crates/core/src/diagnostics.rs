//! Event counters for the places where the pipeline bends its inputs:
//! covariate clamps, stratum merges, tail fallbacks, guards and weight caps.
//! They are reported with every run; a count near zero is itself a useful
//! signal that the corresponding rule did not shape the estimate.

use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

/// A monotone event counter shareable across threads.
#[derive(Default)]
pub struct Counter(AtomicU64);

impl Counter {
    pub const fn new() -> Self {
        Counter(AtomicU64::new(0))
    }

    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for Counter {
    fn clone(&self) -> Self {
        Counter(AtomicU64::new(self.get()))
    }
}

impl fmt::Debug for Counter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

/// Snapshot of every counter a run produces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub stratum_merges: u64,
    pub lifetable_clamps: u64,
    pub incidence_clamps: u64,
    pub incidence_missing: u64,
    pub incidence_clips: u64,
    pub overall_survival_clamps: u64,
    pub tail_fallbacks: u64,
    pub tail_slope_clips: u64,
    pub interpolation_fallbacks: u64,
    pub prevalence_survival_caps: u64,
    pub monotonicity_guards: u64,
    pub range_clips: u64,
    pub numerator_floors: u64,
    pub weight_caps: u64,
}

impl RunCounters {
    /// Field names and values in a fixed order, for manifests and logs.
    pub fn entries(&self) -> [(&'static str, u64); 14] {
        [
            ("stratum_merges", self.stratum_merges),
            ("lifetable_clamps", self.lifetable_clamps),
            ("incidence_clamps", self.incidence_clamps),
            ("incidence_missing", self.incidence_missing),
            ("incidence_clips", self.incidence_clips),
            ("overall_survival_clamps", self.overall_survival_clamps),
            ("tail_fallbacks", self.tail_fallbacks),
            ("tail_slope_clips", self.tail_slope_clips),
            ("interpolation_fallbacks", self.interpolation_fallbacks),
            ("prevalence_survival_caps", self.prevalence_survival_caps),
            ("monotonicity_guards", self.monotonicity_guards),
            ("range_clips", self.range_clips),
            ("numerator_floors", self.numerator_floors),
            ("weight_caps", self.weight_caps),
        ]
    }

    pub fn merge(&mut self, other: &RunCounters) {
        self.stratum_merges += other.stratum_merges;
        self.lifetable_clamps += other.lifetable_clamps;
        self.incidence_clamps += other.incidence_clamps;
        self.incidence_missing += other.incidence_missing;
        self.incidence_clips += other.incidence_clips;
        self.overall_survival_clamps += other.overall_survival_clamps;
        self.tail_fallbacks += other.tail_fallbacks;
        self.tail_slope_clips += other.tail_slope_clips;
        self.interpolation_fallbacks += other.interpolation_fallbacks;
        self.prevalence_survival_caps += other.prevalence_survival_caps;
        self.monotonicity_guards += other.monotonicity_guards;
        self.range_clips += other.range_clips;
        self.numerator_floors += other.numerator_floors;
        self.weight_caps += other.weight_caps;
    }
}
