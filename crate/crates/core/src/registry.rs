//! Registry data model: patient records, stratification by covariates at
//! diagnosis, and the per-stratum product-limit and cumulative-hazard curves.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};

/// Maximum number of categorical demographic codes in a key.
pub const MAX_DEMOGRAPHIC_CODES: usize = 4;

/// Ordered tuple of time-invariant categorical codes (sex, race, ...).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Demographics {
    codes: [u16; MAX_DEMOGRAPHIC_CODES],
    len: u8,
}

impl Demographics {
    pub const fn empty() -> Self {
        Demographics {
            codes: [0; MAX_DEMOGRAPHIC_CODES],
            len: 0,
        }
    }

    pub const fn single(code: u16) -> Self {
        let mut codes = [0; MAX_DEMOGRAPHIC_CODES];
        codes[0] = code;
        Demographics { codes, len: 1 }
    }

    /// Returns `None` when more than [`MAX_DEMOGRAPHIC_CODES`] codes are given.
    pub fn from_codes(codes: &[u16]) -> Option<Self> {
        if codes.len() > MAX_DEMOGRAPHIC_CODES {
            return None;
        }
        let mut out = Demographics::empty();
        out.codes[..codes.len()].copy_from_slice(codes);
        out.len = codes.len() as u8;
        Some(out)
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes[..self.len as usize]
    }
}

impl Ord for Demographics {
    fn cmp(&self, other: &Self) -> Ordering {
        self.codes().cmp(other.codes())
    }
}

impl PartialOrd for Demographics {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Demographics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.codes()).finish()
    }
}

/// Covariates that index registry strata and life-table cells.
///
/// Age and calendar year move together: shifting by `s` years adds `s` to
/// both, which walks along a diagonal of the Lexis diagram.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StratumKey {
    pub demographics: Demographics,
    pub age: i32,
    pub year: i32,
}

impl StratumKey {
    pub const fn new(age: i32, year: i32, demographics: Demographics) -> Self {
        StratumKey {
            demographics,
            age,
            year,
        }
    }

    pub fn shifted(&self, s: i32) -> Self {
        StratumKey {
            age: self.age + s,
            year: self.year + s,
            ..*self
        }
    }

    /// Identifies the Lexis diagonal the key lies on: keys on the same
    /// diagonal differ only by a shift.
    pub fn diagonal(&self) -> Diagonal {
        Diagonal {
            demographics: self.demographics,
            offset: self.year - self.age,
        }
    }
}

impl fmt::Debug for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(age {}, year {}, {:?})",
            self.age, self.year, self.demographics
        )
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A birth cohort within one demographic group: `year - age` is constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Diagonal {
    pub demographics: Demographics,
    pub offset: i32,
}

impl Diagonal {
    pub fn at_age(&self, age: i32) -> StratumKey {
        StratumKey::new(age, self.offset + age, self.demographics)
    }
}

/// One registry row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientRecord {
    pub age_diag: i32,
    pub year_diag: i32,
    pub demographics: Demographics,
    /// Years from diagnosis to death or censoring.
    pub time: f64,
    /// `true` for death from any cause, `false` for censoring.
    pub event: bool,
}

impl PatientRecord {
    pub fn new(
        age_diag: i32,
        year_diag: i32,
        demographics: Demographics,
        time: f64,
        event: bool,
    ) -> Result<Self> {
        let record = PatientRecord {
            age_diag,
            year_diag,
            demographics,
            time,
            event,
        };
        record.validate(0)?;
        Ok(record)
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !self.time.is_finite() || self.time < 0.0 {
            return Err(Error::InvalidRecord {
                index,
                reason: "time must be finite and >= 0",
            });
        }
        if self.age_diag < 0 {
            return Err(Error::InvalidRecord {
                index,
                reason: "age at diagnosis must be >= 0",
            });
        }
        Ok(())
    }

    pub fn key(&self) -> StratumKey {
        StratumKey::new(self.age_diag, self.year_diag, self.demographics)
    }
}

/// How covariates are grouped into strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Banding {
    pub age_width: u32,
    pub year_width: u32,
    /// Strata smaller than this are merged into a neighbour before estimation.
    pub min_stratum_size: usize,
}

impl Default for Banding {
    fn default() -> Self {
        Banding {
            age_width: 1,
            year_width: 1,
            min_stratum_size: 10,
        }
    }
}

impl Banding {
    /// Maps a key to its band representative (the lower bound of each band).
    pub fn band(&self, key: &StratumKey) -> StratumKey {
        let aw = self.age_width.max(1) as i32;
        let yw = self.year_width.max(1) as i32;
        StratumKey::new(
            key.age - key.age.rem_euclid(aw),
            key.year - key.year.rem_euclid(yw),
            key.demographics,
        )
    }
}

/// Distinct observed times with risk-set bookkeeping.
///
/// `at_risk[i]` counts subjects with time `>= times[i]`, so deaths at a time
/// are part of that time's risk set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTable {
    pub times: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub deaths: Vec<usize>,
    pub censored: Vec<usize>,
}

impl EventTable {
    /// Builds the table from `(time, event)` pairs. Observations at time 0
    /// leave before any risk set forms and are dropped.
    pub fn from_observations<I>(observations: I) -> Self
    where
        I: IntoIterator<Item = (f64, bool)>,
    {
        let mut obs: Vec<(f64, bool)> =
            observations.into_iter().filter(|(t, _)| *t > 0.0).collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut table = EventTable::default();
        let mut remaining = obs.len();
        let mut i = 0;
        while i < obs.len() {
            let t = obs[i].0;
            let (mut d, mut c) = (0, 0);
            while i < obs.len() && obs[i].0 == t {
                if obs[i].1 {
                    d += 1;
                } else {
                    c += 1;
                }
                i += 1;
            }
            table.times.push(t);
            table.at_risk.push(remaining);
            table.deaths.push(d);
            table.censored.push(c);
            remaining -= d + c;
        }
        table
    }

    pub fn subjects(&self) -> usize {
        self.at_risk.first().copied().unwrap_or(0)
    }

    pub fn total_deaths(&self) -> usize {
        self.deaths.iter().sum()
    }

    /// Largest observed time whose risk set holds at least `min_at_risk` subjects.
    pub fn last_time_with_at_risk(&self, min_at_risk: usize) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.at_risk)
            .rev()
            .find(|(_, &n)| n >= min_at_risk)
            .map(|(&t, _)| t)
    }
}

/// A registry partitioned into strata.
///
/// Every record belongs to exactly one group. Groups that were too small
/// were folded into a neighbour; their keys remain resolvable as aliases.
#[derive(Debug, Clone)]
pub struct Strata {
    banding: Banding,
    groups: BTreeMap<StratumKey, Vec<usize>>,
    aliases: BTreeMap<StratumKey, StratumKey>,
    tables: BTreeMap<StratumKey, EventTable>,
    merges: u64,
}

/// Partitions `records` by banded covariates, merges undersized strata and
/// builds one event table per remaining stratum.
pub fn build_strata(records: &[PatientRecord], banding: Banding) -> Result<Strata> {
    if records.is_empty() {
        return Err(Error::EmptyInput("registry has no records"));
    }
    let mut groups: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        r.validate(i)?;
        groups.entry(banding.band(&r.key())).or_default().push(i);
    }

    let mut aliases: BTreeMap<StratumKey, StratumKey> = BTreeMap::new();
    let mut merges = 0;
    let mut unmergeable: Vec<StratumKey> = Vec::new();
    loop {
        let small = groups
            .iter()
            .find(|(k, v)| v.len() < banding.min_stratum_size && !unmergeable.contains(k))
            .map(|(k, _)| *k);
        let Some(small) = small else { break };
        let Some(target) = merge_target(&groups, &small, &banding) else {
            log::warn!(
                "stratum {small} has {} subjects and no neighbour to merge with",
                groups[&small].len()
            );
            unmergeable.push(small);
            continue;
        };
        log::info!(
            "merging stratum {small} ({} subjects) into {target}",
            groups[&small].len()
        );
        let moved = groups.remove(&small).unwrap_or_default();
        groups
            .get_mut(&target)
            .expect("merge target exists")
            .extend(moved);
        for alias in aliases.values_mut() {
            if *alias == small {
                *alias = target;
            }
        }
        aliases.insert(small, target);
        unmergeable.retain(|k| *k != target);
        merges += 1;
    }

    let tables = groups
        .iter()
        .map(|(k, idx)| {
            let table = EventTable::from_observations(
                idx.iter().map(|&i| (records[i].time, records[i].event)),
            );
            (*k, table)
        })
        .collect();

    Ok(Strata {
        banding,
        groups,
        aliases,
        tables,
        merges,
    })
}

fn merge_target(
    groups: &BTreeMap<StratumKey, Vec<usize>>,
    small: &StratumKey,
    banding: &Banding,
) -> Option<StratumKey> {
    let aw = banding.age_width.max(1) as i32;
    groups
        .keys()
        .filter(|k| *k != small && k.demographics == small.demographics)
        .min_by_key(|k| {
            let d_age = (k.age - small.age).abs();
            let d_year = (k.year - small.year).abs();
            let adjacent = d_year == 0 && d_age == aw;
            (!adjacent, d_age + d_year, k.age, k.year)
        })
        .copied()
}

impl Strata {
    pub fn banding(&self) -> Banding {
        self.banding
    }

    /// Keys of the groups after merging.
    pub fn keys(&self) -> impl Iterator<Item = &StratumKey> {
        self.groups.keys()
    }

    /// Maps any covariate key to the group that holds it, if one does.
    pub fn resolve(&self, key: &StratumKey) -> Option<StratumKey> {
        let banded = self.banding.band(key);
        if self.groups.contains_key(&banded) {
            Some(banded)
        } else {
            self.aliases.get(&banded).copied()
        }
    }

    pub fn members(&self, key: &StratumKey) -> Option<&[usize]> {
        self.resolve(key)
            .and_then(|k| self.groups.get(&k))
            .map(Vec::as_slice)
    }

    pub fn event_table(&self, key: &StratumKey) -> Option<&EventTable> {
        self.resolve(key).and_then(|k| self.tables.get(&k))
    }

    pub fn tables(&self) -> impl Iterator<Item = (&StratumKey, &EventTable)> {
        self.tables.iter()
    }

    pub fn sizes(&self) -> impl Iterator<Item = (&StratumKey, usize)> {
        self.groups.iter().map(|(k, v)| (k, v.len()))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn merges(&self) -> u64 {
        self.merges
    }
}

/// Evaluation of a survival function on `[0, inf)`.
pub trait SurvivalFunction {
    /// Right-continuous value at `t >= 0`.
    fn survival_at(&self, t: f64) -> f64;
}

/// Right-continuous, non-increasing step function with value 1 before the
/// first jump.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepSurvivalCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvivalCurve {
    /// Builds a curve from explicit jumps. Times must be positive and
    /// strictly increasing, values non-increasing within [0, 1].
    pub fn from_steps(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidConfig(
                "step curve needs one value per jump time",
            ));
        }
        let times_ok = times.iter().all(|t| t.is_finite() && *t > 0.0)
            && times.windows(2).all(|w| w[0] < w[1]);
        let values_ok = values.iter().all(|v| (0.0..=1.0).contains(v))
            && values.windows(2).all(|w| w[1] <= w[0]);
        if !times_ok || !values_ok {
            return Err(Error::InvalidConfig(
                "step curve must be non-increasing in [0, 1] with increasing times",
            ));
        }
        Ok(StepSurvivalCurve { times, values })
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x < t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }
}

impl SurvivalFunction for StepSurvivalCurve {
    fn survival_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }
}

/// Free-function form of [`SurvivalFunction::survival_at`].
pub fn survival_at<S: SurvivalFunction + ?Sized>(curve: &S, t: f64) -> f64 {
    curve.survival_at(t)
}

/// Product-limit estimator; jumps only at times with deaths.
pub fn kaplan_meier(table: &EventTable) -> StepSurvivalCurve {
    let mut curve = StepSurvivalCurve::default();
    let mut s = 1.0;
    for ((&t, &n), &d) in table.times.iter().zip(&table.at_risk).zip(&table.deaths) {
        if d == 0 {
            continue;
        }
        s *= 1.0 - d as f64 / n as f64;
        curve.times.push(t);
        curve.values.push(s);
    }
    curve
}

/// Non-decreasing right-continuous step function, 0 before the first jump.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CumulativeHazardCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl CumulativeHazardCurve {
    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }
}

/// Nelson-Aalen estimator: increments of deaths over the number at risk.
pub fn nelson_aalen(table: &EventTable) -> CumulativeHazardCurve {
    let mut curve = CumulativeHazardCurve::default();
    let mut acc = 0.0;
    for ((&t, &n), &d) in table.times.iter().zip(&table.at_risk).zip(&table.deaths) {
        if d == 0 {
            continue;
        }
        acc += d as f64 / n as f64;
        curve.times.push(t);
        curve.values.push(acc);
    }
    curve
}
