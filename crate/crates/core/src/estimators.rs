//! Pohar-Perme, Ederer I and crude probability of death, each taking the
//! population survival from a pluggable provider.
//!
//! Population survival is handled on an annual grid with a constant hazard
//! inside each year, so every expected-hazard integral between observed
//! times has a closed form.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::adjustment::AdjustedPopulationSurvival;
use crate::error::{Error, Result};
use crate::extrapolation::loglinear_interpolate;
use crate::lifetable::LifeTable;
use crate::registry::{PatientRecord, StratumKey};

/// Population survival below this is floored when forming weights, which
/// caps the weights at 1e6.
pub const MIN_WEIGHT_SURVIVAL: f64 = 1e-6;

/// Population survival for a patient with covariates `key` at diagnosis.
pub trait PopulationSurvival {
    /// Values at t = 0..=horizon after diagnosis; the hazard is constant
    /// between consecutive points.
    fn annual_survival(&self, key: &StratumKey, horizon: usize) -> Result<Vec<f64>>;
}

/// The life-table cohort survival along the patient's diagonal.
impl PopulationSurvival for LifeTable {
    fn annual_survival(&self, key: &StratumKey, horizon: usize) -> Result<Vec<f64>> {
        Ok(self.diagonal_survival(key, horizon)?.values)
    }
}

/// The adjusted non-cancer survival; past its horizon the last year's
/// hazard is carried on.
impl PopulationSurvival for AdjustedPopulationSurvival {
    fn annual_survival(&self, key: &StratumKey, horizon: usize) -> Result<Vec<f64>> {
        let grid = self.grid(key).ok_or(Error::MissingProvider { key: *key })?;
        let values = grid.values();
        Ok((0..=horizon)
            .map(|t| {
                values
                    .get(t)
                    .copied()
                    .unwrap_or_else(|| loglinear_interpolate(values, t as f64))
            })
            .collect())
    }
}

/// No population mortality at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPopulationMortality;

impl PopulationSurvival for NoPopulationMortality {
    fn annual_survival(&self, _key: &StratumKey, horizon: usize) -> Result<Vec<f64>> {
        Ok(vec![1.0; horizon + 1])
    }
}

/// Piecewise-exponential survival from annual values.
#[derive(Debug, Clone)]
struct AnnualCurve {
    values: Vec<f64>,
}

impl AnnualCurve {
    fn survival(&self, t: f64) -> f64 {
        loglinear_interpolate(&self.values, t)
    }

    fn hazard(&self, t: f64) -> f64 {
        let k = (libm::floor(t) as usize).min(self.values.len() - 2);
        let (a, b) = (self.values[k], self.values[k + 1]);
        if a <= 0.0 {
            0.0
        } else if b <= 0.0 {
            f64::INFINITY
        } else {
            libm::log(a / b)
        }
    }

    fn weight(&self, t: f64) -> f64 {
        1.0 / self.survival(t).max(MIN_WEIGHT_SURVIVAL)
    }

    fn cumulative_hazard(&self, t: f64) -> f64 {
        -libm::log(self.survival(t).max(f64::MIN_POSITIVE))
    }
}

/// Records grouped by covariates, with the follow-up sorted by time.
struct Cohort {
    curves: Vec<AnnualCurve>,
    sizes: Vec<usize>,
    /// `(time, group, event)`, times > 0, deaths first at tied times.
    observations: Vec<(f64, usize, bool)>,
    /// Observed times plus every whole year up to the last one.
    grid: Vec<f64>,
}

impl Cohort {
    fn new<P: PopulationSurvival + ?Sized>(
        records: &[PatientRecord],
        provider: &P,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("registry has no records"));
        }
        let mut groups: BTreeMap<StratumKey, usize> = BTreeMap::new();
        let mut member = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(Error::InvalidRecord {
                    index: i,
                    reason: "time must be finite and >= 0",
                });
            }
            let next = groups.len();
            member.push(*groups.entry(r.key()).or_insert(next));
        }
        let max_time = records.iter().map(|r| r.time).fold(0.0, f64::max);
        let horizon = libm::ceil(max_time) as usize + 1;
        let mut curves = vec![AnnualCurve { values: Vec::new() }; groups.len()];
        for (key, &g) in &groups {
            curves[g] = AnnualCurve {
                values: provider.annual_survival(key, horizon)?,
            };
        }
        let mut sizes = vec![0; groups.len()];
        for &g in &member {
            sizes[g] += 1;
        }
        let mut observations: Vec<(f64, usize, bool)> = records
            .iter()
            .zip(&member)
            .filter(|(r, _)| r.time > 0.0)
            .map(|(r, &g)| (r.time, g, r.event))
            .collect();
        observations.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.2.cmp(&a.2)));

        let mut grid: Vec<f64> = observations.iter().map(|o| o.0).collect();
        grid.extend((1..=libm::ceil(max_time) as usize).map(|k| k as f64));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Ok(Cohort {
            curves,
            sizes,
            observations,
            grid,
        })
    }

    /// Initial risk sets, excluding observations at time 0.
    fn initial_at_risk(&self) -> Vec<usize> {
        let mut at_risk = vec![0; self.sizes.len()];
        for o in &self.observations {
            at_risk[o.1] += 1;
        }
        at_risk
    }

    /// Walks the time grid. At each grid time `u` the callback sees the risk
    /// set on `(previous, u]` and the deaths at `u`; observations at `u`
    /// leave the risk set afterwards.
    fn walk(
        &self,
        mut step: impl FnMut(f64, f64, &[usize], &[(usize, usize)]) -> Result<()>,
    ) -> Result<()> {
        let mut at_risk = self.initial_at_risk();
        let mut prev = 0.0;
        let mut i = 0;
        let mut deaths: Vec<(usize, usize)> = Vec::new();
        for &u in &self.grid {
            deaths.clear();
            let start = i;
            while i < self.observations.len() && self.observations[i].0 == u {
                let (_, g, event) = self.observations[i];
                if event {
                    match deaths.last_mut() {
                        Some((last, d)) if *last == g => *d += 1,
                        _ => deaths.push((g, 1)),
                    }
                }
                i += 1;
            }
            step(prev, u, &at_risk, &deaths)?;
            for o in &self.observations[start..i] {
                at_risk[o.1] -= 1;
            }
            prev = u;
        }
        Ok(())
    }
}

/// A cumulative excess (or relative) hazard on a time grid, kept as its
/// observed and expected parts.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSurvivalEstimate {
    /// Observed times and whole years up to the end of follow-up.
    pub times: Vec<f64>,
    /// Cumulative event term.
    pub observed: Vec<f64>,
    /// Cumulative expected-hazard term.
    pub expected: Vec<f64>,
    /// Intervals where the weight cap was active.
    pub capped_intervals: u64,
}

impl NetSurvivalEstimate {
    fn with_capacity(n: usize) -> Self {
        NetSurvivalEstimate {
            times: Vec::with_capacity(n),
            observed: Vec::with_capacity(n),
            expected: Vec::with_capacity(n),
            capped_intervals: 0,
        }
    }

    /// Cumulative hazard at grid point `i`.
    pub fn hazard(&self, i: usize) -> f64 {
        self.observed[i] - self.expected[i]
    }

    /// Step evaluation: the value at the last grid time `<= t`.
    pub fn cumulative_hazard_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.hazard(idx - 1)
        }
    }

    pub fn survival_at(&self, t: f64) -> f64 {
        libm::exp(-self.cumulative_hazard_at(t))
    }
}

/// Pohar-Perme net survival.
///
/// Each subject is weighted by the inverse of its population survival.
/// With the risk set fixed between observed times and
/// `D(u) = sum_i Y_i / S_P,i(u)`, the expected term over such an interval
/// is exactly `log D(b) - log D(a)`. Where the weight cap binds this no
/// longer holds and the interval is integrated numerically.
pub fn pohar_perme<P: PopulationSurvival + ?Sized>(
    records: &[PatientRecord],
    provider: &P,
) -> Result<NetSurvivalEstimate> {
    let cohort = Cohort::new(records, provider)?;
    let mut out = NetSurvivalEstimate::with_capacity(cohort.grid.len());
    let (mut observed, mut expected) = (0.0, 0.0);
    let curves = &cohort.curves;
    let mut active: Vec<usize> = Vec::new();
    cohort.walk(|a, b, at_risk, deaths| {
        active.clear();
        active.extend((0..at_risk.len()).filter(|&g| at_risk[g] > 0));
        if !active.is_empty() {
            let capped = active
                .iter()
                .any(|&g| curves[g].survival(b) < MIN_WEIGHT_SURVIVAL);
            if capped {
                out.capped_intervals += 1;
                expected += weighted_hazard_integral(curves, &active, at_risk, a, b);
            } else {
                let d = |u: f64| -> f64 {
                    active
                        .iter()
                        .map(|&g| at_risk[g] as f64 / curves[g].survival(u))
                        .sum()
                };
                expected += libm::log(d(b)) - libm::log(d(a));
            }
        }
        if !deaths.is_empty() {
            let denom: f64 = active
                .iter()
                .map(|&g| at_risk[g] as f64 * curves[g].weight(b))
                .sum();
            if denom > 0.0 {
                let num: f64 = deaths
                    .iter()
                    .map(|&(g, d)| d as f64 * curves[g].weight(b))
                    .sum();
                observed += num / denom;
            } else {
                log::warn!("empty risk set at t = {b}; deaths skipped");
            }
        }
        out.times.push(b);
        out.observed.push(observed);
        out.expected.push(expected);
        Ok(())
    })?;
    Ok(out)
}

/// Composite Simpson rule for the weighted population hazard over `(a, b)`,
/// split at whole years so the hazard is constant on each piece.
fn weighted_hazard_integral(
    curves: &[AnnualCurve],
    active: &[usize],
    at_risk: &[usize],
    a: f64,
    b: f64,
) -> f64 {
    const PANELS: usize = 32;
    let integrand = |u: f64| -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &g in active {
            let w = at_risk[g] as f64 * curves[g].weight(u);
            let h = curves[g].hazard(u);
            if h.is_finite() {
                num += w * h;
            }
            den += w;
        }
        num / den
    };
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = (libm::floor(lo) + 1.0).min(b);
        let step = (hi - lo) / PANELS as f64;
        // Nudge the ends inwards so the hazard is read inside the piece.
        let eps = step * 1e-9;
        let mut acc = integrand(lo + eps) + integrand(hi - eps);
        for j in 1..PANELS {
            let u = lo + j as f64 * step;
            acc += integrand(u) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        total += acc * step / 3.0;
        lo = hi;
    }
    total
}

/// Ederer I relative survival.
///
/// The expected term averages population survival over every patient
/// irrespective of follow-up, so its cumulative value is
/// `-log(mean_j S_P,j(t))`.
pub fn ederer1<P: PopulationSurvival + ?Sized>(
    records: &[PatientRecord],
    provider: &P,
) -> Result<NetSurvivalEstimate> {
    let cohort = Cohort::new(records, provider)?;
    let n: usize = cohort.sizes.iter().sum();
    let mut out = NetSurvivalEstimate::with_capacity(cohort.grid.len());
    let mut observed = 0.0;
    cohort.walk(|_, b, at_risk, deaths| {
        let y: usize = at_risk.iter().sum();
        let d: usize = deaths.iter().map(|p| p.1).sum();
        if d > 0 {
            observed += d as f64 / y as f64;
        }
        let mean: f64 = cohort
            .sizes
            .iter()
            .zip(&cohort.curves)
            .map(|(&m, c)| m as f64 * c.survival(b))
            .sum::<f64>()
            / n as f64;
        out.times.push(b);
        out.observed.push(observed);
        out.expected.push(-libm::log(mean));
        Ok(())
    })?;
    Ok(out)
}

/// Cumulative crude probabilities of death from cancer and from other
/// causes, on the same grid as the net-survival estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct CrudeProbability {
    pub times: Vec<f64>,
    /// Cancer deaths, possibly locally decreasing.
    pub cancer: Vec<f64>,
    /// Non-cancer deaths.
    pub other: Vec<f64>,
    /// Least-squares non-decreasing fit to `cancer`.
    pub cancer_isotonic: Vec<f64>,
    /// All-cause survival (Kaplan-Meier) at each grid time.
    pub overall: Vec<f64>,
}

impl CrudeProbability {
    pub fn cancer_at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.cancer[idx - 1]
        }
    }
}

/// Crude probability of cancer death: all-cause survival just before `u`
/// times the increment of the excess hazard, where the excess hazard is
/// the all-cause Nelson-Aalen increment minus the mean population hazard of
/// the risk set.
pub fn crude_probability<P: PopulationSurvival + ?Sized>(
    records: &[PatientRecord],
    provider: &P,
) -> Result<CrudeProbability> {
    let cohort = Cohort::new(records, provider)?;
    let n = cohort.grid.len();
    let mut out = CrudeProbability {
        times: Vec::with_capacity(n),
        cancer: Vec::with_capacity(n),
        other: Vec::with_capacity(n),
        cancer_isotonic: Vec::new(),
        overall: Vec::with_capacity(n),
    };
    let (mut cancer, mut other, mut km) = (0.0, 0.0, 1.0);
    let curves = &cohort.curves;
    cohort.walk(|a, b, at_risk, deaths| {
        let y: usize = at_risk.iter().sum();
        if y > 0 {
            let pop: f64 = (0..at_risk.len())
                .filter(|&g| at_risk[g] > 0)
                .map(|g| {
                    at_risk[g] as f64
                        * (curves[g].cumulative_hazard(b) - curves[g].cumulative_hazard(a))
                })
                .sum::<f64>()
                / y as f64;
            cancer -= km * pop;
            other += km * pop;
            let d: usize = deaths.iter().map(|p| p.1).sum();
            if d > 0 {
                let jump = d as f64 / y as f64;
                cancer += km * jump;
                km *= 1.0 - jump;
            }
        }
        out.times.push(b);
        out.cancer.push(cancer);
        out.other.push(other);
        out.overall.push(km);
        Ok(())
    })?;
    out.cancer_isotonic = isotonic_increasing(&out.cancer);
    Ok(out)
}

/// Pool-adjacent-violators fit of a non-decreasing sequence, equal weights.
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let merged = (m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64;
            *blocks.last_mut().expect("two blocks") = (merged, n1 + n2);
        }
    }
    blocks
        .iter()
        .flat_map(|&(m, n)| core::iter::repeat(m).take(n))
        .collect()
}

/// Survival-scale values of `estimate` at whole years.
pub fn evaluate_at_years(estimate: &NetSurvivalEstimate, years: &[u32]) -> Vec<(u32, f64)> {
    years
        .iter()
        .map(|&y| (y, estimate.survival_at(y as f64)))
        .collect()
}
