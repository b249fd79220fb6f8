//! Annual cancer incidence, and the three quantities derived from it along
//! each Lexis diagonal: the prevalence of previously diagnosed people, the
//! time since diagnosis among them, and the time to diagnosis among the rest.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::Counter;
use crate::error::{Error, Result};
use crate::extrapolation::OverallSurvival;
use crate::lifetable::{CovariateGrid, LifeTable};
use crate::registry::{Diagonal, StratumKey};

/// Upper clip for incidence rates computed from counts.
pub const MAX_INCIDENCE: f64 = 1.0 - 1e-9;

/// Annual incidence IR(age, year, demographics) in [0, 1).
#[derive(Debug, Clone)]
pub struct IncidenceTable {
    grid: CovariateGrid,
    missing: u64,
    clips: u64,
    clamps: Counter,
}

impl IncidenceTable {
    /// Cells absent from the input default to 0 and are counted.
    pub fn from_cells<I>(cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (StratumKey, f64)>,
    {
        let (grid, missing) = CovariateGrid::from_cells("incidence table", cells, Some(0.0))?;
        if missing > 0 {
            log::warn!("{missing} incidence cells absent from the input were set to 0");
        }
        let mut table = Self::from_grid(grid)?;
        table.missing = missing;
        Ok(table)
    }

    pub fn from_grid(grid: CovariateGrid) -> Result<Self> {
        for (key, ir) in grid.cells() {
            if !(0.0..1.0).contains(&ir) {
                return Err(Error::InvalidProbability {
                    what: "incidence rate",
                    key,
                    value: ir,
                });
            }
        }
        Ok(IncidenceTable {
            grid,
            missing: 0,
            clips: 0,
            clamps: Counter::new(),
        })
    }

    /// A table that is zero everywhere on the given rectangle.
    pub fn zero(ages: (i32, i32), years: (i32, i32), demographics: &[crate::Demographics]) -> Self {
        Self::from_grid(CovariateGrid::from_fn(ages, years, demographics, |_| 0.0))
            .expect("zero is a valid rate")
    }

    pub fn grid(&self) -> &CovariateGrid {
        &self.grid
    }

    pub fn missing_count(&self) -> u64 {
        self.missing
    }

    pub fn clip_count(&self) -> u64 {
        self.clips
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamps.get()
    }

    /// IR at `key`. Ages below the table read as 0; older ages and
    /// out-of-range years clamp to the nearest cell.
    pub fn rate(&self, key: &StratumKey) -> Result<f64> {
        if let Some(ir) = self.grid.get(key) {
            return Ok(ir);
        }
        if !self.grid.has_demographics(&key.demographics) {
            return Err(Error::UnknownDemographics {
                what: "incidence table",
                key: *key,
            });
        }
        self.clamps.bump();
        if key.age < self.grid.age_range().0 {
            return Ok(0.0);
        }
        let (clamped, _) = self.grid.clamp(key);
        Ok(self.grid.get(&clamped).expect("clamped key is in range"))
    }
}

/// Incidence as new diagnoses over person-years, cell by cell.
///
/// Rates are clipped into `[0, 1 - 1e-9]`; a cell with diagnoses but no
/// person-years is an error.
pub fn compute_incidence(
    diagnoses: &[(StratumKey, f64)],
    person_years: &[(StratumKey, f64)],
) -> Result<IncidenceTable> {
    let mut cells: BTreeMap<StratumKey, (f64, f64)> = BTreeMap::new();
    for (key, d) in diagnoses {
        cells.entry(*key).or_insert((0.0, 0.0)).0 += d;
    }
    for (key, py) in person_years {
        cells.entry(*key).or_insert((0.0, 0.0)).1 += py;
    }
    let mut clips = 0;
    let mut rates = Vec::with_capacity(cells.len());
    for (key, (d, py)) in cells {
        let (ir, clipped) = incidence_ratio(&key, d, py)?;
        clips += u64::from(clipped);
        rates.push((key, ir));
    }
    let mut table = IncidenceTable::from_cells(rates)?;
    table.clips = clips;
    Ok(table)
}

/// One cell's rate, `diagnoses / person_years` clipped into
/// `[0, 1 - 1e-9]`; the flag reports a clip.
pub fn incidence_ratio(key: &StratumKey, diagnoses: f64, person_years: f64) -> Result<(f64, bool)> {
    let ir = if diagnoses <= 0.0 {
        0.0
    } else if person_years <= 0.0 {
        return Err(Error::ZeroPersonYears {
            key: *key,
            diagnoses,
        });
    } else {
        diagnoses / person_years
    };
    let clipped = ir.clamp(0.0, MAX_INCIDENCE);
    if clipped != ir {
        log::warn!("incidence {ir} at {key} clipped to {clipped}");
    }
    Ok((clipped, clipped != ir))
}

/// Where within a year of diagnosis overall survival is read when
/// approximating the prevalence integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WithinYearEvaluation {
    /// S_O at the full lag `s`, i.e. as if diagnosed at the start of the year.
    YearStart,
    /// S_O at `s - 0.5`, the midpoint of the year of diagnosis.
    #[default]
    MidYear,
}

impl WithinYearEvaluation {
    /// Lag at which overall survival is read for people diagnosed `s` years ago.
    pub fn lag(self, s: usize) -> f64 {
        match self {
            WithinYearEvaluation::YearStart => s as f64,
            WithinYearEvaluation::MidYear => s as f64 - 0.5,
        }
    }
}

/// Prevalence recursion results for one diagonal, ages `0..=max_age`.
#[derive(Debug, Clone, PartialEq)]
struct DiagonalPrevalence {
    alpha: Vec<f64>,
    /// `masses[a][s - 1]`: probability of being alive at age `a` having been
    /// diagnosed `s` years earlier, S_O(s | z-s) IR(z-s) (1 - alpha(z-s)).
    masses: Vec<Vec<f64>>,
    survival_caps: u64,
}

/// Estimated prevalence alpha(z) of previously diagnosed people in the
/// life-table population, memoised along each diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceTable {
    diagonals: BTreeMap<Diagonal, DiagonalPrevalence>,
    within_year: WithinYearEvaluation,
    survival_caps: u64,
}

impl PrevalenceTable {
    /// Runs the recursion on every diagonal touched by `targets`, from age 0
    /// (where prevalence is 0) up to the oldest target on that diagonal.
    /// Each cell depends only on younger cells of its own diagonal, so one
    /// forward pass per diagonal suffices.
    pub fn estimate<S, I>(
        incidence: &IncidenceTable,
        overall: &S,
        targets: I,
        within_year: WithinYearEvaluation,
    ) -> Result<Self>
    where
        S: OverallSurvival + ?Sized,
        I: IntoIterator<Item = StratumKey>,
    {
        Self::run(incidence, overall, None, targets, within_year)
    }

    /// Like [`PrevalenceTable::estimate`], but each lag's mass is divided by
    /// the life-table survival over the lag, `S_LT(s | z-s)`. The mass
    /// `IR (1 - alpha) S_O(s)` is a fraction of the people alive at `z-s`;
    /// dividing turns it into a fraction of those still alive at `z`, which
    /// is what prevalence in the cell means.
    pub fn estimate_survivor_normalised<S, I>(
        incidence: &IncidenceTable,
        overall: &S,
        lifetable: &LifeTable,
        targets: I,
        within_year: WithinYearEvaluation,
    ) -> Result<Self>
    where
        S: OverallSurvival + ?Sized,
        I: IntoIterator<Item = StratumKey>,
    {
        Self::run(incidence, overall, Some(lifetable), targets, within_year)
    }

    fn run<S, I>(
        incidence: &IncidenceTable,
        overall: &S,
        lifetable: Option<&LifeTable>,
        targets: I,
        within_year: WithinYearEvaluation,
    ) -> Result<Self>
    where
        S: OverallSurvival + ?Sized,
        I: IntoIterator<Item = StratumKey>,
    {
        let mut max_age: BTreeMap<Diagonal, i32> = BTreeMap::new();
        for key in targets {
            if key.age < 0 {
                return Err(Error::InvalidConfig("prevalence needs ages >= 0"));
            }
            let entry = max_age.entry(key.diagonal()).or_insert(key.age);
            *entry = (*entry).max(key.age);
        }
        let mut diagonals = BTreeMap::new();
        let mut survival_caps = 0;
        for (diag, top) in max_age {
            let d = diagonal_prevalence(incidence, overall, lifetable, diag, top, within_year)?;
            survival_caps += d.survival_caps;
            diagonals.insert(diag, d);
        }
        Ok(PrevalenceTable {
            diagonals,
            within_year,
            survival_caps,
        })
    }

    pub fn within_year(&self) -> WithinYearEvaluation {
        self.within_year
    }

    /// Lags where patients' overall survival exceeded the life-table
    /// survival and was capped at it.
    pub fn survival_caps(&self) -> u64 {
        self.survival_caps
    }

    pub fn alpha(&self, key: &StratumKey) -> Option<f64> {
        let diag = self.diagonals.get(&key.diagonal())?;
        usize::try_from(key.age)
            .ok()
            .and_then(|a| diag.alpha.get(a))
            .copied()
    }

    /// Per-lag masses for `key`, indexed by lag `s - 1` for s = 1..=age.
    pub fn lag_masses(&self, key: &StratumKey) -> Option<&[f64]> {
        let diag = self.diagonals.get(&key.diagonal())?;
        usize::try_from(key.age)
            .ok()
            .and_then(|a| diag.masses.get(a))
            .map(Vec::as_slice)
    }

    /// Distribution of years since diagnosis among prevalent cases at `key`,
    /// at lags 0..=age. `None` when prevalence is 0 there.
    pub fn backward_lag_distribution(&self, key: &StratumKey) -> Option<DiagnosisLagDistribution> {
        let alpha = self.alpha(key)?;
        if alpha <= 0.0 {
            return None;
        }
        let masses = self.lag_masses(key)?;
        let mut values = Vec::with_capacity(masses.len() + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for m in masses {
            acc += m;
            values.push(acc / alpha);
        }
        Some(DiagnosisLagDistribution {
            origin: *key,
            direction: LagDirection::SinceDiagnosis,
            values,
        })
    }
}

fn diagonal_prevalence<S: OverallSurvival + ?Sized>(
    incidence: &IncidenceTable,
    overall: &S,
    lifetable: Option<&LifeTable>,
    diag: Diagonal,
    top: i32,
    within_year: WithinYearEvaluation,
) -> Result<DiagonalPrevalence> {
    let n = top as usize + 1;
    // Life-table survival from age 0 along the diagonal.
    let mut from_birth = vec![1.0; n];
    if let Some(lt) = lifetable {
        for a in 1..n {
            from_birth[a] = from_birth[a - 1] * (1.0 - lt.q(&diag.at_age(a as i32 - 1))?);
        }
    }
    let mut alpha = vec![0.0; n];
    let mut inflow = vec![0.0; n];
    let mut masses: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut survival_caps = 0;
    masses.push(Vec::new());
    inflow[0] = incidence.rate(&diag.at_age(0))?;
    for a in 1..n {
        let mut row = Vec::with_capacity(a);
        let mut acc = 0.0;
        for s in 1..=a {
            let src = a - s;
            let so = overall.overall_survival(&diag.at_age(src as i32), within_year.lag(s));
            let m = if lifetable.is_none() {
                so * inflow[src]
            } else if from_birth[a] > 0.0 {
                // Patients cannot outlive the population they belong to;
                // the cap also keeps prevalence below 1.
                let ratio = so * from_birth[src] / from_birth[a];
                if ratio > 1.0 {
                    survival_caps += 1;
                }
                ratio.min(1.0) * inflow[src]
            } else {
                0.0
            };
            acc += m;
            row.push(m);
        }
        if acc >= 1.0 {
            return Err(Error::PrevalenceNotBelowOne {
                key: diag.at_age(a as i32),
                value: acc,
            });
        }
        alpha[a] = acc;
        inflow[a] = incidence.rate(&diag.at_age(a as i32))? * (1.0 - acc);
        masses.push(row);
    }
    Ok(DiagonalPrevalence {
        alpha,
        masses,
        survival_caps,
    })
}

/// Prevalence at a single cell.
pub fn prevalence_alpha<S: OverallSurvival + ?Sized>(
    incidence: &IncidenceTable,
    overall: &S,
    key: &StratumKey,
) -> Result<f64> {
    let table =
        PrevalenceTable::estimate(incidence, overall, [*key], WithinYearEvaluation::default())?;
    Ok(table.alpha(key).expect("target was estimated"))
}

/// Whether a lag distribution looks back to diagnosis or forward to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagDirection {
    /// Years since diagnosis among people already diagnosed.
    SinceDiagnosis,
    /// Years until diagnosis among people not yet diagnosed.
    UntilDiagnosis,
}

/// A cumulative distribution of integer lags, values at 0, 1, 2, ...
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisLagDistribution {
    pub origin: StratumKey,
    pub direction: LagDirection,
    pub values: Vec<f64>,
}

impl DiagnosisLagDistribution {
    /// Forward distribution at lags `0..=max_lag`.
    pub fn until_diagnosis(
        incidence: &IncidenceTable,
        origin: &StratumKey,
        max_lag: usize,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(max_lag + 1);
        values.push(0.0);
        let mut free = 1.0;
        for s in 0..max_lag {
            free *= 1.0 - incidence.rate(&origin.shifted(s as i32))?;
            values.push(1.0 - free);
        }
        Ok(DiagnosisLagDistribution {
            origin: *origin,
            direction: LagDirection::UntilDiagnosis,
            values,
        })
    }

    pub fn at(&self, t: usize) -> f64 {
        self.values
            .get(t)
            .copied()
            .unwrap_or_else(|| *self.values.last().expect("value at 0"))
    }

    /// Increments F(k) - F(k-1) for k = 1..len.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Backward lag CDF at `t`. `None` when prevalence is 0 at `key`.
pub fn f_d_to_l(prevalence: &PrevalenceTable, key: &StratumKey, t: usize) -> Option<f64> {
    prevalence.backward_lag_distribution(key).map(|d| d.at(t))
}

/// Forward lag CDF: 1 - prod_{s<t} (1 - IR(z+s)).
pub fn f_l_to_d(incidence: &IncidenceTable, key: &StratumKey, t: usize) -> Result<f64> {
    let mut free = 1.0;
    for s in 0..t {
        free *= 1.0 - incidence.rate(&key.shifted(s as i32))?;
    }
    Ok(1.0 - free)
}

/// Increment of the forward lag CDF over year `k >= 1`.
pub fn delta_f(incidence: &IncidenceTable, key: &StratumKey, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("delta_f needs k >= 1"));
    }
    let mut free = 1.0;
    for s in 0..k - 1 {
        free *= 1.0 - incidence.rate(&key.shifted(s as i32))?;
    }
    Ok(free * incidence.rate(&key.shifted(k as i32 - 1))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Demographics;

    struct ConstantSurvival(f64);

    impl OverallSurvival for ConstantSurvival {
        fn overall_survival(&self, _key: &StratumKey, t: f64) -> f64 {
            libm::exp(-self.0 * t)
        }
    }

    fn table(f: impl FnMut(&StratumKey) -> f64) -> IncidenceTable {
        IncidenceTable::from_grid(CovariateGrid::from_fn(
            (0, 110),
            (1900, 2100),
            &[Demographics::single(1)],
            f,
        ))
        .unwrap()
    }

    fn key(age: i32) -> StratumKey {
        StratumKey::new(age, 1960 + age, Demographics::single(1))
    }

    #[test]
    fn incidence_ratio_and_zero() {
        let k = key(60);
        let t = compute_incidence(&[(k, 15.0)], &[(k, 1000.0)]).unwrap();
        assert_eq!(t.rate(&k).unwrap(), 0.015);

        let z = compute_incidence(&[], &[(k, 1000.0), (key(61), 10.0)]).unwrap();
        assert_eq!(z.rate(&k).unwrap(), 0.0);
        assert_eq!(z.rate(&key(61)).unwrap(), 0.0);
    }

    #[test]
    fn diagnoses_without_person_years_fail() {
        let k = key(60);
        assert!(matches!(
            compute_incidence(&[(k, 3.0)], &[(k, 0.0)]),
            Err(Error::ZeroPersonYears { .. })
        ));
    }

    #[test]
    fn rates_are_clipped_below_one() {
        let k = key(60);
        let t = compute_incidence(&[(k, 5.0)], &[(k, 2.0)]).unwrap();
        assert_eq!(t.rate(&k).unwrap(), MAX_INCIDENCE);
        assert_eq!(t.clip_count(), 1);
    }

    #[test]
    fn ages_below_table_read_zero() {
        let (grid, _) = CovariateGrid::from_cells(
            "incidence",
            [(StratumKey::new(40, 2000, Demographics::single(1)), 0.01)],
            Some(0.0),
        )
        .unwrap();
        let t = IncidenceTable::from_grid(grid).unwrap();
        assert_eq!(
            t.rate(&StratumKey::new(10, 2000, Demographics::single(1)))
                .unwrap(),
            0.0
        );
        assert_eq!(
            t.rate(&StratumKey::new(80, 2030, Demographics::single(1)))
                .unwrap(),
            0.01
        );
    }

    #[test]
    fn zero_incidence_gives_zero_prevalence() {
        let ir = table(|_| 0.0);
        let p = PrevalenceTable::estimate(
            &ir,
            &ConstantSurvival(0.1),
            [key(80)],
            WithinYearEvaluation::YearStart,
        )
        .unwrap();
        for a in 0..=80 {
            assert_eq!(p.alpha(&key(a)), Some(0.0));
        }
        assert!(p.backward_lag_distribution(&key(80)).is_none());
    }

    #[test]
    fn prevalence_at_age_one_is_single_term() {
        let ir = table(|k| 0.01 + 0.001 * k.age as f64);
        let so = ConstantSurvival(0.2);
        let alpha = prevalence_alpha(&ir, &so, &key(1)).unwrap();
        assert!((alpha - libm::exp(-0.2 * 0.5) * 0.01).abs() < 1e-15);
    }

    #[test]
    fn backward_lag_closes_at_full_age() {
        let ir = table(|k| 0.002 * (1.0 + (k.age % 7) as f64));
        let p = PrevalenceTable::estimate(
            &ir,
            &ConstantSurvival(0.05),
            [key(70)],
            WithinYearEvaluation::YearStart,
        )
        .unwrap();
        for a in [1, 10, 35, 70] {
            let d = p.backward_lag_distribution(&key(a)).unwrap();
            assert_eq!(d.at(0), 0.0);
            assert!((d.at(a as usize) - 1.0).abs() < 1e-12);
            assert!(d.values.windows(2).all(|w| w[1] >= w[0]));
            let sum: f64 = p.lag_masses(&key(a)).unwrap().iter().sum();
            assert!((sum - p.alpha(&key(a)).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn point_incidence_gives_step_lag_distribution() {
        let a_star = 40;
        let ir = table(|k| if k.age == a_star { 0.02 } else { 0.0 });
        let p = PrevalenceTable::estimate(
            &ir,
            &ConstantSurvival(0.03),
            [key(70)],
            WithinYearEvaluation::YearStart,
        )
        .unwrap();
        let d = p.backward_lag_distribution(&key(70)).unwrap();
        let jump = (70 - a_star) as usize;
        assert_eq!(d.at(jump - 1), 0.0);
        assert!((d.at(jump) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_lag_closed_form() {
        let ir = table(|_| 0.015);
        assert_eq!(f_l_to_d(&ir, &key(60), 0).unwrap(), 0.0);
        assert!((f_l_to_d(&ir, &key(60), 2).unwrap() - 0.029775).abs() < 1e-15);
        let zero = table(|_| 0.0);
        assert_eq!(f_l_to_d(&zero, &key(60), 10).unwrap(), 0.0);
        assert_eq!(delta_f(&zero, &key(60), 3).unwrap(), 0.0);
    }

    #[test]
    fn delta_f_telescopes() {
        let ir = table(|k| 0.001 * (k.age % 5) as f64 + 0.004);
        let z = key(55);
        assert_eq!(delta_f(&ir, &z, 1).unwrap(), ir.rate(&z).unwrap());
        let mut acc = 0.0;
        for k in 1..=12 {
            acc += delta_f(&ir, &z, k).unwrap();
            assert!((acc - f_l_to_d(&ir, &z, k).unwrap()).abs() < 1e-15);
        }
        let dist = DiagnosisLagDistribution::until_diagnosis(&ir, &z, 12).unwrap();
        assert!((dist.at(12) - acc).abs() < 1e-15);
    }

    #[test]
    fn prevalence_at_one_is_an_error() {
        let ir = table(|_| 0.9);
        // With S_O <= 1 prevalence stays below 1; a growing "survival" breaks that.
        let err = PrevalenceTable::estimate(
            &ir,
            &ConstantSurvival(-0.5),
            [key(10)],
            WithinYearEvaluation::YearStart,
        );
        assert!(matches!(err, Err(Error::PrevalenceNotBelowOne { .. })));
    }
}
