//! Population life tables and the cohort survival read along a Lexis diagonal.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::diagnostics::Counter;
use crate::error::{Error, Result};
use crate::registry::{Demographics, StratumKey};

/// A complete rectangle of values over age x calendar year x demographics.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateGrid {
    age_min: i32,
    age_max: i32,
    year_min: i32,
    year_max: i32,
    demographics: Vec<Demographics>,
    values: Vec<f64>,
}

impl CovariateGrid {
    /// Collects sparse cells into a rectangle spanning their age and year
    /// ranges. Duplicates are an error; holes are filled with `fill` or
    /// reported as missing when `fill` is `None`. Returns the number of holes.
    pub fn from_cells<I>(what: &'static str, cells: I, fill: Option<f64>) -> Result<(Self, u64)>
    where
        I: IntoIterator<Item = (StratumKey, f64)>,
    {
        let mut map = BTreeMap::new();
        for (key, value) in cells {
            if map.insert(key, value).is_some() {
                return Err(Error::DuplicateCell { what, key });
            }
        }
        let first = *map.keys().next().ok_or(Error::EmptyInput(what))?;
        let (mut age_min, mut age_max, mut year_min, mut year_max) =
            (first.age, first.age, first.year, first.year);
        let mut demographics: Vec<Demographics> = Vec::new();
        for k in map.keys() {
            age_min = age_min.min(k.age);
            age_max = age_max.max(k.age);
            year_min = year_min.min(k.year);
            year_max = year_max.max(k.year);
            if demographics.last() != Some(&k.demographics) {
                demographics.push(k.demographics);
            }
        }
        let mut grid = CovariateGrid {
            age_min,
            age_max,
            year_min,
            year_max,
            values: vec![
                f64::NAN;
                demographics.len() * grid_area(age_min, age_max, year_min, year_max)
            ],
            demographics,
        };
        for (key, value) in &map {
            let idx = grid.index(key).expect("cell inside its own bounding box");
            grid.values[idx] = *value;
        }
        let mut holes = 0;
        for d in 0..grid.demographics.len() {
            for age in age_min..=age_max {
                for year in year_min..=year_max {
                    let key = StratumKey::new(age, year, grid.demographics[d]);
                    let idx = grid.index(&key).expect("in range");
                    if grid.values[idx].is_nan() {
                        match fill {
                            Some(v) => {
                                grid.values[idx] = v;
                                holes += 1;
                            }
                            None => return Err(Error::MissingCell { what, key }),
                        }
                    }
                }
            }
        }
        Ok((grid, holes))
    }

    /// Builds a rectangle by evaluating `f` at every cell.
    pub fn from_fn<F>(
        ages: (i32, i32),
        years: (i32, i32),
        demographics: &[Demographics],
        mut f: F,
    ) -> Self
    where
        F: FnMut(&StratumKey) -> f64,
    {
        let mut demographics = demographics.to_vec();
        demographics.sort();
        demographics.dedup();
        let mut values =
            Vec::with_capacity(demographics.len() * grid_area(ages.0, ages.1, years.0, years.1));
        for d in &demographics {
            for age in ages.0..=ages.1 {
                for year in years.0..=years.1 {
                    values.push(f(&StratumKey::new(age, year, *d)));
                }
            }
        }
        CovariateGrid {
            age_min: ages.0,
            age_max: ages.1,
            year_min: years.0,
            year_max: years.1,
            demographics,
            values,
        }
    }

    fn index(&self, key: &StratumKey) -> Option<usize> {
        let d = self.demographics.binary_search(&key.demographics).ok()?;
        if key.age < self.age_min
            || key.age > self.age_max
            || key.year < self.year_min
            || key.year > self.year_max
        {
            return None;
        }
        let years = (self.year_max - self.year_min + 1) as usize;
        let ages = (self.age_max - self.age_min + 1) as usize;
        Some(
            d * ages * years
                + (key.age - self.age_min) as usize * years
                + (key.year - self.year_min) as usize,
        )
    }

    /// Value at an in-range cell.
    pub fn get(&self, key: &StratumKey) -> Option<f64> {
        self.index(key).map(|i| self.values[i])
    }

    pub fn has_demographics(&self, demographics: &Demographics) -> bool {
        self.demographics.binary_search(demographics).is_ok()
    }

    /// Moves each coordinate independently to the nearest in-range value.
    /// Returns the clamped key and whether anything moved.
    pub fn clamp(&self, key: &StratumKey) -> (StratumKey, bool) {
        let age = key.age.clamp(self.age_min, self.age_max);
        let year = key.year.clamp(self.year_min, self.year_max);
        (
            StratumKey::new(age, year, key.demographics),
            age != key.age || year != key.year,
        )
    }

    pub fn age_range(&self) -> (i32, i32) {
        (self.age_min, self.age_max)
    }

    pub fn year_range(&self) -> (i32, i32) {
        (self.year_min, self.year_max)
    }

    pub fn demographics(&self) -> &[Demographics] {
        &self.demographics
    }

    pub fn cells(&self) -> impl Iterator<Item = (StratumKey, f64)> + '_ {
        let ages = self.age_min..=self.age_max;
        let years = self.year_min..=self.year_max;
        self.demographics
            .iter()
            .flat_map(move |d| {
                let years = years.clone();
                ages.clone()
                    .flat_map(move |a| years.clone().map(move |y| StratumKey::new(a, y, *d)))
            })
            .zip(self.values.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn grid_area(age_min: i32, age_max: i32, year_min: i32, year_max: i32) -> usize {
    ((age_max - age_min + 1) as usize) * ((year_max - year_min + 1) as usize)
}

/// Annual conditional probabilities of death, q(age, year, demographics).
#[derive(Debug, Clone)]
pub struct LifeTable {
    grid: CovariateGrid,
    clamps: Counter,
}

impl LifeTable {
    /// Requires a complete rectangle with every q in [0, 1].
    pub fn from_cells<I>(cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (StratumKey, f64)>,
    {
        let (grid, _) = CovariateGrid::from_cells("life table", cells, None)?;
        Self::from_grid(grid)
    }

    pub fn from_grid(grid: CovariateGrid) -> Result<Self> {
        for (key, q) in grid.cells() {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidProbability {
                    what: "life-table q",
                    key,
                    value: q,
                });
            }
        }
        Ok(LifeTable {
            grid,
            clamps: Counter::new(),
        })
    }

    pub fn grid(&self) -> &CovariateGrid {
        &self.grid
    }

    /// Number of lookups that fell outside the table and were clamped.
    pub fn clamp_count(&self) -> u64 {
        self.clamps.get()
    }

    /// q at `key`, clamping out-of-range ages and years to the nearest cell.
    pub fn q(&self, key: &StratumKey) -> Result<f64> {
        if let Some(q) = self.grid.get(key) {
            return Ok(q);
        }
        if !self.grid.has_demographics(&key.demographics) {
            return Err(Error::UnknownDemographics {
                what: "life table",
                key: *key,
            });
        }
        let (clamped, _) = self.grid.clamp(key);
        self.clamps.bump();
        log::trace!("life-table lookup {key} clamped to {clamped}");
        Ok(self.grid.get(&clamped).expect("clamped key is in range"))
    }

    /// Survival of the cohort passing through `origin`, at t = 0..=horizon:
    /// the product of (1 - q) along the diagonal.
    pub fn diagonal_survival(
        &self,
        origin: &StratumKey,
        horizon: usize,
    ) -> Result<DiagonalSurvival> {
        let mut values = Vec::with_capacity(horizon + 1);
        values.push(1.0);
        let mut s = 1.0;
        for j in 0..horizon {
            s *= 1.0 - self.q(&origin.shifted(j as i32))?;
            values.push(s);
        }
        Ok(DiagonalSurvival {
            origin: *origin,
            values,
        })
    }

    /// Cumulative hazard along the diagonal at real `t`, with a constant
    /// hazard -log(1 - q) within each year of follow-up.
    pub fn diagonal_cumulative_hazard(&self, origin: &StratumKey, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidConfig("cumulative hazard needs t >= 0"));
        }
        let whole = libm::floor(t) as i32;
        let frac = t - whole as f64;
        let mut acc = 0.0;
        for j in 0..whole {
            acc += self.annual_hazard(&origin.shifted(j))?;
        }
        if frac > 0.0 {
            acc += frac * self.annual_hazard(&origin.shifted(whole))?;
        }
        Ok(acc)
    }

    fn annual_hazard(&self, key: &StratumKey) -> Result<f64> {
        let q = self.q(key)?;
        if q >= 1.0 {
            return Err(Error::InfiniteHazard { key: *key });
        }
        Ok(-libm::log1p(-q))
    }
}

/// Cohort survival along a Lexis diagonal at integer follow-up times.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSurvival {
    pub origin: StratumKey,
    /// Values at t = 0, 1, ..., horizon; the first is 1.
    pub values: Vec<f64>,
}

impl DiagonalSurvival {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sex(c: u16) -> Demographics {
        Demographics::single(c)
    }

    fn constant_table(q: f64, ages: (i32, i32), years: (i32, i32)) -> LifeTable {
        LifeTable::from_grid(CovariateGrid::from_fn(
            ages,
            years,
            &[sex(1), sex(2)],
            |_| q,
        ))
        .unwrap()
    }

    #[test]
    fn complete_table_loads_every_cell() {
        let mut cells = Vec::new();
        for a in [60, 61] {
            for y in [2000, 2001] {
                for s in [1, 2] {
                    cells.push((StratumKey::new(a, y, sex(s)), 0.01));
                }
            }
        }
        let lt = LifeTable::from_cells(cells).unwrap();
        assert_eq!(lt.grid().len(), 8);
    }

    #[test]
    fn out_of_range_q_is_rejected_with_coordinates() {
        let key = StratumKey::new(60, 2000, sex(1));
        let err = LifeTable::from_cells([(key, 1.2)]).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidProbability {
                what: "life-table q",
                key,
                value: 1.2
            }
        );
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let key = StratumKey::new(60, 2000, sex(1));
        assert!(matches!(
            LifeTable::from_cells([(key, 0.1), (key, 0.2)]),
            Err(Error::DuplicateCell { .. })
        ));
    }

    #[test]
    fn missing_cell_is_rejected() {
        let cells = [
            (StratumKey::new(60, 2000, sex(1)), 0.1),
            (StratumKey::new(61, 2001, sex(1)), 0.1),
        ];
        assert!(matches!(
            LifeTable::from_cells(cells),
            Err(Error::MissingCell { .. })
        ));
    }

    #[test]
    fn diagonal_survival_products() {
        let zero = constant_table(0.0, (0, 100), (1950, 2050));
        let origin = StratumKey::new(60, 2000, sex(1));
        assert!(zero
            .diagonal_survival(&origin, 10)
            .unwrap()
            .values
            .iter()
            .all(|&v| v == 1.0));

        let tenth = constant_table(0.1, (0, 100), (1950, 2050));
        let d = tenth.diagonal_survival(&origin, 3).unwrap();
        assert_eq!(d.values[0], 1.0);
        assert!((d.values[3] - 0.729).abs() < 1e-15);
    }

    #[test]
    fn diagonal_survival_clamps_and_counts() {
        let lt = constant_table(0.1, (0, 62), (1990, 2002));
        let d = lt
            .diagonal_survival(&StratumKey::new(60, 2000, sex(1)), 5)
            .unwrap();
        assert!((d.values[5] - 0.9f64.powi(5)).abs() < 1e-15);
        assert_eq!(lt.clamp_count(), 2);
    }

    #[test]
    fn unknown_demographics_is_an_error() {
        let lt = constant_table(0.1, (0, 100), (1950, 2050));
        let key = StratumKey::new(60, 2000, sex(9));
        assert!(matches!(lt.q(&key), Err(Error::UnknownDemographics { .. })));
    }

    #[test]
    fn cumulative_hazard_closed_forms() {
        let origin = StratumKey::new(60, 2000, sex(2));
        let zero = constant_table(0.0, (0, 100), (1950, 2050));
        assert_eq!(zero.diagonal_cumulative_hazard(&origin, 7.3).unwrap(), 0.0);

        let tenth = constant_table(0.1, (0, 100), (1950, 2050));
        let h1 = tenth.diagonal_cumulative_hazard(&origin, 1.0).unwrap();
        assert!((h1 - 0.105_360_515_657_826_3).abs() < 1e-12);
        let half = tenth.diagonal_cumulative_hazard(&origin, 0.5).unwrap();
        assert!((half - 0.5 * h1).abs() < 1e-15);
    }

    #[test]
    fn certain_death_gives_infinite_hazard_error() {
        let lt = constant_table(1.0, (0, 100), (1950, 2050));
        let origin = StratumKey::new(60, 2000, sex(1));
        assert!(matches!(
            lt.diagonal_cumulative_hazard(&origin, 0.5),
            Err(Error::InfiniteHazard { .. })
        ));
        assert_eq!(lt.diagonal_cumulative_hazard(&origin, 0.0).unwrap(), 0.0);
    }
}
