//! Non-cancer survival of the general population, recovered from a life
//! table that also contains cancer patients and cancer deaths.
//!
//! For a life-table cell `z` with prevalence `a`, the cohort survival splits
//! into prevalent cases and cancer-free people, and the cancer-free part
//! depends on future diagnoses at lags `k` and on the unknown non-cancer
//! survival at the shifted cells `z + k`:
//!
//! ```text
//! S_LT(t|z) - a S_prev(t|z) = (1 - a) S_P(t|z) r(t|z)
//! r(t|z) = 1 - sum_{k<t} (1 - S_O(t-k|z+k) / S_P(t-k|z+k)) dF_k(z)
//! ```
//!
//! `r(t|z)` only needs `S_P` at horizons below `t`, so the whole diagonal is
//! solved horizon by horizon.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::extrapolation::{GridSurvival, OverallSurvival};
use crate::incidence::{IncidenceTable, PrevalenceTable, WithinYearEvaluation};
use crate::lifetable::LifeTable;
use crate::registry::{Diagonal, StratumKey};

/// Lower clip for reported survival values.
pub const MIN_SURVIVAL: f64 = 1e-9;
/// `r(t)` below this is treated as inconsistent input.
pub const MIN_DENOMINATOR: f64 = 1e-6;

/// How a prevalent case's survival from the life-table cell onward is
/// obtained from overall survival since diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrevalentSurvivalForm {
    /// `S_O(t + s) / S_O(s)`: survival given alive `s` years after diagnosis.
    #[default]
    Conditional,
    /// `S_O(t + s)` without conditioning on survival to the cell.
    Unconditional,
}

/// Survival of people in a life-table cell who were diagnosed earlier.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalentCaseSurvival {
    pub origin: StratumKey,
    /// Values at t = 0..=horizon.
    pub values: Vec<f64>,
}

/// Mixes overall survival over the backward lag distribution at `origin`.
/// `None` when there are no prevalent cases there.
pub fn prevalent_case_survival<S: OverallSurvival + ?Sized>(
    origin: &StratumKey,
    overall: &S,
    prevalence: &PrevalenceTable,
    horizon: usize,
    form: PrevalentSurvivalForm,
) -> Option<PrevalentCaseSurvival> {
    let alpha = prevalence.alpha(origin)?;
    if alpha <= 0.0 {
        return None;
    }
    let masses = prevalence.lag_masses(origin)?;
    let within_year = prevalence.within_year();
    let mut values = vec![0.0; horizon + 1];
    if form == PrevalentSurvivalForm::Conditional {
        values[0] = 1.0;
    }
    for (i, &mass) in masses.iter().enumerate() {
        if mass <= 0.0 {
            continue;
        }
        let s = i + 1;
        let source = origin.shifted(-(s as i32));
        let weight = mass / alpha;
        match form {
            PrevalentSurvivalForm::Conditional => {
                let lag = within_year.lag(s);
                let at_cell = overall.overall_survival(&source, lag);
                if at_cell <= 0.0 {
                    continue;
                }
                for (t, v) in values.iter_mut().enumerate().skip(1) {
                    *v += weight * overall.overall_survival(&source, lag + t as f64) / at_cell;
                }
            }
            PrevalentSurvivalForm::Unconditional => {
                for (t, v) in values.iter_mut().enumerate() {
                    *v += weight * (1.0 - overall.overall_survival(&source, (s + t) as f64));
                }
            }
        }
    }
    if form == PrevalentSurvivalForm::Unconditional {
        for v in &mut values {
            *v = 1.0 - *v;
        }
    }
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    Some(PrevalentCaseSurvival {
        origin: *origin,
        values,
    })
}

/// Everything the equation needs at one cell of a diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInputs {
    pub key: StratumKey,
    /// Life-table cohort survival at t = 0..=T; T is this node's horizon.
    pub lifetable: Vec<f64>,
    pub alpha: f64,
    /// Prevalent-case survival at t = 0..=T; unused when `alpha` is 0.
    pub prevalent: Vec<f64>,
    /// Increments of the time-to-diagnosis distribution, k = 1..=T.
    pub lag_increments: Vec<f64>,
    /// Overall survival of patients diagnosed at this cell, t = 0..=T.
    pub overall: Vec<f64>,
}

impl NodeInputs {
    pub fn horizon(&self) -> usize {
        self.lifetable.len() - 1
    }

    fn numerator(&self, t: usize) -> f64 {
        if self.alpha > 0.0 {
            self.lifetable[t] - self.alpha * self.prevalent[t]
        } else {
            self.lifetable[t]
        }
    }
}

/// Consecutive cells `z, z+1, ...` of one diagonal. A node's horizon may
/// shrink by at most one from each node to the next, so every shifted
/// lookup stays inside the system.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSystem {
    nodes: Vec<NodeInputs>,
}

/// Raw solution of a diagonal system.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSolution {
    /// `S_P` at t = 0..=T per node, before clipping.
    pub survival: Vec<Vec<f64>>,
    /// `r(t)` at t = 0..=T per node.
    pub denominators: Vec<Vec<f64>>,
    /// Cells whose numerator was not positive and were set to the floor.
    pub floors: u64,
}

impl DiagonalSystem {
    pub fn new(nodes: Vec<NodeInputs>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput("diagonal system has no nodes"));
        }
        for (j, node) in nodes.iter().enumerate() {
            let t = node.horizon();
            let lengths_ok = !node.lifetable.is_empty()
                && node.overall.len() == t + 1
                && node.lag_increments.len() == t
                && (node.alpha <= 0.0 || node.prevalent.len() == t + 1);
            if !lengths_ok {
                return Err(Error::InvalidConfig(
                    "node inputs must cover the node's horizon",
                ));
            }
            if !(0.0..1.0).contains(&node.alpha) {
                return Err(Error::PrevalenceNotBelowOne {
                    key: node.key,
                    value: node.alpha,
                });
            }
            match nodes.get(j + 1) {
                Some(next) => {
                    if next.key != node.key.shifted(1) {
                        return Err(Error::InvalidConfig(
                            "diagonal nodes must be consecutive cells",
                        ));
                    }
                    if next.horizon() + 1 < t {
                        return Err(Error::InvalidConfig(
                            "node horizons may shrink by at most one per step",
                        ));
                    }
                }
                None if t > 1 => {
                    return Err(Error::InvalidConfig(
                        "the last node's horizon must be at most 1",
                    ));
                }
                None => {}
            }
        }
        Ok(DiagonalSystem { nodes })
    }

    /// Builds the system for the registry ages `ages` of one diagonal.
    /// Nodes run from the youngest registry age to `oldest + horizon - 1`.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble<S: OverallSurvival + ?Sized>(
        diagonal: Diagonal,
        ages: (i32, i32),
        horizon: usize,
        lifetable: &LifeTable,
        incidence: &IncidenceTable,
        prevalence: &PrevalenceTable,
        overall: &S,
        form: PrevalentSurvivalForm,
    ) -> Result<Self> {
        let last = ages.1 + horizon as i32 - 1;
        let mut nodes = Vec::new();
        for age in ages.0..=last.max(ages.0) {
            let key = diagonal.at_age(age);
            let t_max = horizon - (age - ages.1).max(0) as usize;
            let alpha = prevalence
                .alpha(&key)
                .ok_or(Error::MissingProvider { key })?;
            let prevalent = if alpha > 0.0 {
                prevalent_case_survival(&key, overall, prevalence, t_max, form)
                    .ok_or(Error::MissingProvider { key })?
                    .values
            } else {
                Vec::new()
            };
            let mut lag_increments = Vec::with_capacity(t_max);
            let mut free = 1.0;
            for k in 0..t_max {
                let ir = incidence.rate(&key.shifted(k as i32))?;
                lag_increments.push(free * ir);
                free *= 1.0 - ir;
            }
            let overall_values = (0..=t_max)
                .map(|m| overall.overall_survival(&key, m as f64))
                .collect();
            nodes.push(NodeInputs {
                key,
                lifetable: lifetable.diagonal_survival(&key, t_max)?.values,
                alpha,
                prevalent,
                lag_increments,
                overall: overall_values,
            });
        }
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[NodeInputs] {
        &self.nodes
    }

    fn max_horizon(&self) -> usize {
        self.nodes
            .iter()
            .map(NodeInputs::horizon)
            .max()
            .unwrap_or(0)
    }

    /// Horizon-major recursion: at each `t`, every node is solved from
    /// values at smaller horizons.
    pub fn solve(&self) -> Result<DiagonalSolution> {
        let mut survival: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![1.0; n.horizon() + 1])
            .collect();
        let mut denominators = survival.clone();
        let mut floors = 0;
        for t in 1..=self.max_horizon() {
            for (j, node) in self.nodes.iter().enumerate() {
                if node.horizon() < t {
                    continue;
                }
                let numerator = node.numerator(t);
                let mut r = 1.0;
                for k in 1..t {
                    let shifted = &self.nodes[j + k];
                    let ratio = shifted.overall[t - k] / survival[j + k][t - k];
                    r -= (1.0 - ratio) * node.lag_increments[k - 1];
                }
                if !(r >= MIN_DENOMINATOR) {
                    return Err(Error::SmallDenominator {
                        key: node.key,
                        t,
                        value: r,
                    });
                }
                survival[j][t] = if numerator > 0.0 {
                    numerator / ((1.0 - node.alpha) * r)
                } else {
                    // More prevalent survivors than the life table has people:
                    // floor the cell and keep the recursion finite.
                    floors += 1;
                    MIN_SURVIVAL
                };
                denominators[j][t] = r;
            }
        }
        Ok(DiagonalSolution {
            survival,
            denominators,
            floors,
        })
    }

    /// The same system written as a lower-triangular linear system in
    /// `w = 1 / S_P`, ordered by horizon, and solved by forward substitution:
    ///
    /// ```text
    /// N(z,t) w(z,t) - (1-a) sum_{k<t} dF_k S_O(t-k|z+k) w(z+k,t-k) = (1-a) (1 - F(t-1))
    /// ```
    pub fn solve_linear_system(&self) -> Result<DiagonalSolution> {
        let mut index = BTreeMap::new();
        let mut order = Vec::new();
        for t in 1..=self.max_horizon() {
            for (j, node) in self.nodes.iter().enumerate() {
                if node.horizon() >= t {
                    index.insert((j, t), order.len());
                    order.push((j, t));
                }
            }
        }
        let n = order.len();
        let mut matrix = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        for (row, &(j, t)) in order.iter().enumerate() {
            let node = &self.nodes[j];
            let numerator = node.numerator(t);
            if !(numerator > 0.0) {
                return Err(Error::NonPositiveNumerator {
                    key: node.key,
                    t,
                    value: numerator,
                });
            }
            let keep = 1.0 - node.alpha;
            matrix[row * n + row] = numerator;
            let mut diagnosed = 0.0;
            for k in 1..t {
                let col = index[&(j + k, t - k)];
                matrix[row * n + col] =
                    -keep * node.lag_increments[k - 1] * self.nodes[j + k].overall[t - k];
                diagnosed += node.lag_increments[k - 1];
            }
            rhs[row] = keep * (1.0 - diagnosed);
        }

        let w = forward_substitution(&matrix, &rhs, n);
        let mut survival: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![1.0; n.horizon() + 1])
            .collect();
        let mut denominators = survival.clone();
        for (row, &(j, t)) in order.iter().enumerate() {
            let node = &self.nodes[j];
            let r = node.numerator(t) * w[row] / (1.0 - node.alpha);
            if !(r >= MIN_DENOMINATOR) {
                return Err(Error::SmallDenominator {
                    key: node.key,
                    t,
                    value: r,
                });
            }
            survival[j][t] = 1.0 / w[row];
            denominators[j][t] = r;
        }
        Ok(DiagonalSolution {
            survival,
            denominators,
            floors: 0,
        })
    }
}

fn forward_substitution(matrix: &[f64], rhs: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let row = &matrix[i * n..i * n + i];
        let acc: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
        x[i] = (rhs[i] - acc) / matrix[i * n + i];
    }
    x
}

/// Which prevalence recursion feeds the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrevalenceRecursion {
    /// Masses `IR (1 - alpha) S_O(s)` summed as they are.
    Unnormalised,
    /// Masses divided by the life-table survival over the lag.
    #[default]
    SurvivorNormalised,
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjustmentConfig {
    /// Largest follow-up year `K` solved for.
    pub horizon: usize,
    pub within_year: WithinYearEvaluation,
    pub prevalent_form: PrevalentSurvivalForm,
    pub prevalence: PrevalenceRecursion,
}

impl AdjustmentConfig {
    pub fn new(horizon: usize) -> Self {
        AdjustmentConfig {
            horizon,
            within_year: WithinYearEvaluation::default(),
            prevalent_form: PrevalentSurvivalForm::default(),
            prevalence: PrevalenceRecursion::default(),
        }
    }
}

/// Per-cell diagnostics of the solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDiagnostics {
    pub alpha: f64,
    /// `r(t)` at t = 0..=K.
    pub denominators: Vec<f64>,
    /// Prevalent-case survival at t = 0..=K, empty when `alpha` is 0.
    pub prevalent: Vec<f64>,
}

/// Adjusted non-cancer survival `S_P(t|z)` for each requested cell.
#[derive(Debug, Clone)]
pub struct AdjustedPopulationSurvival {
    grids: BTreeMap<StratumKey, GridSurvival>,
    diagnostics: BTreeMap<StratumKey, CellDiagnostics>,
    guards: u64,
    clips: u64,
    floors: u64,
    prevalence_caps: u64,
}

impl AdjustedPopulationSurvival {
    /// Solves every diagonal that passes through one of `targets`.
    pub fn estimate<S, I>(
        targets: I,
        lifetable: &LifeTable,
        incidence: &IncidenceTable,
        overall: &S,
        config: AdjustmentConfig,
    ) -> Result<Self>
    where
        S: OverallSurvival + ?Sized,
        I: IntoIterator<Item = StratumKey>,
    {
        if config.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1"));
        }
        let mut by_diagonal: BTreeMap<Diagonal, Vec<i32>> = BTreeMap::new();
        for key in targets {
            by_diagonal.entry(key.diagonal()).or_default().push(key.age);
        }
        if by_diagonal.is_empty() {
            return Err(Error::EmptyInput("no cells to adjust"));
        }
        let node_keys = by_diagonal.iter().flat_map(|(diag, ages)| {
            let lo = *ages.iter().min().expect("non-empty");
            let hi = *ages.iter().max().expect("non-empty") + config.horizon as i32 - 1;
            (lo..=hi).map(move |a| diag.at_age(a))
        });
        let prevalence = match config.prevalence {
            PrevalenceRecursion::Unnormalised => {
                PrevalenceTable::estimate(incidence, overall, node_keys, config.within_year)?
            }
            PrevalenceRecursion::SurvivorNormalised => {
                PrevalenceTable::estimate_survivor_normalised(
                    incidence,
                    overall,
                    lifetable,
                    node_keys,
                    config.within_year,
                )?
            }
        };

        let mut out = AdjustedPopulationSurvival {
            grids: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            guards: 0,
            clips: 0,
            floors: 0,
            prevalence_caps: prevalence.survival_caps(),
        };
        for (diag, mut ages) in by_diagonal {
            ages.sort_unstable();
            ages.dedup();
            let range = (ages[0], *ages.last().expect("non-empty"));
            let system = DiagonalSystem::assemble(
                diag,
                range,
                config.horizon,
                lifetable,
                incidence,
                &prevalence,
                overall,
                config.prevalent_form,
            )?;
            let solution = system.solve()?;
            out.floors += solution.floors;
            for age in ages {
                let j = (age - range.0) as usize;
                let node = &system.nodes[j];
                let values = out.finalise(&solution.survival[j]);
                out.grids.insert(node.key, GridSurvival::new(values)?);
                out.diagnostics.insert(
                    node.key,
                    CellDiagnostics {
                        alpha: node.alpha,
                        denominators: solution.denominators[j].clone(),
                        prevalent: node.prevalent.clone(),
                    },
                );
            }
        }
        Ok(out)
    }

    /// Clips into `[1e-9, 1]`, then enforces monotonicity.
    fn finalise(&mut self, raw: &[f64]) -> Vec<f64> {
        let mut values = Vec::with_capacity(raw.len());
        values.push(1.0);
        for &v in &raw[1..] {
            let mut s = v.clamp(MIN_SURVIVAL, 1.0);
            if s != v {
                self.clips += 1;
            }
            let prev = *values.last().expect("starts with 1");
            if s > prev {
                self.guards += 1;
                s = prev;
            }
            values.push(s);
        }
        values
    }

    pub fn grid(&self, key: &StratumKey) -> Option<&GridSurvival> {
        self.grids.get(key)
    }

    pub fn grids(&self) -> impl Iterator<Item = (&StratumKey, &GridSurvival)> {
        self.grids.iter()
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = (&StratumKey, &CellDiagnostics)> {
        self.diagnostics.iter()
    }

    /// Grid values raised to the previous value by the monotonicity guard.
    pub fn guard_count(&self) -> u64 {
        self.guards
    }

    /// Grid values clipped into `[1e-9, 1]`.
    pub fn clip_count(&self) -> u64 {
        self.clips
    }

    /// Lags where overall survival was capped at life-table survival in
    /// the prevalence recursion.
    /// Cells where the numerator was not positive, across all solved nodes.
    pub fn numerator_floors(&self) -> u64 {
        self.floors
    }

    pub fn prevalence_caps(&self) -> u64 {
        self.prevalence_caps
    }

    /// Interpolation fallbacks over all grids so far.
    pub fn interpolation_fallbacks(&self) -> u64 {
        self.grids.values().map(GridSurvival::fallback_count).sum()
    }
}
