//! Birth-cohort simulation of cancer incidence, cancer death and other-cause
//! death, with the life table, incidence table and registry derived from it,
//! and the replicate harness for the bias/rMSE study.
//!
//! Each subject has a latent age at diagnosis and a latent age at death from
//! other causes. A subject diagnosed first also gets an exponential time
//! from diagnosis to cancer death. The registry keeps patients diagnosed
//! within an age window; the population tables count everybody, so they
//! include cancer deaths and prevalent patients.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Weibull};

use crate::adjustment::{AdjustedPopulationSurvival, AdjustmentConfig};
use crate::diagnostics::RunCounters;
use crate::error::{Error, Result};
use crate::estimators::pohar_perme;
use crate::extrapolation::{OverallSurvivalSet, TailConfig};
use crate::incidence::{incidence_ratio, IncidenceTable};
use crate::lifetable::{CovariateGrid, LifeTable};
use crate::registry::{build_strata, Banding, Demographics, PatientRecord, StratumKey};

/// Offset between a replicate's cohort seed and its censoring seed.
pub const CENSORING_SEED_OFFSET: u64 = 1_000_000;
/// Offset of the seed used for the large truth cohort.
pub const TRUTH_SEED_OFFSET: u64 = 2_000_000;

/// Distribution of a latent age.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgeLaw {
    /// Hazard `rate * shape * (rate * t)^(shape - 1)`.
    Weibull { rate: f64, shape: f64 },
    /// `log T ~ Normal(log median, sigma^2)`.
    LogNormal { median: f64, sigma: f64 },
}

impl AgeLaw {
    fn sampler(&self) -> AgeSampler {
        match *self {
            AgeLaw::Weibull { rate, shape } => AgeSampler::Weibull(
                Weibull::new(1.0 / rate, shape).expect("valid Weibull parameters"),
            ),
            AgeLaw::LogNormal { median, sigma } => AgeSampler::LogNormal(
                LogNormal::new(libm::log(median), sigma).expect("valid log-normal parameters"),
            ),
        }
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            AgeLaw::Weibull { rate, shape } => libm::exp(-libm::pow(rate * t, shape)),
            AgeLaw::LogNormal { median, sigma } => {
                let z = (libm::log(t) - libm::log(median)) / sigma;
                0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
            }
        }
    }
}

enum AgeSampler {
    Weibull(Weibull<f64>),
    LogNormal(LogNormal<f64>),
}

impl AgeSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            AgeSampler::Weibull(d) => d.sample(rng),
            AgeSampler::LogNormal(d) => d.sample(rng),
        }
    }
}

/// The four simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dataset {
    One,
    Two,
    Three,
    Four,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [Dataset::One, Dataset::Two, Dataset::Three, Dataset::Four];

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(usize::from(id).checked_sub(1)?).copied()
    }

    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    pub fn diagnosis_law(self) -> AgeLaw {
        match self {
            Dataset::One => AgeLaw::Weibull {
                rate: 0.5e-2,
                shape: 1.0,
            },
            Dataset::Two => AgeLaw::Weibull {
                rate: 1.5e-2,
                shape: 1.0,
            },
            Dataset::Three => AgeLaw::LogNormal {
                median: 65.0,
                sigma: 2.0,
            },
            Dataset::Four => AgeLaw::LogNormal {
                median: 65.0,
                sigma: 1.0,
            },
        }
    }

    pub fn other_death_law(self) -> AgeLaw {
        match self {
            Dataset::One | Dataset::Two => AgeLaw::Weibull {
                rate: 1.0e-2,
                shape: 2.0,
            },
            Dataset::Three | Dataset::Four => AgeLaw::LogNormal {
                median: 75.0,
                sigma: 2.0,
            },
        }
    }
}

/// Excess hazard after diagnosis,
/// `base * age_ratio^((age - ref_age) / age_span) * year_ratio^((year - ref_year) / year_span) * sex_ratio^sex`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessHazard {
    pub base: f64,
    pub reference_age: f64,
    pub reference_year: f64,
    pub age_ratio: f64,
    pub age_span: f64,
    pub year_ratio: f64,
    pub year_span: f64,
    pub sex_ratio: f64,
}

impl Default for ExcessHazard {
    fn default() -> Self {
        ExcessHazard {
            base: 0.1,
            reference_age: 60.0,
            reference_year: 2000.0,
            age_ratio: 1.2,
            age_span: 7.5,
            year_ratio: 0.95,
            year_span: 15.0,
            sex_ratio: 0.8,
        }
    }
}

impl ExcessHazard {
    pub fn rate(&self, age: f64, year: f64, sex: u16) -> f64 {
        let age_term = libm::log(self.age_ratio) / self.age_span * (age - self.reference_age);
        let year_term = libm::log(self.year_ratio) / self.year_span * (year - self.reference_year);
        let sex_term = libm::log(self.sex_ratio) * f64::from(sex);
        self.base * libm::exp(age_term + year_term + sex_term)
    }
}

/// How person-years at risk of diagnosis are counted within a year of age.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PersonYears {
    /// Subjects leaving during the year (diagnosis or death) count half a year.
    #[default]
    MidYear,
    /// Exact time at risk.
    Exact,
}

/// Patients whose follow-up feeds the overall-survival curves used by the
/// adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverallSurvivalSource {
    /// Only the analysed patients; other ages borrow the nearest curve.
    #[default]
    AnalysisWindow,
    /// Every diagnosed cohort member, so each diagnosis age has its own curve.
    AllDiagnosed,
}

/// One simulation setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub dataset: Dataset,
    pub cohort_size: usize,
    pub birth_year: i32,
    /// Diagnosis ages `[lo, hi)` analysed for net survival.
    pub diagnosis_window: (i32, i32),
    /// Which patients the overall-survival curves are estimated from.
    pub overall_survival_source: OverallSurvivalSource,
    /// Censoring is uniform on `[0, censoring_max]`.
    pub censoring_max: f64,
    pub excess: ExcessHazard,
    pub replicates: usize,
    pub seed: u64,
    pub person_years: PersonYears,
    /// Oldest age kept in the derived tables.
    pub table_max_age: i32,
    pub truth_size: usize,
    /// Tail settings for overall survival; each method supplies its own
    /// anchor count.
    pub tail: TailConfig,
    pub adjustment: AdjustmentConfig,
}

impl ScenarioConfig {
    pub fn new(dataset: Dataset) -> Self {
        ScenarioConfig {
            dataset,
            cohort_size: 50_000,
            birth_year: 1960,
            diagnosis_window: (60, 75),
            overall_survival_source: OverallSurvivalSource::default(),
            censoring_max: 15.0,
            excess: ExcessHazard::default(),
            replicates: 1000,
            seed: 20_240_101,
            person_years: PersonYears::MidYear,
            table_max_age: 120,
            truth_size: 500_000,
            tail: TailConfig::default(),
            adjustment: AdjustmentConfig::new(15),
        }
    }

    /// Cohort seed of replicate `r`.
    pub fn cohort_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    /// Censoring seed of replicate `r`.
    pub fn censoring_seed(&self, r: usize) -> u64 {
        self.seed
            .wrapping_add(CENSORING_SEED_OFFSET)
            .wrapping_add(r as u64)
    }
}

/// Latent natural history of one cohort member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectHistory {
    pub sex: u16,
    /// Potential age at diagnosis.
    pub diagnosis_age: f64,
    /// Potential age at death from other causes.
    pub other_death_age: f64,
    /// Time from diagnosis to cancer death; present only when diagnosis
    /// comes before other-cause death.
    pub cancer_death_lag: Option<f64>,
}

impl SubjectHistory {
    pub fn is_diagnosed(&self) -> bool {
        self.cancer_death_lag.is_some()
    }

    /// Time from diagnosis to death from any cause.
    pub fn survival_after_diagnosis(&self) -> Option<f64> {
        self.cancer_death_lag
            .map(|lag| lag.min(self.other_death_age - self.diagnosis_age))
    }

    pub fn death_age(&self) -> f64 {
        match self.cancer_death_lag {
            Some(lag) => (self.diagnosis_age + lag).min(self.other_death_age),
            None => self.other_death_age,
        }
    }

    /// Age at which the subject stops being cancer-free and alive.
    pub fn cancer_free_until(&self) -> f64 {
        if self.is_diagnosed() {
            self.diagnosis_age
        } else {
            self.other_death_age
        }
    }
}

/// Draws the cohort. Each subject consumes sex, diagnosis age, other-death
/// age and, if diagnosed first, a cancer-death lag, in that order.
pub fn generate_cohort(cfg: &ScenarioConfig, seed: u64) -> Vec<SubjectHistory> {
    generate(cfg, cfg.cohort_size, seed)
}

fn generate(cfg: &ScenarioConfig, n: usize, seed: u64) -> Vec<SubjectHistory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diagnosis = cfg.dataset.diagnosis_law().sampler();
    let other = cfg.dataset.other_death_law().sampler();
    let unit = Exp::new(1.0).expect("unit rate");
    (0..n)
        .map(|_| {
            let sex = u16::from(rng.random_bool(0.5));
            let diagnosis_age = diagnosis.sample(&mut rng);
            let other_death_age = other.sample(&mut rng);
            let cancer_death_lag = (diagnosis_age < other_death_age).then(|| {
                let rate = cfg.excess.rate(
                    diagnosis_age,
                    f64::from(cfg.birth_year) + diagnosis_age,
                    sex,
                );
                unit.sample(&mut rng) / rate
            });
            SubjectHistory {
                sex,
                diagnosis_age,
                other_death_age,
                cancer_death_lag,
            }
        })
        .collect()
}

/// Population tables derived from one cohort, with the raw counts behind
/// the incidence rates.
#[derive(Debug, Clone)]
pub struct DerivedTables {
    pub lifetable: LifeTable,
    pub incidence: IncidenceTable,
    /// New diagnoses per cell on the cohort's diagonal.
    pub diagnoses: Vec<(StratumKey, f64)>,
    /// Cancer-free person-years per cell on the cohort's diagonal.
    pub person_years: Vec<(StratumKey, f64)>,
}

/// Annual death probabilities and incidence rates by age and sex.
///
/// A single birth cohort only visits one Lexis diagonal, so each age's rate
/// is used for every calendar year of the table. Ages end at the last age
/// with survivors in every sex, capped at `table_max_age`.
pub fn derive_tables(cohort: &[SubjectHistory], cfg: &ScenarioConfig) -> Result<DerivedTables> {
    if cohort.is_empty() {
        return Err(Error::EmptyInput("cohort is empty"));
    }
    let sexes = [0u16, 1];
    let cap = cfg.table_max_age.max(0) as usize;
    let bins = cap + 2;
    // Per sex: deaths by age, leavers of the cancer-free state by age,
    // diagnoses by age, and exact time at risk spent in the leaving year.
    let mut deaths = vec![vec![0u64; bins]; 2];
    let mut leavers = vec![vec![0u64; bins]; 2];
    let mut diagnoses = vec![vec![0u64; bins]; 2];
    let mut partial = vec![vec![0.0f64; bins]; 2];
    for s in cohort {
        let sex = usize::from(s.sex.min(1));
        deaths[sex][age_bin(s.death_age(), bins)] += 1;
        let exit = s.cancer_free_until();
        let bin = age_bin(exit, bins);
        leavers[sex][bin] += 1;
        partial[sex][bin] += exit - bin as f64;
        if s.is_diagnosed() {
            diagnoses[sex][age_bin(s.diagnosis_age, bins)] += 1;
        }
    }

    let present: Vec<usize> = (0..2)
        .filter(|&sex| deaths[sex].iter().any(|&d| d > 0))
        .collect();
    let mut last_age = cap;
    for &sex in &present {
        let alive_at = survivors(&deaths[sex]);
        let populated = (0..=cap).rev().find(|&a| alive_at[a] > 0).unwrap_or(0);
        last_age = last_age.min(populated);
    }
    if last_age < cap {
        log::info!("derived tables truncated at age {last_age}");
    }

    let mut q = vec![vec![0.0; last_age + 1]; 2];
    let mut ir = vec![vec![0.0; last_age + 1]; 2];
    let mut diagnosis_cells = Vec::new();
    let mut person_year_cells = Vec::new();
    for &sex in &present {
        let alive_at = survivors(&deaths[sex]);
        let free_at = survivors(&leavers[sex]);
        for a in 0..=last_age {
            q[sex][a] = deaths[sex][a] as f64 / alive_at[a] as f64;
            let full = (free_at[a] - leavers[sex][a]) as f64;
            let py = match cfg.person_years {
                PersonYears::MidYear => full + 0.5 * leavers[sex][a] as f64,
                PersonYears::Exact => full + partial[sex][a],
            };
            let key = StratumKey::new(
                a as i32,
                cfg.birth_year + a as i32,
                Demographics::single(sexes[sex]),
            );
            let d = diagnoses[sex][a] as f64;
            ir[sex][a] = incidence_ratio(&key, d, py)?.0;
            diagnosis_cells.push((key, d));
            person_year_cells.push((key, py));
        }
    }

    let ages = (0, last_age as i32);
    let years = (cfg.birth_year, cfg.birth_year + last_age as i32);
    let demographics: Vec<Demographics> = present
        .iter()
        .map(|&s| Demographics::single(sexes[s]))
        .collect();
    let lifetable =
        LifeTable::from_grid(CovariateGrid::from_fn(ages, years, &demographics, |k| {
            q[usize::from(k.demographics.codes()[0])][k.age as usize]
        }))?;
    let incidence =
        IncidenceTable::from_grid(CovariateGrid::from_fn(ages, years, &demographics, |k| {
            ir[usize::from(k.demographics.codes()[0])][k.age as usize]
        }))?;
    Ok(DerivedTables {
        lifetable,
        incidence,
        diagnoses: diagnosis_cells,
        person_years: person_year_cells,
    })
}

fn age_bin(age: f64, bins: usize) -> usize {
    (libm::floor(age.max(0.0)) as usize).min(bins - 1)
}

/// Number still present at each exact age, from counts of exits by age.
fn survivors(exits: &[u64]) -> Vec<u64> {
    let mut out = vec![0; exits.len()];
    let mut acc = 0;
    for a in (0..exits.len()).rev() {
        acc += exits[a];
        out[a] = acc;
    }
    out
}

/// Every diagnosed cohort member, censored uniformly. Censoring times are
/// drawn in cohort order, one per diagnosed subject.
pub fn make_full_registry(
    cohort: &[SubjectHistory],
    cfg: &ScenarioConfig,
    censor_seed: u64,
) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(censor_seed);
    let censoring = Uniform::new_inclusive(0.0, cfg.censoring_max).expect("valid censoring range");
    cohort
        .iter()
        .filter(|s| s.is_diagnosed())
        .map(|s| {
            let survival = s.survival_after_diagnosis().expect("diagnosed");
            let c = censoring.sample(&mut rng);
            let age = libm::floor(s.diagnosis_age) as i32;
            PatientRecord {
                age_diag: age,
                year_diag: cfg.birth_year + age,
                demographics: Demographics::single(s.sex),
                time: survival.min(c),
                event: survival <= c,
            }
        })
        .collect()
}

/// Registry records of patients diagnosed within the analysis window.
pub fn analysis_window(records: &[PatientRecord], cfg: &ScenarioConfig) -> Vec<PatientRecord> {
    let (lo, hi) = cfg.diagnosis_window;
    records
        .iter()
        .filter(|r| r.age_diag >= lo && r.age_diag < hi)
        .copied()
        .collect()
}

/// Patients diagnosed within the window, censored uniformly.
pub fn make_registry(
    cohort: &[SubjectHistory],
    cfg: &ScenarioConfig,
    censor_seed: u64,
) -> Vec<PatientRecord> {
    analysis_window(&make_full_registry(cohort, cfg, censor_seed), cfg)
}

/// Net survival averaged over patients diagnosed within the window in a
/// fresh cohort of `truth_size` subjects.
pub fn true_net_survival(cfg: &ScenarioConfig, years: &[f64]) -> Vec<f64> {
    let cohort = generate(
        cfg,
        cfg.truth_size,
        cfg.seed.wrapping_add(TRUTH_SEED_OFFSET),
    );
    let (lo, hi) = cfg.diagnosis_window;
    let rates: Vec<f64> = cohort
        .iter()
        .filter(|s| {
            s.is_diagnosed() && s.diagnosis_age >= f64::from(lo) && s.diagnosis_age < f64::from(hi)
        })
        .map(|s| {
            cfg.excess.rate(
                s.diagnosis_age,
                f64::from(cfg.birth_year) + s.diagnosis_age,
                s.sex,
            )
        })
        .collect();
    years
        .iter()
        .map(|&t| rates.iter().map(|r| libm::exp(-r * t)).sum::<f64>() / rates.len() as f64)
        .collect()
}

/// Non-cancer survival from exact age `age` for `t` years.
pub fn true_population_survival(cfg: &ScenarioConfig, age: f64, t: f64) -> f64 {
    let law = cfg.dataset.other_death_law();
    law.survival(age + t) / law.survival(age)
}

/// Overall survival `t` years after diagnosis at exact age `age`.
pub fn true_overall_survival(cfg: &ScenarioConfig, age: f64, sex: u16, t: f64) -> f64 {
    let rate = cfg.excess.rate(age, f64::from(cfg.birth_year) + age, sex);
    libm::exp(-rate * t) * true_population_survival(cfg, age, t)
}

/// Net-survival estimator compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Pohar-Perme with the life table as it is.
    NaivePoharPerme,
    /// Pohar-Perme with the adjusted population survival, `H` anchor points.
    AdjustedPoharPerme { anchor_points: usize },
}

/// Everything kept from one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub patients: usize,
    pub events: usize,
    /// Per method, net survival at the requested years, or why the method
    /// failed on this replicate.
    pub estimates: Vec<(Method, Result<Vec<f64>>)>,
    pub counters: RunCounters,
}

/// Full pipeline for replicate `r`: cohort, tables, registry, estimators.
pub fn run_replicate(
    cfg: &ScenarioConfig,
    methods: &[Method],
    years: &[f64],
    r: usize,
) -> Result<ReplicateOutcome> {
    let cohort = generate_cohort(cfg, cfg.cohort_seed(r));
    let tables = derive_tables(&cohort, cfg)?;
    let full = make_full_registry(&cohort, cfg, cfg.censoring_seed(r));
    drop(cohort);
    let registry = analysis_window(&full, cfg);
    let survival_records = match cfg.overall_survival_source {
        OverallSurvivalSource::AllDiagnosed => full.as_slice(),
        OverallSurvivalSource::AnalysisWindow => registry.as_slice(),
    };
    let mut counters = RunCounters::default();
    let mut estimates = Vec::with_capacity(methods.len());
    for &method in methods {
        let estimate = match method {
            Method::NaivePoharPerme => pohar_perme(&registry, &tables.lifetable),
            Method::AdjustedPoharPerme { anchor_points } => adjusted_population_survival(
                &registry,
                survival_records,
                &tables,
                cfg,
                anchor_points,
                &mut counters,
            )
            .and_then(|adjusted| pohar_perme(&registry, &adjusted)),
        };
        let values = estimate.map(|e| {
            counters.weight_caps += e.capped_intervals;
            years.iter().map(|&t| e.survival_at(t)).collect()
        });
        if let Err(e) = &values {
            log::warn!("replicate {r}: {method:?} failed: {e}");
        }
        estimates.push((method, values));
    }
    counters.lifetable_clamps = tables.lifetable.clamp_count();
    counters.incidence_clamps = tables.incidence.clamp_count();
    Ok(ReplicateOutcome {
        patients: registry.len(),
        events: registry.iter().filter(|r| r.event).count(),
        estimates,
        counters,
    })
}

/// Adjusted population survival for every covariate cell of `registry`,
/// with overall survival estimated from `survival_records`.
pub fn adjusted_population_survival(
    registry: &[PatientRecord],
    survival_records: &[PatientRecord],
    tables: &DerivedTables,
    cfg: &ScenarioConfig,
    anchor_points: usize,
    counters: &mut RunCounters,
) -> Result<AdjustedPopulationSurvival> {
    let strata = build_strata(survival_records, Banding::default())?;
    counters.stratum_merges += strata.merges();
    let overall = OverallSurvivalSet::new(
        strata,
        TailConfig {
            anchor_points,
            ..cfg.tail
        },
    )?;
    let adjusted = AdjustedPopulationSurvival::estimate(
        registry.iter().map(PatientRecord::key),
        &tables.lifetable,
        &tables.incidence,
        &overall,
        cfg.adjustment,
    )?;
    counters.overall_survival_clamps += overall.clamp_count();
    counters.tail_fallbacks += overall.tail_fallbacks();
    counters.tail_slope_clips += overall.slope_clips();
    counters.monotonicity_guards += adjusted.guard_count();
    counters.range_clips += adjusted.clip_count();
    counters.numerator_floors += adjusted.numerator_floors();
    counters.interpolation_fallbacks += adjusted.interpolation_fallbacks();
    counters.prevalence_survival_caps += adjusted.prevalence_caps();
    Ok(adjusted)
}

/// Median with range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountSummary {
    pub median: f64,
    pub min: usize,
    pub max: usize,
}

impl CountSummary {
    fn of(mut values: Vec<usize>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_unstable();
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2] as f64
        } else {
            (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
        };
        Some(CountSummary {
            median,
            min: values[0],
            max: values[n - 1],
        })
    }
}

/// Bias and accuracy of one method at one year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub year: f64,
    pub truth: f64,
    pub mean: f64,
    /// `100 (mean - truth) / truth`.
    pub percent_bias: f64,
    /// Root mean squared error (not scaled).
    pub rmse: f64,
    /// Replicates where the method succeeded.
    pub used: usize,
}

/// Aggregated study results for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub dataset: Dataset,
    pub replicates: usize,
    /// Replicates that failed before any estimator ran.
    pub excluded: usize,
    /// Per method, replicates where that estimator failed.
    pub method_failures: Vec<(Method, usize)>,
    pub patients: Option<CountSummary>,
    pub events: Option<CountSummary>,
    pub rows: Vec<MethodSummary>,
    pub counters: RunCounters,
}

impl ExperimentResult {
    pub fn row(&self, method: Method, year: f64) -> Option<&MethodSummary> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.year == year)
    }
}

/// Reduces replicate outcomes, in replicate order, to the study tables.
pub fn aggregate(
    cfg: &ScenarioConfig,
    methods: &[Method],
    years: &[f64],
    truth: &[f64],
    outcomes: &[Result<ReplicateOutcome>],
) -> ExperimentResult {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    for (r, o) in outcomes.iter().enumerate() {
        if let Err(e) = o {
            log::warn!("replicate {r} excluded: {e}");
        }
    }
    let mut counters = RunCounters::default();
    for o in &ok {
        counters.merge(&o.counters);
    }
    let mut rows = Vec::with_capacity(methods.len() * years.len());
    for &method in methods {
        for (j, (&year, &true_value)) in years.iter().zip(truth).enumerate() {
            let values: Vec<f64> = ok
                .iter()
                .filter_map(|o| o.estimates.iter().find(|(m, _)| *m == method))
                .filter_map(|(_, v)| v.as_ref().ok().map(|v| v[j]))
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let mse = values
                .iter()
                .map(|v| (v - true_value) * (v - true_value))
                .sum::<f64>()
                / n;
            rows.push(MethodSummary {
                method,
                year,
                truth: true_value,
                mean,
                percent_bias: 100.0 * (mean - true_value) / true_value,
                rmse: libm::sqrt(mse),
                used: values.len(),
            });
        }
    }
    ExperimentResult {
        dataset: cfg.dataset,
        replicates: outcomes.len(),
        excluded: outcomes.len() - ok.len(),
        method_failures: methods
            .iter()
            .map(|&method| {
                let failed = ok
                    .iter()
                    .filter(|o| o.estimates.iter().any(|(m, v)| *m == method && v.is_err()))
                    .count();
                (method, failed)
            })
            .collect(),
        patients: CountSummary::of(ok.iter().map(|o| o.patients).collect()),
        events: CountSummary::of(ok.iter().map(|o| o.events).collect()),
        rows,
        counters,
    }
}

/// Runs `cfg.replicates` replicates one after another and aggregates them.
pub fn run_experiment(cfg: &ScenarioConfig, methods: &[Method], years: &[f64]) -> ExperimentResult {
    let truth = true_net_survival(cfg, years);
    let outcomes: Vec<Result<ReplicateOutcome>> = (0..cfg.replicates)
        .map(|r| run_replicate(cfg, methods, years, r))
        .collect();
    aggregate(cfg, methods, years, &truth, &outcomes)
}
