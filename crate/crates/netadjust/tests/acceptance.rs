//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; the process fails if any criterion does.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use netadjust::cli::{Cli, Command};
use netadjust::commands::Study;
use netadjust::experiment::run_parallel;
use netadjust_core::adjustment::{
    prevalent_case_survival, AdjustedPopulationSurvival, AdjustmentConfig, DiagonalSystem,
    NodeInputs, PrevalentSurvivalForm,
};
use netadjust_core::diagnostics::RunCounters;
use netadjust_core::estimators::{crude_probability, ederer1, pohar_perme, NoPopulationMortality};
use netadjust_core::extrapolation::{fit_tail, loglinear_interpolate, ExtendedSurvival};
use netadjust_core::incidence::{f_l_to_d, IncidenceTable, PrevalenceTable, WithinYearEvaluation};
use netadjust_core::lifetable::{CovariateGrid, LifeTable};
use netadjust_core::registry::{
    kaplan_meier, nelson_aalen, EventTable, StepSurvivalCurve, SurvivalFunction,
};
use netadjust_core::simulation::{
    adjusted_population_survival, derive_tables, generate_cohort, make_registry,
    true_overall_survival, true_population_survival, Dataset, DerivedTables, ExperimentResult,
    Method, ScenarioConfig, SubjectHistory,
};
use netadjust_core::{Demographics, PatientRecord, StratumKey};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;

fn demo(sex: u16) -> Demographics {
    Demographics::from_codes(&[sex]).unwrap()
}

fn study(args: &[&str]) -> Study {
    let argv = ["netadjust", "simulate", "--out", "unused"]
        .iter()
        .chain(args)
        .copied();
    match Cli::parse_from(argv).command {
        Command::Simulate(a) => Study::resolve(&a).unwrap(),
        _ => unreachable!(),
    }
}

fn row(result: &ExperimentResult, method: Method, year: f64) -> (f64, f64) {
    let r = result.row(method, year).expect("row present");
    (r.percent_bias, r.rmse)
}

const NAIVE: Method = Method::NaivePoharPerme;
const ADJUSTED: Method = Method::AdjustedPoharPerme { anchor_points: 4 };

fn clean(result: &ExperimentResult) -> Result<(), String> {
    let failed: usize = result.method_failures.iter().map(|(_, n)| n).sum();
    if result.excluded > 0 || failed > 0 {
        return Err(format!(
            "{} replicates excluded, {failed} method failures",
            result.excluded
        ));
    }
    Ok(())
}

fn table2_high_incidence(result: &ExperimentResult) -> Outcome {
    clean(result)?;
    let (naive, naive_rmse10) = row(result, NAIVE, 10.0);
    let (adjusted, adjusted_rmse10) = row(result, ADJUSTED, 10.0);
    let mut problems = Vec::new();
    if !(15.0..=24.0).contains(&naive) {
        problems.push(format!("naive bias {naive:.2}% outside [15, 24]"));
    }
    if !(-2.0..=6.0).contains(&adjusted) {
        problems.push(format!("adjusted bias {adjusted:.2}% outside [-2, 6]"));
    }
    for year in [5.0, 7.0, 10.0] {
        let (_, n) = row(result, NAIVE, year);
        let (_, a) = row(result, ADJUSTED, year);
        if a >= n {
            problems.push(format!(
                "year {year}: adjusted rMSE {a:.4} not below naive {n:.4}"
            ));
        }
    }
    let detail = format!(
        "year-10 bias naive {naive:.2}%, adjusted {adjusted:.2}%; rMSE {naive_rmse10:.4} -> {adjusted_rmse10:.4}"
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn table2_low_incidence(result: &ExperimentResult) -> Outcome {
    clean(result)?;
    let (naive, _) = row(result, NAIVE, 10.0);
    let (adjusted, _) = row(result, ADJUSTED, 10.0);
    let detail = format!("year-10 bias naive {naive:.2}%, adjusted {adjusted:.2}%");
    if (3.0..=9.0).contains(&naive) && (-2.0..=3.0).contains(&adjusted) {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; want naive in [3, 9], adjusted in [-2, 3]"
        ))
    }
}

fn table1_counts(result: &ExperimentResult) -> Outcome {
    clean(result)?;
    let patients = result.patients.ok_or("no replicates")?.median;
    let events = result.events.ok_or("no replicates")?.median;
    let detail = format!("median patients {patients}, median events {events}");
    if (1572.0..=1836.0).contains(&patients) && (771.0..=970.0).contains(&events) {
        Ok(detail)
    } else {
        Err(format!("{detail}; want [1572, 1836] and [771, 970]"))
    }
}

// Random registries and life tables shared by the identity checks.

fn records(max: usize) -> impl Strategy<Value = Vec<PatientRecord>> {
    prop::collection::vec(
        (60i32..75, 1995i32..2010, 0u16..2, 1u32..60, any::<bool>()),
        1..max,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(a, y, s, q, e)| {
                PatientRecord::new(a, y, demo(s), f64::from(q) * 0.25, e).unwrap()
            })
            .collect()
    })
}

fn lifetable() -> impl Strategy<Value = LifeTable> {
    (prop::collection::vec(0.0..0.3f64, 61), 0.0..0.01f64).prop_map(|(q, trend)| {
        let grid = CovariateGrid::from_fn((40, 100), (1980, 2060), &[demo(0), demo(1)], |k| {
            let base = q[(k.age - 40) as usize] * (1.0 - trend * f64::from(k.year - 1980));
            base * if k.demographics.codes()[0] == 1 {
                0.8
            } else {
                1.0
            }
        });
        LifeTable::from_grid(grid).unwrap()
    })
}

fn fuzz<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, check)
        .map(|()| format!("{cases} random cases"))
        .map_err(|e| e.to_string())
}

fn null_adjustment() -> Outcome {
    fuzz(256, (lifetable(), records(60)), |(lt, recs)| {
        let zero = IncidenceTable::zero((40, 100), (1980, 2060), &[demo(0), demo(1)]);
        let overall = |_: &StratumKey, t: f64| (-0.2 * t).exp();
        let adjusted = AdjustedPopulationSurvival::estimate(
            recs.iter().map(PatientRecord::key),
            &lt,
            &zero,
            &overall,
            AdjustmentConfig::new(15),
        )
        .unwrap();
        for (k, grid) in adjusted.grids() {
            let diagonal = lt.diagonal_survival(k, 15).unwrap().values;
            for (a, b) in grid.values().iter().zip(&diagonal) {
                prop_assert!((a - b).abs() <= 1e-12, "{}: {} vs {}", k, a, b);
            }
        }
        let naive = pohar_perme(&recs, &lt).unwrap();
        let with_adjusted = pohar_perme(&recs, &adjusted).unwrap();
        for (i, &t) in naive.times.iter().enumerate() {
            prop_assert!(
                (naive.hazard(i) - with_adjusted.hazard(i)).abs() <= 1e-12,
                "t {}",
                t
            );
            prop_assert!((naive.survival_at(t) - with_adjusted.survival_at(t)).abs() <= 1e-12);
        }
        Ok(())
    })
}

// Random lower-triangular systems for the solver oracle.

fn curve(factors: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0];
    for f in factors {
        let last = *out.last().unwrap();
        out.push(last * f);
    }
    out
}

fn node(key: StratumKey, h: usize) -> impl Strategy<Value = NodeInputs> {
    (
        prop::collection::vec(0.85..1.0f64, h),
        0.0..0.4f64,
        prop::collection::vec(0.3..1.0f64, h),
        prop::collection::vec(0.0..0.06f64, h),
        prop::collection::vec(0.6..1.0f64, h),
    )
        .prop_map(move |(lt, alpha, share, incidence, overall)| {
            let lifetable = curve(&lt);
            // Prevalent cases never outlive the whole cell.
            let prevalent = (0..=h)
                .map(|t| {
                    if t == 0 {
                        1.0
                    } else {
                        lifetable[t] * share[t - 1]
                    }
                })
                .collect();
            let mut free = 1.0;
            let lag_increments = incidence
                .iter()
                .map(|ir| {
                    let d = free * ir;
                    free *= 1.0 - ir;
                    d
                })
                .collect();
            NodeInputs {
                key,
                lifetable,
                alpha,
                prevalent,
                lag_increments,
                overall: curve(&overall),
            }
        })
}

fn system() -> impl Strategy<Value = DiagonalSystem> {
    (1usize..8, 1usize..10, 40..80i32, 0u16..2).prop_flat_map(
        |(registry_ages, horizon, age, sex)| {
            let nodes = registry_ages + horizon - 1;
            let first = StratumKey::new(age, 1950 + age, demo(sex));
            let strategies: Vec<_> = (0..nodes)
                .map(|j| node(first.shifted(j as i32), horizon.min(nodes - j)))
                .collect();
            strategies.prop_map(|n| DiagonalSystem::new(n).unwrap())
        },
    )
}

fn solver_oracle() -> Outcome {
    fuzz(1000, system(), |system| {
        let recursive = system.solve().unwrap();
        let explicit = system.solve_linear_system().unwrap();
        prop_assert_eq!(recursive.floors, 0);
        let pairs = recursive
            .survival
            .iter()
            .zip(&explicit.survival)
            .chain(recursive.denominators.iter().zip(&explicit.denominators));
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{} vs {}", x, y);
            }
        }
        Ok(())
    })
}

// Prevalence and lag distributions against direct counting.

const AGES: std::ops::Range<i32> = 60..75;
const Z: f64 = 3.0;

struct Fixture {
    cfg: ScenarioConfig,
    cohort: Vec<SubjectHistory>,
    tables: DerivedTables,
    prevalence: PrevalenceTable,
}

fn cell(cfg: &ScenarioConfig, age: i32, sex: u16) -> StratumKey {
    StratumKey::new(age, cfg.birth_year + age, demo(sex))
}

/// True overall survival, diagnoses placed mid-year within each cell.
fn overall(cfg: &ScenarioConfig) -> impl Fn(&StratumKey, f64) -> f64 + '_ {
    move |k: &StratumKey, t: f64| {
        true_overall_survival(cfg, f64::from(k.age) + 0.5, k.demographics.codes()[0], t)
    }
}

fn fixture(dataset: Dataset, cohort_size: usize) -> Fixture {
    let cfg = ScenarioConfig {
        cohort_size,
        ..ScenarioConfig::new(dataset)
    };
    let cohort = generate_cohort(&cfg, cfg.cohort_seed(0));
    let tables = derive_tables(&cohort, &cfg).unwrap();
    let targets: Vec<StratumKey> = [0, 1]
        .iter()
        .flat_map(|&s| AGES.map(move |a| (a, s)))
        .map(|(a, s)| cell(&cfg, a, s))
        .collect();
    let prevalence = PrevalenceTable::estimate_survivor_normalised(
        &tables.incidence,
        &overall(&cfg),
        &tables.lifetable,
        targets,
        WithinYearEvaluation::MidYear,
    )
    .unwrap();
    Fixture {
        cfg,
        cohort,
        tables,
        prevalence,
    }
}

#[derive(Default)]
struct Tally {
    checks: usize,
    max_z: f64,
    failures: Vec<String>,
}

impl Tally {
    fn within(&mut self, estimate: f64, counted: f64, n: usize, what: impl FnOnce() -> String) {
        let se = (counted * (1.0 - counted) / n as f64)
            .sqrt()
            .max(1.0 / n as f64);
        let z = (estimate - counted).abs() / se;
        self.checks += 1;
        self.max_z = self.max_z.max(z);
        if z > Z {
            self.failures.push(format!(
                "{}: {estimate:.5} vs {counted:.5} (z {z:.2})",
                what()
            ));
        }
    }
}

fn alive_at(
    cohort: &[SubjectHistory],
    sex: u16,
    age: f64,
) -> impl Iterator<Item = &SubjectHistory> {
    cohort
        .iter()
        .filter(move |s| s.sex == sex && s.death_age() > age)
}

/// Actuarial probability of diagnosis within `t` years among the
/// cancer-free alive at `age`, other-cause deaths withdrawn mid-year.
fn counted_time_to_diagnosis(
    cohort: &[SubjectHistory],
    sex: u16,
    age: f64,
    t: usize,
) -> (f64, usize) {
    let free: Vec<_> = alive_at(cohort, sex, age)
        .filter(|s| s.cancer_free_until() > age)
        .collect();
    let mut survival = 1.0;
    for y in 0..t {
        let (lo, hi) = (age + y as f64, age + y as f64 + 1.0);
        let (mut n, mut diagnosed, mut withdrawn) = (0usize, 0usize, 0usize);
        for s in free.iter().filter(|s| s.cancer_free_until() > lo) {
            n += 1;
            if s.cancer_free_until() <= hi {
                if s.is_diagnosed() {
                    diagnosed += 1;
                } else {
                    withdrawn += 1;
                }
            }
        }
        survival *= 1.0 - diagnosed as f64 / (n as f64 - 0.5 * withdrawn as f64);
    }
    (1.0 - survival, free.len())
}

fn check_lags(f: &Fixture, tally: &mut Tally) {
    for sex in [0, 1] {
        for a in AGES {
            let age = f64::from(a);
            let k = cell(&f.cfg, a, sex);
            let alive: Vec<_> = alive_at(&f.cohort, sex, age).collect();
            let prevalent: Vec<_> = alive
                .iter()
                .filter(|s| s.is_diagnosed() && s.diagnosis_age < age)
                .collect();
            let alpha = f.prevalence.alpha(&k).unwrap();
            tally.within(
                alpha,
                prevalent.len() as f64 / alive.len() as f64,
                alive.len(),
                || format!("alpha {k}"),
            );
            let lags = f.prevalence.backward_lag_distribution(&k).unwrap();
            for t in [1usize, 5, 10, 20] {
                let counted = prevalent
                    .iter()
                    .filter(|s| age - s.diagnosis_age <= t as f64)
                    .count();
                tally.within(
                    lags.at(t),
                    counted as f64 / prevalent.len() as f64,
                    prevalent.len(),
                    || format!("F_DL({t}) {k}"),
                );
            }
            for t in [1usize, 5, 10] {
                let (counted, n) = counted_time_to_diagnosis(&f.cohort, sex, age, t);
                let estimate = f_l_to_d(&f.tables.incidence, &k, t).unwrap();
                tally.within(estimate, counted, n, || format!("F_LD({t}) {k}"));
            }
        }
    }
}

fn check_prevalent_survival(f: &Fixture, tally: &mut Tally) {
    let overall = overall(&f.cfg);
    for sex in [0, 1] {
        for a in AGES {
            let age = f64::from(a);
            let k = cell(&f.cfg, a, sex);
            let prevalent: Vec<_> = alive_at(&f.cohort, sex, age)
                .filter(|s| s.is_diagnosed() && s.diagnosis_age < age)
                .collect();
            let curve = prevalent_case_survival(
                &k,
                &overall,
                &f.prevalence,
                10,
                PrevalentSurvivalForm::Conditional,
            )
            .unwrap();
            for t in [1usize, 5, 10] {
                let counted = prevalent
                    .iter()
                    .filter(|s| s.death_age() > age + t as f64)
                    .count();
                tally.within(
                    curve.values[t],
                    counted as f64 / prevalent.len() as f64,
                    prevalent.len(),
                    || format!("prevalent S({t}) {k}"),
                );
            }
        }
    }
}

fn lag_oracles() -> Outcome {
    let mut tally = Tally::default();
    for dataset in Dataset::ALL {
        check_lags(&fixture(dataset, 50_000), &mut tally);
    }
    // 180 survival cells per dataset; the larger cohort keeps the family of
    // 3-SE checks from tripping on noise alone.
    for dataset in [Dataset::One, Dataset::Two] {
        check_prevalent_survival(&fixture(dataset, 200_000), &mut tally);
    }
    let detail = format!("{} checks, max |z| {:.2}", tally.checks, tally.max_z);
    if tally.failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", tally.failures.join("; ")))
    }
}

fn extrapolation_exactness() -> Outcome {
    let tail = fuzz(
        500,
        (0.0..2.0f64, 4usize..20, 2usize..8),
        |(rate, tau, h)| {
            let times: Vec<f64> = (1..=tau).map(|k| k as f64).collect();
            let values: Vec<f64> = times.iter().map(|t| (-rate * t).exp()).collect();
            let base = StepSurvivalCurve::from_steps(times, values).unwrap();
            let anchors: Vec<f64> = (tau + 1 - h.min(tau)..=tau).map(|k| k as f64).collect();
            let fit = fit_tail(&base, &anchors).unwrap();
            prop_assert!(fit.intercept.abs() < 1e-10 && (fit.slope - rate).abs() < 1e-10);
            let ext = ExtendedSurvival::new(base, tau as f64, h);
            for extra in [0.5, 3.0, 17.25] {
                let t = tau as f64 + extra;
                prop_assert!((ext.survival_at(t) - (-rate * t).exp()).abs() < 1e-10);
            }
            Ok(())
        },
    )?;
    let grid_points = fuzz(500, prop::collection::vec(0.5..1.0f64, 1..20), |factors| {
        let grid = curve(&factors);
        for (k, &v) in grid.iter().enumerate() {
            prop_assert_eq!(loglinear_interpolate(&grid, k as f64), v);
        }
        Ok(())
    })?;
    let between = fuzz(500, (0.0..1.0f64, 0.0..10.0f64), |(rate, t)| {
        let grid: Vec<f64> = (0..=10).map(|k| (-rate * k as f64).exp()).collect();
        prop_assert!((loglinear_interpolate(&grid, t) - (-rate * t).exp()).abs() < 1e-12);
        Ok(())
    })?;
    Ok(format!(
        "tail fit: {tail}; grid points: {grid_points}; between points: {between}"
    ))
}

/// Mean |adjusted S_P - true other-cause survival| over registry cells at
/// t = 1, 5, 10.
fn population_survival_error(cohort_size: usize, replicates: usize) -> Result<f64, String> {
    let cfg = ScenarioConfig {
        cohort_size,
        ..ScenarioConfig::new(Dataset::One)
    };
    let (mut total, mut count) = (0.0, 0usize);
    for r in 0..replicates {
        let cohort = generate_cohort(&cfg, cfg.cohort_seed(r));
        let tables = derive_tables(&cohort, &cfg).map_err(|e| e.to_string())?;
        let registry = make_registry(&cohort, &cfg, cfg.censoring_seed(r));
        let mut counters = RunCounters::default();
        let adjusted =
            adjusted_population_survival(&registry, &registry, &tables, &cfg, 4, &mut counters)
                .map_err(|e| format!("replicate {r}: {e}"))?;
        let keys: BTreeSet<StratumKey> = registry.iter().map(PatientRecord::key).collect();
        for k in keys {
            let values = adjusted
                .grid(&k)
                .expect("grid for every registry cell")
                .values();
            for t in [1usize, 5, 10] {
                total +=
                    (values[t] - true_population_survival(&cfg, f64::from(k.age), t as f64)).abs();
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

fn convergence() -> Outcome {
    let errors = [12_500, 50_000, 200_000]
        .into_iter()
        .map(|n| population_survival_error(n, 20))
        .collect::<Result<Vec<_>, _>>()?;
    let detail = format!(
        "MAE {:.5} -> {:.5} -> {:.5}",
        errors[0], errors[1], errors[2]
    );
    if errors[0] > errors[1] && errors[1] > errors[2] {
        Ok(detail)
    } else {
        Err(format!("{detail}; not strictly decreasing"))
    }
}

fn quarter_years(max: usize) -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((1u32..60, any::<bool>()), 1..max).prop_map(|v| {
        v.into_iter()
            .map(|(q, e)| (f64::from(q) * 0.25, e))
            .collect()
    })
}

fn estimator_reductions() -> Outcome {
    let unit = fuzz(300, records(80), |recs| {
        let table = EventTable::from_observations(recs.iter().map(|r| (r.time, r.event)));
        let na = nelson_aalen(&table);
        let pp = pohar_perme(&recs, &NoPopulationMortality).unwrap();
        let e1 = ederer1(&recs, &NoPopulationMortality).unwrap();
        for &t in &table.times {
            let want = (-na.value_at(t)).exp();
            prop_assert!((pp.survival_at(t) - want).abs() <= 1e-12);
            prop_assert!((e1.survival_at(t) - want).abs() <= 1e-12);
        }
        Ok(())
    })?;
    let single = fuzz(
        300,
        (lifetable(), quarter_years(80), 0u16..2),
        |(lt, obs, sex)| {
            let recs: Vec<PatientRecord> = obs
                .iter()
                .map(|&(t, e)| PatientRecord::new(65, 2001, demo(sex), t, e).unwrap())
                .collect();
            let pp = pohar_perme(&recs, &lt).unwrap();
            let e1 = ederer1(&recs, &lt).unwrap();
            let last = obs.iter().map(|o| o.0).fold(0.0, f64::max);
            for &t in pp.times.iter().filter(|&&t| t <= last) {
                prop_assert!(
                    (pp.survival_at(t) - e1.survival_at(t)).abs() <= 1e-12,
                    "t {}",
                    t
                );
            }
            Ok(())
        },
    )?;
    let crude = fuzz(300, prop::collection::vec(1u32..60, 1..80), |times| {
        let recs: Vec<PatientRecord> = times
            .iter()
            .map(|&q| PatientRecord::new(65, 2001, demo(0), f64::from(q) * 0.25, true).unwrap())
            .collect();
        let km = kaplan_meier(&EventTable::from_observations(
            recs.iter().map(|r| (r.time, true)),
        ));
        let crude = crude_probability(&recs, &NoPopulationMortality).unwrap();
        for r in &recs {
            prop_assert!((crude.cancer_at(r.time) - (1.0 - km.survival_at(r.time))).abs() <= 1e-12);
        }
        Ok(())
    })?;
    Ok(format!(
        "no population mortality: {unit}; one stratum: {single}; crude: {crude}"
    ))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                pending.push(path);
            } else {
                files.push((
                    path.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("run");
    let out_str = out.to_str().unwrap();
    let registry = out.join("replicate-0");
    let run = |jobs: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let _ = fs::remove_dir_all(&out);
        let sim = [
            "netadjust",
            "simulate",
            "--dataset",
            "2",
            "--reps",
            "4",
            "--cohort-size",
            "12500",
            "--seed",
            "7",
            "--jobs",
            jobs,
            "--export",
            "--out",
            out_str,
        ];
        netadjust::run(&Cli::parse_from(sim)).map_err(|e| e.to_string())?;
        let r = |name: &str| registry.join(name).display().to_string();
        let (reg, lt, inc) = (r("registry.csv"), r("lifetable.csv"), r("incidence.csv"));
        let est_out = out.join("estimate").display().to_string();
        let adj_out = out.join("adjust").display().to_string();
        let est = [
            "netadjust",
            "estimate",
            "--registry",
            &reg,
            "--lifetable",
            &lt,
            "--incidence",
            &inc,
            "--mode",
            "adjusted",
            "--out",
            &est_out,
        ];
        netadjust::run(&Cli::parse_from(est)).map_err(|e| e.to_string())?;
        let adj = [
            "netadjust",
            "adjust",
            "--registry",
            &reg,
            "--lifetable",
            &lt,
            "--incidence",
            &inc,
            "--out",
            &adj_out,
        ];
        netadjust::run(&Cli::parse_from(adj)).map_err(|e| e.to_string())?;
        Ok(snapshot(&out))
    };
    let first = run("1")?;
    let second = run("3")?;
    if first == second {
        Ok(format!(
            "{} files identical across reruns with 1 and 3 worker threads",
            first.len()
        ))
    } else {
        let differing: Vec<&str> = first
            .iter()
            .zip(&second)
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.0.as_str())
            .collect();
        Err(format!("outputs differ: {differing:?}"))
    }
}

fn main() {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{status}] {n:>2} {name}: {detail} ({:.0}s)",
            started.elapsed().as_secs_f64()
        );
    };

    let high = run_parallel(&study(&["--dataset", "2", "--reps", "200"])).unwrap();
    report(
        1,
        "high-incidence bias and rMSE",
        table2_high_incidence(&high),
    );
    let low = run_parallel(&study(&["--dataset", "1", "--reps", "200"])).unwrap();
    report(2, "low-incidence bias", table2_low_incidence(&low));
    report(3, "registry sizes", table1_counts(&low));
    report(4, "zero incidence leaves the life table", null_adjustment());
    report(5, "recursion equals triangular solve", solver_oracle());
    report(
        6,
        "prevalence and lag distributions match counting",
        lag_oracles(),
    );
    report(
        7,
        "log-linear extrapolation and interpolation",
        extrapolation_exactness(),
    );
    report(8, "population survival converges", convergence());
    report(9, "estimator reductions", estimator_reductions());
    report(10, "byte-identical reruns", determinism());

    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
