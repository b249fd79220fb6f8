use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use netadjust_core::adjustment::{AdjustedPopulationSurvival, AdjustmentConfig};
use netadjust_core::diagnostics::RunCounters;
use netadjust_core::estimators::{
    crude_probability, ederer1, pohar_perme, NetSurvivalEstimate, PopulationSurvival,
};
use netadjust_core::extrapolation::{OverallSurvivalSet, TailConfig};
use netadjust_core::incidence::IncidenceTable;
use netadjust_core::lifetable::LifeTable;
use netadjust_core::registry::{build_strata, Banding};
use netadjust_core::simulation::{
    derive_tables, generate_cohort, make_registry, Dataset, ExperimentResult, Method,
    ScenarioConfig,
};
use netadjust_core::{PatientRecord, StratumKey};

use crate::cli::{AdjustArgs, EstimateArgs, Inputs, Mode, SimulateArgs, Solver};
use crate::experiment::run_parallel;
use crate::io::{self, num, CsvOut};
use crate::manifest::Manifest;
use crate::scenario::Scenario;

/// Loaded inputs of the estimate and adjust commands.
struct Loaded {
    records: Vec<PatientRecord>,
    lifetable: LifeTable,
    incidence: Option<IncidenceTable>,
}

fn load(inputs: &Inputs, manifest: &mut Manifest) -> Result<Loaded> {
    let records = io::read_registry(&inputs.registry)?;
    manifest.input("registry", &inputs.registry)?;
    let lifetable = io::read_lifetable(&inputs.lifetable)?;
    manifest.input("lifetable", &inputs.lifetable)?;
    let incidence = match (&inputs.incidence, &inputs.population, &inputs.diagnoses) {
        (Some(path), _, _) => {
            manifest.input("incidence", path)?;
            Some(io::read_incidence(path)?)
        }
        (None, Some(population), Some(diagnoses)) => {
            manifest.input("population", population)?;
            manifest.input("diagnoses", diagnoses)?;
            Some(io::read_incidence_from_counts(population, diagnoses)?)
        }
        _ => None,
    };
    log::info!("{} registry records", records.len());
    Ok(Loaded {
        records,
        lifetable,
        incidence,
    })
}

fn check_solver(solver: &Solver) -> Result<()> {
    if solver.extrapolation_points < 2 {
        bail!("--extrapolation-points must be at least 2");
    }
    if solver.horizon == 0 {
        bail!("--horizon must be at least 1");
    }
    Ok(())
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))
}

/// Adjusted population survival for every registry cell, with overall
/// survival from the registry's own strata.
fn adjust_population(
    loaded: &Loaded,
    incidence: &IncidenceTable,
    solver: &Solver,
    counters: &mut RunCounters,
) -> Result<AdjustedPopulationSurvival> {
    let strata = build_strata(&loaded.records, Banding::default())?;
    counters.stratum_merges += strata.merges();
    let tail = TailConfig {
        anchor_points: solver.extrapolation_points,
        ..TailConfig::default()
    };
    let overall = OverallSurvivalSet::new(strata, tail)?;
    let adjusted = AdjustedPopulationSurvival::estimate(
        loaded.records.iter().map(PatientRecord::key),
        &loaded.lifetable,
        incidence,
        &overall,
        AdjustmentConfig::new(solver.horizon),
    )?;
    counters.overall_survival_clamps += overall.clamp_count();
    counters.tail_fallbacks += overall.tail_fallbacks();
    counters.tail_slope_clips += overall.slope_clips();
    counters.monotonicity_guards += adjusted.guard_count();
    counters.range_clips += adjusted.clip_count();
    counters.numerator_floors += adjusted.numerator_floors();
    counters.interpolation_fallbacks += adjusted.interpolation_fallbacks();
    counters.prevalence_survival_caps += adjusted.prevalence_caps();
    counters.incidence_missing += incidence.missing_count();
    counters.incidence_clips += incidence.clip_count();
    Ok(adjusted)
}

fn solver_config(manifest: &mut Manifest, solver: &Solver) {
    manifest.set("horizon", solver.horizon);
    manifest.set("extrapolation_points", solver.extrapolation_points);
}

fn write_curve(path: &Path, estimate: &NetSurvivalEstimate) -> Result<()> {
    let mut out = CsvOut::create(path, &["t", "lambda", "e_s"])?;
    for (i, &t) in estimate.times.iter().enumerate() {
        let lambda = estimate.hazard(i);
        out.row([num(t), num(lambda), num((-lambda).exp())])?;
    }
    out.finish()
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    check_solver(&args.solver)?;
    let max_year = args.years.iter().copied().max().unwrap_or(0) as usize;
    if args.mode == Mode::Adjusted && args.solver.horizon < max_year {
        bail!(
            "--horizon {} is below the largest report year {max_year}",
            args.solver.horizon
        );
    }
    let mut manifest = Manifest::new("estimate");
    manifest.set("mode", args.mode.name());
    solver_config(&mut manifest, &args.solver);
    manifest.set("years", &args.years);
    let loaded = load(&args.inputs, &mut manifest)?;
    create_dir(&args.out)?;

    let mut counters = RunCounters::default();
    let adjusted;
    let provider: &dyn PopulationSurvival = match args.mode {
        Mode::Naive => &loaded.lifetable,
        Mode::Adjusted => {
            let incidence = loaded
                .incidence
                .as_ref()
                .context("adjusted mode needs incidence rates")?;
            adjusted = adjust_population(&loaded, incidence, &args.solver, &mut counters)?;
            &adjusted
        }
    };
    let pp = pohar_perme(&loaded.records, provider)?;
    let e1 = ederer1(&loaded.records, provider)?;
    let crude = crude_probability(&loaded.records, provider)?;
    counters.weight_caps += pp.capped_intervals;
    counters.lifetable_clamps += loaded.lifetable.clamp_count();

    let mut outputs: Vec<PathBuf> = Vec::new();
    let path = args.out.join("estimates.csv");
    let mut out = CsvOut::create(&path, &["estimator", "provider", "year", "value"])?;
    for &year in &args.years {
        let t = f64::from(year);
        let rows = [
            ("pohar_perme", pp.survival_at(t)),
            ("ederer1", e1.survival_at(t)),
            ("crude_cancer", crude.cancer_at(t)),
        ];
        for (name, value) in rows {
            out.row([name, args.mode.name(), &year.to_string(), &num(value)])?;
        }
    }
    out.finish()?;
    outputs.push(path);

    for (name, estimate) in [("pohar_perme", &pp), ("ederer1", &e1)] {
        let path = args.out.join(format!("{name}_curve.csv"));
        write_curve(&path, estimate)?;
        outputs.push(path);
    }
    let path = args.out.join("crude_curve.csv");
    let mut out = CsvOut::create(
        &path,
        &["t", "cancer", "cancer_isotonic", "other", "overall"],
    )?;
    for i in 0..crude.times.len() {
        out.row([
            num(crude.times[i]),
            num(crude.cancer[i]),
            num(crude.cancer_isotonic[i]),
            num(crude.other[i]),
            num(crude.overall[i]),
        ])?;
    }
    out.finish()?;
    outputs.push(path);

    finish(manifest, &args.out, &outputs, &counters)
}

fn cell_fields(k: &StratumKey) -> [String; 3] {
    [
        k.age.to_string(),
        k.year.to_string(),
        k.demographics.codes()[0].to_string(),
    ]
}

pub fn adjust(args: &AdjustArgs) -> Result<()> {
    check_solver(&args.solver)?;
    let mut manifest = Manifest::new("adjust");
    solver_config(&mut manifest, &args.solver);
    let loaded = load(&args.inputs, &mut manifest)?;
    let incidence = loaded
        .incidence
        .as_ref()
        .context("adjust needs incidence rates")?;
    create_dir(&args.out)?;
    let mut counters = RunCounters::default();
    let adjusted = adjust_population(&loaded, incidence, &args.solver, &mut counters)?;
    counters.lifetable_clamps += loaded.lifetable.clamp_count();

    let mut outputs = Vec::new();
    let path = args.out.join("adjusted.csv");
    let mut out = CsvOut::create(&path, &["age", "year", "sex", "t", "s_p"])?;
    for (k, grid) in adjusted.grids() {
        for (t, v) in grid.values().iter().enumerate() {
            let [a, y, s] = cell_fields(k);
            out.row([a, y, s, t.to_string(), num(*v)])?;
        }
    }
    out.finish()?;
    outputs.push(path);

    let path = args.out.join("lifetable_survival.csv");
    let mut out = CsvOut::create(&path, &["age", "year", "sex", "t", "s_lo"])?;
    for (k, _) in adjusted.grids() {
        for (t, v) in loaded
            .lifetable
            .diagonal_survival(k, args.solver.horizon)?
            .values
            .iter()
            .enumerate()
        {
            let [a, y, s] = cell_fields(k);
            out.row([a, y, s, t.to_string(), num(*v)])?;
        }
    }
    out.finish()?;
    outputs.push(path);

    let path = args.out.join("prevalence.csv");
    let mut out = CsvOut::create(&path, &["age", "year", "sex", "alpha"])?;
    for (k, d) in adjusted.diagnostics() {
        let [a, y, s] = cell_fields(k);
        out.row([a, y, s, num(d.alpha)])?;
    }
    out.finish()?;
    outputs.push(path);

    let path = args.out.join("denominators.csv");
    let mut out = CsvOut::create(&path, &["age", "year", "sex", "t", "r"])?;
    for (k, d) in adjusted.diagnostics() {
        for (t, r) in d.denominators.iter().enumerate() {
            let [a, y, s] = cell_fields(k);
            out.row([a, y, s, t.to_string(), num(*r)])?;
        }
    }
    out.finish()?;
    outputs.push(path);

    let path = args.out.join("prevalent_survival.csv");
    let mut out = CsvOut::create(&path, &["age", "year", "sex", "t", "s_prevalent"])?;
    for (k, d) in adjusted.diagnostics() {
        for (t, v) in d.prevalent.iter().enumerate() {
            let [a, y, s] = cell_fields(k);
            out.row([a, y, s, t.to_string(), num(*v)])?;
        }
    }
    out.finish()?;
    outputs.push(path);

    finish(manifest, &args.out, &outputs, &counters)
}

fn finish(
    mut manifest: Manifest,
    out: &Path,
    outputs: &[PathBuf],
    counters: &RunCounters,
) -> Result<()> {
    for path in outputs {
        manifest.output(path)?;
    }
    manifest.counters(counters);
    for (name, value) in counters.entries() {
        if value > 0 {
            log::info!("{name}: {value}");
        }
    }
    let path = manifest.write(out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Effective simulation settings: flags over scenario file over defaults.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: ScenarioConfig,
    pub methods: Vec<Method>,
    pub years: Vec<u32>,
    pub jobs: usize,
}

impl Study {
    pub fn resolve(args: &SimulateArgs) -> Result<Self> {
        let file = match &args.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::default(),
        };
        let id = args.dataset.or(file.dataset).unwrap_or(1);
        let dataset =
            Dataset::from_id(id).with_context(|| format!("dataset must be 1 to 4, got {id}"))?;
        let mut config = ScenarioConfig::new(dataset);
        if let Some(v) = args.reps.or(file.reps) {
            config.replicates = v;
        }
        if let Some(v) = args.seed.or(file.seed) {
            config.seed = v;
        }
        if let Some(v) = args.cohort_size.or(file.cohort_size) {
            config.cohort_size = v;
        }
        if let Some(v) = file.truth_size {
            config.truth_size = v;
        }
        if let Some(v) = args.horizon.or(file.horizon) {
            config.adjustment.horizon = v;
        }
        let anchors = args
            .extrapolation_points
            .clone()
            .or(file.extrapolation_points)
            .unwrap_or_else(|| vec![4, 10]);
        if anchors.iter().any(|&h| h < 2) {
            bail!("extrapolation points must be at least 2");
        }
        let years = args
            .years
            .clone()
            .or(file.years)
            .unwrap_or_else(|| vec![3, 5, 7, 10]);
        if years.is_empty() || config.replicates == 0 {
            bail!("need at least one year and one replicate");
        }
        let max_year = *years.iter().max().expect("non-empty") as usize;
        if config.adjustment.horizon < max_year {
            bail!(
                "horizon {} is below the largest report year {max_year}",
                config.adjustment.horizon
            );
        }
        let mut methods = vec![Method::NaivePoharPerme];
        methods.extend(
            anchors
                .iter()
                .map(|&h| Method::AdjustedPoharPerme { anchor_points: h }),
        );
        let jobs = args.jobs.or(file.jobs).unwrap_or(0);
        Ok(Study {
            config,
            methods,
            years,
            jobs,
        })
    }

    pub fn record(&self, manifest: &mut Manifest) {
        let c = &self.config;
        manifest.set("dataset", c.dataset.id());
        manifest.set("reps", c.replicates);
        manifest.set("seed", c.seed);
        manifest.set("cohort_size", c.cohort_size);
        manifest.set("truth_size", c.truth_size);
        manifest.set("birth_year", c.birth_year);
        manifest.set(
            "diagnosis_window",
            [c.diagnosis_window.0, c.diagnosis_window.1],
        );
        manifest.set("censoring_max", c.censoring_max);
        manifest.set("horizon", c.adjustment.horizon);
        manifest.set("within_year", format!("{:?}", c.adjustment.within_year));
        manifest.set(
            "prevalent_form",
            format!("{:?}", c.adjustment.prevalent_form),
        );
        manifest.set("prevalence", format!("{:?}", c.adjustment.prevalence));
        manifest.set("person_years", format!("{:?}", c.person_years));
        manifest.set(
            "overall_survival_source",
            format!("{:?}", c.overall_survival_source),
        );
        manifest.set("tail_min_at_risk", c.tail.min_at_risk);
        manifest.set("tail_min_at_risk_fraction", c.tail.min_at_risk_fraction);
        let anchors: Vec<usize> = self
            .methods
            .iter()
            .filter_map(|m| match m {
                Method::AdjustedPoharPerme { anchor_points } => Some(*anchor_points),
                Method::NaivePoharPerme => None,
            })
            .collect();
        manifest.set("extrapolation_points", anchors);
        manifest.set("years", &self.years);
    }
}

pub fn method_name(method: Method) -> String {
    match method {
        Method::NaivePoharPerme => "naive".to_owned(),
        Method::AdjustedPoharPerme { anchor_points } => format!("adjusted_h{anchor_points}"),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let study = Study::resolve(args)?;
    let mut manifest = Manifest::new("simulate");
    if let Some(path) = &args.scenario {
        manifest.input("scenario", path)?;
    }
    study.record(&mut manifest);
    create_dir(&args.out)?;

    let result = run_parallel(&study)?;
    let mut outputs = write_tables(&args.out, &result)?;
    if args.export {
        outputs.extend(export_replicate(
            &args.out.join("replicate-0"),
            &study.config,
        )?);
    }
    manifest.count("excluded_replicates", result.excluded as u64);
    for (method, failed) in &result.method_failures {
        manifest.count(&format!("failed_{}", method_name(*method)), *failed as u64);
    }
    finish(manifest, &args.out, &outputs, &result.counters)
}

/// `table1.csv` (registry sizes) and `table2.csv` (bias and rMSE).
pub fn write_tables(out: &Path, result: &ExperimentResult) -> Result<Vec<PathBuf>> {
    let dataset = result.dataset.id().to_string();
    let path1 = out.join("table1.csv");
    let mut t1 = CsvOut::create(
        &path1,
        &[
            "dataset",
            "replicates",
            "excluded",
            "patients_median",
            "patients_min",
            "patients_max",
            "events_median",
            "events_min",
            "events_max",
        ],
    )?;
    let summary = |c: Option<netadjust_core::simulation::CountSummary>| match c {
        Some(c) => [num(c.median), c.min.to_string(), c.max.to_string()],
        None => [String::new(), String::new(), String::new()],
    };
    let [pm, pl, ph] = summary(result.patients);
    let [em, el, eh] = summary(result.events);
    t1.row([
        dataset.clone(),
        result.replicates.to_string(),
        result.excluded.to_string(),
        pm,
        pl,
        ph,
        em,
        el,
        eh,
    ])?;
    t1.finish()?;

    let path2 = out.join("table2.csv");
    let mut t2 = CsvOut::create(
        &path2,
        &[
            "dataset",
            "year",
            "truth",
            "method",
            "mean",
            "percent_bias",
            "rmse",
            "used",
            "failed",
        ],
    )?;
    for row in &result.rows {
        let failed = result
            .method_failures
            .iter()
            .find(|(m, _)| *m == row.method)
            .map_or(0, |(_, n)| *n);
        t2.row([
            dataset.clone(),
            num(row.year),
            num(row.truth),
            method_name(row.method),
            num(row.mean),
            num(row.percent_bias),
            num(row.rmse),
            row.used.to_string(),
            failed.to_string(),
        ])?;
    }
    t2.finish()?;
    Ok(vec![path1, path2])
}

/// Writes replicate 0's registry and derived tables in the input formats.
pub fn export_replicate(dir: &Path, cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let cohort = generate_cohort(cfg, cfg.cohort_seed(0));
    let tables = derive_tables(&cohort, cfg)?;
    let registry = make_registry(&cohort, cfg, cfg.censoring_seed(0));
    let paths: Vec<PathBuf> = [
        "registry.csv",
        "lifetable.csv",
        "incidence.csv",
        "population.csv",
        "diagnoses.csv",
    ]
    .iter()
    .map(|n| dir.join(n))
    .collect();
    io::write_registry(&paths[0], &registry)?;
    io::write_cells(
        &paths[1],
        io::LIFETABLE_HEADER,
        tables.lifetable.grid().cells(),
    )?;
    io::write_cells(
        &paths[2],
        io::INCIDENCE_HEADER,
        tables.incidence.grid().cells(),
    )?;
    io::write_cells(
        &paths[3],
        io::POPULATION_HEADER,
        tables.person_years.iter().copied(),
    )?;
    io::write_cells(
        &paths[4],
        io::DIAGNOSES_HEADER,
        tables.diagnoses.iter().copied(),
    )?;
    Ok(paths)
}
