//! Replicates in parallel, reduced in replicate order so the thread count
//! never changes the tables.

use anyhow::{Context, Result};
use netadjust_core::simulation::{aggregate, run_replicate, true_net_survival, ExperimentResult};
use rayon::prelude::*;

use crate::commands::Study;

pub fn run_parallel(study: &Study) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(study.jobs)
        .build()
        .context("cannot start worker threads")?;
    let cfg = &study.config;
    let years: Vec<f64> = study.years.iter().map(|&y| f64::from(y)).collect();
    log::info!(
        "dataset {}: {} replicates of {} subjects",
        cfg.dataset.id(),
        cfg.replicates,
        cfg.cohort_size
    );
    let (truth, outcomes) = pool.install(|| {
        rayon::join(
            || true_net_survival(cfg, &years),
            || {
                (0..cfg.replicates)
                    .into_par_iter()
                    .map(|r| run_replicate(cfg, &study.methods, &years, r))
                    .collect::<Vec<_>>()
            },
        )
    });
    Ok(aggregate(cfg, &study.methods, &years, &truth, &outcomes))
}
