//! Scenario files for the simulate command: one `key = value` per line,
//! `#` starts a comment.
//!
//! ```text
//! dataset = 2
//! reps = 200
//! seed = 20240101
//! cohort_size = 50000
//! horizon = 15
//! extrapolation_points = 4,10
//! years = 3,5,7,10
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub dataset: Option<u8>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub cohort_size: Option<usize>,
    pub truth_size: Option<usize>,
    pub horizon: Option<usize>,
    pub extrapolation_points: Option<Vec<usize>>,
    pub years: Option<Vec<u32>>,
    pub jobs: Option<usize>,
}

fn list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value.split(',').map(|v| v.trim().parse()).collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", i + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = || format!("line {}: invalid value `{value}` for `{key}`", i + 1);
            match key {
                "dataset" => s.dataset = Some(value.parse().with_context(bad)?),
                "reps" => s.reps = Some(value.parse().with_context(bad)?),
                "seed" => s.seed = Some(value.parse().with_context(bad)?),
                "cohort_size" => s.cohort_size = Some(value.parse().with_context(bad)?),
                "truth_size" => s.truth_size = Some(value.parse().with_context(bad)?),
                "horizon" => s.horizon = Some(value.parse().with_context(bad)?),
                "extrapolation_points" => {
                    s.extrapolation_points = Some(list(value).with_context(bad)?)
                }
                "years" => s.years = Some(list(value).with_context(bad)?),
                "jobs" => s.jobs = Some(value.parse().with_context(bad)?),
                other => bail!("line {}: unknown key `{other}`", i + 1),
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("{}", path.display()))
    }
}
