//! CSV inputs and outputs. Every file is UTF-8, comma-separated and has a
//! header row; input columns must match the expected header exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use netadjust_core::incidence::{compute_incidence, IncidenceTable};
use netadjust_core::lifetable::LifeTable;
use netadjust_core::{Demographics, PatientRecord, StratumKey};
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub const REGISTRY_HEADER: &[&str] = &["age_diag", "year_diag", "sex", "time", "event"];
pub const LIFETABLE_HEADER: &[&str] = &["age", "year", "sex", "q"];
pub const INCIDENCE_HEADER: &[&str] = &["age", "year", "sex", "ir"];
pub const POPULATION_HEADER: &[&str] = &["age", "year", "sex", "person_years"];
pub const DIAGNOSES_HEADER: &[&str] = &["age", "year", "sex", "count"];

#[derive(Debug, Deserialize)]
struct RegistryRow {
    age_diag: i32,
    year_diag: i32,
    sex: u16,
    time: f64,
    event: u8,
}

#[derive(Debug, Deserialize)]
struct CellRow {
    age: i32,
    year: i32,
    sex: u16,
    value: f64,
}

pub fn sex(code: u16) -> Demographics {
    Demographics::from_codes(&[code]).expect("one code always fits")
}

/// Reads `path`, checks its header and deserialises each row. Row numbers
/// in errors count the header as line 1.
fn read_rows<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<(usize, T)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        bail!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            header.join(","),
            found.join(",")
        );
    }
    // Positional deserialisation lets cell files share one row type.
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.with_context(|| format!("{}: line {line}", path.display()))?;
        let row: T = record.deserialize(None).with_context(|| {
            format!(
                "{}: line {line}: cannot parse `{}`",
                path.display(),
                record.iter().collect::<Vec<_>>().join(",")
            )
        })?;
        rows.push((line, row));
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(rows)
}

pub fn read_registry(path: &Path) -> Result<Vec<PatientRecord>> {
    read_rows::<RegistryRow>(path, REGISTRY_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            let event = match r.event {
                0 => false,
                1 => true,
                other => bail!(
                    "{}: line {line}: event must be 0 or 1, found {other}",
                    path.display()
                ),
            };
            PatientRecord::new(r.age_diag, r.year_diag, sex(r.sex), r.time, event)
                .with_context(|| format!("{}: line {line}", path.display()))
        })
        .collect()
}

fn read_cells(path: &Path, header: &[&str]) -> Result<Vec<(StratumKey, f64)>> {
    Ok(read_rows::<CellRow>(path, header)?
        .into_iter()
        .map(|(_, r)| (StratumKey::new(r.age, r.year, sex(r.sex)), r.value))
        .collect())
}

pub fn read_lifetable(path: &Path) -> Result<LifeTable> {
    let cells = read_cells(path, LIFETABLE_HEADER)?;
    LifeTable::from_cells(cells).with_context(|| format!("{}", path.display()))
}

pub fn read_incidence(path: &Path) -> Result<IncidenceTable> {
    let cells = read_cells(path, INCIDENCE_HEADER)?;
    IncidenceTable::from_cells(cells).with_context(|| format!("{}", path.display()))
}

/// Incidence rates from cancer-free person-years and new diagnoses.
pub fn read_incidence_from_counts(population: &Path, diagnoses: &Path) -> Result<IncidenceTable> {
    let person_years = read_cells(population, POPULATION_HEADER)?;
    let counts = read_cells(diagnoses, DIAGNOSES_HEADER)?;
    compute_incidence(&counts, &person_years).context("computing incidence rates")
}

/// A CSV writer that refuses to drop errors.
pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(header)?;
        Ok(CsvOut { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        let mut buffered = self.inner.into_inner().map_err(|e| e.into_error())?;
        buffered.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal for a float, so reruns give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes cell tables in the input formats, for feeding generated data back
/// through the estimate and adjust commands.
pub fn write_cells<I>(path: &Path, header: &[&str], cells: I) -> Result<()>
where
    I: IntoIterator<Item = (StratumKey, f64)>,
{
    let mut out = CsvOut::create(path, header)?;
    for (k, v) in cells {
        out.row([
            k.age.to_string(),
            k.year.to_string(),
            k.demographics.codes()[0].to_string(),
            num(v),
        ])?;
    }
    out.finish()
}

pub fn write_registry(path: &Path, records: &[PatientRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, REGISTRY_HEADER)?;
    for r in records {
        out.row([
            r.age_diag.to_string(),
            r.year_diag.to_string(),
            r.demographics.codes()[0].to_string(),
            num(r.time),
            u8::from(r.event).to_string(),
        ])?;
    }
    out.finish()
}

/// Writes a small text artefact, replacing any existing file.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
