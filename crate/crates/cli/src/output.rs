//! Result rows and their CSV and JSON encodings.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Method};

pub const COLUMNS: [&str; 13] = [
    "experiment",
    "method",
    "seed",
    "evaluations",
    "estimate",
    "z1_plus",
    "z1_minus",
    "z2",
    "ess",
    "ess_retargeted",
    "ess_min",
    "rse",
    "seconds",
];

/// One estimate of one method, seed and checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: Experiment,
    pub method: Method,
    pub seed: u64,
    /// Budget units used up to this checkpoint.
    pub evaluations: u64,
    pub estimate: Option<f64>,
    pub z1_plus: Option<f64>,
    pub z1_minus: Option<f64>,
    pub z2: Option<f64>,
    pub ess: Option<f64>,
    pub ess_retargeted: Option<f64>,
    pub ess_min: Option<f64>,
    pub rse: Option<f64>,
    pub seconds: f64,
}

impl ResultRow {
    pub fn empty(experiment: Experiment, method: Method, seed: u64, evaluations: u64) -> Self {
        ResultRow {
            experiment,
            method,
            seed,
            evaluations,
            estimate: None,
            z1_plus: None,
            z1_minus: None,
            z2: None,
            ess: None,
            ess_retargeted: None,
            ess_min: None,
            rse: None,
            seconds: 0.0,
        }
    }

    /// Deterministic output order.
    pub fn sort_key(&self) -> (u64, Method, u64) {
        (self.seed, self.method, self.evaluations)
    }
}

/// Non-finite values become missing values.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn float(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite())
        .map(|v| format!("{v:.16e}"))
        .unwrap_or_default()
}

/// A path that could not be written.
#[derive(Debug)]
pub struct Unwritable(pub PathBuf);

impl fmt::Display for Unwritable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot write {}", self.0.display())
    }
}

impl std::error::Error for Unwritable {}

pub fn write_csv<W: Write>(rows: &[ResultRow], writer: W) -> anyhow::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(COLUMNS)?;
    for r in rows {
        csv.write_record([
            r.experiment.name().to_owned(),
            r.method.name().to_owned(),
            r.seed.to_string(),
            r.evaluations.to_string(),
            float(r.estimate),
            float(r.z1_plus),
            float(r.z1_minus),
            float(r.z2),
            float(r.ess),
            float(r.ess_retargeted),
            float(r.ess_min),
            float(r.rse),
            format!("{:.16e}", r.seconds),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> anyhow::Result<Vec<ResultRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.iter().ne(COLUMNS) {
        anyhow::bail!(
            "unexpected CSV header {:?}",
            headers.iter().collect::<Vec<_>>()
        );
    }
    csv.deserialize()
        .map(|r| r.context("malformed result row"))
        .collect()
}

pub fn write_json<W: Write>(rows: &[ResultRow], writer: W) -> anyhow::Result<()> {
    let clean: Vec<ResultRow> = rows
        .iter()
        .map(|r| ResultRow {
            estimate: r.estimate.and_then(finite),
            z1_plus: r.z1_plus.and_then(finite),
            z1_minus: r.z1_minus.and_then(finite),
            z2: r.z2.and_then(finite),
            ess: r.ess.and_then(finite),
            ess_retargeted: r.ess_retargeted.and_then(finite),
            ess_min: r.ess_min.and_then(finite),
            rse: r.rse.and_then(finite),
            ..r.clone()
        })
        .collect();
    let mut writer = writer;
    serde_json::to_writer_pretty(&mut writer, &clean)?;
    writeln!(writer)?;
    Ok(())
}

pub fn read_json<R: Read>(reader: R) -> anyhow::Result<Vec<ResultRow>> {
    Ok(serde_json::from_reader(reader)?)
}

/// The JSON file written next to a CSV path.
pub fn json_sibling(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `path` as CSV and its `.json` sibling.
pub fn emit_results(rows: &[ResultRow], path: &Path) -> anyhow::Result<()> {
    let create = |p: &Path| -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .map_err(|e| anyhow::Error::new(e).context(Unwritable(p.to_path_buf())))?;
        }
        let file = std::fs::File::create(p)
            .map_err(|e| anyhow::Error::new(e).context(Unwritable(p.to_path_buf())))?;
        Ok(std::io::BufWriter::new(file))
    };
    write_csv(rows, create(path)?).context(Unwritable(path.to_path_buf()))?;
    let json = json_sibling(path);
    write_json(rows, create(&json)?).context(Unwritable(json))?;
    Ok(())
}

/// Largest spread of final-checkpoint evaluation counts among the
/// budget-matched methods of each seed.
pub fn fairness_discrepancy(rows: &[ResultRow]) -> u64 {
    let mut finals: BTreeMap<(Experiment, u64), BTreeMap<Method, u64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method.budget_matched()) {
        let slot = finals
            .entry((r.experiment, r.seed))
            .or_default()
            .entry(r.method)
            .or_default();
        *slot = (*slot).max(r.evaluations);
    }
    finals
        .values()
        .map(|per_method| {
            let max = per_method.values().max().copied().unwrap_or(0);
            let min = per_method.values().min().copied().unwrap_or(0);
            max - min
        })
        .max()
        .unwrap_or(0)
}
