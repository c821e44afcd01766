//! CSV datasets with a `z,d,y` header and plug-in cell frequencies.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::forward::{Dataset, Record};
use crate::model::{coarsen, regime_cells, CellId, ObservableDistribution, Regime};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("header must be exactly `z,d,y`")]
    BadHeader,
    #[error("malformed row at line {0}")]
    MalformedRow(usize),
    #[error("missing instrument at line {0}")]
    MissingInstrument(usize),
    #[error("unrecognised outcome value at line {0}")]
    UnknownOutcomeValue(usize),
    #[error("no records with z={0}")]
    EmptyArm(u8),
    #[error("declared one-sided but treated units make up {share:e} of arm z=0")]
    NotOneSided { share: f64 },
}

/// Options for turning counts into frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlugIn {
    pub one_sided: bool,
    /// Add 0.5 to every cell count before normalizing. Cells that
    /// one-sidedness forces to zero stay at zero.
    pub smooth: bool,
    pub tol: f64,
}

impl Default for PlugIn {
    fn default() -> Self {
        Self { one_sided: false, smooth: false, tol: 1e-12 }
    }
}

fn binary(field: &str) -> Option<u8> {
    match field {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

/// Parses CSV text. Empty fields are missing; the regime follows from which
/// columns have any missing value.
pub fn parse_dataset_str(text: &str) -> Result<Dataset, DataError> {
    read_dataset(text.as_bytes())
}

pub fn parse_dataset(path: &Path) -> Result<Dataset, DataError> {
    read_dataset(std::fs::File::open(path)?)
}

fn read_dataset<R: Read>(source: R) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(source);
    let mut rows = reader.records();
    match rows.next() {
        Some(Ok(h)) if h.iter().map(str::trim).eq(["z", "d", "y"]) => {}
        _ => return Err(DataError::BadHeader),
    }
    let mut raw: Vec<(u8, Option<u8>, Option<f64>)> = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|_| DataError::MalformedRow(line))?;
        if row.len() != 3 {
            return Err(DataError::MalformedRow(line));
        }
        let (z, d, y) = (row[0].trim(), row[1].trim(), row[2].trim());
        if z.is_empty() {
            return Err(DataError::MissingInstrument(line));
        }
        let z = binary(z).ok_or(DataError::MalformedRow(line))?;
        let d = if d.is_empty() { None } else { Some(binary(d).ok_or(DataError::MalformedRow(line))?) };
        let y = if y.is_empty() {
            None
        } else {
            Some(<f64 as Scalar>::parse(y).map_err(|_| DataError::UnknownOutcomeValue(line))?)
        };
        raw.push((z, d, y));
    }
    let mut support: Vec<f64> = raw.iter().filter_map(|r| r.2).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let d_missing = raw.iter().any(|r| r.1.is_none());
    let y_missing = raw.iter().any(|r| r.2.is_none());
    let regime = match (d_missing, y_missing) {
        (false, false) => Regime::Complete,
        (false, true) => Regime::OutcomeOnly,
        (true, false) => Regime::TreatmentOnly,
        (true, true) => Regime::Both,
    };
    let records = raw
        .into_iter()
        .map(|(z, d, y)| Record {
            z,
            d,
            y: y.map(|v| support.partition_point(|s| *s < v)),
        })
        .collect();
    Ok(Dataset { regime, y_labels: support.iter().map(Scalar::render).collect(), y_support: support, records })
}

/// Renders a dataset as CSV with a `z,d,y` header.
pub fn write_csv(ds: &Dataset) -> String {
    let mut out = String::with_capacity(8 * ds.records.len() + 8);
    out.push_str("z,d,y\n");
    for r in &ds.records {
        out.push_str(&r.z.to_string());
        out.push(',');
        if let Some(d) = r.d {
            out.push_str(&d.to_string());
        }
        out.push(',');
        if let Some(y) = r.y {
            out.push_str(&ds.y_labels[y]);
        }
        out.push('\n');
    }
    out
}

/// Counts and missingness shares of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub n: usize,
    pub n_by_arm: [usize; 2],
    pub regime: Regime,
    pub missing_d: f64,
    pub missing_y: f64,
    /// No record has z=0 and d=1.
    pub one_sided_empirical: bool,
}

pub fn summarize(ds: &Dataset) -> DatasetSummary {
    let n = ds.records.len();
    let share = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    DatasetSummary {
        n,
        n_by_arm: [0, 1].map(|z| ds.records.iter().filter(|r| r.z == z).count()),
        regime: ds.regime,
        missing_d: share(ds.records.iter().filter(|r| r.d.is_none()).count()),
        missing_y: share(ds.records.iter().filter(|r| r.y.is_none()).count()),
        one_sided_empirical: !ds.records.iter().any(|r| r.z == 0 && r.d == Some(1)),
    }
}

/// Cell frequencies within each arm, in the dataset's regime.
pub fn empirical_observable(ds: &Dataset, opts: &PlugIn) -> Result<ObservableDistribution<f64>, DataError> {
    let k = ds.y_support.len().max(1);
    let y_support = if ds.y_support.is_empty() { vec![0.0] } else { ds.y_support.clone() };
    let mut counts = ObservableDistribution::zeros(ds.regime, 0.0, opts.one_sided, y_support);
    let mut n = [0usize; 2];
    for r in &ds.records {
        n[r.z as usize] += 1;
        let cell = coarsen(ds.regime, r.d.unwrap_or(0), r.y.unwrap_or(0), r.d.is_some() as u8, r.y.is_some() as u8);
        *counts.arms[r.z as usize].get_mut(cell) += 1.0;
    }
    for z in 0..2u8 {
        if n[z as usize] == 0 {
            return Err(DataError::EmptyArm(z));
        }
    }
    if opts.one_sided {
        let treated = counts.arms[0].full[1].iter().sum::<f64>() + counts.arms[0].d_only[1];
        let share = treated / n[0] as f64;
        if share >= opts.tol {
            return Err(DataError::NotOneSided { share });
        }
    }
    let cells = regime_cells(ds.regime, k);
    for z in 0..2u8 {
        let arm = &mut counts.arms[z as usize];
        let mut total = 0.0;
        for &c in &cells {
            let forced_zero = opts.one_sided
                && z == 0
                && matches!(c, CellId::Full { d: 1, .. } | CellId::DOnly { d: 1 });
            if opts.smooth && !forced_zero {
                *arm.get_mut(c) += 0.5;
            }
            total += *arm.get(c);
        }
        for &c in &cells {
            *arm.get_mut(c) /= total;
        }
    }
    counts.p_z = n[1] as f64 / (n[0] + n[1]) as f64;
    Ok(counts)
}
