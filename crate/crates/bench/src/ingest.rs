//! Numeric CSV ingestion.

use std::io::Read;
use std::path::Path;

use serde::Serialize;

use krr_core::datagen::gen_em_field;
use krr_core::{KrrError, PointSet, Result};

use crate::config::{RunConfig, EM_PREFIX};

/// Shift and scale applied to one feature column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnScale {
    pub column: String,
    pub mean: f64,
    /// Population standard deviation; a constant column keeps scale 1.
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: PointSet,
    pub labels: Vec<f64>,
    pub features: Vec<String>,
    pub label: String,
    pub standardization: Option<Vec<ColumnScale>>,
}

/// Reads a CSV file with a header row. `features` empty selects every column
/// but the label.
pub fn ingest_csv(
    path: &Path,
    label: &str,
    features: &[String],
    standardize: bool,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| KrrError::Format(format!("{}: {e}", path.display())))?;
    ingest_reader(file, label, features, standardize).map_err(|e| match e {
        KrrError::Format(m) => KrrError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn ingest_reader<R: Read>(
    reader: R,
    label: &str,
    features: &[String],
    standardize: bool,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| KrrError::Format(format!("line 1: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| KrrError::Format(format!("line 1: missing column '{name}'")))
    };
    let label_col = find(label)?;
    let feature_names: Vec<String> = if features.is_empty() {
        header.iter().filter(|h| *h != label).cloned().collect()
    } else {
        features.to_vec()
    };
    if feature_names.is_empty() {
        return Err(KrrError::Format("no feature columns".into()));
    }
    let feature_cols: Vec<usize> = feature_names
        .iter()
        .map(|f| find(f))
        .collect::<Result<_>>()?;

    let d = feature_cols.len();
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            KrrError::Format(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |col: usize| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    KrrError::Format(format!(
                        "line {line}: column '{}' holds non-numeric value '{raw}'",
                        header[col]
                    ))
                })
        };
        for &c in &feature_cols {
            coords.push(cell(c)?);
        }
        labels.push(cell(label_col)?);
    }
    if labels.is_empty() {
        return Err(KrrError::Format("no data rows".into()));
    }
    let standardization = standardize.then(|| standardize_columns(&mut coords, d, &feature_names));
    Ok(Dataset {
        points: PointSet::new(coords, d)?,
        labels,
        features: feature_names,
        label: label.to_string(),
        standardization,
    })
}

/// Centers every column and scales it to unit population variance, in place.
pub fn standardize_columns(coords: &mut [f64], d: usize, names: &[String]) -> Vec<ColumnScale> {
    let n = coords.len() / d;
    (0..d)
        .map(|k| {
            let mean = coords.iter().skip(k).step_by(d).sum::<f64>() / n as f64;
            let var = coords
                .iter()
                .skip(k)
                .step_by(d)
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let std = var.sqrt();
            let scale = if std > 0.0 { std } else { 1.0 };
            for v in coords.iter_mut().skip(k).step_by(d) {
                *v = (*v - mean) / scale;
            }
            ColumnScale {
                column: names[k].clone(),
                mean,
                std: scale,
            }
        })
        .collect()
}

/// Loads the dataset named by `cfg.dataset`, generating `em:<n>` data with
/// five charges and `cfg.seed`.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    if let Some(n) = cfg.dataset.strip_prefix(EM_PREFIX) {
        let n: usize = n
            .parse()
            .map_err(|_| KrrError::Format(format!("bad generated dataset '{}'", cfg.dataset)))?;
        let em = gen_em_field(n, 5, cfg.seed)?;
        let names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let mut coords = em.positions.coords().to_vec();
        let standardization = cfg
            .standardize
            .then(|| standardize_columns(&mut coords, 3, &names));
        return Ok(Dataset {
            points: PointSet::new(coords, 3)?,
            labels: em.potential,
            features: names,
            label: "phi".into(),
            standardization,
        });
    }
    ingest_csv(
        Path::new(&cfg.dataset),
        &cfg.label,
        &cfg.features,
        cfg.standardize,
    )
}
