//! Run configuration: flat `key = value` files, overridable key by key.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use krr_core::anchors::AnchorMethod;
use krr_core::pcg::{PreconditionerKind, DEFAULT_DENSE_CAP, DEFAULT_FGT_DELTA};
use krr_core::{KrrError, Result};

/// Dataset given as `em:<n>` is generated in memory instead of read.
pub const EM_PREFIX: &str = "em:";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// CSV path, or `em:<n>` for a generated EM-field dataset.
    pub dataset: String,
    pub label: String,
    /// Feature columns; empty means every column except the label.
    pub features: Vec<String>,
    pub epsilon: f64,
    pub beta: f64,
    /// Preconditioner rank `k`.
    pub rank: usize,
    /// Sketch size `l` for anchor selection.
    pub oversample: usize,
    pub sampler: Vec<AnchorMethod>,
    pub precond: Vec<PreconditionerKind>,
    pub tol: f64,
    pub max_iters: usize,
    pub fgt_delta: f64,
    pub seed: u64,
    /// Energy-norm tracking and dense spectra only run up to this `n`.
    pub dense_cap: usize,
    pub standardize: bool,
    /// Lanczos steps for the condition estimate; 0 skips it.
    pub cond_probes: usize,
    /// JSONL destination; stdout when unset.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: "em:10000".into(),
            label: "phi".into(),
            features: vec!["x".into(), "y".into(), "z".into()],
            epsilon: 0.5,
            beta: 0.1,
            rank: 50,
            oversample: 60,
            sampler: vec![AnchorMethod::Id],
            precond: vec![PreconditionerKind::Nystrom, PreconditionerKind::None],
            tol: 1e-6,
            max_iters: 1000,
            fgt_delta: DEFAULT_FGT_DELTA,
            seed: 0,
            dense_cap: DEFAULT_DENSE_CAP,
            standardize: false,
            cond_probes: 0,
            out: None,
        }
    }
}

pub const KEYS: [&str; 17] = [
    "dataset",
    "label",
    "features",
    "epsilon",
    "beta",
    "rank",
    "oversample",
    "sampler",
    "precond",
    "tol",
    "max_iters",
    "fgt_delta",
    "seed",
    "dense_cap",
    "standardize",
    "cond_probes",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| KrrError::Format(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: FromStr<Err = KrrError>>(value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(KrrError::Format("empty list".into()));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(KrrError::Format(format!(
            "{key}: expected true or false, got '{value}'"
        ))),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dataset" => self.dataset = value.to_string(),
            "label" => self.label = value.to_string(),
            "features" => {
                self.features = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "epsilon" => self.epsilon = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "rank" => self.rank = parse(key, value)?,
            "oversample" => self.oversample = parse(key, value)?,
            "sampler" => self.sampler = parse_list(value)?,
            "precond" => self.precond = parse_list(value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "fgt_delta" => self.fgt_delta = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "dense_cap" => self.dense_cap = parse(key, value)?,
            "standardize" => self.standardize = parse_bool(key, value)?,
            "cond_probes" => self.cond_probes = parse(key, value)?,
            "out" => {
                self.out = if value.is_empty() || value == "-" {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            other => {
                return Err(KrrError::Format(format!(
                    "unknown key '{other}' (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                KrrError::Format(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                KrrError::Format(m) => KrrError::Format(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// The `key = value` form read back by [`RunConfig::merge_str`].
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let out = self
            .out
            .as_ref()
            .map_or_else(|| "-".to_string(), |p| p.display().to_string());
        let fields: [(&str, String); 17] = [
            ("dataset", self.dataset.clone()),
            ("label", self.label.clone()),
            ("features", self.features.join(",")),
            ("epsilon", self.epsilon.to_string()),
            ("beta", self.beta.to_string()),
            ("rank", self.rank.to_string()),
            ("oversample", self.oversample.to_string()),
            ("sampler", join(&self.sampler)),
            ("precond", join(&self.precond)),
            ("tol", self.tol.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("fgt_delta", self.fgt_delta.to_string()),
            ("seed", self.seed.to_string()),
            ("dense_cap", self.dense_cap.to_string()),
            ("standardize", self.standardize.to_string()),
            ("cond_probes", self.cond_probes.to_string()),
            ("out", out),
        ];
        for (k, v) in fields {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Checks the numeric fields; sizes against `n` are checked at run time.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("beta", self.beta),
            ("tol", self.tol),
            ("fgt_delta", self.fgt_delta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(KrrError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(KrrError::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.precond.contains(&PreconditionerKind::Nystrom) {
            if self.rank == 0 || self.oversample < self.rank {
                return Err(KrrError::InvalidParameter(format!(
                    "need 1 <= rank <= oversample, got rank {} and oversample {}",
                    self.rank, self.oversample
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let mut cfg = RunConfig::default();
        cfg.sampler = vec![AnchorMethod::Fps, AnchorMethod::Random];
        cfg.out = Some("runs/a.jsonl".into());
        cfg.standardize = true;
        let mut back = RunConfig::default();
        back.merge_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_errors() {
        let mut cfg = RunConfig::default();
        cfg.merge_str("# preset\n\nbeta = 1\n  rank=20  \n")
            .unwrap();
        assert_eq!((cfg.beta, cfg.rank), (1.0, 20));
        let err = cfg.merge_str("beta = 1\nrank 20\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(cfg.merge_str("colour = blue").is_err());
        assert!(cfg.merge_str("sampler = rrqr").is_err());
        assert!(cfg.merge_str("standardize = maybe").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.oversample = 10;
        assert!(cfg.validate().is_err());
        cfg.precond = vec![PreconditionerKind::None];
        cfg.validate().unwrap();
        cfg.beta = 0.0;
        assert!(cfg.validate().is_err());
    }
}
