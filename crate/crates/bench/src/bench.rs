//! Benchmark runs and their JSONL records.
//!
//! Every line is one JSON object with a `record` field:
//!
//! * `dataset`: source, `n`, `d`, feature and label names, standardization.
//! * `iter`: `config_id`, `iter`, `residual_norm`, `relative_residual`,
//!   `energy_norm` (null above the dense cap), `cumulative_seconds`.
//! * `summary`: one per configuration, with iterations to tolerance, phase
//!   timings and, when requested, the condition estimate and bound.
//! * `error`: `config_id` and `message` for a configuration that failed.
//!
//! Fields ending in `seconds` are wall-clock times; everything else is a
//! deterministic function of the configuration.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use krr_core::anchors::{AnchorMethod, SketchConfig};
use krr_core::bounds::{
    condition_bound, gamma, id_error_factor, kernel_spectrum, numerical_rank, numerical_rank_bound,
    required_rank, RankBoundInputs, SpectralSummary,
};
use krr_core::pcg::{
    solve_krr_with, DenseReference, PreconditionerKind, SolveOptions, SolveReport,
};
use krr_core::{KernelConfig, KrrError, PointSet, Result};

use crate::config::RunConfig;
use crate::ingest::{load_dataset, ColumnScale, Dataset};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    Dataset {
        source: String,
        n: usize,
        d: usize,
        features: Vec<String>,
        label: String,
        standardization: Option<Vec<ColumnScale>>,
    },
    Iter {
        config_id: String,
        iter: usize,
        residual_norm: f64,
        relative_residual: f64,
        energy_norm: Option<f64>,
        cumulative_seconds: f64,
    },
    Summary(Box<Summary>),
    Error {
        config_id: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config_id: String,
    pub precond: PreconditionerKind,
    pub sampler: Option<AnchorMethod>,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub rank: Option<usize>,
    pub oversample: Option<usize>,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
    pub fgt_delta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_relative_residual: f64,
    pub final_energy_norm: Option<f64>,
    pub clip_count: usize,
    pub condition_estimate: Option<f64>,
    pub condition_estimate_breakdown: Option<bool>,
    pub condition_bound: Option<f64>,
    pub anchor_seconds: f64,
    pub build_seconds: f64,
    pub iteration_seconds: f64,
    pub total_seconds: f64,
}

/// The configurations a run expands to: `nystrom` once per sampler,
/// `none` once.
pub fn configurations(cfg: &RunConfig) -> Vec<(PreconditionerKind, Option<AnchorMethod>)> {
    let mut out = Vec::new();
    for &p in &cfg.precond {
        match p {
            PreconditionerKind::Nystrom => {
                out.extend(cfg.sampler.iter().map(|&s| (p, Some(s))));
            }
            PreconditionerKind::None => out.push((p, None)),
        }
    }
    out.dedup();
    out
}

pub fn config_id(precond: PreconditionerKind, sampler: Option<AnchorMethod>) -> String {
    match sampler {
        Some(s) => format!("{precond}-{s}"),
        None => precond.to_string(),
    }
}

fn emit<W: Write + ?Sized>(out: &mut W, rec: &Record) -> Result<()> {
    serde_json::to_writer(&mut *out, rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn solve_options(
    cfg: &RunConfig,
    precond: PreconditionerKind,
    sampler: Option<AnchorMethod>,
) -> SolveOptions {
    SolveOptions {
        max_iters: cfg.max_iters,
        rel_tol: cfg.tol,
        track_energy_norm: false,
        preconditioner: precond,
        record_timings: true,
        sampler: sampler.unwrap_or(AnchorMethod::Id),
        fgt_delta: cfg.fgt_delta,
        dense_cap: cfg.dense_cap,
        condition_probes: cfg.cond_probes,
    }
}

/// Runs every configuration of `cfg` on one dataset, writing JSONL to `out`.
/// A failing configuration produces an `error` record and the run goes on;
/// the returned summaries cover the configurations that succeeded.
pub fn run_benchmark<W: Write + ?Sized>(cfg: &RunConfig, out: &mut W) -> Result<Vec<Summary>> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    run_on_dataset(cfg, &data, out)
}

pub fn run_on_dataset<W: Write + ?Sized>(
    cfg: &RunConfig,
    data: &Dataset,
    out: &mut W,
) -> Result<Vec<Summary>> {
    cfg.validate()?;
    let x = &data.points;
    let n = x.len();
    emit(
        out,
        &Record::Dataset {
            source: cfg.dataset.clone(),
            n,
            d: x.dim(),
            features: data.features.clone(),
            label: data.label.clone(),
            standardization: data.standardization.clone(),
        },
    )?;
    let kcfg = KernelConfig::new(cfg.epsilon, cfg.beta)?;
    let dense_ok = n <= cfg.dense_cap;
    let reference = if dense_ok {
        Some(DenseReference::new(x, kcfg, &data.labels, cfg.dense_cap)?)
    } else {
        log::info!(
            "n = {n} above dense cap {}: energy norms not tracked",
            cfg.dense_cap
        );
        None
    };
    let wants_bound = cfg.cond_probes > 0
        && dense_ok
        && cfg.precond.contains(&PreconditionerKind::Nystrom)
        && cfg.sampler.contains(&AnchorMethod::Id);
    let spectrum = if wants_bound {
        Some(kernel_spectrum(x, cfg.epsilon)?)
    } else {
        None
    };

    let mut summaries = Vec::new();
    for (precond, sampler) in configurations(cfg) {
        let id = config_id(precond, sampler);
        let opts = solve_options(cfg, precond, sampler);
        let sketch = SketchConfig {
            l: cfg.oversample,
            seed: cfg.seed,
        };
        let t = Instant::now();
        let rep = match solve_krr_with(
            x,
            &data.labels,
            kcfg,
            cfg.rank,
            sketch,
            &opts,
            reference.as_ref(),
        ) {
            Ok(r) => r,
            Err(e) => {
                emit(
                    out,
                    &Record::Error {
                        config_id: id,
                        message: e.to_string(),
                    },
                )?;
                continue;
            }
        };
        let total = t.elapsed().as_secs_f64();
        for rec in iteration_records(&id, &rep) {
            emit(out, &rec)?;
        }
        let bound = match (&spectrum, sampler) {
            (Some(s), Some(AnchorMethod::Id)) if precond == PreconditionerKind::Nystrom => {
                Some(nystrom_condition_bound(s, n, cfg.rank, cfg.beta)?)
            }
            _ => None,
        };
        let nystrom = precond == PreconditionerKind::Nystrom;
        let summary = Summary {
            config_id: id,
            precond,
            sampler,
            n,
            d: x.dim(),
            epsilon: cfg.epsilon,
            beta: cfg.beta,
            rank: nystrom.then_some(cfg.rank),
            oversample: nystrom.then_some(cfg.oversample),
            seed: cfg.seed,
            tol: cfg.tol,
            max_iters: cfg.max_iters,
            fgt_delta: cfg.fgt_delta,
            iterations: rep.iterations,
            converged: rep.converged,
            final_relative_residual: rep.relative_residual(),
            final_energy_norm: rep.energy_history.as_ref().and_then(|e| e.last().copied()),
            clip_count: rep.clip_count,
            condition_estimate: rep.condition.map(|c| c.condition()),
            condition_estimate_breakdown: rep.condition.map(|c| c.breakdown),
            condition_bound: bound,
            anchor_seconds: rep.wall_times.anchor_selection,
            build_seconds: rep.wall_times.build,
            iteration_seconds: rep.wall_times.iterations,
            total_seconds: total,
        };
        emit(out, &Record::Summary(Box::new(summary.clone())))?;
        summaries.push(summary);
    }
    out.flush()?;
    Ok(summaries)
}

fn iteration_records(id: &str, rep: &SolveReport) -> Vec<Record> {
    let r0 = rep.residual_history[0];
    rep.residual_history
        .iter()
        .enumerate()
        .map(|(i, &r)| Record::Iter {
            config_id: id.to_string(),
            iter: i,
            residual_norm: r,
            relative_residual: if r0 > 0.0 { r / r0 } else { 0.0 },
            energy_norm: rep.energy_history.as_ref().map(|e| e[i]),
            cumulative_seconds: rep.cumulative_seconds[i],
        })
        .collect()
}

/// `1 + M lambda_{k+1} / beta` with `M = 2 sqrt(1 + k (n - k))`.
pub fn nystrom_condition_bound(
    spectrum: &SpectralSummary,
    n: usize,
    k: usize,
    beta: f64,
) -> Result<f64> {
    let lambda = spectrum.lambda(k + 1).unwrap_or(0.0);
    condition_bound(lambda, 2.0 * id_error_factor(n, k)?, beta)
}

/// Rank figures for a dataset at a target condition number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub n: usize,
    pub d: usize,
    pub box_lengths: Vec<f64>,
    pub epsilon: f64,
    pub beta: f64,
    pub xi: f64,
    /// Error-factor supremum over all ranks, `sqrt(1 + n^2 / 4)`.
    pub m_bar: f64,
    /// `beta (xi - 1) / (m_bar n)`.
    pub delta: f64,
    pub gamma: f64,
    pub required_rank: usize,
    pub required_rank_vacuous: bool,
    pub numerical_rank_bound: usize,
    /// Dense count of `sigma_j / sigma_1 >= delta`; only under the dense cap.
    pub numerical_rank: Option<usize>,
}

pub fn report_bounds(
    x: &PointSet,
    epsilon: f64,
    beta: f64,
    xi: f64,
    dense_cap: usize,
) -> Result<BoundsReport> {
    if !(xi > 1.0) {
        return Err(KrrError::InvalidParameter(format!(
            "target condition number xi must exceed 1, got {xi}"
        )));
    }
    let n = x.len();
    let box_lengths = x.bounding_box().lengths();
    let m_bar = (1.0 + (n as f64).powi(2) / 4.0).sqrt();
    let inputs = RankBoundInputs {
        box_lengths: box_lengths.clone(),
        epsilon,
        beta,
        xi,
        m_bar,
        n,
    };
    let req = required_rank(&inputs)?;
    let delta = beta * (xi - 1.0) / (m_bar * n as f64);
    let numerical = if n <= dense_cap {
        Some(numerical_rank(&kernel_spectrum(x, epsilon)?, delta)?)
    } else {
        None
    };
    Ok(BoundsReport {
        n,
        d: x.dim(),
        epsilon,
        beta,
        xi,
        m_bar,
        delta,
        gamma: gamma(epsilon, delta)?,
        required_rank: req.rank,
        required_rank_vacuous: req.vacuous,
        numerical_rank_bound: numerical_rank_bound(&box_lengths, epsilon, delta)?,
        numerical_rank: numerical,
        box_lengths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configuration_expansion() {
        let mut cfg = RunConfig::default();
        cfg.sampler = vec![AnchorMethod::Id, AnchorMethod::Fps];
        let ids: Vec<String> = configurations(&cfg)
            .into_iter()
            .map(|(p, s)| config_id(p, s))
            .collect();
        assert_eq!(ids, vec!["nystrom-id", "nystrom-fps", "none"]);
    }

    #[test]
    fn bounds_report_on_degenerate_data() {
        let x = PointSet::new(vec![0.3; 20], 2).unwrap();
        let r = report_bounds(&x, 1.0, 1.0, 2.0, 100).unwrap();
        assert_eq!(r.required_rank, 1);
        assert_eq!(r.numerical_rank, Some(1));
        assert!(report_bounds(&x, 1.0, 1.0, 1.0, 100).is_err());
    }
}
