//! Replication engine: regimes, per-replication rows, aggregates, bound
//! audits and the discrete-sampling and renewal studies.

pub mod ks;
pub mod suites;

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{
    centralized_fixed, centralized_sequential, estimate_fixed, estimate_sequential,
    estimate_timing_only, reconstruct, EstimateResult, EstimatorKind, FusionError, FusionState,
};
use crate::model::{
    build_model, path_statistics, simulate_paths_with, Model, ModelError, ModelKind, ModelSpec,
    PathStats, SimOptions, TimeGrid,
};
use crate::rng::replication_rng;
use crate::trigger::{
    extract_renewals, run_b_trigger, run_sensors, sampling_stride, MessageLog, TriggerConfig,
    TriggerError, TriggerMode,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Trigger(#[from] TriggerError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Ks(#[from] ks::KsError),
    #[error(transparent)]
    FirstPassage(#[from] crate::first_passage::FirstPassageError),
}

/// `a * s^b`: thresholds as a function of the horizon `t` or target `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub a: f64,
    pub b: f64,
}

impl PowerLaw {
    pub fn eval(&self, s: f64) -> f64 {
        self.a * s.powf(self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Regime {
    FixedHorizon {
        t_list: Vec<f64>,
        delta_rule: PowerLaw,
    },
    Sequential {
        gamma_list: Vec<f64>,
        c_rule: PowerLaw,
        delta_rule: PowerLaw,
        /// Starting simulation horizon; doubled (with a warning) when too short.
        initial_horizon: f64,
    },
    DiscreteSampling {
        t: f64,
        delta_rule: PowerLaw,
        h_list: Vec<f64>,
    },
}

pub const DEFAULT_MAX_EXTENSIONS: u32 = 4;

fn default_max_extensions() -> u32 {
    DEFAULT_MAX_EXTENSIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub lambda_true: f64,
    pub regime: Regime,
    pub n_replications: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// Simulation steps per unit time.
    pub steps_per_unit: f64,
    #[serde(default = "default_max_extensions")]
    pub max_extensions: u32,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Model, HarnessError> {
        let model = build_model(self.model.clone())?;
        let mut errs = Vec::new();
        if self.n_replications < 2 {
            errs.push(format!("n_replications must be at least 2, got {}", self.n_replications));
        }
        if !self.lambda_true.is_finite() {
            errs.push("lambda_true must be finite".into());
        }
        if !(self.steps_per_unit > 0.0 && self.steps_per_unit.is_finite()) {
            errs.push(format!("steps_per_unit must be positive, got {}", self.steps_per_unit));
        }
        if self.estimators.is_empty() {
            errs.push("at least one estimator is required".into());
        }
        let positive_list = |errs: &mut Vec<String>, name: &str, v: &[f64]| {
            if v.is_empty() {
                errs.push(format!("{name} must not be empty"));
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                errs.push(format!("{name} entries must be positive"));
            }
        };
        let check_rule = |errs: &mut Vec<String>, name: &str, r: &PowerLaw| {
            if !(r.a > 0.0 && r.a.is_finite() && r.b.is_finite()) {
                errs.push(format!("{name} needs a > 0 and finite b"));
            }
        };
        let det_a = model.is_info_deterministic();
        let brownian = model.kind() == ModelKind::BrownianConstant;
        for e in &self.estimators {
            let ok = match (&self.regime, e) {
                (_, EstimatorKind::DecentralizedFixed) => {
                    det_a && !matches!(self.regime, Regime::Sequential { .. })
                }
                (_, EstimatorKind::TimingOnly) => {
                    brownian && !matches!(self.regime, Regime::Sequential { .. })
                }
                (Regime::Sequential { .. }, EstimatorKind::CentralizedFixed) => false,
                (Regime::Sequential { .. }, _) => true,
                (_, k) => !k.is_sequential(),
            };
            if !ok {
                errs.push(format!("estimator {e} is not available for this model/regime"));
            }
        }
        match &self.regime {
            Regime::FixedHorizon { t_list, delta_rule } => {
                positive_list(&mut errs, "t_list", t_list);
                check_rule(&mut errs, "delta_rule", delta_rule);
            }
            Regime::Sequential {
                gamma_list,
                c_rule,
                delta_rule,
                initial_horizon,
            } => {
                positive_list(&mut errs, "gamma_list", gamma_list);
                check_rule(&mut errs, "c_rule", c_rule);
                check_rule(&mut errs, "delta_rule", delta_rule);
                if !(*initial_horizon > 0.0 && initial_horizon.is_finite()) {
                    errs.push("initial_horizon must be positive".into());
                }
            }
            Regime::DiscreteSampling { t, delta_rule, h_list } => {
                positive_list(&mut errs, "h_list", h_list);
                check_rule(&mut errs, "delta_rule", delta_rule);
                if !(*t > 0.0 && t.is_finite()) {
                    errs.push("t must be positive".into());
                } else if let Ok(grid) = TimeGrid::with_resolution(*t, self.steps_per_unit) {
                    for &h in h_list {
                        if sampling_stride(h, grid.dt()).is_none() {
                            errs.push(format!("h = {h} is not a multiple of dt = {}", grid.dt()));
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(model)
        } else {
            Err(HarnessError::InvalidConfig(errs))
        }
    }
}

/// Per-sensor trigger configs with `c` present exactly where the model needs it.
pub fn thresholds(model: &Model, delta: f64, c: f64, mode: TriggerMode) -> Vec<TriggerConfig> {
    let need_c = !model.is_info_deterministic();
    (0..model.k())
        .map(|i| {
            let c = (need_c && !model.is_local_info_deterministic(i)).then_some(c);
            TriggerConfig::symmetric(delta, c).with_mode(mode)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub replication: u64,
    pub estimator: EstimatorKind,
    /// `t` for fixed-horizon estimators, `gamma` for sequential ones.
    pub point: f64,
    pub h: Option<f64>,
    pub value: f64,
    pub error: f64,
    /// `sqrt(norm) * (value - lambda)` with norm `A_t` or `gamma`.
    pub standardized: f64,
    pub stop_time: Option<f64>,
    pub info_used: f64,
    /// True `A` at the decision time.
    pub oracle_info: f64,
    /// True score `M` at the decision time.
    pub oracle_score: f64,
    /// Messages (B and A) per sensor up to the decision time.
    pub messages: Vec<usize>,
    pub mean_overshoot: Option<f64>,
    pub overshoot_count: usize,
    pub failure: Option<String>,
}

impl ReportRow {
    fn failed(replication: u64, estimator: EstimatorKind, point: f64, h: Option<f64>, why: String) -> Self {
        Self {
            replication,
            estimator,
            point,
            h,
            value: f64::NAN,
            error: f64::NAN,
            standardized: f64::NAN,
            stop_time: None,
            info_used: f64::NAN,
            oracle_info: f64::NAN,
            oracle_score: f64::NAN,
            messages: Vec::new(),
            mean_overshoot: None,
            overshoot_count: 0,
            failure: Some(why),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub estimator: EstimatorKind,
    pub point: f64,
    pub h: Option<f64>,
    pub n: usize,
    pub failures: usize,
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    pub std_mean: f64,
    pub std_variance: f64,
    pub ks_d: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub messages_per_time: f64,
    pub mean_overshoot: Option<f64>,
    pub overshoot_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn aggregate(&self, estimator: EstimatorKind, point: f64, h: Option<f64>) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.estimator == estimator && a.point == point && a.h == h)
    }

    pub fn rows_for(&self, estimator: EstimatorKind, point: f64, h: Option<f64>) -> impl Iterator<Item = &ReportRow> {
        self.rows
            .iter()
            .filter(move |r| r.estimator == estimator && r.point == point && r.h == h)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.is_ok())
    }
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard error of the sample variance (uses the fourth central moment).
pub fn variance_stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mean, var) = mean_var(xs);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

/// Aggregates computed from rows alone, keyed by (estimator, point, h).
pub fn aggregate_rows(rows: &[ReportRow], lambda: f64) -> Vec<Aggregate> {
    type Key = (EstimatorKind, u64, Option<u64>);
    let mut groups: BTreeMap<Key, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.estimator, r.point.to_bits(), r.h.map(f64::to_bits)))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((estimator, point, h), rs)| {
            let ok: Vec<&ReportRow> = rs.iter().copied().filter(|r| r.is_ok()).collect();
            let values: Vec<f64> = ok.iter().map(|r| r.value).collect();
            let std: Vec<f64> = ok.iter().map(|r| r.standardized).collect();
            let (mean, variance) = mean_var(&values);
            let (std_mean, std_variance) = mean_var(&std);
            let ks = ks::ks_test(&std).ok();
            let rate: Vec<f64> = ok
                .iter()
                .map(|r| {
                    let time = r.stop_time.unwrap_or(r.point);
                    r.messages.iter().sum::<usize>() as f64 / time
                })
                .collect();
            let eta: Vec<f64> = ok.iter().filter_map(|r| r.mean_overshoot).collect();
            let (eta_mean, eta_var) = mean_var(&eta);
            Aggregate {
                estimator,
                point: f64::from_bits(point),
                h: h.map(f64::from_bits),
                n: ok.len(),
                failures: rs.len() - ok.len(),
                mean,
                variance,
                bias: mean - lambda,
                std_mean,
                std_variance,
                ks_d: ks.map(|k| k.d),
                ks_p_value: ks.map(|k| k.p_value),
                messages_per_time: mean_var(&rate).0,
                mean_overshoot: (!eta.is_empty()).then_some(eta_mean),
                overshoot_stderr: (eta.len() > 1).then(|| (eta_var / eta.len() as f64).sqrt()),
            }
        })
        .collect()
}

fn row_from(
    replication: u64,
    res: &EstimateResult,
    point: f64,
    h: Option<f64>,
    lambda: f64,
    stats: &PathStats,
    messages: Vec<usize>,
) -> ReportRow {
    let when = res.stop_time.unwrap_or(point);
    let norm = if res.estimator.is_sequential() { point } else { stats.a_at(point) };
    let error = res.value - lambda;
    ReportRow {
        replication,
        estimator: res.estimator,
        point,
        h,
        value: res.value,
        error,
        standardized: norm.sqrt() * error,
        stop_time: res.stop_time,
        info_used: res.info_used,
        oracle_info: stats.a_at(when),
        oracle_score: stats.m_at(when),
        messages,
        mean_overshoot: None,
        overshoot_count: 0,
        failure: None,
    }
}

fn per_sensor_messages(log: &MessageLog, t: f64) -> Vec<usize> {
    (0..log.k()).map(|i| log.b_count(i, t) + log.a_count(i, t)).collect()
}

fn simulate(
    model: &Model,
    lambda: f64,
    grid: TimeGrid,
    seed: u64,
    replication: u64,
) -> Result<PathStats, ModelError> {
    let mut rng = replication_rng(seed, replication);
    let paths = simulate_paths_with(model, lambda, grid, &mut rng, seed, SimOptions::default())?;
    path_statistics(&paths, model)
}

/// All rows of one replication; errors become flagged rows.
pub fn run_replication(cfg: &ExperimentConfig, model: &Model, replication: u64) -> Vec<ReportRow> {
    match &cfg.regime {
        Regime::FixedHorizon { t_list, delta_rule } => {
            fixed_horizon_rows(cfg, model, replication, t_list, delta_rule)
        }
        Regime::Sequential {
            gamma_list,
            c_rule,
            delta_rule,
            initial_horizon,
        } => sequential_rows(cfg, model, replication, gamma_list, c_rule, delta_rule, *initial_horizon),
        Regime::DiscreteSampling { t, delta_rule, h_list } => {
            discrete_rows(cfg, model, replication, *t, delta_rule, h_list)
        }
    }
}

fn fixed_estimate(
    kind: EstimatorKind,
    stats: &PathStats,
    state: Option<&FusionState>,
    t: f64,
) -> Result<EstimateResult, FusionError> {
    match kind {
        EstimatorKind::CentralizedFixed => centralized_fixed(stats, t),
        EstimatorKind::DecentralizedFixed => estimate_fixed(state.expect("log built"), t),
        EstimatorKind::TimingOnly => estimate_timing_only(state.expect("log built"), t),
        other => unreachable!("{other} rejected by validation"),
    }
}

fn fixed_horizon_rows(
    cfg: &ExperimentConfig,
    model: &Model,
    rep: u64,
    t_list: &[f64],
    delta_rule: &PowerLaw,
) -> Vec<ReportRow> {
    let lambda = cfg.lambda_true;
    let t_max = t_list.iter().copied().fold(0.0, f64::max);
    let all_failed = |why: String| {
        t_list
            .iter()
            .flat_map(|&t| cfg.estimators.iter().map(move |&e| (t, e)))
            .map(|(t, e)| ReportRow::failed(rep, e, t, None, why.clone()))
            .collect()
    };
    let grid = match TimeGrid::with_resolution(t_max, cfg.steps_per_unit) {
        Ok(g) => g,
        Err(e) => return all_failed(e.to_string()),
    };
    let stats = match simulate(model, lambda, grid, cfg.master_seed, rep) {
        Ok(s) => s,
        Err(e) => return all_failed(e.to_string()),
    };
    let needs_log = cfg.estimators.iter().any(|e| {
        matches!(e, EstimatorKind::DecentralizedFixed | EstimatorKind::TimingOnly)
    });
    let mut rows = Vec::new();
    for &t in t_list {
        let delta = delta_rule.eval(t);
        let cfgs = thresholds(model, delta, delta, TriggerMode::Continuous);
        let built = if needs_log {
            run_sensors(&stats, model, &cfgs)
                .map_err(|e| e.to_string())
                .and_then(|log| {
                    reconstruct(&log, model, &cfgs)
                        .map(|s| (Some(log), Some(s)))
                        .map_err(|e| e.to_string())
                })
        } else {
            Ok((None, None))
        };
        for &e in &cfg.estimators {
            let row = match &built {
                Err(why) => ReportRow::failed(rep, e, t, None, why.clone()),
                Ok((log, state)) => match fixed_estimate(e, &stats, state.as_ref(), t) {
                    Ok(res) => {
                        let msgs = log.as_ref().map(|l| per_sensor_messages(l, t)).unwrap_or_default();
                        row_from(rep, &res, t, None, lambda, &stats, msgs)
                    }
                    Err(err) => ReportRow::failed(rep, e, t, None, err.to_string()),
                },
            };
            rows.push(row);
        }
    }
    rows
}

#[allow(clippy::too_many_arguments)]
fn sequential_rows(
    cfg: &ExperimentConfig,
    model: &Model,
    rep: u64,
    gamma_list: &[f64],
    c_rule: &PowerLaw,
    delta_rule: &PowerLaw,
    initial_horizon: f64,
) -> Vec<ReportRow> {
    let lambda = cfg.lambda_true;
    let mut grid = match TimeGrid::with_resolution(initial_horizon, cfg.steps_per_unit) {
        Ok(g) => g,
        Err(err) => {
            return gamma_list
                .iter()
                .flat_map(|&g| cfg.estimators.iter().map(move |&e| (g, e)))
                .map(|(g, e)| ReportRow::failed(rep, e, g, None, err.to_string()))
                .collect()
        }
    };
    let mut attempt = 0;
    loop {
        let mut rows = Vec::new();
        let mut exhausted = false;
        let stats = match simulate(model, lambda, grid, cfg.master_seed, rep) {
            Ok(s) => s,
            Err(err) => {
                return gamma_list
                    .iter()
                    .flat_map(|&g| cfg.estimators.iter().map(move |&e| (g, e)))
                    .map(|(g, e)| ReportRow::failed(rep, e, g, None, err.to_string()))
                    .collect()
            }
        };
        for &gamma in gamma_list {
            let cfgs = thresholds(model, delta_rule.eval(gamma), c_rule.eval(gamma), TriggerMode::Continuous);
            let built = run_sensors(&stats, model, &cfgs)
                .map_err(|e| e.to_string())
                .and_then(|log| {
                    reconstruct(&log, model, &cfgs)
                        .map(|s| (log, s))
                        .map_err(|e| e.to_string())
                });
            for &e in &cfg.estimators {
                let res = match (&built, e) {
                    (_, EstimatorKind::CentralizedSequential) => {
                        centralized_sequential(&stats, gamma).map_err(|e| e.to_string())
                    }
                    (Ok((_, state)), EstimatorKind::DecentralizedSequential) => {
                        estimate_sequential(state, gamma, &grid).map_err(|e| e.to_string())
                    }
                    (Err(why), _) => Err(why.clone()),
                    (_, other) => unreachable!("{other} rejected by validation"),
                };
                let row = match res {
                    Ok(r) => {
                        let msgs = match &built {
                            Ok((log, _)) => per_sensor_messages(log, r.stop_time.unwrap_or(gamma)),
                            Err(_) => Vec::new(),
                        };
                        row_from(rep, &r, gamma, None, lambda, &stats, msgs)
                    }
                    Err(why) => {
                        exhausted |= why.contains("never reached");
                        ReportRow::failed(rep, e, gamma, None, why)
                    }
                };
                rows.push(row);
            }
        }
        if exhausted && attempt < cfg.max_extensions {
            attempt += 1;
            grid = grid.extended(2);
            warn!(
                "replication {rep}: information target not reached, extending horizon to {}",
                grid.t_end()
            );
            continue;
        }
        return rows;
    }
}

fn discrete_rows(
    cfg: &ExperimentConfig,
    model: &Model,
    rep: u64,
    t: f64,
    delta_rule: &PowerLaw,
    h_list: &[f64],
) -> Vec<ReportRow> {
    let lambda = cfg.lambda_true;
    let fail_all = |why: String| {
        let mut rows = Vec::new();
        for &e in &cfg.estimators {
            if e == EstimatorKind::CentralizedFixed {
                rows.push(ReportRow::failed(rep, e, t, None, why.clone()));
            } else {
                for &h in h_list {
                    rows.push(ReportRow::failed(rep, e, t, Some(h), why.clone()));
                }
            }
        }
        rows
    };
    let grid = match TimeGrid::with_resolution(t, cfg.steps_per_unit) {
        Ok(g) => g,
        Err(e) => return fail_all(e.to_string()),
    };
    let stats = match simulate(model, lambda, grid, cfg.master_seed, rep) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let delta = delta_rule.eval(t);
    let mut rows = Vec::new();
    if cfg.estimators.contains(&EstimatorKind::CentralizedFixed) {
        rows.push(match centralized_fixed(&stats, t) {
            Ok(r) => row_from(rep, &r, t, None, lambda, &stats, Vec::new()),
            Err(e) => ReportRow::failed(rep, EstimatorKind::CentralizedFixed, t, None, e.to_string()),
        });
    }
    for &h in h_list {
        let cfgs = thresholds(model, delta, delta, TriggerMode::DiscreteSampling { h });
        let built = run_sensors(&stats, model, &cfgs)
            .map_err(|e| e.to_string())
            .and_then(|log| {
                reconstruct(&log, model, &cfgs)
                    .map(|s| (log, s))
                    .map_err(|e| e.to_string())
            });
        for &e in cfg.estimators.iter().filter(|&&e| e != EstimatorKind::CentralizedFixed) {
            let row = match &built {
                Err(why) => ReportRow::failed(rep, e, t, Some(h), why.clone()),
                Ok((log, state)) => match fixed_estimate(e, &stats, Some(state), t) {
                    Ok(res) => {
                        let mut row = row_from(rep, &res, t, Some(h), lambda, &stats, per_sensor_messages(log, t));
                        let etas: Vec<f64> = log
                            .sensors
                            .iter()
                            .flat_map(|s| s.b.iter().filter(|m| m.time <= t).map(|m| m.overshoot))
                            .collect();
                        row.overshoot_count = etas.len();
                        if !etas.is_empty() {
                            row.mean_overshoot = Some(etas.iter().sum::<f64>() / etas.len() as f64);
                        }
                        row
                    }
                    Err(err) => ReportRow::failed(rep, e, t, Some(h), err.to_string()),
                },
            };
            rows.push(row);
        }
    }
    rows
}

/// Runs every replication (in parallel) and aggregates. Replications are
/// independent streams, so the report does not depend on execution order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let model = cfg.validate()?;
    let per_rep: Vec<Vec<ReportRow>> = (0..cfg.n_replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &model, rep))
        .collect();
    let rows: Vec<ReportRow> = per_rep.into_iter().flatten().collect();
    let aggregates = aggregate_rows(&rows, cfg.lambda_true);
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        aggregates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta_total: f64,
    pub c_total: f64,
    /// max over the checked times of `|B - tB|`.
    pub max_b_gap: f64,
    /// extremes of `A - tA`.
    pub max_a_gap: f64,
    pub min_a_gap: f64,
    pub sensor_max_b_gap: Vec<f64>,
    pub sensor_min_a_gap: Vec<f64>,
    pub sensor_max_a_gap: Vec<f64>,
    /// Whether `tA <= A` is claimed (no random cross terms).
    pub lower_a_bound_applies: bool,
    pub points_checked: usize,
    pub violations: Vec<String>,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the pathwise tracking bounds on the simulation grid (continuous
/// mode) or at the sampling instants (discrete mode, overshoot-augmented).
pub fn audit_bounds(
    stats: &PathStats,
    state: &FusionState,
    log: &MessageLog,
    cfgs: &[TriggerConfig],
    model: &Model,
) -> BoundReport {
    let k = stats.k;
    let grid = stats.grid;
    let discrete = cfgs.iter().find_map(|c| match c.mode {
        TriggerMode::DiscreteSampling { h } => Some(h),
        TriggerMode::Continuous => None,
    });
    let indices: Vec<usize> = match discrete {
        Some(h) => {
            let stride = sampling_stride(h, grid.dt()).unwrap_or(1);
            (0..=grid.n_steps()).step_by(stride).collect()
        }
        None => (0..=grid.n_steps()).collect(),
    };
    let mut rep = BoundReport {
        delta_total: state.delta_total(),
        c_total: state.c_total(),
        max_b_gap: 0.0,
        max_a_gap: f64::NEG_INFINITY,
        min_a_gap: f64::INFINITY,
        sensor_max_b_gap: vec![0.0; k],
        sensor_min_a_gap: vec![f64::INFINITY; k],
        sensor_max_a_gap: vec![f64::NEG_INFINITY; k],
        lower_a_bound_applies: model.random_pairs_empty(),
        points_checked: indices.len(),
        violations: Vec::new(),
    };
    fn note(rep: &mut BoundReport, msg: String) {
        if rep.violations.len() < 20 {
            rep.violations.push(msg);
        }
    }
    for &s in &indices {
        let t = grid.time(s);
        for i in 0..k {
            let gap_b = (stats.b_i[i][s] - state.tb_i(i, t)).abs();
            rep.sensor_max_b_gap[i] = rep.sensor_max_b_gap[i].max(gap_b);
            let allowed = match discrete {
                None => cfgs[i].max_delta(),
                Some(_) => {
                    let eta: f64 = log.sensors[i]
                        .b
                        .iter()
                        .take_while(|m| m.time <= t)
                        .map(|m| m.overshoot)
                        .sum();
                    // the sampled reference is a float sum; allow for its rounding
                    (cfgs[i].max_delta() + eta) * (1.0 + 1e-9) + 1e-12
                }
            };
            if gap_b > allowed {
                note(&mut rep, format!("sensor {i} |B - tB| = {gap_b} > {allowed} at t = {t}"));
            }
            let gap_a = stats.a_i[i][s] - state.ta_i(i, t);
            rep.sensor_min_a_gap[i] = rep.sensor_min_a_gap[i].min(gap_a);
            rep.sensor_max_a_gap[i] = rep.sensor_max_a_gap[i].max(gap_a);
            let c_i = cfgs[i].c.unwrap_or(0.0);
            let model_a_i = model.is_local_info_deterministic(i);
            if gap_a < 0.0 || (gap_a > c_i && (cfgs[i].c.is_some() || model_a_i)) {
                note(&mut rep, format!("sensor {i} A - tA = {gap_a} outside [0, {c_i}] at t = {t}"));
            }
        }
        if discrete.is_none() {
            let gap_b = (stats.b[s] - state.tb(t)).abs();
            let (dt, ct) = (rep.delta_total, rep.c_total);
            rep.max_b_gap = rep.max_b_gap.max(gap_b);
            if gap_b > rep.delta_total {
                note(&mut rep, format!("|B - tB| = {gap_b} > {dt} at t = {t}"));
            }
            let gap_a = stats.a[s] - state.ta(t);
            rep.max_a_gap = rep.max_a_gap.max(gap_a);
            rep.min_a_gap = rep.min_a_gap.min(gap_a);
            if gap_a > rep.c_total {
                note(&mut rep, format!("A - tA = {gap_a} > {ct} at t = {t}"));
            }
            if rep.lower_a_bound_applies && gap_a < 0.0 {
                note(&mut rep, format!("A - tA = {gap_a} < 0 at t = {t}"));
            }
        }
    }
    rep
}

/// Simulates one replication and audits it.
pub fn audit_replication(
    model: &Model,
    lambda: f64,
    grid: TimeGrid,
    cfgs: &[TriggerConfig],
    seed: u64,
    replication: u64,
) -> Result<BoundReport, HarnessError> {
    let stats = simulate(model, lambda, grid, seed, replication)?;
    let log = run_sensors(&stats, model, cfgs)?;
    let state = reconstruct(&log, model, cfgs)?;
    Ok(audit_bounds(&stats, &state, &log, cfgs, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootRow {
    pub h: f64,
    pub mean_eta: f64,
    pub eta_stderr: f64,
    pub eta_over_cbrt_h: f64,
    pub messages: f64,
    pub bias: f64,
    pub bias_stderr: f64,
    pub mse: f64,
    pub std_variance: f64,
    /// `E[(sqrt(A_t) (value - lambda))^2]`, bias included.
    pub std_second_moment: f64,
    /// `h^{1/3} sqrt(t) / Delta < 1` and `Delta / sqrt(t) < 1`.
    pub regime_satisfied: bool,
}

/// One row per sampling period from a discrete-sampling experiment.
pub fn overshoot_study(cfg: &ExperimentConfig) -> Result<Vec<OvershootRow>, HarnessError> {
    let (t, delta_rule, h_list) = match &cfg.regime {
        Regime::DiscreteSampling { t, delta_rule, h_list } => (*t, *delta_rule, h_list.clone()),
        _ => {
            return Err(HarnessError::InvalidConfig(vec![
                "overshoot study needs a discrete_sampling regime".into(),
            ]))
        }
    };
    if cfg.model.kind != ModelKind::BrownianConstant {
        return Err(HarnessError::InvalidConfig(vec![
            "overshoot study is defined for the Brownian model".into(),
        ]));
    }
    let mut cfg = cfg.clone();
    cfg.estimators = vec![EstimatorKind::DecentralizedFixed];
    let report = run_experiment(&cfg)?;
    let delta = delta_rule.eval(t);
    Ok(h_list
        .iter()
        .map(|&h| {
            let rows: Vec<&ReportRow> = report
                .rows_for(EstimatorKind::DecentralizedFixed, t, Some(h))
                .filter(|r| r.is_ok())
                .collect();
            let eta: Vec<f64> = rows.iter().filter_map(|r| r.mean_overshoot).collect();
            let err: Vec<f64> = rows.iter().map(|r| r.error).collect();
            let std: Vec<f64> = rows.iter().map(|r| r.standardized).collect();
            let (eta_mean, eta_var) = mean_var(&eta);
            let (bias, err_var) = mean_var(&err);
            let msgs: Vec<f64> = rows.iter().map(|r| r.messages.iter().sum::<usize>() as f64).collect();
            OvershootRow {
                h,
                mean_eta: eta_mean,
                eta_stderr: (eta_var / eta.len() as f64).sqrt(),
                eta_over_cbrt_h: eta_mean / h.cbrt(),
                messages: mean_var(&msgs).0,
                bias,
                bias_stderr: (err_var / err.len() as f64).sqrt(),
                mse: err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64,
                std_variance: mean_var(&std).1,
                std_second_moment: std.iter().map(|z| z * z).sum::<f64>() / std.len() as f64,
                regime_satisfied: h.cbrt() * t.sqrt() / delta < 1.0 && delta / t.sqrt() < 1.0,
            }
        })
        .collect())
}

/// Renewal statistics of one Brownian sensor up to `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalRep {
    /// All completed inter-arrival times within the simulated horizon.
    pub deltas: Vec<f64>,
    /// `m_t`.
    pub count: usize,
    /// `tau_{m_t + 1} - t`, when the next renewal happened within the horizon.
    pub excess: Option<f64>,
    /// `t - tau_{m_t}`.
    pub age: f64,
    /// `A_t - checkA_t`.
    pub info_deficit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalSetup {
    pub x: f64,
    pub lambda: f64,
    pub delta: f64,
    pub t: f64,
    pub horizon: f64,
    pub steps_per_unit: f64,
}

pub fn renewal_study(setup: &RenewalSetup, n_reps: usize, seed: u64) -> Result<Vec<RenewalRep>, HarnessError> {
    let model = build_model(ModelSpec::brownian(vec![setup.x]))?;
    let grid = TimeGrid::with_resolution(setup.horizon, setup.steps_per_unit)?;
    let cfg = TriggerConfig::symmetric(setup.delta, None);
    if setup.t > setup.horizon {
        return Err(HarnessError::InvalidConfig(vec!["t must not exceed the horizon".into()]));
    }
    (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let stats = simulate(&model, setup.lambda, grid, seed, rep)?;
            let out = run_b_trigger(&stats.b_i[0], &grid, &cfg)?;
            let log = MessageLog {
                sensors: vec![crate::trigger::SensorLog {
                    b: out.messages,
                    a: Vec::new(),
                    pending_excursion: out.pending_excursion,
                }],
                horizon: grid.t_end(),
            };
            let all = extract_renewals(&log, 0, grid.t_end())?;
            let count = log.b_count(0, setup.t);
            let times = &log.sensors[0].b;
            let last = if count == 0 { 0.0 } else { times[count - 1].time };
            Ok(RenewalRep {
                deltas: all.deltas,
                count,
                excess: times.get(count).map(|m| m.time - setup.t),
                age: setup.t - last,
                info_deficit: setup.x * setup.x * (setup.t - last),
            })
        })
        .collect()
}
