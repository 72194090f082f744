//! Fusion-center reconstruction and estimators.
//!
//! Everything in [`FusionState`] is computed from the message log plus model
//! metadata (thresholds, closed-form deterministic variations); the sensor
//! paths themselves are never consulted. The centralized estimators, which do
//! see the full statistics, live here too as oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{first_crossing, Model, PathStats, TimeGrid};
use crate::trigger::{level, MessageLog, TriggerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("inconsistent message log: {0}")]
    InconsistentLog(String),
    #[error("zero information at t = {0}")]
    ZeroInformation(f64),
    #[error("information never reached {level} within horizon {horizon}")]
    HorizonExhausted { level: f64, horizon: f64 },
    #[error("gamma = {gamma} must exceed c = {c}")]
    GammaTooSmall { gamma: f64, c: f64 },
    #[error("no messages received by t = {0}")]
    NoMessages(f64),
    #[error("{0} requires a model with deterministic information")]
    RandomInformation(&'static str),
    #[error("the timing-only estimator is defined for the Brownian model only")]
    NotBrownian,
    #[error("time {t} outside [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    CentralizedFixed,
    CentralizedSequential,
    DecentralizedFixed,
    DecentralizedSequential,
    TimingOnly,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::CentralizedFixed,
        EstimatorKind::CentralizedSequential,
        EstimatorKind::DecentralizedFixed,
        EstimatorKind::DecentralizedSequential,
        EstimatorKind::TimingOnly,
    ];

    pub fn is_sequential(self) -> bool {
        matches!(
            self,
            EstimatorKind::CentralizedSequential | EstimatorKind::DecentralizedSequential
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::CentralizedFixed => "centralized_fixed",
            EstimatorKind::CentralizedSequential => "centralized_sequential",
            EstimatorKind::DecentralizedFixed => "decentralized_fixed",
            EstimatorKind::DecentralizedSequential => "decentralized_sequential",
            EstimatorKind::TimingOnly => "timing_only",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimator: EstimatorKind,
    pub value: f64,
    pub stop_time: Option<f64>,
    /// Information the estimate divides by (A, reconstructed A, or the check-A proxy).
    pub info_used: f64,
    pub messages_used: usize,
}

#[derive(Debug, Clone)]
struct SensorTrack {
    b_times: Vec<f64>,
    /// Reconstructed `B^i` right after each B-message.
    b_levels: Vec<f64>,
    a_times: Vec<f64>,
    c: Option<f64>,
    weight: f64,
}

/// Fusion-center view of one replication.
#[derive(Debug, Clone)]
pub struct FusionState {
    model: Model,
    tracks: Vec<SensorTrack>,
    horizon: f64,
    delta_total: f64,
    c_total: f64,
}

pub fn reconstruct(
    log: &MessageLog,
    model: &Model,
    cfgs: &[TriggerConfig],
) -> Result<FusionState, FusionError> {
    let k = model.k();
    if log.k() != k || cfgs.len() != k {
        return Err(FusionError::InconsistentLog(format!(
            "log has {} sensors, model {k}, configs {}",
            log.k(),
            cfgs.len()
        )));
    }
    let d = model.random_cross_counts();
    let mut tracks = Vec::with_capacity(k);
    for (i, (s, cfg)) in log.sensors.iter().zip(cfgs).enumerate() {
        let increasing = |t: &[f64]| t.windows(2).all(|w| w[1] > w[0]);
        let b_times: Vec<f64> = s.b.iter().map(|m| m.time).collect();
        let a_times: Vec<f64> = s.a.iter().map(|m| m.time).collect();
        if !increasing(&b_times) || !increasing(&a_times) {
            return Err(FusionError::InconsistentLog(format!(
                "sensor {i} message times are not strictly increasing"
            )));
        }
        if s.b.iter().any(|m| m.bit > 1) {
            return Err(FusionError::InconsistentLog(format!("sensor {i} has a bit outside {{0,1}}")));
        }
        if !s.a.is_empty() && cfg.c.is_none() {
            return Err(FusionError::InconsistentLog(format!(
                "sensor {i} sent A-messages but has no c threshold"
            )));
        }
        let mut acc = 0.0;
        let b_levels = s
            .b
            .iter()
            .map(|m| {
                acc += if m.bit == 1 { cfg.delta_up } else { -cfg.delta_down };
                acc
            })
            .collect();
        tracks.push(SensorTrack {
            b_times,
            b_levels,
            a_times,
            c: cfg.c,
            weight: 1.0 + d[i] as f64,
        });
    }
    let delta_total = cfgs.iter().map(TriggerConfig::max_delta).sum();
    let c_total = if model.is_info_deterministic() {
        0.0
    } else {
        tracks.iter().filter_map(|t| t.c.map(|c| t.weight * c)).sum()
    };
    Ok(FusionState {
        model: model.clone(),
        tracks,
        horizon: log.horizon,
        delta_total,
        c_total,
    })
}

impl FusionState {
    pub fn k(&self) -> usize {
        self.tracks.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `sum_i max(delta_up^i, delta_down^i)`.
    pub fn delta_total(&self) -> f64 {
        self.delta_total
    }

    /// `sum_i (1 + d_i) c^i`; zero when `A` is deterministic.
    pub fn c_total(&self) -> f64 {
        self.c_total
    }

    pub fn tb_i(&self, i: usize, t: f64) -> f64 {
        let tr = &self.tracks[i];
        match tr.b_times.partition_point(|&s| s <= t) {
            0 => 0.0,
            n => tr.b_levels[n - 1],
        }
    }

    pub fn tb(&self, t: f64) -> f64 {
        (0..self.k()).map(|i| self.tb_i(i, t)).sum()
    }

    fn a_messages(&self, i: usize, t: f64, strict: bool) -> usize {
        let times = &self.tracks[i].a_times;
        if strict {
            times.partition_point(|&s| s < t)
        } else {
            times.partition_point(|&s| s <= t)
        }
    }

    fn ta_i_with(&self, i: usize, t: f64, strict: bool) -> f64 {
        if let Some(v) = self.model.deterministic_cross_info(i, i, t) {
            return v;
        }
        match self.tracks[i].c {
            Some(c) => level(self.a_messages(i, t, strict) as u64, c),
            None => 0.0,
        }
    }

    /// Reconstructed `A^i`: the closed form when deterministic, else `n c^i`.
    pub fn ta_i(&self, i: usize, t: f64) -> f64 {
        self.ta_i_with(i, t, false)
    }

    fn ta_with(&self, t: f64, strict: bool) -> f64 {
        if let Some(a) = self.model.deterministic_info(t) {
            return a;
        }
        let k = self.k();
        // same summation order as the path statistics: diagonal, then cross terms
        let mut acc = 0.0;
        for i in 0..k {
            acc += self.tracks[i].weight * self.ta_i_with(i, t, strict);
        }
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    if let Some(v) = self.model.deterministic_cross_info(i, j, t) {
                        acc += v;
                    }
                }
            }
        }
        acc
    }

    /// Reconstructed total information (right-continuous).
    pub fn ta(&self, t: f64) -> f64 {
        self.ta_with(t, false)
    }

    /// Left limit of [`FusionState::ta`] at `t`.
    pub fn ta_left(&self, t: f64) -> f64 {
        self.ta_with(t, true)
    }

    /// Timing-only information proxy `sum_i x_i^2 tau^i_{m_t}`.
    pub fn check_a(&self, t: f64) -> Result<f64, FusionError> {
        let x = self.model.brownian_coefficients().ok_or(FusionError::NotBrownian)?;
        Ok(self
            .tracks
            .iter()
            .zip(x)
            .map(|(tr, xi)| match tr.b_times.partition_point(|&s| s <= t) {
                0 => 0.0,
                n => xi * xi * tr.b_times[n - 1],
            })
            .sum())
    }

    pub fn check_a_i(&self, i: usize, t: f64) -> Result<f64, FusionError> {
        let x = self.model.brownian_coefficients().ok_or(FusionError::NotBrownian)?;
        let tr = &self.tracks[i];
        Ok(match tr.b_times.partition_point(|&s| s <= t) {
            0 => 0.0,
            n => x[i] * x[i] * tr.b_times[n - 1],
        })
    }

    pub fn messages_up_to(&self, t: f64) -> usize {
        self.tracks
            .iter()
            .map(|tr| {
                tr.b_times.partition_point(|&s| s <= t) + tr.a_times.partition_point(|&s| s <= t)
            })
            .sum()
    }

    fn check_time(&self, t: f64) -> Result<(), FusionError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(FusionError::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// First time the reconstructed information reaches `level`, scanning the
    /// message times and, where deterministic terms move continuously, `grid`.
    fn first_time_ta_reaches(&self, level: f64, grid: &TimeGrid) -> Option<f64> {
        let mut events: Vec<f64> = self.tracks.iter().flat_map(|t| t.a_times.iter().copied()).collect();
        let has_continuous_part = (0..self.k())
            .any(|i| (0..self.k()).any(|j| self.model.deterministic_cross_info(i, j, 1.0).is_some()));
        if has_continuous_part {
            events.extend(grid.times());
        }
        events.push(self.horizon);
        events.retain(|&t| t <= self.horizon);
        events.sort_by(|a, b| a.partial_cmp(b).unwrap());
        events.dedup();

        let mut prev = 0.0;
        if self.ta(0.0) >= level {
            return Some(0.0);
        }
        for &t in &events {
            if self.ta(t) >= level {
                if has_continuous_part && t > prev && self.ta_left(t) >= level {
                    // crossed continuously inside (prev, t): no messages there
                    let (mut lo, mut hi) = (prev, t);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if self.ta_left(mid) >= level {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return Some(hi);
                }
                return Some(t);
            }
            prev = t;
        }
        None
    }
}

/// Fixed-horizon decentralized estimator `tB_t / A_t` (deterministic `A` only).
pub fn estimate_fixed(state: &FusionState, t: f64) -> Result<EstimateResult, FusionError> {
    state.check_time(t)?;
    let a = state
        .model
        .deterministic_info(t)
        .ok_or(FusionError::RandomInformation("the fixed-horizon estimator"))?;
    if a == 0.0 {
        return Err(FusionError::ZeroInformation(t));
    }
    Ok(EstimateResult {
        estimator: EstimatorKind::DecentralizedFixed,
        value: state.tb(t) / a,
        stop_time: None,
        info_used: a,
        messages_used: state.messages_up_to(t),
    })
}

/// Sequential decentralized estimator: stop once `tA >= gamma - c`.
pub fn estimate_sequential(
    state: &FusionState,
    gamma: f64,
    grid: &TimeGrid,
) -> Result<EstimateResult, FusionError> {
    let c = state.c_total;
    if !(gamma > c) {
        return Err(FusionError::GammaTooSmall { gamma, c });
    }
    let target = gamma - c;
    let stop = state
        .first_time_ta_reaches(target, grid)
        .ok_or(FusionError::HorizonExhausted {
            level: target,
            horizon: state.horizon,
        })?;
    let info = state.ta(stop);
    if info == 0.0 {
        return Err(FusionError::ZeroInformation(stop));
    }
    Ok(EstimateResult {
        estimator: EstimatorKind::DecentralizedSequential,
        value: state.tb(stop) / info,
        stop_time: Some(stop),
        info_used: info,
        messages_used: state.messages_up_to(stop),
    })
}

/// Timing-only estimator `tB_t / checkA_t` for the Brownian model.
pub fn estimate_timing_only(state: &FusionState, t: f64) -> Result<EstimateResult, FusionError> {
    state.check_time(t)?;
    let check = state.check_a(t)?;
    if check == 0.0 {
        return Err(FusionError::NoMessages(t));
    }
    Ok(EstimateResult {
        estimator: EstimatorKind::TimingOnly,
        value: state.tb(t) / check,
        stop_time: None,
        info_used: check,
        messages_used: state.messages_up_to(t),
    })
}

/// Centralized fixed-horizon MLE `B_t / A_t`.
pub fn centralized_fixed(stats: &PathStats, t: f64) -> Result<EstimateResult, FusionError> {
    let horizon = stats.grid.t_end();
    if !(0.0..=horizon).contains(&t) {
        return Err(FusionError::OutOfHorizon { t, horizon });
    }
    let a = stats.a_at(t);
    if a == 0.0 {
        return Err(FusionError::ZeroInformation(t));
    }
    Ok(EstimateResult {
        estimator: EstimatorKind::CentralizedFixed,
        value: stats.b_at(t) / a,
        stop_time: None,
        info_used: a,
        messages_used: 0,
    })
}

/// Centralized sequential MLE: stop when `A` first reaches `gamma`.
pub fn centralized_sequential(stats: &PathStats, gamma: f64) -> Result<EstimateResult, FusionError> {
    if !(gamma > 0.0) {
        return Err(FusionError::GammaTooSmall { gamma, c: 0.0 });
    }
    let stop = first_crossing(&stats.grid, &stats.a, gamma).ok_or(FusionError::HorizonExhausted {
        level: gamma,
        horizon: stats.grid.t_end(),
    })?;
    Ok(EstimateResult {
        estimator: EstimatorKind::CentralizedSequential,
        value: stats.b_at(stop) / gamma,
        stop_time: Some(stop),
        info_used: gamma,
        messages_used: 0,
    })
}

/// Both centralized oracles; the sequential one only when `gamma` is given.
pub fn centralized_estimates(
    stats: &PathStats,
    t: f64,
    gamma: Option<f64>,
) -> Result<Vec<EstimateResult>, FusionError> {
    let mut out = vec![centralized_fixed(stats, t)?];
    if let Some(g) = gamma {
        out.push(centralized_sequential(stats, g)?);
    }
    Ok(out)
}

/// Log-likelihood `lambda B - lambda^2 A / 2` and score `B - lambda A`.
pub fn centralized_loglik(lambda: f64, b: f64, a: f64) -> (f64, f64) {
    (lambda * b - 0.5 * lambda * lambda * a, b - lambda * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, path_statistics, simulate_paths, ModelSpec};
    use crate::trigger::{run_sensors, AMessage, BMessage, SensorLog};
    use proptest::prelude::*;

    fn brownian(x: Vec<f64>) -> Model {
        build_model(ModelSpec::brownian(x)).unwrap()
    }

    fn log_of(b: &[(f64, u8)], a: &[f64], horizon: f64) -> MessageLog {
        MessageLog {
            sensors: vec![SensorLog {
                b: b.iter().map(|&(time, bit)| BMessage { time, bit, overshoot: 0.0 }).collect(),
                a: a.iter().map(|&time| AMessage { time }).collect(),
                pending_excursion: 0.0,
            }],
            horizon,
        }
    }

    #[test]
    fn step_reconstruction_of_bits() {
        let m = brownian(vec![1.0]);
        let log = log_of(&[(1.0, 1), (2.0, 0), (3.0, 1)], &[], 4.0);
        let s = reconstruct(&log, &m, &[TriggerConfig::symmetric(1.0, None)]).unwrap();
        assert_eq!(s.tb_i(0, 3.5), 1.0);
        assert_eq!(s.tb_i(0, 0.5), 0.0);
        assert_eq!(s.tb_i(0, 2.0), 0.0);
    }

    #[test]
    fn info_steps_by_c() {
        let m = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        let log = log_of(&[], &[1.0, 2.0, 5.0], 6.0);
        let s = reconstruct(&log, &m, &[TriggerConfig::symmetric(1.0, Some(0.5))]).unwrap();
        assert_eq!(s.ta_i(0, 3.0), 1.0);
        assert_eq!(s.ta(3.0), 1.0);
        assert_eq!(s.ta_left(5.0), 1.0);
        assert_eq!(s.ta(5.0), 1.5);
        assert_eq!(s.c_total(), 0.5);
    }

    #[test]
    fn deterministic_info_is_used_directly() {
        let m = brownian(vec![1.0, 2.0]);
        let log = MessageLog {
            sensors: vec![SensorLog::default(), SensorLog::default()],
            horizon: 10.0,
        };
        let cfg = TriggerConfig::symmetric(1.0, None);
        let s = reconstruct(&log, &m, &[cfg, cfg]).unwrap();
        for t in [0.0, 1.0, 7.5] {
            assert_eq!(s.ta(t), 5.0 * t);
        }
        assert_eq!(s.c_total(), 0.0);
        assert_eq!(s.delta_total(), 2.0);
    }

    #[test]
    fn fixed_estimate_divides_by_info() {
        let m = build_model(ModelSpec::gaussian_det_info(vec![1.0.into()], vec![vec![1.0.into()]])).unwrap();
        let log = log_of(&[(1.0, 1), (2.0, 1), (3.0, 1)], &[], 10.0);
        let s = reconstruct(&log, &m, &[TriggerConfig::symmetric(1.0, None)]).unwrap();
        let r = estimate_fixed(&s, 10.0).unwrap();
        assert!((r.value - 0.3).abs() < 1e-15);
        assert_eq!(r.stop_time, None);
        assert_eq!(estimate_fixed(&s, 0.5).unwrap().value, 0.0);
        assert!(matches!(estimate_fixed(&s, 0.0), Err(FusionError::ZeroInformation(_))));
    }

    #[test]
    fn sequential_threshold_arithmetic() {
        let m = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        let a_times: Vec<f64> = (1..=8).map(f64::from).collect();
        let log = log_of(&[(0.5, 1)], &a_times, 10.0);
        let cfg = TriggerConfig::symmetric(1.0, Some(1.0));
        let s = reconstruct(&log, &m, &[cfg]).unwrap();
        let grid = TimeGrid::new(10.0, 100).unwrap();
        let r = estimate_sequential(&s, 5.0, &grid).unwrap();
        assert_eq!(r.stop_time, Some(4.0));
        assert_eq!(r.info_used, 4.0);
        assert_eq!(r.value, 0.25);
        assert!(matches!(
            estimate_sequential(&s, 1.0, &grid),
            Err(FusionError::GammaTooSmall { .. })
        ));
        assert!(matches!(
            estimate_sequential(&s, 20.0, &grid),
            Err(FusionError::HorizonExhausted { .. })
        ));
    }

    #[test]
    fn sequential_with_deterministic_info_solves_closed_form() {
        let m = brownian(vec![2.0]);
        let log = log_of(&[], &[], 10.0);
        let s = reconstruct(&log, &m, &[TriggerConfig::symmetric(1.0, None)]).unwrap();
        let grid = TimeGrid::new(10.0, 7).unwrap();
        let r = estimate_sequential(&s, 10.0, &grid).unwrap();
        assert!((r.stop_time.unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn timing_only_arithmetic() {
        let m = brownian(vec![1.0]);
        let log = log_of(&[(2.0, 1), (3.0, 1)], &[], 4.0);
        let s = reconstruct(&log, &m, &[TriggerConfig::symmetric(1.0, None)]).unwrap();
        let r = estimate_timing_only(&s, 3.5).unwrap();
        assert_eq!(r.info_used, 3.0);
        assert!((r.value - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(estimate_timing_only(&s, 1.0), Err(FusionError::NoMessages(_))));
        let ou = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        let s = reconstruct(&log, &ou, &[TriggerConfig::symmetric(1.0, Some(1.0))]).unwrap();
        assert_eq!(estimate_timing_only(&s, 3.5).unwrap_err(), FusionError::NotBrownian);
    }

    #[test]
    fn loglik_examples() {
        assert_eq!(centralized_loglik(0.0, 3.0, 7.0), (0.0, 3.0));
        assert_eq!(centralized_loglik(1.0, 2.0, 4.0), (0.0, -2.0));
        let (_, score) = centralized_loglik(2.0 / 4.0, 2.0, 4.0);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn centralized_fixed_example() {
        let m = brownian(vec![1.0]);
        let grid = TimeGrid::new(4.0, 4).unwrap();
        let paths = crate::model::SensorPaths {
            grid,
            y: vec![vec![0.0, 0.5, 1.0, 1.5, 2.0]],
            lambda_true: 1.0,
            seed: 0,
        };
        let st = path_statistics(&paths, &m).unwrap();
        let r = centralized_fixed(&st, 4.0).unwrap();
        assert_eq!(r.value, 0.5);
        let seq = centralized_sequential(&st, 2.0).unwrap();
        assert_eq!(seq.stop_time, Some(2.0));
        assert_eq!(seq.value, 0.5);
    }

    #[test]
    fn inconsistent_logs_rejected() {
        let m = brownian(vec![1.0]);
        let cfg = TriggerConfig::symmetric(1.0, None);
        let unsorted = log_of(&[(2.0, 1), (1.0, 1)], &[], 4.0);
        assert!(reconstruct(&unsorted, &m, &[cfg]).is_err());
        let bad_bit = log_of(&[(1.0, 2)], &[], 4.0);
        assert!(reconstruct(&bad_bit, &m, &[cfg]).is_err());
        assert!(reconstruct(&log_of(&[], &[], 1.0), &m, &[cfg, cfg]).is_err());
    }

    #[test]
    fn ou_sequential_centralized_variance() {
        // sqrt(gamma)(lambda_hat - lambda) has unit variance at the stopping time
        let m = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        let grid = TimeGrid::new(200.0, 4000).unwrap();
        let gamma: f64 = 50.0;
        let n = 10_000u64;
        let z: Vec<f64> = (0..n)
            .map(|s| {
                let p = simulate_paths(&m, -1.0, grid, s).unwrap();
                let st = path_statistics(&p, &m).unwrap();
                gamma.sqrt() * (centralized_sequential(&st, gamma).unwrap().value + 1.0)
            })
            .collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    fn ou_state(seed: u64, c: f64) -> (PathStats, FusionState, TimeGrid) {
        let m = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0, 2.0])).unwrap();
        let grid = TimeGrid::new(150.0, 1500).unwrap();
        let st = path_statistics(&simulate_paths(&m, -1.0, grid, seed).unwrap(), &m).unwrap();
        let cfgs = [TriggerConfig::symmetric(c, Some(c)); 2];
        let log = run_sensors(&st, &m, &cfgs).unwrap();
        let fs = reconstruct(&log, &m, &cfgs).unwrap();
        (st, fs, grid)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ou_sequential_sandwich(seed in any::<u64>(), c in 0.5f64..3.0) {
            let (st, fs, grid) = ou_state(seed, c);
            let gamma = 60.0;
            let r = estimate_sequential(&fs, gamma, &grid).unwrap();
            let stop = r.stop_time.unwrap();
            let a_stop = st.a_at(stop);
            let ct = fs.c_total();
            prop_assert!(a_stop >= gamma - ct - 1e-9 && a_stop <= gamma + 1e-9,
                "A at stop {} gamma {} c {}", a_stop, gamma, ct);
            let cs = centralized_sequential(&st, gamma).unwrap();
            prop_assert!(stop <= cs.stop_time.unwrap() + 1e-9);
            // error decomposition
            let m_stop = st.m_at(stop);
            let lam = -1.0f64;
            let bound = (fs.delta_total() + lam.abs() * ct) / (gamma - ct) + m_stop.abs() / (gamma - ct);
            prop_assert!((r.value - lam).abs() <= bound + 1e-9);
        }

        #[test]
        fn continuous_global_bounds(seed in any::<u64>(), c in 0.3f64..3.0) {
            let (st, fs, grid) = ou_state(seed, c);
            for (k, t) in grid.times().enumerate() {
                prop_assert!((st.b[k] - fs.tb(t)).abs() <= fs.delta_total());
                let gap = st.a[k] - fs.ta(t);
                prop_assert!(gap >= 0.0 && gap <= fs.c_total());
            }
        }
    }
}
