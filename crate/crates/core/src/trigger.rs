//! Sensor-side event triggers.
//!
//! A sensor sends a one-bit B-message whenever its local statistic `B^i`
//! leaves the band `(ref - delta_down, ref + delta_up)` around the value it
//! last reported, and an (information-only) A-message each time `A^i` gains
//! another `c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, PathStats, TimeGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriggerError {
    #[error("invalid trigger config for sensor {sensor}: {reason}")]
    InvalidConfig { sensor: usize, reason: String },
    #[error("A path decreases at grid index {index} ({prev} -> {next})")]
    NonMonotoneInput { index: usize, prev: f64, next: f64 },
    #[error("path has {got} points, grid has {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("time {t} outside the observed horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("sensor index {sensor} out of range (K = {k})")]
    NoSuchSensor { sensor: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    Continuous,
    DiscreteSampling { h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    pub delta_up: f64,
    pub delta_down: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "continuous")]
    pub mode: TriggerMode,
}

fn continuous() -> TriggerMode {
    TriggerMode::Continuous
}

impl TriggerConfig {
    pub fn symmetric(delta: f64, c: Option<f64>) -> Self {
        Self {
            delta_up: delta,
            delta_down: delta,
            c,
            mode: TriggerMode::Continuous,
        }
    }

    pub fn with_mode(mut self, mode: TriggerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn max_delta(&self) -> f64 {
        self.delta_up.max(self.delta_down)
    }

    /// Self-contained checks; `dt` adds the sampling-period / grid check.
    pub fn problems(&self, dt: Option<f64>) -> Vec<String> {
        let mut out = Vec::new();
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.delta_up) {
            out.push(format!("delta_up must be positive, got {}", self.delta_up));
        }
        if !positive(self.delta_down) {
            out.push(format!("delta_down must be positive, got {}", self.delta_down));
        }
        if let Some(c) = self.c {
            if !positive(c) {
                out.push(format!("c must be positive, got {c}"));
            }
        }
        if let TriggerMode::DiscreteSampling { h } = self.mode {
            if !positive(h) {
                out.push(format!("sampling period h must be positive, got {h}"));
            } else if let Some(dt) = dt {
                if sampling_stride(h, dt).is_none() {
                    out.push(format!("sampling period h = {h} is not a multiple of dt = {dt}"));
                }
            }
        }
        out
    }

    /// Checks that `c` is present exactly when both `A^i` and `A` are random.
    pub fn check_against(&self, model: &Model, sensor: usize) -> Result<(), TriggerError> {
        let needs_c = !model.is_local_info_deterministic(sensor) && !model.is_info_deterministic();
        let reason = match (needs_c, self.c.is_some()) {
            (true, false) => "c is required because A^i and A are both random",
            (false, true) => "c must be omitted because A^i or A is deterministic",
            _ => return Ok(()),
        };
        Err(TriggerError::InvalidConfig {
            sensor,
            reason: reason.into(),
        })
    }
}

/// Number of grid steps per sampling period, if `h` is a whole multiple of `dt`.
pub fn sampling_stride(h: f64, dt: f64) -> Option<usize> {
    let r = h / dt;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-9 * n).then_some(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BMessage {
    pub time: f64,
    /// 1 for an upward exit, 0 for a downward one.
    pub bit: u8,
    pub overshoot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AMessage {
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorLog {
    pub b: Vec<BMessage>,
    pub a: Vec<AMessage>,
    /// `B^i - ref` at the end of the horizon: the excursion still in progress.
    pub pending_excursion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageLog {
    pub sensors: Vec<SensorLog>,
    pub horizon: f64,
}

/// Output of [`run_b_trigger`]: the messages plus the open excursion.
#[derive(Debug, Clone, PartialEq)]
pub struct BTriggerOutput {
    pub messages: Vec<BMessage>,
    pub pending_excursion: f64,
}

fn check_len(path: &[f64], grid: &TimeGrid) -> Result<(), TriggerError> {
    if path.len() != grid.n_steps() + 1 {
        return Err(TriggerError::LengthMismatch {
            got: path.len(),
            expected: grid.n_steps() + 1,
        });
    }
    Ok(())
}

/// Keeps message times strictly increasing when rounding collapses two crossings.
fn after(t: f64, last: Option<f64>) -> f64 {
    match last {
        Some(l) if t <= l => l.next_up(),
        _ => t,
    }
}

pub fn run_b_trigger(
    b: &[f64],
    grid: &TimeGrid,
    cfg: &TriggerConfig,
) -> Result<BTriggerOutput, TriggerError> {
    check_len(b, grid)?;
    let problems = cfg.problems(Some(grid.dt()));
    if !problems.is_empty() {
        return Err(TriggerError::InvalidConfig {
            sensor: 0,
            reason: problems.join("; "),
        });
    }
    let (up, down) = (cfg.delta_up, cfg.delta_down);
    let mut out = Vec::new();
    let mut reference = b[0];
    match cfg.mode {
        TriggerMode::Continuous => {
            for k in 0..grid.n_steps() {
                let (t0, t1) = (grid.time(k), grid.time(k + 1));
                let (b0, b1) = (b[k], b[k + 1]);
                let mut seg_start = t0;
                loop {
                    let d = b1 - reference;
                    let (target, bit) = if d >= up {
                        (reference + up, 1)
                    } else if d <= -down {
                        (reference - down, 0)
                    } else {
                        break;
                    };
                    let frac = if b1 != b0 { (target - b0) / (b1 - b0) } else { 1.0 };
                    let t = (t0 + frac * (t1 - t0)).clamp(seg_start, t1);
                    let t = after(t, out.last().map(|m: &BMessage| m.time));
                    out.push(BMessage {
                        time: t,
                        bit,
                        overshoot: 0.0,
                    });
                    reference = target;
                    seg_start = t;
                }
            }
        }
        TriggerMode::DiscreteSampling { h } => {
            let stride = sampling_stride(h, grid.dt()).expect("validated above");
            let mut k = stride;
            while k <= grid.n_steps() {
                let d = b[k] - reference;
                let hit = if d >= up {
                    Some((1, d - up))
                } else if d <= -down {
                    Some((0, -down - d))
                } else {
                    None
                };
                if let Some((bit, eta)) = hit {
                    out.push(BMessage {
                        time: grid.time(k),
                        bit,
                        overshoot: eta,
                    });
                    reference = b[k];
                }
                k += stride;
            }
        }
    }
    Ok(BTriggerOutput {
        messages: out,
        pending_excursion: b[grid.n_steps()] - reference,
    })
}

/// The `n`-th message goes out when `A^i` first reaches `n * c`.
pub fn run_a_trigger(
    a: &[f64],
    grid: &TimeGrid,
    c: Option<f64>,
) -> Result<Vec<AMessage>, TriggerError> {
    check_len(a, grid)?;
    if let Some(index) = (1..a.len()).find(|&k| a[k] < a[k - 1]) {
        return Err(TriggerError::NonMonotoneInput {
            index,
            prev: a[index - 1],
            next: a[index],
        });
    }
    let c = match c {
        None => return Ok(Vec::new()),
        Some(c) if c > 0.0 && c.is_finite() => c,
        Some(c) => {
            return Err(TriggerError::InvalidConfig {
                sensor: 0,
                reason: format!("c must be positive, got {c}"),
            })
        }
    };
    let mut out: Vec<AMessage> = Vec::new();
    let mut n = 0u64;
    for k in 0..grid.n_steps() {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        let (a0, a1) = (a[k], a[k + 1]);
        let mut seg_start = t0;
        while a1 >= level(n + 1, c) {
            let target = level(n + 1, c);
            let frac = if a1 != a0 { (target - a0) / (a1 - a0) } else { 1.0 };
            let t = (t0 + frac * (t1 - t0)).clamp(seg_start, t1);
            let t = after(t, out.last().map(|m| m.time));
            out.push(AMessage { time: t });
            n += 1;
            seg_start = t;
        }
    }
    Ok(out)
}

/// `n * c`, the reconstructed information after `n` A-messages.
#[inline]
pub fn level(n: u64, c: f64) -> f64 {
    n as f64 * c
}

/// Runs both triggers for every sensor of one replication.
pub fn run_sensors(
    stats: &PathStats,
    model: &Model,
    cfgs: &[TriggerConfig],
) -> Result<MessageLog, TriggerError> {
    if cfgs.len() != model.k() {
        return Err(TriggerError::InvalidConfig {
            sensor: cfgs.len().min(model.k()),
            reason: format!("{} trigger configs for {} sensors", cfgs.len(), model.k()),
        });
    }
    let mut sensors = Vec::with_capacity(model.k());
    for (i, cfg) in cfgs.iter().enumerate() {
        cfg.check_against(model, i)?;
        let tag = |e: TriggerError| match e {
            TriggerError::InvalidConfig { reason, .. } => {
                TriggerError::InvalidConfig { sensor: i, reason }
            }
            other => other,
        };
        let b = run_b_trigger(&stats.b_i[i], &stats.grid, cfg).map_err(tag)?;
        let a = run_a_trigger(&stats.a_i[i], &stats.grid, cfg.c).map_err(tag)?;
        sensors.push(SensorLog {
            b: b.messages,
            a,
            pending_excursion: b.pending_excursion,
        });
    }
    Ok(MessageLog {
        sensors,
        horizon: stats.grid.t_end(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Renewals {
    pub m: usize,
    pub deltas: Vec<f64>,
    pub bits: Vec<u8>,
}

/// Message count, inter-arrival times and bits of one sensor up to `t`.
pub fn extract_renewals(log: &MessageLog, sensor: usize, t: f64) -> Result<Renewals, TriggerError> {
    let s = log.sensors.get(sensor).ok_or(TriggerError::NoSuchSensor {
        sensor,
        k: log.sensors.len(),
    })?;
    if !(0.0..=log.horizon).contains(&t) {
        return Err(TriggerError::OutOfHorizon {
            t,
            horizon: log.horizon,
        });
    }
    let m = s.b.partition_point(|msg| msg.time <= t);
    let mut prev = 0.0;
    let deltas = s.b[..m]
        .iter()
        .map(|msg| {
            let d = msg.time - prev;
            prev = msg.time;
            d
        })
        .collect();
    Ok(Renewals {
        m,
        deltas,
        bits: s.b[..m].iter().map(|msg| msg.bit).collect(),
    })
}

impl MessageLog {
    pub fn k(&self) -> usize {
        self.sensors.len()
    }

    pub fn b_count(&self, sensor: usize, t: f64) -> usize {
        self.sensors[sensor].b.partition_point(|m| m.time <= t)
    }

    pub fn a_count(&self, sensor: usize, t: f64) -> usize {
        self.sensors[sensor].a.partition_point(|m| m.time <= t)
    }

    /// Total B- and A-messages sent by all sensors up to `t`.
    pub fn messages_up_to(&self, t: f64) -> usize {
        (0..self.k()).map(|i| self.b_count(i, t) + self.a_count(i, t)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, path_statistics, simulate_paths, ModelSpec};
    use proptest::prelude::*;

    fn ramp(t_end: f64, n: usize) -> (TimeGrid, Vec<f64>) {
        let g = TimeGrid::new(t_end, n).unwrap();
        let b = g.times().collect();
        (g, b)
    }

    #[test]
    fn ramp_forces_unit_crossings() {
        let (g, b) = ramp(3.5, 35);
        let out = run_b_trigger(&b, &g, &TriggerConfig::symmetric(1.0, None)).unwrap();
        let times: Vec<f64> = out.messages.iter().map(|m| m.time).collect();
        assert_eq!(out.messages.len(), 3);
        for (t, want) in times.iter().zip([1.0, 2.0, 3.0]) {
            assert!((t - want).abs() < 1e-12, "{times:?}");
        }
        assert!(out.messages.iter().all(|m| m.bit == 1 && m.overshoot == 0.0));
    }

    #[test]
    fn no_exit_no_messages() {
        let g = TimeGrid::new(10.0, 100).unwrap();
        let b: Vec<f64> = g.times().map(|t| 0.9 * (t).sin()).collect();
        let out = run_b_trigger(&b, &g, &TriggerConfig::symmetric(1.0, None)).unwrap();
        assert!(out.messages.is_empty());
    }

    #[test]
    fn closed_boundary_counts() {
        let g = TimeGrid::new(2.0, 2).unwrap();
        let out = run_b_trigger(&[0.0, 1.0, 0.5], &g, &TriggerConfig::symmetric(1.0, None)).unwrap();
        assert_eq!(out.messages.len(), 1);
        assert_eq!(out.messages[0].time, 1.0);
    }

    #[test]
    fn big_step_emits_several_crossings() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        let out = run_b_trigger(&[0.0, -3.5], &g, &TriggerConfig::symmetric(1.0, None)).unwrap();
        let t: Vec<f64> = out.messages.iter().map(|m| m.time).collect();
        assert_eq!(out.messages.len(), 3);
        assert!(out.messages.iter().all(|m| m.bit == 0));
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!((out.pending_excursion + 0.5).abs() < 1e-12);
    }

    #[test]
    fn discrete_sampling_records_overshoot() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let b: Vec<f64> = g.times().map(|t| 3.0 * t).collect();
        let cfg = TriggerConfig::symmetric(1.0, None).with_mode(TriggerMode::DiscreteSampling { h: 0.4 });
        let out = run_b_trigger(&b, &g, &cfg).unwrap();
        // samples at 0.4 (1.2) and 0.8 (2.4 - 1.2 = 1.2)
        assert_eq!(out.messages.len(), 2);
        assert!((out.messages[0].time - 0.4).abs() < 1e-12);
        assert!((out.messages[0].overshoot - 0.2).abs() < 1e-12);
        assert!((out.messages[1].overshoot - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sampling_period_must_match_grid() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let cfg = TriggerConfig::symmetric(1.0, None).with_mode(TriggerMode::DiscreteSampling { h: 0.15 });
        assert!(run_b_trigger(&[0.0; 11], &g, &cfg).is_err());
        assert_eq!(sampling_stride(0.3, 0.1), Some(3));
    }

    #[test]
    fn linear_info_messages() {
        let (g, a) = ramp(2.5, 25);
        let msgs = run_a_trigger(&a, &g, Some(1.0)).unwrap();
        assert_eq!(msgs.len(), 2);
        assert!((msgs[0].time - 1.0).abs() < 1e-12 && (msgs[1].time - 2.0).abs() < 1e-12);
        assert!(run_a_trigger(&a, &g, None).unwrap().is_empty());
    }

    #[test]
    fn decreasing_info_rejected() {
        let g = TimeGrid::new(2.0, 2).unwrap();
        let err = run_a_trigger(&[0.0, 1.0, 0.5], &g, Some(1.0)).unwrap_err();
        assert!(matches!(err, TriggerError::NonMonotoneInput { index: 2, .. }));
    }

    #[test]
    fn ou_message_count_is_floor_of_info() {
        let model = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        let g = TimeGrid::new(20.0, 2000).unwrap();
        let stats = path_statistics(&simulate_paths(&model, -0.5, g, 5).unwrap(), &model).unwrap();
        let a_end = stats.a_i[0][2000];
        let msgs = run_a_trigger(&stats.a_i[0], &g, Some(1.0)).unwrap();
        assert_eq!(msgs.len(), a_end.floor() as usize);
    }

    #[test]
    fn c_presence_checked_against_model() {
        let brown = build_model(ModelSpec::brownian(vec![1.0])).unwrap();
        let ou = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        assert!(TriggerConfig::symmetric(1.0, None).check_against(&brown, 0).is_ok());
        assert!(TriggerConfig::symmetric(1.0, Some(1.0)).check_against(&brown, 0).is_err());
        assert!(TriggerConfig::symmetric(1.0, None).check_against(&ou, 0).is_err());
        assert!(TriggerConfig::symmetric(1.0, Some(1.0)).check_against(&ou, 0).is_ok());
    }

    fn log_with_times(times: &[f64], bits: &[u8]) -> MessageLog {
        MessageLog {
            sensors: vec![SensorLog {
                b: times
                    .iter()
                    .zip(bits)
                    .map(|(&time, &bit)| BMessage { time, bit, overshoot: 0.0 })
                    .collect(),
                a: vec![],
                pending_excursion: 0.0,
            }],
            horizon: 4.0,
        }
    }

    #[test]
    fn renewal_extraction() {
        let log = log_with_times(&[1.0, 2.0, 3.0], &[1, 0, 1]);
        let r = extract_renewals(&log, 0, 2.5).unwrap();
        assert_eq!(r.m, 2);
        assert_eq!(r.deltas, vec![1.0, 1.0]);
        assert_eq!(r.bits, vec![1, 0]);
        let empty = log_with_times(&[], &[]);
        let r = extract_renewals(&empty, 0, 2.0).unwrap();
        assert_eq!((r.m, r.deltas.len()), (0, 0));
        assert!(matches!(extract_renewals(&log, 0, 5.0), Err(TriggerError::OutOfHorizon { .. })));
    }

    #[test]
    fn zero_drift_bits_are_balanced() {
        let model = build_model(ModelSpec::brownian(vec![1.0])).unwrap();
        let g = TimeGrid::new(1000.0, 20_000).unwrap();
        let cfg = TriggerConfig::symmetric(1.0, None);
        let (mut ones, mut total) = (0usize, 0usize);
        let mut seed = 0;
        while total < 100_000 {
            let stats = path_statistics(&simulate_paths(&model, 0.0, g, seed).unwrap(), &model).unwrap();
            let out = run_b_trigger(&stats.b_i[0], &g, &cfg).unwrap();
            ones += out.messages.iter().filter(|m| m.bit == 1).count();
            total += out.messages.len();
            seed += 1;
        }
        let frac = ones as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.005, "fraction of ones {frac}");
    }

    #[test]
    fn renewal_mean_matches_wald() {
        let model = build_model(ModelSpec::brownian(vec![1.0])).unwrap();
        let g = TimeGrid::new(5000.0, 500_000).unwrap();
        let cfg = TriggerConfig::symmetric(10.0, None);
        let mut deltas = Vec::new();
        let mut seed = 0;
        while deltas.len() < 10_000 {
            let stats = path_statistics(&simulate_paths(&model, 1.0, g, seed).unwrap(), &model).unwrap();
            let log = run_sensors(&stats, &model, &[cfg]).unwrap();
            deltas.extend(extract_renewals(&log, 0, g.t_end()).unwrap().deltas);
            seed += 1;
        }
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        assert!((mean - 10.0).abs() < 1.0, "mean {mean}");
    }

    fn walk(steps: Vec<f64>) -> Vec<f64> {
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain(steps.into_iter().map(|s| {
                acc += s;
                acc
            }))
            .collect()
    }

    proptest! {
        #[test]
        fn continuous_tracking_error_below_threshold(
            steps in prop::collection::vec(-3.0f64..3.0, 1..300),
            up in 0.1f64..4.0,
            down in 0.1f64..4.0,
        ) {
            let n = steps.len();
            let b = walk(steps);
            let g = TimeGrid::new(n as f64 * 0.1, n).unwrap();
            let cfg = TriggerConfig { delta_up: up, delta_down: down, c: None, mode: TriggerMode::Continuous };
            let out = run_b_trigger(&b, &g, &cfg).unwrap();
            let msgs = &out.messages;
            prop_assert!(msgs.windows(2).all(|w| w[1].time > w[0].time));
            for (k, t) in g.times().enumerate() {
                let mut tb = 0.0;
                for m in msgs.iter().take_while(|m| m.time <= t) {
                    tb += if m.bit == 1 { up } else { -down };
                }
                prop_assert!((b[k] - tb).abs() < up.max(down));
                prop_assert!(b[k] - tb < up && b[k] - tb > -down);
            }
        }

        #[test]
        fn discrete_tracking_error_with_overshoots(
            steps in prop::collection::vec(-1.0f64..1.0, 4..300),
            delta in 0.2f64..3.0,
            stride in 1usize..4,
        ) {
            let n = steps.len();
            let b = walk(steps);
            let g = TimeGrid::new(n as f64 * 0.05, n).unwrap();
            let h = 0.05 * stride as f64;
            let cfg = TriggerConfig::symmetric(delta, None).with_mode(TriggerMode::DiscreteSampling { h });
            let msgs = run_b_trigger(&b, &g, &cfg).unwrap().messages;
            for k in (0..=n).step_by(stride) {
                let t = g.time(k);
                let (mut tb, mut eta) = (0.0, 0.0);
                for m in msgs.iter().take_while(|m| m.time <= t) {
                    tb += if m.bit == 1 { delta } else { -delta };
                    eta += m.overshoot;
                    prop_assert!(m.overshoot >= 0.0);
                }
                prop_assert!((b[k] - tb).abs() <= delta + eta + 1e-9 * (1.0 + b[k].abs()));
            }
        }

        #[test]
        fn info_tracking_within_one_increment(
            incs in prop::collection::vec(0.0f64..2.0, 1..300),
            c in 0.05f64..3.0,
        ) {
            let n = incs.len();
            let a = walk(incs);
            let g = TimeGrid::new(n as f64, n).unwrap();
            let msgs = run_a_trigger(&a, &g, Some(c)).unwrap();
            prop_assert!(msgs.windows(2).all(|w| w[1].time > w[0].time));
            for (k, t) in g.times().enumerate() {
                let cnt = msgs.partition_point(|m| m.time <= t) as u64;
                let d = a[k] - level(cnt, c);
                prop_assert!(d >= 0.0 && d < c, "k={} d={}", k, d);
            }
        }
    }
}
