//! Named validation suites. Each one is a full-size Monte Carlo check with a
//! fixed seed; `run_suite("all")` runs them in order.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::ks::{ks_critical_1pct, ks_distance_sorted, ks_p_value};
use super::{
    audit_replication, mean_var, overshoot_study, renewal_study, run_experiment, thresholds, variance_stderr,
    ExperimentConfig, HarnessError, PowerLaw, Regime, RenewalSetup,
};
use crate::first_passage::{exit_cdf_sorted, exit_functionals, sample_exit, ExitProblem, SeriesControl};
use crate::fusion::EstimatorKind;
use crate::io::write_rows;
use crate::model::{build_model, ModelSpec, TimeGrid};
use crate::rng::replication_rng;
use crate::timefn::TimeFnSpec;
use crate::trigger::TriggerMode;

pub const SUITE_NAMES: [&str; 10] = [
    "bounds",
    "centralized",
    "fixed_horizon",
    "sequential",
    "timing_only",
    "density",
    "moments",
    "rates",
    "overshoot",
    "determinism",
];

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl SuiteOutcome {
    pub fn summary(&self) -> String {
        format!(
            "{} {:<14} {:>7.1}s (limit {}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        )
    }
}

struct Checks {
    ok: bool,
    lines: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self {
            ok: true,
            lines: Vec::new(),
        }
    }

    fn check(&mut self, pass: bool, what: impl Into<String>) {
        self.ok &= pass;
        self.lines.push(format!("  [{}] {}", if pass { "ok" } else { "FAIL" }, what.into()));
    }

    fn info(&mut self, what: impl Into<String>) {
        self.lines.push(format!("  {}", what.into()));
    }
}

fn finish(name: &'static str, limit_s: u64, start: Instant, mut c: Checks) -> SuiteOutcome {
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(limit_s);
    c.check(elapsed <= limit, format!("runtime {:.1}s within {limit_s}s", elapsed.as_secs_f64()));
    SuiteOutcome {
        name,
        passed: c.ok,
        lines: c.lines,
        elapsed,
        limit,
    }
}

/// Runs one suite by name, or every suite for `"all"`.
pub fn run_suite(name: &str) -> Result<Vec<SuiteOutcome>, HarnessError> {
    if name == "all" {
        return SUITE_NAMES.iter().map(|n| run_one(n)).collect();
    }
    Ok(vec![run_one(name)?])
}

fn run_one(name: &str) -> Result<SuiteOutcome, HarnessError> {
    match name {
        "bounds" => bounds(),
        "centralized" => centralized(),
        "fixed_horizon" => fixed_horizon(),
        "sequential" => sequential(),
        "timing_only" => timing_only(),
        "density" => density(),
        "moments" => moments(),
        "rates" => rates(),
        "overshoot" => overshoot(),
        "determinism" => determinism(),
        other => Err(HarnessError::InvalidConfig(vec![format!(
            "unknown suite `{other}`; expected one of {} or all",
            SUITE_NAMES.join(", ")
        )])),
    }
}

/// Models used by the pathwise bound suite, with their drift parameter.
pub fn bound_catalog() -> Vec<(&'static str, ModelSpec, f64)> {
    let b1 = TimeFnSpec::Piecewise {
        breaks: vec![0.0, 40.0],
        pieces: vec![vec![1.0], vec![1.0, -0.01]],
    };
    let lower = vec![
        vec![1.0.into(), 0.0.into(), 0.0.into()],
        vec![0.5.into(), 1.0.into(), 0.0.into()],
        vec![0.3.into(), (-0.4).into(), 1.0.into()],
    ];
    vec![
        ("brownian", ModelSpec::brownian(vec![1.0, -2.0]), 1.0),
        (
            "gaussian_det_info",
            ModelSpec::gaussian_det_info(
                vec![b1, 0.8.into()],
                vec![vec![1.0.into(), 0.5.into()], vec![0.5.into(), 1.0.into()]],
            ),
            1.0,
        ),
        ("ornstein_uhlenbeck", ModelSpec::ornstein_uhlenbeck(vec![1.0, 2.0]), -1.0),
        ("square_root", ModelSpec::square_root(vec![1.0, 0.5], vec![1.0, 2.0]), 0.02),
        ("correlated", ModelSpec::correlated(vec![1.0, 0.5, 0.8], lower, None), -0.5),
    ]
}

fn bounds() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let grid = TimeGrid::new(100.0, 10_000)?;
    let reps = 200u64;
    for (idx, (label, spec, lambda)) in bound_catalog().into_iter().enumerate() {
        let model = build_model(spec)?;
        let mut cfgs = thresholds(&model, 1.0, 1.0, TriggerMode::Continuous);
        if label == "brownian" {
            cfgs[0].delta_down = 0.5;
            cfgs[1].delta_up = 0.75;
            cfgs[1].delta_down = 1.25;
        }
        let reports = (0..reps)
            .into_par_iter()
            .map(|r| audit_replication(&model, lambda, grid, &cfgs, 1_000 + idx as u64, r))
            .collect::<Result<Vec<_>, _>>()?;
        let violations: usize = reports.iter().map(|r| r.violations.len()).sum();
        let max_b = reports.iter().map(|r| r.max_b_gap).fold(0.0, f64::max);
        let max_a = reports.iter().map(|r| r.max_a_gap).fold(f64::NEG_INFINITY, f64::max);
        let min_a = reports.iter().map(|r| r.min_a_gap).fold(f64::INFINITY, f64::min);
        let lower = reports[0].lower_a_bound_applies;
        c.check(
            violations == 0,
            format!(
                "{label}: {violations} violations; max|B-tB| = {max_b:.4} (<= {}), A-tA in [{min_a:.4}, {max_a:.4}] (c_total {}{})",
                reports[0].delta_total,
                reports[0].c_total,
                if lower { ", lower bound 0 checked" } else { ", random cross terms: per-sensor lower bound only" },
            ),
        );
        if let Some(first) = reports.iter().find(|r| !r.violations.is_empty()) {
            c.info(format!("first violation: {}", first.violations[0]));
        }
    }
    Ok(finish("bounds", 60, start, c))
}

fn brownian_pair(n: usize, seed: u64, regime: Regime, estimators: Vec<EstimatorKind>) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::brownian(vec![1.0, 1.0]),
        lambda_true: 1.0,
        regime,
        n_replications: n,
        master_seed: seed,
        estimators,
        steps_per_unit: 10.0,
        max_extensions: 0,
    }
}

fn centralized() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let cfg = brownian_pair(
        10_000,
        2_000,
        Regime::FixedHorizon {
            t_list: vec![100.0],
            delta_rule: PowerLaw { a: 1.0, b: 0.25 },
        },
        vec![EstimatorKind::CentralizedFixed],
    );
    let report = run_experiment(&cfg)?;
    let agg = report.aggregate(EstimatorKind::CentralizedFixed, 100.0, None).expect("aggregate");
    c.check(agg.failures == 0, format!("{} failures", agg.failures));
    let p = agg.ks_p_value.unwrap_or(0.0);
    c.check(p > 0.01, format!("KS vs N(0,1): D = {:.5}, p = {p:.4} > 0.01", agg.ks_d.unwrap_or(f64::NAN)));
    c.check(
        (agg.std_variance - 1.0).abs() <= 0.05,
        format!("variance {:.4} within 1 +/- 0.05 (mean {:.4})", agg.std_variance, agg.std_mean),
    );
    Ok(finish("centralized", 120, start, c))
}

fn fixed_horizon() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let t_list = vec![1e2, 1e3, 1e4];
    let cfg = brownian_pair(
        1_000,
        3_000,
        Regime::FixedHorizon {
            t_list: t_list.clone(),
            delta_rule: PowerLaw { a: 1.0, b: 0.25 },
        },
        vec![EstimatorKind::CentralizedFixed, EstimatorKind::DecentralizedFixed],
    );
    let report = run_experiment(&cfg)?;
    let mut stats = Vec::new();
    for &t in &t_list {
        let z: Vec<f64> = report
            .rows_for(EstimatorKind::DecentralizedFixed, t, None)
            .filter(|r| r.is_ok())
            .map(|r| r.standardized)
            .collect();
        let zc: Vec<f64> = report
            .rows_for(EstimatorKind::CentralizedFixed, t, None)
            .map(|r| r.standardized)
            .collect();
        let (_, v) = mean_var(&z);
        let se = variance_stderr(&z);
        c.info(format!(
            "t = {t:>6}: decentralized var {v:.4} (se {se:.4}), centralized var {:.4}, n = {}",
            mean_var(&zc).1,
            z.len()
        ));
        stats.push((t, v, se, z.len()));
    }
    c.check(stats.iter().all(|s| s.3 == 1_000), "no failed replications");
    let (_, v_last, _, _) = stats[2];
    c.check((v_last - 1.0).abs() <= 0.10, format!("variance at t = 1e4 is {v_last:.4}, within 1 +/- 0.10"));
    for w in stats.windows(2) {
        let slack = 2.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt();
        c.check(
            w[1].1 <= w[0].1 + slack,
            format!("var(t={}) = {:.4} <= var(t={}) + {slack:.4} = {:.4}", w[1].0, w[1].1, w[0].0, w[0].1 + slack),
        );
    }
    Ok(finish("fixed_horizon", 300, start, c))
}

fn sequential() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let gamma = 1e4;
    let rule = PowerLaw { a: 1.0, b: 0.25 };
    let cfg = ExperimentConfig {
        model: ModelSpec::ornstein_uhlenbeck(vec![1.0, 2.0]),
        lambda_true: -1.0,
        regime: Regime::Sequential {
            gamma_list: vec![gamma],
            c_rule: rule,
            delta_rule: rule,
            initial_horizon: 8_000.0,
        },
        n_replications: 1_000,
        master_seed: 4_000,
        estimators: vec![EstimatorKind::CentralizedSequential, EstimatorKind::DecentralizedSequential],
        steps_per_unit: 10.0,
        max_extensions: 4,
    };
    let model = cfg.validate()?;
    let c_total: f64 = thresholds(&model, rule.eval(gamma), rule.eval(gamma), TriggerMode::Continuous)
        .iter()
        .filter_map(|t| t.c)
        .zip(model.random_cross_counts())
        .map(|(c, &d)| (1.0 + d as f64) * c)
        .sum();
    let report = run_experiment(&cfg)?;
    let failures = report.failures().count();
    c.check(failures == 0, format!("{failures} failed rows"));
    let dec: Vec<_> = report.rows_for(EstimatorKind::DecentralizedSequential, gamma, None).collect();
    let cen: Vec<_> = report.rows_for(EstimatorKind::CentralizedSequential, gamma, None).collect();
    let tol = 1e-9 * gamma;
    let sandwich = dec
        .iter()
        .filter(|r| r.is_ok() && !(r.oracle_info >= gamma - c_total - tol && r.oracle_info <= gamma + tol))
        .count();
    let lo = dec.iter().map(|r| r.oracle_info).fold(f64::INFINITY, f64::min);
    let hi = dec.iter().map(|r| r.oracle_info).fold(f64::NEG_INFINITY, f64::max);
    c.check(
        sandwich == 0,
        format!("{sandwich} violations of {} <= A(stop) <= {gamma}; observed [{lo:.3}, {hi:.3}]", gamma - c_total),
    );
    let earlier = dec
        .iter()
        .zip(&cen)
        .filter(|(d, z)| match (d.stop_time, z.stop_time) {
            (Some(a), Some(b)) => a > b + 1e-9,
            _ => true,
        })
        .count();
    c.check(earlier == 0, format!("{earlier} replications with decentralized stop after centralized stop"));
    let z: Vec<f64> = dec.iter().filter(|r| r.is_ok()).map(|r| r.standardized).collect();
    let (_, v) = mean_var(&z);
    c.check((v - 1.0).abs() <= 0.10, format!("variance {v:.4} within 1 +/- 0.10"));
    let info: Vec<f64> = dec.iter().filter(|r| r.is_ok()).map(|r| r.oracle_info).collect();
    let (m, var) = mean_var(&info);
    let se = (var / info.len() as f64).sqrt();
    c.check(m - gamma <= 3.0 * se, format!("E[A(stop)] - gamma = {:.4} <= 3 se = {:.4}", m - gamma, 3.0 * se));
    let zc: Vec<f64> = cen.iter().filter(|r| r.is_ok()).map(|r| r.standardized).collect();
    c.info(format!("centralized sequential variance {:.4}", mean_var(&zc).1));
    Ok(finish("sequential", 600, start, c))
}

fn timing_only() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let t = 1e4;
    let cfg = brownian_pair(
        1_000,
        5_000,
        Regime::FixedHorizon {
            t_list: vec![t],
            delta_rule: PowerLaw { a: 1.0, b: 0.25 },
        },
        vec![EstimatorKind::TimingOnly],
    );
    let report = run_experiment(&cfg)?;
    let agg = report.aggregate(EstimatorKind::TimingOnly, t, None).expect("aggregate");
    c.check(agg.failures == 0, format!("{} failures", agg.failures));
    c.check(
        (agg.mean - cfg.lambda_true).abs() < 0.02,
        format!("|mean - lambda| = {:.5} < 0.02", (agg.mean - cfg.lambda_true).abs()),
    );
    c.check(
        (agg.std_variance - 1.0).abs() <= 0.15,
        format!("variance {:.4} within 1 +/- 0.15", agg.std_variance),
    );
    Ok(finish("timing_only", 300, start, c))
}

fn density() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let ctl = SeriesControl::default();
    let mut worst: f64 = 0.0;
    for lambda in [0.0, 1.0, 2.0] {
        for delta in [1.0, 5.0] {
            for x in [1.0, 2.0] {
                let f = exit_functionals(&ExitProblem::new(delta, x, lambda)?, &ctl)?;
                let err = (f.total_mass - 1.0).abs();
                worst = worst.max(err);
                c.check(err <= 1e-5, format!("lambda {lambda}, Delta {delta}, x {x}: mass - 1 = {:+.2e}", f.total_mass - 1.0));
            }
        }
    }
    c.info(format!("largest mass error {worst:.2e}"));

    let p = ExitProblem::new(1.0, 1.0, 1.0)?;
    let n = 100_000usize;
    let chunks = 100u64;
    let per = n / chunks as usize;
    let mut draws: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = replication_rng(6_000, k);
            (0..per).map(move |_| sample_exit(&p, 1e-4, &mut rng).0).collect::<Vec<_>>()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let cdf = exit_cdf_sorted(&p, &draws, &ctl)?;
    let d = ks_distance_sorted(&cdf);
    let crit = ks_critical_1pct(n);
    c.check(
        d < crit,
        format!("KS of {n} sampled exit times: D = {d:.5} < {crit:.5} (p = {:.3})", ks_p_value(d, n as f64)),
    );
    Ok(finish("density", 180, start, c))
}

fn moments() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let (x, lambda, delta) = (1.0, 1.0, 20.0);
    let setup = RenewalSetup {
        x,
        lambda,
        delta,
        t: 4_100.0,
        horizon: 4_100.0,
        steps_per_unit: 100.0,
    };
    let reps = renewal_study(&setup, 50, 7_000)?;
    let deltas: Vec<f64> = reps.iter().flat_map(|r| r.deltas.iter().copied()).collect();
    c.check(deltas.len() >= 10_000, format!("{} renewals", deltas.len()));
    let (m, v) = mean_var(&deltas);
    let mean_ref = delta / (lambda.abs() * x * x);
    let var_ref = delta / (lambda.abs().powi(3) * x.powi(4));
    c.check(
        (m / mean_ref - 1.0).abs() <= 0.05,
        format!("mean {m:.4} within 5% of {mean_ref}"),
    );
    c.check((v / var_ref - 1.0).abs() <= 0.15, format!("variance {v:.4} within 15% of {var_ref}"));
    let exact = exit_functionals(&ExitProblem::new(delta, x, lambda)?, &SeriesControl::default())?;
    c.info(format!("density-integrated mean {:.4}, variance {:.4}", exact.mean_delta, exact.var_delta));
    Ok(finish("moments", 120, start, c))
}

fn rates() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let (x, lambda, t) = (1.0, 1.0, 1_000.0);
    for (k, delta) in [5.0, 10.0, 20.0].into_iter().enumerate() {
        let f = exit_functionals(&ExitProblem::new(delta, x, lambda)?, &SeriesControl::default())?;
        let setup = RenewalSetup {
            x,
            lambda,
            delta,
            t,
            horizon: 1_300.0,
            steps_per_unit: 50.0,
        };
        let reps = renewal_study(&setup, 400, 8_000 + k as u64)?;
        let n = reps.len() as f64;
        let counts: Vec<f64> = reps.iter().map(|r| r.count as f64).collect();
        let (mc, vc) = mean_var(&counts);
        let se = (vc / n).sqrt();
        let upper = t / f.mean_delta + f.var_delta / f.mean_delta.powi(2) + 1.0;
        c.check(
            mc <= upper + 3.0 * se,
            format!("Delta {delta}: E[m] = {mc:.3} <= {upper:.3} + 3 se ({:.3}); t/E[delta] - 1 = {:.3}", 3.0 * se, t / f.mean_delta - 1.0),
        );
        let deficit: Vec<f64> = reps.iter().map(|r| r.info_deficit).collect();
        let (md, vd) = mean_var(&deficit);
        let sed = (vd / n).sqrt();
        let cap = x * x * f.second_moment / f.mean_delta;
        c.check(
            deficit.iter().all(|&d| d >= 0.0) && md <= cap + 3.0 * sed,
            format!("Delta {delta}: 0 <= E[A - checkA] = {md:.3} <= {cap:.3} + 3 se ({:.3})", 3.0 * sed),
        );
    }
    Ok(finish("rates", 120, start, c))
}

fn overshoot() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let cfg = ExperimentConfig {
        model: ModelSpec::brownian(vec![1.0]),
        lambda_true: 1.0,
        regime: Regime::DiscreteSampling {
            t: 2_000.0,
            delta_rule: PowerLaw { a: 5.0, b: 0.0 },
            h_list: vec![0.1, 0.05, 0.025, 0.0125],
        },
        n_replications: 400,
        master_seed: 9_000,
        estimators: vec![EstimatorKind::DecentralizedFixed],
        steps_per_unit: 80.0,
        max_extensions: 0,
    };
    let rows = overshoot_study(&cfg)?;
    for r in &rows {
        c.info(format!(
            "h {:<7} eta {:.5} (se {:.5}) eta/h^(1/3) {:.4} msgs {:.1} bias {:+.5} (se {:.5}) std var {:.3} E[z^2] {:.3} regime {}",
            r.h,
            r.mean_eta,
            r.eta_stderr,
            r.eta_over_cbrt_h,
            r.messages,
            r.bias,
            r.bias_stderr,
            r.std_variance,
            r.std_second_moment,
            if r.regime_satisfied { "satisfied" } else { "violated" }
        ));
    }
    for w in rows.windows(2) {
        let slack = 3.0 * (w[0].eta_stderr.powi(2) + w[1].eta_stderr.powi(2)).sqrt();
        c.check(
            w[1].mean_eta <= w[0].mean_eta + slack,
            format!("eta(h={}) = {:.5} <= eta(h={}) + {slack:.5}", w[1].h, w[1].mean_eta, w[0].h),
        );
    }
    let norm: Vec<f64> = rows.iter().map(|r| r.eta_over_cbrt_h).collect();
    let ratio = norm.iter().copied().fold(f64::NEG_INFINITY, f64::max) / norm.iter().copied().fold(f64::INFINITY, f64::min);
    c.check(ratio < 3.0, format!("max/min of eta/h^(1/3) = {ratio:.3} < 3"));
    let shrinking = rows.windows(2).all(|w| w[1].bias.abs() < w[0].bias.abs());
    let mut biases = String::new();
    for r in &rows {
        let _ = write!(biases, " {:+.5}", r.bias);
    }
    c.check(shrinking, format!("|bias| strictly decreasing as h shrinks:{biases}"));
    Ok(finish("overshoot", 300, start, c))
}

/// CSV bytes of a report computed on a pool with `threads` workers.
fn report_bytes(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<u8>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let report = pool.install(|| run_experiment(cfg))?;
    let mut out = Vec::new();
    write_rows(&mut out, &report.rows).expect("in-memory write");
    Ok(out)
}

fn determinism() -> Result<SuiteOutcome, HarnessError> {
    let start = Instant::now();
    let mut c = Checks::new();
    let configs = [
        brownian_pair(
            200,
            10_000,
            Regime::FixedHorizon {
                t_list: vec![50.0, 200.0],
                delta_rule: PowerLaw { a: 1.0, b: 0.25 },
            },
            vec![EstimatorKind::CentralizedFixed, EstimatorKind::DecentralizedFixed, EstimatorKind::TimingOnly],
        ),
        ExperimentConfig {
            model: ModelSpec::ornstein_uhlenbeck(vec![1.0, 2.0]),
            lambda_true: -1.0,
            regime: Regime::Sequential {
                gamma_list: vec![100.0],
                c_rule: PowerLaw { a: 1.0, b: 0.25 },
                delta_rule: PowerLaw { a: 1.0, b: 0.25 },
                initial_horizon: 40.0,
            },
            n_replications: 100,
            master_seed: 10_001,
            estimators: vec![EstimatorKind::CentralizedSequential, EstimatorKind::DecentralizedSequential],
            steps_per_unit: 20.0,
            max_extensions: 4,
        },
        ExperimentConfig {
            model: ModelSpec::brownian(vec![1.0]),
            lambda_true: 1.0,
            regime: Regime::DiscreteSampling {
                t: 200.0,
                delta_rule: PowerLaw { a: 2.0, b: 0.0 },
                h_list: vec![0.1, 0.05],
            },
            n_replications: 100,
            master_seed: 10_002,
            estimators: vec![EstimatorKind::CentralizedFixed, EstimatorKind::DecentralizedFixed],
            steps_per_unit: 20.0,
            max_extensions: 0,
        },
    ];
    for cfg in &configs {
        let label = match cfg.regime {
            Regime::FixedHorizon { .. } => "fixed_horizon",
            Regime::Sequential { .. } => "sequential",
            Regime::DiscreteSampling { .. } => "discrete_sampling",
        };
        let a = report_bytes(cfg, 1)?;
        let b = report_bytes(cfg, 1)?;
        let d = report_bytes(cfg, 4)?;
        c.check(a == b, format!("{label}: identical CSV on re-run ({} bytes)", a.len()));
        c.check(a == d, format!("{label}: identical CSV with 1 and 4 worker threads"));
    }
    Ok(finish("determinism", 120, start, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_rejected() {
        assert!(matches!(run_suite("nope"), Err(HarnessError::InvalidConfig(_))));
    }

    #[test]
    fn catalog_models_build() {
        for (label, spec, _) in bound_catalog() {
            let m = build_model(spec).unwrap();
            match label {
                "brownian" | "gaussian_det_info" => assert!(m.is_info_deterministic()),
                "correlated" => assert_eq!(m.random_cross_counts(), &[2, 2, 2]),
                _ => assert!(m.random_pairs_empty() && !m.is_info_deterministic()),
            }
        }
    }

    #[test]
    fn trigger_configs_validate_for_catalog() {
        for (_, spec, _) in bound_catalog() {
            let m = build_model(spec).unwrap();
            for (i, t) in thresholds(&m, 1.0, 1.0, TriggerMode::Continuous).iter().enumerate() {
                t.check_against(&m, i).unwrap();
                assert!(t.problems(Some(0.01)).is_empty());
            }
        }
    }
}
