//! Two-sided exit of drifted Brownian motion: series densities, quadrature
//! functionals and an exit-time sampler.
//!
//! For the Brownian sensor model the renewal pair `(delta, z)` is the exit
//! time and side of `B = x Y` from `(-Delta, Delta)`, i.e. of a Brownian motion
//! with drift `lambda x` from `(-a, a)` with `a = Delta / |x|`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::quadrature::{integrate_with_breaks, QuadError, QuadOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FirstPassageError {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("series needs t > 0 and x > 0, got t = {t}, x = {x}")]
    NonPositiveInputs { t: f64, x: f64 },
    #[error("invalid exit problem: {0}")]
    InvalidProblem(String),
    #[error("moment asymptotics are undefined at zero drift")]
    ZeroDrift,
    #[error("quadrature failure: {0}")]
    QuadratureFailure(#[from] QuadError),
}

type Result<T> = std::result::Result<T, FirstPassageError>;

/// `h(t; x) = x / sqrt(2 pi t^3) exp(-x^2 / 2t)`.
pub fn kernel_h(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(FirstPassageError::NonPositiveTime(t));
    }
    Ok(h_unchecked(t, x))
}

#[inline]
fn h_unchecked(t: f64, x: f64) -> f64 {
    x / (2.0 * PI * t * t * t).sqrt() * (-x * x / (2.0 * t)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    /// Target for the series truncation error.
    pub abs_tol: f64,
    /// Tolerance for quadrature and for the mass neglected beyond `t_max`.
    pub quad_rel_tol: f64,
    /// Upper integration limit; chosen from the tail bound when `None`.
    pub t_max: Option<f64>,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            abs_tol: 1e-15,
            quad_rel_tol: 1e-10,
            t_max: None,
        }
    }
}

/// `g(t; x) = sum_n h(t; (4n+1)x)`, truncated symmetrically once the tail
/// majorant drops below `ctl.abs_tol`.
pub fn series_g(t: f64, x: f64, ctl: &SeriesControl) -> Result<f64> {
    if !(t > 0.0 && x > 0.0) {
        return Err(FirstPassageError::NonPositiveInputs { t, x });
    }
    Ok(series_terms(t, x, ctl.abs_tol).0)
}

/// Returns the truncated sum and the number `N` of term pairs used.
fn series_terms(t: f64, x: f64, abs_tol: f64) -> (f64, usize) {
    // terms with n in [-N, N] cover the odd multiples x, 3x, ..., (4N+1)x
    // with alternating signs; the remainder starts at y0 = (4N+3)x
    let st = t.sqrt();
    let tail = |y0: f64| {
        h_unchecked(t, y0) + (-y0 * y0 / (2.0 * t)).exp() / (2.0 * x * (2.0 * PI * t).sqrt())
    };
    let mut n = 0usize;
    loop {
        let y0 = (4 * n + 3) as f64 * x;
        if y0 >= st && tail(y0) <= abs_tol {
            break;
        }
        n += 1;
    }
    let mut sum = h_unchecked(t, x);
    for k in 1..=n {
        let k = k as f64;
        sum += h_unchecked(t, (4.0 * k + 1.0) * x) - h_unchecked(t, (4.0 * k - 1.0) * x);
    }
    (sum.max(0.0), n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitProblem {
    pub delta: f64,
    pub x: f64,
    pub lambda: f64,
}

impl ExitProblem {
    pub fn new(delta: f64, x: f64, lambda: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(FirstPassageError::InvalidProblem(format!("delta must be positive, got {delta}")));
        }
        if !(x != 0.0 && x.is_finite()) {
            return Err(FirstPassageError::InvalidProblem(format!("x must be nonzero, got {x}")));
        }
        if !lambda.is_finite() {
            return Err(FirstPassageError::InvalidProblem(format!("lambda must be finite, got {lambda}")));
        }
        Ok(Self { delta, x, lambda })
    }

    /// Barrier `a = Delta / |x|` of the underlying Brownian motion.
    pub fn barrier(&self) -> f64 {
        self.delta / self.x.abs()
    }

    /// Drift `lambda x` of the underlying Brownian motion.
    pub fn drift(&self) -> f64 {
        self.lambda * self.x
    }

    /// Integration limit beyond which `int t^2 (p_up + p_down)` is below `tol`.
    pub fn tail_cutoff(&self, tol: f64) -> f64 {
        let a = self.barrier();
        let mu = self.drift();
        let c = 4.0 / PI * (mu.abs() * a).exp();
        let r = 0.5 * mu * mu + PI * PI / (8.0 * a * a);
        let bound = |t: f64| c * (-r * t).exp() * (t * t + 2.0 * t / r + 2.0 / (r * r));
        let mut t = a * a;
        while bound(t) > tol {
            t *= 1.25;
        }
        t
    }

    fn breakpoints(&self, t_max: f64) -> Vec<f64> {
        let a = self.barrier();
        let mut pts = Vec::new();
        let mut t = a * a / 256.0;
        while t < t_max {
            pts.push(t);
            t *= 2.0;
        }
        if self.drift() != 0.0 {
            pts.push(a / self.drift().abs());
        }
        pts
    }
}

/// `(p_up, p_down)` at `t` with the default series control.
pub fn joint_density(p: &ExitProblem, t: f64) -> Result<(f64, f64)> {
    joint_density_with(p, t, &SeriesControl::default())
}

pub fn joint_density_with(p: &ExitProblem, t: f64, ctl: &SeriesControl) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(FirstPassageError::NonPositiveTime(t));
    }
    let g = series_g(t, p.barrier(), ctl)?;
    let base = -0.5 * p.drift() * p.drift() * t;
    let ld = p.lambda * p.delta;
    Ok(((ld + base).exp() * g, (-ld + base).exp() * g))
}

fn total_density(p: &ExitProblem, t: f64, ctl: &SeriesControl) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    joint_density_with(p, t, ctl).map(|(u, d)| u + d).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitFunctionals {
    pub prob_up: f64,
    pub total_mass: f64,
    pub mean_delta: f64,
    pub second_moment: f64,
    pub var_delta: f64,
}

pub fn exit_functionals(p: &ExitProblem, ctl: &SeriesControl) -> Result<ExitFunctionals> {
    let t_max = ctl.t_max.unwrap_or_else(|| p.tail_cutoff(ctl.quad_rel_tol * 1e-2));
    let breaks = p.breakpoints(t_max);
    let opts = QuadOptions {
        abs_tol: 1e-14,
        rel_tol: ctl.quad_rel_tol,
        max_intervals: 4000,
    };
    let quad = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        Ok(integrate_with_breaks(f, 0.0, t_max, &breaks, opts)?.value)
    };
    let prob_up = quad(&|t| {
        if t <= 0.0 {
            0.0
        } else {
            joint_density_with(p, t, ctl).map(|v| v.0).unwrap_or(0.0)
        }
    })?;
    let total_mass = quad(&|t| total_density(p, t, ctl))?;
    let mean_delta = quad(&|t| t * total_density(p, t, ctl))?;
    let second_moment = quad(&|t| t * t * total_density(p, t, ctl))?;
    Ok(ExitFunctionals {
        prob_up,
        total_mass,
        mean_delta,
        second_moment,
        var_delta: second_moment - mean_delta * mean_delta,
    })
}

/// `P(delta <= t)` for each of the (ascending) `times`, accumulated piecewise.
pub fn exit_cdf_sorted(p: &ExitProblem, times: &[f64], ctl: &SeriesControl) -> Result<Vec<f64>> {
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: ctl.quad_rel_tol,
        max_intervals: 200,
    };
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    // geometric breakpoints keep each piece resolved near the density peak
    let breaks = p.breakpoints(times.last().copied().unwrap_or(0.0));
    for &t in times {
        if t > prev {
            let inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > prev && b < t).collect();
            acc += integrate_with_breaks(|s| total_density(p, s, ctl), prev, t, &inner, opts)?.value;
            prev = t;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Leading-order `(E[delta], Var[delta])` as `Delta -> infinity`.
pub fn delta_moment_asymptotics(p: &ExitProblem) -> Result<(f64, f64)> {
    if p.lambda == 0.0 {
        return Err(FirstPassageError::ZeroDrift);
    }
    let l = p.lambda.abs();
    let x2 = p.x * p.x;
    Ok((p.delta / (l * x2), p.delta / (l * l * l * x2 * x2)))
}

/// Draws one `(delta, z)` pair by Euler steps of size `dt` with a
/// Brownian-bridge crossing test inside each step.
pub fn sample_exit<R: Rng + ?Sized>(p: &ExitProblem, dt: f64, rng: &mut R) -> (f64, u8) {
    let a = p.barrier();
    let mu = p.drift();
    let sd = dt.sqrt();
    let two_over = 2.0 / dt;
    let (mut y, mut t) = (0.0f64, 0.0f64);
    // the B-exit is upward when Y exits on the side matching sign(x)
    let up_bit = |upper: bool| u8::from(upper == (p.x > 0.0));
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let y1 = y + mu * dt + sd * z;
        if y1 >= a {
            return (t + 0.5 * dt, up_bit(true));
        }
        if y1 <= -a {
            return (t + 0.5 * dt, up_bit(false));
        }
        let p_up = (-two_over * (a - y) * (a - y1)).exp();
        let p_down = (-two_over * (a + y) * (a + y1)).exp();
        if p_up > 1e-300 || p_down > 1e-300 {
            let u: f64 = rng.random();
            if u < p_up {
                return (t + 0.5 * dt, up_bit(true));
            }
            if u < p_up + p_down {
                return (t + 0.5 * dt, up_bit(false));
            }
        }
        y = y1;
        t += dt;
    }
}
