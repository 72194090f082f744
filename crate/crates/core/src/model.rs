//! Sensor-system model catalog, path simulation and pathwise statistics.
//!
//! Every model has the linear-drift form
//!
//! ```text
//! dY^i = lambda * sum_j alpha^{ij}_t X^j_t dt + sum_j sigma^{ij}_t dW^j,   alpha = sigma sigma'
//! ```
//!
//! where the integrand `X^i` is adapted to sensor `i`'s own path. The local
//! statistics are `B^i = int X^i dY^i`, `A^{ij} = int X^i X^j alpha^{ij} dt`
//! and `A^i = A^{ii}`; globally `B = sum B^i`, `A = sum_ij A^{ij}` and the
//! score is `M = B - lambda A`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::replication_rng;
use crate::timefn::{PiecewisePoly, TimeFnSpec};

pub const DEFAULT_MAGNITUDE_CAP: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("numerical blowup in sensor {sensor} at t = {time} (|Y| exceeded {cap:e}); refine the grid")]
    NumericalBlowup { sensor: usize, time: f64, cap: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `X^i = x_i`, independent unit Brownian noise.
    BrownianConstant,
    /// `X^i = b_i(t)`, `alpha^{ij} = rho_ij(t)`; deterministic Fisher information.
    GaussianDetInfo,
    /// `X^i = Y^i`, `alpha^{ii}` constant, independent sensors.
    OrnsteinUhlenbeck,
    /// `X^i = x_i`, `alpha^{ii} = (v0_i + Y^i)^+`, independent sensors.
    SquareRootDiffusion,
    /// `X^i = x_i Y^i`, `alpha = sigma_t sigma_t'` with a full diffusion matrix.
    CorrelatedDiffusion,
}

/// Declarative model description, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<TimeFnSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<TimeFnSpec>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<TimeFnSpec>>>,
    /// Offset of the square-root diffusion's variance rate, `alpha^{ii} = (v0_i + Y^i)^+`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
    /// `true` where `A^{ij}` is deterministic. Defaults to the model's actual structure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic_cross: Option<Vec<Vec<bool>>>,
}

impl ModelSpec {
    fn empty(kind: ModelKind, k: usize) -> Self {
        Self {
            kind,
            k,
            x: None,
            b: None,
            rho: None,
            alpha: None,
            sigma: None,
            v0: None,
            deterministic_cross: None,
        }
    }

    pub fn brownian(x: Vec<f64>) -> Self {
        Self {
            x: Some(x.clone()),
            ..Self::empty(ModelKind::BrownianConstant, x.len())
        }
    }

    pub fn gaussian_det_info(b: Vec<TimeFnSpec>, rho: Vec<Vec<TimeFnSpec>>) -> Self {
        Self {
            b: Some(b.clone()),
            rho: Some(rho),
            ..Self::empty(ModelKind::GaussianDetInfo, b.len())
        }
    }

    pub fn ornstein_uhlenbeck(alpha: Vec<f64>) -> Self {
        Self {
            alpha: Some(alpha.clone()),
            ..Self::empty(ModelKind::OrnsteinUhlenbeck, alpha.len())
        }
    }

    pub fn square_root(x: Vec<f64>, v0: Vec<f64>) -> Self {
        Self {
            x: Some(x.clone()),
            v0: Some(v0),
            ..Self::empty(ModelKind::SquareRootDiffusion, x.len())
        }
    }

    pub fn correlated(
        x: Vec<f64>,
        sigma: Vec<Vec<TimeFnSpec>>,
        deterministic_cross: Option<Vec<Vec<bool>>>,
    ) -> Self {
        Self {
            x: Some(x.clone()),
            sigma: Some(sigma),
            deterministic_cross,
            ..Self::empty(ModelKind::CorrelatedDiffusion, x.len())
        }
    }
}

#[derive(Debug, Clone)]
enum Coefficients {
    Brownian { x: Vec<f64> },
    GaussianDetInfo { b: Vec<PiecewisePoly>, rho: Vec<PiecewisePoly> },
    OrnsteinUhlenbeck { alpha: Vec<f64> },
    SquareRoot { x: Vec<f64>, v0: Vec<f64> },
    Correlated { x: Vec<f64>, sigma: Vec<PiecewisePoly>, alpha: Vec<PiecewisePoly> },
}

/// A validated model with coefficient evaluators and closed-form deterministic
/// (co)variations.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    k: usize,
    coeffs: Coefficients,
    /// Row-major `K x K`: integrand of `A^{ij}` when that term is deterministic.
    det_rate: Vec<Option<PiecewisePoly>>,
    deterministic: Vec<bool>,
    random_cross: Vec<usize>,
    a_deterministic: bool,
}

fn check_len<T>(errs: &mut Vec<String>, name: &str, v: &Option<Vec<T>>, k: usize) -> bool {
    match v {
        None => {
            errs.push(format!("`{name}` is required for this model kind"));
            false
        }
        Some(v) if v.len() != k => {
            errs.push(format!("`{name}` has {} entries, expected {k}", v.len()));
            false
        }
        _ => true,
    }
}

fn parse_matrix(
    errs: &mut Vec<String>,
    name: &str,
    m: &Option<Vec<Vec<TimeFnSpec>>>,
    k: usize,
) -> Option<Vec<PiecewisePoly>> {
    let m = match m {
        None => {
            errs.push(format!("`{name}` is required for this model kind"));
            return None;
        }
        Some(m) => m,
    };
    if m.len() != k || m.iter().any(|r| r.len() != k) {
        errs.push(format!("`{name}` must be a {k}x{k} matrix"));
        return None;
    }
    let mut out = Vec::with_capacity(k * k);
    for (i, row) in m.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            match f.to_poly() {
                Ok(p) => out.push(p),
                Err(e) => {
                    errs.push(format!("`{name}[{i}][{j}]`: {e}"));
                    return None;
                }
            }
        }
    }
    Some(out)
}

/// Lower-triangular `L` with `L L' = a` for a positive semidefinite `a`
/// (row-major, `k x k`). Zero pivots are allowed; clearly negative ones fail.
pub(crate) fn cholesky_psd(a: &[f64], k: usize, out: &mut [f64]) -> Result<(), ()> {
    let scale = (0..k).map(|i| a[i * k + i].abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-10 * scale;
    out.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= out[j * k + p] * out[j * k + p];
        }
        if d < -tol {
            return Err(());
        }
        let ljj = d.max(0.0).sqrt();
        out[j * k + j] = ljj;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= out[i * k + p] * out[j * k + p];
            }
            if ljj > tol.sqrt() {
                out[i * k + j] = s / ljj;
            } else if s.abs() > tol.sqrt() {
                return Err(());
            }
        }
    }
    Ok(())
}

pub fn build_model(spec: ModelSpec) -> Result<Model, ModelError> {
    let k = spec.k;
    let mut errs = Vec::new();
    if k == 0 {
        return Err(ModelError::InvalidSpec(vec!["K must be at least 1".into()]));
    }
    let nonzero = |errs: &mut Vec<String>, name: &str, v: &[f64]| {
        for (i, &xi) in v.iter().enumerate() {
            if xi == 0.0 || !xi.is_finite() {
                errs.push(format!("`{name}[{i}]` must be finite and nonzero, got {xi}"));
            }
        }
    };

    let coeffs = match spec.kind {
        ModelKind::BrownianConstant => {
            if check_len(&mut errs, "x", &spec.x, k) {
                let x = spec.x.clone().unwrap();
                nonzero(&mut errs, "x", &x);
                Some(Coefficients::Brownian { x })
            } else {
                None
            }
        }
        ModelKind::GaussianDetInfo => {
            let b = if check_len(&mut errs, "b", &spec.b, k) {
                let mut v = Vec::new();
                for (i, f) in spec.b.as_ref().unwrap().iter().enumerate() {
                    match f.to_poly() {
                        Ok(p) => v.push(p),
                        Err(e) => errs.push(format!("`b[{i}]`: {e}")),
                    }
                }
                (v.len() == k).then_some(v)
            } else {
                None
            };
            let rho = parse_matrix(&mut errs, "rho", &spec.rho, k);
            if let Some(rho) = &rho {
                check_rho(&mut errs, rho, k, spec.rho.as_ref().unwrap());
            }
            match (b, rho) {
                (Some(b), Some(rho)) => Some(Coefficients::GaussianDetInfo { b, rho }),
                _ => None,
            }
        }
        ModelKind::OrnsteinUhlenbeck => {
            if check_len(&mut errs, "alpha", &spec.alpha, k) {
                let alpha = spec.alpha.clone().unwrap();
                for (i, &a) in alpha.iter().enumerate() {
                    if !(a > 0.0 && a.is_finite()) {
                        errs.push(format!("`alpha[{i}]` must be positive, got {a}"));
                    }
                }
                Some(Coefficients::OrnsteinUhlenbeck { alpha })
            } else {
                None
            }
        }
        ModelKind::SquareRootDiffusion => {
            let ok_x = check_len(&mut errs, "x", &spec.x, k);
            let ok_v = check_len(&mut errs, "v0", &spec.v0, k);
            if ok_x && ok_v {
                let x = spec.x.clone().unwrap();
                let v0 = spec.v0.clone().unwrap();
                nonzero(&mut errs, "x", &x);
                for (i, &v) in v0.iter().enumerate() {
                    if !(v > 0.0 && v.is_finite()) {
                        errs.push(format!("`v0[{i}]` must be positive, got {v}"));
                    }
                }
                Some(Coefficients::SquareRoot { x, v0 })
            } else {
                None
            }
        }
        ModelKind::CorrelatedDiffusion => {
            let ok_x = check_len(&mut errs, "x", &spec.x, k);
            let sigma = parse_matrix(&mut errs, "sigma", &spec.sigma, k);
            match (ok_x, sigma) {
                (true, Some(sigma)) => {
                    let x = spec.x.clone().unwrap();
                    nonzero(&mut errs, "x", &x);
                    let mut alpha = Vec::with_capacity(k * k);
                    for i in 0..k {
                        for j in 0..k {
                            let mut acc = PiecewisePoly::zero();
                            for p in 0..k {
                                acc = acc.add(&sigma[i * k + p].mul(&sigma[j * k + p]));
                            }
                            alpha.push(acc);
                        }
                    }
                    Some(Coefficients::Correlated { x, sigma, alpha })
                }
                _ => None,
            }
        }
    };

    let coeffs = match coeffs {
        Some(c) if errs.is_empty() => c,
        _ => return Err(ModelError::InvalidSpec(errs)),
    };

    // Which A^{ij} are deterministic, and their integrands.
    let mut det_rate: Vec<Option<PiecewisePoly>> = vec![None; k * k];
    for i in 0..k {
        for j in 0..k {
            det_rate[i * k + j] = match &coeffs {
                Coefficients::Brownian { x } => Some(if i == j {
                    PiecewisePoly::constant(x[i] * x[i])
                } else {
                    PiecewisePoly::zero()
                }),
                Coefficients::GaussianDetInfo { b, rho } => {
                    Some(b[i].mul(&b[j]).mul(&rho[i * k + j]))
                }
                Coefficients::OrnsteinUhlenbeck { .. } | Coefficients::SquareRoot { .. } => {
                    (i != j).then(PiecewisePoly::zero)
                }
                Coefficients::Correlated { alpha, .. } => (i != j
                    && alpha[i * k + j].is_identically_zero())
                .then(PiecewisePoly::zero),
            };
        }
    }
    let actual: Vec<bool> = det_rate.iter().map(Option::is_some).collect();

    let deterministic = match &spec.deterministic_cross {
        None => {
            let mut m = actual.clone();
            for i in 0..k {
                m[i * k + i] = true;
            }
            m
        }
        Some(mask) => {
            if mask.len() != k || mask.iter().any(|r| r.len() != k) {
                return Err(ModelError::InvalidSpec(vec![format!(
                    "`deterministic_cross` must be a {k}x{k} matrix"
                )]));
            }
            let mut flat = Vec::with_capacity(k * k);
            for i in 0..k {
                if !mask[i][i] {
                    errs.push(format!("`deterministic_cross[{i}][{i}]` must be true"));
                }
                for j in 0..k {
                    if mask[i][j] != mask[j][i] {
                        errs.push(format!("`deterministic_cross` is not symmetric at ({i},{j})"));
                    }
                    if i != j && mask[i][j] && !actual[i * k + j] {
                        errs.push(format!(
                            "A^({i},{j}) is random for this model but flagged deterministic"
                        ));
                    }
                    let all_det = matches!(
                        spec.kind,
                        ModelKind::BrownianConstant | ModelKind::GaussianDetInfo
                    );
                    if i != j && !mask[i][j] && all_det {
                        errs.push(format!(
                            "cross term ({i},{j}) must be flagged deterministic for {:?}",
                            spec.kind
                        ));
                    }
                    flat.push(mask[i][j]);
                }
            }
            flat
        }
    };
    if !errs.is_empty() {
        return Err(ModelError::InvalidSpec(errs));
    }

    // Terms flagged random are never evaluated in closed form.
    for i in 0..k {
        for j in 0..k {
            if i != j && !deterministic[i * k + j] {
                det_rate[i * k + j] = None;
            }
        }
    }
    let random_cross = (0..k)
        .map(|i| (0..k).filter(|&j| j != i && !deterministic[i * k + j]).count())
        .collect();
    let a_deterministic = det_rate.iter().all(Option::is_some);

    Ok(Model {
        spec,
        k,
        coeffs,
        det_rate,
        deterministic,
        random_cross,
        a_deterministic,
    })
}

fn check_rho(errs: &mut Vec<String>, rho: &[PiecewisePoly], k: usize, raw: &[Vec<TimeFnSpec>]) {
    for i in 0..k {
        for j in 0..i {
            if raw[i][j] != raw[j][i] {
                errs.push(format!("`rho` is not symmetric at ({i},{j})"));
            }
        }
    }
    let mut probes: Vec<f64> = rho.iter().flat_map(|p| p.probe_points()).collect();
    probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    probes.dedup();
    let mut a = vec![0.0; k * k];
    let mut l = vec![0.0; k * k];
    for &t in &probes {
        for (dst, p) in a.iter_mut().zip(rho) {
            *dst = p.eval(t);
        }
        if cholesky_psd(&a, k, &mut l).is_err() {
            errs.push(format!("`rho` is not positive semidefinite at t = {t}"));
            return;
        }
    }
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Drift integrand `X^i` at time `t` given sensor `i`'s own state.
    #[inline]
    pub fn integrand(&self, i: usize, t: f64, y_i: f64) -> f64 {
        match &self.coeffs {
            Coefficients::Brownian { x } | Coefficients::SquareRoot { x, .. } => x[i],
            Coefficients::GaussianDetInfo { b, .. } => b[i].eval(t),
            Coefficients::OrnsteinUhlenbeck { .. } => y_i,
            Coefficients::Correlated { x, .. } => x[i] * y_i,
        }
    }

    /// Instantaneous covariation rates `alpha^{ij}` (row-major `K x K`).
    pub fn covariation(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let k = self.k;
        match &self.coeffs {
            Coefficients::Brownian { .. } => diag(out, k, |_| 1.0),
            Coefficients::OrnsteinUhlenbeck { alpha } => diag(out, k, |i| alpha[i]),
            Coefficients::SquareRoot { v0, .. } => diag(out, k, |i| (v0[i] + y[i]).max(0.0)),
            Coefficients::GaussianDetInfo { rho, .. } => {
                for (o, p) in out.iter_mut().zip(rho) {
                    *o = p.eval(t);
                }
            }
            Coefficients::Correlated { alpha, .. } => {
                for (o, p) in out.iter_mut().zip(alpha) {
                    *o = p.eval(t);
                }
            }
        }
    }

    /// Diffusion matrix `sigma` with `sigma sigma' = alpha` (row-major).
    pub fn diffusion(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let k = self.k;
        match &self.coeffs {
            Coefficients::Brownian { .. } => diag(out, k, |_| 1.0),
            Coefficients::OrnsteinUhlenbeck { alpha } => diag(out, k, |i| alpha[i].sqrt()),
            Coefficients::SquareRoot { v0, .. } => {
                diag(out, k, |i| (v0[i] + y[i]).max(0.0).sqrt())
            }
            Coefficients::GaussianDetInfo { rho, .. } => {
                let a: Vec<f64> = rho.iter().map(|p| p.eval(t)).collect();
                // validated PSD at build time; clip residual rounding
                if cholesky_psd(&a, k, out).is_err() {
                    diag(out, k, |i| a[i * k + i].max(0.0).sqrt());
                }
            }
            Coefficients::Correlated { sigma, .. } => {
                for (o, p) in out.iter_mut().zip(sigma) {
                    *o = p.eval(t);
                }
            }
        }
    }

    /// Drift vector `lambda * alpha X` at state `y`.
    pub fn drift(&self, t: f64, y: &[f64], lambda: f64) -> Vec<f64> {
        let k = self.k;
        let mut alpha = vec![0.0; k * k];
        self.covariation(t, y, &mut alpha);
        let x: Vec<f64> = (0..k).map(|j| self.integrand(j, t, y[j])).collect();
        (0..k)
            .map(|i| lambda * (0..k).map(|j| alpha[i * k + j] * x[j]).sum::<f64>())
            .collect()
    }

    pub fn is_cross_deterministic(&self, i: usize, j: usize) -> bool {
        self.deterministic[i * self.k + j]
    }

    pub fn is_local_info_deterministic(&self, i: usize) -> bool {
        self.det_rate[i * self.k + i].is_some()
    }

    pub fn is_info_deterministic(&self) -> bool {
        self.a_deterministic
    }

    /// `d_i`: number of random cross terms involving sensor `i`.
    pub fn random_cross_counts(&self) -> &[usize] {
        &self.random_cross
    }

    /// True when every cross term is deterministic (the set of random pairs is empty).
    pub fn random_pairs_empty(&self) -> bool {
        self.random_cross.iter().all(|&d| d == 0)
    }

    /// Closed-form `A^{ij}_t` when that term is deterministic.
    pub fn deterministic_cross_info(&self, i: usize, j: usize, t: f64) -> Option<f64> {
        self.det_rate[i * self.k + j].as_ref().map(|p| p.integral(t))
    }

    /// Closed-form `A_t` when the total information is deterministic.
    pub fn deterministic_info(&self, t: f64) -> Option<f64> {
        if !self.a_deterministic {
            return None;
        }
        let mut acc = 0.0;
        for p in self.det_rate.iter().flatten() {
            acc += p.integral(t);
        }
        Some(acc)
    }

    /// Constant integrands `x_i` of the Brownian model.
    pub fn brownian_coefficients(&self) -> Option<&[f64]> {
        match &self.coeffs {
            Coefficients::Brownian { x } => Some(x),
            _ => None,
        }
    }
}

fn diag(out: &mut [f64], k: usize, f: impl Fn(usize) -> f64) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..k {
        out[i * k + i] = f(i);
    }
}

/// Uniform simulation grid `t_k = t_end * k / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self, ModelError> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(ModelError::InvalidGrid(format!("horizon must be positive, got {t_end}")));
        }
        if n_steps == 0 {
            return Err(ModelError::InvalidGrid("n_steps must be positive".into()));
        }
        Ok(Self { t_end, n_steps })
    }

    /// Grid over `[0, t_end]` with at least `steps_per_unit` steps per unit time.
    pub fn with_resolution(t_end: f64, steps_per_unit: f64) -> Result<Self, ModelError> {
        let n = (t_end * steps_per_unit - 1e-9).ceil().max(1.0) as usize;
        Self::new(t_end, n)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_end * k as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.time(k))
    }

    /// Largest grid index with `t_k <= t` (clamped to the grid).
    pub fn index_at_or_before(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let guess = ((t / self.t_end) * self.n_steps as f64).floor() as usize;
        let mut k = guess.min(self.n_steps);
        while k > 0 && self.time(k) > t {
            k -= 1;
        }
        while k < self.n_steps && self.time(k + 1) <= t {
            k += 1;
        }
        k
    }

    /// Same spacing, `factor` times the horizon. Shared grid points coincide exactly.
    pub fn extended(&self, factor: usize) -> Self {
        Self {
            t_end: self.t_end * factor as f64,
            n_steps: self.n_steps * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorPaths {
    pub grid: TimeGrid,
    /// `y[i][k]` = `Y^i` at grid point `k`.
    pub y: Vec<Vec<f64>>,
    pub lambda_true: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub magnitude_cap: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            magnitude_cap: DEFAULT_MAGNITUDE_CAP,
        }
    }
}

/// Euler-Maruyama paths from `Y_0 = 0` under drift parameter `lambda`.
pub fn simulate_paths(
    model: &Model,
    lambda: f64,
    grid: TimeGrid,
    seed: u64,
) -> Result<SensorPaths, ModelError> {
    let mut rng = replication_rng(seed, 0);
    simulate_paths_with(model, lambda, grid, &mut rng, seed, SimOptions::default())
}

pub fn simulate_paths_with<R: Rng + ?Sized>(
    model: &Model,
    lambda: f64,
    grid: TimeGrid,
    rng: &mut R,
    seed: u64,
    opts: SimOptions,
) -> Result<SensorPaths, ModelError> {
    let k = model.k;
    let n = grid.n_steps;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut y: Vec<Vec<f64>> = (0..k).map(|_| Vec::with_capacity(n + 1)).collect();
    let mut cur = vec![0.0; k];
    let mut alpha = vec![0.0; k * k];
    let mut sigma = vec![0.0; k * k];
    let mut x = vec![0.0; k];
    let mut z = vec![0.0; k];
    let mut next_state = vec![0.0; k];
    for (row, &c) in y.iter_mut().zip(&cur) {
        row.push(c);
    }
    for step in 0..n {
        let t = grid.time(step);
        model.covariation(t, &cur, &mut alpha);
        model.diffusion(t, &cur, &mut sigma);
        for j in 0..k {
            x[j] = model.integrand(j, t, cur[j]);
            z[j] = rng.sample(StandardNormal);
        }
        for i in 0..k {
            let mut drift = 0.0;
            let mut noise = 0.0;
            for j in 0..k {
                drift += alpha[i * k + j] * x[j];
                noise += sigma[i * k + j] * z[j];
            }
            let next = cur[i] + lambda * drift * dt + sqrt_dt * noise;
            if !next.is_finite() || next.abs() > opts.magnitude_cap {
                return Err(ModelError::NumericalBlowup {
                    sensor: i,
                    time: grid.time(step + 1),
                    cap: opts.magnitude_cap,
                });
            }
            // all coordinates use the pre-step state; commit after the loop
            next_state[i] = next;
        }
        for i in 0..k {
            cur[i] = next_state[i];
            y[i].push(cur[i]);
        }
    }
    Ok(SensorPaths {
        grid,
        y,
        lambda_true: lambda,
        seed,
    })
}

/// Pathwise sufficient statistics on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStats {
    pub grid: TimeGrid,
    pub k: usize,
    pub lambda_true: f64,
    /// `B^i` per sensor.
    pub b_i: Vec<Vec<f64>>,
    /// `A^i` per sensor.
    pub a_i: Vec<Vec<f64>>,
    /// Row-major `K x K` cross variations; the diagonal repeats `a_i`.
    pub a_ij: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub m: Vec<f64>,
}

/// Left-endpoint Itô sums for `B^i`; (co)variations from the model's
/// coefficients, in closed form wherever the term is deterministic.
pub fn path_statistics(paths: &SensorPaths, model: &Model) -> Result<PathStats, ModelError> {
    let k = model.k;
    let grid = paths.grid;
    let n = grid.n_steps;
    if paths.y.len() != k {
        return Err(ModelError::GridMismatch(format!(
            "paths have {} sensors, model has {k}",
            paths.y.len()
        )));
    }
    if let Some((i, row)) = paths.y.iter().enumerate().find(|(_, r)| r.len() != n + 1) {
        return Err(ModelError::GridMismatch(format!(
            "sensor {i} path has {} points, grid has {}",
            row.len(),
            n + 1
        )));
    }
    let dt = grid.dt();
    let mut b_i = vec![vec![0.0; n + 1]; k];
    let mut a_ij = vec![vec![0.0; n + 1]; k * k];
    let mut alpha = vec![0.0; k * k];
    let mut cur = vec![0.0; k];
    let mut x = vec![0.0; k];

    for step in 0..n {
        let t = grid.time(step);
        for i in 0..k {
            cur[i] = paths.y[i][step];
        }
        model.covariation(t, &cur, &mut alpha);
        for i in 0..k {
            x[i] = model.integrand(i, t, cur[i]);
        }
        for i in 0..k {
            b_i[i][step + 1] = b_i[i][step] + x[i] * (paths.y[i][step + 1] - cur[i]);
            for j in 0..k {
                let idx = i * k + j;
                if model.det_rate[idx].is_none() {
                    a_ij[idx][step + 1] = a_ij[idx][step] + x[i] * x[j] * alpha[idx] * dt;
                }
            }
        }
    }
    for (idx, rate) in model.det_rate.iter().enumerate() {
        if let Some(p) = rate {
            for (step, v) in a_ij[idx].iter_mut().enumerate() {
                *v = p.integral(grid.time(step));
            }
        }
    }

    let a_i: Vec<Vec<f64>> = (0..k).map(|i| a_ij[i * k + i].clone()).collect();
    let b: Vec<f64> = (0..=n).map(|s| b_i.iter().map(|r| r[s]).sum()).collect();
    let a: Vec<f64> = (0..=n)
        .map(|s| match model.deterministic_info(grid.time(s)) {
            Some(v) => v,
            None => total_info(&a_ij, k, s),
        })
        .collect();
    let lambda = paths.lambda_true;
    let m = b.iter().zip(&a).map(|(b, a)| b - lambda * a).collect();
    Ok(PathStats {
        grid,
        k,
        lambda_true: lambda,
        b_i,
        a_i,
        a_ij,
        b,
        a,
        m,
    })
}

/// `sum_i A^i + sum_{i != j} A^{ij}` at grid index `s`.
fn total_info(a_ij: &[Vec<f64>], k: usize, s: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..k {
        acc += a_ij[i * k + i][s];
    }
    for i in 0..k {
        for j in 0..k {
            if i != j {
                acc += a_ij[i * k + j][s];
            }
        }
    }
    acc
}

/// Linear interpolation of a grid series at time `t` (clamped to the grid).
pub fn interpolate(grid: &TimeGrid, series: &[f64], t: f64) -> f64 {
    let k = grid.index_at_or_before(t);
    if k >= grid.n_steps() {
        return series[grid.n_steps()];
    }
    let t0 = grid.time(k);
    let t1 = grid.time(k + 1);
    let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
    series[k] + w * (series[k + 1] - series[k])
}

/// First (interpolated) time a nondecreasing series reaches `level`.
pub fn first_crossing(grid: &TimeGrid, series: &[f64], level: f64) -> Option<f64> {
    if series[0] >= level {
        return Some(0.0);
    }
    let k = series.partition_point(|&v| v < level);
    if k > grid.n_steps() {
        return None;
    }
    let (v0, v1) = (series[k - 1], series[k]);
    let (t0, t1) = (grid.time(k - 1), grid.time(k));
    Some((t0 + (level - v0) / (v1 - v0) * (t1 - t0)).clamp(t0, t1))
}

impl PathStats {
    pub fn b_at(&self, t: f64) -> f64 {
        interpolate(&self.grid, &self.b, t)
    }

    pub fn a_at(&self, t: f64) -> f64 {
        interpolate(&self.grid, &self.a, t)
    }

    pub fn m_at(&self, t: f64) -> f64 {
        interpolate(&self.grid, &self.m, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn brownian(x: Vec<f64>) -> Model {
        build_model(ModelSpec::brownian(x)).unwrap()
    }

    #[test]
    fn brownian_info_is_sum_of_squares() {
        let m = brownian(vec![1.0, 2.0]);
        assert_eq!(m.random_cross_counts(), &[0, 0]);
        assert!(m.is_info_deterministic());
        for t in [0.0, 0.5, 3.0, 10.0] {
            assert_relative_eq!(m.deterministic_info(t).unwrap(), 5.0 * t, epsilon = 1e-12);
        }
    }

    #[test]
    fn correlated_all_random_counts() {
        let sigma = vec![
            vec![1.0.into(), 0.0.into(), 0.0.into()],
            vec![0.5.into(), 1.0.into(), 0.0.into()],
            vec![0.2.into(), 0.3.into(), 1.0.into()],
        ];
        let mask = vec![
            vec![true, false, false],
            vec![false, true, false],
            vec![false, false, true],
        ];
        let m = build_model(ModelSpec::correlated(vec![1.0; 3], sigma, Some(mask))).unwrap();
        assert_eq!(m.random_cross_counts(), &[2, 2, 2]);
        assert!(!m.is_info_deterministic());
    }

    #[test]
    fn correlated_flagged_deterministic_when_random_is_rejected() {
        let sigma = vec![vec![1.0.into(), 0.0.into()], vec![0.5.into(), 1.0.into()]];
        let mask = vec![vec![true, true], vec![true, true]];
        let err = build_model(ModelSpec::correlated(vec![1.0; 2], sigma, Some(mask))).unwrap_err();
        assert!(matches!(err, ModelError::InvalidSpec(_)));
    }

    #[test]
    fn gaussian_unit_info() {
        let m = build_model(ModelSpec::gaussian_det_info(vec![1.0.into()], vec![vec![1.0.into()]]))
            .unwrap();
        for t in [0.25, 1.0, 7.5] {
            assert_eq!(m.deterministic_info(t).unwrap(), t);
        }
    }

    #[test]
    fn gaussian_piecewise_info() {
        // b_1 = 1 then 2 from t=1, b_2 = 1, rho_12 = 0.5
        let b = vec![
            TimeFnSpec::Piecewise {
                breaks: vec![0.0, 1.0],
                pieces: vec![vec![1.0], vec![2.0]],
            },
            1.0.into(),
        ];
        let rho = vec![vec![1.0.into(), 0.5.into()], vec![0.5.into(), 1.0.into()]];
        let m = build_model(ModelSpec::gaussian_det_info(b, rho)).unwrap();
        // A(3) = int b1^2 + b2^2 + 2*0.5*b1*b2 = (1 + 4*2) + 3 + (1 + 2*2)
        assert_relative_eq!(m.deterministic_info(3.0).unwrap(), 9.0 + 3.0 + 5.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert!(build_model(ModelSpec::brownian(vec![1.0, 0.0])).is_err());
        assert!(build_model(ModelSpec::brownian(vec![])).is_err());
        let not_psd = vec![vec![1.0.into(), 2.0.into()], vec![2.0.into(), 1.0.into()]];
        let err = build_model(ModelSpec::gaussian_det_info(vec![1.0.into(), 1.0.into()], not_psd))
            .unwrap_err();
        assert!(err.to_string().contains("positive semidefinite"));
        let mut spec = ModelSpec::brownian(vec![1.0, 1.0]);
        spec.deterministic_cross = Some(vec![vec![true, false], vec![true, true]]);
        assert!(build_model(spec).is_err());
        assert!(build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0, -1.0])).is_err());
    }

    #[test]
    fn ou_drift_is_lambda_y() {
        let m = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        for (lambda, y) in [(0.5, 2.0), (-1.0, 3.0), (2.0, -0.25)] {
            assert_eq!(m.drift(0.0, &[y], lambda), vec![lambda * y]);
        }
    }

    #[test]
    fn zero_drift_path_has_gaussian_increments() {
        let m = brownian(vec![1.0]);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let p = simulate_paths(&m, 0.0, grid, 42).unwrap();
        assert_eq!(p.y[0].len(), 11);
        assert_eq!(p.y[0][0], 0.0);
        // increments have variance dt = 0.1: check over many seeds
        let mut sq = 0.0;
        let n = 2000;
        for seed in 0..n {
            let p = simulate_paths(&m, 0.0, grid, seed).unwrap();
            sq += p.y[0].windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
        }
        let var = sq / (n as f64 * 10.0);
        assert!((var - 0.1).abs() < 0.005, "increment variance {var}");
    }

    #[test]
    fn brownian_terminal_mean() {
        // E[Y_1] = lambda x t = 2
        let m = brownian(vec![1.0]);
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let n = 100_000u64;
        let mean = (0..n)
            .map(|s| simulate_paths(&m, 2.0, grid, s).unwrap().y[0][10])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn brownian_statistics_closed_form() {
        let m = brownian(vec![1.0, 2.0]);
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let p = simulate_paths(&m, 0.3, grid, 1).unwrap();
        let s = path_statistics(&p, &m).unwrap();
        for (k, t) in grid.times().enumerate() {
            assert_eq!(s.a_i[1][k], 4.0 * t);
            assert_relative_eq!(s.b_i[0][k], p.y[0][k], epsilon = 1e-12);
            assert_relative_eq!(s.b_i[1][k], 2.0 * p.y[1][k], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_path_gives_negative_info_score() {
        let m = brownian(vec![1.5]);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = SensorPaths {
            grid,
            y: vec![vec![0.0; 5]],
            lambda_true: 0.7,
            seed: 0,
        };
        let s = path_statistics(&p, &m).unwrap();
        for k in 0..5 {
            assert_eq!(s.b[k], 0.0);
            assert_eq!(s.m[k], -0.7 * s.a[k]);
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let m = brownian(vec![1.0]);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = SensorPaths {
            grid,
            y: vec![vec![0.0; 3]],
            lambda_true: 0.0,
            seed: 0,
        };
        assert!(matches!(path_statistics(&p, &m), Err(ModelError::GridMismatch(_))));
    }

    #[test]
    fn blowup_is_reported() {
        let m = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        let grid = TimeGrid::new(100.0, 100).unwrap();
        let mut rng = replication_rng(3, 0);
        let err = simulate_paths_with(&m, 5.0, grid, &mut rng, 3, SimOptions { magnitude_cap: 1e6 })
            .unwrap_err();
        assert!(matches!(err, ModelError::NumericalBlowup { .. }));
    }

    #[test]
    fn extended_grid_shares_points() {
        let g = TimeGrid::new(3.0, 300).unwrap();
        let e = g.extended(4);
        for k in 0..=300 {
            assert_eq!(g.time(k), e.time(k));
        }
        assert_eq!(e.dt(), g.dt());
    }

    #[test]
    fn index_lookup() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert_eq!(g.index_at_or_before(0.3), 3);
        assert_eq!(g.index_at_or_before(0.35), 3);
        assert_eq!(g.index_at_or_before(5.0), 10);
        assert_eq!(g.index_at_or_before(-1.0), 0);
    }

    #[test]
    fn sqrt_diffusion_rate_never_negative() {
        let m = build_model(ModelSpec::square_root(vec![1.0], vec![0.05])).unwrap();
        let grid = TimeGrid::new(20.0, 2000).unwrap();
        let p = simulate_paths(&m, -0.5, grid, 9).unwrap();
        let s = path_statistics(&p, &m).unwrap();
        assert!(s.a_i[0].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn correlated_noise_has_covariance_alpha() {
        let sigma = vec![
            vec![1.0.into(), 0.0.into(), 0.0.into()],
            vec![0.5.into(), 1.0.into(), 0.0.into()],
            vec![0.3.into(), (-0.4).into(), 1.0.into()],
        ];
        let m = build_model(ModelSpec::correlated(vec![1.0, 0.5, 0.8], sigma, None)).unwrap();
        let alpha: [f64; 9] = [1.0, 0.5, 0.3, 0.5, 1.25, -0.25, 0.3, -0.25, 1.25];
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let n = 4000u64;
        let finals: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                let p = simulate_paths(&m, 0.0, grid, s).unwrap();
                p.y.iter().map(|y| y[10]).collect()
            })
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let cov = finals.iter().map(|y| y[i] * y[j]).sum::<f64>() / n as f64;
                let se = ((alpha[i * 3 + i] * alpha[j * 3 + j] + alpha[i * 3 + j].powi(2)) / n as f64).sqrt();
                assert!((cov - alpha[i * 3 + j]).abs() < 4.5 * se, "cov[{i}][{j}] = {cov}");
            }
        }
        // stable mean reversion for negative lambda
        assert!(simulate_paths(&m, -0.5, TimeGrid::new(100.0, 10_000).unwrap(), 5).is_ok());
    }

    #[test]
    fn martingale_moments() {
        // E[M_t] = 0 and E[M_t^2] = E[A_t] for the OU model at t = 5
        let m = build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0])).unwrap();
        let grid = TimeGrid::new(5.0, 250).unwrap();
        let n = 10_000u64;
        let (mut sm, mut sm2, mut sa) = (0.0, Vec::with_capacity(n as usize), 0.0);
        for s in 0..n {
            let p = simulate_paths(&m, -0.5, grid, s).unwrap();
            let st = path_statistics(&p, &m).unwrap();
            let (mt, at) = (st.m[250], st.a[250]);
            sm += mt;
            sm2.push(mt * mt - at);
            sa += at;
        }
        let nf = n as f64;
        let mean_m = sm / nf;
        let mean_a = sa / nf;
        assert!(mean_m.abs() <= 4.0 * (mean_a / nf).sqrt(), "mean M {mean_m}");
        let d_mean = sm2.iter().sum::<f64>() / nf;
        let d_var = sm2.iter().map(|d| (d - d_mean).powi(2)).sum::<f64>() / (nf - 1.0);
        assert!(d_mean.abs() <= 5.0 * (d_var / nf).sqrt(), "E[M^2 - A] = {d_mean}");
    }

    fn catalog() -> Vec<(Model, f64)> {
        let corr = vec![
            vec![1.0.into(), 0.0.into()],
            vec![
                TimeFnSpec::Piecewise {
                    breaks: vec![0.0, 0.5],
                    pieces: vec![vec![0.4], vec![-0.3, 0.2]],
                },
                1.0.into(),
            ],
        ];
        vec![
            (brownian(vec![1.0, -2.0]), 0.5),
            (
                build_model(ModelSpec::gaussian_det_info(
                    vec![1.0.into(), 0.5.into()],
                    vec![vec![1.0.into(), 0.3.into()], vec![0.3.into(), 2.0.into()]],
                ))
                .unwrap(),
                1.0,
            ),
            (build_model(ModelSpec::ornstein_uhlenbeck(vec![1.0, 2.0])).unwrap(), -1.0),
            (build_model(ModelSpec::square_root(vec![1.0, 0.5], vec![1.0, 2.0])).unwrap(), 0.1),
            (build_model(ModelSpec::correlated(vec![1.0, 0.5], corr, None)).unwrap(), -0.5),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn path_stats_identities(seed in any::<u64>(), which in 0usize..5) {
            let (model, lambda) = catalog().swap_remove(which);
            let grid = TimeGrid::new(2.0, 400).unwrap();
            let p = simulate_paths(&model, lambda, grid, seed).unwrap();
            let s = path_statistics(&p, &model).unwrap();
            let k = model.k();
            for step in 0..=grid.n_steps() {
                let scale = 1.0 + s.a[step].abs() + s.b[step].abs();
                let bsum: f64 = (0..k).map(|i| s.b_i[i][step]).sum();
                prop_assert!((bsum - s.b[step]).abs() <= 1e-12 * scale);
                let asum: f64 = (0..k).map(|i| s.a_i[i][step]).sum::<f64>()
                    + (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
                        .map(|(i, j)| s.a_ij[i * k + j][step]).sum::<f64>();
                prop_assert!((asum - s.a[step]).abs() <= 1e-12 * scale);
                prop_assert!((s.m[step] - (s.b[step] - lambda * s.a[step])).abs() <= 1e-12 * scale);
                for i in 0..k {
                    if step > 0 {
                        prop_assert!(s.a_i[i][step] >= s.a_i[i][step - 1]);
                    }
                    for j in 0..k {
                        let bound = 0.5 * (s.a_i[i][step] + s.a_i[j][step]);
                        prop_assert!(s.a_ij[i * k + j][step].abs() <= bound * (1.0 + 1e-12) + 1e-15);
                    }
                }
            }
            prop_assert_eq!(s.a_i.iter().map(|r| r[0]).sum::<f64>(), 0.0);
            // determinism
            let again = path_statistics(&simulate_paths(&model, lambda, grid, seed).unwrap(), &model).unwrap();
            prop_assert_eq!(s, again);
        }
    }
}
