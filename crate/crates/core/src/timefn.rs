//! Deterministic time functions used as model coefficients.
//!
//! Coefficient descriptors are restricted to piecewise polynomials so that
//! products and integrals stay in closed form. A piece covering
//! `[breaks[k], breaks[k + 1])` stores its coefficients in the local variable
//! `s = t - breaks[k]`; the last piece extends to infinity.

use serde::{Deserialize, Serialize};

/// Config-facing descriptor: either a bare constant or an explicit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeFnSpec {
    Constant(f64),
    Piecewise {
        breaks: Vec<f64>,
        pieces: Vec<Vec<f64>>,
    },
}

impl TimeFnSpec {
    pub fn to_poly(&self) -> Result<PiecewisePoly, String> {
        match self {
            TimeFnSpec::Constant(c) => {
                if !c.is_finite() {
                    return Err(format!("non-finite constant {c}"));
                }
                Ok(PiecewisePoly::constant(*c))
            }
            TimeFnSpec::Piecewise { breaks, pieces } => {
                PiecewisePoly::new(breaks.clone(), pieces.clone())
            }
        }
    }
}

impl From<f64> for TimeFnSpec {
    fn from(c: f64) -> Self {
        TimeFnSpec::Constant(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    breaks: Vec<f64>,
    pieces: Vec<Vec<f64>>,
    /// `cumulative[k]` = integral over `[0, breaks[k]]`.
    cumulative: Vec<f64>,
}

impl PiecewisePoly {
    pub fn new(breaks: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self, String> {
        if breaks.is_empty() {
            return Err("time function needs at least one piece".into());
        }
        if breaks.len() != pieces.len() {
            return Err(format!(
                "{} breaks but {} pieces",
                breaks.len(),
                pieces.len()
            ));
        }
        if breaks[0] != 0.0 {
            return Err("first break must be 0".into());
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err("breaks must be finite and strictly increasing".into());
        }
        if pieces.iter().any(|p| p.is_empty()) {
            return Err("every piece needs at least one coefficient".into());
        }
        if pieces.iter().flatten().any(|c| !c.is_finite()) {
            return Err("non-finite polynomial coefficient".into());
        }
        Ok(Self::from_parts(breaks, pieces))
    }

    fn from_parts(breaks: Vec<f64>, pieces: Vec<Vec<f64>>) -> Self {
        let mut cumulative = Vec::with_capacity(breaks.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 1..breaks.len() {
            acc += poly_integral(&pieces[k - 1], breaks[k] - breaks[k - 1]);
            cumulative.push(acc);
        }
        Self {
            breaks,
            pieces,
            cumulative,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_parts(vec![0.0], vec![vec![c]])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    fn piece_index(&self, t: f64) -> usize {
        // last break <= t; times before 0 use the first piece
        self.breaks.partition_point(|&b| b <= t).saturating_sub(1)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.piece_index(t);
        poly_eval(&self.pieces[k], t - self.breaks[k])
    }

    /// Exact integral over `[0, t]`.
    pub fn integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.piece_index(t);
        self.cumulative[k] + poly_integral(&self.pieces[k], t - self.breaks[k])
    }

    pub fn is_identically_zero(&self) -> bool {
        self.pieces.iter().flatten().all(|&c| c == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.pieces
            .iter()
            .all(|p| p.iter().skip(1).all(|&c| c == 0.0))
            && self.pieces.windows(2).all(|w| w[0][0] == w[1][0])
    }

    /// Sample points covering every piece: each break, interior points and a
    /// point past the last break. Used for positivity checks.
    pub fn probe_points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for (k, &b) in self.breaks.iter().enumerate() {
            let end = self.breaks.get(k + 1).copied().unwrap_or(b + 1.0);
            for j in 0..8 {
                pts.push(b + (end - b) * j as f64 / 8.0);
            }
        }
        pts
    }

    fn merged_breaks(&self, other: &Self) -> Vec<f64> {
        let mut b: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        b.sort_by(|a, c| a.partial_cmp(c).unwrap());
        b.dedup();
        b
    }

    /// Coefficients of the piece active at `start`, re-centred at `start`.
    fn local_at(&self, start: f64) -> Vec<f64> {
        let k = self.piece_index(start);
        shift_poly(&self.pieces[k], start - self.breaks[k])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let breaks = self.merged_breaks(other);
        let pieces = breaks
            .iter()
            .map(|&b| poly_mul(&self.local_at(b), &other.local_at(b)))
            .collect();
        Self::from_parts(breaks, pieces)
    }

    pub fn add(&self, other: &Self) -> Self {
        let breaks = self.merged_breaks(other);
        let pieces = breaks
            .iter()
            .map(|&b| poly_add(&self.local_at(b), &other.local_at(b)))
            .collect();
        Self::from_parts(breaks, pieces)
    }
}

fn poly_eval(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * s + a)
}

fn poly_integral(c: &[f64], s: f64) -> f64 {
    c.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &a)| acc * s + a / (k + 1) as f64)
        * s
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| a.get(k).copied().unwrap_or(0.0) + b.get(k).copied().unwrap_or(0.0))
        .collect()
}

/// Coefficients of `q(s) = p(s + d)`.
fn shift_poly(c: &[f64], d: f64) -> Vec<f64> {
    if d == 0.0 {
        return c.to_vec();
    }
    // repeated synthetic division (Taylor shift)
    let mut out = c.to_vec();
    let n = out.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            out[j] += d * out[j + 1];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn step() -> PiecewisePoly {
        // 1 on [0,2), 3 + s on [2, inf)
        PiecewisePoly::new(vec![0.0, 2.0], vec![vec![1.0], vec![3.0, 1.0]]).unwrap()
    }

    #[test]
    fn eval_and_integral() {
        let f = step();
        assert_eq!(f.eval(1.0), 1.0);
        assert_eq!(f.eval(2.0), 3.0);
        assert_eq!(f.eval(4.0), 5.0);
        // 2 + (3*2 + 2) = 10
        assert_relative_eq!(f.integral(4.0), 10.0, epsilon = 1e-14);
        assert_eq!(f.integral(-1.0), 0.0);
    }

    #[test]
    fn constant_integral_is_exact() {
        let f = PiecewisePoly::constant(4.0);
        for k in 0..100 {
            let t = k as f64 * 0.01;
            assert_eq!(f.integral(t), 4.0 * t);
        }
    }

    #[test]
    fn product_matches_pointwise() {
        let f = step();
        let g = PiecewisePoly::new(vec![0.0, 1.0], vec![vec![0.0, 2.0], vec![-1.0, 0.5, 0.25]])
            .unwrap();
        let p = f.mul(&g);
        let s = f.add(&g);
        for k in 0..60 {
            let t = k as f64 * 0.1;
            assert_relative_eq!(p.eval(t), f.eval(t) * g.eval(t), epsilon = 1e-12);
            assert_relative_eq!(s.eval(t), f.eval(t) + g.eval(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn integral_matches_midpoint_rule() {
        let f = step().mul(&step());
        let n = 200_000;
        let t = 5.0;
        let h = t / n as f64;
        let approx: f64 = (0..n).map(|k| f.eval((k as f64 + 0.5) * h) * h).sum();
        assert_relative_eq!(f.integral(t), approx, max_relative = 1e-8);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(PiecewisePoly::new(vec![1.0], vec![vec![1.0]]).is_err());
        assert!(PiecewisePoly::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(PiecewisePoly::new(vec![0.0], vec![vec![]]).is_err());
        assert!(PiecewisePoly::new(vec![0.0, 1.0], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn zero_detection() {
        assert!(PiecewisePoly::zero().is_identically_zero());
        assert!(!step().is_identically_zero());
        assert!(PiecewisePoly::constant(2.0).is_constant());
        assert!(!step().is_constant());
    }
}
