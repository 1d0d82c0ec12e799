//! Geometry of the probability simplex `Δ = {x ≥ 0 : Σx = 1}`.
//!
//! The kernel update of PRIDA is an exponentiated-gradient step, i.e. the
//! proximal map of the KL divergence; PGD instead takes a Euclidean step and
//! projects back with the sort-and-threshold method.

use crate::error::{Error, Result};
use crate::types::SIMPLEX_TOL;

/// Exponents above this are evaluated in log space to avoid underflow.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

/// A validated point of `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("simplex point must be non-empty"));
        }
        if !is_in_simplex(&weights) {
            return Err(Error::invalid("weights are not a point of the probability simplex"));
        }
        Ok(Self(weights))
    }

    pub fn uniform(s: usize) -> Self {
        assert!(s > 0);
        Self(vec![1.0 / s as f64; s])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SimplexPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn is_in_simplex(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite() && *v >= 0.0) && (x.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// `KL(x‖y) = Σ xᵢ log(xᵢ/yᵢ)` with `0·log 0 = 0`. Returns `+∞` when some
/// `yᵢ = 0 < xᵢ`.
pub fn kl(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut total = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        if xi == 0.0 {
            continue;
        }
        if yi == 0.0 {
            return f64::INFINITY;
        }
        total += xi * (xi / yi).ln();
    }
    total
}

pub fn l1_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// Exponentiated-gradient step `kᵢ·min(exp(−ηᵢgᵢ), M)`, renormalised.
///
/// `big_m = f64::INFINITY` disables the cap. Coordinates never become exactly
/// zero: anything that underflows is floored at the smallest normal `f64`.
pub fn entropic_step(k: &[f64], g: &[f64], eta: &[f64], big_m: f64) -> Result<Vec<f64>> {
    let s = k.len();
    if g.len() != s || eta.len() != s {
        return Err(Error::invalid(format!(
            "entropic step needs matching lengths, got k={s}, g={}, eta={}",
            g.len(),
            eta.len()
        )));
    }
    if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("gradient entry {bad} is not finite")));
    }
    if eta.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(Error::invalid("step sizes must be finite and non-negative"));
    }
    if !(big_m > 0.0) {
        return Err(Error::invalid(format!("big-M must be positive, got {big_m}")));
    }

    let exponents: Vec<f64> = g.iter().zip(eta).map(|(gi, ei)| -ei * gi).collect();
    let needs_log_space = exponents
        .iter()
        .any(|z| !(-LOG_SPACE_THRESHOLD..=LOG_SPACE_THRESHOLD).contains(z));
    let mut out = if needs_log_space {
        let log_m = big_m.ln();
        let logs: Vec<f64> = k
            .iter()
            .zip(&exponents)
            .map(|(&ki, &z)| ki.ln() + z.min(log_m))
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        logs.iter().map(|l| (l - top).exp()).collect::<Vec<f64>>()
    } else {
        k.iter()
            .zip(&exponents)
            .map(|(&ki, &z)| ki * z.exp().min(big_m))
            .collect::<Vec<f64>>()
    };
    normalize_in_place(&mut out);
    Ok(out)
}

/// `argmin_{x∈Δ} ⟨z, x⟩ + KL(x‖k)`, i.e. `xᵢ ∝ kᵢ·exp(−zᵢ)`.
pub fn kl_prox(k: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != k.len() {
        return Err(Error::invalid("kl_prox needs matching lengths"));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("tilt entry {bad} is not finite")));
    }
    let logs: Vec<f64> = k.iter().zip(z).map(|(ki, zi)| ki.ln() - zi).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    normalize_in_place(&mut out);
    Ok(out)
}

fn normalize_in_place(x: &mut [f64]) {
    let sum: f64 = x.iter().sum();
    for v in x.iter_mut() {
        *v = (*v / sum).max(f64::MIN_POSITIVE);
    }
}

/// Euclidean projection onto `Δ`: `max(v − τ, 0)` with `τ` found by sorting
/// `v` in descending order (stable, so ties resolve reproducibly).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let tau = simplex_threshold(v);
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

pub(crate) fn simplex_threshold(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    tau
}

/// LHS − RHS of the three-point inequality
/// `⟨z,y⟩ + KL(y‖x⁰) ≥ ⟨z,x*⟩ + KL(x*‖x⁰) + KL(y‖x*)` with
/// `x* = kl_prox(x⁰, z)`. Non-negative up to rounding.
pub fn three_point_gap(z: &[f64], x0: &[f64], y: &[f64]) -> Result<f64> {
    let x_star = kl_prox(x0, z)?;
    Ok(three_point_gap_at(z, x0, y, &x_star))
}

pub(crate) fn three_point_gap_at(z: &[f64], x0: &[f64], y: &[f64], x_star: &[f64]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let lhs = dot(z, y) + kl(y, x0);
    let rhs = dot(z, x_star) + kl(x_star, x0) + kl(y, x_star);
    lhs - rhs
}
