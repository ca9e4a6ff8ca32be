//! Closed-form evaluators for the approximation, deviation and rate bounds.
//!
//! `I_∞(g, r)`, the squared sup-distance from `g` to the radius-`r` ball, is
//! never computed exactly; callers supply it or one of the upper bounds
//! provided here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be non-negative, got {v}")))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("beta must lie in (0, 1), got {beta}")))
    }
}

/// Interpolation-space membership: norm bound `B` at smoothness `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationParams {
    pub b: f64,
    pub beta: f64,
}

impl InterpolationParams {
    pub fn new(b: f64, beta: f64) -> Result<Self> {
        positive("B", b)?;
        check_beta(beta)?;
        Ok(Self { b, beta })
    }

    pub fn approx_bound(&self, r: f64) -> Result<f64> {
        approx_bound(self.b, self.beta, r)
    }
}

/// `I_∞(g, r) <= B^{2/(1-β)} / r^{2β/(1-β)}`.
pub fn approx_bound(b: f64, beta: f64, r: f64) -> Result<f64> {
    positive("B", b)?;
    check_beta(beta)?;
    positive("r", r)?;
    Ok(b.powf(2.0 / (1.0 - beta)) / r.powf(2.0 * beta / (1.0 - beta)))
}

/// Continuity of `I_∞` in the radius: `I_∞(g, r) <= (I_∞(g, s)^{1/2} + ‖k‖_diag^{1/2} (s - r))²`.
pub fn i_infty_shift_bound(i_s: f64, k_diag: f64, r: f64, s: f64) -> Result<f64> {
    non_negative("I_inf", i_s)?;
    positive("k_diag", k_diag)?;
    non_negative("r", r)?;
    if !(s >= r && s.is_finite()) {
        return Err(Error::input(format!("need s >= r, got r={r}, s={s}")));
    }
    if s == r {
        return Ok(i_s);
    }
    Ok((i_s.sqrt() + k_diag.sqrt() * (s - r)).powi(2))
}

/// Upper bound on `I_∞(g, r)` for `g` in the space with `‖g‖_H = R0` and
/// `‖g‖_∞ <= g_sup`, from the feasible element `(r / R0) g`.
pub fn scaled_i_infty_upper(g_h_norm: f64, g_sup: f64, r: f64) -> Result<f64> {
    positive("RKHS norm of g", g_h_norm)?;
    non_negative("sup norm of g", g_sup)?;
    non_negative("r", r)?;
    if r >= g_h_norm {
        Ok(0.0)
    } else {
        Ok(((1.0 - r / g_h_norm) * g_sup).powi(2))
    }
}

fn check_tn(t: f64, n: usize) -> Result<()> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(Error::input(format!("t must be >= 1, got {t}")));
    }
    if n == 0 {
        return Err(Error::input("n must be >= 1"));
    }
    Ok(())
}

/// Squared `L²(P)` error bound for the clipped fixed-kernel estimator,
/// holding with probability at least `1 - 2e^{-t}`.
#[allow(clippy::too_many_arguments)]
pub fn bound_t_bound(
    k_diag: f64,
    c: f64,
    sigma: f64,
    r: f64,
    t: f64,
    n: usize,
    i_inf: f64,
) -> Result<f64> {
    positive("k_diag", k_diag)?;
    positive("C", c)?;
    positive("sigma", sigma)?;
    non_negative("r", r)?;
    non_negative("I_inf", i_inf)?;
    check_tn(t, n)?;
    let nf = n as f64;
    let sk = k_diag.sqrt();
    Ok(2.0 * sk * (97.0 * c + 20.0 * sigma) * r * t.sqrt() / nf.sqrt()
        + 16.0 * sk * c * r * t / (3.0 * nf)
        + 10.0 * i_inf)
}

/// Analogue of [`bound_t_bound`] holding uniformly over a kernel collection
/// with chaining constant `J`.
#[allow(clippy::too_many_arguments)]
pub fn bound_t_vary_bound(
    j: f64,
    k_diag: f64,
    c: f64,
    sigma: f64,
    r: f64,
    t: f64,
    n: usize,
    i_inf: f64,
) -> Result<f64> {
    positive("J", j)?;
    positive("k_diag", k_diag)?;
    positive("C", c)?;
    positive("sigma", sigma)?;
    non_negative("r", r)?;
    non_negative("I_inf", i_inf)?;
    check_tn(t, n)?;
    let nf = n as f64;
    let sk = k_diag.sqrt();
    Ok(2.0 * j * sk * (151.0 * c + 21.0 * sigma) * r * t.sqrt() / nf.sqrt()
        + 16.0 * sk * c * r * t / (3.0 * nf)
        + 10.0 * i_inf)
}

/// Deviation bound for a single estimator: `20 ‖k‖^{1/2} σ r t^{1/2} / n^{1/2} + 4 ‖h_r - g‖²_∞`.
pub fn bias_event_bound(k_diag: f64, sigma: f64, r: f64, t: f64, n: usize, sup_gap_sq: f64) -> f64 {
    20.0 * k_diag.sqrt() * sigma * r * t.sqrt() / (n as f64).sqrt() + 4.0 * sup_gap_sq
}

/// Majorant for pairwise comparisons, fixed kernel:
/// `80 ‖k‖^{1/2} σ (r + s) t^{1/2} / n^{1/2} + 40 I_∞(g, r)`.
pub fn majorant_fixed(k_diag: f64, sigma: f64, r: f64, s: f64, t: f64, n: usize, i_inf: f64) -> f64 {
    80.0 * k_diag.sqrt() * sigma * (r + s) * t.sqrt() / (n as f64).sqrt() + 40.0 * i_inf
}

/// Deviation bound uniform over a kernel collection:
/// `21 J ‖k‖^{1/2} σ r t^{1/2} / n^{1/2} + 4 ‖h - g‖²_∞`.
#[allow(clippy::too_many_arguments)]
pub fn vary_bias_event_bound(
    j: f64,
    k_diag: f64,
    sigma: f64,
    r: f64,
    t: f64,
    n: usize,
    sup_gap_sq: f64,
) -> f64 {
    21.0 * j * k_diag.sqrt() * sigma * r * t.sqrt() / (n as f64).sqrt() + 4.0 * sup_gap_sq
}

/// Majorant for the Gaussian family:
/// `84 J σ (γ^{-d/2} r + η^{-d/2} s) t^{1/2} / n^{1/2} + 40 I_∞(g, γ, r)`.
#[allow(clippy::too_many_arguments)]
pub fn majorant_gauss(
    j: f64,
    sigma: f64,
    gamma: f64,
    r: f64,
    eta: f64,
    s: f64,
    d: usize,
    t: f64,
    n: usize,
    i_inf: f64,
) -> f64 {
    let half = -(d as f64) / 2.0;
    84.0 * j * sigma * (gamma.powf(half) * r + eta.powf(half) * s) * t.sqrt() / (n as f64).sqrt()
        + 40.0 * i_inf
}

/// `D1 τ n^{-β/(1+β)} + D2 τ² n^{-(1+3β)/(2(1+β))}`.
pub fn rate_envelope_fixed(d1: f64, d2: f64, tau: f64, n: usize, beta: f64) -> Result<f64> {
    non_negative("D1", d1)?;
    non_negative("D2", d2)?;
    positive("tau", tau)?;
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::input("n must be >= 1"));
    }
    let nf = n as f64;
    Ok(d1 * tau * nf.powf(-beta / (1.0 + beta))
        + d2 * tau * tau * nf.powf(-(1.0 + 3.0 * beta) / (2.0 * (1.0 + beta))))
}

/// The Gaussian-family envelope has the same shape; only the constants differ.
pub fn rate_envelope_gauss(d1: f64, d2: f64, tau: f64, n: usize, beta: f64) -> Result<f64> {
    rate_envelope_fixed(d1, d2, tau, n, beta)
}

/// Oracle-type shape `(1 + D1 τ n^{-1/2}) (D2 τ w n^{-1/2} + D3 I_∞)`, with
/// `w = r` for a fixed kernel and `w = γ^{-d/2} r` for the Gaussian family.
pub fn oracle_shape(d1: f64, d2: f64, d3: f64, tau: f64, weight: f64, n: usize, i_inf: f64) -> f64 {
    let rn = (n as f64).sqrt();
    (1.0 + d1 * tau / rn) * (d2 * tau * weight / rn + d3 * i_inf)
}

/// Per-radius inputs to the full adaptive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusTerm {
    pub r: f64,
    /// An upper bound on `I_∞(g, r)`.
    pub i_inf: f64,
    /// `‖V ĥ_r - g‖²_{L²(P)}`, or a bound on it.
    pub err: f64,
}

/// Full error bound for the adaptive fixed-kernel estimator: the infimum
/// over the grid of the two-branch maximum plus approximation terms.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_bound_fixed(
    terms: &[RadiusTerm],
    k_diag: f64,
    c: f64,
    sigma: f64,
    tau: f64,
    nu: f64,
    n: usize,
) -> Result<f64> {
    positive("k_diag", k_diag)?;
    positive("C", c)?;
    positive("sigma", sigma)?;
    positive("tau", tau)?;
    positive("nu", nu)?;
    if terms.is_empty() || n == 0 {
        return Err(Error::input("need at least one radius and n >= 1"));
    }
    let rn = (n as f64).sqrt();
    let sk = k_diag.sqrt();
    let s2 = sigma * sigma;
    let best = terms
        .iter()
        .map(|t| {
            let factor = 1.0 / nu + 97.0 * c / (80.0 * sigma * nu)
                + c * tau / (2400.0 * sk * s2 * nu * rn);
            let first = 2.0 * tau * t.r / rn
                + factor * (40.0 * t.i_inf + 2.0 * (1.0 + nu) * tau * t.r / rn);
            let second = 4.0 * (2.0 + nu) * tau * t.r / rn
                + 97.0 * c * tau * t.r / (40.0 * sigma * rn)
                + c * tau * tau * t.r / (1200.0 * sk * s2 * (n as f64));
            first.max(second) + 80.0 * t.i_inf + 2.0 * t.err
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// Per-(width, radius) inputs to the Gaussian adaptive bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthRadiusTerm {
    pub gamma: f64,
    pub r: f64,
    pub i_inf: f64,
    pub err: f64,
}

/// Full error bound for the adaptive Gaussian-family estimator over widths in `[u, v]`.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_bound_gauss(
    terms: &[WidthRadiusTerm],
    u: f64,
    v: f64,
    d: usize,
    j: f64,
    c: f64,
    sigma: f64,
    tau: f64,
    nu: f64,
    n: usize,
) -> Result<f64> {
    positive("u", u)?;
    positive("v", v)?;
    positive("J", j)?;
    positive("C", c)?;
    positive("sigma", sigma)?;
    positive("tau", tau)?;
    positive("nu", nu)?;
    if terms.is_empty() || n == 0 || d == 0 {
        return Err(Error::input("need at least one grid point, n >= 1 and d >= 1"));
    }
    let rn = (n as f64).sqrt();
    let nf = n as f64;
    let half = d as f64 / 2.0;
    let ratio = v.powf(half) / u.powf(half);
    let s2 = sigma * sigma;
    let j2 = j * j;
    let best = terms
        .iter()
        .map(|t| {
            let w = t.gamma.powf(-half) * t.r;
            let direct = 320.0 * t.i_inf
                + 4.0 * ratio * (5.0 + 2.0 * nu) * tau * w / rn
                + 302.0 * c * ratio * tau * w / (21.0 * sigma * rn)
                + 4.0 * c * ratio * tau * tau * w / (1323.0 * j2 * s2 * nf);
            let factor = 12.0 * ratio / nu
                + 302.0 * c * ratio / (21.0 * sigma * nu)
                + 4.0 * c * ratio * tau / (1323.0 * j2 * s2 * nu * rn);
            direct + factor * (20.0 * t.i_inf + (1.0 + nu) * tau * w / rn) + 2.0 * t.err
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}
