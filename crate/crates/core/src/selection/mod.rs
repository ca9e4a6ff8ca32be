//! Goldenshluger-Lepski selection over a fixed kernel (`fixed`) and over the
//! scaled Gaussian family (`gauss`).
//!
//! Both share one engine. Every candidate estimator `i` carries a penalty
//! weight `w_i` (the radius, scaled by `γ^{-d/2}` in the Gaussian case) and a
//! set of less smooth comparison partners. The criterion is
//!
//! ```text
//! bias(i)     = max_{j partner of i} ( ‖ĥ_i - ĥ_j‖²_{P_n} - τ (w_i + w_j) / √n )
//! variance(i) = 2 (1 + ν) τ w_i / √n
//! ```
//!
//! Every candidate is its own partner, so `bias(i) >= -2 τ w_i / √n`.

pub mod fixed;
pub mod gauss;

use rayon::prelude::*;

use crate::estimator::sq_distance_unchecked;

pub(crate) struct Scored {
    pub bias_proxy: f64,
    pub variance_term: f64,
    pub total: f64,
    pub argmax: usize,
}

/// `partners(i)` must list `i` itself.
pub(crate) fn score_candidates<P, I>(
    preds: &[&[f64]],
    weights: &[f64],
    partners: P,
    tau: f64,
    nu: f64,
) -> Vec<Scored>
where
    P: Fn(usize) -> I + Sync,
    I: Iterator<Item = usize>,
{
    let n = preds.first().map_or(1, |p| p.len());
    let scale = tau / (n as f64).sqrt();
    (0..preds.len())
        .into_par_iter()
        .map(|i| {
            let mut bias = f64::NEG_INFINITY;
            let mut argmax = i;
            for j in partners(i) {
                let value =
                    sq_distance_unchecked(preds[i], preds[j]) - scale * (weights[i] + weights[j]);
                if value > bias {
                    bias = value;
                    argmax = j;
                }
            }
            let variance_term = 2.0 * (1.0 + nu) * scale * weights[i];
            Scored {
                bias_proxy: bias,
                variance_term,
                total: bias + variance_term,
                argmax,
            }
        })
        .collect()
}

pub(crate) fn check_tuning(tau: f64, nu: f64) -> crate::Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(crate::Error::input(format!("tau must be positive, got {tau}")));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(crate::Error::input(format!("nu must be positive, got {nu}")));
    }
    Ok(())
}

pub(crate) fn check_positive(name: &str, v: f64) -> crate::Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(crate::Error::input(format!("{name} must be positive, got {v}")))
    }
}
