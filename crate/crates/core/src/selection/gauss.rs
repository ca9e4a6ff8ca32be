//! Joint width and radius selection over the scaled Gaussian family.
//!
//! A candidate `(γ, r)` is compared with every `(η, s)` with `η <= γ` and
//! `s >= r`: narrower kernels and larger balls are the less smooth
//! estimators. Penalties scale with `γ^{-d/2} r`.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixed::{fit_path, RadiusGrid};
use super::{check_positive, check_tuning, score_candidates};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{ConstrainedFit, GramEigen};
use crate::kernels::{j_constant_bound, Kernel, WidthGrid};

/// `84 J σ`.
pub fn tau_min_gauss(j: f64, sigma: f64) -> Result<f64> {
    check_positive("J", j)?;
    check_positive("sigma", sigma)?;
    Ok(84.0 * j * sigma)
}

pub fn t_of_tau_gauss(tau: f64, j: f64, sigma: f64) -> Result<f64> {
    check_positive("tau", tau)?;
    let tau_min = tau_min_gauss(j, sigma)?;
    if tau < tau_min {
        warn!("tau = {tau} is below 84 J sigma = {tau_min}; t < 1");
    }
    Ok((tau / tau_min).powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussGlConfig {
    pub tau: f64,
    pub nu: f64,
    pub sigma: f64,
    /// Chaining constant; defaults to the closed-form bound over `[u, v]`.
    pub j: f64,
    pub dim: usize,
    pub widths: WidthGrid,
    pub radii: RadiusGrid,
    #[serde(default)]
    pub theory_mode: bool,
}

impl GaussGlConfig {
    pub fn new(
        tau: f64,
        nu: f64,
        sigma: f64,
        dim: usize,
        widths: WidthGrid,
        radii: RadiusGrid,
    ) -> Result<Self> {
        let j = j_constant_bound(widths.values()[0], *widths.values().last().unwrap())?;
        Ok(Self {
            tau,
            nu,
            sigma,
            j,
            dim,
            widths,
            radii,
            theory_mode: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_tuning(self.tau, self.nu)?;
        if self.dim == 0 {
            return Err(Error::input("dimension must be >= 1"));
        }
        if self.widths.is_empty() || self.radii.is_empty() {
            return Err(Error::input("width and radius grids must be non-empty"));
        }
        let tau_min = tau_min_gauss(self.j, self.sigma)?;
        if self.tau < tau_min {
            if self.theory_mode {
                return Err(Error::constraint(format!(
                    "tau = {} is below 84 J sigma = {tau_min}",
                    self.tau
                )));
            }
            warn!("tau = {} is below the theoretical minimum {tau_min}", self.tau);
        }
        Ok(())
    }

    fn scale(&self, gamma: f64) -> f64 {
        gamma.powf(-(self.dim as f64) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussCriterionRow {
    pub gamma: f64,
    pub r: f64,
    pub bias_proxy: f64,
    pub variance_term: f64,
    pub total: f64,
    pub argmax_eta: f64,
    pub argmax_s: f64,
}

/// `fits[g][i]` is the fit for width `widths[g]` and radius `radii[i]`.
pub fn gauss_gl_criterion(
    fits: &[Vec<ConstrainedFit>],
    cfg: &GaussGlConfig,
) -> Result<Vec<GaussCriterionRow>> {
    check_tuning(cfg.tau, cfg.nu)?;
    let widths = cfg.widths.values();
    let radii = cfg.radii.values();
    if widths.is_empty() || radii.is_empty() {
        return Err(Error::input("width and radius grids must be non-empty"));
    }
    if fits.len() != widths.len() || fits.iter().any(|row| row.len() != radii.len()) {
        return Err(Error::input("fit table does not match the grids"));
    }
    let n = fits[0][0].train_pred.len();
    if fits.iter().flatten().any(|f| f.train_pred.len() != n) {
        return Err(Error::input("fits have different sample sizes"));
    }

    let nr = radii.len();
    let preds: Vec<&[f64]> = fits.iter().flatten().map(|f| f.train_pred.as_slice()).collect();
    let weights: Vec<f64> = widths
        .iter()
        .flat_map(|&g| radii.iter().map(move |&r| (g, r)))
        .map(|(g, r)| cfg.scale(g) * r)
        .collect();
    let partners = |idx: usize| {
        let (g, i) = (idx / nr, idx % nr);
        (0..=g).flat_map(move |h| (i..nr).map(move |j| h * nr + j))
    };
    let scored = score_candidates(&preds, &weights, partners, cfg.tau, cfg.nu);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(idx, s)| GaussCriterionRow {
            gamma: widths[idx / nr],
            r: radii[idx % nr],
            bias_proxy: s.bias_proxy,
            variance_term: s.variance_term,
            total: s.total,
            argmax_eta: widths[s.argmax / nr],
            argmax_s: radii[s.argmax % nr],
        })
        .collect())
}

/// Argmin of the total; ties go to the largest width, then the smallest radius.
pub fn argmin_smoothest(rows: &[GaussCriterionRow], n_radii: usize) -> usize {
    let n_widths = rows.len() / n_radii;
    let mut best: Option<usize> = None;
    for g in (0..n_widths).rev() {
        for i in 0..n_radii {
            let idx = g * n_radii + i;
            if best.is_none_or(|b| rows[idx].total < rows[b].total) {
                best = Some(idx);
            }
        }
    }
    best.unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussSelectionResult {
    pub gamma_hat: f64,
    pub r_hat: f64,
    pub width_index: usize,
    pub radius_index: usize,
    pub criterion: Vec<GaussCriterionRow>,
    pub fit_hat: ConstrainedFit,
    pub clipped: bool,
    #[serde(skip)]
    pub fits: Vec<Vec<ConstrainedFit>>,
}

/// One decomposition per width, each shared by all radii.
pub fn gauss_eigens(data: &Dataset, cfg: &GaussGlConfig) -> Result<Vec<GramEigen>> {
    if data.dim() != cfg.dim {
        return Err(Error::input(format!(
            "data has dimension {} but the configuration says {}",
            data.dim(),
            cfg.dim
        )));
    }
    cfg.widths
        .values()
        .par_iter()
        .map(|&w| GramEigen::new(&Kernel::gaussian(w, cfg.dim)?.gram(&data.x)?, &data.y))
        .collect()
}

pub fn select_width_radius(data: &Dataset, cfg: &GaussGlConfig) -> Result<GaussSelectionResult> {
    cfg.validate()?;
    let eigens = gauss_eigens(data, cfg)?;
    select_from_eigens(&eigens, cfg, data.clip.is_some())
}

pub fn select_from_eigens(
    eigens: &[GramEigen],
    cfg: &GaussGlConfig,
    clipped: bool,
) -> Result<GaussSelectionResult> {
    let fits: Vec<Vec<ConstrainedFit>> = eigens
        .iter()
        .map(|e| fit_path(e, &cfg.radii))
        .collect::<Result<_>>()?;
    let criterion = gauss_gl_criterion(&fits, cfg)?;
    let nr = cfg.radii.len();
    let idx = argmin_smoothest(&criterion, nr);
    let (g, i) = (idx / nr, idx % nr);
    Ok(GaussSelectionResult {
        gamma_hat: cfg.widths.values()[g],
        r_hat: cfg.radii.values()[i],
        width_index: g,
        radius_index: i,
        criterion,
        fit_hat: fits[g][i].clone(),
        clipped,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Points;
    use crate::selection::fixed::{gl_criterion, GlConfig};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
        let x = Points::new(d, coords).unwrap();
        let y = x
            .iter()
            .map(|p| (4.0 * p[0]).cos() + rng.random_range(-0.3..0.3))
            .collect();
        Dataset::new(x, y).unwrap()
    }

    fn cfg(widths: &[f64], radii: &[f64], tau: f64, nu: f64, d: usize) -> GaussGlConfig {
        GaussGlConfig::new(
            tau,
            nu,
            0.1,
            d,
            WidthGrid::explicit(widths).unwrap(),
            RadiusGrid::explicit(radii).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn tau_helpers() {
        assert_eq!(tau_min_gauss(1.0, 1.0).unwrap(), 84.0);
        assert_eq!(t_of_tau_gauss(84.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(t_of_tau_gauss(168.0, 1.0, 1.0).unwrap(), 4.0);
        assert!(tau_min_gauss(1.0, 0.0).is_err());
    }

    #[test]
    fn singleton_grids() {
        let data = toy(16, 1, 1);
        let c = cfg(&[0.7], &[1.1], 0.4, 0.5, 1);
        let res = select_width_radius(&data, &c).unwrap();
        assert_eq!((res.gamma_hat, res.r_hat), (0.7, 1.1));
        let expect = 2.0 * 0.5 * 0.4 * 0.7f64.powf(-0.5) * 1.1 / 4.0;
        assert_abs_diff_eq!(res.criterion[0].total, expect, epsilon = 1e-12);
    }

    #[test]
    fn zero_responses_pick_widest_kernel_and_zero_radius() {
        let mut data = toy(10, 2, 2);
        data.y = vec![0.0; 10];
        let c = cfg(&[0.5, 1.0, 2.0], &[0.0, 0.5, 1.0, 2.0], 0.3, 1.0, 2);
        let res = select_width_radius(&data, &c).unwrap();
        assert_eq!(res.r_hat, 0.0);
        assert_eq!(res.gamma_hat, 2.0);
        for row in &res.criterion {
            let w = row.gamma.powf(-1.0) * row.r;
            assert_abs_diff_eq!(row.total, 2.0 * 0.3 * w / 10f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn variance_term_arithmetic() {
        let data = toy(4, 2, 3);
        let c = cfg(&[1.0, 2.0], &[1.0], 1.0, 1.0, 2);
        let res = select_width_radius(&data, &c).unwrap();
        let row = res.criterion.iter().find(|r| r.gamma == 2.0).unwrap();
        assert_abs_diff_eq!(row.variance_term, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn comparison_set_shape_and_floor() {
        for seed in 0..10 {
            let data = toy(25, 1, seed);
            let c = cfg(&[0.25, 0.5, 1.0], &[0.0, 0.5, 1.0, 2.0, 4.0], 0.15, 0.8, 1);
            let res = select_width_radius(&data, &c).unwrap();
            for row in &res.criterion {
                assert!(row.argmax_eta <= row.gamma);
                assert!(row.argmax_s >= row.r);
                let floor = 2.0 * c.nu * c.tau * row.gamma.powf(-0.5) * row.r / 5.0;
                assert!(row.total >= floor - 1e-12);
            }
        }
    }

    #[test]
    fn single_width_reduces_to_fixed_criterion() {
        let data = toy(30, 1, 5);
        let gamma = 0.6;
        let c = cfg(&[gamma], &[0.0, 0.5, 1.0, 1.5, 3.0], 0.2, 1.0, 1);
        let res = select_width_radius(&data, &c).unwrap();
        let fixed_cfg = GlConfig::new(0.2 * gamma.powf(-0.5), 1.0, 0.1, 1.0 / gamma);
        let fixed = gl_criterion(&res.fits[0], &fixed_cfg).unwrap();
        for (g, f) in res.criterion.iter().zip(&fixed) {
            assert_abs_diff_eq!(g.total, f.total, epsilon = 1e-12);
        }
        assert_eq!(
            res.radius_index,
            crate::selection::fixed::argmin_smallest(&fixed)
        );
    }

    #[test]
    fn tie_break_prefers_wide_then_small() {
        let mk = |gamma: f64, r: f64, total: f64| GaussCriterionRow {
            gamma,
            r,
            bias_proxy: 0.0,
            variance_term: total,
            total,
            argmax_eta: gamma,
            argmax_s: r,
        };
        let rows = vec![
            mk(1.0, 0.0, 1.0),
            mk(1.0, 1.0, 0.5),
            mk(2.0, 0.0, 0.7),
            mk(2.0, 1.0, 0.5),
            mk(3.0, 0.0, 0.5),
            mk(3.0, 1.0, 0.5),
        ];
        assert_eq!(argmin_smoothest(&rows, 2), 4);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let data = toy(5, 2, 1);
        let c = cfg(&[1.0], &[1.0], 1.0, 1.0, 1);
        assert!(select_width_radius(&data, &c).is_err());
    }
}
