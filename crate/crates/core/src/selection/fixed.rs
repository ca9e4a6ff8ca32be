//! Adaptive radius selection for a fixed kernel.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_positive, check_tuning, score_candidates};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{ConstrainedFit, GramEigen};
use crate::kernels::{ceil_tolerant, Kernel};

/// Finite radius grid `{b i : 0 <= i < I} ∪ {a √n}`, `I = ⌈a √n / b⌉`, or an
/// explicit ascending list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrid {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub n: Option<usize>,
    values: Vec<f64>,
}

pub fn radius_grid(a: f64, b: f64, n: usize) -> Result<RadiusGrid> {
    RadiusGrid::lattice(a, b, n)
}

impl RadiusGrid {
    pub fn lattice(a: f64, b: f64, n: usize) -> Result<Self> {
        check_positive("grid parameter a", a)?;
        check_positive("grid spacing b", b)?;
        if n == 0 {
            return Err(Error::input("sample size must be >= 1"));
        }
        let top = a * (n as f64).sqrt();
        let steps = ceil_tolerant(top / b);
        let mut values: Vec<f64> = (0..steps).map(|i| b * i as f64).collect();
        match values.last() {
            Some(&last) if last >= top * (1.0 - 1e-12) => {}
            _ => values.push(top),
        }
        Ok(Self {
            a: Some(a),
            b: Some(b),
            n: Some(n),
            values,
        })
    }

    /// Sorted and deduplicated; radii must be non-negative.
    pub fn explicit(radii: &[f64]) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::input("radius grid is empty"));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::input("radii must be finite and non-negative"));
        }
        let mut values = radii.to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self {
            a: None,
            b: None,
            n: None,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `80 ‖k‖_diag^{1/2} σ`.
pub fn tau_min_fixed(k_diag: f64, sigma: f64) -> Result<f64> {
    check_positive("k_diag", k_diag)?;
    check_positive("sigma", sigma)?;
    Ok(80.0 * k_diag.sqrt() * sigma)
}

/// Confidence level `t = (τ / τ_min)²` at which the guarantees hold.
pub fn t_of_tau(tau: f64, k_diag: f64, sigma: f64) -> Result<f64> {
    check_positive("tau", tau)?;
    let tau_min = tau_min_fixed(k_diag, sigma)?;
    if tau < tau_min {
        warn!("tau = {tau} is below 80 sqrt(k_diag) sigma = {tau_min}; t < 1");
    }
    Ok((tau / tau_min).powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlConfig {
    pub tau: f64,
    pub nu: f64,
    pub sigma: f64,
    pub k_diag: f64,
    #[serde(default)]
    pub theory_mode: bool,
}

impl GlConfig {
    pub fn new(tau: f64, nu: f64, sigma: f64, k_diag: f64) -> Self {
        Self {
            tau,
            nu,
            sigma,
            k_diag,
            theory_mode: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_tuning(self.tau, self.nu)?;
        let tau_min = tau_min_fixed(self.k_diag, self.sigma)?;
        if self.tau < tau_min {
            if self.theory_mode {
                return Err(Error::constraint(format!(
                    "tau = {} is below 80 sqrt(k_diag) sigma = {tau_min}",
                    self.tau
                )));
            }
            warn!("tau = {} is below the theoretical minimum {tau_min}", self.tau);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionRow {
    pub r: f64,
    pub bias_proxy: f64,
    pub variance_term: f64,
    pub total: f64,
    /// Radius of the comparison attaining the bias proxy.
    pub argmax_s: f64,
}

/// Criterion over fits indexed by ascending radius, comparing each radius
/// with every radius above it. Fits are compared unclipped.
pub fn gl_criterion(fits: &[ConstrainedFit], cfg: &GlConfig) -> Result<Vec<CriterionRow>> {
    check_tuning(cfg.tau, cfg.nu)?;
    if fits.is_empty() {
        return Err(Error::input("criterion needs at least one fit"));
    }
    let n = fits[0].train_pred.len();
    if fits.iter().any(|f| f.train_pred.len() != n) {
        return Err(Error::input("fits have different sample sizes"));
    }
    if fits.windows(2).any(|w| w[0].r > w[1].r) {
        return Err(Error::input("fits must be ordered by ascending radius"));
    }
    let preds: Vec<&[f64]> = fits.iter().map(|f| f.train_pred.as_slice()).collect();
    let weights: Vec<f64> = fits.iter().map(|f| f.r).collect();
    let count = fits.len();
    let scored = score_candidates(&preds, &weights, |i| i..count, cfg.tau, cfg.nu);
    Ok(scored
        .into_iter()
        .zip(fits)
        .map(|(s, f)| CriterionRow {
            r: f.r,
            bias_proxy: s.bias_proxy,
            variance_term: s.variance_term,
            total: s.total,
            argmax_s: fits[s.argmax].r,
        })
        .collect())
}

/// Index of the smallest radius attaining the minimum total.
pub fn argmin_smallest(rows: &[CriterionRow]) -> usize {
    let mut best = 0;
    for (i, row) in rows.iter().enumerate().skip(1) {
        if row.total < rows[best].total {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub r_hat: f64,
    pub index: usize,
    pub criterion: Vec<CriterionRow>,
    pub fit_hat: ConstrainedFit,
    /// Whether predictions from this result are clipped into `[-C, C]`.
    pub clipped: bool,
    #[serde(skip)]
    pub fits: Vec<ConstrainedFit>,
}

/// Fits every grid radius from one shared decomposition.
pub fn fit_path(eigen: &GramEigen, grid: &RadiusGrid) -> Result<Vec<ConstrainedFit>> {
    grid.values().par_iter().map(|&r| eigen.fit(r)).collect()
}

pub fn select_radius(
    data: &Dataset,
    kernel: &Kernel,
    grid: &RadiusGrid,
    cfg: &GlConfig,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let eigen = GramEigen::new(&kernel.gram(&data.x)?, &data.y)?;
    select_from_eigen(&eigen, grid, cfg, data.clip.is_some())
}

pub fn select_from_eigen(
    eigen: &GramEigen,
    grid: &RadiusGrid,
    cfg: &GlConfig,
    clipped: bool,
) -> Result<SelectionResult> {
    let fits = fit_path(eigen, grid)?;
    let criterion = gl_criterion(&fits, cfg)?;
    let index = argmin_smallest(&criterion);
    Ok(SelectionResult {
        r_hat: grid.values()[index],
        index,
        criterion,
        fit_hat: fits[index].clone(),
        clipped,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Points;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radius_grid_examples() {
        let g = radius_grid(1.0, 0.5, 16).unwrap();
        assert_eq!(g.values(), &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]);
        assert_eq!(radius_grid(1.0, 2.0, 4).unwrap().values(), &[0.0, 2.0]);
        assert_eq!(radius_grid(1.0, 1.0, 1).unwrap().values(), &[0.0, 1.0]);
        assert!(radius_grid(0.0, 1.0, 4).is_err());
        assert!(radius_grid(1.0, -1.0, 4).is_err());
    }

    #[test]
    fn radius_grid_contains_endpoints() {
        for &(a, b, n) in &[(0.3, 0.7, 37usize), (2.0, 0.1, 5), (1.0, 3.0, 100), (0.5, 0.5, 800)] {
            let g = radius_grid(a, b, n).unwrap();
            assert_eq!(g.values()[0], 0.0);
            assert_abs_diff_eq!(*g.values().last().unwrap(), a * (n as f64).sqrt(), epsilon = 1e-12);
            assert!(g.values().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn tau_helpers() {
        assert_eq!(tau_min_fixed(1.0, 1.0).unwrap(), 80.0);
        assert_eq!(t_of_tau(80.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(t_of_tau(160.0, 1.0, 1.0).unwrap(), 4.0);
        assert!(tau_min_fixed(0.0, 1.0).is_err());
        assert!(t_of_tau(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn theory_mode_rejects_small_tau() {
        let mut cfg = GlConfig::new(40.0, 1.0, 1.0, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.theory_mode = true;
        assert!(matches!(cfg.validate(), Err(Error::Constraint(_))));
    }

    fn toy(n: usize, seed: u64, y_scale: f64) -> (Dataset, Kernel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = xs
            .iter()
            .map(|x| y_scale * ((6.0 * x).sin() + rng.random_range(-0.2..0.2)))
            .collect();
        let data = Dataset::new(Points::from_scalars(&xs).unwrap(), y).unwrap();
        (data, Kernel::gaussian(0.3, 1).unwrap())
    }

    #[test]
    fn singleton_grid() {
        let (data, kernel) = toy(20, 1, 1.0);
        let cfg = GlConfig::new(0.5, 0.7, 0.1, 1.0 / 0.3);
        let res = select_radius(&data, &kernel, &RadiusGrid::explicit(&[1.3]).unwrap(), &cfg).unwrap();
        assert_eq!(res.r_hat, 1.3);
        let row = &res.criterion[0];
        let sqrt_n = 20f64.sqrt();
        assert_abs_diff_eq!(row.bias_proxy, -2.0 * 0.5 * 1.3 / sqrt_n, epsilon = 1e-12);
        assert_abs_diff_eq!(row.total, 2.0 * 0.7 * 0.5 * 1.3 / sqrt_n, epsilon = 1e-12);
    }

    #[test]
    fn huge_tau_selects_zero() {
        let (data, kernel) = toy(15, 2, 1.0);
        let cfg = GlConfig::new(1e9, 1.0, 0.1, 1.0 / 0.3);
        let res = select_radius(&data, &kernel, &RadiusGrid::explicit(&[0.0, 2.0]).unwrap(), &cfg).unwrap();
        assert_eq!(res.criterion[0].bias_proxy, 0.0);
        assert_eq!(res.criterion[0].total, 0.0);
        assert_eq!(res.r_hat, 0.0);
    }

    #[test]
    fn zero_responses_select_zero() {
        let (mut data, kernel) = toy(12, 3, 1.0);
        data.y = vec![0.0; 12];
        let cfg = GlConfig::new(0.3, 1.0, 0.1, 1.0 / 0.3);
        let grid = radius_grid(1.0, 0.5, 12).unwrap();
        let res = select_radius(&data, &kernel, &grid, &cfg).unwrap();
        assert_eq!(res.r_hat, 0.0);
        let s = 0.3 / 12f64.sqrt();
        for row in &res.criterion {
            assert_abs_diff_eq!(row.bias_proxy, -2.0 * s * row.r, epsilon = 1e-15);
            assert_abs_diff_eq!(row.total, 2.0 * s * row.r, epsilon = 1e-15);
        }
    }

    fn brute_force(fits: &[ConstrainedFit], tau: f64, nu: f64) -> Vec<f64> {
        let n = fits[0].train_pred.len() as f64;
        let mut totals = Vec::new();
        for (i, fi) in fits.iter().enumerate() {
            let mut sup = f64::NEG_INFINITY;
            for fj in &fits[i..] {
                let mut d = 0.0;
                for (p, q) in fi.train_pred.iter().zip(&fj.train_pred) {
                    d += (p - q).powi(2);
                }
                sup = sup.max(d / n - tau * (fi.r + fj.r) / n.sqrt());
            }
            totals.push(sup + 2.0 * (1.0 + nu) * tau * fi.r / n.sqrt());
        }
        totals
    }

    #[test]
    fn criterion_matches_double_loop_and_floor() {
        for seed in 0..20 {
            let (data, kernel) = toy(30, seed, 2.0);
            let cfg = GlConfig::new(0.05 + 0.05 * seed as f64, 0.5, 0.1, 1.0 / 0.3);
            let grid = radius_grid(0.8, 0.4, 30).unwrap();
            let res = select_radius(&data, &kernel, &grid, &cfg).unwrap();
            let naive = brute_force(&res.fits, cfg.tau, cfg.nu);
            for (row, t) in res.criterion.iter().zip(&naive) {
                assert!((row.total - t).abs() <= 1e-10, "{} vs {}", row.total, t);
                assert!(row.total >= 2.0 * cfg.nu * cfg.tau * row.r / 30f64.sqrt() - 1e-12);
                assert!(row.argmax_s >= row.r);
            }
            let mut best = 0;
            for i in 1..naive.len() {
                if naive[i] < naive[best] {
                    best = i;
                }
            }
            assert_eq!(res.index, best);
        }
    }

    #[test]
    fn penalty_monotone_in_tau() {
        let (data, kernel) = toy(25, 9, 1.5);
        let grid = radius_grid(1.0, 0.5, 25).unwrap();
        let eigen = GramEigen::new(&kernel.gram(&data.x).unwrap(), &data.y).unwrap();
        let fits = fit_path(&eigen, &grid).unwrap();
        let low = gl_criterion(&fits, &GlConfig::new(0.1, 1.0, 0.1, 1.0)).unwrap();
        let high = gl_criterion(&fits, &GlConfig::new(0.2, 1.0, 0.1, 1.0)).unwrap();
        for (l, h) in low.iter().zip(&high) {
            assert!(h.bias_proxy <= l.bias_proxy);
            if l.r > 0.0 {
                assert!(h.variance_term > l.variance_term);
            }
        }
    }

    #[test]
    fn constant_shift_keeps_argmin() {
        let (data, kernel) = toy(25, 4, 1.0);
        let cfg = GlConfig::new(0.2, 1.0, 0.1, 1.0);
        let res = select_radius(&data, &kernel, &radius_grid(1.0, 0.5, 25).unwrap(), &cfg).unwrap();
        let mut shifted = res.criterion.clone();
        for row in &mut shifted {
            row.total += 17.25;
        }
        assert_eq!(argmin_smallest(&shifted), res.index);
    }

    #[test]
    fn ties_resolve_to_smallest_radius() {
        let rows: Vec<CriterionRow> = [3.0, 1.0, 1.0, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &t)| CriterionRow {
                r: i as f64,
                bias_proxy: 0.0,
                variance_term: t,
                total: t,
                argmax_s: i as f64,
            })
            .collect();
        assert_eq!(argmin_smallest(&rows), 1);
    }

    #[test]
    fn criterion_rejects_empty() {
        assert!(gl_criterion(&[], &GlConfig::new(1.0, 1.0, 1.0, 1.0)).is_err());
    }
}
