//! Least squares over a ball of the reproducing kernel Hilbert space.
//!
//! With `K = A D Aᵀ` and `c = Aᵀ Y`, the radius-`r` estimator has
//! coefficients `a = A w` where `w_i = c_i / (D_i + n μ(r))` on the numerical
//! range of `K` and `w_i = 0` elsewhere. The multiplier `μ(r)` is zero once
//! `r` reaches the interpolation radius `ρ`, and otherwise the unique root of
//! the decreasing function
//!
//! ```text
//! φ(μ) = Σ_{i ≤ m} D_i c_i² / (D_i + n μ)²  =  r².
//! ```
//!
//! One decomposition serves every radius, so fits along a grid are cheap.

use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{check_symmetric, Kernel, Points, PSD_RTOL};

/// Relative factor (times `n · max D`) below which eigenvalues are treated as zero.
pub const RANK_RTOL: f64 = 1e-9;

const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 200;
const PHI_RTOL: f64 = 1e-10;
const BRACKET_RTOL: f64 = 1e-14;

/// The clipping level `C` of the projection `V : ℝ → [-C, C]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBound(f64);

impl ClipBound {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c.is_finite() {
            Ok(Self(c))
        } else {
            Err(Error::input(format!("clip bound must be positive, got {c}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn clip(value: f64, c: ClipBound) -> f64 {
    value.clamp(-c.0, c.0)
}

/// Eigensystem of a Gram matrix paired with a response vector.
#[derive(Debug, Clone)]
pub struct GramEigen {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
    rank: usize,
    threshold: f64,
    proj: Vec<f64>,
    rho: f64,
    gram_id: u64,
}

pub fn eigen_gram(k: &DMatrix<f64>, y: &[f64]) -> Result<GramEigen> {
    GramEigen::new(k, y)
}

impl GramEigen {
    pub fn new(k: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let n = k.nrows();
        if n == 0 {
            return Err(Error::input("empty gram matrix"));
        }
        if y.len() != n {
            return Err(Error::input(format!(
                "gram matrix is {n}x{n} but there are {} responses",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite response"));
        }
        check_symmetric(k)?;

        let eig = k.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

        let top = eig.eigenvalues[order[0]];
        let bottom = eig.eigenvalues[order[n - 1]];
        if bottom < -PSD_RTOL * top.max(0.0) {
            return Err(Error::numerical(format!(
                "gram matrix is not positive semi-definite: eigenvalue {bottom:e} (largest {top:e})"
            )));
        }

        let mut vectors = DMatrix::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
            values.push(eig.eigenvalues[src].max(0.0));
        }

        let threshold = values[0] * n as f64 * RANK_RTOL;
        let rank = values.iter().take_while(|&&d| d > threshold).count();
        let proj: Vec<f64> = (vectors.transpose() * DVector::from_column_slice(y))
            .iter()
            .copied()
            .collect();
        let rho = (0..rank)
            .map(|i| proj[i] * proj[i] / values[i])
            .sum::<f64>()
            .sqrt();

        Ok(Self {
            vectors,
            values,
            rank,
            threshold,
            proj,
            rho,
            gram_id: fingerprint(k),
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Orthogonal eigenvector matrix `A`, columns ordered like [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Non-increasing, non-negative.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_threshold(&self) -> f64 {
        self.threshold
    }

    /// `c = Aᵀ Y`.
    pub fn projections(&self) -> &[f64] {
        &self.proj
    }

    /// Interpolation radius: the fit is constant in `r` for `r >= ρ`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn gram_id(&self) -> u64 {
        self.gram_id
    }

    /// Squared norm of the fit with multiplier `mu`.
    pub fn phi(&self, mu: f64) -> f64 {
        let shift = self.n() as f64 * mu;
        (0..self.rank)
            .map(|i| {
                let d = self.values[i];
                let denom = d + shift;
                d * self.proj[i] * self.proj[i] / (denom * denom)
            })
            .sum()
    }

    /// Lagrange multiplier `μ(r)` making the ball constraint active, or 0 when
    /// the interpolant already lies in the ball.
    pub fn mu(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::input(format!("radius must be positive and finite, got {r}")));
        }
        if r >= self.rho {
            return Ok(0.0);
        }
        let target = r * r;

        let mut hi = 1.0_f64;
        let mut doublings = 0;
        while self.phi(hi) >= target {
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::numerical(format!(
                    "could not bracket the multiplier for r = {r:e}"
                )));
            }
        }

        let mut lo = 0.0_f64;
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let value = self.phi(mid);
            if (value - target).abs() <= PHI_RTOL * target {
                return Ok(mid);
            }
            if value > target {
                lo = mid;
            } else {
                hi = mid;
            }
            // Width is measured against μ itself: φ is steep near 0 when the
            // spectrum has small eigenvalues, so an absolute floor is too coarse.
            if hi - lo <= BRACKET_RTOL * mid {
                return Ok(hi);
            }
        }
        Err(Error::numerical(format!(
            "multiplier bisection did not converge for r = {r:e}"
        )))
    }

    pub fn fit(&self, r: f64) -> Result<ConstrainedFit> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::input(format!("radius must be non-negative and finite, got {r}")));
        }
        let n = self.n();
        if r == 0.0 {
            return Ok(ConstrainedFit {
                r,
                mu: 0.0,
                coef: vec![0.0; n],
                eigen_coef: vec![0.0; n],
                train_pred: vec![0.0; n],
                h_norm: 0.0,
                gram_id: self.gram_id,
            });
        }
        let mu = self.mu(r)?;
        let shift = n as f64 * mu;
        let mut w = DVector::zeros(n);
        let mut dw = DVector::zeros(n);
        for i in 0..self.rank {
            w[i] = self.proj[i] / (self.values[i] + shift);
            dw[i] = self.values[i] * w[i];
        }
        let coef = &self.vectors * &w;
        // K a = A D w, evaluated in the eigenbasis: D_i w_i never exceeds |c_i|
        // even when w_i itself is huge.
        let train_pred = &self.vectors * &dw;
        let h_norm = w.iter().zip(&self.values).map(|(wi, d)| d * wi * wi).sum::<f64>().sqrt();
        Ok(ConstrainedFit {
            r,
            mu,
            coef: coef.iter().copied().collect(),
            eigen_coef: w.iter().copied().collect(),
            train_pred: train_pred.iter().copied().collect(),
            h_norm,
            gram_id: self.gram_id,
        })
    }

    /// `‖ĥ_a - ĥ_b‖²_H` from the eigen coordinates of both fits.
    pub fn rkhs_sq_distance(&self, a: &ConstrainedFit, b: &ConstrainedFit) -> Result<f64> {
        if a.gram_id != self.gram_id || b.gram_id != self.gram_id {
            return Err(Error::input("fits were not produced from this gram matrix"));
        }
        Ok(self
            .values
            .iter()
            .zip(a.eigen_coef.iter().zip(&b.eigen_coef))
            .map(|(d, (wa, wb))| d * (wa - wb) * (wa - wb))
            .sum())
    }
}

fn fingerprint(k: &DMatrix<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    k.nrows().hash(&mut h);
    for v in k.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// The radius-`r` estimator `ĥ_r = Σ a_i k(X_i, ·)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedFit {
    pub r: f64,
    pub mu: f64,
    /// Coefficients `a` on the kernel sections at the training points.
    pub coef: Vec<f64>,
    /// `w = Aᵀ a`; zero outside the numerical range.
    #[serde(skip)]
    pub eigen_coef: Vec<f64>,
    /// `K a`.
    pub train_pred: Vec<f64>,
    pub h_norm: f64,
    #[serde(skip)]
    pub gram_id: u64,
}

impl ConstrainedFit {
    /// `(1/n) Σ (ĥ(X_i) - Y_i)²`.
    pub fn training_loss(&self, y: &[f64]) -> Result<f64> {
        empirical_sq_distance(&self.train_pred, y)
    }

    /// Predictions from a cross-Gram matrix with rows at the new points.
    pub fn predict_with(&self, cross: &DMatrix<f64>, c: Option<ClipBound>) -> Result<Vec<f64>> {
        if cross.ncols() != self.coef.len() {
            return Err(Error::input(format!(
                "cross gram has {} columns but the fit has {} coefficients",
                cross.ncols(),
                self.coef.len()
            )));
        }
        let raw = cross * DVector::from_column_slice(&self.coef);
        Ok(raw
            .iter()
            .map(|&v| match c {
                Some(c) => clip(v, c),
                None => v,
            })
            .collect())
    }
}

pub fn mu_of_r(ge: &GramEigen, r: f64) -> Result<f64> {
    ge.mu(r)
}

pub fn fit_constrained(k: &DMatrix<f64>, y: &[f64], r: f64) -> Result<ConstrainedFit> {
    GramEigen::new(k, y)?.fit(r)
}

/// `Σ_i a_i k(X_i, x)` at each new point, clipped into `[-C, C]` when `c` is given.
pub fn predict(
    fit: &ConstrainedFit,
    kernel: &Kernel,
    x_train: &Points,
    x_new: &Points,
    c: Option<ClipBound>,
) -> Result<Vec<f64>> {
    if x_train.len() != fit.coef.len() {
        return Err(Error::input(format!(
            "fit has {} coefficients but {} training points were given",
            fit.coef.len(),
            x_train.len()
        )));
    }
    fit.predict_with(&kernel.cross_gram(x_train, x_new)?, c)
}

/// `(1/n) Σ (p_i - q_i)²`, the squared empirical `L²(P_n)` distance.
pub fn empirical_sq_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::input(format!(
            "vectors have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::input("empirical distance of empty vectors"));
    }
    Ok(sq_distance_unchecked(p, q))
}

pub(crate) fn sq_distance_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

/// `(a - b)ᵀ K (a - b)`. Both fits must come from `k`.
pub fn rkhs_sq_distance(a: &ConstrainedFit, b: &ConstrainedFit, k: &DMatrix<f64>) -> Result<f64> {
    let id = fingerprint(k);
    if a.gram_id != id || b.gram_id != id {
        return Err(Error::input("fits do not share this gram matrix"));
    }
    let diff = DVector::from_column_slice(&a.coef) - DVector::from_column_slice(&b.coef);
    Ok(diff.dot(&(k * &diff)))
}
