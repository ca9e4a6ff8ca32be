//! Kernels, Gram matrices and the geometry of the scaled Gaussian family.
//!
//! The Gaussian family used throughout is
//! `k_γ(x1, x2) = γ^{-d} exp(-‖x1 - x2‖² / γ²)`, scaled so that the unit
//! balls of the associated spaces are nested: a wider kernel has the smaller
//! ball. The unscaled exponentials `f_γ` only appear through the closed-form
//! sup-metric and covering bounds exposed here.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry of user-supplied Gram matrices.
pub const SYMMETRY_RTOL: f64 = 1e-12;
/// Smallest admissible eigenvalue relative to the largest one.
pub const PSD_RTOL: f64 = 1e-10;

/// A set of `n` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("points must have dimension >= 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::input("non-finite coordinate"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::input("ragged point rows"));
        }
        Self::new(dim, rows.concat())
    }

    /// One-dimensional points.
    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone)]
pub enum KernelKind {
    Gaussian { width: f64, dim: usize },
    /// A fixed Gram matrix on the training points. `diag_sup` has to be
    /// supplied because `sup_x k(x, x)` cannot be read off a finite matrix.
    Precomputed { gram: DMatrix<f64> },
}

#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    diag_sup: f64,
}

impl Kernel {
    pub fn gaussian(width: f64, dim: usize) -> Result<Self> {
        check_width(width)?;
        if dim == 0 {
            return Err(Error::input("kernel dimension must be >= 1"));
        }
        Ok(Self {
            kind: KernelKind::Gaussian { width, dim },
            diag_sup: gaussian_scale(width, dim),
        })
    }

    pub fn precomputed(gram: DMatrix<f64>, diag_sup: f64) -> Result<Self> {
        if !(diag_sup > 0.0 && diag_sup.is_finite()) {
            return Err(Error::input("diag_sup must be positive and finite"));
        }
        check_symmetric(&gram)?;
        let max_diag = gram.diagonal().iter().cloned().fold(0.0_f64, f64::max);
        if max_diag > diag_sup * (1.0 + 1e-12) {
            return Err(Error::input(format!(
                "gram diagonal entry {max_diag} exceeds diag_sup {diag_sup}"
            )));
        }
        let eig = gram.clone().symmetric_eigen();
        let top = eig.eigenvalues.max();
        let bottom = eig.eigenvalues.min();
        if bottom < -PSD_RTOL * top.max(0.0) {
            return Err(Error::numerical(format!(
                "gram matrix is not positive semi-definite: eigenvalue {bottom:e} (largest {top:e})"
            )));
        }
        Ok(Self {
            kind: KernelKind::Precomputed { gram },
            diag_sup,
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// `‖k‖_diag = sup_x k(x, x)`.
    pub fn diag_sup(&self) -> f64 {
        self.diag_sup
    }

    pub fn width(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Gaussian { width, .. } => Some(width),
            KernelKind::Precomputed { .. } => None,
        }
    }

    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        match self.kind {
            KernelKind::Gaussian { width, dim } => gaussian_eval(width, dim, x1, x2),
            KernelKind::Precomputed { .. } => Err(Error::input(
                "a precomputed kernel cannot be evaluated at arbitrary points",
            )),
        }
    }

    /// `K_ij = k(X_i, X_j)`.
    pub fn gram(&self, x: &Points) -> Result<DMatrix<f64>> {
        if x.is_empty() {
            return Err(Error::input("gram matrix needs at least one point"));
        }
        match &self.kind {
            KernelKind::Gaussian { width, dim } => {
                check_dim(*dim, x)?;
                let n = x.len();
                let scale = gaussian_scale(*width, *dim);
                let inv_w2 = 1.0 / (width * width);
                let mut k = DMatrix::zeros(n, n);
                for i in 0..n {
                    k[(i, i)] = scale;
                    for j in 0..i {
                        let v = scale * (-sq_dist(x.point(i), x.point(j)) * inv_w2).exp();
                        k[(i, j)] = v;
                        k[(j, i)] = v;
                    }
                }
                Ok(k)
            }
            KernelKind::Precomputed { gram } => {
                if gram.nrows() != x.len() {
                    return Err(Error::input(format!(
                        "precomputed gram is {}x{} but {} points were given",
                        gram.nrows(),
                        gram.ncols(),
                        x.len()
                    )));
                }
                Ok(gram.clone())
            }
        }
    }

    /// Rows index `new`, columns index `train`.
    pub fn cross_gram(&self, train: &Points, new: &Points) -> Result<DMatrix<f64>> {
        match &self.kind {
            KernelKind::Gaussian { width, dim } => {
                check_dim(*dim, train)?;
                check_dim(*dim, new)?;
                let scale = gaussian_scale(*width, *dim);
                let inv_w2 = 1.0 / (width * width);
                Ok(DMatrix::from_fn(new.len(), train.len(), |i, j| {
                    scale * (-sq_dist(new.point(i), train.point(j)) * inv_w2).exp()
                }))
            }
            KernelKind::Precomputed { .. } => Err(Error::input(
                "a precomputed kernel cannot be evaluated at new points",
            )),
        }
    }
}

fn check_width(width: f64) -> Result<()> {
    if width > 0.0 && width.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("kernel width must be positive, got {width}")))
    }
}

fn check_dim(dim: usize, x: &Points) -> Result<()> {
    if x.dim() != dim {
        return Err(Error::input(format!(
            "points have dimension {} but the kernel expects {dim}",
            x.dim()
        )));
    }
    Ok(())
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// `γ^{-d}`, the diagonal value of the scaled Gaussian kernel.
pub fn gaussian_scale(width: f64, dim: usize) -> f64 {
    width.powi(-(dim as i32))
}

pub fn gaussian_eval(width: f64, dim: usize, x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_width(width)?;
    if x1.len() != dim || x2.len() != dim {
        return Err(Error::input(format!(
            "expected points of dimension {dim}, got {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    Ok(gaussian_scale(width, dim) * (-sq_dist(x1, x2) / (width * width)).exp())
}

pub(crate) fn check_symmetric(k: &DMatrix<f64>) -> Result<()> {
    if k.nrows() != k.ncols() {
        return Err(Error::input(format!(
            "matrix is {}x{}, expected square",
            k.nrows(),
            k.ncols()
        )));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix has non-finite entries"));
    }
    let scale = k.amax();
    let n = k.nrows();
    for i in 0..n {
        for j in 0..i {
            let gap = (k[(i, j)] - k[(j, i)]).abs();
            if gap > SYMMETRY_RTOL * scale {
                return Err(Error::numerical(format!(
                    "matrix is not symmetric: |K[{i},{j}] - K[{j},{i}]| = {gap:e}"
                )));
            }
        }
    }
    Ok(())
}

/// Sup-distance bound between the unscaled exponentials `f_γ` and `f_η`:
/// `sqrt|γ² - η²| / max(γ, η)`.
pub fn family_sup_distance_bound(gamma: f64, eta: f64) -> Result<f64> {
    check_width(gamma)?;
    check_width(eta)?;
    Ok((gamma * gamma - eta * eta).abs().sqrt() / gamma.max(eta))
}

fn check_interval(u: f64, v: f64) -> Result<()> {
    if u > 0.0 && u.is_finite() && v.is_finite() && v >= u {
        Ok(())
    } else {
        Err(Error::input(format!("need 0 < u <= v, got u={u}, v={v}")))
    }
}

/// Upper bound on the sup-norm covering number of the unscaled family over
/// widths in `[u, v]`.
pub fn covering_number_bound(a: f64, u: f64, v: f64) -> Result<f64> {
    check_interval(u, v)?;
    if a.is_nan() || a <= 0.0 {
        return Err(Error::input(format!("cover radius must be positive, got {a}")));
    }
    if a >= 1.0 {
        Ok(1.0)
    } else {
        Ok((v / u).ln() / (a * a) + 2.0)
    }
}

/// Bound on `∫_0^{1/2} log N(a) da`.
pub fn entropy_integral_bound(u: f64, v: f64) -> Result<f64> {
    check_interval(u, v)?;
    Ok((2.0 + 4.0 * (v / u).ln()).ln() / 2.0 + 1.0)
}

/// Bound on the chaining constant `J` for widths in `[u, v]`.
pub fn j_constant_bound(u: f64, v: f64) -> Result<f64> {
    check_interval(u, v)?;
    Ok((81.0 * ((8.0 * (v / u).ln() + 4.0).ln() + 2.0) + 1.0).sqrt())
}

/// Geometric width grid `{u c^i : 0 <= i < L} ∪ {v}`, `L = ⌈log(v/u) / log c⌉`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthGrid {
    pub u: f64,
    pub v: f64,
    pub c: f64,
    values: Vec<f64>,
}

impl WidthGrid {
    pub fn geometric(u: f64, v: f64, c: f64) -> Result<Self> {
        check_interval(u, v)?;
        if !(c > 1.0 && c.is_finite()) {
            return Err(Error::input(format!("grid ratio c must exceed 1, got {c}")));
        }
        let steps = ceil_tolerant((v / u).ln() / c.ln());
        let mut values: Vec<f64> = (0..steps).map(|i| u * c.powi(i as i32)).collect();
        match values.last() {
            Some(&last) if (last - v).abs() <= 1e-12 * v => {}
            _ => values.push(v),
        }
        Ok(Self { u, v, c, values })
    }

    /// An explicit list of widths; sorted and deduplicated.
    pub fn explicit(widths: &[f64]) -> Result<Self> {
        let mut values = widths.to_vec();
        for &w in &values {
            check_width(w)?;
        }
        if values.is_empty() {
            return Err(Error::input("width grid is empty"));
        }
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let (u, v) = (values[0], *values.last().unwrap());
        Ok(Self { u, v, c: f64::NAN, values })
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

/// Ceiling that snaps values within 1e-12 of an integer onto it.
pub(crate) fn ceil_tolerant(x: f64) -> usize {
    let rounded = x.round();
    let c = if (x - rounded).abs() <= 1e-12 * rounded.abs().max(1.0) {
        rounded
    } else {
        x.ceil()
    };
    c.max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_eval_examples() {
        assert_eq!(gaussian_eval(1.0, 2, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            gaussian_eval(1.0, 1, &[0.0], &[1.0]).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert_eq!(gaussian_eval(2.0, 1, &[4.0], &[4.0]).unwrap(), 0.5);
        assert!(matches!(
            gaussian_eval(1.0, 2, &[0.0], &[0.0, 1.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn gram_examples() {
        let k = Kernel::gaussian(1.0, 1).unwrap();
        let g = k.gram(&Points::from_scalars(&[0.0]).unwrap()).unwrap();
        assert_eq!(g, DMatrix::from_element(1, 1, 1.0));
        let g = k.gram(&Points::from_scalars(&[0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(g, DMatrix::from_element(2, 2, 1.0));
        let g = k.gram(&Points::from_scalars(&[0.0, 1.0]).unwrap()).unwrap();
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_diag_sup_is_exact() {
        for &(w, d) in &[(0.5, 1usize), (2.0, 3), (1.7, 2)] {
            let k = Kernel::gaussian(w, d).unwrap();
            assert_eq!(k.diag_sup(), w.powi(-(d as i32)));
        }
    }

    #[test]
    fn precomputed_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(Kernel::precomputed(bad, 1.0).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Kernel::precomputed(indefinite, 1.0),
            Err(Error::Numerical(_))
        ));
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let k = Kernel::precomputed(ok.clone(), 1.0).unwrap();
        assert_eq!(k.gram(&Points::from_scalars(&[0.0, 0.0]).unwrap()).unwrap(), ok);
        assert!(k.eval(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn sup_distance_examples() {
        assert_eq!(family_sup_distance_bound(3.0, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            family_sup_distance_bound(2f64.sqrt(), 1.0).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            family_sup_distance_bound(2.0, 1.0).unwrap(),
            3f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
        assert!(family_sup_distance_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn sup_distance_dominates_sampled_differences() {
        let grid = WidthGrid::geometric(0.25, 4.0, 1.5).unwrap();
        // |f_γ - f_η| depends on the points only through t = ‖x1 - x2‖.
        let ts: Vec<f64> = (0..4000).map(|i| i as f64 * 0.005).collect();
        for &g in grid.values() {
            for &h in grid.values() {
                let bound = family_sup_distance_bound(g, h).unwrap();
                let sup = ts
                    .iter()
                    .map(|t| ((-t * t / (g * g)).exp() - (-t * t / (h * h)).exp()).abs())
                    .fold(0.0, f64::max);
                assert!(sup <= bound + 1e-9, "γ={g} η={h}: {sup} > {bound}");
            }
        }
    }

    #[test]
    fn covering_examples() {
        assert_eq!(covering_number_bound(1.0, 1.0, 10.0).unwrap(), 1.0);
        assert_abs_diff_eq!(covering_number_bound(0.5, 1.0, 1.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            covering_number_bound(0.5, 1.0, std::f64::consts::E).unwrap(),
            6.0,
            epsilon = 1e-12
        );
        assert!(covering_number_bound(0.5, 2.0, 1.0).is_err());
        assert!(covering_number_bound(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn covering_is_non_increasing_in_radius() {
        let mut prev = f64::INFINITY;
        for i in 1..1000 {
            let a = i as f64 / 1000.0;
            let n = covering_number_bound(a, 0.5, 3.0).unwrap();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn entropy_and_j_examples() {
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(entropy_integral_bound(2.0, 2.0).unwrap(), 2f64.ln() / 2.0 + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy_integral_bound(1.0, e).unwrap(), 1.895879734614027, epsilon = 1e-9);
        assert_abs_diff_eq!(entropy_integral_bound(1.0, e * e).unwrap(), 2.151292546497023, epsilon = 1e-9);
        assert_abs_diff_eq!(j_constant_bound(1.0, 1.0).unwrap(), 16.591860753113593, epsilon = 1e-9);
        assert_abs_diff_eq!(j_constant_bound(1.0, e).unwrap(), 19.086053511211478, epsilon = 1e-9);
        assert_abs_diff_eq!(j_constant_bound(1.0, e.powi(4)).unwrap(), 21.29002193552052, epsilon = 1e-9);
        assert!(j_constant_bound(2.0, 1.0).is_err());
    }

    #[test]
    fn j_bound_monotone_and_at_least_one() {
        let mut prev = 0.0;
        for i in 0..200 {
            let v = 1.0 + i as f64 * 0.37;
            let j = j_constant_bound(1.0, v).unwrap();
            assert!(j >= prev && j >= 1.0);
            prev = j;
        }
    }

    #[test]
    fn width_grid_examples() {
        assert_eq!(WidthGrid::geometric(1.0, 4.0, 2.0).unwrap().values(), &[1.0, 2.0, 4.0]);
        assert_eq!(WidthGrid::geometric(3.0, 3.0, 2.0).unwrap().values(), &[3.0]);
        assert_eq!(WidthGrid::geometric(1.0, 3.0, 2.0).unwrap().values(), &[1.0, 2.0, 3.0]);
        assert!(WidthGrid::geometric(1.0, 3.0, 1.0).is_err());
        assert!(WidthGrid::geometric(3.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn width_grid_is_strictly_ascending_within_bounds() {
        for &(u, v, c) in &[(0.1, 7.3, 1.3), (1.0, 1000.0, 10.0), (0.5, 2.0, 2.0), (0.2, 0.9, 5.0)] {
            let g = WidthGrid::geometric(u, v, c).unwrap();
            assert!(g.values().windows(2).all(|w| w[0] < w[1]));
            assert!(g.values().iter().all(|&w| w >= u && w <= v));
            assert_eq!(*g.values().last().unwrap(), v);
        }
    }

    #[test]
    fn gaussian_grams_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=50);
            let d = rng.random_range(1..=3);
            let w = rng.random_range(0.2..3.0);
            let coords: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = Points::new(d, coords).unwrap();
            let k = Kernel::gaussian(w, d).unwrap().gram(&x).unwrap();
            let eig = k.symmetric_eigen().eigenvalues;
            assert!(eig.min() >= -1e-10 * eig.max());
        }
    }
}
