//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use ivanov_lepski::{ConstrainedFit, Dataset, Points};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` uniform points on `[0, 1]^d` with `Y = g(X) + N(0, σ²)`.
pub fn uniform_data(seed: u64, n: usize, d: usize, sigma: f64, g: impl Fn(&[f64]) -> f64) -> Dataset {
    let mut rng = rng(seed);
    let coords: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let x = Points::new(d, coords).unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let y = x.iter().map(|p| g(p) + noise.sample(&mut rng)).collect();
    Dataset::new(x, y).unwrap()
}

/// A random element of the width-`gamma0` space: a few sections with normal weights.
pub fn random_rkhs_target(rng: &mut ChaCha8Rng, d: usize, gamma0: f64) -> impl Fn(&[f64]) -> f64 {
    let m = 3;
    let centers: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let weights: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let scale = gamma0.powi(-(d as i32));
    move |x: &[f64]| {
        centers
            .iter()
            .zip(&weights)
            .map(|(z, a)| {
                let d2: f64 = z.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum();
                a * scale * (-d2 / (gamma0 * gamma0)).exp()
            })
            .sum()
    }
}

fn mean_sq(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
}

/// Fixed-kernel criterion by the double loop over all `(r, s)` pairs; returns
/// the totals and the smallest minimizing index.
pub fn brute_force_fixed(fits: &[ConstrainedFit], tau: f64, nu: f64) -> (Vec<f64>, usize) {
    let n = fits[0].train_pred.len() as f64;
    let mut totals = Vec::new();
    for fr in fits {
        let mut bias = f64::NEG_INFINITY;
        for fs in fits {
            if fs.r >= fr.r {
                let v = mean_sq(&fr.train_pred, &fs.train_pred) - tau * (fr.r + fs.r) / n.sqrt();
                bias = bias.max(v);
            }
        }
        totals.push(bias + 2.0 * (1.0 + nu) * tau * fr.r / n.sqrt());
    }
    let mut best = 0;
    for (i, t) in totals.iter().enumerate() {
        if *t < totals[best] {
            best = i;
        }
    }
    (totals, best)
}

/// Gaussian-family criterion by the quadruple loop over `(γ, r, η, s)`;
/// totals are width-major, the argmin prefers the largest width, then the
/// smallest radius.
pub fn brute_force_gauss(
    fits: &[Vec<ConstrainedFit>],
    widths: &[f64],
    tau: f64,
    nu: f64,
    d: usize,
) -> (Vec<f64>, (usize, usize)) {
    let n = fits[0][0].train_pred.len() as f64;
    let w = |g: f64| g.powf(-(d as f64) / 2.0);
    let mut totals = Vec::new();
    for (gi, &gamma) in widths.iter().enumerate() {
        for fr in &fits[gi] {
            let mut bias = f64::NEG_INFINITY;
            for (ei, &eta) in widths.iter().enumerate() {
                if eta > gamma {
                    continue;
                }
                for fs in &fits[ei] {
                    if fs.r >= fr.r {
                        let v = mean_sq(&fr.train_pred, &fs.train_pred)
                            - tau * (w(gamma) * fr.r + w(eta) * fs.r) / n.sqrt();
                        bias = bias.max(v);
                    }
                }
            }
            totals.push(bias + 2.0 * (1.0 + nu) * tau * w(gamma) * fr.r / n.sqrt());
        }
    }
    let nr = fits[0].len();
    let mut best: Option<(usize, usize)> = None;
    for gi in (0..widths.len()).rev() {
        for ri in 0..nr {
            let t = totals[gi * nr + ri];
            if best.is_none_or(|(bg, br)| t < totals[bg * nr + br]) {
                best = Some((gi, ri));
            }
        }
    }
    (totals, best.unwrap())
}

/// Random Gram matrix `K = G Gᵀ` with `G` of size `n × p`.
pub fn random_factor(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// `min (1/n) ‖G z - Y‖²` over `‖z‖ <= r` by accelerated projected gradient
/// with adaptive restart. Returns the optimal loss.
pub fn projected_gradient_loss(g: &DMatrix<f64>, y: &[f64], r: f64) -> f64 {
    let n = g.nrows() as f64;
    let y = DVector::from_column_slice(y);
    let gtg = g.transpose() * g;
    let gty = g.transpose() * &y;
    let lipschitz = 2.0 * gtg.symmetric_eigenvalues().max() / n;
    let step = 1.0 / lipschitz;
    let project = |z: DVector<f64>| {
        let norm = z.norm();
        if norm > r {
            z * (r / norm)
        } else {
            z
        }
    };
    let loss = |z: &DVector<f64>| (g * z - &y).norm_squared() / n;
    let p = g.ncols();
    let mut z = DVector::zeros(p);
    let mut v = z.clone();
    let mut theta = 1.0_f64;
    let mut prev = loss(&z);
    for _ in 0..2_000_000 {
        let grad = (&gtg * &v - &gty) * (2.0 / n);
        let z_next = project(&v - grad * step);
        let cur = loss(&z_next);
        if cur > prev {
            // Restart the momentum.
            theta = 1.0;
            v = z.clone();
            continue;
        }
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        v = &z_next + (&z_next - &z) * ((theta - 1.0) / theta_next);
        let moved = (&z_next - &z).norm();
        z = z_next;
        theta = theta_next;
        prev = cur;
        if moved <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    prev
}
