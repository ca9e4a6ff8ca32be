mod common;

use common::*;
use ivanov_lepski::selection::fixed::{tau_min_fixed, GlConfig};
use ivanov_lepski::selection::gauss::GaussGlConfig;
use ivanov_lepski::{fit_constrained, radius_grid, select_radius, select_width_radius, Kernel, RadiusGrid, WidthGrid};
use rand::Rng;

#[test]
fn seed_42_selection_matches_double_loop() {
    let data = uniform_data(42, 100, 1, 0.1, |x| 2.0 * (-x[0] * x[0]).exp());
    let kernel = Kernel::gaussian(1.0, 1).unwrap();
    let grid = radius_grid(0.5, 0.5, 100).unwrap();
    let tau = tau_min_fixed(1.0, 0.1).unwrap();
    let cfg = GlConfig::new(tau, 1.0, 0.1, 1.0);
    let sel = select_radius(&data, &kernel, &grid, &cfg).unwrap();
    let (totals, best) = brute_force_fixed(&sel.fits, tau, 1.0);
    assert_eq!(sel.index, best);
    assert_eq!(sel.r_hat, grid.values()[best]);
    for (row, t) in sel.criterion.iter().zip(&totals) {
        assert!((row.total - t).abs() <= 1e-10);
    }
}

#[test]
fn seed_7_family_selection_matches_quadruple_loop() {
    let mut rng = rng(7);
    let g = random_rkhs_target(&mut rng, 1, 1.0);
    let data = uniform_data(7, 100, 1, 0.1, g);
    let widths = WidthGrid::explicit(&[0.5, 1.0, 2.0]).unwrap();
    let radii = radius_grid(0.5, 0.5, 100).unwrap();
    let cfg = GaussGlConfig::new(5.0, 1.0, 0.1, 1, widths.clone(), radii).unwrap();
    let sel = select_width_radius(&data, &cfg).unwrap();
    let (totals, (gi, ri)) = brute_force_gauss(&sel.fits, widths.values(), 5.0, 1.0, 1);
    assert_eq!((sel.width_index, sel.radius_index), (gi, ri));
    for (row, t) in sel.criterion.iter().zip(&totals) {
        assert!((row.total - t).abs() <= 1e-10);
    }
}

#[test]
fn brute_force_equivalence_over_seeds() {
    for seed in 0..50u64 {
        let mut rng = rng(1000 + seed);
        let n = rng.random_range(5..40);
        let d = rng.random_range(1..3);
        let sigma = rng.random_range(0.05..1.0);
        let g = random_rkhs_target(&mut rng, d, 1.0);
        let data = uniform_data(seed, n, d, sigma, g);
        let tau = rng.random_range(0.01..3.0);
        let nu = rng.random_range(0.1..2.0);
        let radii: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(0.0..4.0)).collect();
        let grid = RadiusGrid::explicit(&radii).unwrap();

        let kernel = Kernel::gaussian(rng.random_range(0.3..2.0), d).unwrap();
        let cfg = GlConfig::new(tau, nu, sigma, kernel.diag_sup());
        let sel = select_radius(&data, &kernel, &grid, &cfg).unwrap();
        let (_, best) = brute_force_fixed(&sel.fits, tau, nu);
        assert_eq!(sel.index, best, "seed {seed}");

        let widths = WidthGrid::explicit(&[0.4, 0.8, 1.6]).unwrap();
        let cfg = GaussGlConfig::new(tau, nu, sigma, d, widths.clone(), grid).unwrap();
        let sel = select_width_radius(&data, &cfg).unwrap();
        let (_, best) = brute_force_gauss(&sel.fits, widths.values(), tau, nu, d);
        assert_eq!((sel.width_index, sel.radius_index), best, "seed {seed}");
    }
}

#[test]
fn projected_gradient_agrees_on_small_instances() {
    let mut rng = rng(2024);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let p = rng.random_range(1..n);
        let g = random_factor(&mut rng, n, p);
        let k = &g * g.transpose();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rho = fit_constrained(&k, &y, 1e6).unwrap().h_norm;
        let r = rng.random_range(0.05..1.5) * rho;
        let ours = fit_constrained(&k, &y, r).unwrap().training_loss(&y).unwrap();
        let oracle = projected_gradient_loss(&g, &y, r);
        assert!((ours - oracle).abs() <= 1e-6 * oracle.max(1e-12), "{ours} vs {oracle}");
    }
}
