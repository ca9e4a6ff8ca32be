//! Seeded simulation harness.
//!
//! Every replicate draws its data from a ChaCha stream keyed by
//! `(master_seed, n, replicate)`, so results do not depend on the order or
//! the thread on which replicates run. A replicate fits the whole grid,
//! runs the adaptive selection, checks the deviation and majorant events
//! against their closed-form bounds and, optionally, estimates `L²(P)`
//! errors on fresh holdout points.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{clip, sq_distance_unchecked, ClipBound, ConstrainedFit, GramEigen};
use crate::kernels::{gaussian_scale, j_constant_bound, sq_dist, Kernel, Points, WidthGrid};
use crate::selection::fixed::{select_from_eigen, tau_min_fixed, GlConfig, RadiusGrid};
use crate::selection::gauss::{select_from_eigens, tau_min_gauss, GaussGlConfig};
use crate::theory;

/// Median errors at or below this level make a log-log slope meaningless.
pub const DEGENERATE_ERROR_FLOOR: f64 = 1e-6;
/// Standard normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959963984540054;
/// Absolute slack on event comparisons so floating-point residue is not
/// counted as a violation of a zero bound.
pub const EVENT_ATOL: f64 = 1e-12;
/// Ratio threshold for the oracle-gap check.
pub const ORACLE_RATIO_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Uniform on `[0, 1]^d`.
    UniformCube,
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Target {
    /// `g = Σ_j α_j k_{γ0}(z_j, ·)` with the scaled Gaussian kernel.
    RkhsElement {
        width: f64,
        centers: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    /// `g(x) = max(0, 1 - slope ‖x - (½, …, ½)‖)`.
    Hat { slope: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Noise {
    Gaussian { sigma: f64 },
    /// `±σ` with equal probability.
    Rademacher { sigma: f64 },
}

impl Noise {
    pub fn sigma(&self) -> f64 {
        match *self {
            Noise::Gaussian { sigma } | Noise::Rademacher { sigma } => sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub d: usize,
    pub design: Design,
    pub target: Target,
    pub noise: Noise,
    /// Clip level `C`; defaults to the recorded sup-norm bound of the target.
    #[serde(default)]
    pub clip: Option<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    pub holdout_size: usize,
}

impl Default for ScenarioConfig {
    /// `n = 200` uniform points on `[0, 1]`, `g = 2 k_1(0, ·)` (so `‖g‖_H = 2`),
    /// Gaussian noise with `σ = 0.1`.
    fn default() -> Self {
        Self {
            n: 200,
            d: 1,
            design: Design::UniformCube,
            target: Target::RkhsElement {
                width: 1.0,
                centers: vec![vec![0.0]],
                weights: vec![2.0],
            },
            noise: Noise::Gaussian { sigma: 0.1 },
            clip: None,
            replicates: 200,
            master_seed: 1,
            holdout_size: 10_000,
        }
    }
}

/// A validated scenario together with the target's recorded norms.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// `‖g‖_H = (αᵀ K_z α)^{1/2}` for RKHS-element targets.
    pub h_norm: Option<f64>,
    /// Upper bound on `‖g‖_∞`.
    pub sup_bound: f64,
    pub clip: ClipBound,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        if config.n == 0 || config.d == 0 {
            return Err(Error::input("scenario needs n >= 1 and d >= 1"));
        }
        if config.replicates == 0 {
            return Err(Error::input("scenario needs at least one replicate"));
        }
        let sigma = config.noise.sigma();
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::input(format!("noise scale must be >= 0, got {sigma}")));
        }
        let (h_norm, sup_bound) = match &config.target {
            Target::RkhsElement { width, centers, weights } => {
                if centers.len() != weights.len() || centers.is_empty() {
                    return Err(Error::input("target needs one weight per center"));
                }
                if centers.iter().any(|c| c.len() != config.d) {
                    return Err(Error::input("target centers must have dimension d"));
                }
                let kernel = Kernel::gaussian(*width, config.d)?;
                let z = Points::from_rows(centers)?;
                let kz = kernel.gram(&z)?;
                let alpha = DVector::from_column_slice(weights);
                let norm = alpha.dot(&(&kz * &alpha)).max(0.0).sqrt();
                let abs_sum: f64 = weights.iter().map(|w| w.abs()).sum();
                let scale = kernel.diag_sup();
                (Some(norm), (abs_sum * scale).min(scale.sqrt() * norm))
            }
            Target::Hat { slope } => {
                if !(*slope > 0.0 && slope.is_finite()) {
                    return Err(Error::input("hat slope must be positive"));
                }
                (None, 1.0)
            }
        };
        let clip = match config.clip {
            Some(c) => {
                if c < sup_bound {
                    log::warn!("clip level {c} is below the target's sup-norm bound {sup_bound}");
                }
                ClipBound::new(c)?
            }
            None if sup_bound > 0.0 => ClipBound::new(sup_bound)?,
            None => ClipBound::new(1.0)?,
        };
        Ok(Self { config, h_norm, sup_bound, clip })
    }

    pub fn sigma(&self) -> f64 {
        self.config.noise.sigma()
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.n = n;
        Scenario::new(cfg)
    }

    pub fn target_value(&self, x: &[f64]) -> f64 {
        match &self.config.target {
            Target::RkhsElement { width, centers, weights } => {
                let scale = gaussian_scale(*width, self.config.d);
                centers
                    .iter()
                    .zip(weights)
                    .map(|(z, a)| a * scale * (-sq_dist(x, z) / (width * width)).exp())
                    .sum()
            }
            Target::Hat { slope } => {
                let dist = x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>().sqrt();
                (1.0 - slope * dist).max(0.0)
            }
        }
    }

    fn target_width(&self) -> Option<f64> {
        match self.config.target {
            Target::RkhsElement { width, .. } => Some(width),
            Target::Hat { .. } => None,
        }
    }

    /// `‖g‖` in the space of the width-`gamma` kernel, when known to be finite.
    /// Balls grow as the width shrinks, so the target's own norm bounds it
    /// for every `gamma <= γ0`.
    pub fn norm_bound_in(&self, gamma: f64) -> Option<f64> {
        match (self.h_norm, self.target_width()) {
            (Some(norm), Some(w)) if gamma <= w * (1.0 + 1e-12) => Some(norm),
            _ => None,
        }
    }

    /// Upper bound on `I_∞(g, γ, r)`. Uses the scaled target when its norm
    /// is known and the zero function otherwise.
    pub fn i_infty_upper(&self, gamma: f64, r: f64) -> Result<f64> {
        Ok(match self.norm_bound_in(gamma) {
            Some(0.0) => 0.0,
            Some(norm) => theory::scaled_i_infty_upper(norm, self.sup_bound, r)?,
            None => self.sup_bound * self.sup_bound,
        })
    }

    /// Comparator `h_r` in the radius-`r` ball, evaluated at `x`, together
    /// with a bound on `‖h_r - g‖²_∞`.
    fn comparator(&self, gamma: f64, r: f64, x: &Points) -> Result<(Vec<f64>, f64)> {
        let factor = match self.norm_bound_in(gamma) {
            Some(0.0) => 1.0,
            Some(norm) => (r / norm).min(1.0),
            None => 0.0,
        };
        let gap = ((1.0 - factor) * self.sup_bound).powi(2);
        let values = x.iter().map(|p| factor * self.target_value(p)).collect();
        Ok((values, gap))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-replicate seed derived from `(master_seed, n, replicate)`.
pub fn replicate_seed(master_seed: u64, n: usize, replicate: usize) -> u64 {
    splitmix(splitmix(master_seed ^ splitmix(n as u64)) ^ replicate as u64)
}

const DATA_STREAM: u64 = 0;
const HOLDOUT_STREAM: u64 = 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_points<R: Rng>(design: &Design, d: usize, count: usize, rng: &mut R) -> Result<Points> {
    let coords: Vec<f64> = match design {
        Design::UniformCube => (0..count * d).map(|_| rng.random::<f64>()).collect(),
        Design::StandardNormal => (0..count * d).map(|_| rng.sample(StandardNormal)).collect(),
    };
    Points::new(d, coords)
}

/// The replicate's dataset: design points, `Y = g(X) + ε`.
pub fn generate(scenario: &Scenario, replicate: usize) -> Result<Dataset> {
    let cfg = &scenario.config;
    let seed = replicate_seed(cfg.master_seed, cfg.n, replicate);
    let mut rng = stream(seed, DATA_STREAM);
    let x = draw_points(&cfg.design, cfg.d, cfg.n, &mut rng)?;
    let noise: Vec<f64> = match cfg.noise {
        Noise::Gaussian { sigma } if sigma > 0.0 => {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::input(e.to_string()))?;
            (0..cfg.n).map(|_| normal.sample(&mut rng)).collect()
        }
        Noise::Gaussian { .. } => vec![0.0; cfg.n],
        Noise::Rademacher { sigma } => (0..cfg.n)
            .map(|_| if rng.random::<bool>() { sigma } else { -sigma })
            .collect(),
    };
    let y = x
        .iter()
        .zip(&noise)
        .map(|(p, e)| scenario.target_value(p) + e)
        .collect();
    Ok(Dataset::new(x, y)?
        .with_clip(scenario.clip)
        .with_sigma(scenario.sigma()))
}

/// Fresh holdout points for the replicate and the target at them.
pub fn holdout_points(scenario: &Scenario, replicate: usize, count: usize) -> Result<(Points, Vec<f64>)> {
    let cfg = &scenario.config;
    let seed = replicate_seed(cfg.master_seed, cfg.n, replicate);
    let mut rng = stream(seed, HOLDOUT_STREAM);
    let x = draw_points(&cfg.design, cfg.d, count, &mut rng)?;
    let g = x.iter().map(|p| scenario.target_value(p)).collect();
    Ok((x, g))
}

/// Monte Carlo estimate of `‖V f - g‖²_{L²(P)}` with its standard error.
pub fn holdout_sq_error(predictions: &[f64], truth: &[f64], c: Option<ClipBound>) -> Result<(f64, f64)> {
    if predictions.len() != truth.len() || predictions.is_empty() {
        return Err(Error::input("holdout vectors must be non-empty and of equal length"));
    }
    let sq: Vec<f64> = predictions
        .iter()
        .zip(truth)
        .map(|(p, g)| {
            let p = c.map_or(*p, |c| clip(*p, c));
            (p - g) * (p - g)
        })
        .collect();
    Ok(mean_and_stderr(&sq))
}

/// Holdout error of `fit` (trained on `train` with `kernel`) for a scenario.
pub fn holdout_sq_error_for_fit(
    fit: &ConstrainedFit,
    kernel: &Kernel,
    train: &Points,
    scenario: &Scenario,
    replicate: usize,
    count: usize,
) -> Result<(f64, f64)> {
    let (x, g) = holdout_points(scenario, replicate, count)?;
    let pred = fit.predict_with(&kernel.cross_gram(train, &x)?, None)?;
    holdout_sq_error(&pred, &g, Some(scenario.clip))
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    /// One Gaussian kernel of the given width.
    Fixed { width: f64 },
    /// The scaled Gaussian family over an explicit or geometric width grid.
    Gauss {
        #[serde(default)]
        widths: Option<Vec<f64>>,
        #[serde(default)]
        u: Option<f64>,
        #[serde(default)]
        v: Option<f64>,
        #[serde(default)]
        c: Option<f64>,
    },
}

impl Family {
    pub fn width_grid(&self) -> Result<Option<WidthGrid>> {
        match self {
            Family::Fixed { .. } => Ok(None),
            Family::Gauss { widths: Some(w), .. } => Ok(Some(WidthGrid::explicit(w)?)),
            Family::Gauss { u: Some(u), v: Some(v), c: Some(c), .. } => {
                Ok(Some(WidthGrid::geometric(*u, *v, *c)?))
            }
            Family::Gauss { .. } => Err(Error::input(
                "gaussian family needs either `widths` or all of `u`, `v`, `c`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_a")]
    pub a: f64,
    #[serde(default = "default_grid_b")]
    pub b: f64,
    /// Explicit radii; overrides `a` and `b`.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

fn default_grid_a() -> f64 {
    0.5
}

fn default_grid_b() -> f64 {
    0.5
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { a: default_grid_a(), b: default_grid_b(), values: None }
    }
}

impl GridSpec {
    pub fn build(&self, n: usize) -> Result<RadiusGrid> {
        match &self.values {
            Some(v) => RadiusGrid::explicit(v),
            None => RadiusGrid::lattice(self.a, self.b, n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    #[serde(default)]
    pub grid: GridSpec,
    /// Defaults to the theoretical minimum for the family.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Confidence level of the event checks.
    #[serde(default = "default_t")]
    pub t: f64,
    /// Chaining constant override for the Gaussian family.
    #[serde(default)]
    pub j: Option<f64>,
    #[serde(default = "default_true")]
    pub holdout: bool,
    #[serde(default = "default_true")]
    pub events: bool,
    /// Reject `tau` below the theoretical minimum instead of warning.
    #[serde(skip)]
    pub theory_mode: bool,
}

fn default_nu() -> f64 {
    1.0
}

fn default_t() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: Family::Fixed { width: 1.0 },
            grid: GridSpec::default(),
            tau: None,
            nu: default_nu(),
            t: default_t(),
            j: None,
            holdout: true,
            events: true,
            theory_mode: false,
        }
    }
}

/// Resolved tuning for one sample size.
enum Plan {
    Fixed { kernel: Kernel, cfg: GlConfig, grid: RadiusGrid },
    Gauss { cfg: GaussGlConfig },
}

impl ExperimentConfig {
    fn plan(&self, scenario: &Scenario) -> Result<Plan> {
        let n = scenario.config.n;
        let d = scenario.config.d;
        let sigma = scenario.sigma();
        let grid = self.grid.build(n)?;
        if self.t.is_nan() || self.t < 1.0 {
            return Err(Error::input(format!("event level t must be >= 1, got {}", self.t)));
        }
        match &self.family {
            Family::Fixed { width } => {
                let kernel = Kernel::gaussian(*width, d)?;
                let tau = match self.tau {
                    Some(t) => t,
                    None if sigma > 0.0 => tau_min_fixed(kernel.diag_sup(), sigma)?,
                    None => return Err(Error::input("tau is required when the noise scale is 0")),
                };
                let cfg = GlConfig {
                    tau,
                    nu: self.nu,
                    sigma,
                    k_diag: kernel.diag_sup(),
                    theory_mode: self.theory_mode,
                };
                if sigma > 0.0 {
                    cfg.validate()?;
                }
                Ok(Plan::Fixed { kernel, cfg, grid })
            }
            Family::Gauss { .. } => {
                let widths = self.width_grid_required()?;
                let j = match self.j {
                    Some(j) => j,
                    None => j_constant_bound(widths.values()[0], *widths.values().last().unwrap())?,
                };
                let tau = match self.tau {
                    Some(t) => t,
                    None if sigma > 0.0 => tau_min_gauss(j, sigma)?,
                    None => return Err(Error::input("tau is required when the noise scale is 0")),
                };
                let cfg = GaussGlConfig {
                    tau,
                    nu: self.nu,
                    sigma,
                    j,
                    dim: d,
                    widths,
                    radii: grid,
                    theory_mode: self.theory_mode,
                };
                if sigma > 0.0 {
                    cfg.validate()?;
                }
                Ok(Plan::Gauss { cfg })
            }
        }
    }

    fn width_grid_required(&self) -> Result<WidthGrid> {
        self.family
            .width_grid()?
            .ok_or_else(|| Error::input("family has no width grid"))
    }
}

/// One row of the per-replicate output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub replicate: usize,
    pub n: usize,
    pub gamma_hat: f64,
    pub r_hat: f64,
    /// Holdout `L²(P)` error of the clipped adaptive estimator.
    pub err_adaptive: Option<f64>,
    /// Smallest holdout error over the non-adaptive grid estimators.
    pub err_oracle_grid: Option<f64>,
    pub event_bias: Option<bool>,
    pub event_majorant: Option<bool>,
    pub seed: u64,
    #[serde(skip)]
    pub err_adaptive_se: Option<f64>,
}

pub fn run_replicate(scenario: &Scenario, exp: &ExperimentConfig, replicate: usize) -> Result<ExperimentRecord> {
    let plan = exp.plan(scenario)?;
    run_planned(scenario, exp, &plan, replicate)
}

fn run_planned(
    scenario: &Scenario,
    exp: &ExperimentConfig,
    plan: &Plan,
    replicate: usize,
) -> Result<ExperimentRecord> {
    let data = generate(scenario, replicate)?;
    let n = data.n();
    let seed = replicate_seed(scenario.config.master_seed, n, replicate);
    let sigma = scenario.sigma();
    let t = exp.t;

    let (gamma_hat, r_hat, chosen, table, kernels) = match plan {
        Plan::Fixed { kernel, cfg, grid } => {
            let eigen = GramEigen::new(&kernel.gram(&data.x)?, &data.y)?;
            let sel = select_from_eigen(&eigen, grid, cfg, true)?;
            let width = kernel.width().unwrap_or(f64::NAN);
            (width, sel.r_hat, (0, sel.index), vec![(width, sel.fits)], vec![kernel.clone()])
        }
        Plan::Gauss { cfg } => {
            let eigens: Vec<GramEigen> = cfg
                .widths
                .values()
                .iter()
                .map(|&w| GramEigen::new(&Kernel::gaussian(w, cfg.dim)?.gram(&data.x)?, &data.y))
                .collect::<Result<_>>()?;
            let sel = select_from_eigens(&eigens, cfg, true)?;
            let kernels = cfg
                .widths
                .values()
                .iter()
                .map(|&w| Kernel::gaussian(w, cfg.dim))
                .collect::<Result<Vec<_>>>()?;
            let table = cfg.widths.values().iter().copied().zip(sel.fits).collect();
            (sel.gamma_hat, sel.r_hat, (sel.width_index, sel.radius_index), table, kernels)
        }
    };

    let (event_bias, event_majorant) = if exp.events {
        let (bias, maj) = match plan {
            Plan::Fixed { kernel, .. } => {
                let fits = &table[0].1;
                let k_diag = kernel.diag_sup();
                let width = table[0].0;
                (
                    bias_event(scenario, &data, &table, |_, r, gap| {
                        theory::bias_event_bound(k_diag, sigma, r, t, n, gap)
                    })?,
                    fixed_majorant_event(scenario, width, fits, k_diag, sigma, t)?,
                )
            }
            Plan::Gauss { cfg } => (
                bias_event(scenario, &data, &table, |gamma, r, gap| {
                    theory::vary_bias_event_bound(cfg.j, gaussian_scale(gamma, cfg.dim), sigma, r, t, n, gap)
                })?,
                gauss_majorant_event(scenario, &table, cfg, t)?,
            ),
        };
        (Some(bias), Some(maj))
    } else {
        (None, None)
    };

    let (err_adaptive, err_adaptive_se, err_oracle_grid) = if exp.holdout {
        let (x_test, g_test) = holdout_points(scenario, replicate, scenario.config.holdout_size.max(1))?;
        let mut best = f64::INFINITY;
        let mut adaptive = (f64::NAN, f64::NAN);
        for (w_idx, ((_, fits), kernel)) in table.iter().zip(&kernels).enumerate() {
            let cross = kernel.cross_gram(&data.x, &x_test)?;
            let coefs = DMatrix::from_fn(n, fits.len(), |i, j| fits[j].coef[i]);
            let preds = &cross * coefs;
            for (r_idx, col) in preds.column_iter().enumerate() {
                let p: Vec<f64> = col.iter().copied().collect();
                let (err, se) = holdout_sq_error(&p, &g_test, Some(scenario.clip))?;
                best = best.min(err);
                if (w_idx, r_idx) == chosen {
                    adaptive = (err, se);
                }
            }
        }
        (Some(adaptive.0), Some(adaptive.1), Some(best))
    } else {
        (None, None, None)
    };

    Ok(ExperimentRecord {
        replicate,
        n,
        gamma_hat,
        r_hat,
        err_adaptive,
        err_oracle_grid,
        event_bias,
        event_majorant,
        seed,
        err_adaptive_se,
    })
}

/// `‖ĥ_{γ,r} - h_{γ,r}‖²_{P_n} <= bound(γ, r, ‖h_{γ,r} - g‖²_∞)` for every grid point.
fn bias_event<F>(
    scenario: &Scenario,
    data: &Dataset,
    table: &[(f64, Vec<ConstrainedFit>)],
    bound: F,
) -> Result<bool>
where
    F: Fn(f64, f64, f64) -> f64,
{
    for (gamma, fits) in table {
        for fit in fits {
            let (h, gap) = scenario.comparator(*gamma, fit.r, &data.x)?;
            let lhs = sq_distance_unchecked(&fit.train_pred, &h);
            if lhs > bound(*gamma, fit.r, gap) + EVENT_ATOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn fixed_majorant_event(
    scenario: &Scenario,
    width: f64,
    fits: &[ConstrainedFit],
    k_diag: f64,
    sigma: f64,
    t: f64,
) -> Result<bool> {
    let n = fits[0].train_pred.len();
    for (i, fi) in fits.iter().enumerate() {
        let i_inf = scenario.i_infty_upper(width, fi.r)?;
        for fj in &fits[i..] {
            let lhs = sq_distance_unchecked(&fi.train_pred, &fj.train_pred);
            if lhs > theory::majorant_fixed(k_diag, sigma, fi.r, fj.r, t, n, i_inf) + EVENT_ATOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn gauss_majorant_event(
    scenario: &Scenario,
    table: &[(f64, Vec<ConstrainedFit>)],
    cfg: &GaussGlConfig,
    t: f64,
) -> Result<bool> {
    let n = table[0].1[0].train_pred.len();
    for (g, (gamma, fits)) in table.iter().enumerate() {
        for (i, fi) in fits.iter().enumerate() {
            let i_inf = scenario.i_infty_upper(*gamma, fi.r)?;
            for (eta, other) in &table[..=g] {
                for fj in &other[i..] {
                    let lhs = sq_distance_unchecked(&fi.train_pred, &fj.train_pred);
                    let rhs = theory::majorant_gauss(
                        cfg.j, cfg.sigma, *gamma, fi.r, *eta, fj.r, cfg.dim, t, n, i_inf,
                    );
                    if lhs > rhs + EVENT_ATOL {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Runs `replicates` replicates, merged by replicate index.
pub fn run_replicates(scenario: &Scenario, exp: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let plan = exp.plan(scenario)?;
    (0..scenario.config.replicates)
        .into_par_iter()
        .map(|i| run_planned(scenario, exp, &plan, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventReport {
    pub event: String,
    pub t: f64,
    /// `1 - e^{-t}`.
    pub floor: f64,
    pub successes: usize,
    pub trials: usize,
    pub frequency: f64,
    pub wilson_lower: f64,
    pub wilson_upper: f64,
    /// False only when the whole interval lies below the floor.
    pub pass: bool,
}

impl EventReport {
    pub fn from_outcomes(event: &str, t: f64, outcomes: impl Iterator<Item = bool>) -> Self {
        let mut successes = 0;
        let mut trials = 0;
        for hit in outcomes {
            trials += 1;
            successes += usize::from(hit);
        }
        let (lo, hi) = wilson_interval(successes, trials, Z95);
        let floor = 1.0 - (-t).exp();
        Self {
            event: event.to_string(),
            t,
            floor,
            successes,
            trials,
            frequency: if trials > 0 { successes as f64 / trials as f64 } else { f64::NAN },
            wilson_lower: lo,
            wilson_upper: hi,
            pass: hi >= floor,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EventCheck {
    pub bias: EventReport,
    pub majorant: EventReport,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
}

fn require_rkhs(scenario: &Scenario) -> Result<()> {
    if scenario.h_norm.is_none() {
        return Err(Error::input("event checks need an RKHS-element target"));
    }
    Ok(())
}

/// Frequencies of the majorant and deviation events over the replicates.
pub fn event_check(scenario: &Scenario, exp: &ExperimentConfig) -> Result<EventCheck> {
    require_rkhs(scenario)?;
    let mut exp = exp.clone();
    exp.events = true;
    let records = run_replicates(scenario, &exp)?;
    let (bias_name, maj_name) = match exp.family {
        Family::Fixed { .. } => ("bias", "majorant"),
        Family::Gauss { .. } => ("bias-family", "majorant-family"),
    };
    let bias = EventReport::from_outcomes(bias_name, exp.t, records.iter().map(|r| r.event_bias == Some(true)));
    let majorant =
        EventReport::from_outcomes(maj_name, exp.t, records.iter().map(|r| r.event_majorant == Some(true)));
    Ok(EventCheck { bias, majorant, records })
}

pub fn majorant_event_check(scenario: &Scenario, exp: &ExperimentConfig) -> Result<EventReport> {
    Ok(event_check(scenario, exp)?.majorant)
}

pub fn bias_event_check(scenario: &Scenario, exp: &ExperimentConfig) -> Result<EventReport> {
    Ok(event_check(scenario, exp)?.bias)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub median_err: f64,
    pub mean_err: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log(median error)` against `log(n)`.
    pub slope: Option<f64>,
    pub degenerate: bool,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Median adaptive holdout error per sample size and its log-log slope.
pub fn rate_experiment(scenario: &Scenario, n_list: &[usize], exp: &ExperimentConfig) -> Result<RateReport> {
    if n_list.len() < 4 {
        return Err(Error::input("rate experiment needs at least 4 sample sizes"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("sample sizes must be strictly ascending"));
    }
    let mut exp = exp.clone();
    exp.holdout = true;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in n_list {
        let scn = scenario.with_n(n)?;
        let recs = run_replicates(&scn, &exp)?;
        let errs: Vec<f64> = recs.iter().filter_map(|r| r.err_adaptive).collect();
        rows.push(RateRow {
            n,
            median_err: median(&errs),
            mean_err: errs.iter().sum::<f64>() / errs.len() as f64,
            replicates: errs.len(),
        });
        records.extend(recs);
    }
    let degenerate = rows.iter().any(|r| r.median_err <= DEGENERATE_ERROR_FLOOR);
    let slope = if degenerate {
        None
    } else {
        let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.median_err).collect();
        Some(log_log_slope(&xs, &ys))
    };
    Ok(RateReport { rows, slope, degenerate, records })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleGapReport {
    pub replicates: usize,
    pub ratio_limit: f64,
    pub within: usize,
    pub fraction_within: f64,
    pub median_ratio: f64,
    #[serde(skip)]
    pub ratios: Vec<f64>,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
}

/// Adaptive holdout error relative to the best grid estimator's.
pub fn oracle_gap_check(scenario: &Scenario, exp: &ExperimentConfig) -> Result<OracleGapReport> {
    if scenario.config.replicates < 50 {
        return Err(Error::input("oracle gap check needs at least 50 replicates"));
    }
    let mut exp = exp.clone();
    exp.holdout = true;
    exp.events = false;
    let records = run_replicates(scenario, &exp)?;
    let ratios: Vec<f64> = records
        .iter()
        .map(|r| {
            let a = r.err_adaptive.unwrap_or(f64::NAN);
            let b = r.err_oracle_grid.unwrap_or(f64::NAN);
            if a <= 1e-12 && b <= 1e-12 {
                1.0
            } else {
                a / b
            }
        })
        .collect();
    let within = ratios.iter().filter(|&&q| q <= ORACLE_RATIO_LIMIT).count();
    Ok(OracleGapReport {
        replicates: ratios.len(),
        ratio_limit: ORACLE_RATIO_LIMIT,
        within,
        fraction_within: within as f64 / ratios.len() as f64,
        median_ratio: median(&ratios),
        ratios,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub t: f64,
    /// Empirical `P(|Z| <= a (log 2 + t))`.
    pub frequency: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadformReport {
    pub n: usize,
    pub sigma: f64,
    pub replicates: usize,
    /// `a = 2^{7/2} log 2 σ² tr(M²)^{1/2} / log(5/4)`.
    pub scale: f64,
    /// Sample mean of `exp(|Z| / a)`.
    pub mean: f64,
    pub stderr: f64,
    /// `mean <= 2 + 3 stderr`.
    pub pass: bool,
    pub tails: Vec<TailRow>,
}

/// Orlicz-norm check for `Z = εᵀ (M - I∘M) ε`, `ε` i.i.d. `N(0, σ²)`.
pub fn quadform_tail_check_with(
    m: &DMatrix<f64>,
    sigma: f64,
    t_list: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<QuadformReport> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::input("quadratic form needs a non-empty square matrix"));
    }
    if replicates == 0 {
        return Err(Error::input("need at least one replicate"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::input("sigma must be >= 0"));
    }
    let trace_sq: f64 = m.iter().map(|v| v * v).sum();
    let scale = 2f64.powf(3.5) * LN_2 * sigma * sigma * trace_sq.sqrt() / (1.25f64).ln();
    let mut off = m.clone();
    off.fill_diagonal(0.0);

    let mut rng = stream(seed, 0);
    let mut z_abs = Vec::with_capacity(replicates);
    let mut eps = DVector::zeros(n);
    for _ in 0..replicates {
        for e in eps.iter_mut() {
            let s: f64 = rng.sample(StandardNormal);
            *e = sigma * s;
        }
        z_abs.push(eps.dot(&(&off * &eps)).abs());
    }
    let terms: Vec<f64> = z_abs
        .iter()
        .map(|z| if scale > 0.0 { (z / scale).exp() } else { 1.0 })
        .collect();
    let (mean, stderr) = mean_and_stderr(&terms);
    let tails = t_list
        .iter()
        .map(|&t| {
            let limit = scale * (LN_2 + t);
            let hits = z_abs.iter().filter(|&&z| z <= limit).count();
            TailRow {
                t,
                frequency: hits as f64 / replicates as f64,
                floor: 1.0 - (-t).exp(),
            }
        })
        .collect();
    Ok(QuadformReport {
        n,
        sigma,
        replicates,
        scale,
        mean,
        stderr,
        pass: mean <= 2.0 + 3.0 * stderr,
        tails,
    })
}

/// Same check with `M` the unit-width Gaussian Gram matrix of `n` uniform points.
pub fn quadform_tail_check(n: usize, sigma: f64, t_list: &[f64], replicates: usize, seed: u64) -> Result<QuadformReport> {
    let mut rng = stream(seed, 7);
    let x = draw_points(&Design::UniformCube, 1, n, &mut rng)?;
    let m = Kernel::gaussian(1.0, 1)?.gram(&x)?;
    quadform_tail_check_with(&m, sigma, t_list, replicates, splitmix(seed))
}
