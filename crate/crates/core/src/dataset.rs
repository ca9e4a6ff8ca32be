use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::ClipBound;
use crate::kernels::Points;

/// Covariates and responses, plus the clip level and noise scale when known.
#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    pub x: Points,
    pub y: Vec<f64>,
    pub clip: Option<ClipBound>,
    pub sigma: Option<f64>,
}

impl Dataset {
    pub fn new(x: Points, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::input("dataset has no observations"));
        }
        if x.len() != y.len() {
            return Err(Error::input(format!(
                "{} covariate rows but {} responses",
                x.len(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite response"));
        }
        Ok(Self { x, y, clip: None, sigma: None })
    }

    pub fn with_clip(mut self, c: ClipBound) -> Self {
        self.clip = Some(c);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}
