//! Gaussian law of the pinned process and its exact sampler.
//!
//! With `phi` and `I` from [`CalculusCache`]:
//!
//! ```text
//! E[X_t]        = phi(t) x + (1 - phi(t)) y
//! Cov(X_s, X_t) = phi(s) phi(t) I(s),            s <= t
//! X_t | X_s     ~ N(y + phi(t)/phi(s) (X_s - y), phi(t)^2 (I(t) - I(s)))
//! ```
//!
//! Products such as `phi(s) phi(t) I(s)` are evaluated as
//! `Var(X_s) * phi(t)/phi(s)` with the ratio taken as `exp(H(s) - H(t))`,
//! which stays finite where `I` alone would overflow.

use crate::quad::{CalculusCache, SigmaTotal};
use crate::rng::PathRng;
use crate::sim::{Method, PathGrid, SamplePath};
use crate::{check_time, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct PinnedLaw<'a> {
    cache: &'a CalculusCache,
    pub x: f64,
    pub y: f64,
}

impl<'a> PinnedLaw<'a> {
    pub fn new(cache: &'a CalculusCache, x: f64, y: f64) -> Self {
        Self { cache, x, y }
    }

    pub fn cache(&self) -> &'a CalculusCache {
        self.cache
    }

    pub fn mean(&self, t: f64) -> Result<f64> {
        let phi = self.cache.phi(t)?;
        Ok(phi * self.x + (1.0 - phi) * self.y)
    }

    pub fn variance(&self, t: f64) -> Result<f64> {
        self.cache.variance(t)
    }

    pub fn sd(&self, t: f64) -> Result<f64> {
        Ok(self.variance(t)?.sqrt())
    }

    pub fn cov(&self, s: f64, t: f64) -> Result<f64> {
        check_time(s)?;
        check_time(t)?;
        let (u, v) = if s <= t { (s, t) } else { (t, s) };
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(self.variance(u)? * self.cache.phi_ratio(u, v)?)
    }

    /// Covariance matrix of the marginals at `nodes`.
    pub fn covariance_matrix(&self, nodes: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut m = vec![vec![0.0; nodes.len()]; nodes.len()];
        for i in 0..nodes.len() {
            for j in i..nodes.len() {
                let c = self.cov(nodes[i], nodes[j])?;
                m[i][j] = c;
                m[j][i] = c;
            }
        }
        Ok(m)
    }
}

/// Moments of `Z = x + int_0^t sigma dB` conditioned on `Z_1 = y`.
#[derive(Debug, Clone, Copy)]
pub struct ConditionedMoments<'a> {
    cache: &'a CalculusCache,
    pub x: f64,
    pub y: f64,
    pub sigma_total: f64,
}

impl ConditionedMoments<'_> {
    pub fn mean(&self, t: f64) -> Result<f64> {
        Ok(self.x + self.cache.cum_sigma_sq(t)? / self.sigma_total * (self.y - self.x))
    }

    pub fn cov(&self, s: f64, t: f64) -> Result<f64> {
        let (u, v) = if s <= t { (s, t) } else { (t, s) };
        let su = self.cache.cum_sigma_sq(u)?;
        let sv = self.cache.cum_sigma_sq(v)?;
        Ok(su * (1.0 - sv / self.sigma_total))
    }
}

/// Requires a finite `Sigma`; the conditioned process is undefined otherwise.
pub fn conditioned_moments(
    cache: &CalculusCache,
    x: f64,
    y: f64,
) -> Result<ConditionedMoments<'_>> {
    match cache.big_sigma()? {
        SigmaTotal::Finite(sigma_total) => Ok(ConditionedMoments {
            cache,
            x,
            y,
            sigma_total,
        }),
        other => Err(Error::Precondition(format!(
            "conditioning on Z_1 needs a finite total dispersion, got {other:?}"
        ))),
    }
}

/// Markov transition coefficients precomputed for one grid.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    x: f64,
    y: f64,
    grid: PathGrid,
    ratios: Vec<f64>,
    sds: Vec<f64>,
}

impl ExactSampler {
    pub fn new(law: &PinnedLaw<'_>, grid: &PathGrid) -> Result<Self> {
        let cache = law.cache();
        let nodes = grid.nodes();
        let mut ratios = Vec::with_capacity(nodes.len().saturating_sub(1));
        let mut sds = Vec::with_capacity(ratios.capacity());
        for w in nodes.windows(2) {
            let (s, t) = (w[0], w[1]);
            ratios.push(cache.phi_ratio(s, t)?);
            sds.push(cache.transition_variance(s, t)?.sqrt());
        }
        Ok(Self {
            x: law.x,
            y: law.y,
            grid: grid.clone(),
            ratios,
            sds,
        })
    }

    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }

    /// Fills `out` (one value per grid node), one variate per transition.
    pub fn fill(&self, rng: &mut PathRng, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.grid.len());
        out[0] = self.x;
        let y = self.y;
        for k in 0..self.ratios.len() {
            out[k + 1] = y + self.ratios[k] * (out[k] - y) + self.sds[k] * rng.normal();
        }
    }

    pub fn sample(&self, seed: u64, path_index: u64) -> SamplePath {
        let mut values = vec![0.0; self.grid.len()];
        self.fill(&mut PathRng::new(seed, path_index), &mut values);
        SamplePath {
            grid: self.grid.clone(),
            values,
            x: self.x,
            y: self.y,
            seed,
            path_index,
            method: Method::Exact,
        }
    }
}

pub fn sample_exact(
    law: &PinnedLaw<'_>,
    grid: &PathGrid,
    seed: u64,
    path_index: u64,
) -> Result<SamplePath> {
    Ok(ExactSampler::new(law, grid)?.sample(seed, path_index))
}
