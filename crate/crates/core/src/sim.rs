//! Time grids, Euler-Maruyama paths and Monte Carlo statistics.
//!
//! Monte Carlo runs are split into fixed blocks of consecutive path indices.
//! Blocks run in parallel; their moment accumulators are merged in block
//! order, so a report depends only on `(seed, grid, N, method)` and never on
//! the thread count.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::funcs::DiffusionFamily;
use crate::law::{ExactSampler, PinnedLaw};
use crate::quad::CalculusCache;
use crate::rng::PathRng;
use crate::{Error, Result, T_MAX};

/// Default terminal time of simulated grids.
pub const DEFAULT_T_END: f64 = 1.0 - 1e-4;
/// Default node count of geometric grids.
pub const DEFAULT_STEPS: usize = 512;
/// Euler iterates further than this from the pin (relative to `max(1, |x|, |y|)`)
/// count as blown up.
pub const EULER_BLOWUP: f64 = 1e100;
/// Uniform grids ending beyond this time must be stable.
pub const UNIFORM_STABILITY_LIMIT: f64 = 1.0 - 1e-2;

const BLOCK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Uniform,
    Geometric,
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(GridMode::Uniform),
            "geometric" => Ok(GridMode::Geometric),
            other => Err(Error::invalid_param(
                "grid-mode",
                format!("expected uniform|geometric, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Euler,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "euler" => Ok(Method::Euler),
            other => Err(Error::invalid_param(
                "method",
                format!("expected exact|euler, got `{other}`"),
            )),
        }
    }
}

/// Strictly increasing nodes in `[0, T_MAX]` starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    nodes: Vec<f64>,
    mode: Option<GridMode>,
}

impl PathGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        match nodes.first() {
            None => return Err(Error::InvalidGrid("grid is empty".into())),
            Some(&t0) if t0 != 0.0 => {
                return Err(Error::InvalidGrid(format!(
                    "first node must be 0, got {t0}"
                )))
            }
            _ => {}
        }
        if let Some(k) = nodes
            .windows(2)
            .position(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::InvalidGrid(format!(
                "nodes must be strictly increasing: node {} = {} follows {}",
                k + 1,
                nodes[k + 1],
                nodes[k]
            )));
        }
        let last = *nodes.last().unwrap();
        if last > T_MAX {
            return Err(Error::InvalidGrid(format!(
                "last node {last} exceeds 1 - 1e-9"
            )));
        }
        Ok(Self { nodes, mode: None })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mode(&self) -> Option<GridMode> {
        self.mode
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn max_step(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the node closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        (0..self.nodes.len())
            .min_by(|&i, &j| {
                (self.nodes[i] - t)
                    .abs()
                    .total_cmp(&(self.nodes[j] - t).abs())
            })
            .unwrap()
    }
}

/// `n` steps from 0 to `t_end`; geometric grids use nodes `1 - r^k` with
/// `r^n = 1 - t_end`.
pub fn make_grid(n: usize, mode: GridMode, t_end: f64) -> Result<PathGrid> {
    if n == 0 {
        return Err(Error::invalid_param("n", "grid needs at least one step"));
    }
    if !(t_end > 0.0 && t_end <= T_MAX) {
        return Err(Error::invalid_param(
            "t_end",
            format!("must lie in (0, 1 - 1e-9], got {t_end}"),
        ));
    }
    let mut nodes: Vec<f64> = match mode {
        GridMode::Uniform => (0..=n).map(|k| t_end * k as f64 / n as f64).collect(),
        GridMode::Geometric => {
            let log_r = (1.0 - t_end).ln() / n as f64;
            (0..=n).map(|k| -(k as f64 * log_r).exp_m1()).collect()
        }
    };
    nodes[n] = t_end;
    let mut grid = PathGrid::new(nodes)?;
    grid.mode = Some(mode);
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub grid: PathGrid,
    pub values: Vec<f64>,
    pub x: f64,
    pub y: f64,
    pub seed: u64,
    pub path_index: u64,
    pub method: Method,
}

/// Explicit Euler stepping of the pinned SDE on a fixed grid.
#[derive(Debug, Clone)]
pub struct EulerStepper {
    x: f64,
    y: f64,
    grid: PathGrid,
    drift_rate: Vec<f64>,
    dt: Vec<f64>,
    noise: Vec<f64>,
    max_contraction: f64,
}

impl EulerStepper {
    /// Rejects grids where `h(t_k) dt_k > 1` somewhere (the step overshoots
    /// the target) unless the grid is geometric or ends before
    /// [`UNIFORM_STABILITY_LIMIT`].
    pub fn new(family: &DiffusionFamily, x: f64, y: f64, grid: &PathGrid) -> Result<Self> {
        let nodes = grid.nodes();
        let steps = nodes.len() - 1;
        let mut drift_rate = Vec::with_capacity(steps);
        let mut dt = Vec::with_capacity(steps);
        let mut noise = Vec::with_capacity(steps);
        let mut max_contraction: f64 = 0.0;
        let mut worst = 0;
        for k in 0..steps {
            let t = nodes[k];
            let d = nodes[k + 1] - t;
            let h = family.h.eval(t)?;
            let s = family.sigma.eval(t)?;
            if h * d > max_contraction {
                max_contraction = h * d;
                worst = k;
            }
            drift_rate.push(h);
            dt.push(d);
            noise.push(s * d.sqrt());
        }
        if max_contraction > 1.0
            && grid.mode() != Some(GridMode::Geometric)
            && grid.t_end() > UNIFORM_STABILITY_LIMIT
        {
            return Err(Error::Discretization {
                node: worst,
                t: nodes[worst],
                reason: format!(
                    "h*dt = {max_contraction:.3} > 1 on a non-geometric grid ending at {}; use a geometric grid",
                    grid.t_end()
                ),
            });
        }
        Ok(Self {
            x,
            y,
            grid: grid.clone(),
            drift_rate,
            dt,
            noise,
            max_contraction,
        })
    }

    /// Scales the diffusion term; 0 turns the scheme into explicit Euler for
    /// the mean ODE. One variate per transition is still consumed.
    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        for n in &mut self.noise {
            *n *= scale;
        }
        self
    }

    /// Largest `h(t_k) dt_k` on the grid.
    pub fn max_contraction(&self) -> f64 {
        self.max_contraction
    }

    pub fn is_stable(&self) -> bool {
        self.max_contraction <= 1.0
    }

    pub fn fill(&self, rng: &mut PathRng, out: &mut [f64]) -> Result<()> {
        out[0] = self.x;
        let y = self.y;
        let bound = EULER_BLOWUP * self.x.abs().max(y.abs()).max(1.0);
        for k in 0..self.dt.len() {
            let cur = out[k];
            let next =
                cur + self.drift_rate[k] * (y - cur) * self.dt[k] + self.noise[k] * rng.normal();
            if !next.is_finite() || (next - y).abs() > bound {
                return Err(Error::Discretization {
                    node: k + 1,
                    t: self.grid.nodes()[k + 1],
                    reason: format!("Euler iterate became {next:e} (max h*dt {:.1}); use the exact sampler or a finer grid", self.max_contraction),
                });
            }
            out[k + 1] = next;
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64, path_index: u64) -> Result<SamplePath> {
        let mut values = vec![0.0; self.grid.len()];
        self.fill(&mut PathRng::new(seed, path_index), &mut values)?;
        Ok(SamplePath {
            grid: self.grid.clone(),
            values,
            x: self.x,
            y: self.y,
            seed,
            path_index,
            method: Method::Euler,
        })
    }
}

pub fn euler(
    family: &DiffusionFamily,
    x: f64,
    y: f64,
    grid: &PathGrid,
    seed: u64,
    path_index: u64,
) -> Result<SamplePath> {
    EulerStepper::new(family, x, y, grid)?.sample(seed, path_index)
}

/// Running central moments up to order four, mergeable (Pebay 2008).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: f64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = v - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n, other.n);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        *self = Moments {
            n,
            mean: self.mean + delta * nb / n,
            m2,
            m3,
            m4,
        };
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            self.m2 / (self.n - 1.0)
        }
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Standard error of the variance estimator, `sd((X - mean)^2) / sqrt(N)`.
    pub fn se_variance(&self) -> f64 {
        let c2 = self.m2 / self.n;
        let c4 = self.m4 / self.n;
        ((c4 - c2 * c2).max(0.0) / self.n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningStatistic {
    pub t_end: f64,
    /// Empirical mean of `|X_{t_end} - y|`.
    pub mean_abs_deviation: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub method: Method,
    pub seed: u64,
    pub n_paths: usize,
    pub x: f64,
    pub y: f64,
    pub nodes: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub se_mean: Vec<f64>,
    pub se_variance: Vec<f64>,
    pub pinning: PinningStatistic,
    pub max_step: f64,
    /// Largest `h dt` over the grid (Euler only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_contraction: Option<f64>,
}

enum Stepper {
    Exact(ExactSampler),
    Euler(EulerStepper),
}

impl Stepper {
    fn build(
        family: &DiffusionFamily,
        x: f64,
        y: f64,
        grid: &PathGrid,
        method: Method,
    ) -> Result<Self> {
        Ok(match method {
            Method::Exact => {
                let cache = CalculusCache::new(family);
                Stepper::Exact(ExactSampler::new(&PinnedLaw::new(&cache, x, y), grid)?)
            }
            Method::Euler => Stepper::Euler(EulerStepper::new(family, x, y, grid)?),
        })
    }

    fn fill(&self, rng: &mut PathRng, out: &mut [f64]) -> Result<()> {
        match self {
            Stepper::Exact(s) => {
                s.fill(rng, out);
                Ok(())
            }
            Stepper::Euler(s) => s.fill(rng, out),
        }
    }
}

/// Paths `range` of a run, materialized (for export).
pub fn generate_paths(
    family: &DiffusionFamily,
    x: f64,
    y: f64,
    grid: &PathGrid,
    seed: u64,
    method: Method,
    range: Range<u64>,
) -> Result<Vec<SamplePath>> {
    let stepper = Stepper::build(family, x, y, grid, method)?;
    range
        .into_par_iter()
        .map(|i| {
            let mut values = vec![0.0; grid.len()];
            stepper.fill(&mut PathRng::new(seed, i), &mut values)?;
            Ok(SamplePath {
                grid: grid.clone(),
                values,
                x,
                y,
                seed,
                path_index: i,
                method,
            })
        })
        .collect()
}

/// Per-node moments and the terminal pinning statistic over `n_paths` paths.
/// Any failing path aborts the whole run.
pub fn monte_carlo(
    family: &DiffusionFamily,
    x: f64,
    y: f64,
    grid: &PathGrid,
    n_paths: usize,
    seed: u64,
    method: Method,
) -> Result<McReport> {
    if n_paths < 2 {
        return Err(Error::invalid_param(
            "N",
            format!("need at least 2 paths, got {n_paths}"),
        ));
    }
    let stepper = Stepper::build(family, x, y, grid, method)?;
    let len = grid.len();
    let blocks = n_paths.div_ceil(BLOCK);
    let partials: Vec<(Vec<Moments>, Moments)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut nodes = vec![Moments::default(); len];
            let mut pin = Moments::default();
            let mut values = vec![0.0; len];
            let start = b * BLOCK;
            for i in start..(start + BLOCK).min(n_paths) {
                stepper.fill(&mut PathRng::new(seed, i as u64), &mut values)?;
                for (acc, &v) in nodes.iter_mut().zip(&values) {
                    acc.push(v);
                }
                pin.push((values[len - 1] - y).abs());
            }
            Ok((nodes, pin))
        })
        .collect::<Result<_>>()?;
    let mut nodes = vec![Moments::default(); len];
    let mut pin = Moments::default();
    for (block_nodes, block_pin) in &partials {
        for (acc, m) in nodes.iter_mut().zip(block_nodes) {
            acc.merge(m);
        }
        pin.merge(block_pin);
    }
    Ok(McReport {
        method,
        seed,
        n_paths,
        x,
        y,
        nodes: grid.nodes().to_vec(),
        mean: nodes.iter().map(|m| m.mean).collect(),
        variance: nodes.iter().map(Moments::variance).collect(),
        se_mean: nodes.iter().map(Moments::se_mean).collect(),
        se_variance: nodes.iter().map(Moments::se_variance).collect(),
        pinning: PinningStatistic {
            t_end: grid.t_end(),
            mean_abs_deviation: pin.mean,
            se: pin.se_mean(),
        },
        max_step: grid.max_step(),
        max_contraction: match &stepper {
            Stepper::Euler(s) => Some(s.max_contraction()),
            Stepper::Exact(_) => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::FamilySpec;

    #[test]
    fn grid_examples() {
        let g = make_grid(4, GridMode::Uniform, 0.8).unwrap();
        let expected = [0.0, 0.2, 0.4, 0.6, 0.8];
        for (a, b) in g.nodes().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let g = make_grid(3, GridMode::Geometric, 0.875).unwrap();
        for (a, b) in g.nodes().iter().zip([0.0, 0.5, 0.75, 0.875]) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(
            make_grid(1, GridMode::Uniform, 0.5).unwrap().nodes(),
            &[0.0, 0.5]
        );
        let g = make_grid(512, GridMode::Geometric, DEFAULT_T_END).unwrap();
        assert_eq!(g.len(), 513);
        assert_eq!(g.t_end(), DEFAULT_T_END);
    }

    #[test]
    fn grid_validation() {
        assert!(make_grid(0, GridMode::Uniform, 0.5).is_err());
        assert!(make_grid(3, GridMode::Uniform, 0.0).is_err());
        assert!(make_grid(3, GridMode::Uniform, 1.0).is_err());
        assert!(PathGrid::new(vec![]).is_err());
        assert!(PathGrid::new(vec![0.1, 0.2]).is_err());
        assert!(PathGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        assert!(PathGrid::new(vec![0.0, 1.0]).is_err());
        assert!("sideways".parse::<GridMode>().is_err());
    }

    #[test]
    fn euler_without_noise_solves_the_mean_ode() {
        let bb = FamilySpec::new("brownian_bridge").build().unwrap();
        let grid = make_grid(10_000, GridMode::Uniform, 0.99).unwrap();
        let path = EulerStepper::new(&bb, 0.0, 1.0, &grid)
            .unwrap()
            .with_noise_scale(0.0)
            .sample(1, 0)
            .unwrap();
        assert!((path.values.last().unwrap() - 0.99).abs() < 1e-2);
    }

    #[test]
    fn euler_trivial_grid() {
        let bb = FamilySpec::new("brownian_bridge").build().unwrap();
        let grid = PathGrid::new(vec![0.0]).unwrap();
        assert_eq!(euler(&bb, 2.0, 0.0, &grid, 0, 0).unwrap().values, vec![2.0]);
    }

    #[test]
    fn unstable_uniform_grid_is_rejected() {
        let ap = FamilySpec::new("alpha_pinned")
            .param("alpha", 2.0)
            .build()
            .unwrap();
        let grid = make_grid(100, GridMode::Uniform, 1.0 - 1e-4).unwrap();
        assert!(EulerStepper::new(
            &ap,
            0.0,
            0.0,
            &make_grid(100, GridMode::Uniform, 0.98).unwrap()
        )
        .is_ok());
        let err = EulerStepper::new(&ap, 0.0, 0.0, &grid).unwrap_err();
        assert!(matches!(err, Error::Discretization { .. }));
        assert!(err.to_string().contains("geometric"));
    }

    #[test]
    fn exploding_euler_reports_the_node() {
        let ag = FamilySpec::new("alpha_gamma_pinned")
            .param("alpha", 1.0)
            .param("gamma", 1.0)
            .build()
            .unwrap();
        let grid = make_grid(DEFAULT_STEPS, GridMode::Geometric, DEFAULT_T_END).unwrap();
        let stepper = EulerStepper::new(&ag, 0.0, 0.0, &grid).unwrap();
        assert!(!stepper.is_stable());
        match stepper.sample(3, 0) {
            Err(Error::Discretization { node, .. }) => assert!(node > 256),
            other => panic!("expected a discretization failure, got {other:?}"),
        }
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000)
            .map(|k| ((k * 7919) % 1000) as f64 / 100.0 - 3.0)
            .collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&v| all.push(v));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..337].iter().for_each(|&v| a.push(v));
        xs[337..].iter().for_each(|&v| b.push(v));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-10);
        assert!((a.se_variance() - all.se_variance()).abs() < 1e-10);
        let mean = xs.iter().sum::<f64>() / 1000.0;
        let m4 = xs.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / 1000.0;
        let m2 = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1000.0;
        assert!((all.se_variance() - ((m4 - m2 * m2) / 1000.0).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_needs_two_paths() {
        let bb = FamilySpec::new("brownian_bridge").build().unwrap();
        let grid = make_grid(4, GridMode::Uniform, 0.5).unwrap();
        let err = monte_carlo(&bb, 0.0, 0.0, &grid, 1, 0, Method::Exact).unwrap_err();
        assert!(err.to_string().contains('N'));
    }

    #[test]
    fn monte_carlo_start_node_has_zero_variance() {
        let ap = FamilySpec::new("alpha_pinned")
            .param("alpha", 2.0)
            .build()
            .unwrap();
        let grid = make_grid(16, GridMode::Geometric, 0.99).unwrap();
        let r = monte_carlo(&ap, 0.7, 0.0, &grid, 5000, 1, Method::Exact).unwrap();
        assert_eq!(r.mean[0], 0.7);
        assert_eq!(r.variance[0], 0.0);
        assert_eq!(r.se_mean[0], 0.0);
        for (se, v) in r.se_mean.iter().zip(&r.variance) {
            assert!((se - (v / 5000.0).sqrt()).abs() <= 1e-15 * se.max(1.0));
        }
    }
}
