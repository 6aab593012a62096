//! Decision procedures on pinned families.
//!
//! * [`check_pinning`]: the sufficient conditions "h bounded below with
//!   divergent integral" and "finite total dispersion", the necessity of the
//!   divergence, and the stronger exponential-weight condition checked by
//!   [`check_a2_prime`].
//! * [`identify_gaussian_bridge`]: a pinned family is the bridge family of the
//!   Gaussian Markov process `dZ = sigma dB` iff `Sigma < inf` and
//!   `h = sigma^2 / (Sigma - S)`.
//! * [`reciprocal_char`] / [`same_bridges`]: reciprocal characteristics
//!   `(F, rho^2)` of Ito diffusions, with
//!   `F = d_t(b/rho^2) + 1/2 d_z((b/rho)^2 + rho^2 d_z(b/rho^2))`.
//! * [`bridge_ode_residual`] and [`kappa_profile`]: two further routes to the
//!   same dichotomy, via `h' = h^2 + h d_t log sigma^2` and via the
//!   `y`-dependence of `F` for the pinned drift `b = h (y - z)`.
//!
//! Everything analytic is only probed on finite grids; verdicts name their
//! evidence accordingly.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::funcs::{fd_derivative, DiffusionFamily};
use crate::quad::{
    improper_to_one, CalculusCache, ImproperKind, SigmaTotal, DEFAULT_REL_TOL, DIVERGENCE_CAP,
};
use crate::{Error, Result, T_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentConfig {
    pub quad_tol: f64,
    /// Residual threshold for a positive identification; residuals in
    /// `(tol_ident, gray_factor * tol_ident)` are undecidable.
    pub tol_ident: f64,
    pub gray_factor: f64,
    /// `inf h` over the probe grid must exceed `-a1_cap`.
    pub a1_cap: f64,
    pub a1_probe_points: usize,
    pub divergence_cap: f64,
    pub probe_nodes: usize,
    pub probe_t_max: f64,
    pub a2_prime_deltas: Vec<f64>,
    /// Sup-norm threshold on the scaled ODE and kappa residuals.
    pub zero_tol: f64,
    /// Probe nodes with `Sigma - S(t) <= sigma_gap_guard * quad_tol` are skipped.
    pub sigma_gap_guard: f64,
}

impl Default for IdentConfig {
    fn default() -> Self {
        Self {
            quad_tol: DEFAULT_REL_TOL,
            tol_ident: 1e-7,
            gray_factor: 10.0,
            a1_cap: 1e6,
            a1_probe_points: 10_000,
            divergence_cap: DIVERGENCE_CAP,
            probe_nodes: 64,
            probe_t_max: 1.0 - 1e-6,
            a2_prime_deltas: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            zero_tol: 1e-6,
            sigma_gap_guard: 1e3,
        }
    }
}

impl IdentConfig {
    /// Time probes `1 - (1 - probe_t_max)^(k / (n - 1))`, from 0 to `probe_t_max`.
    pub fn probe_times(&self) -> Vec<f64> {
        let n = self.probe_nodes.max(2);
        let log_gap = (1.0 - self.probe_t_max).ln();
        (0..n)
            .map(|k| -(log_gap * k as f64 / (n - 1) as f64).exp_m1())
            .collect()
    }

    pub fn probe_set(&self) -> ProbeSet {
        ProbeSet {
            times: self.probe_times(),
            zs: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        }
    }
}

/// Space-time probe points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub times: Vec<f64>,
    pub zs: Vec<f64>,
}

impl ProbeSet {
    /// Adds `y - 1, y, y + 1` for each pin target.
    pub fn with_y_offsets(mut self, ys: &[f64]) -> Self {
        for &y in ys {
            for z in [y - 1.0, y, y + 1.0] {
                if !self.zs.contains(&z) {
                    self.zs.push(z);
                }
            }
        }
        self.zs.sort_by(f64::total_cmp);
        self
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times
            .iter()
            .flat_map(move |&t| self.zs.iter().map(move |&z| (t, z)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    EvidenceHolds,
    EvidenceFails,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PinningOutcome {
    #[serde(rename = "pinned_by_A1A2")]
    PinnedByA1A2,
    #[serde(rename = "not_pinned_necessity_fails")]
    NotPinnedNecessityFails,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

/// `sup_t phi(t)^(2 delta) I(t)` for one `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A2PrimeProfile {
    pub delta: f64,
    pub outcome: Condition,
    /// `None` once the profile overflowed.
    pub sup: Option<f64>,
    /// `(t, value)` up to the first non-finite value.
    pub profile: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinningVerdict {
    pub a1_lower_bound: Evidence,
    pub h_inf: f64,
    pub a1_divergence: ImproperKind,
    pub a2: ImproperKind,
    pub sigma_total: SigmaTotal,
    pub a2_prime: Condition,
    pub a2_prime_profiles: Vec<A2PrimeProfile>,
    pub overall: PinningOutcome,
}

pub fn check_pinning(family: &DiffusionFamily, cfg: &IdentConfig) -> Result<PinningVerdict> {
    let cache = CalculusCache::with_tolerance(family, cfg.quad_tol);
    check_pinning_with(&cache, cfg)
}

pub fn check_pinning_with(cache: &CalculusCache, cfg: &IdentConfig) -> Result<PinningVerdict> {
    let family = cache.family();
    let n = cfg.a1_probe_points.max(2);
    let h_inf = (0..n)
        .map(|k| family.h.value(T_MAX * k as f64 / (n - 1) as f64))
        .fold(f64::INFINITY, f64::min);
    let a1_lower_bound = if h_inf.is_finite() && h_inf > -cfg.a1_cap {
        Evidence::EvidenceHolds
    } else {
        Evidence::EvidenceFails
    };
    let a1_divergence = improper_to_one(&family.h, cfg.quad_tol)?.kind;
    let a2 = cache.sigma_improper()?.kind;
    let sigma_total = cache.big_sigma()?;
    let a2_prime_profiles = a2_prime_profiles(cache, &cfg.a2_prime_deltas, cfg)?;
    let a2_prime = if a2_prime_profiles
        .iter()
        .any(|p| p.outcome == Condition::Holds)
    {
        Condition::Holds
    } else if a2_prime_profiles
        .iter()
        .all(|p| p.outcome == Condition::Fails)
    {
        Condition::Fails
    } else {
        Condition::Inconclusive
    };
    let overall = if a1_divergence == ImproperKind::Finite {
        PinningOutcome::NotPinnedNecessityFails
    } else if a1_lower_bound == Evidence::EvidenceHolds
        && a1_divergence == ImproperKind::Divergent
        && a2 == ImproperKind::Finite
    {
        PinningOutcome::PinnedByA1A2
    } else {
        PinningOutcome::Inconclusive
    };
    Ok(PinningVerdict {
        a1_lower_bound,
        h_inf,
        a1_divergence,
        a2,
        sigma_total,
        a2_prime,
        a2_prime_profiles,
        overall,
    })
}

/// Profiles of `exp(-2 delta H(t)) int_0^t exp(2 H) sigma^2` over the probe
/// times, one per `delta` in `(0, 1)`.
pub fn check_a2_prime(
    family: &DiffusionFamily,
    deltas: &[f64],
    cfg: &IdentConfig,
) -> Result<Vec<A2PrimeProfile>> {
    let cache = CalculusCache::with_tolerance(family, cfg.quad_tol);
    a2_prime_profiles(&cache, deltas, cfg)
}

fn a2_prime_profiles(
    cache: &CalculusCache,
    deltas: &[f64],
    cfg: &IdentConfig,
) -> Result<Vec<A2PrimeProfile>> {
    if let Some(&d) = deltas.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::Precondition(format!(
            "delta must lie in (0, 1), got {d}"
        )));
    }
    let times = cfg.probe_times();
    // phi(t)^(2 delta) I(t) = Var(X_t) * exp(2 (1 - delta) H(t)), which only
    // overflows when the profile itself does
    // Var(X_t) by the Markov recursion over successive probe intervals
    let mut base = Vec::with_capacity(times.len());
    let mut failure = None;
    let mut prev: Option<(f64, f64)> = None;
    for &t in &times {
        let v = match prev {
            None => cache.variance(t),
            Some((s, var)) => cache
                .transition_variance(s, t)
                .and_then(|inc| Ok(cache.phi_ratio(s, t)?.powi(2) * var + inc)),
        }
        .and_then(|v| Ok((v, cache.cum_h(t)?)));
        prev = v.as_ref().ok().map(|&(var, _)| (t, var));
        match v {
            Ok(pair) => base.push((t, pair)),
            Err(e) => {
                failure = Some(format!("inner integral failed at t = {t}: {e}"));
                break;
            }
        }
    }
    Ok(deltas
        .iter()
        .map(|&delta| {
            let mut profile = Vec::with_capacity(base.len());
            let mut note = failure.clone();
            for &(t, (var, h)) in &base {
                let value = var * (2.0 * (1.0 - delta) * h).exp();
                if !value.is_finite() {
                    note.get_or_insert_with(|| format!("profile overflowed at t = {t}"));
                    break;
                }
                profile.push((t, value));
            }
            let exploded = note.is_some();
            let sup = profile.iter().map(|p| p.1).fold(0.0, f64::max);
            let outcome = if exploded || sup > cfg.divergence_cap {
                Condition::Fails
            } else {
                let head = profile.len() * 3 / 4;
                let head_max = profile[..head.max(1)]
                    .iter()
                    .map(|p| p.1)
                    .fold(0.0, f64::max);
                let last = profile.last().map_or(0.0, |p| p.1);
                if last <= (1.0 + 1e-3) * head_max {
                    Condition::Holds
                } else {
                    Condition::Inconclusive
                }
            };
            A2PrimeProfile {
                delta,
                outcome,
                sup: (!exploded).then_some(sup),
                profile,
                note,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeVerdict {
    IsBridgeFamily,
    NotBridgeFamily,
    Undecidable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualNode {
    pub t: f64,
    /// `None` where `Sigma - S(t)` is too small to evaluate the prediction.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub sigma_total: SigmaTotal,
    /// `sup_t |h(t) - q(t)| / max(1, |q(t)|)` with `q = sigma^2 / (Sigma - S)`.
    pub residual: f64,
    pub residual_profile: Vec<ResidualNode>,
    pub excluded_nodes: usize,
    pub verdict: BridgeVerdict,
    pub identified_process: Option<String>,
    pub warnings: Vec<String>,
    pub tol_ident: f64,
}

/// Requires a family that passes [`check_pinning`].
pub fn identify_gaussian_bridge(
    family: &DiffusionFamily,
    cfg: &IdentConfig,
) -> Result<IdentificationReport> {
    let cache = CalculusCache::with_tolerance(family, cfg.quad_tol);
    let pinning = check_pinning_with(&cache, cfg)?;
    if pinning.overall != PinningOutcome::PinnedByA1A2 {
        return Err(Error::Precondition(format!(
            "`{}` is not established as a pinned family ({:?})",
            family.name, pinning.overall
        )));
    }
    identify_with(&cache, cfg)
}

pub fn identify_with(cache: &CalculusCache, cfg: &IdentConfig) -> Result<IdentificationReport> {
    let family = cache.family();
    let sigma_total = cache.big_sigma()?;
    let mut warnings = Vec::new();
    let total = match sigma_total {
        SigmaTotal::Finite(v) => v,
        other => {
            let verdict = if other == SigmaTotal::Infinite {
                BridgeVerdict::NotBridgeFamily
            } else {
                BridgeVerdict::Undecidable
            };
            return Ok(IdentificationReport {
                sigma_total,
                residual: f64::INFINITY,
                residual_profile: Vec::new(),
                excluded_nodes: 0,
                verdict,
                identified_process: None,
                warnings,
                tol_ident: cfg.tol_ident,
            });
        }
    };
    let mut profile = Vec::new();
    let mut excluded = 0;
    let mut residual: f64 = 0.0;
    let mut degenerate = false;
    for t in cfg.probe_times() {
        let s = cache.cum_sigma_sq(t)?;
        if t >= 0.01 && s < 10.0 * cfg.quad_tol {
            degenerate = true;
        }
        let gap = total - s;
        if gap <= cfg.sigma_gap_guard * cfg.quad_tol {
            excluded += 1;
            profile.push(ResidualNode { t, residual: None });
            continue;
        }
        let predicted = family.sigma_sq.eval(t)? / gap;
        let r = (family.h.eval(t)? - predicted).abs() / predicted.abs().max(1.0);
        residual = residual.max(r);
        profile.push(ResidualNode {
            t,
            residual: Some(r),
        });
    }
    if excluded > 0 {
        warnings.push(format!(
            "{excluded} probe nodes skipped where Sigma - S(t) vanishes"
        ));
    }
    if degenerate {
        warnings.push(
            "Var(Z_t) = S(t) is numerically zero for some t >= 0.01: Z may be degenerate".into(),
        );
    }
    let verdict = if residual <= cfg.tol_ident {
        BridgeVerdict::IsBridgeFamily
    } else if residual >= cfg.gray_factor * cfg.tol_ident {
        BridgeVerdict::NotBridgeFamily
    } else {
        BridgeVerdict::Undecidable
    };
    Ok(IdentificationReport {
        sigma_total,
        residual,
        residual_profile: profile,
        excluded_nodes: excluded,
        verdict,
        identified_process: (verdict == BridgeVerdict::IsBridgeFamily).then(|| {
            format!(
                "dZ_t = sigma(t) dB_t with sigma = `{}` of {}, Var(Z_1) = Sigma = {total}",
                family.sigma.label(),
                family.name
            )
        }),
        warnings,
        tol_ident: cfg.tol_ident,
    })
}

pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Closed-form partial derivatives of drift and squared dispersion.
#[derive(Clone)]
pub struct ItoPartials {
    pub b_t: SpaceTimeFn,
    pub b_z: SpaceTimeFn,
    pub b_zz: SpaceTimeFn,
    pub rho_sq_t: SpaceTimeFn,
    pub rho_sq_z: SpaceTimeFn,
    pub rho_sq_zz: SpaceTimeFn,
}

/// The smooth positive transition density required of a regular Ito
/// diffusion cannot be checked numerically; it is carried as an assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityAssumption {
    AssertedByUser,
}

/// `dZ = b(t, Z) dt + rho(t, Z) dB`.
#[derive(Clone)]
pub struct ItoSpec {
    pub label: String,
    pub drift: SpaceTimeFn,
    pub dispersion: SpaceTimeFn,
    pub partials: Option<ItoPartials>,
    pub density_assumption: DensityAssumption,
}

impl std::fmt::Debug for ItoSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ItoSpec")
            .field("label", &self.label)
            .field("partials", &self.partials.is_some())
            .finish()
    }
}

fn zero() -> SpaceTimeFn {
    Arc::new(|_, _| 0.0)
}

impl ItoSpec {
    pub fn new(
        label: impl Into<String>,
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dispersion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            drift: Arc::new(drift),
            dispersion: Arc::new(dispersion),
            partials: None,
            density_assumption: DensityAssumption::AssertedByUser,
        }
    }

    pub fn with_partials(mut self, partials: ItoPartials) -> Self {
        self.partials = Some(partials);
        self
    }

    pub fn without_partials(mut self) -> Self {
        self.partials = None;
        self
    }

    /// `dZ = sigma(t) dB`.
    pub fn driftless(family: &DiffusionFamily) -> Self {
        let sigma = family.sigma.clone();
        let spec = Self::new(
            format!("0 drift, sigma of {}", family.name),
            |_, _| 0.0,
            move |t, _| sigma.value(t),
        );
        if family.sigma_sq.has_derivative() {
            let s2 = family.sigma_sq.clone();
            spec.with_partials(ItoPartials {
                b_t: zero(),
                b_z: zero(),
                b_zz: zero(),
                rho_sq_t: Arc::new(move |t, _| s2.derivative(t).unwrap_or(f64::NAN)),
                rho_sq_z: zero(),
                rho_sq_zz: zero(),
            })
        } else {
            spec
        }
    }

    /// The pinned drift `b(t, z) = h(t) (y - z)` with `rho = sigma(t)`.
    pub fn pinned_drift(family: &DiffusionFamily, y: f64) -> Self {
        let (h, sigma) = (family.h.clone(), family.sigma.clone());
        let spec = Self::new(
            format!("pinned drift of {} toward y = {y}", family.name),
            move |t, z| h.value(t) * (y - z),
            move |t, _| sigma.value(t),
        );
        if family.h.has_derivative() && family.sigma_sq.has_derivative() {
            let (h1, h2, s2) = (family.h.clone(), family.h.clone(), family.sigma_sq.clone());
            spec.with_partials(ItoPartials {
                b_t: Arc::new(move |t, z| h1.derivative(t).unwrap_or(f64::NAN) * (y - z)),
                b_z: Arc::new(move |t, _| -h2.value(t)),
                b_zz: zero(),
                rho_sq_t: Arc::new(move |t, _| s2.derivative(t).unwrap_or(f64::NAN)),
                rho_sq_z: zero(),
                rho_sq_zz: zero(),
            })
        } else {
            spec
        }
    }

    fn rho_sq(&self, t: f64, z: f64) -> f64 {
        let r = (self.dispersion)(t, z);
        r * r
    }
}

/// The three terms of `F = time + drift/2 + curvature/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTerms {
    /// `d_t (b / rho^2)`
    pub time: f64,
    /// `d_z (b / rho)^2`
    pub drift: f64,
    /// `d_z (rho^2 d_z (b / rho^2))`
    pub curvature: f64,
}

impl FTerms {
    pub fn value(&self) -> f64 {
        self.time + 0.5 * (self.drift + self.curvature)
    }

    /// Magnitude of the summands, the natural scale for comparing values of `F`.
    pub fn scale(&self) -> f64 {
        self.time.abs() + 0.5 * (self.drift.abs() + self.curvature.abs())
    }
}

/// Reciprocal characteristics `(F, rho^2)` of an Ito diffusion.
#[derive(Debug, Clone)]
pub struct ReciprocalChar {
    spec: ItoSpec,
}

/// `z` step for difference quotients.
pub fn fd_space_step(z: f64) -> f64 {
    1e-3 * z.abs().max(1.0)
}

fn central_z(f: &dyn Fn(f64) -> f64, z: f64) -> f64 {
    let step = fd_space_step(z);
    let d = |s: f64| (f(z + s) - f(z - s)) / (2.0 * s);
    (4.0 * d(0.5 * step) - d(step)) / 3.0
}

fn second_z(f: &dyn Fn(f64) -> f64, z: f64) -> f64 {
    let step = fd_space_step(z);
    let fz = f(z);
    let d = |s: f64| (f(z + s) - 2.0 * fz + f(z - s)) / (s * s);
    (4.0 * d(0.5 * step) - d(step)) / 3.0
}

impl ReciprocalChar {
    pub fn spec(&self) -> &ItoSpec {
        &self.spec
    }

    pub fn rho_sq(&self, t: f64, z: f64) -> f64 {
        self.spec.rho_sq(t, z)
    }

    /// Terms from closed-form partials when available, else finite differences.
    pub fn terms(&self, t: f64, z: f64) -> Result<FTerms> {
        match self.analytic_terms(t, z) {
            Some(terms) => checked_terms(terms, t, z),
            None => self.fd_terms(t, z),
        }
    }

    pub fn f(&self, t: f64, z: f64) -> Result<f64> {
        Ok(self.terms(t, z)?.value())
    }

    pub fn analytic_terms(&self, t: f64, z: f64) -> Option<FTerms> {
        let p = self.spec.partials.as_ref()?;
        let b = (self.spec.drift)(t, z);
        let rho2 = self.spec.rho_sq(t, z);
        let (b_t, b_z, b_zz) = ((p.b_t)(t, z), (p.b_z)(t, z), (p.b_zz)(t, z));
        let (r_t, r_z, r_zz) = ((p.rho_sq_t)(t, z), (p.rho_sq_z)(t, z), (p.rho_sq_zz)(t, z));
        let rho4 = rho2 * rho2;
        Some(FTerms {
            time: (b_t * rho2 - b * r_t) / rho4,
            drift: (2.0 * b * b_z * rho2 - b * b * r_z) / rho4,
            curvature: b_zz - (b_z * r_z + b * r_zz) / rho2 + b * r_z * r_z / rho4,
        })
    }

    /// Finite differences regardless of any closed-form partials.
    pub fn fd_terms(&self, t: f64, z: f64) -> Result<FTerms> {
        let spec = &self.spec;
        let ratio = |t: f64, z: f64| (spec.drift)(t, z) / spec.rho_sq(t, z);
        let time = fd_derivative(&|s| ratio(s, z), t);
        let drift = central_z(&|w| (spec.drift)(t, w).powi(2) / spec.rho_sq(t, w), z);
        let rho2 = spec.rho_sq(t, z);
        let rho2_z = central_z(&|w| spec.rho_sq(t, w), z);
        let ratio_z = central_z(&|w| ratio(t, w), z);
        let ratio_zz = second_z(&|w| ratio(t, w), z);
        checked_terms(
            FTerms {
                time,
                drift,
                curvature: rho2_z * ratio_z + rho2 * ratio_zz,
            },
            t,
            z,
        )
    }
}

fn checked_terms(terms: FTerms, t: f64, z: f64) -> Result<FTerms> {
    for (name, v) in [
        ("time", terms.time),
        ("drift", terms.drift),
        ("curvature", terms.curvature),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: format!("{name} term of F at z = {z}"),
                t,
                value: v,
            });
        }
    }
    Ok(terms)
}

/// Validates positivity and finiteness of `rho` on the probe set.
pub fn reciprocal_char(spec: &ItoSpec, probe: &ProbeSet) -> Result<ReciprocalChar> {
    for (t, z) in probe.points() {
        let r = (spec.dispersion)(t, z);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Precondition(format!(
                "dispersion of `{}` must be positive, got {r} at (t, z) = ({t}, {z})",
                spec.label
            )));
        }
        let b = (spec.drift)(t, z);
        if !b.is_finite() {
            return Err(Error::NonFinite {
                what: format!("drift of `{}` at z = {z}", spec.label),
                t,
                value: b,
            });
        }
    }
    Ok(ReciprocalChar { spec: spec.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SameBridges {
    pub same: bool,
    pub max_rho_sq_gap: f64,
    pub max_f_gap: f64,
    /// Gaps relative to `max(1, scale)`; these decide `same`.
    pub max_rho_sq_gap_scaled: f64,
    pub max_f_gap_scaled: f64,
    pub worst_f_point: (f64, f64),
}

/// Compares `(F, rho^2)` of two specs over the probe set.
pub fn same_bridges(
    spec1: &ItoSpec,
    spec2: &ItoSpec,
    probe: &ProbeSet,
    tol: f64,
) -> Result<SameBridges> {
    let (c1, c2) = (
        reciprocal_char(spec1, probe)?,
        reciprocal_char(spec2, probe)?,
    );
    let mut out = SameBridges {
        same: false,
        max_rho_sq_gap: 0.0,
        max_f_gap: 0.0,
        max_rho_sq_gap_scaled: 0.0,
        max_f_gap_scaled: 0.0,
        worst_f_point: (probe.times[0], probe.zs[0]),
    };
    for (t, z) in probe.points() {
        let (r1, r2) = (c1.rho_sq(t, z), c2.rho_sq(t, z));
        let gap = (r1 - r2).abs();
        out.max_rho_sq_gap = out.max_rho_sq_gap.max(gap);
        out.max_rho_sq_gap_scaled = out
            .max_rho_sq_gap_scaled
            .max(gap / r1.abs().max(r2.abs()).max(1.0));
        let (f1, f2) = (c1.terms(t, z)?, c2.terms(t, z)?);
        let gap = (f1.value() - f2.value()).abs();
        out.max_f_gap = out.max_f_gap.max(gap);
        let scaled = gap / f1.scale().max(f2.scale()).max(1.0);
        if scaled > out.max_f_gap_scaled {
            out.max_f_gap_scaled = scaled;
            out.worst_f_point = (t, z);
        }
    }
    out.same = out.max_rho_sq_gap_scaled <= tol && out.max_f_gap_scaled <= tol;
    Ok(out)
}

/// Per-node profile with a sup-norm, raw and scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledProfile {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub scaled: Vec<f64>,
    pub sup_abs: f64,
    pub sup_scaled: f64,
}

impl ScaledProfile {
    fn from_pairs(nodes: Vec<f64>, pairs: Vec<(f64, f64)>) -> Self {
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let scaled: Vec<f64> = pairs.iter().map(|p| p.0 / p.1.max(1.0)).collect();
        Self {
            sup_abs: values.iter().fold(0.0, |m, v| m.max(v.abs())),
            sup_scaled: scaled.iter().fold(0.0, |m, v| m.max(v.abs())),
            nodes,
            values,
            scaled,
        }
    }
}

/// `h' - h^2 - h g` with `g = d_t log sigma^2`, scaled by the largest of
/// `|h'|`, `h^2`, `|h g|`.
pub fn bridge_ode_residual(family: &DiffusionFamily, times: &[f64]) -> Result<ScaledProfile> {
    let mut pairs = Vec::with_capacity(times.len());
    for &t in times {
        let h = family.h.eval(t)?;
        let dh = family.h.derivative(t)?;
        let g = family.sigma_sq.derivative(t)? / family.sigma_sq.eval(t)?;
        let scale = dh.abs().max(h * h).max((h * g).abs());
        pairs.push((dh - h * h - h * g, scale));
    }
    Ok(ScaledProfile::from_pairs(times.to_vec(), pairs))
}

/// `kappa(t) = F_{y=1}(t, 0) - F_{y=0}(t, 0)` for the pinned drift. Since
/// `F_y(t, z) = kappa(t) (y - z)`, bridges are `y`-independent iff kappa
/// vanishes.
pub fn kappa_profile(
    family: &DiffusionFamily,
    times: &[f64],
    use_partials: bool,
) -> Result<ScaledProfile> {
    let probe = ProbeSet {
        times: times.to_vec(),
        zs: vec![0.0],
    };
    let mut specs = [
        ItoSpec::pinned_drift(family, 1.0),
        ItoSpec::pinned_drift(family, 0.0),
    ];
    if !use_partials {
        specs = specs.map(ItoSpec::without_partials);
    }
    let one = reciprocal_char(&specs[0], &probe)?;
    let zero = reciprocal_char(&specs[1], &probe)?;
    let mut pairs = Vec::with_capacity(times.len());
    for &t in times {
        let (a, b) = (one.terms(t, 0.0)?, zero.terms(t, 0.0)?);
        pairs.push((a.value() - b.value(), a.scale().max(b.scale())));
    }
    Ok(ScaledProfile::from_pairs(times.to_vec(), pairs))
}

/// Verdicts of the three independent bridge criteria on one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteConsistency {
    pub identification: BridgeVerdict,
    pub identification_residual: f64,
    pub ode_sup_scaled: f64,
    pub kappa_sup_scaled: f64,
    pub ode_zero: bool,
    pub kappa_zero: bool,
    pub agree: bool,
}

pub fn route_consistency(family: &DiffusionFamily, cfg: &IdentConfig) -> Result<RouteConsistency> {
    let report = identify_gaussian_bridge(family, cfg)?;
    let times = cfg.probe_times();
    let ode = bridge_ode_residual(family, &times)?;
    let kappa = kappa_profile(family, &times, true)?;
    let ode_zero = ode.sup_scaled <= cfg.zero_tol;
    let kappa_zero = kappa.sup_scaled <= cfg.zero_tol;
    let positive = report.verdict == BridgeVerdict::IsBridgeFamily;
    Ok(RouteConsistency {
        agree: report.verdict != BridgeVerdict::Undecidable
            && positive == ode_zero
            && ode_zero == kappa_zero,
        identification: report.verdict,
        identification_residual: report.residual,
        ode_sup_scaled: ode.sup_scaled,
        kappa_sup_scaled: kappa.sup_scaled,
        ode_zero,
        kappa_zero,
    })
}
