//! Time-dependent coefficients and the registry of built-in pinned families.
//!
//! A [`TimeFunction`] is an evaluator on `[0, 1)` with optional closed-form
//! derivative and antiderivative `t -> int_0^t f`. Downstream modules prefer
//! the closed forms when present and fall back to finite differences and
//! quadrature otherwise, so custom families built from bare callbacks work
//! everywhere.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{check_time, Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative step used by [`fd_derivative`]. The step shrinks with the
/// distance to the singular endpoint.
pub const FD_REL_STEP: f64 = 1e-3;

#[derive(Clone)]
pub struct TimeFunction {
    label: String,
    eval: ScalarFn,
    derivative: Option<ScalarFn>,
    antiderivative: Option<ScalarFn>,
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeFunction")
            .field("label", &self.label)
            .field("derivative", &self.derivative.is_some())
            .field("antiderivative", &self.antiderivative.is_some())
            .finish()
    }
}

impl TimeFunction {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
            derivative: None,
            antiderivative: None,
        }
    }

    pub fn constant(label: impl Into<String>, c: f64) -> Self {
        Self::new(label, move |_| c)
            .with_derivative(|_| 0.0)
            .with_antiderivative(move |t| c * t)
    }

    pub fn with_derivative(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    /// `anti(t)` must equal `int_0^t f(r) dr`, in particular `anti(0) = 0`.
    pub fn with_antiderivative(
        mut self,
        anti: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.antiderivative = Some(Arc::new(anti));
        self
    }

    /// Drops the closed-form calculus, leaving only the evaluator.
    pub fn without_calculus(&self) -> Self {
        Self {
            label: self.label.clone(),
            eval: self.eval.clone(),
            derivative: None,
            antiderivative: None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn has_antiderivative(&self) -> bool {
        self.antiderivative.is_some()
    }

    /// Unchecked evaluation. Used internally by quadrature and difference
    /// stencils that may step marginally outside the checked domain.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        finite(&self.label, t, self.value(t))
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let d = match &self.derivative {
            Some(d) => d(t),
            None => fd_derivative(&*self.eval, t),
        };
        finite(&format!("d/dt {}", self.label), t, d)
    }

    /// Finite-difference derivative regardless of any analytic derivative.
    pub fn fd_derivative(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        finite(
            &format!("d/dt {}", self.label),
            t,
            fd_derivative(&*self.eval, t),
        )
    }

    /// Closed-form `int_0^t f`, if one was supplied.
    pub fn antiderivative(&self, t: f64) -> Option<f64> {
        self.antiderivative.as_ref().map(|a| a(t))
    }

    pub(crate) fn evaluator(&self) -> &ScalarFn {
        &self.eval
    }
}

fn finite(what: &str, t: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            t,
            value: v,
        })
    }
}

/// Time step for difference quotients at `t`.
pub fn fd_step(t: f64) -> f64 {
    FD_REL_STEP * (1.0 - t)
}

/// Central difference with one Richardson level; falls back to a one-sided
/// three-point stencil when the central stencil would cross `t = 0`.
pub fn fd_derivative(f: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    let step = fd_step(t);
    let quotient = |d: f64| {
        if t - d >= 0.0 {
            (f(t + d) - f(t - d)) / (2.0 * d)
        } else {
            (-3.0 * f(t) + 4.0 * f(t + d) - f(t + 2.0 * d)) / (2.0 * d)
        }
    };
    let coarse = quotient(step);
    let fine = quotient(0.5 * step);
    (4.0 * fine - coarse) / 3.0
}

/// Serializable description of a built-in family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl FamilySpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    pub fn build(&self) -> Result<DiffusionFamily> {
        make_family(&self.name, &self.params)
    }
}

/// The pair `(h, sigma)` of a pinned SDE plus metadata.
///
/// `sigma_sq` is carried separately so that built-ins can supply a closed form
/// for `S(t) = int_0^t sigma^2`. `ito_integral` optionally holds a closed form
/// for `I(t) = int_0^t sigma^2 / phi^2`.
#[derive(Clone, Debug)]
pub struct DiffusionFamily {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub h: TimeFunction,
    pub sigma: TimeFunction,
    pub sigma_sq: TimeFunction,
    pub ito_integral: Option<TimeFunction>,
    spec: Option<FamilySpec>,
}

/// Probe grid used for the positivity and continuity checks.
const PROBE_POINTS: usize = 1000;
const PROBE_END: f64 = 1.0 - 1e-3;

impl DiffusionFamily {
    /// Custom family from evaluator callbacks. Closed-form calculus attached
    /// to `h` and `sigma` is kept; `sigma^2` gets none.
    pub fn custom(name: impl Into<String>, h: TimeFunction, sigma: TimeFunction) -> Result<Self> {
        let sigma_sq = {
            let s = sigma.evaluator().clone();
            let sq = TimeFunction::new(format!("{}^2", sigma.label()), move |t| {
                let v = s(t);
                v * v
            });
            match &sigma.derivative {
                Some(ds) => {
                    let (s, ds) = (sigma.evaluator().clone(), ds.clone());
                    sq.with_derivative(move |t| 2.0 * s(t) * ds(t))
                }
                None => sq,
            }
        };
        let family = Self {
            name: name.into(),
            params: BTreeMap::new(),
            h,
            sigma,
            sigma_sq,
            ito_integral: None,
            spec: None,
        };
        family.validate()?;
        Ok(family)
    }

    fn builtin(
        spec: FamilySpec,
        h: TimeFunction,
        sigma: TimeFunction,
        sigma_sq: TimeFunction,
        ito_integral: Option<TimeFunction>,
    ) -> Self {
        Self {
            name: spec.name.clone(),
            params: spec.params.clone(),
            h,
            sigma,
            sigma_sq,
            ito_integral,
            spec: Some(spec),
        }
    }

    /// The serializable spec, `None` for custom families.
    pub fn spec(&self) -> Option<&FamilySpec> {
        self.spec.as_ref()
    }

    /// Same coefficients with every closed form removed, so that all
    /// calculus runs through quadrature and finite differences.
    pub fn numeric_only(&self) -> Self {
        let sigma = self.sigma.without_calculus();
        let sigma_sq = self.sigma_sq.without_calculus();
        Self {
            name: format!("{} (numeric)", self.name),
            params: self.params.clone(),
            h: self.h.without_calculus(),
            sigma,
            sigma_sq,
            ito_integral: None,
            spec: None,
        }
    }

    /// Positivity of `sigma` and a continuity heuristic for both coefficients.
    pub fn validate(&self) -> Result<()> {
        for k in 0..=PROBE_POINTS {
            let t = PROBE_END * k as f64 / PROBE_POINTS as f64;
            let s = self.sigma.value(t);
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid_param(
                    "sigma",
                    format!("must be strictly positive and finite, got {s} at t = {t}"),
                ));
            }
            let h = self.h.value(t);
            if !h.is_finite() {
                return Err(Error::NonFinite {
                    what: "h".into(),
                    t,
                    value: h,
                });
            }
        }
        for (name, f) in [("h", &self.h), ("sigma", &self.sigma)] {
            if let Some(t) = find_jump(f, PROBE_POINTS, PROBE_END, DEFAULT_JUMP_THRESHOLD) {
                return Err(Error::invalid_param(
                    name,
                    format!("must be continuous on [0, 1); jump detected near t = {t:.6}"),
                ));
            }
        }
        Ok(())
    }
}

/// Relative jump size (against `max(1, |f|)`) that survives bisection and is
/// reported as a discontinuity.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 1e-2;

/// Scans `n` panels of `[0, end]` and bisects any panel whose increment
/// exceeds the threshold. A continuous function's increment vanishes under
/// bisection; a jump does not. Returns the location of the first jump found.
pub fn find_jump(f: &TimeFunction, n: usize, end: f64, threshold: f64) -> Option<f64> {
    let scaled_gap = |a: f64, b: f64| {
        let (fa, fb) = (f.value(a), f.value(b));
        (fb - fa).abs() / fa.abs().max(fb.abs()).max(1.0)
    };
    for k in 0..n {
        let mut a = end * k as f64 / n as f64;
        let mut b = end * (k + 1) as f64 / n as f64;
        if scaled_gap(a, b) <= threshold {
            continue;
        }
        for _ in 0..40 {
            let m = 0.5 * (a + b);
            if scaled_gap(a, m) >= scaled_gap(m, b) {
                b = m;
            } else {
                a = m;
            }
        }
        if scaled_gap(a, b) > threshold {
            return Some(0.5 * (a + b));
        }
    }
    None
}

/// Names accepted by [`make_family`].
pub const FAMILY_NAMES: [&str; 6] = [
    "brownian_bridge",
    "alpha_pinned",
    "alpha_gamma_pinned",
    "f_wiener",
    "remark24",
    "custom",
];

/// One-line descriptions for listings.
pub fn family_descriptions() -> Vec<(&'static str, &'static str)> {
    vec![
        ("brownian_bridge", "h = 1/(1-t), sigma = 1; no parameters"),
        (
            "alpha_pinned",
            "h = alpha(t)/(1-t), sigma = 1; `alpha` > 0 constant, or knots `alpha_0`..`alpha_m` on an even grid (linear interpolation, alpha(1) > 0)",
        ),
        (
            "alpha_gamma_pinned",
            "h = alpha/(1-t)^(1+gamma), sigma = 1; `alpha` > 0 (default 1), `gamma` >= 0 (default 0)",
        ),
        (
            "f_wiener",
            "h = f/(1-F), sigma = sqrt(f) for f(t) = (1 + a t)/(1 + a/2); `slope` a in {0 (uniform), 1 (linear)} or any a > -1",
        ),
        ("remark24", "h = (2-t)/(1-t)^2, sigma = 1; no parameters"),
        ("custom", "code-level only (DiffusionFamily::custom)"),
    ]
}

/// One canonical instance per registered density or parameter choice used
/// throughout the tests: brownian_bridge, alpha_pinned (alpha = 2),
/// alpha_gamma_pinned (alpha = gamma = 1), f_wiener (uniform and linear), remark24.
pub fn reference_specs() -> Vec<FamilySpec> {
    vec![
        FamilySpec::new("brownian_bridge"),
        FamilySpec::new("alpha_pinned").param("alpha", 2.0),
        FamilySpec::new("alpha_gamma_pinned")
            .param("alpha", 1.0)
            .param("gamma", 1.0),
        FamilySpec::new("f_wiener"),
        FamilySpec::new("f_wiener").param("slope", 1.0),
        FamilySpec::new("remark24"),
    ]
}

/// Builds a registered family from its name and parameters.
pub fn make_family(name: &str, params: &BTreeMap<String, f64>) -> Result<DiffusionFamily> {
    let spec = FamilySpec {
        name: name.to_string(),
        params: params.clone(),
    };
    for (k, v) in params {
        if !v.is_finite() {
            return Err(Error::invalid_param(k, "must be finite"));
        }
    }
    match name {
        "brownian_bridge" => {
            expect_keys(params, &[])?;
            Ok(brownian_bridge(spec))
        }
        "alpha_pinned" => alpha_pinned(spec),
        "alpha_gamma_pinned" => {
            expect_keys(params, &["alpha", "gamma"])?;
            let alpha = params.get("alpha").copied().unwrap_or(1.0);
            let gamma = params.get("gamma").copied().unwrap_or(0.0);
            if alpha <= 0.0 {
                return Err(Error::invalid_param(
                    "alpha",
                    format!("must be > 0, got {alpha}"),
                ));
            }
            if gamma < 0.0 {
                return Err(Error::invalid_param(
                    "gamma",
                    format!("must be >= 0, got {gamma}"),
                ));
            }
            Ok(alpha_gamma_pinned(spec, alpha, gamma))
        }
        "f_wiener" => {
            expect_keys(params, &["slope"])?;
            let slope = params.get("slope").copied().unwrap_or(0.0);
            if slope <= -1.0 {
                return Err(Error::invalid_param(
                    "slope",
                    format!("density must stay positive on [0, 1]: need slope > -1, got {slope}"),
                ));
            }
            Ok(f_wiener(spec, slope))
        }
        "remark24" => {
            expect_keys(params, &[])?;
            Ok(remark24(spec))
        }
        "custom" => Err(Error::invalid_param(
            "name",
            "custom families carry callbacks and are built with DiffusionFamily::custom",
        )),
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

fn expect_keys(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::invalid_param(
            k.clone(),
            format!("not a parameter of this family (allowed: {allowed:?})"),
        )),
        None => Ok(()),
    }
}

fn unit_sigma() -> (TimeFunction, TimeFunction) {
    (
        TimeFunction::constant("sigma", 1.0),
        TimeFunction::constant("sigma^2", 1.0),
    )
}

/// `-log(1 - t)` without cancellation for small `t`.
#[inline]
fn neg_log1m(t: f64) -> f64 {
    -(-t).ln_1p()
}

/// `I(t) = int_0^t (1-r)^(-2 alpha) dr`.
fn power_ito_integral(alpha: f64) -> TimeFunction {
    let e = 1.0 - 2.0 * alpha;
    let f = TimeFunction::new("I", move |t: f64| (1.0 - t).powf(-2.0 * alpha));
    if e.abs() < 1e-12 {
        f.with_antiderivative(neg_log1m)
    } else {
        f.with_antiderivative(move |t: f64| -(e * (-t).ln_1p()).exp_m1() / e)
    }
}

fn brownian_bridge(spec: FamilySpec) -> DiffusionFamily {
    let h = TimeFunction::new("h", |t: f64| 1.0 / (1.0 - t))
        .with_derivative(|t: f64| (1.0 - t).powi(-2))
        .with_antiderivative(neg_log1m);
    let (sigma, sigma_sq) = unit_sigma();
    let ito = TimeFunction::new("I", |t: f64| (1.0 - t).powi(-2))
        .with_antiderivative(|t: f64| t / (1.0 - t));
    DiffusionFamily::builtin(spec, h, sigma, sigma_sq, Some(ito))
}

fn alpha_pinned(spec: FamilySpec) -> Result<DiffusionFamily> {
    let params = &spec.params;
    if let Some(&alpha) = params.get("alpha") {
        expect_keys(params, &["alpha"])?;
        if alpha <= 0.0 {
            return Err(Error::invalid_param(
                "alpha",
                format!("alpha(1) must be > 0, got {alpha}"),
            ));
        }
        let h = TimeFunction::new("h", move |t: f64| alpha / (1.0 - t))
            .with_derivative(move |t: f64| alpha * (1.0 - t).powi(-2))
            .with_antiderivative(move |t: f64| alpha * neg_log1m(t));
        let (sigma, sigma_sq) = unit_sigma();
        return Ok(DiffusionFamily::builtin(
            spec,
            h,
            sigma,
            sigma_sq,
            Some(power_ito_integral(alpha)),
        ));
    }
    let table = AlphaTable::from_params(params)?;
    let table = Arc::new(table);
    let (t1, t2, t3) = (table.clone(), table.clone(), table);
    let h = TimeFunction::new("h", move |t: f64| t1.value(t) / (1.0 - t))
        .with_derivative(move |t: f64| t2.slope(t) / (1.0 - t) + t2.value(t) * (1.0 - t).powi(-2))
        .with_antiderivative(move |t: f64| t3.integral_over_one_minus_t(t));
    let (sigma, sigma_sq) = unit_sigma();
    Ok(DiffusionFamily::builtin(spec, h, sigma, sigma_sq, None))
}

/// Piecewise-linear `alpha(t)` on evenly spaced knots over `[0, 1]`.
#[derive(Debug, Clone)]
struct AlphaTable {
    knots: Vec<f64>,
}

impl AlphaTable {
    fn from_params(params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut indexed = Vec::new();
        for (k, &v) in params {
            let idx = k
                .strip_prefix("alpha_")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::invalid_param(
                        k.clone(),
                        "expected `alpha` or knots `alpha_0`, `alpha_1`, ...",
                    )
                })?;
            indexed.push((idx, v));
        }
        indexed.sort_by_key(|&(i, _)| i);
        if indexed.len() < 2 || indexed.iter().enumerate().any(|(j, &(i, _))| i != j) {
            return Err(Error::invalid_param(
                "alpha",
                "need `alpha` or at least two consecutive knots alpha_0..alpha_m",
            ));
        }
        let knots: Vec<f64> = indexed.into_iter().map(|(_, v)| v).collect();
        let last = *knots.last().unwrap();
        if last <= 0.0 {
            return Err(Error::invalid_param(
                format!("alpha_{}", knots.len() - 1),
                format!("alpha(1) must be > 0, got {last}"),
            ));
        }
        Ok(Self { knots })
    }

    fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let m = self.segments();
        let width = 1.0 / m as f64;
        let j = ((t.max(0.0) / width) as usize).min(m - 1);
        let slope = (self.knots[j + 1] - self.knots[j]) / width;
        let intercept = self.knots[j] - slope * (j as f64 * width);
        (j, intercept, slope)
    }

    fn value(&self, t: f64) -> f64 {
        let (_, c0, c1) = self.locate(t);
        c0 + c1 * t
    }

    fn slope(&self, t: f64) -> f64 {
        self.locate(t).2
    }

    /// `int_0^t alpha(r) / (1 - r) dr`, segment by segment:
    /// `int (c0 + c1 r)/(1 - r) = -(c0 + c1) log(1 - r) - c1 r`.
    fn integral_over_one_minus_t(&self, t: f64) -> f64 {
        let (last, _, _) = self.locate(t);
        let width = 1.0 / self.segments() as f64;
        let mut total = 0.0;
        for j in 0..=last {
            let a = j as f64 * width;
            let b = if j == last { t } else { (j + 1) as f64 * width };
            let (_, c0, c1) = self.locate(a);
            total += (c0 + c1) * (neg_log1m(b) - neg_log1m(a)) - c1 * (b - a);
        }
        total
    }
}

fn alpha_gamma_pinned(spec: FamilySpec, alpha: f64, gamma: f64) -> DiffusionFamily {
    let h = TimeFunction::new("h", move |t: f64| alpha * (1.0 - t).powf(-1.0 - gamma))
        .with_derivative(move |t: f64| alpha * (1.0 + gamma) * (1.0 - t).powf(-2.0 - gamma));
    let h = if gamma == 0.0 {
        h.with_antiderivative(move |t: f64| alpha * neg_log1m(t))
    } else {
        h.with_antiderivative(move |t: f64| alpha / gamma * ((1.0 - t).powf(-gamma) - 1.0))
    };
    let (sigma, sigma_sq) = unit_sigma();
    let ito = (gamma == 0.0).then(|| power_ito_integral(alpha));
    DiffusionFamily::builtin(spec, h, sigma, sigma_sq, ito)
}

/// F-Wiener family for the linear density `f(t) = (1 + a t) / (1 + a/2)`.
/// `1 - F` is kept in the factored form `(1 - t)(1 + a(1 + t)/2) / (1 + a/2)`
/// so it does not cancel near `t = 1`.
fn f_wiener(spec: FamilySpec, a: f64) -> DiffusionFamily {
    let c = 1.0 + 0.5 * a;
    let density = move |t: f64| (1.0 + a * t) / c;
    let survival = move |t: f64| (1.0 - t) * (1.0 + 0.5 * a * (1.0 + t)) / c;
    let cdf = move |t: f64| (t + 0.5 * a * t * t) / c;
    let h = TimeFunction::new("h", move |t: f64| density(t) / survival(t))
        .with_derivative(move |t: f64| {
            let h = density(t) / survival(t);
            (a / c) / survival(t) + h * h
        })
        .with_antiderivative(move |t: f64| neg_log1m(t) - (0.5 * a * (1.0 + t) / c + 1.0 / c).ln());
    let sigma = TimeFunction::new("sigma", move |t: f64| density(t).sqrt())
        .with_derivative(move |t: f64| (a / c) / (2.0 * density(t).sqrt()));
    let sigma_sq = TimeFunction::new("sigma^2", density)
        .with_derivative(move |_| a / c)
        .with_antiderivative(cdf);
    let ito = TimeFunction::new("I", move |t: f64| density(t) / survival(t).powi(2))
        .with_antiderivative(move |t: f64| cdf(t) / survival(t));
    DiffusionFamily::builtin(spec, h, sigma, sigma_sq, Some(ito))
}

fn remark24(spec: FamilySpec) -> DiffusionFamily {
    let h = TimeFunction::new("h", |t: f64| (2.0 - t) * (1.0 - t).powi(-2))
        .with_derivative(|t: f64| (3.0 - t) * (1.0 - t).powi(-3))
        .with_antiderivative(|t: f64| t / (1.0 - t) + neg_log1m(t));
    let (sigma, sigma_sq) = unit_sigma();
    let ito = TimeFunction::new("I", |t: f64| (2.0 * (t / (1.0 - t) + neg_log1m(t))).exp())
        .with_antiderivative(|t: f64| 0.5 * (2.0 * t / (1.0 - t)).exp_m1());
    DiffusionFamily::builtin(spec, h, sigma, sigma_sq, Some(ito))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(name: &str, params: &[(&str, f64)]) -> DiffusionFamily {
        let params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        make_family(name, &params).unwrap()
    }

    fn builtins() -> Vec<DiffusionFamily> {
        vec![
            family("brownian_bridge", &[]),
            family("alpha_pinned", &[("alpha", 2.0)]),
            family("alpha_pinned", &[("alpha", 0.5)]),
            family("alpha_gamma_pinned", &[("alpha", 1.0), ("gamma", 1.0)]),
            family("f_wiener", &[]),
            family("f_wiener", &[("slope", 1.0)]),
            family("remark24", &[]),
        ]
    }

    #[test]
    fn registry_values() {
        let bb = family("brownian_bridge", &[]);
        assert_eq!(bb.h.eval(0.5).unwrap(), 2.0);
        assert_eq!(bb.sigma.eval(0.5).unwrap(), 1.0);
        assert_eq!(bb.sigma.eval(0.3).unwrap(), 1.0);

        let ap = family("alpha_pinned", &[("alpha", 2.0)]);
        assert_eq!(ap.h.eval(0.0).unwrap(), 2.0);
        assert!((ap.h.eval(0.75).unwrap() - 8.0).abs() < 1e-15);

        let r = family("remark24", &[]);
        assert_eq!(r.h.eval(0.0).unwrap(), 2.0);
        assert_eq!(r.sigma.eval(0.9).unwrap(), 1.0);

        let ag = family("alpha_gamma_pinned", &[("alpha", 1.0), ("gamma", 1.0)]);
        assert_eq!(ag.h.eval(0.5).unwrap(), 4.0);
    }

    #[test]
    fn derivative_examples() {
        let bb = family("brownian_bridge", &[]);
        assert_eq!(bb.h.derivative(0.0).unwrap(), 1.0);
        assert!((bb.h.fd_derivative(0.0).unwrap() - 1.0).abs() < 1e-8);
        assert_eq!(bb.sigma.derivative(0.7).unwrap(), 0.0);
        let ap = family("alpha_pinned", &[("alpha", 2.0)]);
        assert_eq!(ap.h.derivative(0.5).unwrap(), 8.0);
        assert!((ap.h.fd_derivative(0.5).unwrap() - 8.0).abs() < 1e-7);
    }

    #[test]
    fn domain_is_enforced() {
        let bb = family("brownian_bridge", &[]);
        assert!(matches!(bb.h.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(bb.h.eval(1.0), Err(Error::Domain { .. })));
        assert!(matches!(
            bb.h.derivative(1.0 - 1e-10),
            Err(Error::Domain { .. })
        ));
        assert!(bb.h.eval(crate::T_MAX).unwrap().is_finite());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let p = |k: &str, v: f64| [(k.to_string(), v)].into_iter().collect::<BTreeMap<_, _>>();
        assert!(matches!(
            make_family("alpha_gamma_pinned", &p("alpha", 0.0)),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            make_family("alpha_gamma_pinned", &p("gamma", -0.5)),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            make_family("alpha_pinned", &p("alpha", -1.0)),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            make_family("f_wiener", &p("slope", -1.0)),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            make_family("brownian_bridge", &p("alpha", 1.0)),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            make_family("ou", &BTreeMap::new()),
            Err(Error::UnknownFamily(_))
        ));
        assert!(matches!(
            make_family("custom", &BTreeMap::new()),
            Err(Error::InvalidParam { .. })
        ));
        let msg = make_family("alpha_gamma_pinned", &p("alpha", -2.0))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("alpha") && msg.contains("> 0"), "{msg}");
    }

    #[test]
    fn analytic_and_fd_derivatives_agree() {
        let end = 1.0 - 1e-3;
        for fam in builtins() {
            for f in [&fam.h, &fam.sigma, &fam.sigma_sq] {
                for k in 0..200 {
                    let t = end * k as f64 / 199.0;
                    let exact = f.derivative(t).unwrap();
                    let fd = f.fd_derivative(t).unwrap();
                    let scale = exact.abs().max(1e-12);
                    assert!(
                        (exact - fd).abs() <= 1e-6 * scale.max(1e-6),
                        "{} {} at t={t}: {exact} vs {fd}",
                        fam.name,
                        f.label()
                    );
                }
            }
        }
    }

    #[test]
    fn antiderivatives_match_their_integrands() {
        let end = 1.0 - 1e-3;
        for fam in builtins() {
            let mut funcs = vec![&fam.h, &fam.sigma_sq];
            if let Some(i) = &fam.ito_integral {
                funcs.push(i);
            }
            for f in funcs {
                for k in 0..50 {
                    let t = end * k as f64 / 49.0;
                    if f.label() == "I" && t > 0.95 {
                        continue;
                    }
                    let anti = |s: f64| f.antiderivative(s).unwrap();
                    let d = fd_derivative(&anti, t);
                    let v = f.value(t);
                    assert!(
                        (d - v).abs() <= 1e-6 * v.abs().max(1.0),
                        "{} {} at {t}: {d} vs {v}",
                        fam.name,
                        f.label()
                    );
                }
                assert_eq!(
                    f.antiderivative(0.0).unwrap(),
                    0.0,
                    "{} {}",
                    fam.name,
                    f.label()
                );
            }
        }
    }

    #[test]
    fn sigma_positive_on_probe_grid() {
        for fam in builtins() {
            for k in 0..=1000 {
                let t = (1.0 - 1e-3) * k as f64 / 1000.0;
                assert!(fam.sigma.eval(t).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn uniform_f_wiener_is_the_brownian_bridge() {
        let u = family("f_wiener", &[]);
        let bb = family("brownian_bridge", &[]);
        for k in 0..100 {
            let t = 0.99 * k as f64 / 99.0;
            assert!((u.h.value(t) - bb.h.value(t)).abs() <= 1e-14 * bb.h.value(t));
            assert_eq!(u.sigma.value(t), 1.0);
        }
    }

    #[test]
    fn linear_density_is_normalized() {
        let lin = family("f_wiener", &[("slope", 1.0)]);
        assert!((lin.sigma_sq.value(0.25) - (2.0 / 3.0) * 1.25).abs() < 1e-15);
        // closed-form CDF at 1
        let total = lin.sigma_sq.antiderivative(1.0).unwrap();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_alpha_interpolates() {
        let fam = family(
            "alpha_pinned",
            &[("alpha_0", 1.0), ("alpha_1", 3.0), ("alpha_2", 2.0)],
        );
        assert!((fam.h.value(0.25) - 2.0 / 0.75).abs() < 1e-14);
        assert!((fam.h.value(0.75) - 2.5 / 0.25).abs() < 1e-12);
        // H matches a fine midpoint sum away from the knot
        let n = 200_000;
        let t = 0.8;
        let mid: f64 = (0..n)
            .map(|k| fam.h.value((k as f64 + 0.5) * t / n as f64) * t / n as f64)
            .sum();
        assert!((fam.h.antiderivative(t).unwrap() - mid).abs() < 1e-8);
        let bad = [("alpha_0", 1.0), ("alpha_1", 0.0)];
        let params = bad.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert!(make_family("alpha_pinned", &params).is_err());
    }

    #[test]
    fn custom_family_validation() {
        let h = TimeFunction::new("h", |t: f64| 1.0 / (1.0 - t));
        let zero = TimeFunction::new("sigma", |_| 0.0);
        assert!(DiffusionFamily::custom("c", h.clone(), zero).is_err());
        let jumpy = TimeFunction::new("sigma", |t: f64| if t < 0.4 { 1.0 } else { 2.0 });
        let err = DiffusionFamily::custom("c", h.clone(), jumpy).unwrap_err();
        assert!(err.to_string().contains("continuous"), "{err}");
        let ok =
            DiffusionFamily::custom("c", h, TimeFunction::new("sigma", |t: f64| 1.0 + t)).unwrap();
        assert!(ok.sigma_sq.antiderivative(0.5).is_none());
        assert!((ok.sigma_sq.value(0.5) - 2.25).abs() < 1e-15);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = FamilySpec::new("alpha_gamma_pinned")
            .param("alpha", 1.0)
            .param("gamma", 1.0);
        let json = serde_json::to_string(&spec).unwrap();
        let back: FamilySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        let bare: FamilySpec = serde_json::from_str(r#"{"name":"remark24"}"#).unwrap();
        assert!(bare.build().is_ok());
    }
}
