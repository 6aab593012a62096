//! Calculus engine.
//!
//! Definite integrals use adaptive 7/15-point Gauss-Kronrod with worst-panel
//! bisection. Integrals toward the singular endpoint `t = 1` are evaluated on
//! the dyadic sequence `t_n = 1 - 2^-n`, accelerated with Aitken's delta-squared
//! and classified as finite, divergent or inconclusive.
//!
//! [`CalculusCache`] derives the family quantities
//!
//! ```text
//! H(t) = int_0^t h          phi(t) = exp(-H(t))
//! S(t) = int_0^t sigma^2    Sigma  = lim_{t->1} S(t)
//! I(t) = int_0^t sigma^2 / phi^2
//! ```
//!
//! from closed forms when the family supplies them and from memoized
//! quadrature otherwise.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::funcs::{DiffusionFamily, ScalarFn, TimeFunction};
use crate::{check_time, Error, Result, T_MAX};

/// Default relative tolerance of the calculus engine.
pub const DEFAULT_REL_TOL: f64 = 1e-12;
/// Panel budget of one adaptive integration.
pub const MAX_PANELS: usize = 100_000;
/// Partial integrals beyond this magnitude classify as divergent.
pub const DIVERGENCE_CAP: f64 = 1e12;
/// Consecutive Cauchy passes required before declaring convergence.
pub const CAUCHY_RUN: usize = 3;
/// Increment ratio at or above which a monotone tail counts as divergent.
const DIVERGENT_RATIO: f64 = 0.99;
const DIVERGENT_RUN: usize = 4;

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64, label: &str) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> Result<f64> {
        let v = f(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: label.to_string(),
                t,
                value: v,
            })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (f1, f2) = (eval(center - dx)?, eval(center + dx)?);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok(Panel {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        abs_value: abs_sum * half.abs(),
    })
}

/// Adaptive integral of a bare callback over `[a, b]`.
pub fn integrate_fn(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    label: &str,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let first = gauss_kronrod(f, a, b, label)?;
    let mut heap = BinaryHeap::from([first]);
    let mut settled = 0.0;
    let mut settled_abs = 0.0;
    let mut panels = 1usize;
    loop {
        let (value, error, abs_value) = heap.iter().fold((settled, 0.0, settled_abs), |acc, p| {
            (acc.0 + p.value, acc.1 + p.error, acc.2 + p.abs_value)
        });
        // no panel can be resolved below roundoff in the sum of |f|
        let target = (rel_tol * value.abs()).max(50.0 * f64::EPSILON * abs_value);
        if error <= target {
            return Ok(value);
        }
        if panels >= MAX_PANELS {
            return Err(Error::NoConvergence {
                a,
                b,
                panels,
                error,
                target,
            });
        }
        let worst = heap.pop().expect("heap holds every unsettled panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            settled += worst.value;
            settled_abs += worst.abs_value;
            continue;
        }
        heap.push(gauss_kronrod(f, worst.a, mid, label)?);
        heap.push(gauss_kronrod(f, mid, worst.b, label)?);
        panels += 1;
    }
}

fn check_interval(a: f64, b: f64, rel_tol: f64) -> Result<()> {
    check_time(a)?;
    check_time(b)?;
    if a > b {
        return Err(Error::Precondition(format!(
            "integration bounds reversed: a = {a} > b = {b}"
        )));
    }
    if rel_tol.is_nan() || rel_tol <= 0.0 {
        return Err(Error::invalid_param(
            "rel_tol",
            format!("must be > 0, got {rel_tol}"),
        ));
    }
    Ok(())
}

/// `int_a^b f`, from the closed-form antiderivative when one is attached.
pub fn integrate(f: &TimeFunction, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    check_interval(a, b, rel_tol)?;
    match (f.antiderivative(b), f.antiderivative(a)) {
        (Some(fb), Some(fa)) => {
            let v = fb - fa;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite {
                    what: format!("antiderivative of {}", f.label()),
                    t: b,
                    value: v,
                })
            }
        }
        _ => integrate_numeric(f, a, b, rel_tol),
    }
}

/// Quadrature only, ignoring any closed form.
pub fn integrate_numeric(f: &TimeFunction, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    check_interval(a, b, rel_tol)?;
    integrate_fn(&**f.evaluator(), a, b, rel_tol, f.label())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImproperKind {
    Finite,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImproperResult {
    pub kind: ImproperKind,
    /// Limit estimate; present when `kind` is finite, and as the last
    /// accelerated estimate when inconclusive.
    pub value: Option<f64>,
    pub partial_values: Vec<(f64, f64)>,
}

/// Dyadic evaluation points `1 - 2^-n`, n = 0, 1, ... up to `T_MAX`.
pub fn dyadic_points() -> Vec<f64> {
    (0..)
        .map(|n| 1.0 - 0.5f64.powi(n))
        .take_while(|&t| t <= T_MAX)
        .collect()
}

/// Classifies `lim_{t->1} int_0^t f`.
pub fn improper_to_one(f: &TimeFunction, rel_tol: f64) -> Result<ImproperResult> {
    if f.antiderivative(0.0).is_some() {
        classify_limit(|_, t| Ok(f.antiderivative(t).unwrap()), rel_tol)
    } else {
        let eval = f.evaluator().clone();
        classify_limit(
            |prev: Option<(f64, f64)>, t| {
                let (t0, p0) = prev.unwrap_or((0.0, 0.0));
                Ok(p0 + integrate_fn(&*eval, t0, t, rel_tol, f.label())?)
            },
            rel_tol,
        )
    }
}

/// Drives the dyadic partial sequence. `partial(prev, t)` returns
/// `int_0^t f` given the previous `(t, partial)` pair.
pub fn classify_limit(
    mut partial: impl FnMut(Option<(f64, f64)>, f64) -> Result<f64>,
    rel_tol: f64,
) -> Result<ImproperResult> {
    let mut partials: Vec<(f64, f64)> = Vec::new();
    let mut accelerated: Vec<f64> = Vec::new();
    let mut cauchy_run = 0;
    for t in dyadic_points() {
        let p = match partial(partials.last().copied(), t) {
            Ok(p) => p,
            // the integrand itself overflowed: the partials are exploding
            Err(Error::NonFinite { .. }) => {
                return Ok(ImproperResult {
                    kind: ImproperKind::Divergent,
                    value: None,
                    partial_values: partials,
                })
            }
            Err(e) => return Err(e),
        };
        partials.push((t, p));
        if !p.is_finite() || p.abs() > DIVERGENCE_CAP {
            return Ok(ImproperResult {
                kind: ImproperKind::Divergent,
                value: None,
                partial_values: partials,
            });
        }
        let n = partials.len();
        let acc = if n >= 3 {
            let (p0, p1, p2) = (partials[n - 3].1, partials[n - 2].1, partials[n - 1].1);
            aitken(p0, p1, p2)
        } else {
            p
        };
        if let Some(&prev) = accelerated.last() {
            if (acc - prev).abs() <= rel_tol * acc.abs().max(1.0) {
                cauchy_run += 1;
            } else {
                cauchy_run = 0;
            }
        }
        accelerated.push(acc);
        if cauchy_run >= CAUCHY_RUN {
            return Ok(ImproperResult {
                kind: ImproperKind::Finite,
                value: Some(acc),
                partial_values: partials,
            });
        }
    }
    let kind = if monotone_divergent_tail(&partials) {
        ImproperKind::Divergent
    } else {
        ImproperKind::Inconclusive
    };
    Ok(ImproperResult {
        kind,
        value: (kind == ImproperKind::Inconclusive).then(|| *accelerated.last().unwrap()),
        partial_values: partials,
    })
}

fn aitken(p0: f64, p1: f64, p2: f64) -> f64 {
    let (d1, d2) = (p1 - p0, p2 - p1);
    let denom = d2 - d1;
    // growing increments extrapolate to an antilimit
    if denom == 0.0 || d2.abs() >= d1.abs() {
        return p2;
    }
    let a = p2 - d2 * d2 / denom;
    if a.is_finite() {
        a
    } else {
        p2
    }
}

/// Increments that keep their sign and do not shrink across octaves.
fn monotone_divergent_tail(partials: &[(f64, f64)]) -> bool {
    let inc: Vec<f64> = partials.windows(2).map(|w| w[1].1 - w[0].1).collect();
    if inc.len() < DIVERGENT_RUN + 1 {
        return false;
    }
    inc[inc.len() - DIVERGENT_RUN - 1..]
        .windows(2)
        .all(|w| w[0] != 0.0 && w[0].signum() == w[1].signum() && w[1] / w[0] >= DIVERGENT_RATIO)
}

/// Total dispersion `Sigma = lim S(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaTotal {
    Finite(f64),
    Infinite,
    Inconclusive,
}

impl SigmaTotal {
    pub fn finite(self) -> Option<f64> {
        match self {
            SigmaTotal::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// Memo nodes: 0, then every octave `[1 - 2^-k, 1 - 2^-(k+1)]` cut into four.
fn memo_nodes() -> Arc<[f64]> {
    let mut nodes = vec![0.0];
    for k in 0..64 {
        let start = 1.0 - 0.5f64.powi(k);
        let quarter = 0.5f64.powi(k + 3);
        for j in 0..4 {
            let t = start + j as f64 * quarter;
            if t > T_MAX {
                return nodes.into();
            }
            if t > 0.0 {
                nodes.push(t);
            }
        }
    }
    nodes.into()
}

/// `t -> int_0^t f`, closed form or memoized quadrature. Segment integrals
/// between memo nodes are computed once and summed in node order, so values
/// do not depend on query order or thread interleaving.
struct Cumulative {
    label: String,
    integrand: ScalarFn,
    closed_form: Option<ScalarFn>,
    nodes: Arc<[f64]>,
    prefix: Vec<OnceLock<Result<f64>>>,
    rel_tol: f64,
}

impl Cumulative {
    fn new(
        label: &str,
        integrand: ScalarFn,
        closed_form: Option<ScalarFn>,
        nodes: Arc<[f64]>,
        rel_tol: f64,
    ) -> Self {
        let prefix = (0..nodes.len()).map(|_| OnceLock::new()).collect();
        Self {
            label: label.to_string(),
            integrand,
            closed_form,
            nodes,
            prefix,
            rel_tol,
        }
    }

    fn of_function(f: &TimeFunction, nodes: Arc<[f64]>, rel_tol: f64) -> Self {
        let closed = f.antiderivative(0.0).map(|_| {
            let g = f.clone();
            Arc::new(move |t: f64| g.antiderivative(t).unwrap()) as ScalarFn
        });
        Self::new(f.label(), f.evaluator().clone(), closed, nodes, rel_tol)
    }

    fn prefix_at(&self, j: usize) -> Result<f64> {
        self.prefix[j]
            .get_or_init(|| {
                if j == 0 {
                    return Ok(0.0);
                }
                let below = self.prefix_at(j - 1)?;
                let seg = integrate_fn(
                    &*self.integrand,
                    self.nodes[j - 1],
                    self.nodes[j],
                    self.rel_tol,
                    &self.label,
                )?;
                Ok(below + seg)
            })
            .clone()
    }

    fn at(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if let Some(c) = &self.closed_form {
            let v = c(t);
            return if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite {
                    what: format!("int_0^t {}", self.label),
                    t,
                    value: v,
                })
            };
        }
        let j = self.nodes.partition_point(|&n| n <= t) - 1;
        // build the prefix chain iteratively to keep recursion shallow
        for k in 0..=j {
            self.prefix_at(k)?;
        }
        let base = self.prefix_at(j)?;
        Ok(base
            + integrate_fn(
                &*self.integrand,
                self.nodes[j],
                t,
                self.rel_tol,
                &self.label,
            )?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalculusDiagnostics {
    /// Number of `phi` evaluations clamped to the smallest positive normal.
    pub phi_underflows: usize,
    pub first_underflow_t: Option<f64>,
}

/// Family-bound calculus with memoized `H`, `S`, `I` and a cached `Sigma`.
pub struct CalculusCache {
    family: DiffusionFamily,
    rel_tol: f64,
    cum_h: Cumulative,
    cum_sigma_sq: Cumulative,
    cum_ito: Cumulative,
    sigma_total: OnceLock<Result<ImproperResult>>,
    diagnostics: Mutex<CalculusDiagnostics>,
}

impl std::fmt::Debug for CalculusCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CalculusCache")
            .field("family", &self.family.name)
            .field("rel_tol", &self.rel_tol)
            .finish()
    }
}

impl CalculusCache {
    pub fn new(family: &DiffusionFamily) -> Self {
        Self::with_tolerance(family, DEFAULT_REL_TOL)
    }

    pub fn with_tolerance(family: &DiffusionFamily, rel_tol: f64) -> Self {
        let nodes = memo_nodes();
        let cum_h = Cumulative::of_function(&family.h, nodes.clone(), rel_tol);
        let cum_sigma_sq = Cumulative::of_function(&family.sigma_sq, nodes.clone(), rel_tol);
        let cum_ito = match &family.ito_integral {
            Some(i) => Cumulative::of_function(i, nodes.clone(), rel_tol),
            None => {
                // sigma^2 / phi^2 = sigma^2 exp(2H); H from its own memo
                let h_memo = Cumulative::of_function(&family.h, nodes.clone(), rel_tol);
                let s2 = family.sigma_sq.evaluator().clone();
                let integrand: ScalarFn = Arc::new(move |r: f64| {
                    let h = h_memo.at(r.clamp(0.0, T_MAX)).unwrap_or(f64::NAN);
                    s2(r) * (2.0 * h).exp()
                });
                Cumulative::new("sigma^2/phi^2", integrand, None, nodes, rel_tol)
            }
        };
        Self {
            family: family.clone(),
            rel_tol,
            cum_h,
            cum_sigma_sq,
            cum_ito,
            sigma_total: OnceLock::new(),
            diagnostics: Mutex::new(CalculusDiagnostics::default()),
        }
    }

    pub fn family(&self) -> &DiffusionFamily {
        &self.family
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    /// `H(t) = int_0^t h`.
    pub fn cum_h(&self, t: f64) -> Result<f64> {
        self.cum_h.at(t)
    }

    /// `S(t) = int_0^t sigma^2`.
    pub fn cum_sigma_sq(&self, t: f64) -> Result<f64> {
        self.cum_sigma_sq.at(t)
    }

    /// `I(t) = int_0^t sigma^2 / phi^2`. Overflows for fast-pinning families
    /// near 1; use [`CalculusCache::transition_variance`] for moments.
    pub fn ito_integral(&self, t: f64) -> Result<f64> {
        self.cum_ito.at(t)
    }

    /// `phi(t) = exp(-H(t))`, clamped to the smallest positive normal on
    /// underflow (recorded in the diagnostics).
    pub fn phi(&self, t: f64) -> Result<f64> {
        let v = (-self.cum_h(t)?).exp();
        if v < f64::MIN_POSITIVE {
            let mut d = self.diagnostics.lock().unwrap();
            d.phi_underflows += 1;
            d.first_underflow_t = Some(d.first_underflow_t.map_or(t, |u| u.min(t)));
            return Ok(f64::MIN_POSITIVE);
        }
        Ok(v)
    }

    /// `phi(t) / phi(s) = exp(-(H(t) - H(s)))`, never formed as a quotient.
    pub fn phi_ratio(&self, s: f64, t: f64) -> Result<f64> {
        Ok((-(self.cum_h(t)? - self.cum_h(s)?)).exp())
    }

    /// `int_s^t h(r) phi(t) / phi(r) dr` by quadrature; equals `1 - phi(t) / phi(s)`.
    pub fn kernel_integral(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::Precondition(format!(
                "kernel_integral needs s <= t, got s = {s}, t = {t}"
            )));
        }
        check_time(t)?;
        let ht = self.cum_h(t)?;
        let h = self.family.h.evaluator().clone();
        let failure = RefCell::new(None);
        let kernel = |r: f64| match self.cum_h(r) {
            Ok(hr) => h(r) * (hr - ht).exp(),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        let v = integrate_fn(&kernel, s, t, self.rel_tol, "h phi(t) / phi");
        match failure.into_inner() {
            Some(e) => Err(e),
            None => v,
        }
    }

    /// `int_s^t sigma^2 / phi^2`.
    pub fn ito_variance(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::Precondition(format!(
                "ito_variance needs s <= t, got s = {s}, t = {t}"
            )));
        }
        if s == t {
            check_time(t)?;
            return Ok(0.0);
        }
        let (is, it) = (self.ito_integral(s)?, self.ito_integral(t)?);
        clamp_increment(it - is, it.abs(), s, t)
    }

    /// `phi(t)^2 (I(t) - I(s))`: variance of `X_t` given `X_s`.
    ///
    /// Closed-form `I` is used while it and `phi(t)^2` are representable;
    /// otherwise the equivalent bounded integral
    /// `int_s^t sigma^2(r) exp(-2 (H(t) - H(r))) dr` is evaluated directly.
    pub fn transition_variance(&self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::Precondition(format!(
                "transition_variance needs s <= t, got s = {s}, t = {t}"
            )));
        }
        check_time(t)?;
        if s == t {
            return Ok(0.0);
        }
        let ht = self.cum_h(t)?;
        if self.family.ito_integral.is_some() && ht < 300.0 {
            if let (Ok(is), Ok(it)) = (self.ito_integral(s), self.ito_integral(t)) {
                let inc = clamp_increment(it - is, it.abs(), s, t)?;
                return Ok((-2.0 * ht).exp() * inc);
            }
        }
        let s2 = self.family.sigma_sq.evaluator().clone();
        let failure = RefCell::new(None);
        let integrand = |r: f64| match self.cum_h(r.min(t)) {
            Ok(hr) => s2(r) * (-2.0 * (ht - hr)).exp(),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        };
        // the integrand concentrates in a layer of width ~1/h(t) below t:
        // pieces shrink geometrically toward t so that the layer is resolved
        // H(t) - H(r) carries an absolute error ~ |H(t)| times eps (closed
        // form) or times the quadrature tolerance, which bounds the attainable
        // relative accuracy of the integrand
        let h_noise = if self.family.h.has_antiderivative() {
            64.0 * f64::EPSILON
        } else {
            64.0 * f64::EPSILON + 2.0 * self.rel_tol
        };
        let tol = self.rel_tol.max(h_noise * ht.abs());
        let mut total = 0.0;
        let mut lo = s;
        let mut width = t - s;
        while lo < t {
            width *= 0.5;
            let hi = if width <= 4.0 * f64::EPSILON * t {
                t
            } else {
                t - width
            };
            if hi > lo {
                total += integrate_fn(&integrand, lo, hi, tol, "sigma^2 phi(t)^2 / phi^2")?;
                lo = hi;
            }
            if let Some(e) = failure.borrow_mut().take() {
                return Err(e);
            }
        }
        Ok(total)
    }

    /// Unconditional variance `phi(t)^2 I(t)`.
    pub fn variance(&self, t: f64) -> Result<f64> {
        self.transition_variance(0.0, t)
    }

    /// Classification of `int_0^1 sigma^2`, computed once.
    pub fn sigma_improper(&self) -> Result<ImproperResult> {
        self.sigma_total
            .get_or_init(|| improper_to_one(&self.family.sigma_sq, self.rel_tol))
            .clone()
    }

    pub fn big_sigma(&self) -> Result<SigmaTotal> {
        let r = self.sigma_improper()?;
        Ok(match r.kind {
            ImproperKind::Finite => {
                SigmaTotal::Finite(r.value.expect("finite result carries a value"))
            }
            ImproperKind::Divergent => SigmaTotal::Infinite,
            ImproperKind::Inconclusive => SigmaTotal::Inconclusive,
        })
    }

    pub fn diagnostics(&self) -> CalculusDiagnostics {
        self.diagnostics.lock().unwrap().clone()
    }
}

/// Increments of a nondecreasing table: rounding noise below zero is
/// clamped, anything larger is a calculus bug.
fn clamp_increment(inc: f64, scale: f64, s: f64, t: f64) -> Result<f64> {
    if inc >= 0.0 {
        Ok(inc)
    } else if inc >= -1e-14 * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "negative variance increment {inc:e} on [{s}, {t}]"
        )))
    }
}
