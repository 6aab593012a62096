//! The acceptance suite behind `pinbridge reproduce`.
//!
//! Each criterion yields one deterministic PASS/FAIL line. Wall-clock runtimes
//! go to the `#` preamble only, so two runs with one seed differ in `#` lines
//! at most.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use pinbridge::ident::{route_consistency, Condition};
use pinbridge::quad::{integrate_numeric, ImproperKind};
use pinbridge::sim::{EulerStepper, DEFAULT_STEPS, DEFAULT_T_END};
use pinbridge::{
    check_pinning, identify_gaussian_bridge, make_grid, monte_carlo, reciprocal_char,
    reference_specs, same_bridges, BridgeVerdict, CalculusCache, DiffusionFamily, FamilySpec,
    GridMode, IdentConfig, ItoSpec, McReport, Method, PathGrid, PinnedLaw, PinningOutcome,
    ProbeSet, SigmaTotal, TimeFunction,
};

use crate::commands::execute;
use crate::config::{CommandKind, RunConfig};
use crate::output::{strip_preamble, unix_timestamp};

pub const DEFAULT_SEED: u64 = 2024;

/// Euler mean-bias constant in `|mean_euler - mean_exact| <= 4 (SE sum) + C max_step`.
/// Fitted by `calibrate_euler_bias` (1e6 Brownian-bridge paths, seed 2024:
/// C = 9.96e-3) and rounded up.
pub const EULER_BIAS_C: f64 = 1.0e-2;

pub const MC_PATHS: usize = 100_000;
pub const SIGMA_TOL: f64 = 1e-8;
pub const PARTIAL_REL_TOL: f64 = 1e-6;
pub const IDENT_TOL: f64 = 1e-7;
pub const REJECT_RESIDUAL: f64 = 0.5;
pub const ORIGIN_RESIDUAL_TOL: f64 = 1e-6;
pub const ROUTE_TOL: f64 = 1e-6;
pub const KERNEL_TOL: f64 = 1e-8;
pub const SAME_BRIDGES_TOL: f64 = 1e-6;
pub const MIN_F_GAP: f64 = 1.0;
/// Multiples of the standard error allowed in Monte Carlo comparisons.
pub const SE_MULT: f64 = 4.0;
pub const SLACK_MULT: f64 = 2.0;

pub const CRITERIA: [(u8, &str, u64); 9] = [
    (1, "remark24 pinning without (A2')", 10),
    (2, "Gaussian-bridge identification", 10),
    (3, "three-route consistency", 30),
    (4, "exact moment matching", 60),
    (5, "Euler/exact agreement", 300),
    (6, "pinning witness", 120),
    (7, "kernel identity", 10),
    (8, "same-bridges oracle", 10),
    (9, "reproducibility", 60),
];

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CriterionOutcome {
    /// The deterministic table line.
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        format!("C{} {status} {}: {}", self.id, self.title, self.detail)
    }
}

/// Collects sub-checks; the criterion passes only if all of them do.
#[derive(Default)]
struct Checks {
    notes: Vec<String>,
    failed: bool,
}

impl Checks {
    fn require(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        if ok {
            self.notes.push(note);
        } else {
            self.failed = true;
            self.notes.push(format!("FAILED {note}"));
        }
    }

    fn error(&mut self, context: &str, e: impl std::fmt::Display) {
        self.require(false, format!("{context}: {e}"));
    }
}

fn label(spec: &FamilySpec) -> String {
    if spec.params.is_empty() {
        return spec.name.clone();
    }
    let params: Vec<String> = spec
        .params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    format!("{}({})", spec.name, params.join(","))
}

fn build(spec: &FamilySpec) -> DiffusionFamily {
    spec.build().expect("reference specs are valid")
}

fn alpha2() -> FamilySpec {
    FamilySpec::new("alpha_pinned").param("alpha", 2.0)
}

pub fn run_criterion(id: u8, seed: u64) -> CriterionOutcome {
    let (_, title, budget) = CRITERIA[usize::from(id) - 1];
    let budget = Duration::from_secs(budget);
    let start = Instant::now();
    let mut c = Checks::default();
    match id {
        1 => remark24(&mut c),
        2 => identification(&mut c),
        3 => routes(&mut c),
        4 => moments(&mut c, seed),
        5 => euler_agreement(&mut c, seed),
        6 => pinning_witness(&mut c, seed),
        7 => kernel_identity(&mut c),
        8 => same_bridges_oracle(&mut c),
        9 => reproducibility(&mut c, seed),
        _ => unreachable!("criteria are numbered 1 to 9"),
    }
    let elapsed = start.elapsed();
    c.require(elapsed < budget, "within runtime budget");
    CriterionOutcome {
        id,
        title,
        pass: !c.failed,
        detail: c.notes.join("; "),
        elapsed,
        budget,
    }
}

pub fn run_all(ids: &[u8], seed: u64) -> Vec<CriterionOutcome> {
    ids.iter().map(|&id| run_criterion(id, seed)).collect()
}

/// `#` preamble with timestamp and runtimes, then one line per criterion and a summary.
pub fn render(outcomes: &[CriterionOutcome], seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# pinbridge {} reproduce", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "# generated_unix: {}", unix_timestamp());
    for o in outcomes {
        let _ = writeln!(
            out,
            "# runtime C{}: {:.2} s (budget {} s)",
            o.id,
            o.elapsed.as_secs_f64(),
            o.budget.as_secs()
        );
    }
    let _ = writeln!(out, "seed {seed}");
    for o in outcomes {
        let _ = writeln!(out, "{}", o.line());
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    let _ = writeln!(out, "passed {passed}/{}", outcomes.len());
    out
}

fn remark24(c: &mut Checks) {
    let cfg = IdentConfig::default();
    let v = match check_pinning(&build(&FamilySpec::new("remark24")), &cfg) {
        Ok(v) => v,
        Err(e) => return c.error("check_pinning", e),
    };
    c.require(v.a2 == ImproperKind::Finite, format!("a2 {:?}", v.a2));
    match v.sigma_total {
        SigmaTotal::Finite(s) => {
            c.require((s - 1.0).abs() <= SIGMA_TOL, format!("Sigma = {s:.12}"))
        }
        other => c.require(false, format!("Sigma {other:?}")),
    }
    let deltas: Vec<f64> = v.a2_prime_profiles.iter().map(|p| p.delta).collect();
    c.require(
        deltas == [0.1, 0.25, 0.5, 0.75, 0.9],
        format!("deltas {deltas:?}"),
    );
    let all_fail = v
        .a2_prime_profiles
        .iter()
        .all(|p| p.outcome == Condition::Fails);
    c.require(
        all_fail && v.a2_prime == Condition::Fails,
        "a2' fails for every delta",
    );
    c.require(v.overall == PinningOutcome::PinnedByA1A2, "pinned by A1+A2");

    // exp(2 H(r)) with H(r) = r/(1-r) - log(1-r)
    let weight = TimeFunction::new("exp(2H)", |r: f64| {
        (2.0 * (r / (1.0 - r) - (-r).ln_1p())).exp()
    });
    let mut worst: f64 = 0.0;
    for t in [0.3f64, 0.5, 0.7] {
        let closed = 0.5 * (2.0 * t / (1.0 - t)).exp_m1();
        match integrate_numeric(&weight, 0.0, t, 1e-12) {
            Ok(q) => worst = worst.max((q - closed).abs() / closed),
            Err(e) => return c.error("partial integral", e),
        }
    }
    c.require(
        worst <= PARTIAL_REL_TOL,
        format!("partial integrals rel err {worst:.1e}"),
    );
}

fn identification(c: &mut Checks) {
    let cfg = IdentConfig {
        tol_ident: IDENT_TOL,
        ..IdentConfig::default()
    };
    let positives = [
        FamilySpec::new("f_wiener"),
        FamilySpec::new("f_wiener").param("slope", 1.0),
    ];
    for spec in &positives {
        match identify_gaussian_bridge(&build(spec), &cfg) {
            Ok(r) => c.require(
                r.verdict == BridgeVerdict::IsBridgeFamily && r.residual < IDENT_TOL,
                format!(
                    "{} {:?} residual {:.1e}",
                    label(spec),
                    r.verdict,
                    r.residual
                ),
            ),
            Err(e) => c.error(&label(spec), e),
        }
    }
    let negatives = [
        alpha2(),
        FamilySpec::new("alpha_gamma_pinned")
            .param("alpha", 1.0)
            .param("gamma", 1.0),
    ];
    for spec in &negatives {
        match identify_gaussian_bridge(&build(spec), &cfg) {
            Ok(r) => {
                c.require(
                    r.verdict == BridgeVerdict::NotBridgeFamily && r.residual >= REJECT_RESIDUAL,
                    format!("{} {:?} residual {:.4}", label(spec), r.verdict, r.residual),
                );
                if spec.name == "alpha_pinned" {
                    let origin = r
                        .residual_profile
                        .first()
                        .filter(|n| n.t == 0.0)
                        .and_then(|n| n.residual);
                    c.require(
                        origin.is_some_and(|v| (v - 1.0).abs() <= ORIGIN_RESIDUAL_TOL),
                        format!(
                            "residual at t=0 {}",
                            origin.map_or("missing".into(), |v| format!("{v:.9}"))
                        ),
                    );
                }
            }
            Err(e) => c.error(&label(spec), e),
        }
    }
}

fn routes(c: &mut Checks) {
    let cfg = IdentConfig {
        zero_tol: ROUTE_TOL,
        ..IdentConfig::default()
    };
    for spec in reference_specs() {
        let expect_bridge = spec.name == "brownian_bridge" || spec.name == "f_wiener";
        match route_consistency(&build(&spec), &cfg) {
            Ok(r) => c.require(
                r.agree && (r.identification == BridgeVerdict::IsBridgeFamily) == expect_bridge,
                format!(
                    "{} {:?} ode {:.1e} kappa {:.1e}",
                    label(&spec),
                    r.identification,
                    r.ode_sup_scaled,
                    r.kappa_sup_scaled
                ),
            ),
            Err(e) => c.error(&label(&spec), e),
        }
    }
}

fn moments(c: &mut Checks, seed: u64) {
    let grid = PathGrid::new(vec![0.0, 0.25, 0.5, 0.75]).expect("valid grid");
    let half = grid.nearest(0.5);
    let n = MC_PATHS as f64;
    for (spec, x, y) in [
        (FamilySpec::new("brownian_bridge"), 0.0, 0.0),
        (alpha2(), 1.0, 0.0),
    ] {
        let family = build(&spec);
        let cache = CalculusCache::new(&family);
        let law = PinnedLaw::new(&cache, x, y);
        let report = match monte_carlo(&family, x, y, &grid, MC_PATHS, seed, Method::Exact) {
            Ok(r) => r,
            Err(e) => return c.error(&label(&spec), e),
        };
        let (Ok(m), Ok(v)) = (law.mean(0.5), law.variance(0.5)) else {
            return c.require(false, format!("{} closed-form moments", label(&spec)));
        };
        let mean_err = (report.mean[half] - m).abs();
        let var_err = (report.variance[half] - v).abs();
        let mean_se = (v / n).sqrt();
        let var_se = 2f64.sqrt() * v / n.sqrt();
        c.require(
            mean_err <= SE_MULT * mean_se && var_err <= SE_MULT * var_se,
            format!(
                "{} t=0.5 mean err {:.2} SE, var {:.5} vs {v:.5} ({:.2} SE)",
                label(&spec),
                mean_err / mean_se,
                report.variance[half],
                var_err / var_se
            ),
        );
    }
}

fn mc(
    family: &DiffusionFamily,
    grid: &PathGrid,
    seed: u64,
    method: Method,
) -> pinbridge::Result<McReport> {
    monte_carlo(family, 0.0, 1.0, grid, MC_PATHS, seed, method)
}

fn euler_agreement(c: &mut Checks, seed: u64) {
    let grid = make_grid(DEFAULT_STEPS, GridMode::Geometric, DEFAULT_T_END).expect("valid grid");
    for spec in reference_specs() {
        let family = build(&spec);
        let name = label(&spec);
        let stepper = match EulerStepper::new(&family, 0.0, 1.0, &grid) {
            Ok(s) => s,
            Err(e) => return c.error(&name, e),
        };
        if !stepper.is_stable() {
            // h dt > 1 somewhere: the scheme overshoots, and the run must either
            // stop with a discretization error or report the contraction.
            let guarded = match mc(&family, &grid, seed, Method::Euler) {
                Err(pinbridge::Error::Discretization { .. }) => true,
                Ok(r) => r.max_contraction.is_some_and(|k| k > 1.0),
                Err(_) => false,
            };
            c.require(
                guarded,
                format!(
                    "{name} unstable grid (max h dt {:.0}), guard verified",
                    stepper.max_contraction()
                ),
            );
            continue;
        }
        let (exact, euler) = match (
            mc(&family, &grid, seed, Method::Exact),
            mc(&family, &grid, seed, Method::Euler),
        ) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return c.error(&name, e),
        };
        let bias = EULER_BIAS_C * grid.max_step();
        let mut worst: f64 = 0.0;
        for k in 0..grid.len() {
            let bound = SE_MULT * (exact.se_mean[k] + euler.se_mean[k]) + bias;
            worst = worst.max((euler.mean[k] - exact.mean[k]).abs() / bound);
        }
        c.require(
            worst <= 1.0,
            format!("{name} worst node at {worst:.2} of bound"),
        );
    }

    for spec in [alpha2(), FamilySpec::new("brownian_bridge")] {
        let family = build(&spec);
        let name = label(&spec);
        let cache = CalculusCache::new(&family);
        let law = PinnedLaw::new(&cache, 0.0, 1.0);
        let mut errs = Vec::new();
        for n in [64, 128, 256, 512] {
            let grid = make_grid(n, GridMode::Geometric, DEFAULT_T_END).expect("valid grid");
            let k = grid.nearest(0.5);
            let r = match mc(&family, &grid, seed, Method::Euler) {
                Ok(r) => r,
                Err(e) => return c.error(&name, e),
            };
            match law.mean(grid.nodes()[k]) {
                Ok(m) => errs.push((r.mean[k] - m, r.se_mean[k])),
                Err(e) => return c.error(&name, e),
            }
        }
        let shown: Vec<String> = errs.iter().map(|(e, _)| format!("{e:.1e}")).collect();
        if spec.name == "brownian_bridge" {
            // The scheme is unbiased for the mean here, so only noise remains.
            let ok = errs.iter().all(|(e, se)| e.abs() <= SE_MULT * se);
            c.require(
                ok,
                format!("{name} t=0.5 errors [{}] within noise", shown.join(", ")),
            );
        } else {
            let ok = errs.windows(2).all(|w| {
                let slack = SLACK_MULT * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
                w[1].0.abs() <= w[0].0.abs() + slack
            });
            c.require(
                ok,
                format!("{name} t=0.5 errors [{}] decrease with n", shown.join(", ")),
            );
        }
    }
}

fn pinning_witness(c: &mut Checks, seed: u64) {
    for spec in [FamilySpec::new("brownian_bridge"), alpha2()] {
        let family = build(&spec);
        let name = label(&spec);
        let mut stats = Vec::new();
        for t_end in [1.0 - 1e-1, 1.0 - 1e-2, 1.0 - 1e-3, 1.0 - 1e-4] {
            let grid = make_grid(64, GridMode::Geometric, t_end).expect("valid grid");
            match monte_carlo(&family, 0.0, 0.0, &grid, MC_PATHS, seed, Method::Exact) {
                Ok(r) => stats.push((t_end, r.pinning.mean_abs_deviation, r.pinning.se)),
                Err(e) => return c.error(&name, e),
            }
        }
        let decreasing = stats.windows(2).all(|w| {
            let slack = SLACK_MULT * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt();
            w[1].1 < w[0].1 + slack
        });
        let shown: Vec<String> = stats.iter().map(|s| format!("{:.3e}", s.1)).collect();
        c.require(
            decreasing,
            format!("{name} E|X-y| [{}] decreasing", shown.join(", ")),
        );

        let (t_end, stat, se) = stats[stats.len() - 1];
        let cache = CalculusCache::new(&family);
        match PinnedLaw::new(&cache, 0.0, 0.0).sd(t_end) {
            Ok(sd) => {
                let expected = (2.0 / PI).sqrt() * sd;
                c.require(
                    (stat - expected).abs() <= SE_MULT * se,
                    format!(
                        "{name} terminal {:.2} SE from sqrt(2/pi) sd",
                        (stat - expected).abs() / se
                    ),
                );
            }
            Err(e) => c.error(&name, e),
        }
    }
}

fn kernel_identity(c: &mut Checks) {
    let ts: Vec<f64> = (1..=9).map(|k| f64::from(k) / 10.0).collect();
    for spec in reference_specs() {
        let family = build(&spec);
        let cache = CalculusCache::new(&family);
        let mut worst: f64 = 0.0;
        for (i, &s) in ts.iter().enumerate() {
            for &t in &ts[i + 1..] {
                match (cache.kernel_integral(s, t), cache.phi_ratio(s, t)) {
                    (Ok(k), Ok(r)) => worst = worst.max((k - (1.0 - r)).abs()),
                    (Err(e), _) | (_, Err(e)) => return c.error(&label(&spec), e),
                }
            }
        }
        c.require(
            worst <= KERNEL_TOL,
            format!("{} max err {worst:.1e}", label(&spec)),
        );
    }
}

fn same_bridges_oracle(c: &mut Checks) {
    let cfg = IdentConfig::default();
    let probe = cfg.probe_set().with_y_offsets(&[-1.0, 0.0, 1.0, 2.0]);
    let linear = build(&FamilySpec::new("f_wiener").param("slope", 1.0));
    for y in [-1.0, 0.0, 2.0] {
        match same_bridges(
            &ItoSpec::driftless(&linear),
            &ItoSpec::pinned_drift(&linear, y),
            &probe,
            SAME_BRIDGES_TOL,
        ) {
            Ok(r) => c.require(
                r.same,
                format!(
                    "f_wiener(slope=1) y={y} same (F gap {:.1e})",
                    r.max_f_gap_scaled
                ),
            ),
            Err(e) => c.error("f_wiener", e),
        }
    }
    let family = build(&alpha2());
    let (a, b) = (
        ItoSpec::pinned_drift(&family, 0.0),
        ItoSpec::pinned_drift(&family, 1.0),
    );
    match same_bridges(&a, &b, &probe, SAME_BRIDGES_TOL) {
        Ok(r) => c.require(!r.same, "alpha_pinned(alpha=2) y=0 vs y=1 differ"),
        Err(e) => c.error("alpha_pinned", e),
    }
    let origin = ProbeSet {
        times: vec![0.0],
        zs: vec![0.0],
    };
    let f_at_origin = |spec: &ItoSpec| reciprocal_char(spec, &origin).and_then(|ch| ch.f(0.0, 0.0));
    match (f_at_origin(&a), f_at_origin(&b)) {
        (Ok(fa), Ok(fb)) => c.require(
            (fa - fb).abs() >= MIN_F_GAP,
            format!("F gap at (0,0) {:.6}", (fa - fb).abs()),
        ),
        (Err(e), _) | (_, Err(e)) => c.error("alpha_pinned", e),
    }
}

fn reproducibility(c: &mut Checks, seed: u64) {
    let mut config = RunConfig::new(CommandKind::Simulate, alpha2());
    config.x = 1.0;
    config.paths = 10_000;
    config.csv_paths = 20;
    config.seed = seed;
    let run = || execute(&config);
    let single = || {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| e.to_string())
            .and_then(|pool| pool.install(run).map_err(|e| e.to_string()))
    };
    match (run(), run(), single()) {
        (Ok(a), Ok(b), Ok(s)) => {
            let csv = |x: &crate::commands::Artifacts| {
                strip_preamble(x.csv.as_deref().unwrap_or_default())
            };
            c.require(
                a.report == b.report && csv(&a) == csv(&b),
                "simulate report and CSV identical across runs",
            );
            c.require(
                a.report == s.report && csv(&a) == csv(&s),
                "identical on one thread",
            );
        }
        (Err(e), _, _) | (_, Err(e), _) => c.error("simulate", e),
        (_, _, Err(e)) => c.error("simulate (one thread)", e),
    }
    let first = run_criterion(7, seed);
    let second = run_criterion(7, seed);
    c.require(
        first.line() == second.line(),
        "criterion lines identical across runs",
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lines_are_deterministic() {
        let a = run_all(&[7, 8], DEFAULT_SEED);
        let b = run_all(&[7, 8], DEFAULT_SEED);
        assert_eq!(
            strip_preamble(&render(&a, 1)),
            strip_preamble(&render(&b, 1))
        );
        assert!(a.iter().all(|o| o.pass), "{a:?}");
        let text = render(&a, 1);
        assert!(text.lines().any(|l| l.starts_with("# generated_unix: ")));
        assert!(text.contains("C7 PASS kernel identity"));
        assert!(text.ends_with("passed 2/2\n"));
    }

    #[test]
    fn failing_checks_are_marked() {
        let mut c = Checks::default();
        c.require(true, "fine");
        c.require(false, "broken");
        assert!(c.failed);
        assert_eq!(c.notes, ["fine", "FAILED broken"]);
    }
}
