//! Command execution. Everything is rendered to strings; the binary decides
//! where they go.

use pinbridge::funcs::family_descriptions;
use pinbridge::ident::{check_pinning, kappa_profile, ScaledProfile};
use pinbridge::sim::generate_paths;
use pinbridge::{
    bridge_ode_residual, identify_gaussian_bridge, monte_carlo, reciprocal_char, BridgeVerdict,
    DiffusionFamily, IdentConfig, ItoSpec, PinningVerdict,
};
use serde_json::{json, Value};

use crate::config::{CommandKind, RunConfig};
use crate::error::CliError;
use crate::output::{finite_or_tag, paths_csv, preamble, pretty, sigma_json};

/// Rendered outputs of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    /// JSON report.
    pub report: String,
    /// Paths CSV (simulate only).
    pub csv: Option<String>,
}

pub fn execute(config: &RunConfig) -> Result<Artifacts, CliError> {
    let family = config.validate()?;
    let report = match config.command {
        CommandKind::Simulate => return simulate(config, &family),
        CommandKind::CheckPinning => pinning_report(config, &family)?,
        CommandKind::Identify => identify_report(config, &family)?,
        CommandKind::Characteristics => characteristics_report(config, &family)?,
    };
    Ok(Artifacts {
        report: pretty(&report),
        csv: None,
    })
}

fn simulate(config: &RunConfig, family: &DiffusionFamily) -> Result<Artifacts, CliError> {
    let grid = config.grid()?;
    let report = monte_carlo(
        family,
        config.x,
        config.y,
        &grid,
        config.paths,
        config.seed,
        config.method,
    )?;
    let shown = config.csv_paths.min(config.paths) as u64;
    let paths = generate_paths(
        family,
        config.x,
        config.y,
        &grid,
        config.seed,
        config.method,
        0..shown,
    )?;
    let body = json!({
        "family": config.family,
        "grid": {"mode": config.grid_mode, "n": config.n, "t_end": config.t_end},
        "report": report,
    });
    Ok(Artifacts {
        report: pretty(&body),
        csv: Some(paths_csv(&preamble(config), &paths)),
    })
}

fn config_json(cfg: &IdentConfig) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn pinning_json(v: &PinningVerdict) -> Value {
    let mut value = serde_json::to_value(v).expect("verdict serializes");
    value["sigma_total"] = sigma_json(v.sigma_total);
    value["h_inf"] = finite_or_tag(v.h_inf);
    value
}

fn pinning_report(config: &RunConfig, family: &DiffusionFamily) -> Result<Value, CliError> {
    let cfg = config.ident_config();
    let verdict = check_pinning(family, &cfg)?;
    Ok(json!({
        "family": config.family,
        "pinning": pinning_json(&verdict),
        "config": config_json(&cfg),
    }))
}

fn profile_pairs(p: &ScaledProfile) -> Value {
    p.nodes
        .iter()
        .zip(&p.values)
        .map(|(t, v)| json!([t, finite_or_tag(*v)]))
        .collect()
}

fn reciprocal_json(
    family: &DiffusionFamily,
    cfg: &IdentConfig,
) -> Result<(Value, ScaledProfile), CliError> {
    let times = cfg.probe_times();
    let kappa = kappa_profile(family, &times, true)?;
    let ode = bridge_ode_residual(family, &times)?;
    let value = json!({
        "kappa_sup": finite_or_tag(kappa.sup_abs),
        "kappa_sup_scaled": finite_or_tag(kappa.sup_scaled),
        "ode_residual_sup_scaled": finite_or_tag(ode.sup_scaled),
        "y_independent": kappa.sup_scaled <= cfg.zero_tol,
        "ode_satisfied": ode.sup_scaled <= cfg.zero_tol,
    });
    Ok((value, kappa))
}

fn identify_report(config: &RunConfig, family: &DiffusionFamily) -> Result<Value, CliError> {
    let cfg = config.ident_config();
    let pinning = check_pinning(family, &cfg)?;
    let report = identify_gaussian_bridge(family, &cfg)?;
    let (mut reciprocal, _) = reciprocal_json(family, &cfg)?;
    let positive = report.verdict == BridgeVerdict::IsBridgeFamily;
    reciprocal["routes_agree"] = json!(
        report.verdict != BridgeVerdict::Undecidable
            && reciprocal["y_independent"] == json!(positive)
            && reciprocal["ode_satisfied"] == json!(positive)
    );
    let profile: Vec<Value> = report
        .residual_profile
        .iter()
        .map(|n| json!([n.t, n.residual.map_or(Value::Null, finite_or_tag)]))
        .collect();
    Ok(json!({
        "family": config.family,
        "pinning": pinning_json(&pinning),
        "identification": {
            "sigma": sigma_json(report.sigma_total),
            "residual": finite_or_tag(report.residual),
            "verdict": report.verdict,
            "tol_ident": report.tol_ident,
            "excluded_nodes": report.excluded_nodes,
            "identified_process": report.identified_process,
            "warnings": report.warnings,
            "residual_profile": profile,
        },
        "reciprocal": reciprocal,
        "config": config_json(&cfg),
    }))
}

fn characteristics_report(config: &RunConfig, family: &DiffusionFamily) -> Result<Value, CliError> {
    let cfg = config.ident_config();
    let (mut reciprocal, kappa) = reciprocal_json(family, &cfg)?;
    let probe = cfg.probe_set().with_y_offsets(&[config.y]);
    let spec = ItoSpec::pinned_drift(family, config.y);
    let chars = reciprocal_char(&spec, &probe)?;
    let mut samples = Vec::new();
    for &t in probe.times.iter().step_by(8) {
        for &z in &probe.zs {
            samples.push(json!({
                "t": t,
                "z": z,
                "F": finite_or_tag(chars.f(t, z)?),
                "rho_sq": finite_or_tag(chars.rho_sq(t, z)),
            }));
        }
    }
    reciprocal["kappa_profile"] = profile_pairs(&kappa);
    reciprocal["pinned_drift_samples"] = Value::Array(samples);
    Ok(json!({
        "family": config.family,
        "y": config.y,
        "analytic_partials": spec.partials.is_some(),
        "reciprocal": reciprocal,
        "config": config_json(&cfg),
    }))
}

pub fn list_families(as_json: bool) -> String {
    let entries = family_descriptions();
    if as_json {
        let v: Vec<Value> = entries
            .iter()
            .map(|(n, d)| json!({"name": n, "description": d}))
            .collect();
        return pretty(&v);
    }
    let width = entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    entries
        .iter()
        .map(|(n, d)| format!("{n:width$}  {d}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use pinbridge::FamilySpec;

    fn run(command: CommandKind, spec: FamilySpec) -> Value {
        let a = execute(&RunConfig::new(command, spec)).unwrap();
        serde_json::from_str(&a.report).unwrap()
    }

    #[test]
    fn identify_linear_density() {
        let v = run(
            CommandKind::Identify,
            FamilySpec::new("f_wiener").param("slope", 1.0),
        );
        assert_eq!(v["identification"]["verdict"], "is_bridge_family");
        assert!(v["identification"]["residual"].as_f64().unwrap() < 1e-7);
        assert!(v["identification"]["sigma"].is_number());
        assert!(v["reciprocal"]["kappa_sup"].is_number());
        assert_eq!(v["reciprocal"]["routes_agree"], true);
        assert!(v["config"]["tol_ident"].is_number());
    }

    #[test]
    fn remark24_pinning_report() {
        let v = run(CommandKind::CheckPinning, FamilySpec::new("remark24"));
        assert_eq!(v["pinning"]["a2"], "finite");
        assert_eq!(v["pinning"]["a2_prime"], "fails");
        assert_eq!(v["pinning"]["overall"], "pinned_by_A1A2");
        assert_eq!(v["pinning"]["sigma_total"].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn characteristics_of_alpha_pinned() {
        let v = run(
            CommandKind::Characteristics,
            FamilySpec::new("alpha_pinned").param("alpha", 2.0),
        );
        assert_eq!(v["reciprocal"]["y_independent"], false);
        let first = &v["reciprocal"]["kappa_profile"][0];
        assert_eq!(first[0], 0.0);
        assert!((first[1].as_f64().unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn simulate_is_deterministic() {
        let mut c = RunConfig::new(CommandKind::Simulate, FamilySpec::new("brownian_bridge"));
        c.paths = 500;
        c.csv_paths = 3;
        c.n = 16;
        let a = execute(&c).unwrap();
        let b = execute(&c).unwrap();
        assert_eq!(a.report, b.report);
        let strip = crate::output::strip_preamble;
        assert_eq!(
            strip(a.csv.as_ref().unwrap()),
            strip(b.csv.as_ref().unwrap())
        );
        let rows = crate::output::parse_paths_csv(a.csv.as_ref().unwrap()).unwrap();
        assert_eq!(rows.len(), 3 * 17);
    }

    #[test]
    fn unstable_uniform_euler_is_numerical() {
        let mut c = RunConfig::new(
            CommandKind::Simulate,
            FamilySpec::new("alpha_pinned").param("alpha", 2.0),
        );
        c.grid_mode = pinbridge::GridMode::Uniform;
        c.n = 100;
        c.method = pinbridge::Method::Euler;
        let err = execute(&c).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_NUMERICAL);
    }

    #[test]
    fn listing_names_every_family() {
        let text = list_families(false);
        for name in pinbridge::funcs::FAMILY_NAMES {
            assert!(text.contains(name));
        }
        let v: Value = serde_json::from_str(&list_families(true)).unwrap();
        assert_eq!(v.as_array().unwrap().len(), family_descriptions().len());
    }
}
