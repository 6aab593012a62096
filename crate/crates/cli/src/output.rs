//! Path CSV and JSON report serialization.
//!
//! CSV files start with a `#` preamble (the only place a timestamp appears),
//! followed by the header `path_id,t,value` and one row per path and node.
//! Numbers carry 17 significant digits, so values re-parse bit-exactly.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use pinbridge::{SamplePath, SigmaTotal};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

pub const CSV_HEADER: &str = "path_id,t,value";

pub fn unix_timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// `#`-prefixed metadata lines; the timestamp line is the only varying one.
pub fn preamble(config: &RunConfig) -> Vec<String> {
    vec![
        format!("# pinbridge {} simulate", env!("CARGO_PKG_VERSION")),
        format!("# generated_unix: {}", unix_timestamp()),
        format!(
            "# family: {}",
            serde_json::to_string(&config.family).expect("family spec serializes")
        ),
        format!("# x: {:?}", config.x),
        format!("# y: {:?}", config.y),
        format!("# seed: {}", config.seed),
        format!("# method: {}", json_str(&config.method)),
        format!(
            "# grid: {} n={} t_end={:?}",
            json_str(&config.grid_mode),
            config.n,
            config.t_end
        ),
        format!(
            "# paths: {} of {}",
            config.csv_paths.min(config.paths),
            config.paths
        ),
    ]
}

fn json_str<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn paths_csv(preamble: &[String], paths: &[SamplePath]) -> String {
    let rows: usize = paths.iter().map(|p| p.values.len()).sum();
    let mut out = String::with_capacity(64 * (rows + preamble.len() + 1));
    for line in preamble {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for path in paths {
        for (t, v) in path.grid.nodes().iter().zip(&path.values) {
            let _ = writeln!(
                out,
                "{},{},{}",
                path.path_index,
                format_value(*t),
                format_value(*v)
            );
        }
    }
    out
}

/// Rows of a paths CSV, skipping the preamble and header.
pub fn parse_paths_csv(text: &str) -> Result<Vec<(u64, f64, f64)>, String> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != CSV_HEADER {
                return Err(format!(
                    "line {}: expected header `{CSV_HEADER}`",
                    lineno + 1
                ));
            }
            header_seen = true;
            continue;
        }
        let mut it = line.split(',');
        let bad = || format!("line {}: malformed row `{line}`", lineno + 1);
        let id = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let t = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let v = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() {
            return Err(bad());
        }
        rows.push((id, t, v));
    }
    Ok(rows)
}

/// Drops `#` lines, for comparing outputs across runs.
pub fn strip_preamble(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// `Sigma` as a number, or `"infinite"` / `"inconclusive"`.
pub fn sigma_json(sigma: SigmaTotal) -> Value {
    match sigma {
        SigmaTotal::Finite(v) => finite_or_tag(v),
        SigmaTotal::Infinite => Value::from("infinite"),
        SigmaTotal::Inconclusive => Value::from("inconclusive"),
    }
}

/// JSON has no infinities; those are spelled out.
pub fn finite_or_tag(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v.is_nan() {
        Value::from("nan")
    } else if v > 0.0 {
        Value::from("infinite")
    } else {
        Value::from("-infinite")
    }
}

pub fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use pinbridge::{make_grid, FamilySpec, GridMode, Method};

    #[test]
    fn csv_round_trips_bit_exactly() {
        let family = FamilySpec::new("alpha_pinned")
            .param("alpha", 2.0)
            .build()
            .unwrap();
        let grid = make_grid(32, GridMode::Geometric, 1.0 - 1e-4).unwrap();
        let paths =
            pinbridge::sim::generate_paths(&family, 0.3, -1.0, &grid, 5, Method::Exact, 0..4)
                .unwrap();
        let text = paths_csv(&["# test".into()], &paths);
        let rows = parse_paths_csv(&text).unwrap();
        assert_eq!(rows.len(), 4 * grid.len());
        let mut it = rows.iter();
        for p in &paths {
            for (t, v) in p.grid.nodes().iter().zip(&p.values) {
                let &(id, rt, rv) = it.next().unwrap();
                assert_eq!(id, p.path_index);
                assert_eq!(rt.to_bits(), t.to_bits());
                assert_eq!(rv.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn extreme_values_round_trip() {
        for v in [
            f64::MIN_POSITIVE,
            5e-324,
            1.0 - f64::EPSILON,
            -1e300,
            0.1 + 0.2,
            -0.0,
        ] {
            let back: f64 = format_value(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_paths_csv("a,b,c\n").is_err());
        assert!(parse_paths_csv("path_id,t,value\n1,2\n").is_err());
        assert!(parse_paths_csv("# x\npath_id,t,value\n1,0.5,2,3\n").is_err());
    }

    #[test]
    fn sigma_encoding() {
        assert_eq!(sigma_json(SigmaTotal::Finite(1.0)), Value::from(1.0));
        assert_eq!(sigma_json(SigmaTotal::Infinite), Value::from("infinite"));
        assert_eq!(finite_or_tag(f64::NEG_INFINITY), Value::from("-infinite"));
    }
}
