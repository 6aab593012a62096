//! Validated run configuration.

use std::path::PathBuf;

use pinbridge::sim::{DEFAULT_STEPS, DEFAULT_T_END};
use pinbridge::{
    make_grid, DiffusionFamily, FamilySpec, GridMode, IdentConfig, Method, PathGrid, T_MAX,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_PATHS: usize = 1000;
pub const DEFAULT_CSV_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Simulate,
    CheckPinning,
    Identify,
    Characteristics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub family: FamilySpec,
    pub x: f64,
    pub y: f64,
    pub n: usize,
    pub grid_mode: GridMode,
    pub t_end: f64,
    /// Path count `N`.
    pub paths: usize,
    /// Paths written to the CSV (the report always uses all `N`).
    pub csv_paths: usize,
    pub seed: u64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub tol_ident: f64,
}

impl RunConfig {
    pub fn new(command: CommandKind, family: FamilySpec) -> Self {
        Self {
            command,
            family,
            x: 0.0,
            y: 0.0,
            n: DEFAULT_STEPS,
            grid_mode: GridMode::Geometric,
            t_end: DEFAULT_T_END,
            paths: DEFAULT_PATHS,
            csv_paths: DEFAULT_CSV_PATHS,
            seed: 0,
            method: Method::Exact,
            out: None,
            tol_ident: IdentConfig::default().tol_ident,
        }
    }

    /// Checks every field and builds the family; errors name the field.
    pub fn validate(&self) -> Result<DiffusionFamily, CliError> {
        for (field, v) in [("x", self.x), ("y", self.y)] {
            if !v.is_finite() {
                return Err(CliError::config(field, format!("must be finite, got {v}")));
            }
        }
        if self.command == CommandKind::Simulate {
            if self.n == 0 {
                return Err(CliError::config("n", "need at least one step"));
            }
            if !(self.t_end > 0.0 && self.t_end <= T_MAX) {
                return Err(CliError::config(
                    "t_end",
                    format!("must lie in (0, {T_MAX}], got {}", self.t_end),
                ));
            }
            if self.paths < 2 {
                return Err(CliError::config(
                    "N",
                    format!("need at least 2 paths, got {}", self.paths),
                ));
            }
        }
        if !(self.tol_ident > 0.0 && self.tol_ident.is_finite()) {
            return Err(CliError::config(
                "tol_ident",
                format!("must be positive, got {}", self.tol_ident),
            ));
        }
        self.family.build().map_err(|e| match e {
            pinbridge::Error::InvalidParam { param, constraint } => {
                CliError::config(format!("family.params.{param}"), constraint)
            }
            other => CliError::config("family", other.to_string()),
        })
    }

    pub fn grid(&self) -> Result<PathGrid, CliError> {
        make_grid(self.n, self.grid_mode, self.t_end)
            .map_err(|e| CliError::config("grid", e.to_string()))
    }

    pub fn ident_config(&self) -> IdentConfig {
        IdentConfig {
            tol_ident: self.tol_ident,
            ..IdentConfig::default()
        }
    }
}

/// `--family`: inline JSON, `@file` holding JSON, or a bare registry name.
pub fn parse_family(arg: &str) -> Result<FamilySpec, CliError> {
    let text = if let Some(path) = arg.strip_prefix('@') {
        std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?
    } else {
        arg.to_string()
    };
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        serde_json::from_str(trimmed)
            .map_err(|e| CliError::config("family", format!("bad family JSON: {e}")))
    } else if !trimmed.is_empty()
        && trimmed
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        Ok(FamilySpec::new(trimmed))
    } else {
        Err(CliError::config(
            "family",
            format!("expected JSON, @file or a family name, got `{trimmed}`"),
        ))
    }
}
