#![allow(dead_code)]

use pinbridge::{reference_specs, DiffusionFamily};

pub fn reference_families() -> Vec<DiffusionFamily> {
    reference_specs()
        .iter()
        .map(|s| s.build().unwrap())
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Cholesky of a symmetric matrix, failing on a pivot below `-tol`.
/// Pivots in `[-tol, 0]` are treated as zero (semidefinite directions).
#[allow(clippy::needless_range_loop)]
pub fn psd_cholesky(m: &[Vec<f64>], tol: f64) -> Result<(), String> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d < -tol {
            return Err(format!("pivot {j} = {d}"));
        }
        let root = d.max(0.0).sqrt();
        l[j][j] = root;
        for i in j + 1..n {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if root > tol.sqrt() { s / root } else { 0.0 };
        }
    }
    Ok(())
}

/// `H`, `S` and (where elementary) `I` in closed form, written independently
/// of the library's registry.
pub struct ClosedForms {
    pub h_int: Box<dyn Fn(f64) -> f64>,
    pub s: Box<dyn Fn(f64) -> f64>,
    pub ito: Option<Box<dyn Fn(f64) -> f64>>,
}

pub fn closed_forms(name: &str, slope: f64) -> ClosedForms {
    let log1m = |t: f64| (-t).ln_1p();
    match name {
        "brownian_bridge" => ClosedForms {
            h_int: Box::new(move |t| -log1m(t)),
            s: Box::new(|t| t),
            ito: Some(Box::new(|t| t / (1.0 - t))),
        },
        "alpha_pinned" => ClosedForms {
            h_int: Box::new(move |t| -2.0 * log1m(t)),
            s: Box::new(|t| t),
            ito: Some(Box::new(|t| ((1.0 - t).powi(-3) - 1.0) / 3.0)),
        },
        "alpha_gamma_pinned" => ClosedForms {
            h_int: Box::new(|t| 1.0 / (1.0 - t) - 1.0),
            s: Box::new(|t| t),
            ito: None,
        },
        "f_wiener" => {
            let cdf = move |t: f64| (t + slope * t * t / 2.0) / (1.0 + slope / 2.0);
            ClosedForms {
                h_int: Box::new(move |t| -(1.0 - cdf(t)).ln()),
                s: Box::new(cdf),
                ito: Some(Box::new(move |t| cdf(t) / (1.0 - cdf(t)))),
            }
        }
        "remark24" => ClosedForms {
            h_int: Box::new(move |t| t / (1.0 - t) - log1m(t)),
            s: Box::new(|t| t),
            ito: Some(Box::new(|t| 0.5 * (2.0 * t / (1.0 - t)).exp_m1())),
        },
        other => panic!("no closed forms for {other}"),
    }
}

pub fn closed_forms_of(family: &DiffusionFamily) -> ClosedForms {
    closed_forms(
        &family.name,
        family.params.get("slope").copied().unwrap_or(0.0),
    )
}
