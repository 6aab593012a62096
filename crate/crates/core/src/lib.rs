//! Simulation and analysis of one-dimensional pinned diffusions
//!
//! ```text
//! dX_t = h(t) (y - X_t) dt + sigma(t) dB_t,   X_0 = x,   t in [0, 1)
//! ```
//!
//! | Module    | Contents                                                                 |
//! |-----------|--------------------------------------------------------------------------|
//! | [`funcs`] | time-dependent coefficients and the registry of built-in families        |
//! | [`quad`]  | adaptive quadrature, improper integrals toward 1, `phi`, `H`, `S`, `I`   |
//! | [`law`]   | closed-form Gaussian law, conditioned moments, exact path sampler        |
//! | [`sim`]   | grids, Euler-Maruyama, Monte Carlo statistics                            |
//! | [`ident`] | pinning checks, Gaussian-bridge identification, reciprocal characteristics |
//!
//! Every evaluation is restricted to `[0, T_MAX]` with `T_MAX = 1 - EPS_MIN`.

pub mod error;
pub mod funcs;
pub mod ident;
pub mod law;
pub mod quad;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use funcs::{make_family, reference_specs, DiffusionFamily, FamilySpec, TimeFunction};
pub use ident::{
    bridge_ode_residual, check_a2_prime, check_pinning, identify_gaussian_bridge, kappa_profile,
    reciprocal_char, route_consistency, same_bridges, BridgeVerdict, IdentConfig,
    IdentificationReport, ItoSpec, PinningOutcome, PinningVerdict, ProbeSet, ReciprocalChar,
};
pub use law::{conditioned_moments, ConditionedMoments, ExactSampler, PinnedLaw};
pub use quad::{
    improper_to_one, integrate, CalculusCache, ImproperKind, ImproperResult, SigmaTotal,
};
pub use sim::{make_grid, monte_carlo, GridMode, McReport, Method, PathGrid, SamplePath};

/// Truncation floor: nothing is evaluated at or beyond `1 - EPS_MIN`.
pub const EPS_MIN: f64 = 1e-9;

/// Largest admissible time.
pub const T_MAX: f64 = 1.0 - EPS_MIN;

pub(crate) fn check_time(t: f64) -> Result<()> {
    if (0.0..=T_MAX).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain { t })
    }
}
