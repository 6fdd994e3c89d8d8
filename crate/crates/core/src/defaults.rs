//! Central defaults file. Every tolerance and calibration constant used by
//! the library lives here and is echoed verbatim into report payloads, so a
//! report is reproducible from its own text.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    /// Diagonal regularization for discrete kernel matrices: the self entry
    /// is the kernel evaluated at `rho_reg * patch_radius`. Calibrated once
    /// so the 500-point unit-sphere capacity in R^3 converges to 1 under
    /// refinement.
    pub rho_reg: f64,

    /// Relative duality-gap target for the equilibrium-measure solver.
    pub fw_tol_rel: f64,
    /// Iteration cap for the equilibrium-measure solver.
    pub fw_max_iters: u64,

    /// Fraction of discretization points sprinkled in the interior of solid
    /// bodies (the rest go on the boundary, where equilibrium charge sits).
    pub interior_fraction: f64,

    /// Proximity safety factor: step size dt = min(dt_max, (distance/kappa)^2).
    pub kappa: f64,
    /// Safety factor for walkers near the bolt, where the outward radial
    /// drift gives the Euler step a first-order bias that the driftless flat
    /// walkers do not see. Sixteen times smaller steps push it below the
    /// Monte Carlo resolution of desk-scale runs.
    pub kappa_bolt: f64,
    /// Cap on the adaptive step size.
    pub dt_max: f64,
    /// Steps below this dt abort the trial (counted separately, never hidden).
    pub dt_floor: f64,
    /// Brownian-bridge crossing correction on by default.
    pub bridge: bool,
    /// Escape surrogate for infinite horizons: walkers stop at
    /// `escape_radius_factor * (initial target distance)`.
    pub escape_radius_factor: f64,
    /// Trials per batch in the deterministic parallel reduction. Fixed batch
    /// boundaries pin the reduction order regardless of worker count.
    pub trial_batch: u64,

    /// Confidence level for binomial confidence intervals in reports.
    pub ci_level: f64,

    /// Conservative heat-kernel upper-bound preset: exponential rate gamma
    /// and its prefactor. The prefactor is the flat-kernel grid calibration
    /// (which equals 1 for gamma >= 4) times a safety factor of 4.
    pub gamma_conservative: f64,
    pub c_gamma_conservative: f64,

    /// Grid resolution (per axis) for calibrating the simplified
    /// two-sided heat kernel bounds of hyperbolic type.
    pub hyperbolic_grid: usize,

    /// Curvature-norm prefactor on the Eguchi-Hanson factor:
    /// |Rm| = rm_constant * a^4 / r^6 (Kretschmann norm; checked against a
    /// finite-difference curvature evaluation in the test suite).
    pub rm_constant: f64,

    /// Uniformity budget asserted for the tubular-volume ratio
    /// Vol(N_2eps(S_eps) cap B(x0,r)) / (eps^4 r^(n-4)).
    pub jn_ratio_budget: f64,

    /// Monte Carlo sample count for volume estimates when unspecified.
    pub volume_mc_samples: u64,

    /// Absolute tolerance handed to the internal quadrature.
    pub quad_tol: f64,

    /// Master seed used when a config does not pin one.
    pub seed: u64,
}

pub const DEFAULTS: Defaults = Defaults {
    rho_reg: 0.54,
    fw_tol_rel: 1e-6,
    fw_max_iters: 100_000,
    interior_fraction: 0.10,
    kappa: 6.0,
    kappa_bolt: 24.0,
    dt_max: 1e6,
    dt_floor: 1e-14,
    bridge: true,
    escape_radius_factor: 50.0,
    trial_batch: 4096,
    ci_level: 0.99,
    gamma_conservative: 5.0,
    c_gamma_conservative: 4.0,
    hyperbolic_grid: 20,
    rm_constant: 19.595_917_942_265_42, // sqrt(384)
    jn_ratio_budget: 512.0,
    volume_mc_samples: 1_000_000,
    quad_tol: 1e-11,
    seed: 20_260_816,
};

pub fn defaults() -> &'static Defaults {
    &DEFAULTS
}
