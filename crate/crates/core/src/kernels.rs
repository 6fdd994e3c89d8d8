//! Closed-form kernels, heat-kernel bounds, and the constants that tie the
//! hitting-probability sandwich together.
//!
//! Conventions: the heat kernel is the transition density of the
//! generator-Delta diffusion, so the flat kernel is
//! `(4 pi t)^(-n/2) exp(-d^2/(4t))`. The comparison constant is
//!
//! `Lambda = (omega_n / v) (gamma/4)^(n/2-1) C_gamma
//!          * Gamma(n/2-1) / Gamma(n/2-1, diam^2/(4T))`,
//!
//! which collapses to exactly 1 for the flat presets (gamma=4, C_gamma=1,
//! v=omega_n, infinite horizon).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::geometry::{ball_volume, distance, unit_ball_volume, ManifoldSpec, Point};
use crate::{Error, Result};

/// Extended nonnegative value: kernels blow up on the diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelValue {
    Finite(f64),
    Infinite,
}

impl KernelValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            KernelValue::Finite(v) => Some(v),
            KernelValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, KernelValue::Infinite)
    }
}

/// Which energy kernel a capacity computation uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelChoice {
    /// `(d(x0,y)/d(x,y))^(n-2)` with the fixed base point.
    Martin { base: Point },
    /// `d(x,y)^(2-n)`.
    Newtonian,
}

impl KernelChoice {
    pub fn exponent(&self, n: usize) -> Result<i32> {
        if n < 3 {
            return Err(Error::Domain(format!("kernels need dimension >= 3, got {n}")));
        }
        Ok((n - 2) as i32)
    }
}

/// Time horizon of a hitting experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeHorizon {
    Finite(f64),
    Infinite,
}

impl TimeHorizon {
    pub fn is_infinite(self) -> bool {
        self == TimeHorizon::Infinite
    }

    pub fn validate(self) -> Result<Self> {
        if let TimeHorizon::Finite(t) = self {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Domain(format!("time horizon must be positive, got {t}")));
            }
        }
        Ok(self)
    }
}

impl fmt::Display for TimeHorizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeHorizon::Finite(t) => write!(f, "{t}"),
            TimeHorizon::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for TimeHorizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inf" || s == "infinite" {
            return Ok(TimeHorizon::Infinite);
        }
        let t: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("time horizon `{s}` is neither a number nor `inf`")))?;
        TimeHorizon::Finite(t).validate()
    }
}

/// Ratio kernel normalized by the distance from the walk's starting point:
/// `(d(x0,y)/d(x,y))^(n-2)`. The diagonal is the infinity sentinel.
pub fn martin_kernel(x0: &Point, x: &Point, y: &Point) -> Result<KernelValue> {
    let m = x0.manifold;
    let n = m.dim();
    let d_xy = distance(&m, x, y)?;
    let d_x0y = distance(&m, x0, y)?;
    martin_ratio(d_x0y, d_xy, n)
}

/// Same kernel from precomputed distances.
pub fn martin_ratio(d_x0y: f64, d_xy: f64, n: usize) -> Result<KernelValue> {
    if n < 3 {
        return Err(Error::Domain(format!("Martin kernel needs n >= 3, got {n}")));
    }
    if d_xy == 0.0 {
        return Ok(KernelValue::Infinite);
    }
    Ok(KernelValue::Finite((d_x0y / d_xy).powi((n - 2) as i32)))
}

/// `d(x,y)^(2-n)`, infinite on the diagonal.
pub fn newtonian_kernel(x: &Point, y: &Point) -> Result<KernelValue> {
    let m = x.manifold;
    let d = distance(&m, x, y)?;
    newtonian_at(d, m.dim())
}

/// Same kernel from a precomputed distance.
pub fn newtonian_at(d: f64, n: usize) -> Result<KernelValue> {
    if n < 3 {
        return Err(Error::Domain(format!("Newtonian kernel needs n >= 3, got {n}")));
    }
    if d == 0.0 {
        return Ok(KernelValue::Infinite);
    }
    Ok(KernelValue::Finite(d.powi(2 - n as i32)))
}

/// Flat transition density `(4 pi t)^(-n/2) exp(-d^2/(4t))`.
pub fn heat_kernel_flat(n: usize, t: f64, d: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if d < 0.0 {
        return Err(Error::Domain(format!("distance must be nonnegative, got {d}")));
    }
    let log_pref = -(n as f64) / 2.0 * (4.0 * std::f64::consts::PI * t).ln();
    Ok((log_pref - d * d / (4.0 * t)).exp())
}

/// Gaussian lower bound under nonnegative Ricci curvature; sharp on flat
/// space, where it equals the kernel.
pub fn cheeger_yau_lower(n: usize, t: f64, d: f64) -> Result<f64> {
    heat_kernel_flat(n, t, d)
}

/// Parameters of the upper bound and of the comparison constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelBoundParams {
    pub n: usize,
    pub gamma: f64,
    pub c_gamma: f64,
    /// Noncollapsing volume ratio.
    pub v: f64,
    pub t_horizon: TimeHorizon,
    /// Diameter bound of the target set together with the starting point.
    pub diam: f64,
}

impl HeatKernelBoundParams {
    /// Flat-space parameters: sharp at every scale, infinite horizon.
    pub fn euclidean(n: usize) -> Result<Self> {
        let p = HeatKernelBoundParams {
            n,
            gamma: 4.0,
            c_gamma: 1.0,
            v: unit_ball_volume(n),
            t_horizon: TimeHorizon::Infinite,
            diam: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Curvature-robust parameters: gamma = 5 with a safety factor of 4 on
    /// the flat-calibrated constant (the gamma = 5 exponential already
    /// dominates the flat kernel, so the grid calibration yields 1).
    pub fn conservative(n: usize, v: f64, t_horizon: TimeHorizon, diam: f64) -> Result<Self> {
        let p = HeatKernelBoundParams {
            n,
            gamma: crate::defaults::DEFAULTS.gamma_conservative,
            c_gamma: crate::defaults::DEFAULTS.c_gamma_conservative,
            v,
            t_horizon,
            diam,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Domain(format!("need n >= 3, got {}", self.n)));
        }
        let euclidean_mode = self.gamma == 4.0 && self.c_gamma == 1.0;
        if !(self.gamma > 4.0) && !euclidean_mode {
            return Err(Error::Domain(format!(
                "gamma must exceed 4 (or be exactly 4 with unit constant), got {}",
                self.gamma
            )));
        }
        if !(self.c_gamma > 0.0) {
            return Err(Error::Domain("c_gamma must be positive".into()));
        }
        if !(self.v > 0.0) {
            return Err(Error::Domain("noncollapsing ratio must be positive".into()));
        }
        if self.diam < 0.0 {
            return Err(Error::Domain("diameter must be nonnegative".into()));
        }
        self.t_horizon.validate()?;
        Ok(())
    }
}

/// Gaussian upper bound `C_gamma omega_n (4 pi)^(-n/2) vol_ball^(-1)
/// exp(-d^2/(gamma t))` with `vol_ball = Vol(B(x, sqrt(t)))`.
pub fn li_yau_upper(params: &HeatKernelBoundParams, vol_ball: f64, t: f64, d: f64) -> Result<f64> {
    params.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if !(vol_ball > 0.0) {
        return Err(Error::Domain(format!("ball volume must be positive, got {vol_ball}")));
    }
    let n = params.n as f64;
    let pref = params.c_gamma * unit_ball_volume(params.n)
        * (4.0 * std::f64::consts::PI).powf(-n / 2.0)
        / vol_ball;
    Ok(pref * (-d * d / (params.gamma * t)).exp())
}

/// The two-sided hitting comparison constant. Exactly 1 for the flat
/// presets; generally `>= (omega_n/v) (gamma/4)^(n/2-1) C_gamma`, increasing
/// as the horizon shrinks or the diameter grows.
pub fn lambda_constant(params: &HeatKernelBoundParams) -> Result<f64> {
    params.validate()?;
    let n = params.n;
    let s = n as f64 / 2.0 - 1.0;
    let ratio = match params.t_horizon {
        TimeHorizon::Infinite => 1.0,
        TimeHorizon::Finite(t) => {
            let x = params.diam * params.diam / (4.0 * t);
            gamma_fn(s) / incomplete_gamma_upper(s, x)?
        }
    };
    Ok(unit_ball_volume(n) / params.v
        * (params.gamma / 4.0).powf(s)
        * params.c_gamma
        * ratio)
}

/// Noncollapsing ratio `inf Vol(B(y, sqrt(2T))) / (2T)^(n/2)` over the given
/// base points.
pub fn noncollapse_v(
    m: &ManifoldSpec,
    points: &[Point],
    t_horizon: f64,
    samples: u64,
    seed: u64,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Domain("need at least one base point".into()));
    }
    if !(t_horizon > 0.0) || !t_horizon.is_finite() {
        return Err(Error::Domain("noncollapsing ratio needs a finite positive horizon".into()));
    }
    let radius = (2.0 * t_horizon).sqrt();
    let denom = (2.0 * t_horizon).powf(m.dim() as f64 / 2.0);
    let mut v = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let est = ball_volume(m, p, radius, samples, seed.wrapping_add(i as u64))?;
        v = v.min(est.value / denom);
    }
    Ok(v)
}

/// Upper incomplete gamma `Gamma(s, x) = int_x^inf xi^(s-1) e^(-xi) d xi`,
/// relative accuracy 1e-10. Series for small `x`, Lentz continued fraction
/// for large.
pub fn incomplete_gamma_upper(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("shape must be positive, got {s}")));
    }
    if x < 0.0 {
        return Err(Error::Domain(format!("argument must be nonnegative, got {x}")));
    }
    if x == 0.0 {
        return Ok(gamma_fn(s));
    }
    if x < s + 1.0 {
        // lower series, subtracted from the full integral
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut k = 0.0;
        while term.abs() > sum.abs() * 1e-16 {
            k += 1.0;
            term *= x / (s + k);
            sum += term;
            if k > 1e6 {
                break;
            }
        }
        let lower = sum * (s * x.ln() - x).exp();
        Ok(gamma_fn(s) - lower)
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-15 {
                break;
            }
        }
        Ok((s * x.ln() - x).exp() * h)
    }
}

/// Gamma function for positive arguments (Lanczos, g = 7).
pub(crate) fn gamma_fn(s: f64) -> f64 {
    ln_gamma(s).exp()
}

pub(crate) fn ln_gamma(s: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(s > 0.0);
    if s < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * s).sin()).ln() - ln_gamma(1.0 - s);
    }
    let z = s - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Two-sided bound for the occupation density `int_0^T rho_t(x,y) dt`,
/// obtained by integrating the Gaussian bounds in time. Both endpoints are
/// incomplete-gamma closed forms of the shape `const * d^(2-n)`; on the flat
/// presets with infinite horizon they coincide with the exact potential
/// `Gamma(n/2-1) d^(2-n) / (4 pi^(n/2))`.
pub fn green_potential_bounds(params: &HeatKernelBoundParams, d: f64) -> Result<(f64, f64)> {
    params.validate()?;
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    let n = params.n as f64;
    let s = n / 2.0 - 1.0;
    let shared = d.powf(2.0 - n) / (4.0 * std::f64::consts::PI.powf(n / 2.0));
    let (arg_lo, arg_hi) = match params.t_horizon {
        TimeHorizon::Infinite => (0.0, 0.0),
        TimeHorizon::Finite(t) => (d * d / (4.0 * t), d * d / (params.gamma * t)),
    };
    let lo = shared * incomplete_gamma_upper(s, arg_lo)?;
    let hi = shared
        * unit_ball_volume(params.n) / params.v
        * params.c_gamma
        * (params.gamma / 4.0).powf(s)
        * incomplete_gamma_upper(s, arg_hi)?;
    Ok((lo, hi))
}

/// Calibrated constants for the negative-curvature bound pair.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HyperbolicCalibration {
    pub c_n: f64,
    pub c_simplified: f64,
    pub t_max: f64,
    pub d_max: f64,
    pub grid: usize,
}

fn hyp_lower_raw(n: f64, t: f64, d: f64) -> f64 {
    (-d * d / (4.0 * t) - (n - 1.0) * (n - 1.0) * t / 4.0 - (n - 1.0) * d / 2.0).exp()
        * t.powf(-n / 2.0)
}

fn hyp_upper_raw(t: f64, d: f64, vol_x: f64, vol_y: f64) -> f64 {
    (t - d * d / (8.0 * t)).exp() / (vol_x * vol_y).sqrt()
}

/// Pick the smallest constants making the lower form sit below the upper
/// form, and the simplified Gaussian pair contain both, over a fixed
/// log-in-time grid on `(0, t_max] x [0, d_max]`.
pub fn calibrate_hyperbolic(
    n: usize,
    vol_x: f64,
    vol_y: f64,
    t_max: f64,
    d_max: f64,
    grid: usize,
) -> Result<HyperbolicCalibration> {
    if n < 2 {
        return Err(Error::Domain(format!("need n >= 2, got {n}")));
    }
    if !(t_max > 0.0) || !(d_max >= 0.0) || !(vol_x > 0.0) || !(vol_y > 0.0) || grid < 2 {
        return Err(Error::Domain("bad calibration window".into()));
    }
    let nf = n as f64;
    let mut c_n: f64 = 1.0;
    let mut extra: f64 = 1.0;
    for i in 0..grid {
        let t = t_max * (1e-2f64).powf(1.0 - i as f64 / (grid - 1) as f64);
        for j in 0..grid {
            let d = d_max * j as f64 / (grid - 1) as f64;
            let lo = hyp_lower_raw(nf, t, d);
            let up = hyp_upper_raw(t, d, vol_x, vol_y);
            c_n = c_n.max((lo / up).sqrt());
            // simplified interval must contain the primary one
            let widen_lo = ((nf - 1.0) * (nf - 1.0) * t / 4.0 + (nf - 1.0) * d / 2.0).exp();
            let widen_up = (vol_x * vol_y).powf(-0.5) * t.powf(nf / 2.0) * t.exp();
            extra = extra.max(widen_lo).max(widen_up);
        }
    }
    Ok(HyperbolicCalibration {
        c_n,
        c_simplified: c_n * extra,
        t_max,
        d_max,
        grid,
    })
}

/// Bound pair under negative curvature, plus the simplified Gaussian pair.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HyperbolicBounds {
    pub lower: f64,
    pub upper: f64,
    pub simplified_lower: f64,
    pub simplified_upper: f64,
}

pub fn hyperbolic_bounds(
    n: usize,
    t: f64,
    d: f64,
    vol_x: f64,
    vol_y: f64,
    calib: &HyperbolicCalibration,
) -> Result<HyperbolicBounds> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if d < 0.0 || !(vol_x > 0.0) || !(vol_y > 0.0) {
        return Err(Error::Domain("bad bound query".into()));
    }
    let nf = n as f64;
    let s_lo = t.powf(-nf / 2.0) * (-d * d / (4.0 * t)).exp();
    let s_up = t.powf(-nf / 2.0) * (-d * d / (8.0 * t)).exp();
    Ok(HyperbolicBounds {
        lower: hyp_lower_raw(nf, t, d) / calib.c_n,
        upper: calib.c_n * hyp_upper_raw(t, d, vol_x, vol_y),
        simplified_lower: s_lo / calib.c_simplified,
        simplified_upper: calib.c_simplified * s_up,
    })
}
