//! Monte Carlo hitting experiments: Euler-Maruyama walkers on the flat and
//! curved-product families, first-hitting estimation with barrier-crossing
//! corrections, two-walker sausage intersection, exit-time tails, and the
//! radial bolt-hitting experiment with its closed-form check value.
//!
//! Determinism contract: every trial derives its own counter-based seed from
//! the master seed, trials are folded in index order, and wall time is the
//! only field excluded from serialized reports. Reports are therefore
//! byte-identical across thread counts.
//!
//! Step-size policy: `dt = min(dt_max, (distance_to_target / kappa)^2)`,
//! truncated to the remaining horizon. A step whose proposed `dt` falls
//! below 1e-14 aborts the trial; aborted trials are counted separately and
//! flagged when they exceed 0.1% of the total.
//!
//! Crossing corrections: endpoint checks are supplemented by an exact chord
//! test against spherical targets and, when `bridge_correction` is on, by a
//! Brownian-bridge crossing draw with survival weight `exp(-h0 h1 / dt)` for
//! barrier clearances `h0, h1` (the per-coordinate variance of a step is
//! `2 dt`). Bridge draws come from a dedicated stream seeded off the walker
//! stream, so toggling the correction never changes the sampled path; with
//! the same seed, switching the bridge on can only convert non-hits to hits.
//!
//! Infinite horizons use an escape radius of 50 times the starting distance:
//! a walker that leaves it folds the exact harmonic remainder
//! (`(R/d)^(n-2)` per spherical body, the radial potential on the curved
//! family) into the estimate instead of wandering forever.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults::DEFAULTS;
use crate::geometry::{distance, eh_radial_drift, ManifoldSpec, Point, SetSpec};
use crate::harness::binomial_ci;
use crate::kernels::TimeHorizon;
use crate::{Error, Result};

const DT_FLOOR: f64 = 1e-14;
/// Clearances below this fraction of the target scale count as arrival.
/// Without an absorbing band the quadratic step law lets a walker creep
/// toward the boundary through ever smaller steps until `dt` underflows
/// the floor, turning almost-sure hits into aborts.
const ABSORB_REL: f64 = 1e-5;
const POLAR_GUARD: f64 = 1e-9;
const PI: f64 = std::f64::consts::PI;

/// Time-stepping policy for all walkers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub dt_max: f64,
    /// Proximity divisor: steps near a barrier scale like
    /// `(distance/kappa)^2`, so one step moves about `sqrt(2)/kappa` of the
    /// remaining gap.
    pub kappa: f64,
    pub bridge_correction: bool,
}

impl StepPolicy {
    pub fn standard() -> Self {
        StepPolicy {
            dt_max: DEFAULTS.dt_max,
            kappa: DEFAULTS.kappa,
            bridge_correction: DEFAULTS.bridge,
        }
    }

    /// Policy for walkers that measure the bolt. The outward radial drift
    /// near the bolt gives the Euler step a first-order bias (about thirty
    /// percent of the hitting probability at the standard ratio); the finer
    /// ratio pushes it below Monte Carlo resolution at desk-scale trial
    /// counts.
    pub fn bolt() -> Self {
        StepPolicy { kappa: DEFAULTS.kappa_bolt, ..Self::standard() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0) || !self.dt_max.is_finite() {
            return Err(Error::Config(format!(
                "dt_max must be positive and finite, got {}",
                self.dt_max
            )));
        }
        if !(self.kappa >= 2.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!(
                "kappa must be at least 2, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    fn base_dt(&self, dist: f64) -> f64 {
        let d = dist.max(0.0);
        (d / self.kappa).powi(2).min(self.dt_max)
    }

    /// Same trajectory law at half the time resolution, for bias studies.
    pub fn halved(&self) -> Self {
        StepPolicy {
            dt_max: 0.5 * self.dt_max,
            kappa: self.kappa * std::f64::consts::SQRT_2,
            bridge_correction: self.bridge_correction,
        }
    }
}

/// Result of a single walker trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrialOutcome {
    Hit { time: f64 },
    /// Left the escape radius on an infinite-horizon run; carries the
    /// harmonic remainder folded into the estimator.
    Escaped { weight: f64 },
    /// Reached the time horizon without hitting.
    Survived,
    /// Step size underflowed.
    Aborted,
}

/// Aggregated Monte Carlo estimate with its exact binomial interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialReport {
    pub hits: u64,
    pub trials: u64,
    pub aborted: u64,
    /// Hit fraction plus the mean folded escape remainder.
    pub p_hat: f64,
    /// Exact two-sided interval on the hit fraction, shifted by the escape
    /// correction so it brackets `p_hat`.
    pub ci: (f64, f64),
    pub ci_level: f64,
    pub escape_correction: f64,
    pub seed: u64,
    pub policy: StepPolicy,
    pub note: Option<String>,
    #[serde(skip, default)]
    pub wall_time: Duration,
}

/// Exit-time tail estimate together with the Gaussian-type bound it is
/// checked against.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExitTailReport {
    pub report: TrialReport,
    /// `exp(-r^2 / (100 delta))`.
    pub tail_bound: f64,
    /// Upper CI endpoint does not exceed the bound.
    pub within_bound: bool,
}

/// Bolt-hitting estimate with the closed-form radial check value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EhBoltReport {
    pub report: TrialReport,
    /// Exact hitting probability of the radial diffusion.
    pub oracle: f64,
    pub barrier_radius: f64,
    pub start_radius: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Counter-based per-trial seed. Distinct `(trial, walker)` pairs with
/// `walker < 8` map to distinct seeds for any fixed master seed: the pair is
/// packed injectively, multiplied by an odd constant, and passed through a
/// bijective finalizer.
pub fn derive_trial_seed(master: u64, trial: u64, walker: u32) -> u64 {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
    debug_assert!(walker < 8, "walker channel out of range");
    let k = (trial << 3) | u64::from(walker & 7);
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(k.wrapping_add(1))))
}

fn fill_noise(rng: &mut ChaCha8Rng, buf: &mut [f64]) {
    for z in buf.iter_mut() {
        *z = rng.sample(StandardNormal);
    }
}

/// One Euler-Maruyama step in chart coordinates. Flat coordinates get
/// variance `2 dt` per component. On the curved factor the radial and polar
/// coordinates carry the divergence-form drift, the angular noise comes from
/// the Cholesky factor of the inverse metric block, the walker reflects off
/// the bolt, and the polar angle reflects off the axis.
fn step_in_place(m: &ManifoldSpec, c: &mut [f64], dt: f64, noise: &[f64]) {
    let s = (2.0 * dt).sqrt();
    match *m {
        ManifoldSpec::Euclidean { .. } => {
            for (x, z) in c.iter_mut().zip(noise) {
                *x += s * z;
            }
        }
        ManifoldSpec::EguchiHansonProduct { bolt_scale: a, .. } => {
            let r = c[0];
            let th = c[1].clamp(POLAR_GUARD, PI - POLAR_GUARD);
            let t = a / r;
            let q = (t * t) * (t * t);
            let sig_r = (1.0 - q).max(0.0).sqrt();
            // the polar drift grows like cot(theta); cap its increment so a
            // step near the axis cannot catapult the angle
            let dth_drift = ((4.0 / (r * r)) * (th.cos() / th.sin()) * dt).clamp(-0.25, 0.25);
            // fiber coefficient 1/sqrt(1-q) blows up on the bolt; the fiber
            // angle is periodic there, so capping it only perturbs a
            // degenerate coordinate
            let inv_fiber = 1.0 / (1.0 - q).max(1e-12).sqrt();
            let (sin_th, cos_th) = th.sin_cos();

            let mut r_new = r + eh_radial_drift(a, r) * dt + s * sig_r * noise[0];
            if r_new < a {
                r_new = 2.0 * a - r_new;
            }
            c[0] = r_new;

            let mut th_new = (th + dth_drift + s * (2.0 / r) * noise[1]).rem_euclid(2.0 * PI);
            if th_new > PI {
                th_new = 2.0 * PI - th_new;
            }
            c[1] = th_new;

            c[2] = (c[2] + s * (2.0 / (r * sin_th)) * noise[2]).rem_euclid(2.0 * PI);
            c[3] = (c[3]
                + s * ((2.0 / r) * inv_fiber * noise[3] - (2.0 * cos_th / (r * sin_th)) * noise[2]))
                .rem_euclid(2.0 * PI);

            for (x, z) in c[4..].iter_mut().zip(&noise[4..]) {
                *x += s * z;
            }
        }
    }
}

/// Single diffusion step from `p` with the given standard normal vector.
pub fn simulate_step(m: &ManifoldSpec, p: &Point, dt: f64, noise: &[f64]) -> Result<Point> {
    if p.manifold != *m {
        return Err(Error::Domain(format!(
            "point belongs to {} but the step targets {}",
            p.manifold, m
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("dt must be positive and finite, got {dt}")));
    }
    if noise.len() != m.chart_dim() {
        return Err(Error::DimensionMismatch { expected: m.chart_dim(), got: noise.len() });
    }
    let mut c = p.coords.clone();
    step_in_place(m, &mut c, dt, noise);
    Point::new(m.clone(), c)
}

#[derive(Clone, Debug)]
struct CenteredBody {
    center: Vec<f64>,
    radius: f64,
    /// Solid ball (hit anywhere inside) versus shell (hit on crossing).
    solid: bool,
}

#[derive(Clone, Debug)]
enum Target {
    Centered(Vec<CenteredBody>),
    Bolt { r_star: f64, a: f64 },
    Generic,
}

fn collect_centered(set: &SetSpec, out: &mut Vec<CenteredBody>) -> bool {
    match set {
        SetSpec::Ball { center, radius } => {
            out.push(CenteredBody { center: center.clone(), radius: *radius, solid: true });
            true
        }
        SetSpec::SphereShell { center, radius } => {
            out.push(CenteredBody { center: center.clone(), radius: *radius, solid: false });
            true
        }
        SetSpec::FiniteUnion(members) => members.iter().all(|s| collect_centered(s, out)),
        _ => false,
    }
}

fn flat_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum distance from `c` to the segment `[p, q]`.
fn point_segment_dist(c: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let mut dd = 0.0;
    let mut dc = 0.0;
    for i in 0..c.len() {
        let d = q[i] - p[i];
        dd += d * d;
        dc += d * (c[i] - p[i]);
    }
    let t = if dd > 0.0 { (dc / dd).clamp(0.0, 1.0) } else { 0.0 };
    let mut out = 0.0;
    for i in 0..c.len() {
        let proj = p[i] + t * (q[i] - p[i]);
        let g = c[i] - proj;
        out += g * g;
    }
    out.sqrt()
}

/// Precomputed per-run state shared by every trial of a hitting experiment.
struct HitPlan {
    m: ManifoldSpec,
    set: SetSpec,
    start: Vec<f64>,
    target: Target,
    horizon: TimeHorizon,
    policy: StepPolicy,
    /// Infinite-horizon escape threshold (on the center distance for flat
    /// targets, on the radial coordinate for the bolt); infinity otherwise.
    escape_radius: f64,
    /// Absolute clearance below which a trial counts as a hit.
    absorb: f64,
    start_inside: bool,
    exponent: i32,
}

impl HitPlan {
    fn new(
        m: &ManifoldSpec,
        x0: &Point,
        set: &SetSpec,
        horizon: TimeHorizon,
        policy: StepPolicy,
    ) -> Result<Self> {
        policy.validate()?;
        horizon.validate()?;
        set.validate(m)?;
        if x0.manifold != *m {
            return Err(Error::Domain(format!(
                "start point belongs to {} but the experiment targets {}",
                x0.manifold, m
            )));
        }
        let start_inside = set.signed_level(m, x0)? <= 0.0;

        let mut bodies = Vec::new();
        let target = if collect_centered(set, &mut bodies) {
            Target::Centered(bodies)
        } else if let SetSpec::BoltSublevel { r_star } = set {
            let a = m.bolt_scale().expect("validated bolt sublevel");
            Target::Bolt { r_star: *r_star, a }
        } else {
            Target::Generic
        };

        let escape_radius = match horizon {
            TimeHorizon::Finite(_) => f64::INFINITY,
            TimeHorizon::Infinite => match &target {
                Target::Centered(bodies) => {
                    let reach = bodies
                        .iter()
                        .map(|b| flat_dist(&x0.coords, &b.center) + b.radius)
                        .fold(0.0f64, f64::max);
                    DEFAULTS.escape_radius_factor * reach
                }
                Target::Bolt { .. } => {
                    DEFAULTS.escape_radius_factor * x0.radial().expect("curved start")
                }
                Target::Generic => {
                    return Err(Error::UnsupportedGeometry(
                        "infinite-horizon hitting needs a ball, sphere, union of those, \
                         or the bolt sublevel"
                            .into(),
                    ))
                }
            },
        };

        let absorb = match &target {
            Target::Centered(bodies) => {
                ABSORB_REL * bodies.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min)
            }
            Target::Bolt { r_star, .. } => ABSORB_REL * r_star,
            Target::Generic => 0.0,
        };

        let n = m.dim();
        Ok(HitPlan {
            m: m.clone(),
            set: set.clone(),
            start: x0.coords.clone(),
            target,
            horizon,
            policy,
            escape_radius,
            absorb,
            start_inside,
            exponent: n as i32 - 2,
        })
    }

    fn run(&self, rng: &mut ChaCha8Rng) -> TrialOutcome {
        // the bridge stream is always split off, so the path draws are
        // identical whether or not the correction is enabled
        let mut bridge_rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>());
        if self.start_inside {
            return TrialOutcome::Hit { time: 0.0 };
        }
        match &self.target {
            Target::Centered(bodies) => self.run_centered(bodies, rng, &mut bridge_rng),
            Target::Bolt { r_star, a } => self.run_bolt(*r_star, *a, rng, &mut bridge_rng),
            Target::Generic => self.run_generic(rng, &mut bridge_rng),
        }
    }

    fn run_centered(
        &self,
        bodies: &[CenteredBody],
        rng: &mut ChaCha8Rng,
        bridge_rng: &mut ChaCha8Rng,
    ) -> TrialOutcome {
        let mut x = self.start.clone();
        let mut prev = x.clone();
        let mut noise = vec![0.0; self.m.chart_dim()];
        let mut dists: Vec<f64> = bodies.iter().map(|b| flat_dist(&x, &b.center)).collect();
        let mut t = 0.0;
        loop {
            let gap = bodies
                .iter()
                .zip(&dists)
                .map(|(b, d)| if b.solid { (d - b.radius).max(0.0) } else { (d - b.radius).abs() })
                .fold(f64::INFINITY, f64::min);
            if gap <= self.absorb {
                return TrialOutcome::Hit { time: t };
            }
            let base = self.policy.base_dt(gap);
            if base < DT_FLOOR {
                return TrialOutcome::Aborted;
            }
            let dt = match self.horizon {
                TimeHorizon::Finite(t_end) => {
                    let rem = t_end - t;
                    if rem <= 0.0 {
                        return TrialOutcome::Survived;
                    }
                    base.min(rem)
                }
                TimeHorizon::Infinite => base,
            };

            prev.copy_from_slice(&x);
            fill_noise(rng, &mut noise);
            step_in_place(&self.m, &mut x, dt, &noise);

            let mut min_center = f64::INFINITY;
            for (b, d_slot) in bodies.iter().zip(dists.iter_mut()) {
                let d_prev = *d_slot;
                let d_new = flat_dist(&x, &b.center);
                *d_slot = d_new;
                min_center = min_center.min(d_new);

                if b.solid && d_new <= b.radius {
                    return TrialOutcome::Hit { time: t + dt };
                }
                let chord = point_segment_dist(&b.center, &prev, &x);
                let crossed = chord <= b.radius && d_prev.max(d_new) >= b.radius;
                if crossed || (b.solid && chord <= b.radius) {
                    return TrialOutcome::Hit { time: t + dt };
                }
                if self.policy.bridge_correction {
                    let h0 = d_prev - b.radius;
                    let h1 = d_new - b.radius;
                    // same side of the barrier here (crossings returned
                    // above), so the product is positive
                    let p_cross = (-(h0 * h1).abs() / dt).exp();
                    if bridge_rng.random::<f64>() < p_cross {
                        return TrialOutcome::Hit { time: t + dt };
                    }
                }
            }

            if min_center >= self.escape_radius {
                let weight: f64 = bodies
                    .iter()
                    .zip(&dists)
                    .map(|(b, d)| (b.radius / d).powi(self.exponent))
                    .sum();
                return TrialOutcome::Escaped { weight: weight.min(1.0) };
            }
            t += dt;
            if let TimeHorizon::Finite(t_end) = self.horizon {
                if t >= t_end {
                    return TrialOutcome::Survived;
                }
            }
        }
    }

    fn run_bolt(
        &self,
        r_star: f64,
        a: f64,
        rng: &mut ChaCha8Rng,
        bridge_rng: &mut ChaCha8Rng,
    ) -> TrialOutcome {
        let mut x = self.start.clone();
        let mut noise = vec![0.0; self.m.chart_dim()];
        let mut t = 0.0;
        loop {
            let r = x[0];
            if r - r_star <= self.absorb {
                return TrialOutcome::Hit { time: t };
            }
            let base = self.policy.base_dt(r - r_star);
            if base < DT_FLOOR {
                return TrialOutcome::Aborted;
            }
            let dt = match self.horizon {
                TimeHorizon::Finite(t_end) => {
                    let rem = t_end - t;
                    if rem <= 0.0 {
                        return TrialOutcome::Survived;
                    }
                    base.min(rem)
                }
                TimeHorizon::Infinite => base,
            };

            fill_noise(rng, &mut noise);
            step_in_place(&self.m, &mut x, dt, &noise);
            let r_new = x[0];
            if r_new <= r_star {
                return TrialOutcome::Hit { time: t + dt };
            }
            if self.policy.bridge_correction
                && bolt_bridge_hit(a, r_star, r, r_new, dt, bridge_rng).is_some()
            {
                return TrialOutcome::Hit { time: t + dt };
            }
            if r_new >= self.escape_radius {
                let weight = eh_bolt_oracle(a, r_star, r_new).unwrap_or(0.0);
                return TrialOutcome::Escaped { weight };
            }
            t += dt;
            if let TimeHorizon::Finite(t_end) = self.horizon {
                if t >= t_end {
                    return TrialOutcome::Survived;
                }
            }
        }
    }

    fn run_generic(&self, rng: &mut ChaCha8Rng, bridge_rng: &mut ChaCha8Rng) -> TrialOutcome {
        let mut x = self.start.clone();
        let mut noise = vec![0.0; self.m.chart_dim()];
        let mut point = Point { manifold: self.m.clone(), coords: x.clone() };
        let mut level = self
            .set
            .signed_level(&self.m, &point)
            .expect("level checked at plan time");
        let absorb = ABSORB_REL * level;
        let mut t = 0.0;
        loop {
            if level <= absorb {
                return TrialOutcome::Hit { time: t };
            }
            let base = self.policy.base_dt(level);
            if base < DT_FLOOR {
                return TrialOutcome::Aborted;
            }
            let TimeHorizon::Finite(t_end) = self.horizon else {
                unreachable!("generic targets are finite-horizon only");
            };
            let rem = t_end - t;
            if rem <= 0.0 {
                return TrialOutcome::Survived;
            }
            let dt = base.min(rem);

            fill_noise(rng, &mut noise);
            step_in_place(&self.m, &mut x, dt, &noise);
            point.coords.copy_from_slice(&x);
            let new_level = match self.set.signed_level(&self.m, &point) {
                Ok(l) => l,
                Err(_) => return TrialOutcome::Aborted,
            };
            if new_level <= 0.0 {
                return TrialOutcome::Hit { time: t + dt };
            }
            if self.policy.bridge_correction {
                let p_cross = (-(level * new_level).abs() / dt).exp();
                if bridge_rng.random::<f64>() < p_cross {
                    return TrialOutcome::Hit { time: t + dt };
                }
            }
            level = new_level;
            t += dt;
            if t >= t_end {
                return TrialOutcome::Survived;
            }
        }
    }
}

/// Bridge crossing draw for the radial bolt barrier: clearances are radial,
/// the local variance rate is `2 (1 - (a/r)^4)` at the step midpoint.
fn bolt_bridge_hit(
    a: f64,
    r_star: f64,
    r0: f64,
    r1: f64,
    dt: f64,
    bridge_rng: &mut ChaCha8Rng,
) -> Option<()> {
    let mid = 0.5 * (r0 + r1);
    let tq = a / mid;
    let q = (tq * tq) * (tq * tq);
    let rate = (1.0 - q).max(1e-12);
    let h0 = r0 - r_star;
    let h1 = r1 - r_star;
    let p_cross = (-(h0 * h1).abs() / (rate * dt)).exp();
    if bridge_rng.random::<f64>() < p_cross {
        Some(())
    } else {
        None
    }
}

/// Run a single first-hitting trial. Starting inside the target reports an
/// immediate hit. Infinite horizons are supported for spherical targets and
/// the bolt sublevel, where the escaped remainder has a closed form.
pub fn first_hitting(
    m: &ManifoldSpec,
    x0: &Point,
    set: &SetSpec,
    horizon: TimeHorizon,
    policy: StepPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<TrialOutcome> {
    let plan = HitPlan::new(m, x0, set, horizon, policy)?;
    Ok(plan.run(rng))
}

/// Parallel trial driver: indexed, batched, order-preserving.
fn run_parallel<F>(trials: u64, trial_fn: F) -> Vec<TrialOutcome>
where
    F: Fn(u64) -> TrialOutcome + Sync,
{
    (0..trials as usize)
        .into_par_iter()
        .with_min_len(DEFAULTS.trial_batch as usize)
        .map(|i| trial_fn(i as u64))
        .collect()
}

pub(crate) fn abort_note(aborted: u64, trials: u64) -> Option<String> {
    if aborted as f64 > 1e-3 * trials as f64 {
        Some(format!(
            "{aborted} of {trials} trials aborted on step-size underflow; \
             estimates exclude them"
        ))
    } else {
        None
    }
}

fn aggregate(
    outcomes: &[TrialOutcome],
    seed: u64,
    policy: StepPolicy,
    wall_time: Duration,
) -> Result<TrialReport> {
    let trials = outcomes.len() as u64;
    let mut hits = 0u64;
    let mut aborted = 0u64;
    let mut weight_sum = 0.0f64;
    for o in outcomes {
        match o {
            TrialOutcome::Hit { .. } => hits += 1,
            TrialOutcome::Escaped { weight } => weight_sum += weight,
            TrialOutcome::Survived => {}
            TrialOutcome::Aborted => aborted += 1,
        }
    }
    let used = trials - aborted;
    if used == 0 {
        return Err(Error::Domain(
            "every trial aborted; nothing to estimate".into(),
        ));
    }
    let correction = weight_sum / used as f64;
    let (lo, hi) = binomial_ci(hits, used, DEFAULTS.ci_level)?;
    let p_hat = hits as f64 / used as f64 + correction;
    Ok(TrialReport {
        hits,
        trials,
        aborted,
        p_hat: p_hat.min(1.0),
        ci: ((lo + correction).min(1.0), (hi + correction).min(1.0)),
        ci_level: DEFAULTS.ci_level,
        escape_correction: correction,
        seed,
        policy,
        note: abort_note(aborted, trials),
        wall_time,
    })
}

/// Monte Carlo estimate of the probability of hitting `set` from `x0`
/// within the horizon. Trials are independent walkers with counter-derived
/// seeds; the fold is sequential in trial order.
pub fn hitting_probability_mc(
    m: &ManifoldSpec,
    x0: &Point,
    set: &SetSpec,
    horizon: TimeHorizon,
    trials: u64,
    policy: StepPolicy,
    seed: u64,
) -> Result<TrialReport> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let t0 = Instant::now();
    let plan = HitPlan::new(m, x0, set, horizon, policy)?;
    let outcomes = run_parallel(trials, |trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, trial, 0));
        plan.run(&mut rng)
    });
    aggregate(&outcomes, seed, policy, t0.elapsed())
}

/// Minimum distance between segments `[p1,q1]` and `[p2,q2]`, any dimension.
fn segment_segment_dist(p1: &[f64], q1: &[f64], p2: &[f64], q2: &[f64]) -> f64 {
    let n = p1.len();
    let (mut a, mut e, mut b, mut c, mut f) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let d1 = q1[i] - p1[i];
        let d2 = q2[i] - p2[i];
        let r = p1[i] - p2[i];
        a += d1 * d1;
        e += d2 * d2;
        b += d1 * d2;
        c += d1 * r;
        f += d2 * r;
    }
    let (mut s, mut t);
    if a <= f64::EPSILON && e <= f64::EPSILON {
        s = 0.0;
        t = 0.0;
    } else if a <= f64::EPSILON {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else if e <= f64::EPSILON {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else {
        let denom = a * e - b * b;
        s = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
        t = (b * s + f) / e;
        if t < 0.0 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else if t > 1.0 {
            t = 1.0;
            s = ((b - c) / a).clamp(0.0, 1.0);
        }
    }
    let mut out = 0.0;
    for i in 0..n {
        let u = p1[i] + s * (q1[i] - p1[i]) - (p2[i] + t * (q2[i] - p2[i]));
        out += u * u;
    }
    out.sqrt()
}

/// Polyline of exact walker samples with chunked bounding spheres for fast
/// proximity pruning. Between stored nodes the walker's law is a Brownian
/// bridge, so any segment can be bisected after the fact by sampling its
/// midpoint; sampled midpoints are cached so every later query sees the same
/// path. A straight chord stands in for the bridge only below a span where
/// its transverse spread no longer matters at the detection radius.
struct SausagePath {
    dim: usize,
    nodes: Vec<f64>,
    count: usize,
    /// Time span of each stored segment.
    seg_dt: Vec<f64>,
    /// Bridge midpoints sampled during refinement, keyed by
    /// `(segment, depth, odd dyadic numerator)`.
    refined: HashMap<(u32, u32, u32), Vec<f64>>,
    /// Per chunk of up to CHUNK segments: radius of a ball around the chunk
    /// anchor node enclosing every stored node, refined ones included.
    chunk_radius: Vec<f64>,
    /// Per chunk: largest chord slack among its segments at push time.
    chunk_slack: Vec<f64>,
}

const CHUNK: usize = 16;

/// Depth cap keeps dyadic numerators inside `u32`.
const MAX_DEPTH: u32 = 31;

/// Transverse allowance for the true path around a chord spanning time `h`:
/// `3 sqrt(h)` leaves below 1e-4 per-coordinate mass outside (the bridge sup
/// deviation over span `h` has tail `exp(-x^2 / h)` at rate 2).
fn chord_slack(h: f64) -> f64 {
    3.0 * h.sqrt()
}

/// Dyadic piece of one stored segment, carried through the refinement
/// recursion together with its endpoint coordinates.
struct Piece {
    seg: usize,
    depth: u32,
    idx: u32,
    span: f64,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl SausagePath {
    fn new(dim: usize, start: &[f64]) -> Self {
        SausagePath {
            dim,
            nodes: start.to_vec(),
            count: 1,
            seg_dt: Vec::new(),
            refined: HashMap::new(),
            chunk_radius: Vec::new(),
            chunk_slack: Vec::new(),
        }
    }

    fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    fn push(&mut self, p: &[f64], dt: f64) {
        self.nodes.extend_from_slice(p);
        self.count += 1;
        self.seg_dt.push(dt);
        // chunk k spans nodes [k*CHUNK, k*CHUNK+CHUNK]; the shared endpoint
        // belongs to both neighbors
        let seg = self.count - 2;
        let k = seg / CHUNK;
        if k == self.chunk_radius.len() {
            self.chunk_radius.push(0.0);
            self.chunk_slack.push(0.0);
        }
        let anchor = self.node(k * CHUNK);
        let d = flat_dist(anchor, p);
        if d > self.chunk_radius[k] {
            self.chunk_radius[k] = d;
        }
        let s = chord_slack(dt);
        if s > self.chunk_slack[k] {
            self.chunk_slack[k] = s;
        }
    }

    fn top_piece(&self, seg: usize) -> Piece {
        Piece {
            seg,
            depth: 0,
            idx: 0,
            span: self.seg_dt[seg],
            p: self.node(seg).to_vec(),
            q: self.node(seg + 1).to_vec(),
        }
    }

    /// Bridge midpoint of `piece`, sampled once and cached. The parent piece
    /// spans time `piece.span`, so given its endpoints the midpoint is
    /// Gaussian around the chord midpoint with per-coordinate variance
    /// `span / 2` (rate-2 Brownian motion).
    fn midpoint(&mut self, piece: &Piece, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let key = (piece.seg as u32, piece.depth + 1, 2 * piece.idx + 1);
        if let Some(m) = self.refined.get(&key) {
            return m.clone();
        }
        let s = (0.5 * piece.span).sqrt();
        let mut m = vec![0.0; self.dim];
        for i in 0..self.dim {
            let z: f64 = rng.sample(StandardNormal);
            m[i] = 0.5 * (piece.p[i] + piece.q[i]) + s * z;
        }
        let k = piece.seg / CHUNK;
        let d = flat_dist(self.node(k * CHUNK), &m);
        if d > self.chunk_radius[k] {
            self.chunk_radius[k] = d;
        }
        self.refined.insert(key, m.clone());
        m
    }

    /// Distance from `p` to the stored polyline (chords only; refinement is
    /// a detection concern, the step law reads the coarse skeleton).
    fn point_gap(&self, p: &[f64]) -> f64 {
        let seg_count = self.count - 1;
        if seg_count == 0 {
            return flat_dist(self.node(0), p);
        }
        let mut best = f64::INFINITY;
        let mut k = 0;
        while k * CHUNK < seg_count {
            let anchor = self.node(k * CHUNK);
            let lower = flat_dist(anchor, p) - self.chunk_radius[k];
            if lower < best {
                let hi = ((k + 1) * CHUNK).min(seg_count);
                for seg in (k * CHUNK)..hi {
                    let d = point_segment_dist(p, self.node(seg), self.node(seg + 1));
                    if d < best {
                        best = d;
                    }
                }
            }
            k += 1;
        }
        best
    }
}

/// Whether two dyadic path pieces come within `r_hit` of each other,
/// bisecting whichever piece still has meaningful transverse spread. A piece
/// stops splitting once its span drops to `h_stop` (chord spread well under
/// the detection radius) or the depth cap is reached; a pair whose chord
/// distance exceeds the combined slack of its splittable sides cannot dip
/// below `r_hit` and is pruned.
fn pieces_dip(
    a: &mut SausagePath,
    pa: &Piece,
    b: &mut SausagePath,
    pb: &Piece,
    r_hit: f64,
    h_stop: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    let d = segment_segment_dist(&pa.p, &pa.q, &pb.p, &pb.q);
    if d <= r_hit {
        return true;
    }
    let split_a = pa.span > h_stop && pa.depth < MAX_DEPTH;
    let split_b = pb.span > h_stop && pb.depth < MAX_DEPTH;
    if !split_a && !split_b {
        return false;
    }
    let sa = if split_a { chord_slack(pa.span) } else { 0.0 };
    let sb = if split_b { chord_slack(pb.span) } else { 0.0 };
    if d > r_hit + sa + sb {
        return false;
    }
    if split_a && (pa.span >= pb.span || !split_b) {
        let m = a.midpoint(pa, rng);
        let left = Piece {
            seg: pa.seg,
            depth: pa.depth + 1,
            idx: 2 * pa.idx,
            span: 0.5 * pa.span,
            p: pa.p.clone(),
            q: m.clone(),
        };
        let right = Piece {
            seg: pa.seg,
            depth: pa.depth + 1,
            idx: 2 * pa.idx + 1,
            span: 0.5 * pa.span,
            p: m,
            q: pa.q.clone(),
        };
        pieces_dip(a, &left, b, pb, r_hit, h_stop, rng)
            || pieces_dip(a, &right, b, pb, r_hit, h_stop, rng)
    } else {
        let m = b.midpoint(pb, rng);
        let left = Piece {
            seg: pb.seg,
            depth: pb.depth + 1,
            idx: 2 * pb.idx,
            span: 0.5 * pb.span,
            p: pb.p.clone(),
            q: m.clone(),
        };
        let right = Piece {
            seg: pb.seg,
            depth: pb.depth + 1,
            idx: 2 * pb.idx + 1,
            span: 0.5 * pb.span,
            p: m,
            q: pb.q.clone(),
        };
        pieces_dip(a, pa, b, &left, r_hit, h_stop, rng)
            || pieces_dip(a, pa, b, &right, r_hit, h_stop, rng)
    }
}

/// Whether the newest segment of `probe` dips within `r_hit` of any part of
/// `target`, refining both paths near the contact scale. `skip_last` drops
/// the target's newest segment when that pair was already covered by the
/// mirrored call.
fn new_segment_hits(
    target: &mut SausagePath,
    probe: &mut SausagePath,
    r_hit: f64,
    h_stop: f64,
    skip_last: bool,
    rng: &mut ChaCha8Rng,
) -> bool {
    let seg_count = target.count - 1 - usize::from(skip_last && target.count > 1);
    let probe_piece = probe.top_piece(probe.count - 2);
    let half = 0.5 * flat_dist(&probe_piece.p, &probe_piece.q);
    let mut mid = vec![0.0; probe.dim];
    for i in 0..probe.dim {
        mid[i] = 0.5 * (probe_piece.p[i] + probe_piece.q[i]);
    }
    let probe_slack = if probe_piece.span > h_stop { chord_slack(probe_piece.span) } else { 0.0 };
    let mut k = 0;
    while k * CHUNK < seg_count {
        let anchor = target.node(k * CHUNK).to_vec();
        let lower = flat_dist(&anchor, &mid)
            - target.chunk_radius[k]
            - target.chunk_slack[k]
            - half
            - probe_slack;
        if lower <= r_hit {
            let hi = ((k + 1) * CHUNK).min(seg_count);
            for seg in (k * CHUNK)..hi {
                let tgt_piece = target.top_piece(seg);
                if pieces_dip(target, &tgt_piece, probe, &probe_piece, r_hit, h_stop, rng) {
                    return true;
                }
            }
        }
        k += 1;
    }
    false
}

/// Probability that the `eps`-sausages of two independent walkers started at
/// `x0` and `x1` intersect by time `t_total`. Flat family only. The walkers
/// step synchronously, with `dt` adapted to each walker's clearance from the
/// other's whole path and cut sixteenfold inside `4 eps`; intersection means
/// the true paths pass within `2 eps`, decided by lazy Brownian-bridge
/// bisection of any segment pair that comes near the detection radius, down
/// to spans where a chord's transverse spread is negligible against `eps`.
pub fn sausage_intersection(
    m: &ManifoldSpec,
    x0: &Point,
    x1: &Point,
    eps: f64,
    t_total: f64,
    trials: u64,
    policy: StepPolicy,
    seed: u64,
) -> Result<TrialReport> {
    if !m.is_euclidean() {
        return Err(Error::UnsupportedGeometry(
            "sausage intersection runs on the flat family".into(),
        ));
    }
    policy.validate()?;
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(Error::Domain(format!("horizon must be positive, got {t_total}")));
    }
    let d0 = distance(m, x0, x1)?;
    if d0 <= 5.0 * eps {
        return Err(Error::RejectedInput(format!(
            "start separation {d0} must exceed 5 eps = {}",
            5.0 * eps
        )));
    }
    let dim = m.dim();
    let t0 = Instant::now();
    // stop bisecting once a chord's slack sits well under the detection
    // radius: spans at eps^2/16 leave chord spread near eps/4
    let h_stop = eps * eps / 16.0;
    let outcomes = run_parallel(trials, |trial| {
        let mut rng_a = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, trial, 0));
        let mut rng_b = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, trial, 1));
        let mut rng_r = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, trial, 2));
        let mut path_a = SausagePath::new(dim, &x0.coords);
        let mut path_b = SausagePath::new(dim, &x1.coords);
        let mut na = vec![0.0; dim];
        let mut nb = vec![0.0; dim];
        let mut a = x0.coords.clone();
        let mut b = x1.coords.clone();
        let mut t = 0.0;
        loop {
            // the sausages can meet across times, so the step must resolve
            // each walker's clearance to the other's whole path, not just
            // the synchronous separation
            let gap = path_b.point_gap(&a).min(path_a.point_gap(&b));
            let mut base = policy.base_dt(gap);
            if gap <= 4.0 * eps {
                base /= 16.0;
            }
            if base < DT_FLOOR {
                return TrialOutcome::Aborted;
            }
            let rem = t_total - t;
            if rem <= 0.0 {
                return TrialOutcome::Survived;
            }
            let dt = base.min(rem);
            let s = (2.0 * dt).sqrt();
            fill_noise(&mut rng_a, &mut na);
            fill_noise(&mut rng_b, &mut nb);
            for i in 0..dim {
                a[i] += s * na[i];
                b[i] += s * nb[i];
            }
            path_a.push(&a, dt);
            path_b.push(&b, dt);
            // new segment of each walker against the other's whole path;
            // the direct new-versus-new pair is covered by the first call
            if new_segment_hits(&mut path_b, &mut path_a, 2.0 * eps, h_stop, false, &mut rng_r)
                || new_segment_hits(&mut path_a, &mut path_b, 2.0 * eps, h_stop, true, &mut rng_r)
            {
                return TrialOutcome::Hit { time: t + dt };
            }
            t += dt;
            if t >= t_total {
                return TrialOutcome::Survived;
            }
        }
    });
    aggregate(&outcomes, seed, policy, t0.elapsed())
}

/// Estimate `P[exit time of the metric ball B(x0, r) <= delta]` and compare
/// it against `exp(-r^2/(100 delta))`. Rejects `delta > r^2/(2n)`, where the
/// mean exit time scale makes the tail regime meaningless. On the curved
/// family the ball is measured in the asymptotic chart, so `x0` must sit
/// well away from the bolt.
pub fn exit_time_tail(
    m: &ManifoldSpec,
    x0: &Point,
    r: f64,
    delta: f64,
    trials: u64,
    policy: StepPolicy,
    seed: u64,
) -> Result<ExitTailReport> {
    policy.validate()?;
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("ball radius must be positive, got {r}")));
    }
    let n = m.dim() as f64;
    if !(delta > 0.0) || delta > r * r / (2.0 * n) {
        return Err(Error::RejectedInput(format!(
            "delta must lie in (0, r^2/(2n)] = (0, {}], got {delta}",
            r * r / (2.0 * n)
        )));
    }
    if x0.manifold != *m {
        return Err(Error::Domain("start point is on a different manifold".into()));
    }
    let metric_dist = |p: &Point| -> Result<f64> {
        match m {
            ManifoldSpec::Euclidean { .. } => distance(m, x0, p),
            ManifoldSpec::EguchiHansonProduct { .. } => {
                crate::geometry::ale_chart_distance(m, x0, p)
            }
        }
    };
    // fail fast if the chart cannot measure the ball at all
    metric_dist(x0)?;

    let t0 = Instant::now();
    let outcomes = run_parallel(trials, |trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, trial, 0));
            let mut bridge_rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>());
            let mut p = x0.clone();
            let mut noise = vec![0.0; m.chart_dim()];
            let mut level = r;
            let absorb = ABSORB_REL * r;
            let mut t = 0.0;
            loop {
                if level <= absorb {
                    return TrialOutcome::Hit { time: t };
                }
                let base = policy.base_dt(level);
                if base < DT_FLOOR {
                    return if delta - t < DT_FLOOR {
                        TrialOutcome::Survived
                    } else {
                        TrialOutcome::Aborted
                    };
                }
                let rem = delta - t;
                if rem <= 0.0 {
                    return TrialOutcome::Survived;
                }
                let dt = base.min(rem);
                fill_noise(&mut rng, &mut noise);
                step_in_place(m, &mut p.coords, dt, &noise);
                let d = match metric_dist(&p) {
                    Ok(d) => d,
                    Err(_) => return TrialOutcome::Aborted,
                };
                if d >= r {
                    return TrialOutcome::Hit { time: t + dt };
                }
                let new_level = r - d;
                if policy.bridge_correction {
                    let p_cross = (-(level * new_level) / dt).exp();
                    if bridge_rng.random::<f64>() < p_cross {
                        return TrialOutcome::Hit { time: t + dt };
                    }
                }
                level = new_level;
                t += dt;
                if t >= delta {
                    return TrialOutcome::Survived;
                }
            }
    });
    let report = aggregate(&outcomes, seed, policy, t0.elapsed())?;
    let tail_bound = (-r * r / (100.0 * delta)).exp();
    let within_bound = report.ci.1 <= tail_bound;
    Ok(ExitTailReport { report, tail_bound, within_bound })
}

/// Radius at which the curvature scale of the bolt matches `eps`, without
/// the unit-scale cap used by the regular-set reduction: hitting experiments
/// legitimately probe thickness scales past it.
pub fn eh_bolt_barrier(a: f64, eps: f64) -> Result<f64> {
    if !(a > 0.0) || !(eps > 0.0) {
        return Err(Error::Domain(format!("need a > 0 and eps > 0, got a={a}, eps={eps}")));
    }
    Ok(((a * a * a * a) * (eps * eps)).powf(1.0 / 6.0).max(a))
}

/// Exact probability that the radial diffusion started at `r0` reaches the
/// barrier `r_star` before escaping to infinity:
/// `u(r) = log((r^2+a^2)/(r^2-a^2))` normalized to 1 at the barrier. The
/// radial flux `r^3 (1-(a/r)^4) u'(r)` is constant, so `u` is invariant
/// under the generator and the value follows from optional stopping.
pub fn eh_bolt_oracle(a: f64, r_star: f64, r0: f64) -> Result<f64> {
    if !(a > 0.0) || r_star < a || r0 < a {
        return Err(Error::Domain(format!(
            "need 0 < a <= r_star and r0 >= a, got a={a}, r_star={r_star}, r0={r0}"
        )));
    }
    if r0 <= r_star {
        return Ok(1.0);
    }
    if r_star == a {
        // the potential diverges at the bolt; the barrier is a.s. missed
        return Ok(0.0);
    }
    let pot = |r: f64| ((r * r + a * a) / (r * r - a * a)).ln();
    Ok(pot(r0) / pot(r_star))
}

/// Monte Carlo bolt-hitting experiment: the radial coordinate is an
/// autonomous diffusion, so trials integrate the one-dimensional equation
/// `dr = (3/r + a^4/r^5) dt + sqrt(2 (1-(a/r)^4)) dW` with reflection at the
/// bolt, a bridge draw at the barrier, and the exact potential folded in at
/// the escape radius. The barrier radius comes from `eps` via
/// [`eh_bolt_barrier`]; the report carries the closed-form check value.
pub fn eh_bolt_hitting(
    m: &ManifoldSpec,
    x0: &Point,
    eps: f64,
    horizon: TimeHorizon,
    trials: u64,
    policy: StepPolicy,
    seed: u64,
) -> Result<EhBoltReport> {
    let a = m.bolt_scale().ok_or_else(|| {
        Error::UnsupportedGeometry("bolt hitting needs the curved family".into())
    })?;
    if x0.manifold != *m {
        return Err(Error::Domain("start point is on a different manifold".into()));
    }
    horizon.validate()?;
    policy.validate()?;
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let r0 = x0.radial().expect("curved start point");
    let d_bolt = crate::geometry::eh_radial_arclength(a, r0)?;
    if d_bolt < 3.0 * eps {
        return Err(Error::RejectedInput(format!(
            "start distance to the bolt {d_bolt} must be at least 3 eps = {}",
            3.0 * eps
        )));
    }
    let r_star = eh_bolt_barrier(a, eps)?;
    let oracle = eh_bolt_oracle(a, r_star, r0)?;
    let escape_radius = DEFAULTS.escape_radius_factor * r0;

    let t0 = Instant::now();
    let outcomes = run_parallel(trials, |trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(seed, trial, 0));
            let mut bridge_rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>());
            let mut r = r0;
            let mut t = 0.0;
            if r <= r_star {
                return TrialOutcome::Hit { time: 0.0 };
            }
            let absorb = ABSORB_REL * r_star;
            loop {
                if r - r_star <= absorb {
                    return TrialOutcome::Hit { time: t };
                }
                let base = policy.base_dt(r - r_star);
                if base < DT_FLOOR {
                    return TrialOutcome::Aborted;
                }
                let dt = match horizon {
                    TimeHorizon::Finite(t_end) => {
                        let rem = t_end - t;
                        if rem <= 0.0 {
                            return TrialOutcome::Survived;
                        }
                        base.min(rem)
                    }
                    TimeHorizon::Infinite => base,
                };
                let tq = a / r;
                let q = (tq * tq) * (tq * tq);
                let z: f64 = rng.sample(StandardNormal);
                let mut r_new =
                    r + eh_radial_drift(a, r) * dt + (2.0 * dt * (1.0 - q)).sqrt() * z;
                if r_new < a {
                    r_new = 2.0 * a - r_new;
                }
                if r_new <= r_star {
                    return TrialOutcome::Hit { time: t + dt };
                }
                if policy.bridge_correction
                    && bolt_bridge_hit(a, r_star, r, r_new, dt, &mut bridge_rng).is_some()
                {
                    return TrialOutcome::Hit { time: t + dt };
                }
                if r_new >= escape_radius {
                    let weight = eh_bolt_oracle(a, r_star, r_new).unwrap_or(0.0);
                    return TrialOutcome::Escaped { weight };
                }
                r = r_new;
                t += dt;
                if let TimeHorizon::Finite(t_end) = horizon {
                    if t >= t_end {
                        return TrialOutcome::Survived;
                    }
                }
            }
    });
    let report = aggregate(&outcomes, seed, policy, t0.elapsed())?;
    Ok(EhBoltReport { report, oracle, barrier_radius: r_star, start_radius: r0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat(n: usize) -> ManifoldSpec {
        ManifoldSpec::euclidean(n).unwrap()
    }

    fn origin(n: usize) -> Point {
        Point::flat(vec![0.0; n]).unwrap()
    }

    fn offset(n: usize, d: f64) -> Point {
        let mut c = vec![0.0; n];
        c[0] = d;
        Point::flat(c).unwrap()
    }

    fn ball_at(n: usize, d: f64, radius: f64) -> SetSpec {
        let mut c = vec![0.0; n];
        c[0] = d;
        SetSpec::Ball { center: c, radius }
    }

    fn report_json(r: &TrialReport) -> String {
        serde_json::to_string(r).unwrap()
    }

    #[test]
    fn policy_validation() {
        assert!(StepPolicy::standard().validate().is_ok());
        let bad_dt = StepPolicy { dt_max: 0.0, ..StepPolicy::standard() };
        assert!(bad_dt.validate().is_err());
        let bad_kappa = StepPolicy { kappa: 1.5, ..StepPolicy::standard() };
        assert!(bad_kappa.validate().is_err());
        let halved = StepPolicy::standard().halved();
        assert!(halved.validate().is_ok());
        // same gap produces exactly half the step
        assert_relative_eq!(
            halved.base_dt(0.3),
            0.5 * StepPolicy::standard().base_dt(0.3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn trial_seeds_are_collision_free() {
        let master = 0xDEAD_BEEF_u64;
        let mut seeds = Vec::with_capacity(10_000_000);
        for trial in 0..1_250_000u64 {
            for walker in 0..8u32 {
                seeds.push(derive_trial_seed(master, trial, walker));
            }
        }
        seeds.sort_unstable();
        let unique = seeds.windows(2).all(|w| w[0] != w[1]);
        assert!(unique, "counter-derived seeds collided");
        // different master seeds shift the whole family
        assert_ne!(
            derive_trial_seed(1, 42, 0),
            derive_trial_seed(2, 42, 0)
        );
    }

    #[test]
    fn flat_step_moments() {
        let m = flat(3);
        let p = origin(3);
        let dt = 0.15;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut noise = vec![0.0; 3];
        let n_samples = 400_000;
        let (mut sum, mut sum_sq, mut cross) = (0.0, 0.0, 0.0);
        for _ in 0..n_samples {
            fill_noise(&mut rng, &mut noise);
            let q = simulate_step(&m, &p, dt, &noise).unwrap();
            sum += q.coords[0];
            sum_sq += q.coords[0] * q.coords[0];
            cross += q.coords[0] * q.coords[1];
        }
        let mean = sum / n_samples as f64;
        let var = sum_sq / n_samples as f64 - mean * mean;
        assert!(mean.abs() < 4.0 * (2.0 * dt / n_samples as f64).sqrt());
        assert_relative_eq!(var, 2.0 * dt, max_relative = 0.01);
        assert!((cross / n_samples as f64).abs() < 0.01);
    }

    #[test]
    fn squared_radius_generator_identity() {
        // E[|X_dt|^2 - |x|^2] = 2 n dt for the flat walk
        let n = 7;
        let m = flat(n);
        let p = offset(n, 1.0);
        let dt = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut noise = vec![0.0; n];
        let samples = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..samples {
            fill_noise(&mut rng, &mut noise);
            let q = simulate_step(&m, &p, dt, &noise).unwrap();
            let r2: f64 = q.coords.iter().map(|x| x * x).sum();
            sum += r2 - 1.0;
        }
        let mean = sum / samples as f64;
        let expected = 2.0 * n as f64 * dt;
        // per-sample std is about sqrt(8 dt (1 + n dt))
        let se = (8.0 * dt * (1.0 + n as f64 * dt) / samples as f64).sqrt();
        assert!(
            (mean - expected).abs() < 5.0 * se,
            "generator drift {mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn eh_step_drift_and_variance() {
        let m = ManifoldSpec::eguchi_hanson_product(4, 1.0).unwrap();
        let p = Point::new(m.clone(), vec![5.0, PI / 2.0, 0.3, 0.7]).unwrap();
        let dt = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut noise = vec![0.0; 4];
        let samples = 4_000_000;
        let (mut sum_dr, mut sum_dr2, mut sum_dth) = (0.0, 0.0, 0.0);
        for _ in 0..samples {
            fill_noise(&mut rng, &mut noise);
            let q = simulate_step(&m, &p, dt, &noise).unwrap();
            let dr = q.coords[0] - 5.0;
            sum_dr += dr;
            sum_dr2 += dr * dr;
            sum_dth += q.coords[1] - PI / 2.0;
        }
        let k = samples as f64;
        let drift = sum_dr / k / dt;
        let expected_drift = eh_radial_drift(1.0, 5.0);
        let sigma2 = 2.0 * (1.0 - 1.0 / 625.0);
        let se_drift = (sigma2 / (dt * k)).sqrt();
        assert!(
            (drift - expected_drift).abs() < 4.0 * se_drift,
            "radial drift {drift} vs {expected_drift}"
        );
        let var = sum_dr2 / k - (sum_dr / k).powi(2);
        assert_relative_eq!(var, sigma2 * dt, max_relative = 0.01);
        // polar drift vanishes on the equator
        let se_th = ((2.0 * dt * 4.0 / 25.0) / k).sqrt();
        assert!((sum_dth / k).abs() < 5.0 * se_th);
    }

    #[test]
    fn step_input_validation() {
        let m = flat(3);
        let p = origin(3);
        assert!(matches!(
            simulate_step(&m, &p, 0.1, &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(simulate_step(&m, &p, -0.1, &[0.0; 3]).is_err());
        let eh = ManifoldSpec::eguchi_hanson_product(5, 0.5).unwrap();
        let pe = Point::new(eh.clone(), vec![0.5, 1.0, 0.0, 0.0, 2.0]).unwrap();
        // at the bolt the radial noise coefficient vanishes and reflection
        // keeps the walker in the chart
        let q = simulate_step(&eh, &pe, 0.01, &[-3.0, 0.2, 0.1, 0.4, 1.0]).unwrap();
        assert!(q.coords[0] >= 0.5);
        assert!(simulate_step(&eh, &p, 0.1, &[0.0; 5]).is_err());
    }

    #[test]
    fn start_inside_hits_immediately() {
        let m = flat(3);
        let set = ball_at(3, 0.0, 1.0);
        let report = hitting_probability_mc(
            &m,
            &origin(3),
            &set,
            TimeHorizon::Infinite,
            100,
            StepPolicy::standard(),
            1,
        )
        .unwrap();
        assert_eq!(report.hits, 100);
        assert_eq!(report.p_hat, 1.0);
    }

    #[test]
    fn enclosing_sphere_is_always_crossed() {
        let m = flat(4);
        let set = SetSpec::SphereShell { center: vec![0.0; 4], radius: 1.0 };
        let report = hitting_probability_mc(
            &m,
            &origin(4),
            &set,
            TimeHorizon::Finite(200.0),
            2000,
            StepPolicy::standard(),
            2,
        )
        .unwrap();
        assert_eq!(report.hits, 2000, "walker failed to cross an enclosing sphere");
    }

    #[test]
    fn vanishing_horizon_kills_hitting() {
        let m = flat(3);
        let set = ball_at(3, 2.0, 0.5);
        let report = hitting_probability_mc(
            &m,
            &origin(3),
            &set,
            TimeHorizon::Finite(1e-9),
            2000,
            StepPolicy::standard(),
            3,
        )
        .unwrap();
        assert_eq!(report.hits, 0);
        assert_eq!(report.p_hat, 0.0);
    }

    #[test]
    fn hitting_matches_newtonian_ratio() {
        // infinite-horizon hitting of B(d, R) from the origin is (R/d)^(n-2)
        let m = flat(3);
        let set = ball_at(3, 2.0, 0.5);
        let report = hitting_probability_mc(
            &m,
            &origin(3),
            &set,
            TimeHorizon::Infinite,
            30_000,
            StepPolicy::standard(),
            4,
        )
        .unwrap();
        let exact = 0.25;
        assert!(
            (report.p_hat - exact).abs() < 0.01,
            "p_hat {} vs exact {exact}",
            report.p_hat
        );
        assert!(report.ci.0 <= report.p_hat && report.p_hat <= report.ci.1);
        // escaped mass carries weight (R/d)^(n-2) ~ (0.5/125)^1, folded over
        // roughly three quarters of the trials
        assert!(report.escape_correction > 0.0 && report.escape_correction < 0.01);
    }

    #[test]
    fn bridge_off_never_beats_bridge_on() {
        let m = flat(3);
        let set = ball_at(3, 2.0, 0.5);
        let on = StepPolicy::standard();
        let off = StepPolicy { bridge_correction: false, ..on };
        let report_on = hitting_probability_mc(
            &m, &origin(3), &set, TimeHorizon::Infinite, 5000, on, 5,
        )
        .unwrap();
        let report_off = hitting_probability_mc(
            &m, &origin(3), &set, TimeHorizon::Infinite, 5000, off, 5,
        )
        .unwrap();
        // same seeds, same path stream: the correction can only add hits
        assert!(report_on.hits >= report_off.hits);
        assert!(report_on.p_hat >= report_off.p_hat - 1e-12);
        assert!(report_on.hits > report_off.hits, "bridge never fired in 5000 trials");
    }

    #[test]
    fn reports_are_seed_deterministic() {
        let m = flat(5);
        let set = ball_at(5, 3.0, 1.0);
        let run = || {
            hitting_probability_mc(
                &m,
                &origin(5),
                &set,
                TimeHorizon::Infinite,
                4000,
                StepPolicy::standard(),
                77,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(report_json(&a), report_json(&b));
        let c = hitting_probability_mc(
            &m,
            &origin(5),
            &set,
            TimeHorizon::Infinite,
            4000,
            StepPolicy::standard(),
            78,
        )
        .unwrap();
        // hit counts alone could collide; the full payload cannot
        assert_ne!(report_json(&a), report_json(&c));
    }

    #[test]
    fn reports_do_not_depend_on_thread_count() {
        let m = flat(3);
        let set = ball_at(3, 2.0, 0.5);
        let run = || {
            report_json(
                &hitting_probability_mc(
                    &m,
                    &origin(3),
                    &set,
                    TimeHorizon::Infinite,
                    3000,
                    StepPolicy::standard(),
                    91,
                )
                .unwrap(),
            )
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let r1 = pool1.install(run);
        let r3 = pool3.install(run);
        assert_eq!(r1, r3);
    }

    #[test]
    fn wall_time_is_not_serialized() {
        let m = flat(3);
        let set = ball_at(3, 2.0, 0.5);
        let report = hitting_probability_mc(
            &m,
            &origin(3),
            &set,
            TimeHorizon::Finite(0.5),
            100,
            StepPolicy::standard(),
            6,
        )
        .unwrap();
        let js = report_json(&report);
        assert!(!js.contains("wall_time"));
        let back: TrialReport = serde_json::from_str(&js).unwrap();
        assert_eq!(report_json(&back), js);
        assert_eq!(back.wall_time, Duration::default());
    }

    #[test]
    fn ci_width_shrinks_like_root_trials() {
        let m = flat(3);
        let set = ball_at(3, 2.0, 0.5);
        let width = |trials: u64| {
            let r = hitting_probability_mc(
                &m,
                &origin(3),
                &set,
                TimeHorizon::Infinite,
                trials,
                StepPolicy::standard(),
                8,
            )
            .unwrap();
            r.ci.1 - r.ci.0
        };
        let ratio = width(40_000) / width(10_000);
        assert!(
            (0.4..0.65).contains(&ratio),
            "CI width ratio {ratio} should be near 0.5"
        );
    }

    #[test]
    fn all_aborting_runs_error_out() {
        let m = flat(3);
        let set = ball_at(3, 2.0, 0.5);
        let policy = StepPolicy { dt_max: 5e-15, ..StepPolicy::standard() };
        let err = hitting_probability_mc(
            &m,
            &origin(3),
            &set,
            TimeHorizon::Infinite,
            50,
            policy,
            9,
        );
        assert!(err.is_err());
        assert!(abort_note(1, 10_000).is_none());
        assert!(abort_note(11, 10_000).is_some());
    }

    #[test]
    fn generic_targets_need_finite_horizons() {
        let m = flat(3);
        let annulus = SetSpec::Annulus { center: vec![3.0, 0.0, 0.0], r_in: 0.5, r_out: 1.0 };
        let err = hitting_probability_mc(
            &m,
            &origin(3),
            &annulus,
            TimeHorizon::Infinite,
            10,
            StepPolicy::standard(),
            10,
        );
        assert!(matches!(err, Err(Error::UnsupportedGeometry(_))));
        let ok = hitting_probability_mc(
            &m,
            &origin(3),
            &annulus,
            TimeHorizon::Finite(5.0),
            500,
            StepPolicy::standard(),
            10,
        )
        .unwrap();
        assert!(ok.hits > 0, "annulus at distance 2 should be reachable by t=5");
    }

    #[test]
    fn union_target_beats_single_member() {
        let m = flat(3);
        let single = ball_at(3, 2.0, 0.4);
        let mut c2 = vec![0.0; 3];
        c2[1] = 2.0;
        let union = SetSpec::FiniteUnion(vec![
            ball_at(3, 2.0, 0.4),
            SetSpec::Ball { center: c2, radius: 0.4 },
        ]);
        let p_single = hitting_probability_mc(
            &m, &origin(3), &single, TimeHorizon::Infinite, 8000,
            StepPolicy::standard(), 11,
        )
        .unwrap()
        .p_hat;
        let p_union = hitting_probability_mc(
            &m, &origin(3), &union, TimeHorizon::Infinite, 8000,
            StepPolicy::standard(), 11,
        )
        .unwrap()
        .p_hat;
        assert!(p_union > p_single * 1.5, "union {p_union} vs single {p_single}");
        assert!(p_union < 2.0 * p_single, "union cannot exceed the sum");
    }

    #[test]
    fn sausage_preconditions() {
        let m = flat(5);
        let x0 = origin(5);
        let x1 = offset(5, 0.09);
        // separation must exceed 5 eps
        assert!(matches!(
            sausage_intersection(&m, &x0, &x1, 0.02, 5.0, 10, StepPolicy::standard(), 1),
            Err(Error::RejectedInput(_))
        ));
        let eh = ManifoldSpec::eguchi_hanson_product(5, 1.0).unwrap();
        let p = Point::new(eh.clone(), vec![2.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let q = Point::new(eh.clone(), vec![3.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            sausage_intersection(&eh, &p, &q, 0.01, 5.0, 10, StepPolicy::standard(), 1),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn sausage_intersection_basic_behavior() {
        let m = flat(5);
        let x0 = origin(5);
        let near = offset(5, 0.12);
        let far = offset(5, 0.40);
        let p_near = sausage_intersection(
            &m, &x0, &near, 0.02, 20.0, 2000, StepPolicy::standard(), 12,
        )
        .unwrap();
        let p_far = sausage_intersection(
            &m, &x0, &far, 0.02, 20.0, 2000, StepPolicy::standard(), 12,
        )
        .unwrap();
        assert!(p_near.p_hat > 0.05, "nearby sausages should meet sometimes");
        assert!(p_near.p_hat < 1.0);
        assert!(
            p_near.p_hat > 2.0 * p_far.p_hat,
            "contact probability must fall with separation: {} vs {}",
            p_near.p_hat,
            p_far.p_hat
        );
        // determinism across calls
        let again = sausage_intersection(
            &m, &x0, &near, 0.02, 20.0, 2000, StepPolicy::standard(), 12,
        )
        .unwrap();
        assert_eq!(report_json(&p_near), report_json(&again));
    }

    #[test]
    fn segment_distance_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let mut pts = [[0.0; 4]; 4];
            for p in pts.iter_mut() {
                for v in p.iter_mut() {
                    *v = rng.random::<f64>() * 4.0 - 2.0;
                }
            }
            let exact = segment_segment_dist(&pts[0], &pts[1], &pts[2], &pts[3]);
            let mut brute = f64::INFINITY;
            let k = 200;
            for i in 0..=k {
                let s = i as f64 / k as f64;
                let a: Vec<f64> =
                    (0..4).map(|j| pts[0][j] + s * (pts[1][j] - pts[0][j])).collect();
                for l in 0..=k {
                    let t = l as f64 / k as f64;
                    let mut d2 = 0.0;
                    for j in 0..4 {
                        let b = pts[2][j] + t * (pts[3][j] - pts[2][j]);
                        d2 += (a[j] - b) * (a[j] - b);
                    }
                    brute = brute.min(d2.sqrt());
                }
            }
            assert!(
                exact <= brute + 1e-9 && brute <= exact + 0.02,
                "segment distance {exact} vs sampled {brute}"
            );
        }
    }

    #[test]
    fn exit_tail_rejects_large_delta() {
        let m = flat(3);
        let err = exit_time_tail(&m, &origin(3), 1.0, 0.2, 10, StepPolicy::standard(), 1);
        assert!(matches!(err, Err(Error::RejectedInput(_))));
    }

    #[test]
    fn exit_tail_decays_superpolynomially() {
        let m = flat(3);
        let x0 = origin(3);
        let mut p_hats = Vec::new();
        for (i, delta) in [0.16, 0.08, 0.04].into_iter().enumerate() {
            let out = exit_time_tail(
                &m, &x0, 1.0, delta, 20_000, StepPolicy::standard(), 40 + i as u64,
            )
            .unwrap();
            assert!(out.within_bound, "tail estimate exceeded the bound at delta={delta}");
            p_hats.push(out.report.p_hat);
        }
        assert!(p_hats[0] > p_hats[1] && p_hats[1] > p_hats[2]);
        // halving delta must beat any fixed polynomial rate; linear would
        // give ratio 1/2, the Gaussian tail gives much less
        assert!(p_hats[1] < 0.5 * p_hats[0]);
        assert!(p_hats[2] < 0.5 * p_hats[1]);
    }

    #[test]
    fn eh_bolt_oracle_is_harmonic() {
        let (a, r_star) = (1.0, 1.2);
        let u = |r: f64| eh_bolt_oracle(a, r_star, r).unwrap();
        assert_relative_eq!(u(r_star), 1.0, max_relative = 1e-15);
        assert!(u(1e6) < 1e-11);
        assert!(u(2.0) > u(3.0) && u(3.0) > u(8.0));
        // constant radial flux r^3 (1 - (a/r)^4) u'(r)
        let flux = |r: f64| {
            let h = 1e-4 * r;
            let du = (u(r + h) - u(r - h)) / (2.0 * h);
            let q = (a / r).powi(4);
            r.powi(3) * (1.0 - q) * du
        };
        let f0 = flux(1.5);
        for r in [2.0, 4.0, 8.0] {
            assert_relative_eq!(flux(r), f0, max_relative = 1e-6);
        }
        // barrier at the bolt itself is a.s. missed
        assert_eq!(eh_bolt_oracle(1.0, 1.0, 3.0).unwrap(), 0.0);
        assert_eq!(eh_bolt_oracle(1.0, 1.5, 1.2).unwrap(), 1.0);
    }

    #[test]
    fn eh_bolt_barrier_examples() {
        assert_relative_eq!(
            eh_bolt_barrier(1.0, 1.2).unwrap(),
            1.44f64.powf(1.0 / 6.0),
            max_relative = 1e-12
        );
        // small eps pins the barrier to the bolt
        assert_eq!(eh_bolt_barrier(1.0, 0.5).unwrap(), 1.0);
        assert!(eh_bolt_barrier(0.0, 1.0).is_err());
    }

    #[test]
    fn eh_bolt_mc_matches_oracle() {
        let m = ManifoldSpec::eguchi_hanson_product(4, 1.0).unwrap();
        let x0 = Point::new(m.clone(), vec![5.0, PI / 2.0, 0.0, 0.0]).unwrap();
        let out =
            eh_bolt_hitting(&m, &x0, 1.2, TimeHorizon::Infinite, 12_000, StepPolicy::bolt(), 51)
                .unwrap();
        assert!(
            (out.report.p_hat - out.oracle).abs() < 0.006,
            "bolt hitting {} vs oracle {}",
            out.report.p_hat,
            out.oracle
        );
        assert!(out.oracle > 0.02 && out.oracle < 0.05);
        // precondition: start at least 3 eps from the bolt
        let close = Point::new(m.clone(), vec![1.3, PI / 2.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            eh_bolt_hitting(&m, &close, 1.2, TimeHorizon::Infinite, 10, StepPolicy::bolt(), 1),
            Err(Error::RejectedInput(_))
        ));
    }

    #[test]
    fn radial_and_full_chart_walkers_agree() {
        // the radial coordinate of the full-chart walker obeys the same
        // autonomous equation, so both estimates target one probability
        let m = ManifoldSpec::eguchi_hanson_product(4, 1.0).unwrap();
        let x0 = Point::new(m.clone(), vec![5.0, PI / 2.0, 1.0, 2.0]).unwrap();
        let radial =
            eh_bolt_hitting(&m, &x0, 1.2, TimeHorizon::Infinite, 15_000, StepPolicy::standard(), 60)
                .unwrap();
        let set = SetSpec::BoltSublevel { r_star: radial.barrier_radius };
        let full = hitting_probability_mc(
            &m,
            &x0,
            &set,
            TimeHorizon::Infinite,
            15_000,
            StepPolicy::standard(),
            61,
        )
        .unwrap();
        let (alo, ahi) = radial.report.ci;
        let (blo, bhi) = full.ci;
        assert!(
            alo.max(blo) <= ahi.min(bhi),
            "radial {:?} and full-chart {:?} intervals are disjoint",
            radial.report.ci,
            full.ci
        );
    }

    #[test]
    fn occupancy_time_matches_heat_kernel_integral() {
        // E[time in B before T] = int_0^T int_B p_t(x0, y) dy dt on the flat
        // family; the ball integral reduces to spherical caps
        let n = 5;
        let (d, radius, t_end) = (1.2, 1.0, 1.2);
        let dt = 0.002;
        let trials = 40_000u64;

        let cap_fraction = |s: f64| -> f64 {
            // fraction of the sphere |y| = s inside B(center, radius)
            let c = ((d * d + s * s - radius * radius) / (2.0 * d * s)).clamp(-1.0, 1.0);
            (2.0 - 3.0 * c + c * c * c) / 4.0
        };
        let shell_area = |s: f64| 8.0 * PI * PI / 3.0 * s.powi(4);
        let prob_in_ball = |t: f64| -> f64 {
            crate::quad::integrate(
                |s| {
                    shell_area(s) * cap_fraction(s)
                        * crate::kernels::heat_kernel_flat(n, t, s).unwrap()
                },
                (d - radius).max(1e-12),
                d + radius,
                1e-10,
            )
        };
        let truth = crate::quad::integrate(prob_in_ball, 1e-9, t_end, 1e-8);

        let steps = (t_end / dt).round() as usize;
        let occupancies: Vec<f64> = (0..trials as usize)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_trial_seed(505, trial as u64, 0));
                let mut x = vec![0.0; n];
                let mut noise = vec![0.0; n];
                let mut occ = 0.0;
                for _ in 0..steps {
                    fill_noise(&mut rng, &mut noise);
                    let s = (2.0 * dt).sqrt();
                    for (xi, z) in x.iter_mut().zip(&noise) {
                        *xi += s * z;
                    }
                    let mut dist2 = (x[0] - d) * (x[0] - d);
                    for xi in &x[1..] {
                        dist2 += xi * xi;
                    }
                    if dist2 <= radius * radius {
                        occ += dt;
                    }
                }
                occ
            })
            .collect();
        let mean: f64 = occupancies.iter().sum::<f64>() / trials as f64;
        assert!(
            (mean - truth).abs() < 0.05 * truth,
            "occupancy {mean} vs integral {truth}"
        );
    }
}



