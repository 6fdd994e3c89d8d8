//! Capacity of compact sets through discrete equilibrium measures.
//!
//! A set is discretized into a [`PatchMeasure`]: support points with patch
//! radii, each patch standing for a small piece of the set. The kernel
//! matrix regularizes the singular diagonal by evaluating the kernel at
//! `rho_reg * patch_radius`, and the equilibrium weights minimize the
//! quadratic energy `w' K w` over the probability simplex with a
//! Frank-Wolfe iteration using away steps. Capacity is the reciprocal of
//! the minimal energy.
//!
//! The ratio kernel is not symmetric pointwise; the energy only sees its
//! symmetric part, which is what the matrix stores.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::geometry::{
    bolt_sublevel_for_epsilon, distance, eh_radial_arclength, eh_radial_from_arclength,
    unit_ball_volume, ManifoldSpec, Point, SetSpec,
};
use crate::kernels::{newtonian_at, KernelChoice, KernelValue};
use crate::quad;
use crate::{Error, Result};

/// Discrete measure with patch semantics: each support point carries the
/// mass of a small patch of the underlying set, and the patch radius feeds
/// the diagonal regularization and self-energy formulas.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatchMeasure {
    pub support: Vec<Point>,
    pub weights: Vec<f64>,
    pub patch_radii: Vec<f64>,
    /// Dimension of the patches themselves (a curve has 1-dimensional
    /// patches regardless of the ambient dimension).
    pub patch_dim: usize,
}

impl PatchMeasure {
    pub fn new(
        support: Vec<Point>,
        weights: Vec<f64>,
        patch_radii: Vec<f64>,
        patch_dim: usize,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Domain("measure needs at least one support point".into()));
        }
        if support.len() != weights.len() || support.len() != patch_radii.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: weights.len().min(patch_radii.len()),
            });
        }
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Domain("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights must sum to 1, got {total}")));
        }
        if patch_radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Domain("patch radii must be positive".into()));
        }
        if patch_dim == 0 {
            return Err(Error::Domain("patch dimension must be positive".into()));
        }
        let m = PatchMeasure { support, weights, patch_radii, patch_dim };
        m.check_patch_separation()?;
        Ok(m)
    }

    /// Uniform weights, patch radii set to half the nearest-neighbor
    /// distance, patch dimension defaulting to the ambient dimension.
    pub fn uniform(support: Vec<Point>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Domain("measure needs at least one support point".into()));
        }
        let k = support.len();
        let dim = support[0].manifold.dim();
        let radii = half_nearest_neighbor(&support)?;
        PatchMeasure::new(support, vec![1.0 / k as f64; k], radii, dim)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    fn check_patch_separation(&self) -> Result<()> {
        if self.support.len() == 1 {
            return Ok(());
        }
        let m = self.support[0].manifold;
        for i in 0..self.support.len() {
            let mut nn = f64::INFINITY;
            for j in 0..self.support.len() {
                if i != j {
                    nn = nn.min(distance(&m, &self.support[i], &self.support[j])?);
                }
            }
            if self.patch_radii[i] > 0.5 * nn * (1.0 + 1e-9) {
                return Err(Error::Domain(format!(
                    "patch radius {} at point {i} exceeds half the nearest-neighbor distance {}",
                    self.patch_radii[i],
                    0.5 * nn
                )));
            }
        }
        Ok(())
    }
}

fn half_nearest_neighbor(support: &[Point]) -> Result<Vec<f64>> {
    if support.len() == 1 {
        return Ok(vec![1.0]);
    }
    let m = support[0].manifold;
    let mut radii = Vec::with_capacity(support.len());
    for i in 0..support.len() {
        let mut nn = f64::INFINITY;
        for j in 0..support.len() {
            if i != j {
                nn = nn.min(distance(&m, &support[i], &support[j])?);
            }
        }
        if !(nn > 0.0) {
            return Err(Error::RejectedInput(format!("coincident support points at index {i}")));
        }
        radii.push(0.5 * nn);
    }
    Ok(radii)
}

/// Result of an equilibrium-measure solve.
#[derive(Clone, Debug, Serialize)]
pub struct CapacityResult {
    pub capacity: f64,
    pub energy: f64,
    pub weights: PatchMeasure,
    pub iterations: usize,
    pub duality_gap: f64,
    pub converged: bool,
}

/// Symmetrized kernel matrix with patch-regularized diagonal, using the
/// shared calibration constant.
pub fn kernel_matrix(measure: &PatchMeasure, kernel: &KernelChoice) -> Result<DMatrix<f64>> {
    kernel_matrix_with_regularization(measure, kernel, crate::defaults::DEFAULTS.rho_reg)
}

/// Same with an explicit regularization constant (calibration entry point).
pub fn kernel_matrix_with_regularization(
    measure: &PatchMeasure,
    kernel: &KernelChoice,
    rho_reg: f64,
) -> Result<DMatrix<f64>> {
    if !(rho_reg > 0.0) {
        return Err(Error::Domain("regularization constant must be positive".into()));
    }
    let pts = &measure.support;
    let k = pts.len();
    let m = pts[0].manifold;
    let n = m.dim();
    let base_dists: Option<Vec<f64>> = match kernel {
        KernelChoice::Martin { base } => {
            let mut d0 = Vec::with_capacity(k);
            for p in pts {
                d0.push(distance(&m, base, p)?);
            }
            Some(d0)
        }
        KernelChoice::Newtonian => None,
    };
    let e = kernel.exponent(n)?;
    let eval = |d: f64, i: usize, j: usize| -> Result<f64> {
        let v = match &base_dists {
            // symmetric part of the ratio kernel
            Some(d0) => {
                let half = 0.5 * (d0[i].powi(e) + d0[j].powi(e));
                match newtonian_at(d, n)? {
                    KernelValue::Finite(nd) => KernelValue::Finite(half * nd),
                    KernelValue::Infinite => KernelValue::Infinite,
                }
            }
            None => newtonian_at(d, n)?,
        };
        v.finite().ok_or_else(|| {
            Error::RejectedInput(format!("coincident support points {i} and {j}"))
        })
    };
    let rows: Result<Vec<Vec<f64>>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; k];
            for j in 0..k {
                let d = if i == j {
                    rho_reg * measure.patch_radii[i]
                } else {
                    distance(&m, &pts[i], &pts[j])?
                };
                row[j] = eval(d, i, j)?;
            }
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let mut out = DMatrix::zeros(k, k);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

/// Minimize `w' K w` over the probability simplex. Equilibrium weights,
/// energy, and a first-order certificate: on return
/// `min_i (Kw)_i >= energy - duality_gap`.
pub fn equilibrium_measure(
    measure: &PatchMeasure,
    kernel: &KernelChoice,
    tol_rel: f64,
    max_iters: usize,
) -> Result<CapacityResult> {
    let k = kernel_matrix(measure, kernel)?;
    equilibrium_from_matrix(&k, measure, tol_rel, max_iters)
}

pub fn equilibrium_from_matrix(
    k: &DMatrix<f64>,
    measure: &PatchMeasure,
    tol_rel: f64,
    max_iters: usize,
) -> Result<CapacityResult> {
    if !(tol_rel > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let m = k.nrows();
    if m != measure.len() {
        return Err(Error::DimensionMismatch { expected: measure.len(), got: m });
    }
    let matvec = |w: &[f64]| -> Vec<f64> {
        (0..m)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += k[(i, j)] * w[j];
                }
                acc
            })
            .collect()
    };
    let mut w = vec![1.0 / m as f64; m];
    let mut kw = matvec(&w);
    let mut energy: f64 = w.iter().zip(&kw).map(|(a, b)| a * b).sum();
    let mut iters = 0usize;
    while iters < max_iters {
        // steepest simplex vertex and heaviest active vertex
        let mut s = 0;
        let mut v = 0;
        let mut min_kw = f64::INFINITY;
        let mut max_kw_active = f64::NEG_INFINITY;
        for i in 0..m {
            if kw[i] < min_kw {
                min_kw = kw[i];
                s = i;
            }
            if w[i] > 0.0 && kw[i] > max_kw_active {
                max_kw_active = kw[i];
                v = i;
            }
        }
        let gap = energy - min_kw;
        if gap <= tol_rel * energy {
            // confirm the certificate from scratch before stopping
            let total: f64 = w.iter().sum();
            for wi in w.iter_mut() {
                *wi = (*wi / total).max(0.0);
            }
            kw = matvec(&w);
            energy = w.iter().zip(&kw).map(|(a, b)| a * b).sum();
            let fresh_gap = energy - kw.iter().cloned().fold(f64::INFINITY, f64::min);
            if fresh_gap <= tol_rel * energy {
                break;
            }
            continue;
        }
        let toward_gap = gap;
        let away_gap = max_kw_active - energy;
        if toward_gap >= away_gap {
            // step toward vertex s
            let d_kw = kw[s] - energy;
            let d_kd = k[(s, s)] - 2.0 * kw[s] + energy;
            let alpha = if d_kd > 0.0 {
                (-d_kw / d_kd).clamp(0.0, 1.0)
            } else {
                1.0
            };
            for i in 0..m {
                w[i] *= 1.0 - alpha;
                kw[i] += alpha * (k[(i, s)] - kw[i]);
            }
            w[s] += alpha;
            energy += 2.0 * alpha * d_kw + alpha * alpha * d_kd;
        } else {
            // shift mass away from vertex v
            let d_kw = energy - kw[v];
            let d_kd = energy - 2.0 * kw[v] + k[(v, v)];
            let alpha_max = w[v] / (1.0 - w[v]).max(1e-300);
            let alpha = if d_kd > 0.0 {
                (-d_kw / d_kd).clamp(0.0, alpha_max)
            } else {
                alpha_max
            };
            for i in 0..m {
                w[i] *= 1.0 + alpha;
                kw[i] += alpha * (kw[i] - k[(i, v)]);
            }
            w[v] -= alpha;
            if w[v] < 1e-17 {
                w[v] = 0.0;
            }
            energy += 2.0 * alpha * d_kw + alpha * alpha * d_kd;
        }
        iters += 1;
        if iters % 256 == 0 {
            // flush accumulated float drift
            let total: f64 = w.iter().sum();
            for wi in w.iter_mut() {
                *wi = (*wi / total).max(0.0);
            }
            kw = matvec(&w);
            energy = w.iter().zip(&kw).map(|(a, b)| a * b).sum();
        }
    }
    // exact certificate from the final iterate
    let total: f64 = w.iter().sum();
    for wi in w.iter_mut() {
        *wi /= total;
    }
    kw = matvec(&w);
    energy = w.iter().zip(&kw).map(|(a, b)| a * b).sum();
    let gap = energy - kw.iter().cloned().fold(f64::INFINITY, f64::min);
    let result = CapacityResult {
        capacity: 1.0 / energy,
        energy,
        weights: PatchMeasure {
            support: measure.support.clone(),
            weights: w,
            patch_radii: measure.patch_radii.clone(),
            patch_dim: measure.patch_dim,
        },
        iterations: iters,
        duality_gap: gap.max(0.0),
        converged: gap <= tol_rel * energy,
    };
    if !result.converged {
        return Err(Error::NotConverged {
            gap,
            iters,
            result: Box::new(result),
        });
    }
    Ok(result)
}

/// One refinement level of [`capacity_of_set`].
#[derive(Clone, Debug, Serialize)]
pub struct LevelCapacity {
    pub points: usize,
    pub capacity: f64,
    pub duality_gap: f64,
}

/// Capacity across a discretization ladder with an extrapolated value.
#[derive(Clone, Debug, Serialize)]
pub struct RefinedCapacity {
    pub levels: Vec<LevelCapacity>,
    pub extrapolated: f64,
    pub result: CapacityResult,
}

/// Solve the equilibrium problem on a ladder of quasi-uniform
/// discretizations and extrapolate the capacity across levels.
pub fn capacity_of_set(
    m: &ManifoldSpec,
    set: &SetSpec,
    x0: &Point,
    kernel: &KernelChoice,
    levels: &[usize],
    tol_rel: f64,
    max_iters: usize,
) -> Result<RefinedCapacity> {
    if levels.is_empty() {
        return Err(Error::Domain("need at least one refinement level".into()));
    }
    if let KernelChoice::Martin { base } = kernel {
        let d = distance(m, base, x0)?;
        if d > 1e-9 {
            return Err(Error::Config(
                "ratio-kernel base point disagrees with the declared start point".into(),
            ));
        }
    }
    set.validate(m)?;
    let mut level_rows = Vec::with_capacity(levels.len());
    let mut last: Option<CapacityResult> = None;
    for &count in levels {
        let measure = discretize_set(m, set, count)?;
        let res = equilibrium_measure(&measure, kernel, tol_rel, max_iters)?;
        level_rows.push(LevelCapacity {
            points: measure.len(),
            capacity: res.capacity,
            duality_gap: res.duality_gap,
        });
        last = Some(res);
    }
    let caps: Vec<f64> = level_rows.iter().map(|l| l.capacity).collect();
    Ok(RefinedCapacity {
        extrapolated: aitken(&caps),
        levels: level_rows,
        result: last.unwrap(),
    })
}

fn aitken(c: &[f64]) -> f64 {
    let k = c.len();
    if k < 3 {
        return *c.last().unwrap();
    }
    let (a, b, l) = (c[k - 3], c[k - 2], c[k - 1]);
    let denom = l - 2.0 * b + a;
    if denom.abs() < 1e-14 * l.abs().max(1.0) {
        return l;
    }
    let extrap = l - (l - b) * (l - b) / denom;
    // reject wild extrapolations from non-monotone level noise
    if (extrap - l).abs() > (l - b).abs() * 4.0 + 1e-12 {
        l
    } else {
        extrap
    }
}

/// Interval for the ratio-kernel capacity from the distance-weighted
/// comparison with the plain kernel:
/// `[capN/dmax^(n-2), capN/dmin^(n-2)]`. A zero `dmin` degenerates the
/// upper endpoint to the infinity sentinel.
pub fn martin_newtonian_sandwich(
    cap_n: f64,
    dmin: f64,
    dmax: f64,
    n: usize,
) -> Result<(f64, KernelValue)> {
    if n < 3 {
        return Err(Error::Domain(format!("need n >= 3, got {n}")));
    }
    if !(cap_n >= 0.0) || dmin < 0.0 || dmax < dmin {
        return Err(Error::Domain("need cap_n >= 0 and 0 <= dmin <= dmax".into()));
    }
    let e = (n - 2) as i32;
    let lo = if dmax == 0.0 { f64::INFINITY } else { cap_n / dmax.powi(e) };
    let hi = if dmin == 0.0 {
        KernelValue::Infinite
    } else {
        KernelValue::Finite(cap_n / dmin.powi(e))
    };
    Ok((lo, hi))
}

/// Plain-kernel capacity of a round ball or sphere of radius `r`: exactly
/// `r^(n-2)`. The uniform measure on the boundary sphere is the equilibrium
/// measure by symmetry, and its average kernel value is 1 in every
/// dimension: substituting `|u-v| = 2 sin(theta/2)` turns the spherical
/// average of `|u-v|^(2-n)` into a ratio of two equal Wallis integrals.
pub fn newtonian_ball_capacity(r: f64, n: usize) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    if n < 3 {
        return Err(Error::Domain(format!("need n >= 3, got {n}")));
    }
    Ok(r.powi(n as i32 - 2))
}

/// Single-cover content bound for a ball: `(2 eps)^(n-2)`.
pub fn ball_capacity_upper(eps: f64, n: usize) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    if n < 3 {
        return Err(Error::Domain(format!("need n >= 3, got {n}")));
    }
    Ok((2.0 * eps).powi((n - 2) as i32))
}

/// Energy and content lower bound of a mass distribution.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyBound {
    /// Pairwise `d^(-alpha)` energy restricted to pairs within `eps`,
    /// diagonal patches included through their exact self-energy.
    pub pair_energy: f64,
    /// `mu(A)^2 / pair_energy`, a lower bound for the `alpha`-content at
    /// scale `eps`.
    pub lower_bound: f64,
}

/// Content lower bound from a mass distribution: total mass squared over
/// the eps-restricted `d^(-alpha)` pair energy. Patch self-interactions use
/// the closed-form self-energy of the uniform patch.
pub fn hausdorff_energy_lower_bound(
    mu: &PatchMeasure,
    alpha: f64,
    eps: f64,
) -> Result<EnergyBound> {
    if !(alpha > 0.0) {
        return Err(Error::Domain("alpha must be positive".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let m = mu.support[0].manifold;
    let k = mu.len();
    let mut energy = 0.0;
    for i in 0..k {
        energy += mu.weights[i] * mu.weights[i] * patch_self_energy(mu.patch_dim, alpha, mu.patch_radii[i])?;
        for j in (i + 1)..k {
            let d = distance(&m, &mu.support[i], &mu.support[j])?;
            if d <= eps {
                energy += 2.0 * mu.weights[i] * mu.weights[j] * d.powf(-alpha);
            }
        }
    }
    let mass: f64 = mu.weights.iter().sum();
    Ok(EnergyBound { pair_energy: energy, lower_bound: mass * mass / energy })
}

/// Mean of `|X-Y|^(-alpha)` for two independent uniform points of a
/// `patch_dim`-dimensional ball of the given radius. Closed form on an
/// interval; elsewhere a one-dimensional integral against the overlap
/// profile of two balls.
pub fn patch_self_energy(patch_dim: usize, alpha: f64, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Domain("patch radius must be positive".into()));
    }
    if !(alpha > 0.0) || alpha >= patch_dim as f64 {
        return Err(Error::Domain(format!(
            "self-energy needs 0 < alpha < patch dimension, got alpha={alpha}, dim={patch_dim}"
        )));
    }
    let c = if patch_dim == 1 {
        // interval of length 2: 2 L^(-alpha) / ((1-alpha)(2-alpha))
        2.0 * 2.0f64.powf(-alpha) / ((1.0 - alpha) * (2.0 - alpha))
    } else {
        let md = patch_dim as f64;
        2.0 * md
            * quad::integrate(
                |s| {
                    if s <= 0.0 {
                        return 0.0;
                    }
                    s.powf(md - 1.0 - alpha) * unit_cap_fraction(patch_dim, s / 2.0)
                },
                0.0,
                2.0,
                1e-11,
            )
    };
    Ok(c * radius.powf(-alpha))
}

/// Fraction of the unit ball in `m` dimensions lying past the hyperplane at
/// distance `c` from the center.
fn unit_cap_fraction(m: usize, c: f64) -> f64 {
    if c >= 1.0 {
        return 0.0;
    }
    if c <= 0.0 {
        return 0.5;
    }
    let a = (m as f64 + 1.0) / 2.0;
    0.5 * statrs::function::beta::beta_reg(a, 0.5, 1.0 - c * c)
}

/// Value of a deterministic greedy cover at scale `eps`: the number of
/// radius-`eps/2` balls needed to cover every patch, times `eps^alpha`.
pub fn greedy_cover_value(mu: &PatchMeasure, eps: f64, alpha: f64) -> Result<f64> {
    if !(eps > 0.0) || !(alpha > 0.0) {
        return Err(Error::Domain("need positive eps and alpha".into()));
    }
    let max_patch = mu.patch_radii.iter().cloned().fold(0.0f64, f64::max);
    if 2.0 * max_patch > eps {
        return Err(Error::Domain(format!(
            "cover scale {eps} is below the patch scale {max_patch}"
        )));
    }
    let m = mu.support[0].manifold;
    let k = mu.len();
    let mut covered = vec![false; k];
    let mut count = 0usize;
    for i in 0..k {
        if covered[i] {
            continue;
        }
        count += 1;
        for j in 0..k {
            if !covered[j] {
                let d = distance(&m, &mu.support[i], &mu.support[j])?;
                if d + mu.patch_radii[j] <= eps / 2.0 {
                    covered[j] = true;
                }
            }
        }
        covered[i] = true;
    }
    Ok(count as f64 * eps.powf(alpha))
}

/// Dyadic-shell upper bound assembly: given the plain-kernel capacities of
/// the pieces of the set inside the shells `[2^i d0, 2^(i+1) d0)`, return
/// `sum cap_i / (2^i d0)^(n-2)`, an upper bound for the ratio-kernel
/// capacity of the union.
pub fn annuli_capacity_upper(d0: f64, component_caps: &[f64], n: usize) -> Result<f64> {
    if !(d0 > 0.0) {
        return Err(Error::Domain("base distance must be positive".into()));
    }
    if n < 3 {
        return Err(Error::Domain(format!("need n >= 3, got {n}")));
    }
    if component_caps.iter().any(|c| *c < 0.0) {
        return Err(Error::Domain("piece capacities must be nonnegative".into()));
    }
    let e = (n - 2) as i32;
    let mut total = 0.0;
    for (i, cap) in component_caps.iter().enumerate() {
        let r_inner = d0 * 2f64.powi(i as i32);
        total += cap / r_inner.powi(e);
    }
    Ok(total)
}

/// One row of the tubular-volume scaling table.
#[derive(Clone, Debug, Serialize)]
pub struct TubularVolumeRow {
    pub eps: f64,
    pub radius: f64,
    pub volume: f64,
    pub std_error: f64,
    pub ratio: f64,
    /// 99% upper confidence endpoint of the ratio.
    pub ratio_hi: f64,
}

/// Volumes of the `2 eps`-neighborhood of the high-curvature sublevel set,
/// intersected with centered balls, normalized by `eps^4 r^(n-4)`. The
/// neighborhood is radially symmetric, so the estimator samples the exact
/// shell-times-ball product and clips at the ball.
pub fn jiang_naber_volume_check(
    m: &ManifoldSpec,
    eps: f64,
    radii: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<TubularVolumeRow>> {
    let a = m.bolt_scale().ok_or_else(|| {
        Error::UnsupportedGeometry("tubular volume check needs the curved family".into())
    })?;
    let n = m.dim();
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let r_star = bolt_sublevel_for_epsilon(a, eps)?;
    let ell_star = eh_radial_arclength(a, r_star)?;
    let r_tube = eh_radial_from_arclength(a, ell_star + 2.0 * eps)?;
    let flat_dim = n - 4;
    let mut rows = Vec::with_capacity(radii.len());
    for (ridx, &r_ball) in radii.iter().enumerate() {
        if r_ball <= r_tube {
            return Err(Error::Domain(format!(
                "ball radius {r_ball} must exceed the tube radius {r_tube}"
            )));
        }
        let shell_vol4 = std::f64::consts::PI.powi(2) / 2.0 * (r_tube.powi(4) - a.powi(4));
        let flat_vol = if flat_dim == 0 {
            1.0
        } else {
            unit_ball_volume(flat_dim) * r_ball.powi(flat_dim as i32)
        };
        // Z_2 quotient halves the shell
        let envelope = 0.5 * shell_vol4 * flat_vol;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ridx as u64));
        let mut inside = 0u64;
        for _ in 0..samples {
            // radial coordinate of the shell by quartic inversion
            let u: f64 = rand::Rng::random(&mut rng);
            let s4 = a.powi(4) + u * (r_tube.powi(4) - a.powi(4));
            let s = s4.powf(0.25);
            let y_sq = if flat_dim == 0 {
                0.0
            } else {
                let mut g = vec![0.0f64; flat_dim];
                let mut norm_sq = 0.0;
                for gi in g.iter_mut() {
                    *gi = StandardNormal.sample(&mut rng);
                    norm_sq += *gi * *gi;
                }
                let ur: f64 = rand::Rng::random(&mut rng);
                let scale = r_ball * ur.powf(1.0 / flat_dim as f64) / norm_sq.sqrt();
                let mut acc = 0.0;
                for gi in &g {
                    let y = scale * gi;
                    acc += y * y;
                }
                acc
            };
            if s * s + y_sq <= r_ball * r_ball {
                inside += 1;
            }
        }
        let frac = inside as f64 / samples as f64;
        let volume = envelope * frac;
        let se = envelope * (frac * (1.0 - frac) / samples as f64).sqrt();
        let denom = eps.powi(4) * r_ball.powi(flat_dim as i32);
        rows.push(TubularVolumeRow {
            eps,
            radius: r_ball,
            volume,
            std_error: se,
            ratio: volume / denom,
            ratio_hi: (volume + 2.575_829_303_548_901 * se) / denom,
        });
    }
    Ok(rows)
}

/// Capacity of the set with small balls around the base point removed, at
/// shrinking removal radii `1/i`. Exposes the exhaustion sequence used when
/// the start point sits inside the set.
pub fn capacity_exhaustion(
    m: &ManifoldSpec,
    set: &SetSpec,
    x0: &Point,
    kernel: &KernelChoice,
    steps: usize,
    points: usize,
    tol_rel: f64,
    max_iters: usize,
) -> Result<Vec<(f64, f64)>> {
    if steps == 0 {
        return Err(Error::Domain("need at least one exhaustion step".into()));
    }
    let full = discretize_set(m, set, points)?;
    let mut rows = Vec::with_capacity(steps);
    for i in 1..=steps {
        let cut = 1.0 / i as f64;
        let mut support = Vec::new();
        let mut radii = Vec::new();
        for (p, r) in full.support.iter().zip(&full.patch_radii) {
            if distance(m, x0, p)? >= cut {
                support.push(p.clone());
                radii.push(*r);
            }
        }
        if support.is_empty() {
            return Err(Error::Domain(format!(
                "exhaustion at radius {cut} removed every support point"
            )));
        }
        let k = support.len();
        let measure = PatchMeasure {
            support,
            weights: vec![1.0 / k as f64; k],
            patch_radii: radii,
            patch_dim: full.patch_dim,
        };
        let res = equilibrium_measure(&measure, kernel, tol_rel, max_iters)?;
        rows.push((cut, res.capacity));
    }
    Ok(rows)
}

/// Deterministic quasi-uniform discretization of a set.
///
/// Solid bodies put 90% of the points on the boundary and sprinkle the rest
/// inside; unions split the budget by the capacity scale `radius^(n-2)` of
/// the members. Weights are uniform; the solver reshapes them.
pub fn discretize_set(m: &ManifoldSpec, set: &SetSpec, points: usize) -> Result<PatchMeasure> {
    if points < 2 {
        return Err(Error::Domain("need at least two discretization points".into()));
    }
    set.validate(m)?;
    let support = discretize_support(m, set, points, 0)?;
    let k = support.len();
    let radii = half_nearest_neighbor(&support)?;
    PatchMeasure::new(support, vec![1.0 / k as f64; k], radii, m.dim())
}

fn discretize_support(
    m: &ManifoldSpec,
    set: &SetSpec,
    points: usize,
    stream: usize,
) -> Result<Vec<Point>> {
    let n = m.dim();
    match set {
        SetSpec::SphereShell { center, radius } => {
            sphere_points(n, points, stream).map(|dirs| {
                dirs.into_iter()
                    .map(|u| {
                        let coords = center
                            .iter()
                            .zip(&u)
                            .map(|(c, ui)| c + radius * ui)
                            .collect();
                        Point::new(*m, coords).unwrap()
                    })
                    .collect()
            })
        }
        SetSpec::Ball { center, radius } => {
            let interior = ((points as f64 * crate::defaults::DEFAULTS.interior_fraction) as usize)
                .min(points - 1);
            let boundary = points - interior;
            let mut pts = discretize_support(
                m,
                &SetSpec::SphereShell { center: center.clone(), radius: *radius },
                boundary,
                stream,
            )?;
            let dirs = sphere_points(n, interior, stream + 1)?;
            for (i, u) in dirs.into_iter().enumerate() {
                let t = radical_inverse(i as u64 + 17, PRIMES[n % PRIMES.len()]);
                let r = *radius * (0.02 + 0.93 * t).powf(1.0 / n as f64);
                let coords = center.iter().zip(&u).map(|(c, ui)| c + r * ui).collect();
                pts.push(Point::new(*m, coords)?);
            }
            Ok(pts)
        }
        SetSpec::Annulus { center, r_in, r_out } => {
            let area_in = r_in.powi(n as i32 - 1);
            let area_out = r_out.powi(n as i32 - 1);
            let interior = ((points as f64 * crate::defaults::DEFAULTS.interior_fraction) as usize)
                .min(points.saturating_sub(2));
            let boundary = points - interior;
            let k_out = ((boundary as f64 * area_out / (area_in + area_out)) as usize)
                .clamp(1, boundary - 1);
            let k_in = boundary - k_out;
            let mut pts = discretize_support(
                m,
                &SetSpec::SphereShell { center: center.clone(), radius: *r_out },
                k_out,
                stream,
            )?;
            pts.extend(discretize_support(
                m,
                &SetSpec::SphereShell { center: center.clone(), radius: *r_in },
                k_in,
                stream + 1,
            )?);
            let dirs = sphere_points(n, interior, stream + 2)?;
            for (i, u) in dirs.into_iter().enumerate() {
                let t = radical_inverse(i as u64 + 29, PRIMES[(n + 1) % PRIMES.len()]);
                let rn = r_in.powi(n as i32) + t * (r_out.powi(n as i32) - r_in.powi(n as i32));
                let r = rn.powf(1.0 / n as f64);
                let coords = center.iter().zip(&u).map(|(c, ui)| c + r * ui).collect();
                pts.push(Point::new(*m, coords)?);
            }
            Ok(pts)
        }
        SetSpec::FiniteUnion(members) => {
            let e = (n as i32 - 2).max(1);
            let scales: Vec<f64> = members
                .iter()
                .map(|s| match s {
                    SetSpec::Ball { radius, .. } | SetSpec::SphereShell { radius, .. } => {
                        radius.powi(e)
                    }
                    SetSpec::Annulus { r_out, .. } => r_out.powi(e),
                    _ => 1.0,
                })
                .collect();
            let total: f64 = scales.iter().sum();
            let min_each = 16.min(points / members.len().max(1)).max(2);
            let mut pts = Vec::new();
            for (i, (s, scale)) in members.iter().zip(&scales).enumerate() {
                let share = ((points as f64 * scale / total) as usize).max(min_each);
                pts.extend(discretize_support(m, s, share, stream + 3 * i + 1)?);
            }
            Ok(pts)
        }
        SetSpec::BoltSublevel { .. } | SetSpec::Product { .. } => Err(Error::UnsupportedGeometry(
            "equilibrium discretization covers the flat family; curved sets go through \
             the volume and shell bounds"
                .into(),
        )),
    }
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Deterministic quasi-uniform points on the unit sphere of R^n.
fn sphere_points(n: usize, k: usize, stream: usize) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::Domain("sphere discretization needs n >= 2".into()));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    if n == 3 && stream == 0 {
        // spiral lattice
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let mut pts = Vec::with_capacity(k);
        for i in 0..k {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / k as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            pts.push(vec![rho * phi.cos(), rho * phi.sin(), z]);
        }
        return Ok(pts);
    }
    // low-discrepancy Gaussian directions
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut pts = Vec::with_capacity(k);
    let offset = 101 + 7919 * stream as u64;
    let mut idx = 0u64;
    while pts.len() < k {
        let mut v = vec![0.0; n];
        let mut norm_sq = 0.0;
        for (j, vj) in v.iter_mut().enumerate() {
            let u = radical_inverse(idx + offset, PRIMES[j % PRIMES.len()]).clamp(1e-12, 1.0 - 1e-12);
            *vj = normal.inverse_cdf(u);
            norm_sq += *vj * *vj;
        }
        idx += 1;
        if norm_sq > 1e-12 {
            let norm = norm_sq.sqrt();
            for vj in v.iter_mut() {
                *vj /= norm;
            }
            pts.push(v);
        }
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn r3() -> ManifoldSpec {
        ManifoldSpec::euclidean(3).unwrap()
    }

    fn flat_point(m: &ManifoldSpec, coords: &[f64]) -> Point {
        Point::new(*m, coords.to_vec()).unwrap()
    }

    #[test]
    fn patch_measure_validation() {
        let m = r3();
        let pts = vec![flat_point(&m, &[0.0, 0.0, 0.0]), flat_point(&m, &[1.0, 0.0, 0.0])];
        assert!(PatchMeasure::new(pts.clone(), vec![0.5, 0.5], vec![0.4, 0.4], 3).is_ok());
        assert!(PatchMeasure::new(pts.clone(), vec![0.7, 0.7], vec![0.4, 0.4], 3).is_err());
        assert!(PatchMeasure::new(pts.clone(), vec![1.5, -0.5], vec![0.4, 0.4], 3).is_err());
        assert!(PatchMeasure::new(pts.clone(), vec![0.5, 0.5], vec![0.6, 0.4], 3).is_err());
        assert!(PatchMeasure::new(Vec::new(), Vec::new(), Vec::new(), 3).is_err());
        let um = PatchMeasure::uniform(pts).unwrap();
        assert_eq!(um.patch_radii, vec![0.5, 0.5]);
        assert_eq!(um.patch_dim, 3);
    }

    #[test]
    fn kernel_matrix_two_points() {
        let m = r3();
        let pts = vec![flat_point(&m, &[0.0, 0.0, 0.0]), flat_point(&m, &[1.0, 0.0, 0.0])];
        let mu = PatchMeasure::uniform(pts).unwrap();
        let k = kernel_matrix_with_regularization(&mu, &KernelChoice::Newtonian, 0.8).unwrap();
        assert_eq!(k[(0, 1)], 1.0);
        assert_eq!(k[(1, 0)], 1.0);
        assert_relative_eq!(k[(0, 0)], 1.0 / 0.4, max_relative = 1e-15);
        assert_relative_eq!(k[(1, 1)], 1.0 / 0.4, max_relative = 1e-15);
    }

    #[test]
    fn kernel_matrix_exactly_symmetric() {
        let m = ManifoldSpec::euclidean(4).unwrap();
        let set = SetSpec::Ball { center: vec![3.0, 0.0, 0.0, 0.0], radius: 1.0 };
        let mu = discretize_set(&m, &set, 100).unwrap();
        let base = flat_point(&m, &[0.0, 0.0, 0.0, 0.0]);
        for kernel in [KernelChoice::Newtonian, KernelChoice::Martin { base }] {
            let k = kernel_matrix(&mu, &kernel).unwrap();
            for i in 0..mu.len() {
                for j in 0..mu.len() {
                    assert_eq!(k[(i, j)], k[(j, i)], "asymmetry at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn kernel_matrix_rejects_coincident_points() {
        let m = r3();
        let pts = vec![flat_point(&m, &[0.0; 3]), flat_point(&m, &[0.0; 3])];
        let mu = PatchMeasure {
            support: pts,
            weights: vec![0.5, 0.5],
            patch_radii: vec![0.1, 0.1],
            patch_dim: 3,
        };
        assert!(matches!(
            kernel_matrix(&mu, &KernelChoice::Newtonian),
            Err(Error::RejectedInput(_))
        ));
    }

    #[test]
    fn two_symmetric_points_stay_uniform() {
        let m = r3();
        let pts = vec![flat_point(&m, &[0.0, 0.0, 0.0]), flat_point(&m, &[1.0, 0.0, 0.0])];
        let mu = PatchMeasure::uniform(pts).unwrap();
        let res = equilibrium_measure(&mu, &KernelChoice::Newtonian, 1e-9, 1000).unwrap();
        assert_eq!(res.weights.weights, vec![0.5, 0.5]);
        assert!(res.converged);
        assert!(res.duality_gap <= 1e-9 * res.energy);
        assert_relative_eq!(res.capacity * res.energy, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn uniform_sphere_energy_is_one() {
        let m = r3();
        let set = SetSpec::SphereShell { center: vec![0.0; 3], radius: 1.0 };
        let mu = discretize_set(&m, &set, 500).unwrap();
        let k = kernel_matrix(&mu, &KernelChoice::Newtonian).unwrap();
        let w = nalgebra::DVector::from_vec(mu.weights.clone());
        let energy = (&w.transpose() * &k * &w)[(0, 0)];
        assert_relative_eq!(energy, 1.0, max_relative = 0.02);
    }

    #[test]
    fn unit_sphere_capacity_is_one() {
        let m = r3();
        let set = SetSpec::SphereShell { center: vec![0.0; 3], radius: 1.0 };
        let mu = discretize_set(&m, &set, 500).unwrap();
        let res = equilibrium_measure(&mu, &KernelChoice::Newtonian, 1e-6, 200_000).unwrap();
        assert!(res.converged);
        assert_relative_eq!(res.capacity, 1.0, max_relative = 0.02);
        // first-order certificate
        let k = kernel_matrix(&mu, &KernelChoice::Newtonian).unwrap();
        let w = nalgebra::DVector::from_vec(res.weights.weights.clone());
        let kw = &k * &w;
        let min_kw = kw.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_kw >= res.energy - res.duality_gap - 1e-12 * res.energy);
    }

    #[test]
    fn martin_spheres_about_base_have_capacity_one() {
        let m = r3();
        let base = flat_point(&m, &[0.0; 3]);
        for radius in [0.5, 1.0, 2.0] {
            let set = SetSpec::SphereShell { center: vec![0.0; 3], radius };
            let mu = discretize_set(&m, &set, 400).unwrap();
            let res = equilibrium_measure(
                &mu,
                &KernelChoice::Martin { base: base.clone() },
                1e-6,
                200_000,
            )
            .unwrap();
            assert_relative_eq!(res.capacity, 1.0, max_relative = 0.02);
        }
    }

    #[test]
    fn closed_form_ball_capacity_agrees_with_the_solver() {
        // the solver resolves the d^(-1) kernel well in three dimensions,
        // so it can vouch for the closed form there
        let m = r3();
        for r in [0.5, 2.0] {
            let set = SetSpec::SphereShell { center: vec![0.0; 3], radius: r };
            let mu = discretize_set(&m, &set, 2000).unwrap();
            let solved = equilibrium_measure(&mu, &KernelChoice::Newtonian, 1e-6, 200_000)
                .unwrap()
                .capacity;
            let exact = newtonian_ball_capacity(r, 3).unwrap();
            assert_relative_eq!(solved, exact, max_relative = 0.01);
        }
        assert_eq!(newtonian_ball_capacity(2.0, 5).unwrap(), 8.0);
        assert!(newtonian_ball_capacity(0.0, 5).is_err());
        assert!(newtonian_ball_capacity(1.0, 2).is_err());
    }

    #[test]
    fn ball_matches_its_boundary_sphere() {
        let m = r3();
        let ball = SetSpec::Ball { center: vec![0.0; 3], radius: 1.0 };
        let shell = SetSpec::SphereShell { center: vec![0.0; 3], radius: 1.0 };
        let cap_ball = equilibrium_measure(
            &discretize_set(&m, &ball, 600).unwrap(),
            &KernelChoice::Newtonian,
            1e-6,
            200_000,
        )
        .unwrap()
        .capacity;
        let cap_shell = equilibrium_measure(
            &discretize_set(&m, &shell, 600).unwrap(),
            &KernelChoice::Newtonian,
            1e-6,
            200_000,
        )
        .unwrap()
        .capacity;
        assert_relative_eq!(cap_ball, cap_shell, max_relative = 0.02);
    }

    #[test]
    fn capacity_scales_exactly_with_radius() {
        // identical layouts at two scales: the discrete energies scale
        // exactly, whatever the discretization error is
        let m = ManifoldSpec::euclidean(4).unwrap();
        let mut caps = Vec::new();
        for radius in [1.0, 2.0] {
            let set = SetSpec::SphereShell { center: vec![0.0; 4], radius };
            let mu = discretize_set(&m, &set, 300).unwrap();
            let res = equilibrium_measure(&mu, &KernelChoice::Newtonian, 1e-7, 200_000).unwrap();
            caps.push(res.capacity);
        }
        assert_relative_eq!(caps[1] / caps[0], 4.0, max_relative = 1e-6);
    }

    #[test]
    fn capacity_monotone_under_inclusion() {
        let m = r3();
        let small = SetSpec::Ball { center: vec![0.0; 3], radius: 0.8 };
        let big = SetSpec::Ball { center: vec![0.0; 3], radius: 1.0 };
        let cap = |s: &SetSpec| {
            equilibrium_measure(
                &discretize_set(&m, s, 500).unwrap(),
                &KernelChoice::Newtonian,
                1e-6,
                200_000,
            )
            .unwrap()
            .capacity
        };
        assert!(cap(&small) <= cap(&big) * 1.005);
    }

    #[test]
    fn union_capacity_is_subadditive() {
        let m = r3();
        let b1 = SetSpec::Ball { center: vec![-3.0, 0.0, 0.0], radius: 1.0 };
        let b2 = SetSpec::Ball { center: vec![3.0, 0.0, 0.0], radius: 1.0 };
        let union = SetSpec::FiniteUnion(vec![b1.clone(), b2.clone()]);
        let cap = |s: &SetSpec, pts: usize| {
            equilibrium_measure(
                &discretize_set(&m, s, pts).unwrap(),
                &KernelChoice::Newtonian,
                1e-6,
                200_000,
            )
            .unwrap()
            .capacity
        };
        let cu = cap(&union, 600);
        let c1 = cap(&b1, 300);
        let c2 = cap(&b2, 300);
        assert!(cu <= (c1 + c2) * 1.01, "union {cu} vs sum {}", c1 + c2);
        assert!(cu >= c1 * 0.99, "union {cu} below single piece {c1}");
    }

    #[test]
    fn ladder_extrapolates_sphere_capacity() {
        let m = r3();
        let set = SetSpec::SphereShell { center: vec![0.0; 3], radius: 1.0 };
        let x0 = flat_point(&m, &[0.0; 3]);
        let refined = capacity_of_set(
            &m,
            &set,
            &x0,
            &KernelChoice::Newtonian,
            &[200, 400, 800],
            1e-6,
            200_000,
        )
        .unwrap();
        assert_eq!(refined.levels.len(), 3);
        assert_relative_eq!(refined.extrapolated, 1.0, max_relative = 0.01);
        for lv in &refined.levels {
            assert_relative_eq!(lv.capacity, 1.0, max_relative = 0.03);
        }
    }

    #[test]
    fn martin_base_mismatch_is_rejected() {
        let m = r3();
        let set = SetSpec::SphereShell { center: vec![0.0; 3], radius: 1.0 };
        let x0 = flat_point(&m, &[0.5, 0.0, 0.0]);
        let base = flat_point(&m, &[0.0; 3]);
        let err = capacity_of_set(
            &m,
            &set,
            &x0,
            &KernelChoice::Martin { base },
            &[100],
            1e-6,
            10_000,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn aitken_is_exact_on_geometric_sequences() {
        let c = [1.5, 1.25, 1.125];
        assert_relative_eq!(aitken(&c), 1.0, max_relative = 1e-12);
        assert_eq!(aitken(&[2.0]), 2.0);
        assert_eq!(aitken(&[2.0, 3.0]), 3.0);
    }

    #[test]
    fn sandwich_interval_bounds() {
        let (lo, hi) = martin_newtonian_sandwich(1.0, 1.0, 2.0, 5).unwrap();
        assert_relative_eq!(lo, 1.0 / 8.0, max_relative = 1e-15);
        assert_eq!(hi, KernelValue::Finite(1.0));
        let (lo0, hi0) = martin_newtonian_sandwich(3.0, 0.0, 2.0, 5).unwrap();
        assert_relative_eq!(lo0, 3.0 / 8.0, max_relative = 1e-15);
        assert!(hi0.is_infinite());
        assert!(martin_newtonian_sandwich(1.0, 2.0, 1.0, 5).is_err());
        assert!(martin_newtonian_sandwich(1.0, 1.0, 2.0, 2).is_err());
        // sphere about the base point: both endpoints collapse to 1
        let (lo_s, hi_s) = martin_newtonian_sandwich(2.0, 2.0, 2.0, 3).unwrap();
        assert_relative_eq!(lo_s, 1.0, max_relative = 1e-15);
        assert_eq!(hi_s, KernelValue::Finite(1.0));
    }

    #[test]
    fn sandwich_contains_solver_capacity() {
        let m = ManifoldSpec::euclidean(5).unwrap();
        let set = SetSpec::Ball { center: vec![4.0, 0.0, 0.0, 0.0, 0.0], radius: 1.0 };
        let base = flat_point(&m, &[0.0; 5]);
        let mu = discretize_set(&m, &set, 500).unwrap();
        let cap_n = equilibrium_measure(&mu, &KernelChoice::Newtonian, 1e-6, 200_000)
            .unwrap()
            .capacity;
        let cap_k = equilibrium_measure(&mu, &KernelChoice::Martin { base }, 1e-6, 200_000)
            .unwrap()
            .capacity;
        let (lo, hi) = martin_newtonian_sandwich(cap_n, 3.0, 5.0, 5).unwrap();
        let hi = hi.finite().unwrap();
        assert!(
            cap_k >= lo * 0.98 && cap_k <= hi * 1.02,
            "cap_k {cap_k} outside [{lo}, {hi}]"
        );
    }

    #[test]
    fn ball_capacity_upper_examples() {
        assert_relative_eq!(ball_capacity_upper(0.5, 4).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(ball_capacity_upper(1.0, 5).unwrap(), 8.0, max_relative = 1e-15);
        assert!(ball_capacity_upper(0.0, 4).is_err());
        assert!(ball_capacity_upper(1.0, 2).is_err());
        // solver value sits below the cover bound
        let m = ManifoldSpec::euclidean(4).unwrap();
        let set = SetSpec::Ball { center: vec![0.0; 4], radius: 0.5 };
        let cap = equilibrium_measure(
            &discretize_set(&m, &set, 400).unwrap(),
            &KernelChoice::Newtonian,
            1e-6,
            200_000,
        )
        .unwrap()
        .capacity;
        assert!(cap <= ball_capacity_upper(0.5, 4).unwrap());
    }

    #[test]
    fn patch_self_energy_closed_forms() {
        // interval, alpha = 1/2, radius 1: 8 / (3 sqrt 2)
        let e1 = patch_self_energy(1, 0.5, 1.0).unwrap();
        assert_relative_eq!(e1, 8.0 / (3.0 * 2f64.sqrt()), max_relative = 1e-12);
        // solid 3-ball, alpha = 1: classical 6/5
        let e3 = patch_self_energy(3, 1.0, 1.0).unwrap();
        assert_relative_eq!(e3, 1.2, max_relative = 1e-8);
        // radius scaling is a pure power law
        let a = patch_self_energy(2, 0.5, 0.1).unwrap();
        let b = patch_self_energy(2, 0.5, 0.05).unwrap();
        assert_relative_eq!(b / a, 2f64.powf(0.5), max_relative = 1e-10);
        assert!(patch_self_energy(1, 1.0, 1.0).is_err());
        assert!(patch_self_energy(2, 2.0, 1.0).is_err());
        assert!(patch_self_energy(2, 0.5, 0.0).is_err());
    }

    #[test]
    fn cap_fraction_matches_quadrature() {
        for m in [2usize, 3, 5] {
            let full = quad::integrate(
                |u| (1.0 - u * u).powf((m as f64 - 1.0) / 2.0),
                -1.0,
                1.0,
                1e-12,
            );
            for c in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let direct = quad::integrate(
                    |u| (1.0 - u * u).powf((m as f64 - 1.0) / 2.0),
                    c,
                    1.0,
                    1e-12,
                ) / full;
                assert_relative_eq!(unit_cap_fraction(m, c), direct, max_relative = 1e-9);
            }
        }
        // disk cap area has a closed form
        let c: f64 = 0.4;
        let disk = (c.acos() - c * (1.0 - c * c).sqrt()) / std::f64::consts::PI;
        assert_relative_eq!(unit_cap_fraction(2, c), disk, max_relative = 1e-12);
    }

    #[test]
    fn interval_energy_and_content_bound() {
        // [0,1] on the x-axis with 1-dimensional patches
        let m = r3();
        let k = 1000usize;
        let h = 1.0 / (k - 1) as f64;
        let support: Vec<Point> = (0..k)
            .map(|i| flat_point(&m, &[i as f64 * h, 0.0, 0.0]))
            .collect();
        let mu = PatchMeasure::new(
            support,
            vec![1.0 / k as f64; k],
            vec![h / 2.0; k],
            1,
        )
        .unwrap();
        let eb = hausdorff_energy_lower_bound(&mu, 0.5, 1.0).unwrap();
        assert_relative_eq!(eb.pair_energy, 8.0 / 3.0, max_relative = 0.02);
        assert_relative_eq!(eb.lower_bound, 3.0 / 8.0, max_relative = 0.02);
        // any greedy cover value dominates the energy bound
        for eps in [1.0, 0.25, 0.05] {
            let cover = greedy_cover_value(&mu, eps, 0.5).unwrap();
            let bound = hausdorff_energy_lower_bound(&mu, 0.5, eps).unwrap().lower_bound;
            assert!(
                cover >= bound,
                "cover {cover} below energy bound {bound} at eps {eps}"
            );
        }
    }

    #[test]
    fn single_patch_bound_scales_like_eps_alpha() {
        let m = r3();
        let alpha = 0.7;
        let bound_at = |delta: f64| {
            let mu = PatchMeasure::new(
                vec![flat_point(&m, &[0.0; 3])],
                vec![1.0],
                vec![delta],
                2,
            )
            .unwrap();
            hausdorff_energy_lower_bound(&mu, alpha, 1.0).unwrap().lower_bound
        };
        let r = bound_at(0.05) / bound_at(0.1);
        assert_relative_eq!(r, 0.5f64.powf(alpha), max_relative = 1e-9);
    }

    #[test]
    fn greedy_cover_needs_room_for_patches() {
        let m = r3();
        let mu = PatchMeasure::new(
            vec![flat_point(&m, &[0.0; 3]), flat_point(&m, &[1.0, 0.0, 0.0])],
            vec![0.5, 0.5],
            vec![0.3, 0.3],
            3,
        )
        .unwrap();
        assert!(greedy_cover_value(&mu, 0.1, 0.5).is_err());
        assert!(greedy_cover_value(&mu, 3.0, 0.5).unwrap() > 0.0);
    }

    #[test]
    fn annuli_assembly_examples() {
        // one piece at base distance: plain sandwich numerator
        let one = annuli_capacity_upper(2.0, &[5.0], 5).unwrap();
        assert_relative_eq!(one, 5.0 / 8.0, max_relative = 1e-15);
        let two = annuli_capacity_upper(2.0, &[5.0, 3.0], 5).unwrap();
        assert_relative_eq!(two, 5.0 / 8.0 + 3.0 / 64.0, max_relative = 1e-15);
        assert!(annuli_capacity_upper(0.0, &[1.0], 5).is_err());
        assert!(annuli_capacity_upper(1.0, &[-1.0], 5).is_err());
    }

    // quadrature value of the same tubular volume
    fn tubular_volume_exact(a: f64, r_tube: f64, r_ball: f64, n: usize) -> f64 {
        let flat_dim = n - 4;
        let top = r_tube.min(r_ball);
        quad::integrate(
            |s| {
                let cross = if flat_dim == 0 {
                    if s <= r_ball {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let rr = (r_ball * r_ball - s * s).max(0.0);
                    unit_ball_volume(flat_dim) * rr.powf(flat_dim as f64 / 2.0)
                };
                std::f64::consts::PI.powi(2) * s * s * s * cross
            },
            a,
            top,
            1e-11,
        )
    }

    #[test]
    fn tubular_volume_matches_quadrature() {
        let m = ManifoldSpec::eguchi_hanson_product(6, 0.5).unwrap();
        let eps = 0.5;
        let rows = jiang_naber_volume_check(&m, eps, &[5.0, 8.0], 400_000, 11).unwrap();
        let a = 0.5;
        let r_star = bolt_sublevel_for_epsilon(a, eps).unwrap();
        let ell_star = eh_radial_arclength(a, r_star).unwrap();
        let r_tube = eh_radial_from_arclength(a, ell_star + 2.0 * eps).unwrap();
        for row in &rows {
            let exact = tubular_volume_exact(a, r_tube, row.radius, 6);
            assert!(
                (row.volume - exact).abs() <= 4.0 * row.std_error + 0.01 * exact,
                "radius {}: mc {} vs exact {exact} (se {})",
                row.radius,
                row.volume,
                row.std_error
            );
            assert_relative_eq!(
                row.ratio,
                row.volume / (eps.powi(4) * row.radius.powi(2)),
                max_relative = 1e-12
            );
            assert!(row.ratio_hi >= row.ratio);
        }
    }

    #[test]
    fn tubular_volume_needs_curved_family() {
        let m = r3();
        assert!(jiang_naber_volume_check(&m, 0.5, &[5.0], 1000, 1).is_err());
    }

    #[test]
    fn exhaustion_is_stable_in_the_removal_radius() {
        let m = r3();
        let set = SetSpec::Ball { center: vec![0.0; 3], radius: 2.0 };
        let x0 = flat_point(&m, &[0.0; 3]);
        let rows = capacity_exhaustion(
            &m,
            &set,
            &x0,
            &KernelChoice::Martin { base: x0.clone() },
            3,
            300,
            1e-6,
            200_000,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        for (i, (cut, cap)) in rows.iter().enumerate() {
            assert_relative_eq!(*cut, 1.0 / (i as f64 + 1.0));
            assert!(cap.is_finite() && *cap > 0.0);
        }
        // shrinking the removed core cannot shrink the set
        assert!(rows[2].1 >= rows[0].1 * 0.98);
    }

    #[test]
    fn discretization_is_deterministic() {
        let m = ManifoldSpec::euclidean(5).unwrap();
        let set = SetSpec::Ball { center: vec![1.0, 0.0, 0.0, 0.0, 0.0], radius: 2.0 };
        let a = discretize_set(&m, &set, 250).unwrap();
        let b = discretize_set(&m, &set, 250).unwrap();
        assert_eq!(a.len(), 250);
        for (p, q) in a.support.iter().zip(&b.support) {
            assert_eq!(p.coords, q.coords);
        }
        assert_eq!(a.patch_radii, b.patch_radii);
    }

    #[test]
    fn curved_sets_are_not_discretized() {
        let m = ManifoldSpec::eguchi_hanson_product(5, 1.0).unwrap();
        let set = SetSpec::BoltSublevel { r_star: 1.5 };
        assert!(matches!(
            discretize_set(&m, &set, 100),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    // calibration sweep for the diagonal regularization constant; run with
    //   cargo test -p capwalk-core calibrate_rho -- --ignored --nocapture
    #[test]
    #[ignore]
    fn calibrate_rho_reg() {
        let m = r3();
        let set = SetSpec::SphereShell { center: vec![0.0; 3], radius: 1.0 };
        for rho in [0.40, 0.44, 0.48, 0.50, 0.52, 0.54, 0.56] {
            let mut line = format!("rho={rho:.2}");
            for pts in [500usize, 1000, 2000, 5000] {
                let mu = discretize_set(&m, &set, pts).unwrap();
                let k = kernel_matrix_with_regularization(&mu, &KernelChoice::Newtonian, rho)
                    .unwrap();
                let res = equilibrium_from_matrix(&k, &mu, 1e-7, 400_000).unwrap();
                line.push_str(&format!("  N={pts}: {:+.5}", res.capacity - 1.0));
            }
            println!("{line}");
        }
    }
}
