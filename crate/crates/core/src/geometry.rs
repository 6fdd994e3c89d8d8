//! Manifold descriptions, chart metrics, distances, and volumes.
//!
//! Two families are supported:
//!
//! * `Euclidean { dim }`: flat R^n in Cartesian coordinates.
//! * `EguchiHansonProduct { dim, bolt_scale }`: the Eguchi-Hanson space of
//!   bolt scale `a` times a flat R^(dim-4) factor. Chart coordinates are
//!   `[r, th, ph, ps, y_1, ..., y_(dim-4)]` with `r >= a`, `th in [0, pi]`,
//!   and `ph, ps` periodic with period `2*pi` (the Z_2 quotient halves the
//!   fiber period). The bolt is the locus `r = a`, where the fiber circle
//!   collapses.
//!
//! In the angular coframe the Eguchi-Hanson metric is diagonal with radial
//! factor `(1-(a/r)^4)^(-1)`, fiber factor `(r^2/4)(1-(a/r)^4)`, and two base
//! factors `r^2/4`. Its volume form in chart coordinates equals the flat one,
//! `(r^3/8) sin(th)`, independent of `a`.
//!
//! Pairwise distance on the curved factor is exposed only where it reduces to
//! a one-dimensional computation: pairs on a common radial ray combine the
//! radial arc length with the flat factor in quadrature, and set distances to
//! radially symmetric sets integrate the radial line element. Everything else
//! returns `UnsupportedGeometry` instead of a silent approximation.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::quad;
use crate::{Error, Result};

const ANGULAR_EQ_TOL: f64 = 1e-12;

/// Manifold family plus the parameters that pin it down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ManifoldSpec {
    Euclidean { dim: usize },
    EguchiHansonProduct { dim: usize, bolt_scale: f64 },
}

impl ManifoldSpec {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        Ok(ManifoldSpec::Euclidean { dim })
    }

    pub fn eguchi_hanson_product(dim: usize, bolt_scale: f64) -> Result<Self> {
        if dim < 4 {
            return Err(Error::Domain(format!(
                "Eguchi-Hanson product needs dim >= 4, got {dim}"
            )));
        }
        if !(bolt_scale > 0.0) || !bolt_scale.is_finite() {
            return Err(Error::Domain(format!("bolt scale must be positive, got {bolt_scale}")));
        }
        Ok(ManifoldSpec::EguchiHansonProduct { dim, bolt_scale })
    }

    pub fn dim(&self) -> usize {
        match *self {
            ManifoldSpec::Euclidean { dim } => dim,
            ManifoldSpec::EguchiHansonProduct { dim, .. } => dim,
        }
    }

    /// Chart dimension equals the manifold dimension for both families.
    pub fn chart_dim(&self) -> usize {
        self.dim()
    }

    /// Dimension of the flat factor (0 for plain Eguchi-Hanson).
    pub fn flat_dim(&self) -> usize {
        match *self {
            ManifoldSpec::Euclidean { dim } => dim,
            ManifoldSpec::EguchiHansonProduct { dim, .. } => dim - 4,
        }
    }

    pub fn bolt_scale(&self) -> Option<f64> {
        match *self {
            ManifoldSpec::Euclidean { .. } => None,
            ManifoldSpec::EguchiHansonProduct { bolt_scale, .. } => Some(bolt_scale),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, ManifoldSpec::Euclidean { .. })
    }
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ManifoldSpec::Euclidean { dim } => write!(f, "euclidean:n={dim}"),
            ManifoldSpec::EguchiHansonProduct { dim, bolt_scale } => {
                write!(f, "eh-product:n={dim},a={bolt_scale}")
            }
        }
    }
}

impl FromStr for ManifoldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("manifold spec `{s}` lacks `family:params`")))?;
        let kv = parse_kv(rest)?;
        match head {
            "euclidean" => {
                let dim = kv_usize(&kv, "n", s)?;
                require_keys(&kv, &["n"], s)?;
                ManifoldSpec::euclidean(dim)
            }
            "eh-product" => {
                let dim = kv_usize(&kv, "n", s)?;
                let a = kv_f64(&kv, "a", s)?;
                require_keys(&kv, &["n", "a"], s)?;
                ManifoldSpec::eguchi_hanson_product(dim, a)
            }
            other => Err(Error::Config(format!("unknown manifold family `{other}`"))),
        }
    }
}

/// A chart point on a specific manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub manifold: ManifoldSpec,
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(manifold: ManifoldSpec, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != manifold.chart_dim() {
            return Err(Error::DimensionMismatch {
                expected: manifold.chart_dim(),
                got: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::OutsideChart("non-finite coordinate".into()));
        }
        if let ManifoldSpec::EguchiHansonProduct { bolt_scale, .. } = manifold {
            let r = coords[0];
            if r < bolt_scale {
                return Err(Error::OutsideChart(format!(
                    "radial coordinate {r} below bolt scale {bolt_scale}"
                )));
            }
            let th = coords[1];
            if !(0.0..=std::f64::consts::PI).contains(&th) {
                return Err(Error::OutsideChart(format!("polar angle {th} outside [0, pi]")));
            }
        }
        Ok(Point { manifold, coords })
    }

    /// Euclidean point from raw coordinates.
    pub fn flat(coords: Vec<f64>) -> Result<Self> {
        let m = ManifoldSpec::euclidean(coords.len())?;
        Point::new(m, coords)
    }

    pub fn radial(&self) -> Option<f64> {
        match self.manifold {
            ManifoldSpec::EguchiHansonProduct { .. } => Some(self.coords[0]),
            _ => None,
        }
    }

    pub fn flat_part(&self) -> &[f64] {
        match self.manifold {
            ManifoldSpec::Euclidean { .. } => &self.coords,
            ManifoldSpec::EguchiHansonProduct { .. } => &self.coords[4..],
        }
    }

    fn on_bolt(&self) -> bool {
        match self.manifold {
            ManifoldSpec::EguchiHansonProduct { bolt_scale, .. } => {
                self.coords[0] <= bolt_scale * (1.0 + 1e-12)
            }
            _ => false,
        }
    }
}

fn q_ratio(a: f64, r: f64) -> f64 {
    let t = a / r;
    let t2 = t * t;
    t2 * t2
}

/// Metric matrix at `p`. For the Eguchi-Hanson factor this is the diagonal
/// form in the orthogonal coframe, ordered
/// `[radial, fiber, base1, base2, flat...]`; use [`coordinate_metric_at`] for
/// the full chart-coordinate matrix.
pub fn metric_at(m: &ManifoldSpec, p: &Point) -> Result<DMatrix<f64>> {
    check_point(m, p)?;
    let n = m.chart_dim();
    match *m {
        ManifoldSpec::Euclidean { .. } => Ok(DMatrix::identity(n, n)),
        ManifoldSpec::EguchiHansonProduct { bolt_scale: a, .. } => {
            let r = p.coords[0];
            if r <= a {
                return Err(Error::OutsideChart(
                    "metric is degenerate on the bolt; evaluate at r > a".into(),
                ));
            }
            let q = q_ratio(a, r);
            let quarter_r2 = 0.25 * r * r;
            let mut g = DMatrix::identity(n, n);
            g[(0, 0)] = 1.0 / (1.0 - q);
            g[(1, 1)] = quarter_r2 * (1.0 - q);
            g[(2, 2)] = quarter_r2;
            g[(3, 3)] = quarter_r2;
            Ok(g)
        }
    }
}

/// Metric in the literal chart coordinates `[r, th, ph, ps, y...]`. The
/// angular block mixes `ph` and `ps` through the fiber connection `cos(th)`.
pub fn coordinate_metric_at(m: &ManifoldSpec, p: &Point) -> Result<DMatrix<f64>> {
    check_point(m, p)?;
    let n = m.chart_dim();
    match *m {
        ManifoldSpec::Euclidean { .. } => Ok(DMatrix::identity(n, n)),
        ManifoldSpec::EguchiHansonProduct { bolt_scale: a, .. } => {
            let r = p.coords[0];
            let th = p.coords[1];
            if r <= a {
                return Err(Error::OutsideChart(
                    "metric is degenerate on the bolt; evaluate at r > a".into(),
                ));
            }
            if th <= 0.0 || th >= std::f64::consts::PI {
                return Err(Error::OutsideChart(
                    "coordinate metric is singular at the polar axis".into(),
                ));
            }
            let q = q_ratio(a, r);
            let quarter_r2 = 0.25 * r * r;
            let (sin_th, cos_th) = th.sin_cos();
            let mut g = DMatrix::identity(n, n);
            g[(0, 0)] = 1.0 / (1.0 - q);
            g[(1, 1)] = quarter_r2;
            g[(2, 2)] = quarter_r2 * (sin_th * sin_th + (1.0 - q) * cos_th * cos_th);
            g[(3, 3)] = quarter_r2 * (1.0 - q);
            g[(2, 3)] = quarter_r2 * (1.0 - q) * cos_th;
            g[(3, 2)] = g[(2, 3)];
            Ok(g)
        }
    }
}

/// Volume element `sqrt(det g)` of the curved four-dimensional factor in
/// chart coordinates, `(r^3/8) sin(theta)`. The bolt scale drops out, so
/// this is also the flat value.
pub fn eh_sqrt_det_g(r: f64, th: f64) -> f64 {
    r * r * r / 8.0 * th.sin()
}

/// Divergence-form drift `b^i = (1/sqrt|g|) d_j (sqrt|g| g^(ij))` in chart
/// coordinates. Zero on flat space. On the Eguchi-Hanson factor only the
/// radial and polar components survive:
/// `b^r = 3/r + a^4/r^5`, `b^th = (4/r^2) cot(th)`.
pub fn laplace_drift(m: &ManifoldSpec, p: &Point) -> Result<Vec<f64>> {
    check_point(m, p)?;
    let n = m.chart_dim();
    match *m {
        ManifoldSpec::Euclidean { .. } => Ok(vec![0.0; n]),
        ManifoldSpec::EguchiHansonProduct { bolt_scale: a, .. } => {
            let r = p.coords[0];
            let th = p.coords[1];
            if th <= 0.0 || th >= std::f64::consts::PI {
                return Err(Error::OutsideChart(
                    "drift is singular at the polar axis".into(),
                ));
            }
            let mut b = vec![0.0; n];
            b[0] = eh_radial_drift(a, r);
            b[1] = 4.0 / (r * r) * (th.cos() / th.sin());
            Ok(b)
        }
    }
}

/// Radial drift of the Laplace-Beltrami generator on the Eguchi-Hanson
/// factor: `(1/r^3) d/dr (r^3 (1-(a/r)^4))`.
pub fn eh_radial_drift(a: f64, r: f64) -> f64 {
    let a2 = a * a;
    let a4 = a2 * a2;
    3.0 / r + a4 / (r * r * r * r * r)
}

/// Squared radial diffusion coefficient `2 g^(rr) = 2 (1-(a/r)^4)`.
pub fn eh_radial_variance_rate(a: f64, r: f64) -> f64 {
    2.0 * (1.0 - q_ratio(a, r))
}

/// Arc length of the radial ray from the bolt to radius `r`:
/// integral of `(1-(a/s)^4)^(-1/2)` over `[a, r]`. The endpoint singularity
/// is removed by the substitution `s = a + u^2`.
pub fn eh_radial_arclength(a: f64, r: f64) -> Result<f64> {
    if !(a > 0.0) || r < a {
        return Err(Error::Domain(format!("need 0 < a <= r, got a={a}, r={r}")));
    }
    if r == a {
        return Ok(0.0);
    }
    let upper = (r - a).sqrt();
    // with s = a + u^2 the integrand 2u (1-(a/s)^4)^(-1/2) simplifies to
    // 2 s^2 ((s+a)(s^2+a^2))^(-1/2), finite down to the bolt
    let val = quad::integrate(
        |u| {
            let s = a + u * u;
            2.0 * s * s / ((s + a) * (s * s + a * a)).sqrt()
        },
        0.0,
        upper,
        crate::defaults::DEFAULTS.quad_tol,
    );
    Ok(val)
}

/// Inverse of [`eh_radial_arclength`] in `r`, by safeguarded Newton.
pub fn eh_radial_from_arclength(a: f64, ell: f64) -> Result<f64> {
    if !(a > 0.0) || ell < 0.0 {
        return Err(Error::Domain(format!("need a > 0, ell >= 0, got a={a}, ell={ell}")));
    }
    if ell == 0.0 {
        return Ok(a);
    }
    // ell(r) >= r - a, and ell(r) <= sqrt(r^2 - a^2), so bracket accordingly.
    let mut lo = (a * a + ell * ell).sqrt();
    let mut hi = a + ell;
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = eh_radial_arclength(a, r)? - ell;
        if f.abs() < 1e-12 * (1.0 + ell) {
            return Ok(r);
        }
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        // the bracket can bottom out on float granularity before the
        // residual does (d ell/dr diverges at the bolt)
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(0.5 * (lo + hi));
        }
        let deriv = 1.0 / (1.0 - q_ratio(a, r)).sqrt();
        let newton = r - f / deriv;
        r = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(r)
}

fn check_point(m: &ManifoldSpec, p: &Point) -> Result<()> {
    if p.manifold != *m {
        return Err(Error::Domain(format!(
            "point belongs to {} but the query targets {}",
            p.manifold, m
        )));
    }
    Ok(())
}

fn flat_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Geodesic distance. Euclidean pairs are exact; Eguchi-Hanson pairs are
/// supported when both points sit on a common radial ray (equal angular
/// coordinates, or either point on the bolt where the fiber angle is
/// ignorable), combining radial arc length and the flat factor in quadrature.
pub fn distance(m: &ManifoldSpec, p: &Point, q: &Point) -> Result<f64> {
    check_point(m, p)?;
    check_point(m, q)?;
    match *m {
        ManifoldSpec::Euclidean { .. } => Ok(flat_distance(&p.coords, &q.coords)),
        ManifoldSpec::EguchiHansonProduct { bolt_scale: a, .. } => {
            let same_base = (p.coords[1] - q.coords[1]).abs() <= ANGULAR_EQ_TOL
                && (p.coords[2] - q.coords[2]).abs() <= ANGULAR_EQ_TOL;
            let fiber_ok = (p.coords[3] - q.coords[3]).abs() <= ANGULAR_EQ_TOL
                || p.on_bolt()
                || q.on_bolt();
            if !(same_base && fiber_ok) {
                return Err(Error::UnsupportedGeometry(
                    "pairwise distance requires a common radial ray on the curved factor".into(),
                ));
            }
            let dl = (eh_radial_arclength(a, p.coords[0])? - eh_radial_arclength(a, q.coords[0])?)
                .abs();
            let dy = flat_distance(p.flat_part(), q.flat_part());
            Ok((dl * dl + dy * dy).sqrt())
        }
    }
}

/// Position of the Eguchi-Hanson part in the asymptotic chart of R^4 / Z_2
/// (one of the two lifts).
pub(crate) fn eh_ale_lift(p: &Point) -> [f64; 4] {
    let r = p.coords[0];
    let th = p.coords[1];
    let ph = p.coords[2];
    let ps = p.coords[3];
    let (s_half, c_half) = (0.5 * th).sin_cos();
    let (s_p, c_p) = (0.5 * (ps + ph)).sin_cos();
    let (s_m, c_m) = (0.5 * (ps - ph)).sin_cos();
    [r * c_half * c_p, r * c_half * s_p, r * s_half * c_m, r * s_half * s_m]
}

/// Distance in the asymptotic flat chart, valid far from the bolt where the
/// metric deviates from flat by O((a/r)^4). Both radial coordinates must be
/// at least `5 a`; tighter queries are rejected rather than approximated.
pub fn ale_chart_distance(m: &ManifoldSpec, p: &Point, q: &Point) -> Result<f64> {
    check_point(m, p)?;
    check_point(m, q)?;
    let a = m
        .bolt_scale()
        .ok_or_else(|| Error::UnsupportedGeometry("asymptotic chart needs the curved family".into()))?;
    let (rp, rq) = (p.coords[0], q.coords[0]);
    if rp < 5.0 * a || rq < 5.0 * a {
        return Err(Error::UnsupportedGeometry(format!(
            "asymptotic chart distance needs r >= 5a on both sides, got r={rp}, r={rq}"
        )));
    }
    let u = eh_ale_lift(p);
    let v = eh_ale_lift(q);
    let dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2] + u[3] * v[3]).abs();
    let d4_sq = (rp * rp + rq * rq - 2.0 * dot).max(0.0);
    let dy = flat_distance(p.flat_part(), q.flat_part());
    Ok((d4_sq + dy * dy).sqrt())
}

/// Region descriptions used as hitting targets and capacity supports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SetSpec {
    Ball { center: Vec<f64>, radius: f64 },
    SphereShell { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, r_in: f64, r_out: f64 },
    FiniteUnion(Vec<SetSpec>),
    /// `{ r <= r_star }` on the Eguchi-Hanson factor, full flat factor.
    BoltSublevel { r_star: f64 },
    /// Product of a curved-factor set with an axis-aligned slab
    /// `{ |y_i - c_i| <= h_i }` in the flat factor.
    Product { base: Box<SetSpec>, center: Vec<f64>, half_widths: Vec<f64> },
}

impl SetSpec {
    pub fn validate(&self, m: &ManifoldSpec) -> Result<()> {
        match self {
            SetSpec::Ball { center, radius } | SetSpec::SphereShell { center, radius } => {
                if !m.is_euclidean() {
                    return Err(Error::UnsupportedGeometry(
                        "center-based sets need the flat family".into(),
                    ));
                }
                if center.len() != m.dim() {
                    return Err(Error::DimensionMismatch { expected: m.dim(), got: center.len() });
                }
                if !(*radius > 0.0) {
                    return Err(Error::Domain("radius must be positive".into()));
                }
                Ok(())
            }
            SetSpec::Annulus { center, r_in, r_out } => {
                if !m.is_euclidean() {
                    return Err(Error::UnsupportedGeometry(
                        "center-based sets need the flat family".into(),
                    ));
                }
                if center.len() != m.dim() {
                    return Err(Error::DimensionMismatch { expected: m.dim(), got: center.len() });
                }
                if !(0.0 < *r_in && r_in < r_out) {
                    return Err(Error::Domain("need 0 < r_in < r_out".into()));
                }
                Ok(())
            }
            SetSpec::FiniteUnion(members) => {
                if members.is_empty() {
                    return Err(Error::Domain("union of nothing".into()));
                }
                members.iter().try_for_each(|s| s.validate(m))
            }
            SetSpec::BoltSublevel { r_star } => {
                let a = m.bolt_scale().ok_or_else(|| {
                    Error::UnsupportedGeometry("bolt sublevel needs the curved family".into())
                })?;
                if *r_star < a {
                    return Err(Error::Domain(format!(
                        "sublevel radius {r_star} below bolt scale {a}"
                    )));
                }
                Ok(())
            }
            SetSpec::Product { base, center, half_widths } => {
                if m.is_euclidean() {
                    return Err(Error::UnsupportedGeometry(
                        "product sets describe curved-times-flat splits".into(),
                    ));
                }
                if center.len() != m.flat_dim() || half_widths.len() != m.flat_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: m.flat_dim(),
                        got: center.len().max(half_widths.len()),
                    });
                }
                if half_widths.iter().any(|h| !(*h >= 0.0)) {
                    return Err(Error::Domain("slab half widths must be nonnegative".into()));
                }
                base.validate(m)
            }
        }
    }

    /// Distance from `p` to the set (zero on the set).
    pub fn distance_to(&self, m: &ManifoldSpec, p: &Point) -> Result<f64> {
        match self {
            SetSpec::SphereShell { center, radius } => {
                let d = flat_distance(&p.coords, center);
                Ok((d - radius).abs())
            }
            SetSpec::FiniteUnion(members) => {
                let mut best = f64::INFINITY;
                for s in members {
                    best = best.min(s.distance_to(m, p)?);
                }
                Ok(best)
            }
            _ => Ok(self.signed_level(m, p)?.max(0.0)),
        }
    }

    /// Signed barrier value: negative inside the body, positive outside,
    /// scaled as a true distance near the boundary. For shells the value is
    /// the signed offset from the shell, so hitting means a zero crossing.
    pub fn signed_level(&self, m: &ManifoldSpec, p: &Point) -> Result<f64> {
        match self {
            SetSpec::Ball { center, radius } | SetSpec::SphereShell { center, radius } => {
                Ok(flat_distance(&p.coords, center) - radius)
            }
            SetSpec::Annulus { center, r_in, r_out } => {
                let d = flat_distance(&p.coords, center);
                Ok((r_in - d).max(d - r_out))
            }
            SetSpec::FiniteUnion(members) => {
                let mut best = f64::INFINITY;
                for s in members {
                    best = best.min(s.signed_level(m, p)?);
                }
                Ok(best)
            }
            SetSpec::BoltSublevel { r_star } => {
                let a = m.bolt_scale().ok_or_else(|| {
                    Error::UnsupportedGeometry("bolt sublevel needs the curved family".into())
                })?;
                let r = p.coords[0];
                Ok(eh_radial_arclength(a, r)? - eh_radial_arclength(a, *r_star)?)
            }
            SetSpec::Product { base, center, half_widths } => {
                let lb = base.signed_level(m, p)?;
                let y = p.flat_part();
                let mut ls = f64::NEG_INFINITY;
                let mut out_sq = 0.0;
                for ((yi, ci), hi) in y.iter().zip(center).zip(half_widths) {
                    let gap = (yi - ci).abs() - hi;
                    ls = ls.max(gap);
                    out_sq += gap.max(0.0).powi(2);
                }
                let out = (lb.max(0.0).powi(2) + out_sq).sqrt();
                Ok(if lb > 0.0 || ls > 0.0 { out } else { lb.max(ls) })
            }
        }
    }

    /// Upper bound for the diameter of the set together with `x0`.
    /// Exact for single balls, shells, and annuli; for unions it uses the
    /// triangle inequality through member centers.
    pub fn diameter_with_point(&self, m: &ManifoldSpec, x0: &Point) -> Result<f64> {
        fn reach(set: &SetSpec, m: &ManifoldSpec, p: &Point) -> Result<f64> {
            // sup distance from p to the set
            match set {
                SetSpec::Ball { center, radius } | SetSpec::SphereShell { center, radius } => {
                    Ok(flat_distance(&p.coords, center) + radius)
                }
                SetSpec::Annulus { center, r_out, .. } => {
                    Ok(flat_distance(&p.coords, center) + r_out)
                }
                SetSpec::FiniteUnion(members) => {
                    let mut worst: f64 = 0.0;
                    for s in members {
                        worst = worst.max(reach(s, m, p)?);
                    }
                    Ok(worst)
                }
                SetSpec::BoltSublevel { r_star } => {
                    let a = m.bolt_scale().unwrap();
                    let width = eh_radial_arclength(a, *r_star)?
                        + std::f64::consts::PI * a / 2.0;
                    Ok(set.distance_to(m, p)? + 2.0 * width)
                }
                SetSpec::Product { .. } => Err(Error::UnsupportedGeometry(
                    "no diameter bound for product sets; pass one explicitly".into(),
                )),
            }
        }
        let r0 = reach(self, m, x0)?;
        match self {
            SetSpec::FiniteUnion(members) => {
                // diam(A) <= max over members of (reach from any fixed anchor),
                // anchored at each member's farthest point from x0 via centers.
                let mut diam: f64 = 0.0;
                for s in members {
                    for t in members {
                        let (cs, rs) = anchor(s, m)?;
                        let (ct, rt) = anchor(t, m)?;
                        diam = diam.max(flat_distance(&cs, &ct) + rs + rt);
                    }
                }
                Ok(diam.max(r0))
            }
            _ => {
                let own = match self {
                    SetSpec::Ball { radius, .. } | SetSpec::SphereShell { radius, .. } => {
                        2.0 * radius
                    }
                    SetSpec::Annulus { r_out, .. } => 2.0 * r_out,
                    SetSpec::BoltSublevel { r_star } => {
                        let a = m.bolt_scale().unwrap();
                        2.0 * eh_radial_arclength(a, *r_star)? + std::f64::consts::PI * a
                    }
                    _ => unreachable!(),
                };
                Ok(own.max(r0))
            }
        }
    }
}

fn anchor(set: &SetSpec, _m: &ManifoldSpec) -> Result<(Vec<f64>, f64)> {
    match set {
        SetSpec::Ball { center, radius } | SetSpec::SphereShell { center, radius } => {
            Ok((center.clone(), *radius))
        }
        SetSpec::Annulus { center, r_out, .. } => Ok((center.clone(), *r_out)),
        _ => Err(Error::UnsupportedGeometry(
            "diameter bound for unions needs center-based members".into(),
        )),
    }
}

impl fmt::Display for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetSpec::Ball { center, radius } => {
                write!(f, "ball:c={},r={}", fmt_vec(center), radius)
            }
            SetSpec::SphereShell { center, radius } => {
                write!(f, "sphere:c={},r={}", fmt_vec(center), radius)
            }
            SetSpec::Annulus { center, r_in, r_out } => {
                write!(f, "annulus:c={},rin={},rout={}", fmt_vec(center), r_in, r_out)
            }
            SetSpec::FiniteUnion(members) => {
                write!(f, "union:")?;
                for (i, s) in members.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "[{s}]")?;
                }
                Ok(())
            }
            SetSpec::BoltSublevel { r_star } => write!(f, "bolt-sublevel:rstar={r_star}"),
            SetSpec::Product { base, center, half_widths } => write!(
                f,
                "product:[{}],c={},h={}",
                base,
                fmt_vec(center),
                fmt_vec(half_widths)
            ),
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let mut s = String::from("(");
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{x}"));
    }
    s.push(')');
    s
}

impl FromStr for SetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("set spec `{s}` lacks `shape:params`")))?;
        match head {
            "ball" | "sphere" => {
                let kv = parse_kv(rest)?;
                let center = kv_vec(&kv, "c", s)?;
                let radius = kv_f64(&kv, "r", s)?;
                require_keys(&kv, &["c", "r"], s)?;
                Ok(if head == "ball" {
                    SetSpec::Ball { center, radius }
                } else {
                    SetSpec::SphereShell { center, radius }
                })
            }
            "annulus" => {
                let kv = parse_kv(rest)?;
                let center = kv_vec(&kv, "c", s)?;
                let r_in = kv_f64(&kv, "rin", s)?;
                let r_out = kv_f64(&kv, "rout", s)?;
                require_keys(&kv, &["c", "rin", "rout"], s)?;
                Ok(SetSpec::Annulus { center, r_in, r_out })
            }
            "union" => {
                let mut members = Vec::new();
                for part in rest.split(';') {
                    let inner = part
                        .strip_prefix('[')
                        .and_then(|p| p.strip_suffix(']'))
                        .ok_or_else(|| {
                            Error::Config(format!("union member `{part}` must be bracketed"))
                        })?;
                    members.push(SetSpec::from_str(inner)?);
                }
                Ok(SetSpec::FiniteUnion(members))
            }
            "bolt-sublevel" => {
                let kv = parse_kv(rest)?;
                let r_star = kv_f64(&kv, "rstar", s)?;
                require_keys(&kv, &["rstar"], s)?;
                Ok(SetSpec::BoltSublevel { r_star })
            }
            "product" => {
                let close = rest.rfind(']').ok_or_else(|| {
                    Error::Config(format!("product spec `{s}` lacks a bracketed base"))
                })?;
                let base_str = rest
                    .strip_prefix('[')
                    .map(|r| &r[..close - 1])
                    .ok_or_else(|| Error::Config(format!("product spec `{s}` must start with [")))?;
                let tail = rest[close + 1..].trim_start_matches(',');
                let kv = parse_kv(tail)?;
                let center = kv_vec(&kv, "c", s)?;
                let half_widths = kv_vec(&kv, "h", s)?;
                require_keys(&kv, &["c", "h"], s)?;
                Ok(SetSpec::Product {
                    base: Box::new(SetSpec::from_str(base_str)?),
                    center,
                    half_widths,
                })
            }
            other => Err(Error::Config(format!("unknown set shape `{other}`"))),
        }
    }
}

type KvList = Vec<(String, String)>;

/// Split `k=v,k=(v1,v2),...` respecting parentheses.
fn parse_kv(s: &str) -> Result<KvList> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut item = String::new();
    let push_item = |item: &mut String, out: &mut KvList| -> Result<()> {
        if item.is_empty() {
            return Ok(());
        }
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{item}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
        item.clear();
        Ok(())
    };
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                item.push(ch);
            }
            ')' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Config(format!("unbalanced parentheses in `{s}`")))?;
                item.push(ch);
            }
            ',' if depth == 0 => push_item(&mut item, &mut out)?,
            _ => item.push(ch),
        }
    }
    if depth != 0 {
        return Err(Error::Config(format!("unbalanced parentheses in `{s}`")));
    }
    push_item(&mut item, &mut out)?;
    Ok(out)
}

fn kv_get<'a>(kv: &'a KvList, key: &str, ctx: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Config(format!("`{ctx}` is missing key `{key}`")))
}

fn require_keys(kv: &KvList, allowed: &[&str], ctx: &str) -> Result<()> {
    for (k, _) in kv {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!("`{ctx}` has unknown key `{k}`")));
        }
    }
    Ok(())
}

fn kv_f64(kv: &KvList, key: &str, ctx: &str) -> Result<f64> {
    kv_get(kv, key, ctx)?
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}` in `{ctx}` is not a number")))
}

fn kv_usize(kv: &KvList, key: &str, ctx: &str) -> Result<usize> {
    kv_get(kv, key, ctx)?
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}` in `{ctx}` is not an integer")))
}

pub(crate) fn parse_vec(v: &str) -> Result<Vec<f64>> {
    let inner = v
        .strip_prefix('(')
        .and_then(|v| v.strip_suffix(')'))
        .ok_or_else(|| Error::Config(format!("vector `{v}` must be parenthesized")))?;
    inner
        .split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("vector entry `{x}` is not a number")))
        })
        .collect()
}

fn kv_vec(kv: &KvList, key: &str, ctx: &str) -> Result<Vec<f64>> {
    parse_vec(kv_get(kv, key, ctx)?)
}

/// Volume of the unit ball in R^n, by the half-integer recursion.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

/// Monte Carlo (or exact, where closed form exists) ball volume.
#[derive(Clone, Debug, Serialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// One standard error of the estimator; zero for closed forms.
    pub std_error: f64,
    pub samples: u64,
}

/// Volume of the ball of radius `radius` about `center`.
///
/// Euclidean volumes are closed form. On the Eguchi-Hanson product the ball
/// radius is measured in the asymptotic chart (it differs from the geodesic
/// radius by O(a) near the bolt): supported centers are points on the bolt
/// (any radius) and points with `radius < r - a` (locally flat regime).
/// The chart volume form equals the flat one, so the estimator samples the
/// flat ball and clips at the bolt, halving apex-centered volumes for the
/// Z_2 identification.
pub fn ball_volume(
    m: &ManifoldSpec,
    center: &Point,
    radius: f64,
    samples: u64,
    seed: u64,
) -> Result<VolumeEstimate> {
    check_point(m, center)?;
    if !(radius > 0.0) {
        return Err(Error::Domain("ball radius must be positive".into()));
    }
    let n = m.dim();
    let full = unit_ball_volume(n) * radius.powi(n as i32);
    match *m {
        ManifoldSpec::Euclidean { .. } => Ok(VolumeEstimate {
            value: full,
            std_error: 0.0,
            samples: 0,
        }),
        ManifoldSpec::EguchiHansonProduct { bolt_scale: a, .. } => {
            let r0 = center.coords[0];
            let apex = center.on_bolt();
            if !apex && radius >= r0 - a {
                return Err(Error::UnsupportedGeometry(format!(
                    "ball of radius {radius} at r={r0} reaches the bolt region; \
                     supported centers are bolt points or radius < r - a"
                )));
            }
            if samples == 0 {
                return Err(Error::Domain("need at least one sample".into()));
            }
            let center4 = if apex { [0.0; 4] } else { eh_ale_lift(center) };
            let y0 = center.flat_part();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut inside = 0u64;
            let mut g = vec![0.0f64; n];
            for _ in 0..samples {
                let mut norm_sq = 0.0;
                for gi in g.iter_mut() {
                    *gi = StandardNormal.sample(&mut rng);
                    norm_sq += *gi * *gi;
                }
                let u: f64 = rand::Rng::random(&mut rng);
                let scale = radius * u.powf(1.0 / n as f64) / norm_sq.sqrt();
                let mut rsq = 0.0;
                for (i, c) in center4.iter().enumerate() {
                    let x = c + scale * g[i];
                    rsq += x * x;
                }
                // flat factor offset irrelevant for the r >= a clip
                let _ = y0;
                if rsq >= a * a {
                    inside += 1;
                }
            }
            let frac = inside as f64 / samples as f64;
            let quotient = if apex { 0.5 } else { 1.0 };
            let value = full * frac * quotient;
            let se = full * quotient * (frac * (1.0 - frac) / samples as f64).sqrt();
            Ok(VolumeEstimate { value, std_error: se, samples })
        }
    }
}

/// Radius `r*` such that `{ r <= r* }` collects the points of curvature
/// scale at most `eps`: `r* = max(a, (a^4 eps^2)^(1/6))`, from the
/// `|Rm| ~ a^4 / r^6` decay of the curvature norm. The scale cap pins
/// `eps <= 1`; larger thresholds would sweep in the whole space.
pub fn bolt_sublevel_for_epsilon(a: f64, eps: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("bolt scale must be positive, got {a}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if eps > 1.0 {
        return Err(Error::Domain(format!("eps must not exceed the scale cap 1, got {eps}")));
    }
    Ok(a.max((a.powi(4) * eps * eps).powf(1.0 / 6.0)))
}
