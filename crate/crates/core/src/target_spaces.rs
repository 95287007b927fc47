//! Non-positively curved target spaces.
//!
//! Four kinds are supported: Euclidean space, the hyperbolic plane (upper
//! half-plane model), the symmetric space of determinant-one positive-definite
//! matrices, and k-pod trees. Everything dispatches on [`NpcSpace`].
//!
//! The matrix metric is `g_h(X, Y) = (n/2) tr(h⁻¹ X h⁻¹ Y)`. Note the `n/2`:
//! distances are `sqrt(n/2)` times the usual affine-invariant distance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};

/// Tolerance on the determinant and self-adjointness of matrix points.
pub const SPD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NpcSpace {
    Euclidean { dim: usize },
    HyperbolicPlane,
    Spd { n: usize, field: Field },
    Pod { k: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Euclidean(DVector<f64>),
    Hyperbolic { x: f64, y: f64 },
    Spd(CMat),
    Pod { ray: usize, radius: f64 },
}

/// Tangent vector payload; the base point is carried by [`Tangent`].
#[derive(Clone, Debug, PartialEq)]
pub enum TangentVec {
    Euclidean(DVector<f64>),
    /// Coordinate components `(dx, dy)` in the half-plane chart.
    Hyperbolic([f64; 2]),
    /// Self-adjoint matrix.
    Spd(CMat),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub base: Point,
    pub vec: TangentVec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Isometry {
    /// `p ↦ O p + t`.
    Euclidean {
        orthogonal: DMatrix<f64>,
        translation: DVector<f64>,
    },
    /// `z ↦ (az + b)/(cz + d)` with `ad − bc = 1`.
    Mobius(Matrix2<f64>),
    /// `h ↦ g⁻¹* h g⁻¹`.
    Spd(CMat),
    /// Ray `r` goes to ray `perm[r]`.
    Pod(Vec<usize>),
}

impl Point {
    pub fn pod(ray: usize, radius: f64) -> Self {
        if radius == 0.0 {
            Point::Pod { ray: 0, radius: 0.0 }
        } else {
            Point::Pod { ray, radius }
        }
    }

    pub fn hyp(x: f64, y: f64) -> Self {
        Point::Hyperbolic { x, y }
    }

    pub fn euc(v: &[f64]) -> Self {
        Point::Euclidean(DVector::from_column_slice(v))
    }

    pub fn spd_real(m: &DMatrix<f64>) -> Self {
        Point::Spd(linalg::from_real(m))
    }

    pub fn as_spd(&self) -> Result<&CMat> {
        match self {
            Point::Spd(m) => Ok(m),
            _ => Err(Error::Usage("expected a matrix point".into())),
        }
    }
}

// ---------------------------------------------------------------------------
// Space description and parsing

impl NpcSpace {
    pub fn is_manifold(&self) -> bool {
        !matches!(self, NpcSpace::Pod { .. })
    }

    /// Check parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match *self {
            NpcSpace::Euclidean { dim } if dim == 0 => {
                Err(Error::Usage("euclidean dimension must be at least 1".into()))
            }
            NpcSpace::Spd { n, .. } if n < 2 => {
                Err(Error::Usage("matrix size must be at least 2".into()))
            }
            NpcSpace::Pod { k } if k < 3 => Err(Error::Usage("pod needs at least 3 rays".into())),
            _ => Ok(()),
        }
    }

    /// Validate that `p` is a point of this space.
    pub fn check_point(&self, p: &Point) -> Result<()> {
        match (self, p) {
            (NpcSpace::Euclidean { dim }, Point::Euclidean(v)) => {
                if v.len() != *dim {
                    return Err(Error::Usage(format!(
                        "vector of length {} in euc:{dim}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Domain("non-finite coordinate".into()));
                }
                Ok(())
            }
            (NpcSpace::HyperbolicPlane, Point::Hyperbolic { x, y }) => {
                if !x.is_finite() || !y.is_finite() || *y <= 0.0 {
                    return Err(Error::Domain(format!(
                        "({x}, {y}) is not in the upper half-plane"
                    )));
                }
                Ok(())
            }
            (NpcSpace::Spd { n, field }, Point::Spd(m)) => check_spd(*n, *field, m),
            (NpcSpace::Pod { k }, Point::Pod { ray, radius }) => {
                if *ray >= *k {
                    return Err(Error::Usage(format!("ray {ray} out of range for pod:{k}")));
                }
                if !radius.is_finite() || *radius < 0.0 {
                    return Err(Error::Domain(format!("negative pod radius {radius}")));
                }
                if *radius == 0.0 && *ray != 0 {
                    return Err(Error::Invariant("pod origin must use ray 0".into()));
                }
                Ok(())
            }
            _ => Err(Error::Usage(format!("point does not belong to {self}"))),
        }
    }

    pub fn check_isometry(&self, iso: &Isometry) -> Result<()> {
        match (self, iso) {
            (
                NpcSpace::Euclidean { dim },
                Isometry::Euclidean {
                    orthogonal,
                    translation,
                },
            ) => {
                if orthogonal.nrows() != *dim
                    || orthogonal.ncols() != *dim
                    || translation.len() != *dim
                {
                    return Err(Error::Usage("rigid motion has wrong dimension".into()));
                }
                let err = (orthogonal.transpose() * orthogonal - DMatrix::identity(*dim, *dim)).norm();
                if err > SPD_TOL {
                    return Err(Error::Domain(format!("matrix is not orthogonal (error {err:e})")));
                }
                Ok(())
            }
            (NpcSpace::HyperbolicPlane, Isometry::Mobius(m)) => {
                let d = m.determinant();
                if (d - 1.0).abs() > SPD_TOL {
                    return Err(Error::Domain(format!("Möbius matrix has determinant {d}")));
                }
                Ok(())
            }
            (NpcSpace::Spd { n, field }, Isometry::Spd(g)) => {
                if g.nrows() != *n || g.ncols() != *n {
                    return Err(Error::Usage("group element has wrong size".into()));
                }
                if *field == Field::Real && g.iter().any(|z| z.im.abs() > SPD_TOL) {
                    return Err(Error::Usage("complex entries in a real space".into()));
                }
                let d = linalg::det(g);
                if (d - c(1.0)).norm() > SPD_TOL {
                    return Err(Error::Domain(format!("group element has determinant {d}")));
                }
                Ok(())
            }
            (NpcSpace::Pod { k }, Isometry::Pod(perm)) => {
                let mut seen = vec![false; *k];
                if perm.len() != *k {
                    return Err(Error::Usage("permutation has wrong length".into()));
                }
                for &r in perm {
                    if r >= *k || seen[r] {
                        return Err(Error::Usage("not a permutation of rays".into()));
                    }
                    seen[r] = true;
                }
                Ok(())
            }
            _ => Err(Error::Usage(format!("isometry does not act on {self}"))),
        }
    }

    /// A distinguished point: origin, `i`, identity matrix or pod origin.
    pub fn basepoint(&self) -> Point {
        match *self {
            NpcSpace::Euclidean { dim } => Point::Euclidean(DVector::zeros(dim)),
            NpcSpace::HyperbolicPlane => Point::hyp(0.0, 1.0),
            NpcSpace::Spd { n, .. } => Point::Spd(linalg::identity(n)),
            NpcSpace::Pod { .. } => Point::pod(0, 0.0),
        }
    }

    pub fn identity_isometry(&self) -> Isometry {
        match *self {
            NpcSpace::Euclidean { dim } => Isometry::Euclidean {
                orthogonal: DMatrix::identity(dim, dim),
                translation: DVector::zeros(dim),
            },
            NpcSpace::HyperbolicPlane => Isometry::Mobius(Matrix2::identity()),
            NpcSpace::Spd { n, .. } => Isometry::Spd(linalg::identity(n)),
            NpcSpace::Pod { k } => Isometry::Pod((0..k).collect()),
        }
    }
}

fn check_spd(n: usize, field: Field, m: &CMat) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Usage(format!(
            "{}x{} matrix in a space of {n}x{n} matrices",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Domain("non-finite matrix entry".into()));
    }
    if field == Field::Real && m.iter().any(|z| z.im.abs() > SPD_TOL) {
        return Err(Error::Usage("complex entries in a real space".into()));
    }
    if !linalg::is_hermitian(m, SPD_TOL) {
        return Err(Error::Domain("matrix is not self-adjoint".into()));
    }
    linalg::pd_eigen(m)?;
    let d = linalg::det(m).re;
    if (d - 1.0).abs() > SPD_TOL * 1.0f64.max(m.norm().powi(n as i32)) {
        return Err(Error::Domain(format!("determinant {d} is not 1")));
    }
    Ok(())
}

impl fmt::Display for NpcSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NpcSpace::Euclidean { dim } => write!(f, "euc:{dim}"),
            NpcSpace::HyperbolicPlane => write!(f, "hyp"),
            NpcSpace::Spd { n, field: Field::Real } => write!(f, "spd:{n}"),
            NpcSpace::Spd {
                n,
                field: Field::Complex,
            } => write!(f, "spd:{n}:complex"),
            NpcSpace::Pod { k } => write!(f, "pod:{k}"),
        }
    }
}

impl FromStr for NpcSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| -> Result<usize> {
            t.parse::<usize>()
                .map_err(|_| Error::Usage(format!("bad number '{t}' in target spec '{s}'")))
        };
        let space = match parts.as_slice() {
            ["euc", d] => NpcSpace::Euclidean { dim: num(d)? },
            ["hyp"] => NpcSpace::HyperbolicPlane,
            ["spd", n] => NpcSpace::Spd {
                n: num(n)?,
                field: Field::Real,
            },
            ["spd", n, "complex"] => NpcSpace::Spd {
                n: num(n)?,
                field: Field::Complex,
            },
            ["spd", n, "real"] => NpcSpace::Spd {
                n: num(n)?,
                field: Field::Real,
            },
            ["pod", k] => NpcSpace::Pod { k: num(k)? },
            _ => return Err(Error::Usage(format!("unknown target spec '{s}'"))),
        };
        space.validate()?;
        Ok(space)
    }
}

// ---------------------------------------------------------------------------
// Metric geometry

fn same_space(space: &NpcSpace, pts: &[&Point]) -> Result<()> {
    for p in pts {
        space.check_point(p)?;
    }
    Ok(())
}

pub fn distance(space: &NpcSpace, p: &Point, q: &Point) -> Result<f64> {
    same_space(space, &[p, q])?;
    Ok(distance_unchecked(space, p, q)?)
}

/// Distance without validating membership. Still fails on indefinite input.
pub(crate) fn distance_unchecked(space: &NpcSpace, p: &Point, q: &Point) -> Result<f64> {
    match (p, q) {
        (Point::Euclidean(a), Point::Euclidean(b)) => Ok((a - b).norm()),
        (Point::Hyperbolic { x: x1, y: y1 }, Point::Hyperbolic { x: x2, y: y2 }) => {
            // sinh(d/2) = |Δ| / (2 sqrt(y1 y2)); stabler than arcosh near 0.
            let delta = ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
            Ok(2.0 * (delta / (2.0 * (y1 * y2).sqrt())).asinh())
        }
        (Point::Spd(h0), Point::Spd(h1)) => {
            let n = h0.nrows() as f64;
            let s = linalg::pd_inv_sqrt(h0)?;
            let (vals, _) = linalg::pd_eigen(&(&s * h1 * &s))?;
            let sq: f64 = vals.iter().map(|v| v.ln().powi(2)).sum();
            Ok((0.5 * n * sq).sqrt())
        }
        (Point::Pod { ray: r1, radius: a }, Point::Pod { ray: r2, radius: b }) => {
            if r1 == r2 || *a == 0.0 || *b == 0.0 {
                Ok((a - b).abs())
            } else {
                Ok(a + b)
            }
        }
        _ => Err(Error::Usage(format!("points do not belong to {space}"))),
    }
}

pub fn interpolate(space: &NpcSpace, p: &Point, q: &Point, t: f64) -> Result<Point> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Usage(format!("interpolation parameter {t} outside [0, 1]")));
    }
    same_space(space, &[p, q])?;
    interpolate_unchecked(space, p, q, t)
}

pub(crate) fn interpolate_unchecked(space: &NpcSpace, p: &Point, q: &Point, t: f64) -> Result<Point> {
    if t == 0.0 {
        return Ok(p.clone());
    }
    if t == 1.0 {
        return Ok(q.clone());
    }
    match (p, q) {
        (Point::Euclidean(a), Point::Euclidean(b)) => Ok(Point::Euclidean(a * (1.0 - t) + b * t)),
        (Point::Hyperbolic { .. }, Point::Hyperbolic { .. }) => {
            let v = hyp_log(p, q);
            Ok(hyp_exp(p, [v[0] * t, v[1] * t]))
        }
        (Point::Spd(h0), Point::Spd(h1)) => {
            let s = linalg::pd_sqrt(h0)?;
            let si = linalg::pd_inv_sqrt(h0)?;
            let inner = linalg::pd_pow(&(&si * h1 * &si), t)?;
            Ok(Point::Spd(linalg::normalize_unimodular(&(&s * inner * &s))))
        }
        (Point::Pod { ray: r1, radius: a }, Point::Pod { ray: r2, radius: b }) => {
            if r1 == r2 || *a == 0.0 || *b == 0.0 {
                let ray = if *a == 0.0 { *r2 } else { *r1 };
                Ok(Point::pod(ray, (1.0 - t) * a + t * b))
            } else {
                // Signed coordinate along the path: positive on p's ray.
                let s = (1.0 - t) * a - t * b;
                if s >= 0.0 {
                    Ok(Point::pod(*r1, s))
                } else {
                    Ok(Point::pod(*r2, -s))
                }
            }
        }
        _ => Err(Error::Usage(format!("points do not belong to {space}"))),
    }
}

// Half-plane exponential and logarithm. The base is moved to i by
// z ↦ (z − x)/y, then the Cayley map sends i to the disk centre.
fn hyp_exp(base: &Point, v: [f64; 2]) -> Point {
    let Point::Hyperbolic { x, y } = *base else {
        unreachable!()
    };
    let u = Complex64::new(v[0] / y, v[1] / y);
    let s = u.norm();
    if s == 0.0 {
        return base.clone();
    }
    let i = Complex64::i();
    let w = (-i * u / s) * (s / 2.0).tanh();
    let z = i * (1.0 + w) / (1.0 - w);
    Point::hyp(x + y * z.re, y * z.im)
}

fn hyp_log(base: &Point, q: &Point) -> [f64; 2] {
    let (Point::Hyperbolic { x, y }, Point::Hyperbolic { x: qx, y: qy }) = (base, q) else {
        unreachable!()
    };
    let i = Complex64::i();
    let z = Complex64::new((qx - x) / y, qy / y);
    let w = (z - i) / (z + i);
    let r = w.norm();
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let s = 2.0 * r.min(1.0 - 1e-16).atanh();
    let u = i * w / r * s;
    [u.re * y, u.im * y]
}

pub fn log_map(space: &NpcSpace, base: &Point, p: &Point) -> Result<Tangent> {
    same_space(space, &[base, p])?;
    log_unchecked(space, base, p)
}

pub(crate) fn log_unchecked(space: &NpcSpace, base: &Point, p: &Point) -> Result<Tangent> {
    let vec = match (base, p) {
        (Point::Euclidean(a), Point::Euclidean(b)) => TangentVec::Euclidean(b - a),
        (Point::Hyperbolic { .. }, Point::Hyperbolic { .. }) => TangentVec::Hyperbolic(hyp_log(base, p)),
        (Point::Spd(q), Point::Spd(h)) => {
            let s = linalg::pd_sqrt(q)?;
            let si = linalg::pd_inv_sqrt(q)?;
            let l = linalg::pd_log(&(&si * h * &si))?;
            TangentVec::Spd(linalg::hermitian_part(&(&s * l * &s)))
        }
        (Point::Pod { .. }, Point::Pod { .. }) => {
            return Err(Error::Unsupported("log map on a pod tree".into()))
        }
        _ => return Err(Error::Usage(format!("points do not belong to {space}"))),
    };
    Ok(Tangent {
        base: base.clone(),
        vec,
    })
}

pub fn exp_map(space: &NpcSpace, v: &Tangent) -> Result<Point> {
    space.check_point(&v.base)?;
    exp_unchecked(space, v)
}

pub(crate) fn exp_unchecked(space: &NpcSpace, v: &Tangent) -> Result<Point> {
    match (&v.base, &v.vec) {
        (Point::Euclidean(a), TangentVec::Euclidean(x)) => Ok(Point::Euclidean(a + x)),
        (Point::Hyperbolic { .. }, TangentVec::Hyperbolic(x)) => Ok(hyp_exp(&v.base, *x)),
        (Point::Spd(q), TangentVec::Spd(x)) => {
            let s = linalg::pd_sqrt(q)?;
            let si = linalg::pd_inv_sqrt(q)?;
            let e = linalg::herm_exp(&(&si * x * &si));
            Ok(Point::Spd(linalg::normalize_unimodular(&(&s * e * &s))))
        }
        (Point::Pod { .. }, _) => Err(Error::Unsupported("exp map on a pod tree".into())),
        _ => Err(Error::Usage(format!("tangent vector does not belong to {space}"))),
    }
}

/// Riemannian inner product of two tangent vectors at the same base.
pub fn tangent_inner(space: &NpcSpace, a: &Tangent, b: &TangentVec) -> Result<f64> {
    match (&a.base, &a.vec, b) {
        (Point::Euclidean(_), TangentVec::Euclidean(x), TangentVec::Euclidean(y)) => Ok(x.dot(y)),
        (Point::Hyperbolic { y, .. }, TangentVec::Hyperbolic(u), TangentVec::Hyperbolic(v)) => {
            Ok((u[0] * v[0] + u[1] * v[1]) / (y * y))
        }
        (Point::Spd(h), TangentVec::Spd(x), TangentVec::Spd(y)) => {
            let hi = linalg::inverse(h)?;
            Ok(spd_metric(&hi, x, y))
        }
        _ => Err(Error::Usage(format!("tangent vectors do not belong to {space}"))),
    }
}

/// `(n/2) Re tr(h⁻¹ X h⁻¹ Y)`, given `h⁻¹`.
pub fn spd_metric(h_inv: &CMat, x: &CMat, y: &CMat) -> f64 {
    let n = h_inv.nrows() as f64;
    0.5 * n * linalg::trace(&(h_inv * x * h_inv * y)).re
}

pub fn tangent_norm(space: &NpcSpace, v: &Tangent) -> Result<f64> {
    Ok(tangent_inner(space, v, &v.vec)?.max(0.0).sqrt())
}

impl TangentVec {
    pub fn zero_like(&self) -> TangentVec {
        match self {
            TangentVec::Euclidean(v) => TangentVec::Euclidean(DVector::zeros(v.len())),
            TangentVec::Hyperbolic(_) => TangentVec::Hyperbolic([0.0, 0.0]),
            TangentVec::Spd(m) => TangentVec::Spd(CMat::zeros(m.nrows(), m.ncols())),
        }
    }

    /// `self += w * other`. Both must be of the same kind.
    pub fn axpy(&mut self, w: f64, other: &TangentVec) {
        match (self, other) {
            (TangentVec::Euclidean(a), TangentVec::Euclidean(b)) => *a += b * w,
            (TangentVec::Hyperbolic(a), TangentVec::Hyperbolic(b)) => {
                a[0] += w * b[0];
                a[1] += w * b[1];
            }
            (TangentVec::Spd(a), TangentVec::Spd(b)) => *a += b.map(|z| z * w),
            _ => panic!("tangent kinds differ"),
        }
    }

    pub fn scaled(&self, s: f64) -> TangentVec {
        let mut out = self.zero_like();
        out.axpy(s, self);
        out
    }
}

// ---------------------------------------------------------------------------
// Isometries

pub fn isometry_apply(space: &NpcSpace, iso: &Isometry, p: &Point) -> Result<Point> {
    space.check_isometry(iso)?;
    space.check_point(p)?;
    apply_unchecked(iso, p)
}

pub(crate) fn apply_unchecked(iso: &Isometry, p: &Point) -> Result<Point> {
    match (iso, p) {
        (
            Isometry::Euclidean {
                orthogonal,
                translation,
            },
            Point::Euclidean(v),
        ) => Ok(Point::Euclidean(orthogonal * v + translation)),
        (Isometry::Mobius(m), Point::Hyperbolic { x, y }) => {
            let z = Complex64::new(*x, *y);
            let w = (z * m[(0, 0)] + m[(0, 1)]) / (z * m[(1, 0)] + m[(1, 1)]);
            Ok(Point::hyp(w.re, w.im.abs()))
        }
        (Isometry::Spd(g), Point::Spd(h)) => {
            let gi = linalg::inverse(g)?;
            Ok(Point::Spd(linalg::hermitian_part(&(gi.adjoint() * h * &gi))))
        }
        (Isometry::Pod(perm), Point::Pod { ray, radius }) => {
            if *radius == 0.0 {
                Ok(p.clone())
            } else {
                Ok(Point::pod(perm[*ray], *radius))
            }
        }
        _ => Err(Error::Usage("isometry and point belong to different spaces".into())),
    }
}

/// `a ∘ b`: apply `b` first.
pub fn compose(a: &Isometry, b: &Isometry) -> Result<Isometry> {
    match (a, b) {
        (
            Isometry::Euclidean {
                orthogonal: o1,
                translation: t1,
            },
            Isometry::Euclidean {
                orthogonal: o2,
                translation: t2,
            },
        ) => Ok(Isometry::Euclidean {
            orthogonal: o1 * o2,
            translation: o1 * t2 + t1,
        }),
        (Isometry::Mobius(m1), Isometry::Mobius(m2)) => Ok(Isometry::Mobius(m1 * m2)),
        (Isometry::Spd(g1), Isometry::Spd(g2)) => Ok(Isometry::Spd(g1 * g2)),
        (Isometry::Pod(p1), Isometry::Pod(p2)) => Ok(Isometry::Pod(p2.iter().map(|&r| p1[r]).collect())),
        _ => Err(Error::Usage("cannot compose isometries of different spaces".into())),
    }
}

pub fn inverse(iso: &Isometry) -> Result<Isometry> {
    match iso {
        Isometry::Euclidean {
            orthogonal,
            translation,
        } => {
            let ot = orthogonal.transpose();
            let t = -(&ot * translation);
            Ok(Isometry::Euclidean {
                orthogonal: ot,
                translation: t,
            })
        }
        Isometry::Mobius(m) => Ok(Isometry::Mobius(Matrix2::new(
            m[(1, 1)],
            -m[(0, 1)],
            -m[(1, 0)],
            m[(0, 0)],
        ))),
        Isometry::Spd(g) => Ok(Isometry::Spd(linalg::inverse(g)?)),
        Isometry::Pod(perm) => {
            let mut inv = vec![0; perm.len()];
            for (i, &r) in perm.iter().enumerate() {
                inv[r] = i;
            }
            Ok(Isometry::Pod(inv))
        }
    }
}

/// `2 arcosh(|tr g| / 2)` for a hyperbolic Möbius matrix, 0 otherwise.
pub fn mobius_translation_length(m: &Matrix2<f64>) -> f64 {
    let t = m.trace().abs() / 2.0;
    if t <= 1.0 {
        0.0
    } else {
        2.0 * t.acosh()
    }
}

// ---------------------------------------------------------------------------
// Comparison inequalities

/// Residual `RHS − LHS` of the triangle comparison inequality, with `Q_t` on `[Q, R]`.
pub fn check_triangle_comparison(space: &NpcSpace, p: &Point, q: &Point, r: &Point, t: f64) -> Result<f64> {
    let qt = interpolate(space, q, r, t)?;
    let d = |a: &Point, b: &Point| distance_unchecked(space, a, b);
    let rhs = (1.0 - t) * d(p, q)?.powi(2) + t * d(p, r)?.powi(2) - t * (1.0 - t) * d(q, r)?.powi(2);
    Ok(rhs - d(p, &qt)?.powi(2))
}

/// Residuals `RHS − LHS` of the two quadrilateral inequalities for `PQRS`.
/// `P_t` lies on `[P, S]` and `Q_t` on `[Q, R]`.
pub fn check_quadrilateral(
    space: &NpcSpace,
    p: &Point,
    q: &Point,
    r: &Point,
    s: &Point,
    t: f64,
) -> Result<(f64, f64)> {
    let pt = interpolate(space, p, s, t)?;
    let qt = interpolate(space, q, r, t)?;
    let q1t = interpolate(space, q, r, 1.0 - t)?;
    let d = |a: &Point, b: &Point| distance_unchecked(space, a, b);
    let (dpq, drs, dsp, dqr) = (d(p, q)?, d(r, s)?, d(s, p)?, d(q, r)?);

    let men_rhs = (1.0 - t) * dpq * dpq + t * drs * drs - t * (1.0 - t) * (dsp - dqr).powi(2);
    let men = men_rhs - d(&pt, &qt)?.powi(2);

    // Sum of the triangle comparison at Q_t (from P) and Q_{1-t} (from S),
    // closed with the four-point bound d²PR + d²SQ − d²PQ − d²SR ≤ 2 d_SP d_QR.
    let aga_rhs = dpq * dpq + drs * drs - 2.0 * t * dqr * dqr + 2.0 * t * dsp * dqr + 2.0 * t * t * dqr * dqr;
    let aga = aga_rhs - d(&qt, p)?.powi(2) - d(&q1t, s)?.powi(2);
    Ok((men, aga))
}

// ---------------------------------------------------------------------------
// Sampling

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Random self-adjoint trace-free matrix with Frobenius norm `norm`.
pub fn random_traceless_hermitian<R: Rng + ?Sized>(n: usize, field: Field, norm: f64, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let im = if field == Field::Complex { gauss(rng) } else { 0.0 };
            m[(i, j)] = Complex64::new(gauss(rng), im);
        }
    }
    let mut h = linalg::hermitian_part(&m);
    let tr = linalg::trace(&h).re / n as f64;
    for i in 0..n {
        h[(i, i)] -= c(tr);
    }
    let f = h.norm();
    if f > 0.0 {
        h.scale_mut(norm / f);
    }
    h
}

/// Random point at "size" roughly `scale` from the basepoint.
pub fn random_point<R: Rng + ?Sized>(space: &NpcSpace, scale: f64, rng: &mut R) -> Point {
    match *space {
        NpcSpace::Euclidean { dim } => Point::Euclidean(DVector::from_fn(dim, |_, _| scale * gauss(rng))),
        NpcSpace::HyperbolicPlane => {
            let u: [f64; 2] = [scale * gauss(rng), scale * gauss(rng)];
            hyp_exp(&Point::hyp(0.0, 1.0), u)
        }
        NpcSpace::Spd { n, field } => {
            let norm = scale * rng.random::<f64>();
            let m = random_traceless_hermitian(n, field, norm, rng);
            Point::Spd(linalg::normalize_unimodular(&linalg::herm_exp(&m)))
        }
        NpcSpace::Pod { k } => Point::pod(rng.random_range(0..k), scale * rng.random::<f64>()),
    }
}

/// Random isometry of moderate size.
pub fn random_isometry<R: Rng + ?Sized>(space: &NpcSpace, scale: f64, rng: &mut R) -> Isometry {
    match *space {
        NpcSpace::Euclidean { dim } => {
            let g = DMatrix::from_fn(dim, dim, |_, _| gauss(rng));
            let q = g.qr().q();
            Isometry::Euclidean {
                orthogonal: q,
                translation: DVector::from_fn(dim, |_, _| scale * gauss(rng)),
            }
        }
        NpcSpace::HyperbolicPlane => {
            let m = Matrix2::from_fn(|_, _| scale * gauss(rng)).exp();
            let d = m.determinant();
            let m = if d < 0.0 {
                Matrix2::new(-m[(0, 0)], -m[(0, 1)], m[(1, 0)], m[(1, 1)])
            } else {
                m
            };
            Isometry::Mobius(m / m.determinant().sqrt())
        }
        NpcSpace::Spd { n, field } => {
            let mut x = CMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let im = if field == Field::Complex { gauss(rng) } else { 0.0 };
                    x[(i, j)] = Complex64::new(scale * gauss(rng), scale * im);
                }
            }
            let tr = linalg::trace(&x) / n as f64;
            for i in 0..n {
                x[(i, i)] -= tr;
            }
            let g = x.exp();
            // Remove the round-off in the determinant.
            let d = linalg::det(&g);
            let root = d.powf(1.0 / n as f64);
            let g = g.map(|z| z / root);
            let g = if field == Field::Real { g.map(|z| c(z.re)) } else { g };
            Isometry::Spd(g)
        }
        NpcSpace::Pod { k } => {
            let mut perm: Vec<usize> = (0..k).collect();
            for i in (1..k).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            Isometry::Pod(perm)
        }
    }
}

/// True when two points of the same space are within `tol` of each other.
pub fn approx_eq(space: &NpcSpace, p: &Point, q: &Point, tol: f64) -> bool {
    distance_unchecked(space, p, q).map(|d| d <= tol).unwrap_or(false)
}

// ---------------------------------------------------------------------------
// JSON

fn matrix_json(m: &CMat, field: Field) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|i| {
            Value::Array(
                (0..m.ncols())
                    .map(|j| {
                        let z = m[(i, j)];
                        match field {
                            Field::Real => json!(z.re),
                            Field::Complex => json!([z.re, z.im]),
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    Value::Array(rows)
}

fn matrix_from_json(v: &Value) -> Result<CMat> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::Parse("matrix payload must be an array of rows".into()))?;
    let n = rows.len();
    let mut m = CMat::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Parse("matrix row must be an array".into()))?;
        if row.len() != n {
            return Err(Error::Parse("matrix must be square".into()));
        }
        for (j, e) in row.iter().enumerate() {
            m[(i, j)] = complex_from_json(e)?;
        }
    }
    Ok(m)
}

fn complex_from_json(e: &Value) -> Result<Complex64> {
    if let Some(x) = e.as_f64() {
        return Ok(c(x));
    }
    match e.as_array().map(|a| a.as_slice()) {
        Some([re, im]) => match (re.as_f64(), im.as_f64()) {
            (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
            _ => Err(Error::Parse("complex entry must be [re, im]".into())),
        },
        _ => Err(Error::Parse("matrix entry must be a number or [re, im]".into())),
    }
}

fn f64s(v: &Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Parse("expected an array of numbers".into()))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| Error::Parse("expected a number".into())))
        .collect()
}

pub fn point_payload(space: &NpcSpace, p: &Point) -> Value {
    match (space, p) {
        (_, Point::Euclidean(v)) => json!(v.as_slice()),
        (_, Point::Hyperbolic { x, y }) => json!([x, y]),
        (NpcSpace::Spd { field, .. }, Point::Spd(m)) => matrix_json(m, *field),
        (_, Point::Spd(m)) => matrix_json(m, Field::Complex),
        (_, Point::Pod { ray, radius }) => json!([ray, radius]),
    }
}

pub fn point_to_json(space: &NpcSpace, p: &Point) -> Value {
    json!({"space": space.to_string(), "payload": point_payload(space, p)})
}

pub fn point_from_payload(space: &NpcSpace, v: &Value) -> Result<Point> {
    let p = match space {
        NpcSpace::Euclidean { .. } => Point::Euclidean(DVector::from_vec(f64s(v)?)),
        NpcSpace::HyperbolicPlane => match f64s(v)?.as_slice() {
            [x, y] => Point::hyp(*x, *y),
            _ => return Err(Error::Parse("hyperbolic point must be [x, y]".into())),
        },
        NpcSpace::Spd { .. } => Point::Spd(matrix_from_json(v)?),
        NpcSpace::Pod { .. } => match f64s(v)?.as_slice() {
            [ray, radius] if *ray >= 0.0 && ray.fract() == 0.0 => Point::pod(*ray as usize, *radius),
            _ => return Err(Error::Parse("pod point must be [ray, radius]".into())),
        },
    };
    space.check_point(&p)?;
    Ok(p)
}

/// Parse `{"space": ..., "payload": ...}`. When `expected` is given the tags must agree.
pub fn point_from_json(v: &Value, expected: Option<&NpcSpace>) -> Result<(NpcSpace, Point)> {
    let space = match v.get("space").and_then(Value::as_str) {
        Some(s) => s.parse::<NpcSpace>()?,
        None => *expected.ok_or_else(|| Error::Parse("point is missing its space tag".into()))?,
    };
    if let Some(e) = expected {
        if *e != space {
            return Err(Error::Usage(format!("point tagged {space} but {e} expected")));
        }
    }
    let payload = v
        .get("payload")
        .ok_or_else(|| Error::Parse("point is missing its payload".into()))?;
    Ok((space, point_from_payload(&space, payload)?))
}

pub fn isometry_to_json(space: &NpcSpace, iso: &Isometry) -> Value {
    let payload = match iso {
        Isometry::Euclidean {
            orthogonal,
            translation,
        } => {
            let rows: Vec<Vec<f64>> = (0..orthogonal.nrows())
                .map(|i| orthogonal.row(i).iter().copied().collect())
                .collect();
            json!({"orthogonal": rows, "translation": translation.as_slice()})
        }
        Isometry::Mobius(m) => json!([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]),
        Isometry::Spd(g) => match space {
            NpcSpace::Spd { field, .. } => matrix_json(g, *field),
            _ => matrix_json(g, Field::Complex),
        },
        Isometry::Pod(perm) => json!(perm),
    };
    json!({"space": space.to_string(), "payload": payload})
}

pub fn isometry_from_payload(space: &NpcSpace, v: &Value) -> Result<Isometry> {
    let iso = match space {
        NpcSpace::Euclidean { dim } => {
            let o = v
                .get("orthogonal")
                .map(matrix_from_json)
                .transpose()?
                .map(|m| m.map(|z| z.re))
                .unwrap_or_else(|| DMatrix::identity(*dim, *dim));
            let t = v
                .get("translation")
                .map(f64s)
                .transpose()?
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(*dim));
            Isometry::Euclidean {
                orthogonal: o,
                translation: t,
            }
        }
        NpcSpace::HyperbolicPlane => {
            let m = matrix_from_json(v)?;
            if m.nrows() != 2 {
                return Err(Error::Parse("Möbius payload must be 2x2".into()));
            }
            Isometry::Mobius(Matrix2::new(m[(0, 0)].re, m[(0, 1)].re, m[(1, 0)].re, m[(1, 1)].re))
        }
        NpcSpace::Spd { .. } => Isometry::Spd(matrix_from_json(v)?),
        NpcSpace::Pod { .. } => Isometry::Pod(
            f64s(v)?
                .into_iter()
                .map(|x| {
                    if x >= 0.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(Error::Parse("permutation entries must be ray indices".into()))
                    }
                })
                .collect::<Result<_>>()?,
        ),
    };
    space.check_isometry(&iso)?;
    Ok(iso)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SPD2: NpcSpace = NpcSpace::Spd {
        n: 2,
        field: Field::Real,
    };
    const POD3: NpcSpace = NpcSpace::Pod { k: 3 };

    fn dg(a: f64, b: f64) -> Point {
        Point::Spd(linalg::diag(&[a, b]))
    }

    fn all_spaces() -> Vec<NpcSpace> {
        vec![
            NpcSpace::Euclidean { dim: 3 },
            NpcSpace::HyperbolicPlane,
            SPD2,
            NpcSpace::Spd {
                n: 3,
                field: Field::Complex,
            },
            POD3,
            NpcSpace::Pod { k: 5 },
        ]
    }

    #[test]
    fn pod_distances() {
        assert_eq!(distance(&POD3, &Point::pod(0, 2.0), &Point::pod(0, 3.0)).unwrap(), 1.0);
        assert_eq!(distance(&POD3, &Point::pod(0, 2.0), &Point::pod(1, 3.0)).unwrap(), 5.0);
        assert_eq!(Point::pod(2, 0.0), Point::pod(0, 0.0));
    }

    #[test]
    fn spd_distance_closed_form() {
        let d = distance(&SPD2, &dg(1.0, 1.0), &dg(4.0, 0.25)).unwrap();
        // Eigenvalues 4 and 1/4: sqrt(n/2 * 2 ln²4) with n = 2.
        let oracle = (2.0 * 4f64.ln().powi(2)).sqrt();
        assert_relative_eq!(d, oracle, epsilon = 1e-12);
        assert_relative_eq!(d, 1.960516, epsilon = 1e-6);
    }

    #[test]
    fn hyperbolic_vertical_distance() {
        let h = NpcSpace::HyperbolicPlane;
        let e = std::f64::consts::E;
        // ∫_1^e dy / y = 1
        assert_relative_eq!(distance(&h, &Point::hyp(0.0, 1.0), &Point::hyp(0.0, e)).unwrap(), 1.0, epsilon = 1e-14);
        // arcosh form
        let (p, q) = (Point::hyp(0.3, 0.7), Point::hyp(-1.2, 2.5));
        let arg = 1.0 + (1.5f64.powi(2) + 1.8f64.powi(2)) / (2.0 * 0.7 * 2.5);
        assert_relative_eq!(distance(&h, &p, &q).unwrap(), arg.acosh(), epsilon = 1e-12);
    }

    #[test]
    fn mismatched_tags_are_usage_errors() {
        let err = distance(&SPD2, &Point::pod(0, 1.0), &dg(1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
        let bad = Point::Spd(linalg::diag(&[-1.0, -1.0]));
        assert!(matches!(distance(&SPD2, &bad, &dg(1.0, 1.0)).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn interpolation_examples() {
        let mid = interpolate(&SPD2, &dg(1.0, 1.0), &dg(4.0, 0.25), 0.5).unwrap();
        assert!(approx_eq(&SPD2, &mid, &dg(2.0, 0.5), 1e-12));
        let o = interpolate(&POD3, &Point::pod(0, 1.0), &Point::pod(1, 1.0), 0.5).unwrap();
        assert_eq!(o, Point::pod(0, 0.0));
        assert!(matches!(
            interpolate(&POD3, &Point::pod(0, 1.0), &Point::pod(1, 1.0), 1.5),
            Err(Error::Usage(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in all_spaces() {
            let p = random_point(&s, 2.0, &mut rng);
            let q = random_point(&s, 2.0, &mut rng);
            assert_eq!(interpolate(&s, &p, &q, 0.0).unwrap(), p);
            assert_eq!(interpolate(&s, &p, &q, 1.0).unwrap(), q);
        }
    }

    #[test]
    fn interpolation_splits_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in all_spaces() {
            for _ in 0..50 {
                let p = random_point(&s, 2.0, &mut rng);
                let q = random_point(&s, 2.0, &mut rng);
                let t: f64 = rng.random();
                let m = interpolate(&s, &p, &q, t).unwrap();
                let d = distance(&s, &p, &q).unwrap();
                let scale = d.max(1.0);
                assert!((distance(&s, &p, &m).unwrap() - t * d).abs() <= 1e-9 * scale, "{s}");
                assert!((distance(&s, &m, &q).unwrap() - (1.0 - t) * d).abs() <= 1e-9 * scale, "{s}");
            }
        }
    }

    #[test]
    fn triangle_examples() {
        let r = check_triangle_comparison(&POD3, &Point::pod(0, 1.0), &Point::pod(1, 1.0), &Point::pod(2, 1.0), 0.5)
            .unwrap();
        assert_relative_eq!(r, 2.0, epsilon = 1e-15);
        let e2 = NpcSpace::Euclidean { dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (p, q, rr) = (
                random_point(&e2, 1.0, &mut rng),
                random_point(&e2, 1.0, &mut rng),
                random_point(&e2, 1.0, &mut rng),
            );
            let t: f64 = rng.random();
            assert!(check_triangle_comparison(&e2, &p, &q, &rr, t).unwrap().abs() <= 1e-12);
            let deg = check_triangle_comparison(&SPD2, &dg(2.0, 0.5), &dg(1.0, 1.0), &dg(1.0, 1.0), t).unwrap();
            assert!(deg.abs() <= 1e-12);
        }
    }

    #[test]
    fn euclidean_quadrilateral_identity() {
        // For vectors, RHS − LHS of the first inequality is
        // t(1−t)(|(P−S) − (Q−R)|² − (|P−S| − |Q−R|)²).
        let e = NpcSpace::Euclidean { dim: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let pts: Vec<Point> = (0..4).map(|_| random_point(&e, 1.0, &mut rng)).collect();
            let t: f64 = rng.random();
            let (men, aga) = check_quadrilateral(&e, &pts[0], &pts[1], &pts[2], &pts[3], t).unwrap();
            let v = |p: &Point| match p {
                Point::Euclidean(v) => v.clone(),
                _ => unreachable!(),
            };
            let (p, q, r, s) = (v(&pts[0]), v(&pts[1]), v(&pts[2]), v(&pts[3]));
            let a = &p - &s;
            let b = &q - &r;
            let oracle = t * (1.0 - t) * ((&a - &b).norm_squared() - (a.norm() - b.norm()).powi(2));
            assert!((men - oracle).abs() <= 1e-12);
            let aga_oracle = 2.0 * t * (a.norm() * b.norm() - a.dot(&b));
            assert!((aga - aga_oracle).abs() <= 1e-12);
            assert!(men >= -1e-12 && aga >= -1e-12);
        }
        let p = Point::euc(&[1.0, 0.0, 0.0]);
        let s = Point::euc(&[0.0, 2.0, 0.0]);
        let (men, aga) = check_quadrilateral(&e, &p, &p, &s, &s, 0.3).unwrap();
        assert!(men.abs() < 1e-12 && aga.abs() < 1e-12);
    }

    #[test]
    fn log_exp_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in all_spaces().into_iter().filter(NpcSpace::is_manifold) {
            for _ in 0..50 {
                let b = random_point(&s, 2.0, &mut rng);
                let p = random_point(&s, 2.0, &mut rng);
                let v = log_map(&s, &b, &p).unwrap();
                let back = exp_map(&s, &v).unwrap();
                assert!(approx_eq(&s, &back, &p, 1e-9), "{s}");
                assert_relative_eq!(tangent_norm(&s, &v).unwrap(), distance(&s, &b, &p).unwrap(), epsilon = 1e-9);
            }
            let b = random_point(&s, 1.0, &mut rng);
            let z = log_map(&s, &b, &b).unwrap();
            assert!(tangent_norm(&s, &z).unwrap() < 1e-12);
        }
        assert!(matches!(
            log_map(&POD3, &Point::pod(0, 1.0), &Point::pod(1, 1.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn spd_log_at_identity_is_matrix_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_traceless_hermitian(2, Field::Real, 1.3, &mut rng);
        let p = Point::Spd(linalg::herm_exp(&m));
        let v = log_map(&SPD2, &dg(1.0, 1.0), &p).unwrap();
        let TangentVec::Spd(x) = v.vec else { panic!() };
        assert!((x - m).norm() < 1e-12);
    }

    #[test]
    fn isometry_examples() {
        let g = Isometry::Spd(linalg::diag(&[2.0, 0.5]));
        let out = isometry_apply(&SPD2, &g, &dg(1.0, 1.0)).unwrap();
        assert!(approx_eq(&SPD2, &out, &dg(0.25, 4.0), 1e-14));
        let cyc = Isometry::Pod(vec![1, 2, 0]);
        assert_eq!(isometry_apply(&POD3, &cyc, &Point::pod(0, 2.0)).unwrap(), Point::pod(1, 2.0));
        let singular = Isometry::Spd(linalg::diag(&[1.0, 0.0]));
        assert!(isometry_apply(&SPD2, &singular, &dg(1.0, 1.0)).is_err());
    }

    #[test]
    fn isometries_preserve_distance_and_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in all_spaces() {
            for _ in 0..20 {
                let a = random_isometry(&s, 0.7, &mut rng);
                let b = random_isometry(&s, 0.7, &mut rng);
                let p = random_point(&s, 1.5, &mut rng);
                let q = random_point(&s, 1.5, &mut rng);
                let d0 = distance(&s, &p, &q).unwrap();
                let ap = isometry_apply(&s, &a, &p).unwrap();
                let aq = isometry_apply(&s, &a, &q).unwrap();
                assert!((distance(&s, &ap, &aq).unwrap() - d0).abs() <= 1e-9 * d0.max(1.0), "{s}");
                let ab = compose(&a, &b).unwrap();
                let lhs = isometry_apply(&s, &ab, &p).unwrap();
                let rhs = apply_unchecked(&a, &apply_unchecked(&b, &p).unwrap()).unwrap();
                assert!(approx_eq(&s, &lhs, &rhs, 1e-9), "{s}");
                let ai = inverse(&a).unwrap();
                assert!(approx_eq(&s, &apply_unchecked(&ai, &ap).unwrap(), &p, 1e-9), "{s}");
            }
        }
    }

    #[test]
    fn space_spec_roundtrip() {
        for s in ["euc:3", "hyp", "spd:2", "spd:3:complex", "pod:4"] {
            assert_eq!(s.parse::<NpcSpace>().unwrap().to_string(), s);
        }
        assert!("pod:2".parse::<NpcSpace>().is_err());
        assert!("spd:1".parse::<NpcSpace>().is_err());
        assert!("sphere".parse::<NpcSpace>().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for s in all_spaces() {
            let p = random_point(&s, 1.0, &mut rng);
            let (s2, q) = point_from_json(&point_to_json(&s, &p), None).unwrap();
            assert_eq!(s, s2);
            assert!(approx_eq(&s, &p, &q, 1e-12));
            let g = random_isometry(&s, 0.5, &mut rng);
            let v = isometry_to_json(&s, &g);
            let h = isometry_from_payload(&s, &v["payload"]).unwrap();
            assert!(approx_eq(&s, &apply_unchecked(&g, &p).unwrap(), &apply_unchecked(&h, &p).unwrap(), 1e-12));
        }
    }
}
