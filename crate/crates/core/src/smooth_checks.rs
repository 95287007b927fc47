//! Pointwise smooth-map operators evaluated in charts.
//!
//! Curvature convention: `R_ijkl = ⟨R(∂_i, ∂_j) ∂_k, ∂_l⟩` with
//! `R(X, Y) = ∇_X ∇_Y − ∇_Y ∇_X − ∇_[X,Y]`, so sectional curvature is
//! `R(X, Y, Y, X) / |X ∧ Y|²`. The hyperbolic plane has `R_1212 = +1` in an
//! orthonormal frame under this convention.
//!
//! Complex domains use real coordinates `(x1, y1, x2, y2, ...)` with
//! `z_α = x_α + i y_α`, and all complex contractions use `δ`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

type Func = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacFn = Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type HessFn = Box<dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Step for first and second derivatives.
pub const H_LOW: f64 = 1e-4;
/// Step for third and fourth order quantities.
pub const H_HIGH: f64 = 1e-2;

// ---------------------------------------------------------------------------
// Tensors

/// `Γ^k_ij` stored as `[k][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub d: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(d: usize) -> Self {
        Christoffel { d, data: vec![0.0; d * d * d] }
    }
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.d + i) * self.d + j]
    }
    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.d + i) * self.d + j] = v;
    }
}

/// `R_ijkl` stored as `[i][j][k][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Curvature {
    pub d: usize,
    pub data: Vec<f64>,
}

impl Curvature {
    pub fn zeros(d: usize) -> Self {
        Curvature { d, data: vec![0.0; d.pow(4)] }
    }
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.d + j) * self.d + k) * self.d + l
    }
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let n = self.idx(i, j, k, l);
        self.data[n] = v;
    }

    /// `K (h_jk h_il − h_ik h_jl)`.
    pub fn constant(k: f64, h: &DMatrix<f64>) -> Self {
        let d = h.nrows();
        let mut r = Curvature::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for kk in 0..d {
                    for l in 0..d {
                        r.set(i, j, kk, l, k * (h[(j, kk)] * h[(i, l)] - h[(i, kk)] * h[(j, l)]));
                    }
                }
            }
        }
        r
    }

    /// Largest violation of `R_ijkl = −R_jikl = R_klij`.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.d;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let r = self.get(i, j, k, l);
                        worst = worst.max((r + self.get(j, i, k, l)).abs());
                        worst = worst.max((r - self.get(k, l, i, j)).abs());
                    }
                }
            }
        }
        worst
    }

    /// `Ric_jk = g^{il} R_ijkl`.
    pub fn ricci(&self, g_inv: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d, d, |j, k| {
            let mut s = 0.0;
            for i in 0..d {
                for l in 0..d {
                    s += g_inv[(i, l)] * self.get(i, j, k, l);
                }
            }
            s
        })
    }
}

// ---------------------------------------------------------------------------
// Riemannian charts

/// A Riemannian metric in one coordinate chart. Christoffel symbols and
/// curvature default to finite differences of the metric.
pub trait RiemannianChart: Send + Sync {
    fn dim(&self) -> usize;
    fn metric(&self, y: &[f64]) -> DMatrix<f64>;
    fn christoffel(&self, y: &[f64]) -> Christoffel {
        christoffel_fd(self, y, 1e-5)
    }
    fn curvature(&self, y: &[f64]) -> Curvature {
        curvature_fd(self, y, 1e-4)
    }
    fn name(&self) -> &str;
}

fn shifted(y: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut z = y.to_vec();
    z[i] += h;
    z
}

/// Levi-Civita formula with central differences of the metric.
pub fn christoffel_fd<C: RiemannianChart + ?Sized>(chart: &C, y: &[f64], h: f64) -> Christoffel {
    let d = chart.dim();
    let dh: Vec<DMatrix<f64>> = (0..d)
        .map(|i| (chart.metric(&shifted(y, i, h)) - chart.metric(&shifted(y, i, -h))) / (2.0 * h))
        .collect();
    let inv = chart.metric(y).try_inverse().expect("singular metric");
    let mut g = Christoffel::zeros(d);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += inv[(k, l)] * (dh[i][(j, l)] + dh[j][(i, l)] - dh[l][(i, j)]);
                }
                g.set(k, i, j, 0.5 * s);
            }
        }
    }
    g
}

/// `(R(∂i,∂j)∂k)^m = ∂iΓ^m_jk − ∂jΓ^m_ik + Γ^p_jk Γ^m_ip − Γ^p_ik Γ^m_jp`, lowered with `h_lm`.
pub fn curvature_fd<C: RiemannianChart + ?Sized>(chart: &C, y: &[f64], h: f64) -> Curvature {
    let d = chart.dim();
    let g0 = chart.christoffel(y);
    let dg: Vec<Christoffel> = (0..d)
        .map(|i| {
            let a = chart.christoffel(&shifted(y, i, h));
            let b = chart.christoffel(&shifted(y, i, -h));
            Christoffel {
                d,
                data: a.data.iter().zip(&b.data).map(|(x, z)| (x - z) / (2.0 * h)).collect(),
            }
        })
        .collect();
    let met = chart.metric(y);
    let mut r = Curvature::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let up: Vec<f64> = (0..d)
                    .map(|m| {
                        let mut s = dg[i].get(m, j, k) - dg[j].get(m, i, k);
                        for p in 0..d {
                            s += g0.get(p, j, k) * g0.get(m, i, p) - g0.get(p, i, k) * g0.get(m, j, p);
                        }
                        s
                    })
                    .collect();
                for l in 0..d {
                    r.set(i, j, k, l, (0..d).map(|m| met[(l, m)] * up[m]).sum());
                }
            }
        }
    }
    r
}

/// Christoffel symbols of `e^{2φ} δ` given `∂φ`.
fn conformal_christoffel(dphi: &[f64]) -> Christoffel {
    let d = dphi.len();
    let mut g = Christoffel::zeros(d);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                if i == k {
                    v += dphi[j];
                }
                if j == k {
                    v += dphi[i];
                }
                if i == j {
                    v -= dphi[k];
                }
                g.set(k, i, j, v);
            }
        }
    }
    g
}

pub struct Flat {
    pub d: usize,
}

impl RiemannianChart for Flat {
    fn dim(&self) -> usize {
        self.d
    }
    fn metric(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.d, self.d)
    }
    fn christoffel(&self, _: &[f64]) -> Christoffel {
        Christoffel::zeros(self.d)
    }
    fn curvature(&self, _: &[f64]) -> Curvature {
        Curvature::zeros(self.d)
    }
    fn name(&self) -> &str {
        "flat"
    }
}

/// Upper half-plane, `h = (dx² + dy²)/y²`.
pub struct HalfPlane;

impl RiemannianChart for HalfPlane {
    fn dim(&self) -> usize {
        2
    }
    fn metric(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(2, 2) / (y[1] * y[1])
    }
    fn christoffel(&self, y: &[f64]) -> Christoffel {
        conformal_christoffel(&[0.0, -1.0 / y[1]])
    }
    fn curvature(&self, y: &[f64]) -> Curvature {
        Curvature::constant(-1.0, &self.metric(y))
    }
    fn name(&self) -> &str {
        "hyperbolic"
    }
}

/// Unit sphere in stereographic coordinates, `h = 4|dy|²/(1 + |y|²)²`.
pub struct Sphere {
    pub d: usize,
}

impl RiemannianChart for Sphere {
    fn dim(&self) -> usize {
        self.d
    }
    fn metric(&self, y: &[f64]) -> DMatrix<f64> {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        DMatrix::identity(self.d, self.d) * (4.0 / (1.0 + r2).powi(2))
    }
    fn christoffel(&self, y: &[f64]) -> Christoffel {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let dphi: Vec<f64> = y.iter().map(|v| -2.0 * v / (1.0 + r2)).collect();
        conformal_christoffel(&dphi)
    }
    fn curvature(&self, y: &[f64]) -> Curvature {
        Curvature::constant(1.0, &self.metric(y))
    }
    fn name(&self) -> &str {
        "sphere"
    }
}

/// Real 2×2 determinant-one positive matrices in exponential coordinates
/// `h(u, v) = exp([[u, v], [v, −u]])`, with metric `(n/2) tr(h⁻¹dh h⁻¹dh)`.
/// In polar form `(u, v) = r(cos θ, sin θ)` this is `2(dr² + sinh²r dθ²)`.
pub struct Spd2;

impl Spd2 {
    fn point(y: &[f64]) -> nalgebra::Matrix2<f64> {
        let (u, v) = (y[0], y[1]);
        let r = u.hypot(v);
        let s = nalgebra::Matrix2::new(u, v, v, -u);
        let sinhc = if r < 1e-8 { 1.0 + r * r / 6.0 } else { r.sinh() / r };
        nalgebra::Matrix2::identity() * r.cosh() + s * sinhc
    }

    /// The trace metric computed from the matrices themselves.
    pub fn metric_from_matrices(y: &[f64]) -> DMatrix<f64> {
        let h = 1e-6;
        let pi = Self::point(y).try_inverse().unwrap();
        let d: Vec<_> = (0..2)
            .map(|i| (Self::point(&shifted(y, i, h)) - Self::point(&shifted(y, i, -h))) / (2.0 * h))
            .collect();
        DMatrix::from_fn(2, 2, |i, j| (pi * d[i] * pi * d[j]).trace())
    }
}

impl RiemannianChart for Spd2 {
    fn dim(&self) -> usize {
        2
    }
    fn metric(&self, y: &[f64]) -> DMatrix<f64> {
        let r = y[0].hypot(y[1]);
        if r < 1e-12 {
            return DMatrix::identity(2, 2) * 2.0;
        }
        let n = nalgebra::DVector::from_vec(vec![y[0] / r, y[1] / r]);
        let radial = &n * n.transpose();
        let q = (r.sinh() / r).powi(2);
        (&radial + (DMatrix::identity(2, 2) - &radial) * q) * 2.0
    }
    fn name(&self) -> &str {
        "spd"
    }
}

pub fn riemannian_chart(name: &str) -> Result<Box<dyn RiemannianChart>> {
    match name {
        "flat" => Ok(Box::new(Flat { d: 2 })),
        "hyperbolic" => Ok(Box::new(HalfPlane)),
        "sphere" => Ok(Box::new(Sphere { d: 2 })),
        "spd" => Ok(Box::new(Spd2)),
        _ => Err(Error::Usage(format!("unknown metric chart '{name}'"))),
    }
}

/// Largest mismatch between supplied Christoffel symbols and the
/// Levi-Civita formula applied to the metric.
pub fn christoffel_defect(chart: &dyn RiemannianChart, y: &[f64]) -> f64 {
    let a = chart.christoffel(y);
    let b = christoffel_fd(chart, y, 1e-5);
    a.data.iter().zip(&b.data).map(|(x, z)| (x - z).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Chart maps

/// A smooth map between coordinate charts, with optional analytic
/// derivatives. Missing derivatives use central differences with step `h`.
pub struct ChartMap {
    pub m: usize,
    pub d: usize,
    pub h: f64,
    f: Func,
    jac: Option<JacFn>,
    hess: Option<HessFn>,
}

impl ChartMap {
    pub fn new(m: usize, d: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        ChartMap { m, d, h: H_LOW, f: Box::new(f), jac: None, hess: None }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jac = Some(Box::new(j));
        self
    }

    /// One `m × m` Hessian per target component.
    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static) -> Self {
        self.hess = Some(Box::new(h));
        self
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    /// `∂f^i/∂x^α` as a `d × m` matrix.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jac {
            Some(j) => j(x),
            None => self.jacobian_fd(x),
        }
    }

    pub fn jacobian_fd(&self, x: &[f64]) -> DMatrix<f64> {
        let h = self.h;
        let mut j = DMatrix::zeros(self.d, self.m);
        for a in 0..self.m {
            let p = self.eval(&shifted(x, a, h));
            let q = self.eval(&shifted(x, a, -h));
            for i in 0..self.d {
                j[(i, a)] = (p[i] - q[i]) / (2.0 * h);
            }
        }
        j
    }

    /// Largest difference between the analytic Jacobian and central differences.
    pub fn jacobian_defect(&self, x: &[f64]) -> Option<f64> {
        let j = self.jac.as_ref()?(x);
        Some((j - self.jacobian_fd(x)).abs().max())
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        if let Some(hf) = &self.hess {
            return hf(x);
        }
        let h = self.h;
        let mut out = vec![DMatrix::zeros(self.m, self.m); self.d];
        if let Some(j) = &self.jac {
            for b in 0..self.m {
                let p = j(&shifted(x, b, h));
                let q = j(&shifted(x, b, -h));
                for i in 0..self.d {
                    for a in 0..self.m {
                        out[i][(a, b)] = (p[(i, a)] - q[(i, a)]) / (2.0 * h);
                    }
                }
            }
            for o in out.iter_mut() {
                *o = (o.clone() + o.transpose()) * 0.5;
            }
            return out;
        }
        let f0 = self.eval(x);
        for a in 0..self.m {
            for b in a..self.m {
                let vals: Vec<f64> = if a == b {
                    let p = self.eval(&shifted(x, a, h));
                    let q = self.eval(&shifted(x, a, -h));
                    (0..self.d).map(|i| (p[i] - 2.0 * f0[i] + q[i]) / (h * h)).collect()
                } else {
                    let e = |sa: f64, sb: f64| self.eval(&shifted(&shifted(x, a, sa * h), b, sb * h));
                    let (pp, pm, mp, mm) = (e(1.0, 1.0), e(1.0, -1.0), e(-1.0, 1.0), e(-1.0, -1.0));
                    (0..self.d).map(|i| (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h)).collect()
                };
                for i in 0..self.d {
                    out[i][(a, b)] = vals[i];
                    out[i][(b, a)] = vals[i];
                }
            }
        }
        out
    }
}

/// Domain and target metrics for a chart map.
pub struct MetricPair<'a> {
    pub domain: &'a dyn RiemannianChart,
    pub target: &'a dyn RiemannianChart,
}

fn dims(chart: &ChartMap, metrics: &MetricPair) -> Result<()> {
    if chart.m != metrics.domain.dim() || chart.d != metrics.target.dim() {
        return Err(Error::Usage(format!(
            "chart is {}→{} but metrics are {}→{}",
            chart.m,
            chart.d,
            metrics.domain.dim(),
            metrics.target.dim()
        )));
    }
    Ok(())
}

fn domain_inverse(metrics: &MetricPair, x: &[f64]) -> Result<DMatrix<f64>> {
    metrics
        .domain
        .metric(x)
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular domain metric".into()))
}

/// `e(f) = ½ g^{αβ} h_ij f^i_α f^j_β`.
pub fn energy_density(chart: &ChartMap, metrics: &MetricPair, x: &[f64]) -> Result<f64> {
    dims(chart, metrics)?;
    let gi = domain_inverse(metrics, x)?;
    Ok(density_with(&chart.jacobian(x), &gi, &metrics.target.metric(&chart.eval(x))))
}

fn density_with(j: &DMatrix<f64>, gi: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    // ½ tr(g⁻¹ Jᵀ h J)
    0.5 * (gi * j.transpose() * h * j).trace()
}

/// `B^k_αβ = f^k_αβ − ΓM^γ_αβ f^k_γ + ΓN^k_ij f^i_α f^j_β`, one `m × m` block per k.
fn second_fundamental(chart: &ChartMap, metrics: &MetricPair, x: &[f64]) -> Vec<DMatrix<f64>> {
    let j = chart.jacobian(x);
    let hs = chart.hessian(x);
    let gm = metrics.domain.christoffel(x);
    let gn = metrics.target.christoffel(&chart.eval(x));
    let (m, d) = (chart.m, chart.d);
    (0..d)
        .map(|k| {
            DMatrix::from_fn(m, m, |a, b| {
                let mut s = hs[k][(a, b)];
                for c in 0..m {
                    s -= gm.get(c, a, b) * j[(k, c)];
                }
                for i in 0..d {
                    for l in 0..d {
                        s += gn.get(k, i, l) * j[(i, a)] * j[(l, b)];
                    }
                }
                s
            })
        })
        .collect()
}

/// `τ^k = g^{αβ} B^k_αβ`.
pub fn tension_field(chart: &ChartMap, metrics: &MetricPair, x: &[f64]) -> Result<Vec<f64>> {
    dims(chart, metrics)?;
    let gi = domain_inverse(metrics, x)?;
    let b = second_fundamental(chart, metrics, x);
    Ok(b.iter().map(|bk| (&gi * bk).trace()).collect())
}

/// Norm of the tension in the target metric.
pub fn tension_norm(chart: &ChartMap, metrics: &MetricPair, x: &[f64]) -> Result<f64> {
    let t = tension_field(chart, metrics, x)?;
    let h = metrics.target.metric(&chart.eval(x));
    let v = nalgebra::DVector::from_vec(t);
    Ok((v.transpose() * h * &v)[(0, 0)].max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeitzenbockReport {
    /// Laplacian of the energy density by finite differences.
    pub lhs: f64,
    pub rhs: f64,
    pub hessian_term: f64,
    pub ricci_term: f64,
    pub curvature_term: f64,
    pub residual: f64,
}

/// Harmonicity threshold for identities that assume it.
pub const HARMONIC_TOL: f64 = 1e-6;

/// Compare `Δe(f)` with `|∇df|² + ⟨df Ric e_α, df e_α⟩ − Σ⟨R(df e_α, df e_β) df e_β, df e_α⟩`.
/// `Δe` is the Laplace–Beltrami operator applied by central differences with step `h`.
pub fn weitzenbock_residual(chart: &ChartMap, metrics: &MetricPair, x: &[f64], h: f64) -> Result<WeitzenbockReport> {
    dims(chart, metrics)?;
    let tn = tension_norm(chart, metrics, x)?;
    if tn > HARMONIC_TOL {
        return Err(Error::Usage(format!(
            "map is not harmonic at this point (|τ| = {tn:e}); the identity assumes harmonicity"
        )));
    }
    let m = chart.m;
    let d = chart.d;
    let gi = domain_inverse(metrics, x)?;

    // Left side: g^{αβ}(∂αβ e − Γ^γ_αβ ∂γ e).
    let e = |p: &[f64]| -> Result<f64> { energy_density(chart, metrics, p) };
    let e0 = e(x)?;
    let mut hess_e = DMatrix::zeros(m, m);
    let mut grad_e = vec![0.0; m];
    for a in 0..m {
        let ep = e(&shifted(x, a, h))?;
        let em = e(&shifted(x, a, -h))?;
        grad_e[a] = (ep - em) / (2.0 * h);
        hess_e[(a, a)] = (ep - 2.0 * e0 + em) / (h * h);
        for b in (a + 1)..m {
            let s = |sa: f64, sb: f64| e(&shifted(&shifted(x, a, sa * h), b, sb * h));
            let v = (s(1.0, 1.0)? - s(1.0, -1.0)? - s(-1.0, 1.0)? + s(-1.0, -1.0)?) / (4.0 * h * h);
            hess_e[(a, b)] = v;
            hess_e[(b, a)] = v;
        }
    }
    let gm = metrics.domain.christoffel(x);
    let mut lhs = 0.0;
    for a in 0..m {
        for b in 0..m {
            let mut t = hess_e[(a, b)];
            for c in 0..m {
                t -= gm.get(c, a, b) * grad_e[c];
            }
            lhs += gi[(a, b)] * t;
        }
    }

    let y = chart.eval(x);
    let hn = metrics.target.metric(&y);
    let j = chart.jacobian(x);
    let bff = second_fundamental(chart, metrics, x);
    let mut hessian_term = 0.0;
    for i in 0..d {
        for k in 0..d {
            // g^{αγ} g^{βδ} B^i_αβ B^k_γδ h_ik
            hessian_term += hn[(i, k)] * (&gi * &bff[i] * &gi * &bff[k].transpose()).trace();
        }
    }
    let ric = metrics.domain.curvature(x).ricci(&gi);
    // Ric_{αβ} g^{αγ} g^{βδ} h_ij f^i_γ f^j_δ
    let pull = j.transpose() * &hn * &j;
    let ricci_term = (&gi * &ric * &gi * &pull).trace();
    let rn = metrics.target.curvature(&y);
    // Orthonormal-frame sum rewritten with g^{αγ}g^{βδ} R_ijkl f^i_α f^j_β f^k_δ f^l_γ.
    let mut curvature_term = 0.0;
    let jg: Vec<Vec<f64>> = (0..d).map(|i| (0..m).map(|a| j[(i, a)]).collect()).collect();
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for dd in 0..m {
                    let w = gi[(a, c)] * gi[(b, dd)];
                    if w == 0.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for i in 0..d {
                        for jj in 0..d {
                            for k in 0..d {
                                for l in 0..d {
                                    s += rn.get(i, jj, k, l) * jg[i][a] * jg[jj][b] * jg[k][dd] * jg[l][c];
                                }
                            }
                        }
                    }
                    curvature_term -= w * s;
                }
            }
        }
    }
    let rhs = hessian_term + ricci_term + curvature_term;
    Ok(WeitzenbockReport {
        lhs,
        rhs,
        hessian_term,
        ricci_term,
        curvature_term,
        residual: (lhs - rhs).abs(),
    })
}

/// Weitzenböck comparison with the left side extrapolated from steps `h`
/// and `h/2`, cancelling the leading `O(h²)` error.
pub fn weitzenbock_richardson(chart: &ChartMap, metrics: &MetricPair, x: &[f64], h: f64) -> Result<WeitzenbockReport> {
    let coarse = weitzenbock_residual(chart, metrics, x, h)?;
    let mut fine = weitzenbock_residual(chart, metrics, x, 0.5 * h)?;
    fine.lhs = (4.0 * fine.lhs - coarse.lhs) / 3.0;
    fine.residual = (fine.lhs - fine.rhs).abs();
    Ok(fine)
}

// ---------------------------------------------------------------------------
// Complex domains

/// `P^k_{αβ}` for `∂/∂z^α ∂/∂z̄^β`, stored `[k][α][β]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PluriTensor {
    pub m: usize,
    pub d: usize,
    pub data: Vec<Complex64>,
}

impl PluriTensor {
    pub fn get(&self, k: usize, a: usize, b: usize) -> Complex64 {
        self.data[(k * self.m + a) * self.m + b]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Σ_α P^k_αα`.
    pub fn trace(&self) -> Vec<Complex64> {
        (0..self.d).map(|k| (0..self.m).map(|a| self.get(k, a, a)).sum()).collect()
    }

    /// `P^0 + i P^1` for a map into `ℝ² ≅ ℂ`: the mixed derivative of `f¹ + i f²`.
    pub fn complexified(&self) -> Result<Vec<Vec<Complex64>>> {
        if self.d != 2 {
            return Err(Error::Usage("complexified view needs a two-dimensional target".into()));
        }
        let i = Complex64::i();
        Ok((0..self.m)
            .map(|a| (0..self.m).map(|b| self.get(0, a, b) + i * self.get(1, a, b)).collect())
            .collect())
    }
}

fn complex_dim(chart: &ChartMap) -> Result<usize> {
    if chart.m % 2 != 0 {
        return Err(Error::Usage("complex domain needs an even real dimension".into()));
    }
    Ok(chart.m / 2)
}

/// `∂f/∂z^α = ½(∂x − i∂y) f` and `∂f/∂z̄^α`, as `d × m` complex matrices.
pub fn wirtinger_jacobians(j: &DMatrix<f64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let d = j.nrows();
    let m = j.ncols() / 2;
    let dz = DMatrix::from_fn(d, m, |i, a| Complex64::new(0.5 * j[(i, 2 * a)], -0.5 * j[(i, 2 * a + 1)]));
    let dzb = dz.map(|z| z.conj());
    (dz, dzb)
}

/// `P^k_αβ = ∂²f^k/∂z^α∂z̄^β + Γ^k_ij ∂f^i/∂z^α ∂f^j/∂z̄^β` on flat `ℂ^m`.
pub fn pluriharmonic_tensor(chart: &ChartMap, target: &dyn RiemannianChart, x: &[f64]) -> Result<PluriTensor> {
    let m = complex_dim(chart)?;
    let d = chart.d;
    if target.dim() != d {
        return Err(Error::Usage("target dimension mismatch".into()));
    }
    let j = chart.jacobian(x);
    let hs = chart.hessian(x);
    let (dz, dzb) = wirtinger_jacobians(&j);
    let gn = target.christoffel(&chart.eval(x));
    let mut data = vec![Complex64::new(0.0, 0.0); d * m * m];
    for k in 0..d {
        let hk = &hs[k];
        for a in 0..m {
            for b in 0..m {
                let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
                let mut v = Complex64::new(
                    0.25 * (hk[(xa, xb)] + hk[(ya, yb)]),
                    0.25 * (hk[(xa, yb)] - hk[(ya, xb)]),
                );
                for i in 0..d {
                    for l in 0..d {
                        v += dz[(i, a)] * dzb[(l, b)] * gn.get(k, i, l);
                    }
                }
                data[(k * m + a) * m + b] = v;
            }
        }
    }
    Ok(PluriTensor { m, d, data })
}

/// `Q₀ = −2 Σ_{α,β} R_ijkl f^i_α f^k_β̄ f^j_β f^l_ᾱ` for a flat domain.
pub fn sampson_q0(r: &Curvature, dz: &DMatrix<Complex64>, dzb: &DMatrix<Complex64>) -> f64 {
    let d = r.d;
    let m = dz.ncols();
    let mut s = Complex64::new(0.0, 0.0);
    for a in 0..m {
        for b in 0..m {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            let rv = r.get(i, j, k, l);
                            if rv != 0.0 {
                                s += dz[(i, a)] * dzb[(k, b)] * dz[(j, b)] * dzb[(l, a)] * rv;
                            }
                        }
                    }
                }
            }
        }
    }
    -2.0 * s.re
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampsonReport {
    /// Scalar of `d′d″{d″f, d″f}` against `ω²/2!`.
    pub lhs: f64,
    /// `Σ h_ij P^i_αβ conj(P^j_αβ)`.
    pub p_norm2: f64,
    /// `Σ h_ij (Tr P)^i conj((Tr P)^j)`.
    pub trace_norm2: f64,
    pub q0: f64,
    /// `4|P|² + 2Q₀`, the right side for harmonic maps.
    pub rhs: f64,
    /// `4(|P|² − |Tr P|²) + 2Q₀`, valid without harmonicity.
    pub rhs_general: f64,
    pub residual: f64,
}

/// Sign of the permutation sorting `seq`.
fn perm_sign(seq: [usize; 4]) -> f64 {
    let mut inv = 0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if seq[i] == seq[j] {
                return 0.0;
            }
            if seq[i] > seq[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Both sides of the Bochner identity for maps from flat `ℂ²`.
///
/// The pairing `φ_βγ = h_ij f^i_{z̄β} f^j_{zγ}` is differentiated with
/// fourth-order central stencils of step `h`; with
/// `ω = (i/2) Σ dz ∧ dz̄` one has `ω²/2! = −¼ dz¹∧dz̄¹∧dz²∧dz̄²`.
pub fn sampson_identity(chart: &ChartMap, target: &dyn RiemannianChart, x: &[f64], h: f64) -> Result<SampsonReport> {
    let m = complex_dim(chart)?;
    if m != 2 {
        return Err(Error::Usage("the identity is evaluated on two complex dimensions".into()));
    }
    let d = chart.d;
    let phi = |p: &[f64]| -> [[Complex64; 2]; 2] {
        let (dz, dzb) = wirtinger_jacobians(&chart.jacobian(p));
        let hm = target.metric(&chart.eval(p));
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (b, row) in out.iter_mut().enumerate() {
            for (g, v) in row.iter_mut().enumerate() {
                for i in 0..d {
                    for j in 0..d {
                        *v += dzb[(i, b)] * dz[(j, g)] * hm[(i, j)];
                    }
                }
            }
        }
        out
    };
    // Fourth-order first derivative along real coordinate `a` of a function.
    let d1 = |fun: &dyn Fn(&[f64]) -> [[Complex64; 2]; 2], p: &[f64], a: usize| -> [[Complex64; 2]; 2] {
        let v: Vec<_> = [2.0, 1.0, -1.0, -2.0].iter().map(|s| fun(&shifted(p, a, s * h))).collect();
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for b in 0..2 {
            for g in 0..2 {
                out[b][g] = (-v[0][b][g] + 8.0 * v[1][b][g] - 8.0 * v[2][b][g] + v[3][b][g]) / (12.0 * h);
            }
        }
        out
    };
    // Real second derivatives ∂a∂b φ for the four real coordinates.
    let mut d2 = vec![vec![[[Complex64::new(0.0, 0.0); 2]; 2]; 4]; 4];
    for a in 0..4 {
        for b in a..4 {
            let inner = |p: &[f64]| d1(&phi, p, b);
            let v = d1(&inner, x, a);
            d2[a][b] = v;
            d2[b][a] = v;
        }
    }
    let i = Complex64::i();
    // ∂_{zε}∂_{z̄δ} = ¼(∂xε − i∂yε)(∂xδ + i∂yδ)
    let mixed = |eps: usize, del: usize, b: usize, g: usize| -> Complex64 {
        let (xe, ye, xd, yd) = (2 * eps, 2 * eps + 1, 2 * del, 2 * del + 1);
        (d2[xe][xd][b][g] + d2[ye][yd][b][g] + i * (d2[xe][yd][b][g] - d2[ye][xd][b][g])) * 0.25
    };
    // Basis order dz¹, dz̄¹, dz², dz̄² ↦ 0, 1, 2, 3.
    let mut c_v = Complex64::new(0.0, 0.0);
    for eps in 0..2 {
        for del in 0..2 {
            for b in 0..2 {
                for g in 0..2 {
                    let s = perm_sign([2 * eps, 2 * del + 1, 2 * b + 1, 2 * g]);
                    if s != 0.0 {
                        c_v += mixed(eps, del, b, g) * s;
                    }
                }
            }
        }
    }
    let lhs = -4.0 * c_v.re;

    let p = pluriharmonic_tensor(chart, target, x)?;
    let y = chart.eval(x);
    let hm = target.metric(&y);
    let mut p_norm2 = 0.0;
    for a in 0..m {
        for b in 0..m {
            for k in 0..d {
                for l in 0..d {
                    p_norm2 += hm[(k, l)] * (p.get(k, a, b) * p.get(l, a, b).conj()).re;
                }
            }
        }
    }
    let tr = p.trace();
    let mut trace_norm2 = 0.0;
    for k in 0..d {
        for l in 0..d {
            trace_norm2 += hm[(k, l)] * (tr[k] * tr[l].conj()).re;
        }
    }
    let (dz, dzb) = wirtinger_jacobians(&chart.jacobian(x));
    let q0 = sampson_q0(&target.curvature(&y), &dz, &dzb);
    let rhs = 4.0 * p_norm2 + 2.0 * q0;
    let rhs_general = 4.0 * (p_norm2 - trace_norm2) + 2.0 * q0;
    Ok(SampsonReport {
        lhs,
        p_norm2,
        trace_norm2,
        q0,
        rhs,
        rhs_general,
        residual: (lhs - rhs).abs(),
    })
}

/// The identity residual, refusing non-harmonic points.
pub fn sampson_identity_residual(chart: &ChartMap, target: &dyn RiemannianChart, x: &[f64], h: f64) -> Result<f64> {
    let flat = Flat { d: chart.m };
    let tn = tension_norm(chart, &MetricPair { domain: &flat, target }, x)?;
    if tn > HARMONIC_TOL {
        return Err(Error::Usage(format!(
            "map is not harmonic at this point (|τ| = {tn:e}); the identity assumes harmonicity"
        )));
    }
    Ok(sampson_identity(chart, target, x, h)?.residual)
}

/// Pluriharmonic tensor and tension of a grid map on a domain in `ℂ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTensors {
    pub vertex: usize,
    /// `P^k = f^k_{zz̄} + Γ^k_ij f^i_z f^j_z̄`.
    pub pluri: Vec<Complex64>,
    /// `τ^k = Δf^k + Γ^k_ij (f^i_x f^j_x + f^i_y f^j_y)`.
    pub tension: Vec<f64>,
    /// Target metric at the vertex value.
    pub metric: DMatrix<f64>,
}

impl GridTensors {
    pub fn pluri_norm(&self) -> f64 {
        let d = self.pluri.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += self.metric[(i, j)] * (self.pluri[i] * self.pluri[j].conj()).re;
            }
        }
        s.max(0.0).sqrt()
    }

    pub fn tension_norm(&self) -> f64 {
        let v = nalgebra::DVector::from_column_slice(&self.tension);
        (v.transpose() * &self.metric * &v)[(0, 0)].max(0.0).sqrt()
    }
}

fn chart_coords(p: &crate::target_spaces::Point) -> Result<Vec<f64>> {
    use crate::target_spaces::Point;
    match p {
        Point::Hyperbolic { x, y } => Ok(vec![*x, *y]),
        Point::Euclidean(v) => Ok(v.iter().copied().collect()),
        _ => Err(Error::Unsupported("grid tensors need a Euclidean or hyperbolic target".into())),
    }
}

/// Central-difference tensors at every vertex with all four grid
/// neighbours, reading the domain positions as `z = x + iy`.
pub fn grid_tensors(
    domain: &crate::domain_complex::DomainGraph,
    map: &crate::domain_complex::DiscreteMap,
    target: &dyn RiemannianChart,
) -> Result<Vec<GridTensors>> {
    map.check(domain)?;
    let coords: Vec<Vec<f64>> = map.values.iter().map(chart_coords).collect::<Result<_>>()?;
    let d = target.dim();
    if coords.first().is_some_and(|c| c.len() != d) {
        return Err(Error::Usage("target chart dimension does not match the map".into()));
    }
    let mut out = Vec::new();
    for (v, incs) in domain.adjacency().iter().enumerate() {
        let Some(p) = domain.vertices[v].pos else { continue };
        // Neighbours at +x, −x, +y, −y.
        let mut nb: [Option<(usize, f64)>; 4] = [None; 4];
        for inc in incs {
            let Some(q) = domain.vertices[inc.nbr].pos else { continue };
            let (ddx, ddy) = (q[0] - p[0], q[1] - p[1]);
            let slot = if ddx.abs() > ddy.abs() {
                if ddx > 0.0 { 0 } else { 1 }
            } else if ddy > 0.0 {
                2
            } else {
                3
            };
            nb[slot] = Some((inc.nbr, ddx.abs().max(ddy.abs())));
        }
        let [Some(xp), Some(xm), Some(yp), Some(ym)] = nb else { continue };
        let f = &coords[v];
        let (hx, hy) = (xp.1, yp.1);
        if (xm.1 - hx).abs() > 1e-12 * hx || (ym.1 - hy).abs() > 1e-12 * hy {
            continue;
        }
        let fx: Vec<f64> = (0..d).map(|k| (coords[xp.0][k] - coords[xm.0][k]) / (2.0 * hx)).collect();
        let fy: Vec<f64> = (0..d).map(|k| (coords[yp.0][k] - coords[ym.0][k]) / (2.0 * hy)).collect();
        let lap: Vec<f64> = (0..d)
            .map(|k| {
                (coords[xp.0][k] - 2.0 * f[k] + coords[xm.0][k]) / (hx * hx)
                    + (coords[yp.0][k] - 2.0 * f[k] + coords[ym.0][k]) / (hy * hy)
            })
            .collect();
        let gn = target.christoffel(f);
        let fz: Vec<Complex64> = (0..d).map(|k| Complex64::new(0.5 * fx[k], -0.5 * fy[k])).collect();
        let mut pluri = Vec::with_capacity(d);
        let mut tension = Vec::with_capacity(d);
        for k in 0..d {
            let mut pk = Complex64::new(0.25 * lap[k], 0.0);
            let mut tk = lap[k];
            for i in 0..d {
                for j in 0..d {
                    let g = gn.get(k, i, j);
                    pk += fz[i] * fz[j].conj() * g;
                    tk += g * (fx[i] * fx[j] + fy[i] * fy[j]);
                }
            }
            pluri.push(pk);
            tension.push(tk);
        }
        out.push(GridTensors { vertex: v, pluri, tension, metric: target.metric(f) });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Negativity tests

#[derive(Clone, Debug, PartialEq)]
pub struct SignReport {
    pub samples: usize,
    /// Draws where the form is above the threshold (Hermitian test) or
    /// not strictly negative (strong test).
    pub violations: usize,
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
    /// Largest value of the form (normalized for the strong test).
    pub worst: f64,
}

fn complex_gauss<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// `R_ijkl A^{il̄} A^{jk̄}` for Hermitian `A`.
pub fn hermitian_form(r: &Curvature, a: &DMatrix<Complex64>) -> f64 {
    let d = r.d;
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let rv = r.get(i, j, k, l);
                    if rv != 0.0 {
                        s += a[(i, l)] * a[(j, k)] * rv;
                    }
                }
            }
        }
    }
    s.re
}

/// Evaluate the Hermitian form on Wishart draws `A = G G*`.
pub fn hermitian_negativity_test<R: Rng + ?Sized>(r: &Curvature, samples: usize, rng: &mut R) -> SignReport {
    let d = r.d;
    let mut rep = SignReport { samples, violations: 0, negative: 0, zero: 0, positive: 0, worst: f64::NEG_INFINITY };
    for _ in 0..samples {
        let g = DMatrix::from_fn(d, d, |_, _| complex_gauss(rng));
        let a = &g * g.adjoint();
        let v = hermitian_form(r, &a);
        rep.worst = rep.worst.max(v);
        if v > 1e-10 {
            rep.violations += 1;
            rep.positive += 1;
        } else if v < -1e-10 {
            rep.negative += 1;
        } else {
            rep.zero += 1;
        }
    }
    if samples == 0 {
        rep.worst = 0.0;
    }
    rep
}

/// `R_{i j̄ k l̄}` stored `[i][j][k][l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KahlerCurvature {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl KahlerCurvature {
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        self.data[((i * self.n + j) * self.n + k) * self.n + l]
    }

    /// Largest violation of `R_{ij̄kl̄} = conj(R_{jīlk̄})`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        worst = worst.max((self.get(i, j, k, l) - self.get(j, i, l, k).conj()).norm());
                    }
                }
            }
        }
        worst
    }

    /// `R_{ij̄kl̄} ξ^{ij} conj(ξ^{lk})`.
    pub fn strong_form(&self, xi: &DMatrix<Complex64>) -> f64 {
        let n = self.n;
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += self.get(i, j, k, l) * xi[(i, j)] * xi[(l, k)].conj();
                    }
                }
            }
        }
        s.re
    }
}

/// A Hermitian metric `h_{ij̄}(w)` on a domain of `ℂ^n`.
pub trait KahlerChart: Send + Sync {
    fn dim(&self) -> usize;
    fn metric(&self, w: &[Complex64]) -> DMatrix<Complex64>;
    fn name(&self) -> &str;
}

pub struct PoincareDisk;
pub struct FubiniStudyLine;
/// Unit ball with the Bergman-type metric `∂∂̄(−log(1 − |w|²))`.
pub struct ComplexBall {
    pub n: usize,
}
pub struct FlatKahler {
    pub n: usize,
}

impl KahlerChart for PoincareDisk {
    fn dim(&self) -> usize {
        1
    }
    fn metric(&self, w: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_element(1, 1, Complex64::new((1.0 - w[0].norm_sqr()).powi(-2), 0.0))
    }
    fn name(&self) -> &str {
        "poincare"
    }
}

impl KahlerChart for FubiniStudyLine {
    fn dim(&self) -> usize {
        1
    }
    fn metric(&self, w: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_element(1, 1, Complex64::new((1.0 + w[0].norm_sqr()).powi(-2), 0.0))
    }
    fn name(&self) -> &str {
        "fubini-study"
    }
}

impl KahlerChart for ComplexBall {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric(&self, w: &[Complex64]) -> DMatrix<Complex64> {
        let s = 1.0 - w.iter().map(|z| z.norm_sqr()).sum::<f64>();
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let delta = if i == j { 1.0 / s } else { 0.0 };
            Complex64::new(delta, 0.0) + w[i].conj() * w[j] / (s * s)
        })
    }
    fn name(&self) -> &str {
        "ball"
    }
}

impl KahlerChart for FlatKahler {
    fn dim(&self) -> usize {
        self.n
    }
    fn metric(&self, _: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::identity(self.n, self.n)
    }
    fn name(&self) -> &str {
        "flat"
    }
}

pub fn kahler_chart(name: &str) -> Result<Box<dyn KahlerChart>> {
    match name {
        "poincare" => Ok(Box::new(PoincareDisk)),
        "fubini-study" => Ok(Box::new(FubiniStudyLine)),
        "ball" => Ok(Box::new(ComplexBall { n: 2 })),
        "flat" => Ok(Box::new(FlatKahler { n: 2 })),
        _ => Err(Error::Usage(format!("unknown Kähler chart '{name}'"))),
    }
}

/// `R_{ij̄kl̄} = −∂_k∂_l̄ h_{ij̄} + h^{pq̄} ∂_k h_{iq̄} ∂_l̄ h_{pj̄}` by central differences.
pub fn kahler_curvature(chart: &dyn KahlerChart, w: &[Complex64], h: f64) -> KahlerCurvature {
    let n = chart.dim();
    let at = |k: usize, ds: f64, dt: f64| -> Vec<Complex64> {
        let mut v = w.to_vec();
        v[k] += Complex64::new(ds, dt);
        v
    };
    let i = Complex64::i();
    // ∂_k h = ½(∂s − i∂t) h, ∂_k̄ h = ½(∂s + i∂t) h.
    let ds = |k: usize| (chart.metric(&at(k, h, 0.0)) - chart.metric(&at(k, -h, 0.0))) / Complex64::new(2.0 * h, 0.0);
    let dt = |k: usize| (chart.metric(&at(k, 0.0, h)) - chart.metric(&at(k, 0.0, -h))) / Complex64::new(2.0 * h, 0.0);
    let dk: Vec<DMatrix<Complex64>> = (0..n).map(|k| (ds(k) - dt(k) * i) * Complex64::new(0.5, 0.0)).collect();
    let dkb: Vec<DMatrix<Complex64>> = (0..n).map(|k| (ds(k) + dt(k) * i) * Complex64::new(0.5, 0.0)).collect();
    // Mixed second derivatives ∂_k ∂_l̄ h over real coordinates.
    let h0 = chart.metric(w);
    let shift2 = |k: usize, a: Complex64, l: usize, b: Complex64| -> DMatrix<Complex64> {
        let mut v = w.to_vec();
        v[k] += a;
        v[l] += b;
        chart.metric(&v)
    };
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let second = |k: usize, l: usize, dir_k: Complex64, dir_l: Complex64| -> DMatrix<Complex64> {
        // directional second derivative along real directions dir_k (coord k) and dir_l (coord l)
        let pp = shift2(k, dir_k * h, l, dir_l * h);
        let pm = shift2(k, dir_k * h, l, -dir_l * h);
        let mp = shift2(k, -dir_k * h, l, dir_l * h);
        let mm = shift2(k, -dir_k * h, l, -dir_l * h);
        (pp - pm - mp + mm) / c(4.0 * h * h, 0.0)
    };
    let _ = &h0;
    let inv = chart.metric(w).try_inverse().expect("singular Hermitian metric");
    let mut data = vec![c(0.0, 0.0); n.pow(4)];
    for k in 0..n {
        for l in 0..n {
            let (one, im) = (c(1.0, 0.0), c(0.0, 1.0));
            let sxx = second(k, l, one, one);
            let syy = second(k, l, im, im);
            let sxy = second(k, l, one, im);
            let syx = second(k, l, im, one);
            // ¼(∂sk − i∂tk)(∂sl + i∂tl)
            let ddbar = (sxx + syy + (sxy - syx) * i) * c(0.25, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let mut v = -ddbar[(a, b)];
                    for p in 0..n {
                        for q in 0..n {
                            v += inv[(q, p)] * dk[k][(a, q)] * dkb[l][(p, b)];
                        }
                    }
                    data[((a * n + b) * n + k) * n + l] = v;
                }
            }
        }
    }
    KahlerCurvature { n, data }
}

/// Evaluate the strong-negativity form on random `ξ = A B̄ᵀ − C D̄ᵀ`.
/// Values are normalized by `|ξ|²`; draws with `|ξ|` below `1e-8` are redrawn.
pub fn strong_negativity_test<R: Rng + ?Sized>(kc: &KahlerCurvature, samples: usize, rng: &mut R) -> SignReport {
    let n = kc.n;
    let mut rep = SignReport { samples, violations: 0, negative: 0, zero: 0, positive: 0, worst: f64::NEG_INFINITY };
    let mut done = 0;
    while done < samples {
        let v = |rng: &mut R| -> Vec<Complex64> { (0..n).map(|_| complex_gauss(rng)).collect() };
        let (a, b, c, d) = (v(rng), v(rng), v(rng), v(rng));
        let xi = DMatrix::from_fn(n, n, |i, j| a[i] * b[j].conj() - c[i] * d[j].conj());
        let size = xi.norm_squared();
        if size.sqrt() < 1e-8 {
            continue;
        }
        done += 1;
        let val = kc.strong_form(&xi) / size;
        rep.worst = rep.worst.max(val);
        if val < -1e-12 {
            rep.negative += 1;
        } else {
            rep.violations += 1;
            if val > 1e-12 {
                rep.positive += 1;
            } else {
                rep.zero += 1;
            }
        }
    }
    if samples == 0 {
        rep.worst = 0.0;
    }
    rep
}

// ---------------------------------------------------------------------------
// Built-in chart maps

/// A named chart map with its metrics and a sampling box for test points.
pub struct NamedChart {
    pub name: &'static str,
    pub map: ChartMap,
    pub domain: Box<dyn RiemannianChart>,
    pub target: Box<dyn RiemannianChart>,
    /// Per coordinate (low, high) for random sample points.
    pub sample_box: Vec<(f64, f64)>,
    pub complex_domain: bool,
}

impl NamedChart {
    pub fn metrics(&self) -> MetricPair<'_> {
        MetricPair { domain: self.domain.as_ref(), target: self.target.as_ref() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_box.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
    }
}

fn zeros_hess(m: usize, d: usize) -> Vec<DMatrix<f64>> {
    vec![DMatrix::zeros(m, m); d]
}

pub fn identity_half_plane() -> ChartMap {
    ChartMap::new(2, 2, |x| x.to_vec())
        .with_jacobian(|_| DMatrix::identity(2, 2))
        .with_hessian(|_| zeros_hess(2, 2))
}

pub fn named_chart(name: &str) -> Result<NamedChart> {
    let half = vec![(-1.0, 1.0), (0.5, 2.0)];
    let c2 = vec![(-0.5, 0.5); 4];
    let nc = |name, map, domain: Box<dyn RiemannianChart>, target: Box<dyn RiemannianChart>, sample_box, complex_domain| NamedChart {
        name,
        map,
        domain,
        target,
        sample_box,
        complex_domain,
    };
    Ok(match name {
        // identity of the half-plane, flat metric to hyperbolic metric
        "hyperbolic" => nc("hyperbolic", identity_half_plane(), Box::new(Flat { d: 2 }), Box::new(HalfPlane), half, true),
        "scaled" => nc(
            "scaled",
            ChartMap::new(2, 2, |x| vec![x[0], 2.0 * x[1]])
                .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]))
                .with_hessian(|_| zeros_hess(2, 2)),
            Box::new(Flat { d: 2 }),
            Box::new(HalfPlane),
            half,
            true,
        ),
        "geodesic" => nc(
            "geodesic",
            ChartMap::new(1, 2, |x| vec![0.0, x[0].exp()])
                .with_jacobian(|x| DMatrix::from_row_slice(2, 1, &[0.0, x[0].exp()]))
                .with_hessian(|x| vec![DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, x[0].exp())]),
            Box::new(Flat { d: 1 }),
            Box::new(HalfPlane),
            vec![(-1.0, 1.0)],
            false,
        ),
        "affine" => nc(
            "affine",
            ChartMap::new(2, 2, |x| vec![1.0 + 2.0 * x[0] - x[1], 0.5 * x[0] + 3.0 * x[1]])
                .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.5, 3.0]))
                .with_hessian(|_| zeros_hess(2, 2)),
            Box::new(Flat { d: 2 }),
            Box::new(Flat { d: 2 }),
            vec![(-1.0, 1.0); 2],
            true,
        ),
        // (0, exp(Re z1 + Re z2)): a geodesic after a pluriharmonic function
        "product-geodesics" => nc(
            "product-geodesics",
            ChartMap::new(4, 2, |x| vec![0.0, (x[0] + x[2]).exp()]).with_jacobian(|x| {
                let e = (x[0] + x[2]).exp();
                DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 0.0, 0.0, e, 0.0, e, 0.0])
            }),
            Box::new(Flat { d: 4 }),
            Box::new(HalfPlane),
            c2.clone(),
            true,
        ),
        // z1 + 2 z2 + 3i, holomorphic into the half-plane
        "holomorphic" => nc(
            "holomorphic",
            ChartMap::new(4, 2, |x| vec![x[0] + 2.0 * x[2], x[1] + 2.0 * x[3] + 3.0])
                .with_jacobian(|_| DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 2.0]))
                .with_hessian(|_| zeros_hess(4, 2)),
            Box::new(Flat { d: 4 }),
            Box::new(HalfPlane),
            c2.clone(),
            true,
        ),
        // (Re(z1 z̄2), 0): harmonic but not pluriharmonic
        "flat-harmonic" => nc(
            "flat-harmonic",
            ChartMap::new(4, 2, |x| vec![x[0] * x[2] + x[1] * x[3], 0.0])
                .with_jacobian(|x| DMatrix::from_row_slice(2, 4, &[x[2], x[3], x[0], x[1], 0.0, 0.0, 0.0, 0.0])),
            Box::new(Flat { d: 4 }),
            Box::new(Flat { d: 2 }),
            c2,
            true,
        ),
        _ => return Err(Error::Usage(format!("unknown chart '{name}'"))),
    })
}

pub const NAMED_CHARTS: &[&str] = &["hyperbolic", "scaled", "geodesic", "affine", "product-geodesics", "holomorphic", "flat-harmonic"];
