//! Harmonic metrics and flat connections for SL(n).
//!
//! A metric is a map `h` into the positive unimodular matrices. Its
//! one-form `θ = −½ h⁻¹ dh` is discretized on oriented edges at the tail
//! vertex, `θ_e = −½ h_u⁻¹ (h_v − h_u) / Δ`, so that `h θ_e = −½ dh_e`
//! holds exactly.

use num_complex::Complex64;
use rand::Rng;

use crate::barycenter::resolve_twists;
use crate::domain_complex::{build_grid_domain, glue_periodic_grid, DiscreteMap, DomainGraph, GridShape, Representation, Word};
use crate::error::{Error, Result};
use crate::harmonic_solver::{equivariant_initial_map, solve_equivariant, SolveConfig};
use crate::linalg::{self, CMat};
use crate::target_spaces::{self as ts, Field, Isometry, NpcSpace, Point};

/// `Ψ(g) = g⁻¹* g⁻¹`.
pub fn psi(g: &CMat) -> Result<CMat> {
    let gi = linalg::inverse(g)?;
    Ok(linalg::hermitian_part(&(gi.adjoint() * &gi)))
}

/// `(n/2) tr(h⁻¹ x h⁻¹ y)`.
pub fn g_metric(h: &CMat, x: &CMat, y: &CMat) -> Result<f64> {
    Ok(ts::spd_metric(&linalg::inverse(h)?, x, y))
}

/// `B(X, Y) = 2n tr(XY)`.
pub fn killing_form(x: &CMat, y: &CMat) -> f64 {
    2.0 * x.nrows() as f64 * linalg::trace(&(x * y)).re
}

/// Compare `g_ℋ(dΨ X, dΨ Y)` at `Ψ(g)` with `B(X, Y)`, where `X, Y` are
/// self-adjoint trace-free directions pushed to `gK` by left translation
/// and `dΨ` is a central difference of step `step`.
pub fn psi_isometry_residual(g: &CMat, x: &CMat, y: &CMat, step: f64) -> Result<f64> {
    let curve = |dir: &CMat, s: f64| psi(&(g * linalg::herm_exp(&(dir * Complex64::new(s, 0.0)))));
    let d = |dir: &CMat| -> Result<CMat> { Ok((curve(dir, step)? - curve(dir, -step)?) / Complex64::new(2.0 * step, 0.0)) };
    let h = psi(g)?;
    Ok((g_metric(&h, &d(x)?, &d(y)?)? - killing_form(x, y)).abs())
}

/// `H(s, t) = s̄ᵀ h t`.
pub fn hermitian_pairing(h: &CMat, s: &[Complex64], t: &[Complex64]) -> Result<Complex64> {
    let n = h.nrows();
    if s.len() != n || t.len() != n {
        return Err(Error::Usage(format!("vectors must have length {n}")));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += s[i].conj() * h[(i, j)] * t[j];
        }
    }
    Ok(acc)
}

/// `−½ h [h⁻¹X, h⁻¹Y]`.
pub fn connection_difference(h: &CMat, x: &CMat, y: &CMat) -> Result<CMat> {
    let hi = linalg::inverse(h)?;
    Ok(h * linalg::commutator(&(&hi * x), &(&hi * y)) * Complex64::new(-0.5, 0.0))
}

/// Differentiate the field `Y` along the geodesic from `h` in direction `X`
/// in two ways: in the flat frame `Y ↦ h⁻¹Y` and by Levi-Civita parallel
/// transport. Returns the largest entry of `(flat − LC) − connection_difference`.
pub fn connection_difference_residual(h: &CMat, x: &CMat, field: &dyn Fn(&CMat) -> CMat, step: f64) -> Result<f64> {
    let s = linalg::pd_sqrt(h)?;
    let si = linalg::inverse(&s)?;
    let a = &si * x * &si;
    let gamma = |t: f64| &s * linalg::herm_exp(&(&a * Complex64::new(t, 0.0))) * &s;
    // Parallel transport back to h along the geodesic.
    let back = |t: f64, v: &CMat| {
        let e = linalg::herm_exp(&(&a * Complex64::new(-0.5 * t, 0.0)));
        &s * &e * &si * v * &si * &e * &s
    };
    let two = Complex64::new(2.0 * step, 0.0);
    let (gp, gm) = (gamma(step), gamma(-step));
    let lc = (back(step, &field(&gp)) - back(-step, &field(&gm))) / two;
    let flat = h * (linalg::inverse(&gp)? * field(&gp) - linalg::inverse(&gm)? * field(&gm)) / two;
    let y0 = field(h);
    let want = connection_difference(h, x, &y0)?;
    Ok((flat - lc - want).map(|z| z.norm()).max())
}

/// `θ` on one oriented edge, stored at its tail.
#[derive(Clone, Debug)]
pub struct ThetaEdge {
    pub edge: usize,
    pub tail: usize,
    /// True for the edge's own orientation `u → v`.
    pub forward: bool,
    /// Grid axis of the edge (0 for x, 1 for y).
    pub axis: usize,
    pub spacing: f64,
    /// Head value transported into the tail's frame.
    pub head_value: CMat,
    pub theta: CMat,
}

#[derive(Clone, Debug)]
pub struct ThetaField {
    pub base: Vec<CMat>,
    /// Both orientations of every edge.
    pub edges: Vec<ThetaEdge>,
}

impl ThetaField {
    /// Largest `|tr θ_e|`.
    pub fn trace_defect(&self) -> f64 {
        self.edges.iter().map(|e| linalg::trace(&e.theta).norm()).fold(0.0, f64::max)
    }

    /// Largest `‖h⁻¹ θ* h − θ‖`.
    pub fn self_adjoint_defect(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for e in &self.edges {
            let h = &self.base[e.tail];
            let d = linalg::inverse(h)? * e.theta.adjoint() * h - &e.theta;
            worst = worst.max(linalg::frob(&d));
        }
        Ok(worst)
    }

    /// Largest `‖h θ_e + ½ (h_v − h_u)/Δ‖`.
    pub fn identity_defect(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let h = &self.base[e.tail];
                let dh = (&e.head_value - h) / Complex64::new(e.spacing, 0.0);
                linalg::frob(&(h * &e.theta + dh * Complex64::new(0.5, 0.0)))
            })
            .fold(0.0, f64::max)
    }
}

fn spd_values(map: &DiscreteMap) -> Result<Vec<CMat>> {
    if !matches!(map.space, NpcSpace::Spd { .. }) {
        return Err(Error::Usage(format!("θ needs an spd target, not {}", map.space)));
    }
    map.values.iter().map(|p| p.as_spd().cloned()).collect()
}

fn edge_axis(domain: &DomainGraph, e: usize) -> usize {
    if let Some(g) = &domain.grid {
        if g.wrap_x.contains(&e) {
            return 0;
        }
        if g.wrap_y.contains(&e) {
            return 1;
        }
    }
    let edge = &domain.edges[e];
    match (domain.vertices[edge.u].pos, domain.vertices[edge.v].pos) {
        (Some(a), Some(b)) if (b[1] - a[1]).abs() > (b[0] - a[0]).abs() => 1,
        _ => 0,
    }
}

/// `θ_e = −½ h_u⁻¹ (h_v − h_u) / Δ` on both orientations of every edge.
///
/// `Δ` is the grid spacing along the edge's axis, or `spacing` when the
/// domain carries no grid. Twisted edges see the transported head value.
pub fn theta_field(domain: &DomainGraph, rep: Option<&Representation>, map: &DiscreteMap, spacing: Option<f64>) -> Result<ThetaField> {
    map.check(domain)?;
    let base = spd_values(map)?;
    let twists = match rep {
        Some(r) => resolve_twists(domain, r)?,
        None => {
            if domain.has_twists() {
                return Err(Error::Usage("twisted domain needs a representation".into()));
            }
            vec![None; domain.edges.len()]
        }
    };
    let steps = match (&domain.grid, spacing) {
        (_, Some(s)) if s > 0.0 => [s, s],
        (Some(g), None) => [g.dx, g.dy],
        _ => return Err(Error::Usage("θ needs a grid domain or an explicit positive spacing".into())),
    };
    let mut edges = Vec::with_capacity(2 * domain.edges.len());
    for inc_list in domain.adjacency() {
        for inc in inc_list {
            let e = &domain.edges[inc.edge];
            let tail = if inc.forward { e.u } else { e.v };
            let head = Point::Spd(base[inc.nbr].clone());
            let head_value = match &twists[inc.edge] {
                Some((g, gi)) => ts::apply_unchecked(if inc.forward { g } else { gi }, &head)?.as_spd()?.clone(),
                None => base[inc.nbr].clone(),
            };
            let axis = edge_axis(domain, inc.edge);
            let step = steps[axis];
            let h = &base[tail];
            let theta = linalg::inverse(h)? * (&head_value - h) * Complex64::new(-0.5 / step, 0.0);
            edges.push(ThetaEdge {
                edge: inc.edge,
                tail,
                forward: inc.forward,
                axis,
                spacing: step,
                head_value,
                theta,
            });
        }
    }
    Ok(ThetaField { base, edges })
}

/// Per-vertex, per-axis data reconstructed from the two oriented edges
/// leaving a vertex along that axis.
struct AxisStencil {
    h: CMat,
    plus: CMat,
    minus: CMat,
    /// `Φ = hθ` on the `+` and `−` oriented edges.
    phi_plus: CMat,
    phi_minus: CMat,
    step: f64,
}

fn stencils(theta: &ThetaField) -> Vec<Option<Vec<AxisStencil>>> {
    let n = theta.base.len();
    let mut by_vertex: Vec<[[Option<&ThetaEdge>; 2]; 2]> = vec![[[None; 2]; 2]; n];
    for e in &theta.edges {
        by_vertex[e.tail][e.axis][if e.forward { 0 } else { 1 }] = Some(e);
    }
    by_vertex
        .iter()
        .enumerate()
        .map(|(v, axes)| {
            let mut out = Vec::new();
            let mut any_half = false;
            for pair in axes {
                match pair {
                    [Some(p), Some(m)] => {
                        let h = theta.base[v].clone();
                        out.push(AxisStencil {
                            phi_plus: &h * &p.theta,
                            phi_minus: &h * &m.theta * Complex64::new(-1.0, 0.0),
                            plus: p.head_value.clone(),
                            minus: m.head_value.clone(),
                            h,
                            step: p.spacing,
                        });
                    }
                    [None, None] => {}
                    _ => any_half = true,
                }
            }
            (!any_half && !out.is_empty()).then_some(out)
        })
        .collect()
}

/// Discrete `d_D* θ = −Σ_axes (θ′ + ½[h⁻¹h′, θ])` at vertices with a full
/// stencil; `None` at boundary vertices.
///
/// At each vertex `Φ = hθ` is averaged from the two outgoing edges, its
/// derivative is their difference quotient, and `θ = h⁻¹Φ` is
/// differentiated with `h′` by central differences.
pub fn covariant_divergence(theta: &ThetaField) -> Result<Vec<Option<CMat>>> {
    stencils(theta)
        .into_iter()
        .map(|st| {
            let Some(axes) = st else { return Ok(None) };
            let n = axes[0].h.nrows();
            let mut acc = CMat::zeros(n, n);
            for a in &axes {
                let hi = linalg::inverse(&a.h)?;
                let phi = (&a.phi_plus + &a.phi_minus) * Complex64::new(0.5, 0.0);
                let dphi = (&a.phi_plus - &a.phi_minus) / Complex64::new(a.step, 0.0);
                let dh = (&a.plus - &a.minus) / Complex64::new(2.0 * a.step, 0.0);
                let th = &hi * &phi;
                let dth = &hi * &dphi - &hi * &dh * &hi * &phi;
                let conn = &hi * &dh;
                acc -= dth + linalg::commutator(&conn, &th) * Complex64::new(0.5, 0.0);
            }
            Ok(Some(acc))
        })
        .collect()
}

/// Continuum tension `h⁻¹(h″ − h′h⁻¹h′)` by central differences per axis.
pub fn fd_tension(theta: &ThetaField) -> Result<Vec<Option<CMat>>> {
    stencils(theta)
        .into_iter()
        .map(|st| {
            let Some(axes) = st else { return Ok(None) };
            let n = axes[0].h.nrows();
            let mut acc = CMat::zeros(n, n);
            for a in &axes {
                let hi = linalg::inverse(&a.h)?;
                let d2 = (&a.plus - &a.h * Complex64::new(2.0, 0.0) + &a.minus) / Complex64::new(a.step * a.step, 0.0);
                let d1 = (&a.plus - &a.minus) / Complex64::new(2.0 * a.step, 0.0);
                acc += &hi * (d2 - &d1 * &hi * &d1);
            }
            Ok(Some(acc))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceResidual {
    /// Largest Frobenius norm of the finite-difference tension.
    pub tension_residual: f64,
    /// Largest Frobenius norm of `d_D* θ`.
    pub divergence_norm: f64,
    /// Largest `‖hθ + ½dh‖`, zero by construction.
    pub identity_defect: f64,
    pub trace_defect: f64,
}

fn max_norm(v: &[Option<CMat>]) -> f64 {
    v.iter().flatten().map(linalg::frob).fold(0.0, f64::max)
}

pub fn correspondence_residual(
    domain: &DomainGraph,
    rep: Option<&Representation>,
    map: &DiscreteMap,
    spacing: Option<f64>,
) -> Result<CorrespondenceResidual> {
    let theta = theta_field(domain, rep, map, spacing)?;
    Ok(CorrespondenceResidual {
        tension_residual: max_norm(&fd_tension(&theta)?),
        divergence_norm: max_norm(&covariant_divergence(&theta)?),
        identity_defect: theta.identity_defect(),
        trace_defect: theta.trace_defect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementRow {
    pub n: usize,
    pub energy: f64,
    pub sweeps: usize,
    pub residual: CorrespondenceResidual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementStudy {
    pub rows: Vec<RefinementRow>,
    pub tension_order: f64,
    pub divergence_order: f64,
}

/// Least-squares slope of `−log y` against `log n`.
pub fn measured_order(ns: &[usize], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let zs: Vec<f64> = ys.iter().map(|y| -y.ln()).collect();
    let k = xs.len() as f64;
    let (mx, mz) = (xs.iter().sum::<f64>() / k, zs.iter().sum::<f64>() / k);
    let num: f64 = xs.iter().zip(&zs).map(|(x, z)| (x - mx) * (z - mz)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// Twisted unit-length cycle with one generator `A`.
pub fn twisted_cycle(n: usize, generator: &CMat, field: Field) -> Result<(DomainGraph, Representation)> {
    let space = NpcSpace::Spd { n: generator.nrows(), field };
    let rep = Representation::new(space, [("A".to_string(), Isometry::Spd(generator.clone()))].into(), vec![])?;
    let base = build_grid_domain(GridShape::Circle { length: 1.0 }, n, None)?;
    let domain = glue_periodic_grid(&base, &rep, Some(&Word::generator("A")), None)?;
    Ok((domain, rep))
}

/// Solve the twisted cycle for each size and measure convergence orders.
pub fn refinement_study(generator: &CMat, field: Field, sizes: &[usize], cfg: &SolveConfig) -> Result<RefinementStudy> {
    let mut rows = Vec::new();
    for &n in sizes {
        let (domain, rep) = twisted_cycle(n, generator, field)?;
        let init = equivariant_initial_map(&domain, &rep)?;
        let (map, trace) = solve_equivariant(&domain, &rep, init, cfg)?;
        rows.push(RefinementRow {
            n,
            energy: trace.final_energy(),
            sweeps: trace.records.len(),
            residual: correspondence_residual(&domain, Some(&rep), &map, None)?,
        });
    }
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.residual.tension_residual).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.residual.divergence_norm).collect();
    Ok(RefinementStudy {
        tension_order: measured_order(&ns, &t),
        divergence_order: measured_order(&ns, &d),
        rows,
    })
}

/// Largest Ψ-isometry residual over random `(g, X, Y)`.
pub fn psi_isometry_sweep<R: Rng + ?Sized>(n: usize, field: Field, samples: usize, rng: &mut R) -> Result<f64> {
    let space = NpcSpace::Spd { n, field };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let Isometry::Spd(g) = ts::random_isometry(&space, 1.0, rng) else { unreachable!() };
        let x = ts::random_traceless_hermitian(n, field, 1.0, rng);
        let y = ts::random_traceless_hermitian(n, field, 1.0, rng);
        worst = worst.max(psi_isometry_residual(&g, &x, &y, 1e-4)?);
    }
    Ok(worst)
}
