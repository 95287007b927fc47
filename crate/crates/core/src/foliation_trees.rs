//! Projections of `ℂ` onto `(k+2)`-pods along the foliation of `zᵏ dz²`.
//!
//! Sector convention: sector `j` is centred on the angle `2πj/(k+2)` and
//! bounded by the critical leaves at angles `(2j ± 1)π/(k+2)`. Sector 0
//! contains the positive real axis. The natural parameter uses the angle
//! branch `θ ∈ [−π/(k+2), 2π − π/(k+2))`, on which `(−1)^j Re w ≥ 0` in
//! sector `j`. The projection collapses the components of `{Re w = c}`:
//! `z ↦ (j, |Re w|)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain_complex::{build_grid_domain, DiscreteMap, DomainGraph, GridShape, Representation};
use crate::error::{Error, Result};
use crate::harmonic_solver::Problem;
use crate::target_spaces::{NpcSpace, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct FoliationSpec {
    /// Order of the differential `zᵏ dz²`.
    pub k: usize,
    /// Centre of the square sampling window.
    pub center: [f64; 2],
    /// Half side length of the window.
    pub half_width: f64,
    /// Grid points per side.
    pub resolution: usize,
    /// Jitter as a fraction of the spacing. Vertices are offset by
    /// `±jitter·Δ` along one seeded direction, alternating like a checkerboard.
    pub jitter: f64,
    pub seed: u64,
}

impl FoliationSpec {
    pub fn new(k: usize, half_width: f64, resolution: usize) -> Result<Self> {
        let s = FoliationSpec {
            k,
            center: [0.0, 0.0],
            half_width,
            resolution,
            jitter: 1.0 / 7.0,
            seed: 0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Usage("the differential order k must be at least 1".into()));
        }
        if !(self.half_width > 0.0) || self.resolution < 3 {
            return Err(Error::Usage("window needs a positive half width and resolution ≥ 3".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Usage("jitter fraction must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    pub fn arms(&self) -> usize {
        self.k + 2
    }

    pub fn space(&self) -> NpcSpace {
        NpcSpace::Pod { k: self.arms() }
    }

    /// Grid spacing.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.resolution - 1) as f64
    }
}

/// Angle of `z` in `[−π/(k+2), 2π − π/(k+2))`.
fn branch_angle(k: usize, z: Complex64) -> f64 {
    let lo = -PI / (k + 2) as f64;
    let mut t = z.arg();
    while t < lo {
        t += 2.0 * PI;
    }
    while t >= lo + 2.0 * PI {
        t -= 2.0 * PI;
    }
    t
}

/// Sector index of `z` (0 for `z = 0`).
pub fn sector(k: usize, z: Complex64) -> usize {
    if z == Complex64::new(0.0, 0.0) {
        return 0;
    }
    let lo = -PI / (k + 2) as f64;
    let j = ((branch_angle(k, z) - lo) / (2.0 * PI / (k + 2) as f64)).floor() as usize;
    j.min(k + 1)
}

/// `w = (2/(k+2)) z^{(k+2)/2}` on the branch described in the module docs.
pub fn natural_parameter(k: usize, z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let e = (k + 2) as f64 / 2.0;
    Complex64::from_polar(r.powf(e) / e, e * branch_angle(k, z))
}

/// `(−1)^j w`, the parameter adapted to the sector of `z`.
pub fn sector_parameter(k: usize, z: Complex64) -> Complex64 {
    let w = natural_parameter(k, z);
    if sector(k, z) % 2 == 0 {
        w
    } else {
        -w
    }
}

pub fn project_to_pod(k: usize, z: Complex64) -> Point {
    let radius = sector_parameter(k, z).re.max(0.0);
    if radius == 0.0 {
        return Point::pod(0, 0.0);
    }
    Point::pod(sector(k, z), radius)
}

/// Angles of the critical leaves through 0.
pub fn critical_angles(k: usize) -> Vec<f64> {
    (0..k + 2).map(|j| (2 * j + 1) as f64 * PI / (k + 2) as f64).collect()
}

/// Distance from `z` to the union of critical leaves (half-lines from 0).
pub fn distance_to_critical(k: usize, z: Complex64) -> f64 {
    critical_angles(k)
        .into_iter()
        .map(|a| {
            let dir = Complex64::from_polar(1.0, a);
            let along = (z * dir.conj()).re;
            if along <= 0.0 {
                z.norm()
            } else {
                (z * dir.conj()).im.abs()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Grid over the window with jittered sample positions.
pub struct FoliationGrid {
    pub domain: DomainGraph,
    pub points: Vec<Complex64>,
    pub map: DiscreteMap,
    pub spacing: f64,
}

pub fn sample_grid(spec: &FoliationSpec) -> Result<FoliationGrid> {
    spec.validate()?;
    let side = 2.0 * spec.half_width;
    let domain = build_grid_domain(GridShape::Rectangle { width: side, height: side }, spec.resolution, None)?;
    let dx = spec.spacing();
    let amp = spec.jitter * dx;
    // Alternating offsets ±amp·e along one seeded direction e.
    let alpha = ChaCha8Rng::seed_from_u64(spec.seed).random_range(0.0..2.0 * PI);
    let e = Complex64::from_polar(amp, alpha);
    let n = spec.resolution;
    let points: Vec<Complex64> = domain
        .vertices
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let p = v.pos.expect("grid vertices carry positions");
            let sign = if (idx % n + idx / n) % 2 == 0 { 1.0 } else { -1.0 };
            Complex64::new(p[0] - spec.half_width + spec.center[0], p[1] - spec.half_width + spec.center[1]) + e * sign
        })
        .collect();
    let map = DiscreteMap {
        space: spec.space(),
        values: points.iter().map(|&z| project_to_pod(spec.k, z)).collect(),
    };
    Ok(FoliationGrid { domain, points, map, spacing: dx })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeResidual {
    pub spacing: f64,
    /// Largest displacement under one local replacement.
    pub residual: f64,
    pub checked: usize,
    pub excluded: usize,
}

/// Largest displacement `d(u(v), local_replace(v))` over interior vertices
/// farther than `exclusion · Δ` from the critical leaves.
pub fn tree_harmonicity_residual(spec: &FoliationSpec, exclusion: f64) -> Result<TreeResidual> {
    let grid = sample_grid(spec)?;
    let space = spec.space();
    let rep = Representation::trivial(space);
    let problem = Problem::new(&grid.domain, &rep)?;
    let mut out = TreeResidual {
        spacing: grid.spacing,
        residual: 0.0,
        checked: 0,
        excluded: 0,
    };
    for v in grid.domain.interior() {
        if distance_to_critical(spec.k, grid.points[v]) <= exclusion * grid.spacing {
            out.excluded += 1;
            continue;
        }
        out.residual = out.residual.max(problem.local_residual(&grid.map, v)?);
        out.checked += 1;
    }
    Ok(out)
}

/// Which radius counts as "on the singular leaf".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocusThreshold {
    /// `radius ≤ Δ`.
    Plain,
    /// `radius ≤ Δ · |z|^{k/2}`, i.e. within about `Δ` of a leaf in the domain.
    Scaled,
}

/// Sample points whose image radius is below the threshold.
pub fn singular_locus(spec: &FoliationSpec, threshold: LocusThreshold) -> Result<Vec<Complex64>> {
    let grid = sample_grid(spec)?;
    let d = grid.spacing;
    Ok(grid
        .points
        .iter()
        .zip(&grid.map.values)
        .filter(|(z, p)| {
            let Point::Pod { radius, .. } = p else { return false };
            let bound = match threshold {
                LocusThreshold::Plain => d,
                LocusThreshold::Scaled => d * z.norm().powf(spec.k as f64 / 2.0),
            };
            *radius <= bound
        })
        .map(|(z, _)| *z)
        .collect())
}

/// Hausdorff distance between a point set and the critical leaves clipped
/// to the sampling window. The leaves are sampled with step `Δ/8`.
pub fn hausdorff_to_leaves(spec: &FoliationSpec, set: &[Complex64]) -> f64 {
    if set.is_empty() {
        return f64::INFINITY;
    }
    let to_leaves = set.iter().map(|&z| distance_to_critical(spec.k, z)).fold(0.0, f64::max);
    let (cx, cy, hw) = (spec.center[0], spec.center[1], spec.half_width);
    let inside = |z: Complex64| (z.re - cx).abs() <= hw && (z.im - cy).abs() <= hw;
    let step = spec.spacing() / 8.0;
    let reach = cx.abs().max(cy.abs()) + 2.0 * hw;
    let mut to_set: f64 = 0.0;
    for a in critical_angles(spec.k) {
        let dir = Complex64::from_polar(1.0, a);
        let mut s = 0.0;
        while s <= reach {
            let z = dir * s;
            if inside(z) {
                let near = set.iter().map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min);
                to_set = to_set.max(near);
            }
            s += step;
        }
    }
    to_leaves.max(to_set)
}
