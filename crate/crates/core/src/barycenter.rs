//! Weighted centres of mass and ball-average mollification.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::domain_complex::{DiscreteMap, DomainGraph, Representation, Word};
use crate::error::{Error, Result};
use crate::target_spaces::{self as ts, Isometry, NpcSpace, Point, Tangent, TangentVec};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Clone, Debug)]
pub struct WeightedCloud {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl WeightedCloud {
    /// Normalizes the weights to sum to one.
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Usage("empty point cloud".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Usage(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Usage(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(WeightedCloud { points, weights })
    }

    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    pub fn check(&self, space: &NpcSpace) -> Result<()> {
        for p in &self.points {
            space.check_point(p)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KarcherOutcome {
    pub point: Point,
    pub iterations: usize,
    /// Norm of the final gradient step `Σ wᵢ log_Q pᵢ` (0 for closed forms).
    pub displacement: f64,
}

/// `I(Q) = Σ wᵢ d²(pᵢ, Q)`.
pub fn objective(space: &NpcSpace, cloud: &WeightedCloud, q: &Point) -> Result<f64> {
    let mut s = 0.0;
    for (p, w) in cloud.points.iter().zip(&cloud.weights) {
        s += w * ts::distance_unchecked(space, p, q)?.powi(2);
    }
    Ok(s)
}

pub fn karcher_mean(space: &NpcSpace, cloud: &WeightedCloud, tol: f64, max_iter: usize) -> Result<Point> {
    Ok(karcher_mean_from(space, cloud, None, tol, max_iter)?.point)
}

/// Karcher mean with an optional starting point for the iteration.
pub fn karcher_mean_from(
    space: &NpcSpace,
    cloud: &WeightedCloud,
    start: Option<&Point>,
    tol: f64,
    max_iter: usize,
) -> Result<KarcherOutcome> {
    if !(tol > 0.0) {
        return Err(Error::Usage("tolerance must be positive".into()));
    }
    cloud.check(space)?;
    if let Some(s) = start {
        space.check_point(s)?;
    }
    karcher_unchecked(space, cloud, start, tol, max_iter)
}

pub(crate) fn karcher_unchecked(
    space: &NpcSpace,
    cloud: &WeightedCloud,
    start: Option<&Point>,
    tol: f64,
    max_iter: usize,
) -> Result<KarcherOutcome> {
    match space {
        NpcSpace::Euclidean { dim } => {
            let mut acc = nalgebra::DVector::zeros(*dim);
            for (p, w) in cloud.points.iter().zip(&cloud.weights) {
                if let Point::Euclidean(v) = p {
                    acc += v * *w;
                }
            }
            Ok(KarcherOutcome {
                point: Point::Euclidean(acc),
                iterations: 0,
                displacement: 0.0,
            })
        }
        NpcSpace::Pod { k } => Ok(KarcherOutcome {
            point: pod_mean(*k, cloud),
            iterations: 0,
            displacement: 0.0,
        }),
        _ => manifold_mean(space, cloud, start, tol, max_iter),
    }
}

/// Exact minimizer on a k-pod: on ray r the objective is a quadratic in the
/// signed coordinate, so the optimum is a clamped weighted average.
fn pod_mean(k: usize, cloud: &WeightedCloud) -> Point {
    let mut best: Option<(f64, usize, f64)> = None;
    for r in 0..k {
        let xs: Vec<f64> = cloud
            .points
            .iter()
            .map(|p| match p {
                Point::Pod { ray, radius } if *ray == r => *radius,
                Point::Pod { radius, .. } => -*radius,
                _ => 0.0,
            })
            .collect();
        let s = cloud.weights.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>().max(0.0);
        let i: f64 = cloud.weights.iter().zip(&xs).map(|(w, x)| w * (s - x).powi(2)).sum();
        if best.is_none_or(|(bi, _, _)| i < bi) {
            best = Some((i, r, s));
        }
    }
    let (_, r, s) = best.unwrap();
    Point::pod(r, s)
}

fn manifold_mean(
    space: &NpcSpace,
    cloud: &WeightedCloud,
    start: Option<&Point>,
    tol: f64,
    max_iter: usize,
) -> Result<KarcherOutcome> {
    // Gradient step and objective from the logs at q.
    let step_at = |q: &Point| -> Result<(Tangent, f64)> {
        let mut g: Option<TangentVec> = None;
        let mut obj = 0.0;
        for (p, w) in cloud.points.iter().zip(&cloud.weights) {
            let l = ts::log_unchecked(space, q, p)?;
            obj += w * ts::tangent_inner(space, &l, &l.vec)?;
            match g.as_mut() {
                Some(acc) => acc.axpy(*w, &l.vec),
                None => g = Some(l.vec.scaled(*w)),
            }
        }
        Ok((
            Tangent {
                base: q.clone(),
                vec: g.unwrap(),
            },
            obj,
        ))
    };

    let mut q = match start {
        Some(s) => s.clone(),
        None => best_input(space, cloud)?,
    };
    let (mut grad, mut obj) = step_at(&q)?;
    let mut disp = ts::tangent_norm(space, &grad)?;
    let mut step: f64 = 1.0;
    for it in 0..max_iter {
        if disp <= tol {
            return Ok(KarcherOutcome {
                point: q,
                iterations: it,
                displacement: disp,
            });
        }
        // Armijo backtracking; the step may double back up to 1 each iteration.
        step = (2.0 * step).min(1.0);
        let mut accepted = false;
        for _ in 0..40 {
            let trial = Tangent {
                base: q.clone(),
                vec: grad.vec.scaled(step),
            };
            let q_new = ts::exp_unchecked(space, &trial)?;
            let (g_new, obj_new) = step_at(&q_new)?;
            // Near the minimum the objective drop sinks below its round-off
            // (which grows with the conditioning of the points), so a clear
            // contraction of the gradient also counts as progress.
            let disp_new = ts::tangent_norm(space, &g_new)?;
            let armijo = obj_new <= obj - 0.5 * step * disp * disp;
            if armijo || disp_new <= 0.9 * disp {
                q = q_new;
                grad = g_new;
                obj = obj_new;
                disp = disp_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if disp <= tol {
        return Ok(KarcherOutcome {
            point: q,
            iterations: max_iter,
            displacement: disp,
        });
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        displacement: disp,
        best: Box::new(q),
    })
}

fn best_input(space: &NpcSpace, cloud: &WeightedCloud) -> Result<Point> {
    if cloud.points.len() > 64 {
        return Ok(cloud.points[0].clone());
    }
    let mut best = (f64::INFINITY, 0);
    for (i, p) in cloud.points.iter().enumerate() {
        let v = objective(space, cloud, p)?;
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(cloud.points[best.1].clone())
}

// ---------------------------------------------------------------------------
// Mollification

/// Replace each value by the μ-weighted Karcher mean over its hop ball.
///
/// Balls are taken in the cover determined by the abelianized twists: a
/// state is a vertex plus the exponent sums of the twists crossed to reach
/// it, and values reached through twisted edges are transported by the
/// accumulated isometry. Values are read only from the input map.
pub fn mollify(map: &DiscreteMap, domain: &DomainGraph, rep: &Representation, radius: usize) -> Result<DiscreteMap> {
    if radius < 1 {
        return Err(Error::Usage("mollify radius must be at least 1".into()));
    }
    map.check(domain)?;
    let space = map.space;
    let adj = domain.adjacency();
    let twists = resolve_twists(domain, rep)?;
    let mut out = Vec::with_capacity(domain.n());
    for v in 0..domain.n() {
        let ball = hop_ball(domain, &adj, &twists, v, radius)?;
        let mut pts = Vec::with_capacity(ball.len());
        let mut ws = Vec::with_capacity(ball.len());
        for (u, iso) in ball {
            let p = match iso {
                Some(g) => ts::apply_unchecked(&g, &map.values[u])?,
                None => map.values[u].clone(),
            };
            pts.push(p);
            ws.push(domain.vertices[u].mu);
        }
        let cloud = WeightedCloud::new(pts, ws).map_err(|e| e.at_vertex(v))?;
        let m = karcher_unchecked(&space, &cloud, Some(&map.values[v]), DEFAULT_TOL, DEFAULT_MAX_ITER)
            .map_err(|e| e.at_vertex(v))?;
        out.push(m.point);
    }
    Ok(DiscreteMap { space, values: out })
}

/// Per-edge twist isometry and its inverse.
pub(crate) type TwistTable = Vec<Option<(Isometry, Isometry)>>;

pub(crate) fn resolve_twists(domain: &DomainGraph, rep: &Representation) -> Result<TwistTable> {
    domain
        .edges
        .iter()
        .map(|e| match &e.twist {
            Some(w) if !w.is_identity() => {
                let g = rep.evaluate(w)?;
                let gi = ts::inverse(&g)?;
                Ok(Some((g, gi)))
            }
            _ => Ok(None),
        })
        .collect()
}

type AbelKey = (usize, Vec<(String, i64)>);

fn hop_ball(
    domain: &DomainGraph,
    adj: &[Vec<crate::domain_complex::Incidence>],
    twists: &TwistTable,
    v: usize,
    radius: usize,
) -> Result<Vec<(usize, Option<Isometry>)>> {
    let start: AbelKey = (v, Vec::new());
    let mut seen: HashMap<AbelKey, ()> = HashMap::new();
    seen.insert(start.clone(), ());
    let mut out = vec![(v, None)];
    let mut queue: VecDeque<(AbelKey, Option<Isometry>, usize)> = VecDeque::from([(start, None, 0)]);
    while let Some(((u, abel), iso, depth)) = queue.pop_front() {
        if depth == radius {
            continue;
        }
        for inc in &adj[u] {
            let e = &domain.edges[inc.edge];
            let (next_iso, next_abel) = match (&twists[inc.edge], &e.twist) {
                (Some((g, gi)), Some(word)) => {
                    let step = if inc.forward { g } else { gi };
                    let composed = match &iso {
                        Some(t) => ts::compose(t, step)?,
                        None => step.clone(),
                    };
                    (Some(composed), shift(&abel, word, inc.forward))
                }
                _ => (iso.clone(), abel.clone()),
            };
            let key = (inc.nbr, next_abel);
            if seen.contains_key(&key) {
                continue;
            }
            seen.insert(key.clone(), ());
            out.push((inc.nbr, next_iso.clone()));
            queue.push_back((key, next_iso, depth + 1));
        }
    }
    Ok(out)
}

fn shift(abel: &[(String, i64)], word: &Word, forward: bool) -> Vec<(String, i64)> {
    let mut m: BTreeMap<String, i64> = abel.iter().cloned().collect();
    let sign = if forward { 1 } else { -1 };
    for (g, e) in word.abelianize() {
        *m.entry(g).or_insert(0) += sign * e;
    }
    m.retain(|_, e| *e != 0);
    m.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain_complex::{build_grid_domain, glue_periodic_grid, GridShape};
    use crate::linalg;
    use crate::target_spaces::Field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SPD2: NpcSpace = NpcSpace::Spd { n: 2, field: Field::Real };

    fn spaces() -> Vec<NpcSpace> {
        vec![
            NpcSpace::Euclidean { dim: 2 },
            NpcSpace::HyperbolicPlane,
            SPD2,
            NpcSpace::Spd { n: 3, field: Field::Complex },
            NpcSpace::Pod { k: 3 },
        ]
    }

    #[test]
    fn euclidean_mean_is_arithmetic() {
        let s = NpcSpace::Euclidean { dim: 2 };
        let cloud = WeightedCloud::new(
            vec![Point::euc(&[0.0, 0.0]), Point::euc(&[3.0, 0.0]), Point::euc(&[0.0, 6.0])],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        let m = karcher_mean(&s, &cloud, 1e-10, 10).unwrap();
        assert!(ts::approx_eq(&s, &m, &Point::euc(&[1.0, 2.0]), 1e-15));
    }

    #[test]
    fn spd_mean_of_inverse_pair_is_identity() {
        let a = Point::Spd(linalg::diag(&[2.0, 0.5]));
        let ai = Point::Spd(linalg::diag(&[0.5, 2.0]));
        let cloud = WeightedCloud::uniform(vec![a, ai]).unwrap();
        let m = karcher_mean(&SPD2, &cloud, 1e-12, 100).unwrap();
        assert!(ts::approx_eq(&SPD2, &m, &SPD2.basepoint(), 1e-9));
    }

    #[test]
    fn pod_symmetric_triple_is_origin() {
        let pod = NpcSpace::Pod { k: 3 };
        let cloud = WeightedCloud::uniform((0..3).map(|r| Point::pod(r, 1.0)).collect()).unwrap();
        assert_eq!(karcher_mean(&pod, &cloud, 1e-10, 10).unwrap(), Point::pod(0, 0.0));
        // Two on ray 1, one on ray 2: signed average on ray 1 is (2 - 1)/3.
        let cloud = WeightedCloud::uniform(vec![Point::pod(1, 1.0), Point::pod(1, 1.0), Point::pod(2, 1.0)]).unwrap();
        let m = karcher_mean(&pod, &cloud, 1e-10, 10).unwrap();
        assert!(ts::approx_eq(&pod, &m, &Point::pod(1, 1.0 / 3.0), 1e-15));
    }

    #[test]
    fn two_point_mean_is_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in spaces() {
            for _ in 0..10 {
                let p = ts::random_point(&s, 2.0, &mut rng);
                let q = ts::random_point(&s, 2.0, &mut rng);
                let mid = ts::interpolate(&s, &p, &q, 0.5).unwrap();
                let cloud = WeightedCloud::uniform(vec![p, q]).unwrap();
                let m = karcher_mean(&s, &cloud, 1e-11, 200).unwrap();
                assert!(ts::approx_eq(&s, &m, &mid, 1e-9), "{s}");
            }
        }
    }

    #[test]
    fn mean_beats_inputs_and_restarts_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let tol = 1e-10;
        for s in spaces() {
            for _ in 0..10 {
                let m = rng.random_range(2..7);
                let pts: Vec<Point> = (0..m).map(|_| ts::random_point(&s, 2.0, &mut rng)).collect();
                let ws: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
                let cloud = WeightedCloud::new(pts, ws).unwrap();
                let a = karcher_mean_from(&s, &cloud, None, tol, 500).unwrap();
                let i_q = objective(&s, &cloud, &a.point).unwrap();
                for p in &cloud.points {
                    assert!(i_q <= objective(&s, &cloud, p).unwrap() + 1e-12);
                }
                let b = karcher_mean_from(&s, &cloud, Some(cloud.points.last().unwrap()), tol, 500).unwrap();
                assert!(ts::distance(&s, &a.point, &b.point).unwrap() <= 10.0 * tol, "{s}");
            }
        }
    }

    #[test]
    fn invalid_clouds_rejected() {
        assert!(WeightedCloud::new(vec![], vec![]).is_err());
        assert!(WeightedCloud::new(vec![Point::pod(0, 1.0)], vec![0.0]).is_err());
        let cloud = WeightedCloud::uniform(vec![Point::pod(0, 1.0)]).unwrap();
        assert!(karcher_mean(&SPD2, &cloud, 1e-10, 10).is_err());
    }

    #[test]
    fn non_convergence_carries_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pts: Vec<Point> = (0..5).map(|_| ts::random_point(&SPD2, 2.0, &mut rng)).collect();
        let cloud = WeightedCloud::uniform(pts).unwrap();
        match karcher_mean(&SPD2, &cloud, 1e-14, 1) {
            Err(Error::NonConvergence { best, displacement, .. }) => {
                assert!(displacement > 1e-14);
                SPD2.check_point(&best).unwrap();
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn mollify_examples() {
        let d = build_grid_domain(GridShape::Interval { length: 1.0 }, 6, None).unwrap();
        let rep = Representation::trivial(SPD2);
        let c = DiscreteMap::constant(SPD2, Point::Spd(linalg::diag(&[2.0, 0.5])), d.n());
        let m = mollify(&c, &d, &rep, 1).unwrap();
        for (a, b) in m.values.iter().zip(&c.values) {
            assert!(ts::approx_eq(&SPD2, a, b, 1e-12));
        }

        // Euclidean: direct μ-weighted ball averages.
        let e1 = NpcSpace::Euclidean { dim: 1 };
        let vals = [0.0, 1.0, 4.0, 9.0, 16.0, 25.0];
        let f = DiscreteMap {
            space: e1,
            values: vals.iter().map(|x| Point::euc(&[*x])).collect(),
        };
        let m = mollify(&f, &d, &Representation::trivial(e1), 1).unwrap();
        let mu: Vec<f64> = d.vertices.iter().map(|v| v.mu).collect();
        for v in 0..6usize {
            let lo = v.saturating_sub(1);
            let hi = (v + 1).min(5);
            let num: f64 = (lo..=hi).map(|u| mu[u] * vals[u]).sum();
            let den: f64 = (lo..=hi).map(|u| mu[u]).sum();
            let Point::Euclidean(x) = &m.values[v] else { panic!() };
            assert!((x[0] - num / den).abs() < 1e-12);
        }

        // A ball covering the graph gives the global mean everywhere.
        let m = mollify(&f, &d, &Representation::trivial(e1), 10).unwrap();
        let num: f64 = (0..6).map(|u| mu[u] * vals[u]).sum();
        let den: f64 = mu.iter().sum();
        for p in &m.values {
            let Point::Euclidean(x) = p else { panic!() };
            assert!((x[0] - num / den).abs() < 1e-12);
        }
        assert!(mollify(&f, &d, &Representation::trivial(e1), 0).is_err());
    }

    #[test]
    fn mollify_commutes_with_twists() {
        // Mollify on a twisted cycle, then compare against mollifying the
        // unrolled three-period path at its middle period.
        let n = 6;
        let a = Isometry::Spd(linalg::diag(&[2.0, 0.5]));
        let rep = Representation::new(SPD2, BTreeMap::from([("A".to_string(), a.clone())]), vec![]).unwrap();
        let base = build_grid_domain(GridShape::Circle { length: 1.0 }, n, None).unwrap();
        let d = glue_periodic_grid(&base, &rep, Some(&Word::generator("A")), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = DiscreteMap {
            space: SPD2,
            values: (0..n).map(|_| ts::random_point(&SPD2, 1.0, &mut rng)).collect(),
        };
        // Unit measures so the cycle and the path weigh vertices alike.
        let mut d = d;
        for v in d.vertices.iter_mut() {
            v.mu = 1.0;
        }
        let m = mollify(&f, &d, &rep, 2).unwrap();

        let mut path = build_grid_domain(GridShape::Interval { length: 1.0 }, 3 * n, None).unwrap();
        for v in path.vertices.iter_mut() {
            v.mu = 1.0;
        }
        let mut vals = Vec::new();
        let ai = ts::inverse(&a).unwrap();
        for k in 0..3 {
            for i in 0..n {
                let p = f.values[i].clone();
                let p = match k {
                    0 => ts::apply_unchecked(&ai, &p).unwrap(),
                    1 => p,
                    _ => ts::apply_unchecked(&a, &p).unwrap(),
                };
                vals.push(p);
            }
        }
        let lifted = mollify(&DiscreteMap { space: SPD2, values: vals }, &path, &Representation::trivial(SPD2), 2).unwrap();
        for i in 0..n {
            assert!(ts::approx_eq(&SPD2, &m.values[i], &lifted.values[n + i], 1e-8));
            let shifted = ts::apply_unchecked(&a, &m.values[i]).unwrap();
            if 2 * n + i < 3 * n - 2 {
                assert!(ts::approx_eq(&SPD2, &shifted, &lifted.values[2 * n + i], 1e-8));
            }
        }
    }
}
