//! Discrete energy and relaxation towards harmonic maps.
//!
//! Energy is `E = ½ Σ_edges w · d²(f(u), τ f(v))`. One relaxation step
//! replaces a vertex value by the weighted Karcher mean of its (twisted)
//! neighbour values, which is the exact minimizer of the star energy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::barycenter::{self, resolve_twists, TwistTable, WeightedCloud};
use crate::domain_complex::{validate_domain, DiscreteMap, DomainGraph, Incidence, Representation};
use crate::error::{Error, Result};
use crate::target_spaces::{self as ts, NpcSpace, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepOrder {
    Sequential,
    RedBlack,
}

impl FromStr for SweepOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" | "gs" => Ok(SweepOrder::Sequential),
            "red-black" | "redblack" => Ok(SweepOrder::RedBlack),
            _ => Err(Error::Usage(format!("unknown sweep order '{s}'"))),
        }
    }
}

impl fmt::Display for SweepOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepOrder::Sequential => "sequential",
            SweepOrder::RedBlack => "red-black",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    /// Stop once the largest vertex displacement of a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub order: SweepOrder,
    pub seed: u64,
    /// Worker threads for red-black sweeps.
    pub threads: usize,
    /// Equivariant solves fail once any value drifts this far from the
    /// initial basepoint value.
    pub divergence_bound: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-10,
            max_sweeps: 200_000,
            order: SweepOrder::Sequential,
            seed: 0,
            threads: 1,
            divergence_bound: 30.0,
        }
    }
}

impl SolveConfig {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Usage("tol must be positive".into()));
        }
        if self.threads == 0 {
            return Err(Error::Usage("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn karcher_tol(&self) -> f64 {
        (self.tol * 1e-2).max(1e-13)
    }
}

/// Local means that stall below this displacement are accepted.
const ROUNDOFF_FLOOR: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub energy: f64,
    pub max_disp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    SweepLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    pub initial_energy: f64,
    pub records: Vec<SweepRecord>,
    pub status: SolveStatus,
}

impl SolveTrace {
    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(self.initial_energy, |r| r.energy)
    }

    /// CSV with header `sweep,energy,max_disp`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sweep,energy,max_disp\n");
        for r in &self.records {
            s.push_str(&format!("{},{:e},{:e}\n", r.sweep, r.energy, r.max_disp));
        }
        s
    }
}

/// A domain with its twists resolved against a representation.
pub struct Problem<'a> {
    pub domain: &'a DomainGraph,
    pub rep: &'a Representation,
    adj: Vec<Vec<Incidence>>,
    twists: TwistTable,
}

impl<'a> Problem<'a> {
    pub fn new(domain: &'a DomainGraph, rep: &'a Representation) -> Result<Self> {
        let diag = validate_domain(domain, Some(rep));
        if !diag.unresolved_twists.is_empty() || !diag.isolated_vertices.is_empty() || !diag.nonpositive_weights.is_empty() {
            return Err(Error::Usage(format!("invalid domain: {}", diag.summary())));
        }
        Ok(Problem {
            domain,
            rep,
            adj: domain.adjacency(),
            twists: resolve_twists(domain, rep)?,
        })
    }

    pub fn space(&self) -> NpcSpace {
        self.rep.space
    }

    /// Neighbour value of edge `e` seen from its tail (`forward`) or head.
    fn transported(&self, map: &DiscreteMap, inc: &Incidence) -> Result<Point> {
        let p = &map.values[inc.nbr];
        match &self.twists[inc.edge] {
            Some((g, gi)) => ts::apply_unchecked(if inc.forward { g } else { gi }, p),
            None => Ok(p.clone()),
        }
    }

    pub fn neighbour_cloud(&self, map: &DiscreteMap, v: usize) -> Result<WeightedCloud> {
        let mut pts = Vec::with_capacity(self.adj[v].len());
        let mut ws = Vec::with_capacity(self.adj[v].len());
        for inc in &self.adj[v] {
            pts.push(self.transported(map, inc)?);
            ws.push(inc.w);
        }
        WeightedCloud::new(pts, ws).map_err(|e| e.at_vertex(v))
    }

    /// `w · d²(f(u), τ f(v))` for every edge.
    pub fn edge_energies(&self, map: &DiscreteMap) -> Result<Vec<f64>> {
        let space = self.space();
        self.domain
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let inc = Incidence {
                    nbr: e.v,
                    w: e.w,
                    edge: i,
                    forward: true,
                };
                let q = self.transported(map, &inc)?;
                Ok(e.w * ts::distance_unchecked(&space, &map.values[e.u], &q)?.powi(2))
            })
            .collect()
    }

    pub fn energy(&self, map: &DiscreteMap) -> Result<f64> {
        Ok(0.5 * self.edge_energies(map)?.iter().sum::<f64>())
    }

    fn replace(&self, map: &DiscreteMap, v: usize, karcher_tol: f64) -> Result<Point> {
        let cloud = self.neighbour_cloud(map, v)?;
        match barycenter::karcher_unchecked(&self.space(), &cloud, Some(&map.values[v]), karcher_tol, 1000) {
            Ok(out) => Ok(out.point),
            // Stalled at round-off: the best iterate is as good as it gets.
            Err(Error::NonConvergence { displacement, best, .. }) if displacement <= ROUNDOFF_FLOOR => Ok(*best),
            Err(e) => Err(e.at_vertex(v)),
        }
    }

    /// Distance a vertex would move under one local replacement.
    pub fn local_residual(&self, map: &DiscreteMap, v: usize) -> Result<f64> {
        let p = self.replace(map, v, 1e-13)?;
        ts::distance_unchecked(&self.space(), &map.values[v], &p)
    }
}

fn check_map(problem: &Problem, map: &DiscreteMap) -> Result<()> {
    if map.space != problem.space() {
        return Err(Error::Usage(format!(
            "map targets {} but the representation acts on {}",
            map.space,
            problem.space()
        )));
    }
    map.check(problem.domain)
}

pub fn energy(domain: &DomainGraph, rep: &Representation, map: &DiscreteMap) -> Result<f64> {
    let problem = Problem::new(domain, rep)?;
    check_map(&problem, map)?;
    problem.energy(map)
}

/// Star-energy minimizer at an interior vertex.
pub fn local_replace(domain: &DomainGraph, rep: &Representation, map: &DiscreteMap, vertex: usize) -> Result<Point> {
    if vertex >= domain.n() {
        return Err(Error::Usage(format!("vertex {vertex} does not exist")));
    }
    if domain.boundary.contains(&vertex) {
        return Err(Error::Usage(format!("vertex {vertex} is on the boundary")));
    }
    let problem = Problem::new(domain, rep)?;
    check_map(&problem, map)?;
    problem.replace(map, vertex, 1e-13)
}

/// Greedy colouring of the given vertices so that no two adjacent ones share a colour.
fn colour_classes(problem: &Problem, active: &[usize]) -> Vec<Vec<usize>> {
    let n = problem.domain.n();
    let mut colour = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for &v in active {
        let used: Vec<usize> = problem.adj[v].iter().map(|i| colour[i.nbr]).filter(|c| *c != usize::MAX).collect();
        let c = (0..).find(|c| !used.contains(c)).unwrap();
        colour[v] = c;
        if classes.len() <= c {
            classes.resize(c + 1, Vec::new());
        }
        classes[c].push(v);
    }
    classes
}

fn sweep(problem: &Problem, map: &mut DiscreteMap, active: &[usize], classes: &[Vec<usize>], cfg: &SolveConfig) -> Result<f64> {
    let space = problem.space();
    let ktol = cfg.karcher_tol();
    let mut max_disp: f64 = 0.0;
    match cfg.order {
        SweepOrder::Sequential => {
            for &v in active {
                let p = problem.replace(map, v, ktol)?;
                max_disp = max_disp.max(ts::distance_unchecked(&space, &map.values[v], &p)?);
                map.values[v] = p;
            }
        }
        SweepOrder::RedBlack => {
            for class in classes {
                let snapshot: &DiscreteMap = map;
                let updates: Vec<Result<Point>> = if cfg.threads > 1 && class.len() > 1 {
                    let chunk = class.len().div_ceil(cfg.threads);
                    std::thread::scope(|s| {
                        let handles: Vec<_> = class
                            .chunks(chunk)
                            .map(|vs| s.spawn(move || vs.iter().map(|&v| problem.replace(snapshot, v, ktol)).collect::<Vec<_>>()))
                            .collect();
                        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
                    })
                } else {
                    class.iter().map(|&v| problem.replace(snapshot, v, ktol)).collect()
                };
                for (&v, p) in class.iter().zip(updates) {
                    let p = p?;
                    max_disp = max_disp.max(ts::distance_unchecked(&space, &map.values[v], &p)?);
                    map.values[v] = p;
                }
            }
        }
    }
    Ok(max_disp)
}

fn relax(
    problem: &Problem,
    mut map: DiscreteMap,
    active: &[usize],
    cfg: &SolveConfig,
    drift_from: Option<&Point>,
) -> Result<(DiscreteMap, SolveTrace)> {
    let space = problem.space();
    let classes = colour_classes(problem, active);
    let mut energy = problem.energy(&map)?;
    let mut trace = SolveTrace {
        initial_energy: energy,
        records: Vec::new(),
        status: SolveStatus::SweepLimit,
    };
    for s in 1..=cfg.max_sweeps {
        let max_disp = sweep(problem, &mut map, active, &classes, cfg)?;
        let e = problem.energy(&map)?;
        if e > energy + 1e-10 * energy + 1e-15 {
            return Err(Error::Invariant(format!(
                "energy rose from {energy:e} to {e:e} in sweep {s}"
            )));
        }
        energy = e;
        trace.records.push(SweepRecord {
            sweep: s,
            energy,
            max_disp,
        });
        if let Some(base) = drift_from {
            let mut far: f64 = 0.0;
            for p in &map.values {
                far = far.max(ts::distance_unchecked(&space, base, p)?);
            }
            if far > cfg.divergence_bound {
                return Err(Error::Divergence {
                    distance: far,
                    bound: cfg.divergence_bound,
                });
            }
        }
        if max_disp < cfg.tol {
            trace.status = SolveStatus::Converged;
            return Ok((map, trace));
        }
    }
    let max_disp = trace.records.last().map_or(f64::INFINITY, |r| r.max_disp);
    Err(Error::SweepLimit {
        sweeps: cfg.max_sweeps,
        max_disp,
        trace: Box::new(trace),
    })
}

/// Relax the interior with the boundary held fixed.
pub fn solve_dirichlet(
    domain: &DomainGraph,
    rep: &Representation,
    boundary_values: &BTreeMap<usize, Point>,
    init: DiscreteMap,
    cfg: &SolveConfig,
) -> Result<(DiscreteMap, SolveTrace)> {
    cfg.check()?;
    let problem = Problem::new(domain, rep)?;
    check_map(&problem, &init)?;
    let mut map = init;
    for b in &domain.boundary {
        let p = boundary_values
            .get(b)
            .ok_or_else(|| Error::Usage(format!("no boundary value for vertex {b}")))?;
        map.space.check_point(p).map_err(|e| e.at_vertex(*b))?;
        map.values[*b] = p.clone();
    }
    if let Some(v) = boundary_values.keys().find(|v| !domain.boundary.contains(v)) {
        return Err(Error::Usage(format!("vertex {v} has a boundary value but is not a boundary vertex")));
    }
    let active = domain.interior();
    relax(&problem, map, &active, cfg, None)
}

/// Constant map at the basepoint, mollified once.
pub fn equivariant_initial_map(domain: &DomainGraph, rep: &Representation) -> Result<DiscreteMap> {
    let c = DiscreteMap::constant(rep.space, rep.space.basepoint(), domain.n());
    barycenter::mollify(&c, domain, rep, 1)
}

/// Relax every vertex of a boundaryless twisted domain.
pub fn solve_equivariant(domain: &DomainGraph, rep: &Representation, init: DiscreteMap, cfg: &SolveConfig) -> Result<(DiscreteMap, SolveTrace)> {
    cfg.check()?;
    if !domain.boundary.is_empty() {
        return Err(Error::Usage("equivariant solves need a domain without boundary".into()));
    }
    let problem = Problem::new(domain, rep)?;
    check_map(&problem, &init)?;
    let base = init.values[0].clone();
    let active: Vec<usize> = (0..domain.n()).collect();
    relax(&problem, init, &active, cfg, Some(&base))
}

/// Energies of the vertexwise geodesic interpolation between two maps.
pub fn energy_along_interpolation(
    domain: &DomainGraph,
    rep: &Representation,
    map0: &DiscreteMap,
    map1: &DiscreteMap,
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    if samples < 3 {
        return Err(Error::Usage("need at least 3 samples".into()));
    }
    let problem = Problem::new(domain, rep)?;
    check_map(&problem, map0)?;
    check_map(&problem, map1)?;
    let space = problem.space();
    (0..samples)
        .map(|i| {
            let t = i as f64 / (samples - 1) as f64;
            let values = map0
                .values
                .iter()
                .zip(&map1.values)
                .map(|(p, q)| ts::interpolate_unchecked(&space, p, q, t))
                .collect::<Result<Vec<_>>>()?;
            Ok((t, problem.energy(&DiscreteMap { space, values })?))
        })
        .collect()
}

/// Largest edge energy over the mean edge energy; 0 for a map with no energy.
pub fn lipschitz_ratio(domain: &DomainGraph, rep: &Representation, map: &DiscreteMap) -> Result<f64> {
    let problem = Problem::new(domain, rep)?;
    check_map(&problem, map)?;
    let e = problem.edge_energies(map)?;
    let total: f64 = e.iter().sum();
    if total <= 0.0 || e.is_empty() {
        return Ok(0.0);
    }
    let max = e.iter().copied().fold(0.0, f64::max);
    Ok(max / (total / e.len() as f64))
}

/// Largest local-replacement displacement over the given vertices.
pub fn harmonicity_residual(domain: &DomainGraph, rep: &Representation, map: &DiscreteMap, vertices: &[usize]) -> Result<f64> {
    let problem = Problem::new(domain, rep)?;
    check_map(&problem, map)?;
    let mut worst: f64 = 0.0;
    for &v in vertices {
        worst = worst.max(problem.local_residual(map, v)?);
    }
    Ok(worst)
}
