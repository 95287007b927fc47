//! Weighted graph domains, twist words and representations.
//!
//! An edge `(u, v, w, γ)` says that, seen from `u`, the neighbour value is
//! `ρ(γ) f(v)`; seen from `v` it is `ρ(γ)⁻¹ f(u)`. Untwisted edges are
//! symmetric.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::target_spaces::{self as ts, Isometry, NpcSpace, Point};

/// Tolerance for relations acting as the identity.
pub const RELATION_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Words

/// A group word `A * B^-1 * C^2`, stored as (generator, exponent) factors.
/// The empty word is the identity and prints as `1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Word(pub Vec<(String, i32)>);

impl Word {
    pub fn generator(name: &str) -> Self {
        Word(vec![(name.to_string(), 1)])
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|(_, e)| *e == 0)
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|(g, e)| (g.clone(), -e)).collect())
    }

    pub fn generators(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(g, _)| g.as_str())
    }

    /// Exponent sums per generator: the image in the abelianization.
    pub fn abelianize(&self) -> BTreeMap<String, i64> {
        let mut out = BTreeMap::new();
        for (g, e) in &self.0 {
            *out.entry(g.clone()).or_insert(0) += *e as i64;
        }
        out.retain(|_, e| *e != 0);
        out
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, (g, e)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            if *e == 1 {
                write!(f, "{g}")?;
            } else {
                write!(f, "{g}^{e}")?;
            }
        }
        Ok(())
    }
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && chars.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" || s.is_empty() {
            return Ok(Word::default());
        }
        let mut factors = Vec::new();
        for part in s.split('*') {
            let part = part.trim();
            let (name, exp) = match part.split_once('^') {
                Some((n, e)) => {
                    let e: i32 = e
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad exponent in word factor '{part}'")))?;
                    (n.trim(), e)
                }
                None => (part, 1),
            };
            if !valid_name(name) {
                return Err(Error::Parse(format!("bad generator name '{name}' in word '{s}'")));
            }
            if exp != 0 {
                factors.push((name.to_string(), exp));
            }
        }
        Ok(Word(factors))
    }
}

// ---------------------------------------------------------------------------
// Representations

#[derive(Clone, Debug)]
pub struct Representation {
    pub space: NpcSpace,
    pub generators: BTreeMap<String, Isometry>,
    pub relations: Vec<Word>,
}

impl Representation {
    /// Build and check that every relation acts as the identity.
    pub fn new(space: NpcSpace, generators: BTreeMap<String, Isometry>, relations: Vec<Word>) -> Result<Self> {
        for (name, g) in &generators {
            if !valid_name(name) {
                return Err(Error::Usage(format!("bad generator name '{name}'")));
            }
            space.check_isometry(g)?;
        }
        let rep = Representation {
            space,
            generators,
            relations,
        };
        for rel in &rep.relations {
            let err = rep.identity_defect(rel)?;
            if err > RELATION_TOL {
                return Err(Error::Invariant(format!(
                    "relation {rel} moves points by {err:e}, exceeding {RELATION_TOL:e}"
                )));
            }
        }
        Ok(rep)
    }

    pub fn trivial(space: NpcSpace) -> Self {
        Representation {
            space,
            generators: BTreeMap::new(),
            relations: Vec::new(),
        }
    }

    pub fn evaluate(&self, word: &Word) -> Result<Isometry> {
        let mut acc = self.space.identity_isometry();
        for (g, e) in &word.0 {
            let base = self
                .generators
                .get(g)
                .ok_or_else(|| Error::Usage(format!("generator '{g}' is not in the representation")))?;
            let step = if *e < 0 { ts::inverse(base)? } else { base.clone() };
            for _ in 0..e.unsigned_abs() {
                acc = ts::compose(&acc, &step)?;
            }
        }
        Ok(acc)
    }

    /// Largest displacement of a few probe points under the word.
    pub fn identity_defect(&self, word: &Word) -> Result<f64> {
        let iso = self.evaluate(word)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut probes = vec![self.space.basepoint()];
        for _ in 0..4 {
            probes.push(ts::random_point(&self.space, 1.0, &mut rng));
        }
        let mut worst: f64 = 0.0;
        for p in &probes {
            let q = ts::apply_unchecked(&iso, p)?;
            worst = worst.max(ts::distance_unchecked(&self.space, p, &q)?);
        }
        Ok(worst)
    }
}

// ---------------------------------------------------------------------------
// Graphs

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub mu: f64,
    pub pos: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
    pub twist: Option<Word>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridShape {
    Interval { length: f64 },
    Rectangle { width: f64, height: f64 },
    Disk { radius: f64 },
    Circle { length: f64 },
    Torus { width: f64, height: f64 },
}

/// Bookkeeping kept by the grid builders.
#[derive(Clone, Debug, PartialEq)]
pub struct GridInfo {
    pub shape: GridShape,
    pub resolution: usize,
    pub dx: f64,
    pub dy: f64,
    /// Edges closing the period in x (circle: the single closing edge).
    pub wrap_x: Vec<usize>,
    pub wrap_y: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DomainGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub boundary: BTreeSet<usize>,
    pub grid: Option<GridInfo>,
}

/// One edge seen from one of its endpoints.
#[derive(Clone, Copy, Debug)]
pub struct Incidence {
    pub nbr: usize,
    pub w: f64,
    pub edge: usize,
    /// True when the vertex is the edge's tail `u` (apply the twist itself),
    /// false when it is the head (apply its inverse).
    pub forward: bool,
}

#[derive(Clone, Debug)]
pub struct DiscreteMap {
    pub space: NpcSpace,
    pub values: Vec<Point>,
}

impl DiscreteMap {
    pub fn constant(space: NpcSpace, p: Point, n: usize) -> Self {
        DiscreteMap {
            space,
            values: vec![p; n],
        }
    }

    pub fn check(&self, domain: &DomainGraph) -> Result<()> {
        if self.values.len() != domain.vertices.len() {
            return Err(Error::Usage(format!(
                "map has {} values for {} vertices",
                self.values.len(),
                domain.vertices.len()
            )));
        }
        for (i, p) in self.values.iter().enumerate() {
            self.space.check_point(p).map_err(|e| e.at_vertex(i))?;
        }
        Ok(())
    }
}

impl DomainGraph {
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<Incidence>> {
        let mut adj = vec![Vec::new(); self.n()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.u].push(Incidence {
                nbr: e.v,
                w: e.w,
                edge: i,
                forward: true,
            });
            adj[e.v].push(Incidence {
                nbr: e.u,
                w: e.w,
                edge: i,
                forward: false,
            });
        }
        adj
    }

    /// Reset every vertex measure to half the sum of its adjacent weights.
    pub fn recompute_measures(&mut self) {
        let mut mu = vec![0.0; self.n()];
        for e in &self.edges {
            mu[e.u] += e.w / 2.0;
            mu[e.v] += e.w / 2.0;
        }
        for (v, m) in self.vertices.iter_mut().zip(mu) {
            v.mu = m;
        }
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.n()).filter(|v| !self.boundary.contains(v)).collect()
    }

    pub fn has_twists(&self) -> bool {
        self.edges.iter().any(|e| e.twist.as_ref().is_some_and(|w| !w.is_identity()))
    }

    /// Hop distance in the underlying (untwisted) graph.
    pub fn hop_distances(&self, from: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.n()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for inc in &adj[u] {
                if dist[inc.nbr].is_none() {
                    dist[inc.nbr] = Some(du + 1);
                    queue.push_back(inc.nbr);
                }
            }
        }
        dist
    }

    // -- text format -------------------------------------------------------

    pub fn to_text(&self) -> String {
        let mut s = String::from("npcgraph v1\n");
        for (i, v) in self.vertices.iter().enumerate() {
            match v.pos {
                Some([x, y]) => writeln!(s, "V {i} {} {x} {y}", v.mu).unwrap(),
                None => writeln!(s, "V {i} {}", v.mu).unwrap(),
            }
        }
        for e in &self.edges {
            match &e.twist {
                Some(w) => writeln!(s, "E {} {} {} twist={w}", e.u, e.v, e.w).unwrap(),
                None => writeln!(s, "E {} {} {}", e.u, e.v, e.w).unwrap(),
            }
        }
        for b in &self.boundary {
            writeln!(s, "B {b}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, "npcgraph v1")) => {}
            _ => return Err(Error::Parse("missing 'npcgraph v1' header".into())),
        }
        let mut verts: BTreeMap<usize, Vertex> = BTreeMap::new();
        let mut edges = Vec::new();
        let mut boundary = BTreeSet::new();
        for (lineno, line) in lines {
            let bad = |what: &str| Error::Parse(format!("line {lineno}: {what}: '{line}'"));
            let toks: Vec<&str> = line.split_whitespace().collect();
            let int = |t: &str| t.parse::<usize>().map_err(|_| bad("bad integer"));
            let num = |t: &str| t.parse::<f64>().map_err(|_| bad("bad number"));
            match toks.as_slice() {
                ["V", id, mu, rest @ ..] => {
                    let pos = match rest {
                        [] => None,
                        [x, y] => Some([num(x)?, num(y)?]),
                        _ => return Err(bad("vertex line takes 'V id mu [x y]'")),
                    };
                    let id = int(id)?;
                    if verts.insert(id, Vertex { mu: num(mu)?, pos }).is_some() {
                        return Err(bad("duplicate vertex"));
                    }
                }
                ["E", u, v, w, rest @ ..] => {
                    let twist = match rest {
                        [] => None,
                        [t] => match t.strip_prefix("twist=") {
                            Some(word) => Some(word.parse::<Word>()?),
                            None => return Err(bad("expected twist=WORD")),
                        },
                        _ => return Err(bad("edge line takes 'E u v w [twist=word]'")),
                    };
                    edges.push(Edge {
                        u: int(u)?,
                        v: int(v)?,
                        w: num(w)?,
                        twist,
                    });
                }
                ["B", id] => {
                    boundary.insert(int(id)?);
                }
                _ => return Err(bad("unrecognized line")),
            }
        }
        let n = verts.len();
        if verts.keys().copied().ne(0..n) {
            return Err(Error::Parse("vertex ids must be 0..n-1".into()));
        }
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(Error::Parse(format!("edge {} {} references a missing vertex", e.u, e.v)));
            }
        }
        if let Some(b) = boundary.iter().find(|b| **b >= n) {
            return Err(Error::Parse(format!("boundary vertex {b} does not exist")));
        }
        Ok(DomainGraph {
            vertices: verts.into_values().collect(),
            edges,
            boundary,
            grid: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Builders

/// Optional override of edge weights from the two endpoint positions and
/// the default weight.
pub type WeightFn<'a> = &'a dyn Fn([f64; 2], [f64; 2], f64) -> f64;

pub fn build_grid_domain(shape: GridShape, resolution: usize, metric_weights: Option<WeightFn>) -> Result<DomainGraph> {
    if resolution < 2 {
        return Err(Error::Usage(format!("grid resolution {resolution} is below 2")));
    }
    let n = resolution;
    let mut g = DomainGraph::default();
    let mut wrap_x = Vec::new();
    let mut wrap_y = Vec::new();
    let push_edge = |g: &mut DomainGraph, u: usize, v: usize, w: f64| {
        g.edges.push(Edge { u, v, w, twist: None });
        g.edges.len() - 1
    };
    let (dx, dy);
    match shape {
        GridShape::Interval { length } | GridShape::Circle { length } => {
            let periodic = matches!(shape, GridShape::Circle { .. });
            if !(length > 0.0) {
                return Err(Error::Usage("length must be positive".into()));
            }
            dx = if periodic { length / n as f64 } else { length / (n - 1) as f64 };
            dy = 0.0;
            for i in 0..n {
                g.vertices.push(Vertex {
                    mu: 0.0,
                    pos: Some([i as f64 * dx, 0.0]),
                });
            }
            for i in 0..n - 1 {
                push_edge(&mut g, i, i + 1, 1.0 / dx);
            }
            if periodic {
                wrap_x.push(push_edge(&mut g, n - 1, 0, 1.0 / dx));
            } else {
                g.boundary.extend([0, n - 1]);
            }
        }
        GridShape::Rectangle { width, height } | GridShape::Torus { width, height } => {
            let periodic = matches!(shape, GridShape::Torus { .. });
            if !(width > 0.0 && height > 0.0) {
                return Err(Error::Usage("grid extents must be positive".into()));
            }
            let cells = if periodic { n } else { n - 1 } as f64;
            dx = width / cells;
            dy = height / cells;
            let id = |i: usize, j: usize| j * n + i;
            for j in 0..n {
                for i in 0..n {
                    g.vertices.push(Vertex {
                        mu: 0.0,
                        pos: Some([i as f64 * dx, j as f64 * dy]),
                    });
                    if !periodic && (i == 0 || j == 0 || i == n - 1 || j == n - 1) {
                        g.boundary.insert(id(i, j));
                    }
                }
            }
            for j in 0..n {
                for i in 0..n {
                    if i + 1 < n {
                        push_edge(&mut g, id(i, j), id(i + 1, j), dy / dx);
                    } else if periodic {
                        wrap_x.push(push_edge(&mut g, id(i, j), id(0, j), dy / dx));
                    }
                    if j + 1 < n {
                        push_edge(&mut g, id(i, j), id(i, j + 1), dx / dy);
                    } else if periodic {
                        wrap_y.push(push_edge(&mut g, id(i, j), id(i, 0), dx / dy));
                    }
                }
            }
        }
        GridShape::Disk { radius } => {
            if !(radius > 0.0) {
                return Err(Error::Usage("radius must be positive".into()));
            }
            dx = 2.0 * radius / (n - 1) as f64;
            dy = dx;
            let mut index = vec![None; n * n];
            for j in 0..n {
                for i in 0..n {
                    let p = [-radius + i as f64 * dx, -radius + j as f64 * dy];
                    if p[0].hypot(p[1]) <= radius * (1.0 + 1e-12) {
                        index[j * n + i] = Some(g.vertices.len());
                        g.vertices.push(Vertex { mu: 0.0, pos: Some(p) });
                    }
                }
            }
            let mut degree = vec![0usize; g.vertices.len()];
            for j in 0..n {
                for i in 0..n {
                    let Some(a) = index[j * n + i] else { continue };
                    for (ni, nj) in [(i + 1, j), (i, j + 1)] {
                        if ni < n && nj < n {
                            if let Some(b) = index[nj * n + ni] {
                                push_edge(&mut g, a, b, 1.0);
                                degree[a] += 1;
                                degree[b] += 1;
                            }
                        }
                    }
                }
            }
            g.boundary = (0..g.vertices.len()).filter(|&v| degree[v] < 4).collect();
        }
    }
    if let Some(f) = metric_weights {
        for e in g.edges.iter_mut() {
            let (a, b) = (g.vertices[e.u].pos.unwrap(), g.vertices[e.v].pos.unwrap());
            e.w = f(a, b, e.w);
        }
    }
    g.recompute_measures();
    g.grid = Some(GridInfo {
        shape,
        resolution,
        dx,
        dy,
        wrap_x,
        wrap_y,
    });
    Ok(g)
}

/// Attach twist words to the given edges.
pub fn build_twisted_domain(base: &DomainGraph, rep: &Representation, gluing: &[(usize, Word)]) -> Result<DomainGraph> {
    let mut g = base.clone();
    for (edge, word) in gluing {
        for name in word.generators() {
            if !rep.generators.contains_key(name) {
                return Err(Error::Usage(format!("generator '{name}' is not in the representation")));
            }
        }
        let e = g
            .edges
            .get_mut(*edge)
            .ok_or_else(|| Error::Usage(format!("edge {edge} does not exist")))?;
        e.twist = if word.is_identity() { None } else { Some(word.clone()) };
    }
    Ok(g)
}

/// Twist every wrap-around edge of a circle or torus grid: `x` on the
/// edges closing the first period, `y` on the second.
pub fn glue_periodic_grid(base: &DomainGraph, rep: &Representation, x: Option<&Word>, y: Option<&Word>) -> Result<DomainGraph> {
    let info = base
        .grid
        .as_ref()
        .filter(|g| matches!(g.shape, GridShape::Circle { .. } | GridShape::Torus { .. }))
        .ok_or_else(|| Error::Usage("periodic gluing needs a circle or torus grid".into()))?;
    let mut gluing = Vec::new();
    if let Some(w) = x {
        gluing.extend(info.wrap_x.iter().map(|&e| (e, w.clone())));
    }
    if let Some(w) = y {
        gluing.extend(info.wrap_y.iter().map(|&e| (e, w.clone())));
    }
    build_twisted_domain(base, rep, &gluing)
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub vertices: usize,
    pub edges: usize,
    pub connected: bool,
    pub components: usize,
    pub nonpositive_weights: Vec<usize>,
    pub nonpositive_measures: Vec<usize>,
    pub isolated_vertices: Vec<usize>,
    pub self_loops: Vec<usize>,
    /// (edge, generator) pairs the representation cannot resolve.
    pub unresolved_twists: Vec<(usize, String)>,
}

impl Diagnostics {
    pub fn ok(&self) -> bool {
        self.connected
            && self.nonpositive_weights.is_empty()
            && self.nonpositive_measures.is_empty()
            && self.isolated_vertices.is_empty()
            && self.unresolved_twists.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if !self.connected {
            parts.push(format!("graph has {} components", self.components));
        }
        if !self.nonpositive_weights.is_empty() {
            parts.push(format!("non-positive weights on edges {:?}", self.nonpositive_weights));
        }
        if !self.nonpositive_measures.is_empty() {
            parts.push(format!("non-positive measures at vertices {:?}", self.nonpositive_measures));
        }
        if !self.isolated_vertices.is_empty() {
            parts.push(format!("vertices without weight {:?}", self.isolated_vertices));
        }
        if !self.unresolved_twists.is_empty() {
            parts.push(format!("unresolved twists {:?}", self.unresolved_twists));
        }
        if parts.is_empty() {
            "ok".into()
        } else {
            parts.join("; ")
        }
    }
}

pub fn validate_domain(d: &DomainGraph, rep: Option<&Representation>) -> Diagnostics {
    let n = d.n();
    let mut diag = Diagnostics {
        vertices: n,
        edges: d.edges.len(),
        ..Default::default()
    };
    let mut weight_sum = vec![0.0; n];
    for (i, e) in d.edges.iter().enumerate() {
        if !(e.w > 0.0) || !e.w.is_finite() {
            diag.nonpositive_weights.push(i);
        } else {
            weight_sum[e.u] += e.w;
            weight_sum[e.v] += e.w;
        }
        if e.u == e.v {
            diag.self_loops.push(i);
        }
        if let Some(w) = &e.twist {
            for g in w.generators() {
                if rep.is_none_or(|r| !r.generators.contains_key(g)) {
                    diag.unresolved_twists.push((i, g.to_string()));
                }
            }
        }
    }
    for (i, v) in d.vertices.iter().enumerate() {
        if !(v.mu > 0.0) {
            diag.nonpositive_measures.push(i);
        }
        if weight_sum[i] <= 0.0 && n > 1 {
            diag.isolated_vertices.push(i);
        }
    }
    // Components via union-find over all edges.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in &d.edges {
        let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if a != b {
            parent[a] = b;
        }
    }
    diag.components = (0..n).filter(|&x| find(&mut parent, x) == x).count();
    diag.connected = diag.components <= 1;
    diag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::target_spaces::Field;

    #[test]
    fn word_parse_and_print() {
        let w: Word = "A*B^-1*C^2".parse().unwrap();
        assert_eq!(w.0, vec![("A".into(), 1), ("B".into(), -1), ("C".into(), 2)]);
        assert_eq!(w.to_string(), "A*B^-1*C^2");
        assert_eq!(w.inverse().to_string(), "C^-2*B*A^-1");
        assert!("1".parse::<Word>().unwrap().is_identity());
        assert!("A^x".parse::<Word>().is_err());
        assert!("3A".parse::<Word>().is_err());
    }

    #[test]
    fn interval_and_circle() {
        let g = build_grid_domain(GridShape::Interval { length: 2.0 }, 3, None).unwrap();
        assert_eq!(g.edges.iter().map(|e| (e.u, e.v)).collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(g.boundary, BTreeSet::from([0, 2]));
        let c = build_grid_domain(GridShape::Circle { length: 5.0 }, 5, None).unwrap();
        assert_eq!(c.edges.len(), 5);
        assert!(c.boundary.is_empty());
        assert!(c.adjacency().iter().all(|a| a.len() == 2));
        assert!(build_grid_domain(GridShape::Circle { length: 1.0 }, 1, None).is_err());
    }

    #[test]
    fn torus_is_four_regular() {
        let t = build_grid_domain(GridShape::Torus { width: 1.0, height: 1.0 }, 6, None).unwrap();
        assert_eq!(t.n(), 36);
        assert!(t.adjacency().iter().all(|a| a.len() == 4));
        assert!(t.edges.iter().all(|e| e.w == 1.0));
        assert_eq!(t.grid.as_ref().unwrap().wrap_x.len(), 6);
    }

    #[test]
    fn rectangle_and_disk_interiors_have_full_stencils() {
        for shape in [
            GridShape::Rectangle { width: 1.0, height: 1.0 },
            GridShape::Disk { radius: 1.0 },
        ] {
            let g = build_grid_domain(shape, 9, None).unwrap();
            let adj = g.adjacency();
            for v in g.interior() {
                assert_eq!(adj[v].len(), 4);
            }
            assert!(validate_domain(&g, None).ok());
        }
    }

    #[test]
    fn text_roundtrip_is_byte_stable() {
        let mut g = build_grid_domain(GridShape::Circle { length: 3.0 }, 4, None).unwrap();
        g.edges[3].twist = Some("A*B^-1".parse().unwrap());
        let text = g.to_text();
        let back = DomainGraph::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.edges, g.edges);
        assert!(DomainGraph::from_text("npcgraph v2\n").is_err());
        assert!(DomainGraph::from_text("npcgraph v1\nV 0 1\nE 0 3 1\n").is_err());
    }

    #[test]
    fn validation_flags() {
        let mut g = build_grid_domain(GridShape::Interval { length: 1.0 }, 4, None).unwrap();
        assert!(validate_domain(&g, None).ok());
        g.edges[1].w = -1.0;
        let d = validate_domain(&g, None);
        assert!(!d.ok() && d.nonpositive_weights == vec![1]);
        g.edges.remove(1);
        g.recompute_measures();
        let d = validate_domain(&g, None);
        assert!(!d.connected && d.components == 2);
    }

    #[test]
    fn relation_checked_at_construction() {
        let space = NpcSpace::Spd { n: 2, field: Field::Real };
        let a = Isometry::Spd(linalg::diag(&[2.0, 0.5]));
        let b = Isometry::Spd(linalg::diag(&[3.0, 1.0 / 3.0]));
        let comm: Word = "A*B*A^-1*B^-1".parse().unwrap();
        let gens = BTreeMap::from([("A".to_string(), a.clone()), ("B".to_string(), b)]);
        assert!(Representation::new(space, gens, vec![comm.clone()]).is_ok());

        let mut rot = linalg::identity(2);
        let (s, c) = (0.3f64.sin(), 0.3f64.cos());
        rot[(0, 0)] = linalg::c(c);
        rot[(0, 1)] = linalg::c(-s);
        rot[(1, 0)] = linalg::c(s);
        rot[(1, 1)] = linalg::c(c);
        let b = Isometry::Spd(&rot * linalg::diag(&[1.5, 1.0 / 1.5]));
        let gens = BTreeMap::from([("A".to_string(), a), ("B".to_string(), b)]);
        assert!(matches!(Representation::new(space, gens, vec![comm]), Err(Error::Invariant(_))));
    }

    #[test]
    fn twisting_unknown_generator_fails() {
        let space = NpcSpace::HyperbolicPlane;
        let rep = Representation::trivial(space);
        let c = build_grid_domain(GridShape::Circle { length: 1.0 }, 4, None).unwrap();
        let err = glue_periodic_grid(&c, &rep, Some(&Word::generator("A")), None).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
