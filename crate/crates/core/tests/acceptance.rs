//! End-to-end acceptance checks, one line per criterion. Runs without the
//! libtest harness so the lines are always printed.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use npc_harmonic::barycenter::{karcher_mean, WeightedCloud};
use npc_harmonic::corlette::{psi_isometry_sweep, refinement_study};
use npc_harmonic::domain_complex::{build_grid_domain, glue_periodic_grid, DiscreteMap, DomainGraph, GridShape, Representation, Word};
use npc_harmonic::foliation_trees::{hausdorff_to_leaves, singular_locus, tree_harmonicity_residual, FoliationSpec, LocusThreshold};
use npc_harmonic::harmonic_solver::{equivariant_initial_map, solve_dirichlet, solve_equivariant, SolveConfig};
use npc_harmonic::linalg;
use npc_harmonic::smooth_checks::{self as sc, HalfPlane, PoincareDisk, Sphere};
use npc_harmonic::target_spaces::{self as ts, Field, Isometry, NpcSpace, Point};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn npc_axioms() -> Outcome {
    let start = Instant::now();
    let spaces = [
        NpcSpace::Euclidean { dim: 3 },
        NpcSpace::HyperbolicPlane,
        NpcSpace::Spd { n: 2, field: Field::Real },
        NpcSpace::Spd { n: 3, field: Field::Complex },
        NpcSpace::Pod { k: 3 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::INFINITY;
    let mut euclid_tri: f64 = 0.0;
    for space in &spaces {
        for _ in 0..10_000 {
            let pts: Vec<Point> = (0..4).map(|_| ts::random_point(space, 1.5, &mut rng)).collect();
            let t = rng.random::<f64>();
            let tri = ts::check_triangle_comparison(space, &pts[0], &pts[1], &pts[2], t).unwrap();
            let (men, aga) = ts::check_quadrilateral(space, &pts[0], &pts[1], &pts[2], &pts[3], t).unwrap();
            worst = worst.min(tri).min(men).min(aga);
            if matches!(space, NpcSpace::Euclidean { .. }) {
                euclid_tri = euclid_tri.max(tri.abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst >= -1e-8 && euclid_tri <= 1e-12 && secs < 10.0,
        format!("min residual {worst:.3e}, Euclidean triangle |residual| {euclid_tri:.3e}, {secs:.2}s"),
    )
}

fn karcher_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let e3 = NpcSpace::Euclidean { dim: 3 };
    let mut euc_err: f64 = 0.0;
    for _ in 0..100 {
        let pts: Vec<Point> = (0..7).map(|_| ts::random_point(&e3, 2.0, &mut rng)).collect();
        let ws: Vec<f64> = (0..7).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = ws.iter().sum();
        let mut mean = DVector::zeros(3);
        for (p, w) in pts.iter().zip(&ws) {
            let Point::Euclidean(v) = p else { unreachable!() };
            mean += v * (*w / total);
        }
        let m = karcher_mean(&e3, &WeightedCloud::new(pts, ws).unwrap(), 1e-12, 500).unwrap();
        let Point::Euclidean(v) = m else { unreachable!() };
        euc_err = euc_err.max((v - mean).amax());
    }
    let spd = NpcSpace::Spd { n: 3, field: Field::Complex };
    let mut spd_err: f64 = 0.0;
    for _ in 0..20 {
        let a = ts::random_point(&spd, 2.0, &mut rng).as_spd().unwrap().clone();
        let ai = linalg::inverse(&a).unwrap();
        let cloud = WeightedCloud::uniform(vec![Point::Spd(a), Point::Spd(ai)]).unwrap();
        let m = karcher_mean(&spd, &cloud, 1e-13, 500).unwrap();
        spd_err = spd_err.max(ts::distance(&spd, &m, &spd.basepoint()).unwrap());
    }
    let pod = NpcSpace::Pod { k: 3 };
    let triple = WeightedCloud::uniform((0..3).map(|r| Point::pod(r, 1.3)).collect()).unwrap();
    let origin = karcher_mean(&pod, &triple, 1e-12, 500).unwrap();
    let Point::Pod { radius, .. } = origin else { unreachable!() };
    outcome(
        euc_err <= 1e-10 && spd_err <= 1e-9 && radius == 0.0,
        format!("Euclidean {euc_err:.2e}, spd {{A, A⁻¹}} {spd_err:.2e}, pod radius {radius}"),
    )
}

fn laplacian_oracle(d: &DomainGraph, bv: &BTreeMap<usize, f64>) -> Vec<f64> {
    let interior = d.interior();
    let idx: BTreeMap<usize, usize> = interior.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let m = interior.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for e in &d.edges {
        for (x, y) in [(e.u, e.v), (e.v, e.u)] {
            if let Some(&i) = idx.get(&x) {
                a[(i, i)] += e.w;
                match idx.get(&y) {
                    Some(&j) => a[(i, j)] -= e.w,
                    None => rhs[i] += e.w * bv[&y],
                }
            }
        }
    }
    let sol = a.lu().solve(&rhs).unwrap();
    (0..d.n()).map(|v| idx.get(&v).map_or_else(|| bv[&v], |&i| sol[i])).collect()
}

fn dirichlet_linear() -> Outcome {
    let r1 = NpcSpace::Euclidean { dim: 1 };
    let d = build_grid_domain(GridShape::Rectangle { width: 1.0, height: 1.0 }, 32, None).unwrap();
    let bvals: BTreeMap<usize, f64> = d
        .boundary
        .iter()
        .map(|&v| {
            let [x, y] = d.vertices[v].pos.unwrap();
            (v, (2.0 * x).sin() * (1.0 + y) + y * y)
        })
        .collect();
    let oracle = laplacian_oracle(&d, &bvals);
    let bv = bvals.iter().map(|(v, x)| (*v, Point::euc(&[*x]))).collect();
    let cfg = SolveConfig { tol: 1e-13, ..Default::default() };
    let init = DiscreteMap::constant(r1, Point::euc(&[0.0]), d.n());
    let (m, trace) = solve_dirichlet(&d, &Representation::trivial(r1), &bv, init, &cfg).unwrap();
    let err = m
        .values
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let Point::Euclidean(x) = p else { unreachable!() };
            (x[0] - oracle[v]).abs()
        })
        .fold(0.0, f64::max);
    let mut prev = trace.initial_energy;
    let mut monotone = true;
    for r in &trace.records {
        monotone &= r.energy <= prev + 1e-10 * prev;
        prev = r.energy;
    }
    outcome(
        err <= 1e-8 && monotone,
        format!("max error {err:.2e} after {} sweeps, monotone energy {monotone}", trace.records.len()),
    )
}

fn dirichlet_uniqueness() -> Outcome {
    let spd = NpcSpace::Spd { n: 2, field: Field::Real };
    let d = build_grid_domain(GridShape::Rectangle { width: 1.0, height: 1.0 }, 8, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bv: BTreeMap<usize, Point> = d.boundary.iter().map(|&v| (v, ts::random_point(&spd, 1.5, &mut rng))).collect();
    let tol = 1e-8;
    let cfg = SolveConfig { tol, ..Default::default() };
    let rep = Representation::trivial(spd);
    let solve = |seed: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let init = DiscreteMap {
            space: spd,
            values: (0..d.n()).map(|_| ts::random_point(&spd, 2.0, &mut r)).collect(),
        };
        solve_dirichlet(&d, &rep, &bv, init, &cfg).unwrap().0
    };
    let (a, b) = (solve(40), solve(41));
    let dist = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(p, q)| ts::distance(&spd, p, q).unwrap())
        .fold(0.0, f64::max);
    outcome(dist <= 10.0 * tol, format!("max vertex distance {dist:.2e} (bound {:.0e})", 10.0 * tol))
}

fn cycle_energy(space: NpcSpace, g: Isometry, n: usize) -> f64 {
    let rep = Representation::new(space, BTreeMap::from([("A".to_string(), g)]), vec![]).unwrap();
    let base = build_grid_domain(GridShape::Circle { length: n as f64 }, n, None).unwrap();
    let d = glue_periodic_grid(&base, &rep, Some(&Word::generator("A")), None).unwrap();
    let init = equivariant_initial_map(&d, &rep).unwrap();
    let cfg = SolveConfig { tol: 1e-10, ..Default::default() };
    solve_equivariant(&d, &rep, init, &cfg).unwrap().1.final_energy()
}

fn translation_length() -> Outcome {
    let n = 64;
    let e = cycle_energy(NpcSpace::Spd { n: 2, field: Field::Real }, Isometry::Spd(linalg::diag(&[2.0, 0.5])), n);
    let l = 2f64.sqrt() * 4f64.ln();
    let rel_spd = (e / (l * l / (2.0 * n as f64)) - 1.0).abs();
    let g = Matrix2::new(2.0, 1.0, 1.0, 1.0);
    let eh = cycle_energy(NpcSpace::HyperbolicPlane, Isometry::Mobius(g), n);
    let lh = 2.0 * (g.trace().abs() / 2.0).acosh();
    let rel_hyp = (eh / (lh * lh / (2.0 * n as f64)) - 1.0).abs();
    outcome(
        rel_spd <= 0.01 && rel_hyp <= 0.01,
        format!("spd relative error {rel_spd:.2e}, hyperbolic relative error {rel_hyp:.2e}"),
    )
}

fn harmonic_map_equation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let id = sc::named_chart("hyperbolic").unwrap();
    let scaled = sc::named_chart("scaled").unwrap();
    let mut worst_id: f64 = 0.0;
    let mut worst_scaled: f64 = 0.0;
    for _ in 0..100 {
        let x = id.sample(&mut rng);
        worst_id = worst_id.max(sc::tension_norm(&id.map, &id.metrics(), &x).unwrap());
        let t = sc::tension_field(&scaled.map, &scaled.metrics(), &x).unwrap();
        worst_scaled = worst_scaled.max(t[0].abs()).max((t[1] + 1.5 / x[1]).abs());
    }
    outcome(
        worst_id <= 1e-8 && worst_scaled <= 1e-6,
        format!("identity |τ| {worst_id:.2e}, (x, 2y) error {worst_scaled:.2e}"),
    )
}

fn weitzenbock() -> Outcome {
    let id = sc::named_chart("hyperbolic").unwrap();
    let y = 1.3;
    let x = [0.2, y];
    let r1 = sc::weitzenbock_residual(&id.map, &id.metrics(), &x, 2e-2).unwrap();
    let r2 = sc::weitzenbock_residual(&id.map, &id.metrics(), &x, 1e-2).unwrap();
    let order = (r1.residual / r2.residual).log2();
    let exact = 6.0 / y.powi(4);
    outcome(
        order >= 1.8 && (r2.rhs - exact).abs() < 1e-10,
        format!("LHS {:.8} RHS {:.8} (6/y⁴ = {exact:.8}), order {order:.3}", r2.lhs, r2.rhs),
    )
}

fn negativity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let hyp = sc::hermitian_negativity_test(&sc::RiemannianChart::curvature(&HalfPlane, &[0.3, 1.2]), 10_000, &mut rng);
    let kc = sc::kahler_curvature(&PoincareDisk, &[Complex64::new(0.2, -0.1)], 1e-4);
    let strong = sc::strong_negativity_test(&kc, 10_000, &mut rng);
    let sphere = sc::hermitian_negativity_test(&sc::RiemannianChart::curvature(&Sphere { d: 2 }, &[0.1, 0.4]), 10_000, &mut rng);
    outcome(
        hyp.violations == 0 && strong.violations == 0 && sphere.violations > 0,
        format!(
            "hyperbolic {} violations, Poincaré disk {} violations, sphere control {} violations",
            hyp.violations, strong.violations, sphere.violations
        ),
    )
}

fn sampson() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let chart = sc::named_chart("product-geodesics").unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x = chart.sample(&mut rng);
        worst = worst.max(sc::sampson_identity_residual(&chart.map, chart.target.as_ref(), &x, sc::H_HIGH).unwrap());
    }
    // Substitute for the global theorems: converged solves on domains in ℂ
    // have pluriharmonic tensor bounded by their tension.
    let hyp = NpcSpace::HyperbolicPlane;
    let d = build_grid_domain(GridShape::Rectangle { width: 1.0, height: 1.0 }, 12, None).unwrap();
    let mut ratio: f64 = 0.0;
    let mut tension: f64 = 0.0;
    for seed in 0..3 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let c: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
        let bv: BTreeMap<usize, Point> = d
            .boundary
            .iter()
            .map(|&v| {
                let [x, y] = d.vertices[v].pos.unwrap();
                (v, Point::hyp(c[0] * x + c[1] * y * y, (c[2] * x + c[3] * y).exp()))
            })
            .collect();
        let init = DiscreteMap::constant(hyp, Point::hyp(0.0, 1.0), d.n());
        let cfg = SolveConfig { tol: 1e-12, ..Default::default() };
        let (m, _) = solve_dirichlet(&d, &Representation::trivial(hyp), &bv, init, &cfg).unwrap();
        let g = sc::grid_tensors(&d, &m, &HalfPlane).unwrap();
        let t = g.iter().map(|x| x.tension_norm()).fold(0.0, f64::max);
        let p = g.iter().map(|x| x.pluri_norm()).fold(0.0, f64::max);
        tension = tension.max(t);
        ratio = ratio.max(p / t);
    }
    outcome(
        worst <= 1e-4 && ratio <= 10.0,
        format!("identity residual {worst:.2e}; solves: max |P|/|τ| {ratio:.3} with |τ| ≤ {tension:.2e}"),
    )
}

fn donaldson_corlette() -> Outcome {
    let cfg = SolveConfig { tol: 1e-12, ..Default::default() };
    let study = refinement_study(&linalg::diag(&[2.0, 0.5]), Field::Real, &[16, 32, 64], &cfg).unwrap();
    let identity = study.rows.iter().map(|r| r.residual.identity_defect).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let psi = psi_isometry_sweep(2, Field::Complex, 100, &mut rng).unwrap();
    outcome(
        study.tension_order >= 1.8 && study.divergence_order >= 1.8 && identity <= 1e-10 && psi <= 1e-6,
        format!(
            "orders: tension {:.3}, divergence {:.3}; hθ + ½dh {identity:.1e}; Ψ isometry {psi:.1e}",
            study.tension_order, study.divergence_order
        ),
    )
}

fn foliation() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [1, 2] {
        let coarse = FoliationSpec::new(k, 1.0, 41).unwrap();
        let fine = FoliationSpec::new(k, 1.0, 81).unwrap();
        let r = tree_harmonicity_residual(&coarse, 3.0).unwrap().residual / tree_harmonicity_residual(&fine, 3.0).unwrap().residual;
        let h = |s: &FoliationSpec| hausdorff_to_leaves(s, &singular_locus(s, LocusThreshold::Scaled).unwrap());
        let hr = h(&coarse) / h(&fine);
        ok &= (1.6..=2.4).contains(&r) && (1.6..=2.4).contains(&hr);
        parts.push(format!("k={k}: residual ratio {r:.3}, Hausdorff ratio {hr:.3}"));
    }
    outcome(ok, parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("NPC comparison inequalities", npc_axioms),
        ("Karcher mean oracles", karcher_oracles),
        ("Dirichlet solve vs linear oracle", dirichlet_linear),
        ("Dirichlet uniqueness", dirichlet_uniqueness),
        ("equivariant translation length", translation_length),
        ("harmonic map equation", harmonic_map_equation),
        ("Weitzenböck identity", weitzenbock),
        ("curvature negativity", negativity),
        ("Sampson identity", sampson),
        ("harmonic metric correspondence", donaldson_corlette),
        ("foliation tree", foliation),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {:>2} {}: {} | {} | {:.2}s",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
