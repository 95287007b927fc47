use std::collections::BTreeMap;
use std::path::Path;

use npc_harmonic::barycenter::{karcher_mean_from, WeightedCloud};
use npc_harmonic::corlette::refinement_study;
use npc_harmonic::domain_complex::{
    build_grid_domain, glue_periodic_grid, validate_domain, DiscreteMap, DomainGraph, GridShape, Representation, Word,
};
use npc_harmonic::foliation_trees::{hausdorff_to_leaves, singular_locus, tree_harmonicity_residual, FoliationSpec, LocusThreshold};
use npc_harmonic::harmonic_solver::{equivariant_initial_map, solve_dirichlet, solve_equivariant, SolveConfig};
use npc_harmonic::smooth_checks::{self as sc, SignReport};
use npc_harmonic::target_spaces::{self as ts, Field, Isometry, NpcSpace, Point};
use npc_harmonic::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{CheckNpcArgs, Cli, Command, CorletteArgs, Failure, FoliationArgs, KarcherArgs, SolveArgs, VerifyArgs};

type Run<T> = Result<T, Failure>;

pub fn run(cli: &Cli) -> Run<()> {
    if cli.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    match &cli.command {
        Command::Solve(a) => solve(a, cli.threads),
        Command::Karcher(a) => karcher(a),
        Command::Verify(a) => verify(a),
        Command::Corlette(a) => corlette(a, cli.threads),
        Command::Foliation(a) => foliation(a),
        Command::CheckNpc(a) => check_npc(a),
    }
}

// -- I/O --------------------------------------------------------------------

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read(path: &Path) -> Run<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json(path: &Path) -> Run<Value> {
    serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Run<()> {
    std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline, to a file or standard output.
fn emit(out: Option<&Path>, mut report: Value) -> Run<()> {
    report["schema"] = json!("report_v1");
    let text = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
    match out {
        Some(p) => write(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// A point given either as a bare payload or as a tagged object.
fn point(space: &NpcSpace, v: &Value) -> Run<Point> {
    if v.get("payload").is_some() {
        Ok(ts::point_from_json(v, Some(space))?.1)
    } else {
        Ok(ts::point_from_payload(space, v)?)
    }
}

fn space_of(spec: &str) -> Run<NpcSpace> {
    Ok(spec.parse::<NpcSpace>()?)
}

/// `diag(a,b,...)` or a JSON isometry payload.
fn inline_isometry(space: &NpcSpace, text: &str) -> Run<Isometry> {
    let text = text.trim();
    let payload = if let Some(inner) = text.strip_prefix("diag(").and_then(|t| t.strip_suffix(')')) {
        let d: Vec<f64> = inner
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("bad number '{x}' in '{text}'"))))
            .collect::<Run<_>>()?;
        let rows: Vec<Vec<f64>> = (0..d.len())
            .map(|i| (0..d.len()).map(|j| if i == j { d[i] } else { 0.0 }).collect())
            .collect();
        json!(rows)
    } else {
        serde_json::from_str(text).map_err(|e| usage(format!("bad isometry '{text}': {e}")))?
    };
    Ok(ts::isometry_from_payload(space, &payload)?)
}

/// `--rep` value: an existing JSON file, or inline `A=...;B=...`.
fn representation(space: NpcSpace, spec: &str) -> Run<Representation> {
    let path = Path::new(spec);
    if path.is_file() {
        let v = read_json(path)?;
        if let Some(tag) = v.get("space").and_then(Value::as_str) {
            if space_of(tag)? != space {
                return Err(usage(format!("representation acts on {tag} but the target is {space}")));
            }
        }
        let gens = v
            .get("generators")
            .and_then(Value::as_object)
            .ok_or_else(|| usage("representation file needs a 'generators' object"))?;
        let mut generators = BTreeMap::new();
        for (name, payload) in gens {
            let iso = match payload.get("payload") {
                Some(p) => ts::isometry_from_payload(&space, p)?,
                None => ts::isometry_from_payload(&space, payload)?,
            };
            generators.insert(name.clone(), iso);
        }
        let relations = match v.get("relations") {
            None => Vec::new(),
            Some(r) => r
                .as_array()
                .ok_or_else(|| usage("'relations' must be an array of words"))?
                .iter()
                .map(|w| {
                    let s = w.as_str().ok_or_else(|| usage("relations are strings"))?;
                    Ok(s.parse::<Word>()?)
                })
                .collect::<Run<_>>()?,
        };
        return Ok(Representation::new(space, generators, relations)?);
    }
    if !spec.contains('=') {
        return Err(usage(format!("--rep '{spec}' is neither a file nor NAME=ISOMETRY")));
    }
    let mut generators = BTreeMap::new();
    for part in spec.split(';').filter(|p| !p.trim().is_empty()) {
        let (name, iso) = part.split_once('=').ok_or_else(|| usage(format!("expected NAME=ISOMETRY, got '{part}'")))?;
        let name = name.trim().to_string();
        if generators.insert(name.clone(), inline_isometry(&space, iso)?).is_some() {
            return Err(usage(format!("generator {name} given twice")));
        }
    }
    Ok(Representation::new(space, generators, vec![])?)
}

fn solve_config(tol: f64, max_sweeps: usize, order: &str, seed: u64, threads: usize, bound: f64) -> Run<SolveConfig> {
    Ok(SolveConfig {
        tol,
        max_sweeps,
        order: order.parse()?,
        seed,
        threads,
        divergence_bound: bound,
    })
}

// -- solve ------------------------------------------------------------------

fn solve(a: &SolveArgs, threads: usize) -> Run<()> {
    let space = space_of(&a.target)?;
    let domain = DomainGraph::from_text(&read(&a.domain)?)?;
    let rep = match &a.rep {
        Some(r) => representation(space, r)?,
        None => Representation::trivial(space),
    };
    let diag = validate_domain(&domain, Some(&rep));
    if !diag.ok() {
        return Err(usage(format!("invalid domain: {}", diag.summary())));
    }
    let cfg = solve_config(a.tol, a.max_sweeps, &a.order, a.seed, threads, a.divergence_bound)?;

    let boundary: BTreeMap<usize, Point> = match &a.boundary {
        Some(p) => {
            let v = read_json(p)?;
            let obj = v.as_object().ok_or_else(|| usage("boundary file must map vertex ids to points"))?;
            obj.iter()
                .map(|(k, v)| {
                    let id = k.parse::<usize>().map_err(|_| usage(format!("bad vertex id '{k}'")))?;
                    Ok((id, point(&space, v)?))
                })
                .collect::<Run<_>>()?
        }
        None => BTreeMap::new(),
    };
    let init = match &a.init {
        Some(p) => {
            let v = read_json(p)?;
            let arr = v.as_array().ok_or_else(|| usage("init file must be an array of points"))?;
            let values = arr.iter().map(|x| point(&space, x)).collect::<Run<Vec<_>>>()?;
            DiscreteMap { space, values }
        }
        None if domain.boundary.is_empty() => equivariant_initial_map(&domain, &rep)?,
        None => {
            if boundary.is_empty() {
                return Err(usage("domain has boundary vertices; pass --boundary"));
            }
            let cloud = WeightedCloud::uniform(boundary.values().cloned().collect())?;
            let start = karcher_mean_from(&space, &cloud, None, 1e-12, 1000)?.point;
            DiscreteMap::constant(space, start, domain.n())
        }
    };

    let result = if domain.boundary.is_empty() {
        if !boundary.is_empty() {
            return Err(usage("boundary values given but the domain has no boundary"));
        }
        solve_equivariant(&domain, &rep, init, &cfg)
    } else {
        solve_dirichlet(&domain, &rep, &boundary, init, &cfg)
    };
    let (map, trace) = match result {
        Ok(r) => r,
        Err(Error::SweepLimit { sweeps, max_disp, trace }) => {
            if let Some(p) = &a.trace_out {
                write(p, &trace.to_csv())?;
            }
            return Err(Error::SweepLimit { sweeps, max_disp, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(p) = &a.trace_out {
        write(p, &trace.to_csv())?;
    }
    let values: Vec<Value> = map.values.iter().map(|p| ts::point_payload(&space, p)).collect();
    emit(
        a.out.as_deref(),
        json!({
            "command": "solve",
            "target": space.to_string(),
            "mode": if domain.boundary.is_empty() { "equivariant" } else { "dirichlet" },
            "status": "converged",
            "sweeps": trace.records.len(),
            "initial_energy": trace.initial_energy,
            "energy": trace.final_energy(),
            "max_disp": trace.records.last().map_or(0.0, |r| r.max_disp),
            "values": values,
        }),
    )
}

// -- karcher ----------------------------------------------------------------

fn karcher(a: &KarcherArgs) -> Run<()> {
    let v = read_json(&a.input)?;
    let space = space_of(v.get("space").and_then(Value::as_str).ok_or_else(|| usage("input needs a 'space' tag"))?)?;
    let pts = v
        .get("points")
        .and_then(Value::as_array)
        .ok_or_else(|| usage("input needs a 'points' array"))?
        .iter()
        .map(|p| point(&space, p))
        .collect::<Run<Vec<_>>>()?;
    let cloud = match v.get("weights") {
        None => WeightedCloud::uniform(pts)?,
        Some(w) => {
            let ws = w
                .as_array()
                .ok_or_else(|| usage("'weights' must be an array"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| usage("weights are numbers")))
                .collect::<Run<Vec<_>>>()?;
            WeightedCloud::new(pts, ws)?
        }
    };
    let out = karcher_mean_from(&space, &cloud, None, a.tol, a.max_iter)?;
    emit(
        a.out.as_deref(),
        json!({
            "command": "karcher",
            "space": space.to_string(),
            "mean": ts::point_payload(&space, &out.point),
            "iterations": out.iterations,
            "displacement": out.displacement,
        }),
    )
}

// -- verify -----------------------------------------------------------------

fn sign_json(r: &SignReport) -> Value {
    json!({
        "samples": r.samples,
        "violations": r.violations,
        "negative": r.negative,
        "zero": r.zero,
        "positive": r.positive,
        "worst": r.worst,
    })
}

fn merge(total: &mut SignReport, r: SignReport) {
    total.samples += r.samples;
    total.violations += r.violations;
    total.negative += r.negative;
    total.zero += r.zero;
    total.positive += r.positive;
    total.worst = total.worst.max(r.worst);
}

/// Draws split evenly over at most ten random base points.
fn batches(points: usize) -> Vec<usize> {
    let k = points.clamp(1, 10);
    (0..k).map(|i| points / k + usize::from(i < points % k)).collect()
}

fn verify(a: &VerifyArgs) -> Run<()> {
    if a.points == 0 {
        return Err(usage("--points must be positive"));
    }
    if !(a.step > 0.0) {
        return Err(usage("--step must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let empty = || SignReport { samples: 0, violations: 0, negative: 0, zero: 0, positive: 0, worst: f64::NEG_INFINITY };
    let (detail, violated) = match a.identity.as_str() {
        "hermitian-neg" => {
            let chart = sc::riemannian_chart(&a.chart)?;
            let mut total = empty();
            for n in batches(a.points) {
                let y: Vec<f64> = (0..chart.dim()).map(|_| rng.random_range(0.2..0.8)).collect();
                merge(&mut total, sc::hermitian_negativity_test(&chart.curvature(&y), n, &mut rng));
            }
            (sign_json(&total), total.violations > 0)
        }
        "strong-neg" => {
            let chart = sc::kahler_chart(&a.chart)?;
            let mut total = empty();
            for n in batches(a.points) {
                let w: Vec<_> = (0..chart.dim())
                    .map(|_| num_complex::Complex64::from_polar(rng.random_range(0.0..0.4), rng.random_range(0.0..std::f64::consts::TAU)))
                    .collect();
                let kc = sc::kahler_curvature(chart.as_ref(), &w, 1e-4);
                merge(&mut total, sc::strong_negativity_test(&kc, n, &mut rng));
            }
            (sign_json(&total), total.violations > 0)
        }
        id @ ("tension" | "weitzenbock" | "pluriharmonic" | "sampson") => {
            let chart = sc::named_chart(&a.chart)?;
            let mut worst: f64 = 0.0;
            for _ in 0..a.points {
                let x = chart.sample(&mut rng);
                let r = match id {
                    "tension" => sc::tension_norm(&chart.map, &chart.metrics(), &x)?,
                    "weitzenbock" => sc::weitzenbock_residual(&chart.map, &chart.metrics(), &x, a.step)?.residual,
                    "pluriharmonic" => sc::pluriharmonic_tensor(&chart.map, chart.target.as_ref(), &x)?.max_abs(),
                    _ => sc::sampson_identity_residual(&chart.map, chart.target.as_ref(), &x, a.step)?,
                };
                worst = worst.max(r);
            }
            (json!({ "points": a.points, "max_residual": worst, "tol": a.tol }), !(worst <= a.tol))
        }
        other => return Err(usage(format!("unknown identity '{other}'"))),
    };
    emit(
        a.out.as_deref(),
        json!({
            "command": "verify",
            "identity": a.identity,
            "chart": a.chart,
            "seed": a.seed,
            "step": a.step,
            "result": detail,
            "ok": !violated,
        }),
    )?;
    if violated {
        return Err(Failure::Violation(format!("{} check on chart '{}' failed", a.identity, a.chart)));
    }
    Ok(())
}

// -- corlette ---------------------------------------------------------------

fn corlette(a: &CorletteArgs, threads: usize) -> Run<()> {
    let field = match a.field.as_str() {
        "real" => Field::Real,
        "complex" => Field::Complex,
        f => return Err(usage(format!("unknown field '{f}'"))),
    };
    let space = NpcSpace::Spd { n: a.n, field };
    space.validate()?;
    if a.cycle < 3 {
        return Err(usage("--cycle needs at least 3 vertices"));
    }
    let rep = representation(space, &a.rep)?;
    let (name, g) = match rep.generators.iter().collect::<Vec<_>>().as_slice() {
        [(name, Isometry::Spd(g))] => ((*name).clone(), g.clone()),
        _ => return Err(usage("corlette takes exactly one generator")),
    };
    let cfg = solve_config(a.tol, a.max_sweeps, "sequential", 0, threads, 30.0)?;

    // Unit edge weights: the energy tends to ℓ²/(2N).
    let base = build_grid_domain(GridShape::Circle { length: a.cycle as f64 }, a.cycle, None)?;
    let domain = glue_periodic_grid(&base, &rep, Some(&Word::generator(&name)), None)?;
    let init = equivariant_initial_map(&domain, &rep)?;
    let (_, trace) = solve_equivariant(&domain, &rep, init, &cfg)?;
    let energy = trace.final_energy();

    let sizes: Vec<usize> = if a.cycle % 4 == 0 && a.cycle >= 16 { vec![a.cycle / 4, a.cycle / 2, a.cycle] } else { vec![a.cycle] };
    let study = refinement_study(&g, field, &sizes, &cfg)?;
    let rows: Vec<Value> = study
        .rows
        .iter()
        .map(|r| {
            json!({
                "n": r.n,
                "energy": r.energy,
                "sweeps": r.sweeps,
                "tension_residual": r.residual.tension_residual,
                "divergence_norm": r.residual.divergence_norm,
                "identity_defect": r.residual.identity_defect,
                "trace_defect": r.residual.trace_defect,
            })
        })
        .collect();
    let order = |x: f64| if sizes.len() > 1 { json!(x) } else { Value::Null };
    emit(
        a.out.as_deref(),
        json!({
            "command": "corlette",
            "space": space.to_string(),
            "cycle": a.cycle,
            "energy": energy,
            "sweeps": trace.records.len(),
            "translation_length": (2.0 * a.cycle as f64 * energy).sqrt(),
            "refinement": rows,
            "tension_order": order(study.tension_order),
            "divergence_order": order(study.divergence_order),
        }),
    )
}

// -- foliation --------------------------------------------------------------

fn foliation(a: &FoliationArgs) -> Run<()> {
    let threshold = match a.threshold.as_str() {
        "scaled" => LocusThreshold::Scaled,
        "plain" => LocusThreshold::Plain,
        t => return Err(usage(format!("unknown threshold '{t}'"))),
    };
    let mut coarse = FoliationSpec::new(a.k, a.half_width, a.resolution)?;
    coarse.seed = a.seed;
    let mut fine = coarse.clone();
    fine.resolution = 2 * a.resolution - 1;
    let mut rows = Vec::new();
    let mut measured = Vec::new();
    for spec in [&coarse, &fine] {
        let r = tree_harmonicity_residual(spec, a.exclusion)?;
        let locus = singular_locus(spec, threshold)?;
        let h = hausdorff_to_leaves(spec, &locus);
        measured.push((r.residual, h));
        rows.push(json!({
            "resolution": spec.resolution,
            "spacing": r.spacing,
            "residual": r.residual,
            "checked": r.checked,
            "excluded": r.excluded,
            "locus_points": locus.len(),
            "hausdorff": h,
        }));
    }
    emit(
        a.out.as_deref(),
        json!({
            "command": "foliation",
            "k": a.k,
            "half_width": a.half_width,
            "threshold": a.threshold,
            "grids": rows,
            "residual_ratio": measured[0].0 / measured[1].0,
            "hausdorff_ratio": measured[0].1 / measured[1].1,
        }),
    )
}

// -- check-npc --------------------------------------------------------------

const NPC_SLACK: f64 = -1e-8;

fn check_npc(a: &CheckNpcArgs) -> Run<()> {
    let spaces = match &a.target {
        Some(t) => vec![space_of(t)?],
        None => vec![
            NpcSpace::Euclidean { dim: 3 },
            NpcSpace::HyperbolicPlane,
            NpcSpace::Spd { n: 2, field: Field::Real },
            NpcSpace::Spd { n: 3, field: Field::Complex },
            NpcSpace::Pod { k: 3 },
        ],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for space in &spaces {
        let (mut tri, mut men, mut aga) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for _ in 0..a.samples {
            let p: Vec<Point> = (0..4).map(|_| ts::random_point(space, a.scale, &mut rng)).collect();
            let t = rng.random::<f64>();
            tri = tri.min(ts::check_triangle_comparison(space, &p[0], &p[1], &p[2], t)?);
            let (m, g) = ts::check_quadrilateral(space, &p[0], &p[1], &p[2], &p[3], t)?;
            men = men.min(m);
            aga = aga.min(g);
        }
        let ok = tri.min(men).min(aga) >= NPC_SLACK;
        if !ok {
            bad.push(space.to_string());
        }
        rows.push(json!({
            "space": space.to_string(),
            "samples": a.samples,
            "triangle_min": tri,
            "menelaus_min": men,
            "agamemnon_min": aga,
            "ok": ok,
        }));
    }
    emit(a.out.as_deref(), json!({"command": "check-npc", "seed": a.seed, "spaces": rows, "ok": bad.is_empty()}))?;
    if !bad.is_empty() {
        return Err(Failure::Violation(format!("comparison inequality failed for {}", bad.join(", "))));
    }
    Ok(())
}
