use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn npch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npch")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.ends_with('\n'));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("bad JSON ({e}): {text}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const PATH3: &str = "npcgraph v1\nV 0 1\nV 1 1\nV 2 1\nE 0 1 1\nE 1 2 1\nB 0\nB 2\n";

#[test]
fn solve_path_interior_is_midpoint() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "path3.graph", PATH3);
    let b = write(dir.path(), "b.json", r#"{"0": [0], "2": [1]}"#);
    let trace = dir.path().join("trace.csv");
    let out = npch(&["solve", "--domain", &g, "--target", "euc:1", "--boundary", &b, "--trace-out", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["schema"], "report_v1");
    assert!((r["values"][1][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let csv = std::fs::read_to_string(trace).unwrap();
    assert!(csv.starts_with("sweep,energy,max_disp\n") && csv.ends_with('\n'));
}

#[test]
fn pod_path_interior_goes_to_origin() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "path3.graph", PATH3);
    let b = write(dir.path(), "b.json", r#"{"0": [0, 1], "2": {"space": "pod:3", "payload": [1, 1]}}"#);
    let out = npch(&["solve", "--domain", &g, "--target", "pod:3", "--boundary", &b]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["values"][1][1].as_f64().unwrap(), 0.0);
}

#[test]
fn corlette_energy_matches_translation_length() {
    let out = npch(&["corlette", "--n", "2", "--rep", "A=diag(2,0.5)", "--cycle", "64"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    // ℓ = √2 ln 4 for diag(2, 1/2) under (n/2) tr(h⁻¹X h⁻¹Y).
    let l = 2f64.sqrt() * 4f64.ln();
    let e = r["energy"].as_f64().unwrap();
    assert!((e / (l * l / 128.0) - 1.0).abs() < 0.01, "energy {e}");
    assert!(r["tension_order"].as_f64().unwrap() >= 1.8);
    assert!(r["divergence_order"].as_f64().unwrap() >= 1.8);
}

#[test]
fn verify_sign_suites() {
    let out = npch(&["verify", "--identity", "hermitian-neg", "--chart", "hyperbolic", "--points", "10000"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["result"]["violations"], 0);

    let out = npch(&["verify", "--identity", "strong-neg", "--chart", "poincare", "--points", "2000"]);
    assert_eq!(out.status.code(), Some(0));

    let out = npch(&["verify", "--identity", "hermitian-neg", "--chart", "sphere", "--points", "100"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(report(&out)["result"]["violations"].as_u64().unwrap() > 0);
}

#[test]
fn verify_pointwise_identities() {
    for (id, chart) in [("tension", "hyperbolic"), ("weitzenbock", "hyperbolic"), ("sampson", "product-geodesics"), ("pluriharmonic", "holomorphic")] {
        let out = npch(&["verify", "--identity", id, "--chart", chart, "--points", "10"]);
        assert_eq!(out.status.code(), Some(0), "{id}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(report(&out)["result"]["max_residual"].as_f64().unwrap() <= 1e-4);
    }
    // (x, 2y) is not harmonic.
    let out = npch(&["verify", "--identity", "tension", "--chart", "scaled", "--points", "5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn karcher_means() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "c.json", r#"{"space": "euc:2", "points": [[0, 0], [3, 0], [0, 3]], "weights": [1, 1, 1]}"#);
    let r = report(&npch(&["karcher", "--input", &f]));
    assert!((r["mean"][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let f = write(dir.path(), "s.json", r#"{"space": "spd:2", "points": [[[2, 1], [1, 1]], [[1, -1], [-1, 2]]]}"#);
    let r = report(&npch(&["karcher", "--input", &f]));
    let m = &r["mean"];
    assert!((m[0][0].as_f64().unwrap() - 1.0).abs() < 1e-9 && m[0][1].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn exit_codes() {
    assert_eq!(npch(&["verify", "--identity", "nope", "--chart", "hyperbolic"]).status.code(), Some(1));
    assert_eq!(npch(&["check-npc", "--target", "spd:0"]).status.code(), Some(1));
    assert_eq!(npch(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(npch(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "path5.graph",
        "npcgraph v1\nV 0 1\nV 1 1\nV 2 1\nV 3 1\nV 4 1\nE 0 1 1\nE 1 2 1\nE 2 3 1\nE 3 4 1\nB 0\nB 4\n",
    );
    let b = write(dir.path(), "b.json", r#"{"0": [0, 1], "4": [3, 0.5]}"#);
    let trace = dir.path().join("t.csv");
    let out = npch(&["solve", "--domain", &g, "--target", "hyp", "--boundary", &b, "--max-sweeps", "2", "--tol", "1e-14", "--trace-out", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(trace).unwrap().lines().count(), 3);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(
        dir.path(),
        "sq.graph",
        "npcgraph v1\nV 0 1\nV 1 1\nV 2 1\nV 3 1\nV 4 1\nE 0 4 1\nE 1 4 1\nE 2 4 1\nE 3 4 1\nB 0\nB 1\nB 2\nB 3\n",
    );
    let b = write(dir.path(), "b.json", r#"{"0": [[2, 0], [0, 0.5]], "1": [[1, 0.5], [0.5, 1.25]], "2": [[2, 1], [1, 1]], "3": [[1, 0], [0, 1]]}"#);
    let run = |tag: &str| {
        let t = dir.path().join(format!("{tag}.csv"));
        let o = dir.path().join(format!("{tag}.json"));
        let out = npch(&["solve", "--domain", &g, "--target", "spd:2", "--boundary", &b, "--seed", "7", "--trace-out", t.to_str().unwrap(), "--out", o.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        (std::fs::read(t).unwrap(), std::fs::read(o).unwrap())
    };
    assert_eq!(run("a"), run("b"));
    assert_eq!(npch(&["check-npc", "--samples", "50", "--seed", "3"]).stdout, npch(&["check-npc", "--samples", "50", "--seed", "3"]).stdout);
}

#[test]
fn config_file_defaults_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "# verify defaults\nchart = hyperbolic\npoints = 10\nidentity = weitzenbock\n");
    let out = npch(&["--config", &cfg, "verify", "--identity", "tension"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["identity"], "tension");
    assert_eq!(r["result"]["points"], 10);

    let bad = write(dir.path(), "bad.cfg", "chart = hyperbolic\ncolour = blue\n");
    let out = npch(&["--config", &bad, "verify", "--identity", "tension"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn equivariant_solve_with_inline_rep() {
    // Four-cycle with one twisted edge; energy ℓ²/(2·4) with unit weights.
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "c4.graph", "npcgraph v1\nV 0 1\nV 1 1\nV 2 1\nV 3 1\nE 0 1 1\nE 1 2 1\nE 2 3 1\nE 3 0 1 twist=A\n");
    let out = npch(&["solve", "--domain", &g, "--target", "hyp", "--rep", "A=[[2,1],[1,1]]", "--tol", "1e-12"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let l = 2.0 * (1.5f64).acosh();
    assert!((r["energy"].as_f64().unwrap() - l * l / 8.0).abs() < 1e-8);
}

#[test]
fn foliation_and_check_npc_reports() {
    let r = report(&npch(&["foliation", "--k", "1", "--resolution", "41"]));
    let ratio = r["residual_ratio"].as_f64().unwrap();
    assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    let out = npch(&["check-npc", "--target", "hyp", "--samples", "500"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["ok"], true);
}
