use std::process::Command;

use nilheat::heat_transform::heat_transform_manifold;
use nilheat::heisenberg::CGroupPoint;
use nilheat::nilmanifold::{manifold_norm, matrix_coefficient_field, HermiteFunction, LatticeParams};
use nilheat::C64;
use nilheat_cli::app::run;
use nilheat_cli::fieldio::format_manifold_function;

fn nilheat(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut all = vec!["nilheat"];
    all.extend_from_slice(args);
    let code = run(all, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const FAST: &str = "c01_mehler,m_group_law,m_p_even,c06_matrix_coefficient_identity";

#[test]
fn same_seed_gives_identical_reports() {
    let (a, ra, _) = nilheat(&["verify", "--checks", FAST, "--seed", "7", "--workers", "2"]);
    let (b, rb, _) = nilheat(&["verify", "--checks", FAST, "--seed", "7", "--workers", "1"]);
    assert_eq!((a, b), (0, 0));
    assert_eq!(ra, rb);
    let lines: Vec<&str> = ra.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].contains("\"record\":\"constants\""));
    let ids: Vec<String> = lines[1..]
        .iter()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["check_id"].as_str().unwrap().to_string())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn under_resolved_grid_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.jsonl");
    let (code, stdout, _) = nilheat(&[
        "verify",
        "--grid",
        "8",
        "--checks",
        "c11_round_trip,c12_torus_isometry",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_ne!(code, 0);
    assert!(stdout.contains("FAIL"));
    let report = std::fs::read_to_string(&path).unwrap();
    assert_eq!(report.matches("\"pass\":false").count(), 2);
}

#[test]
fn configuration_errors_exit_2_and_name_the_field() {
    let (code, _, err) = nilheat(&["verify", "--t", "-1"]);
    assert_eq!(code, 2);
    assert!(err.contains("`t`"), "{err}");
    let (code, _, err) = nilheat(&["verify", "--convention", "other"]);
    assert_eq!(code, 2);
    assert!(err.contains("`convention`"));
    let (code, _, err) = nilheat(&["verify", "--checks", "no_such_check"]);
    assert_eq!(code, 2);
    assert!(err.contains("`checks`"));
    assert_eq!(nilheat(&["frobnicate"]).0, 2);
    assert_eq!(nilheat(&["dump-kernel", "gauss"]).0, 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# desk run\nk = 2\nseed = 3\n").unwrap();
    let cfg = path.to_str().unwrap();
    let (code, out, _) = nilheat(&["verify", "--config", cfg, "--k", "1", "--checks", "m_p_even"]);
    assert_eq!(code, 0);
    let manifest: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(manifest["k"], 1);
    assert_eq!(manifest["seed"], 3);
    std::fs::write(&path, "workers = none\n").unwrap();
    let (code, _, err) = nilheat(&["verify", "--config", cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("`workers`"));
}

#[test]
fn kernel_tables() {
    let common = ["--grid", "5", "--radius", "1"];
    let table = |which: &str, k: &str| {
        let mut args = vec!["dump-kernel", which, "--k", k];
        args.extend_from_slice(&common);
        let (code, out, err) = nilheat(&args);
        assert_eq!(code, 0, "{err}");
        out
    };
    assert_eq!(table("p", "1"), table("p", "-1"));
    let mehler = table("mehler", "1");
    let mut lines = mehler.lines();
    assert!(lines.next().unwrap().starts_with("# t="));
    assert_eq!(lines.next().unwrap(), "x,y,closed,series");
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[2] - v[3]).abs() < 1e-10);
    }
    for l in table("heat", "1").lines().skip(2) {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[3].abs() <= 1e-12 * v[2].abs());
    }
    for which in ["weight-W", "weight-U", "manifold-K"] {
        assert_eq!(table(which, "1").lines().count(), 2 + 25);
    }
}

#[test]
fn decompose_finds_the_sector_of_a_matrix_coefficient() {
    let params = LatticeParams::new(1, 1).unwrap();
    let f = HermiteFunction::basis(vec![0], 1.0).unwrap();
    let field = matrix_coefficient_field(params, &[1], &f, 16, 8, 1e-15).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("f.csv");
    std::fs::write(&input, format_manifold_function(&field)).unwrap();
    let (code, out, err) = nilheat(&["decompose", input.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "k,j1,norm");
    let rows: Vec<(String, f64)> = lines
        .map(|l| {
            let (head, norm) = l.rsplit_once(',').unwrap();
            (head.to_string(), norm.parse().unwrap())
        })
        .collect();
    let total = manifold_norm(&field);
    let big: Vec<&(String, f64)> = rows.iter().filter(|r| r.1 > 1e-8 * total).collect();
    assert_eq!(big.len(), 1);
    assert_eq!(big[0].0, "1,1");
    let sum: f64 = rows.iter().map(|r| r.1 * r.1).sum();
    assert!((sum - total * total).abs() < 1e-8 * total * total);

    std::fs::write(&input, "x,u,xi,re,im\n0,0,0,1,0\n0.5,0,zero,1,0\n").unwrap();
    let (code, _, err) = nilheat(&["decompose", input.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn eval_matches_the_library() {
    let params = LatticeParams::new(1, 1).unwrap();
    let f = HermiteFunction::basis(vec![0], 1.0).unwrap();
    let field = matrix_coefficient_field(params, &[0], &f, 16, 8, 1e-15).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("f.csv");
    let points = dir.path().join("p.csv");
    std::fs::write(&input, format_manifold_function(&field)).unwrap();
    std::fs::write(&points, "zr,zi,wr,wi,cr,ci\n0.3,0.1,0.6,-0.2,0.1,0.05\n").unwrap();
    let (code, out, err) = nilheat(&["eval", input.to_str().unwrap(), "--points", points.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    let p = CGroupPoint::new(vec![C64::new(0.3, 0.1)], vec![C64::new(0.6, -0.2)], C64::new(0.1, 0.05)).unwrap();
    let want = heat_transform_manifold(&field, 0.1, &p, 1e-15).unwrap().value;
    assert_eq!((row[0], row[1]), (want.re, want.im));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_nilheat");
    let ok = Command::new(bin).args(["verify", "--checks", "m_p_even"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stderr).contains("1 checks, 0 failed"));
    let bad = Command::new(bin).args(["verify", "--grid", "2"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
