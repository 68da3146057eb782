use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exact_selective::conditioning::{build_target, EventContext, ModelKind};
use exact_selective::inference::{exact_pivot, Method};
use exact_selective::numerics::QuadratureSpec;
use exact_selective::selection::{
    lasso_event_rep, solve_randomized_lasso, Dataset, RandomizationScheme,
};
use exact_selective::study::{read_rows_csv, simulate_replicate, SimConfig, UniformityReport};
use exact_selective_cli::{read_interval_csv, rows_to_csv, to_json, InferReport, SelectReport};
use nalgebra::{DMatrix, DVector};

fn exsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exsel"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = exsel(args);
    assert!(
        out.status.success(),
        "{:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// A simulated dataset written as CSV with columns x0..x{p−1}, y.
fn simulated_csv(dir: &Path, n: usize, p: usize) -> PathBuf {
    let cfg = SimConfig {
        n,
        p,
        sparsity: 3,
        signal_fraction: 2.0,
        seed: 5,
        ..SimConfig::default()
    };
    let sim = simulate_replicate(&cfg, 0).unwrap();
    let mut text: String = (0..p).map(|j| format!("x{j},")).collect::<String>() + "y\n";
    for i in 0..n {
        for j in 0..p {
            text += &format!("{},", sim.data.x[(i, j)]);
        }
        text += &format!("{}\n", sim.data.y[i]);
    }
    write(dir, "sim.csv", &text)
}

#[test]
fn toy_interval_endpoints_reevaluate_to_their_levels() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "toy.csv", "x1,y\n1,2\n0,0\n");
    let path = input.to_str().unwrap();
    let common = [
        "--input",
        path,
        "--sigma",
        "1",
        "--tau2",
        "1",
        "--lambda",
        "1",
        "--epsilon",
        "0",
    ];
    // Find a seed whose randomization selects the feature.
    let (seed, select) = (0..50u64)
        .find_map(|s| {
            let seed = s.to_string();
            let mut args = vec!["select", "--seed", &seed];
            args.extend(common);
            let r: SelectReport = serde_json::from_slice(&ok(&args)).unwrap();
            (!r.selected.is_empty()).then_some((s, r))
        })
        .unwrap();
    assert!(select.kkt_residual < 1e-8);
    let seed = seed.to_string();
    let mut args = vec![
        "infer", "--method", "exact", "--alpha", "0.1", "--seed", &seed,
    ];
    args.extend(common);
    let report: InferReport = serde_json::from_slice(&ok(&args)).unwrap();
    let iv = &report.methods[0].intervals;
    assert_eq!(iv.len(), 1);

    let data = Dataset::new(
        DVector::from_vec(vec![2.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        Some(1.0),
    )
    .unwrap();
    let w = DVector::from_vec(select.randomization.clone());
    let out = solve_randomized_lasso(&data, 1.0, 0.0, &w).unwrap();
    let rep = lasso_event_rep(&data, &out, 1.0, 0.0).unwrap();
    let omega = RandomizationScheme::carving(1.0)
        .unwrap()
        .omega(&data.x)
        .unwrap();
    let ctx = EventContext::new(&rep, &omega).unwrap();
    let t = build_target(&data, &out, ModelKind::Selected, 0).unwrap();
    let params = ctx
        .pivot_params(&data, &ctx.geometry(&t).unwrap(), &t, 1.0)
        .unwrap();
    let quad = QuadratureSpec::default();
    assert!((exact_pivot(&params, iv[0].lower, &quad).unwrap() - 0.95).abs() < 1e-6);
    assert!((exact_pivot(&params, iv[0].upper, &quad).unwrap() - 0.05).abs() < 1e-6);
}

#[test]
fn empty_and_malformed_inputs_fail_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.csv", "");
    let out = exsel(&["select", "--input", empty.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));

    let bad = write(dir.path(), "bad.csv", "a,b,y\n1,2,3\n4,x,6\n7,8,9\n");
    let out = exsel(&["select", "--input", bad.to_str().unwrap()]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        !out.status.success() && err.contains("line 3") && err.contains("`b`"),
        "{err}"
    );

    let cfg = write(dir.path(), "c.toml", "[analysis]\nalhpa = 0.2\n");
    let out = exsel(&[
        "select",
        "--config",
        cfg.to_str().unwrap(),
        "--input",
        bad.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("alhpa"));

    let out = exsel(&[
        "select",
        "--input",
        bad.to_str().unwrap(),
        "--rho",
        "0.5",
        "--tau2",
        "1",
    ]);
    assert!(!out.status.success());
}

#[test]
fn huge_penalty_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 60, 5);
    let path = input.to_str().unwrap();
    let r: SelectReport =
        serde_json::from_slice(&ok(&["select", "--input", path, "--lambda", "1e9"])).unwrap();
    assert!(r.selected.is_empty());
    let r: InferReport = serde_json::from_slice(&ok(&[
        "infer", "--input", path, "--lambda", "1e9", "--method", "exact,uv",
    ]))
    .unwrap();
    assert!(r
        .methods
        .iter()
        .all(|m| m.intervals.is_empty() && m.error.is_none()));
}

#[test]
fn intervals_nest_in_alpha_and_exact_beats_split() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 300, 20);
    let path = input.to_str().unwrap();
    let run = |alpha: &str| -> InferReport {
        serde_json::from_slice(&ok(&[
            "infer",
            "--input",
            path,
            "--method",
            "exact,split",
            "--alpha",
            alpha,
        ]))
        .unwrap()
    };
    let (wide, narrow) = (run("0.1"), run("0.5"));
    let mean_len = |r: &InferReport, m: Method| {
        let v: Vec<f64> = r
            .rows()
            .filter(|x| x.method == m)
            .map(|x| x.length)
            .collect();
        assert!(!v.is_empty());
        v.iter().sum::<f64>() / v.len() as f64
    };
    for (a, b) in wide.rows().zip(narrow.rows()) {
        assert_eq!((a.method, a.index), (b.method, b.index));
        assert!(b.lower > a.lower && b.upper < a.upper);
    }
    assert!(mean_len(&wide, Method::Exact) < mean_len(&wide, Method::Split));
}

#[test]
fn outputs_round_trip_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulated_csv(dir.path(), 80, 6);
    let path = input.to_str().unwrap();
    let args = |out: &str| {
        vec![
            "infer",
            "--input",
            path,
            "--method",
            "exact,polyhedral,split,uv",
            "--model",
            "full",
            "--seed",
            "9",
            "--out",
        ]
        .into_iter()
        .map(String::from)
        .chain([out.to_string()])
        .collect::<Vec<_>>()
    };
    let run = |name: &str| {
        let out = dir.path().join(name);
        let a = args(out.to_str().unwrap());
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
        std::fs::read(out).unwrap()
    };
    let (j1, j2) = (run("a.json"), run("b.json"));
    assert_eq!(j1, j2);
    let report: InferReport = serde_json::from_slice(&j1).unwrap();
    assert_eq!(to_json(&report).unwrap(), j1);
    assert!(report.rows().any(|r| r.significant));

    let (c1, c2) = (run("a.csv"), run("b.csv"));
    assert_eq!(c1, c2);
    let rows = read_interval_csv(&dir.path().join("a.csv")).unwrap();
    assert_eq!(rows.len(), report.rows().count());
    assert_eq!(rows_to_csv(&rows).unwrap(), c1);
}

#[test]
fn simulate_and_validate_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "study.toml",
        "[simulation]\nn = 100\np = 20\nsparsity = 3\nn_reps = 1\nmethods = [\"exact\"]\n",
    );
    let c = cfg.to_str().unwrap();
    let (d1, d2) = (dir.path().join("s1"), dir.path().join("s2"));
    ok(&["simulate", "--config", c, "--out", d1.to_str().unwrap()]);
    ok(&["simulate", "--config", c, "--out", d2.to_str().unwrap()]);
    for f in ["summary.json", "replicates.csv"] {
        assert_eq!(
            std::fs::read(d1.join(f)).unwrap(),
            std::fs::read(d2.join(f)).unwrap()
        );
    }
    let rows = read_rows_csv(&d1.join("replicates.csv")).unwrap();
    assert!(!rows.is_empty() && rows.iter().all(|r| r.rep == 0));

    let bad = write(dir.path(), "bad.toml", "[simulation]\nreps = 3\n");
    let out = exsel(&[
        "simulate",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        d1.to_str().unwrap(),
    ]);
    assert!(!out.status.success() && String::from_utf8_lossy(&out.stderr).contains("reps"));

    let v = ok(&["validate", "--config", c, "--reps", "150", "--seed", "3"]);
    let report: UniformityReport = serde_json::from_slice(&v).unwrap();
    assert_eq!(report.method, Method::Exact);
    assert!(report.n_values >= 200 && report.p_value > 0.0);
}
