use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
    "topology": {"kind": "generate", "cluster_sizes": [4, 5], "group_sizes": [[2, 2], [3, 2]],
                 "intra_cluster_edge_prob": 0.7, "cross_cluster_edge_prob": 0.3, "rng_seed": 3,
                 "minimizers": [[0.5, 0.5], [-0.5, 0.5]]},
    "mu": 0.02, "n_iters": 300, "n_trials": 5, "seed": 21,
    "sweep": {"mu_list": [0.05, 0.02]}
}"#;

fn diffnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffnet"))
        .args(args)
        .env("DIFFNET_THREADS", "2")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = diffnet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    for cmd in ["simulate", "analyze", "errprob"] {
        let a = tmp.path().join(format!("{cmd}_a"));
        let b = tmp.path().join(format!("{cmd}_b"));
        run_ok(&[cmd, "--config", cfg, "--output-dir", a.to_str().unwrap()]);
        run_ok(&[cmd, "--config", cfg, "--output-dir", b.to_str().unwrap()]);
        let (fa, fb) = (dir_files(&a), dir_files(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{cmd}");
    }
    let one = tmp.path().join("one");
    run_ok(&["simulate", "--config", cfg, "--n-trials", "1", "--output-dir", one.to_str().unwrap()]);
    let again = tmp.path().join("again");
    run_ok(&["simulate", "--config", cfg, "--n-trials", "1", "--output-dir", again.to_str().unwrap()]);
    assert_eq!(dir_files(&one), dir_files(&again));
}

#[test]
fn simulate_outputs_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("sim");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    let summary = json(&out.join("summary.json"));
    let (header, rows) = csv(&out.join("msd_curves.csv"));
    assert_eq!(header[..3], ["iter", "msd_rec1_total", "msd_rec2_total"]);
    assert_eq!(rows.len(), 301);
    assert_eq!(rows[0][0], "-1");
    assert_eq!(rows[300][0], "299");

    // Initial MSD is Σ_k ||w_k°||² with zero initialization.
    let initial: f64 = rows[0][1].parse().unwrap();
    assert!((initial - 9.0 * 0.5).abs() < 1e-12);

    // Steady state is the mean over the last 10% of iterations.
    let tail: Vec<f64> = rows[271..].iter().map(|r| r[1].parse().unwrap()).collect();
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let reported = summary["msd_rec1_total"].as_f64().unwrap();
    assert!((mean - reported).abs() <= 1e-12 * reported);
    assert_eq!(summary["steady_state_first_iter"], 270);
    assert_eq!(summary["completed_trials"], 5);

    let (dh, drows) = csv(&out.join("decisions.csv"));
    assert_eq!(dh, ["iter", "k", "l", "delta_sq", "theta", "decision", "truth"]);
    assert!(!drows.is_empty());
    for r in &drows {
        let (delta_sq, theta): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        let expected = if delta_sq < theta { "H0" } else { "H1" };
        assert_eq!(r[5], expected);
    }

    let topo = json(&out.join("final_topology.json"));
    assert!(topo.is_object());
}

#[test]
fn analyze_single_agent_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{
        "topology": {"kind": "inline", "n_agents": 1, "edges": [], "cluster_of": [0], "group_of": [0],
                     "minimizers": [[0.2, -0.1]]},
        "agents": {"kind": "explicit", "agents": [{"sigma_u_sq": 1.0, "sigma_v_sq": 0.1}]},
        "theta": {"absolute": 0.1},
        "mu": 0.002, "n_iters": 10, "n_trials": 1
    }"#,
    );
    let out = tmp.path().join("an");
    run_ok(&["analyze", "--config", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    let report = json(&out.join("theory_report.json"));
    let predicted = report["predicted_msd"].as_f64().unwrap();
    // μ Tr(H⁻¹R)/2 with H = 2I, R = 0.4I.
    assert!((predicted - 0.002 * 0.2).abs() < 1e-15);
}

#[test]
fn errprob_marks_out_of_range_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    // ||d⋆||² = 1, so θ = 1 is at the edge of the Type-II bound's domain.
    let text = SMALL.replace(r#""seed": 21,"#, r#""seed": 21, "theta": {"absolute": 1.0},"#);
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("ep");
    run_ok(&["errprob", "--config", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    let (header, rows) = csv(&out.join("bounds.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let cross: Vec<_> = rows.iter().filter(|r| r[col("same_cluster")] == "false").collect();
    assert!(!cross.is_empty());
    assert!(cross.iter().all(|r| r[col("type2_bound")] == "invalid"));
    let (eh, erows) = csv(&out.join("empirical.csv"));
    assert_eq!(erows.len(), 2);
    let b2 = eh.iter().position(|h| h == "type2_bound").unwrap();
    assert!(erows.iter().all(|r| r[b2] == "invalid"));
}

#[test]
fn pdf_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("pdf");
    run_ok(&["pdf", "--output-dir", out.to_str().unwrap()]);
    let (header, rows) = csv(&out.join("pdf_curves.csv"));
    assert_eq!(header, ["mu", "hypothesis", "z", "density"]);
    type Curve = ((String, String), Vec<(f64, f64)>);
    let mut curves: Vec<Curve> = Vec::new();
    for r in rows {
        let key = (r[0].clone(), r[1].clone());
        let point = (r[2].parse().unwrap(), r[3].parse().unwrap());
        match curves.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(point),
            None => curves.push((key, vec![point])),
        }
    }
    assert_eq!(curves.len(), 6);
    let trapezoid = |pts: &[(f64, f64)], upto: f64| {
        pts.windows(2)
            .filter(|w| w[1].0 <= upto)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum::<f64>()
    };
    for ((mu, hyp), pts) in &curves {
        assert_eq!(pts.len(), 4001);
        let mass = trapezoid(pts, f64::INFINITY);
        assert!((mass - 1.0).abs() < 1e-6, "{mu} {hyp}: mass {mass}");
        if hyp == "H0" && mu.parse::<f64>().unwrap() == 0.01 {
            assert!(trapezoid(pts, 0.5) > 0.999);
        }
    }
}

#[test]
fn topology_generate_and_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"cluster_sizes": [10, 10], "group_sizes": [[2, 3, 2, 2, 1], [10]],
            "intra_cluster_edge_prob": 0.5, "cross_cluster_edge_prob": 0.1, "rng_seed": 7}"#,
    )
    .unwrap();
    let topo = tmp.path().join("topo.json");
    let out = run_ok(&[
        "topology",
        "generate",
        "--spec",
        spec.to_str().unwrap(),
        "--output",
        topo.to_str().unwrap(),
    ]);
    let check: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(check["valid"], true);
    assert_eq!(check["n_agents"], 20);
    assert_eq!(check["n_groups"], 6);
    let out = run_ok(&["topology", "validate", "--input", topo.to_str().unwrap()]);
    let again: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(check, again);

    // A group spanning two clusters breaks the indexing rule.
    let bad = tmp.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"n_agents": 2, "edges": [[0, 1]], "cluster_of": [0, 1], "group_of": [0, 0],
            "minimizers": [[0.0], [1.0]]}"#,
    )
    .unwrap();
    let out = diffnet(&["topology", "validate", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.json");
    let out = diffnet(&["simulate", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(tmp.path(), r#"{"topology": {"kind": "generate"}, "mu": 0.01}"#);
    let out = diffnet(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Every trial diverges with a huge step size.
    let text = SMALL.replace(r#""mu": 0.02, "n_iters": 300"#, r#""mu": 50.0, "n_iters": 3000"#);
    let cfg = write_config(tmp.path(), &text);
    let out = diffnet(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        tmp.path().join("div").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn campaign_replica_splits_into_clusters() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/campaign2_n50.json");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c2");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["n_clusters"], 5);
    assert!(summary["correct_clustering_frequency"].as_f64().unwrap() >= 0.95);
    for c in summary["clusters"].as_array().unwrap() {
        assert!(c["msd_rec2"].as_f64().unwrap() <= c["msd_rec1"].as_f64().unwrap());
    }
}
