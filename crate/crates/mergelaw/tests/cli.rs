//! End-to-end checks of the command-line interface: subcommand wiring,
//! output files, determinism, and exit codes (0 ok, 2 input, 3 numerical).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mergelaw::{save_checkpoint, Checkpoint, Tensor};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mergelaw"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mergelaw")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn toy_checkpoint(dir: &Path, name: &str, scale: f32) -> PathBuf {
    let mut c = Checkpoint::default();
    c.insert("w", Tensor::new(vec![4], vec![scale; 4]));
    let path = dir.join(name);
    save_checkpoint(&c, &path).unwrap();
    path
}

#[test]
fn merge_subcommand_writes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let base = toy_checkpoint(dir.path(), "base.safetensors", 1.0);
    let e1 = toy_checkpoint(dir.path(), "e1.safetensors", 2.0);
    let e2 = toy_checkpoint(dir.path(), "e2.safetensors", 4.0);
    let out_path = dir.path().join("merged.safetensors");

    let out = run(&[
        "merge",
        "--base",
        base.to_str().unwrap(),
        "--experts",
        e1.to_str().unwrap(),
        e2.to_str().unwrap(),
        "--method",
        "average",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let merged = mergelaw::load_checkpoint(&out_path).unwrap();
    assert_eq!(merged.tensors["w"].data, vec![3.0; 4]); // mean of 2 and 4
}

#[test]
fn merge_missing_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "merge",
        "--base",
        "/nonexistent/base.safetensors",
        "--experts",
        "/nonexistent/e.safetensors",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn fit_curve_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("table.csv");
    // exact curve L(k) = 0.5 + 0.2/(k + 0.5) encoded as k-donor models
    let mut rows = String::from("model,domain,ce_loss\n");
    for k in 1..=9u32 {
        let model: Vec<String> = (0..k).map(|i| format!("d{i}")).collect();
        rows.push_str(&format!(
            "{},macro,{}\n",
            model.join("-"),
            0.5 + 0.2 / (k as f64 + 0.5)
        ));
    }
    write(&csv, &rows);
    let out_json = dir.path().join("fit.json");
    let out = run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--model",
        "curve",
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    assert!((v["params"]["L_inf"].as_f64().unwrap() - 0.5).abs() < 1e-4);
    assert!((v["params"]["b"].as_f64().unwrap() - 0.5).abs() < 1e-4);
    assert!(v["r_squared"].as_f64().unwrap() > 1.0 - 1e-9);
}

#[test]
fn fit_rejects_insufficient_points_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("short.csv");
    write(&csv, "model,domain,ce_loss\na,x,0.5\na-b,x,0.4\n");
    let out = run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        dir.path().join("fit.json").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
}

#[test]
fn eval_emits_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    write(&params, r#"{"L_inf": 0.7137, "A": 0.0783, "b": 0.6875}"#);
    let out_csv = dir.path().join("eval.csv");
    let out = run(&[
        "eval",
        "--params",
        params.to_str().unwrap(),
        "--k",
        "1,9",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert!(text.starts_with("series,x,y\n"));
    assert!(text.contains("ce_vs_k,1,0.76"), "got: {text}");
}

#[test]
fn plan_reports_kstar_and_rule() {
    let dir = tempfile::tempdir().unwrap();
    let out_json = dir.path().join("plan.json");
    let out = run(&[
        "plan",
        "--points",
        "1:0.63333,2:0.58,4:0.54444",
        "--delta",
        "0.01",
        "--out",
        out_json.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(v["k_star"].as_u64(), Some(6));
    assert!(v["rule"].as_str().unwrap().contains("L(k)"));
}

#[test]
fn plan_flat_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "plan",
        "--points",
        "1:0.6,2:0.6,4:0.6",
        "--out",
        dir.path().join("plan.json").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diminishing-returns"));
}

#[test]
fn simulate_is_deterministic_and_flags_bad_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    write(
        &world,
        r#"{"dim": 4, "g": 1.0, "h": "identity", "mu": 0.0, "sigma": {"scaled_identity": 0.04}}"#,
    );
    let out1 = dir.path().join("sim1.csv");
    let out2 = dir.path().join("sim2.csv");
    for out_path in [&out1, &out2] {
        let out = run(&[
            "simulate",
            "--config",
            world.to_str().unwrap(),
            "--k",
            "1,2,4",
            "--trials",
            "500",
            "--seed",
            "9",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    }
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap()
    );
    assert!(std::fs::read_to_string(&out1)
        .unwrap()
        .starts_with("k,mean,var,se_mean,se_var,trials\n"));

    // indefinite covariance is a numerical failure (exit 3)
    let bad = dir.path().join("bad.json");
    write(
        &bad,
        r#"{"dim": 2, "g": 0.0, "h": "identity", "mu": 0.0, "sigma": {"diagonal": [1.0, -1.0]}}"#,
    );
    let out = run(&[
        "simulate",
        "--config",
        bad.to_str().unwrap(),
        "--k",
        "1,2",
        "--trials",
        "10",
        "--out",
        dir.path().join("bad.csv").to_str().unwrap(),
    ]);
    assert_code(&out, 3);
}

#[test]
fn permute_prints_base_then_reverse() {
    let out = run(&["permute", "--base", "a,b,c,d,e", "-m", "3", "--candidates", "50"]);
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "a-b-c-d-e");
    assert_eq!(lines[1], "e-d-c-b-a");
    assert_eq!(lines.len(), 3);
}

#[test]
fn synergy_and_order_stats_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    write(
        &csv,
        "model,domain,ce_loss\n\
         a,x,0.50\na,y,0.70\n\
         a-b,x,0.45\na-b,y,0.66\n",
    );
    let syn = dir.path().join("synergy.csv");
    let out = run(&[
        "synergy",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        syn.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = std::fs::read_to_string(&syn).unwrap();
    assert!(text.starts_with("donor,domain,mean_gain,count\n"));
    assert!(text.contains("b,x,0.05,1"));

    // order stats over two orders at the same (N, k)
    let table = dir.path().join("orders.csv");
    write(
        &table,
        "model,domain,ce_loss\n\
         a-b,x,0.40\na-b,y,0.60\n\
         b-a,x,0.50\nb-a,y,0.68\n",
    );
    let disp = dir.path().join("dispersion.csv");
    let out = run(&[
        "order-stats",
        "--input",
        table.to_str().unwrap(),
        "--out",
        disp.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = std::fs::read_to_string(&disp).unwrap();
    assert!(text.starts_with("n,k,orders,mean,std,range,cv\n"));
    assert!(text.contains("1,2,2,0.545"));
}

#[test]
fn ingest_check_summarizes_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("in.csv");
    write(&csv, "model,domain,ce_loss\nalgebra-code,physics,0.61\n");
    let out = run(&["ingest-check", "--input", csv.to_str().unwrap()]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("rows: 1"));

    let bad = dir.path().join("bad.csv");
    write(&bad, "model,domain,ce_loss\na,x,not-a-number\n");
    let out = run(&["ingest-check", "--input", bad.to_str().unwrap()]);
    assert_code(&out, 2);
}
