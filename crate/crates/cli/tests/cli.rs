//! End-to-end tests of the `hiernb` binary: pipeline reproducibility, file
//! outputs, and the exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hiernb_core::io::{
    load_trajectory, save_checkpoint, save_experiment_config, DatasetSizes, ExperimentConfig,
};
use hiernb_core::models::{GraphPolicy, ModelParams, ModelVariant};
use hiernb_core::sim::{ForceLaw, SimConfig, TrajStatus};

fn hiernb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiernb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// The stderr contract: failures emit one parseable JSON object per run.
fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_else(|| panic!("no stderr in {stderr:?}"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("unparseable error line {line:?}: {e}"))
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

/// Metrics rows minus their final column (wall-clock seconds, which no two
/// runs agree on).
fn without_timings(csv: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(rest, _)| rest).to_string())
        .collect()
}

#[test]
fn generate_writes_deterministic_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let base = [
        "generate", "--force", "gravity", "--n", "20", "--trajectories", "5", "--steps", "8",
        "--seed", "7",
    ];

    let mut args_a: Vec<&str> = base.to_vec();
    let a_str = out_a.to_str().unwrap();
    args_a.extend(["--out", a_str]);
    assert_ok(&hiernb(&args_a));

    // Same seed, more workers: identical bytes either way.
    let mut args_b: Vec<&str> = base.to_vec();
    let b_str = out_b.to_str().unwrap();
    args_b.extend(["--out", b_str, "--jobs", "3"]);
    assert_ok(&hiernb(&args_b));

    for i in 0..5 {
        let name = format!("train/traj_{i:05}.bin");
        let bytes_a = read(&out_a.join(&name));
        assert_eq!(bytes_a, read(&out_b.join(&name)), "{name} differs");
    }
    assert!(!out_a.join("valid").exists());
}

#[test]
fn pipeline_is_reproducible_and_reads_only() {
    let dir = tempfile::tempdir().unwrap();

    let mut cfg = ExperimentConfig::for_scale(5, ForceLaw::Gravity);
    cfg.dataset = DatasetSizes { train: 2, valid: 0, test: 2 };
    let mut sim = SimConfig::for_particle_count(5, ForceLaw::Gravity);
    sim.n_base_steps = 6;
    cfg.sim = Some(sim);
    cfg.train.total_steps = 4;
    cfg.train.batch_size = 2;
    cfg.train.log_every = 1;
    cfg.eval_taus = vec![3];
    cfg.seed = 11;
    let cfg_path = dir.path().join("exp.json");
    save_experiment_config(&cfg_path, &cfg).unwrap();
    let cfg_str = cfg_path.to_str().unwrap();

    let run_all = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let root = dir.path().join(tag);
        let root_str = root.to_str().unwrap().to_string();
        assert_ok(&hiernb(&["generate", "--config", cfg_str, "--out", &root_str]));

        let ckpt = root.join("model.ckpt");
        let curve = root.join("curve.csv");
        assert_ok(&hiernb(&[
            "train",
            "--config",
            cfg_str,
            "--data-root",
            &root_str,
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--curve",
            curve.to_str().unwrap(),
        ]));
        assert!(fs::read_to_string(&curve).unwrap().starts_with("step,loss,lr"));

        let test_dir = root.join("test");
        let probe = test_dir.join("traj_00000.bin");
        let input_before = read(&probe);
        let metrics = root.join("metrics.csv");
        assert_ok(&hiernb(&[
            "eval",
            "--config",
            cfg_str,
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--test-dir",
            test_dir.to_str().unwrap(),
            "--out",
            metrics.to_str().unwrap(),
        ]));
        assert_eq!(input_before, read(&probe), "eval mutated its input");

        (read(&ckpt), read(&metrics))
    };

    let (ckpt_a, metrics_a) = run_all("one");
    let (ckpt_b, metrics_b) = run_all("two");
    assert_eq!(ckpt_a, ckpt_b, "checkpoints differ between identical runs");
    assert_eq!(
        without_timings(&metrics_a),
        without_timings(&metrics_b),
        "metrics differ between identical runs"
    );

    let text = String::from_utf8(metrics_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trajectory,tau,rmse,energy_signed,truncated_at,wall_seconds"
    );
    assert!(text.lines().any(|l| l.starts_with("summary,3,")));
}

#[test]
fn rollout_and_export_produce_readable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let root_str = root.to_str().unwrap();
    assert_ok(&hiernb(&[
        "generate", "--force", "gravity", "--n", "5", "--trajectories", "1", "--steps", "5",
        "--seed", "3", "--out", root_str,
    ]));
    let input = root.join("train/traj_00000.bin");

    let ckpt = dir.path().join("m.ckpt");
    assert_ok(&hiernb(&[
        "train",
        "--data-root",
        root_str,
        "--steps",
        "2",
        "--batch",
        "2",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--seed",
        "5",
    ]));

    let pred = dir.path().join("pred.bin");
    let csv = dir.path().join("pred.csv");
    assert_ok(&hiernb(&[
        "rollout",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--tau",
        "4",
        "--out",
        pred.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]));

    let traj = load_trajectory(&pred).unwrap();
    assert_eq!(traj.snapshots.len(), 5); // initial + 4 steps
    assert_eq!(traj.status, TrajStatus::Complete);
    assert_eq!(traj.config.n_base_steps, 4);
    assert!(fs::read_to_string(&csv).unwrap().starts_with("step,particle,mass,x,y,vx,vy"));

    let exported = dir.path().join("again.csv");
    assert_ok(&hiernb(&[
        "export",
        "--input",
        pred.to_str().unwrap(),
        "--out",
        exported.to_str().unwrap(),
    ]));
    assert_eq!(fs::read(&csv).unwrap(), fs::read(&exported).unwrap());
}

#[test]
fn coverage_check_reports_zero_violations() {
    let out = hiernb(&["coverage-check", "--n", "64", "--depth", "3", "--periodic"]);
    assert_ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("0 violations"), "{stdout}");
}

#[test]
fn build_graph_emits_hierarchy_json() {
    let out = hiernb(&[
        "build-graph", "--force", "gravity", "--n", "30", "--depth", "3", "--seed", "2",
    ]);
    assert_ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["graph"], "hier");
    assert_eq!(v["depth"], 3);
    assert_eq!(v["n_particles"], 30);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();

    // 2: argument-parser failures.
    let out = hiernb(&["coverage-check", "--n", "8", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));

    // 3: malformed config.
    let bad_cfg = dir.path().join("bad.json");
    fs::write(&bad_cfg, "{not json").unwrap();
    let out = hiernb(&["generate", "--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_line(&out);
    assert_eq!(err["error"], "config");
    assert_eq!(err["code"], 3);
    assert!(err["message"].as_str().unwrap().contains("bad.json"));

    // 4: corrupt data file.
    let root = dir.path().join("d");
    assert_ok(&hiernb(&[
        "generate", "--force", "gravity", "--n", "4", "--trajectories", "1", "--steps", "3",
        "--seed", "1", "--out", root.to_str().unwrap(),
    ]));
    let traj_path = root.join("train/traj_00000.bin");
    let mut bytes = read(&traj_path);
    bytes.truncate(bytes.len() / 2);
    let corrupt = dir.path().join("corrupt.bin");
    fs::write(&corrupt, bytes).unwrap();
    let out = hiernb(&[
        "export", "--input", corrupt.to_str().unwrap(), "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["error"], "format");

    // 5: gravity checkpoint against coulomb data.
    let ckpt = dir.path().join("g.ckpt");
    let params = ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, false, 1);
    save_checkpoint(&ckpt, &params, &GraphPolicy::Full, 1, 0).unwrap();
    let croot = dir.path().join("c");
    assert_ok(&hiernb(&[
        "generate", "--force", "coulomb", "--n", "4", "--trajectories", "1", "--steps", "3",
        "--seed", "1", "--out", croot.to_str().unwrap(),
    ]));
    let out = hiernb(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--test-dir",
        croot.join("train").to_str().unwrap(),
        "--tau",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_line(&out)["error"], "data_mismatch");

    // 6: numerical divergence during rollout.
    let mut blowup = ModelParams::seeded(ModelVariant::Delta, ForceLaw::Gravity, false, 1);
    for layer in &mut blowup.decoder.layers {
        layer.0.mapv_inplace(|w| w * 1e308);
    }
    let bad_ckpt = dir.path().join("blowup.ckpt");
    save_checkpoint(&bad_ckpt, &blowup, &GraphPolicy::Full, 1, 0).unwrap();
    let out = hiernb(&[
        "rollout",
        "--checkpoint",
        bad_ckpt.to_str().unwrap(),
        "--input",
        traj_path.to_str().unwrap(),
        "--tau",
        "3",
        "--out",
        dir.path().join("diverged.bin").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(error_line(&out)["error"], "diverged");
}

#[test]
fn data_root_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("envroot");
    assert_ok(&hiernb(&[
        "generate", "--force", "gravity", "--n", "4", "--trajectories", "1", "--steps", "3",
        "--seed", "2", "--out", root.to_str().unwrap(),
    ]));
    let out = Command::new(env!("CARGO_BIN_EXE_hiernb"))
        .args(["train", "--steps", "1", "--batch", "1", "--seed", "2"])
        .env("HIERNB_DATA_ROOT", &root)
        .output()
        .expect("binary runs");
    assert_ok(&out);
    assert!(root.join("model.ckpt").exists(), "default checkpoint path under data root");
}
