use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ganbench::checkpoint;
use ganbench::commands::{self, Overrides};
use ganbench::config::ExperimentConfig;
use ganbench::datasets::{read_images, read_json};
use ganbench::run::{OutputOptions, RunManifest, FINAL_CHECKPOINT};
use serde_json::Value;

fn bin(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ganbench"))
        .args(args)
        .env("GANBENCH_OUT", root)
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(format!("{name}.toml"));
    fs::write(&p, text).unwrap();
    p
}

fn out_line(o: &Output) -> PathBuf {
    let s = String::from_utf8_lossy(&o.stdout);
    let line = s.lines().rev().find(|l| l.starts_with("wrote ")).expect("wrote line");
    PathBuf::from(line.trim_start_matches("wrote "))
}

const SQUARES_3_4: &str = r#"
name = "sq34"
[dataset]
kind = "squares_3_4"
n = 5000
seed = 1
"#;

const BLOBS: &str = r#"
name = "blobs"
[dataset]
kind = "blobs"
n = 400
seed = 7
[model]
family = "mlp_wgan_gp"
hidden = [16, 16, 16]
[training]
seed = 1
max_steps = 6
batch_size = 32
checkpoint_every = 3
sample_every = 3
early_stop = false
[eval]
n_samples = 200
"#;

const TINY_SQUARES: &str = r#"
name = "tiny-sq"
[dataset]
kind = "squares_1_4"
n = 64
seed = 1
[model]
family = "dcgan"
gen_channels = [8, 8, 8]
critic_channels = [8, 8, 8, 8]
[training]
seed = 1
max_steps = 2
batch_size = 16
early_stop = false
[eval]
n_samples = 32
"#;

fn quiet_out(root: &Path) -> OutputOptions {
    OutputOptions {
        out_root: Some(root.to_path_buf()),
        ..Default::default()
    }
}

#[test]
fn gen_data_squares_3_4_writes_5000_images_of_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "sq", SQUARES_3_4);
    let o = bin(&["gen-data", cfg.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sidecar = out_line(&o);
    let ds = read_images(&sidecar).unwrap();
    assert_eq!(ds.n, 5000);
    assert!(ds.annotations.iter().all(|a| a.shapes.len() == 3));
    let m = RunManifest::read(sidecar.parent().unwrap()).unwrap();
    assert_eq!(m.dataset.n, 5000);
    assert_eq!(m.config_hash.len(), 64);
}

#[test]
fn gen_data_twice_gives_identical_files_in_new_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "b", BLOBS);
    let a = out_line(&bin(&["gen-data", cfg.to_str().unwrap()], tmp.path()));
    let b = out_line(&bin(&["gen-data", cfg.to_str().unwrap()], tmp.path()));
    assert_ne!(a, b);
    assert_eq!(fs::read(a.with_extension("f32")).unwrap(), fs::read(b.with_extension("f32")).unwrap());
    let (ma, mb): (Value, Value) = (read_json(&a).unwrap(), read_json(&b).unwrap());
    assert_eq!(ma["data_sha256"], mb["data_sha256"]);
}

#[test]
fn infeasible_scene_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SQUARES_3_4}[dataset.scene]\nsquares = [50, 4]\n");
    let cfg = write_cfg(tmp.path(), "bad", &text);
    let o = bin(&["gen-data", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn smoke_config_history_rows_match_update_count() {
    let tmp = tempfile::tempdir().unwrap();
    let smoke = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let o = bin(&["train", smoke.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out_line(&o);
    let m = RunManifest::read(&dir).unwrap();
    // five critic updates and one generator update per step
    assert_eq!(m.history_rows, Some(500 * 6));
    let csv = fs::read_to_string(dir.join("history.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 500 * 6);
    assert!(dir.join(FINAL_CHECKPOINT).is_file());
    assert!(dir.join("samples/step-500.png").is_file());
}

#[test]
fn resume_continues_the_step_counter_and_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(BLOBS).unwrap();
    let out = quiet_out(tmp.path());
    let full = commands::train(cfg.clone(), &Overrides::default(), &out, None).unwrap();
    let half = commands::train(
        cfg.clone(),
        &Overrides {
            steps: Some(3),
            ..Default::default()
        },
        &out,
        None,
    )
    .unwrap();
    let resumed = commands::train(cfg, &Overrides::default(), &out, Some(&half.dir)).unwrap();
    let m = &resumed.manifest;
    assert_eq!((m.start_step, m.final_step), (Some(3), Some(6)));
    assert_eq!(m.resumed_from.as_ref().unwrap().step, 3);
    assert_eq!(m.final_weights_hash, full.manifest.final_weights_hash);
    assert_ne!(half.manifest.final_weights_hash, full.manifest.final_weights_hash);
    let (state, _) = checkpoint::load(&resumed.dir.join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(state.step, 6);
}

#[test]
fn invalid_pairing_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "bad", &BLOBS.replace("mlp_wgan_gp", "dcgan"));
    let root = tmp.path().join("runs");
    let o = bin(&["train", cfg.to_str().unwrap()], &root);
    assert_eq!(o.status.code(), Some(2));
    assert!(!root.exists());
}

#[test]
fn eval_on_training_images_gives_exact_count_rate_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "sq", &SQUARES_3_4.replace("5000", "300"));
    let sidecar = out_line(&bin(&["gen-data", cfg.to_str().unwrap()], tmp.path()));
    let o = bin(&["eval", "--dataset", sidecar.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = read_json(&out_line(&o).join("report.json")).unwrap();
    assert_eq!(report["counts"]["exact_count_rate"], 1.0);
    assert_eq!(report["counts"]["labels"]["square"], 3 * 1000);
    assert!(out_line(&o).join("samples.png").is_file());
}

#[test]
fn eval_of_point_run_reports_coverage_and_manifold_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let out = quiet_out(tmp.path());
    let blobs = commands::train(ExperimentConfig::from_toml(BLOBS).unwrap(), &Overrides::default(), &out, None).unwrap();
    let o = bin(&["eval", "--run", blobs.dir.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = read_json(&out_line(&o).join("report.json")).unwrap();
    assert!(r["mode_coverage"]["modes_covered"].is_u64());
    assert!(r["mode_coverage"]["spurious_fraction"].is_f64());
    assert!(out_line(&o).starts_with(&blobs.dir));

    let circles = BLOBS.replace("kind = \"blobs\"", "kind = \"circles\"\nnoise = \"moderate\"");
    let run = commands::train(ExperimentConfig::from_toml(&circles).unwrap(), &Overrides::default(), &out, None).unwrap();
    let o = bin(&["eval", "--run", run.dir.to_str().unwrap()], tmp.path());
    let r: Value = read_json(&out_line(&o).join("report.json")).unwrap();
    for k in ["inner", "outer", "neither", "between"] {
        assert!(r["rings"][k].is_f64(), "{k}");
    }
    for k in ["mean", "p95", "max", "discretization_bound"] {
        assert!(r["manifold"][k].is_f64(), "{k}");
    }
}

#[test]
fn missing_checkpoint_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "b", BLOBS);
    let o = bin(
        &["eval", "--checkpoint", "/nonexistent/x.ckpt", "--config", cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/x.ckpt"));
}

#[test]
fn transfer_provenance_zero_steps_and_incompatible_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = quiet_out(tmp.path());
    let source = commands::train(ExperimentConfig::from_toml(TINY_SQUARES).unwrap(), &Overrides::default(), &out, None).unwrap();
    let target = TINY_SQUARES.replace("squares_1_4", "squares_3_4").replace("tiny-sq", "tiny-transfer");
    let zero = Overrides {
        steps: Some(0),
        ..Default::default()
    };
    let t = commands::transfer(ExperimentConfig::from_toml(&target).unwrap(), &source.dir, &zero, &out).unwrap();
    assert_eq!(t.manifest.final_step, Some(0));
    assert_eq!(t.manifest.final_weights_hash, source.manifest.final_weights_hash);
    assert_eq!(t.manifest.transfer_from.as_ref().unwrap().weights_hash, source.manifest.final_weights_hash.clone().unwrap());
    let (_, header) = checkpoint::load(&t.dir.join(FINAL_CHECKPOINT)).unwrap();
    assert!(header.provenance.contains_key("transfer_from"));

    let t = commands::transfer(ExperimentConfig::from_toml(&target).unwrap(), &source.dir, &Overrides::default(), &out).unwrap();
    assert_eq!(t.manifest.final_step, Some(2));
    assert!(t.outcome.history.transfer_from.is_some());

    let cfg = write_cfg(tmp.path(), "pts", &BLOBS.replace("mlp_wgan_gp", "dcgan"));
    let o = bin(&["transfer", cfg.to_str().unwrap(), "--source", source.dir.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}

#[test]
fn force_reuses_the_hash_named_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(BLOBS).unwrap();
    let forced = OutputOptions {
        out_root: Some(tmp.path().to_path_buf()),
        force: true,
        ..Default::default()
    };
    let a = commands::gen_data(cfg.clone(), &Overrides::default(), &forced).unwrap();
    let b = commands::gen_data(cfg.clone(), &Overrides::default(), &forced).unwrap();
    assert_eq!(a.dir, b.dir);
    assert!(a.dir.file_name().unwrap().to_str().unwrap().ends_with(&cfg.hash()[..12]));
    let explicit = OutputOptions {
        out: Some(a.dir.clone()),
        ..Default::default()
    };
    assert!(commands::gen_data(cfg, &Overrides::default(), &explicit).is_err());
}

#[test]
fn report_compares_count_histograms() {
    let tmp = tempfile::tempdir().unwrap();
    let out = quiet_out(tmp.path());
    let a = commands::train(ExperimentConfig::from_toml(TINY_SQUARES).unwrap(), &Overrides::default(), &out, None).unwrap();
    let target = TINY_SQUARES.replace("squares_1_4", "squares_3_4");
    let b = commands::transfer(ExperimentConfig::from_toml(&target).unwrap(), &a.dir, &Overrides::default(), &out).unwrap();
    let (dir, report) = ganbench::eval::report(&[a.dir, b.dir], &Overrides::default(), &out).unwrap();
    let cmp = report.count_comparison.unwrap();
    for col in 0..2 {
        let total: f64 = cmp.values().map(|v| v[col]).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let md = fs::read_to_string(dir.join("report.md")).unwrap();
    assert!(md.contains("## Count histograms"));
    assert!(dir.join("run1/samples.png").is_file());
}
