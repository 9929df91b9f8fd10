//! Integration tests driving the `mass` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mass"))
        .args(args)
        .env_remove("MASS_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("mass_cli_tests").join(name);
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const TINY_TOML: &str = r#"
batch_size = 8
max_steps = 300
seed = 7

[model]
d_a = 16
d_e = 16
heads = 2
mlp_ratio = 2
dropout = 0.1
e = 4
l_p = 1
l_a = 1
l_e = 1
classes = 5

[schedule]
total_epochs = 200
warmup_epochs = 5
peak_lr = 1e-3
min_lr = 1e-5

[mask]
mode = "uniform"
r_a_max = 0.8
r_e_max = 0.5
"#;

fn last_checkpoint(dir: &Path) -> PathBuf {
    let mut ckpts: Vec<(usize, PathBuf)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name()?.to_str()?.to_string();
            let n: usize = name.strip_prefix("ckpt_epoch")?.parse().ok()?;
            Some((n, p))
        })
        .collect();
    ckpts.sort();
    ckpts.pop().expect("at least one checkpoint").1
}

#[test]
fn power_prints_table_value() {
    let out = mass(&["power", "--amp", "ads1299-4", "--ra", "0.8", "--re", "0.5"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("6.79 mW"), "got {:?}", stdout(&out));
}

#[test]
fn power_rejects_unknown_amplifier_with_exit_2() {
    let out = mass(&["power", "--amp", "nope", "--ra", "0.0", "--re", "0.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("amp"));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let a = tmp("synth_a");
    let b = tmp("synth_b");
    for dir in [&a, &b] {
        let out = mass(&[
            "synth", "--seed", "7", "--records", "2", "--epochs", "8",
            "--out", dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    for name in ["record_000.csv", "record_000.labels.csv", "record_001.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
}

#[test]
fn train_then_eval_reaches_95_percent() {
    let data = tmp("flow_data");
    let run = tmp("flow_run");
    let cfg_path = data.join("tiny.toml");
    std::fs::write(&cfg_path, TINY_TOML).unwrap();

    let out = mass(&[
        "synth", "--seed", "7", "--records", "4", "--epochs", "32",
        "--out", data.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let out = mass(&[
        "train",
        "--data", data.to_str().unwrap(),
        "--config", cfg_path.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("loss_curve.csv").exists());
    assert!(run.join("resolved_config.toml").exists());

    let ckpt = last_checkpoint(&run);
    let out = mass(&[
        "eval",
        "--ckpt", ckpt.to_str().unwrap(),
        "--config", run.join("resolved_config.toml").to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--seed", "99",
    ]);
    assert!(out.status.success(), "eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let acc = report["acc"].as_f64().unwrap();
    assert!(acc >= 0.95, "accuracy {acc} below 0.95");

    // sweep in grid form over the same checkpoint
    let out = mass(&[
        "sweep",
        "--ckpt", ckpt.to_str().unwrap(),
        "--config", run.join("resolved_config.toml").to_str().unwrap(),
        "--data", data.to_str().unwrap(),
        "--seed", "99",
        "--threads", "4",
        "--format", "paper",
    ]);
    assert!(out.status.success(), "sweep failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("r_e=0.5"), "grid output missing rows: {text}");
}

#[test]
fn describe_reports_pinned_default_count() {
    let out = mass(&["describe"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("3575174"), "got {:?}", stdout(&out));
}

#[test]
fn ingest_edf_fixture() {
    use mass_core::ingest::{
        build_annotation_signal, write_edf, Annotation, EdfCalibration, EdfFile, EdfSignal,
    };
    let dir = tmp("ingest");
    let cal = EdfCalibration { phys_min: -1.0, phys_max: 1.0, dig_min: -32768, dig_max: 32767 };
    let digital: Vec<i16> = (0..2 * 3000)
        .map(|k| cal.to_digital(0.5 * (std::f64::consts::TAU * 10.0 * k as f64 / 100.0).sin()))
        .collect();
    let annotations = vec![
        Annotation { onset_s: 0.0, duration_s: 30.0, label: "Sleep stage W".into() },
        Annotation { onset_s: 30.0, duration_s: 30.0, label: "Sleep stage 2".into() },
    ];
    let ann = build_annotation_signal(&annotations, 2, 30.0);
    let file = EdfFile {
        patient: "X".into(),
        recording: "X".into(),
        start_date: "01.01.00".into(),
        start_time: "00.00.00".into(),
        reserved: "EDF+C".into(),
        n_records: 2,
        record_seconds: 30.0,
        signals: vec![
            EdfSignal {
                label: "EEG Fpz-Cz".into(),
                transducer: String::new(),
                phys_dim: "uV".into(),
                calibration: cal,
                prefilter: String::new(),
                samples_per_record: 3000,
                digital,
            },
            ann,
        ],
    };
    let edf_path = dir.join("rec.edf");
    std::fs::write(&edf_path, write_edf(&file).unwrap()).unwrap();

    let out_dir = dir.join("out");
    let out = mass(&[
        "ingest",
        "--input", edf_path.to_str().unwrap(),
        "--channel", "EEG Fpz-Cz",
        "--out", out_dir.to_str().unwrap(),
        "--cache",
    ]);
    assert!(out.status.success(), "ingest failed: {}", String::from_utf8_lossy(&out.stderr));
    let labels = std::fs::read_to_string(out_dir.join("rec.labels.csv")).unwrap();
    assert_eq!(labels, "epoch_index,label\n0,W\n1,N2\n");
    assert!(out_dir.join("rec.msf").exists());
}
