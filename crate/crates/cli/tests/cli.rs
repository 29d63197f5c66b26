use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use ridgecast::dataset::{Dataset, DatasetMeta, Frequency, TimeSeries};
use ridgecast::synthetic::Generator;
use serde_json::Value;

const EXIT_CONFIG: i32 = 2;
const EXIT_DATA: i32 = 3;
const EXIT_NUMERIC: i32 = 4;
const EXIT_IO: i32 = 5;

fn ridgecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridgecast"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_data(dir: &Path, name: &str, data: &Dataset) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    data.save(&path).unwrap();
    path
}

fn source(dir: &Path) -> PathBuf {
    write_data(dir, "source", &Generator::quarterly_source().dataset(30, 8, "s", 5))
}

fn target(dir: &Path, name: &str, horizon: usize) -> PathBuf {
    write_data(dir, name, &Generator::quarterly_shifted().dataset(5, horizon, "t", 6))
}

const TOY: &[&str] = &["--unchecked", "--minibatch-size", "4", "--rep-dim", "4", "--min-history", "8"];

fn train(dir: &Path, src: &Path, out: &str, seed: &str, steps: &str) -> PathBuf {
    let out_dir = dir.join(out);
    let mut args = vec!["train", "--source", s(src), "--out", s(&out_dir), "--seed", seed, "--num-steps", steps];
    args.extend_from_slice(TOY);
    ok(&ridgecast(&args));
    out_dir
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn train_writes_a_model_and_records_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let out = train(dir.path(), &src, "run", "3", "100");
    let model = out.join("model.json");
    assert!(model.exists());
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["details"]["checkpoints"], serde_json::json!([50, 100]));
    let bytes = fs::read(&model).unwrap();
    let hash = {
        use sha2::Digest;
        hex::encode(sha2::Sha256::digest(&bytes))
    };
    assert_eq!(m["artifacts"]["model.json"], hash);
    assert_eq!(m["config"]["train"]["num_steps"], 100);
    assert!(m["seeds"]["init"].is_u64() && m["seeds"]["master"] == 3);
    assert_eq!(jsonl(&out.join("train_log.jsonl")).len(), 100);
}

#[test]
fn same_seed_gives_byte_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let a = fs::read(train(dir.path(), &src, "a", "11", "60").join("model.json")).unwrap();
    let b = fs::read(train(dir.path(), &src, "b", "11", "60").join("model.json")).unwrap();
    let c = fs::read(train(dir.path(), &src, "c", "12", "60").join("model.json")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn missing_dataset_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out_dir = dir.path().join("out");
    let out = ridgecast(&["train", "--source", s(&missing), "--out", s(&out_dir)]);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let missing_meta = dir.path().join("data.json");
    fs::write(&missing_meta, "{\"start\": \"2000-01-01\", \"target\": [1, 2]}\n").unwrap();
    let out = ridgecast(&["train", "--source", s(&missing_meta), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_DATA);
    assert_eq!(manifest(&out_dir)["status"], "failed");

    let no_dir = dir.path().join("missing_dir").join("x.json");
    fs::create_dir_all(no_dir.parent().unwrap()).unwrap();
    fs::write(dir.path().join("missing_dir/x.meta.json"), "{\"freq\": \"Q\", \"prediction_length\": 8}").unwrap();
    let out = ridgecast(&["train", "--source", s(&no_dir), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_IO);
}

#[test]
fn configuration_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "learning_rat = 0.01\n").unwrap();
    let out = ridgecast(&["train", "--config", s(&cfg), "--source", s(&src)]);
    assert_eq!(code(&out), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));

    let out_dir = dir.path().join("o");
    let out = ridgecast(&["train", "--source", s(&src), "--out", s(&out_dir), "--learning-rate", "0.5"]);
    assert_eq!(code(&out), EXIT_CONFIG);
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("learning_rate") && err.contains("--unchecked"), "{err}");

    let cfg = dir.path().join("ok.toml");
    fs::write(&cfg, "source = \"source.json\"\nnum_steps = 5\nbackbone = \"ff\"\nunchecked = true\nminibatch_size = 4\nrep_dim = 3\nout = \"from_file\"\n").unwrap();
    ok(&ridgecast(&["train", "--config", s(&cfg)]));
    let m = manifest(&dir.path().join("from_file"));
    assert_eq!(m["config"]["train"]["backbone"], "ff");
}

#[test]
fn forecast_uses_the_target_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let model = train(dir.path(), &src, "m", "1", "20").join("model.json");
    for horizon in [8usize, 4, 11] {
        let tgt = target(dir.path(), &format!("target{horizon}"), horizon);
        let out_dir = dir.path().join(format!("f{horizon}"));
        ok(&ridgecast(&["forecast", "--model", s(&model), "--target", s(&tgt), "--out", s(&out_dir)]));
        let rows = jsonl(&out_dir.join("forecasts.jsonl"));
        assert_eq!(rows.len(), 5 * horizon);
        let ids: BTreeSet<&str> = rows.iter().map(|r| r["item_id"].as_str().unwrap()).collect();
        assert_eq!(ids.len(), 5);
        assert!(rows.iter().all(|r| r["forecast"].as_f64().unwrap() >= 0.0));
    }

    let one = Dataset {
        meta: DatasetMeta { freq: Frequency::Quarterly, prediction_length: 8 },
        series: vec![TimeSeries::new("solo", Frequency::Quarterly, (0..40).map(|i| 50.0 + i as f64).collect())],
    };
    let tgt = write_data(dir.path(), "single", &one);
    let out_dir = dir.path().join("single_out");
    ok(&ridgecast(&["forecast", "--model", s(&model), "--target", s(&tgt), "--out", s(&out_dir), "--future"]));
    let rows = jsonl(&out_dir.join("forecasts.jsonl"));
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r["item_id"] == "solo"));
    assert_eq!(rows[0]["t"], 40);
}

#[test]
fn forecast_rejects_a_frequency_mismatch_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let model = train(dir.path(), &src, "m", "1", "5").join("model.json");
    let mut monthly = Generator::quarterly_shifted().dataset(3, 8, "t", 1);
    monthly.meta.freq = Frequency::Monthly;
    for s in &mut monthly.series {
        s.freq = Frequency::Monthly;
    }
    let tgt = write_data(dir.path(), "monthly", &monthly);
    let out_dir = dir.path().join("f");
    let out = ridgecast(&["forecast", "--model", s(&model), "--target", s(&tgt), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&out.stderr).contains("allow-freq-mismatch"));
    ok(&ridgecast(&[
        "forecast", "--model", s(&model), "--target", s(&tgt), "--out", s(&out_dir), "--allow-freq-mismatch",
    ]));
}

/// Forecasts of one series must not change whatever the other series hold.
#[test]
fn forecast_of_a_series_reads_only_that_series() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let model = train(dir.path(), &src, "m", "2", "30").join("model.json");
    let base = Generator::quarterly_shifted().dataset(6, 8, "t", 9);
    let audited = base.series[2].item_id.clone();

    let rows_for = |data: &Dataset, name: &str| -> Vec<String> {
        let path = write_data(dir.path(), name, data);
        let out_dir = dir.path().join(format!("{name}_out"));
        ok(&ridgecast(&["forecast", "--model", s(&model), "--target", s(&path), "--out", s(&out_dir)]));
        fs::read_to_string(out_dir.join("forecasts.jsonl"))
            .unwrap()
            .lines()
            .filter(|l| l.contains(&format!("\"{audited}\"")))
            .map(String::from)
            .collect()
    };
    let reference = rows_for(&base, "full");
    assert_eq!(reference.len(), 8);

    let mut perturbed = base.clone();
    for (i, s) in perturbed.series.iter_mut().enumerate() {
        if s.item_id != audited {
            s.values = (0..20 + 7 * i).map(|k| 1e6 * ((k * 31 + i) % 17) as f64).collect();
        }
    }
    perturbed.series.reverse();
    assert_eq!(rows_for(&perturbed, "perturbed"), reference);

    let alone = Dataset { meta: base.meta, series: vec![base.series[2].clone()] };
    assert_eq!(rows_for(&alone, "alone"), reference);
}

fn fixture_target(dir: &Path) -> PathBuf {
    let data = Dataset {
        meta: DatasetMeta { freq: Frequency::Quarterly, prediction_length: 2 },
        series: vec![TimeSeries::new("a", Frequency::Quarterly, vec![5.0, 7.0, 100.0, 200.0])],
    };
    write_data(dir, "fixture", &data)
}

fn forecast_file(dir: &Path, name: &str, rows: &[(&str, usize, f64)]) -> PathBuf {
    let path = dir.join(name);
    let text: String = rows
        .iter()
        .map(|(id, t, f)| serde_json::json!({"item_id": id, "t": t, "forecast": f}).to_string() + "\n")
        .collect();
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn evaluate_reproduces_the_hand_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let tgt = fixture_target(dir.path());
    let fc = forecast_file(dir.path(), "fc.jsonl", &[("a", 2, 110.0), ("a", 3, 180.0)]);
    let perfect = forecast_file(dir.path(), "perfect.jsonl", &[("a", 2, 100.0), ("a", 3, 200.0)]);
    for (metric, expected) in [("smape", 200.0 * (10.0 / 210.0 + 20.0 / 380.0) / 2.0), ("nd", 0.1), ("mape", 10.0)] {
        let out_dir = dir.path().join(metric);
        ok(&ridgecast(&["evaluate", "--forecasts", s(&fc), "--target", s(&tgt), "--metric", metric, "--out", s(&out_dir)]));
        let rows = jsonl(&out_dir.join("metrics.jsonl"));
        let value = rows[0]["value"].as_f64().unwrap();
        assert!((value - expected).abs() < 1e-9, "{metric}: {value}");

        let out_dir = dir.path().join(format!("{metric}_perfect"));
        ok(&ridgecast(&["evaluate", "--forecasts", s(&perfect), "--target", s(&tgt), "--metric", metric, "--out", s(&out_dir)]));
        assert_eq!(jsonl(&out_dir.join("metrics.jsonl"))[0]["value"].as_f64().unwrap(), 0.0);
    }

    let out_dir = dir.path().join("two");
    let out = ridgecast(&["evaluate", "--forecasts", s(&fc), s(&perfect), "--target", s(&tgt), "--out", s(&out_dir)]);
    ok(&out);
    let labels: Vec<String> = jsonl(&out_dir.join("metrics.jsonl"))
        .iter()
        .map(|r| r["model"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(labels.len(), 4);
    assert_eq!(&labels[2..], ["mean", "median-ensemble"]);
}

#[test]
fn evaluate_rejects_misaligned_and_undefined_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let tgt = fixture_target(dir.path());
    let wrong = forecast_file(dir.path(), "wrong.jsonl", &[("b", 2, 1.0), ("b", 3, 1.0)]);
    let out = ridgecast(&["evaluate", "--forecasts", s(&wrong), "--target", s(&tgt), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&out), EXIT_DATA);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no target for item b"));

    let zeros = Dataset {
        meta: DatasetMeta { freq: Frequency::Quarterly, prediction_length: 2 },
        series: vec![TimeSeries::new("a", Frequency::Quarterly, vec![5.0, 7.0, 0.0, 3.0])],
    };
    let tgt = write_data(dir.path(), "zeros", &zeros);
    let fc = forecast_file(dir.path(), "fc.jsonl", &[("a", 2, 1.0), ("a", 3, 1.0)]);
    let out = ridgecast(&["evaluate", "--forecasts", s(&fc), "--target", s(&tgt), "--metric", "mape", "--out", s(&dir.path().join("y"))]);
    assert_eq!(code(&out), EXIT_NUMERIC);
    assert!(String::from_utf8_lossy(&out.stderr).contains("(a, 2)"));
}

fn search_config(dir: &Path, steps: usize) -> PathBuf {
    let cfg = dir.join("search.toml");
    fs::write(
        &cfg,
        format!(
            "unchecked = true\nbackbone = \"linear\"\nselection_size = 10\n\n[search]\nnum_steps = [{steps}]\nminibatch_size = [4]\nrep_dim = [3, 5]\nmin_history = [4, 12]\ncontext_mult = [1.0, 3.0]\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn search_ranks_trials_and_keeps_the_top_k() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let tgt = target(dir.path(), "target", 8);
    let cfg = search_config(dir.path(), 20);
    let out_dir = dir.path().join("one");
    let args = |out: &Path, k: &str| {
        vec![
            "search".to_string(), "--config".into(), s(&cfg).into(), "--source".into(), s(&src).into(),
            "--trials".into(), "2".into(), "--topk".into(), k.into(), "--seed".into(), "4".into(),
            "--out".into(), s(out).into(),
        ]
    };
    let a: Vec<String> = args(&out_dir, "1").into_iter().chain(["--target".to_string(), s(&tgt).to_string()]).collect();
    ok(&ridgecast(&a.iter().map(String::as_str).collect::<Vec<_>>()));
    assert_eq!(jsonl(&out_dir.join("ranking.jsonl")).len(), 2);
    let top: Vec<Value> = serde_json::from_str(&fs::read_to_string(out_dir.join("top_k.json")).unwrap()).unwrap();
    assert_eq!(top.len(), 1);
    assert!(out_dir.join("top/01.model.json").exists());
    assert_eq!(jsonl(&out_dir.join("ensemble_forecasts.jsonl")).len(), 5 * 8);

    let clipped = dir.path().join("clipped");
    let a = args(&clipped, "5");
    let out = Command::new(env!("CARGO_BIN_EXE_ridgecast"))
        .args(&a)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("clipped"));
    let top: Vec<Value> = serde_json::from_str(&fs::read_to_string(clipped.join("top_k.json")).unwrap()).unwrap();
    assert_eq!(top.len(), 2);

    fs::write(dir.path().join("strict.toml"), "[search]\nnum_steps = [20]\n").unwrap();
    let strict = ridgecast(&["search", "--source", s(&src), "--config", s(&dir.path().join("strict.toml")), "--trials", "1"]);
    assert_eq!(code(&strict), EXIT_CONFIG);
}

#[test]
fn search_resumes_after_being_killed() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let cfg = search_config(dir.path(), 2000);
    let run_args = |out: &Path| {
        vec![
            "search".to_string(), "--config".into(), s(&cfg).into(), "--source".into(), s(&src).into(),
            "--trials".into(), "4".into(), "--topk".into(), "2".into(), "--seed".into(), "8".into(),
            "--out".into(), s(out).into(),
        ]
    };

    let reference = dir.path().join("reference");
    ok(&ridgecast(&run_args(&reference).iter().map(String::as_str).collect::<Vec<_>>()));

    let resumed = dir.path().join("resumed");
    let mut child = Command::new(env!("CARGO_BIN_EXE_ridgecast"))
        .args(run_args(&resumed))
        .env("RUST_LOG", "error")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let trial_results = |d: &Path| {
        fs::read_dir(d.join("trials"))
            .map(|it| {
                it.filter_map(|e| e.ok())
                    .filter(|e| {
                        let n = e.file_name().to_string_lossy().to_string();
                        n.ends_with(".json") && !n.ends_with(".model.json") && !n.starts_with('.')
                    })
                    .count()
            })
            .unwrap_or(0)
    };
    let started = Instant::now();
    while trial_results(&resumed) < 1 && started.elapsed() < Duration::from_secs(120) {
        std::thread::sleep(Duration::from_millis(10));
    }
    let _ = child.kill();
    let status = child.wait().unwrap();
    let done_before = trial_results(&resumed);
    assert!(!status.success(), "search finished before it could be interrupted");
    assert!((1..4).contains(&done_before), "{done_before} trials done at the kill");

    ok(&ridgecast(&run_args(&resumed).iter().map(String::as_str).collect::<Vec<_>>()));
    let m = manifest(&resumed);
    assert_eq!(m["details"]["trials_resumed"].as_u64().unwrap() as usize, done_before);
    assert_eq!(
        fs::read_to_string(resumed.join("ranking.jsonl")).unwrap(),
        fs::read_to_string(reference.join("ranking.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read(resumed.join("top/01.model.json")).unwrap(),
        fs::read(reference.join("top/01.model.json")).unwrap()
    );
}

#[test]
fn ablate_emits_all_eighteen_labels() {
    let dir = tempfile::tempdir().unwrap();
    let src = source(dir.path());
    let tgt = target(dir.path(), "target", 8);
    let out_dir = dir.path().join("abl");
    let mut args = vec!["ablate", "--source", s(&src), "--target", s(&tgt), "--out", s(&out_dir), "--num-steps", "5", "--seed", "1"];
    args.extend_from_slice(TOY);
    ok(&ridgecast(&args));
    let rows = jsonl(&out_dir.join("ablation.jsonl"));
    assert_eq!(rows.len(), 18);
    let labels: BTreeSet<&str> = rows.iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels.len(), 18);
    assert!(labels.contains("Meta+RNN+ITF") && labels.contains("RNN") && labels.contains("ADA+Lin"));
    assert!(rows.iter().all(|r| r["value"].as_f64().is_some_and(|v| (0.0..=200.0).contains(&v))));
}

#[test]
fn gradcheck_passes_detects_faults_and_enforces_its_caps() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("gc");
    let out = ridgecast(&["gradcheck", "--out", s(&out_dir)]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("gradcheck.json")).unwrap()).unwrap();
    assert!(summary["max_rel_error"].as_f64().unwrap() < 1e-4);

    let out = ridgecast(&["gradcheck", "--out", s(&out_dir), "--inject-fault"]);
    assert_eq!(code(&out), EXIT_NUMERIC);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    assert_eq!(code(&ridgecast(&["gradcheck", "--out", s(&out_dir), "--rep-dim", "9"])), EXIT_CONFIG);
    assert_eq!(code(&ridgecast(&["gradcheck", "--out", s(&out_dir), "--context-mult", "8"])), EXIT_CONFIG);
}
