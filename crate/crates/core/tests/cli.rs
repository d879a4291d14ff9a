use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_advtune"))
}

fn quickstart() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quickstart.json")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn ok(cmd: &mut Command) -> Output {
    let out = run(cmd);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_record(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("not a JSON record ({e}): {text}"))
}

#[test]
fn missing_config_fails_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = run(bin().args(["tune", "--config"]).arg(&missing));
    let record = error_record(&out);
    assert_eq!(record["error"], "io_error");
    assert!(record["message"].as_str().unwrap().contains("absent.json"));
    assert_eq!(record["path"], missing.to_str().unwrap());
}

#[test]
fn invalid_config_gives_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"tuning": {"n_v": 100, "bogus": 1}}"#).unwrap();
    let out = run(bin().args(["tune", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")));
    assert_eq!(error_record(&out)["error"], "config_error");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn generate_zero_writes_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    ok(bin().args(["generate", "--count", "0", "--config"]).arg(quickstart()).arg("--out").arg(&out));
    let manifest = fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert!(manifest.starts_with("index,intensity,occupancy,labels,light_intensity"));
}

#[test]
fn generate_hundred_then_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(bin().args(["generate", "--count", "100", "--config"]).arg(quickstart()).arg("--out").arg(&g));

    let count = |sub: &str, suffix: &str| {
        fs::read_dir(g.join(sub))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(suffix))
            .count()
    };
    assert_eq!(count("images", "_intensity.pgm"), 100);
    assert_eq!(count("labels", ".pgm"), 100);
    assert_eq!(count("layouts", ".txt"), 100);
    assert_eq!(fs::read_to_string(g.join("manifest.csv")).unwrap().lines().count(), 101);

    let s = dir.path().join("s");
    ok(bin().arg("stats").arg(&g).arg(&g).arg("--out").arg(&s));
    let kl = fs::read_to_string(s.join("kl.csv")).unwrap();
    assert_eq!(kl, "direction,kl\na_b,0\nb_a,0\n");
    let hist = fs::read_to_string(s.join("histogram_a.csv")).unwrap();
    assert_eq!(hist.lines().count(), 65);
    let props = fs::read_to_string(s.join("class_proportions.csv")).unwrap();
    let row: Vec<f64> = props.lines().nth(1).unwrap().split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row.len(), 7);
    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let out = run(bin().arg("stats").arg(&g).arg(&g).arg("--out").arg(dir.path().join("m")).args(["--bins-b", "32"]));
    assert_eq!(error_record(&out)["error"], "binning_mismatch");
}

#[test]
fn generate_is_deterministic_and_honours_a_prior_file() {
    let dir = tempfile::tempdir().unwrap();
    let prior = dir.path().join("prior.json");
    let mut p = advtune::priors::uniform_prior(&advtune::priors::ParameterSpace::scene(32));
    for v in p.tables[0].values.iter_mut().take(31) {
        *v = 0.0;
    }
    fs::write(&prior, p.to_json().unwrap()).unwrap();

    let gen = |name: &str| {
        let out = dir.path().join(name);
        ok(bin().args(["generate", "--count", "20", "--seed", "4", "--config"]).arg(quickstart()).arg("--out").arg(&out).arg("--prior").arg(&prior));
        fs::read_to_string(out.join("manifest.csv")).unwrap()
    };
    let a = gen("a");
    assert_eq!(a, gen("b"));
    for line in a.lines().skip(1) {
        let light: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(light >= 6.0 * 31.0 / 32.0, "{light}");
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().env("ADVTUNE_THREADS", "0").args(["generate", "--count", "1", "--config"]).arg(quickstart()).arg("--out").arg(dir.path()));
    assert_eq!(error_record(&out)["error"], "invalid_argument");
}

#[test]
fn quickstart_is_reproducible_and_reduces_kl() {
    let dir = tempfile::tempdir().unwrap();
    let tune = |cfg: &Path, name: &str| {
        let out = dir.path().join(name);
        ok(bin().env("ADVTUNE_THREADS", "2").arg("tune").arg("--config").arg(cfg).arg("--out").arg(&out));
        out
    };
    let a = tune(&quickstart(), "a");
    let b = tune(&quickstart(), "b");
    let report = fs::read(a.join("report.json")).unwrap();
    assert_eq!(report, fs::read(b.join("report.json")).unwrap());

    // Re-running from the echoed config reproduces the run.
    let c = tune(&a.join("effective_config.json"), "c");
    assert_eq!(report, fs::read(c.join("report.json")).unwrap());

    let doc: serde_json::Value = serde_json::from_slice(&report).unwrap();
    let iterations = doc["report"]["iterations"].as_array().unwrap();
    assert!(!iterations.is_empty());
    let sum = |v: &serde_json::Value| v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum::<f64>();
    let before = sum(&doc["report"]["initial_kl_to_target"]);
    let after = sum(&iterations.last().unwrap()["kl_to_target"]);
    assert!(after < before, "{before} -> {after}");

    for f in ["trajectory.csv", "kl_to_target.csv", "final_prior.json", "target_prior.json", "timings.csv", "tables/iteration_000.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(a.join("tables/iteration_000.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 16 * 32);
}
