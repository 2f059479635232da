use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ssgpfa::kalman::RobustConfig;
use ssgpfa::ssgpfa::{orthogonality_defect, score_online, SsgpfaModel};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ssgpfa"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three sinusoid-driven sensors, optionally with a labeled level shift.
fn write_series(path: &Path, rows: usize, seed: u64, shift: Option<std::ops::Range<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = std::fs::File::create(path).unwrap();
    let labels = shift.is_some();
    write!(f, "timestamp,a,b,c").unwrap();
    writeln!(f, "{}", if labels { ",is_anomaly" } else { "" }).unwrap();
    for t in 0..rows {
        let z = (t as f64 / 12.0).sin();
        let hit = shift.as_ref().is_some_and(|r| r.contains(&t));
        let bump = if hit { 4.0 } else { 0.0 };
        let mut e = || {
            let n: f64 = StandardNormal.sample(&mut rng);
            0.1 * n
        };
        write!(f, "{t},{},{},{}", z + e() + bump, -z + e(), 0.5 * z + e()).unwrap();
        if labels {
            write!(f, ",{}", u8::from(hit)).unwrap();
        }
        writeln!(f).unwrap();
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
}

struct Trained {
    dir: tempfile::TempDir,
    model: PathBuf,
    test: PathBuf,
}

fn trained(extra: &[&str]) -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    write_series(&train, 300, 1, None);
    write_series(&test, 200, 2, Some(120..130));
    let model = dir.path().join("model.json");
    let mut args = vec!["train", "-i", s(&train), "-m", s(&model), "-k", "2", "--max-iters", "10"];
    args.extend_from_slice(extra);
    ok(&args);
    Trained { dir, model, test }
}

#[test]
fn saved_model_round_trips_and_scores_match_library() {
    let t = trained(&[]);
    let model = SsgpfaModel::load(&t.model).unwrap();
    assert_eq!((model.dims(), model.num_latents()), (3, 2));
    assert!(orthogonality_defect(model.loading()) < 1e-8);
    let reloaded = SsgpfaModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(reloaded.loading(), model.loading());

    let scores = t.dir.path().join("scores.csv");
    let summary = ok(&["score", "-m", s(&t.model), "-i", s(&t.test), "-o", s(&scores)]);
    assert_eq!(summary["rows"], 200);

    let series = ssgpfa::data::load_csv(&t.test).unwrap();
    let st = model.standardization.as_ref().unwrap();
    let ys: Vec<DVector<f64>> = series.values.iter().map(|y| st.apply(y)).collect();
    let want = score_online(&model, &series.times, &ys, RobustConfig::default()).unwrap();
    let got = column(&scores, "score");
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w.score).abs() <= 1e-12 * w.score.abs().max(1.0), "{g} vs {}", w.score);
    }
}

#[test]
fn unconstrained_mode_is_accepted() {
    let t = trained(&["--mode", "unconstrained"]);
    let model = SsgpfaModel::load(&t.model).unwrap();
    assert_eq!(model.mode(), ssgpfa::ssgpfa::Mode::Unconstrained);
}

#[test]
fn score_and_explain_have_one_row_per_input_row() {
    let t = trained(&[]);
    let scores = t.dir.path().join("s.csv");
    let explain = t.dir.path().join("e.csv");
    ok(&["score", "-m", s(&t.model), "-i", s(&t.test), "-o", s(&scores)]);
    ok(&["explain", "-m", s(&t.model), "-i", s(&t.test), "-o", s(&explain)]);
    let (h1, r1) = read_csv(&scores);
    let (h2, r2) = read_csv(&explain);
    assert_eq!((r1.len(), r2.len()), (200, 200));
    assert_eq!(
        h1,
        ["timestamp", "score", "score_a", "score_b", "score_c", "accepted", "nll_latent_0", "nll_latent_1", "reconstruction_error", "is_anomaly"]
    );
    assert_eq!(h2[..3], ["timestamp", "dominant_latent", "projected_0"]);
    assert!(r2.iter().all(|r| matches!(r[1].as_str(), "0" | "1")));
}

#[test]
fn score_streams_to_stdout_without_output() {
    let t = trained(&[]);
    let out = run(&["score", "-m", s(&t.model), "-i", s(&t.test)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 201);
    assert!(text.starts_with("timestamp,score,"));
}

#[test]
fn robust_flag_is_inert_on_clean_data() {
    let t = trained(&[]);
    let clean = t.dir.path().join("clean.csv");
    write_series(&clean, 150, 5, None);
    let a = t.dir.path().join("a.csv");
    let b = t.dir.path().join("b.csv");
    let ra = ok(&["score", "-m", s(&t.model), "-i", s(&clean), "-o", s(&a), "--robust"]);
    ok(&["score", "-m", s(&t.model), "-i", s(&clean), "-o", s(&b), "--robust", "false"]);
    assert_eq!(ra["rejected"], 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn robust_scoring_rejects_the_shift() {
    let t = trained(&[]);
    let scores = t.dir.path().join("s.csv");
    let summary = ok(&["score", "-m", s(&t.model), "-i", s(&t.test), "-o", s(&scores), "--log-rho", "-8"]);
    assert!(summary["rejected"].as_u64().unwrap() >= 1);
    let accepted = column(&scores, "accepted");
    assert!(accepted[120..130].contains(&0.0));
    assert!(accepted[..120].iter().all(|a| *a == 1.0));
    let report = ok(&["eval", "-i", s(&scores)]);
    assert_eq!(report["recall"], 1.0);
}

#[test]
fn dimension_mismatch_exits_2() {
    let t = trained(&[]);
    let narrow = t.dir.path().join("narrow.csv");
    std::fs::write(&narrow, "timestamp,a\n0,1\n1,2\n").unwrap();
    let out = run(&["score", "-m", s(&t.model), "-i", s(&narrow)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_and_bad_options_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let model = dir.path().join("m.json");
    assert_eq!(run(&["train", "-i", s(&missing), "-m", s(&model)]).status.code(), Some(2));
    assert_eq!(run(&["train", "-m", s(&model)]).status.code(), Some(2));
    assert_eq!(run(&["score", "--rho", "1e-3", "--log-rho", "-3"]).status.code(), Some(2));
    assert_eq!(run(&["score", "--rho", "2"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"latentz": 2}"#).unwrap();
    assert_eq!(run(&["train", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    write_series(&train, 200, 3, None);
    let model = dir.path().join("m.json");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"input": "{}", "model": "{}", "latents": 3, "max_iters": 5, "mode": "unconstrained"}}"#,
            s(&train),
            s(&model)
        ),
    )
    .unwrap();
    let summary = ok(&["train", "--config", s(&cfg), "--latents", "2"]);
    assert_eq!(summary["latents"].as_array().unwrap().len(), 2);
    assert_eq!(summary["mode"], "unconstrained");
    assert!(summary["training_log"].as_array().unwrap().len() <= 6);
}

fn write_scores(path: &Path, scores: &[f64], labels: &[u8]) {
    let mut text = String::from("timestamp,score,is_anomaly\n");
    for (i, (s, l)) in scores.iter().zip(labels).enumerate() {
        text.push_str(&format!("{i},{s},{l}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn eval_fixed_threshold_matches_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    // Ranges [2,4] and [8,9]; at α = 5 points 3 and 6 are flagged.
    // Point 3 credits the whole first range (3 TP), point 6 is a FP, the
    // second range is missed (2 FN). Ties at α are not flagged.
    write_scores(
        &path,
        &[1.0, 1.0, 2.0, 9.0, 5.0, 0.0, 7.0, 1.0, 3.0, 5.0],
        &[0, 0, 1, 1, 1, 0, 0, 0, 1, 1],
    );
    let out_path = dir.path().join("report.json");
    let r = ok(&["eval", "-i", s(&path), "--threshold", "5", "-o", s(&out_path)]);
    assert_eq!((r["true_positives"].as_u64(), r["false_positives"].as_u64(), r["false_negatives"].as_u64()), (Some(3), Some(1), Some(2)));
    assert_eq!(r["threshold"], 5.0);
    assert_eq!(r["precision"], 0.75);
    assert_eq!(r["recall"], 0.6);
    assert!((r["f1"].as_f64().unwrap() - 6.0 / 9.0).abs() < 1e-15);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(saved, r);
}

#[test]
fn eval_sweep_finds_perfect_separation_and_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let labels = [0, 0, 1, 1, 0, 0, 1, 0];
    let scores: Vec<f64> = labels.iter().map(|&l| 10.0 * f64::from(l) + 1.0).collect();
    write_scores(&path, &scores, &labels);
    let curve = dir.path().join("curve.csv");
    let r = ok(&["eval", "-i", s(&path), "--curve", s(&curve)]);
    assert_eq!(r["f1"], 1.0);
    assert_eq!(r["threshold"], 1.0);
    let (_, rows) = read_csv(&curve);
    assert_eq!(rows.len(), 3);
}

#[test]
fn eval_with_separate_labels_file() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    std::fs::write(&scores, "timestamp,z\n0,1\n1,8\n2,\n").unwrap();
    let labels = dir.path().join("l.csv");
    std::fs::write(&labels, "timestamp,v,is_anomaly\n0,0,0\n1,0,1\n2,0,0\n").unwrap();
    let r = ok(&["eval", "-i", s(&scores), "--labels", s(&labels), "--score-column", "z"]);
    assert_eq!(r["f1"], 1.0);
}

#[test]
fn eval_without_positive_labels_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_scores(&path, &[1.0, 2.0, 3.0], &[0, 0, 0]);
    assert_eq!(run(&["eval", "-i", s(&path)]).status.code(), Some(4));
    assert_eq!(run(&["eval", "-i", s(&path), "--threshold", "1"]).status.code(), Some(4));
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["synth", "--scenario", "fig2", "--seed", seed, "-o", s(&out)]);
        std::fs::read(out.join("test.csv")).unwrap()
    };
    assert_eq!(gen("a", "4"), gen("b", "4"));
    assert_ne!(gen("a", "4"), gen("c", "5"));
    let out = dir.path().join("u");
    let r = ok(&["synth", "--scenario", "univariate", "--length", "100", "-o", s(&out)]);
    assert_eq!((r["train_rows"].as_u64(), r["test_rows"].as_u64()), (Some(60), Some(40)));
    assert!(out.join("scenario.json").is_file());
}

#[test]
fn pipeline_on_csv_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_series(&dir.path().join("train.csv"), 300, 1, None);
    write_series(&dir.path().join("test.csv"), 200, 2, Some(120..130));
    let r = ok(&["pipeline", "-i", s(dir.path()), "-k", "2", "--max-iters", "5"]);
    assert_eq!(r["series"].as_array().unwrap().len(), 1);
    assert!(r["summary"]["f1"].as_f64().unwrap() > 0.5);
    let r = ok(&["pipeline", "-i", s(dir.path()), "-k", "2", "--max-iters", "5", "--threshold", "1e9"]);
    assert_eq!(r["summary"]["true_positives"], 0);
}

#[test]
fn pipeline_skips_unlabeled_series_but_counts_them() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/nab");
    let r = ok(&["pipeline", "--dataset-layout", "nab", "-i", s(&fixtures), "-k", "1", "--max-iters", "3"]);
    let skipped = r["skipped"].as_array().unwrap();
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0]["name"], "artificialWithAnomaly/flat");
    assert_eq!(r["series"].as_array().unwrap().len(), 2);
}

/// Peak resident memory of a 10⁶-row scoring run, read from `getrusage`
/// for child processes. Slow; run with `--ignored`.
#[test]
#[ignore]
fn streaming_memory_is_bounded() {
    let t = trained(&[]);
    let big = t.dir.path().join("big.csv");
    write_series(&big, 1_000_000, 9, None);
    let out = t.dir.path().join("big_scores.csv");
    ok(&["score", "-m", s(&t.model), "-i", s(&big), "-o", s(&out)]);
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { libc::getrusage(libc::RUSAGE_CHILDREN, &mut usage) }, 0);
    let peak_mib = usage.ru_maxrss as f64 / 1024.0;
    eprintln!("peak child RSS {peak_mib:.1} MiB");
    assert!(peak_mib < 64.0, "peak child RSS {peak_mib:.1} MiB");
}

#[test]
fn hyperparameter_fitting_refines_multivariate_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    write_series(&train, 300, 1, None);
    let fit = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec!["train", "-i", s(&train), "-m", s(&path), "-k", "2", "--max-iters", "10"];
        args.extend_from_slice(extra);
        (ok(&args), SsgpfaModel::load(&path).unwrap())
    };
    let (fixed_out, fixed) = fit("fixed.json", &[]);
    let (refined_out, refined) = fit("refined.json", &["--fit-hyperparameters"]);
    assert_eq!(fixed_out["method"], "em");
    assert_eq!(refined_out["method"], "em_refined");
    assert_ne!(fixed.latents(), refined.latents());

    let series = ssgpfa::data::load_csv(&train).unwrap();
    let st = fixed.standardization.as_ref().unwrap();
    let ys: Vec<DVector<f64>> = series.values.iter().map(|y| st.apply(y)).collect();
    let ll = |m: &SsgpfaModel| ssgpfa::ssgpfa::log_marginal_likelihood(m, &series.times, &ys).unwrap();
    assert!(ll(&refined) > ll(&fixed), "{} <= {}", ll(&refined), ll(&fixed));
}

#[test]
fn noise_std_flag_lowers_synthetic_noise() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["synth", "--scenario", "univariate", "--seed", "3", "-o", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        let desc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("scenario.json")).unwrap()).unwrap();
        let y = column(&out.join("test.csv"), "dim_0");
        let diffs: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        let var = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
        (desc["noise"].clone(), var)
    };
    let (variance, var_a) = gen("variance", &[]);
    let (std_dev, var_b) = gen("std", &["--noise-std"]);
    assert_ne!(variance, std_dev);
    assert!(var_b < var_a, "{var_b} >= {var_a}");
}
