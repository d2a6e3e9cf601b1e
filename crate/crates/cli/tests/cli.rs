use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use srpo_cli::commands::{cmd_bench_reward, BenchMethod, BenchSource};
use srpo_cli::RunConfig;
use srpo_core::bench::{SyntheticSpec, DEFAULT_JSD_BINS};
use srpo_core::EncoderKind;

fn srpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srpo")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = srpo(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_string).collect()
}

const QUICK: [&str; 4] = ["--set", "eval_episodes=4", "--set", "group_size=2"];

#[test]
fn single_iteration_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let mut args = vec!["train", "--out", p(&out), "--set", "iterations=1"];
    args.extend(QUICK);
    ok(&args);
    let run = out.join("srpo-seed0");
    assert_eq!(data_lines(&run.join("metrics.csv")).len(), 1);
    for f in ["config.toml", "timing.csv", "diagnostics.tsv", "checkpoints/final.policy", "learning_curve.svg"] {
        assert!(run.join(f).exists() || out.join(f).exists(), "missing {f}");
    }
    // The echo is a complete config that resolves back to the same run.
    let echo = RunConfig::resolve(Some(&run.join("config.toml")), &[]).unwrap();
    assert_eq!(echo.iterations, 1);
    assert_eq!(echo.group_size, 2);
}

#[test]
fn grpo_matches_srpo_at_alpha_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut common = vec!["train", "--set", "iterations=4", "--seed-list", "5"];
    common.extend(QUICK);
    let mut ga = common.clone();
    ga.extend(["--out", p(&a), "--set", "algorithm=grpo"]);
    ok(&ga);
    let mut sb = common.clone();
    sb.extend(["--out", p(&b), "--set", "alpha=0"]);
    ok(&sb);
    assert_eq!(
        fs::read(a.join("grpo-seed5/metrics.csv")).unwrap(),
        fs::read(b.join("srpo-seed5/metrics.csv")).unwrap()
    );
}

#[test]
fn compare_counts_and_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let mut args = vec!["compare", "--out", p(&out), "--seed-list", "0,1,2", "--set", "iterations=3", "--set", "threshold=1.01", "--jobs", "2"];
    args.extend(QUICK);
    let summary = ok(&args);
    assert!(summary.starts_with("variant,"));
    let rows = data_lines(&out.join("compare.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[2], "4", "sentinel is budget + 1: {r}");
        let series = data_lines(&out.join(format!("{}-seed{}", f[0], f[1])).join("metrics.csv"));
        assert_eq!(series.len(), 3);
        let last: f64 = series[2].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(last, f[3].parse::<f64>().unwrap());
    }
    assert!(out.join("learning_curves.svg").exists());
    let dirs = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 6);
}

#[test]
fn compare_needs_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = srpo(&["compare", "--out", p(dir.path()), "--seed-list", "0,1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn alpha_sweep_has_five_rows_and_zero_is_grpo() {
    let dir = tempfile::tempdir().unwrap();
    let (s, c) = (dir.path().join("s"), dir.path().join("c"));
    let mut args = vec!["sweep-alpha", "--out", p(&s), "--seed-list", "0,1,2", "--set", "iterations=3"];
    args.extend(QUICK);
    let text = ok(&args);
    assert!(text.contains("0 < 0.3 < 0.5 < 1.0 < 0.8"));
    let table = fs::read_to_string(s.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 5);
    let mut cargs = vec!["compare", "--out", p(&c), "--seed-list", "0,1,2", "--set", "iterations=3"];
    cargs.extend(QUICK);
    ok(&cargs);
    for seed in 0..3 {
        assert_eq!(
            fs::read(s.join(format!("alpha-0-seed{seed}/metrics.csv"))).unwrap(),
            fs::read(c.join(format!("grpo-seed{seed}/metrics.csv"))).unwrap()
        );
    }
}

#[test]
fn ablations() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("ref.traj");
    ok(&["collect-demos", "--out", p(&store), "--successes", "5", "--failures", "2"]);

    let center = dir.path().join("center");
    let mut args = vec!["ablate", "--mode", "center-mode", "--out", p(&center), "--seed-list", "0,1,2", "--set", "iterations=2"];
    args.extend(QUICK);
    ok(&args);
    assert_eq!(data_lines(&center.join("compare.csv")).len(), 6);

    let source = dir.path().join("source");
    let set_store = format!("reference_store={}", store.display());
    let mut args = vec!["ablate", "--mode", "reference-source", "--out", p(&source), "--seed-list", "0,1,2", "--set", "iterations=5", "--set", &set_store];
    args.extend(QUICK);
    ok(&args);
    for seed in 0..3 {
        let diag = fs::read_to_string(source.join(format!("external-fixed-seed{seed}/diagnostics.tsv"))).unwrap();
        let digests: BTreeSet<&str> = diag.lines().skip(1).map(|l| l.split('\t').nth(7).unwrap()).collect();
        assert_eq!(digests.len(), 1, "{digests:?}");
        assert!(!digests.contains("-"));
    }

    let missing = srpo(&["ablate", "--mode", "reference-source", "--out", p(dir.path()), "--seed-list", "0,1,2"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn bench_reward_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = |o: &Path| -> Vec<String> {
        ["bench-reward", "--tasks", "2", "--successes", "4", "--failures", "3", "--out", p(o)].map(String::from).to_vec()
    };
    let run = |o: &Path| {
        let v = args(o);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let printed = run(&a);
    run(&b);
    let table = fs::read_to_string(a.join("bench.csv")).unwrap();
    assert_eq!(printed, table);
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("method,sc,mono,mmd,jsd,smd\n"));
    assert_eq!(table, fs::read_to_string(b.join("bench.csv")).unwrap());
    assert!(a.join("curves_latent.svg").exists() && a.join("curves_pixel.svg").exists());

    // Curves written out score identically when read back.
    let again = dir.path().join("again");
    ok(&["bench-reward", "--dataset", p(&a.join("curves/latent")), "--out", p(&again)]);
    let reread = fs::read_to_string(again.join("bench.csv")).unwrap();
    let metrics = |t: &str, m: &str| t.lines().find(|l| l.starts_with(m)).unwrap().split_once(',').unwrap().1.to_string();
    assert_eq!(metrics(&reread, "dataset"), metrics(&table, "latent"));
}

#[test]
fn clean_encoder_dominates_noisy_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { tasks: 3, ..SyntheticSpec::default() };
    let score = |kind, sigma, name: &str| {
        let cfg = RunConfig { encoder_kind: kind, encoder_noise_sigma: sigma, encoder_dim: 8, ..RunConfig::default() };
        let rows = cmd_bench_reward(&cfg, &BenchSource::Synthetic(spec.clone()), &[BenchMethod::Latent], None, DEFAULT_JSD_BINS, &dir.path().join(name)).unwrap();
        rows[0].1.mean.clone()
    };
    let clean = score(EncoderKind::OracleState, 0.0, "clean");
    let noisy = score(EncoderKind::NoisyOracle, 1.0, "noisy");
    assert!(clean.sc.unwrap() > noisy.sc.unwrap());
    assert!(clean.mono.unwrap() > noisy.mono.unwrap());
}

#[test]
fn report_regenerates_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let mut args = vec!["compare", "--out", p(&out), "--seed-list", "0,1,2", "--set", "iterations=2"];
    args.extend(QUICK);
    ok(&args);
    let plot = out.join("learning_curves.svg");
    let before = fs::read(&plot).unwrap();
    fs::remove_file(&plot).unwrap();
    ok(&["report", p(&out)]);
    assert_eq!(fs::read(&plot).unwrap(), before);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    assert_eq!(srpo(&["train", "--out", d, "--set", "no_such_key=1"]).status.code(), Some(1));
    assert_eq!(srpo(&["train", "--out", d, "--set", "iterations=0"]).status.code(), Some(1));
    assert_eq!(srpo(&["train", "--out", d, "--set", "suite=/no/such/suite.toml"]).status.code(), Some(1));
    assert_eq!(srpo(&["train", "--out", d, "--config", "/no/such/config.toml"]).status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "iterations = \"many\"\n").unwrap();
    assert_eq!(srpo(&["train", "--out", d, "--config", p(&bad)]).status.code(), Some(1));
    // Runtime: the output location is a regular file.
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    assert_eq!(srpo(&["train", "--out", p(&file), "--set", "iterations=1"]).status.code(), Some(2));
    assert_eq!(srpo(&["bench-reward", "--dataset", "/no/such/dir", "--out", d]).status.code(), Some(2));
}
