use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use varform_core::*;

fn varform() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_varform"));
    cmd.env_remove("VARFORM_SEED")
        .env_remove("RAYON_NUM_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    varform().args(args).output().expect("binary runs")
}

fn write_sample(dir: &Path, name: &str, s: &Sample<f64>) -> PathBuf {
    let mut text = String::from("t,y\n");
    for (t, y) in s.grid().points().iter().zip(s.responses()) {
        text.push_str(&format!("{t:?},{y:?}\n"));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn scenario(model: Model, c: f64, n: usize, seed: u64) -> Sample<f64> {
    let mut sc = ScenarioConfig::new(model, c, n, seed);
    sc.negative_variance = NegativeVariance::Absolute;
    generate_scenario(&sc).unwrap()
}

const SMALL: &[&str] = &["--samples", "20000", "--seed", "5"];

#[test]
fn strong_alternative_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_sample(dir.path(), "alt.csv", &scenario(Model::Sin, 1.0, 200, 3));
    let out = run(&[&["test", path.to_str().unwrap()], SMALL].concat());
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["decisions"][0]["reject"], serde_json::Value::Bool(true));
}

#[test]
fn null_sample_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_sample(dir.path(), "null.csv", &scenario(Model::Sin, 0.0, 100, 11));
    let out = run(&[&["test", path.to_str().unwrap()], SMALL].concat());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let reject = v["decisions"][0]["reject"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(i32::from(reject)));
}

#[test]
fn unsorted_input_exits_two_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t,y\n0.1,1\n0.3,2\n0.2,3\n0.4,1\n").unwrap();
    let out = run(&["test", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"alpha": []}"#).unwrap();
    let out = run(&["critval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty alpha"));

    assert_eq!(run(&["critval", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(
        run(&["test", "/nonexistent/file.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"alpah": [0.05]}"#).unwrap();
    assert_eq!(
        run(&["critval", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn test_output_matches_library_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(Model::Exp, 0.5, 150, 21);
    let path = write_sample(dir.path(), "s.csv", &s);
    let traj = dir.path().join("traj.csv");
    let args = [
        &[
            "test",
            path.to_str().unwrap(),
            "--trajectory-out",
            traj.to_str().unwrap(),
        ],
        SMALL,
    ]
    .concat();
    let a = run(&args);
    let traj_a = std::fs::read(&traj).unwrap();
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(traj_a, std::fs::read(&traj).unwrap());

    let config = TestConfig {
        critical: CriticalConfig {
            samples: 20000,
            seed: 5,
        },
        ..TestConfig::default()
    };
    let lib = run_test(&s, &VarianceFamily::parse("const,t2").unwrap(), &config).unwrap();
    assert_eq!(
        String::from_utf8(a.stdout).unwrap(),
        lib.report.to_json() + "\n"
    );
    assert_eq!(String::from_utf8(traj_a).unwrap(), lib.trajectory_csv());
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_sample(dir.path(), "s.csv", &scenario(Model::Sqrt, 0.0, 80, 2));
    let flag = run(&[
        "test",
        path.to_str().unwrap(),
        "--samples",
        "5000",
        "--seed",
        "99",
    ]);
    let env = varform()
        .args(["test", path.to_str().unwrap(), "--samples", "5000"])
        .env("VARFORM_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(flag.stdout, env.stdout);
    let v: serde_json::Value = serde_json::from_slice(&env.stdout).unwrap();
    assert_eq!(v["diagnostics"]["critical_seed"], 99);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"alpha": [0.1, 0.2], "samples": 4000, "seed": 1}"#).unwrap();
    let out = run(&[
        "critval",
        "--config",
        cfg.to_str().unwrap(),
        "--alpha",
        "0.05",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "law,alpha,quantile,samples,seed");
    assert_eq!(lines.len(), 2);
    assert!(
        lines[1].starts_with("int_W2,0.05,") && lines[1].ends_with(",4000,1"),
        "{}",
        lines[1]
    );
}

#[test]
fn critval_matches_library() {
    let out = run(&[
        "critval",
        "--alpha",
        "0.025,0.05",
        "--alpha",
        "0.1",
        "--samples",
        "30000",
        "--seed",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let law = NullLaw::simulate(Law::IntW2, 30000, 8);
    let text = String::from_utf8(out.stdout).unwrap();
    for (line, alpha) in text.lines().skip(1).zip([0.025, 0.05, 0.1]) {
        let q: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        let exact = law.upper_quantile(alpha).unwrap();
        assert!((q - exact).abs() <= 1e-5 * exact, "{q} vs {exact}");
    }
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn simulate_is_identical_across_thread_counts() {
    let args = [
        "simulate",
        "--model",
        "sin,sqrt",
        "--c",
        "0,1",
        "--n",
        "40",
        "--reps",
        "30",
        "--samples",
        "4000",
        "--seed",
        "3",
    ];
    let with_threads = |k: &str| {
        varform()
            .args(args)
            .env("RAYON_NUM_THREADS", k)
            .output()
            .unwrap()
    };
    let one = with_threads("1");
    assert_eq!(
        one.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&one.stderr)
    );
    assert_eq!(one.stdout, with_threads("3").stdout);
    assert_eq!(one.stdout, with_threads("1").stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    assert!(text.starts_with("model,c,test,n40_a0.025,n40_a0.05,n40_a0.1,"));
}

#[test]
fn single_replication_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("table.csv");
    let out = run(&[
        "simulate",
        "--model",
        "5.4",
        "--c",
        "0.5",
        "--n",
        "50",
        "--reps",
        "1",
        "--samples",
        "4000",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let row = text.lines().find(|l| l.contains(",martingale,")).unwrap();
    for v in row.split(',').skip(3).take(3) {
        assert!(v == "0" || v == "1", "{row}");
    }
}
