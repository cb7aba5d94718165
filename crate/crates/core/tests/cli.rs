use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coagsens"))
}

fn run_with(dir: &Path, name: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join(format!("{name}.conf"));
    fs::write(&path, config).unwrap();
    bin()
        .arg("--config")
        .arg(&path)
        .arg("--output")
        .arg(dir.join(name))
        .args(extra)
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str, file: &str) -> String {
    fs::read_to_string(dir.join(name).join(file)).unwrap()
}

const EC: &str = "mode = exact_coupling\nkernel = additive\nlambda = 1\nt_end = 1\n\
                  output_times = 0.5, 1\nn_particles = 300\nn_runs = 5\nseed = 11\n";

#[test]
fn oracle_mode_writes_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(
        dir.path(),
        "oracle",
        "mode = oracle\nkernel = additive\nlambda = 1\nt_end = 1\noutput_times = 0.5, 1\noracle_x_max = 60\n",
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = read(dir.path(), "oracle", "runs.csv");
    let mut lines = runs.lines();
    assert_eq!(lines.next(), Some("run_id,time,mass,mu_density,sigma_estimate"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 60);
    assert!(rows.iter().all(|r| r.starts_with("oracle,")));
    let summary = read(dir.path(), "oracle", "summary.csv");
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",nan,nan,1")));
}

#[test]
fn reruns_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (name, threads) in [("a", "1"), ("b", "2"), ("c", "1")] {
        let out = run_with(dir.path(), name, EC, &["--threads", threads]);
        assert!(out.status.success());
    }
    let a = read(dir.path(), "a", "runs.csv");
    assert_eq!(a, read(dir.path(), "b", "runs.csv"));
    assert_eq!(a, read(dir.path(), "c", "runs.csv"));
    assert_eq!(read(dir.path(), "a", "summary.csv"), read(dir.path(), "b", "summary.csv"));
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_with(dir.path(), "a", EC, &[]).status.success());
    assert!(run_with(dir.path(), "b", EC, &["--seed", "12"]).status.success());
    assert_ne!(read(dir.path(), "a", "runs.csv"), read(dir.path(), "b", "runs.csv"));
    assert!(read(dir.path(), "b", "manifest.txt").contains("seed = 12"));
}

#[test]
fn summary_matches_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cd = EC.replace("mode = exact_coupling", "mode = cd\ndelta_lambda = 0.1");
    for (name, config) in [("ec", EC.to_string()), ("cd", cd)] {
        assert!(run_with(dir.path(), name, &config, &[]).status.success());

        let mut per: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
        for line in read(dir.path(), name, "runs.csv").lines().skip(1) {
            let c: Vec<&str> = line.split(',').collect();
            per.entry((c[1].to_string(), c[2].parse().unwrap()))
                .or_default()
                .push(c[4].parse().unwrap());
        }
        let summary = read(dir.path(), name, "summary.csv");
        let mut rows = 0;
        for line in summary.lines().skip(1) {
            let c: Vec<&str> = line.split(',').collect();
            let key = (c[0].to_string(), c[1].parse().unwrap());
            let n: usize = c[5].parse().unwrap();
            assert_eq!(n, 5);
            let mut vals = per.get(&key).cloned().unwrap_or_default();
            vals.resize(n, 0.0);
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            // runs.csv carries 12 significant digits, so compare on the scale of the inputs
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mean_s: f64 = c[2].parse().unwrap();
            let var_s: f64 = c[3].parse().unwrap();
            assert!((mean_s - mean).abs() <= 1e-10 * scale, "{name} {line} mean {mean}");
            assert!((var_s - var).abs() <= 1e-10 * scale * scale, "{name} {line} var {var}");
            rows += 1;
        }
        assert!(rows > 0);
    }
}

#[test]
fn d_var_against_oracle_file() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = run_with(
        dir.path(),
        "oracle",
        "mode = oracle\nkernel = additive\nlambda = 1\nt_end = 1\noutput_times = 0.5, 1\noracle_x_max = 150\n",
        &[],
    );
    assert!(oracle.status.success());
    let csv = dir.path().join("oracle").join("runs.csv");
    let out = run_with(dir.path(), "ec", &format!("{EC}oracle_csv = {}\n", csv.display()), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("d_var"));

    let manifest = read(dir.path(), "ec", "manifest.txt");
    let d: f64 = manifest
        .lines()
        .find_map(|l| l.strip_prefix("d_var = "))
        .unwrap()
        .parse()
        .unwrap();

    let table = |text: &str, col: usize| {
        let mut m: BTreeMap<(String, u64), f64> = BTreeMap::new();
        for line in text.lines().skip(1) {
            let c: Vec<&str> = line.split(',').collect();
            m.insert((c[0].to_string(), c[1].parse().unwrap()), c[col].parse().unwrap());
        }
        m
    };
    let means = table(&read(dir.path(), "ec", "summary.csv"), 2);
    let reference: BTreeMap<(String, u64), f64> = read(dir.path(), "oracle", "runs.csv")
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            ((c[1].to_string(), c[2].parse().unwrap()), c[4].parse().unwrap())
        })
        .collect();
    let mut keys: Vec<_> = means.keys().chain(reference.keys()).cloned().collect();
    keys.sort();
    keys.dedup();
    let expect: f64 = keys
        .iter()
        .map(|k| (means.get(k).copied().unwrap_or(0.0) - reference.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    assert!((d - expect).abs() <= 1e-9 * expect, "{d} vs {expect}");
    assert!(d > 0.0);
}

#[test]
fn oracle_grid_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let oracle = run_with(
        dir.path(),
        "oracle",
        "mode = oracle\nkernel = additive\nlambda = 1\nt_end = 1\noracle_x_max = 40\n",
        &[],
    );
    assert!(oracle.status.success());
    let csv = dir.path().join("oracle").join("runs.csv");
    let config = format!("{EC}oracle_csv = {}\n", csv.display()).replace("0.5, 1", "0.3, 1");
    let out = run_with(dir.path(), "ec", &config, &[]);
    assert!(!out.status.success());
}

#[test]
fn bad_configs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for (bad, key) in [
        ("mode = exact_coupling\nkernel = additive\nlambda = 1\nt_end = 1\nbogus = 3\n", "bogus"),
        ("mode = cd\nkernel = additive\nlambda = 1\nt_end = 1\n", "delta_lambda"),
        ("mode = exact_coupling\nkernel = additive\nlambda = -1\nt_end = 1\n", "lambda"),
        ("mode = exact_coupling\nkernel = soot\nlambda = 1\nt_end = 1\nresample_target = 0\n", "resample_target"),
        ("mode = ml\nkernel = additive\nlambda = 1\nt_end = 1\noutput_times = 0.5, 2\n", "output_times"),
    ] {
        let out = run_with(dir.path(), "bad", bad, &[]);
        assert!(!out.status.success(), "{bad}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{key}: {err}");
        assert!(!dir.path().join("bad").join("runs.csv").exists());
    }
    let out = bin().arg("--config").arg(dir.path().join("missing.conf")).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn ml_and_indep_modes_run() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["ml", "exact_indep"] {
        let config = EC.replace("exact_coupling", mode);
        let out = run_with(dir.path(), mode, &config, &[]);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
        let runs = read(dir.path(), mode, "runs.csv");
        let mass: f64 = runs
            .lines()
            .skip(1)
            .filter(|l| l.starts_with("0,1,"))
            .map(|l| {
                let c: Vec<&str> = l.split(',').collect();
                c[2].parse::<f64>().unwrap() * c[3].parse::<f64>().unwrap()
            })
            .sum();
        assert!((mass - 1.0).abs() < 1e-9, "{mode}: mass {mass}");
    }
}
