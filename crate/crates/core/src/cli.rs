//! Experiment runner behind the `coagsens` binary: flat `key = value`
//! configs, parallel replications, CSV outputs and a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact_driver::{self, Algorithm, EventCounters, SimConfig};
use crate::kernel::{KernelFamily, KernelId};
use crate::ml_driver::{self, CdConfig, CdCoupling};
use crate::oracle;
use crate::stats::{self, RunSet, SensitivityEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    ExactCoupling,
    ExactIndep,
    Ml,
    Cd,
    Oracle,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::ExactCoupling => "exact_coupling",
            Mode::ExactIndep => "exact_indep",
            Mode::Ml => "ml",
            Mode::Cd => "cd",
            Mode::Oracle => "oracle",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact_coupling" => Mode::ExactCoupling,
            "exact_indep" => Mode::ExactIndep,
            "ml" => Mode::Ml,
            "cd" => Mode::Cd,
            "oracle" => Mode::Oracle,
            other => return Err(Error::config("mode", format!("unknown mode '{other}'"))),
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub kernel: KernelId,
    pub lambda: f64,
    pub delta_lambda: Option<f64>,
    pub cd_coupling: CdCoupling,
    pub n_particles: usize,
    pub n_runs: usize,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    /// `None` disables resampling.
    pub resample_max: Option<usize>,
    pub resample_target: usize,
    pub oracle_x_max: usize,
    pub oracle_csv: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// `None` uses all available cores.
    pub threads: Option<usize>,
}

const KEYS: &[&str] = &[
    "mode",
    "kernel",
    "lambda",
    "delta_lambda",
    "cd_coupling",
    "n_particles",
    "n_runs",
    "t_end",
    "output_times",
    "resample_max",
    "resample_target",
    "oracle_x_max",
    "oracle_csv",
    "seed",
    "output_dir",
    "threads",
];

fn parse_value<T: FromStr>(key: &str, raw: &str, what: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("expected {what}, got '{raw}'")))
}

fn positive_real(key: &str, raw: &str) -> Result<f64> {
    let v: f64 = parse_value(key, raw, "a real number")?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(key, "must be positive and finite"));
    }
    Ok(v)
}

fn positive_int(key: &str, raw: &str) -> Result<usize> {
    let v: usize = parse_value(key, raw, "a non-negative integer")?;
    if v == 0 {
        return Err(Error::config(key, "must be at least 1"));
    }
    Ok(v)
}

/// Default grid `0.125 j`, `j = 1..=⌊8 t_end⌋`, or just `t_end` if empty.
pub fn default_output_times(t_end: f64) -> Vec<f64> {
    let n = (8.0 * t_end + 1e-9).floor() as usize;
    let times: Vec<f64> = (1..=n).map(|j| 0.125 * j as f64).collect();
    if times.is_empty() {
        vec![t_end]
    } else {
        times
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut raw: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(&format!("line {}", lineno + 1), "expected 'key = value'"))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if raw.insert(key, value).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }

    // per-key parsing and range checks
    let mode = raw.get("mode").map(|v| v.parse::<Mode>()).transpose()?;
    let kernel = raw.get("kernel").map(|v| v.parse::<KernelId>()).transpose()?;
    let lambda = raw.get("lambda").map(|v| positive_real("lambda", v)).transpose()?;
    let delta_lambda = raw
        .get("delta_lambda")
        .map(|v| positive_real("delta_lambda", v))
        .transpose()?;
    let cd_coupling = raw
        .get("cd_coupling")
        .map(|v| v.parse::<CdCoupling>())
        .transpose()?
        .unwrap_or(CdCoupling::Shared);
    let n_particles = raw
        .get("n_particles")
        .map(|v| positive_int("n_particles", v))
        .transpose()?
        .unwrap_or(1000);
    let n_runs = raw
        .get("n_runs")
        .map(|v| positive_int("n_runs", v))
        .transpose()?
        .unwrap_or(1);
    let t_end = raw
        .get("t_end")
        .map(|v| {
            let t: f64 = parse_value("t_end", v, "a real number")?;
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::config("t_end", "must be finite and non-negative"));
            }
            Ok(t)
        })
        .transpose()?;
    let output_times = raw
        .get("output_times")
        .map(|v| {
            v.split(',')
                .map(|s| parse_value::<f64>("output_times", s.trim(), "a comma-separated list of reals"))
                .collect::<Result<Vec<f64>>>()
        })
        .transpose()?;
    let resample_max = match raw.get("resample_max") {
        None => None,
        Some(&"none") => Some(None),
        Some(v) => Some(Some(positive_int("resample_max", v)?)),
    };
    let resample_target = raw
        .get("resample_target")
        .map(|v| {
            let m: usize = parse_value("resample_target", v, "an integer")?;
            if m == 0 {
                return Err(Error::config("resample_target", "resample_target must satisfy 0 < m ≤ M"));
            }
            Ok(m)
        })
        .transpose()?;
    let oracle_x_max = raw
        .get("oracle_x_max")
        .map(|v| {
            let x = positive_int("oracle_x_max", v)?;
            if x < 2 {
                return Err(Error::config("oracle_x_max", "must be at least 2"));
            }
            Ok(x)
        })
        .transpose()?
        .unwrap_or(300);
    let seed = raw
        .get("seed")
        .map(|v| parse_value::<u64>("seed", v, "an unsigned integer"))
        .transpose()?
        .unwrap_or(0);
    let threads = raw.get("threads").map(|v| positive_int("threads", v)).transpose()?;
    let output_dir = raw.get("output_dir").map_or_else(|| PathBuf::from("output"), PathBuf::from);
    let oracle_csv = raw.get("oracle_csv").map(PathBuf::from);

    // mode-specific, then common required keys
    let mode = mode.ok_or_else(|| Error::config("mode", "required key missing"))?;
    if mode == Mode::Cd && delta_lambda.is_none() {
        return Err(Error::config("delta_lambda", "required when mode = cd"));
    }
    let kernel = kernel.ok_or_else(|| Error::config("kernel", "required key missing"))?;
    let lambda = lambda.ok_or_else(|| Error::config("lambda", "required key missing"))?;
    let t_end = t_end.ok_or_else(|| Error::config("t_end", "required key missing"))?;

    // cross-field checks
    let output_times = output_times.unwrap_or_else(|| default_output_times(t_end));
    if output_times.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= t_end)) {
        return Err(Error::config("output_times", "every time must lie in [0, t_end]"));
    }
    if output_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("output_times", "must be strictly increasing"));
    }
    let resample_max = resample_max.unwrap_or(Some(2 * n_particles));
    let resample_target = resample_target.unwrap_or(n_particles);
    if let Some(m_max) = resample_max {
        if resample_target > m_max {
            return Err(Error::config("resample_target", "resample_target must satisfy 0 < m ≤ M"));
        }
    }
    let family = KernelFamily::new(kernel, lambda).map_err(|e| Error::config("lambda", e.to_string()))?;
    if let Some(d) = delta_lambda {
        family
            .with_lambda(lambda - 0.5 * d)
            .map_err(|_| Error::config("delta_lambda", "lambda - delta_lambda/2 must be positive"))?;
    }

    Ok(ExperimentConfig {
        mode,
        kernel,
        lambda,
        delta_lambda,
        cd_coupling,
        n_particles,
        n_runs,
        t_end,
        output_times,
        resample_max,
        resample_target,
        oracle_x_max,
        oracle_csv,
        seed,
        output_dir,
        threads,
    })
}

impl ExperimentConfig {
    pub fn kernel_family(&self) -> KernelFamily {
        KernelFamily::new(self.kernel, self.lambda).expect("validated at parse time")
    }

    pub fn sim_config(&self, run_index: u64) -> SimConfig {
        let algorithm = match self.mode {
            Mode::ExactIndep => Algorithm::ExactIndep,
            _ => Algorithm::ExactCoupling,
        };
        SimConfig {
            kernel: self.kernel_family(),
            algorithm,
            n_particles: self.n_particles,
            t_end: self.t_end,
            output_times: self.output_times.clone(),
            resample_max: self.resample_max,
            resample_target: self.resample_target,
            seed: self.seed,
            run_index,
            initial: None,
        }
    }

    /// Resolved configuration as `key = value` lines.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.name());
        let _ = writeln!(s, "kernel = {}", self.kernel);
        let _ = writeln!(s, "lambda = {}", self.lambda);
        if let Some(d) = self.delta_lambda {
            let _ = writeln!(s, "delta_lambda = {d}");
            let _ = writeln!(s, "cd_coupling = {}", self.cd_coupling);
        }
        let _ = writeln!(s, "n_particles = {}", self.n_particles);
        let _ = writeln!(s, "n_runs = {}", self.n_runs);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let times: Vec<String> = self.output_times.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(s, "output_times = {}", times.join(", "));
        match self.resample_max {
            Some(m) => {
                let _ = writeln!(s, "resample_max = {m}");
            }
            None => {
                let _ = writeln!(s, "resample_max = none");
            }
        }
        let _ = writeln!(s, "resample_target = {}", self.resample_target);
        let _ = writeln!(s, "oracle_x_max = {}", self.oracle_x_max);
        if let Some(p) = &self.oracle_csv {
            let _ = writeln!(s, "oracle_csv = {}", p.display());
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        if let Some(t) = self.threads {
            let _ = writeln!(s, "threads = {t}");
        }
        s
    }
}

/// One time slice of one run.
struct Row {
    time: f64,
    mu: BTreeMap<u64, f64>,
    sigma: SensitivityEstimate,
}

struct RunResult {
    rows: Vec<Row>,
    seconds: f64,
    counters: String,
}

fn format_counters(c: &EventCounters) -> String {
    format!(
        "type0={} type1+={} type1-={} type2+={} type2-={} coupled={} rejections={} cancellations={} resamples={}",
        c.type0, c.type1_plus, c.type1_minus, c.type2_plus, c.type2_minus, c.coupled, c.rejections, c.cancellations, c.resamples
    )
}

fn simulate(config: &ExperimentConfig, run_index: u64) -> Result<RunResult> {
    let start = Instant::now();
    let sim = config.sim_config(run_index);
    let (rows, counters) = match config.mode {
        Mode::ExactCoupling | Mode::ExactIndep | Mode::Ml => {
            let out = if config.mode == Mode::Ml {
                ml_driver::run_ml(&sim)?
            } else {
                exact_driver::run(&sim)?
            };
            let rows = out
                .snapshots
                .iter()
                .map(|s| Row {
                    time: s.time,
                    mu: s.mu_density(),
                    sigma: s.sensitivity(),
                })
                .collect();
            (rows, format_counters(&out.counters))
        }
        Mode::Cd => {
            let cd = CdConfig {
                sim,
                delta_lambda: config.delta_lambda.expect("validated at parse time"),
                coupling: config.cd_coupling,
            };
            let out = ml_driver::run_cd(&cd)?;
            let rows = out
                .snapshots
                .iter()
                .map(|s| Row {
                    time: s.time,
                    mu: s.mu_density(),
                    sigma: s.sensitivity(),
                })
                .collect();
            let counters = format!(
                "minus[{}] plus[{}]",
                format_counters(&out.counters[0]),
                format_counters(&out.counters[1])
            );
            (rows, counters)
        }
        Mode::Oracle => unreachable!("oracle mode is not replicated"),
    };
    Ok(RunResult {
        rows,
        seconds: start.elapsed().as_secs_f64(),
        counters,
    })
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.11e}")
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub n_runs: usize,
    pub output_dir: PathBuf,
    pub d_var: Option<f64>,
}

/// Read `time,mass → sigma` from a CSV with the `runs.csv` schema.
pub fn read_oracle_csv(path: &Path) -> Result<BTreeMap<u64, SensitivityEstimate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<u64, BTreeMap<u64, f64>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::config("oracle_csv", format!("malformed line {}", i + 1));
        if cols.len() != 5 {
            return Err(bad());
        }
        let t: f64 = cols[1].parse().map_err(|_| bad())?;
        let m: u64 = cols[2].parse().map_err(|_| bad())?;
        let s: f64 = cols[4].parse().map_err(|_| bad())?;
        out.entry(t.to_bits()).or_default().insert(m, s);
    }
    Ok(out.into_iter().map(|(k, v)| (k, SensitivityEstimate(v))).collect())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let results: Vec<RunResult> = if config.mode == Mode::Oracle {
        let start = Instant::now();
        let sol = oracle::solve_sensitivity(
            &config.kernel_family(),
            config.oracle_x_max,
            &config.output_times,
            &oracle::monodisperse(),
        )?;
        let rows = (0..sol.times.len())
            .map(|j| Row {
                time: sol.times[j],
                mu: (1..=config.oracle_x_max as u64)
                    .map(|m| (m, sol.density(j, m as usize)))
                    .collect(),
                sigma: sol.sensitivity_estimate(j),
            })
            .collect();
        vec![RunResult {
            rows,
            seconds: start.elapsed().as_secs_f64(),
            counters: format!("rk4 step = {}", sol.step),
        }]
    } else {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(t) = config.threads {
            pool = pool.num_threads(t);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?;
        pool.install(|| {
            (0..config.n_runs as u64)
                .into_par_iter()
                .map(|r| simulate(config, r))
                .collect::<Result<Vec<_>>>()
        })?
    };

    let run_label = |i: usize| {
        if config.mode == Mode::Oracle {
            "oracle".to_string()
        } else {
            i.to_string()
        }
    };

    let mut runs_csv = String::from("run_id,time,mass,mu_density,sigma_estimate\n");
    for (i, r) in results.iter().enumerate() {
        let id = run_label(i);
        for row in &r.rows {
            let masses: BTreeSet<u64> = row.mu.keys().chain(row.sigma.0.keys()).copied().collect();
            for m in masses {
                let mu = row.mu.get(&m).copied().unwrap_or(0.0);
                let _ = writeln!(runs_csv, "{id},{},{m},{},{}", row.time, num(mu), num(row.sigma.get(m)));
            }
        }
    }

    let mut rs = RunSet::new(config.output_times.clone(), config.describe());
    for r in &results {
        rs.push(r.rows.iter().map(|row| row.sigma.clone()).collect(), r.seconds)?;
    }
    let mut means = Vec::with_capacity(config.output_times.len());
    let mut summary_csv = String::from("time,mass,mean_sigma,var_sigma,ci_halfwidth,n_runs\n");
    for (j, &t) in config.output_times.iter().enumerate() {
        let mean = stats::mean_sensitivity(&rs, t)?;
        let var = (rs.len() >= 2).then(|| stats::variance(&rs, t)).transpose()?;
        let masses: BTreeSet<u64> = results
            .iter()
            .flat_map(|r| r.rows[j].mu.keys().chain(r.rows[j].sigma.0.keys()).copied())
            .collect();
        for m in masses {
            let (v, hw) = match &var {
                Some(var) => {
                    let v = var.per_mass.get(&m).copied().unwrap_or(0.0);
                    (v, 1.96 * (v / rs.len() as f64).sqrt())
                }
                None => (f64::NAN, f64::NAN),
            };
            let _ = writeln!(summary_csv, "{t},{m},{},{},{},{}", num(mean.get(m)), num(v), num(hw), rs.len());
        }
        means.push((t, mean));
    }

    let d_var = match &config.oracle_csv {
        Some(path) => {
            let table = read_oracle_csv(path)?;
            let reference = config
                .output_times
                .iter()
                .map(|&t| table.get(&t.to_bits()).cloned().map(|e| (t, e)).ok_or(Error::GridMismatch))
                .collect::<Result<Vec<_>>>()?;
            Some(stats::d_var(&means, &reference)?)
        }
        None => None,
    };

    let mut manifest = String::new();
    let _ = writeln!(manifest, "# coagsens {}", env!("CARGO_PKG_VERSION"));
    manifest.push_str(&config.describe());
    let _ = writeln!(manifest, "mean_run_seconds = {}", rs.mean_duration());
    if let Some(d) = d_var {
        let _ = writeln!(manifest, "d_var = {}", num(d));
    }
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(manifest, "run {} seconds={:.6} {}", run_label(i), r.seconds, r.counters);
    }

    write_outputs(
        &config.output_dir,
        &[("runs.csv", runs_csv), ("summary.csv", summary_csv), ("manifest.txt", manifest)],
    )?;
    Ok(ExperimentReport {
        n_runs: results.len(),
        output_dir: config.output_dir.clone(),
        d_var,
    })
}

/// Write every file to a temporary name, then rename all. Anything written
/// is removed again if a step fails.
fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let mut temps = Vec::new();
        for (name, body) in files {
            let tmp = dir.join(format!(".{name}.tmp"));
            written.push(tmp.clone());
            fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
            temps.push((tmp, dir.join(name)));
        }
        for (tmp, dst) in temps {
            fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
            written.push(dst);
        }
        Ok(())
    })();
    if result.is_err() {
        for p in written {
            let _ = fs::remove_file(p);
        }
    }
    result
}
