//! Aggregation of replicated sensitivity estimates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Sparse per-mass estimate; masses not present are zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensitivityEstimate(pub BTreeMap<u64, f64>);

impl SensitivityEstimate {
    pub fn get(&self, mass: u64) -> f64 {
        self.0.get(&mass).copied().unwrap_or(0.0)
    }

    /// Dense values for masses `1..=max_mass`.
    pub fn dense(&self, max_mass: u64) -> Vec<f64> {
        (1..=max_mass).map(|m| self.get(m)).collect()
    }

    /// `Σ_i |self(i) − other(i)|` over the union of supports.
    pub fn l1_distance(&self, other: &SensitivityEstimate) -> f64 {
        let mut total = 0.0;
        for (&m, &v) in &self.0 {
            total += (v - other.get(m)).abs();
        }
        for (&m, &v) in &other.0 {
            if !self.0.contains_key(&m) {
                total += v.abs();
            }
        }
        total
    }
}

impl FromIterator<(u64, f64)> for SensitivityEstimate {
    fn from_iter<I: IntoIterator<Item = (u64, f64)>>(iter: I) -> Self {
        SensitivityEstimate(iter.into_iter().collect())
    }
}

const TIME_TOL: f64 = 1e-12;

/// Replicated runs sharing one output grid.
#[derive(Clone, Debug)]
pub struct RunSet {
    times: Vec<f64>,
    runs: Vec<Vec<SensitivityEstimate>>,
    durations: Vec<f64>,
    fingerprint: String,
}

impl RunSet {
    pub fn new(times: Vec<f64>, fingerprint: impl Into<String>) -> Self {
        RunSet {
            times,
            runs: Vec::new(),
            durations: Vec::new(),
            fingerprint: fingerprint.into(),
        }
    }

    /// Add one run: an estimate per grid time and its wall-clock seconds.
    pub fn push(&mut self, estimates: Vec<SensitivityEstimate>, seconds: f64) -> Result<()> {
        if estimates.len() != self.times.len() {
            return Err(Error::GridMismatch);
        }
        self.runs.push(estimates);
        self.durations.push(seconds);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    /// Mean per-run wall-clock time.
    pub fn mean_duration(&self) -> f64 {
        if self.durations.is_empty() {
            return 0.0;
        }
        self.durations.iter().sum::<f64>() / self.durations.len() as f64
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= TIME_TOL)
            .ok_or(Error::TimeNotInGrid(t))
    }

    fn column(&self, t: f64) -> Result<impl Iterator<Item = &SensitivityEstimate>> {
        let j = self.time_index(t)?;
        Ok(self.runs.iter().map(move |r| &r[j]))
    }
}

pub fn mean_sensitivity(rs: &RunSet, t: f64) -> Result<SensitivityEstimate> {
    if rs.is_empty() {
        return Err(Error::InsufficientRuns { needed: 1, got: 0 });
    }
    let mut sums: BTreeMap<u64, f64> = BTreeMap::new();
    for est in rs.column(t)? {
        for (&m, &v) in &est.0 {
            *sums.entry(m).or_insert(0.0) += v;
        }
    }
    let l = rs.len() as f64;
    Ok(sums.into_iter().map(|(m, s)| (m, s / l)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub per_mass: BTreeMap<u64, f64>,
    /// Sum of the per-mass variances.
    pub aggregate: f64,
}

/// Unbiased per-mass sample variance, absent masses counting as zero.
pub fn variance(rs: &RunSet, t: f64) -> Result<VarianceReport> {
    if rs.len() < 2 {
        return Err(Error::InsufficientRuns { needed: 2, got: rs.len() });
    }
    let mean = mean_sensitivity(rs, t)?;
    let mut ss: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for est in rs.column(t)? {
        for (&m, &v) in &est.0 {
            let d = v - mean.get(m);
            let e = ss.entry(m).or_default();
            e.0 += d * d;
            e.1 += 1;
        }
    }
    let l = rs.len();
    let per_mass: BTreeMap<u64, f64> = ss
        .into_iter()
        .map(|(m, (s, present))| {
            let mu = mean.get(m);
            (m, (s + (l - present) as f64 * mu * mu) / (l - 1) as f64)
        })
        .collect();
    let aggregate = per_mass.values().sum();
    Ok(VarianceReport { per_mass, aggregate })
}

/// `(mean, 1.96·sqrt(Var/L))` at one mass and time.
pub fn confidence_interval(rs: &RunSet, t: f64, mass: u64) -> Result<(f64, f64)> {
    let var = variance(rs, t)?;
    let mean = mean_sensitivity(rs, t)?.get(mass);
    let v = var.per_mass.get(&mass).copied().unwrap_or(0.0);
    Ok((mean, 1.96 * (v / rs.len() as f64).sqrt()))
}

/// Summed L1 distance between two estimate series on the same time grid.
pub fn d_var(
    means: &[(f64, SensitivityEstimate)],
    reference: &[(f64, SensitivityEstimate)],
) -> Result<f64> {
    if means.len() != reference.len() {
        return Err(Error::GridMismatch);
    }
    let mut total = 0.0;
    for ((ta, a), (tb, b)) in means.iter().zip(reference) {
        if (ta - tb).abs() > TIME_TOL {
            return Err(Error::GridMismatch);
        }
        total += a.l1_distance(b);
    }
    Ok(total)
}

/// `(T_ref · Var_ref) / (T_alg · Var_alg)`.
pub fn gain_factor(t_ref: f64, var_ref: f64, t_alg: f64, var_alg: f64) -> Result<f64> {
    if [t_ref, var_ref, t_alg, var_alg].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositive);
    }
    Ok((t_ref * var_ref) / (t_alg * var_alg))
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
