//! Deterministic reference solutions: the truncated Smoluchowski system and
//! its forward sensitivity system integrated with fixed-step RK4, and the
//! closed-form additive-kernel solution.

use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::stats::SensitivityEstimate;

/// Halving the step must change every component by less than this.
pub const STEP_TOLERANCE: f64 = 1e-8;

const INITIAL_STEP: f64 = 1.0 / 32.0;
const MIN_STEP: f64 = 1.0 / 16384.0;

/// State of the system truncated at `x_max`. Coagulations producing mass
/// above `x_max` remove both reactants and add their mass to `outflow`.
#[derive(Clone, Debug)]
pub struct TruncatedSystem {
    pub x_max: usize,
    pub kernel: KernelFamily,
    /// `densities[i]` is the density of mass `i + 1`.
    pub densities: Vec<f64>,
    pub sens: Vec<f64>,
    pub outflow: f64,
}

impl TruncatedSystem {
    /// `Σ i·μ(i) + outflow`, conserved by the truncated dynamics.
    pub fn first_moment_with_outflow(&self) -> f64 {
        first_moment(&self.densities) + self.outflow
    }
}

pub fn first_moment(densities: &[f64]) -> f64 {
    densities.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum()
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub times: Vec<f64>,
    /// One system state per grid time; `sens` is empty when sensitivities
    /// were not requested.
    pub states: Vec<TruncatedSystem>,
    /// Step size of the accepted integration.
    pub step: f64,
}

impl OracleSolution {
    pub fn density(&self, j: usize, mass: usize) -> f64 {
        self.states[j].densities.get(mass - 1).copied().unwrap_or(0.0)
    }

    pub fn sensitivity(&self, j: usize, mass: usize) -> f64 {
        self.states[j].sens.get(mass - 1).copied().unwrap_or(0.0)
    }

    /// Sensitivity at grid index `j` as a sparse estimate over all masses.
    pub fn sensitivity_estimate(&self, j: usize) -> SensitivityEstimate {
        self.states[j]
            .sens
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u64 + 1, v))
            .collect()
    }

    pub fn zeroth_moment(&self, j: usize) -> f64 {
        self.states[j].densities.iter().sum()
    }
}

/// Right-hand side of the truncated system. State layout:
/// `[μ(1..=x_max), σ(1..=x_max) if sensitivities, outflow]`.
pub(crate) struct Rhs {
    n: usize,
    k: Vec<f64>,
    kd: Vec<f64>,
    with_sens: bool,
    deriv_scale: f64,
}

impl Rhs {
    pub(crate) fn new(kernel: &KernelFamily, x_max: usize, with_sens: bool, deriv_scale: f64) -> Self {
        let n = x_max;
        let mut k = vec![0.0; n * n];
        let mut kd = vec![0.0; if with_sens { n * n } else { 0 }];
        for x in 1..=n {
            for y in 1..=n {
                k[(x - 1) * n + y - 1] = kernel.rate(x as u64, y as u64);
                if with_sens {
                    kd[(x - 1) * n + y - 1] = kernel.deriv(x as u64, y as u64);
                }
            }
        }
        Rhs { n, k, kd, with_sens, deriv_scale }
    }

    pub(crate) fn dim(&self) -> usize {
        if self.with_sens {
            2 * self.n + 1
        } else {
            self.n + 1
        }
    }

    fn eval(&self, s: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mu = &s[..n];
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut outflow = 0.0;
        for x in 0..n {
            let row = &self.k[x * n..(x + 1) * n];
            // loss against every partner
            let loss: f64 = row.iter().zip(mu).map(|(k, m)| k * m).sum();
            out[x] -= mu[x] * loss;
            // gain: unordered pairs (y, x - y) summing to mass x + 1
            let mass = x + 1;
            let mut gain = 0.0;
            for y in 1..mass {
                gain += self.k[(y - 1) * n + (mass - y - 1)] * mu[y - 1] * mu[mass - y - 1];
            }
            out[x] += 0.5 * gain;
            // half of the ordered pairs overflowing past x_max
            for y in (n - x - 1)..n {
                outflow += (mass + y + 1) as f64 * row[y] * mu[x] * mu[y];
            }
        }
        out[self.dim() - 1] = 0.5 * outflow;
        if !self.with_sens {
            return;
        }
        let sg = &s[n..2 * n];
        for x in 0..n {
            let row = &self.k[x * n..(x + 1) * n];
            let drow = &self.kd[x * n..(x + 1) * n];
            let mut loss_d = 0.0;
            let mut loss_k_mu = 0.0;
            let mut loss_k_sg = 0.0;
            for y in 0..n {
                loss_d += drow[y] * mu[y];
                loss_k_mu += row[y] * mu[y];
                loss_k_sg += row[y] * sg[y];
            }
            let mass = x + 1;
            let mut gain_d = 0.0;
            let mut gain_k = 0.0;
            for y in 1..mass {
                let (a, b) = (y - 1, mass - y - 1);
                gain_d += self.kd[a * n + b] * mu[a] * mu[b];
                gain_k += self.k[a * n + b] * sg[a] * mu[b];
            }
            out[n + x] = self.deriv_scale * (0.5 * gain_d - mu[x] * loss_d) + gain_k
                - sg[x] * loss_k_mu
                - mu[x] * loss_k_sg;
        }
    }
}

fn rk4_step(rhs: &Rhs, y: &mut [f64], h: f64, buf: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = buf;
    rhs.eval(y, k1);
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs.eval(tmp, k2);
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs.eval(tmp, k3);
    for i in 0..y.len() {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs.eval(tmp, k4);
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrate with steps of at most `h`, landing exactly on every grid time.
pub(crate) fn integrate_fixed(rhs: &Rhs, y0: &[f64], times: &[f64], h: f64) -> Vec<Vec<f64>> {
    let dim = rhs.dim();
    let mut buf: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / h - 1e-9).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            for _ in 0..steps {
                rk4_step(rhs, &mut y, dt, &mut buf);
            }
        }
        t = target;
        out.push(y.clone());
    }
    out
}

fn check_inputs(x_max: usize, t_grid: &[f64], mu0: &[f64]) -> Result<()> {
    if x_max < 2 {
        return Err(Error::Domain("x_max must be at least 2".into()));
    }
    if mu0.len() > x_max {
        return Err(Error::Domain("initial condition extends past x_max".into()));
    }
    if mu0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Domain("initial densities must be finite and non-negative".into()));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || t_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("time grid must be sorted and non-negative".into()));
    }
    Ok(())
}

fn solve(kernel: &KernelFamily, x_max: usize, t_grid: &[f64], mu0: &[f64], with_sens: bool) -> Result<OracleSolution> {
    check_inputs(x_max, t_grid, mu0)?;
    let rhs = Rhs::new(kernel, x_max, with_sens, 1.0);
    let mut y0 = vec![0.0; rhs.dim()];
    y0[..mu0.len()].copy_from_slice(mu0);

    let mut h = INITIAL_STEP;
    let mut coarse = integrate_fixed(&rhs, &y0, t_grid, h);
    loop {
        let fine = integrate_fixed(&rhs, &y0, t_grid, h / 2.0);
        // outflow is a bookkeeping component, not checked
        let width = rhs.dim() - 1;
        let change = coarse
            .iter()
            .zip(&fine)
            .flat_map(|(a, b)| a[..width].iter().zip(&b[..width]).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        h /= 2.0;
        if change < STEP_TOLERANCE {
            return Ok(package(kernel, x_max, t_grid, fine, with_sens, h));
        }
        if h < MIN_STEP {
            return Err(Error::StepSize { step: h, last_change: change });
        }
        coarse = fine;
    }
}

fn package(
    kernel: &KernelFamily,
    x_max: usize,
    times: &[f64],
    raw: Vec<Vec<f64>>,
    with_sens: bool,
    step: f64,
) -> OracleSolution {
    let states = raw
        .into_iter()
        .map(|y| TruncatedSystem {
            x_max,
            kernel: *kernel,
            densities: y[..x_max].to_vec(),
            sens: if with_sens { y[x_max..2 * x_max].to_vec() } else { Vec::new() },
            outflow: y[y.len() - 1],
        })
        .collect();
    OracleSolution {
        times: times.to_vec(),
        states,
        step,
    }
}

/// Densities of the truncated Smoluchowski system at each grid time.
/// `mu0[i]` is the initial density of mass `i + 1`.
pub fn solve_smoluchowski(kernel: &KernelFamily, x_max: usize, t_grid: &[f64], mu0: &[f64]) -> Result<OracleSolution> {
    solve(kernel, x_max, t_grid, mu0, false)
}

/// Densities and parameter sensitivities, with `σ₀ = 0`.
pub fn solve_sensitivity(kernel: &KernelFamily, x_max: usize, t_grid: &[f64], mu0: &[f64]) -> Result<OracleSolution> {
    solve(kernel, x_max, t_grid, mu0, true)
}

/// `ln` of the closed-form additive density, or `None` where it is zero.
fn additive_ln(t: f64, k: u64) -> Option<f64> {
    let tt = -(-t).exp_m1();
    if tt == 0.0 {
        return (k == 1).then_some(0.0);
    }
    let kf = k as f64;
    Some(-t + (kf - 1.0) * (kf * tt).ln() - kf * tt - libm::lgamma(kf + 1.0))
}

/// Density of mass `k` at time `t` for the additive kernel with `λ = 1`
/// from unit monomers: `e^{−t} (kT)^{k−1} e^{−kT} / k!`, `T = 1 − e^{−t}`.
pub fn additive_analytic(t: f64, k: u64) -> Result<f64> {
    if k < 1 || !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("additive_analytic needs k ≥ 1, t ≥ 0 (got k={k}, t={t})")));
    }
    Ok(additive_ln(t, k).map_or(0.0, f64::exp))
}

/// Sensitivity to `λ` at `λ = 1` of the closed form. Since `μ^λ_t = μ^1_{λt}`
/// this is `t · ∂_t μ_t(k)`.
pub fn additive_analytic_sensitivity(t: f64, k: u64) -> Result<f64> {
    let mu = additive_analytic(t, k)?;
    if t == 0.0 || mu == 0.0 {
        return Ok(0.0);
    }
    let tt = -(-t).exp_m1();
    let kf = k as f64;
    let dlog = -1.0 + (-t).exp() * ((kf - 1.0) / tt - kf);
    Ok(t * mu * dlog)
}

/// Closed-form sensitivity over masses `1..=k_max`.
pub fn additive_sensitivity_estimate(t: f64, k_max: u64) -> SensitivityEstimate {
    (1..=k_max)
        .map(|k| (k, additive_analytic_sensitivity(t, k).expect("valid arguments")))
        .collect()
}

/// Monodisperse unit initial condition.
pub fn monodisperse() -> Vec<f64> {
    vec![1.0]
}
