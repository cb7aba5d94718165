//! Marcus-Lushnikov simulation of `μ` alone, and the central-difference
//! sensitivity estimator built from two such processes at `λ ± δλ/2`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::exact_driver::{EventCounters, RunOutput, SimConfig, Snapshot};
use crate::kernel::{majorant_value, EventClass, Feature, KernelFamily, MajorantComponent};
use crate::proposal::{component_rate, pick, resolve, Resolved};
use crate::rng::{exponential, stream_rng, tagged_stream};
use crate::stats::SensitivityEstimate;
use crate::weighted_index_tree::{Handle, WeightedIndexTree};

/// Particle-level Marcus-Lushnikov chain. Draws the same uniforms, in the
/// same order, as the type-0 branch of the triple chain.
pub struct MlChain {
    kernel: KernelFamily,
    mu: Ensemble,
    main: Vec<MajorantComponent>,
    comps: Vec<Resolved>,
    rates: Vec<f64>,
    scale_n: usize,
    clock: f64,
    counters: EventCounters,
}

impl MlChain {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let main = config.kernel.majorant_components(EventClass::Main);
        let features: Vec<Feature> = main.iter().flat_map(|c| [c.f, c.g]).collect();
        let mut mu = Ensemble::new(&features);
        for m in config.initial_masses() {
            mu.add_particle(m)?;
        }
        let comps = resolve(&main, &mu, &mu);
        Ok(MlChain {
            kernel: config.kernel,
            mu,
            main,
            comps,
            rates: Vec::new(),
            scale_n: config.n_particles,
            clock: 0.0,
            counters: EventCounters::default(),
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.mu
    }

    fn refresh_rates(&mut self) -> f64 {
        let inv_n = 1.0 / self.scale_n as f64;
        self.rates.clear();
        if self.mu.len() >= 2 {
            let mu = &self.mu;
            self.rates.extend(
                self.comps
                    .iter()
                    .map(|c| component_rate(c.comp.coef, mu.feature_total(c.f), mu.feature_total(c.g), true, inv_n)),
            );
        }
        self.rates.iter().sum()
    }

    fn fire<R: Rng + ?Sized>(&mut self, total: f64, rng: &mut R) -> Result<()> {
        let _u_class: f64 = rng.random();
        let u_beta: f64 = rng.random();
        let c = self.comps[pick(&self.rates, u_beta * total)];
        let (i, x) = self.mu.sample_by_feature(c.f, rng.random())?;
        let (j, y) = self.mu.sample_by_feature(c.g, rng.random())?;
        if i == j {
            self.counters.rejections += 1;
            return Ok(());
        }
        let u_acc: f64 = rng.random();
        if u_acc * majorant_value(&self.main, x, y) < self.kernel.rate(x, y) {
            self.mu.remove_particle(i)?;
            self.mu.remove_particle(j)?;
            self.mu.add_particle(x + y)?;
            self.counters.type0 += 1;
        } else {
            self.counters.rejections += 1;
        }
        Ok(())
    }

    fn snapshot(&self, time: f64) -> Snapshot {
        Snapshot {
            time,
            scale_n: self.scale_n,
            weight: 1.0,
            mu: self.mu.histogram(),
            sig_plus: BTreeMap::new(),
            sig_minus: BTreeMap::new(),
            counters: self.counters,
        }
    }

    pub fn run<R: Rng + ?Sized>(&mut self, t_end: f64, output_times: &[f64], rng: &mut R) -> Result<RunOutput> {
        let mut snapshots = Vec::with_capacity(output_times.len());
        let mut next = 0;
        let mut absorbed = false;
        loop {
            let total = self.refresh_rates();
            if total <= 0.0 {
                absorbed = true;
                break;
            }
            let t_new = self.clock + exponential(rng, total);
            while next < output_times.len() && output_times[next] < t_new {
                snapshots.push(self.snapshot(output_times[next]));
                next += 1;
            }
            if t_new > t_end {
                self.clock = t_end;
                break;
            }
            self.clock = t_new;
            self.fire(total, rng)?;
        }
        for &t in &output_times[next..] {
            snapshots.push(self.snapshot(t));
        }
        Ok(RunOutput {
            snapshots,
            counters: self.counters,
            absorbed,
        })
    }
}

/// Marcus-Lushnikov replication; snapshots carry empty sensitivity ensembles.
pub fn run_ml(config: &SimConfig) -> Result<RunOutput> {
    let mut rng = stream_rng(config.seed, config.run_index);
    MlChain::new(config)?.run(config.t_end, &config.output_times, &mut rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdCoupling {
    /// One uniform stream drives both processes against a common majorant.
    Shared,
    /// Two independent streams.
    Independent,
}

impl fmt::Display for CdCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CdCoupling::Shared => "shared",
            CdCoupling::Independent => "independent",
        })
    }
}

impl FromStr for CdCoupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(CdCoupling::Shared),
            "independent" => Ok(CdCoupling::Independent),
            other => Err(Error::config("cd_coupling", format!("unknown coupling '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CdConfig {
    /// Supplies the centre parameter, N, times and seeds; the algorithm and
    /// resampling fields are ignored.
    pub sim: SimConfig,
    pub delta_lambda: f64,
    pub coupling: CdCoupling,
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if !(self.delta_lambda.is_finite() && self.delta_lambda > 0.0) {
            return Err(Error::config("delta_lambda", "must be positive"));
        }
        self.kernels().map(|_| ())
    }

    /// Kernels at `λ − δλ/2` and `λ + δλ/2`.
    pub fn kernels(&self) -> Result<(KernelFamily, KernelFamily)> {
        let k = self.sim.kernel;
        let half = 0.5 * self.delta_lambda;
        let wrap = |e: Error| Error::config("delta_lambda", format!("λ ± δλ/2 out of range: {e}"));
        Ok((
            k.with_lambda(k.lambda() - half).map_err(wrap)?,
            k.with_lambda(k.lambda() + half).map_err(wrap)?,
        ))
    }
}

#[derive(Clone, Debug)]
pub struct CdSnapshot {
    pub time: f64,
    pub scale_n: usize,
    pub delta_lambda: f64,
    pub minus: BTreeMap<u64, u64>,
    pub plus: BTreeMap<u64, u64>,
}

impl CdSnapshot {
    /// `(histogram⁺ − histogram⁻) / (N δλ)`.
    pub fn sensitivity(&self) -> SensitivityEstimate {
        let scale = 1.0 / (self.scale_n as f64 * self.delta_lambda);
        crate::exact_driver::signed_estimate(&self.plus, &self.minus, scale)
    }

    /// Mean of the two processes' densities.
    pub fn mu_density(&self) -> BTreeMap<u64, f64> {
        let scale = 0.5 / self.scale_n as f64;
        let mut out = BTreeMap::new();
        for (&m, &c) in self.minus.iter().chain(&self.plus) {
            *out.entry(m).or_insert(0.0) += c as f64 * scale;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CdOutput {
    pub snapshots: Vec<CdSnapshot>,
    pub counters: [EventCounters; 2],
}

pub fn run_cd(config: &CdConfig) -> Result<CdOutput> {
    config.validate()?;
    let (lo, hi) = config.kernels()?;
    run_pair(config, lo, hi)
}

fn run_pair(config: &CdConfig, lo: KernelFamily, hi: KernelFamily) -> Result<CdOutput> {
    let sim = &config.sim;
    match config.coupling {
        CdCoupling::Independent => {
            let mut outs = Vec::with_capacity(2);
            for (tag, kernel) in [(1, lo), (2, hi)] {
                let mut cfg = sim.clone();
                cfg.kernel = kernel;
                let mut rng = tagged_stream(sim.seed, sim.run_index, tag);
                outs.push(MlChain::new(&cfg)?.run(sim.t_end, &sim.output_times, &mut rng)?);
            }
            let (b, a) = (outs.pop().unwrap(), outs.pop().unwrap());
            let snapshots = a
                .snapshots
                .into_iter()
                .zip(b.snapshots)
                .map(|(m, p)| CdSnapshot {
                    time: m.time,
                    scale_n: sim.n_particles,
                    delta_lambda: config.delta_lambda,
                    minus: m.mu,
                    plus: p.mu,
                })
                .collect();
            Ok(CdOutput {
                snapshots,
                counters: [a.counters, b.counters],
            })
        }
        CdCoupling::Shared => {
            let mut rng = stream_rng(sim.seed, sim.run_index);
            SharedPair::new(sim, lo, hi)?.run(config.delta_lambda, &mut rng)
        }
    }
}

/// Mass-binned Marcus-Lushnikov state: one sum-tree leaf per mass value,
/// weighted by `count · feature(mass)`.
struct Binned {
    kernel: KernelFamily,
    counts: Vec<u64>,
    values: Vec<Vec<f64>>,
    trees: Vec<WeightedIndexTree>,
    handles: Vec<Handle>,
    live: u64,
    counters: EventCounters,
}

impl Binned {
    fn new(kernel: KernelFamily, features: &[Feature], initial: &[u64]) -> Result<Self> {
        let max_mass: u64 = initial.iter().sum();
        let values: Vec<Vec<f64>> = features
            .iter()
            .map(|f| (0..=max_mass).map(|m| if m == 0 { 0.0 } else { f.eval(m) }).collect())
            .collect();
        let mut trees: Vec<WeightedIndexTree> = features
            .iter()
            .map(|_| WeightedIndexTree::with_capacity(max_mass as usize))
            .collect();
        let mut handles = Vec::with_capacity(max_mass as usize);
        for _ in 1..=max_mass {
            let h = trees[0].insert(0.0)?;
            for t in &mut trees[1..] {
                let other = t.insert(0.0)?;
                debug_assert_eq!(other, h);
            }
            handles.push(h);
        }
        let mut b = Binned {
            kernel,
            counts: vec![0; max_mass as usize + 1],
            values,
            trees,
            handles,
            live: 0,
            counters: EventCounters::default(),
        };
        for &m in initial {
            b.shift(m, 1)?;
        }
        Ok(b)
    }

    fn shift(&mut self, mass: u64, delta: i64) -> Result<()> {
        let m = mass as usize;
        self.counts[m] = self.counts[m].checked_add_signed(delta).expect("count underflow");
        self.live = self.live.checked_add_signed(delta).expect("count underflow");
        let c = self.counts[m] as f64;
        let h = self.handles[m - 1];
        for (t, v) in self.trees.iter_mut().zip(&self.values) {
            t.update(h, c * v[m])?;
        }
        Ok(())
    }

    fn rates(&self, comps: &[(f64, usize, usize)], inv_n: f64, out: &mut Vec<f64>) -> f64 {
        out.clear();
        if self.live >= 2 {
            out.extend(
                comps
                    .iter()
                    .map(|&(coef, f, g)| component_rate(coef, self.trees[f].total(), self.trees[g].total(), true, inv_n)),
            );
        }
        out.iter().sum()
    }

    fn sample(&self, fid: usize, u: f64) -> Result<u64> {
        Ok(self.trees[fid].sample(u)?.slot() as u64 + 1)
    }

    fn histogram(&self) -> BTreeMap<u64, u64> {
        self.counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(m, &c)| (m as u64, c))
            .collect()
    }
}

/// Two binned processes driven by one uniform stream against a majorant
/// that dominates both kernels.
struct SharedPair {
    procs: [Binned; 2],
    main: Vec<MajorantComponent>,
    comps: Vec<(f64, usize, usize)>,
    scale_n: usize,
    t_end: f64,
    output_times: Vec<f64>,
}

impl SharedPair {
    fn new(sim: &SimConfig, lo: KernelFamily, hi: KernelFamily) -> Result<Self> {
        let common = lo.with_lambda(lo.dominating_lambda(lo.lambda(), hi.lambda()))?;
        let main = common.majorant_components(EventClass::Main);
        let mut features: Vec<Feature> = Vec::new();
        for c in &main {
            for f in [c.f, c.g] {
                if !features.contains(&f) {
                    features.push(f);
                }
            }
        }
        let fid = |f: &Feature| features.iter().position(|g| g == f).unwrap();
        let comps = main.iter().map(|c| (c.coef, fid(&c.f), fid(&c.g))).collect();
        let initial = sim.initial_masses();
        Ok(SharedPair {
            procs: [Binned::new(lo, &features, &initial)?, Binned::new(hi, &features, &initial)?],
            main,
            comps,
            scale_n: sim.n_particles,
            t_end: sim.t_end,
            output_times: sim.output_times.clone(),
        })
    }

    fn snapshot(&self, time: f64, delta_lambda: f64) -> CdSnapshot {
        CdSnapshot {
            time,
            scale_n: self.scale_n,
            delta_lambda,
            minus: self.procs[0].histogram(),
            plus: self.procs[1].histogram(),
        }
    }

    fn run<R: Rng + ?Sized>(mut self, delta_lambda: f64, rng: &mut R) -> Result<CdOutput> {
        let inv_n = 1.0 / self.scale_n as f64;
        let mut rates = [Vec::new(), Vec::new()];
        let mut snapshots = Vec::with_capacity(self.output_times.len());
        let mut next = 0;
        let mut clock = 0.0;
        loop {
            let totals = [
                self.procs[0].rates(&self.comps, inv_n, &mut rates[0]),
                self.procs[1].rates(&self.comps, inv_n, &mut rates[1]),
            ];
            let total = totals[0].max(totals[1]);
            if total <= 0.0 {
                break;
            }
            let t_new = clock + exponential(rng, total);
            while next < self.output_times.len() && self.output_times[next] < t_new {
                snapshots.push(self.snapshot(self.output_times[next], delta_lambda));
                next += 1;
            }
            if t_new > self.t_end {
                break;
            }
            clock = t_new;
            let u: [f64; 6] = std::array::from_fn(|_| rng.random());
            let [u_prop, u_beta, u_i, u_j, u_same, u_acc] = u;
            for p in 0..2 {
                if u_prop * total >= totals[p] {
                    continue;
                }
                let (_, f, g) = self.comps[pick(&rates[p], u_beta * totals[p])];
                let proc = &mut self.procs[p];
                let x = proc.sample(f, u_i)?;
                let y = proc.sample(g, u_j)?;
                // both draws hit the same particle with probability 1/count
                if x == y && u_same * (proc.counts[x as usize] as f64) < 1.0 {
                    proc.counters.rejections += 1;
                    continue;
                }
                if u_acc * majorant_value(&self.main, x, y) < proc.kernel.rate(x, y) {
                    proc.shift(x, -1)?;
                    proc.shift(y, -1)?;
                    proc.shift(x + y, 1)?;
                    proc.counters.type0 += 1;
                } else {
                    proc.counters.rejections += 1;
                }
            }
        }
        for i in next..self.output_times.len() {
            snapshots.push(self.snapshot(self.output_times[i], delta_lambda));
        }
        Ok(CdOutput {
            snapshots,
            counters: [self.procs[0].counters, self.procs[1].counters],
        })
    }
}
