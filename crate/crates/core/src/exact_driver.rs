//! The triple-ensemble chain `μ ⊕ σ⁺ ⊕ σ⁻` whose last two components carry
//! a particle representation of the sensitivity `∂_λ μ_t`.
//!
//! Events are proposed from separable majorants and thinned. Uniforms are
//! consumed per step in this order: holding time, event class, majorant
//! component, first particle, second particle, opposite partner (coupled
//! type-2 steps only), acceptance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::ensemble::{Ensemble, ParticleId};
use crate::error::{Error, Result};
use crate::kernel::{majorant_value, EventClass, Feature, KernelFamily, MajorantComponent};
use crate::proposal::{component_rate, pick, resolve, Resolved};
use crate::rng::{exponential, stream_rng};
use crate::stats::SensitivityEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Cancellation, type-2 coupling and resampling.
    ExactCoupling,
    /// Plain thinning of the raw chain.
    ExactIndep,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::ExactCoupling => "exact_coupling",
            Algorithm::ExactIndep => "exact_indep",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_coupling" => Ok(Algorithm::ExactCoupling),
            "exact_indep" => Ok(Algorithm::ExactIndep),
            other => Err(Error::config("mode", format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventType {
    Type0,
    Type1Plus,
    Type1Minus,
    Type2Plus,
    Type2Minus,
}

impl EventType {
    pub const ALL: [EventType; 5] = [
        EventType::Type0,
        EventType::Type1Plus,
        EventType::Type1Minus,
        EventType::Type2Plus,
        EventType::Type2Minus,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EventCounters {
    pub type0: u64,
    pub type1_plus: u64,
    pub type1_minus: u64,
    pub type2_plus: u64,
    pub type2_minus: u64,
    /// Type-2 steps where both sides jumped together.
    pub coupled: u64,
    pub rejections: u64,
    /// Particles removed from each side by cancellation.
    pub cancellations: u64,
    pub resamples: u64,
}

impl EventCounters {
    fn record(&mut self, event: EventType) {
        match event {
            EventType::Type0 => self.type0 += 1,
            EventType::Type1Plus => self.type1_plus += 1,
            EventType::Type1Minus => self.type1_minus += 1,
            EventType::Type2Plus => self.type2_plus += 1,
            EventType::Type2Minus => self.type2_minus += 1,
        }
    }

    pub fn accepted(&self) -> u64 {
        self.type0 + self.type1_plus + self.type1_minus + self.type2_plus + self.type2_minus + self.coupled
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub kernel: KernelFamily,
    pub algorithm: Algorithm,
    pub n_particles: usize,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    /// `None` disables resampling.
    pub resample_max: Option<usize>,
    pub resample_target: usize,
    pub seed: u64,
    pub run_index: u64,
    /// Initial μ particle masses; `None` means `n_particles` unit masses.
    pub initial: Option<Vec<u64>>,
}

impl SimConfig {
    /// Monodisperse start, output at `t_end` only, default resampling
    /// `M = 2N`, `m = N`.
    pub fn new(kernel: KernelFamily, algorithm: Algorithm, n_particles: usize, t_end: f64) -> Self {
        SimConfig {
            kernel,
            algorithm,
            n_particles,
            t_end,
            output_times: vec![t_end],
            resample_max: Some(2 * n_particles),
            resample_target: n_particles,
            seed: 0,
            run_index: 0,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::config("n_particles", "must be at least 1"));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::config("t_end", "must be finite and non-negative"));
        }
        if !self.output_times.is_sorted_by(|a, b| a <= b) {
            return Err(Error::config("output_times", "must be sorted"));
        }
        if self
            .output_times
            .iter()
            .any(|&t| !(t >= 0.0 && t <= self.t_end))
        {
            return Err(Error::config("output_times", "must lie in [0, t_end]"));
        }
        if let Some(m_max) = self.resample_max {
            if self.resample_target == 0 || self.resample_target > m_max {
                return Err(Error::config(
                    "resample_target",
                    "resample_target must satisfy 0 < m ≤ M",
                ));
            }
        }
        if let Some(init) = &self.initial {
            if init.len() != self.n_particles {
                return Err(Error::config(
                    "initial",
                    format!("expected {} particles, got {}", self.n_particles, init.len()),
                ));
            }
            if init.contains(&0) {
                return Err(Error::config("initial", "particle masses must be at least 1"));
            }
        }
        Ok(())
    }

    pub(crate) fn initial_masses(&self) -> Vec<u64> {
        self.initial
            .clone()
            .unwrap_or_else(|| vec![1; self.n_particles])
    }
}

#[derive(Clone, Debug)]
pub struct TripleState {
    pub mu: Ensemble,
    pub sig_plus: Ensemble,
    pub sig_minus: Ensemble,
    pub weight: f64,
    pub scale_n: usize,
    pub clock: f64,
    pub counters: EventCounters,
}

impl TripleState {
    /// `w · (c⁺(i) − c⁻(i)) / N`, keeping masses with a nonzero difference.
    pub fn sensitivity(&self) -> SensitivityEstimate {
        signed_estimate(
            &self.sig_plus.histogram(),
            &self.sig_minus.histogram(),
            self.weight / self.scale_n as f64,
        )
    }
}

pub(crate) fn signed_estimate(
    plus: &BTreeMap<u64, u64>,
    minus: &BTreeMap<u64, u64>,
    scale: f64,
) -> SensitivityEstimate {
    let mut out = BTreeMap::new();
    for (&m, &c) in plus {
        out.insert(m, c as i64);
    }
    for (&m, &c) in minus {
        *out.entry(m).or_insert(0) -= c as i64;
    }
    SensitivityEstimate(
        out.into_iter()
            .filter(|&(_, d)| d != 0)
            .map(|(m, d)| (m, scale * d as f64))
            .collect(),
    )
}

/// Per-component proposal rates of the five event classes, already scaled
/// by `1/N` (and by `1/2` for classes drawing both particles from μ).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassRates {
    pub components: [Vec<f64>; 5],
    pub classes: [f64; 5],
    pub total: f64,
}

impl ClassRates {
    pub fn class(&self, event: EventType) -> f64 {
        self.classes[event.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Absorbed,
    Rejected,
    Jump(EventType),
    Coupled,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub time: f64,
    pub scale_n: usize,
    pub weight: f64,
    pub mu: BTreeMap<u64, u64>,
    pub sig_plus: BTreeMap<u64, u64>,
    pub sig_minus: BTreeMap<u64, u64>,
    pub counters: EventCounters,
}

impl Snapshot {
    fn capture(time: f64, state: &TripleState) -> Self {
        Snapshot {
            time,
            scale_n: state.scale_n,
            weight: state.weight,
            mu: state.mu.histogram(),
            sig_plus: state.sig_plus.histogram(),
            sig_minus: state.sig_minus.histogram(),
            counters: state.counters,
        }
    }

    pub fn mu_density(&self) -> BTreeMap<u64, f64> {
        let n = self.scale_n as f64;
        self.mu.iter().map(|(&m, &c)| (m, c as f64 / n)).collect()
    }

    pub fn sensitivity(&self) -> SensitivityEstimate {
        signed_estimate(&self.sig_plus, &self.sig_minus, self.weight / self.scale_n as f64)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub counters: EventCounters,
    pub absorbed: bool,
}

type Drawn = (ParticleId, u64);

/// Acceptance thresholds `(p₊, p₋)` of a coupled type-2 proposal.
///
/// `r_plus`, `r_minus` are the g-feature totals of the two sensitivity
/// ensembles and `accept_*` the ratio `K/K̂` at each side's candidate pair.
pub fn coupling_thresholds(r_plus: f64, r_minus: f64, accept_plus: f64, accept_minus: f64) -> (f64, f64) {
    let r = r_plus + r_minus;
    if r <= 0.0 {
        return (0.0, 0.0);
    }
    (r_plus / r * accept_plus, r_minus / r * accept_minus)
}

pub struct TripleChain {
    kernel: KernelFamily,
    algorithm: Algorithm,
    state: TripleState,
    main: Vec<MajorantComponent>,
    deriv: Vec<MajorantComponent>,
    type0: Vec<Resolved>,
    type1: [Vec<Resolved>; 2],
    // f over μ, g over σ±; both σ ensembles share one feature layout
    type2: Vec<Resolved>,
    resample: Option<(usize, usize)>,
    derivative_events: bool,
    rates: ClassRates,
}

impl TripleChain {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let kernel = config.kernel;
        let main = kernel.majorant_components(EventClass::Main);
        let pos = kernel.majorant_components(EventClass::DerivPos);
        let neg = kernel.majorant_components(EventClass::DerivNeg);

        let mut mu_features: Vec<Feature> = Vec::new();
        for c in main.iter().chain(&pos).chain(&neg) {
            mu_features.push(c.f);
            mu_features.push(c.g);
        }
        let sig_features: Vec<Feature> = main.iter().map(|c| c.g).collect();

        let mut mu = Ensemble::new(&mu_features);
        for m in config.initial_masses() {
            mu.add_particle(m)?;
        }
        let sig_plus = Ensemble::new(&sig_features);
        let sig_minus = Ensemble::new(&sig_features);

        let type0 = resolve(&main, &mu, &mu);
        let type1 = [resolve(&pos, &mu, &mu), resolve(&neg, &mu, &mu)];
        let type2 = resolve(&main, &mu, &sig_plus);
        let mut deriv = pos;
        deriv.extend(neg);

        let resample = match config.algorithm {
            Algorithm::ExactCoupling => config.resample_max.map(|m| (m, config.resample_target)),
            Algorithm::ExactIndep => None,
        };

        Ok(TripleChain {
            kernel,
            algorithm: config.algorithm,
            state: TripleState {
                mu,
                sig_plus,
                sig_minus,
                weight: 1.0,
                scale_n: config.n_particles,
                clock: 0.0,
                counters: EventCounters::default(),
            },
            main,
            deriv,
            type0,
            type1,
            type2,
            resample,
            derivative_events: true,
            rates: ClassRates::default(),
        })
    }

    pub fn state(&self) -> &TripleState {
        &self.state
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Switch off type-1 proposals. With empty σ± the chain then reduces to
    /// the plain Marcus-Lushnikov process.
    pub fn set_derivative_events(&mut self, enabled: bool) {
        self.derivative_events = enabled;
    }

    /// Replace the sensitivity ensembles and weight.
    pub fn set_sensitivity_state(&mut self, plus: &[u64], minus: &[u64], weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight(weight));
        }
        self.state.sig_plus.clear();
        self.state.sig_minus.clear();
        for &m in plus {
            self.state.sig_plus.add_particle(m)?;
        }
        for &m in minus {
            self.state.sig_minus.add_particle(m)?;
        }
        self.state.weight = weight;
        Ok(())
    }

    pub fn total_majorant_rate(&self) -> ClassRates {
        let mut rates = ClassRates::default();
        self.compute_rates(&mut rates);
        rates
    }

    fn compute_rates(&self, out: &mut ClassRates) {
        let s = &self.state;
        let inv_n = 1.0 / s.scale_n as f64;
        let fill = |dst: &mut Vec<f64>, comps: &[Resolved], g_src: &Ensemble, half: bool| {
            dst.clear();
            dst.extend(comps.iter().map(|c| {
                component_rate(c.comp.coef, s.mu.feature_total(c.f), g_src.feature_total(c.g), half, inv_n)
            }));
        };
        let [c0, c1p, c1m, c2p, c2m] = &mut out.components;
        // a lone μ-particle has no partner; without this the chain never absorbs
        let pairs = s.mu.len() >= 2;
        if pairs {
            fill(c0, &self.type0, &s.mu, true);
        } else {
            c0.clear();
        }
        if self.derivative_events && pairs {
            fill(c1p, &self.type1[0], &s.mu, true);
            fill(c1m, &self.type1[1], &s.mu, true);
        } else {
            c1p.clear();
            c1m.clear();
        }
        fill(c2p, &self.type2, &s.sig_plus, false);
        fill(c2m, &self.type2, &s.sig_minus, false);
        for (k, comps) in out.components.iter().enumerate() {
            out.classes[k] = comps.iter().sum();
        }
        out.total = out.classes.iter().sum();
    }

    /// One holding time plus one proposal. Returns the holding time drawn
    /// (infinite on absorption) and what happened.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(f64, Outcome)> {
        let mut rates = std::mem::take(&mut self.rates);
        self.compute_rates(&mut rates);
        let result = if rates.total > 0.0 {
            let dt = exponential(rng, rates.total);
            self.state.clock += dt;
            self.fire(&rates, rng).map(|o| (dt, o))
        } else {
            Ok((f64::INFINITY, Outcome::Absorbed))
        };
        self.rates = rates;
        result
    }

    /// Simulate to `t_end`, snapshotting at each output time.
    pub fn run<R: Rng + ?Sized>(&mut self, t_end: f64, output_times: &[f64], rng: &mut R) -> Result<RunOutput> {
        let mut snapshots = Vec::with_capacity(output_times.len());
        let mut next = 0;
        let mut rates = std::mem::take(&mut self.rates);
        let mut absorbed = false;
        loop {
            self.compute_rates(&mut rates);
            if rates.total <= 0.0 {
                absorbed = true;
                break;
            }
            let t_new = self.state.clock + exponential(rng, rates.total);
            while next < output_times.len() && output_times[next] < t_new {
                snapshots.push(Snapshot::capture(output_times[next], &self.state));
                next += 1;
            }
            if t_new > t_end {
                self.state.clock = t_end;
                break;
            }
            self.state.clock = t_new;
            self.fire(&rates, rng)?;
        }
        self.rates = rates;
        for &t in &output_times[next..] {
            snapshots.push(Snapshot::capture(t, &self.state));
        }
        Ok(RunOutput {
            snapshots,
            counters: self.state.counters,
            absorbed,
        })
    }

    fn fire<R: Rng + ?Sized>(&mut self, rates: &ClassRates, rng: &mut R) -> Result<Outcome> {
        let u_class: f64 = rng.random();
        let u_beta: f64 = rng.random();
        let alpha = pick(&rates.classes, u_class * rates.total);
        let beta = pick(&rates.components[alpha], u_beta * rates.classes[alpha]);
        let outcome = match EventType::ALL[alpha] {
            EventType::Type0 => self.propose_type0(beta, rng)?,
            EventType::Type1Plus => self.propose_type1(0, beta, rng)?,
            EventType::Type1Minus => self.propose_type1(1, beta, rng)?,
            EventType::Type2Plus => self.propose_type2(true, beta, rng)?,
            EventType::Type2Minus => self.propose_type2(false, beta, rng)?,
        };
        match outcome {
            Outcome::Rejected => self.state.counters.rejections += 1,
            Outcome::Jump(e) => self.state.counters.record(e),
            Outcome::Coupled => self.state.counters.coupled += 1,
            Outcome::Absorbed => {}
        }
        if !matches!(outcome, Outcome::Rejected) {
            self.maybe_resample(rng);
        }
        Ok(outcome)
    }

    fn draw_mu_pair<R: Rng + ?Sized>(
        &self,
        c: &Resolved,
        rng: &mut R,
    ) -> Result<Option<(Drawn, Drawn)>> {
        let first = self.state.mu.sample_by_feature(c.f, rng.random())?;
        let second = self.state.mu.sample_by_feature(c.g, rng.random())?;
        Ok((first.0 != second.0).then_some((first, second)))
    }

    fn propose_type0<R: Rng + ?Sized>(&mut self, beta: usize, rng: &mut R) -> Result<Outcome> {
        let c = self.type0[beta];
        let Some(((i, x), (j, y))) = self.draw_mu_pair(&c, rng)? else {
            return Ok(Outcome::Rejected);
        };
        let u_acc: f64 = rng.random();
        if u_acc * majorant_value(&self.main, x, y) < self.kernel.rate(x, y) {
            self.apply_jump(EventType::Type0, i, j)?;
            Ok(Outcome::Jump(EventType::Type0))
        } else {
            Ok(Outcome::Rejected)
        }
    }

    fn propose_type1<R: Rng + ?Sized>(&mut self, side: usize, beta: usize, rng: &mut R) -> Result<Outcome> {
        let c = self.type1[side][beta];
        let Some(((i, x), (j, y))) = self.draw_mu_pair(&c, rng)? else {
            return Ok(Outcome::Rejected);
        };
        let u_acc: f64 = rng.random();
        let d = self.kernel.deriv(x, y);
        // pooled over both sign classes; particles inserted now carry weight w
        let bound = majorant_value(&self.deriv, x, y) * self.state.weight;
        if u_acc * bound < d.abs() {
            let event = if d > 0.0 { EventType::Type1Plus } else { EventType::Type1Minus };
            self.apply_jump(event, i, j)?;
            Ok(Outcome::Jump(event))
        } else {
            Ok(Outcome::Rejected)
        }
    }

    fn propose_type2<R: Rng + ?Sized>(&mut self, plus: bool, beta: usize, rng: &mut R) -> Result<Outcome> {
        let c = self.type2[beta];
        let (i, x) = self.state.mu.sample_by_feature(c.f, rng.random())?;
        let side = if plus { &self.state.sig_plus } else { &self.state.sig_minus };
        let (k, y) = side.sample_by_feature(c.g, rng.random())?;
        let event = if plus { EventType::Type2Plus } else { EventType::Type2Minus };
        match self.algorithm {
            Algorithm::ExactIndep => {
                let u_acc: f64 = rng.random();
                if u_acc * majorant_value(&self.main, x, y) < self.kernel.rate(x, y) {
                    self.apply_jump(event, i, k)?;
                    Ok(Outcome::Jump(event))
                } else {
                    Ok(Outcome::Rejected)
                }
            }
            Algorithm::ExactCoupling => self.couple_type2(plus, &c, x, (k, y), rng),
        }
    }

    /// Coupled type-2 proposal around μ-particle mass `x` and the partner
    /// already drawn on the `plus` side.
    fn couple_type2<R: Rng + ?Sized>(
        &mut self,
        plus: bool,
        c: &Resolved,
        x: u64,
        primary: (ParticleId, u64),
        rng: &mut R,
    ) -> Result<Outcome> {
        let s = &self.state;
        let r_plus = s.sig_plus.feature_total(c.g);
        let r_minus = s.sig_minus.feature_total(c.g);
        let opposite_ens = if plus { &s.sig_minus } else { &s.sig_plus };
        let u_partner: f64 = rng.random();
        let opposite = if opposite_ens.feature_total(c.g) > 0.0 {
            Some(opposite_ens.sample_by_feature(c.g, u_partner)?)
        } else {
            None
        };
        let ratio = |y: u64| self.kernel.rate(x, y) / majorant_value(&self.main, x, y);
        let a_primary = ratio(primary.1);
        let a_opposite = opposite.map_or(0.0, |(_, z)| ratio(z));
        let (p_plus, p_minus) = if plus {
            coupling_thresholds(r_plus, r_minus, a_primary, a_opposite)
        } else {
            coupling_thresholds(r_plus, r_minus, a_opposite, a_primary)
        };
        let u: f64 = rng.random();
        let (lo, hi) = (p_plus.min(p_minus), p_plus.max(p_minus));
        if u < lo {
            let (k, l) = if plus {
                (primary.0, opposite.expect("positive threshold").0)
            } else {
                (opposite.expect("positive threshold").0, primary.0)
            };
            self.apply_coupled(x, k, l)?;
            Ok(Outcome::Coupled)
        } else if u < hi {
            let plus_side = p_plus > p_minus;
            let partner = if plus_side == plus { primary.0 } else { opposite.expect("positive threshold").0 };
            let event = if plus_side { EventType::Type2Plus } else { EventType::Type2Minus };
            self.apply_type2(event, x, partner)?;
            Ok(Outcome::Jump(event))
        } else {
            Ok(Outcome::Rejected)
        }
    }

    /// Apply one jump of the chain. `first` is always a μ-particle; `second`
    /// is a μ-particle for types 0 and 1 and a particle of the jumping
    /// sensitivity ensemble for type 2.
    pub fn apply_jump(&mut self, event: EventType, first: ParticleId, second: ParticleId) -> Result<()> {
        let x = self.state.mu.mass(first)?;
        match event {
            EventType::Type0 => {
                let y = self.state.mu.mass(second)?;
                self.state.mu.remove_particle(first)?;
                self.state.mu.remove_particle(second)?;
                self.state.mu.add_particle(x + y)?;
            }
            EventType::Type1Plus | EventType::Type1Minus => {
                let y = self.state.mu.mass(second)?;
                let s = &mut self.state;
                let (gain, split) = if event == EventType::Type1Plus {
                    (&mut s.sig_plus, &mut s.sig_minus)
                } else {
                    (&mut s.sig_minus, &mut s.sig_plus)
                };
                gain.add_particle(x + y)?;
                split.add_particle(x)?;
                split.add_particle(y)?;
                if self.algorithm == Algorithm::ExactCoupling {
                    self.cancel(x + y);
                    self.cancel(x);
                    self.cancel(y);
                }
            }
            EventType::Type2Plus | EventType::Type2Minus => self.apply_type2(event, x, second)?,
        }
        Ok(())
    }

    fn apply_type2(&mut self, event: EventType, x: u64, partner: ParticleId) -> Result<()> {
        let s = &mut self.state;
        let (own, other) = if event == EventType::Type2Plus {
            (&mut s.sig_plus, &mut s.sig_minus)
        } else {
            (&mut s.sig_minus, &mut s.sig_plus)
        };
        let y = own.remove_particle(partner)?;
        own.add_particle(x + y)?;
        other.add_particle(x)?;
        if self.algorithm == Algorithm::ExactCoupling {
            self.cancel(x + y);
            self.cancel(x);
        }
        Ok(())
    }

    fn apply_coupled(&mut self, x: u64, k: ParticleId, l: ParticleId) -> Result<()> {
        let y = self.state.sig_plus.remove_particle(k)?;
        let z = self.state.sig_minus.remove_particle(l)?;
        self.state.sig_plus.add_particle(x + y)?;
        self.state.sig_minus.add_particle(x + z)?;
        self.cancel(x + y);
        self.cancel(x + z);
        Ok(())
    }

    /// Remove `min(c⁺, c⁻)` particles of this mass from each side.
    pub fn cancel(&mut self, mass: u64) -> usize {
        let s = &mut self.state;
        let n = s.sig_plus.count_of_mass(mass).min(s.sig_minus.count_of_mass(mass));
        for _ in 0..n {
            s.sig_plus.remove_one_of_mass(mass).expect("counted");
            s.sig_minus.remove_one_of_mass(mass).expect("counted");
        }
        s.counters.cancellations += n as u64;
        n
    }

    /// Thin both sensitivity ensembles once either reaches `M` particles.
    pub fn maybe_resample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let Some((m_max, m_target)) = self.resample else {
            return false;
        };
        let s = &mut self.state;
        if s.sig_plus.len() < m_max && s.sig_minus.len() < m_max {
            return false;
        }
        let q = m_target as f64 / m_max as f64;
        s.sig_plus.bernoulli_thin(q, rng);
        s.sig_minus.bernoulli_thin(q, rng);
        s.weight /= q;
        s.counters.resamples += 1;
        true
    }
}

/// One replication with its own random stream.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    let mut rng = stream_rng(config.seed, config.run_index);
    let mut chain = TripleChain::new(config)?;
    chain.run(config.t_end, &config.output_times, &mut rng)
}
