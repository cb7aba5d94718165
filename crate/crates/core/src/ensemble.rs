//! A population of integer particle masses, indexed by mass and by one sum
//! tree per registered feature.
//!
//! Feature 0 is always the constant feature. Its tree allocates the particle
//! handles; every other tree receives the same insert/remove sequence, so a
//! handle addresses the same particle in all of them.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::Feature;
use crate::weighted_index_tree::{Handle, WeightedIndexTree};

pub type ParticleId = Handle;

pub type FeatureId = usize;

/// Masses up to this value have their feature values tabulated.
const FEATURE_TABLE_MASSES: usize = 4096;

#[derive(Clone, Debug)]
pub struct Ensemble {
    features: Vec<Feature>,
    // table[fid][mass] for mass < FEATURE_TABLE_MASSES, filled on first use
    table: Vec<Vec<f64>>,
    trees: Vec<WeightedIndexTree>,
    masses: Vec<u64>,
    seqs: Vec<u64>,
    next_seq: u64,
    // mass -> insertion sequence -> particle
    by_mass: BTreeMap<u64, BTreeMap<u64, ParticleId>>,
    total_mass: u128,
}

impl Ensemble {
    /// Ensemble tracking the given features (deduplicated, constant feature
    /// always present as id 0).
    pub fn new(features: &[Feature]) -> Self {
        let mut registered = vec![Feature::CONSTANT];
        for f in features {
            if !registered.contains(f) {
                registered.push(*f);
            }
        }
        let table = vec![vec![f64::NAN; FEATURE_TABLE_MASSES]; registered.len()];
        let trees = registered.iter().map(|_| WeightedIndexTree::new()).collect();
        Ensemble {
            features: registered,
            table,
            trees,
            masses: Vec::new(),
            seqs: Vec::new(),
            next_seq: 0,
            by_mass: BTreeMap::new(),
            total_mass: 0,
        }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature_id(&self, feature: &Feature) -> Option<FeatureId> {
        self.features.iter().position(|f| f == feature)
    }

    pub fn len(&self) -> usize {
        self.trees[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Σ mass` over live particles, in exact integer arithmetic.
    pub fn total_mass(&self) -> u128 {
        self.total_mass
    }

    pub fn feature_total(&self, fid: FeatureId) -> f64 {
        self.trees[fid].total()
    }

    #[inline]
    fn feature_value(&mut self, fid: FeatureId, mass: u64) -> f64 {
        match self.table[fid].get_mut(mass as usize) {
            Some(slot) => {
                if slot.is_nan() {
                    *slot = self.features[fid].eval(mass);
                }
                *slot
            }
            None => self.features[fid].eval(mass),
        }
    }

    pub fn add_particle(&mut self, mass: u64) -> Result<ParticleId> {
        if mass == 0 {
            return Err(Error::Domain("particle mass must be at least 1".into()));
        }
        let id = self.trees[0].insert(1.0)?;
        for fid in 1..self.trees.len() {
            let w = self.feature_value(fid, mass);
            let h = self.trees[fid].insert(w)?;
            debug_assert_eq!(h, id);
        }
        let slot = id.slot();
        if slot == self.masses.len() {
            self.masses.push(0);
            self.seqs.push(0);
        }
        self.masses[slot] = mass;
        self.seqs[slot] = self.next_seq;
        self.by_mass
            .entry(mass)
            .or_default()
            .insert(self.next_seq, id);
        self.next_seq += 1;
        self.total_mass += mass as u128;
        Ok(id)
    }

    pub fn remove_particle(&mut self, id: ParticleId) -> Result<u64> {
        if !self.trees[0].contains(id) {
            return Err(Error::StaleHandle);
        }
        for tree in &mut self.trees {
            tree.remove(id)?;
        }
        let slot = id.slot();
        let mass = std::mem::take(&mut self.masses[slot]);
        let group = self.by_mass.get_mut(&mass).expect("mass index out of sync");
        group.remove(&self.seqs[slot]);
        if group.is_empty() {
            self.by_mass.remove(&mass);
        }
        self.total_mass -= mass as u128;
        Ok(mass)
    }

    pub fn mass(&self, id: ParticleId) -> Result<u64> {
        if self.trees[0].contains(id) {
            Ok(self.masses[id.slot()])
        } else {
            Err(Error::StaleHandle)
        }
    }

    /// Draw a particle with probability proportional to feature `fid`.
    pub fn sample_by_feature(&self, fid: FeatureId, u: f64) -> Result<(ParticleId, u64)> {
        let id = self.trees[fid].sample(u)?;
        Ok((id, self.masses[id.slot()]))
    }

    pub fn count_of_mass(&self, mass: u64) -> usize {
        self.by_mass.get(&mass).map_or(0, BTreeMap::len)
    }

    /// Remove the most recently added particle of exactly this mass.
    pub fn remove_one_of_mass(&mut self, mass: u64) -> Result<ParticleId> {
        let id = self
            .by_mass
            .get(&mass)
            .and_then(|g| g.values().next_back().copied())
            .ok_or(Error::NoSuchMass(mass))?;
        self.remove_particle(id)?;
        Ok(id)
    }

    pub fn histogram(&self) -> BTreeMap<u64, u64> {
        self.by_mass
            .iter()
            .map(|(&m, g)| (m, g.len() as u64))
            .collect()
    }

    /// Live particles in leaf order.
    pub fn particles(&self) -> impl Iterator<Item = (ParticleId, u64)> + '_ {
        self.trees[0]
            .handles()
            .map(move |h| (h, self.masses[h.slot()]))
    }

    /// Keep each particle independently with probability `keep`, visiting
    /// particles in leaf order with one uniform each. Returns the number removed.
    pub fn bernoulli_thin<R: Rng + ?Sized>(&mut self, keep: f64, rng: &mut R) -> usize {
        let doomed: Vec<ParticleId> = self
            .trees[0]
            .handles()
            .filter(|_| rng.random::<f64>() >= keep)
            .collect();
        for id in &doomed {
            self.remove_particle(*id).expect("live handle");
        }
        doomed.len()
    }

    pub fn clear(&mut self) {
        let ids: Vec<_> = self.trees[0].handles().collect();
        for id in ids {
            self.remove_particle(id).expect("live handle");
        }
    }
}
