//! Weighted particle approximations of a distribution.

use serde::{Deserialize, Serialize};

use crate::dist::lse;
use crate::error::{DccError, Result};
use crate::trace::{Path, Trace};

#[derive(Clone, Debug)]
pub struct Particle<O> {
    pub path: Path,
    pub values: Vec<f64>,
    pub output: O,
    pub weight: f64,
}

impl<O: Clone> Particle<O> {
    /// Particle for `trace` with weight zero, to be set by the measure.
    pub fn from_trace(trace: &Trace<O>) -> Self {
        Particle { path: trace.path(), values: trace.values(), output: trace.output().clone(), weight: 0.0 }
    }
}

/// How an SLP's posterior is approximated from its samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiMode {
    /// All retained chain states, equally weighted.
    Mcmc,
    /// The importance samples, self-normalised.
    Is,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Normalization {
    Unweighted,
    SelfNormalized,
}

#[derive(Clone, Debug)]
pub struct EmpiricalMeasure<O> {
    particles: Vec<Particle<O>>,
    mode: Normalization,
}

impl<O> EmpiricalMeasure<O> {
    /// Equal weights `1/n`.
    pub fn unweighted(mut particles: Vec<Particle<O>>) -> Result<Self> {
        if particles.is_empty() {
            return Err(DccError::EmptyMeasure);
        }
        let w = 1.0 / particles.len() as f64;
        particles.iter_mut().for_each(|p| p.weight = w);
        Ok(EmpiricalMeasure { particles, mode: Normalization::Unweighted })
    }

    /// Equal weights for a chain whose repeated states are stored once with
    /// a multiplicity.
    pub fn from_counts(items: Vec<(Particle<O>, u64)>) -> Result<Self> {
        let total: u64 = items.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(DccError::EmptyMeasure);
        }
        let particles = items
            .into_iter()
            .filter(|(_, c)| *c > 0)
            .map(|(mut p, c)| {
                p.weight = c as f64 / total as f64;
                p
            })
            .collect();
        Ok(EmpiricalMeasure { particles, mode: Normalization::Unweighted })
    }

    /// Weights proportional to `exp(log_w)`. Zero-weight particles are kept
    /// out of the measure.
    pub fn from_log_weights(items: Vec<(Particle<O>, f64)>) -> Result<Self> {
        if items.is_empty() {
            return Err(DccError::EmptyMeasure);
        }
        let norm = lse(items.iter().map(|(_, lw)| *lw));
        if norm == f64::NEG_INFINITY {
            return Err(DccError::NoMass);
        }
        let particles = items
            .into_iter()
            .filter(|(_, lw)| *lw > f64::NEG_INFINITY)
            .map(|(mut p, lw)| {
                p.weight = (lw - norm).exp();
                p
            })
            .collect();
        Ok(EmpiricalMeasure { particles, mode: Normalization::SelfNormalized })
    }

    /// Assemble from already-normalised weights.
    pub(crate) fn from_normalized(particles: Vec<Particle<O>>, mode: Normalization) -> Self {
        EmpiricalMeasure { particles, mode }
    }

    pub fn particles(&self) -> &[Particle<O>] {
        &self.particles
    }

    pub fn into_particles(self) -> Vec<Particle<O>> {
        self.particles
    }

    pub fn mode(&self) -> Normalization {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Weighted mean of `f` over the particles.
    pub fn expectation(&self, mut f: impl FnMut(&Particle<O>) -> f64) -> f64 {
        self.particles.iter().map(|p| p.weight * f(p)).sum()
    }
}
