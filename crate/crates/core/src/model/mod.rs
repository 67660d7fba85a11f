//! State spaces, motions and branching parameters.

pub mod config;
pub mod motion;
pub mod offspring;
pub mod presets;
mod validate;

pub use motion::{
    BranchClock, ChainStep, ConditionedDiffusion1D, Fate, Field, FiniteChainMotion,
    KilledDiffusion1D, Life, Motion, StateSpace, DEFAULT_DT,
};
pub use offspring::{FiniteLaw, HeavyTailLaw, OffspringLaw};
pub use validate::{validate_model, Check, ValidationReport};

use crate::error::{Error, Result};

/// Per-slot branching rate and offspring law, with the derived quantities the
/// simulators and oracles need.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingParams {
    beta: Vec<f64>,
    offspring: Vec<OffspringLaw>,
    size_biased: Vec<Option<OffspringLaw>>,
    mean: Vec<f64>,
    a_beta: Vec<f64>,
    growth: Vec<f64>,
    beta_max: f64,
    a_beta_max: f64,
}

impl BranchingParams {
    pub fn new(beta: Vec<f64>, offspring: Vec<OffspringLaw>) -> Result<Self> {
        if beta.is_empty() || beta.len() != offspring.len() {
            return Err(Error::Config(format!(
                "beta has {} entries but {} offspring laws were given",
                beta.len(),
                offspring.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("non-finite branching rate".into()));
        }
        let mean: Vec<f64> = offspring.iter().map(OffspringLaw::mean).collect();
        let size_biased = offspring
            .iter()
            .zip(&mean)
            .map(|(law, a)| if *a > 0.0 { law.size_biased().ok() } else { None })
            .collect();
        let a_beta: Vec<f64> = beta.iter().zip(&mean).map(|(b, a)| a * b).collect();
        let growth = beta.iter().zip(&mean).map(|(b, a)| (a - 1.0) * b).collect();
        let beta_max = beta.iter().cloned().fold(0.0, f64::max);
        let a_beta_max = a_beta.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            beta,
            offspring,
            size_biased,
            mean,
            a_beta,
            growth,
            beta_max,
            a_beta_max,
        })
    }

    /// The same rate and law at every one of `slots` positions.
    pub fn homogeneous(slots: usize, beta: f64, law: OffspringLaw) -> Result<Self> {
        Self::new(vec![beta; slots], vec![law; slots])
    }

    pub fn slots(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn offspring(&self, slot: usize) -> &OffspringLaw {
        &self.offspring[slot]
    }

    pub fn laws(&self) -> &[OffspringLaw] {
        &self.offspring
    }

    /// `p̂ = k p_k / A` at `slot`.
    pub fn size_biased(&self, slot: usize) -> &OffspringLaw {
        self.size_biased[slot]
            .as_ref()
            .expect("size-biased law requested for a law with zero mean")
    }

    /// Mean offspring `A` per slot.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `Aβ` per slot.
    pub fn a_beta(&self) -> &[f64] {
        &self.a_beta
    }

    /// `(A - 1)β` per slot.
    pub fn growth(&self) -> &[f64] {
        &self.growth
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub fn a_beta_max(&self) -> f64 {
        self.a_beta_max
    }

    /// Clock for ordinary particles.
    pub fn clock(&self) -> BranchClock<'_> {
        BranchClock {
            rates: &self.beta,
            bound: self.beta_max,
        }
    }

    /// Accelerated clock for the spine under the size-biased measure.
    pub fn spine_clock(&self) -> BranchClock<'_> {
        BranchClock {
            rates: &self.a_beta,
            bound: self.a_beta_max,
        }
    }

    /// True when every slot has the same rate and law.
    pub fn is_homogeneous(&self) -> bool {
        self.beta.windows(2).all(|w| w[0] == w[1])
            && self.offspring.windows(2).all(|w| w[0] == w[1])
    }
}

/// A motion together with its branching mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<M> {
    pub motion: M,
    pub branching: BranchingParams,
    pub label: String,
}

impl<M> Model<M> {
    pub fn new(label: impl Into<String>, motion: M, branching: BranchingParams) -> Self {
        Self {
            motion,
            branching,
            label: label.into(),
        }
    }
}

/// A model on either backend.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Chain(Model<FiniteChainMotion>),
    Diffusion(Model<KilledDiffusion1D>),
}

impl ModelSpec {
    pub fn label(&self) -> &str {
        match self {
            ModelSpec::Chain(m) => &m.label,
            ModelSpec::Diffusion(m) => &m.label,
        }
    }

    pub fn branching(&self) -> &BranchingParams {
        match self {
            ModelSpec::Chain(m) => &m.branching,
            ModelSpec::Diffusion(m) => &m.branching,
        }
    }

    pub fn backend(&self) -> &'static str {
        match self {
            ModelSpec::Chain(m) => m.motion.backend(),
            ModelSpec::Diffusion(m) => m.motion.backend(),
        }
    }

    pub fn as_chain(&self) -> Option<&Model<FiniteChainMotion>> {
        match self {
            ModelSpec::Chain(m) => Some(m),
            ModelSpec::Diffusion(_) => None,
        }
    }

    pub fn as_diffusion(&self) -> Option<&Model<KilledDiffusion1D>> {
        match self {
            ModelSpec::Diffusion(m) => Some(m),
            ModelSpec::Chain(_) => None,
        }
    }
}
