//! JSON description of a model: a preset name or an inline definition.
//!
//! ```json
//! { "label": "two-state",
//!   "motion": { "type": "chain", "generator": [[-1, 1], [2, -2]], "killing": [0, 0] },
//!   "branching": { "beta": [1, 2],
//!                  "offspring": [ { "type": "finite", "probs": [[2, 1.0]] },
//!                                 { "type": "heavy_tail" } ] } }
//! ```

use serde::{Deserialize, Serialize};

use super::{
    presets, BranchingParams, FiniteChainMotion, KilledDiffusion1D, Model, ModelSpec,
    OffspringLaw, DEFAULT_DT,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Preset(String),
    Inline(InlineModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    #[serde(default)]
    pub label: Option<String>,
    pub motion: MotionConfig,
    pub branching: BranchingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionConfig {
    Chain {
        #[serde(default)]
        states: Vec<String>,
        generator: Vec<Vec<f64>>,
        /// Defaults to zero.
        #[serde(default)]
        killing: Option<Vec<f64>>,
        /// Defaults to all ones.
        #[serde(default)]
        measure: Option<Vec<f64>>,
    },
    Diffusion {
        a: f64,
        b: f64,
        #[serde(default)]
        dt: Option<f64>,
    },
}

/// A scalar applies to every state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerState<T> {
    All(T),
    Each(Vec<T>),
}

impl<T: Clone> PerState<T> {
    fn expand(&self, n: usize) -> Vec<T> {
        match self {
            PerState::All(v) => vec![v.clone(); n],
            PerState::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingConfig {
    pub beta: PerState<f64>,
    pub offspring: PerState<LawConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawConfig {
    /// `(k, p_k)` pairs.
    Finite { probs: Vec<(usize, f64)> },
    HeavyTail,
}

impl LawConfig {
    fn build(&self) -> OffspringLaw {
        match self {
            LawConfig::Finite { probs } => OffspringLaw::finite(probs.iter().copied()),
            LawConfig::HeavyTail => OffspringLaw::heavy_tail(),
        }
    }
}

impl ModelConfig {
    /// Builds the model. `dt` overrides the diffusion step when given.
    pub fn build(&self, dt: Option<f64>) -> Result<ModelSpec> {
        match self {
            ModelConfig::Preset(name) => {
                let spec = presets::by_name(name)?;
                Ok(match (spec, dt) {
                    (ModelSpec::Diffusion(mut m), Some(dt)) => {
                        m.motion.dt = dt;
                        ModelSpec::Diffusion(m)
                    }
                    (spec, _) => spec,
                })
            }
            ModelConfig::Inline(m) => m.build(dt),
        }
    }
}

impl InlineModel {
    fn build(&self, dt_override: Option<f64>) -> Result<ModelSpec> {
        let label = self.label.clone().unwrap_or_else(|| "inline".into());
        match &self.motion {
            MotionConfig::Chain {
                states,
                generator,
                killing,
                measure,
            } => {
                let n = generator.len();
                let motion = FiniteChainMotion::new(
                    states.clone(),
                    generator.clone(),
                    killing.clone().unwrap_or_else(|| vec![0.0; n]),
                    measure.clone().unwrap_or_else(|| vec![1.0; n]),
                )?;
                let branching = self.branching.build(n)?;
                Ok(ModelSpec::Chain(Model::new(label, motion, branching)))
            }
            MotionConfig::Diffusion { a, b, dt } => {
                let dt = dt_override.or(*dt).unwrap_or(DEFAULT_DT);
                let motion = KilledDiffusion1D::new(*a, *b, dt)?;
                let branching = self.branching.build(1)?;
                Ok(ModelSpec::Diffusion(Model::new(label, motion, branching)))
            }
        }
    }
}

impl BranchingConfig {
    fn build(&self, n: usize) -> Result<BranchingParams> {
        let beta = self.beta.expand(n);
        let laws: Vec<OffspringLaw> = self.offspring.expand(n).iter().map(LawConfig::build).collect();
        if beta.len() != n || laws.len() != n {
            return Err(Error::Config(format!(
                "branching must give one entry per state ({n}); got {} rates and {} laws",
                beta.len(),
                laws.len()
            )));
        }
        BranchingParams::new(beta, laws)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_chain_matches_preset() {
        let json = r#"{
            "label": "MODEL-ASYM",
            "motion": { "type": "chain", "generator": [[-1, 1], [2, -2]] },
            "branching": { "beta": [1, 2], "offspring": [
                { "type": "finite", "probs": [[2, 1.0]] },
                { "type": "finite", "probs": [[2, 0.5], [3, 0.5]] } ] }
        }"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.build(None).unwrap(), presets::asym());
    }

    #[test]
    fn preset_name_and_scalar_fields() {
        let cfg: ModelConfig = serde_json::from_str(r#""MODEL-BM""#).unwrap();
        let spec = cfg.build(Some(5e-4)).unwrap();
        assert_eq!(spec.as_diffusion().unwrap().motion.dt, 5e-4);

        let json = r#"{ "motion": { "type": "chain", "generator": [[-1, 1], [1, -1]] },
                        "branching": { "beta": 1, "offspring": { "type": "heavy_tail" } } }"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        let spec = cfg.build(None).unwrap();
        assert_eq!(spec.branching(), presets::heavy().branching());
    }

    #[test]
    fn non_square_generator_is_a_config_error() {
        let json = r#"{ "motion": { "type": "chain", "generator": [[-1, 1], [1]] },
                        "branching": { "beta": 1, "offspring": { "type": "heavy_tail" } } }"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        assert!(matches!(cfg.build(None), Err(Error::Config(_))));
    }
}
