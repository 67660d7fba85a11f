use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinesim_core::model::config::ModelConfig;
use spinesim_core::verify::StartPoint;
use spinesim_core::ModelSpec;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    #[serde(rename = "many2one")]
    ManyToOne,
    Martingale,
    Eta,
    Spine,
    Decomp,
    Com,
    Laplace,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] = [
        Suite::ManyToOne,
        Suite::Martingale,
        Suite::Eta,
        Suite::Spine,
        Suite::Decomp,
        Suite::Com,
        Suite::Laplace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ManyToOne => "many2one",
            Suite::Martingale => "martingale",
            Suite::Eta => "eta",
            Suite::Spine => "spine",
            Suite::Decomp => "decomp",
            Suite::Com => "com",
            Suite::Laplace => "laplace",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[default]
    P,
    Qtilde,
}

/// Replaces parts of the computed eigentriple before anything runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOverride {
    pub phi_tilde_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Suite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rk4_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spines: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resamples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_times: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigentriple_override: Option<EigenOverride>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_REPLICAS: u64 = 10_000;
pub const DEFAULT_DICHOTOMY_REPLICAS: u64 = 20_000;
pub const DEFAULT_T_GRID: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_DICHOTOMY_GRID: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.apply(overrides);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.replicas {
            self.replicas = Some(n);
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = Some(d.clone());
        }
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.replicas == Some(0) {
            return Err(CliError::Config("replicas must be at least 1".into()));
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("horizon must be positive, got {t}")));
            }
        }
        if let Some(g) = &self.t_grid {
            if g.is_empty() || g[0] <= 0.0 || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::Config(format!(
                    "t_grid must be positive and strictly increasing, got {g:?}"
                )));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical JSON of the effective config,
    /// ignoring the worker count and the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.out_dir = None;
        let value = serde_json::to_value(&c).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn models(&self) -> Result<Vec<ModelSpec>, CliError> {
        let mut list: Vec<&ModelConfig> = self.model.iter().collect();
        list.extend(self.models.iter());
        if list.is_empty() {
            return Err(CliError::Config("config has no model".into()));
        }
        list.into_iter()
            .map(|m| m.build(self.dt).map_err(CliError::from))
            .collect()
    }

    pub fn single_model(&self) -> Result<ModelSpec, CliError> {
        let mut all = self.models()?;
        if all.len() != 1 {
            return Err(CliError::Config(format!("expected one model, found {}", all.len())));
        }
        Ok(all.remove(0))
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1).max(1)
    }

    pub fn replicas(&self) -> u64 {
        self.replicas.unwrap_or(DEFAULT_REPLICAS)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(1.0)
    }

    pub fn t_grid(&self, default: &[f64]) -> Vec<f64> {
        self.t_grid.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn start_for(&self, spec: &ModelSpec) -> StartPoint {
        self.start.unwrap_or(match spec {
            ModelSpec::Chain(_) => StartPoint::State(0),
            ModelSpec::Diffusion(m) => StartPoint::Point(0.5 * (m.motion.a + m.motion.b)),
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> RunConfig {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn hash_ignores_workers_and_out_dir() {
        let a = parse(r#"{"model":"MODEL-SYM","seed":3,"workers":1}"#);
        let mut b = parse(r#"{"model":"MODEL-SYM","seed":3,"workers":4,"out_dir":"/tmp/x"}"#);
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn overrides_win() {
        let mut c = parse(r#"{"model":"MODEL-ASYM","seed":3,"replicas":10}"#);
        c.apply(&Overrides {
            seed: Some(9),
            replicas: Some(20),
            workers: Some(4),
            out_dir: None,
        });
        assert_eq!((c.seed, c.replicas(), c.workers()), (9, 20, 4));
    }

    #[test]
    fn rejects_bad_grids_and_unknown_fields() {
        assert!(parse(r#"{"model":"MODEL-SYM","t_grid":[1,2,2]}"#).check().is_err());
        assert!(parse(r#"{"model":"MODEL-SYM","t_grid":[2,1]}"#).check().is_err());
        assert!(parse(r#"{"model":"MODEL-SYM","replicas":0}"#).check().is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle":"MODEL-SYM"}"#).is_err());
    }

    #[test]
    fn suites_parse() {
        let c = parse(r#"{"model":"MODEL-SYM","suite":"many2one"}"#);
        assert_eq!(c.suite, Some(Suite::ManyToOne));
        let c = parse(r#"{"model":"MODEL-BM"}"#);
        let spec = c.single_model().unwrap();
        assert_eq!(c.start_for(&spec), StartPoint::Point(0.5 * std::f64::consts::PI));
    }
}
