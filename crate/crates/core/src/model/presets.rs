//! The four reference models.

use std::f64::consts::PI;

use super::{
    BranchingParams, FiniteChainMotion, KilledDiffusion1D, Model, ModelSpec, OffspringLaw,
    DEFAULT_DT,
};
use crate::error::{Error, Result};

pub const NAMES: [&str; 4] = ["MODEL-SYM", "MODEL-ASYM", "MODEL-BM", "MODEL-HEAVY"];

fn sym_chain() -> FiniteChainMotion {
    FiniteChainMotion::conservative(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).expect("valid preset")
}

/// Two states, symmetric unit jump rates, binary splitting at rate 1.
pub fn sym() -> ModelSpec {
    ModelSpec::Chain(Model::new(
        "MODEL-SYM",
        sym_chain(),
        BranchingParams::homogeneous(2, 1.0, OffspringLaw::degenerate(2)).expect("valid preset"),
    ))
}

/// Two states with asymmetric jumps, `β = (1, 2)`, binary splitting in state 0
/// and `p₂ = p₃ = 1/2` in state 1.
pub fn asym() -> ModelSpec {
    let motion = FiniteChainMotion::conservative(vec![vec![-1.0, 1.0], vec![2.0, -2.0]])
        .expect("valid preset");
    let branching = BranchingParams::new(
        vec![1.0, 2.0],
        vec![
            OffspringLaw::degenerate(2),
            OffspringLaw::finite([(2, 0.5), (3, 0.5)]),
        ],
    )
    .expect("valid preset");
    ModelSpec::Chain(Model::new("MODEL-ASYM", motion, branching))
}

/// Brownian motion killed on leaving `(0, π)`, binary splitting at rate 1.
pub fn bm() -> ModelSpec {
    bm_with_dt(DEFAULT_DT)
}

pub fn bm_with_dt(dt: f64) -> ModelSpec {
    ModelSpec::Diffusion(Model::new(
        "MODEL-BM",
        KilledDiffusion1D::new(0.0, PI, dt).expect("valid preset"),
        BranchingParams::homogeneous(1, 1.0, OffspringLaw::degenerate(2)).expect("valid preset"),
    ))
}

/// The symmetric chain with the heavy-tailed offspring law in both states.
pub fn heavy() -> ModelSpec {
    ModelSpec::Chain(Model::new(
        "MODEL-HEAVY",
        sym_chain(),
        BranchingParams::homogeneous(2, 1.0, OffspringLaw::heavy_tail()).expect("valid preset"),
    ))
}

pub fn by_name(name: &str) -> Result<ModelSpec> {
    match name {
        "MODEL-SYM" => Ok(sym()),
        "MODEL-ASYM" => Ok(asym()),
        "MODEL-BM" => Ok(bm()),
        "MODEL-HEAVY" => Ok(heavy()),
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}
