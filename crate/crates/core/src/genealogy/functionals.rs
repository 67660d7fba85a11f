use serde::Serialize;

use super::{MarkedTree, SpineDecoration, UlamHarrisLabel};
use crate::model::{Model, Motion, StateSpace};
use crate::spectral::Eigentriple;

/// Martingale values at one horizon. `m` is `None` for overflowed trees;
/// the η̃ factors are present only for spine-decorated trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleTrack {
    pub t: f64,
    pub m: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub eta: Option<f64>,
}

/// `M_T = e^{-λ₁T} Σ_{u ∈ L_T} φ(Y_u(T)) / φ(x)`.
pub fn compute_m<S: StateSpace>(tree: &MarkedTree<S>, eig: &Eigentriple) -> MartingaleTrack {
    let m = (!tree.overflowed).then(|| {
        let mass: f64 = tree
            .alive()
            .filter_map(|n| n.position_at_horizon())
            .map(|s| eig.phi_at(s))
            .sum();
        (-eig.lambda1 * tree.horizon).exp() * mass / eig.phi_at(tree.root_state)
    });
    MartingaleTrack {
        t: tree.horizon,
        m,
        eta1: None,
        eta2: None,
        eta3: None,
        eta: None,
    }
}

/// `⟨φ, X_t⟩` for any `t` up to the horizon, read off the traces.
pub fn phi_mass_at<S: StateSpace>(tree: &MarkedTree<S>, eig: &Eigentriple, t: f64) -> f64 {
    tree.nodes
        .values()
        .filter(|n| n.alive_at(t))
        .map(|n| eig.phi_at(n.position_at(t)))
        .sum()
}

/// The three factors of `η̃_T(φ)` along the spine and their product.
///
/// Path integrals use the motion's own rule: exact on jump lists, trapezoidal
/// on Euler skeletons. A killed spine has `η̃⁽³⁾ = 0`.
pub fn compute_eta<M: Motion>(
    model: &Model<M>,
    decoration: &SpineDecoration<M::State>,
    eig: &Eigentriple,
) -> MartingaleTrack {
    let b = &model.branching;
    let growth = b.growth();
    let mean = b.mean();
    let integral: f64 = decoration
        .segments
        .iter()
        .map(|s| model.motion.path_integral(&s.trace, s.end, |y| growth[y.slot()]))
        .sum();
    let mut prod_a = 1.0;
    let mut prod_r_over_a = 1.0;
    let mut prod_r = 1.0;
    for f in decoration.fissions() {
        let a = mean[f.position.slot()];
        prod_a *= a;
        prod_r_over_a *= f.offspring as f64 / a;
        prod_r *= f.offspring as f64;
    }
    let t = decoration.horizon;
    let phi_x = eig.phi_at(decoration.root_state);
    let phi_end = decoration.terminal().map_or(0.0, |s| eig.phi_at(s));
    let eta1 = prod_a * (-integral).exp();
    let eta3 = phi_end / phi_x * (integral - eig.lambda1 * t).exp();
    let eta = prod_r * (-eig.lambda1 * t).exp() * phi_end / phi_x;
    MartingaleTrack {
        t,
        m: None,
        eta1: Some(eta1),
        eta2: Some(prod_r_over_a),
        eta3: Some(eta3),
        eta: Some(eta),
    }
}

/// `φ(Ỹ_T) e^{-λ₁T} + Σ_i (r_i - 1) φ(Ỹ_{ζ_i}) e^{-λ₁ζ_i}`.
pub fn spine_rhs<S: StateSpace>(decoration: &SpineDecoration<S>, eig: &Eigentriple) -> f64 {
    let l = eig.lambda1;
    let end = decoration
        .terminal()
        .map_or(0.0, |s| eig.phi_at(s) * (-l * decoration.horizon).exp());
    end + decoration
        .fissions()
        .map(|f| (f.offspring as f64 - 1.0) * eig.phi_at(f.position) * (-l * f.time).exp())
        .sum::<f64>()
}

/// `Σ_{u ∈ L_T} (Π_{v<u} 1/r_v) η̃_T(φ; spine through u)`, which telescopes to
/// `M_T`. `None` for overflowed trees.
pub fn project_eta<M: Motion>(
    model: &Model<M>,
    tree: &MarkedTree<M::State>,
    eig: &Eigentriple,
) -> Option<f64> {
    if tree.overflowed {
        return None;
    }
    let mut total = 0.0;
    for leaf in tree.alive() {
        let segments: Vec<_> = leaf
            .label
            .ancestors()
            .chain(std::iter::once(leaf.label.clone()))
            .map(|l: UlamHarrisLabel| tree.nodes[&l].clone())
            .collect();
        let weight: f64 = segments
            .iter()
            .filter_map(|s| s.offspring)
            .map(|r| 1.0 / r as f64)
            .product();
        let deco = SpineDecoration {
            root_state: tree.root_state,
            horizon: tree.horizon,
            segments,
        };
        total += weight * compute_eta(model, &deco, eig).eta.expect("set by compute_eta");
    }
    Some(total)
}

/// Running sums and maxima of `e^{-λ₁ζ_i} r_i φ(Ỹ_{ζ_i})` along the spine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSums {
    pub times: Vec<f64>,
    pub partial: Vec<f64>,
    pub running_max: Vec<f64>,
}

impl PartialSums {
    /// Largest term among fissions at or before `t` (0 if none).
    pub fn max_until(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|s| *s <= t);
        if i == 0 {
            0.0
        } else {
            self.running_max[i - 1]
        }
    }
}

pub fn spine_partial_sums<S: StateSpace>(
    decoration: &SpineDecoration<S>,
    eig: &Eigentriple,
) -> PartialSums {
    let mut out = PartialSums {
        times: Vec::new(),
        partial: Vec::new(),
        running_max: Vec::new(),
    };
    let (mut sum, mut max) = (0.0, 0.0f64);
    for f in decoration.fissions() {
        let term = (-eig.lambda1 * f.time).exp() * f.offspring as f64 * eig.phi_at(f.position);
        sum += term;
        max = max.max(term);
        out.times.push(f.time);
        out.partial.push(sum);
        out.running_max.push(max);
    }
    out
}
