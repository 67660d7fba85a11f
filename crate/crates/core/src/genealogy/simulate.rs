use rand::Rng;

use super::{MarkedTree, SpineDecoration, TreeNode, UlamHarrisLabel};
use crate::model::{Fate, Model, Motion, StateSpace};
use crate::rng::{salt, ReplicaKey};
use crate::spectral::Tiltable;

/// Default cap on the number of nodes in one tree.
pub const DEFAULT_N_MAX: usize = 1_000_000;

/// A tree under `P_x` up to `horizon`.
///
/// Each node draws its life and offspring count from its own stream, keyed by
/// its label, so the tree does not depend on traversal order.
pub fn simulate_tree_p<M: Motion>(
    model: &Model<M>,
    x: M::State,
    horizon: f64,
    key: ReplicaKey,
    n_max: usize,
) -> MarkedTree<M::State> {
    let mut tree = MarkedTree::new(x, horizon);
    grow(model, &mut tree, vec![(UlamHarrisLabel::root(), 0.0, x)], key, n_max);
    tree
}

/// Depth-first growth of every pending `(label, birth, start)` under `P`.
fn grow<M: Motion>(
    model: &Model<M>,
    tree: &mut MarkedTree<M::State>,
    mut stack: Vec<(UlamHarrisLabel, f64, M::State)>,
    key: ReplicaKey,
    n_max: usize,
) {
    let clock = model.branching.clock();
    let horizon = tree.horizon;
    while let Some((label, birth, start)) = stack.pop() {
        if tree.nodes.len() >= n_max {
            tree.overflowed = true;
            return;
        }
        let mut rng = key.node_rng(&label);
        let life = model.motion.run_life(start, birth, horizon, &clock, &mut rng);
        let mut offspring = None;
        if let Fate::Fission(pos) = life.fate {
            let r = model.branching.offspring(pos.slot()).sample(&mut rng);
            offspring = Some(r);
            let pending = (tree.nodes.len() + 1 + stack.len()) as u64;
            if pending.saturating_add(r) > n_max as u64 {
                tree.overflowed = true;
            } else {
                for i in (1..=r).rev() {
                    stack.push((label.child(i), life.end, pos));
                }
            }
        }
        tree.nodes.insert(
            label.clone(),
            TreeNode {
                label,
                birth,
                end: life.end,
                trace: life.trace,
                fate: life.fate,
                offspring,
            },
        );
        if tree.overflowed {
            return;
        }
    }
}

/// The spine alone under `Q̃_x`: tilted motion, accelerated clock `Aβ`,
/// size-biased offspring and a uniformly chosen continuing child.
pub fn simulate_spine_qtilde<M: Tiltable>(
    model: &Model<M>,
    tilted: &M::Tilted,
    x: M::State,
    horizon: f64,
    key: ReplicaKey,
) -> SpineDecoration<M::State> {
    let mut rng = key.salted_rng(salt::SPINE);
    let clock = model.branching.spine_clock();
    let mut segments = Vec::new();
    let mut label = UlamHarrisLabel::root();
    let (mut t, mut pos) = (0.0, x);
    loop {
        let life = tilted.run_life(pos, t, horizon, &clock, &mut rng);
        match life.fate {
            Fate::Fission(at) => {
                let r = model.branching.size_biased(at.slot()).sample(&mut rng);
                let next = label.child(rng.gen_range(1..=r));
                segments.push(TreeNode {
                    label,
                    birth: t,
                    end: life.end,
                    trace: life.trace,
                    fate: life.fate,
                    offspring: Some(r),
                });
                label = next;
                t = segments.last().unwrap().end;
                pos = at;
            }
            _ => {
                segments.push(TreeNode {
                    label,
                    birth: t,
                    end: life.end,
                    trace: life.trace,
                    fate: life.fate,
                    offspring: None,
                });
                break;
            }
        }
    }
    SpineDecoration {
        root_state: x,
        horizon,
        segments,
    }
}

/// A full tree under `Q̃_x` and its spine.
pub fn simulate_tree_qtilde<M: Tiltable>(
    model: &Model<M>,
    tilted: &M::Tilted,
    x: M::State,
    horizon: f64,
    key: ReplicaKey,
    n_max: usize,
) -> (MarkedTree<M::State>, SpineDecoration<M::State>) {
    let decoration = simulate_spine_qtilde(model, tilted, x, horizon, key);
    let tree = resample_subtrees(model, &decoration, key, n_max);
    (tree, decoration)
}

/// Keeps the spine of `decoration` and grows every off-spine subtree under
/// `P` from the streams of `key`.
pub fn resample_subtrees<M: Motion>(
    model: &Model<M>,
    decoration: &SpineDecoration<M::State>,
    key: ReplicaKey,
    n_max: usize,
) -> MarkedTree<M::State> {
    let mut tree = MarkedTree::new(decoration.root_state, decoration.horizon);
    let mut pending = Vec::new();
    for (i, seg) in decoration.segments.iter().enumerate() {
        tree.nodes.insert(seg.label.clone(), seg.clone());
        let (Some(r), Some(pos)) = (seg.offspring, seg.fission_position()) else {
            continue;
        };
        let Some(next) = decoration.segments.get(i + 1) else {
            continue;
        };
        let chosen = *next.label.digits().last().expect("spine child has a digit");
        if (decoration.segments.len() + pending.len()) as u64 + r > n_max as u64 + 1 {
            tree.overflowed = true;
            return tree;
        }
        for c in (1..=r).rev().filter(|c| *c != chosen) {
            pending.push((seg.label.child(c), seg.end, pos));
        }
    }
    // reversed so that the depth-first stack visits subtrees in label order
    pending.reverse();
    grow(model, &mut tree, pending, key, n_max);
    tree
}

/// A line of descent chosen by uniform child choices at every fission, as
/// under `P̃_x`. `None` when the choice leads into a truncated part of an
/// overflowed tree.
pub fn select_uniform_spine<S: StateSpace, R: Rng + ?Sized>(
    tree: &MarkedTree<S>,
    rng: &mut R,
) -> Option<SpineDecoration<S>> {
    let mut segments = Vec::new();
    let mut label = UlamHarrisLabel::root();
    loop {
        let node = tree.get(&label)?;
        segments.push(node.clone());
        match node.offspring {
            Some(r) => label = label.child(rng.gen_range(1..=r)),
            None => break,
        }
    }
    Some(SpineDecoration {
        root_state: tree.root_state,
        horizon: tree.horizon,
        segments,
    })
}
