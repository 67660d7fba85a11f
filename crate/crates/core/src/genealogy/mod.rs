//! Ulam–Harris genealogies, marked trees and spine decorations.

mod functionals;
mod population;
mod simulate;

pub use functionals::{
    compute_eta, compute_m, phi_mass_at, project_eta, spine_partial_sums, spine_rhs,
    MartingaleTrack, PartialSums,
};
pub use population::{simulate_population, PopulationOutcome};
pub use simulate::{
    resample_subtrees, select_uniform_spine, simulate_spine_qtilde, simulate_tree_p,
    simulate_tree_qtilde, DEFAULT_N_MAX,
};

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::model::{Fate, StateSpace};
use crate::rng::combine;

/// A finite sequence of positive integers; the empty sequence is the root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct UlamHarrisLabel(Vec<u64>);

impl UlamHarrisLabel {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn from_digits(digits: Vec<u64>) -> Self {
        assert!(digits.iter().all(|d| *d >= 1), "label digits start at 1");
        Self(digits)
    }

    /// The `i`-th child, `i ≥ 1`.
    pub fn child(&self, i: u64) -> Self {
        assert!(i >= 1, "children are numbered from 1");
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(i);
        Self(v)
    }

    pub fn parent(&self) -> Option<Self> {
        (!self.0.is_empty()).then(|| Self(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// Generation `|u|`.
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn digits(&self) -> &[u64] {
        &self.0
    }

    /// True when `self` is a strict ancestor of `other`.
    pub fn is_ancestor_of(&self, other: &Self) -> bool {
        self.0.len() < other.0.len() && other.0.starts_with(&self.0)
    }

    /// Ancestors from the root down to the parent.
    pub fn ancestors(&self) -> impl Iterator<Item = UlamHarrisLabel> + '_ {
        (0..self.0.len()).map(|d| Self(self.0[..d].to_vec()))
    }

    /// Hash used to key per-node random streams.
    pub fn stream_hash(&self) -> u64 {
        self.0
            .iter()
            .fold(0x243F_6A88_85A3_08D3, |h, d| combine(h, *d))
    }
}

impl fmt::Display for UlamHarrisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_char('.')?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// One individual: its label, life interval, path and fate.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode<S> {
    pub label: UlamHarrisLabel,
    /// `b_u`.
    pub birth: f64,
    /// `ζ_u` for fissions and deaths, the horizon for survivors.
    pub end: f64,
    pub trace: Vec<(f64, S)>,
    pub fate: Fate<S>,
    /// `r_u`, present only for nodes that split.
    pub offspring: Option<u64>,
}

impl<S: StateSpace> TreeNode<S> {
    /// `σ_u = ζ_u - b_u` (time lived before the horizon for survivors).
    pub fn lifetime(&self) -> f64 {
        self.end - self.birth
    }

    pub fn fission_time(&self) -> Option<f64> {
        matches!(self.fate, Fate::Fission(_)).then_some(self.end)
    }

    pub fn fission_position(&self) -> Option<S> {
        match self.fate {
            Fate::Fission(s) => Some(s),
            _ => None,
        }
    }

    pub fn alive_at_horizon(&self) -> bool {
        matches!(self.fate, Fate::Survived(_))
    }

    pub fn position_at_horizon(&self) -> Option<S> {
        match self.fate {
            Fate::Survived(s) => Some(s),
            _ => None,
        }
    }

    pub fn start(&self) -> S {
        self.trace[0].1
    }

    /// True when the node is alive at `t`.
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && (t < self.end || (self.alive_at_horizon() && t == self.end))
    }

    /// Last trace point at or before `t`.
    pub fn position_at(&self, t: f64) -> S {
        let i = self.trace.partition_point(|p| p.0 <= t);
        self.trace[i.saturating_sub(1)].1
    }
}

/// A genealogy up to a fixed horizon, indexed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedTree<S> {
    pub nodes: BTreeMap<UlamHarrisLabel, TreeNode<S>>,
    pub horizon: f64,
    pub root_state: S,
    /// Population cap was hit; the tree is truncated.
    pub overflowed: bool,
}

impl<S: StateSpace> MarkedTree<S> {
    pub fn new(root_state: S, horizon: f64) -> Self {
        Self {
            nodes: BTreeMap::new(),
            horizon,
            root_state,
            overflowed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, label: &UlamHarrisLabel) -> Option<&TreeNode<S>> {
        self.nodes.get(label)
    }

    /// `L_T`: nodes alive at the horizon.
    pub fn alive(&self) -> impl Iterator<Item = &TreeNode<S>> {
        self.nodes.values().filter(|n| n.alive_at_horizon())
    }

    pub fn alive_count(&self) -> usize {
        self.alive().count()
    }

    /// Checks closure, time bookkeeping and birth positions. Returns the
    /// first violation found.
    pub fn check_consistency(&self) -> Result<(), String> {
        for node in self.nodes.values() {
            let Some(parent_label) = node.label.parent() else {
                if node.birth != 0.0 {
                    return Err("root not born at 0".into());
                }
                continue;
            };
            let parent = self
                .nodes
                .get(&parent_label)
                .ok_or_else(|| format!("{} has no parent", node.label))?;
            let r = parent
                .offspring
                .ok_or_else(|| format!("parent of {} did not split", node.label))?;
            if r < 2 || *node.label.digits().last().unwrap() > r {
                return Err(format!("{} is out of range for r = {r}", node.label));
            }
            // b_u = Σ_{v<u} σ_v
            let sum: f64 = node
                .label
                .ancestors()
                .map(|a| self.nodes[&a].lifetime())
                .sum();
            if (sum - node.birth).abs() > 1e-12 {
                return Err(format!("{}: birth {} vs Σσ {}", node.label, node.birth, sum));
            }
            if Some(node.start()) != parent.fission_position() {
                return Err(format!("{} does not start at its parent's fission point", node.label));
            }
        }
        Ok(())
    }
}

/// A distinguished line of descent `ξ_0 = ∅, ξ_1, ...` with its marks.
#[derive(Debug, Clone, PartialEq)]
pub struct SpineDecoration<S> {
    pub root_state: S,
    pub horizon: f64,
    /// One node per spine individual, root first. All but the last split.
    pub segments: Vec<TreeNode<S>>,
}

/// A fission along the spine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpineFission<S> {
    pub time: f64,
    pub position: S,
    pub offspring: u64,
}

impl<S: StateSpace> SpineDecoration<S> {
    pub fn labels(&self) -> impl Iterator<Item = &UlamHarrisLabel> {
        self.segments.iter().map(|s| &s.label)
    }

    pub fn fissions(&self) -> impl Iterator<Item = SpineFission<S>> + '_ {
        self.segments.iter().filter_map(|s| {
            Some(SpineFission {
                time: s.fission_time()?,
                position: s.fission_position()?,
                offspring: s.offspring?,
            })
        })
    }

    /// `n_T`.
    pub fn fission_count(&self) -> usize {
        self.fissions().count()
    }

    /// `Ỹ_T`, or `None` when the spine was killed.
    pub fn terminal(&self) -> Option<S> {
        self.segments.last().and_then(|s| s.position_at_horizon())
    }

    /// The concatenated path `Ỹ` on `[0, end]`.
    pub fn path(&self) -> Vec<(f64, S)> {
        self.segments
            .iter()
            .flat_map(|s| s.trace.iter().copied())
            .collect()
    }

    /// Where the spine's path ends: the horizon, or its death time.
    pub fn end(&self) -> f64 {
        self.segments.last().map_or(self.horizon, |s| s.end)
    }
}

/// One line per node, tab-separated: `label b_u zeta_u r_u trace`.
///
/// `r_u` is `-` for survivors and `0` for killed nodes. The trace is a
/// comma-separated list of `time:state` pairs.
pub fn dump_tree<S: StateSpace>(tree: &MarkedTree<S>) -> String {
    let mut out = String::new();
    for node in tree.nodes.values() {
        let r = match (node.offspring, node.fate) {
            (Some(r), _) => r.to_string(),
            (None, Fate::Killed) => "0".into(),
            _ => "-".into(),
        };
        let trace: Vec<String> = node
            .trace
            .iter()
            .map(|(t, s)| format!("{t:.6}:{}", s.render()))
            .collect();
        let _ = writeln!(
            out,
            "{}\t{:.12}\t{:.12}\t{}\t{}",
            node.label,
            node.birth,
            node.end,
            r,
            trace.join(",")
        );
    }
    out
}
