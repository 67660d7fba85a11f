use serde::Serialize;

use super::{BranchingParams, FiniteChainMotion, KilledDiffusion1D, ModelSpec, OffspringLaw};
use crate::spectral::Eigentriple;

/// Row-sum and normalization tolerance.
const EXACT_TOL: f64 = 1e-12;

/// One named invariant and whether it holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, failures: Vec<String>) {
        self.checks.push(Check {
            name,
            passed: failures.is_empty(),
            detail: failures.join("; "),
        });
    }
}

/// Checks every standing assumption on `spec`. When `eig` is given, the
/// supercriticality condition is checked against its eigenvalue.
pub fn validate_model(spec: &ModelSpec, eig: Option<&Eigentriple>) -> ValidationReport {
    let mut report = ValidationReport::default();
    match spec {
        ModelSpec::Chain(m) => {
            check_chain(&mut report, &m.motion);
            report.push(
                "state sets agree",
                if m.branching.slots() == m.motion.len() {
                    vec![]
                } else {
                    vec![format!(
                        "{} branching slots for {} states",
                        m.branching.slots(),
                        m.motion.len()
                    )]
                },
            );
        }
        ModelSpec::Diffusion(m) => {
            check_diffusion(&mut report, &m.motion);
            report.push(
                "spatially constant branching",
                if m.branching.slots() == 1 {
                    vec![]
                } else {
                    vec![format!("{} slots, expected 1", m.branching.slots())]
                },
            );
        }
    }
    check_branching(&mut report, spec.branching());
    if let Some(eig) = eig {
        report.push(
            "λ₁>0",
            if eig.lambda1 > 0.0 {
                vec![]
            } else {
                vec![format!("lambda1 = {}", eig.lambda1)]
            },
        );
    }
    report
}

fn check_chain(report: &mut ValidationReport, chain: &FiniteChainMotion) {
    let n = chain.len();
    let mut offdiag = Vec::new();
    let mut rows = Vec::new();
    for x in 0..n {
        let mut sum = 0.0;
        for y in 0..n {
            let q = chain.rate(x, y);
            if x != y && q < 0.0 {
                offdiag.push(format!("Q[{x}][{y}] = {q}"));
            }
            sum += q;
        }
        // row sum of the killed generator Q - diag(κ), plus κ
        let residual = (sum - chain.killing()[x]) + chain.killing()[x];
        if residual.abs() > EXACT_TOL {
            rows.push(format!("row {x}: {residual:e}"));
        }
    }
    report.push("off-diagonal >= 0", offdiag);
    report.push("row sum + killing = 0", rows);
    report.push(
        "killing >= 0",
        failing_entries(chain.killing(), |k| k >= 0.0, "kappa"),
    );
    report.push(
        "measure m > 0",
        failing_entries(chain.measure(), |m| m > 0.0, "m"),
    );
    report.push(
        "irreducible",
        unreachable_states(chain)
            .into_iter()
            .map(|(x, y)| format!("{y} not reachable from {x}"))
            .collect(),
    );
}

fn check_diffusion(report: &mut ValidationReport, d: &KilledDiffusion1D) {
    report.push(
        "a < b",
        if d.a < d.b {
            vec![]
        } else {
            vec![format!("({}, {})", d.a, d.b)]
        },
    );
    report.push(
        "dt > 0",
        if d.dt > 0.0 {
            vec![]
        } else {
            vec![format!("dt = {}", d.dt)]
        },
    );
}

fn check_branching(report: &mut ValidationReport, b: &BranchingParams) {
    report.push(
        "0 <= beta <= beta_max",
        failing_entries(b.beta(), |v| v >= 0.0 && v <= b.beta_max(), "beta"),
    );
    let mut low = Vec::new();
    let mut total = Vec::new();
    let mut mean = Vec::new();
    for (slot, law) in b.laws().iter().enumerate() {
        let p01 = law.prob(0) + law.prob(1);
        if p01 != 0.0 {
            low.push(format!("slot {slot}: p0+p1 = {p01}"));
        }
        if let OffspringLaw::Finite(f) = law {
            let s = f.total();
            if (s - 1.0).abs() > EXACT_TOL || f.probs().iter().any(|p| *p < 0.0 || !p.is_finite())
            {
                total.push(format!("slot {slot}: sum = {s}"));
            }
        }
        let a = law.mean();
        if !(a.is_finite() && a >= 2.0) {
            mean.push(format!("slot {slot}: A = {a}"));
        }
    }
    report.push("p0+p1=0", low);
    report.push("sum p = 1", total);
    report.push("A finite and >= 2", mean);
}

fn failing_entries(v: &[f64], ok: impl Fn(f64) -> bool, name: &str) -> Vec<String> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| !ok(**x))
        .map(|(i, x)| format!("{name}[{i}] = {x}"))
        .collect()
}

/// Pairs `(x, y)` with `y` unreachable from `x` along positive rates. Reports
/// at most one pair per source state.
fn unreachable_states(chain: &FiniteChainMotion) -> Vec<(usize, usize)> {
    let n = chain.len();
    let mut out = Vec::new();
    for x in 0..n {
        let mut seen = vec![false; n];
        seen[x] = true;
        let mut stack = vec![x];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && u != v && chain.rate(u, v) > 0.0 {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(y) = seen.iter().position(|s| !s) {
            out.push((x, y));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, BranchingParams, Model};

    #[test]
    fn symmetric_preset_passes_everything() {
        let r = validate_model(&presets::sym(), None);
        assert!(r.passed(), "{r:?}");
        assert!(r.get("irreducible").is_some());
    }

    #[test]
    fn injected_p1_fails_named_check() {
        let law = OffspringLaw::finite([(1, 0.5), (2, 0.5)]);
        let spec = ModelSpec::Chain(Model::new(
            "bad",
            FiniteChainMotion::conservative(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap(),
            BranchingParams::homogeneous(2, 1.0, law).unwrap(),
        ));
        let r = validate_model(&spec, None);
        assert!(!r.get("p0+p1=0").unwrap().passed);
    }

    #[test]
    fn deficient_row_fails_named_check() {
        let spec = ModelSpec::Chain(Model::new(
            "bad",
            FiniteChainMotion::conservative(vec![vec![-1.1, 1.0], vec![1.0, -1.0]]).unwrap(),
            BranchingParams::homogeneous(2, 1.0, OffspringLaw::degenerate(2)).unwrap(),
        ));
        let r = validate_model(&spec, None);
        let failed: Vec<_> = r.failures().map(|c| c.name).collect();
        assert_eq!(failed, vec!["row sum + killing = 0"]);
    }

    #[test]
    fn reducible_chain_is_flagged() {
        let spec = ModelSpec::Chain(Model::new(
            "bad",
            FiniteChainMotion::conservative(vec![vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap(),
            BranchingParams::homogeneous(2, 1.0, OffspringLaw::degenerate(2)).unwrap(),
        ));
        assert!(!validate_model(&spec, None).get("irreducible").unwrap().passed);
    }

    #[test]
    fn heavy_and_diffusion_presets_pass() {
        assert!(validate_model(&presets::heavy(), None).passed());
        assert!(validate_model(&presets::bm(), None).passed());
        assert!(validate_model(&presets::asym(), None).passed());
    }
}
