//! Monte Carlo estimators checked against the spectral oracles.
//!
//! Every suite returns [`EstimatorReport`]s. Replicas are fanned out on a
//! worker pool but collected in replica order, and every summary sorts its
//! sample first, so reports are identical for any worker count.

mod dichotomy;
mod suites;

pub use dichotomy::{
    dichotomy_contrast, dichotomy_experiment, ContrastReport, DichotomyReport, DichotomyRow,
    ContrastCheck, SpineGrowthRow, DICHOTOMY_EPS,
};
pub use suites::{
    change_of_measure_test, eta_mean_test, laplace_functional_test, many_to_one_test,
    martingale_mean_test, spine_decomposition_test, spine_dynamics_test, StartPoint, TreeFunctional,
    DECOMPOSITION_PASS_FRACTION,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::genealogy::DEFAULT_N_MAX;
use crate::rng::{combine, Streams};
use crate::stats::{ChiSquare, Summary};

/// Significance level of every chi-square test.
pub const P_THRESHOLD: f64 = 1e-3;
/// Largest accepted `|z|`.
pub const Z_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    /// `|estimate - oracle| ≤ 3 SE`.
    ThreeSigma,
    /// Chi-square p-value at least the threshold.
    ChiSquare { threshold: f64 },
    /// Deterministic identity, `|estimate - oracle| < tol`.
    Tolerance { tol: f64 },
    /// `estimate ≥ threshold`.
    AtLeast { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub replicas: usize,
    pub overflow_count: usize,
    pub oracle: Option<f64>,
    pub z_score: Option<f64>,
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    pub rule: Rule,
    pub verdict: Verdict,
}

impl EstimatorReport {
    /// Mean of `samples` (`None` = overflowed replica) against `oracle`.
    pub fn three_sigma(name: impl Into<String>, samples: &[Option<f64>], oracle: f64) -> Self {
        let finite: Vec<f64> = samples.iter().flatten().copied().collect();
        let overflow_count = samples.len() - finite.len();
        let s = Summary::new(&finite);
        let mut r = Self::from_summary(name, &s, overflow_count, Some(oracle), Rule::ThreeSigma);
        r.median = Some(s.median());
        r
    }

    fn from_summary(
        name: impl Into<String>,
        s: &Summary,
        overflow_count: usize,
        oracle: Option<f64>,
        rule: Rule,
    ) -> Self {
        let mut r = Self {
            name: name.into(),
            estimate: s.mean,
            std_error: s.std_error,
            replicas: s.n + overflow_count,
            overflow_count,
            oracle,
            z_score: None,
            p_value: None,
            median: None,
            rule,
            verdict: Verdict::Inconclusive,
        };
        r.decide();
        r
    }

    /// Two independent estimates of the same quantity; `z` uses the combined SE.
    pub fn mc_vs_mc(name: impl Into<String>, lhs: &[Option<f64>], rhs: &[Option<f64>]) -> Self {
        let a: Vec<f64> = lhs.iter().flatten().copied().collect();
        let b: Vec<f64> = rhs.iter().flatten().copied().collect();
        let (sa, sb) = (Summary::new(&a), Summary::new(&b));
        let overflow = (lhs.len() - a.len()) + (rhs.len() - b.len());
        let mut r = Self {
            name: name.into(),
            estimate: sa.mean,
            std_error: (sa.std_error.powi(2) + sb.std_error.powi(2)).sqrt(),
            replicas: lhs.len() + rhs.len(),
            overflow_count: overflow,
            oracle: Some(sb.mean),
            z_score: None,
            p_value: None,
            median: None,
            rule: Rule::ThreeSigma,
            verdict: Verdict::Inconclusive,
        };
        if a.is_empty() || b.is_empty() {
            return r;
        }
        r.decide();
        r
    }

    pub fn chi_square(name: impl Into<String>, test: crate::Result<ChiSquare>, replicas: usize) -> Self {
        let mut r = Self {
            name: name.into(),
            estimate: f64::NAN,
            std_error: f64::NAN,
            replicas,
            overflow_count: 0,
            oracle: None,
            z_score: None,
            p_value: None,
            median: None,
            rule: Rule::ChiSquare {
                threshold: P_THRESHOLD,
            },
            verdict: Verdict::Inconclusive,
        };
        if let Ok(c) = test {
            r.estimate = c.statistic;
            r.p_value = Some(c.p_value);
            r.verdict = verdict(c.p_value >= P_THRESHOLD);
        }
        r
    }

    /// A deterministic quantity that must match `oracle` within `tol`.
    pub fn tolerance(name: impl Into<String>, estimate: f64, oracle: f64, tol: f64, replicas: usize) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error: 0.0,
            replicas,
            overflow_count: 0,
            oracle: Some(oracle),
            z_score: None,
            p_value: None,
            median: None,
            rule: Rule::Tolerance { tol },
            verdict: verdict((estimate - oracle).abs() < tol),
        }
    }

    pub fn at_least(name: impl Into<String>, estimate: f64, threshold: f64, replicas: usize, overflow: usize) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error: 0.0,
            replicas,
            overflow_count: overflow,
            oracle: None,
            z_score: None,
            p_value: None,
            median: None,
            rule: Rule::AtLeast { threshold },
            verdict: verdict(estimate >= threshold),
        }
    }

    fn decide(&mut self) {
        let Some(oracle) = self.oracle else { return };
        if self.replicas == self.overflow_count || self.estimate.is_nan() {
            self.verdict = Verdict::Inconclusive;
            return;
        }
        let diff = self.estimate - oracle;
        let z = if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff.abs() <= 1e-12 * oracle.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        self.z_score = Some(z);
        self.verdict = verdict(z.abs() <= Z_THRESHOLD);
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Seeds, worker count and population cap shared by every suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harness {
    pub streams: Streams,
    pub workers: usize,
    pub n_max: usize,
}

impl Harness {
    pub fn new(seed: u64, workers: usize) -> Self {
        Self {
            streams: Streams::new(seed),
            workers: workers.max(1),
            n_max: DEFAULT_N_MAX,
        }
    }

    /// `f(0), ..., f(n-1)` on the worker pool, in index order.
    pub fn map<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .expect("worker pool");
        pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    /// An independent family of streams for one named component.
    pub fn fork(&self, name: &str) -> Self {
        Self {
            streams: self.streams.fork(tag(name)),
            ..*self
        }
    }

    pub fn rerun(&self) -> Self {
        Self {
            streams: self.streams.rerun(),
            ..*self
        }
    }
}

/// Stable 64-bit tag of a component name.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| combine(h, b as u64))
}

/// Reports of one suite after the re-run policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    /// True when the first attempt had a failure and the suite was re-run
    /// once with fresh seeds; `reports` are then from the second attempt.
    pub rerun: bool,
    pub reports: Vec<EstimatorReport>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        !self.reports.iter().any(EstimatorReport::failed)
    }
}

/// Runs `suite`; if any report fails, runs it once more with a fresh seed
/// family and keeps the second result.
pub fn with_rerun<F>(name: &str, harness: &Harness, suite: F) -> SuiteOutcome
where
    F: Fn(&Harness) -> Vec<EstimatorReport>,
{
    let h = harness.fork(name);
    let first = suite(&h);
    if !first.iter().any(EstimatorReport::failed) {
        return SuiteOutcome {
            suite: name.into(),
            rerun: false,
            reports: first,
        };
    }
    SuiteOutcome {
        suite: name.into(),
        rerun: true,
        reports: suite(&h.rerun()),
    }
}
