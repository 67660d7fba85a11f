//! Order-independent summaries and chi-square tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Mean, standard error and order statistics of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// `sd / √n`.
    pub std_error: f64,
    sorted: Vec<f64>,
}

impl Summary {
    /// Values are sorted first, so the result does not depend on input order.
    pub fn new(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let finite: Vec<f64> = sorted.iter().copied().filter(|v| v.is_finite()).collect();
        let nf = finite.len() as f64;
        let mean = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / nf
        };
        if let (Some(first), Some(last)) = (finite.first(), finite.last()) {
            if first == last {
                return Self {
                    n,
                    mean: *first,
                    std_error: 0.0,
                    sorted,
                };
            }
        }
        let std_error = if finite.len() < 2 {
            0.0
        } else {
            let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        };
        Self {
            n,
            mean,
            std_error,
            sorted,
        }
    }

    /// Empirical quantile (lower order statistic). `+∞` entries count as mass.
    pub fn quantile(&self, q: f64) -> f64 {
        if self.sorted.is_empty() {
            return f64::NAN;
        }
        let i = ((q * self.n as f64).ceil() as usize).clamp(1, self.n) - 1;
        self.sorted[i]
    }

    /// Median; for even `n` the mean of the two middle values.
    pub fn median(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            self.sorted[n / 2]
        } else {
            let (a, b) = (self.sorted[n / 2 - 1], self.sorted[n / 2]);
            if a.is_infinite() || b.is_infinite() {
                b
            } else {
                0.5 * (a + b)
            }
        }
    }

    pub fn fraction_below(&self, eps: f64) -> f64 {
        self.sorted.partition_point(|v| *v < eps) as f64 / self.n as f64
    }
}

/// Outcome of a goodness-of-fit test.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Minimum expected count per bin after lumping.
pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square of `observed` against `probs` (same ordering, probs
/// summing to 1). Adjacent bins are lumped left to right until every
/// expected count reaches `MIN_EXPECTED`; a short last group joins its
/// neighbour. Fewer than two groups is inconclusive.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    let groups = lumped(observed, probs)?;
    let stat: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = groups.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| 1.0 - d.cdf(stat))
        .unwrap_or(f64::NAN);
    Ok(ChiSquare {
        statistic: stat,
        dof,
        p_value,
        bins: groups.len(),
    })
}

/// Chi-square over several independent strata, summing statistics and
/// degrees of freedom. Strata that cannot form two bins are skipped.
pub fn stratified_chi_square(strata: &[(Vec<u64>, Vec<f64>)]) -> Result<ChiSquare> {
    let mut stat = 0.0;
    let mut dof = 0;
    let mut bins = 0;
    for (obs, probs) in strata {
        if let Ok(g) = lumped(obs, probs) {
            stat += g.iter().map(|(o, e)| (o - e) * (o - e) / e).sum::<f64>();
            dof += g.len() - 1;
            bins += g.len();
        }
    }
    if dof == 0 {
        return Err(Error::Inconclusive(
            "fewer than two bins with expected count >= 5 in every stratum".into(),
        ));
    }
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| 1.0 - d.cdf(stat))
        .unwrap_or(f64::NAN);
    Ok(ChiSquare {
        statistic: stat,
        dof,
        p_value,
        bins,
    })
}

fn lumped(observed: &[u64], probs: &[f64]) -> Result<Vec<(f64, f64)>> {
    assert_eq!(observed.len(), probs.len(), "bins and probabilities differ in length");
    let total: u64 = observed.iter().sum();
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (obs, p) in observed.iter().zip(probs) {
        o += *obs as f64;
        e += p * total as f64;
        if e >= MIN_EXPECTED {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    if groups.len() < 2 {
        return Err(Error::Inconclusive(format!(
            "only {} bin(s) with expected count >= {MIN_EXPECTED}",
            groups.len()
        )));
    }
    Ok(groups)
}
