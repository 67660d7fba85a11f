use rand::Rng;
use rand_distr::Exp1;

use crate::model::{FiniteChainMotion, Model};

/// `⟨φ, X_t⟩` at each requested horizon; `None` once the population cap was
/// exceeded.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationOutcome {
    pub phi_mass: Vec<Option<f64>>,
    pub events: u64,
}

/// Occupation counts of the branching chain, by exact Gillespie simulation.
///
/// Only the number of particles per state is tracked, which is all that
/// `⟨φ, X_t⟩` needs. One trajectory serves every horizon in `horizons`
/// (ascending). The population is capped at `n_max` particles.
pub fn simulate_population<R: Rng + ?Sized>(
    model: &Model<FiniteChainMotion>,
    phi: &[f64],
    x: usize,
    horizons: &[f64],
    n_max: u64,
    rng: &mut R,
) -> PopulationOutcome {
    let chain = &model.motion;
    let b = &model.branching;
    let n = chain.len();
    let motion_rate: Vec<f64> = (0..n).map(|s| chain.event_rate(s)).collect();
    let beta = b.beta();
    let mut counts = vec![0u64; n];
    counts[x] = 1;
    let mut total: u64 = 1;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(horizons.len());
    let mut events = 0u64;
    let mass = |c: &[u64]| -> f64 { c.iter().zip(phi).map(|(k, p)| *k as f64 * p).sum() };
    let mut next = 0;
    while next < horizons.len() {
        let w: f64 = (0..n)
            .map(|s| counts[s] as f64 * (motion_rate[s] + beta[s]))
            .sum();
        let dt = if w > 0.0 {
            let e: f64 = rng.sample(Exp1);
            e / w
        } else {
            f64::INFINITY
        };
        while next < horizons.len() && t + dt > horizons[next] {
            out.push(Some(mass(&counts)));
            next += 1;
        }
        if next == horizons.len() {
            break;
        }
        t += dt;
        events += 1;
        let mut u = rng.gen::<f64>() * w;
        let mut state = n - 1;
        let mut branch = false;
        for s in 0..n {
            let wb = counts[s] as f64 * beta[s];
            if u < wb {
                state = s;
                branch = true;
                break;
            }
            u -= wb;
            let wm = counts[s] as f64 * motion_rate[s];
            if u < wm {
                state = s;
                break;
            }
            u -= wm;
        }
        if counts[state] == 0 {
            // rounding pushed u past the last live channel
            state = (0..n).rev().find(|s| counts[*s] > 0).expect("live population");
        }
        if branch {
            let k = b.offspring(state).sample(rng);
            counts[state] = counts[state].saturating_add(k - 1);
            total = total.saturating_add(k - 1);
            if total > n_max {
                out.resize(horizons.len(), None);
                break;
            }
        } else {
            match chain.pick_destination(state, rng) {
                Some(y) => {
                    counts[state] -= 1;
                    counts[y] += 1;
                }
                None => {
                    counts[state] -= 1;
                    total -= 1;
                }
            }
        }
    }
    PopulationOutcome {
        phi_mass: out,
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_population_matches_growth() {
        let spec = presets::sym();
        let m = spec.as_chain().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let o = simulate_population(m, &[1.0, 1.0], 0, &[1.0], 1_000_000, &mut rng);
            let v = o.phi_mass[0].unwrap();
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 1f64.exp()).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn zero_horizon_and_overflow() {
        let spec = presets::sym();
        let m = spec.as_chain().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let o = simulate_population(m, &[1.0, 1.0], 0, &[0.0, 20.0], 100, &mut rng);
        assert_eq!(o.phi_mass[0], Some(1.0));
        assert_eq!(o.phi_mass[1], None);
    }
}
