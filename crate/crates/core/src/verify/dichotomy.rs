use serde::Serialize;

use super::suites::StartPoint;
use super::Harness;
use crate::error::{Error, Result};
use crate::genealogy::{phi_mass_at, simulate_population, simulate_spine_qtilde, simulate_tree_p, spine_partial_sums};
use crate::model::{FiniteChainMotion, KilledDiffusion1D, Model, ModelSpec};
use crate::rng::salt;
use crate::spectral::{llogl_criterion, Criterion, Eigentriple, Tiltable};
use crate::stats::Summary;

/// Threshold for "the martingale has nearly vanished".
pub const DICHOTOMY_EPS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyRow {
    pub t: f64,
    pub replicas: usize,
    /// Mean over non-overflowed replicas.
    pub mean: f64,
    pub std_error: f64,
    /// Overflowed replicas count as `+∞` here.
    pub median: f64,
    pub frac_below_eps: f64,
    pub overflow: usize,
}

/// Order statistics of `max_{ζ_i ≤ T} e^{-λ₁ζ_i} r_i φ(Ỹ_{ζ_i})` under `Q̃`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpineGrowthRow {
    pub t: f64,
    pub median_running_max: f64,
    pub q90_running_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub label: String,
    pub criterion: Criterion,
    pub rows: Vec<DichotomyRow>,
    pub spine_growth: Vec<SpineGrowthRow>,
}

impl DichotomyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,mean,median,frac_below_eps,overflow,criterion_finite\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.t,
                r.mean,
                r.median,
                r.frac_below_eps,
                r.overflow,
                self.criterion.is_finite()
            ));
        }
        out
    }

    pub fn row(&self, t: f64) -> Option<&DichotomyRow> {
        self.rows.iter().find(|r| r.t == t)
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Config("empty T grid".into()));
    }
    if t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config(format!("T grid must be positive and strictly increasing, got {t_grid:?}")));
    }
    Ok(())
}

/// Law of `M_T` over `t_grid` from `n` independent populations started at
/// `x`, together with the spine partial-sum maxima and the `L log L`
/// criterion. A `T = 0` row (`M_0 = 1`) is prepended.
pub fn dichotomy_experiment(
    h: &Harness,
    spec: &ModelSpec,
    eig: &Eigentriple,
    x: StartPoint,
    t_grid: &[f64],
    n: u64,
) -> Result<DichotomyReport> {
    check_grid(t_grid)?;
    let (values, spine_growth) = match spec {
        ModelSpec::Chain(m) => {
            let xs = x.state(m.motion.len())?;
            (chain_values(h, m, eig, xs, t_grid, n), spine_growth(h, m, &FiniteChainMotion::tilt(m, eig)?, eig, xs, t_grid, n))
        }
        ModelSpec::Diffusion(m) => {
            let xp = x.point();
            (diffusion_values(h, m, eig, xp, t_grid, n), spine_growth(h, m, &KilledDiffusion1D::tilt(m, eig)?, eig, xp, t_grid, n))
        }
    };
    let mut rows = vec![DichotomyRow {
        t: 0.0,
        replicas: n as usize,
        mean: 1.0,
        std_error: 0.0,
        median: 1.0,
        frac_below_eps: 0.0,
        overflow: 0,
    }];
    for (j, &t) in t_grid.iter().enumerate() {
        let col: Vec<Option<f64>> = values.iter().map(|v| v[j]).collect();
        let finite: Vec<f64> = col.iter().flatten().copied().collect();
        let overflow = col.len() - finite.len();
        let with_inf: Vec<f64> = col.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        let mean_part = Summary::new(&finite);
        let all = Summary::new(&with_inf);
        rows.push(DichotomyRow {
            t,
            replicas: col.len(),
            mean: mean_part.mean,
            std_error: mean_part.std_error,
            median: all.median(),
            frac_below_eps: all.fraction_below(DICHOTOMY_EPS),
            overflow,
        });
    }
    Ok(DichotomyReport {
        label: spec.label().to_string(),
        criterion: llogl_criterion(spec, eig),
        rows,
        spine_growth,
    })
}

fn chain_values(
    h: &Harness,
    model: &Model<FiniteChainMotion>,
    eig: &Eigentriple,
    x: usize,
    t_grid: &[f64],
    n: u64,
) -> Vec<Vec<Option<f64>>> {
    let phi: Vec<f64> = (0..model.motion.len()).map(|s| eig.phi_at(s)).collect();
    let scale = 1.0 / phi[x];
    h.map(n, |i| {
        let mut rng = h.streams.replica_key(i).salted_rng(salt::POPULATION);
        let out = simulate_population(model, &phi, x, t_grid, h.n_max as u64, &mut rng);
        out.phi_mass
            .iter()
            .zip(t_grid)
            .map(|(m, t)| m.map(|m| (-eig.lambda1 * t).exp() * m * scale))
            .collect()
    })
}

fn diffusion_values(
    h: &Harness,
    model: &Model<KilledDiffusion1D>,
    eig: &Eigentriple,
    x: f64,
    t_grid: &[f64],
    n: u64,
) -> Vec<Vec<Option<f64>>> {
    let t_max = *t_grid.last().expect("grid checked");
    let scale = 1.0 / eig.phi_at(x);
    h.map(n, |i| {
        let tree = simulate_tree_p(model, x, t_max, h.streams.replica_key(i), h.n_max);
        t_grid
            .iter()
            .map(|&t| (!tree.overflowed).then(|| (-eig.lambda1 * t).exp() * phi_mass_at(&tree, eig, t) * scale))
            .collect()
    })
}

fn spine_growth<M: Tiltable>(
    h: &Harness,
    model: &Model<M>,
    tilted: &M::Tilted,
    eig: &Eigentriple,
    x: M::State,
    t_grid: &[f64],
    n: u64,
) -> Vec<SpineGrowthRow> {
    let t_max = *t_grid.last().expect("grid checked");
    let hs = h.fork("spine growth");
    let maxima: Vec<Vec<f64>> = hs.map(n, |i| {
        let deco = simulate_spine_qtilde(model, tilted, x, t_max, hs.streams.replica_key(i));
        let sums = spine_partial_sums(&deco, eig);
        t_grid.iter().map(|&t| sums.max_until(t)).collect()
    });
    t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let s = Summary::new(&maxima.iter().map(|v| v[j]).collect::<Vec<_>>());
            SpineGrowthRow {
                t,
                median_running_max: s.median(),
                q90_running_max: s.quantile(0.9),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastCheck {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

/// Side-by-side reading of a finite-criterion and a divergent-criterion run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastReport {
    pub finite: DichotomyReport,
    pub divergent: DichotomyReport,
    pub checks: Vec<ContrastCheck>,
}

impl ContrastReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Median ratio `T_hi / T_lo` in `[0.5, 2]` for the finite model, at most 0.2
/// for the divergent one, `P(M_T < ε)` strictly increasing over the positive
/// grid for the divergent one, and the criterion classifying both correctly.
pub fn dichotomy_contrast(
    finite: DichotomyReport,
    divergent: DichotomyReport,
    t_lo: f64,
    t_hi: f64,
) -> Result<ContrastReport> {
    let ratio = |r: &DichotomyReport| -> Result<f64> {
        let lo = r.row(t_lo).ok_or_else(|| Error::Config(format!("T={t_lo} not in the grid of {}", r.label)))?;
        let hi = r.row(t_hi).ok_or_else(|| Error::Config(format!("T={t_hi} not in the grid of {}", r.label)))?;
        Ok(hi.median / lo.median)
    };
    let rf = ratio(&finite)?;
    let rd = ratio(&divergent)?;
    let fracs: Vec<f64> = divergent.rows.iter().filter(|r| r.t > 0.0).map(|r| r.frac_below_eps).collect();
    let increasing = fracs.windows(2).all(|w| w[1] > w[0]);
    let checks = vec![
        ContrastCheck {
            name: format!("{} median ratio T{t_hi}/T{t_lo} in [0.5, 2]", finite.label),
            value: rf,
            passed: (0.5..=2.0).contains(&rf),
        },
        ContrastCheck {
            name: format!("{} median ratio T{t_hi}/T{t_lo} <= 0.2", divergent.label),
            value: rd,
            passed: rd <= 0.2,
        },
        ContrastCheck {
            name: format!("{} P(M_T < {DICHOTOMY_EPS}) strictly increasing", divergent.label),
            value: fracs.last().copied().unwrap_or(f64::NAN),
            passed: increasing,
        },
        ContrastCheck {
            name: format!("{} criterion finite", finite.label),
            value: finite.criterion.value().unwrap_or(f64::INFINITY),
            passed: finite.criterion.is_finite(),
        },
        ContrastCheck {
            name: format!("{} criterion diverges", divergent.label),
            value: divergent.criterion.value().unwrap_or(f64::INFINITY),
            passed: !divergent.criterion.is_finite(),
        },
    ];
    Ok(ContrastReport {
        finite,
        divergent,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::spectral::principal_eigentriple;

    #[test]
    fn grid_is_validated() {
        assert!(check_grid(&[1.0, 2.0, 4.0]).is_ok());
        assert!(check_grid(&[1.0, 1.0]).is_err());
        assert!(check_grid(&[2.0, 1.0]).is_err());
        assert!(check_grid(&[0.0, 1.0]).is_err());
        assert!(check_grid(&[]).is_err());
    }

    #[test]
    fn small_sym_run_is_reasonable() {
        let spec = presets::sym();
        let eig = principal_eigentriple(&spec).unwrap();
        let h = Harness::new(9, 1);
        let r = dichotomy_experiment(&h, &spec, &eig, StartPoint::State(0), &[1.0, 2.0], 2000).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows[0].t, 0.0);
        assert!((r.rows[2].mean - 1.0).abs() < 5.0 * r.rows[2].std_error);
        assert!(r.criterion.is_finite());
        assert_eq!(r.spine_growth.len(), 2);
        assert!(r.spine_growth[1].median_running_max >= r.spine_growth[0].median_running_max);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("T,mean,median,frac_below_eps,overflow,criterion_finite"));
    }

    #[test]
    fn diffusion_values_at_small_horizon() {
        let spec = presets::bm_with_dt(1e-2);
        let eig = principal_eigentriple(&spec).unwrap();
        let h = Harness::new(4, 1);
        let x = StartPoint::Point(std::f64::consts::FRAC_PI_2);
        let r = dichotomy_experiment(&h, &spec, &eig, x, &[0.5], 500).unwrap();
        assert!((r.rows[1].mean - 1.0).abs() < 5.0 * r.rows[1].std_error + 0.05);
    }
}
