use serde::{Deserialize, Serialize};

use super::{EstimatorReport, Harness};
use crate::error::{Error, Result};
use crate::genealogy::{
    compute_eta, compute_m, project_eta, resample_subtrees, select_uniform_spine,
    simulate_spine_qtilde, simulate_tree_p, simulate_tree_qtilde, MarkedTree,
};
use crate::model::{Field, FiniteChainMotion, Model, ModelSpec, Motion, OffspringLaw, StateSpace};
use crate::rng::salt;
use crate::spectral::{
    expm, integrated_semigroup, many_to_one_chain, many_to_one_diffusion, solve_u_equation_checked,
    tilted_generator, Eigentriple, Tiltable,
};
use crate::stats::{chi_square, stratified_chi_square, Summary};

/// Where the root particle starts: a chain state or a point of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartPoint {
    State(usize),
    Point(f64),
}

impl StartPoint {
    pub fn state(self, n: usize) -> Result<usize> {
        match self {
            StartPoint::State(s) if s < n => Ok(s),
            other => Err(Error::Config(format!("{other:?} is not a state of a {n}-state chain"))),
        }
    }

    pub fn point(self) -> f64 {
        match self {
            StartPoint::State(s) => s as f64,
            StartPoint::Point(x) => x,
        }
    }
}

/// Samples `g(tree)` over `n` independent `P_x` trees; `None` for overflow.
fn over_p_trees<M, G>(h: &Harness, model: &Model<M>, x: M::State, t: f64, n: u64, g: G) -> Vec<Option<f64>>
where
    M: Motion,
    G: Fn(&MarkedTree<M::State>) -> f64 + Sync + Send,
{
    h.map(n, |i| {
        let tree = simulate_tree_p(model, x, t, h.streams.replica_key(i), h.n_max);
        (!tree.overflowed).then(|| g(&tree))
    })
}

/// `E_x ⟨f, X_T⟩` by simulation against the exact value: the Feynman–Kac
/// semigroup on the chain, the Dirichlet eigenexpansion on the interval.
pub fn many_to_one_test(
    h: &Harness,
    spec: &ModelSpec,
    f: &Field,
    x: StartPoint,
    t: f64,
    n: u64,
) -> Result<EstimatorReport> {
    let name = format!("many-to-one {} f={} x={} T={t}", spec.label(), describe(f), render(x));
    match spec {
        ModelSpec::Chain(m) => {
            let xs = x.state(m.motion.len())?;
            let table: Vec<f64> = (0..m.motion.len()).map(|s| s.eval(f)).collect();
            check_finite(&table)?;
            let oracle = many_to_one_chain(m, &table, xs, t);
            let samples = over_p_trees(h, m, xs, t, n, |tree| {
                tree.alive().filter_map(|u| u.position_at_horizon()).map(|s| table[s]).sum()
            });
            Ok(EstimatorReport::three_sigma(name, &samples, oracle))
        }
        ModelSpec::Diffusion(m) => {
            let xp = x.point();
            let oracle = many_to_one_diffusion(m, |y| y.eval(f), xp, t)?;
            check_finite(&[oracle])?;
            let samples = over_p_trees(h, m, xp, t, n, |tree| {
                tree.alive().filter_map(|u| u.position_at_horizon()).map(|s| s.eval(f)).sum()
            });
            Ok(EstimatorReport::three_sigma(name, &samples, oracle))
        }
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Config("test function is not defined on this backend".into()))
    }
}

fn describe(f: &Field) -> String {
    match f {
        Field::Table(v) => format!("{v:?}"),
        Field::Constant(c) => format!("{c}"),
        Field::Sine { scale, .. } => format!("{scale}*sin"),
    }
}

fn render(x: StartPoint) -> String {
    match x {
        StartPoint::State(s) => s.to_string(),
        StartPoint::Point(p) => format!("{p:.6}"),
    }
}

/// `E[M_T] = 1` at every `T` of the grid, with the median alongside.
pub fn martingale_mean_test(
    h: &Harness,
    spec: &ModelSpec,
    eig: &Eigentriple,
    x: StartPoint,
    t_grid: &[f64],
    n: u64,
) -> Result<Vec<EstimatorReport>> {
    let mut out = Vec::new();
    for &t in t_grid {
        let hh = h.fork(&format!("T={t}"));
        let name = format!("martingale mean {} x={} T={t}", spec.label(), render(x));
        let samples = match spec {
            ModelSpec::Chain(m) => {
                let xs = x.state(m.motion.len())?;
                over_p_trees(&hh, m, xs, t, n, |tree| compute_m(tree, eig).m.unwrap_or(f64::NAN))
            }
            ModelSpec::Diffusion(m) => over_p_trees(&hh, m, x.point(), t, n, |tree| {
                compute_m(tree, eig).m.unwrap_or(f64::NAN)
            }),
        };
        out.push(EstimatorReport::three_sigma(name, &samples, 1.0));
    }
    Ok(out)
}

/// `E_P̃[η̃_T] = 1` for a uniformly chosen spine, and the per-tree identity
/// `project_eta = M_T`.
pub fn eta_mean_test(
    h: &Harness,
    spec: &ModelSpec,
    eig: &Eigentriple,
    x: StartPoint,
    t: f64,
    n: u64,
) -> Result<Vec<EstimatorReport>> {
    match spec {
        ModelSpec::Chain(m) => eta_mean_generic(h, m, eig, x.state(m.motion.len())?, t, n),
        ModelSpec::Diffusion(m) => eta_mean_generic(h, m, eig, x.point(), t, n),
    }
}

fn eta_mean_generic<M: Motion>(
    h: &Harness,
    model: &Model<M>,
    eig: &Eigentriple,
    x: M::State,
    t: f64,
    n: u64,
) -> Result<Vec<EstimatorReport>> {
    let per: Vec<Option<(f64, f64)>> = h.map(n, |i| {
        let key = h.streams.replica_key(i);
        let tree = simulate_tree_p(model, x, t, key, h.n_max);
        if tree.overflowed {
            return None;
        }
        let mut rng = key.salted_rng(salt::SELECT);
        let spine = select_uniform_spine(&tree, &mut rng)?;
        let eta = compute_eta(model, &spine, eig).eta?;
        let m = compute_m(&tree, eig).m?;
        let gap = (project_eta(model, &tree, eig)? - m).abs();
        Some((eta, gap))
    });
    let etas: Vec<Option<f64>> = per.iter().map(|p| p.map(|v| v.0)).collect();
    let worst = per.iter().flatten().map(|p| p.1).fold(0.0, f64::max);
    let label = &model.label;
    Ok(vec![
        EstimatorReport::three_sigma(format!("eta mean {label} T={t}"), &etas, 1.0),
        EstimatorReport::tolerance(
            format!("projection identity {label} T={t}"),
            worst,
            0.0,
            1e-10,
            n as usize,
        ),
    ])
}

/// Law of the spine under `Q̃`: position at `T` against the tilted chain
/// (chain backend only), mean fission count against `∫ E^φ[Aβ(Ỹ_s)] ds`, and
/// offspring counts at spine fissions against the size-biased law.
pub fn spine_dynamics_test(
    h: &Harness,
    spec: &ModelSpec,
    eig: &Eigentriple,
    x: StartPoint,
    t: f64,
    n: u64,
) -> Result<Vec<EstimatorReport>> {
    match spec {
        ModelSpec::Chain(m) => {
            let xs = x.state(m.motion.len())?;
            let g = tilted_generator(m, eig)?;
            let marginal: Vec<f64> = {
                let p = expm(&(&g * t));
                (0..m.motion.len()).map(|y| p[(xs, y)]).collect()
            };
            let fission_oracle = integrated_semigroup(&g, m.branching.a_beta(), xs, t);
            let tilted = FiniteChainMotion::tilt(m, eig)?;
            let runs = spine_runs(h, m, &tilted, xs, t, n);
            let mut counts = vec![0u64; m.motion.len()];
            for r in &runs {
                counts[r.terminal] += 1;
            }
            let mut out = vec![EstimatorReport::chi_square(
                format!("spine marginal {} T={t}", m.label),
                chi_square(&counts, &marginal),
                n as usize,
            )];
            out.extend(spine_common(m, &runs, fission_oracle, t));
            Ok(out)
        }
        ModelSpec::Diffusion(m) => {
            let tilted = crate::model::KilledDiffusion1D::tilt(m, eig)?;
            let runs = spine_runs(h, m, &tilted, x.point(), t, n);
            let oracle = m.branching.a_beta()[0] * t;
            Ok(spine_common(m, &runs, oracle, t))
        }
    }
}

struct SpineRun<S> {
    terminal: S,
    fissions: Vec<(usize, u64)>,
}

fn spine_runs<M: Tiltable>(
    h: &Harness,
    model: &Model<M>,
    tilted: &M::Tilted,
    x: M::State,
    t: f64,
    n: u64,
) -> Vec<SpineRun<M::State>> {
    h.map(n, |i| {
        let deco = simulate_spine_qtilde(model, tilted, x, t, h.streams.replica_key(i));
        SpineRun {
            terminal: deco.terminal().expect("the spine is never killed under Q̃"),
            fissions: deco.fissions().map(|f| (f.position.slot(), f.offspring)).collect(),
        }
    })
}

/// Bins `0..=k_max` plus a tail bin for unbounded laws.
fn offspring_bins(law: &OffspringLaw) -> (usize, Vec<f64>) {
    match law.support_max() {
        Some(k) => (k, (0..=k).map(|j| law.prob(j as u64)).collect()),
        None => {
            let k = 64;
            let mut p: Vec<f64> = (0..=k).map(|j| law.prob(j as u64)).collect();
            p.push((1.0 - p.iter().sum::<f64>()).max(0.0));
            (k, p)
        }
    }
}

fn spine_common<M: Motion>(
    model: &Model<M>,
    runs: &[SpineRun<M::State>],
    fission_oracle: f64,
    t: f64,
) -> Vec<EstimatorReport> {
    let b = &model.branching;
    let counts: Vec<Option<f64>> = runs.iter().map(|r| Some(r.fissions.len() as f64)).collect();
    let mut strata: Vec<(Vec<u64>, Vec<f64>)> = (0..b.slots())
        .map(|s| {
            let (_, p) = offspring_bins(b.size_biased(s));
            (vec![0u64; p.len()], p)
        })
        .collect();
    let mut pooled = 0usize;
    for r in runs {
        for &(slot, k) in &r.fissions {
            let obs = &mut strata[slot].0;
            let last = obs.len() - 1;
            obs[(k as usize).min(last)] += 1;
            pooled += 1;
        }
    }
    let label = &model.label;
    let mut size_bias = EstimatorReport::chi_square(
        format!("spine size-bias {label} T={t}"),
        stratified_chi_square(&strata),
        pooled,
    );
    size_bias.replicas = pooled;
    vec![
        EstimatorReport::three_sigma(format!("spine fission mean {label} T={t}"), &counts, fission_oracle),
        size_bias,
    ]
}

/// For each of `r` spines, the mean of `φ(x) M_T` over `s` subtree resamples
/// against the conditional expectation given the spine. Passes when at least
/// 98% of the spines have `|z| ≤ 3`.
pub fn spine_decomposition_test(
    h: &Harness,
    spec: &ModelSpec,
    eig: &Eigentriple,
    x: StartPoint,
    t: f64,
    r: u64,
    s: u64,
) -> Result<EstimatorReport> {
    match spec {
        ModelSpec::Chain(m) => {
            let tilted = FiniteChainMotion::tilt(m, eig)?;
            Ok(decomposition_generic(h, m, &tilted, eig, x.state(m.motion.len())?, t, r, s))
        }
        ModelSpec::Diffusion(m) => {
            let tilted = crate::model::KilledDiffusion1D::tilt(m, eig)?;
            Ok(decomposition_generic(h, m, &tilted, eig, x.point(), t, r, s))
        }
    }
}

pub const DECOMPOSITION_PASS_FRACTION: f64 = 0.98;

#[allow(clippy::too_many_arguments)]
fn decomposition_generic<M: Tiltable>(
    h: &Harness,
    model: &Model<M>,
    tilted: &M::Tilted,
    eig: &Eigentriple,
    x: M::State,
    t: f64,
    r: u64,
    s: u64,
) -> EstimatorReport {
    let decay = (-eig.lambda1 * t).exp();
    let verdicts: Vec<Option<bool>> = h.map(r, |i| {
        let key = h.streams.replica_key(i);
        let deco = simulate_spine_qtilde(model, tilted, x, t, key);
        let rhs = crate::genealogy::spine_rhs(&deco, eig);
        let base = key.derive(salt::RESAMPLE);
        let values: Vec<f64> = (0..s)
            .filter_map(|j| {
                let tree = resample_subtrees(model, &deco, base.derive(j), h.n_max);
                (!tree.overflowed).then(|| {
                    decay * tree.alive().filter_map(|u| u.position_at_horizon()).map(|p| eig.phi_at(p)).sum::<f64>()
                })
            })
            .collect();
        if values.is_empty() {
            return None;
        }
        let sum = Summary::new(&values);
        let diff = sum.mean - rhs;
        Some(if sum.std_error > 0.0 {
            (diff / sum.std_error).abs() <= super::Z_THRESHOLD
        } else {
            diff.abs() <= 1e-12 * rhs.abs().max(1.0)
        })
    });
    let kept: Vec<bool> = verdicts.iter().flatten().copied().collect();
    let dropped = verdicts.len() - kept.len();
    let fraction = kept.iter().filter(|v| **v).count() as f64 / kept.len().max(1) as f64;
    EstimatorReport::at_least(
        format!("spine decomposition {} T={t} R={r} S={s}", model.label),
        fraction,
        DECOMPOSITION_PASS_FRACTION,
        r as usize,
        dropped,
    )
}

/// Bounded functionals of a tree at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeFunctional {
    One,
    /// `min(|L_T|, cap)`.
    CappedPopulation { cap: usize },
    /// `1{|L_T| ≥ k}`.
    PopulationAtLeast { k: usize },
    /// `min(Σ_{u ∈ L_T, slot(u) ∈ slots} φ(Y_u), cap)`.
    CappedPhiMass { slots: Vec<usize>, cap: f64 },
}

impl TreeFunctional {
    pub fn eval<S: StateSpace>(&self, tree: &MarkedTree<S>, eig: &Eigentriple) -> f64 {
        match self {
            TreeFunctional::One => 1.0,
            TreeFunctional::CappedPopulation { cap } => tree.alive_count().min(*cap) as f64,
            TreeFunctional::PopulationAtLeast { k } => (tree.alive_count() >= *k) as u8 as f64,
            TreeFunctional::CappedPhiMass { slots, cap } => tree
                .alive()
                .filter_map(|u| u.position_at_horizon())
                .filter(|p| slots.contains(&p.slot()))
                .map(|p| eig.phi_at(p))
                .sum::<f64>()
                .min(*cap),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TreeFunctional::One => "1".into(),
            TreeFunctional::CappedPopulation { cap } => format!("min(|L_T|,{cap})"),
            TreeFunctional::PopulationAtLeast { k } => format!("1{{|L_T|>={k}}}"),
            TreeFunctional::CappedPhiMass { slots, cap } => format!("min(phi-mass{slots:?},{cap})"),
        }
    }
}

/// `E_P[M_T F] = E_Q̃[F]` for each functional, by two independent simulations.
pub fn change_of_measure_test(
    h: &Harness,
    spec: &ModelSpec,
    eig: &Eigentriple,
    x: StartPoint,
    t: f64,
    n: u64,
    functionals: &[TreeFunctional],
) -> Result<Vec<EstimatorReport>> {
    match spec {
        ModelSpec::Chain(m) => {
            let tilted = FiniteChainMotion::tilt(m, eig)?;
            Ok(com_generic(h, m, &tilted, eig, x.state(m.motion.len())?, t, n, functionals))
        }
        ModelSpec::Diffusion(m) => {
            let tilted = crate::model::KilledDiffusion1D::tilt(m, eig)?;
            Ok(com_generic(h, m, &tilted, eig, x.point(), t, n, functionals))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn com_generic<M: Tiltable>(
    h: &Harness,
    model: &Model<M>,
    tilted: &M::Tilted,
    eig: &Eigentriple,
    x: M::State,
    t: f64,
    n: u64,
    functionals: &[TreeFunctional],
) -> Vec<EstimatorReport> {
    let hp = h.fork("P");
    let hq = h.fork("Q");
    let p_side: Vec<Option<Vec<f64>>> = hp.map(n, |i| {
        let tree = simulate_tree_p(model, x, t, hp.streams.replica_key(i), h.n_max);
        let m = compute_m(&tree, eig).m?;
        Some(functionals.iter().map(|f| m * f.eval(&tree, eig)).collect())
    });
    let q_side: Vec<Option<Vec<f64>>> = hq.map(n, |i| {
        let (tree, _) = simulate_tree_qtilde(model, tilted, x, t, hq.streams.replica_key(i), h.n_max);
        (!tree.overflowed).then(|| functionals.iter().map(|f| f.eval(&tree, eig)).collect())
    });
    functionals
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let a: Vec<Option<f64>> = p_side.iter().map(|v| v.as_ref().map(|v| v[j])).collect();
            let b: Vec<Option<f64>> = q_side.iter().map(|v| v.as_ref().map(|v| v[j])).collect();
            EstimatorReport::mc_vs_mc(
                format!("change of measure {} F={} T={t}", model.label, f.describe()),
                &a,
                &b,
            )
        })
        .collect()
}

/// `E_x exp(-⟨f, X_T⟩)` against the RK4 solution `u_T(x)`, plus the RK4
/// step-halving check.
#[allow(clippy::too_many_arguments)]
pub fn laplace_functional_test(
    h: &Harness,
    spec: &ModelSpec,
    x: StartPoint,
    f: &[f64],
    t: f64,
    n: u64,
    rk4_step: f64,
) -> Result<Vec<EstimatorReport>> {
    let m = spec.as_chain().ok_or(Error::UnsupportedBackend {
        op: "laplace_functional_test",
        backend: "killed-diffusion",
    })?;
    let xs = x.state(m.motion.len())?;
    let sol = solve_u_equation_checked(m, f, t, rk4_step)?;
    let samples = over_p_trees(h, m, xs, t, n, |tree| {
        let s: f64 = tree.alive().filter_map(|u| u.position_at_horizon()).map(|p| f[p]).sum();
        (-s).exp()
    });
    Ok(vec![
        EstimatorReport::three_sigma(
            format!("laplace functional {} f={f:?} T={t}", m.label),
            &samples,
            sol.u[xs],
        ),
        EstimatorReport::tolerance(
            format!("rk4 step halving {} f={f:?} T={t}", m.label),
            sol.halving_difference,
            0.0,
            1e-8,
            1,
        ),
    ])
}
