//! Feynman–Kac semigroups, the principal eigentriple, the ground-state
//! transform and the analytic oracles built on them.

mod expm;
mod laplace;

pub use expm::expm;
pub use laplace::{solve_u_equation, solve_u_equation_checked, LaplaceSolution, DEFAULT_RK4_STEP};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::offspring::heavy_divergence_cutoff;
use crate::model::{
    ConditionedDiffusion1D, Field, FiniteChainMotion, KilledDiffusion1D, Model, ModelSpec, Motion,
    StateSpace,
};

const POWER_MAX_ITER: usize = 100_000;
const RAYLEIGH_TOL: f64 = 1e-13;
const DIRECTION_TOL: f64 = 1e-12;

/// Normalization and invariance thresholds for a usable triple.
pub const NORMALIZATION_TOL: f64 = 1e-10;
pub const INVARIANCE_TOL: f64 = 1e-8;

/// Growth rate with right and left principal eigenfunctions, normalized so
/// that `⟨φ φ̃, m⟩ = 1` and `sup φ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigentriple {
    pub lambda1: f64,
    pub phi: Field,
    pub phi_tilde: Field,
    /// `⟨φ², m⟩`.
    pub phi_sq_m: f64,
}

impl Eigentriple {
    #[inline]
    pub fn phi_at<S: StateSpace>(&self, s: S) -> f64 {
        s.eval(&self.phi)
    }

    #[inline]
    pub fn phi_tilde_at<S: StateSpace>(&self, s: S) -> f64 {
        s.eval(&self.phi_tilde)
    }

    /// Copy with `φ̃` multiplied by `factor`.
    pub fn with_phi_tilde_scaled(&self, factor: f64) -> Self {
        let phi_tilde = match &self.phi_tilde {
            Field::Table(v) => Field::Table(v.iter().map(|x| x * factor).collect()),
            Field::Sine { a, b, scale } => Field::Sine {
                a: *a,
                b: *b,
                scale: scale * factor,
            },
            Field::Constant(c) => Field::Constant(c * factor),
        };
        Self {
            phi_tilde,
            ..self.clone()
        }
    }
}

/// `Q - diag(κ) + diag((A-1)β)`.
pub fn fk_generator(model: &Model<FiniteChainMotion>) -> DMatrix<f64> {
    let chain = &model.motion;
    let n = chain.len();
    let growth = model.branching.growth();
    DMatrix::from_fn(n, n, |x, y| {
        let q = chain.rate(x, y);
        if x == y {
            q - chain.killing()[x] + growth[x]
        } else {
            q
        }
    })
}

/// `exp(t M)` for the Feynman–Kac generator `M`.
pub fn fk_semigroup_chain(model: &Model<FiniteChainMotion>, t: f64) -> DMatrix<f64> {
    expm(&(fk_generator(model) * t))
}

pub fn fk_semigroup(spec: &ModelSpec, t: f64) -> Result<DMatrix<f64>> {
    match spec {
        ModelSpec::Chain(m) => Ok(fk_semigroup_chain(m, t)),
        ModelSpec::Diffusion(m) => Err(Error::UnsupportedBackend {
            op: "fk_semigroup",
            backend: m.motion.backend(),
        }),
    }
}

/// Principal eigentriple. Fails when `λ₁ ≤ 0`.
pub fn principal_eigentriple(spec: &ModelSpec) -> Result<Eigentriple> {
    let eig = principal_eigentriple_unchecked(spec)?;
    if eig.lambda1 > 0.0 {
        Ok(eig)
    } else {
        Err(Error::Supercriticality {
            lambda1: eig.lambda1,
        })
    }
}

/// Principal eigentriple without the supercriticality requirement.
pub fn principal_eigentriple_unchecked(spec: &ModelSpec) -> Result<Eigentriple> {
    match spec {
        ModelSpec::Chain(m) => chain_eigentriple(m),
        ModelSpec::Diffusion(m) => diffusion_eigentriple(m),
    }
}

/// Power iteration on `exp(M)` seeded with ones; `λ₁` is then the Rayleigh
/// quotient of `M` itself.
pub fn chain_eigentriple(model: &Model<FiniteChainMotion>) -> Result<Eigentriple> {
    let gen = fk_generator(model);
    let n = gen.nrows();
    // shifting by the largest diagonal entry keeps exp(M) in range
    let shift = (0..n).map(|i| gen[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let e = expm(&(&gen - DMatrix::identity(n, n) * shift));
    let right = perron_vector(&e)?;
    let left = perron_vector(&e.transpose())?;
    let lambda1 = right.dot(&(&gen * &right)) / right.dot(&right);
    let m = model.motion.measure();
    let pairing = right.dot(&left);
    let phi: Vec<f64> = right.iter().copied().collect();
    let phi_tilde: Vec<f64> = (0..n).map(|x| left[x] / pairing / m[x]).collect();
    let phi_sq_m = (0..n).map(|x| phi[x] * phi[x] * m[x]).sum();
    Ok(Eigentriple {
        lambda1,
        phi: Field::Table(phi),
        phi_tilde: Field::Table(phi_tilde),
        phi_sq_m,
    })
}

/// Dominant nonnegative eigenvector, scaled to unit sup norm.
fn perron_vector(e: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = e.nrows();
    let mut v = DVector::from_element(n, 1.0);
    let mut rho_prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let w = e * &v;
        let rho = v.dot(&w) / v.dot(&v);
        let scale = w.amax();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Domain("power iteration collapsed".into()));
        }
        let w = w / scale;
        let moved = (&w - &v).amax();
        v = w;
        if (rho - rho_prev).abs() <= RAYLEIGH_TOL * rho.abs().max(1.0) && moved < DIRECTION_TOL {
            if v.iter().any(|x| *x <= 0.0) {
                return Err(Error::Domain(
                    "principal eigenvector is not strictly positive (reducible chain?)".into(),
                ));
            }
            return Ok(v);
        }
        rho_prev = rho;
    }
    Err(Error::NonConvergence {
        what: "power iteration",
        iterations: POWER_MAX_ITER,
    })
}

/// Dirichlet ground state on `(a, b)` for constant branching.
pub fn diffusion_eigentriple(model: &Model<KilledDiffusion1D>) -> Result<Eigentriple> {
    let b = &model.branching;
    if !b.is_homogeneous() {
        return Err(Error::Config(
            "diffusion backend needs constant branching rate and offspring law".into(),
        ));
    }
    let d = &model.motion;
    let len = d.length();
    let k = PI / len;
    Ok(Eigentriple {
        lambda1: b.growth()[0] - 0.5 * k * k,
        phi: Field::Sine {
            a: d.a,
            b: d.b,
            scale: 1.0,
        },
        phi_tilde: Field::Sine {
            a: d.a,
            b: d.b,
            scale: 2.0 / len,
        },
        phi_sq_m: 0.5 * len,
    })
}

/// Numerical health of a triple against its model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenDiagnostics {
    /// `|⟨φ φ̃, m⟩ - 1|`.
    pub normalization_error: f64,
    /// `(t, ‖e^{-λ₁t} P_t φ - φ‖_∞)`.
    pub invariance: Vec<(f64, f64)>,
    /// `(t, ‖e^{-λ₁t} (φ̃m) P_t - φ̃m‖_∞)`.
    pub left_invariance: Vec<(f64, f64)>,
    pub positive: bool,
}

impl EigenDiagnostics {
    pub fn passed(&self) -> bool {
        self.positive
            && self.normalization_error < NORMALIZATION_TOL
            && self
                .invariance
                .iter()
                .chain(&self.left_invariance)
                .all(|(_, r)| *r < INVARIANCE_TOL)
    }

    pub fn max_invariance(&self) -> f64 {
        self.invariance.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

pub const INVARIANCE_TIMES: [f64; 3] = [0.5, 1.0, 2.0];

/// Checks normalization, positivity and invariance at `INVARIANCE_TIMES`.
pub fn validate_eigentriple(spec: &ModelSpec, eig: &Eigentriple) -> EigenDiagnostics {
    match spec {
        ModelSpec::Chain(m) => {
            let (phi, phit) = match (&eig.phi, &eig.phi_tilde) {
                (Field::Table(p), Field::Table(q)) if p.len() == m.motion.len() && q.len() == p.len() => {
                    (p.clone(), q.clone())
                }
                _ => {
                    return EigenDiagnostics {
                        normalization_error: f64::INFINITY,
                        invariance: vec![],
                        left_invariance: vec![],
                        positive: false,
                    }
                }
            };
            let meas = m.motion.measure();
            let n = phi.len();
            let norm: f64 = (0..n).map(|x| phi[x] * phit[x] * meas[x]).sum();
            let phi_v = DVector::from_vec(phi.clone());
            let left_v = DVector::from_fn(n, |x, _| phit[x] * meas[x]);
            let mut invariance = Vec::new();
            let mut left_invariance = Vec::new();
            for t in INVARIANCE_TIMES {
                let p = fk_semigroup_chain(m, t) * (-eig.lambda1 * t).exp();
                invariance.push((t, (&p * &phi_v - &phi_v).amax()));
                left_invariance.push((t, (p.transpose() * &left_v - &left_v).amax()));
            }
            EigenDiagnostics {
                normalization_error: (norm - 1.0).abs(),
                invariance,
                left_invariance,
                positive: phi.iter().chain(&phit).all(|v| *v > 0.0),
            }
        }
        ModelSpec::Diffusion(m) => {
            let d = &m.motion;
            let norm = integrate(d.a, d.b, |x| eig.phi_at(x) * eig.phi_tilde_at(x));
            // the sine is an exact eigenfunction; compare against the analytic triple
            let exact = diffusion_eigentriple(m);
            let residual = |same: bool| if same { 0.0 } else { f64::INFINITY };
            let (right_ok, left_ok) = match &exact {
                Ok(ex) => (
                    ex.lambda1 == eig.lambda1 && same_shape(&ex.phi, &eig.phi),
                    ex.lambda1 == eig.lambda1 && same_shape(&ex.phi_tilde, &eig.phi_tilde),
                ),
                Err(_) => (false, false),
            };
            let positive = matches!(
                (&eig.phi, &eig.phi_tilde),
                (Field::Sine { scale: s1, .. }, Field::Sine { scale: s2, .. }) if *s1 > 0.0 && *s2 > 0.0
            );
            EigenDiagnostics {
                normalization_error: (norm - 1.0).abs(),
                invariance: INVARIANCE_TIMES.iter().map(|t| (*t, residual(right_ok))).collect(),
                left_invariance: INVARIANCE_TIMES.iter().map(|t| (*t, residual(left_ok))).collect(),
                positive,
            }
        }
    }
}

fn same_shape(a: &Field, b: &Field) -> bool {
    matches!((a, b), (Field::Sine { a: a1, b: b1, .. }, Field::Sine { a: a2, b: b2, .. }) if a1 == a2 && b1 == b2)
}

/// Composite Simpson rule on `[a, b]` with 20 000 panels.
pub fn integrate<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let panels = 20_000;
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// A motion whose ground-state transform can be simulated.
pub trait Tiltable: Motion + Sized {
    type Tilted: Motion<State = Self::State>;

    fn tilt(model: &Model<Self>, eig: &Eigentriple) -> Result<Self::Tilted>;
}

impl Tiltable for FiniteChainMotion {
    type Tilted = FiniteChainMotion;

    fn tilt(model: &Model<Self>, eig: &Eigentriple) -> Result<FiniteChainMotion> {
        let g = tilted_generator(model, eig)?;
        let n = g.nrows();
        let rows = (0..n).map(|x| (0..n).map(|y| g[(x, y)]).collect()).collect();
        FiniteChainMotion::new(
            model.motion.states().to_vec(),
            rows,
            vec![0.0; n],
            model.motion.measure().to_vec(),
        )
    }
}

impl Tiltable for KilledDiffusion1D {
    type Tilted = ConditionedDiffusion1D;

    fn tilt(model: &Model<Self>, _eig: &Eigentriple) -> Result<ConditionedDiffusion1D> {
        Ok(ConditionedDiffusion1D::new(&model.motion))
    }
}

/// `G^φ_{xy} = φ(y) M_{xy} / φ(x)` off the diagonal, rows summing to zero.
pub fn tilted_generator(model: &Model<FiniteChainMotion>, eig: &Eigentriple) -> Result<DMatrix<f64>> {
    let phi = eig
        .phi
        .table()
        .filter(|p| p.len() == model.motion.len())
        .ok_or_else(|| Error::Config("eigentriple does not match the chain".into()))?;
    let m = fk_generator(model);
    let n = m.nrows();
    let mut g = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { phi[y] * m[(x, y)] / phi[x] });
    for x in 0..n {
        let off: f64 = g.row(x).sum();
        g[(x, x)] = -off;
    }
    Ok(g)
}

/// The spine motion on either backend.
#[derive(Debug, Clone, PartialEq)]
pub enum TiltedMotion {
    Chain(FiniteChainMotion),
    Diffusion(ConditionedDiffusion1D),
}

pub fn tilt_motion(spec: &ModelSpec, eig: &Eigentriple) -> Result<TiltedMotion> {
    match spec {
        ModelSpec::Chain(m) => FiniteChainMotion::tilt(m, eig).map(TiltedMotion::Chain),
        ModelSpec::Diffusion(m) => KilledDiffusion1D::tilt(m, eig).map(TiltedMotion::Diffusion),
    }
}

/// Decay of the tilted chain towards its invariant law `φ φ̃ m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IuProfile {
    pub t: Vec<f64>,
    pub deviation: Vec<f64>,
    /// Least-squares slope of `log deviation` against `t`.
    pub slope: f64,
    pub gap: f64,
    pub strictly_decreasing: bool,
}

/// `max_{x,y} |p^φ(t,x,y)/(φ(y)φ̃(y)) - 1|` on each `t`.
pub fn iu_convergence_profile(
    model: &Model<FiniteChainMotion>,
    eig: &Eigentriple,
    t_grid: &[f64],
) -> Result<IuProfile> {
    let g = tilted_generator(model, eig)?;
    let n = g.nrows();
    let phi = eig.phi.table().expect("checked by tilted_generator");
    let phit = eig
        .phi_tilde
        .table()
        .ok_or_else(|| Error::Config("eigentriple does not match the chain".into()))?;
    let meas = model.motion.measure();
    let stationary: Vec<f64> = (0..n).map(|y| phi[y] * phit[y] * meas[y]).collect();
    let deviation: Vec<f64> = t_grid
        .iter()
        .map(|&t| {
            let p = expm(&(&g * t));
            let mut worst = 0.0f64;
            for x in 0..n {
                for y in 0..n {
                    worst = worst.max((p[(x, y)] / stationary[y] - 1.0).abs());
                }
            }
            worst
        })
        .collect();
    let slope = fit_slope(t_grid, &deviation.iter().map(|d| d.ln()).collect::<Vec<_>>());
    Ok(IuProfile {
        t: t_grid.to_vec(),
        strictly_decreasing: deviation.windows(2).all(|w| w[1] < w[0]),
        deviation,
        slope,
        gap: spectral_gap(model),
    })
}

fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `λ₁ - max Re λ` over the rest of the spectrum of `M`.
pub fn spectral_gap(model: &Model<FiniteChainMotion>) -> f64 {
    let m = fk_generator(model);
    let mut re: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    if re.len() < 2 {
        return f64::INFINITY;
    }
    re[0] - re[1]
}

/// Value of `∫ φ̃ β l dm` with `l(x) = Σ_k kφ(x) log⁺(kφ(x)) p_k(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    Finite(f64),
    /// `log_cutoff` is `log log K*` for a cutoff `K*` at which the partial
    /// sums of `l` provably exceed `DIVERGENCE_TARGET`.
    Diverges { loglog_cutoff: f64 },
}

pub const DIVERGENCE_TARGET: f64 = 1e3;

impl Criterion {
    pub fn is_finite(&self) -> bool {
        matches!(self, Criterion::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Criterion::Finite(v) => Some(*v),
            Criterion::Diverges { .. } => None,
        }
    }
}

impl Serialize for Criterion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Criterion", 2)?;
        st.serialize_field("finite", &self.is_finite())?;
        match self {
            Criterion::Finite(v) => st.serialize_field("value", v)?,
            Criterion::Diverges { loglog_cutoff } => {
                st.serialize_field("loglog_cutoff", loglog_cutoff)?
            }
        }
        st.end()
    }
}

pub fn llogl_criterion(spec: &ModelSpec, eig: &Eigentriple) -> Criterion {
    let b = spec.branching();
    match spec {
        ModelSpec::Chain(m) => {
            let meas = m.motion.measure();
            let mut total = 0.0;
            let mut witness: Option<f64> = None;
            for x in 0..m.motion.len() {
                let weight = eig.phi_tilde_at(x) * b.beta()[x] * meas[x];
                let phi = eig.phi_at(x);
                match b.offspring(x).llogl_term(phi) {
                    Some(l) => total += weight * l,
                    None if weight > 0.0 => {
                        let target = DIVERGENCE_TARGET;
                        let cut = heavy_divergence_cutoff(phi, target);
                        witness = Some(witness.map_or(cut, |w: f64| w.min(cut)));
                    }
                    None => {}
                }
            }
            match witness {
                Some(loglog_cutoff) => Criterion::Diverges { loglog_cutoff },
                None => Criterion::Finite(total),
            }
        }
        ModelSpec::Diffusion(m) => {
            let d = &m.motion;
            let law = b.offspring(0);
            let beta = b.beta()[0];
            if law.llogl_term(1.0).is_none() && beta > 0.0 {
                return Criterion::Diverges {
                    loglog_cutoff: heavy_divergence_cutoff(1.0, DIVERGENCE_TARGET),
                };
            }
            Criterion::Finite(integrate(d.a, d.b, |x| {
                let phi = eig.phi_at(x);
                eig.phi_tilde_at(x) * beta * law.llogl_term(phi).unwrap_or(0.0)
            }))
        }
    }
}

/// `E_x ⟨f, X_T⟩` on the chain: `(exp(T M) f)(x)`.
pub fn many_to_one_chain(model: &Model<FiniteChainMotion>, f: &[f64], x: usize, t: f64) -> f64 {
    let p = fk_semigroup_chain(model, t);
    (0..f.len()).map(|y| p[(x, y)] * f[y]).sum()
}

/// `E_x ⟨f, X_T⟩` on the interval by the Dirichlet eigenexpansion.
pub fn many_to_one_diffusion<F: Fn(f64) -> f64>(
    model: &Model<KilledDiffusion1D>,
    f: F,
    x: f64,
    t: f64,
) -> Result<f64> {
    let b = &model.branching;
    if !b.is_homogeneous() {
        return Err(Error::Config("diffusion expectation needs constant branching".into()));
    }
    let d = &model.motion;
    let len = d.length();
    let growth = b.growth()[0];
    let mut total = 0.0;
    for n in 1..=200 {
        let k = n as f64 * PI / len;
        let decay = (-(0.5 * k * k) * t).exp();
        if decay < 1e-18 {
            break;
        }
        let coeff = 2.0 / len * integrate(d.a, d.b, |y| f(y) * (k * (y - d.a)).sin());
        total += decay * coeff * (k * (x - d.a)).sin();
    }
    Ok((growth * t).exp() * total)
}

/// Exact `∫_0^T exp(s G) v ds` at row `x`, from the exponential of the
/// block matrix `[[G, I], [0, 0]]`.
pub fn integrated_semigroup(g: &DMatrix<f64>, v: &[f64], x: usize, t: f64) -> f64 {
    let n = g.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(g * t));
    big.view_mut((0, n), (n, n)).copy_from(&(DMatrix::<f64>::identity(n, n) * t));
    let e = expm(&big);
    (0..n).map(|y| e[(x, n + y)] * v[y]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    fn chain(spec: &ModelSpec) -> &Model<FiniteChainMotion> {
        spec.as_chain().unwrap()
    }

    #[test]
    fn symmetric_semigroup_closed_form() {
        let spec = presets::sym();
        let e = fk_semigroup(&spec, 1.0).unwrap();
        let em2 = (-2f64).exp();
        let ee = 1f64.exp();
        let expected = [[(1.0 + em2) / 2.0, (1.0 - em2) / 2.0], [(1.0 - em2) / 2.0, (1.0 + em2) / 2.0]];
        for x in 0..2 {
            for y in 0..2 {
                assert!((e[(x, y)] - ee * expected[x][y]).abs() < 1e-13);
            }
        }
        assert_eq!(fk_semigroup(&spec, 0.0).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn asymmetric_semigroup_closed_form() {
        // M = [[0, 1], [2, 1]] has eigenvalues 2 and -1
        let e = fk_semigroup(&presets::asym(), 1.0).unwrap();
        let (a, b) = (2f64.exp(), (-1f64).exp());
        let expected = [[(a + 2.0 * b) / 3.0, (a - b) / 3.0], [2.0 * (a - b) / 3.0, (2.0 * a + b) / 3.0]];
        for x in 0..2 {
            for y in 0..2 {
                assert!((e[(x, y)] - expected[x][y]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diffusion_semigroup_is_unsupported() {
        assert!(matches!(
            fk_semigroup(&presets::bm(), 1.0),
            Err(Error::UnsupportedBackend { .. })
        ));
    }

    #[test]
    fn symmetric_triple() {
        let spec = presets::sym();
        let eig = principal_eigentriple(&spec).unwrap();
        assert!((eig.lambda1 - 1.0).abs() < 1e-10);
        for x in 0..2usize {
            assert!((eig.phi_at(x) - 1.0).abs() < 1e-10);
            assert!((eig.phi_tilde_at(x) - 0.5).abs() < 1e-10);
        }
        assert!(validate_eigentriple(&spec, &eig).passed());
    }

    #[test]
    fn asymmetric_triple() {
        let spec = presets::asym();
        let eig = principal_eigentriple(&spec).unwrap();
        assert!((eig.lambda1 - 2.0).abs() < 1e-12);
        let phi = eig.phi.table().unwrap();
        let phit = eig.phi_tilde.table().unwrap();
        assert!((phi[0] - 0.5).abs() < 1e-12 && (phi[1] - 1.0).abs() < 1e-12);
        assert!((phit[0] - 2.0 / 3.0).abs() < 1e-12 && (phit[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((eig.phi_sq_m - 1.25).abs() < 1e-12);
        let diag = validate_eigentriple(&spec, &eig);
        assert!(diag.passed(), "{diag:?}");
        assert!((spectral_gap(chain(&spec)) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn interval_triple() {
        let spec = presets::bm();
        let eig = principal_eigentriple(&spec).unwrap();
        assert_eq!(eig.lambda1, 0.5);
        assert!((eig.phi_at(1.0) - 1f64.sin()).abs() < 1e-15);
        assert!((eig.phi_tilde_at(1.0) - 2.0 / PI * 1f64.sin()).abs() < 1e-15);
        assert!(validate_eigentriple(&spec, &eig).passed());
    }

    #[test]
    fn killing_breaks_supercriticality() {
        let motion = FiniteChainMotion::new(
            Vec::new(),
            vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
            vec![2.0, 2.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let spec = ModelSpec::Chain(Model::new("killed", motion, presets::sym().branching().clone()));
        match principal_eigentriple(&spec) {
            Err(Error::Supercriticality { lambda1 }) => assert!((lambda1 + 1.0).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sabotaged_phi_tilde_is_rejected() {
        let spec = presets::sym();
        let eig = principal_eigentriple(&spec).unwrap().with_phi_tilde_scaled(2.0);
        let diag = validate_eigentriple(&spec, &eig);
        assert!(!diag.passed());
        assert!((diag.normalization_error - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tilt_of_symmetric_chain_is_identity() {
        let spec = presets::sym();
        let eig = principal_eigentriple(&spec).unwrap();
        let g = tilted_generator(chain(&spec), &eig).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        assert!((g - expected).abs().max() < 1e-12);
    }

    #[test]
    fn tilt_of_asymmetric_chain() {
        let spec = presets::asym();
        let eig = principal_eigentriple(&spec).unwrap();
        let g = tilted_generator(chain(&spec), &eig).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-2.0, 2.0, 1.0, -1.0]);
        assert!((&g - expected).abs().max() < 1e-12);
        // exp(tG^φ) = e^{-λt} D⁻¹ exp(tM) D
        let t = 0.7;
        let p = expm(&(&g * t));
        let fk = fk_semigroup_chain(chain(&spec), t);
        let phi = eig.phi.table().unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let v = (-eig.lambda1 * t).exp() * fk[(x, y)] * phi[y] / phi[x];
                assert!((p[(x, y)] - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn iu_profile_symmetric_and_asymmetric() {
        let spec = presets::sym();
        let eig = principal_eigentriple(&spec).unwrap();
        let p = iu_convergence_profile(chain(&spec), &eig, &[1.0, 10.0]).unwrap();
        assert!((p.deviation[0] - (-2f64).exp()).abs() < 1e-12);
        assert!(p.deviation[1] < 1e-8);

        let spec = presets::asym();
        let eig = principal_eigentriple(&spec).unwrap();
        let p = iu_convergence_profile(chain(&spec), &eig, &[1.0, 2.0, 4.0]).unwrap();
        assert!(p.strictly_decreasing);
        assert!((p.slope + p.gap).abs() < 0.05 * p.gap, "{p:?}");
        assert!((p.deviation[0] - 2.0 * (-3f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn criterion_values() {
        let spec = presets::sym();
        let eig = principal_eigentriple(&spec).unwrap();
        let c = llogl_criterion(&spec, &eig);
        assert!((c.value().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-10);

        let spec = presets::asym();
        let eig = principal_eigentriple(&spec).unwrap();
        let expected = 2.0 / 3.0 * (2.0 * 2f64.ln() + 3.0 * 3f64.ln());
        assert!((llogl_criterion(&spec, &eig).value().unwrap() - expected).abs() < 1e-10);

        let spec = presets::heavy();
        let eig = principal_eigentriple(&spec).unwrap();
        match llogl_criterion(&spec, &eig) {
            Criterion::Diverges { loglog_cutoff } => assert!(loglog_cutoff.is_finite()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn interval_expectation_of_ground_state() {
        let spec = presets::bm();
        let m = spec.as_diffusion().unwrap();
        let v = many_to_one_diffusion(m, |y| y.sin(), 1.0, 1.0).unwrap();
        assert!((v - 0.5f64.exp() * 1f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn integrated_semigroup_of_constant_rate() {
        let g = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        // conservative chain, constant function 2: integral is 2T
        assert!((integrated_semigroup(&g, &[2.0, 2.0], 0, 1.5) - 3.0).abs() < 1e-12);
    }
}
