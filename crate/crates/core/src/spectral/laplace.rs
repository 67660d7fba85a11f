use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FiniteChainMotion, Model};

pub const DEFAULT_RK4_STEP: f64 = 1e-3;

/// `u_t` together with the change caused by halving the step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceSolution {
    pub u: Vec<f64>,
    pub halving_difference: f64,
}

/// `u_t(x) = E_x exp(-⟨f, X_t⟩)` from the backward equation
///
/// `du/dt = Q u - κ u + κ + β (ψ(u) - u)`, `u_0 = exp(-f)`,
///
/// by fixed-step RK4. A killed particle leaves an empty configuration, which
/// contributes `exp(0) = 1`; that is the `+κ` term.
pub fn solve_u_equation(
    model: &Model<FiniteChainMotion>,
    f: &[f64],
    t: f64,
    h: f64,
) -> Result<Vec<f64>> {
    let chain = &model.motion;
    let n = chain.len();
    if f.len() != n {
        return Err(Error::Config(format!("f has {} entries for {n} states", f.len())));
    }
    if let Some(bad) = f.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::Domain(format!("f must be nonnegative, got {bad}")));
    }
    if !(h > 0.0 && t >= 0.0) {
        return Err(Error::Domain(format!("need h > 0 and t >= 0 (h = {h}, t = {t})")));
    }
    let b = &model.branching;
    let rows = chain.generator_rows();
    let rhs = |u: &[f64], out: &mut [f64]| -> Result<()> {
        for x in 0..n {
            let jump: f64 = rows[x].iter().zip(u).map(|(q, v)| q * v).sum();
            let kill = chain.killing()[x] * (1.0 - u[x]);
            let psi = b.offspring(x).psi(u[x].clamp(0.0, 1.0))?;
            out[x] = jump + kill + b.beta()[x] * (psi - u[x]);
        }
        Ok(())
    };
    let mut u: Vec<f64> = f.iter().map(|v| (-v).exp()).collect();
    let full = (t / h).floor() as usize;
    let rest = t - full as f64 * h;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut step = |u: &mut Vec<f64>, dt: f64| -> Result<()> {
        rhs(u, &mut k1)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4)?;
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    };
    for _ in 0..full {
        step(&mut u, h)?;
    }
    if rest > 1e-15 * h.max(t) {
        step(&mut u, rest)?;
    }
    Ok(u)
}

/// Solves at `h` and `h/2` and reports the sup-norm difference.
pub fn solve_u_equation_checked(
    model: &Model<FiniteChainMotion>,
    f: &[f64],
    t: f64,
    h: f64,
) -> Result<LaplaceSolution> {
    let u = solve_u_equation(model, f, t, h)?;
    let fine = solve_u_equation(model, f, t, 0.5 * h)?;
    let halving_difference = u
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(LaplaceSolution {
        u,
        halving_difference,
    })
}
