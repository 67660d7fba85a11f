//! Motion backends: an exact finite-state chain and a 1-D Brownian motion
//! killed on leaving an interval, plus the conditioned (h-transformed)
//! versions used for the spine.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};

/// A point of the state space. Finite chains index states by `usize`, the
/// diffusion uses its position.
pub trait StateSpace: Copy + Debug + PartialEq + Send + Sync + 'static {
    /// Index into per-state branching tables. Constant on the diffusion
    /// backend, which only supports spatially constant branching.
    fn slot(self) -> usize;

    /// Value of a per-state function at this point.
    fn eval(self, field: &Field) -> f64;

    fn render(self) -> String;
}

impl StateSpace for usize {
    fn slot(self) -> usize {
        self
    }

    fn eval(self, field: &Field) -> f64 {
        match field {
            Field::Table(v) => v[self],
            Field::Constant(c) => *c,
            Field::Sine { .. } => f64::NAN,
        }
    }

    fn render(self) -> String {
        self.to_string()
    }
}

impl StateSpace for f64 {
    fn slot(self) -> usize {
        0
    }

    fn eval(self, field: &Field) -> f64 {
        match field {
            Field::Sine { a, b, scale } => {
                if self <= *a || self >= *b {
                    0.0
                } else {
                    scale * (std::f64::consts::PI * (self - a) / (b - a)).sin()
                }
            }
            Field::Constant(c) => *c,
            Field::Table(_) => f64::NAN,
        }
    }

    fn render(self) -> String {
        format!("{self:.6}")
    }
}

/// A real function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    /// One value per state (finite backend).
    Table(Vec<f64>),
    /// `scale · sin(π (x - a)/(b - a))` on `(a, b)`, zero outside.
    Sine { a: f64, b: f64, scale: f64 },
    Constant(f64),
}

impl Field {
    pub fn table(&self) -> Option<&[f64]> {
        match self {
            Field::Table(v) => Some(v),
            _ => None,
        }
    }
}

/// Branching intensity per slot, with the global bound used for thinning.
#[derive(Debug, Clone, Copy)]
pub struct BranchClock<'a> {
    pub rates: &'a [f64],
    pub bound: f64,
}

impl BranchClock<'_> {
    #[inline]
    fn accept<S: StateSpace, R: Rng + ?Sized>(&self, s: S, rng: &mut R) -> bool {
        let rate = self.rates[s.slot()];
        rate >= self.bound || rng.gen::<f64>() * self.bound < rate
    }

    #[inline]
    fn next_candidate<R: Rng + ?Sized>(&self, now: f64, rng: &mut R) -> f64 {
        if self.bound > 0.0 {
            let e: f64 = rng.sample(Exp1);
            now + e / self.bound
        } else {
            f64::INFINITY
        }
    }
}

/// How a particle's life ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fate<S> {
    /// Branching event at this position.
    Fission(S),
    /// Sent to the cemetery by the motion; no offspring.
    Killed,
    /// Still alive at the horizon, at this position.
    Survived(S),
}

/// One particle's path from birth until fission, death or the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Life<S> {
    /// `(time, state)` pairs. Jump list on the chain, Euler skeleton on the
    /// diffusion. The first entry is the birth point.
    pub trace: Vec<(f64, S)>,
    /// Fission or death time, or the horizon for survivors.
    pub end: f64,
    pub fate: Fate<S>,
}

/// A motion that can carry particles between branching events.
pub trait Motion: Send + Sync {
    type State: StateSpace;

    fn backend(&self) -> &'static str;

    /// Runs one life from `start` at time `birth` against `clock`.
    fn run_life<R: Rng + ?Sized>(
        &self,
        start: Self::State,
        birth: f64,
        horizon: f64,
        clock: &BranchClock<'_>,
        rng: &mut R,
    ) -> Life<Self::State>;

    /// `∫ g(Y_s) ds` along `trace` up to `end`.
    fn path_integral<G: Fn(Self::State) -> f64>(
        &self,
        trace: &[(f64, Self::State)],
        end: f64,
        g: G,
    ) -> f64;
}

/// Outcome of one holding period of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStep {
    pub holding: f64,
    /// `None` when the particle is killed.
    pub next: Option<usize>,
}

/// Finite-state continuous-time chain with killing.
///
/// `generator` holds the jump rates `Q` (off-diagonal ≥ 0). The sub-Markov
/// generator seen by the motion is `Q - diag(κ)`, whose row sums plus `κ`
/// must vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChainMotion {
    states: Vec<String>,
    generator: Vec<f64>,
    killing: Vec<f64>,
    measure: Vec<f64>,
    event_rate: Vec<f64>,
    // per state: cumulative (target, weight) for jumps, then killing
    channels: Vec<Vec<(Option<usize>, f64)>>,
}

impl FiniteChainMotion {
    /// Builds the chain; only shape and finiteness are checked here.
    pub fn new(
        states: Vec<String>,
        generator: Vec<Vec<f64>>,
        killing: Vec<f64>,
        measure: Vec<f64>,
    ) -> Result<Self> {
        let n = generator.len();
        if n == 0 {
            return Err(Error::Config("generator has no rows".into()));
        }
        if generator.iter().any(|row| row.len() != n) {
            return Err(Error::Config("generator is not square".into()));
        }
        if killing.len() != n || measure.len() != n {
            return Err(Error::Config(format!(
                "killing ({}) and measure ({}) must have one entry per state ({n})",
                killing.len(),
                measure.len()
            )));
        }
        let states = if states.is_empty() {
            (0..n).map(|i| i.to_string()).collect()
        } else if states.len() == n {
            states
        } else {
            return Err(Error::Config("state list length mismatch".into()));
        };
        let flat: Vec<f64> = generator.into_iter().flatten().collect();
        if flat
            .iter()
            .chain(&killing)
            .chain(&measure)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("non-finite entry in chain definition".into()));
        }
        let mut event_rate = vec![0.0; n];
        let mut channels = Vec::with_capacity(n);
        for x in 0..n {
            let mut acc = 0.0;
            let mut ch = Vec::new();
            for y in 0..n {
                let q = flat[x * n + y];
                if y != x && q > 0.0 {
                    acc += q;
                    ch.push((Some(y), acc));
                }
            }
            if killing[x] > 0.0 {
                acc += killing[x];
                ch.push((None, acc));
            }
            event_rate[x] = acc;
            channels.push(ch);
        }
        Ok(Self {
            states,
            generator: flat,
            killing,
            measure,
            event_rate,
            channels,
        })
    }

    /// Conservative chain with unit reference measure.
    pub fn conservative(generator: Vec<Vec<f64>>) -> Result<Self> {
        let n = generator.len();
        Self::new(Vec::new(), generator, vec![0.0; n], vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.killing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.killing.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.generator[x * self.len() + y]
    }

    pub fn generator_rows(&self) -> Vec<Vec<f64>> {
        self.generator.chunks(self.len()).map(|r| r.to_vec()).collect()
    }

    pub fn killing(&self) -> &[f64] {
        &self.killing
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    /// Total rate of leaving `x` (jumps plus killing).
    pub fn event_rate(&self, x: usize) -> f64 {
        self.event_rate[x]
    }

    /// Chooses the destination of an event at `x` (`None` = killed).
    #[inline]
    pub fn pick_destination<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Option<usize> {
        let ch = &self.channels[x];
        let u = rng.gen::<f64>() * self.event_rate[x];
        ch.iter()
            .find(|(_, c)| *c > u)
            .or(ch.last())
            .and_then(|(dest, _)| *dest)
    }

    /// One holding period from `x`: exponential time at the total event rate,
    /// then a jump or death chosen in proportion to the rates.
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> ChainStep {
        let rate = self.event_rate[x];
        if rate <= 0.0 {
            return ChainStep {
                holding: f64::INFINITY,
                next: Some(x),
            };
        }
        let e: f64 = rng.sample(Exp1);
        ChainStep {
            holding: e / rate,
            next: self.pick_destination(x, rng),
        }
    }
}

impl Motion for FiniteChainMotion {
    type State = usize;

    fn backend(&self) -> &'static str {
        "finite-chain"
    }

    fn run_life<R: Rng + ?Sized>(
        &self,
        start: usize,
        birth: f64,
        horizon: f64,
        clock: &BranchClock<'_>,
        rng: &mut R,
    ) -> Life<usize> {
        let mut t = birth;
        let mut x = start;
        let mut trace = vec![(t, x)];
        loop {
            let rate = self.event_rate[x];
            let motion_at = if rate > 0.0 {
                let e: f64 = rng.sample(Exp1);
                t + e / rate
            } else {
                f64::INFINITY
            };
            let branch_at = clock.next_candidate(t, rng);
            if motion_at.min(branch_at) >= horizon {
                return Life {
                    trace,
                    end: horizon,
                    fate: Fate::Survived(x),
                };
            }
            if branch_at < motion_at {
                t = branch_at;
                if clock.accept(x, rng) {
                    return Life {
                        trace,
                        end: t,
                        fate: Fate::Fission(x),
                    };
                }
            } else {
                t = motion_at;
                match self.pick_destination(x, rng) {
                    Some(y) => {
                        x = y;
                        trace.push((t, x));
                    }
                    None => {
                        return Life {
                            trace,
                            end: t,
                            fate: Fate::Killed,
                        }
                    }
                }
            }
        }
    }

    fn path_integral<G: Fn(usize) -> f64>(&self, trace: &[(f64, usize)], end: f64, g: G) -> f64 {
        piecewise_constant_integral(trace, end, g)
    }
}

/// Exact integral of `g` along a piecewise-constant jump list.
pub fn piecewise_constant_integral<S: Copy, G: Fn(S) -> f64>(
    trace: &[(f64, S)],
    end: f64,
    g: G,
) -> f64 {
    let mut total = 0.0;
    for (i, &(t, s)) in trace.iter().enumerate() {
        let next = trace.get(i + 1).map_or(end, |p| p.0);
        total += g(s) * (next - t);
    }
    total
}

/// Trapezoidal integral of `g` along an Euler skeleton. The segment after the
/// last skeleton point is held constant.
pub fn skeleton_integral<G: Fn(f64) -> f64>(trace: &[(f64, f64)], end: f64, g: G) -> f64 {
    let mut total = 0.0;
    for w in trace.windows(2) {
        let (t0, x0) = w[0];
        let (t1, x1) = w[1];
        total += 0.5 * (g(x0) + g(x1)) * (t1 - t0);
    }
    if let Some(&(t, x)) = trace.last() {
        total += g(x) * (end - t);
    }
    total
}

/// Standard Brownian motion on `(a, b)`, killed on the first Euler step that
/// lands outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KilledDiffusion1D {
    pub a: f64,
    pub b: f64,
    pub dt: f64,
}

pub const DEFAULT_DT: f64 = 1e-3;

impl KilledDiffusion1D {
    pub fn new(a: f64, b: f64, dt: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && dt.is_finite()) {
            return Err(Error::Config("non-finite diffusion parameters".into()));
        }
        Ok(Self { a, b, dt })
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    /// One Euler step of length `h`; `None` if the step leaves the interval.
    pub fn step<R: Rng + ?Sized>(&self, x: f64, h: f64, rng: &mut R) -> Option<f64> {
        let z: f64 = rng.sample(StandardNormal);
        let y = x + h.sqrt() * z;
        self.contains(y).then_some(y)
    }
}

impl Motion for KilledDiffusion1D {
    type State = f64;

    fn backend(&self) -> &'static str {
        "killed-diffusion"
    }

    fn run_life<R: Rng + ?Sized>(
        &self,
        start: f64,
        birth: f64,
        horizon: f64,
        clock: &BranchClock<'_>,
        rng: &mut R,
    ) -> Life<f64> {
        skeleton_life(start, birth, horizon, self.dt, clock, rng, |x, h, rng| {
            self.step(x, h, rng)
        })
    }

    fn path_integral<G: Fn(f64) -> f64>(&self, trace: &[(f64, f64)], end: f64, g: G) -> f64 {
        skeleton_integral(trace, end, g)
    }
}

/// Brownian motion on `(a, b)` conditioned by the ground state
/// `sin(π(x - a)/(b - a))`: drift `(log φ)'`, never leaves the interval.
///
/// Stepped in the canonical coordinate `u ∈ (0, π)`, where the SDE reads
/// `du = cot(u) ds + dB_s` with `s = (π/L)² t`. The `1/u` singularity at the
/// nearer wall is treated implicitly and the smooth remainder explicitly, which
/// keeps every step inside the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionedDiffusion1D {
    pub a: f64,
    pub b: f64,
    pub dt: f64,
}

impl ConditionedDiffusion1D {
    pub fn new(base: &KilledDiffusion1D) -> Self {
        Self {
            a: base.a,
            b: base.b,
            dt: base.dt,
        }
    }

    /// Drift `(log φ)'(x)` in the original coordinate.
    pub fn drift(&self, x: f64) -> f64 {
        let k = std::f64::consts::PI / (self.b - self.a);
        k / (k * (x - self.a)).tan()
    }

    pub fn step<R: Rng + ?Sized>(&self, x: f64, h: f64, rng: &mut R) -> f64 {
        use std::f64::consts::PI;
        let k = PI / (self.b - self.a);
        let hs = k * k * h;
        let u = k * (x - self.a);
        let z: f64 = rng.sample(StandardNormal);
        let noise = hs.sqrt() * z;
        // distance to the nearer wall, and the sign that maps it back
        let (d, flip) = if u < PI / 2.0 { (u, false) } else { (PI - u, true) };
        // cot(u) seen from the near wall is 1/d - (1/d - cot d); the bracket is smooth
        let smooth = 1.0 / d.tan() - 1.0 / d;
        let y = d + hs * smooth + noise;
        let mut d_next = 0.5 * (y + (y * y + 4.0 * hs).sqrt());
        // a huge kick can carry the point past the far wall; fold it back
        while d_next >= PI {
            d_next = 2.0 * PI - d_next;
            if d_next <= 0.0 {
                d_next = f64::EPSILON;
            }
        }
        let u_next = if flip { PI - d_next } else { d_next };
        let u_next = u_next.clamp(f64::MIN_POSITIVE, PI - 4.0 * f64::EPSILON);
        self.a + u_next / k
    }
}

impl Motion for ConditionedDiffusion1D {
    type State = f64;

    fn backend(&self) -> &'static str {
        "conditioned-diffusion"
    }

    fn run_life<R: Rng + ?Sized>(
        &self,
        start: f64,
        birth: f64,
        horizon: f64,
        clock: &BranchClock<'_>,
        rng: &mut R,
    ) -> Life<f64> {
        skeleton_life(start, birth, horizon, self.dt, clock, rng, |x, h, rng| {
            Some(self.step(x, h, rng))
        })
    }

    fn path_integral<G: Fn(f64) -> f64>(&self, trace: &[(f64, f64)], end: f64, g: G) -> f64 {
        skeleton_integral(trace, end, g)
    }
}

/// Shared life loop for Euler skeletons. Candidate branching times are
/// inserted into the skeleton so fissions happen at their exact time.
fn skeleton_life<R, F>(
    start: f64,
    birth: f64,
    horizon: f64,
    dt: f64,
    clock: &BranchClock<'_>,
    rng: &mut R,
    mut step: F,
) -> Life<f64>
where
    R: Rng + ?Sized,
    F: FnMut(f64, f64, &mut R) -> Option<f64>,
{
    let mut t = birth;
    let mut x = start;
    let mut trace = vec![(t, x)];
    let mut candidate = clock.next_candidate(t, rng);
    while t < horizon {
        let mut next = t + dt;
        let mut hit_candidate = false;
        if candidate <= next {
            next = candidate;
            hit_candidate = true;
        }
        if next >= horizon {
            next = horizon;
            hit_candidate = false;
        }
        match step(x, next - t, rng) {
            Some(y) => {
                t = next;
                x = y;
                trace.push((t, x));
            }
            None => {
                return Life {
                    trace,
                    end: next,
                    fate: Fate::Killed,
                }
            }
        }
        if hit_candidate {
            if clock.accept(x, rng) {
                return Life {
                    trace,
                    end: t,
                    fate: Fate::Fission(x),
                };
            }
            candidate = clock.next_candidate(t, rng);
        }
    }
    Life {
        trace,
        end: horizon,
        fate: Fate::Survived(x),
    }
}
