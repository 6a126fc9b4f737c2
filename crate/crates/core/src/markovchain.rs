//! Finite continuous-time Markov chains with killing.
//!
//! Local time at `x` is the total time spent at `x`, so the Green function
//! is `g = (-Q)^{-1}` and `g(x, y) = E_x[L^y_∞]`.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::existence::{i_plus_alpha_g, WeightVector};
use crate::matrix::{self, Kernel, Matrix};
use crate::montecarlo::{par_paths, path_rng};

const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Transient,
    Recurrent,
}

/// Generator of a finite chain; the row-sum deficit is the killing rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ChainFile", into = "ChainFile")]
pub struct ChainSpec {
    states: Vec<String>,
    q: Matrix,
    kind: ChainKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainFile {
    states: Vec<String>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    kind: ChainKind,
}

impl TryFrom<ChainFile> for ChainSpec {
    type Error = Error;
    fn try_from(f: ChainFile) -> Result<ChainSpec> {
        ChainSpec::new(f.states, Matrix::from_rows(&f.q)?, f.kind)
    }
}

impl From<ChainSpec> for ChainFile {
    fn from(c: ChainSpec) -> ChainFile {
        ChainFile {
            q: c.q.rows(),
            states: c.states,
            kind: c.kind,
        }
    }
}

impl ChainSpec {
    pub fn new(states: Vec<String>, q: Matrix, kind: ChainKind) -> Result<Self> {
        if states.len() != q.n() {
            return Err(Error::DimensionMismatch {
                expected: q.n(),
                got: states.len(),
            });
        }
        q.check_finite()?;
        let n = q.n();
        let scale = q.max_abs().max(1.0);
        for i in 0..n {
            for j in 0..n {
                if i != j && q[(i, j)] < 0.0 {
                    return Err(Error::InvalidInput(format!("negative rate Q[{i},{j}]")));
                }
            }
            let row: f64 = q.row(i).iter().sum();
            if row > STRUCTURE_TOL * scale {
                return Err(Error::InvalidInput(format!("row {i} of Q sums to {row} > 0")));
            }
        }
        let q = q.with_labels(states.clone())?;
        let chain = ChainSpec { states, q, kind };
        match kind {
            ChainKind::Transient => chain.check_transient()?,
            ChainKind::Recurrent => chain.check_recurrent()?,
        }
        Ok(chain)
    }

    /// Convenience constructor with states labelled `0..n`.
    pub fn from_generator(q: Matrix, kind: ChainKind) -> Result<Self> {
        let states = (0..q.n()).map(|i| i.to_string()).collect();
        ChainSpec::new(states, q, kind)
    }

    fn check_transient(&self) -> Result<()> {
        let ev = matrix::eigenvalues(&self.q)?;
        let scale = self.q.max_abs().max(f64::MIN_POSITIVE);
        if let Some(z) = ev.iter().find(|z| z.re >= -STRUCTURE_TOL * scale) {
            return Err(Error::NotTransient(format!("generator has eigenvalue {z}")));
        }
        Ok(())
    }

    fn check_recurrent(&self) -> Result<()> {
        let n = self.n();
        let scale = self.q.max_abs().max(1.0);
        for i in 0..n {
            let row: f64 = self.q.row(i).iter().sum();
            if row.abs() > STRUCTURE_TOL * scale {
                return Err(Error::NotRecurrent(format!("state {i} has killing rate {}", -row)));
            }
        }
        for start in 0..n {
            if self.reachable_from(start).iter().any(|r| !r) {
                return Err(Error::NotRecurrent("generator is not irreducible".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ChainFile = serde_json::from_str(s)?;
        ChainSpec::try_from(f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n(&self) -> usize {
        self.q.n()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn generator(&self) -> &Matrix {
        &self.q
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.q.site_index(name)
    }

    /// `-Σ_j Q[x, j]`.
    pub fn killing_rate(&self, x: usize) -> f64 {
        (-self.q.row(x).iter().sum::<f64>()).max(0.0)
    }

    /// States reachable from `start` through positive rates (including itself).
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(x) = queue.pop_front() {
            for y in 0..n {
                if y != x && !seen[y] && self.q[(x, y)] > 0.0 {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen
    }

    /// Column sums of a recurrent generator vanish iff its invariant
    /// measure is uniform.
    pub fn has_uniform_invariant_measure(&self) -> bool {
        let scale = self.q.max_abs().max(1.0);
        (0..self.n()).all(|j| self.q.column(j).iter().sum::<f64>().abs() <= 1e-10 * scale)
    }
}

/// `g = (-Q)^{-1}` for a transient chain. Entries `g(x, y)` with `y`
/// unreachable from `x` are exact zeros.
pub fn green_function(chain: &ChainSpec) -> Result<Kernel> {
    if chain.kind != ChainKind::Transient {
        return Err(Error::NotTransient("chain is declared recurrent".into()));
    }
    let mut g = match matrix::inverse(&chain.q.scale(-1.0)) {
        Ok(g) => g,
        Err(Error::SingularMatrix { .. }) => return Err(Error::NotTransient("-Q is singular".into())),
        Err(e) => return Err(e),
    };
    for x in 0..chain.n() {
        for (y, reached) in chain.reachable_from(x).into_iter().enumerate() {
            if !reached {
                g[(x, y)] = 0.0;
            }
        }
    }
    Ok(g)
}

/// Total sojourn time per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeField(pub Vec<f64>);

impl LocalTimeField {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `Σ α_x L^x`.
    pub fn pair(&self, alpha: &[f64]) -> f64 {
        self.0.iter().zip(alpha).map(|(l, a)| l * a).sum()
    }

    pub fn add(&self, other: &LocalTimeField) -> LocalTimeField {
        LocalTimeField(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    /// Run until the chain is killed.
    Absorb,
    /// Stop at `T_a = inf{t >= 0 : X_t = a}`.
    Hit { a: usize },
    /// Stop at `τ_r = inf{t >= 0 : L^a_t > r}`.
    InverseLocalTime { a: usize, r: f64 },
    /// Stop at `τ_{S_θ}` with `S_θ ~ Exp(θ)` independent of the chain.
    ExpKilledLocalTime { a: usize, theta: f64 },
}

impl StopRule {
    /// Parses `absorb`, `hit:a`, `tau:a:r` or `expkill:a:theta`.
    pub fn parse(s: &str, chain: &ChainSpec) -> Result<StopRule> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| -> Result<f64> {
            p.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number '{p}' in stop rule")))
        };
        match parts.as_slice() {
            ["absorb"] => Ok(StopRule::Absorb),
            ["hit", a] => Ok(StopRule::Hit {
                a: chain.state_index(a)?,
            }),
            ["tau", a, r] => Ok(StopRule::InverseLocalTime {
                a: chain.state_index(a)?,
                r: num(r)?,
            }),
            ["expkill", a, t] => Ok(StopRule::ExpKilledLocalTime {
                a: chain.state_index(a)?,
                theta: num(t)?,
            }),
            _ => Err(Error::InvalidInput(format!("unknown stop rule '{s}'"))),
        }
    }

    fn validate(&self, chain: &ChainSpec) -> Result<()> {
        let n = chain.n();
        match *self {
            StopRule::Absorb => {
                if chain.kind != ChainKind::Transient {
                    return Err(Error::UnreachableStop("a recurrent chain is never killed".into()));
                }
            }
            StopRule::Hit { a } | StopRule::InverseLocalTime { a, .. } | StopRule::ExpKilledLocalTime { a, .. } => {
                if a >= n {
                    return Err(Error::InvalidInput(format!("anchor {a} out of range")));
                }
                if chain.kind != ChainKind::Recurrent {
                    return Err(Error::UnreachableStop(
                        "a transient chain may be killed before the anchor stop".into(),
                    ));
                }
            }
        }
        match *self {
            StopRule::InverseLocalTime { r, .. } if !(r >= 0.0 && r.is_finite()) => {
                Err(Error::InvalidInput(format!("level r must be finite and >= 0, got {r}")))
            }
            StopRule::ExpKilledLocalTime { theta, .. } if !(theta > 0.0 && theta.is_finite()) => {
                Err(Error::InvalidInput(format!("theta must be positive, got {theta}")))
            }
            _ => Ok(()),
        }
    }
}

/// Precomputed jump tables for exact path simulation.
#[derive(Debug, Clone)]
pub struct Simulator {
    rates: Vec<f64>,
    /// Per state: cumulative jump probabilities over targets; the remainder
    /// up to 1 is the killing probability.
    cumulative: Vec<Vec<(usize, f64)>>,
    n: usize,
}

impl Simulator {
    pub fn new(chain: &ChainSpec) -> Self {
        Simulator::from_generator(&chain.q)
    }

    fn from_generator(q: &Matrix) -> Self {
        let n = q.n();
        let mut rates = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for x in 0..n {
            let rate = -q[(x, x)];
            rates.push(rate);
            let mut acc = 0.0;
            let mut row = Vec::new();
            if rate > 0.0 {
                for y in 0..n {
                    if y != x && q[(x, y)] > 0.0 {
                        acc += q[(x, y)] / rate;
                        row.push((y, acc));
                    }
                }
            }
            cumulative.push(row);
        }
        Simulator { rates, cumulative, n }
    }

    fn holding<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> f64 {
        let rate = self.rates[x];
        if rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        }
    }

    /// Next state after leaving `x`, or `None` when killed.
    fn jump<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Option<usize> {
        let u: f64 = rng.random();
        self.cumulative[x].iter().find(|(_, c)| u < *c).map(|(y, _)| *y)
    }

    /// One path from `x0`, accumulating local times until `stop`.
    pub fn run<R: Rng + ?Sized>(&self, x0: usize, stop: &StopRule, rng: &mut R) -> LocalTimeField {
        self.run_counting(x0, stop, rng).0
    }

    /// As [`Simulator::run`], also returning the number of visits to each
    /// state (the start counts as a visit).
    pub fn run_counting<R: Rng + ?Sized>(&self, x0: usize, stop: &StopRule, rng: &mut R) -> (LocalTimeField, Vec<u32>) {
        let mut field = vec![0.0; self.n];
        let mut visits = vec![0u32; self.n];
        let (anchor, level) = match *stop {
            StopRule::Absorb => (None, f64::INFINITY),
            StopRule::Hit { a } => (Some(a), 0.0),
            StopRule::InverseLocalTime { a, r } => (Some(a), r),
            StopRule::ExpKilledLocalTime { a, theta } => (Some(a), rng.sample::<f64, _>(Exp1) / theta),
        };
        let hit_only = matches!(stop, StopRule::Hit { .. });
        let mut x = x0;
        loop {
            if hit_only && Some(x) == anchor {
                break;
            }
            visits[x] += 1;
            let h = self.holding(x, rng);
            if Some(x) == anchor && field[x] + h >= level {
                field[x] = level;
                break;
            }
            field[x] += h;
            match self.jump(x, rng) {
                Some(y) => x = y,
                None => break,
            }
        }
        (LocalTimeField(field), visits)
    }
}

/// One path from `x0` with the generator stream `(seed, 0)`.
pub fn simulate_local_times(chain: &ChainSpec, x0: usize, stop: &StopRule, seed: u64) -> Result<LocalTimeField> {
    stop.validate(chain)?;
    Ok(Simulator::new(chain).run(x0, stop, &mut path_rng(seed, 0)))
}

/// `n_paths` independent paths, path `i` on stream `(seed, i)`.
pub fn simulate_paths(
    chain: &ChainSpec,
    x0: usize,
    stop: &StopRule,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<LocalTimeField>> {
    if x0 >= chain.n() {
        return Err(Error::InvalidInput(format!("start state {x0} out of range")));
    }
    stop.validate(chain)?;
    let sim = Simulator::new(chain);
    Ok(par_paths(seed, n_paths, |rng| sim.run(x0, stop, rng)))
}

/// Doob transform by `h(x) = g(x, a)`: the chain started at `a` and killed
/// at its last visit to `a`. Its generator is `H^{-1} Q H`.
pub fn h_transform(chain: &ChainSpec, a: usize) -> Result<ChainSpec> {
    let g = green_function(chain)?;
    let n = chain.n();
    if a >= n {
        return Err(Error::InvalidInput(format!("anchor {a} out of range")));
    }
    let h = g.column(a);
    let reach = chain.reachable_from(a);
    if let Some(x) = (0..n).find(|&x| reach[x] && !(h[x] > 0.0)) {
        return Err(Error::ZeroHarmonic { state: x });
    }
    let q = &chain.q;
    let qt = Matrix::from_fn(n, |x, y| {
        if x == y {
            q[(x, x)]
        } else if h[x] > 0.0 {
            q[(x, y)] * h[y] / h[x]
        } else {
            // Never visited from `a`; keep it a pure killing state.
            0.0
        }
    });
    ChainSpec::new(chain.states.clone(), qt, ChainKind::Transient)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KilledKind {
    /// Killed at `T_a`.
    HittingTime,
    /// Killed at `τ_{S_θ}`.
    ExpLocalTime { theta: f64 },
}

/// Green functions of a recurrent chain killed at `T_a` or at `τ_{S_θ}`.
///
/// `g_{τ_{S_θ}}(x, y) = g_{T_a}(x, y) + 1/θ`, with row and column `a` of the
/// `T_a` kernel identically zero. The second identity needs the invariant
/// measure to be uniform, since local times here are sojourn times.
///
/// The `T_a` kernel is also defined for transient chains, where it is the
/// Green function of paths that never visit `a`.
pub fn killed_green(chain: &ChainSpec, a: usize, kind: KilledKind) -> Result<Kernel> {
    if matches!(kind, KilledKind::ExpLocalTime { .. }) && chain.kind != ChainKind::Recurrent {
        return Err(Error::NotRecurrent("inverse local time needs a recurrent chain".into()));
    }
    let n = chain.n();
    if a >= n {
        return Err(Error::InvalidInput(format!("anchor {a} out of range")));
    }
    let rest: Vec<usize> = (0..n).filter(|&x| x != a).collect();
    let sub = chain.q.select(&rest).scale(-1.0);
    let ta = matrix::inverse(&sub)?.embed(n, &rest);
    let k = match kind {
        KilledKind::HittingTime => ta,
        KilledKind::ExpLocalTime { theta } => {
            if !(theta > 0.0) {
                return Err(Error::InvalidInput(format!("theta must be positive, got {theta}")));
            }
            ta.shift(1.0 / theta)
        }
    };
    k.with_labels(chain.states.clone())
}

/// Samples the Lévy measure of `ψ/2` as weighted local-time fields of the
/// h-transformed chain started at `a`.
#[derive(Debug, Clone)]
pub struct LevySampler {
    sim: Simulator,
    anchor: usize,
    g_aa: f64,
}

impl LevySampler {
    pub fn new(chain: &ChainSpec, a: usize) -> Result<Self> {
        let g = green_function(chain)?;
        if a >= chain.n() {
            return Err(Error::InvalidInput(format!("anchor {a} out of range")));
        }
        let g_aa = g[(a, a)];
        if !(g_aa > 0.0) {
            return Err(Error::InvalidInput(format!("g(a,a) = {g_aa} must be positive")));
        }
        let ht = h_transform(chain, a)?;
        Ok(LevySampler {
            sim: Simulator::new(&ht),
            anchor: a,
            g_aa,
        })
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn g_aa(&self) -> f64 {
        self.g_aa
    }

    /// Holding rate at the anchor, unchanged by the transform.
    pub fn anchor_rate(&self) -> f64 {
        self.sim.rates[self.anchor]
    }

    /// One transformed path with its visit counts.
    pub fn path<R: Rng + ?Sized>(&self, rng: &mut R) -> (LocalTimeField, Vec<u32>) {
        self.sim.run_counting(self.anchor, &StopRule::Absorb, rng)
    }

    /// `E[g(a,a)/(2L^a) (1 - e^{-(α,L)}) | N, (L^x)_{x≠a}]` where `N` is the
    /// number of visits to `a`, so that `L^a ~ Gamma(N, λ_a)`.
    ///
    /// Averaging this over paths estimates `½ log|I + αG|` with bounded
    /// summands, while the unconditioned weight has infinite variance as soon
    /// as `α` charges a state other than `a`.
    pub fn conditional_functional(&self, alpha: &[f64], field: &LocalTimeField, visits: &[u32]) -> f64 {
        let a = self.anchor;
        let lam = self.anchor_rate();
        let n = visits[a];
        let rest: f64 = field
            .0
            .iter()
            .zip(alpha)
            .enumerate()
            .filter(|(x, _)| *x != a)
            .map(|(_, (l, al))| l * al)
            .sum();
        let aa = alpha[a];
        let value = if n <= 1 {
            lam * (aa / lam).ln_1p()
        } else {
            let k = (n - 1) as f64;
            lam / k * (1.0 - (-rest).exp() * (lam / (lam + aa)).powf(k))
        };
        0.5 * self.g_aa * value
    }

    /// `(g(a,a) / (2 L^a_∞), L_∞)` under the transformed law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, LocalTimeField) {
        let field = self.sim.run(self.anchor, &StopRule::Absorb, rng);
        let weight = self.g_aa / (2.0 * field.0[self.anchor]);
        (weight, field)
    }
}

pub fn levy_sample(chain: &ChainSpec, a: usize, seed: u64) -> Result<(f64, LocalTimeField)> {
    Ok(LevySampler::new(chain, a)?.sample(&mut path_rng(seed, 0)))
}

/// `|A|` where `A` is `I + αG` with row `a` replaced by `(g(a, x_j))_j`;
/// equals `∂|I + αG| / ∂α_a`.
pub fn row_substituted_det(g: &Kernel, alpha: &WeightVector, a: usize) -> Result<f64> {
    let mut m = i_plus_alpha_g(g, alpha)?;
    m.set_row(a, g.row(a));
    matrix::det(&m)
}

/// `Ẽ_a[exp(-Σ α_x L^x_∞)] = |A| / (g(a,a) |I + αG|)`.
pub fn h_transform_laplace(g: &Kernel, alpha: &WeightVector, a: usize) -> Result<f64> {
    let d = matrix::det(&i_plus_alpha_g(g, alpha)?)?;
    if d <= 0.0 {
        return Err(Error::NonPositiveDeterminant { value: d });
    }
    Ok(row_substituted_det(g, alpha, a)? / (g[(a, a)] * d))
}
