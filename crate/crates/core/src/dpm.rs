//! Dirichlet-process mixture state and the slice-sampler Gibbs updates.
//!
//! The strength law is `π = Σ_j ω_j N(μ_j, 1/λ_j)` with stick-breaking
//! weights `ω_j = ϑ_j Π_{i<j} (1 - ϑ_i)`, `ϑ_j ~ Beta(1, α)` and atoms
//! `(μ_j, λ_j) ~ N(m₀, s₀²) ⊗ Gamma(a, b)`. Each hidden strength `V_i`
//! carries an allocation `κ_i` and a slice variable `u_i < ω_{κ_i}`; given
//! the slices only the finitely many components with `ω_j > u_i` matter,
//! which makes every conditional below a finite computation.
//!
//! Components are instantiated lazily: [`extend_truncation`] appends prior
//! draws until the leftover stick mass falls below `min_i u_i`, so no
//! component beyond the truncation can be active for any `i`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Component, MixtureDensity};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mixture atom: mean and precision of one Gaussian component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mean: f64,
    pub precision: f64,
}

impl Atom {
    #[inline]
    pub fn ln_pdf(&self, v: f64) -> f64 {
        let d = v - self.mean;
        -LN_SQRT_2PI + 0.5 * self.precision.ln() - 0.5 * self.precision * d * d
    }

    #[inline]
    pub fn pdf(&self, v: f64) -> f64 {
        self.ln_pdf(v).exp()
    }
}

/// Concentration and base measure `Q = N(mean_prior_mean, mean_prior_var) ⊗ Gamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpmHyper {
    pub alpha_dp: f64,
    pub mean_prior_mean: f64,
    pub mean_prior_var: f64,
    pub precision_shape: f64,
    pub precision_rate: f64,
    /// Cap on the number of instantiated components.
    pub max_components: usize,
}

impl Default for DpmHyper {
    fn default() -> Self {
        DpmHyper {
            alpha_dp: 1.0,
            mean_prior_mean: 0.0,
            mean_prior_var: 1.0,
            precision_shape: 1.0,
            precision_rate: 1.0,
            max_components: 10_000,
        }
    }
}

impl DpmHyper {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_dp", self.alpha_dp),
            ("mean_prior_var", self.mean_prior_var),
            ("precision_shape", self.precision_shape),
            ("precision_rate", self.precision_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.mean_prior_mean.is_finite() {
            return Err(Error::domain("mean_prior_mean must be finite"));
        }
        if self.max_components == 0 {
            return Err(Error::domain("max_components must be positive"));
        }
        Ok(())
    }

    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> Atom {
        let mean = Normal::new(self.mean_prior_mean, self.mean_prior_var.sqrt())
            .expect("validated hyperparameters")
            .sample(rng);
        let precision =
            Gamma::new(self.precision_shape, 1.0 / self.precision_rate).expect("validated hyperparameters").sample(rng);
        Atom { mean, precision: precision.max(f64::MIN_POSITIVE) }
    }

    pub fn sample_stick<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        draw_beta(1.0, self.alpha_dp, rng)
    }
}

fn draw_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x = Beta::new(a, b).expect("positive beta parameters").sample(rng);
    // sticks live in the open unit interval
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Full Gibbs state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmState {
    sticks: Vec<f64>,
    weights: Vec<f64>,
    leftover: f64,
    atoms: Vec<Atom>,
    allocations: Vec<usize>,
    slices: Vec<f64>,
    states: Vec<f64>,
}

/// `ω_1 = ϑ_1`, `ω_j = ϑ_j Π_{i<j} (1 - ϑ_i)`.
pub fn stick_to_weights(sticks: &[f64]) -> Result<Vec<f64>> {
    weights_and_leftover(sticks).map(|(w, _)| w)
}

fn weights_and_leftover(sticks: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut rest = 1.0;
    let mut weights = Vec::with_capacity(sticks.len());
    for &s in sticks {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::domain(format!("stick {s} outside (0, 1)")));
        }
        weights.push(s * rest);
        rest *= 1.0 - s;
    }
    Ok((weights, rest))
}

impl DpmState {
    /// Builds a state and checks every invariant: slice consistency
    /// `u_i < ω_{κ_i}`, allocations within the truncation, matching lengths.
    pub fn new(
        sticks: Vec<f64>,
        atoms: Vec<Atom>,
        allocations: Vec<usize>,
        slices: Vec<f64>,
        states: Vec<f64>,
    ) -> Result<Self> {
        let (weights, leftover) = weights_and_leftover(&sticks)?;
        let state = DpmState { sticks, weights, leftover, atoms, allocations, slices, states };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let j = self.sticks.len();
        if j == 0 || self.atoms.len() != j || self.weights.len() != j {
            return Err(Error::domain("sticks, weights and atoms must be nonempty and aligned"));
        }
        let n1 = self.states.len();
        if n1 == 0 || self.allocations.len() != n1 || self.slices.len() != n1 {
            return Err(Error::domain("states, allocations and slices must be nonempty and aligned"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::numeric("a stick-breaking weight underflowed to zero"));
        }
        let total: f64 = self.weights.iter().sum::<f64>() + self.leftover;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::numeric(format!("weights and leftover sum to {total}")));
        }
        for (i, (&k, &u)) in self.allocations.iter().zip(&self.slices).enumerate() {
            if k >= j {
                return Err(Error::domain(format!("allocation {k} of item {i} beyond truncation {j}")));
            }
            if !(u > 0.0 && u < self.weights[k]) {
                return Err(Error::domain(format!("slice {u} of item {i} not in (0, ω_{k} = {})", self.weights[k])));
            }
        }
        for a in &self.atoms {
            if !(a.precision > 0.0) || !a.mean.is_finite() {
                return Err(Error::domain(format!("invalid atom {a:?}")));
            }
        }
        Ok(())
    }

    pub fn sticks(&self) -> &[f64] {
        &self.sticks
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    /// `Π_{j≤J} (1 - ϑ_j)`, the mass not yet assigned to a component.
    pub fn leftover(&self) -> f64 {
        self.leftover
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn allocations(&self) -> &[usize] {
        &self.allocations
    }
    pub fn slices(&self) -> &[f64] {
        &self.slices
    }
    pub fn states(&self) -> &[f64] {
        &self.states
    }
    pub fn truncation(&self) -> usize {
        self.sticks.len()
    }

    pub fn set_states(&mut self, states: Vec<f64>) -> Result<()> {
        if states.len() != self.states.len() {
            return Err(Error::domain("state vector length changed"));
        }
        self.states = states;
        Ok(())
    }

    /// Components `j` with `ω_j > u_i`.
    pub fn active_components(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let u = self.slices[i];
        self.weights.iter().enumerate().filter(move |(_, &w)| w > u).map(|(j, _)| j)
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut m = vec![0usize; self.truncation()];
        for &k in &self.allocations {
            m[k] += 1;
        }
        m
    }

    fn recompute_weights(&mut self) {
        let (w, rest) = weights_and_leftover(&self.sticks).expect("sticks kept in (0, 1)");
        self.weights = w;
        self.leftover = rest;
    }

    fn min_slice(&self) -> f64 {
        self.slices.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Draw each `κ_i` from `Σ_{j: ω_j > u_i} φ_{z_j}(V_i) δ_j`.
pub fn sample_allocations<R: Rng + ?Sized>(state: &mut DpmState, rng: &mut R) -> Result<()> {
    let mut logp: Vec<f64> = Vec::with_capacity(state.truncation());
    let mut idx: Vec<usize> = Vec::with_capacity(state.truncation());
    for i in 0..state.states.len() {
        let v = state.states[i];
        let u = state.slices[i];
        logp.clear();
        idx.clear();
        for (j, (&w, atom)) in state.weights.iter().zip(&state.atoms).enumerate() {
            if w > u {
                idx.push(j);
                logp.push(atom.ln_pdf(v));
            }
        }
        if idx.is_empty() {
            return Err(Error::numeric(format!("no active component for item {i}; truncation insufficient")));
        }
        state.allocations[i] = idx[sample_log_weights(&logp, rng)];
    }
    Ok(())
}

/// Categorical draw from unnormalised log weights.
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(logp: &[f64], rng: &mut R) -> usize {
    if logp.len() == 1 {
        return 0;
    }
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return rng.random_range(0..logp.len());
    }
    let total: f64 = logp.iter().map(|l| (l - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (k, l) in logp.iter().enumerate() {
        u -= (l - max).exp();
        if u < 0.0 {
            return k;
        }
    }
    logp.len() - 1
}

/// Refresh `ϑ_j ~ Beta(m_j + 1, n + 1 - Σ_{ℓ≤j} m_ℓ + α)` for every
/// instantiated `j`, recompute the weights, then `u_i ~ U(0, ω_{κ_i})`.
pub fn sample_sticks_and_slices<R: Rng + ?Sized>(state: &mut DpmState, alpha_dp: f64, rng: &mut R) -> Result<()> {
    if !(alpha_dp > 0.0) {
        return Err(Error::domain("DP concentration must be positive"));
    }
    let counts = state.counts();
    let mut remaining = state.states.len();
    for (stick, &m) in state.sticks.iter_mut().zip(&counts) {
        remaining -= m;
        *stick = draw_beta(m as f64 + 1.0, remaining as f64 + alpha_dp, rng);
    }
    state.recompute_weights();
    if state.weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::numeric("a stick-breaking weight underflowed to zero"));
    }
    for (u, &k) in state.slices.iter_mut().zip(&state.allocations) {
        let e: f64 = Open01.sample(rng);
        *u = state.weights[k] * e;
    }
    Ok(())
}

/// Drop components beyond the largest occupied index. Their full
/// conditionals equal the prior, so they are redrawn lazily on extension.
pub fn trim_truncation(state: &mut DpmState) {
    let keep = state.allocations.iter().max().map_or(1, |&k| k + 1);
    state.sticks.truncate(keep);
    state.atoms.truncate(keep);
    state.recompute_weights();
}

/// Append prior sticks and atoms until `Π_{j≤J}(1 - ϑ_j) < min_i u_i`.
pub fn extend_truncation<R: Rng + ?Sized>(state: &mut DpmState, hyper: &DpmHyper, rng: &mut R) -> Result<()> {
    let min_u = state.min_slice();
    while state.leftover >= min_u {
        if state.sticks.len() >= hyper.max_components {
            return Err(Error::Resource(format!(
                "truncation would exceed {} components (min slice {min_u:e})",
                hyper.max_components
            )));
        }
        let s = hyper.sample_stick(rng);
        state.weights.push(s * state.leftover);
        state.leftover *= 1.0 - s;
        state.sticks.push(s);
        state.atoms.push(hyper.sample_atom(rng));
    }
    Ok(())
}

/// `μ | λ ~ N((m₀/s₀² + λ S) / (1/s₀² + m λ), 1 / (1/s₀² + m λ))`.
pub fn sample_mean_given_precision<R: Rng + ?Sized>(
    hyper: &DpmHyper,
    precision: f64,
    count: usize,
    sum: f64,
    rng: &mut R,
) -> f64 {
    let prior_prec = 1.0 / hyper.mean_prior_var;
    let post_prec = prior_prec + count as f64 * precision;
    let post_mean = (prior_prec * hyper.mean_prior_mean + precision * sum) / post_prec;
    Normal::new(post_mean, post_prec.sqrt().recip()).expect("finite posterior").sample(rng)
}

/// `λ | μ ~ Gamma(a + m/2, b + ½ Σ (V_i - μ)²)` (shape, rate).
pub fn sample_precision_given_mean<R: Rng + ?Sized>(
    hyper: &DpmHyper,
    count: usize,
    sum_sq_dev: f64,
    rng: &mut R,
) -> f64 {
    let shape = hyper.precision_shape + 0.5 * count as f64;
    let rate = hyper.precision_rate + 0.5 * sum_sq_dev;
    Gamma::new(shape, 1.0 / rate).expect("finite posterior").sample(rng).max(f64::MIN_POSITIVE)
}

/// One inner Gibbs pass per atom: `μ_j | λ_j` then `λ_j | μ_j`; empty
/// components are redrawn from the base measure.
pub fn sample_atoms<R: Rng + ?Sized>(state: &mut DpmState, hyper: &DpmHyper, rng: &mut R) -> Result<()> {
    hyper.validate()?;
    let jn = state.truncation();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); jn];
    for (&k, &v) in state.allocations.iter().zip(&state.states) {
        members[k].push(v);
    }
    for (atom, vs) in state.atoms.iter_mut().zip(&members) {
        if vs.is_empty() {
            *atom = hyper.sample_atom(rng);
            continue;
        }
        let sum: f64 = vs.iter().sum();
        let mean = sample_mean_given_precision(hyper, atom.precision, vs.len(), sum, rng);
        let ss: f64 = vs.iter().map(|v| (v - mean) * (v - mean)).sum();
        let precision = sample_precision_given_mean(hyper, vs.len(), ss, rng);
        *atom = Atom { mean, precision };
    }
    Ok(())
}

/// The truncated mixture `Σ_{j≤J} ω_j N(μ_j, 1/λ_j)`, renormalised.
pub fn mixture_snapshot(state: &DpmState) -> MixtureDensity {
    let comps = state
        .weights
        .iter()
        .zip(&state.atoms)
        .map(|(&w, a)| Component { weight: w, mean: a.mean, variance: 1.0 / a.precision })
        .collect();
    MixtureDensity::from_unnormalized(comps).expect("positive weights and precisions")
}
