//! Auxiliary particle filter and backward simulation (FFBSi) for the
//! collapsed hidden-strength update.
//!
//! Time runs over `k = 0..=n` (the strengths `V_1..V_{n+1}`); outcome
//! `outcomes[k]` links `V_k` and `V_{k+1}`. The cloud at time `k` targets the
//! predictive law of `V_k` given the outcomes before it.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dpm::{Atom, DpmState};
use crate::error::{Error, Result};
use crate::model::{Kernel, Outcome};

/// Per-time prior law of the hidden strengths.
pub trait StateLaw {
    /// Number of time points `n + 1`.
    fn horizon(&self) -> usize;
    /// Unnormalised density (or mass) at `v`.
    fn density(&self, k: usize, v: f64) -> f64;
    /// Total mass of [`StateLaw::density`] at time `k`.
    fn normalizer(&self, k: usize) -> f64;
    /// Draw from the normalised law at time `k`.
    fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64;
}

/// Active components per time index, as an equal-weight Gaussian sum.
#[derive(Debug, Clone)]
pub struct SliceMixture {
    offsets: Vec<usize>,
    atoms: Vec<Atom>,
}

impl SliceMixture {
    /// One active list per time index; every list must be nonempty.
    pub fn new(active: Vec<Vec<Atom>>) -> Result<Self> {
        if active.is_empty() || active.iter().any(Vec::is_empty) {
            return Err(Error::domain("every time index needs a nonempty active list"));
        }
        let mut offsets = vec![0];
        let mut atoms = Vec::new();
        for list in active {
            atoms.extend(list);
            offsets.push(atoms.len());
        }
        Ok(SliceMixture { offsets, atoms })
    }

    /// The same active list at each of `horizon` time indices.
    pub fn uniform(atoms: Vec<Atom>, horizon: usize) -> Result<Self> {
        Self::new(vec![atoms; horizon])
    }

    pub fn from_state(state: &DpmState) -> Result<Self> {
        let n1 = state.states().len();
        let mut offsets = Vec::with_capacity(n1 + 1);
        let mut atoms = Vec::new();
        offsets.push(0);
        for i in 0..n1 {
            let before = atoms.len();
            atoms.extend(state.active_components(i).map(|j| state.atoms()[j]));
            if atoms.len() == before {
                return Err(Error::numeric(format!("empty active set at index {i}")));
            }
            offsets.push(atoms.len());
        }
        Ok(SliceMixture { offsets, atoms })
    }

    pub fn active(&self, k: usize) -> &[Atom] {
        &self.atoms[self.offsets[k]..self.offsets[k + 1]]
    }
}

impl StateLaw for SliceMixture {
    fn horizon(&self) -> usize {
        self.offsets.len() - 1
    }

    fn density(&self, k: usize, v: f64) -> f64 {
        self.active(k).iter().map(|a| a.pdf(v)).sum()
    }

    fn normalizer(&self, k: usize) -> f64 {
        self.active(k).len() as f64
    }

    fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        let comps = self.active(k);
        let a = comps[rng.random_range(0..comps.len())];
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        a.mean + z / a.precision.sqrt()
    }
}

/// The same finite law at every time; used for grid-supported checks.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    support: Vec<f64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    horizon: usize,
}

impl DiscreteLaw {
    pub fn new(support: Vec<f64>, probs: Vec<f64>, horizon: usize) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() || horizon == 0 {
            return Err(Error::domain("discrete law needs matching nonempty support and masses"));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || !(total > 0.0) {
            return Err(Error::domain("discrete masses must be nonnegative with positive sum"));
        }
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        Ok(DiscreteLaw { cumulative: cumulative(&probs), support, probs, horizon })
    }
}

impl StateLaw for DiscreteLaw {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn density(&self, _k: usize, v: f64) -> f64 {
        self.support.iter().position(|&s| s == v).map_or(0.0, |i| self.probs[i])
    }

    fn normalizer(&self, _k: usize) -> f64 {
        1.0
    }

    fn sample<R: Rng + ?Sized>(&self, _k: usize, rng: &mut R) -> f64 {
        self.support[draw_cumulative(&self.cumulative, rng)]
    }
}

/// Proposal `p_k(ξ_{k-1}, ·)` with first-stage adjustment `ρ_k`.
pub trait Proposal<L: StateLaw> {
    fn adjustment(&self, law: &L, k: usize, prev: f64) -> f64;
    fn sample<R: Rng + ?Sized>(&self, law: &L, k: usize, prev: f64, rng: &mut R) -> f64;
    fn density(&self, law: &L, k: usize, prev: f64, v: f64) -> f64;

    /// Importance weight `π_k(v) K(x, prev, v) / (ρ_k(prev) p_k(prev, v))`
    /// given the kernel value `kval`.
    fn weight(&self, law: &L, k: usize, prev: f64, v: f64, kval: f64) -> f64 {
        law.density(k, v) * kval / (self.adjustment(law, k, prev) * self.density(law, k, prev, v))
    }
}

/// `ρ ≡ 1` and `p_k` the normalised prior law: the weight is `Z_k K`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bootstrap;

impl<L: StateLaw> Proposal<L> for Bootstrap {
    fn adjustment(&self, _law: &L, _k: usize, _prev: f64) -> f64 {
        1.0
    }

    fn sample<R: Rng + ?Sized>(&self, law: &L, k: usize, _prev: f64, rng: &mut R) -> f64 {
        law.sample(k, rng)
    }

    fn density(&self, law: &L, k: usize, _prev: f64, v: f64) -> f64 {
        law.density(k, v) / law.normalizer(k)
    }

    fn weight(&self, law: &L, k: usize, _prev: f64, _v: f64, kval: f64) -> f64 {
        law.normalizer(k) * kval
    }
}

/// Defensive mixture of the prior law and a Gaussian random walk around
/// the ancestor, with a first-stage tilt `ρ(ξ) = 1 + tilt·tanh(ξ)`.
/// Only meaningful for laws with a Lebesgue density.
#[derive(Debug, Clone, Copy)]
pub struct RandomWalkMix {
    pub prior_weight: f64,
    pub scale: f64,
    pub tilt: f64,
}

impl<L: StateLaw> Proposal<L> for RandomWalkMix {
    fn adjustment(&self, _law: &L, _k: usize, prev: f64) -> f64 {
        1.0 + self.tilt * prev.tanh()
    }

    fn sample<R: Rng + ?Sized>(&self, law: &L, k: usize, prev: f64, rng: &mut R) -> f64 {
        if rng.random::<f64>() < self.prior_weight {
            law.sample(k, rng)
        } else {
            Normal::new(prev, self.scale).expect("positive scale").sample(rng)
        }
    }

    fn density(&self, law: &L, k: usize, prev: f64, v: f64) -> f64 {
        self.prior_weight * law.density(k, v) / law.normalizer(k)
            + (1.0 - self.prior_weight) * crate::mixture::normal_pdf(v, prev, self.scale * self.scale)
    }
}

/// Particles, normalised weights and ancestor indices for each time.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    m: usize,
    particles: Vec<f64>,
    weights: Vec<f64>,
    ancestors: Vec<usize>,
}

impl ParticleCloud {
    pub fn n_particles(&self) -> usize {
        self.m
    }
    pub fn len(&self) -> usize {
        self.particles.len() / self.m
    }
    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
    pub fn particles(&self, k: usize) -> &[f64] {
        &self.particles[k * self.m..(k + 1) * self.m]
    }
    pub fn weights(&self, k: usize) -> &[f64] {
        &self.weights[k * self.m..(k + 1) * self.m]
    }
    /// Ancestors of the particles at time `k` (identity at `k = 0`).
    pub fn ancestors(&self, k: usize) -> &[usize] {
        &self.ancestors[k * self.m..(k + 1) * self.m]
    }
    pub fn mean(&self, k: usize) -> f64 {
        self.particles(k).iter().zip(self.weights(k)).map(|(x, w)| x * w).sum()
    }
    pub fn variance(&self, k: usize) -> f64 {
        let m = self.mean(k);
        self.particles(k).iter().zip(self.weights(k)).map(|(x, w)| w * (x - m) * (x - m)).sum()
    }
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw_cumulative<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn normalize_in_place(w: &mut [f64]) -> Result<()> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::numeric("all particle weights vanished"));
    }
    for x in w.iter_mut() {
        *x /= total;
    }
    Ok(())
}

/// M draws from the law at the first time, weights `1/M`.
pub fn apf_init<L: StateLaw, R: Rng + ?Sized>(law: &L, m: usize, rng: &mut R) -> Result<ParticleCloud> {
    if m == 0 {
        return Err(Error::domain("need at least one particle"));
    }
    if law.horizon() == 0 {
        return Err(Error::domain("empty horizon"));
    }
    let particles: Vec<f64> = (0..m).map(|_| law.sample(0, rng)).collect();
    Ok(ParticleCloud { m, particles, weights: vec![1.0 / m as f64; m], ancestors: (0..m).collect() })
}

/// Extend the cloud by one time step using outcome `x` (linking the last
/// time and the new one).
pub fn apf_step<L, K, P, R>(
    cloud: &mut ParticleCloud,
    x: Outcome,
    law: &L,
    kernel: &K,
    proposal: &P,
    rng: &mut R,
) -> Result<()>
where
    L: StateLaw,
    K: Kernel,
    P: Proposal<L>,
    R: Rng + ?Sized,
{
    let m = cloud.m;
    let k = cloud.len();
    if k >= law.horizon() {
        return Err(Error::domain("cloud already spans the horizon"));
    }
    let prev_x = cloud.particles(k - 1).to_vec();
    let first_stage: Vec<f64> =
        prev_x.iter().zip(cloud.weights(k - 1)).map(|(&p, &w)| w * proposal.adjustment(law, k, p)).collect();
    let cum = cumulative(&first_stage);
    if !(cum[m - 1] > 0.0) {
        return Err(Error::numeric("first-stage weights vanished"));
    }
    let mut new_w = Vec::with_capacity(m);
    cloud.particles.reserve(m);
    for _ in 0..m {
        let a = draw_cumulative(&cum, rng);
        let prev = prev_x[a];
        let v = proposal.sample(law, k, prev, rng);
        let kval = kernel.prob(x, prev, v);
        new_w.push(proposal.weight(law, k, prev, v, kval));
        cloud.particles.push(v);
        cloud.ancestors.push(a);
    }
    normalize_in_place(&mut new_w)?;
    cloud.weights.extend(new_w);
    Ok(())
}

/// Run the filter over the full horizon; `outcomes.len() + 1` must equal
/// the law's horizon.
pub fn run_filter<L, K, P, R>(
    law: &L,
    outcomes: &[Outcome],
    kernel: &K,
    proposal: &P,
    m: usize,
    rng: &mut R,
) -> Result<ParticleCloud>
where
    L: StateLaw,
    K: Kernel,
    P: Proposal<L>,
    R: Rng + ?Sized,
{
    if outcomes.len() + 1 != law.horizon() {
        return Err(Error::domain(format!("{} outcomes do not match horizon {}", outcomes.len(), law.horizon())));
    }
    let mut cloud = apf_init(law, m, rng)?;
    cloud.particles.reserve(m * outcomes.len());
    for &x in outcomes {
        apf_step(&mut cloud, x, law, kernel, proposal, rng)?;
    }
    Ok(cloud)
}

/// `Λ_k(j, ·) ∝ ω_k^ℓ K(x_k, ξ_k^ℓ, ξ_{k+1}^j)`, normalised.
pub fn backward_kernel<K: Kernel>(
    cloud: &ParticleCloud,
    outcomes: &[Outcome],
    kernel: &K,
    k: usize,
    next: f64,
) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = cloud
        .particles(k)
        .iter()
        .zip(cloud.weights(k))
        .map(|(&p, &om)| om * kernel.prob(outcomes[k], p, next))
        .collect();
    normalize_in_place(&mut w)?;
    Ok(w)
}

fn check_cloud(cloud: &ParticleCloud, outcomes: &[Outcome]) -> Result<()> {
    if cloud.len() != outcomes.len() + 1 {
        return Err(Error::domain("cloud length does not match outcomes"));
    }
    Ok(())
}

/// Backward simulation with exact `Λ` sampling, O(M) per step.
pub fn ffbsi_quadratic<K: Kernel, R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    outcomes: &[Outcome],
    kernel: &K,
    n_paths: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    check_cloud(cloud, outcomes)?;
    let t = cloud.len();
    let last_cum = cumulative(cloud.weights(t - 1));
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let mut path = vec![0.0; t];
        let mut j = draw_cumulative(&last_cum, rng);
        path[t - 1] = cloud.particles(t - 1)[j];
        for k in (0..t - 1).rev() {
            let lam = backward_kernel(cloud, outcomes, kernel, k, path[k + 1])?;
            j = draw_cumulative(&cumulative(&lam), rng);
            path[k] = cloud.particles(k)[j];
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Counters of the accept-reject backward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AcceptStats {
    pub proposals: u64,
    pub accepted: u64,
    pub fallbacks: u64,
}

impl AcceptStats {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    pub fn merge(&mut self, other: &AcceptStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
        self.fallbacks += other.fallbacks;
    }
}

/// Backward simulation by accept-reject: propose `J ∝ ω_k`, accept with
/// probability `K(x_k, ξ_k^J, ξ_{k+1})`; after `max_tries` rejections the
/// step falls back to exact `Λ` sampling.
pub fn ffbsi_linear<K: Kernel, R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    outcomes: &[Outcome],
    kernel: &K,
    n_paths: usize,
    max_tries: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, AcceptStats)> {
    check_cloud(cloud, outcomes)?;
    if max_tries == 0 {
        return Err(Error::domain("max_tries must be at least 1"));
    }
    let t = cloud.len();
    let cums: Vec<Vec<f64>> = (0..t).map(|k| cumulative(cloud.weights(k))).collect();
    let mut stats = AcceptStats::default();
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let mut path = vec![0.0; t];
        let j = draw_cumulative(&cums[t - 1], rng);
        path[t - 1] = cloud.particles(t - 1)[j];
        for k in (0..t - 1).rev() {
            let next = path[k + 1];
            let parts = cloud.particles(k);
            let mut chosen = None;
            for _ in 0..max_tries {
                let cand = draw_cumulative(&cums[k], rng);
                stats.proposals += 1;
                if rng.random::<f64>() < kernel.prob(outcomes[k], parts[cand], next) {
                    stats.accepted += 1;
                    chosen = Some(cand);
                    break;
                }
            }
            let j = match chosen {
                Some(j) => j,
                None => {
                    stats.fallbacks += 1;
                    let lam = backward_kernel(cloud, outcomes, kernel, k, next)?;
                    draw_cumulative(&cumulative(&lam), rng)
                }
            };
            path[k] = parts[j];
        }
        paths.push(path);
    }
    Ok((paths, stats))
}

/// `⌈10/ν⌉`, clamped to `[1, cap]`.
pub fn default_max_tries(nu: f64, cap: usize) -> usize {
    if !(nu > 0.0) {
        return cap.max(1);
    }
    ((10.0 / nu).ceil() as usize).clamp(1, cap.max(1))
}
