//! Block Gibbs sampler for the strength law and its posterior summaries.
//!
//! One sweep updates, in order: the hidden strengths by one backward
//! trajectory drawn from a bootstrap particle filter under the slice
//! mixture (allocations integrated out), the allocations, the sticks and
//! slices, then the atoms. Retained sweeps are summarised by the pointwise
//! average of the mixture densities, compared with a reference after
//! translation alignment, and pushed through simulated championships.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dpm::{
    extend_truncation, mixture_snapshot, sample_allocations, sample_atoms, sample_sticks_and_slices, trim_truncation,
    DpmHyper, DpmState,
};
use crate::error::{Error, Result};
use crate::mixture::{trapezoid, InverseCdfSampler, MixtureDensity, TabulatedDensity};
use crate::model::{play_championship, Kernel, LatentKernel, Outcome, OutcomeKernel, Scoring};
use crate::smc::{default_max_tries, ffbsi_linear, ffbsi_quadratic, run_filter, AcceptStats, Bootstrap, SliceMixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackwardMode {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub n_particles: usize,
    pub hyper: DpmHyper,
    /// When false only the strengths are updated and the mixture is held fixed.
    pub update_dpm: bool,
    pub backward: BackwardMode,
    /// Upper limit on accept-reject proposals per backward step.
    pub max_tries_cap: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_sweeps: 1500,
            burn_in: 1000,
            n_particles: 100,
            hyper: DpmHyper::default(),
            update_dpm: true,
            backward: BackwardMode::Linear,
            max_tries_cap: 10_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_sweeps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below n_sweeps ({})",
                self.burn_in, self.n_sweeps
            )));
        }
        if self.n_particles < 2 {
            return Err(Error::Config("n_particles must be at least 2".into()));
        }
        if self.max_tries_cap == 0 {
            return Err(Error::Config("max_tries_cap must be positive".into()));
        }
        self.hyper.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub sweep: usize,
    pub mixture: MixtureDensity,
    pub states: Vec<f64>,
}

/// Two sticks and atoms from the prior; strengths drawn i.i.d. from the
/// resulting two-component mixture; allocations and slices from their
/// conditionals.
pub fn init_state<R: Rng + ?Sized>(n_states: usize, hyper: &DpmHyper, rng: &mut R) -> Result<DpmState> {
    hyper.validate()?;
    if n_states == 0 {
        return Err(Error::domain("need at least one hidden state"));
    }
    let sticks = vec![hyper.sample_stick(rng), hyper.sample_stick(rng)];
    let atoms = vec![hyper.sample_atom(rng), hyper.sample_atom(rng)];
    let weights = crate::dpm::stick_to_weights(&sticks)?;
    let init = MixtureDensity::from_unnormalized(
        weights
            .iter()
            .zip(&atoms)
            .map(|(&w, a)| crate::mixture::Component { weight: w, mean: a.mean, variance: 1.0 / a.precision })
            .collect(),
    )?;
    let states: Vec<f64> = (0..n_states).map(|_| init.sample(rng)).collect();
    let mut allocations = Vec::with_capacity(n_states);
    let mut slices = Vec::with_capacity(n_states);
    for &v in &states {
        let logp: Vec<f64> = weights.iter().zip(&atoms).map(|(w, a)| w.ln() + a.ln_pdf(v)).collect();
        let k = crate::dpm::sample_log_weights(&logp, rng);
        let e: f64 = rng.sample(rand_distr::Open01);
        allocations.push(k);
        slices.push(weights[k] * e);
    }
    DpmState::new(sticks, atoms, allocations, slices, states)
}

/// Diagnostics of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepInfo {
    pub nu: f64,
    pub max_tries: usize,
    pub accept: AcceptStats,
    pub truncation: usize,
}

/// One full sweep; see the module documentation for the order.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut DpmState,
    outcomes: &[Outcome],
    kernel: &OutcomeKernel,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<SweepInfo> {
    if outcomes.len() + 1 != state.states().len() {
        return Err(Error::domain("outcome count does not match the hidden states"));
    }
    if config.update_dpm {
        extend_truncation(state, &config.hyper, rng)?;
    }
    let latent = LatentKernel(*kernel);
    let law = SliceMixture::from_state(state)?;
    let cloud = run_filter(&law, outcomes, &latent, &Bootstrap, config.n_particles, rng)?;
    let (lo, hi) = (0..cloud.len())
        .flat_map(|k| cloud.particles(k).iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let nu = latent.lower_bound(lo, hi);
    let max_tries = default_max_tries(nu, config.max_tries_cap);
    let (mut paths, accept) = match config.backward {
        BackwardMode::Linear => ffbsi_linear(&cloud, outcomes, &latent, 1, max_tries, rng)?,
        BackwardMode::Quadratic => (ffbsi_quadratic(&cloud, outcomes, &latent, 1, rng)?, AcceptStats::default()),
    };
    state.set_states(paths.pop().expect("one path"))?;
    if config.update_dpm {
        sample_allocations(state, rng)?;
        trim_truncation(state);
        sample_sticks_and_slices(state, config.hyper.alpha_dp, rng)?;
        extend_truncation(state, &config.hyper, rng)?;
        sample_atoms(state, &config.hyper, rng)?;
    }
    Ok(SweepInfo { nu, max_tries, accept, truncation: state.truncation() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<PosteriorSample>,
    pub accept: AcceptStats,
    /// Smallest per-sweep `ν` seen.
    pub min_nu: f64,
    pub max_truncation: usize,
    pub runtime_secs: f64,
}

/// Run `n_sweeps` sweeps from [`init_state`] and keep those after burn-in.
pub fn run_chain(
    outcomes: &[Outcome],
    kernel: &OutcomeKernel,
    config: &SamplerConfig,
    seed: u64,
) -> Result<ChainOutput> {
    config.validate()?;
    kernel.validate()?;
    if outcomes.is_empty() {
        return Err(Error::domain("no outcomes to fit"));
    }
    for (i, x) in outcomes.iter().enumerate() {
        if !kernel.contains(*x) {
            return Err(Error::domain(format!("outcome {} at index {i} not in the kernel's outcome set", x.0)));
        }
    }
    let start = Instant::now();
    let mut rng = crate::seeded_rng(seed);
    let mut state = init_state(outcomes.len() + 1, &config.hyper, &mut rng)?;
    let mut accept = AcceptStats::default();
    let mut min_nu = f64::INFINITY;
    let mut max_truncation = state.truncation();
    let mut samples = Vec::with_capacity(config.n_sweeps - config.burn_in);
    for sweep in 0..config.n_sweeps {
        let info = gibbs_sweep(&mut state, outcomes, kernel, config, &mut rng)?;
        accept.merge(&info.accept);
        min_nu = min_nu.min(info.nu);
        max_truncation = max_truncation.max(info.truncation);
        if sweep >= config.burn_in {
            samples.push(PosteriorSample { sweep, mixture: mixture_snapshot(&state), states: state.states().to_vec() });
        }
    }
    Ok(ChainOutput { samples, accept, min_nu, max_truncation, runtime_secs: start.elapsed().as_secs_f64() })
}

/// Pointwise average of the mixture densities on `nodes`.
pub fn density_estimate(samples: &[MixtureDensity], nodes: &[f64]) -> Result<TabulatedDensity> {
    if samples.is_empty() {
        return Err(Error::domain("no posterior samples"));
    }
    let n = samples.len() as f64;
    let mut values = vec![0.0; nodes.len()];
    for m in samples {
        for (v, &x) in values.iter_mut().zip(nodes) {
            *v += m.pdf(x);
        }
    }
    for v in &mut values {
        *v /= n;
    }
    TabulatedDensity::new(nodes.to_vec(), values)
}

/// Pointwise posterior mean with lower and upper quantile bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBand {
    pub nodes: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn density_band(samples: &[MixtureDensity], nodes: &[f64], lower_q: f64, upper_q: f64) -> Result<DensityBand> {
    let est = density_estimate(samples, nodes)?;
    let mut lower = Vec::with_capacity(nodes.len());
    let mut upper = Vec::with_capacity(nodes.len());
    let mut column = vec![0.0; samples.len()];
    for &x in nodes {
        for (c, m) in column.iter_mut().zip(samples) {
            *c = m.pdf(x);
        }
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, lower_q));
        upper.push(quantile_sorted(&column, upper_q));
    }
    Ok(DensityBand { nodes: est.nodes, mean: est.values, lower, upper })
}

/// Evenly spaced nodes covering every sample's mean ± `width` standard deviations.
pub fn default_nodes(samples: &[MixtureDensity], count: usize, width: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::domain("no posterior samples"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for m in samples {
        let (mu, sd) = (m.mean(), m.std_dev());
        lo = lo.min(mu - width * sd);
        hi = hi.max(mu + width * sd);
    }
    Ok(crate::mixture::linspace(lo, hi, count))
}

/// Linear-interpolation quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `∫ |est(v - c) - ref(v)| dv`, with reference mass outside the shifted
/// window counted in full.
pub fn shifted_l1(estimate: &TabulatedDensity, reference: &MixtureDensity, c: f64) -> f64 {
    let nodes = &estimate.nodes;
    let diff: Vec<f64> = nodes.iter().zip(&estimate.values).map(|(&w, &e)| (e - reference.pdf(w + c)).abs()).collect();
    let inside = reference.cdf(nodes[nodes.len() - 1] + c) - reference.cdf(nodes[0] + c);
    trapezoid(nodes, &diff) + (1.0 - inside).max(0.0)
}

/// Shift `c ∈ [-10, 10]` minimising [`shifted_l1`]: a scan at step 0.05
/// brackets the minimum, golden-section search refines it.
pub fn align_translation(estimate: &TabulatedDensity, reference: &MixtureDensity) -> f64 {
    let f = |c: f64| shifted_l1(estimate, reference, c);
    let step = 0.05;
    let mut best = (f(0.0), 0.0);
    let mut c = -10.0;
    while c <= 10.0 + 1e-12 {
        let v = f(c);
        if v < best.0 {
            best = (v, c);
        }
        c += step;
    }
    let (mut a, mut b) = ((best.1 - step).max(-10.0), (best.1 + step).min(10.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        if b - a < 1e-9 {
            break;
        }
    }
    let mid = 0.5 * (a + b);
    // never return something worse than the scan's best (or zero)
    if f(mid) <= best.0 {
        mid
    } else {
        best.1
    }
}

/// The estimate moved by `c`, tabulated on its own nodes.
pub fn shift_tabulated(estimate: &TabulatedDensity, c: f64) -> Vec<f64> {
    estimate.nodes.iter().map(|&v| estimate.value_at(v - c)).collect()
}

/// Per-rank points across replicates; rank 0 is the champion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub median: Vec<f64>,
    pub lower_decile: Vec<f64>,
    pub upper_decile: Vec<f64>,
    /// `raw[r]` holds the sorted (descending) points of replicate `r`.
    pub raw: Vec<Vec<u32>>,
}

/// Simulate championships with team strengths drawn from the estimate.
pub fn predict_championships<R: Rng + ?Sized>(
    density: &TabulatedDensity,
    n_teams: usize,
    kernel: &OutcomeKernel,
    n_replicates: usize,
    scoring: Scoring,
    rng: &mut R,
) -> Result<ScoreTable> {
    if (density.integral() - 1.0).abs() > 1e-3 {
        return Err(Error::domain(format!("density integrates to {}, not 1", density.integral())));
    }
    if n_replicates == 0 {
        return Err(Error::domain("need at least one replicate"));
    }
    let sampler = InverseCdfSampler::new(density)?;
    let mut raw = Vec::with_capacity(n_replicates);
    for _ in 0..n_replicates {
        let strengths: Vec<f64> = (0..n_teams).map(|_| sampler.sample(rng)).collect();
        let mut points = play_championship(&strengths, kernel, scoring, rng)?.points;
        points.sort_unstable_by(|a, b| b.cmp(a));
        raw.push(points);
    }
    let mut median = Vec::with_capacity(n_teams);
    let mut lower_decile = Vec::with_capacity(n_teams);
    let mut upper_decile = Vec::with_capacity(n_teams);
    for rank in 0..n_teams {
        let mut col: Vec<f64> = raw.iter().map(|p| p[rank] as f64).collect();
        col.sort_by(f64::total_cmp);
        median.push(quantile_sorted(&col, 0.5));
        lower_decile.push(quantile_sorted(&col, 0.1));
        upper_decile.push(quantile_sorted(&col, 0.9));
    }
    Ok(ScoreTable { median, lower_decile, upper_decile, raw })
}
