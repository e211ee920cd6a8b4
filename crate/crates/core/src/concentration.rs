//! Bounded-difference concentration for uniformly minorised Markov chains.
//!
//! For `f` with per-coordinate oscillations `γ`, the deviation
//! `P(f - E f > t)` is bounded by `exp(-2t²/D_n)` with
//! `D_n = Σ_ℓ (γ_ℓ + 2 Σ_{m>ℓ} γ_m Δ(P^{m-ℓ}))²`, and, through
//! `Δ(P^q) ≤ (1 - ν)^q`, by `exp(-ν² t² / (5 Σ γ²))`. This module computes
//! both bounds exactly on finite chains and measures empirical tails
//! against them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite-state chain with row-stochastic transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteChain {
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

fn check_prob_vector(p: &[f64], what: &str) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|x| !(*x >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("{what} is not a probability vector (sum {total})")));
    }
    Ok(())
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw<R: Rng + ?Sized>(cum: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cum[cum.len() - 1];
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = a.len();
    let mut out = vec![vec![0.0; s]; s];
    for i in 0..s {
        for k in 0..s {
            let aik = a[i][k];
            for j in 0..s {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

impl FiniteChain {
    pub fn new(transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let s = transition.len();
        if s == 0 || initial.len() != s || transition.iter().any(|r| r.len() != s) {
            return Err(Error::domain("transition matrix must be square and match the initial law"));
        }
        for row in &transition {
            check_prob_vector(row, "transition row")?;
        }
        check_prob_vector(&initial, "initial law")?;
        Ok(FiniteChain { transition, initial })
    }

    /// `P = ν η + (1 - ν) Q`, which satisfies `P(x, ·) ≥ ν η` for every `x`.
    pub fn from_minorization(nu: f64, eta: &[f64], residual: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::domain(format!("ν = {nu} outside [0, 1]")));
        }
        check_prob_vector(eta, "minorising law")?;
        let transition =
            residual.iter().map(|row| row.iter().zip(eta).map(|(q, e)| nu * e + (1.0 - nu) * q).collect()).collect();
        Self::new(transition, initial)
    }

    /// Random chain on `states` states with minorisation at least `nu`.
    pub fn random<R: Rng + ?Sized>(states: usize, nu: f64, rng: &mut R) -> Result<Self> {
        let rand_law = |rng: &mut R| -> Vec<f64> {
            let raw: Vec<f64> = (0..states).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / t).collect()
        };
        let eta = rand_law(rng);
        let residual = (0..states).map(|_| rand_law(rng)).collect();
        let initial = rand_law(rng);
        Self::from_minorization(nu, &eta, residual, initial)
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Largest `ν` with `P(x, ·) ≥ ν η` for some probability `η`:
    /// `Σ_y min_x P(x, y)`.
    pub fn minorization(&self) -> f64 {
        let s = self.states();
        (0..s).map(|y| self.transition.iter().map(|r| r[y]).fold(f64::INFINITY, f64::min)).sum()
    }

    pub fn power(&self, q: usize) -> Vec<Vec<f64>> {
        let s = self.states();
        let mut out: Vec<Vec<f64>> = (0..s).map(|i| (0..s).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        for _ in 0..q {
            out = matmul(&out, &self.transition);
        }
        out
    }

    /// Exact `Δ(P^q)` for `q = 1..=q_max`.
    pub fn dobrushin_sequence(&self, q_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(q_max);
        let mut pq = self.transition.clone();
        for _ in 0..q_max {
            out.push(dobrushin_coefficient(&pq));
            pq = matmul(&pq, &self.transition);
        }
        out
    }

    /// Laws of `X_1, …, X_n`.
    pub fn marginals(&self, n: usize) -> Vec<Vec<f64>> {
        let s = self.states();
        let mut out = Vec::with_capacity(n);
        let mut cur = self.initial.clone();
        for _ in 0..n {
            out.push(cur.clone());
            let mut next = vec![0.0; s];
            for (x, &p) in cur.iter().enumerate() {
                for (y, nv) in next.iter_mut().enumerate() {
                    *nv += p * self.transition[x][y];
                }
            }
            cur = next;
        }
        out
    }

    pub fn sampler(&self) -> ChainSampler {
        ChainSampler {
            initial: cumulative(&self.initial),
            rows: self.transition.iter().map(|r| cumulative(r)).collect(),
        }
    }
}

/// Precomputed cumulative tables for path simulation.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    initial: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl ChainSampler {
    pub fn sample_into<R: Rng + ?Sized>(&self, path: &mut [usize], rng: &mut R) {
        if path.is_empty() {
            return;
        }
        path[0] = draw(&self.initial, rng);
        for i in 1..path.len() {
            path[i] = draw(&self.rows[path[i - 1]], rng);
        }
    }
}

/// `max_{x,x'} TV(P(x, ·), P(x', ·))`.
pub fn dobrushin_coefficient(p: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            d = d.max(tv(&p[i], &p[j]));
        }
    }
    d
}

/// `(1 - ν)^q`.
pub fn dobrushin_bound(nu: f64, q: usize) -> f64 {
    (1.0 - nu).powi(q as i32)
}

/// `D_n` from `γ_{1:n}` and `dobrushin[q - 1] = Δ(P^q)`, `q = 1..n-1`.
pub fn dn_bound(gamma: &[f64], dobrushin: &[f64]) -> Result<f64> {
    let n = gamma.len();
    if gamma.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::domain("oscillation bounds must be nonnegative"));
    }
    if n > 1 && dobrushin.len() < n - 1 {
        return Err(Error::domain(format!("need {} Dobrushin values, got {}", n - 1, dobrushin.len())));
    }
    let mut total = 0.0;
    for l in 0..n {
        let tail: f64 = ((l + 1)..n).map(|m| gamma[m] * dobrushin[m - l - 1]).sum();
        let term = gamma[l] + 2.0 * tail;
        total += term * term;
    }
    Ok(total)
}

/// `2 (1 + 4 (1 - ν)² / ν²) Σ γ²`, which dominates `D_n` under geometric
/// contraction.
pub fn cauchy_schwarz_bound(nu: f64, gamma: &[f64]) -> f64 {
    let s2: f64 = gamma.iter().map(|g| g * g).sum();
    2.0 * (1.0 + 4.0 * (1.0 - nu).powi(2) / (nu * nu)) * s2
}

pub fn theorem_bound(t: f64, dn: f64) -> f64 {
    if dn == 0.0 {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    (-2.0 * t * t / dn).exp()
}

pub fn corollary_bound(t: f64, nu: f64, gamma: &[f64]) -> f64 {
    let s2: f64 = gamma.iter().map(|g| g * g).sum();
    (-nu * nu * t * t / (5.0 * s2)).exp()
}

pub type PathStatistic = Box<dyn Fn(&[usize]) -> f64 + Send + Sync>;

/// A bounded-difference function on `𝒳^n` with its oscillation bounds.
pub struct LipschitzSpec {
    pub gamma: Vec<f64>,
    pub f: PathStatistic,
}

impl LipschitzSpec {
    /// `(1/n) Σ 1{x_i = target}` with `γ ≡ 1/n`.
    pub fn occupation(n: usize, target: usize) -> Self {
        LipschitzSpec {
            gamma: vec![1.0 / n as f64; n],
            f: Box::new(move |x| x.iter().filter(|&&s| s == target).count() as f64 / x.len() as f64),
        }
    }

    /// `Σ c_i 1{x_i = target}` with `γ_i = |c_i|`.
    pub fn weighted_occupation(coeffs: Vec<f64>, target: usize) -> Self {
        LipschitzSpec {
            gamma: coeffs.iter().map(|c| c.abs()).collect(),
            f: Box::new(move |x| x.iter().zip(&coeffs).filter(|(&s, _)| s == target).map(|(_, c)| c).sum()),
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn eval(&self, x: &[usize]) -> f64 {
        (self.f)(x)
    }
}

/// Probabilistic membership test: `pairs` random single-coordinate flips.
pub fn check_bounded_differences<R: Rng + ?Sized>(
    spec: &LipschitzSpec,
    states: usize,
    pairs: usize,
    rng: &mut R,
) -> Result<()> {
    let n = spec.len();
    if n == 0 || states < 2 {
        return Ok(());
    }
    let mut x = vec![0usize; n];
    for _ in 0..pairs {
        for s in x.iter_mut() {
            *s = rng.random_range(0..states);
        }
        let k = rng.random_range(0..n);
        let fx = spec.eval(&x);
        let old = x[k];
        let shift = rng.random_range(1..states);
        x[k] = (old + shift) % states;
        let fy = spec.eval(&x);
        x[k] = old;
        if (fx - fy).abs() > spec.gamma[k] * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::domain(format!(
                "f changes by {} at coordinate {k}, above γ = {}",
                (fx - fy).abs(),
                spec.gamma[k]
            )));
        }
    }
    Ok(())
}

/// `E f` for occupation-type statistics, from the exact marginals.
pub fn occupation_mean(chain: &FiniteChain, coeffs: &[f64], target: usize) -> f64 {
    chain.marginals(coeffs.len()).iter().zip(coeffs).map(|(m, c)| c * m[target]).sum()
}

/// `P(f - E f > t)` by enumerating `𝒳^n` (for `S^n` up to a few million).
pub fn exact_tail(chain: &FiniteChain, spec: &LipschitzSpec, mean: f64, t: f64) -> Result<f64> {
    let s = chain.states();
    let n = spec.len();
    let total = (s as f64).powi(n as i32);
    if total > 2e7 {
        return Err(Error::Resource(format!("{total} paths is too many to enumerate")));
    }
    let mut x = vec![0usize; n];
    let mut tail = 0.0;
    loop {
        let mut p = chain.initial[x[0]];
        for i in 1..n {
            p *= chain.transition[x[i - 1]][x[i]];
        }
        if p > 0.0 && spec.eval(&x) - mean > t {
            tail += p;
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == n {
                return Ok(tail);
            }
            x[i] += 1;
            if x[i] < s {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub theorem_bound: f64,
    pub corollary_bound: f64,
}

impl TailRow {
    /// Empirical tail within three binomial standard errors of both bounds.
    pub fn holds(&self) -> bool {
        let slack = 3.0 * self.std_error;
        self.empirical <= self.theorem_bound + slack && self.empirical <= self.corollary_bound + slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub nu: f64,
    pub dn: f64,
    pub mean: f64,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(TailRow::holds)
    }
}

/// Empirical deviation tails of `f` over `n_replicates` independent paths,
/// next to the theorem bound (exact `Δ(P^q)`) and the corollary bound.
/// Without `mean`, `E f` comes from a pilot run of `10⁵` paths.
pub fn empirical_tail<R: Rng + ?Sized>(
    chain: &FiniteChain,
    spec: &LipschitzSpec,
    mean: Option<f64>,
    t_grid: &[f64],
    n_replicates: usize,
    rng: &mut R,
) -> Result<TailReport> {
    if n_replicates < 1000 {
        return Err(Error::domain("at least 1000 replicates are required"));
    }
    let n = spec.len();
    if n == 0 {
        return Err(Error::domain("empty statistic"));
    }
    check_bounded_differences(spec, chain.states(), 10_000, rng)?;
    let sampler = chain.sampler();
    let mut path = vec![0usize; n];
    let mean = match mean {
        Some(m) => m,
        None => {
            let pilot = 100_000;
            let mut acc = 0.0;
            for _ in 0..pilot {
                sampler.sample_into(&mut path, rng);
                acc += spec.eval(&path);
            }
            acc / pilot as f64
        }
    };
    let mut devs = Vec::with_capacity(n_replicates);
    for _ in 0..n_replicates {
        sampler.sample_into(&mut path, rng);
        devs.push(spec.eval(&path) - mean);
    }
    devs.sort_by(f64::total_cmp);
    let nu = chain.minorization().min(1.0);
    let dn = dn_bound(&spec.gamma, &chain.dobrushin_sequence(n.saturating_sub(1)))?;
    let r = n_replicates as f64;
    let rows = t_grid
        .iter()
        .map(|&t| {
            let above = n_replicates - devs.partition_point(|&d| d <= t);
            let p = above as f64 / r;
            TailRow {
                t,
                empirical: p,
                std_error: (p * (1.0 - p) / r).sqrt(),
                theorem_bound: theorem_bound(t, dn),
                corollary_bound: corollary_bound(t, nu, &spec.gamma),
            }
        })
        .collect();
    Ok(TailReport { nu, dn, mean, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bound_examples() {
        assert_eq!(dobrushin_bound(1.0, 7), 0.0);
        assert!((dobrushin_bound(1.0 / 3.0, 2) - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(dn_bound(&[0.3], &[]).unwrap(), 0.09);
        let g = [0.1, 0.2, 0.3];
        assert!((dn_bound(&g, &[0.0, 0.0]).unwrap() - 0.14).abs() < 1e-15);
        assert!(dn_bound(&[-0.1], &[]).is_err());
        assert_eq!(theorem_bound(0.0, 0.5), 1.0);
        assert_eq!(corollary_bound(0.0, 0.5, &g), 1.0);
        let n = 100;
        let gamma = vec![1.0 / n as f64; n];
        assert!((corollary_bound(0.2, 0.5, &gamma) - (-0.2f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn uniform_gamma_chain_of_inequalities() {
        for &nu in &[0.05, 0.2, 0.5, 0.9, 1.0] {
            for &n in &[1usize, 2, 10, 100, 500] {
                let gamma = vec![1.0 / n as f64; n];
                let dob: Vec<f64> = (1..n).map(|q| dobrushin_bound(nu, q)).collect();
                let dn = dn_bound(&gamma, &dob).unwrap();
                let s2 = 1.0 / n as f64;
                let cs = cauchy_schwarz_bound(nu, &gamma);
                assert!(dn <= (2.0 - nu).powi(2) / (nu * nu) * s2 * (1.0 + 1e-12));
                assert!(dn <= cs * (1.0 + 1e-12) + 1e-15);
                assert!(dn <= 5.0 * s2 / (nu * nu) * (1.0 + 1e-12));
                assert!(cs <= 10.0 * s2 / (nu * nu) * (1.0 + 1e-12));
            }
        }
    }

    proptest! {
        #[test]
        fn dn_below_cauchy_schwarz(
            nu in 0.01f64..1.0,
            gamma in prop::collection::vec(0.0f64..2.0, 1..60),
        ) {
            let dob: Vec<f64> = (1..gamma.len()).map(|q| dobrushin_bound(nu, q)).collect();
            let dn = dn_bound(&gamma, &dob).unwrap();
            prop_assert!(dn <= cauchy_schwarz_bound(nu, &gamma) + 1e-12);
        }

        #[test]
        fn exact_dobrushin_contracts(seed in any::<u64>(), states in 2usize..6, nu in 0.01f64..1.0) {
            let mut rng = crate::seeded_rng(seed);
            let chain = FiniteChain::random(states, nu, &mut rng).unwrap();
            prop_assert!(chain.minorization() >= nu - 1e-12);
            for (q, d) in chain.dobrushin_sequence(20).iter().enumerate() {
                prop_assert!(*d <= dobrushin_bound(nu, q + 1) + 1e-12);
            }
        }
    }

    #[test]
    fn random_three_state_dobrushin() {
        let mut rng = crate::seeded_rng(1);
        let chain = FiniteChain::random(3, 0.4, &mut rng).unwrap();
        let p2 = chain.power(2);
        assert!(dobrushin_coefficient(&p2) <= dobrushin_bound(0.4, 2) + 1e-12);
    }

    #[test]
    fn lipschitz_membership() {
        let mut rng = crate::seeded_rng(2);
        check_bounded_differences(&LipschitzSpec::occupation(50, 1), 3, 10_000, &mut rng).unwrap();
        let bad = LipschitzSpec { gamma: vec![0.01; 10], f: Box::new(|x| x.iter().sum::<usize>() as f64) };
        assert!(check_bounded_differences(&bad, 2, 100, &mut rng).is_err());
    }

    #[test]
    fn monte_carlo_tail_matches_enumeration() {
        let mut rng = crate::seeded_rng(3);
        let chain = FiniteChain::random(2, 0.3, &mut rng).unwrap();
        let n = 10;
        let spec = LipschitzSpec::occupation(n, 0);
        let mean = occupation_mean(&chain, &vec![1.0 / n as f64; n], 0);
        let report = empirical_tail(&chain, &spec, Some(mean), &[0.05, 0.15], 50_000, &mut rng).unwrap();
        for row in &report.rows {
            let exact = exact_tail(&chain, &spec, mean, row.t).unwrap();
            let se = (exact * (1.0 - exact) / 50_000.0).sqrt();
            assert!((row.empirical - exact).abs() < 4.0 * se + 1e-12, "{row:?} vs {exact}");
            assert!(exact <= row.theorem_bound && exact <= row.corollary_bound);
        }
    }

    #[test]
    fn iid_chain_matches_mcdiarmid() {
        let eta = vec![0.3, 0.7];
        let chain = FiniteChain::from_minorization(1.0, &eta, vec![vec![0.5, 0.5]; 2], eta.clone()).unwrap();
        let n = 100;
        let spec = LipschitzSpec::occupation(n, 0);
        let mut rng = crate::seeded_rng(4);
        let report = empirical_tail(&chain, &spec, Some(0.3), &[0.0, 0.05, 0.1], 10_000, &mut rng).unwrap();
        assert!((report.dn - 1.0 / n as f64).abs() < 1e-12);
        for row in &report.rows {
            let mcd = (-2.0 * row.t * row.t / (1.0 / n as f64)).exp();
            assert!((row.theorem_bound - mcd).abs() < 1e-12);
        }
        assert!(report.holds());
    }

    #[test]
    fn pilot_mean_close_to_exact() {
        let mut rng = crate::seeded_rng(5);
        let chain = FiniteChain::random(3, 0.5, &mut rng).unwrap();
        let n = 30;
        let spec = LipschitzSpec::occupation(n, 2);
        let exact = occupation_mean(&chain, &vec![1.0 / n as f64; n], 2);
        let report = empirical_tail(&chain, &spec, None, &[0.1], 1000, &mut rng).unwrap();
        assert!((report.mean - exact).abs() < 3e-3);
        assert!(empirical_tail(&chain, &spec, None, &[0.1], 999, &mut rng).is_err());
    }
}
