//! Exact inference on a discretised strength law.
//!
//! A [`GridModel`] replaces `π` by point masses on a finite set of nodes. On
//! that model the predictive filter, the likelihood and the smoothing
//! marginals are computable exactly in `O(n G²)`. These serve as references
//! for the particle methods and for the forgetting bounds: with
//! `ν = inf K`, the predictive filter forgets its initial law at rate
//! `(1 - ν)^p` and the one-step conditional log-likelihood forgets a
//! prefix at rate `ν^{-1} (1 - ν)^{i-1}`.
//!
//! Recursions are normalised at every step and log-normalisers accumulated,
//! which keeps them stable without working in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{trapezoid_weights, MixtureDensity};
use crate::model::{Kernel, Outcome};

/// A probability vector over the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState(pub Vec<f64>);

impl FilterState {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::domain("filter state has negative or non-finite entries"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("filter state sums to {total}")));
        }
        Ok(FilterState(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn tv_distance(&self, other: &FilterState) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    pub fn mean(&self, nodes: &[f64]) -> f64 {
        self.0.iter().zip(nodes).map(|(p, v)| p * v).sum()
    }

    pub fn variance(&self, nodes: &[f64]) -> f64 {
        let m = self.mean(nodes);
        self.0.iter().zip(nodes).map(|(p, v)| p * (v - m) * (v - m)).sum()
    }
}

/// Discretised strength law with cached kernel matrices, one per outcome.
#[derive(Debug, Clone)]
pub struct GridModel<K> {
    nodes: Vec<f64>,
    masses: Vec<f64>,
    kernel: K,
    // kmat[x][a * G + b] = K(x, nodes[a], nodes[b])
    kmat: Vec<Vec<f64>>,
}

impl<K: Kernel> GridModel<K> {
    pub fn new(nodes: Vec<f64>, masses: Vec<f64>, kernel: K) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != masses.len() {
            return Err(Error::domain("grid needs matching, nonempty nodes and masses"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("grid nodes must be strictly increasing"));
        }
        FilterState::new(masses.clone())?;
        let g = nodes.len();
        let kmat = kernel
            .outcomes()
            .iter()
            .map(|&x| {
                let mut m = Vec::with_capacity(g * g);
                for &a in &nodes {
                    for &b in &nodes {
                        m.push(kernel.prob(x, a, b));
                    }
                }
                m
            })
            .collect();
        Ok(GridModel { nodes, masses, kernel, kmat })
    }

    /// `count` equally spaced nodes on `[m - 5s, m + 5s]` with masses
    /// `pdf × trapezoid weight`, renormalised.
    pub fn from_mixture(pi: &MixtureDensity, count: usize, kernel: K) -> Result<Self> {
        if count < 2 {
            return Err(Error::domain("grid needs at least two nodes"));
        }
        let nodes = pi.covering_nodes(count, 5.0);
        let tw = trapezoid_weights(&nodes);
        let raw: Vec<f64> = nodes.iter().zip(&tw).map(|(&v, w)| pi.pdf(v) * w).collect();
        let total: f64 = raw.iter().sum();
        let masses = raw.iter().map(|m| m / total).collect();
        Self::new(nodes, masses, kernel)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn prior_state(&self) -> FilterState {
        FilterState(self.masses.clone())
    }

    /// Minorisation constant: the kernel's lower bound on the hull of the
    /// nodes, never above the minimum over node pairs.
    pub fn nu(&self) -> f64 {
        let lo = self.nodes[0];
        let hi = self.nodes[self.nodes.len() - 1];
        let on_nodes = self.kmat.iter().flat_map(|m| m.iter().copied()).fold(f64::INFINITY, f64::min);
        self.kernel.lower_bound(lo, hi).min(on_nodes)
    }

    fn outcome_index(&self, x: Outcome) -> Result<usize> {
        self.kernel
            .outcomes()
            .iter()
            .position(|&o| o == x)
            .ok_or_else(|| Error::domain(format!("outcome {} not in the kernel's outcome set", x.0)))
    }

    /// `Σ_a η(a) K(x, a, b)` for every node `b`.
    fn emission(&self, state: &FilterState, xi: usize) -> Vec<f64> {
        let g = self.len();
        let k = &self.kmat[xi];
        let mut out = vec![0.0; g];
        for (a, &p) in state.0.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let row = &k[a * g..(a + 1) * g];
            for (o, &kv) in out.iter_mut().zip(row) {
                *o += p * kv;
            }
        }
        out
    }

    /// One prediction step; also returns `P(x | past)`.
    fn propagate(&self, state: &FilterState, xi: usize) -> Result<(FilterState, f64)> {
        let mut next = self.emission(state, xi);
        for (n, m) in next.iter_mut().zip(&self.masses) {
            *n *= m;
        }
        let c: f64 = next.iter().sum();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::numeric("filter normaliser vanished"));
        }
        for n in &mut next {
            *n /= c;
        }
        Ok((FilterState(next), c))
    }

    fn predictive_filters(&self, outcomes: &[Outcome]) -> Result<(Vec<FilterState>, f64)> {
        let mut filters = Vec::with_capacity(outcomes.len() + 1);
        filters.push(self.prior_state());
        let mut loglik = 0.0;
        for &x in outcomes {
            let xi = self.outcome_index(x)?;
            let (next, c) = self.propagate(filters.last().unwrap(), xi)?;
            loglik += c.ln();
            filters.push(next);
        }
        Ok((filters, loglik))
    }
}

/// `Φ(x, η; π)`: law of the next strength given the current predictive law
/// `η` and a new outcome `x`.
pub fn filter_step<K: Kernel>(state: &FilterState, x: Outcome, grid: &GridModel<K>) -> Result<FilterState> {
    if state.0.len() != grid.len() {
        return Err(Error::domain("filter state does not match the grid"));
    }
    let xi = grid.outcome_index(x)?;
    grid.propagate(state, xi).map(|(s, _)| s)
}

/// Predictive laws `η_1, …, η_{n+1}` of each strength given the outcomes before it.
pub fn predictive_filters<K: Kernel>(grid: &GridModel<K>, outcomes: &[Outcome]) -> Result<Vec<FilterState>> {
    grid.predictive_filters(outcomes).map(|(f, _)| f)
}

/// Log-likelihood of `x_{1:n}` under the grid law, by the forward recursion.
pub fn exact_loglik<K: Kernel>(grid: &GridModel<K>, outcomes: &[Outcome]) -> Result<f64> {
    grid.predictive_filters(outcomes).map(|(_, ll)| ll)
}

/// Marginal laws of `V_1, …, V_{n+1}` given `x_{1:n}` (forward-backward).
pub fn smoothing_marginals<K: Kernel>(grid: &GridModel<K>, outcomes: &[Outcome]) -> Result<Vec<FilterState>> {
    let (filters, _) = grid.predictive_filters(outcomes)?;
    let g = grid.len();
    let n = outcomes.len();
    // beta[b] ∝ P(x_{k:n} | V_k = b)
    let mut beta = vec![1.0; g];
    let mut out = vec![FilterState(Vec::new()); n + 1];
    for k in (0..=n).rev() {
        let mut m: Vec<f64> = filters[k].0.iter().zip(&beta).map(|(f, b)| f * b).collect();
        let total: f64 = m.iter().sum();
        if !(total > 0.0) {
            return Err(Error::numeric("smoothing normaliser vanished"));
        }
        for v in &mut m {
            *v /= total;
        }
        out[k] = FilterState(m);
        if k > 0 {
            let xi = grid.outcome_index(outcomes[k - 1])?;
            let kmat = &grid.kmat[xi];
            let weighted: Vec<f64> = beta.iter().zip(&grid.masses).map(|(b, p)| b * p).collect();
            let mut prev = vec![0.0; g];
            for (a, pv) in prev.iter_mut().enumerate() {
                let row = &kmat[a * g..(a + 1) * g];
                *pv = row.iter().zip(&weighted).map(|(k, w)| k * w).sum();
            }
            let scale = prev.iter().cloned().fold(0.0, f64::max);
            if !(scale > 0.0) {
                return Err(Error::numeric("backward message vanished"));
            }
            for v in &mut prev {
                *v /= scale;
            }
            beta = prev;
        }
    }
    Ok(out)
}

/// A measured quantity next to the bound it must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub measured: f64,
    pub bound: f64,
    pub nu: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

/// TV distance after `p` filter steps from two initial laws, against `(1-ν)^p`.
pub fn forgetting_gap<K: Kernel>(
    grid: &GridModel<K>,
    init_a: &FilterState,
    init_b: &FilterState,
    outcomes: &[Outcome],
) -> Result<BoundCheck> {
    let nu = grid.nu();
    let mut a = init_a.clone();
    let mut b = init_b.clone();
    for &x in outcomes {
        a = filter_step(&a, x, grid)?;
        b = filter_step(&b, x, grid)?;
    }
    Ok(BoundCheck { measured: a.tv_distance(&b), bound: (1.0 - nu).powi(outcomes.len() as i32), nu })
}

/// `|log P(x_i | x_{1:i-1}) - log P(x_i | x_{-ell+1:i-1})|` against
/// `ν^{-1} (1-ν)^{i-1}`.
///
/// `outcomes[..ell]` is the prefix preceding `x_1`; `outcomes[ell + i - 1]`
/// is `x_i`.
pub fn truncation_gap<K: Kernel>(
    grid: &GridModel<K>,
    outcomes: &[Outcome],
    i: usize,
    ell: usize,
) -> Result<BoundCheck> {
    if i == 0 {
        return Err(Error::domain("time index starts at 1"));
    }
    if outcomes.len() < ell + i {
        return Err(Error::domain(format!(
            "need {} outcomes for prefix {ell} and index {i}, got {}",
            ell + i,
            outcomes.len()
        )));
    }
    let nu = grid.nu();
    let conditional = |start: usize| -> Result<f64> {
        let mut state = grid.prior_state();
        for &x in &outcomes[start..ell + i - 1] {
            state = filter_step(&state, x, grid)?;
        }
        let xi = grid.outcome_index(outcomes[ell + i - 1])?;
        grid.propagate(&state, xi).map(|(_, c)| c.ln())
    };
    let short = conditional(ell)?;
    let long = conditional(0)?;
    Ok(BoundCheck { measured: (short - long).abs(), bound: (1.0 - nu).powi(i as i32 - 1) / nu, nu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OutcomeKernel, UniformKernel};
    use proptest::prelude::*;
    use rand::Rng;

    fn two_point_bt() -> GridModel<OutcomeKernel> {
        GridModel::new(vec![1.0, 2.0], vec![0.5, 0.5], OutcomeKernel::BradleyTerry).unwrap()
    }

    /// Brute-force `Σ_{v ∈ grid^{n+1}} Π masses Π K`, the likelihood oracle.
    fn brute_force_lik<K: Kernel>(grid: &GridModel<K>, xs: &[Outcome]) -> f64 {
        let g = grid.len();
        let n = xs.len();
        let total_paths = g.pow(n as u32 + 1);
        let mut total = 0.0;
        for code in 0..total_paths {
            let path = decode(code, g, n + 1);
            let mut w: f64 = path.iter().map(|&a| grid.masses()[a]).product();
            for (k, &x) in xs.iter().enumerate() {
                w *= grid.kernel().prob(x, grid.nodes()[path[k]], grid.nodes()[path[k + 1]]);
            }
            total += w;
        }
        total
    }

    fn brute_force_marginals<K: Kernel>(grid: &GridModel<K>, xs: &[Outcome]) -> Vec<Vec<f64>> {
        let g = grid.len();
        let n = xs.len();
        let mut marg = vec![vec![0.0; g]; n + 1];
        let mut total = 0.0;
        for code in 0..g.pow(n as u32 + 1) {
            let path = decode(code, g, n + 1);
            let mut w: f64 = path.iter().map(|&a| grid.masses()[a]).product();
            for (k, &x) in xs.iter().enumerate() {
                w *= grid.kernel().prob(x, grid.nodes()[path[k]], grid.nodes()[path[k + 1]]);
            }
            total += w;
            for (k, &a) in path.iter().enumerate() {
                marg[k][a] += w;
            }
        }
        marg.iter_mut().flatten().for_each(|v| *v /= total);
        marg
    }

    fn decode(mut code: usize, g: usize, len: usize) -> Vec<usize> {
        (0..len)
            .map(|_| {
                let a = code % g;
                code /= g;
                a
            })
            .collect()
    }

    fn random_grid<R: Rng>(rng: &mut R, g: usize) -> GridModel<OutcomeKernel> {
        let mut nodes: Vec<f64> = (0..g).map(|_| rng.random_range(-2.0..2.0)).collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let raw: Vec<f64> = nodes.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let kernel = OutcomeKernel::home_ties(rng.random_range(0.5..2.0), rng.random_range(1.0..3.0)).unwrap();
        GridModel::new(nodes, raw.iter().map(|m| m / total).collect(), kernel).unwrap()
    }

    #[test]
    fn two_point_filter_step() {
        let grid = two_point_bt();
        let out = filter_step(&grid.prior_state(), Outcome(1), &grid).unwrap();
        assert!((out.0[0] - 7.0 / 12.0).abs() < 1e-15);
        assert!((out.0[1] - 5.0 / 12.0).abs() < 1e-15);
        let twice = filter_step(&out, Outcome(0), &grid).unwrap();
        assert!((twice.0.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_kernel_returns_masses() {
        let grid = GridModel::new(vec![-1.0, 0.0, 3.0], vec![0.2, 0.5, 0.3], UniformKernel::new(2).unwrap()).unwrap();
        let start = FilterState(vec![1.0, 0.0, 0.0]);
        let out = filter_step(&start, Outcome(1), &grid).unwrap();
        for (a, b) in out.0.iter().zip(grid.masses()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn loglik_examples() {
        let grid = two_point_bt();
        assert_eq!(exact_loglik(&grid, &[]).unwrap(), 0.0);
        let ll = exact_loglik(&grid, &[Outcome(1)]).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
        assert!(exact_loglik(&grid, &[Outcome(-1)]).is_err());
    }

    #[test]
    fn loglik_matches_brute_force() {
        let mut rng = crate::seeded_rng(11);
        for _ in 0..20 {
            let grid = random_grid(&mut rng, 5);
            let xs: Vec<Outcome> = (0..4).map(|_| Outcome(rng.random_range(-1..=1))).collect();
            let exact = exact_loglik(&grid, &xs).unwrap();
            let brute = brute_force_lik(&grid, &xs).ln();
            assert!((exact - brute).abs() < 1e-10, "{exact} vs {brute}");
        }
    }

    #[test]
    fn marginals_examples() {
        let grid = two_point_bt();
        let m = smoothing_marginals(&grid, &[]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].0, grid.masses());

        let sym = GridModel::new(vec![-1.0, 1.0], vec![0.5, 0.5], UniformKernel::new(3).unwrap()).unwrap();
        for s in smoothing_marginals(&sym, &[Outcome(2)]).unwrap() {
            assert!((s.0[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn marginals_match_enumeration() {
        let mut rng = crate::seeded_rng(12);
        for _ in 0..10 {
            let grid = random_grid(&mut rng, 4);
            let xs: Vec<Outcome> = (0..3).map(|_| Outcome(rng.random_range(-1..=1))).collect();
            let exact = smoothing_marginals(&grid, &xs).unwrap();
            let brute = brute_force_marginals(&grid, &xs);
            for (e, b) in exact.iter().zip(&brute) {
                for (x, y) in e.0.iter().zip(b) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn last_marginal_is_the_filter() {
        let mut rng = crate::seeded_rng(13);
        let grid = random_grid(&mut rng, 6);
        let xs: Vec<Outcome> = (0..8).map(|_| Outcome(rng.random_range(-1..=1))).collect();
        let marg = smoothing_marginals(&grid, &xs).unwrap();
        let mut f = grid.prior_state();
        for &x in &xs {
            f = filter_step(&f, x, &grid).unwrap();
        }
        assert!(marg[xs.len()].tv_distance(&f) < 1e-13);
    }

    #[test]
    fn normalisation_survives_long_chains() {
        let mut rng = crate::seeded_rng(14);
        let grid = random_grid(&mut rng, 6);
        let mut f = grid.prior_state();
        for _ in 0..10_000 {
            f = filter_step(&f, Outcome(rng.random_range(-1..=1)), &grid).unwrap();
            assert!((f.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forgetting_examples() {
        let grid = two_point_bt();
        let a = FilterState(vec![1.0, 0.0]);
        let b = FilterState(vec![0.0, 1.0]);
        let same = forgetting_gap(&grid, &a, &a, &[Outcome(1), Outcome(0)]).unwrap();
        assert_eq!(same.measured, 0.0);
        let p0 = forgetting_gap(&grid, &a, &b, &[]).unwrap();
        assert_eq!((p0.measured, p0.bound), (1.0, 1.0));

        let mut rng = crate::seeded_rng(15);
        let xs: Vec<Outcome> = (0..10).map(|_| Outcome(rng.random_range(0..=1))).collect();
        let check = forgetting_gap(&grid, &a, &b, &xs).unwrap();
        assert!((check.nu - 1.0 / 3.0).abs() < 1e-15);
        assert!((check.bound - (2.0f64 / 3.0).powi(10)).abs() < 1e-15);
        assert!(check.holds(), "{check:?}");
    }

    #[test]
    fn truncation_examples() {
        let grid = two_point_bt();
        let xs = [Outcome(1), Outcome(0), Outcome(1)];
        let t = truncation_gap(&grid, &xs, 1, 0).unwrap();
        assert_eq!(t.measured, 0.0);
        assert!(truncation_gap(&grid, &xs, 0, 0).is_err());
        assert!(truncation_gap(&grid, &xs, 3, 1).is_err());

        let mut rng = crate::seeded_rng(16);
        let xs: Vec<Outcome> = (0..20).map(|_| Outcome(rng.random_range(0..=1))).collect();
        let t = truncation_gap(&grid, &xs, 11, 9).unwrap();
        assert!((t.bound - 3.0 * (2.0f64 / 3.0).powi(10)).abs() < 1e-12);
        assert!(t.holds());
    }

    #[test]
    fn truncation_gap_decays_on_average() {
        let grid = GridModel::new(vec![0.5, 1.0, 2.0, 4.0], vec![0.25; 4], OutcomeKernel::BradleyTerry).unwrap();
        let mut rng = crate::seeded_rng(17);
        let mut means = vec![0.0; 8];
        for _ in 0..100 {
            let xs: Vec<Outcome> = (0..20).map(|_| Outcome(rng.random_range(0..=1))).collect();
            for (i, m) in means.iter_mut().enumerate() {
                *m += truncation_gap(&grid, &xs, i + 1, 12).unwrap().measured / 100.0;
            }
        }
        for w in means.windows(2) {
            assert!(w[1] <= w[0], "{means:?}");
        }
    }

    #[test]
    fn mixture_grid_covers_mass() {
        let pi = MixtureDensity::gaussian(0.5, 2.0).unwrap();
        let grid = GridModel::from_mixture(&pi, 200, OutcomeKernel::home_ties(1.2, 1.5).unwrap()).unwrap();
        assert!((grid.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((grid.prior_state().mean(grid.nodes()) - 0.5).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn forgetting_bound_holds(seed in 0u64..10_000, p in 0usize..30, g in 2usize..7) {
            let mut rng = crate::seeded_rng(seed);
            let grid = random_grid(&mut rng, g);
            let draw = |rng: &mut crate::Rng| {
                let raw: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>() + 1e-3).collect();
                let t: f64 = raw.iter().sum();
                FilterState(raw.into_iter().map(|r| r / t).collect())
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let xs: Vec<Outcome> = (0..p).map(|_| Outcome(rng.random_range(-1..=1))).collect();
            let check = forgetting_gap(&grid, &a, &b, &xs).unwrap();
            prop_assert!(check.holds(), "{:?}", check);
        }
    }
}
