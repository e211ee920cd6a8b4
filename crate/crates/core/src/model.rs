//! Outcome kernels, forward simulation of the hidden chain and of
//! double round-robin championships.
//!
//! Two kernels are provided. [`OutcomeKernel::BradleyTerry`] works on
//! strengths in `(0, ∞)` with `K(1, v, w) = v / (v + w)`.
//! [`OutcomeKernel::HomeTies`] works on real strengths through `e^v`, with a
//! home advantage `alpha > 0` and a tie parameter `theta >= 1`:
//!
//! ```text
//! K(1, v, w)  = α e^v / (α e^v + θ e^w)
//! K(0, v, w)  = (θ² - 1) α e^v e^w / ((α e^v + θ e^w)(θ α e^v + e^w))
//! K(-1, v, w) = e^w / (θ α e^v + e^w)
//! ```
//!
//! Downstream code (simulation, SMC, Gibbs) treats strengths as latent reals;
//! [`LatentKernel`] composes Bradley-Terry with `exp` for that purpose.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{linspace, MixtureDensity};

/// A comparison outcome, an element of the kernel's finite outcome set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Outcome(pub i8);

impl Outcome {
    pub const AWAY_WIN: Outcome = Outcome(-1);
    pub const TIE: Outcome = Outcome(0);
    pub const HOME_WIN: Outcome = Outcome(1);
}

const BT_OUTCOMES: [Outcome; 2] = [Outcome(0), Outcome(1)];
const HT_OUTCOMES: [Outcome; 3] = [Outcome(-1), Outcome(0), Outcome(1)];

/// Pairwise comparison law `K(x, v, w)` where `v` is the first (home)
/// contestant and `w` the second.
pub trait Kernel {
    fn outcomes(&self) -> &[Outcome];

    /// `K(x, v, w)`; the caller guarantees `x` is in [`Kernel::outcomes`].
    fn prob(&self, x: Outcome, v: f64, w: f64) -> f64;

    /// Lower bound of `K` over `[lo, hi]²` and all outcomes.
    fn lower_bound(&self, lo: f64, hi: f64) -> f64 {
        dense_lower_bound(self, lo, hi, 201)
    }

    fn sample_outcome<R: Rng + ?Sized>(&self, v: f64, w: f64, rng: &mut R) -> Outcome
    where
        Self: Sized,
    {
        let outcomes = self.outcomes();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &x in outcomes {
            acc += self.prob(x, v, w);
            if u < acc {
                return x;
            }
        }
        outcomes[outcomes.len() - 1]
    }
}

fn dense_lower_bound<K: Kernel + ?Sized>(kernel: &K, lo: f64, hi: f64, points: usize) -> f64 {
    let grid = linspace(lo, hi, points);
    let mut nu = f64::INFINITY;
    for &x in kernel.outcomes() {
        for &v in &grid {
            for &w in &grid {
                nu = nu.min(kernel.prob(x, v, w));
            }
        }
    }
    nu
}

fn corner_lower_bound<K: Kernel + ?Sized>(kernel: &K, lo: f64, hi: f64) -> f64 {
    let mut nu = f64::INFINITY;
    for &x in kernel.outcomes() {
        for (v, w) in [(lo, lo), (lo, hi), (hi, lo), (hi, hi)] {
            nu = nu.min(kernel.prob(x, v, w));
        }
    }
    nu
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutcomeKernel {
    BradleyTerry,
    HomeTies { alpha: f64, theta: f64 },
}

impl OutcomeKernel {
    pub fn home_ties(alpha: f64, theta: f64) -> Result<Self> {
        let k = OutcomeKernel::HomeTies { alpha, theta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if let OutcomeKernel::HomeTies { alpha, theta } = *self {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::domain(format!("home advantage must be positive, got {alpha}")));
            }
            if !(theta >= 1.0) || !theta.is_finite() {
                return Err(Error::domain(format!("tie parameter must be >= 1, got {theta}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: Outcome) -> bool {
        self.outcomes().contains(&x)
    }

    /// Checked evaluation of `K(x, v, w)`.
    pub fn kernel_prob(&self, x: Outcome, v: f64, w: f64) -> Result<f64> {
        self.validate()?;
        if !self.contains(x) {
            return Err(Error::domain(format!("outcome {} not in the kernel's outcome set", x.0)));
        }
        match self {
            OutcomeKernel::BradleyTerry if !(v > 0.0 && w > 0.0) => {
                Err(Error::domain(format!("Bradley-Terry strengths must be positive, got ({v}, {w})")))
            }
            _ => Ok(self.prob(x, v, w)),
        }
    }
}

/// Home-ties probabilities as functions of `r = α e^{v - w}`.
#[inline]
fn home_ties_prob(x: Outcome, v: f64, w: f64, alpha: f64, theta: f64) -> f64 {
    let d = v - w;
    match x.0 {
        1 => alpha / (alpha + theta * (-d).exp()),
        -1 => 1.0 / (theta * alpha * d.exp() + 1.0),
        _ => {
            let r = alpha * d.exp();
            let c = theta * theta - 1.0;
            if r <= 1.0 {
                c * r / ((r + theta) * (theta * r + 1.0))
            } else {
                let s = 1.0 / r;
                c * s / ((1.0 + theta * s) * (theta + s))
            }
        }
    }
}

impl Kernel for OutcomeKernel {
    fn outcomes(&self) -> &[Outcome] {
        match self {
            OutcomeKernel::BradleyTerry => &BT_OUTCOMES,
            OutcomeKernel::HomeTies { .. } => &HT_OUTCOMES,
        }
    }

    #[inline]
    fn prob(&self, x: Outcome, v: f64, w: f64) -> f64 {
        match *self {
            OutcomeKernel::BradleyTerry => {
                if x.0 == 1 {
                    v / (v + w)
                } else {
                    w / (v + w)
                }
            }
            OutcomeKernel::HomeTies { alpha, theta } => home_ties_prob(x, v, w, alpha, theta),
        }
    }

    // Every outcome probability is monotone or unimodal in v - w, so the
    // extremes over a square sit at its corners.
    fn lower_bound(&self, lo: f64, hi: f64) -> f64 {
        corner_lower_bound(self, lo, hi)
    }
}

/// The kernel seen from latent real-valued strengths: Bradley-Terry is
/// composed with `exp`, home-ties is used as is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentKernel(pub OutcomeKernel);

impl Kernel for LatentKernel {
    fn outcomes(&self) -> &[Outcome] {
        self.0.outcomes()
    }

    #[inline]
    fn prob(&self, x: Outcome, v: f64, w: f64) -> f64 {
        match self.0 {
            OutcomeKernel::BradleyTerry => {
                let p1 = 1.0 / (1.0 + (w - v).exp());
                if x.0 == 1 {
                    p1
                } else {
                    1.0 / (1.0 + (v - w).exp())
                }
            }
            k => k.prob(x, v, w),
        }
    }

    fn lower_bound(&self, lo: f64, hi: f64) -> f64 {
        corner_lower_bound(self, lo, hi)
    }
}

/// `K ≡ 1/m` on `m` outcomes `0..m`; with one outcome this is `K ≡ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformKernel {
    outcomes: Vec<Outcome>,
}

impl UniformKernel {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 || count > i8::MAX as usize {
            return Err(Error::domain("uniform kernel needs between 1 and 127 outcomes"));
        }
        Ok(UniformKernel { outcomes: (0..count).map(|i| Outcome(i as i8)).collect() })
    }
}

impl Kernel for UniformKernel {
    fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    fn prob(&self, _x: Outcome, _v: f64, _w: f64) -> f64 {
        1.0 / self.outcomes.len() as f64
    }

    fn lower_bound(&self, _lo: f64, _hi: f64) -> f64 {
        1.0 / self.outcomes.len() as f64
    }
}

/// Minimum of `K(x, v, w)` over all outcomes and a 201×201 grid of
/// `[v_lo, v_hi]²`, combined with the corner values.
pub fn kernel_lower_bound(kernel: &OutcomeKernel, v_lo: f64, v_hi: f64) -> Result<f64> {
    kernel.validate()?;
    if !(v_lo <= v_hi) {
        return Err(Error::domain(format!("empty strength interval [{v_lo}, {v_hi}]")));
    }
    if matches!(kernel, OutcomeKernel::BradleyTerry) && !(v_lo > 0.0) {
        return Err(Error::domain("Bradley-Terry strengths must be positive"));
    }
    let dense = dense_lower_bound(kernel, v_lo, v_hi, 201);
    Ok(dense.min(corner_lower_bound(kernel, v_lo, v_hi)))
}

/// Strengths `V_{1:n+1}` and outcomes `X_{1:n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenChain {
    pub strengths: Vec<f64>,
    pub outcomes: Vec<Outcome>,
}

/// Draw `V_{1:n+1}` i.i.d. from `pi` and `X_i ~ K(·, V_i, V_{i+1})`.
pub fn simulate_chain<K: Kernel, R: Rng + ?Sized>(
    pi: &MixtureDensity,
    kernel: &K,
    n: usize,
    rng: &mut R,
) -> Result<HiddenChain> {
    if n == 0 {
        return Err(Error::domain("chain length must be at least 1"));
    }
    let strengths: Vec<f64> = (0..=n).map(|_| pi.sample(rng)).collect();
    let outcomes = strengths.windows(2).map(|w| kernel.sample_outcome(w[0], w[1], rng)).collect();
    Ok(HiddenChain { strengths, outcomes })
}

/// Seeded simulation with latent real-valued strengths (see [`LatentKernel`]).
pub fn simulate_hidden_chain(pi: &MixtureDensity, kernel: &OutcomeKernel, n: usize, seed: u64) -> Result<HiddenChain> {
    kernel.validate()?;
    let mut rng = crate::seeded_rng(seed);
    simulate_chain(pi, &LatentKernel(*kernel), n, &mut rng)
}

/// Points per result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scoring {
    pub win: u32,
    pub tie: u32,
    pub loss: u32,
}

impl Default for Scoring {
    fn default() -> Self {
        Scoring { win: 3, tie: 1, loss: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChampionshipResult {
    /// `(home, away)` team indices in playing order.
    pub schedule: Vec<(usize, usize)>,
    pub outcomes: Vec<Outcome>,
    pub points: Vec<u32>,
}

/// Double round-robin by the circle method: each ordered pair plays once,
/// the second leg mirrors the first with roles swapped.
pub fn double_round_robin(teams: usize) -> Vec<(usize, usize)> {
    let slots = teams + teams % 2;
    let mut ring: Vec<usize> = (0..slots).collect();
    let mut first_leg = Vec::with_capacity(teams * (teams - 1) / 2);
    for round in 0..slots - 1 {
        for i in 0..slots / 2 {
            let (a, b) = (ring[i], ring[slots - 1 - i]);
            if a >= teams || b >= teams {
                continue;
            }
            // alternate home roles so nobody hosts every first-leg game
            if (round + i) % 2 == 0 {
                first_leg.push((a, b));
            } else {
                first_leg.push((b, a));
            }
        }
        ring[1..].rotate_right(1);
    }
    let second_leg: Vec<(usize, usize)> = first_leg.iter().map(|&(h, a)| (a, h)).collect();
    first_leg.extend(second_leg);
    first_leg
}

/// Play a full championship with the given latent strengths.
pub fn play_championship<R: Rng + ?Sized>(
    strengths: &[f64],
    kernel: &OutcomeKernel,
    scoring: Scoring,
    rng: &mut R,
) -> Result<ChampionshipResult> {
    if strengths.len() < 2 {
        return Err(Error::domain("a championship needs at least two teams"));
    }
    kernel.validate()?;
    let latent = LatentKernel(*kernel);
    let schedule = double_round_robin(strengths.len());
    let mut points = vec![0u32; strengths.len()];
    let mut outcomes = Vec::with_capacity(schedule.len());
    for &(home, away) in &schedule {
        let x = latent.sample_outcome(strengths[home], strengths[away], rng);
        match (kernel, x.0) {
            (_, 1) => {
                points[home] += scoring.win;
                points[away] += scoring.loss;
            }
            (OutcomeKernel::HomeTies { .. }, 0) => {
                points[home] += scoring.tie;
                points[away] += scoring.tie;
            }
            _ => {
                points[home] += scoring.loss;
                points[away] += scoring.win;
            }
        }
        outcomes.push(x);
    }
    Ok(ChampionshipResult { schedule, outcomes, points })
}

pub fn simulate_championship(
    strengths: &[f64],
    kernel: &OutcomeKernel,
    scoring: Scoring,
    seed: u64,
) -> Result<ChampionshipResult> {
    let mut rng = crate::seeded_rng(seed);
    play_championship(strengths, kernel, scoring, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    const HT: OutcomeKernel = OutcomeKernel::HomeTies { alpha: 1.0, theta: 2.0 };

    #[test]
    fn bradley_terry_examples() {
        let bt = OutcomeKernel::BradleyTerry;
        assert_eq!(bt.kernel_prob(Outcome(1), 3.0, 3.0).unwrap(), 0.5);
        assert!((bt.kernel_prob(Outcome(1), 2.0, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn home_ties_example() {
        for x in [-1, 0, 1] {
            let p = HT.kernel_prob(Outcome(x), 0.0, 0.0).unwrap();
            assert!((p - 1.0 / 3.0).abs() < 1e-15, "x={x} p={p}");
        }
    }

    #[test]
    fn away_win_is_complement() {
        let k = OutcomeKernel::home_ties(1.4, 1.7).unwrap();
        for (v, w) in [(0.3, -1.2), (4.0, 2.0), (-30.0, 25.0), (800.0, -800.0)] {
            let p1 = k.prob(Outcome(1), v, w);
            let p0 = k.prob(Outcome(0), v, w);
            let pm = k.prob(Outcome(-1), v, w);
            assert!((pm - (1.0 - p1 - p0)).abs() < 1e-12);
            assert!(p0 >= 0.0 && p0.is_finite());
        }
    }

    #[test]
    fn domain_errors() {
        let bt = OutcomeKernel::BradleyTerry;
        assert!(bt.kernel_prob(Outcome(-1), 1.0, 1.0).is_err());
        assert!(bt.kernel_prob(Outcome(1), 0.0, 1.0).is_err());
        assert!(bt.kernel_prob(Outcome(1), 1.0, -2.0).is_err());
        assert!(HT.kernel_prob(Outcome(2), 0.0, 0.0).is_err());
        assert!(OutcomeKernel::home_ties(1.0, 0.5).is_err());
        assert!(OutcomeKernel::home_ties(0.0, 1.5).is_err());
    }

    #[test]
    fn theta_one_removes_ties() {
        let k = OutcomeKernel::home_ties(1.3, 1.0).unwrap();
        assert_eq!(k.prob(Outcome(0), 0.4, -0.2), 0.0);
    }

    #[test]
    fn lower_bound_examples() {
        let bt = OutcomeKernel::BradleyTerry;
        assert!((kernel_lower_bound(&bt, 1.0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kernel_lower_bound(&bt, 2.5, 2.5).unwrap(), 0.5);
        assert!((kernel_lower_bound(&HT, 0.0, 0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(kernel_lower_bound(&bt, 0.0, 1.0).is_err());
        assert!(kernel_lower_bound(&bt, 2.0, 1.0).is_err());
    }

    #[test]
    fn corner_bound_matches_dense_grid() {
        let k = OutcomeKernel::home_ties(1.3, 1.6).unwrap();
        let dense = dense_lower_bound(&k, -2.0, 1.5, 401);
        let corners = k.lower_bound(-2.0, 1.5);
        assert!((dense - corners).abs() < 1e-15);
    }

    #[test]
    fn chain_lengths() {
        let pi = MixtureDensity::gaussian(0.0, 1.0).unwrap();
        let chain = simulate_hidden_chain(&pi, &HT, 1, 3).unwrap();
        assert_eq!(chain.outcomes.len(), 1);
        assert_eq!(chain.strengths.len(), 2);
        assert!(simulate_hidden_chain(&pi, &HT, 0, 3).is_err());
    }

    #[test]
    fn chain_reproducible() {
        let pi = MixtureDensity::gaussian(0.0, 1.0).unwrap();
        let a = simulate_hidden_chain(&pi, &HT, 200, 17).unwrap();
        let b = simulate_hidden_chain(&pi, &HT, 200, 17).unwrap();
        let c = simulate_hidden_chain(&pi, &HT, 200, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn point_mass_bradley_terry_is_fair() {
        let pi = MixtureDensity::point_mass(0.7);
        let chain = simulate_hidden_chain(&pi, &OutcomeKernel::BradleyTerry, 100_000, 5).unwrap();
        let mean = chain.outcomes.iter().map(|x| x.0 as f64).sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn point_mass_home_ties_frequencies() {
        let pi = MixtureDensity::point_mass(0.0);
        let chain = simulate_hidden_chain(&pi, &HT, 100_000, 6).unwrap();
        for x in [1, 0, -1] {
            let f = chain.outcomes.iter().filter(|o| o.0 == x).count() as f64 / 1e5;
            assert!((f - 1.0 / 3.0).abs() < 0.01, "x={x} f={f}");
        }
    }

    #[test]
    fn round_robin_covers_ordered_pairs() {
        for teams in [2usize, 3, 7, 20] {
            let s = double_round_robin(teams);
            assert_eq!(s.len(), teams * (teams - 1));
            let set: HashSet<_> = s.iter().copied().collect();
            assert_eq!(set.len(), s.len());
            assert!(s.iter().all(|&(h, a)| h != a && h < teams && a < teams));
        }
    }

    #[test]
    fn championship_sizes_and_points() {
        let res = simulate_championship(&[0.0, 1.0], &HT, Scoring::default(), 1).unwrap();
        assert_eq!(res.schedule.len(), 2);
        let strengths: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let res = simulate_championship(&strengths, &HT, Scoring::default(), 2).unwrap();
        assert_eq!(res.schedule.len(), 380);
        // recompute the table from the outcomes
        let mut pts = vec![0u32; 20];
        for (&(h, a), x) in res.schedule.iter().zip(&res.outcomes) {
            match x.0 {
                1 => pts[h] += 3,
                0 => {
                    pts[h] += 1;
                    pts[a] += 1
                }
                _ => pts[a] += 3,
            }
        }
        assert_eq!(pts, res.points);
        assert!(simulate_championship(&[0.0], &HT, Scoring::default(), 1).is_err());
    }

    #[test]
    fn equal_strengths_give_equal_mean_points() {
        let mut rng = crate::seeded_rng(99);
        let teams = 6;
        let mut totals = vec![0u64; teams];
        for _ in 0..10_000 {
            let r = play_championship(&vec![0.0; teams], &HT, Scoring::default(), &mut rng).unwrap();
            for (t, p) in totals.iter_mut().zip(&r.points) {
                *t += *p as u64;
            }
        }
        let means: Vec<f64> = totals.iter().map(|&t| t as f64 / 1e4).collect();
        let avg = means.iter().sum::<f64>() / teams as f64;
        for m in means {
            assert!((m - avg).abs() / avg < 0.01, "{m} vs {avg}");
        }
    }

    fn any_kernel() -> impl Strategy<Value = OutcomeKernel> {
        prop_oneof![
            Just(OutcomeKernel::BradleyTerry),
            (0.05f64..20.0, 1.0f64..10.0).prop_map(|(alpha, theta)| OutcomeKernel::HomeTies { alpha, theta }),
        ]
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(k in any_kernel(), v in -8.0f64..8.0, w in -8.0f64..8.0) {
            let (v, w) = match k {
                OutcomeKernel::BradleyTerry => (v.exp(), w.exp()),
                _ => (v, w),
            };
            let total: f64 = k.outcomes().iter().map(|&x| k.prob(x, v, w)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for &x in k.outcomes() {
                let p = k.prob(x, v, w);
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn lower_bound_below_samples(k in any_kernel(), lo in -3.0f64..3.0, width in 0.0f64..3.0,
                                     s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let (lo, hi) = match k {
                OutcomeKernel::BradleyTerry => (lo.exp(), (lo + width).exp()),
                _ => (lo, lo + width),
            };
            let nu = kernel_lower_bound(&k, lo, hi).unwrap();
            let (v, w) = (lo + s * (hi - lo), lo + t * (hi - lo));
            for &x in k.outcomes() {
                prop_assert!(nu <= k.prob(x, v, w) + 1e-15);
            }
        }

        #[test]
        fn home_ties_shift_invariance(alpha in 0.1f64..5.0, theta in 1.0f64..4.0,
                                      v in -5i32..5, w in -5i32..5, c in -64i32..64) {
            // dyadic shifts keep v - w exact, so the values must agree bitwise
            let k = OutcomeKernel::HomeTies { alpha, theta };
            let (v, w, c) = (v as f64 * 0.25, w as f64 * 0.25, c as f64 * 0.125);
            for &x in k.outcomes() {
                prop_assert_eq!(k.prob(x, v + c, w + c), k.prob(x, v, w));
            }
        }
    }
}
