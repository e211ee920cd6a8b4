//! Finite Gaussian mixtures on the real line and tabulated densities.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * variance.ln() - 0.5 * d * d / variance
}

#[inline]
pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    normal_ln_pdf(x, mean, variance).exp()
}

#[inline]
pub fn normal_cdf(x: f64, mean: f64, variance: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (2.0 * variance).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// A finite Gaussian mixture `Σ w_j N(μ_j, σ_j²)`.
///
/// Used as ground truth, as a Dirichlet-process snapshot and as a
/// posterior density estimate. Weights always sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct MixtureDensity {
    components: Vec<Component>,
}

#[derive(Serialize, Deserialize)]
struct RawMixture {
    components: Vec<Component>,
}

impl TryFrom<RawMixture> for MixtureDensity {
    type Error = Error;
    fn try_from(raw: RawMixture) -> Result<Self> {
        MixtureDensity::new(raw.components)
    }
}

impl From<MixtureDensity> for RawMixture {
    fn from(m: MixtureDensity) -> Self {
        RawMixture { components: m.components }
    }
}

impl MixtureDensity {
    /// Weights must be nonnegative and sum to one within `1e-9`; they are
    /// then rescaled so the sum is one to machine precision.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("mixture weights sum to {total}, expected 1")));
        }
        Self::from_unnormalized(components)
    }

    /// Accepts any nonnegative weights with positive total and renormalises.
    pub fn from_unnormalized(mut components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("mixture has no components"));
        }
        for c in &components {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::domain(format!("invalid weight {}", c.weight)));
            }
            if !(c.variance > 0.0) || !c.variance.is_finite() {
                return Err(Error::domain(format!("invalid variance {}", c.variance)));
            }
            if !c.mean.is_finite() {
                return Err(Error::domain(format!("invalid mean {}", c.mean)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(Error::domain("mixture weights have zero total"));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Ok(MixtureDensity { components })
    }

    /// Near-degenerate component at `v` (variance `1e-12`).
    pub fn point_mass(v: f64) -> Self {
        MixtureDensity { components: vec![Component { weight: 1.0, mean: v, variance: 1e-12 }] }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![Component { weight: 1.0, mean, variance }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * normal_pdf(x, c.mean, c.variance)).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * normal_cdf(x, c.mean, c.variance)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components.iter().map(|c| c.weight * (c.variance + (c.mean - m).powi(2))).sum()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Mixture translated by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        MixtureDensity {
            components: self.components.iter().map(|c| Component { mean: c.mean + shift, ..*c }).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = &self.components[self.components.len() - 1];
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        chosen.mean + chosen.variance.sqrt() * z
    }

    /// Equally spaced nodes on `[m - half_width·s, m + half_width·s]`.
    pub fn covering_nodes(&self, count: usize, half_width: f64) -> Vec<f64> {
        let m = self.mean();
        let s = self.std_dev();
        linspace(m - half_width * s, m + half_width * s, count)
    }

    pub fn tabulate(&self, nodes: &[f64]) -> TabulatedDensity {
        TabulatedDensity { nodes: nodes.to_vec(), values: nodes.iter().map(|&v| self.pdf(v)).collect() }
    }
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count).map(|i| lo + step * i as f64).collect()
        }
    }
}

/// Trapezoid weights for (possibly uneven) sorted nodes.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = nodes[i] - nodes[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}

pub fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    trapezoid_weights(nodes).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// A density tabulated on sorted nodes, linear between them and zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.len() < 2 {
            return Err(Error::domain("tabulated density needs at least two nodes and matching values"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("tabulated nodes must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain("tabulated density has negative or non-finite values"));
        }
        Ok(TabulatedDensity { nodes, values })
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.nodes, &self.values)
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        if x < self.nodes[0] || x > self.nodes[n - 1] {
            return 0.0;
        }
        let idx = self.nodes.partition_point(|&v| v <= x);
        if idx == 0 {
            return self.values[0];
        }
        if idx >= n {
            return self.values[n - 1];
        }
        let (x0, x1) = (self.nodes[idx - 1], self.nodes[idx]);
        let t = (x - x0) / (x1 - x0);
        self.values[idx - 1] * (1.0 - t) + self.values[idx] * t
    }

    /// Cumulative trapezoid integral at each node, normalised to end at 1.
    pub fn cdf_table(&self) -> Result<Vec<f64>> {
        let mut cdf = Vec::with_capacity(self.nodes.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..self.nodes.len() {
            acc += 0.5 * (self.nodes[i] - self.nodes[i - 1]) * (self.values[i] + self.values[i - 1]);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::domain("tabulated density has zero mass"));
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(cdf)
    }
}

/// Inverse-CDF sampler over a piecewise-linear CDF through `(nodes, cdf)`.
#[derive(Debug, Clone)]
pub struct InverseCdfSampler {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdfSampler {
    pub fn new(density: &TabulatedDensity) -> Result<Self> {
        Ok(InverseCdfSampler { nodes: density.nodes.clone(), cdf: density.cdf_table()? })
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.nodes.len();
        let idx = self.cdf.partition_point(|&c| c < p).clamp(1, n - 1);
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let (x0, x1) = (self.nodes[idx - 1], self.nodes[idx]);
        if c1 > c0 {
            x0 + (p - c0) / (c1 - c0) * (x1 - x0)
        } else {
            x0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}
