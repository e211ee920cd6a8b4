//! Goodness-of-fit and two-sample tests used by the validation suites.

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    /// Degrees of freedom where the reference law has them, else 0.
    pub dof: f64,
    pub p_value: f64,
}

/// Pearson χ² test of observed counts against cell probabilities. Cells with
/// expected count below 5 are pooled into one cell.
pub fn chi_square_gof(counts: &[usize], probs: &[f64]) -> TestResult {
    assert_eq!(counts.len(), probs.len(), "cell count mismatch");
    let total: usize = counts.iter().sum();
    let total = total as f64;
    let psum: f64 = probs.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = total * p / psum;
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
        } else {
            cells.push((c as f64, e));
        }
    }
    if pooled_exp > 0.0 {
        cells.push((pooled_obs, pooled_exp));
    } else if pooled_obs > 0.0 {
        return TestResult { statistic: f64::INFINITY, dof: 0.0, p_value: 0.0 };
    }
    if cells.len() < 2 {
        return TestResult { statistic: 0.0, dof: 0.0, p_value: 1.0 };
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = (cells.len() - 1) as f64;
    let p_value = ChiSquared::new(dof).expect("positive dof").sf(statistic);
    TestResult { statistic, dof, p_value }
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF, with the
/// asymptotic distribution and the Stephens small-sample correction.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> TestResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    TestResult { statistic: d, dof: 0.0, p_value: kolmogorov_sf(lambda) }
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    TestResult { statistic: d, dof: 0.0, p_value: kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d) }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Energy-distance permutation test between two samples of equal-length
/// vectors, using Euclidean distance.
pub fn energy_test<R: Rng + ?Sized>(a: &[Vec<f64>], b: &[Vec<f64>], permutations: usize, rng: &mut R) -> TestResult {
    let n = a.len();
    let m = b.len();
    let total = n + m;
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b.iter()).collect();
    let mut dist = vec![0.0f64; total * total];
    for i in 0..total {
        for j in (i + 1)..total {
            let d = pooled[i].iter().zip(pooled[j].iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            dist[i * total + j] = d;
            dist[j * total + i] = d;
        }
    }
    let mut labels: Vec<bool> = (0..total).map(|i| i < n).collect();
    let observed = energy_statistic(&dist, &labels, n, m);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if energy_statistic(&dist, &labels, n, m) >= observed {
            exceed += 1;
        }
    }
    TestResult { statistic: observed, dof: 0.0, p_value: (exceed + 1) as f64 / (permutations + 1) as f64 }
}

fn energy_statistic(dist: &[f64], in_a: &[bool], n: usize, m: usize) -> f64 {
    let total = in_a.len();
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..total {
        let row = &dist[i * total..(i + 1) * total];
        for j in (i + 1)..total {
            match (in_a[i], in_a[j]) {
                (true, true) => aa += row[j],
                (false, false) => bb += row[j],
                _ => ab += row[j],
            }
        }
    }
    let (nf, mf) = (n as f64, m as f64);
    (nf * mf / (nf + mf)) * (2.0 * ab / (nf * mf) - 2.0 * aa / (nf * nf) - 2.0 * bb / (mf * mf))
}

/// Total-variation distance between the empirical law of `values` on
/// `support` and `probs`. Values are matched to support points exactly.
pub fn empirical_tv(values: &[f64], support: &[f64], probs: &[f64]) -> f64 {
    let mut counts = vec![0usize; support.len()];
    for v in values {
        let k = support.iter().position(|s| s == v).expect("value outside the declared support");
        counts[k] += 1;
    }
    let n = values.len() as f64;
    0.5 * counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / n - p).abs()).sum::<f64>()
}
