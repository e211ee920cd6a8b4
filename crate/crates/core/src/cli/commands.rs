use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;

use super::config::RunConfig;
use super::io;
use crate::concentration::{empirical_tail, occupation_mean, FiniteChain, LipschitzSpec, TailReport};
use crate::error::{Error, Result};
use crate::exactref::{forgetting_gap, truncation_gap, FilterState, GridModel};
use crate::gibbs::{align_translation, default_nodes, density_band, predict_championships, run_chain, shift_tabulated};
use crate::mixture::TabulatedDensity;
use crate::model::{simulate_hidden_chain, Kernel, LatentKernel, Outcome};
use crate::smc::AcceptStats;

pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const STRENGTHS_FILE: &str = "strengths.csv";
pub const ARCHIVE_FILE: &str = "posterior.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DENSITY_FILE: &str = "density.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const RAW_SCORES_FILE: &str = "scores_raw.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const TAIL_FILE: &str = "tail.csv";

/// Writes the outcomes (and optionally the hidden strengths) of a simulated chain.
pub fn cmd_simulate(config: &RunConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let truth = config.truth.as_ref().ok_or_else(|| Error::Config("simulate needs a `truth` mixture".into()))?;
    let chain = simulate_hidden_chain(truth, &config.kernel, config.n_observations, seed)?;
    io::create_dir(out)?;
    let mut written = vec![out.join(OUTCOMES_FILE)];
    io::write_outcomes(&written[0], &chain.outcomes)?;
    if config.write_strengths {
        let p = out.join(STRENGTHS_FILE);
        io::write_strengths(&p, &chain.strengths)?;
        written.push(p);
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub seed: u64,
    pub n_outcomes: usize,
    pub retained: usize,
    pub runtime_secs: f64,
    pub min_nu: f64,
    pub max_truncation: usize,
    pub accept: AcceptStats,
    pub accept_rate: f64,
    pub config: &'a RunConfig,
}

/// Runs the sampler and writes the posterior archive and its manifest.
pub fn cmd_fit(config: &RunConfig, seed: u64, out: &Path, input: Option<&Path>) -> Result<Vec<PathBuf>> {
    let input = input.map_or_else(|| out.join(OUTCOMES_FILE), Path::to_path_buf);
    let outcomes = io::read_outcomes(&input, &config.kernel)?;
    let chain = run_chain(&outcomes, &config.kernel, &config.sampler, seed)?;
    io::create_dir(out)?;
    let archive = out.join(ARCHIVE_FILE);
    io::write_archive(&archive, &chain.samples)?;
    let manifest = Manifest {
        seed,
        n_outcomes: outcomes.len(),
        retained: chain.samples.len(),
        runtime_secs: chain.runtime_secs,
        min_nu: chain.min_nu,
        max_truncation: chain.max_truncation,
        accept: chain.accept,
        accept_rate: chain.accept.rate(),
        config,
    };
    let mpath = out.join(MANIFEST_FILE);
    io::write_json(&mpath, &manifest)?;
    Ok(vec![archive, mpath])
}

/// Posterior density table from an archive; with a `truth` mixture in the
/// config an aligned column is added.
pub fn cmd_estimate(config: &RunConfig, out: &Path, input: Option<&Path>) -> Result<Vec<PathBuf>> {
    let input = input.map_or_else(|| out.join(ARCHIVE_FILE), Path::to_path_buf);
    let samples: Vec<_> = io::read_archive(&input)?.into_iter().map(|(_, m)| m).collect();
    if samples.is_empty() {
        return Err(Error::Domain(format!("archive {} is empty", input.display())));
    }
    let e = &config.estimate;
    let nodes = default_nodes(&samples, e.n_nodes, e.width)?;
    let band = density_band(&samples, &nodes, e.lower_quantile, e.upper_quantile)?;
    let aligned = match &config.truth {
        Some(truth) => {
            let est = TabulatedDensity::new(band.nodes.clone(), band.mean.clone())?;
            let c = align_translation(&est, truth);
            Some(shift_tabulated(&est, c))
        }
        None => None,
    };
    io::create_dir(out)?;
    let path = out.join(DENSITY_FILE);
    io::write_density(&path, &band, aligned.as_deref())?;
    Ok(vec![path])
}

/// Championship score quantiles from a density table.
pub fn cmd_predict(config: &RunConfig, seed: u64, out: &Path, input: Option<&Path>) -> Result<Vec<PathBuf>> {
    let input = input.map_or_else(|| out.join(DENSITY_FILE), Path::to_path_buf);
    let (nodes, values) = io::read_density(&input)?;
    let density = TabulatedDensity::new(nodes, values)?;
    let c = &config.championship;
    let mut rng = crate::seeded_rng(seed);
    let table = predict_championships(&density, c.n_teams, &config.kernel, c.n_replicates, c.scoring, &mut rng)?;
    io::create_dir(out)?;
    let scores = out.join(SCORES_FILE);
    let raw = out.join(RAW_SCORES_FILE);
    io::write_scores(&scores, &table)?;
    io::write_raw_scores(&raw, &table)?;
    Ok(vec![scores, raw])
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub checks: usize,
    pub violations: usize,
    pub min_margin: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub pass: bool,
}

impl BoundSummary {
    fn new() -> Self {
        BoundSummary {
            checks: 0,
            violations: 0,
            min_margin: f64::INFINITY,
            nu_min: f64::INFINITY,
            nu_max: 0.0,
            pass: true,
        }
    }

    fn record(&mut self, check: &crate::exactref::BoundCheck) {
        self.checks += 1;
        if !check.holds() {
            self.violations += 1;
        }
        self.min_margin = self.min_margin.min(check.margin());
        self.nu_min = self.nu_min.min(check.nu);
        self.nu_max = self.nu_max.max(check.nu);
        self.pass = self.violations == 0;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub seed: u64,
    pub forgetting: BoundSummary,
    pub truncation: BoundSummary,
    pub concentration: TailReport,
    pub concentration_pass: bool,
    pub pass: bool,
}

fn random_law<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 0.05).collect();
    let t: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / t).collect()
}

fn random_grid<R: Rng + ?Sized>(config: &RunConfig, rng: &mut R) -> Result<GridModel<LatentKernel>> {
    let d = &config.diagnose;
    let r = d.strength_range;
    let mut nodes: Vec<f64> = (0..d.grid_nodes).map(|_| rng.random_range(-r..r)).collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let masses = random_law(nodes.len(), rng);
    GridModel::new(nodes, masses, LatentKernel(config.kernel))
}

fn random_outcomes<R: Rng + ?Sized>(kernel: &LatentKernel, len: usize, rng: &mut R) -> Vec<Outcome> {
    let xs = kernel.outcomes();
    (0..len).map(|_| xs[rng.random_range(0..xs.len())]).collect()
}

/// Exact checks of the forgetting and truncation bounds on random grid
/// models, and a concentration tail table on a random finite chain.
pub fn diagnose(config: &RunConfig, seed: u64) -> Result<Diagnostics> {
    let d = &config.diagnose;
    let mut rng = crate::seeded_rng(seed);
    let mut forgetting = BoundSummary::new();
    let mut truncation = BoundSummary::new();
    for _ in 0..d.instances {
        let grid = random_grid(config, &mut rng)?;
        let g = grid.len();
        let a = FilterState::new(random_law(g, &mut rng))?;
        let b = FilterState::new(random_law(g, &mut rng))?;
        let p = rng.random_range(1..=d.horizon);
        let xs = random_outcomes(grid.kernel(), p, &mut rng);
        forgetting.record(&forgetting_gap(&grid, &a, &b, &xs)?);
        let i = rng.random_range(1..=d.horizon);
        let ell = rng.random_range(0..=d.horizon);
        let xs = random_outcomes(grid.kernel(), ell + i, &mut rng);
        truncation.record(&truncation_gap(&grid, &xs, i, ell)?);
    }
    let chain = FiniteChain::random(d.chain_states, d.chain_nu, &mut rng)?;
    let n = d.chain_length;
    let spec = LipschitzSpec::occupation(n, 0);
    let mean = occupation_mean(&chain, &vec![1.0 / n as f64; n], 0);
    let t_grid: Vec<f64> = (0..d.t_points).map(|k| 0.5 * k as f64 / d.t_points as f64).collect();
    let concentration = empirical_tail(&chain, &spec, Some(mean), &t_grid, d.tail_replicates, &mut rng)?;
    let concentration_pass = concentration.holds();
    Ok(Diagnostics {
        seed,
        pass: forgetting.pass && truncation.pass && concentration_pass,
        forgetting,
        truncation,
        concentration,
        concentration_pass,
    })
}

pub fn cmd_diagnose(config: &RunConfig, seed: u64, out: &Path) -> Result<(Vec<PathBuf>, Diagnostics)> {
    let report = diagnose(config, seed)?;
    io::create_dir(out)?;
    let json = out.join(DIAGNOSTICS_FILE);
    io::write_json(&json, &report)?;
    let tail = out.join(TAIL_FILE);
    let mut w =
        csv::Writer::from_path(&tail).map_err(|e| Error::Io { path: tail.display().to_string(), source: e.into() })?;
    let rows = std::iter::once(vec![
        "t".to_string(),
        "empirical".into(),
        "std_error".into(),
        "theorem_bound".into(),
        "corollary_bound".into(),
    ])
    .chain(report.concentration.rows.iter().map(|r| {
        vec![
            r.t.to_string(),
            r.empirical.to_string(),
            r.std_error.to_string(),
            r.theorem_bound.to_string(),
            r.corollary_bound.to_string(),
        ]
    }));
    for row in rows {
        w.write_record(&row).map_err(|e| Error::Io { path: tail.display().to_string(), source: e.into() })?;
    }
    w.flush().map_err(|source| Error::Io { path: tail.display().to_string(), source })?;
    Ok((vec![json, tail], report))
}
