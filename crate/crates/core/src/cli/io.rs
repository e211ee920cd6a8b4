use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{DensityBand, PosteriorSample, ScoreTable};
use crate::mixture::{Component, MixtureDensity};
use crate::model::{Outcome, OutcomeKernel};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.display().to_string(), source },
        other => Error::Parse { line: 0, msg: format!("{other:?}") },
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Numeric CSV rows with the expected header; returns `(line, fields)`.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let found = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.len() < header.len() || found.iter().zip(header).any(|(a, b)| a.trim() != *b) {
        return Err(Error::Parse { line: 1, msg: format!("expected header `{}`", header.join(",")) });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            match csv_err(path, e) {
                Error::Parse { msg, .. } => Error::Parse { line, msg },
                other => other,
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(out)
}

fn parse_field<T: std::str::FromStr>(line: usize, fields: &[String], i: usize, what: &str) -> Result<T> {
    let raw = fields.get(i).ok_or_else(|| Error::Parse { line, msg: format!("missing {what} column") })?;
    raw.parse().map_err(|_| Error::Parse { line, msg: format!("invalid {what} `{raw}`") })
}

pub fn write_outcomes(path: &Path, outcomes: &[Outcome]) -> Result<()> {
    write_rows(
        path,
        &["index", "outcome"],
        outcomes.iter().enumerate().map(|(i, x)| vec![(i + 1).to_string(), x.0.to_string()]),
    )
}

/// Reads `index,outcome` rows; indices must run 1, 2, … and every outcome
/// must belong to the kernel's outcome set.
pub fn read_outcomes(path: &Path, kernel: &OutcomeKernel) -> Result<Vec<Outcome>> {
    let rows = read_rows(path, &["index", "outcome"])?;
    let mut out = Vec::with_capacity(rows.len());
    for (k, (line, fields)) in rows.iter().enumerate() {
        let index: usize = parse_field(*line, fields, 0, "index")?;
        if index != k + 1 {
            return Err(Error::Parse { line: *line, msg: format!("expected index {}, found {index}", k + 1) });
        }
        let x = Outcome(parse_field(*line, fields, 1, "outcome")?);
        if !kernel.contains(x) {
            return Err(Error::Parse { line: *line, msg: format!("outcome {} not in the kernel's outcome set", x.0) });
        }
        out.push(x);
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no outcomes".into() });
    }
    Ok(out)
}

pub fn write_strengths(path: &Path, strengths: &[f64]) -> Result<()> {
    write_rows(
        path,
        &["index", "strength"],
        strengths.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl StateSummary {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        StateSummary {
            mean,
            sd: var.sqrt(),
            min: v.iter().cloned().fold(f64::INFINITY, f64::min),
            max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// One line of the posterior archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub sweep: usize,
    pub components: Vec<Component>,
    pub states: StateSummary,
}

impl ArchiveRecord {
    pub fn from_sample(s: &PosteriorSample) -> Self {
        ArchiveRecord {
            sweep: s.sweep,
            components: s.mixture.components().to_vec(),
            states: StateSummary::of(&s.states),
        }
    }
}

pub fn write_archive(path: &Path, samples: &[PosteriorSample]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = serde_json::to_string(&ArchiveRecord::from_sample(s)).expect("serialisable record");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_archive(path: &Path) -> Result<Vec<(usize, MixtureDensity)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArchiveRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        let m = MixtureDensity::new(rec.components).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        out.push((rec.sweep, m));
    }
    Ok(out)
}

pub const DENSITY_HEADER: [&str; 4] = ["v", "pdf", "lower", "upper"];

pub fn write_density(path: &Path, band: &DensityBand, aligned: Option<&[f64]>) -> Result<()> {
    let mut header = DENSITY_HEADER.to_vec();
    if aligned.is_some() {
        header.push("aligned");
    }
    write_rows(
        path,
        &header,
        (0..band.nodes.len()).map(|i| {
            let mut row = vec![
                band.nodes[i].to_string(),
                band.mean[i].to_string(),
                band.lower[i].to_string(),
                band.upper[i].to_string(),
            ];
            if let Some(a) = aligned {
                row.push(a[i].to_string());
            }
            row
        }),
    )
}

/// `(v, pdf)` columns of a density table.
pub fn read_density(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows = read_rows(path, &["v", "pdf"])?;
    let mut nodes = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, fields) in &rows {
        nodes.push(parse_field(*line, fields, 0, "v")?);
        values.push(parse_field(*line, fields, 1, "pdf")?);
    }
    Ok((nodes, values))
}

pub fn write_scores(path: &Path, table: &ScoreTable) -> Result<()> {
    write_rows(
        path,
        &["rank", "median", "lower_decile", "upper_decile"],
        (0..table.median.len()).map(|r| {
            vec![
                (r + 1).to_string(),
                table.median[r].to_string(),
                table.lower_decile[r].to_string(),
                table.upper_decile[r].to_string(),
            ]
        }),
    )
}

pub fn write_raw_scores(path: &Path, table: &ScoreTable) -> Result<()> {
    write_rows(
        path,
        &["replicate", "rank", "points"],
        table.raw.iter().enumerate().flat_map(|(rep, pts)| {
            pts.iter().enumerate().map(move |(r, p)| vec![(rep + 1).to_string(), (r + 1).to_string(), p.to_string()])
        }),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable value");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}
