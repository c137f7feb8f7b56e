//! Benchmark harness: parameter sweeps over N or M comparing the blocked
//! pipeline against the LRU-simulated traditional algorithm, emitting
//! metrics and summary CSVs. Counters, not wall clocks, are the measured
//! quantity; elapsed times are recorded only when explicitly requested so
//! that CSV output is byte-reproducible.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset_io::{generate_points, GenSpec};
use crate::em_model::Backing;
use crate::error::{EmError, Result};
use crate::pipeline::{run_blocked, run_traditional_lru, ExecParams};
use crate::units::parse_size;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    NPoints,
    MemoryBudget,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepVar::NPoints => write!(f, "n_points"),
            SweepVar::MemoryBudget => write!(f, "memory_budget"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Blocked,
    TraditionalLru,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Blocked => write!(f, "blocked"),
            Algorithm::TraditionalLru => write!(f, "traditional-lru"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchProfile {
    pub name: String,
    pub sweep: SweepVar,
    pub values: Vec<u64>,
    /// Fixed N when sweeping the memory budget.
    pub n_points: u64,
    pub dims: u32,
    pub k: u32,
    pub theta: u32,
    /// Fixed M when sweeping N.
    pub memory_budget_bytes: u64,
    pub block_size_bytes: u64,
    pub seed: u64,
    pub n_clusters: u64,
    pub spread: f64,
    pub box_extent: f64,
    pub algorithms: Vec<Algorithm>,
}

impl BenchProfile {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(EmError::Config(format!(
                "profile '{}': empty sweep value list",
                self.name
            )));
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(EmError::Config(format!(
                "profile '{}': sweep values must be strictly increasing",
                self.name
            )));
        }
        if self.algorithms.is_empty() {
            return Err(EmError::Config(format!(
                "profile '{}': no algorithms selected",
                self.name
            )));
        }
        Ok(())
    }

    /// Parses the simple `key=value` profile format (one pair per line,
    /// `#` comments). Size-valued keys accept KiB/MiB suffixes.
    pub fn parse(text: &str) -> Result<BenchProfile> {
        let mut profile = BenchProfile {
            name: "unnamed".into(),
            sweep: SweepVar::NPoints,
            values: Vec::new(),
            n_points: 0,
            dims: 16,
            k: 16,
            theta: 4,
            memory_budget_bytes: 64 << 10,
            block_size_bytes: 4 << 10,
            seed: 1,
            n_clusters: 8,
            spread: 1.0,
            box_extent: 100.0,
            algorithms: vec![Algorithm::Blocked],
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                EmError::Config(format!("profile line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| EmError::Config(format!("profile line {}: {what}", lineno + 1));
            match key {
                "name" => profile.name = value.to_string(),
                "sweep" => {
                    profile.sweep = match value {
                        "n_points" => SweepVar::NPoints,
                        "memory_budget" => SweepVar::MemoryBudget,
                        _ => return Err(bad("sweep must be n_points or memory_budget")),
                    }
                }
                "values" => {
                    profile.values = value
                        .split(',')
                        .map(parse_size)
                        .collect::<Result<Vec<u64>>>()?;
                }
                "n" => profile.n_points = value.parse().map_err(|_| bad("bad n"))?,
                "d" => profile.dims = value.parse().map_err(|_| bad("bad d"))?,
                "k" => profile.k = value.parse().map_err(|_| bad("bad k"))?,
                "theta" => profile.theta = value.parse().map_err(|_| bad("bad theta"))?,
                "m" => profile.memory_budget_bytes = parse_size(value)?,
                "b" => profile.block_size_bytes = parse_size(value)?,
                "seed" => profile.seed = value.parse().map_err(|_| bad("bad seed"))?,
                "clusters" => profile.n_clusters = value.parse().map_err(|_| bad("bad clusters"))?,
                "spread" => profile.spread = value.parse().map_err(|_| bad("bad spread"))?,
                "box" => profile.box_extent = value.parse().map_err(|_| bad("bad box"))?,
                "algorithms" => {
                    profile.algorithms = value
                        .split(',')
                        .map(|a| match a.trim() {
                            "blocked" => Ok(Algorithm::Blocked),
                            "traditional-lru" => Ok(Algorithm::TraditionalLru),
                            other => Err(bad(&format!("unknown algorithm '{other}'"))),
                        })
                        .collect::<Result<Vec<Algorithm>>>()?;
                }
                other => return Err(bad(&format!("unknown key '{other}'"))),
            }
        }
        profile.validate()?;
        Ok(profile)
    }

    fn run_params(&self, value: u64) -> (u64, ExecParams) {
        let (n, m) = match self.sweep {
            SweepVar::NPoints => (value, self.memory_budget_bytes),
            SweepVar::MemoryBudget => (self.n_points, value),
        };
        (
            n,
            ExecParams {
                n,
                dims: self.dims,
                k: self.k,
                theta: self.theta,
                memory_budget_bytes: m,
                block_size_bytes: self.block_size_bytes,
                phase1_tile_override: None,
                phase2_tile_override: None,
            },
        )
    }
}

/// One CSV row: counters for one phase of one run. Infeasible runs are
/// recorded with `phase = "skipped(<reason>)"` and zero counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub profile: String,
    pub algorithm: String,
    pub n: u64,
    pub m: u64,
    pub b: u64,
    pub k: u32,
    pub theta: u32,
    pub phase: String,
    pub block_reads: u64,
    pub block_writes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub elapsed_ms: u64,
}

impl BenchRow {
    pub fn total_transfers(&self) -> u64 {
        self.block_reads + self.block_writes
    }
}

pub const BENCH_CSV_HEADER: &str =
    "profile,algorithm,n,m,b,k,theta,phase,block_reads,block_writes,bytes_read,bytes_written,elapsed_ms";

/// Runs every (sweep value, algorithm) combination of a profile. With
/// `record_elapsed` false (the default for reproducible artifacts) every
/// elapsed field is written as zero.
pub fn run_profile(profile: &BenchProfile, record_elapsed: bool) -> Result<Vec<BenchRow>> {
    profile.validate()?;
    let mut rows = Vec::new();
    for &value in &profile.values {
        let (n, params) = profile.run_params(value);
        let spec = GenSpec {
            n_points: n,
            dims: profile.dims,
            n_clusters: profile.n_clusters,
            spread: profile.spread,
            box_extent: profile.box_extent,
            seed: profile.seed,
        };
        let points = generate_points(&spec)?;
        for &algorithm in &profile.algorithms {
            let result = match algorithm {
                Algorithm::Blocked => run_blocked(&points, &params, Backing::memory()),
                Algorithm::TraditionalLru => {
                    run_traditional_lru(&points, &params, Backing::memory())
                }
            };
            let base = BenchRow {
                profile: profile.name.clone(),
                algorithm: algorithm.to_string(),
                n,
                m: params.memory_budget_bytes,
                b: params.block_size_bytes,
                k: profile.k,
                theta: profile.theta,
                phase: String::new(),
                block_reads: 0,
                block_writes: 0,
                bytes_read: 0,
                bytes_written: 0,
                elapsed_ms: 0,
            };
            match result {
                Ok(out) => {
                    for phase in &out.phases {
                        rows.push(BenchRow {
                            phase: phase.phase.clone(),
                            block_reads: phase.counters.block_reads,
                            block_writes: phase.counters.block_writes,
                            bytes_read: phase.counters.bytes_read,
                            bytes_written: phase.counters.bytes_written,
                            elapsed_ms: if record_elapsed { phase.elapsed_ms } else { 0 },
                            ..base.clone()
                        });
                    }
                }
                Err(EmError::Config(reason)) => {
                    // Infeasible run: one skipped row, no crash.
                    let reason = reason.replace(',', ";").replace('\n', " ");
                    rows.push(BenchRow {
                        phase: format!("skipped({reason})"),
                        ..base.clone()
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.profile,
            r.algorithm,
            r.n,
            r.m,
            r.b,
            r.k,
            r.theta,
            r.phase,
            r.block_reads,
            r.block_writes,
            r.bytes_read,
            r.bytes_written,
            r.elapsed_ms
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Per-configuration ratio of traditional to blocked total transfers.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub n: u64,
    pub m: u64,
    pub blocked_total: u64,
    pub traditional_total: u64,
    pub ratio: f64,
}

pub const SUMMARY_CSV_HEADER: &str = "n,m,blocked_total_ios,traditional_total_ios,ratio";

/// Matches blocked against traditional rows per (n, m, b, k, theta)
/// configuration and reduces to total-transfer ratios. Configurations
/// present on only one side are a contract violation.
pub fn compare(blocked: &[BenchRow], traditional: &[BenchRow]) -> Result<Vec<CompareRow>> {
    type ConfigKey = (u64, u64, u64, u32, u32);
    fn totals(rows: &[BenchRow]) -> Vec<(ConfigKey, u64)> {
        let mut acc: Vec<(ConfigKey, u64)> = Vec::new();
        for r in rows {
            if r.phase.starts_with("skipped") {
                continue;
            }
            let key = (r.n, r.m, r.b, r.k, r.theta);
            match acc.iter_mut().find(|(k, _)| *k == key) {
                Some((_, total)) => *total += r.total_transfers(),
                None => acc.push((key, r.total_transfers())),
            }
        }
        acc
    }
    let blocked_totals = totals(blocked);
    let traditional_totals = totals(traditional);
    let mut out = Vec::new();
    for (key, b_total) in &blocked_totals {
        let t_total = traditional_totals
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                EmError::Invariant(format!(
                    "compare: no traditional run for configuration {key:?}"
                ))
            })?;
        out.push(CompareRow {
            n: key.0,
            m: key.1,
            blocked_total: *b_total,
            traditional_total: t_total,
            ratio: if *b_total == 0 {
                f64::INFINITY
            } else {
                t_total as f64 / *b_total as f64
            },
        });
    }
    Ok(out)
}

/// Whether the traditional/blocked ratio grows with the N*M product.
pub fn ratios_increase_with_nm(rows: &[CompareRow]) -> bool {
    let mut sorted: Vec<&CompareRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.n * r.m);
    sorted.windows(2).all(|w| w[1].ratio >= w[0].ratio)
}

pub fn write_summary_csv(rows: &[CompareRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.4}",
            r.n, r.m, r.blocked_total, r.traditional_total, r.ratio
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares fit of `y = a * x^2` through the origin, returning
/// `(a, r_squared)` with R^2 computed against the mean of `y`.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let num: f64 = sq.iter().zip(ys).map(|(x2, y)| x2 * y).sum();
    let den: f64 = sq.iter().map(|x2| x2 * x2).sum();
    let a = num / den;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = sq
        .iter()
        .zip(ys)
        .map(|(x2, y)| (y - a * x2) * (y - a * x2))
        .sum();
    (a, 1.0 - ss_res / ss_tot)
}
