// SPDX-License-Identifier: Apache-2.0

//! Formation-time sweep over generated topologies.
//!
//! A case with `L` links uses [`switches_for`]`(L)` switches, no hosts, and the link
//! layout of [`generate`]. Per case it records the simulated time at which
//! the switch fabric is formed and the wall-clock time the TM spent in
//! resource allocation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::cli::gen::{generate, GenError};
use crate::simnet::world::{World, WorldError};
use crate::simnet::SimError;

const STREAM_BENCH: u64 = 4;

pub const CSV_HEADER: &str = "links,switches,repeats,formation_mean_ms,formation_stddev_ms,formation_ci99_ms,\
alloc_mean_ms,alloc_stddev_ms,alloc_ci99_ms";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid sweep: {0}")]
    Args(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub stddev: f64,
    /// Half-width of the 99% confidence interval of the mean (Student t).
    pub ci99: f64,
    /// Robust against scheduler outliers in wall-clock samples.
    pub median: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / 2.0 };
    if xs.len() < 2 {
        return Summary { mean, stddev: 0.0, ci99: 0.0, median };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let stddev = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.995);
    Summary { mean, stddev, ci99: t * stddev / n.sqrt(), median }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Fit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Fit { slope, intercept, r2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub lo: usize,
    pub hi: usize,
    pub step: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.lo < 1 || self.step == 0 || self.repeats == 0 || self.hi < self.lo {
            return Err(BenchError::Args(format!(
                "need 1 <= lo <= hi, step > 0 and repeats >= 1 (got {}..{} step {} x{})",
                self.lo, self.hi, self.step, self.repeats
            )));
        }
        Ok(())
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> {
        (self.lo..=self.hi).step_by(self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub links: usize,
    pub switches: usize,
    pub repeats: usize,
    pub formation_ms: Summary,
    pub alloc_ms: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    /// Mean formation time against link count.
    pub fit: Fit,
}

/// `links / 2 + 1`, raised when needed so the links fit without repeats.
pub fn switches_for(links: usize) -> usize {
    let mut n = links / 2 + 1;
    while n * (n - 1) / 2 < links {
        n += 1;
    }
    n
}

/// One case: formation time (simulated ms) and TM allocation wall time (ms).
pub fn bench_case(links: usize, seed: u64) -> Result<(f64, f64), BenchError> {
    let spec = generate(switches_for(links), links, 0, seed)?;
    let mut world = World::new(&spec)?;
    world.run()?;
    world.check_complete()?;
    let formed = world
        .formation_us()
        .ok_or_else(|| SimError::NeverCompleted("switch fabric".into()))?;
    let (wall, _) = world.tm().allocation_time();
    Ok((formed as f64 / 1000.0, wall.as_secs_f64() * 1000.0))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    cfg.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    seeds.set_stream(STREAM_BENCH);
    let sizes: Vec<usize> = cfg.sizes().collect();
    let case_seeds: Vec<Vec<u64>> = sizes
        .iter()
        .map(|_| (0..cfg.repeats).map(|_| seeds.random()).collect())
        .collect();
    let mut formation = vec![Vec::with_capacity(cfg.repeats); sizes.len()];
    let mut alloc = vec![Vec::with_capacity(cfg.repeats); sizes.len()];
    // Sizes are interleaved so drift in machine speed over the run affects
    // every size alike instead of skewing the wall-clock ratio between them.
    for r in 0..cfg.repeats {
        for (i, &links) in sizes.iter().enumerate() {
            let (f, a) = bench_case(links, case_seeds[i][r])?;
            formation[i].push(f);
            alloc[i].push(a);
        }
    }
    let rows: Vec<BenchRow> = sizes
        .iter()
        .enumerate()
        .map(|(i, &links)| BenchRow {
            links,
            switches: switches_for(links),
            repeats: cfg.repeats,
            formation_ms: summarize(&formation[i]),
            alloc_ms: summarize(&alloc[i]),
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.links as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.formation_ms.mean).collect();
    let fit = least_squares(&xs, &ys);
    Ok(BenchResult { rows, fit })
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let (f, a) = (r.formation_ms, r.alloc_ms);
            let _ = writeln!(
                out,
                "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
                r.links, r.switches, r.repeats, f.mean, f.stddev, f.ci99, a.mean, a.stddev, a.ci99
            );
        }
        out
    }

    pub fn fit_line(&self) -> String {
        format!(
            "formation_ms = {:.3} + {:.3} * links (R^2 = {:.4})",
            self.fit.intercept, self.fit.slope, self.fit.r2
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_sample() {
        let s = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert!((s.mean - 5.0).abs() < 1e-12);
        assert!((s.stddev - 2.138_089_935).abs() < 1e-9);
        assert_eq!(s.median, 4.5);
        // t(0.995, 7) = 3.499483
        assert!((s.ci99 - 3.499_483 * s.stddev / 8f64.sqrt()).abs() < 1e-5);
        assert_eq!(summarize(&[3.0]), Summary { mean: 3.0, stddev: 0.0, ci99: 0.0, median: 3.0 });
    }

    #[test]
    fn exact_line_fits_perfectly() {
        let fit = least_squares(&[1.0, 2.0, 3.0], &[5.0, 7.0, 9.0]);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn switch_counts() {
        assert_eq!([1, 4, 7, 10, 60].map(switches_for), [2, 4, 5, 6, 31]);
    }

    #[test]
    fn single_repeat_has_zero_spread() {
        let r = run_bench(&BenchConfig { lo: 4, hi: 8, step: 4, repeats: 1, seed: 5 }).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.formation_ms.stddev == 0.0));
        assert!(r.to_csv().lines().nth(1).unwrap().starts_with("4,4,1,"));
    }

    #[test]
    fn bad_sweeps_are_rejected() {
        for cfg in [
            BenchConfig { lo: 0, hi: 5, step: 1, repeats: 1, seed: 0 },
            BenchConfig { lo: 1, hi: 5, step: 0, repeats: 1, seed: 0 },
            BenchConfig { lo: 1, hi: 5, step: 1, repeats: 0, seed: 0 },
        ] {
            assert!(matches!(run_bench(&cfg), Err(BenchError::Args(_))));
        }
    }
}
