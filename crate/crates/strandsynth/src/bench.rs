//! Wall-clock benchmarks: how render time scales with step count and grid
//! density, and how dataset throughput scales with worker count.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::params::SimulationConfig;
use crate::scheme::render;

/// Benchmark plan: the base configuration is re-rendered at each duration
/// and each wave speed (which sets the grid density).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub base: SimulationConfig,
    /// Renders per case; medians are taken across them.
    pub repeats: usize,
    pub durations: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base: SimulationConfig::plucked(300.0, 0.003, 0.14),
            repeats: 5,
            durations: vec![0.25, 0.5],
            gammas: vec![300.0, 600.0, 1200.0],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchCase {
    pub label: String,
    pub duration: f64,
    pub gamma: f64,
    pub grid_points: usize,
    pub steps: usize,
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub times_ms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvironmentInfo {
    pub cores: usize,
    pub os: String,
    pub arch: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub environment: EnvironmentInfo,
    pub cases: Vec<BenchCase>,
}

/// Logical cores visible to this process.
pub fn available_cores() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub fn environment() -> EnvironmentInfo {
    EnvironmentInfo {
        cores: available_cores(),
        os: std::env::consts::OS.to_string(),
        arch: std::env::consts::ARCH.to_string(),
    }
}

/// Linear-interpolated quantile of an unsorted sample set.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// One full render timed end to end, in milliseconds.
pub fn time_render_ms(cfg: &SimulationConfig) -> Result<f64> {
    let start = Instant::now();
    let result = render(cfg)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    // Keep the optimizer honest about the samples.
    std::hint::black_box(result.samples.len());
    Ok(elapsed)
}

/// Median wall time of `repeats` renders, in milliseconds.
pub fn median_render_ms(cfg: &SimulationConfig, repeats: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        times.push(time_render_ms(cfg)?);
    }
    Ok(median(&times))
}

/// Runs the full plan and returns per-case medians with spread.
pub fn run_benchmarks(plan: &BenchConfig) -> Result<BenchReport> {
    let mut cases = Vec::new();
    for &gamma in &plan.gammas {
        for &duration in &plan.durations {
            let mut cfg = plan.base.clone();
            cfg.string.gamma = gamma;
            cfg.duration = duration;
            let grid = crate::grid::compute_grid(&cfg.string, cfg.sample_rate)?;
            let mut times = Vec::with_capacity(plan.repeats);
            for _ in 0..plan.repeats.max(1) {
                times.push(time_render_ms(&cfg)?);
            }
            cases.push(BenchCase {
                label: format!("gamma={gamma} duration={duration}"),
                duration,
                gamma,
                grid_points: grid.n_t + grid.n_l,
                steps: cfg.step_count(),
                median_ms: median(&times),
                iqr_ms: quantile(&times, 0.75) - quantile(&times, 0.25),
                times_ms: times,
            });
        }
    }
    Ok(BenchReport {
        environment: environment(),
        cases,
    })
}
