//! Randomized dataset generation.
//!
//! Samples are drawn per index from a counter-based RNG, so the output is a
//! pure function of the distribution and master seed: any worker count and
//! any rerun produce byte-identical files. Renders that fail (for example by
//! divergence at an unlucky parameter combination) are logged in the
//! manifest with their cause instead of aborting the run.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::estimate_f0_refined;
use crate::config::{config_hash, sha256_hex};
use crate::error::{Error, Result};
use crate::params::{ParamDistribution, SimulationConfig};
use crate::rng::RNG_SCHEME;
use crate::scheme::{render, Diagnostics};
use crate::wav::{encode_wav, normalize_peak, SampleFormat, PEAK_TARGET};

/// Resource and encoding options for one dataset run. Only `seed_override`
/// affects the bytes produced.
#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub count: usize,
    /// Replaces the distribution's master seed when set.
    pub seed_override: Option<u64>,
    /// Worker threads; 0 picks the machine default.
    pub workers: usize,
    pub format: SampleFormat,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            count: 8,
            seed_override: None,
            workers: 0,
            format: SampleFormat::Float32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Rendered,
    Failed,
}

/// One line of `manifest.jsonl`. Rows carry no timing or host information,
/// keeping the manifest reproducible bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub index: u64,
    pub status: RowStatus,
    /// WAV filename relative to the dataset directory; absent on failure.
    pub file: Option<String>,
    /// SHA-256 of the exact file bytes.
    pub sha256: Option<String>,
    /// Peak amplitude before normalization.
    pub raw_peak: Option<f64>,
    /// Gain applied to reach the normalization target.
    pub normalization_gain: Option<f64>,
    /// Pitch estimate over the second half of the render, when one exists.
    pub estimated_f0_hz: Option<f64>,
    /// Failure cause for failed rows.
    pub error: Option<String>,
    /// The exact sampled configuration.
    pub config: SimulationConfig,
    pub diagnostics: Option<Diagnostics>,
}

/// Dataset-level sidecar written as `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub count: u64,
    pub rendered: u64,
    pub failed: u64,
    pub master_seed: u64,
    pub rng_scheme: String,
    /// Fingerprint of the effective distribution (seed included).
    pub distribution_hash: String,
    pub sample_format: SampleFormat,
    pub peak_target: f64,
}

/// Renders `options.count` samples of `distribution` into `out_dir`,
/// writing one WAV per sample plus `manifest.jsonl` and `summary.json`.
pub fn generate_dataset(
    distribution: &ParamDistribution,
    out_dir: &Path,
    options: &DatasetOptions,
) -> Result<DatasetSummary> {
    let mut dist = distribution.clone();
    if let Some(seed) = options.seed_override {
        dist.seed = seed;
    }
    let report = dist.validate();
    if !report.is_valid() {
        return Err(Error::InvalidParam(report.joined()));
    }
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Result<Vec<ManifestRow>> = pool.install(|| {
        (0..options.count as u64)
            .into_par_iter()
            .map(|index| build_sample(&dist, out_dir, options.format, index))
            .collect()
    });
    let mut rows = rows?;
    rows.sort_by_key(|r| r.index);

    let mut manifest = String::new();
    for row in &rows {
        manifest.push_str(&serde_json::to_string(row)?);
        manifest.push('\n');
    }
    fs::write(out_dir.join("manifest.jsonl"), manifest)?;

    let rendered = rows
        .iter()
        .filter(|r| r.status == RowStatus::Rendered)
        .count() as u64;
    let summary = DatasetSummary {
        count: options.count as u64,
        rendered,
        failed: options.count as u64 - rendered,
        master_seed: dist.seed,
        rng_scheme: RNG_SCHEME.to_string(),
        distribution_hash: config_hash(&dist)?,
        sample_format: options.format,
        peak_target: PEAK_TARGET,
    };
    let mut summary_json = serde_json::to_string_pretty(&summary)?;
    summary_json.push('\n');
    fs::write(out_dir.join("summary.json"), summary_json)?;
    Ok(summary)
}

/// Standard name of the WAV file for sample `index`.
pub fn sample_filename(index: u64) -> String {
    format!("sample-{index:06}.wav")
}

fn build_sample(
    dist: &ParamDistribution,
    out_dir: &Path,
    format: SampleFormat,
    index: u64,
) -> Result<ManifestRow> {
    let cfg = dist.sample(index);
    match render(&cfg) {
        Ok(result) => {
            let mut samples = result.samples;
            let raw_peak = samples.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let gain = normalize_peak(&mut samples);
            let est = estimate_f0_refined(&samples[samples.len() / 2..], result.sample_rate);
            let bytes = encode_wav(&samples, result.sample_rate.round() as u32, format)?;
            let sha = sha256_hex(&bytes);
            let file = sample_filename(index);
            fs::write(out_dir.join(&file), &bytes)?;
            Ok(ManifestRow {
                index,
                status: RowStatus::Rendered,
                file: Some(file),
                sha256: Some(sha),
                raw_peak: Some(raw_peak),
                normalization_gain: Some(gain),
                estimated_f0_hz: est,
                error: None,
                config: cfg,
                diagnostics: Some(result.diagnostics),
            })
        }
        // Infrastructure failures abort the run; numerical failures are
        // recorded and the run continues.
        Err(err @ (Error::Io(_) | Error::Json(_))) => Err(err),
        Err(err) => Ok(ManifestRow {
            index,
            status: RowStatus::Failed,
            file: None,
            sha256: None,
            raw_peak: None,
            normalization_gain: None,
            estimated_f0_hz: None,
            error: Some(err.to_string()),
            config: cfg,
            diagnostics: None,
        }),
    }
}
