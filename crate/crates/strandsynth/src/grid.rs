//! Spatio-temporal grid construction under the scheme's stability condition.
//!
//! The time step is fixed by the sample rate, `k = 1/f_s`. Spatial spacings
//! are then chosen as the smallest stable values, which maximizes bandwidth:
//! von Neumann analysis of the implicit scheme gives
//!
//! ```text
//! gamma^2 k^2 / h^2 + 4 kappa^2 k^2 / h^4 <= 2 theta - 1
//! ```
//!
//! for the transverse subsystem, solved with equality by
//!
//! ```text
//! h_t_min = sqrt((gamma^2 k^2 + sqrt(gamma^4 k^4 + 16 (2 theta - 1) kappa^2 k^2))
//!                / (2 (2 theta - 1)))
//! ```
//!
//! At `theta = 1` this reduces to the familiar stiff-string bound
//! `sqrt((gamma^2 k^2 + sqrt(gamma^4 k^4 + 16 kappa^2 k^2)) / 2)` and, for
//! `kappa = 0`, to the wave-equation limit `h = gamma k`. The longitudinal
//! subsystem is a plain wave equation with speed `gamma * alpha`, so
//! `h_l_min = gamma * alpha * k`. Loss terms do not tighten either bound.
//!
//! The unit-length domain must divide evenly, so interval counts are rounded
//! down: `n = floor(1 / h_min)` and `h = 1/n >= h_min`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::StringParams;

/// One string's discretization: time step, spacings, and interval counts.
/// State vectors hold the `n - 1` interior points of each subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Time step in seconds, `1 / sample_rate`.
    pub k: f64,
    /// Transverse spacing, fraction of string length.
    pub h_t: f64,
    /// Longitudinal spacing, fraction of string length.
    pub h_l: f64,
    /// Transverse interval count.
    pub n_t: usize,
    /// Longitudinal interval count.
    pub n_l: usize,
}

impl Grid {
    /// Interior transverse point count.
    pub fn m_t(&self) -> usize {
        self.n_t - 1
    }

    /// Interior longitudinal point count.
    pub fn m_l(&self) -> usize {
        self.n_l - 1
    }

    /// Builds a grid with explicit interval counts, validating stability.
    /// Used by oracle tests and by configurations that deliberately run
    /// coarser than minimal spacing.
    pub fn from_counts(params: &StringParams, sample_rate: f64, n_t: usize, n_l: usize) -> Result<Grid> {
        if n_t < 3 || n_l < 3 {
            return Err(Error::Grid(format!(
                "interval counts must be >= 3 (got n_t = {n_t}, n_l = {n_l})"
            )));
        }
        let k = 1.0 / sample_rate;
        let h_t = 1.0 / n_t as f64;
        let h_l = 1.0 / n_l as f64;
        validate_spacings(params, k, h_t, h_l)?;
        Ok(Grid { k, h_t, h_l, n_t, n_l })
    }
}

/// Stability margin of a transverse spacing: `(2 theta - 1) - lhs(h)`.
/// Nonnegative (up to rounding) means stable.
pub fn stability_margin_transverse(params: &StringParams, k: f64, h: f64) -> f64 {
    let g2k2 = params.gamma * params.gamma * k * k;
    let q2k2 = params.kappa * params.kappa * k * k;
    (2.0 * params.theta - 1.0) - (g2k2 / (h * h) + 4.0 * q2k2 / (h * h * h * h))
}

/// Minimal stable transverse spacing for the given params and time step.
pub fn min_spacing_transverse(params: &StringParams, k: f64) -> Result<f64> {
    let tt = 2.0 * params.theta - 1.0;
    if tt <= 0.0 {
        return Err(Error::Grid(format!(
            "theta must exceed 1/2 for a finite stable spacing (got theta = {})",
            params.theta
        )));
    }
    let g2k2 = params.gamma * params.gamma * k * k;
    let qk = params.kappa * k;
    let radicand = g2k2 * g2k2 + 16.0 * tt * qk * qk;
    Ok(((g2k2 + radicand.sqrt()) / (2.0 * tt)).sqrt())
}

/// Minimal stable longitudinal spacing, `gamma * alpha * k`.
pub fn min_spacing_longitudinal(params: &StringParams, k: f64) -> f64 {
    params.gamma * params.alpha * k
}

/// Rejects spacings below their stability limits. A relative slack of 1e-9
/// absorbs the rounding inherent in `h = 1/n`.
pub fn validate_spacings(params: &StringParams, k: f64, h_t: f64, h_l: f64) -> Result<()> {
    let h_t_min = min_spacing_transverse(params, k)?;
    if h_t < h_t_min * (1.0 - 1e-9) {
        return Err(Error::Grid(format!(
            "transverse spacing {h_t:.6e} violates the stability condition \
             (minimum {h_t_min:.6e} for gamma = {}, kappa = {}, theta = {})",
            params.gamma, params.kappa, params.theta
        )));
    }
    let h_l_min = min_spacing_longitudinal(params, k);
    if h_l < h_l_min * (1.0 - 1e-9) {
        return Err(Error::Grid(format!(
            "longitudinal spacing {h_l:.6e} violates the stability condition \
             (minimum {h_l_min:.6e} for gamma * alpha = {})",
            params.gamma * params.alpha
        )));
    }
    Ok(())
}

fn interval_count(h_min: f64, label: &str) -> Result<usize> {
    // The + 1e-9 guards against 1/h_min landing an ulp below an integer.
    let n = ((1.0 / h_min) + 1e-9).floor();
    if !(n >= 3.0) {
        return Err(Error::Grid(format!(
            "{label} grid would have fewer than 3 intervals (minimal spacing {h_min:.4e}); \
             the wave speed is too high for this sample rate"
        )));
    }
    Ok(n as usize)
}

/// Builds the densest stable grid for `params` at the given sample rate.
pub fn compute_grid(params: &StringParams, sample_rate: f64) -> Result<Grid> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Grid(format!(
            "sample_rate must be > 0 (got {sample_rate})"
        )));
    }
    let k = 1.0 / sample_rate;
    let n_t = interval_count(min_spacing_transverse(params, k)?, "transverse")?;
    let n_l = interval_count(min_spacing_longitudinal(params, k), "longitudinal")?;
    Ok(Grid {
        k,
        h_t: 1.0 / n_t as f64,
        h_l: 1.0 / n_l as f64,
        n_t,
        n_l,
    })
}
