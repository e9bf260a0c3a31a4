//! Signal analysis: pitch estimation, power spectra, and modal ladders.
//!
//! The pitch estimator is a two-stage autocorrelation method. A coarse pass
//! over the full band picks the periodicity peak (with octave-error rescue and
//! long-lag refinement); a second pass recomputes the autocorrelation from the
//! fundamental's spectral band alone, which removes the bias that strong upper
//! partials of inharmonic tones introduce at short lags.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Lower edge of the pitch search band in Hz.
pub const F0_SEARCH_MIN_HZ: f64 = 50.0;
/// Upper edge of the pitch search band in Hz.
pub const F0_SEARCH_MAX_HZ: f64 = 2000.0;
/// Minimum normalized autocorrelation value accepted as periodic.
const MIN_CLARITY: f64 = 0.30;
/// Default transform length for `power_spectrum` callers wanting fine bins.
pub const SPECTRUM_NFFT: usize = 1 << 17;

fn next_pow2_at_least(n: usize) -> usize {
    let mut m = 1usize;
    while m < n {
        m <<= 1;
    }
    m
}

/// Circular autocorrelation of `x` via zero-padded FFT, returned for lags
/// `0..x.len()`. Padding to at least twice the length makes it linear.
fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = next_pow2_at_least(2 * n);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for (slot, &v) in buf.iter_mut().zip(x) {
        slot.re = v;
    }
    fwd.process(&mut buf);
    for slot in buf.iter_mut() {
        *slot = Complex::new(slot.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    buf[..n].iter().map(|c| c.re / m as f64).collect()
}

/// Sub-sample peak location from a parabola through `r[i-1..=i+1]`.
/// The shift is clamped to half a lag so a degenerate fit cannot escape
/// the bracketing bins.
fn parabolic(r: &[f64], i: usize) -> f64 {
    let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
    let den = a - 2.0 * b + c;
    let d = if den == 0.0 { 0.0 } else { 0.5 * (a - c) / den };
    i as f64 + d.clamp(-0.5, 0.5)
}

/// First index of the maximum over `r[a..=b]`.
fn argmax_range(r: &[f64], a: usize, b: usize) -> usize {
    let mut best = a;
    for i in a + 1..=b {
        if r[i] > r[best] {
            best = i;
        }
    }
    best
}

/// Local maximum of `r` near `center`, searched within `width` lags and
/// confined to `[lo, hi]`. When the windowed argmax lands on the window edge
/// it walks uphill to the actual summit. Returns `None` if no interior
/// local maximum exists there.
fn local_peak(r: &[f64], center: usize, width: usize, lo: usize, hi: usize) -> Option<usize> {
    let a = lo.max(center.saturating_sub(width));
    let b = hi.min(center + width);
    if b <= a {
        return None;
    }
    let mut j = argmax_range(r, a, b);
    if j <= a || j >= b {
        while a < j && j < hi && r[j + 1] > r[j] {
            j += 1;
        }
        while lo < j && j < b && r[j - 1] > r[j] {
            j -= 1;
        }
    }
    if j < 1 || j + 1 >= r.len() {
        return None;
    }
    if !(r[j] >= r[j - 1] && r[j] >= r[j + 1]) {
        return None;
    }
    Some(j)
}

/// Coarse fundamental estimate in Hz, or `None` for signals too short,
/// too quiet, or without a clear periodicity peak.
pub fn estimate_f0(x: &[f64], sample_rate: f64) -> Option<f64> {
    estimate_f0_range(x, sample_rate, F0_SEARCH_MIN_HZ, F0_SEARCH_MAX_HZ)
}

fn estimate_f0_range(x: &[f64], fs: f64, fmin: f64, fmax: f64) -> Option<f64> {
    let n = x.len();
    if n < 64 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    if centered.iter().map(|v| v * v).sum::<f64>() / (n as f64) < 1e-24 {
        return None;
    }
    let mut r = autocorrelation(&centered);
    if r[0] <= 0.0 {
        return None;
    }
    let r0 = r[0];
    for v in r.iter_mut() {
        *v /= r0;
    }
    let lo = ((fs / fmax).floor() as usize).max(2);
    let hi = (n - 2).min((fs / fmin).ceil() as usize);
    if hi <= lo {
        return None;
    }
    // Skip the zero-lag lobe: search only past the first zero crossing,
    // unless the crossing sits implausibly deep in the lag range.
    let mut z = 2usize;
    while z <= hi && r[z] > 0.0 {
        z += 1;
    }
    let mut start = lo.max(z.min(hi));
    if z > hi / 2 {
        start = lo;
    }
    let best = argmax_range(&r, start, hi);
    if r[best] < MIN_CLARITY {
        return None;
    }
    // Octave-error rescue: prefer an integer submultiple whose peak is
    // nearly as tall, which recovers the true period when lag `best`
    // caught a multiple of it.
    let mut chosen = best;
    for mdiv in 2..16usize {
        let cand = best as f64 / mdiv as f64;
        if cand < start as f64 {
            break;
        }
        let width = ((0.2 * cand) as usize).max(2);
        if let Some(j) = local_peak(&r, cand.round() as usize, width, start, hi) {
            if r[j] >= 0.85 * r[best] {
                chosen = j;
            }
        }
    }
    let mut period = parabolic(&r, chosen);
    refine_long_lag(&r, &mut period, lo, hi);
    Some(fs / period)
}

/// Long-lag refinement: re-measure the period at lag `2^m T` while it fits,
/// halving the relative lag-quantization error per doubling.
fn refine_long_lag(r: &[f64], period: &mut f64, lo: usize, hi: usize) {
    let mut mult = 1usize;
    while 2.0 * mult as f64 * *period <= hi as f64 {
        mult *= 2;
        let center = (mult as f64 * *period).round() as usize;
        let width = ((*period / 3.0) as usize).max(2);
        match local_peak(r, center, width, lo, hi) {
            Some(j) => *period = parabolic(r, j) / mult as f64,
            None => break,
        }
    }
}

/// Refined fundamental estimate in Hz. Runs the coarse estimator, then
/// recomputes the autocorrelation from the band `[0.55 f1, 1.55 f1]` of the
/// power spectrum only, so upper partials cannot skew the peak position.
/// Falls back to the coarse value when the banded pass degenerates.
pub fn estimate_f0_refined(x: &[f64], sample_rate: f64) -> Option<f64> {
    let fs = sample_rate;
    let f1 = estimate_f0(x, fs)?;
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = next_pow2_at_least(2 * n);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for (slot, &v) in buf.iter_mut().zip(x) {
        slot.re = v - mean;
    }
    fwd.process(&mut buf);
    // Keep only the fundamental's band; the mask is applied symmetrically
    // so the inverse transform stays real.
    for (i, slot) in buf.iter_mut().enumerate() {
        let bin = if i <= m / 2 { i } else { m - i };
        let freq = bin as f64 * fs / m as f64;
        let power = slot.norm_sqr();
        *slot = if freq < 0.55 * f1 || freq > 1.55 * f1 {
            Complex::new(0.0, 0.0)
        } else {
            Complex::new(power, 0.0)
        };
    }
    inv.process(&mut buf);
    let mut r: Vec<f64> = buf[..n].iter().map(|c| c.re / m as f64).collect();
    if r[0] <= 0.0 {
        return Some(f1);
    }
    let r0 = r[0];
    for v in r.iter_mut() {
        *v /= r0;
    }
    let lo = ((fs / (1.55 * f1)).floor() as usize).max(2);
    let hi = (n - 2).min((fs / (0.55 * f1).max(F0_SEARCH_MIN_HZ)).ceil() as usize);
    if hi <= lo {
        return Some(f1);
    }
    let mut z = 2usize;
    while z <= hi && r[z] > 0.0 {
        z += 1;
    }
    let mut start = lo.max(z.min(hi));
    if z > hi / 2 {
        start = lo;
    }
    let best = argmax_range(&r, start, hi);
    let mut period = parabolic(&r, best);
    refine_long_lag(&r, &mut period, lo, hi);
    Some(fs / period)
}

/// Modal frequencies of a stiff clamped string: mode `p` (1-based) at
/// `f0 p (1 + (2/pi) sqrt(K) + (4/pi^2) K) sqrt(1 + K p^2)` with
/// `K = (pi kappa / gamma)^2`. At `kappa = 0` this is the harmonic series.
pub fn mode_frequencies(f0: f64, kappa: f64, gamma: f64, count: usize) -> Vec<f64> {
    let k = (PI * kappa / gamma).powi(2);
    let shift = 1.0 + (2.0 / PI) * k.sqrt() + (4.0 / (PI * PI)) * k;
    (1..=count)
        .map(|p| {
            let pf = p as f64;
            f0 * pf * shift * (1.0 + k * pf * pf).sqrt()
        })
        .collect()
}

/// One-sided power spectrum with uniform bin spacing.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Frequency step between adjacent bins in Hz.
    pub bin_hz: f64,
    /// `nfft/2 + 1` power values, bin `i` centered at `i * bin_hz`.
    pub power: Vec<f64>,
}

impl Spectrum {
    /// Frequency of bin `i` in Hz.
    pub fn freq(&self, i: usize) -> f64 {
        i as f64 * self.bin_hz
    }

    /// Local spectral maxima above `floor_db` relative to the strongest bin,
    /// as `(frequency, power)` pairs. Frequencies are refined by a parabola
    /// through the log-power of the three bins around each maximum.
    pub fn peaks(&self, floor_db: f64) -> Vec<(f64, f64)> {
        let f = &self.power;
        let mut out = Vec::new();
        if f.len() < 5 {
            return out;
        }
        let fmax = f.iter().cloned().fold(f64::MIN, f64::max);
        if !(fmax > 0.0) {
            return out;
        }
        for i in 2..f.len() - 2 {
            if f[i] > f[i - 1] && f[i] >= f[i + 1] && 10.0 * (f[i] / fmax).log10() > floor_db {
                let d = if f[i - 1] > 0.0 && f[i + 1] > 0.0 {
                    let (la, lb, lc) = (f[i - 1].ln(), f[i].ln(), f[i + 1].ln());
                    let den = la - 2.0 * lb + lc;
                    if den == 0.0 {
                        0.0
                    } else {
                        0.5 * (la - lc) / den
                    }
                } else {
                    0.0
                };
                out.push(((i as f64 + d) * self.bin_hz, f[i]));
            }
        }
        out
    }
}

/// Power spectrum of `signal` after a full-length symmetric Hann window,
/// zero-padded (or truncated) to `nfft` points.
pub fn power_spectrum(signal: &[f64], sample_rate: f64, nfft: usize) -> Spectrum {
    let n = signal.len();
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let copied = n.min(nfft);
    if n == 1 {
        buf[0].re = signal[0];
    } else {
        for i in 0..copied {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n as f64 - 1.0)).cos();
            buf[i].re = signal[i] * w;
        }
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(nfft).process(&mut buf);
    let power = buf[..nfft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
    Spectrum {
        bin_hz: sample_rate / nfft as f64,
        power,
    }
}

/// For each ladder frequency, the strongest measured peak within
/// `max(rel_win * rung, abs_win)` Hz of it, falling back to the nearest
/// peak when none lands inside the window.
pub fn match_strongest(
    peaks: &[(f64, f64)],
    ladder: &[f64],
    rel_win: f64,
    abs_win: f64,
) -> Result<Vec<f64>> {
    if peaks.is_empty() {
        return Err(Error::Analysis(
            "no spectral peaks to match against".into(),
        ));
    }
    let mut out = Vec::with_capacity(ladder.len());
    for &rung in ladder {
        let w = (rel_win * rung).max(abs_win);
        let mut best: Option<(f64, f64)> = None;
        for &(freq, power) in peaks {
            if (freq - rung).abs() <= w && best.map_or(true, |(_, bp)| power > bp) {
                best = Some((freq, power));
            }
        }
        let chosen = match best {
            Some((freq, _)) => freq,
            None => {
                let mut nearest = peaks[0];
                for &p in &peaks[1..] {
                    if (p.0 - rung).abs() < (nearest.0 - rung).abs() {
                        nearest = p;
                    }
                }
                nearest.0
            }
        };
        out.push(chosen);
    }
    Ok(out)
}

/// Ratio in dB of the energy lying between the mode bands to the total
/// energy of the modal region `[0.5 m_first, 1.05 m_last]`, where each mode
/// owns the bins within `band_hz` of it. Larger (less negative) values mean
/// more energy away from the modes.
pub fn inter_modal_ratio_db(spectrum: &Spectrum, modes: &[f64], band_hz: f64) -> Result<f64> {
    if modes.is_empty() {
        return Err(Error::Analysis("empty mode list".into()));
    }
    let lo = modes[0] * 0.5;
    let hi = modes[modes.len() - 1] * 1.05;
    let mut total = 0.0;
    let mut inter = 0.0;
    let mut inter_bins = 0usize;
    for (i, &p) in spectrum.power.iter().enumerate() {
        let f = i as f64 * spectrum.bin_hz;
        if f < lo || f > hi {
            continue;
        }
        total += p;
        if modes.iter().all(|&m| (f - m).abs() > band_hz) {
            inter += p;
            inter_bins += 1;
        }
    }
    if total <= 0.0 {
        return Err(Error::Analysis("no spectral energy in modal region".into()));
    }
    if inter_bins == 0 || inter <= 0.0 {
        return Err(Error::Analysis(
            "mode bands cover the whole modal region".into(),
        ));
    }
    Ok(10.0 * (inter / total).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn next_pow2_covers_boundaries() {
        assert_eq!(next_pow2_at_least(1), 1);
        assert_eq!(next_pow2_at_least(2), 2);
        assert_eq!(next_pow2_at_least(3), 4);
        assert_eq!(next_pow2_at_least(1024), 1024);
        assert_eq!(next_pow2_at_least(1025), 2048);
    }

    #[test]
    fn autocorrelation_matches_direct_sum() {
        let x = [0.3, -1.1, 0.7, 0.2, -0.4, 0.9];
        let r = autocorrelation(&x);
        assert_eq!(r.len(), x.len());
        for lag in 0..x.len() {
            let direct: f64 = (0..x.len() - lag).map(|i| x[i] * x[i + lag]).sum();
            assert!(
                (r[lag] - direct).abs() < 1e-10,
                "lag {lag}: fft {} vs direct {direct}",
                r[lag]
            );
        }
    }

    #[test]
    fn parabolic_recovers_symmetric_peak_center() {
        // Symmetric neighbors put the refined peak exactly on the bin.
        let r = [0.0, 1.0, 2.0, 1.0, 0.0];
        assert_eq!(parabolic(&r, 2), 2.0);
        // A taller right neighbor pulls the estimate right, at most half a bin.
        let r = [0.0, 1.0, 2.0, 1.9, 0.0];
        let p = parabolic(&r, 2);
        assert!(p > 2.0 && p <= 2.5, "got {p}");
    }

    #[test]
    fn parabolic_degenerate_fit_stays_on_bin() {
        let r = [1.0, 1.0, 1.0];
        assert_eq!(parabolic(&r, 1), 1.0);
    }

    #[test]
    fn argmax_range_returns_first_maximum() {
        let r = [0.0, 3.0, 5.0, 5.0, 1.0];
        assert_eq!(argmax_range(&r, 0, 4), 2);
        assert_eq!(argmax_range(&r, 3, 4), 3);
    }

    #[test]
    fn local_peak_finds_interior_summit() {
        let r = [0.0, 0.2, 0.9, 0.4, 0.1, 0.0];
        assert_eq!(local_peak(&r, 2, 1, 1, 4), Some(2));
        // Window centered off the summit still walks uphill to it.
        assert_eq!(local_peak(&r, 4, 1, 1, 4), Some(2));
    }

    #[test]
    fn local_peak_rejects_monotone_regions() {
        let r = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(local_peak(&r, 2, 1, 1, 3), None);
    }

    #[test]
    fn local_peak_rejects_empty_window() {
        let r = [0.0, 0.5, 0.0];
        assert_eq!(local_peak(&r, 2, 0, 2, 2), None);
    }
}
