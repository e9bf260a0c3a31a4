//! Signal analysis: fundamental estimation on known signals, the stretched
//! mode ladder, spectra, peak matching, and the inter-modal energy ratio.

use std::f64::consts::PI;
use strandsynth::analysis::{
    estimate_f0, estimate_f0_refined, inter_modal_ratio_db, match_strongest, mode_frequencies,
    power_spectrum, Spectrum,
};
use strandsynth::Error;

const FS: f64 = 48_000.0;

fn sine(freq: f64, amplitude: f64, seconds: f64) -> Vec<f64> {
    let n = (seconds * FS) as usize;
    (0..n)
        .map(|i| amplitude * (2.0 * PI * freq * i as f64 / FS).sin())
        .collect()
}

#[test]
fn estimators_recover_pure_tones_across_the_search_range() {
    for &freq in &[82.4, 110.0, 220.0, 440.0, 880.0, 1244.5, 1975.0] {
        let x = sine(freq, 0.3, 0.4);
        let coarse = estimate_f0(&x, FS).unwrap();
        assert!(
            (coarse - freq).abs() < 0.5,
            "coarse at {freq} Hz: {coarse}"
        );
        let refined = estimate_f0_refined(&x, FS).unwrap();
        assert!(
            (refined - freq).abs() < 0.5,
            "refined at {freq} Hz: {refined}"
        );
    }
}

#[test]
fn estimator_tracks_the_fundamental_of_a_harmonic_stack() {
    let n = (0.4 * FS) as usize;
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            (2.0 * PI * 300.0 * t).sin()
                + 0.5 * (2.0 * PI * 600.0 * t).sin()
                + 0.3 * (2.0 * PI * 900.0 * t).sin()
        })
        .collect();
    let f = estimate_f0_refined(&x, FS).unwrap();
    assert!((f - 300.0).abs() < 0.5, "got {f}");
}

#[test]
fn estimators_refuse_degenerate_signals() {
    // Too short.
    assert_eq!(estimate_f0(&sine(440.0, 0.3, 0.001), FS), None);
    // Silence and DC have no periodicity after demeaning.
    assert_eq!(estimate_f0(&vec![0.0; 9600], FS), None);
    assert_eq!(estimate_f0(&vec![0.5; 9600], FS), None);
    // Amplitude below the power floor.
    assert_eq!(estimate_f0(&sine(440.0, 1e-13, 0.2), FS), None);
    assert_eq!(estimate_f0_refined(&vec![0.0; 9600], FS), None);
}

#[test]
fn mode_ladder_is_harmonic_without_stiffness() {
    let modes = mode_frequencies(300.0, 0.0, 600.0, 5);
    assert_eq!(modes, vec![300.0, 600.0, 900.0, 1200.0, 1500.0]);
}

#[test]
fn mode_ladder_matches_frozen_values() {
    // First mode of the stretched ladder at f0 = 300, gamma = 600, for the
    // stiffness values used across the test suite.
    for (kappa, expect) in [
        (0.5, 300.50186313168933),
        (2.0, 302.0298926133851),
        (5.88, 306.14023654958396),
        (9.40, 310.0694145848076),
        (9.63, 310.33287288911816),
    ] {
        let f1 = mode_frequencies(300.0, kappa, 600.0, 1)[0];
        assert!(
            (f1 - expect).abs() <= 1e-12 * expect,
            "kappa = {kappa}: {f1:.13} vs {expect:.13}"
        );
    }
    let mode10 = mode_frequencies(300.0, 2.0, 600.0, 10)[9];
    assert!((mode10 - 3036.6479151408907).abs() <= 1e-12 * mode10);
    let mode2 = mode_frequencies(300.0, 9.63, 600.0, 2)[1];
    assert!((mode2 - 623.0222727460936).abs() <= 1e-12 * mode2);
}

#[test]
fn stiffness_stretches_the_ladder_progressively() {
    let modes = mode_frequencies(300.0, 9.63, 600.0, 12);
    let f1 = modes[0];
    let mut prev_stretch = 0.0;
    for (i, &f) in modes.iter().enumerate() {
        let p = (i + 1) as f64;
        if i > 0 {
            assert!(f > modes[i - 1], "ladder must increase");
        }
        let stretch = f / (p * f1);
        assert!(
            stretch > prev_stretch,
            "stretch must grow with mode number (mode {})",
            i + 1
        );
        prev_stretch = stretch;
    }
    // More stiffness means a higher first mode.
    let f1_soft = mode_frequencies(300.0, 0.5, 600.0, 1)[0];
    let f1_stiff = mode_frequencies(300.0, 5.88, 600.0, 1)[0];
    assert!(f1_stiff > f1_soft);
}

#[test]
fn spectrum_peaks_at_the_sinusoid_bin() {
    let nfft = 4096;
    let bin = 100;
    let freq = bin as f64 * FS / nfft as f64;
    let x = sine(freq, 0.5, nfft as f64 / FS);
    let spec = power_spectrum(&x, FS, nfft);
    assert_eq!(spec.power.len(), nfft / 2 + 1);
    assert!((spec.bin_hz - FS / nfft as f64).abs() < 1e-12);
    assert!((spec.freq(bin) - freq).abs() < 1e-9);
    let argmax = spec
        .power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(argmax, bin);

    let peaks = spec.peaks(-60.0);
    assert!(!peaks.is_empty());
    let (pf, _) = peaks
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((pf - freq).abs() < spec.bin_hz, "refined peak at {pf}");
}

#[test]
fn strongest_peak_wins_inside_the_window() {
    let peaks = vec![(438.0, 1.0), (442.0, 5.0), (880.0, 9.0)];
    let matched = match_strongest(&peaks, &[440.0], 0.0, 10.0).unwrap();
    assert_eq!(matched, vec![442.0]);
    // The relative window scales with the rung.
    let matched = match_strongest(&peaks, &[880.0], 0.01, 1.0).unwrap();
    assert_eq!(matched, vec![880.0]);
}

#[test]
fn unmatched_rung_falls_back_to_the_nearest_peak() {
    let peaks = vec![(440.0, 1.0), (880.0, 2.0)];
    let matched = match_strongest(&peaks, &[1200.0], 0.025, 30.0).unwrap();
    assert_eq!(matched, vec![880.0]);
}

#[test]
fn matching_without_peaks_is_an_error() {
    let err = match_strongest(&[], &[440.0], 0.025, 30.0).unwrap_err();
    assert!(matches!(err, Error::Analysis(_)));
}

#[test]
fn inter_modal_ratio_counts_bins_outside_the_mode_bands() {
    // Uniform unit power, one mode at 100 Hz, 10 Hz bins, 15 Hz band.
    // Modal region [50, 105] holds bins {50..100}; bins {90, 100} belong to
    // the mode, leaving 4 of 6 bins inter-modal.
    let spec = Spectrum {
        bin_hz: 10.0,
        power: vec![1.0; 12],
    };
    let got = inter_modal_ratio_db(&spec, &[100.0], 15.0).unwrap();
    let expect = 10.0 * (4.0f64 / 6.0).log10();
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

#[test]
fn inter_modal_ratio_rejects_degenerate_inputs() {
    let spec = Spectrum {
        bin_hz: 10.0,
        power: vec![1.0; 12],
    };
    assert!(inter_modal_ratio_db(&spec, &[], 15.0).is_err());
    // Band so wide that no bin is inter-modal.
    assert!(inter_modal_ratio_db(&spec, &[100.0], 200.0).is_err());
    // No energy in the modal region.
    let silent = Spectrum {
        bin_hz: 10.0,
        power: vec![0.0; 12],
    };
    assert!(inter_modal_ratio_db(&silent, &[100.0], 15.0).is_err());
}
