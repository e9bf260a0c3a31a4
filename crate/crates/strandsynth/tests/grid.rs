//! Grid construction: frozen interval counts for reference parameter sets,
//! the stability identity at minimal spacing, and rejection paths.

use proptest::prelude::*;
use strandsynth::grid::{
    min_spacing_longitudinal, min_spacing_transverse, stability_margin_transverse,
    validate_spacings,
};
use strandsynth::{compute_grid, theta_default, Error, Grid, StringParams};

fn params(gamma: f64, kappa: f64, alpha: f64, theta: f64) -> StringParams {
    StringParams {
        gamma,
        kappa,
        alpha,
        theta,
        ..StringParams::default()
    }
}

const FS: f64 = 48_000.0;

#[test]
fn ideal_string_counts_at_fully_implicit_theta() {
    // gamma = 600, kappa = 0, theta = 1: h_t_min = gamma k = 0.0125 exactly.
    let p = params(600.0, 0.0, 3.0, 1.0);
    let g = compute_grid(&p, FS).unwrap();
    assert_eq!(g.n_t, 80);
    assert!((g.h_t - 0.0125).abs() < 1e-15);
    // Longitudinal: h_l_min = gamma alpha k = 0.0375, so 26 intervals fit.
    assert_eq!(g.n_l, 26);
    assert_eq!(g.m_t(), 79);
    assert_eq!(g.m_l(), 25);
    assert!((g.k - 1.0 / FS).abs() < 1e-20);
}

#[test]
fn default_theta_coarsens_the_transverse_grid() {
    // The dispersion-balanced theta trades density for accuracy:
    // h_t_min = gamma k / sqrt(2 theta - 1) for kappa = 0.
    let p = params(600.0, 0.0, 3.0, theta_default());
    let h = min_spacing_transverse(&p, 1.0 / FS).unwrap();
    assert!((h - 0.019634954084936207).abs() < 1e-15);
    let g = compute_grid(&p, FS).unwrap();
    assert_eq!(g.n_t, 50);
}

#[test]
fn stiffness_coarsens_the_transverse_grid() {
    let p = params(600.0, 5.88, 3.0, 1.0);
    let g = compute_grid(&p, FS).unwrap();
    assert_eq!(g.n_t, 54);
}

#[test]
fn default_config_grid_counts() {
    let p = StringParams::default();
    let g = compute_grid(&p, FS).unwrap();
    assert_eq!((g.n_t, g.n_l), (48, 80));
}

#[test]
fn minimal_spacing_satisfies_the_stability_identity() {
    // The closed form solves the von Neumann bound with equality, so the
    // margin at h_t_min is zero to rounding.
    for (gamma, kappa, theta) in [
        (600.0, 0.0, 1.0),
        (600.0, 2.0, theta_default()),
        (600.0, 9.63, 1.0),
        (1400.0, 2.0, 1.0),
        (160.0, 0.5, 0.75),
    ] {
        let p = params(gamma, kappa, 1.0, theta);
        let k = 1.0 / FS;
        let h = min_spacing_transverse(&p, k).unwrap();
        let margin = stability_margin_transverse(&p, k, h);
        let scale = 2.0 * theta - 1.0;
        assert!(
            margin.abs() <= 1e-12 * scale,
            "gamma={gamma} kappa={kappa} theta={theta}: margin {margin:.3e}"
        );
    }
}

#[test]
fn spacing_two_percent_below_minimum_is_rejected() {
    let p = params(600.0, 2.0, 1.0, theta_default());
    let k = 1.0 / FS;
    let h_min = min_spacing_transverse(&p, k).unwrap();
    let h_l = min_spacing_longitudinal(&p, k) * 1.5;
    assert!(validate_spacings(&p, k, h_min, h_l).is_ok());
    let err = validate_spacings(&p, k, 0.98 * h_min, h_l).unwrap_err();
    assert!(matches!(err, Error::Grid(_)), "got {err}");
    // Longitudinal spacing is checked independently.
    let h_l_min = min_spacing_longitudinal(&p, k);
    assert!(validate_spacings(&p, k, h_min, 0.98 * h_l_min).is_err());
}

#[test]
fn from_counts_validates_stability() {
    let p = params(600.0, 0.0, 1.0, 1.0);
    // n_t = 80 sits exactly at the limit; 81 is below minimal spacing.
    assert!(Grid::from_counts(&p, FS, 80, 40).is_ok());
    assert!(Grid::from_counts(&p, FS, 81, 40).is_err());
    // Coarser than minimal is always allowed.
    assert!(Grid::from_counts(&p, FS, 20, 10).is_ok());
    // Degenerate counts are rejected before the stability check.
    assert!(Grid::from_counts(&p, FS, 2, 10).is_err());
    assert!(Grid::from_counts(&p, FS, 10, 2).is_err());
}

#[test]
fn wave_speed_too_high_for_sample_rate_is_rejected() {
    // h_min = gamma k = 2.0: fewer than 3 intervals fit in the unit domain.
    let p = params(96_000.0, 0.0, 1.0, 1.0);
    let err = compute_grid(&p, FS).unwrap_err();
    assert!(matches!(err, Error::Grid(_)), "got {err}");
}

#[test]
fn theta_at_one_half_has_no_finite_stable_spacing() {
    let p = params(600.0, 1.0, 1.0, 0.5);
    assert!(min_spacing_transverse(&p, 1.0 / FS).is_err());
    assert!(compute_grid(&p, FS).is_err());
}

#[test]
fn invalid_sample_rate_is_rejected() {
    let p = StringParams::default();
    assert!(compute_grid(&p, 0.0).is_err());
    assert!(compute_grid(&p, -48_000.0).is_err());
    assert!(compute_grid(&p, f64::NAN).is_err());
}

proptest! {
    /// Any grid the builder returns satisfies both stability bounds, divides
    /// the unit domain evenly, and has at least 3 intervals per subsystem.
    #[test]
    fn built_grids_are_stable_and_even(
        gamma in 100.0..4000.0f64,
        kappa in 0.0..12.0f64,
        alpha in 1.0..4.0f64,
        theta in 0.55..1.2f64,
    ) {
        let p = params(gamma, kappa, alpha, theta);
        let g = match compute_grid(&p, FS) {
            Ok(g) => g,
            // Legitimately impossible corners (too few intervals).
            Err(Error::Grid(_)) => return Ok(()),
            Err(e) => panic!("unexpected error: {e}"),
        };
        prop_assert!(g.n_t >= 3 && g.n_l >= 3);
        prop_assert!((g.h_t * g.n_t as f64 - 1.0).abs() < 1e-12);
        prop_assert!((g.h_l * g.n_l as f64 - 1.0).abs() < 1e-12);
        prop_assert!(validate_spacings(&p, g.k, g.h_t, g.h_l).is_ok());
        // Density is maximal: one more interval would break stability.
        let h_finer = 1.0 / (g.n_t + 1) as f64;
        prop_assert!(
            validate_spacings(&p, g.k, h_finer, g.h_l).is_err(),
            "n_t = {} is not maximal", g.n_t
        );
    }

    /// The closed-form minimal spacing solves the stability bound with
    /// equality across the parameter space.
    #[test]
    fn minimal_spacing_identity_holds_everywhere(
        gamma in 50.0..8000.0f64,
        kappa in 0.0..50.0f64,
        theta in 0.51..1.5f64,
    ) {
        let p = params(gamma, kappa, 1.0, theta);
        let k = 1.0 / FS;
        let h = min_spacing_transverse(&p, k).unwrap();
        let scale = 2.0 * theta - 1.0;
        prop_assert!(stability_margin_transverse(&p, k, h).abs() <= 1e-9 * scale);
        // Slightly wider is stable, slightly narrower is not.
        prop_assert!(stability_margin_transverse(&p, k, h * 1.001) > 0.0);
        prop_assert!(stability_margin_transverse(&p, k, h * 0.999) < 0.0);
    }
}
