//! Simulation parameters: definition, validation, derivation, and sampling.
//!
//! The string is described by derived quantities rather than raw material
//! constants: `gamma` (wave speed over a unit-length domain), `kappa`
//! (stiffness), `alpha` (stiffness-to-tension ratio driving the
//! transverse-longitudinal coupling), and per-subsystem loss coefficients.
//! The fundamental of the ideal lossless string is `gamma / 2`, so pitch is
//! exposed as `f0` with `gamma = 2 * f0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::excitation::{BowSpec, Envelope, ExcitationSpec, HammerSpec, PluckSpec};
use crate::ops::BoundaryClosure;
use crate::rng::SampleRng;

/// Default implicit-scheme weight, `(1 + 4/pi^2) / 2`.
///
/// This value tunes the scheme's numerical dispersion so that the spatial
/// resolution trade-off is balanced across the audio band.
pub fn theta_default() -> f64 {
    0.5 * (1.0 + 4.0 / (PI * PI))
}

/// Physical parameters of one string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StringParams {
    /// Wave speed in units of string lengths per second; `f0 = gamma / 2`.
    pub gamma: f64,
    /// Stiffness parameter, 1/s. Zero means an ideal (non-stiff) string.
    pub kappa: f64,
    /// Stiffness-to-tension ratio. `alpha = 1` decouples the longitudinal
    /// subsystem exactly.
    pub alpha: f64,
    /// Frequency-independent transverse loss, 1/s.
    pub sigma0_t: f64,
    /// Frequency-dependent transverse loss, (string length)^2/s.
    pub sigma1_t: f64,
    /// Frequency-independent longitudinal loss, 1/s.
    pub sigma0_l: f64,
    /// Frequency-dependent longitudinal loss, (string length)^2/s.
    pub sigma1_l: f64,
    /// Implicit-scheme weight; `1/2 <= theta`. Larger values trade dispersion
    /// accuracy for a coarser stable grid.
    pub theta: f64,
}

impl Default for StringParams {
    fn default() -> Self {
        Self {
            gamma: 600.0,
            kappa: 2.0,
            alpha: 1.0,
            sigma0_t: 1.0,
            sigma1_t: 5e-3,
            sigma0_l: 1.0,
            sigma1_l: 5e-3,
            theta: theta_default(),
        }
    }
}

impl StringParams {
    /// Builds params from a target fundamental frequency: `gamma = 2 * f0`,
    /// everything else at defaults.
    pub fn from_f0(f0: f64) -> Self {
        Self {
            gamma: 2.0 * f0,
            ..Self::default()
        }
    }

    /// Fundamental frequency of the ideal lossless string, `gamma / 2`.
    pub fn fundamental_frequency(&self) -> f64 {
        self.gamma / 2.0
    }

    /// Coupling strength `phi^2 = gamma^2 k^2 (alpha^2 - 1) / 4` for time
    /// step `k`.
    pub fn phi2(&self, k: f64) -> f64 {
        self.gamma * self.gamma * k * k * (self.alpha * self.alpha - 1.0) / 4.0
    }

    /// Appends constraint violations for this struct to `out`.
    fn collect_violations(&self, out: &mut Vec<String>) {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            out.push(format!("gamma must be > 0 and finite (got {})", self.gamma));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            out.push(format!("kappa must be >= 0 and finite (got {})", self.kappa));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            out.push(format!("alpha must be >= 1 (got {})", self.alpha));
        }
        for (name, v) in [
            ("sigma0_t", self.sigma0_t),
            ("sigma1_t", self.sigma1_t),
            ("sigma0_l", self.sigma0_l),
            ("sigma1_l", self.sigma1_l),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if !(self.theta >= 0.5 && self.theta.is_finite()) {
            out.push(format!("theta must be >= 1/2 (got {})", self.theta));
        }
    }
}

/// How the per-step linear system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolverKind {
    /// Banded LU with partial pivoting on the position-interleaved ordering.
    DirectBanded,
    /// Block elimination: constant tridiagonal longitudinal factor plus a
    /// dense Schur complement on the transverse block.
    DirectSparse,
}

/// Iteration controls for the nonlinear excitation coupling and the choice
/// of linear solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative residual tolerance for the friction/contact iterations.
    pub newton_tol: f64,
    /// Iteration budget per step before the render aborts.
    pub newton_max_iter: usize,
    pub linear_solver: LinearSolverKind,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-9,
            newton_max_iter: 40,
            linear_solver: LinearSolverKind::DirectBanded,
        }
    }
}

/// Everything needed to render one string: physics, rates, excitations, and
/// readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub string: StringParams,
    /// Output rate in Hz; the time step is its reciprocal.
    pub sample_rate: f64,
    /// Render length in seconds.
    pub duration: f64,
    pub excitations: Vec<ExcitationSpec>,
    /// Readout point as a fraction of string length, strictly inside (0, 1).
    pub readout_position: f64,
    /// Output mix weights for (transverse, longitudinal) displacement.
    pub readout_mix: (f64, f64),
    /// Lagrange interpolation order for readout, excitation spreading, and
    /// the cross-grid coupling interpolants.
    pub interpolation_order: usize,
    /// End closure of the biharmonic (stiffness) operator.
    pub closure: BoundaryClosure,
    pub solver: SolverSettings,
    /// When set, every `stride`-th step's full fields are kept in the result.
    pub field_dump_stride: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            string: StringParams::default(),
            sample_rate: 48_000.0,
            duration: 1.0,
            excitations: Vec::new(),
            readout_position: 0.3,
            readout_mix: (1.0, 0.0),
            interpolation_order: 3,
            closure: BoundaryClosure::Clamped,
            solver: SolverSettings::default(),
            field_dump_stride: None,
        }
    }
}

impl SimulationConfig {
    /// Number of output samples, `round(duration * sample_rate)`.
    pub fn step_count(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    /// Convenience constructor for a plucked string at pitch `f0`.
    pub fn plucked(f0: f64, amplitude: f64, position: f64) -> Self {
        Self {
            string: StringParams::from_f0(f0),
            excitations: vec![ExcitationSpec::Pluck(PluckSpec {
                c0: amplitude,
                x_p: position,
                width: 0.2,
            })],
            ..Self::default()
        }
    }
}

/// Outcome of config validation: an empty violation list means the config is
/// usable as-is. Validation never mutates its input.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// All violations joined for use in error messages.
    pub fn joined(&self) -> String {
        self.violations.join("; ")
    }
}

/// Checks every declared constraint of `cfg` and reports all violations.
pub fn validate(cfg: &SimulationConfig) -> ValidationReport {
    let mut v = Vec::new();
    cfg.string.collect_violations(&mut v);
    if !(cfg.sample_rate > 0.0 && cfg.sample_rate.is_finite()) {
        v.push(format!(
            "sample_rate must be > 0 (got {})",
            cfg.sample_rate
        ));
    }
    if !(cfg.duration >= 0.0 && cfg.duration.is_finite()) {
        v.push(format!("duration must be >= 0 (got {})", cfg.duration));
    }
    if !(cfg.readout_position > 0.0 && cfg.readout_position < 1.0) {
        v.push(format!(
            "readout_position must lie strictly inside (0, 1) (got {})",
            cfg.readout_position
        ));
    }
    if cfg.interpolation_order < 1 {
        v.push("interpolation_order must be >= 1".to_string());
    }
    if !(cfg.solver.newton_tol > 0.0) {
        v.push(format!(
            "solver.newton_tol must be > 0 (got {})",
            cfg.solver.newton_tol
        ));
    }
    if cfg.solver.newton_max_iter < 1 {
        v.push("solver.newton_max_iter must be >= 1".to_string());
    }
    if cfg.field_dump_stride == Some(0) {
        v.push("field_dump_stride must be >= 1 when set".to_string());
    }
    for (i, exc) in cfg.excitations.iter().enumerate() {
        exc.collect_violations(cfg.duration, &mut |msg| {
            v.push(format!("excitations[{i}]: {msg}"))
        });
    }
    // Force-coupled excitations of the same kind must not be active at the
    // same time: their per-step scalar solves would alias one contact point.
    let bows: Vec<(f64, f64)> = cfg
        .excitations
        .iter()
        .filter_map(|e| match e {
            ExcitationSpec::Bow(b) => Some(b.active_window(cfg.duration)),
            _ => None,
        })
        .collect();
    let hammers: Vec<(f64, f64)> = cfg
        .excitations
        .iter()
        .filter_map(|e| match e {
            ExcitationSpec::Hammer(h) => Some(h.active_window(cfg.duration)),
            _ => None,
        })
        .collect();
    for (kind, wins) in [("bow", &bows), ("hammer", &hammers)] {
        for i in 0..wins.len() {
            for j in i + 1..wins.len() {
                let (a0, a1) = wins[i];
                let (b0, b1) = wins[j];
                if a0 < b1 && b0 < a1 {
                    v.push(format!(
                        "two {kind} excitations overlap in time ([{a0:.3}, {a1:.3}] and \
                         [{b0:.3}, {b1:.3}]); only one {kind} may act at a time"
                    ));
                }
            }
        }
    }
    ValidationReport { violations: v }
}

/// Sampling law for one parameter range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingLaw {
    #[default]
    Uniform,
    LogUniform,
}

/// Closed range with a sampling law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub law: SamplingLaw,
}

impl Range {
    pub const fn uniform(min: f64, max: f64) -> Self {
        Self {
            min,
            max,
            law: SamplingLaw::Uniform,
        }
    }

    pub const fn log_uniform(min: f64, max: f64) -> Self {
        Self {
            min,
            max,
            law: SamplingLaw::LogUniform,
        }
    }

    pub fn draw(&self, rng: &mut SampleRng) -> f64 {
        match self.law {
            SamplingLaw::Uniform => rng.uniform(self.min, self.max),
            SamplingLaw::LogUniform => rng.log_uniform(self.min, self.max),
        }
    }

    fn check(&self, name: &str, out: &mut Vec<String>) {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            out.push(format!(
                "{name}: range must satisfy min <= max (got [{}, {}])",
                self.min, self.max
            ));
        }
        if self.law == SamplingLaw::LogUniform && self.min <= 0.0 {
            out.push(format!(
                "{name}: log-uniform range requires min > 0 (got {})",
                self.min
            ));
        }
    }
}

/// Distribution over render configs for dataset generation.
///
/// Loss ranges and excitation control ranges are repo-chosen defaults; the
/// model itself fixes only the structural constraints (`alpha >= 1`,
/// `kappa >= 0`, losses nonnegative).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamDistribution {
    pub seed: u64,
    /// Relative weights for drawing the excitation kind
    /// (pluck, hammer, bow).
    pub kind_weights: [f64; 3],
    pub duration: f64,
    pub sample_rate: f64,
    pub theta: f64,

    pub f0: Range,
    pub kappa: Range,
    pub alpha: Range,
    pub sigma0: Range,
    pub sigma1: Range,

    pub pluck_amplitude: Range,
    pub pluck_position: Range,
    pub pluck_width: Range,

    pub hammer_position: Range,
    pub hammer_velocity: Range,
    pub hammer_omega: Range,
    pub hammer_alpha: Range,
    pub hammer_mass_ratio: Range,

    pub bow_position: Range,
    pub bow_force: Range,
    pub bow_velocity: Range,
    pub bow_sharpness: Range,
    pub bow_eps: Range,
    /// Bow release instant as a fraction of the render duration.
    pub bow_release: Range,
}

impl Default for ParamDistribution {
    fn default() -> Self {
        Self {
            seed: 0,
            kind_weights: [0.5, 0.3, 0.2],
            duration: 1.0,
            sample_rate: 48_000.0,
            theta: theta_default(),
            f0: Range::log_uniform(80.0, 600.0),
            kappa: Range::log_uniform(0.5, 10.0),
            alpha: Range::uniform(1.0, 4.0),
            sigma0: Range::log_uniform(0.5, 4.0),
            sigma1: Range::log_uniform(1e-3, 2e-2),
            pluck_amplitude: Range::log_uniform(1e-3, 4e-3),
            pluck_position: Range::uniform(0.1, 0.9),
            pluck_width: Range::uniform(0.1, 0.3),
            hammer_position: Range::uniform(0.1, 0.3),
            hammer_velocity: Range::log_uniform(0.3, 3.0),
            hammer_omega: Range::log_uniform(500.0, 2000.0),
            hammer_alpha: Range::uniform(1.5, 3.0),
            hammer_mass_ratio: Range::log_uniform(0.1, 10.0),
            bow_position: Range::uniform(0.05, 0.2),
            bow_force: Range::log_uniform(0.5, 8.0),
            bow_velocity: Range::uniform(0.05, 0.4),
            bow_sharpness: Range::log_uniform(20.0, 200.0),
            bow_eps: Range::uniform(0.05, 0.3),
            bow_release: Range::uniform(0.6, 0.9),
        }
    }
}

impl ParamDistribution {
    /// Checks range consistency and that sampled configs can pass
    /// `validate()`.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        for (name, r) in [
            ("f0", &self.f0),
            ("kappa", &self.kappa),
            ("alpha", &self.alpha),
            ("sigma0", &self.sigma0),
            ("sigma1", &self.sigma1),
            ("pluck_amplitude", &self.pluck_amplitude),
            ("pluck_position", &self.pluck_position),
            ("pluck_width", &self.pluck_width),
            ("hammer_position", &self.hammer_position),
            ("hammer_velocity", &self.hammer_velocity),
            ("hammer_omega", &self.hammer_omega),
            ("hammer_alpha", &self.hammer_alpha),
            ("hammer_mass_ratio", &self.hammer_mass_ratio),
            ("bow_position", &self.bow_position),
            ("bow_force", &self.bow_force),
            ("bow_velocity", &self.bow_velocity),
            ("bow_sharpness", &self.bow_sharpness),
            ("bow_eps", &self.bow_eps),
            ("bow_release", &self.bow_release),
        ] {
            r.check(name, &mut v);
        }
        if self.f0.min <= 0.0 {
            v.push("f0 range must be positive".to_string());
        }
        if self.kappa.min < 0.0 {
            v.push("kappa range must be nonnegative".to_string());
        }
        if self.alpha.min < 1.0 {
            v.push("alpha range must start at >= 1".to_string());
        }
        if self.kind_weights.iter().any(|w| *w < 0.0)
            || self.kind_weights.iter().sum::<f64>() <= 0.0
        {
            v.push("kind_weights must be nonnegative with positive sum".to_string());
        }
        if !(self.duration > 0.0) {
            v.push(format!("duration must be > 0 (got {})", self.duration));
        }
        if !(self.sample_rate > 0.0) {
            v.push(format!("sample_rate must be > 0 (got {})", self.sample_rate));
        }
        for (pos, name) in [
            (&self.pluck_position, "pluck_position"),
            (&self.hammer_position, "hammer_position"),
            (&self.bow_position, "bow_position"),
        ] {
            if pos.min <= 0.0 || pos.max >= 1.0 {
                v.push(format!("{name} must stay strictly inside (0, 1)"));
            }
        }
        if self.bow_eps.min < 0.0 || self.bow_eps.max > 1.0 {
            v.push("bow_eps must stay within [0, 1]".to_string());
        }
        ValidationReport { violations: v }
    }

    /// Draws the config for sample `index`. Pure in `(self, index)`: the
    /// same distribution and index always produce the same config.
    pub fn sample(&self, index: u64) -> SimulationConfig {
        let mut rng = SampleRng::for_sample(self.seed, index);
        let f0 = self.f0.draw(&mut rng);
        let kappa = self.kappa.draw(&mut rng);
        let alpha = self.alpha.draw(&mut rng);
        let sigma0 = self.sigma0.draw(&mut rng);
        let sigma1 = self.sigma1.draw(&mut rng);
        let kind = rng.pick_weighted(&self.kind_weights);

        let string = StringParams {
            gamma: 2.0 * f0,
            kappa,
            alpha,
            sigma0_t: sigma0,
            sigma1_t: sigma1,
            sigma0_l: sigma0,
            sigma1_l: sigma1,
            theta: self.theta,
        };

        let excitation = match kind {
            0 => {
                let x_p = self.pluck_position.draw(&mut rng);
                let width_cap = 2.0 * x_p.min(1.0 - x_p);
                ExcitationSpec::Pluck(PluckSpec {
                    c0: self.pluck_amplitude.draw(&mut rng),
                    x_p,
                    width: self.pluck_width.draw(&mut rng).min(width_cap),
                })
            }
            1 => ExcitationSpec::Hammer(HammerSpec {
                x_h: self.hammer_position.draw(&mut rng),
                u_h0: 0.0,
                v_h0: self.hammer_velocity.draw(&mut rng),
                mass_ratio: self.hammer_mass_ratio.draw(&mut rng),
                omega_h: self.hammer_omega.draw(&mut rng),
                alpha_h: self.hammer_alpha.draw(&mut rng),
                start_time: 0.0,
            }),
            _ => {
                let force = self.bow_force.draw(&mut rng);
                let release = self.bow_release.draw(&mut rng) * self.duration;
                // 10 ms attack and release ramps keep the force envelope
                // continuous, which the friction solve rewards with fewer
                // iterations.
                let ramp = 0.01;
                ExcitationSpec::Bow(BowSpec {
                    x_b: Envelope::constant(self.bow_position.draw(&mut rng)),
                    v_b: Envelope::constant(self.bow_velocity.draw(&mut rng)),
                    f_b: Envelope::from_points(vec![
                        (0.0, 0.0),
                        (ramp, force),
                        (release - ramp, force),
                        (release, 0.0),
                    ]),
                    a: self.bow_sharpness.draw(&mut rng),
                    eps: self.bow_eps.draw(&mut rng),
                })
            }
        };

        SimulationConfig {
            string,
            sample_rate: self.sample_rate,
            duration: self.duration,
            excitations: vec![excitation],
            ..SimulationConfig::default()
        }
    }

    /// Draws the first `n` configs in index order.
    pub fn sample_n(&self, n: usize) -> Vec<SimulationConfig> {
        (0..n as u64).map(|i| self.sample(i)).collect()
    }
}
