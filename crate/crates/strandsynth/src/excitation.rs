//! Excitation models: pluck initial conditions, the bow friction
//! characteristic with its per-step scalar solve, and the lumped-mass hammer.
//!
//! Plucks are pure initial conditions. Bow and hammer act through the force
//! vector of the time step: both reduce, after the unforced solve, to a
//! scalar nonlinear equation at the excitation point, which keeps the
//! coupling exact without re-assembling the system.

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Piecewise-linear control envelope over time, defined by sorted
/// `(time, value)` breakpoints. Constant before the first and after the last
/// breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub points: Vec<(f64, f64)>,
}

impl Envelope {
    pub fn constant(v: f64) -> Self {
        Self {
            points: vec![(0.0, v)],
        }
    }

    /// Builds an envelope, sorting breakpoints by time.
    pub fn from_points(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.is_empty() {
            points.push((0.0, 0.0));
        }
        Self { points }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        // Linear interpolation inside the segment containing t; coincident
        // breakpoint times produce a step (the later value wins from there).
        let i = pts.partition_point(|p| p.0 <= t);
        let (t0, v0) = pts[i - 1];
        let (t1, v1) = pts[i];
        if t1 == t0 {
            return v1;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn is_constant(&self) -> bool {
        self.points.iter().all(|p| p.1 == self.points[0].1)
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// Earliest and latest time at which the envelope can be nonzero,
    /// clamped to `[0, duration]`. Conservative (breakpoint granularity).
    fn support(&self, duration: f64) -> (f64, f64) {
        let n = self.points.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &(_, v)) in self.points.iter().enumerate() {
            if v != 0.0 {
                // A nonzero breakpoint spreads into both adjacent segments.
                let prev = if i == 0 { 0.0 } else { self.points[i - 1].0 };
                let next = if i == n - 1 {
                    duration
                } else {
                    self.points[i + 1].0
                };
                lo = lo.min(prev);
                hi = hi.max(next);
            }
        }
        if self.points[0].1 != 0.0 {
            lo = 0.0;
        }
        if self.points[n - 1].1 != 0.0 {
            hi = duration;
        }
        if lo > hi {
            (0.0, 0.0)
        } else {
            (lo.max(0.0), hi.min(duration))
        }
    }
}

// Mirror of the Deserialize impl below: a single breakpoint at t = 0
// serializes as its plain value, anything else as the breakpoint list.
impl Serialize for Envelope {
    fn serialize<S>(&self, serializer: S) -> Result<S::Ok, S::Error>
    where
        S: serde::Serializer,
    {
        if self.points.len() == 1 && self.points[0].0 == 0.0 {
            serializer.serialize_f64(self.points[0].1)
        } else {
            self.points.serialize(serializer)
        }
    }
}

// Accept either a plain number (constant envelope) or a breakpoint list.
impl<'de> Deserialize<'de> for Envelope {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Const(f64),
            Points(Vec<(f64, f64)>),
        }
        Ok(match Repr::deserialize(deserializer)? {
            Repr::Const(v) => Envelope::constant(v),
            Repr::Points(p) => Envelope::from_points(p),
        })
    }
}

/// Pluck: a raised-cosine initial displacement released from rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluckSpec {
    /// Peak amplitude in spatial units.
    pub c0: f64,
    /// Peak position as a fraction of string length.
    pub x_p: f64,
    /// Support width as a fraction of string length.
    #[serde(default = "default_pluck_width")]
    pub width: f64,
}

fn default_pluck_width() -> f64 {
    0.2
}

/// Bow with time-varying position, velocity, and downward force, plus the
/// friction curve's shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowSpec {
    /// Contact position envelope, fractions of string length.
    pub x_b: Envelope,
    /// Bow velocity envelope, spatial units per second.
    pub v_b: Envelope,
    /// Bow force envelope; zero force deactivates the bow exactly.
    pub f_b: Envelope,
    /// Friction sharpness; larger values make the stick-slip transition
    /// harder.
    #[serde(default = "default_bow_a")]
    pub a: f64,
    /// Sliding-friction floor in [0, 1].
    #[serde(default = "default_bow_eps")]
    pub eps: f64,
}

fn default_bow_a() -> f64 {
    100.0
}

fn default_bow_eps() -> f64 {
    0.1
}

impl BowSpec {
    /// Time window in which the bow can exert force.
    pub fn active_window(&self, duration: f64) -> (f64, f64) {
        self.f_b.support(duration)
    }
}

/// Hammer: a lumped mass in unilateral contact with the string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HammerSpec {
    /// Strike position as a fraction of string length.
    pub x_h: f64,
    /// Initial hammer displacement (positive = into the string).
    #[serde(default)]
    pub u_h0: f64,
    /// Initial hammer velocity, spatial units per second.
    pub v_h0: f64,
    /// Hammer-to-string mass ratio.
    pub mass_ratio: f64,
    /// Contact stiffness parameter, 1/s.
    pub omega_h: f64,
    /// Contact nonlinearity exponent, >= 1 (1 = linear spring).
    pub alpha_h: f64,
    /// Time at which the hammer is launched.
    #[serde(default)]
    pub start_time: f64,
}

impl HammerSpec {
    /// The hammer stays live from launch (ballistic flight and possible
    /// recontact) to the end of the render.
    pub fn active_window(&self, duration: f64) -> (f64, f64) {
        (self.start_time.min(duration), duration)
    }
}

/// Hammer degree of freedom advanced alongside the string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HammerState {
    pub u_h_prev: f64,
    pub u_h_curr: f64,
    /// Contact force applied at the last step; always >= 0.
    pub last_force: f64,
}

impl HammerState {
    /// Launch state: position `u_h0` a step ago, `u_h0 + k v_h0` now.
    pub fn launch(spec: &HammerSpec, k: f64) -> Self {
        Self {
            u_h_prev: spec.u_h0,
            u_h_curr: spec.u_h0 + k * spec.v_h0,
            last_force: 0.0,
        }
    }
}

/// One excitation in a render config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExcitationSpec {
    Pluck(PluckSpec),
    Hammer(HammerSpec),
    Bow(BowSpec),
}

impl ExcitationSpec {
    /// Reports constraint violations through `emit`.
    pub fn collect_violations(&self, duration: f64, emit: &mut impl FnMut(String)) {
        match self {
            ExcitationSpec::Pluck(p) => {
                if !(p.c0 > 0.0 && p.c0.is_finite()) {
                    emit(format!("pluck amplitude c0 must be > 0 (got {})", p.c0));
                }
                if !(p.x_p > 0.0 && p.x_p < 1.0) {
                    emit(format!(
                        "pluck position x_p must lie strictly inside (0, 1) (got {})",
                        p.x_p
                    ));
                }
                let cap = 2.0 * p.x_p.min(1.0 - p.x_p);
                if !(p.width > 0.0 && p.width <= cap) {
                    emit(format!(
                        "pluck width must lie in (0, {cap:.4}] so the support stays \
                         inside the string (got {})",
                        p.width
                    ));
                }
            }
            ExcitationSpec::Hammer(h) => {
                if !(h.x_h > 0.0 && h.x_h < 1.0) {
                    emit(format!(
                        "hammer position x_h must lie strictly inside (0, 1) (got {})",
                        h.x_h
                    ));
                }
                if !(h.mass_ratio > 0.0) {
                    emit(format!(
                        "hammer mass_ratio must be > 0 (got {})",
                        h.mass_ratio
                    ));
                }
                if !(h.omega_h > 0.0) {
                    emit(format!("hammer omega_h must be > 0 (got {})", h.omega_h));
                }
                if !(h.alpha_h >= 1.0) {
                    emit(format!("hammer alpha_h must be >= 1 (got {})", h.alpha_h));
                }
                if !(h.start_time >= 0.0) {
                    emit(format!(
                        "hammer start_time must be >= 0 (got {})",
                        h.start_time
                    ));
                }
                if !(h.u_h0.is_finite() && h.v_h0.is_finite()) {
                    emit("hammer initial state must be finite".to_string());
                }
            }
            ExcitationSpec::Bow(b) => {
                if b.f_b.values().any(|v| v < 0.0) {
                    emit("bow force envelope must be >= 0 everywhere".to_string());
                }
                if b.x_b.values().any(|x| !(x > 0.0 && x < 1.0)) {
                    emit("bow position envelope must stay strictly inside (0, 1)".to_string());
                }
                if !(b.a >= 0.0) {
                    emit(format!("bow friction sharpness a must be >= 0 (got {})", b.a));
                }
                if !(b.eps >= 0.0 && b.eps <= 1.0) {
                    emit(format!("bow eps must lie in [0, 1] (got {})", b.eps));
                }
                for env in [&b.x_b, &b.v_b, &b.f_b] {
                    if env
                        .points
                        .iter()
                        .any(|(t, v)| !t.is_finite() || !v.is_finite())
                    {
                        emit("bow envelopes must contain finite breakpoints".to_string());
                    }
                }
                let _ = duration;
            }
        }
    }
}

/// Samples the pluck shape on transverse grid points: a raised cosine of
/// the given width centered at `x_p`, rescaled so the sampled peak equals
/// `c0` exactly (the nominal peak rarely lands on a grid point).
pub fn pluck_shape(spec: &PluckSpec, grid: &Grid) -> Vec<f64> {
    let m = grid.m_t();
    let mut u = vec![0.0; m];
    let half = spec.width / 2.0;
    for (q, v) in u.iter_mut().enumerate() {
        let x = (q as f64 + 1.0) * grid.h_t;
        let d = x - spec.x_p;
        if d.abs() < half {
            *v = 0.5 * (1.0 + (std::f64::consts::PI * d / half).cos());
        }
    }
    let peak = u.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        let scale = spec.c0 / peak;
        for v in &mut u {
            *v *= scale;
        }
    }
    u
}

/// Initial conditions for a pluck: displaced and at rest, so both history
/// states equal the shape; the longitudinal subsystem starts at zero.
pub fn pluck_init(spec: &PluckSpec, grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let mut w0 = pluck_shape(spec, grid);
    w0.extend(std::iter::repeat(0.0).take(grid.m_l()));
    (w0.clone(), w0)
}

/// Friction characteristic `phi(v) = sign(v) (eps + (1 - eps) e^(-a |v|))`,
/// with `sign(0) = 0`. Odd and bounded by 1 for `eps` in [0, 1].
pub fn friction_curve(v_rel: f64, a: f64, eps: f64) -> f64 {
    if v_rel == 0.0 {
        return 0.0;
    }
    v_rel.signum() * (eps + (1.0 - eps) * (-a * v_rel.abs()).exp())
}

/// Derivative of the friction characteristic away from zero.
pub fn friction_curve_deriv(v_rel: f64, a: f64, eps: f64) -> f64 {
    -a * (1.0 - eps) * (-a * v_rel.abs()).exp()
}

/// Which force-coupled excitations are live at time `t`. Plucks never appear
/// (they are initial conditions); a bow is live while its force envelope is
/// nonzero; a hammer is live from its launch time onward.
pub fn excitation_schedule(excitations: &[ExcitationSpec], t: f64) -> Vec<usize> {
    excitations
        .iter()
        .enumerate()
        .filter_map(|(i, e)| match e {
            ExcitationSpec::Pluck(_) => None,
            ExcitationSpec::Bow(b) => (b.f_b.eval(t) > 0.0).then_some(i),
            ExcitationSpec::Hammer(h) => (t >= h.start_time).then_some(i),
        })
        .collect()
}

/// Converged bow friction solve.
#[derive(Debug, Clone, Copy)]
pub struct BowSolve {
    /// Relative velocity between string and bow at the contact point.
    pub v_rel: f64,
    /// Effective friction factor actually applied. Equals
    /// `friction_curve(v_rel)` when slipping; lies inside the curve's jump
    /// at zero when sticking.
    pub phi_eff: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the scalar friction equation `v + mu phi(v) = d`.
///
/// `d` is the relative velocity the unforced step would produce and
/// `mu = k F_b rho / 2 >= 0` collects the step's response to a unit force at
/// the bow point. When `|d| <= mu` no slipping velocity balances the
/// equation (the friction jump at zero absorbs the demand): the bow sticks,
/// `v = 0`, and the effective friction factor is `d / mu`. Otherwise the
/// root has the sign of `d` and lies in `(0, d]`; safeguarded Newton with a
/// bisection fallback handles the curve's steep, non-monotone slope.
pub fn solve_bow_velocity(
    d: f64,
    mu: f64,
    a: f64,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<BowSolve, BowSolve> {
    if mu <= 0.0 {
        // No force or no response at the contact point: velocity is the
        // unforced one and the friction factor is evaluated directly.
        return Ok(BowSolve {
            v_rel: d,
            phi_eff: friction_curve(d, a, eps),
            iterations: 0,
            residual: 0.0,
        });
    }
    if d.abs() <= mu {
        return Ok(BowSolve {
            v_rel: 0.0,
            phi_eff: d / mu,
            iterations: 0,
            residual: 0.0,
        });
    }
    // Reduce to the positive branch: w solves w + mu phi(w) = |d|, w > 0.
    let s = d.signum();
    let dd = d.abs();
    let mut lo = 0.0;
    let mut hi = dd;
    let mut w = (dd - mu).max(0.5 * dd);
    let mut g = 0.0;
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let phi = eps + (1.0 - eps) * (-a * w).exp();
        g = w + mu * phi - dd;
        if g.abs() <= tol {
            return Ok(BowSolve {
                v_rel: s * w,
                phi_eff: s * phi,
                iterations,
                residual: g.abs(),
            });
        }
        if g < 0.0 {
            lo = w;
        } else {
            hi = w;
        }
        let gp = 1.0 - mu * a * (1.0 - eps) * (-a * w).exp();
        let mut next = if gp.abs() > 1e-12 { w - g / gp } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        w = next;
    }
    Err(BowSolve {
        v_rel: s * w,
        phi_eff: s * (eps + (1.0 - eps) * (-a * w).exp()),
        iterations,
        residual: g.abs(),
    })
}

/// Contact force coefficient `c = omega^(1 + alpha) [d > 0] d^(alpha - 1)`
/// evaluated at the explicit (current-step) compression `d`. The force
/// itself is `c` times the time-averaged compression.
pub fn hammer_force_coeff(spec: &HammerSpec, d_curr: f64) -> f64 {
    if d_curr <= 0.0 {
        return 0.0;
    }
    let pow = if spec.alpha_h == 1.0 {
        1.0
    } else {
        d_curr.powf(spec.alpha_h - 1.0)
    };
    spec.omega_h.powf(1.0 + spec.alpha_h) * pow
}
