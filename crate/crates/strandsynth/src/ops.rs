//! Banded spatial operators, cross-grid interpolants, and point
//! readout/spreading rows.
//!
//! All scheme matrices are narrow-banded: second and fourth differences,
//! neighbor averaging, and the forward/backward difference pair whose
//! product approximates the Laplacian. State vectors hold interior points
//! only (fixed ends), so boundary columns are dropped rather than stored.
//!
//! Every operator, the bidiagonal pair included, is the square truncation to
//! interior points, so `d_xp = -d_xm^T` holds exactly and the slope vector
//! `d_xm u` has one entry per interior point. The product `d_xp * d_xm`
//! reproduces `d_xx` except in the last diagonal entry, where the dropped
//! end interval leaves it one `1/h^2` short; long nonlinear runs are stable
//! under this truncation, while widening the pair to cover both end
//! intervals was observed to destabilize them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// End closure of the biharmonic operator. The second difference never needs
/// a ghost point (fixed ends suffice); the fourth difference does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryClosure {
    /// Ghost reflection `u[-1] = u[1]` (zero end slope). Matches the
    /// boundary assumption behind the stiffness-shifted mode formula; the
    /// default for renders.
    Clamped,
    /// Ghost reflection `u[-1] = -u[1]` (zero end curvature), equivalent to
    /// `d_xxxx = d_xx^2` entrywise.
    SimplySupported,
}

/// Rectangular banded matrix stored as diagonals.
///
/// `diags[b][r]` holds the entry at `(r, r + offsets[b])`; slots whose column
/// falls outside `[0, cols)` are dead and stay zero. Offsets are strictly
/// ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    rows: usize,
    cols: usize,
    offsets: Vec<i64>,
    diags: Vec<Vec<f64>>,
}

impl BandedMatrix {
    /// Zero matrix with the given band structure.
    pub fn new(rows: usize, cols: usize, mut offsets: Vec<i64>) -> Self {
        offsets.sort_unstable();
        offsets.dedup();
        let diags = offsets.iter().map(|_| vec![0.0; rows]).collect();
        Self {
            rows,
            cols,
            offsets,
            diags,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n, n, vec![0]);
        for r in 0..n {
            m.diags[0][r] = 1.0;
        }
        m
    }

    /// Square matrix from a constant stencil given as `(offset, value)`
    /// pairs; rows whose stencil exits the interior are truncated (fixed
    /// ends).
    pub fn from_stencil(n: usize, stencil: &[(i64, f64)]) -> Self {
        let mut m = Self::new(n, n, stencil.iter().map(|(o, _)| *o).collect());
        for &(off, val) in stencil {
            let b = m.band_index(off).expect("offset just inserted");
            for r in 0..n {
                let c = r as i64 + off;
                if c >= 0 && (c as usize) < n {
                    m.diags[b][r] = val;
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    fn band_index(&self, off: i64) -> Option<usize> {
        self.offsets.binary_search(&off).ok()
    }

    fn in_range(&self, r: usize, off: i64) -> bool {
        let c = r as i64 + off;
        c >= 0 && (c as usize) < self.cols
    }

    /// Entry at `(r, c)`; zero off the band.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index out of range");
        match self.band_index(c as i64 - r as i64) {
            Some(b) => self.diags[b][r],
            None => 0.0,
        }
    }

    /// Sets the entry at `(r, c)`, which must lie on an existing band.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let b = self
            .band_index(c as i64 - r as i64)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not on any band"));
        assert!(r < self.rows && c < self.cols, "index out of range");
        self.diags[b][r] = v;
    }

    /// Adds `v` to the entry at `(r, c)`, which must lie on an existing band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let b = self
            .band_index(c as i64 - r as i64)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not on any band"));
        assert!(r < self.rows && c < self.cols, "index out of range");
        self.diags[b][r] += v;
    }

    /// Structural entries in row-major order, including stored zeros.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            self.offsets.iter().enumerate().filter_map(move |(b, &off)| {
                if self.in_range(r, off) {
                    Some((r, (r as i64 + off) as usize, self.diags[b][r]))
                } else {
                    None
                }
            })
        })
    }

    /// `y = A x`. Panics on dimension mismatch.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "apply: input length != cols");
        assert_eq!(y.len(), self.rows, "apply: output length != rows");
        y.fill(0.0);
        for (b, &off) in self.offsets.iter().enumerate() {
            let d = &self.diags[b];
            let lo = (-off).max(0) as usize;
            let hi = self.rows.min((self.cols as i64 - off).max(0) as usize);
            for r in lo..hi {
                y[r] += d[r] * x[(r as i64 + off) as usize];
            }
        }
    }

    /// `y += s * A x`.
    pub fn apply_add_scaled(&self, x: &[f64], s: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "apply: input length != cols");
        assert_eq!(y.len(), self.rows, "apply: output length != rows");
        for (b, &off) in self.offsets.iter().enumerate() {
            let d = &self.diags[b];
            let lo = (-off).max(0) as usize;
            let hi = self.rows.min((self.cols as i64 - off).max(0) as usize);
            for r in lo..hi {
                y[r] += s * d[r] * x[(r as i64 + off) as usize];
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.entries() {
            dense[r][c] = v;
        }
        dense
    }

    pub fn transpose(&self) -> BandedMatrix {
        let mut out = BandedMatrix::new(
            self.cols,
            self.rows,
            self.offsets.iter().map(|o| -o).collect(),
        );
        for (r, c, v) in self.entries() {
            out.set(c, r, v);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> BandedMatrix {
        let mut out = self.clone();
        for d in &mut out.diags {
            for v in d.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// In-place `A <- diag(d) A` (row scaling).
    pub fn scale_rows(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.rows, "scale_rows: length != rows");
        for diag in &mut self.diags {
            for (r, v) in diag.iter_mut().enumerate() {
                *v *= d[r];
            }
        }
    }

    /// Entrywise sum; the result's bands are the union of both operands'.
    pub fn add_matrix(&self, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.rows, other.rows, "add: row mismatch");
        assert_eq!(self.cols, other.cols, "add: col mismatch");
        let mut offsets = self.offsets.clone();
        offsets.extend_from_slice(&other.offsets);
        let mut out = BandedMatrix::new(self.rows, self.cols, offsets);
        for m in [self, other] {
            for (b, &off) in m.offsets.iter().enumerate() {
                let ob = out.band_index(off).expect("union contains both");
                for r in 0..m.rows {
                    if m.in_range(r, off) {
                        out.diags[ob][r] += m.diags[b][r];
                    }
                }
            }
        }
        out
    }

    /// Banded matrix product. Cost is O(rows * bands^2); all scheme products
    /// stay narrow, so this is cheap enough to run per time step.
    pub fn matmul(&self, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimension mismatch");
        let mut offsets: Vec<i64> = Vec::with_capacity(self.offsets.len() * other.offsets.len());
        for &o1 in &self.offsets {
            for &o2 in &other.offsets {
                offsets.push(o1 + o2);
            }
        }
        let mut out = BandedMatrix::new(self.rows, other.cols, offsets);
        for (b1, &o1) in self.offsets.iter().enumerate() {
            for (b2, &o2) in other.offsets.iter().enumerate() {
                let ob = out.band_index(o1 + o2).expect("union contains sum");
                let d1 = &self.diags[b1];
                let d2 = &other.diags[b2];
                for r in 0..self.rows {
                    let mid = r as i64 + o1;
                    if mid < 0 || mid as usize >= self.cols {
                        continue;
                    }
                    let c = mid + o2;
                    if c < 0 || c as usize >= other.cols {
                        continue;
                    }
                    out.diags[ob][r] += d1[r] * d2[mid as usize];
                }
            }
        }
        out
    }

    /// Dense plain-text dump (one row per line, space-separated), for
    /// inspection and cross-implementation diffing.
    pub fn dump_dense_text(&self) -> String {
        let mut s = String::new();
        for row in self.to_dense() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Sparse interpolation/spreading row: `weights[i]` multiplies state index
/// `start + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpRow {
    pub start: usize,
    pub weights: Vec<f64>,
}

impl InterpRow {
    /// Reads the off-grid value: dot product with the state.
    pub fn dot(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w * v[self.start + i];
        }
        acc
    }

    /// Accumulates `s * weights` into `v` (spreading a point value).
    pub fn add_scaled_into(&self, s: f64, v: &mut [f64]) {
        for (i, w) in self.weights.iter().enumerate() {
            v[self.start + i] += s * w;
        }
    }

    /// Row vector as a 1 x m banded matrix, for assembling force columns.
    pub fn to_full(&self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        self.add_scaled_into(1.0, &mut v);
        v
    }
}

fn lagrange_weights(x: f64, nodes: &[f64]) -> Vec<f64> {
    let mut w = vec![1.0; nodes.len()];
    for (j, wj) in w.iter_mut().enumerate() {
        for (m, &xm) in nodes.iter().enumerate() {
            if m != j {
                *wj *= (x - xm) / (nodes[j] - xm);
            }
        }
    }
    w
}

/// First node of a centered (p+1)-point window around `u` (in node units),
/// clamped to `[0, last_start]`.
fn window_start(u: f64, p: usize, last_start: i64) -> usize {
    let s = if p % 2 == 1 {
        u.floor() as i64 - ((p as i64 - 1) / 2)
    } else {
        u.round() as i64 - (p as i64 / 2)
    };
    s.clamp(0, last_start) as usize
}

/// Lagrange row reading position `x` from interior values of a grid with
/// `n` intervals of spacing `h` and fixed (zero) ends. Returned indices are
/// 0-based interior indices (physical point j maps to j - 1).
pub(crate) fn interior_interp_row(x: f64, h: f64, n: usize, p: usize) -> InterpRow {
    assert!(p >= 1 && p <= n, "interpolation order too large for grid");
    let s = window_start(x / h, p, (n - p) as i64);
    let nodes: Vec<f64> = (s..=s + p).map(|j| j as f64 * h).collect();
    let w = lagrange_weights(x, &nodes);
    // Boundary nodes carry the value 0; drop their columns.
    let first = s.max(1);
    let last = (s + p).min(n - 1);
    InterpRow {
        start: first - 1,
        weights: (first..=last).map(|j| w[j - s]).collect(),
    }
}

fn rows_to_banded(rows: Vec<InterpRow>, n_rows: usize, n_cols: usize) -> BandedMatrix {
    let mut offsets = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for i in 0..row.weights.len() {
            offsets.push((row.start + i) as i64 - r as i64);
        }
    }
    let mut out = BandedMatrix::new(n_rows, n_cols, offsets);
    for (r, row) in rows.iter().enumerate() {
        for (i, &w) in row.weights.iter().enumerate() {
            out.set(r, row.start + i, w);
        }
    }
    out
}

/// Which subsystem a readout or excitation position refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Transverse,
    Longitudinal,
}

/// Difference and averaging operators for one subsystem, on interior points.
#[derive(Debug, Clone)]
pub struct SubOps {
    /// Second difference, (n-1)^2 tridiagonal.
    pub d_xx: BandedMatrix,
    /// Fourth difference under the chosen end closure, (n-1)^2
    /// pentadiagonal.
    pub d_xxxx: BandedMatrix,
    /// Forward difference on interior points, (n-1)^2 upper bidiagonal,
    /// `-d_xm^T`.
    pub d_xp: BandedMatrix,
    /// Backward difference on interior points, (n-1)^2 lower bidiagonal.
    pub d_xm: BandedMatrix,
    /// Neighbor average (the spatial averaging operator), (n-1)^2.
    pub m_xdot: BandedMatrix,
}

fn build_subops(n: usize, h: f64, closure: BoundaryClosure) -> SubOps {
    let m = n - 1;
    let inv_h = 1.0 / h;
    let inv_h2 = inv_h * inv_h;

    let d_xx = BandedMatrix::from_stencil(m, &[(-1, inv_h2), (0, -2.0 * inv_h2), (1, inv_h2)]);

    let mut d_xp = BandedMatrix::new(m, m, vec![0, 1]);
    let mut d_xm = BandedMatrix::new(m, m, vec![-1, 0]);
    for q in 0..m {
        d_xp.set(q, q, -inv_h);
        d_xm.set(q, q, inv_h);
        if q + 1 < m {
            d_xp.set(q, q + 1, inv_h);
            d_xm.set(q + 1, q, -inv_h);
        }
    }

    let mut d_xxxx = d_xx.matmul(&d_xx);
    if closure == BoundaryClosure::Clamped {
        // Ghost u[-1] = +u[1] instead of -u[1]: the (1, -4, 6, -4, 1)/h^4
        // stencil's out-of-domain tap flips sign, raising both end diagonal
        // entries by 2/h^4 relative to the squared Laplacian.
        let corner = 2.0 * inv_h2 * inv_h2;
        d_xxxx.add(0, 0, corner);
        d_xxxx.add(m - 1, m - 1, corner);
    }

    let m_xdot = BandedMatrix::from_stencil(m, &[(-1, 0.5), (1, 0.5)]);

    SubOps {
        d_xx,
        d_xxxx,
        d_xp,
        d_xm,
        m_xdot,
    }
}

/// All spatial operators for one grid, immutable after construction.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub t: SubOps,
    pub l: SubOps,
    /// Point-space upsampling interpolant, longitudinal values read at
    /// transverse interior points, (n_t - 1) x (n_l - 1).
    pub interp_l_to_t: BandedMatrix,
    /// Point-space downsampling interpolant, transverse values read at
    /// longitudinal interior points, (n_l - 1) x (n_t - 1).
    pub interp_t_to_l: BandedMatrix,
    grid: Grid,
    order: usize,
}

/// Builds every operator the scheme needs. `order` is the Lagrange
/// interpolation order `p >= 1` shared by readout, spreading, and the
/// cross-grid interpolants.
pub fn build_operators(grid: &Grid, order: usize, closure: BoundaryClosure) -> Result<OperatorSet> {
    if order < 1 {
        return Err(Error::InvalidParam(
            "interpolation_order must be >= 1".to_string(),
        ));
    }
    let max_p = grid.n_t.min(grid.n_l) - 1;
    if order > max_p {
        return Err(Error::InvalidParam(format!(
            "interpolation_order {order} exceeds what the grid supports \
             (max {max_p} for n_t = {}, n_l = {})",
            grid.n_t, grid.n_l
        )));
    }

    let t = build_subops(grid.n_t, grid.h_t, closure);
    let l = build_subops(grid.n_l, grid.h_l, closure);

    let p = order;
    let interp_l_to_t = rows_to_banded(
        (0..grid.m_t())
            .map(|q| interior_interp_row((q as f64 + 1.0) * grid.h_t, grid.h_l, grid.n_l, p))
            .collect(),
        grid.m_t(),
        grid.m_l(),
    );
    let interp_t_to_l = rows_to_banded(
        (0..grid.m_l())
            .map(|q| interior_interp_row((q as f64 + 1.0) * grid.h_l, grid.h_t, grid.n_t, p))
            .collect(),
        grid.m_l(),
        grid.m_t(),
    );
    Ok(OperatorSet {
        t,
        l,
        interp_l_to_t,
        interp_t_to_l,
        grid: *grid,
        order,
    })
}

impl OperatorSet {
    /// Interpolation row `I_p(x)`: reads the subsystem's displacement at
    /// position `x` (fraction of string length).
    pub fn read(&self, x: f64, sub: Subsystem) -> InterpRow {
        match sub {
            Subsystem::Transverse => {
                interior_interp_row(x, self.grid.h_t, self.grid.n_t, self.order)
            }
            Subsystem::Longitudinal => {
                interior_interp_row(x, self.grid.h_l, self.grid.n_l, self.order)
            }
        }
    }

    /// Spreading row `J_p(x) = I_p(x)^T / h`: distributes a point force onto
    /// the grid so that reading and spreading stay adjoint.
    pub fn spread(&self, x: f64, sub: Subsystem) -> InterpRow {
        let h = match sub {
            Subsystem::Transverse => self.grid.h_t,
            Subsystem::Longitudinal => self.grid.h_l,
        };
        let mut row = self.read(x, sub);
        for w in &mut row.weights {
            *w /= h;
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_start_centers_odd_orders_on_the_containing_interval() {
        // p = 3 around u = 4.3: nodes 3..6.
        assert_eq!(window_start(4.3, 3, 12), 3);
        // p = 1: the containing interval itself.
        assert_eq!(window_start(4.3, 1, 14), 4);
    }

    #[test]
    fn window_start_centers_even_orders_on_the_nearest_node() {
        // p = 2 around u = 4.3: nearest node 4, window 3..5.
        assert_eq!(window_start(4.3, 2, 12), 3);
        assert_eq!(window_start(4.7, 2, 12), 4);
    }

    #[test]
    fn window_start_clamps_to_the_grid() {
        assert_eq!(window_start(0.2, 3, 12), 0);
        assert_eq!(window_start(14.9, 3, 12), 12);
    }

    #[test]
    fn lagrange_weights_reproduce_polynomials_up_to_order() {
        // Cubic weights integrate a cubic exactly.
        let nodes = [0.0, 0.1, 0.2, 0.3];
        let x = 0.137;
        let w = lagrange_weights(x, &nodes);
        let f = |t: f64| 2.0 - t + 3.0 * t * t - 5.0 * t * t * t;
        let interp: f64 = w.iter().zip(&nodes).map(|(wi, &t)| wi * f(t)).sum();
        assert!((interp - f(x)).abs() < 1e-12);
    }

    #[test]
    fn lagrange_weights_sum_to_one() {
        let nodes = [1.0, 2.0, 3.0, 4.0, 5.0];
        for &x in &[1.2, 2.9, 3.5, 4.8] {
            let s: f64 = lagrange_weights(x, &nodes).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x = {x}: sum {s}");
        }
    }

    #[test]
    fn interior_row_drops_boundary_columns() {
        // Reading near the left end clips the window at node 0, whose value
        // is fixed to zero, so the returned row starts at interior index 0.
        let row = interior_interp_row(0.01, 0.1, 10, 3);
        assert_eq!(row.start, 0);
        assert_eq!(row.weights.len(), 3);
        // The dropped node carried almost all the weight; the rest is small.
        let s: f64 = row.weights.iter().sum();
        assert!(s.abs() < 0.6, "interior weight sum {s}");
    }

    #[test]
    fn interior_row_at_a_node_is_a_delta() {
        let row = interior_interp_row(0.4, 0.1, 10, 3);
        let full = row.to_full(9);
        for (j, v) in full.iter().enumerate() {
            let expect = if j == 3 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12, "index {j}: {v}");
        }
    }
}
