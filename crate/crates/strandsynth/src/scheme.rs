//! Per-step block assembly, the linear step solvers, and the render loop.
//!
//! Each time step advances the stacked interior state `w = [u; zeta]` through
//!
//! ```text
//! A(u_n) w_next = -(B(u_n) w_curr + C(u_n) w_prev) - gamma_n
//! ```
//!
//! where only the slope-dependent coupling blocks of A, B, and C change
//! between steps. Excitation forces enter through `gamma_n`; because they act
//! at a single point, the forced solve reduces to the unforced solution plus
//! a scalar multiple of `A^-1 e` for the spread column `e`, which lets the
//! bow and hammer nonlinearities collapse to scalar equations per step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::{
    excitation_schedule, hammer_force_coeff, pluck_shape, solve_bow_velocity, ExcitationSpec,
    HammerState,
};
use crate::grid::Grid;
use crate::linalg::{BandedSystem, DenseLu};
use crate::ops::{build_operators, BandedMatrix, InterpRow, OperatorSet, Subsystem};
use crate::params::{validate, LinearSolverKind, SimulationConfig, StringParams};

/// Time-stepping state: two history vectors over the stacked interior grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StringState {
    pub w_prev: Vec<f64>,
    pub w_curr: Vec<f64>,
    /// Time index of `w_curr`.
    pub step: usize,
}

impl StringState {
    /// Zero state of the correct stacked length for `grid`.
    pub fn zeros(grid: &Grid) -> Self {
        let m = grid.m_t() + grid.m_l();
        Self {
            w_prev: vec![0.0; m],
            w_curr: vec![0.0; m],
            step: 1,
        }
    }

    pub fn from_initial(w0: Vec<f64>, w1: Vec<f64>) -> Self {
        assert_eq!(w0.len(), w1.len(), "history vectors must match in length");
        Self {
            w_prev: w0,
            w_curr: w1,
            step: 1,
        }
    }
}

/// Slope-dependent coupling blocks and their cached constant factors.
#[derive(Debug, Clone)]
struct Coupling {
    /// `-phi^2 d_xp` on the transverse grid, m_t x m_t.
    left_t: BandedMatrix,
    /// `d_xm` on the transverse grid, m_t x m_t.
    right_v: BandedMatrix,
    /// `d_xm * interp_l_to_t`, m_t x m_l.
    right_tl: BandedMatrix,
    /// `-phi^2 d_xp_l * interp_t_to_l`, m_l x m_t.
    left_l: BandedMatrix,
    /// Backward slopes of the current transverse state, length m_t.
    lambda: Vec<f64>,
    /// `left_t diag(lambda^2) right_v`, m_t x m_t.
    v_t: BandedMatrix,
    /// `left_t diag(lambda) right_tl`, m_t x m_l.
    k_tl: BandedMatrix,
    /// `left_l diag(lambda) right_v`, m_l x m_t.
    k_lt: BandedMatrix,
}

impl Coupling {
    fn refresh(&mut self, u: &[f64]) {
        self.right_v.apply_into(u, &mut self.lambda);
        let lambda_sq: Vec<f64> = self.lambda.iter().map(|l| l * l).collect();
        let mut rv = self.right_v.clone();
        rv.scale_rows(&lambda_sq);
        self.v_t = self.left_t.matmul(&rv);
        let mut rtl = self.right_tl.clone();
        rtl.scale_rows(&self.lambda);
        self.k_tl = self.left_t.matmul(&rtl);
        let mut rv2 = self.right_v.clone();
        rv2.scale_rows(&self.lambda);
        self.k_lt = self.left_l.matmul(&rv2);
    }
}

/// The per-step block system. Constant blocks are built once; `refresh`
/// rebuilds only what depends on the current slope diagonal.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    grid: Grid,
    phi2: f64,
    revision: u64,
    /// `theta I + (1 - theta) M_x` on the transverse grid.
    theta_op: BandedMatrix,
    /// Transverse A block without the slope term.
    a_tt_const: BandedMatrix,
    /// Transverse C block without the slope term (loss signs flipped).
    c_tt_const: BandedMatrix,
    /// `-2 theta_op - gamma^2 k^2 d_xx + kappa^2 k^2 d_xxxx`.
    b_tt: BandedMatrix,
    a_ll: BandedMatrix,
    c_ll: BandedMatrix,
    /// `-2 I - alpha^2 gamma^2 k^2 d_xx_l`.
    b_ll: BandedMatrix,
    /// Present only when `phi2 != 0` (`alpha > 1`).
    coupling: Option<Coupling>,
}

impl BlockSystem {
    pub fn new(ops: &OperatorSet, params: &StringParams, grid: &Grid) -> Self {
        let m_t = grid.m_t();
        let m_l = grid.m_l();
        let k = grid.k;
        let g2k2 = params.gamma * params.gamma * k * k;

        let ident_t = BandedMatrix::identity(m_t);
        let ident_l = BandedMatrix::identity(m_l);
        let theta_op = ident_t
            .scaled(params.theta)
            .add_matrix(&ops.t.m_xdot.scaled(1.0 - params.theta));

        let g_t = ops.t.d_xx.scaled(g2k2);
        let s_t = ops.t.d_xxxx.scaled(params.kappa * params.kappa * k * k);
        let loss_t = ident_t
            .scaled(2.0 * params.sigma0_t * k)
            .add_matrix(&ops.t.d_xx.scaled(-2.0 * params.sigma1_t * k));
        let a_tt_const = theta_op.add_matrix(&loss_t);
        let c_tt_const = theta_op.add_matrix(&loss_t.scaled(-1.0));
        let b_tt = theta_op
            .scaled(-2.0)
            .add_matrix(&g_t.scaled(-1.0))
            .add_matrix(&s_t);

        let loss_l = ident_l
            .scaled(2.0 * params.sigma0_l * k)
            .add_matrix(&ops.l.d_xx.scaled(-2.0 * params.sigma1_l * k));
        let a_ll = ident_l.add_matrix(&loss_l);
        let c_ll = ident_l.add_matrix(&loss_l.scaled(-1.0));
        let b_ll = ident_l
            .scaled(-2.0)
            .add_matrix(&ops.l.d_xx.scaled(-params.alpha * params.alpha * g2k2));

        let phi2 = params.phi2(k);
        let coupling = (phi2 != 0.0).then(|| {
            let left_t = ops.t.d_xp.scaled(-phi2);
            let right_v = ops.t.d_xm.clone();
            let right_tl = ops.t.d_xm.matmul(&ops.interp_l_to_t);
            let left_l = ops.l.d_xp.scaled(-phi2).matmul(&ops.interp_t_to_l);
            let mut c = Coupling {
                v_t: left_t.matmul(&right_v),
                k_tl: left_t.matmul(&right_tl),
                k_lt: left_l.matmul(&right_v),
                lambda: vec![0.0; m_t],
                left_t,
                right_v,
                right_tl,
                left_l,
            };
            // Start from the zero-slope blocks so the structure (band
            // offsets) is in place before the first refresh.
            c.refresh(&vec![0.0; m_t]);
            c
        });

        Self {
            grid: *grid,
            phi2,
            revision: 0,
            theta_op,
            a_tt_const,
            c_tt_const,
            b_tt,
            a_ll,
            c_ll,
            b_ll,
            coupling,
        }
    }

    /// Rebuilds the slope-dependent blocks from the transverse state `u`.
    /// A no-op for decoupled systems (`alpha = 1`).
    pub fn refresh(&mut self, u: &[f64]) {
        assert_eq!(u.len(), self.grid.m_t(), "refresh: transverse length");
        if let Some(c) = self.coupling.as_mut() {
            c.refresh(u);
            self.revision += 1;
        }
    }

    /// Bumped whenever the matrix values change; solvers key their cached
    /// factorizations on it.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phi2(&self) -> f64 {
        self.phi2
    }

    /// Current slope diagonal (empty when decoupled).
    pub fn lambda(&self) -> &[f64] {
        self.coupling.as_ref().map_or(&[], |c| &c.lambda)
    }

    /// The averaging-weighted identity block shared by A and C.
    pub fn theta_block(&self) -> &BandedMatrix {
        &self.theta_op
    }

    fn empty_tl(&self) -> BandedMatrix {
        BandedMatrix::new(self.grid.m_t(), self.grid.m_l(), Vec::new())
    }

    fn empty_lt(&self) -> BandedMatrix {
        BandedMatrix::new(self.grid.m_l(), self.grid.m_t(), Vec::new())
    }

    pub fn a_tt(&self) -> BandedMatrix {
        match &self.coupling {
            Some(c) => self.a_tt_const.add_matrix(&c.v_t),
            None => self.a_tt_const.clone(),
        }
    }

    pub fn a_tl(&self) -> BandedMatrix {
        self.coupling
            .as_ref()
            .map_or_else(|| self.empty_tl(), |c| c.k_tl.clone())
    }

    pub fn a_lt(&self) -> BandedMatrix {
        self.coupling
            .as_ref()
            .map_or_else(|| self.empty_lt(), |c| c.k_lt.clone())
    }

    pub fn a_ll(&self) -> &BandedMatrix {
        &self.a_ll
    }

    pub fn b_tt(&self) -> &BandedMatrix {
        &self.b_tt
    }

    pub fn b_tl(&self) -> BandedMatrix {
        self.coupling
            .as_ref()
            .map_or_else(|| self.empty_tl(), |c| c.k_tl.scaled(2.0))
    }

    pub fn b_ll(&self) -> &BandedMatrix {
        &self.b_ll
    }

    pub fn c_tt(&self) -> BandedMatrix {
        match &self.coupling {
            Some(c) => self.c_tt_const.add_matrix(&c.v_t),
            None => self.c_tt_const.clone(),
        }
    }

    pub fn c_tl(&self) -> BandedMatrix {
        self.a_tl()
    }

    pub fn c_lt(&self) -> BandedMatrix {
        self.a_lt()
    }

    pub fn c_ll(&self) -> &BandedMatrix {
        &self.c_ll
    }

    /// `out = A w`.
    pub fn a_apply(&self, w: &[f64], out: &mut [f64]) {
        let m_t = self.grid.m_t();
        out.fill(0.0);
        self.a_tt_const
            .apply_add_scaled(&w[..m_t], 1.0, &mut out[..m_t]);
        self.a_ll.apply_add_scaled(&w[m_t..], 1.0, &mut out[m_t..]);
        if let Some(c) = &self.coupling {
            c.v_t.apply_add_scaled(&w[..m_t], 1.0, &mut out[..m_t]);
            c.k_tl.apply_add_scaled(&w[m_t..], 1.0, &mut out[..m_t]);
            c.k_lt.apply_add_scaled(&w[..m_t], 1.0, &mut out[m_t..]);
        }
    }

    /// `out += B w`.
    pub fn b_apply_add(&self, w: &[f64], out: &mut [f64]) {
        let m_t = self.grid.m_t();
        self.b_tt.apply_add_scaled(&w[..m_t], 1.0, &mut out[..m_t]);
        self.b_ll.apply_add_scaled(&w[m_t..], 1.0, &mut out[m_t..]);
        if let Some(c) = &self.coupling {
            c.k_tl.apply_add_scaled(&w[m_t..], 2.0, &mut out[..m_t]);
        }
    }

    /// `out += C w`.
    pub fn c_apply_add(&self, w: &[f64], out: &mut [f64]) {
        let m_t = self.grid.m_t();
        self.c_tt_const
            .apply_add_scaled(&w[..m_t], 1.0, &mut out[..m_t]);
        self.c_ll.apply_add_scaled(&w[m_t..], 1.0, &mut out[m_t..]);
        if let Some(c) = &self.coupling {
            c.v_t.apply_add_scaled(&w[..m_t], 1.0, &mut out[..m_t]);
            c.k_tl.apply_add_scaled(&w[m_t..], 1.0, &mut out[..m_t]);
            c.k_lt.apply_add_scaled(&w[..m_t], 1.0, &mut out[m_t..]);
        }
    }

    /// Unforced right-hand side `-(B w_curr + C w_prev)` into `out`.
    pub fn rhs_into(&self, state: &StringState, out: &mut [f64]) {
        out.fill(0.0);
        self.b_apply_add(&state.w_curr, out);
        self.c_apply_add(&state.w_prev, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
    }
}

/// Builds the block system for the given state: constants plus one refresh
/// against `state.w_curr`.
pub fn assemble(
    state: &StringState,
    ops: &OperatorSet,
    params: &StringParams,
    grid: &Grid,
) -> BlockSystem {
    let mut sys = BlockSystem::new(ops, params, grid);
    sys.refresh(&state.w_curr[..grid.m_t()]);
    sys
}

/// Banded LU on the position-interleaved ordering. Merging both subsystems
/// by physical position keeps the coupling blocks near the diagonal, so the
/// stacked system stays narrow-banded.
#[derive(Debug)]
struct InterleavedSolver {
    /// `merged_of_stacked[i]` is the row of stacked index `i` in the merged
    /// ordering.
    merged_of_stacked: Vec<usize>,
    banded: BandedSystem,
    scratch: Vec<f64>,
}

impl InterleavedSolver {
    fn new(system: &BlockSystem) -> Self {
        let grid = system.grid();
        let m_t = grid.m_t();
        let m_l = grid.m_l();
        let m = m_t + m_l;
        // Merge both grids by position; ties put the transverse point first.
        let mut order: Vec<(f64, u8, usize)> = (0..m_t)
            .map(|q| ((q as f64 + 1.0) * grid.h_t, 0u8, q))
            .chain((0..m_l).map(|r| ((r as f64 + 1.0) * grid.h_l, 1u8, m_t + r)))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut merged_of_stacked = vec![0usize; m];
        for (pos, &(_, _, stacked)) in order.iter().enumerate() {
            merged_of_stacked[stacked] = pos;
        }

        // Bandwidth from the structural patterns, including the coupling
        // blocks (their offsets exist even at zero slope).
        let mut kl = 0usize;
        let mut ku = 0usize;
        let mut track = |i: usize, j: usize| {
            let (pi, pj) = (merged_of_stacked[i], merged_of_stacked[j]);
            if pi >= pj {
                kl = kl.max(pi - pj);
            }
            if pj >= pi {
                ku = ku.max(pj - pi);
            }
        };
        for_each_a_entry(system, |i, j, _| track(i, j));

        Self {
            merged_of_stacked,
            banded: BandedSystem::new(m, kl, ku),
            scratch: vec![0.0; m],
        }
    }

    fn prepare(&mut self, system: &BlockSystem) -> std::result::Result<(), String> {
        self.banded.clear();
        let map = &self.merged_of_stacked;
        let banded = &mut self.banded;
        for_each_a_entry(system, |i, j, v| banded.add(map[i], map[j], v));
        self.banded.factor()
    }

    fn solve_into(&mut self, rhs: &mut [f64]) {
        for (i, &p) in self.merged_of_stacked.iter().enumerate() {
            self.scratch[p] = rhs[i];
        }
        self.banded.solve_in_place(&mut self.scratch);
        for (i, &p) in self.merged_of_stacked.iter().enumerate() {
            rhs[i] = self.scratch[p];
        }
    }
}

/// Visits every structural entry of A in stacked coordinates.
fn for_each_a_entry(system: &BlockSystem, mut f: impl FnMut(usize, usize, f64)) {
    let m_t = system.grid().m_t();
    for (r, c, v) in system.a_tt_const.entries() {
        f(r, c, v);
    }
    for (r, c, v) in system.a_ll.entries() {
        f(m_t + r, m_t + c, v);
    }
    if let Some(cp) = &system.coupling {
        for (r, c, v) in cp.v_t.entries() {
            f(r, c, v);
        }
        for (r, c, v) in cp.k_tl.entries() {
            f(r, m_t + c, v);
        }
        for (r, c, v) in cp.k_lt.entries() {
            f(m_t + r, c, v);
        }
    }
}

/// Block elimination: the constant tridiagonal longitudinal block is factored
/// once; each step factors the dense transverse Schur complement
/// `A_tt - K_tl A_ll^-1 K_lt`.
#[derive(Debug)]
struct SchurSolver {
    ll: BandedSystem,
    schur: Option<DenseLu>,
    /// `A_ll^-1 K_lt` as a dense m_l x m_t array, row-major.
    ainv_klt: Vec<f64>,
}

impl SchurSolver {
    fn new(system: &BlockSystem) -> std::result::Result<Self, String> {
        let grid = system.grid();
        let m_l = grid.m_l();
        let mut ll = BandedSystem::new(m_l, 1, 1);
        for (r, c, v) in system.a_ll.entries() {
            ll.add(r, c, v);
        }
        ll.factor()?;
        Ok(Self {
            ll,
            schur: None,
            ainv_klt: Vec::new(),
        })
    }

    fn prepare(&mut self, system: &BlockSystem) -> std::result::Result<(), String> {
        let grid = system.grid();
        let m_t = grid.m_t();
        let m_l = grid.m_l();
        let mut s = vec![0.0; m_t * m_t];
        for (r, c, v) in system.a_tt_const.entries() {
            s[r * m_t + c] += v;
        }
        if let Some(cp) = &system.coupling {
            for (r, c, v) in cp.v_t.entries() {
                s[r * m_t + c] += v;
            }
            // ainv_klt[c][j] holds (A_ll^-1 K_lt)(c, j).
            self.ainv_klt = vec![0.0; m_l * m_t];
            for (r, c, v) in cp.k_lt.entries() {
                self.ainv_klt[r * m_t + c] = v;
            }
            let mut col = vec![0.0; m_l];
            for j in 0..m_t {
                for r in 0..m_l {
                    col[r] = self.ainv_klt[r * m_t + j];
                }
                self.ll.solve_in_place(&mut col);
                for r in 0..m_l {
                    self.ainv_klt[r * m_t + j] = col[r];
                }
            }
            for (r, c, v) in cp.k_tl.entries() {
                for j in 0..m_t {
                    s[r * m_t + j] -= v * self.ainv_klt[c * m_t + j];
                }
            }
        }
        self.schur = Some(DenseLu::factor(s, m_t)?);
        Ok(())
    }

    fn solve_into(&self, system: &BlockSystem, rhs: &mut [f64]) {
        let m_t = system.grid().m_t();
        let schur = self.schur.as_ref().expect("solve before prepare");
        let (r_t, r_l) = rhs.split_at_mut(m_t);
        let mut y = r_l.to_vec();
        self.ll.solve_in_place(&mut y);
        if let Some(cp) = &system.coupling {
            for (r, c, v) in cp.k_tl.entries() {
                r_t[r] -= v * y[c];
            }
            schur.solve_in_place(r_t);
            let mut r2 = r_l.to_vec();
            for (r, c, v) in cp.k_lt.entries() {
                r2[r] -= v * r_t[c];
            }
            self.ll.solve_in_place(&mut r2);
            r_l.copy_from_slice(&r2);
        } else {
            schur.solve_in_place(r_t);
            r_l.copy_from_slice(&y);
        }
    }
}

#[derive(Debug)]
enum SolverBackend {
    Banded(InterleavedSolver),
    Schur(SchurSolver),
}

/// A linear solver bound to one block system's structure. Factorizations are
/// cached against the system's revision, so decoupled systems factor once.
#[derive(Debug)]
pub struct StepSolver {
    backend: SolverBackend,
    prepared_revision: Option<u64>,
    factorizations: u64,
}

impl StepSolver {
    pub fn new(kind: LinearSolverKind, system: &BlockSystem) -> Result<Self> {
        let backend = match kind {
            LinearSolverKind::DirectBanded => SolverBackend::Banded(InterleavedSolver::new(system)),
            LinearSolverKind::DirectSparse => SolverBackend::Schur(
                SchurSolver::new(system)
                    .map_err(|detail| Error::Singular { step: 0, detail })?,
            ),
        };
        Ok(Self {
            backend,
            prepared_revision: None,
            factorizations: 0,
        })
    }

    /// Factors A if the system changed since the last factorization.
    pub fn ensure(&mut self, system: &BlockSystem, step: usize) -> Result<()> {
        if self.prepared_revision == Some(system.revision()) {
            return Ok(());
        }
        let res = match &mut self.backend {
            SolverBackend::Banded(s) => s.prepare(system),
            SolverBackend::Schur(s) => s.prepare(system),
        };
        res.map_err(|detail| Error::Singular { step, detail })?;
        self.prepared_revision = Some(system.revision());
        self.factorizations += 1;
        Ok(())
    }

    /// Solves `A x = rhs` in place. `ensure` must have succeeded for this
    /// system revision.
    pub fn solve_into(&mut self, system: &BlockSystem, rhs: &mut [f64]) {
        debug_assert_eq!(self.prepared_revision, Some(system.revision()));
        match &mut self.backend {
            SolverBackend::Banded(s) => s.solve_into(rhs),
            SolverBackend::Schur(s) => s.solve_into(system, rhs),
        }
    }

    pub fn factorizations(&self) -> u64 {
        self.factorizations
    }
}

/// Advances one step under a fixed excitation force vector `gamma` (the
/// stacked force term of the update equation; `None` means unforced).
pub fn step(
    state: &StringState,
    system: &BlockSystem,
    solver: &mut StepSolver,
    gamma: Option<&[f64]>,
) -> Result<StringState> {
    let next_step = state.step + 1;
    solver.ensure(system, next_step)?;
    let mut rhs = vec![0.0; state.w_curr.len()];
    system.rhs_into(state, &mut rhs);
    if let Some(g) = gamma {
        for (r, gi) in rhs.iter_mut().zip(g) {
            *r -= gi;
        }
    }
    solver.solve_into(system, &mut rhs);
    Ok(StringState {
        w_prev: state.w_curr.clone(),
        w_curr: rhs,
        step: next_step,
    })
}

/// Per-render health counters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Diagnostics {
    /// Linear solves performed (excludes the two initial-condition samples).
    pub steps_completed: usize,
    /// Largest absolute state entry seen across the render.
    pub max_abs_state: f64,
    /// Largest per-step count of scalar excitation solves and sweeps.
    pub max_coupling_iterations: usize,
    pub total_coupling_iterations: u64,
    /// Largest relative change left by the final coupling sweep of any step.
    pub max_coupling_residual: f64,
    /// Smallest hammer contact force applied while a hammer was active.
    pub min_hammer_force: Option<f64>,
    /// Matrix factorizations performed (1 when A is constant).
    pub factorizations: u64,
    pub divergence_limit: f64,
}

/// Full field snapshot for debugging dumps.
#[derive(Debug, Clone, Serialize)]
pub struct FieldFrame {
    pub step: usize,
    pub u: Vec<f64>,
    pub zeta: Vec<f64>,
}

/// Output of one render: readout samples plus everything needed to reproduce
/// or audit the run.
#[derive(Debug, Clone)]
pub struct RenderResult {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub grid: Grid,
    pub diagnostics: Diagnostics,
    pub fields: Vec<FieldFrame>,
    /// Snapshot of the exact configuration that produced the samples.
    pub config: SimulationConfig,
}

/// Force-coupled excitation bound to per-render resources.
struct ActiveForce {
    index: usize,
    read: InterpRow,
    spread: InterpRow,
    /// `A^-1 e`, cached while both A and the contact position are constant.
    z_cache: Option<Vec<f64>>,
    hammer: Option<HammerState>,
}

/// Renders the configuration on the densest stable grid.
pub fn render(cfg: &SimulationConfig) -> Result<RenderResult> {
    let report = validate(cfg);
    if !report.is_valid() {
        return Err(Error::InvalidParam(report.joined()));
    }
    let grid = crate::grid::compute_grid(&cfg.string, cfg.sample_rate)?;
    render_on_grid(cfg, &grid)
}

/// Renders on an explicitly chosen (validated) grid; lets callers run
/// deliberately coarse grids for oracle comparisons.
pub fn render_on_grid(cfg: &SimulationConfig, grid: &Grid) -> Result<RenderResult> {
    let report = validate(cfg);
    if !report.is_valid() {
        return Err(Error::InvalidParam(report.joined()));
    }
    let ops = build_operators(grid, cfg.interpolation_order, cfg.closure)?;
    let mut system = BlockSystem::new(&ops, &cfg.string, grid);
    let mut solver = StepSolver::new(cfg.solver.linear_solver, &system)?;
    let a_constant = system.phi2() == 0.0;

    let m_t = grid.m_t();
    let m = m_t + grid.m_l();
    let k = grid.k;

    // Plucks are summed into the initial condition; released from rest.
    let mut w0 = vec![0.0; m];
    for exc in &cfg.excitations {
        if let ExcitationSpec::Pluck(p) = exc {
            for (i, v) in pluck_shape(p, grid).into_iter().enumerate() {
                w0[i] += v;
            }
        }
    }
    let mut state = StringState::from_initial(w0.clone(), w0);

    let read_t = ops.read(cfg.readout_position, Subsystem::Transverse);
    let read_l = ops.read(cfg.readout_position, Subsystem::Longitudinal);
    let readout = |w: &[f64]| -> f64 {
        cfg.readout_mix.0 * read_t.dot(&w[..m_t]) + cfg.readout_mix.1 * read_l.dot(&w[m_t..])
    };

    let initial_scale = state.w_curr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let limit = 1e6 * initial_scale.max(1e-3);

    let mut diag = Diagnostics {
        max_abs_state: initial_scale,
        divergence_limit: limit,
        ..Diagnostics::default()
    };

    // Force-coupled excitations (bows and hammers). Position rows for a bow
    // with a moving contact point are rebuilt per step.
    let mut forces: Vec<ActiveForce> = cfg
        .excitations
        .iter()
        .enumerate()
        .filter_map(|(index, exc)| {
            let x = match exc {
                ExcitationSpec::Pluck(_) => return None,
                ExcitationSpec::Hammer(h) => h.x_h,
                ExcitationSpec::Bow(b) => b.x_b.eval(0.0),
            };
            Some(ActiveForce {
                index,
                read: ops.read(x, Subsystem::Transverse),
                spread: ops.spread(x, Subsystem::Transverse),
                z_cache: None,
                hammer: None,
            })
        })
        .collect();

    let n_samples = cfg.step_count();
    let mut samples = Vec::with_capacity(n_samples);
    let mut fields = Vec::new();
    let dump = |step: usize, w: &[f64], fields: &mut Vec<FieldFrame>| {
        if let Some(stride) = cfg.field_dump_stride {
            if step % stride == 0 {
                fields.push(FieldFrame {
                    step,
                    u: w[..m_t].to_vec(),
                    zeta: w[m_t..].to_vec(),
                });
            }
        }
    };
    if n_samples >= 1 {
        samples.push(readout(&state.w_prev));
        dump(0, &state.w_prev, &mut fields);
    }
    if n_samples >= 2 {
        samples.push(readout(&state.w_curr));
        dump(1, &state.w_curr, &mut fields);
    }

    let mut rhs = vec![0.0; m];
    for n in 1..n_samples.saturating_sub(1) {
        let t = n as f64 * k;
        let next_step = n + 1;
        system.refresh(&state.w_curr[..m_t]);
        solver.ensure(&system, next_step)?;
        system.rhs_into(&state, &mut rhs);
        solver.solve_into(&system, &mut rhs);

        let active = excitation_schedule(&cfg.excitations, t);
        if !active.is_empty() {
            couple_excitations(
                cfg,
                &ops,
                &system,
                &mut solver,
                &state,
                &mut rhs,
                &mut forces,
                &active,
                t,
                a_constant,
                next_step,
                &mut diag,
            )?;
        }

        let mut max_abs = 0.0f64;
        for v in &rhs {
            max_abs = max_abs.max(v.abs());
        }
        if !max_abs.is_finite() || max_abs > limit {
            return Err(Error::Diverged {
                step: next_step,
                magnitude: max_abs,
                limit,
            });
        }
        diag.max_abs_state = diag.max_abs_state.max(max_abs);

        std::mem::swap(&mut state.w_prev, &mut state.w_curr);
        std::mem::swap(&mut state.w_curr, &mut rhs);
        state.step = next_step;
        samples.push(readout(&state.w_curr));
        dump(next_step, &state.w_curr, &mut fields);
        diag.steps_completed += 1;
    }
    diag.factorizations = solver.factorizations();

    Ok(RenderResult {
        samples,
        sample_rate: cfg.sample_rate,
        grid: *grid,
        diagnostics: diag,
        fields,
        config: cfg.clone(),
    })
}

/// Applies the active point forces to the unforced solution `w_star` (in
/// `rhs`), replacing it with the forced `w_next`.
///
/// Each force contributes `s_e * z_e` with `z_e = A^-1 e_e`; its scalar
/// `s_e` solves that excitation's contact law against the sum of everything
/// else. One excitation is exact in a single pass; overlapping bow and
/// hammer relax by Gauss-Seidel sweeps until the scalars stop moving.
#[allow(clippy::too_many_arguments)]
fn couple_excitations(
    cfg: &SimulationConfig,
    ops: &OperatorSet,
    system: &BlockSystem,
    solver: &mut StepSolver,
    state: &StringState,
    rhs: &mut [f64],
    forces: &mut [ActiveForce],
    active: &[usize],
    t: f64,
    a_constant: bool,
    next_step: usize,
    diag: &mut Diagnostics,
) -> Result<()> {
    let grid = system.grid();
    let m_t = grid.m_t();
    let k = grid.k;
    let settings = &cfg.solver;

    // Resolve the slots participating this step and their response vectors.
    let mut slots: Vec<usize> = Vec::with_capacity(active.len());
    for (slot, force) in forces.iter_mut().enumerate() {
        if !active.contains(&force.index) {
            continue;
        }
        let spec = &cfg.excitations[force.index];
        if let ExcitationSpec::Bow(b) = spec {
            if !b.x_b.is_constant() {
                let x = b.x_b.eval(t);
                force.read = ops.read(x, Subsystem::Transverse);
                force.spread = ops.spread(x, Subsystem::Transverse);
                force.z_cache = None;
            }
        }
        let cacheable = a_constant
            && match spec {
                ExcitationSpec::Bow(b) => b.x_b.is_constant(),
                _ => true,
            };
        if force.z_cache.is_none() || !cacheable {
            let mut e = vec![0.0; rhs.len()];
            force.spread.add_scaled_into(1.0, &mut e[..m_t]);
            solver.solve_into(system, &mut e);
            force.z_cache = Some(e);
        }
        if let (ExcitationSpec::Hammer(h), None) = (spec, &force.hammer) {
            force.hammer = Some(HammerState::launch(h, k));
        }
        slots.push(slot);
    }

    // Cross responses: dots[i][j] = read_i . z_j (transverse part).
    let n_act = slots.len();
    let mut dots = vec![0.0; n_act * n_act];
    for (i, &si) in slots.iter().enumerate() {
        for (j, &sj) in slots.iter().enumerate() {
            let z = forces[sj].z_cache.as_ref().expect("resolved above");
            dots[i * n_act + j] = forces[si].read.dot(&z[..m_t]);
        }
    }
    let base: Vec<f64> = slots
        .iter()
        .map(|&s| forces[s].read.dot(&rhs[..m_t]))
        .collect();
    let prev_pt: Vec<f64> = slots
        .iter()
        .map(|&s| forces[s].read.dot(&state.w_prev[..m_t]))
        .collect();
    let curr_pt: Vec<f64> = slots
        .iter()
        .map(|&s| forces[s].read.dot(&state.w_curr[..m_t]))
        .collect();

    let mut s_e = vec![0.0; n_act];
    let mut hammer_f = vec![0.0; n_act];
    let mut iterations = 0usize;
    let mut residual = 0.0f64;
    let max_sweeps = if n_act == 1 { 1 } else { settings.newton_max_iter };
    for sweep in 0..max_sweeps {
        let mut max_delta = 0.0f64;
        let mut max_scale = 0.0f64;
        for i in 0..n_act {
            let slot = slots[i];
            // Contact-point value of w_next with everyone else's current
            // contribution included.
            let mut point = base[i];
            for j in 0..n_act {
                if j != i {
                    point += s_e[j] * dots[i * n_act + j];
                }
            }
            let rho = dots[i * n_act + i];
            let new_s = match &cfg.excitations[forces[slot].index] {
                ExcitationSpec::Bow(b) => {
                    let f_b = b.f_b.eval(t);
                    let v_b = b.v_b.eval(t);
                    let d = (point - prev_pt[i]) / (2.0 * k) - v_b;
                    let mu = 0.5 * k * f_b * rho;
                    let sol = solve_bow_velocity(
                        d,
                        mu,
                        b.a,
                        b.eps,
                        settings.newton_tol * 1.0f64.max(v_b.abs()),
                        settings.newton_max_iter,
                    )
                    .map_err(|bad| Error::NonConvergence {
                        step: next_step,
                        residual: bad.residual,
                        iterations: bad.iterations,
                    })?;
                    iterations += sol.iterations.max(1);
                    -k * k * f_b * sol.phi_eff
                }
                ExcitationSpec::Hammer(h) => {
                    let hs = forces[slot].hammer.as_ref().expect("launched above");
                    let d_curr = hs.u_h_curr - curr_pt[i];
                    let c = hammer_force_coeff(h, d_curr);
                    let denom = 1.0 + 0.5 * c * k * k * (1.0 + h.mass_ratio * rho);
                    let raw = c * (hs.u_h_curr - 0.5 * (point + prev_pt[i])) / denom;
                    let f = raw.max(0.0);
                    hammer_f[i] = f;
                    iterations += 1;
                    k * k * h.mass_ratio * f
                }
                ExcitationSpec::Pluck(_) => unreachable!("plucks are never scheduled"),
            };
            max_delta = max_delta.max((new_s - s_e[i]).abs());
            max_scale = max_scale.max(new_s.abs());
            s_e[i] = new_s;
        }
        residual = max_delta / max_scale.max(1e-300);
        if max_delta == 0.0 || residual <= settings.newton_tol {
            break;
        }
        if sweep + 1 == max_sweeps && n_act > 1 {
            return Err(Error::NonConvergence {
                step: next_step,
                residual,
                iterations,
            });
        }
    }
    if n_act == 1 {
        residual = 0.0;
    }

    for (i, &slot) in slots.iter().enumerate() {
        let z = forces[slot].z_cache.as_ref().expect("resolved above");
        for (w, zi) in rhs.iter_mut().zip(z) {
            *w += s_e[i] * zi;
        }
        if let Some(hs) = forces[slot].hammer.as_mut() {
            let f = hammer_f[i];
            let u_h_next = 2.0 * hs.u_h_curr - hs.u_h_prev - k * k * f;
            hs.u_h_prev = hs.u_h_curr;
            hs.u_h_curr = u_h_next;
            hs.last_force = f;
            diag.min_hammer_force = Some(match diag.min_hammer_force {
                Some(prev) => prev.min(f),
                None => f,
            });
        }
        // Positions move between steps, so a varying-position bow must not
        // reuse this response next step.
        if !a_constant {
            forces[slot].z_cache = None;
        }
    }

    diag.total_coupling_iterations += iterations as u64;
    diag.max_coupling_iterations = diag.max_coupling_iterations.max(iterations);
    diag.max_coupling_residual = diag.max_coupling_residual.max(residual);
    Ok(())
}
