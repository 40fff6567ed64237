//! Rigid-body decoupling, local freezing, and modal truncation with
//! compliance correction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::modal::PartitionedLpvPlant;
use crate::poly::{PositionPolynomial, SchedulingPoint, Workspace};

/// Output decoupling transform T_y(p).
///
/// Exact polynomial form when the rigid output block is square with a
/// constant determinant; otherwise a per-point pseudoinverse rule.
#[derive(Debug, Clone)]
pub enum OutputDecoupling {
    Poly(PositionPolynomial),
    PerPoint {
        /// Rigid position-column block of the raw output map.
        c_rb_pos: PositionPolynomial,
        max_cond: f64,
    },
}

impl OutputDecoupling {
    pub fn eval(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        match self {
            OutputDecoupling::Poly(poly) => poly.eval_checked(p),
            OutputDecoupling::PerPoint { c_rb_pos, max_cond } => {
                let c = c_rb_pos.eval_checked(p)?;
                linalg::pinv_checked(&c, "T_y(p)", *max_cond)
            }
        }
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(self, OutputDecoupling::Poly(_))
    }
}

/// Rigid-body decoupled plant: inputs in decoupled force coordinates,
/// outputs in decoupled position coordinates. A and B no longer depend on
/// position; only the output map does.
#[derive(Debug, Clone)]
pub struct DecoupledPlant {
    pub n_rigid: usize,
    pub n_flexible: usize,
    /// Flexible eigenfrequencies/damping (index 0 = first flexible mode).
    pub omega_fm: Vec<f64>,
    pub zeta_fm: Vec<f64>,
    pub a_rb: DMatrix<f64>,
    pub a_fm: DMatrix<f64>,
    /// Decoupled rigid input rows: velocity-row block is the identity.
    pub b_rb: DMatrix<f64>,
    /// Decoupled flexible input rows B_FM T_u.
    pub b_fm: DMatrix<f64>,
    /// Input transform, n_u by n_RB.
    pub t_u: DMatrix<f64>,
    pub t_y: OutputDecoupling,
    /// Decoupled rigid output block T_y(p) C_RB(p); identity on position
    /// states by construction (polynomial branch only).
    c_rb_dec: Option<PositionPolynomial>,
    /// Decoupled flexible output block T_y(p) C_FM(p) (polynomial branch).
    c_fm_dec: Option<PositionPolynomial>,
    /// Raw (pre-decoupling) output blocks for the per-point branch.
    c_rb_raw: PositionPolynomial,
    c_fm_raw: PositionPolynomial,
    pub workspace: Workspace,
    pub max_cond: f64,
}

/// Constant-matrix state space obtained by freezing the scheduling point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLti {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Selector over per-mode (position, velocity) pairs: positions.
fn position_selector(n_modes: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * n_modes, n_modes);
    for m in 0..n_modes {
        s[(2 * m, m)] = 1.0;
    }
    s
}

/// Selector over per-mode (position, velocity) pairs: velocities.
fn velocity_selector(n_modes: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n_modes, 2 * n_modes);
    for m in 0..n_modes {
        s[(m, 2 * m + 1)] = 1.0;
    }
    s
}

/// Decouple the rigid-body channels of a partitioned plant.
///
/// T_u is the pseudoinverse of the velocity-row block of B_RB; T_y(p) the
/// pseudoinverse of the position-column block of C_RB(p). Conditioning is
/// checked at `grid_check` points (the grid the observer bank will use).
pub fn decouple(
    plant: &PartitionedLpvPlant,
    grid_check: &[SchedulingPoint],
) -> Result<DecoupledPlant> {
    let n_rb = plant.n_rigid;
    let n_fm = plant.n_flexible;
    let max_cond = plant.tol.max_condition;

    let velsel = velocity_selector(n_rb);
    let b_vel = &velsel * &plant.b_rb; // n_RB x n_u
    let t_u = linalg::pinv_checked(&b_vel, "T_u (B_RB velocity rows)", max_cond)?;

    let possel = position_selector(n_rb);
    let c_rb_pos = plant.c_rb.mul_const_right(&possel); // n_y x n_RB

    // polynomial inverse requires a square block
    let t_y = if c_rb_pos.nrows() == c_rb_pos.ncols() {
        match c_rb_pos.try_poly_inverse() {
            Some(inv) => OutputDecoupling::Poly(inv),
            None => OutputDecoupling::PerPoint {
                c_rb_pos: c_rb_pos.clone(),
                max_cond,
            },
        }
    } else {
        OutputDecoupling::PerPoint {
            c_rb_pos: c_rb_pos.clone(),
            max_cond,
        }
    };

    // conditioning / invertibility at the audit grid
    for &p in grid_check {
        let c = c_rb_pos.eval_checked(p)?;
        let (_, cond) = linalg::pinv(&c)?;
        if !cond.is_finite() || cond > max_cond {
            return Err(Error::RankDeficient {
                what: "C_RB(p) position columns",
                cond,
                max_cond,
            });
        }
    }

    let b_rb_dec = &plant.b_rb * &t_u;
    let b_fm_dec = &plant.b_fm * &t_u;

    let (c_rb_dec, c_fm_dec) = match &t_y {
        OutputDecoupling::Poly(ty) => (
            Some(ty.mul_poly(&plant.c_rb)),
            Some(ty.mul_poly(&plant.c_fm)),
        ),
        OutputDecoupling::PerPoint { .. } => (None, None),
    };

    let omega_fm = plant.omega[n_rb..].to_vec();
    let zeta_fm = plant.zeta[n_rb..].to_vec();

    Ok(DecoupledPlant {
        n_rigid: n_rb,
        n_flexible: n_fm,
        omega_fm,
        zeta_fm,
        a_rb: plant.a_rb.clone(),
        a_fm: plant.a_fm.clone(),
        b_rb: b_rb_dec,
        b_fm: b_fm_dec,
        t_u,
        t_y,
        c_rb_dec,
        c_fm_dec,
        c_rb_raw: plant.c_rb.clone(),
        c_fm_raw: plant.c_fm.clone(),
        workspace: plant.workspace,
        max_cond,
    })
}

impl DecoupledPlant {
    /// Decoupled rigid output block at a point (identity on positions).
    pub fn c_rb_at(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        match &self.c_rb_dec {
            Some(poly) => poly.eval_checked(p),
            None => Ok(self.t_y.eval(p)? * self.c_rb_raw.eval_checked(p)?),
        }
    }

    /// Decoupled flexible output block at a point.
    pub fn c_fm_at(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        match &self.c_fm_dec {
            Some(poly) => poly.eval_checked(p),
            None => Ok(self.t_y.eval(p)? * self.c_fm_raw.eval_checked(p)?),
        }
    }

    /// Decoupled flexible output block as a polynomial, when the output
    /// decoupling is exactly polynomial.
    pub fn c_fm_poly(&self) -> Option<&PositionPolynomial> {
        self.c_fm_dec.as_ref()
    }

    /// Full-order A = blkdiag(A_RB, A_FM).
    pub fn a_full(&self) -> DMatrix<f64> {
        let n = self.a_rb.nrows() + self.a_fm.nrows();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (self.a_rb.nrows(), self.a_rb.ncols()))
            .copy_from(&self.a_rb);
        a.view_mut(
            (self.a_rb.nrows(), self.a_rb.ncols()),
            (self.a_fm.nrows(), self.a_fm.ncols()),
        )
        .copy_from(&self.a_fm);
        a
    }

    /// Full-order B = [B_RB; B_FM] in decoupled inputs.
    pub fn b_full(&self) -> DMatrix<f64> {
        let rows = self.b_rb.nrows() + self.b_fm.nrows();
        let mut b = DMatrix::zeros(rows, self.n_rigid);
        b.view_mut((0, 0), (self.b_rb.nrows(), self.b_rb.ncols()))
            .copy_from(&self.b_rb);
        b.view_mut((self.b_rb.nrows(), 0), (self.b_fm.nrows(), self.b_fm.ncols()))
            .copy_from(&self.b_fm);
        b
    }

    /// Freeze the scheduling point: constant-matrix LTI state space. A and
    /// B are position-independent by construction; only C depends on p.
    pub fn freeze(&self, p: SchedulingPoint) -> Result<FrozenLti> {
        self.workspace.check(p)?;
        let c_rb = self.c_rb_at(p)?;
        let c_fm = self.c_fm_at(p)?;
        let n_rb = self.n_rigid;
        let c = {
            let mut c = DMatrix::zeros(n_rb, c_rb.ncols() + c_fm.ncols());
            c.view_mut((0, 0), (n_rb, c_rb.ncols())).copy_from(&c_rb);
            c.view_mut((0, c_rb.ncols()), (n_rb, c_fm.ncols()))
                .copy_from(&c_fm);
            c
        };
        Ok(FrozenLti {
            a: self.a_full(),
            b: self.b_full(),
            c,
            d: DMatrix::zeros(n_rb, n_rb),
        })
    }

    /// Audit the decoupling identities at a set of points, to `tol`.
    pub fn verify_decoupling(&self, points: &[SchedulingPoint], tol: f64) -> Result<()> {
        let velsel = velocity_selector(self.n_rigid);
        let bv = &velsel * &self.b_rb;
        let eye = DMatrix::<f64>::identity(self.n_rigid, self.n_rigid);
        if (&bv - &eye).norm() > tol {
            return Err(Error::Config(format!(
                "decoupled B_RB velocity block deviates from identity by {:.3e}",
                (&bv - &eye).norm()
            )));
        }
        let possel = position_selector(self.n_rigid);
        for &p in points {
            let c = self.c_rb_at(p)? * &possel;
            let err = (&c - &eye).norm();
            if err > tol {
                return Err(Error::Config(format!(
                    "decoupled C_RB at ({}, {}) deviates from identity by {err:.3e}",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

/// Truncated observer-design model: retained flexible blocks plus the
/// static compliance correction of the discarded ones.
#[derive(Debug, Clone)]
pub struct TruncatedPlant {
    pub n_rigid: usize,
    /// Indices (within the flexible set) of the retained modes.
    pub keep: Vec<usize>,
    pub omega_r: Vec<f64>,
    pub zeta_r: Vec<f64>,
    pub a_rb: DMatrix<f64>,
    pub a_fm_r: DMatrix<f64>,
    pub b_rb: DMatrix<f64>,
    pub b_fm_r: DMatrix<f64>,
    /// Retained flexible output block, decoupled coordinates.
    pub c_fm_r: PositionPolynomial,
    /// Compliance feed-through of the discarded modes, n_RB square.
    pub dc: PositionPolynomial,
    pub workspace: Workspace,
}

/// Discard high-frequency modes, folding their static compliance into a
/// position-dependent feed-through term.
///
/// Each discarded second-order block contributes c(p) b / omega^2, the
/// closed form of -C_d A_d^-1 B_d for a per-mode companion block.
pub fn truncate(plant: &DecoupledPlant, keep: &[usize]) -> Result<TruncatedPlant> {
    if keep.is_empty() {
        return Err(Error::Config(
            "retained mode set must be nonempty".into(),
        ));
    }
    let n_fm = plant.n_flexible;
    for &k in keep {
        if k >= n_fm {
            return Err(Error::Config(format!(
                "retained mode index {k} out of range ({n_fm} flexible modes)"
            )));
        }
    }
    let c_fm = plant.c_fm_poly().ok_or_else(|| {
        Error::Config(
            "compliance correction requires the polynomial output decoupling branch".into(),
        )
    })?;

    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    let discarded: Vec<usize> = (0..n_fm).filter(|i| !keep_sorted.contains(i)).collect();
    for &d in &discarded {
        if plant.omega_fm[d] == 0.0 {
            return Err(Error::SingularDiscardedBlock { index: d });
        }
    }

    let n_keep = keep_sorted.len();
    let mut a_fm_r = DMatrix::zeros(2 * n_keep, 2 * n_keep);
    let mut b_fm_r = DMatrix::zeros(2 * n_keep, plant.b_fm.ncols());
    let mut c_fm_r = PositionPolynomial::zeros(plant.n_rigid, 2 * n_keep, plant.workspace);
    for (r, &m) in keep_sorted.iter().enumerate() {
        a_fm_r
            .view_mut((2 * r, 2 * r), (2, 2))
            .copy_from(&plant.a_fm.view((2 * m, 2 * m), (2, 2)));
        b_fm_r
            .view_mut((2 * r, 0), (2, plant.b_fm.ncols()))
            .copy_from(&plant.b_fm.view((2 * m, 0), (2, plant.b_fm.ncols())));
        for i in 0..plant.n_rigid {
            *c_fm_r.entry_mut(i, 2 * r) = c_fm.entry(i, 2 * m).clone();
            *c_fm_r.entry_mut(i, 2 * r + 1) = c_fm.entry(i, 2 * m + 1).clone();
        }
    }

    // Dc(p) = sum over discarded modes of c_m(p) b_m / omega_m^2
    let mut dc = PositionPolynomial::zeros(plant.n_rigid, plant.n_rigid, plant.workspace);
    for &m in &discarded {
        let w2 = plant.omega_fm[m] * plant.omega_fm[m];
        let c_col = c_fm.columns(2 * m, 1); // participation, n_RB x 1
        let b_row = DMatrix::from_fn(1, plant.b_fm.ncols(), |_, j| {
            plant.b_fm[(2 * m + 1, j)] / w2
        });
        let contrib = c_col.mul_const_right(&b_row);
        dc = dc.add(&contrib);
    }

    Ok(TruncatedPlant {
        n_rigid: plant.n_rigid,
        keep: keep_sorted,
        omega_r: keep.iter().map(|&m| plant.omega_fm[m]).collect(),
        zeta_r: keep.iter().map(|&m| plant.zeta_fm[m]).collect(),
        a_rb: plant.a_rb.clone(),
        a_fm_r,
        b_rb: plant.b_rb.clone(),
        b_fm_r,
        c_fm_r,
        dc,
        workspace: plant.workspace,
    })
}

impl TruncatedPlant {
    /// Continuous A = blkdiag(A_RB, A_FM^r).
    pub fn a_design(&self) -> DMatrix<f64> {
        let n = self.a_rb.nrows() + self.a_fm_r.nrows();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (self.a_rb.nrows(), self.a_rb.ncols()))
            .copy_from(&self.a_rb);
        a.view_mut(
            (self.a_rb.nrows(), self.a_rb.ncols()),
            (self.a_fm_r.nrows(), self.a_fm_r.ncols()),
        )
        .copy_from(&self.a_fm_r);
        a
    }

    /// Continuous B = [B_RB; B_FM^r].
    pub fn b_design(&self) -> DMatrix<f64> {
        let rows = self.b_rb.nrows() + self.b_fm_r.nrows();
        let mut b = DMatrix::zeros(rows, self.n_rigid);
        b.view_mut((0, 0), (self.b_rb.nrows(), self.b_rb.ncols()))
            .copy_from(&self.b_rb);
        b.view_mut(
            (self.b_rb.nrows(), 0),
            (self.b_fm_r.nrows(), self.b_fm_r.ncols()),
        )
        .copy_from(&self.b_fm_r);
        b
    }

    /// Output map [I, C_FM^r(p)] at a point.
    pub fn c_at(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        let c_fm = self.c_fm_r.eval_checked(p)?;
        let n_rb = self.n_rigid;
        let mut c = DMatrix::zeros(n_rb, 2 * n_rb + c_fm.ncols());
        for m in 0..n_rb {
            c[(m, 2 * m)] = 1.0;
        }
        c.view_mut((0, 2 * n_rb), (n_rb, c_fm.ncols())).copy_from(&c_fm);
        Ok(c)
    }

    /// Compliance feed-through at a point.
    pub fn dc_at(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        self.dc.eval_checked(p)
    }

    pub fn n_states(&self) -> usize {
        self.a_rb.nrows() + self.a_fm_r.nrows()
    }
}
