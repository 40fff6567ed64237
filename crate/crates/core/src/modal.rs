//! Physical stage model and its modal decomposition.
//!
//! A mechanical model (M, D, K, actuator map, position-dependent sensor
//! map) is diagonalized by the mass-normalized eigenvector matrix, then
//! regrouped into per-mode second-order blocks with rigid-body modes
//! leading.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{PositionPolynomial, Workspace};

/// Numerical tolerances for model construction, with the defaults the
/// library documents.
#[derive(Debug, Clone, Copy)]
pub struct ModelTolerances {
    /// Relative symmetry tolerance on M, D, K.
    pub symmetry: f64,
    /// Off-diagonal Frobenius mass of the modal damping matrix relative to
    /// its diagonal, above which damping is rejected as non-proportional.
    pub proportional_damping: f64,
    /// Absolute eigenfrequency below which a mode counts as rigid (rad/s).
    pub rigid_omega: f64,
    /// Maximum condition number accepted for decoupling pseudoinverses.
    pub max_condition: f64,
}

impl Default for ModelTolerances {
    fn default() -> Self {
        Self {
            symmetry: 1e-9,
            proportional_damping: 1e-6,
            rigid_omega: 1e-6,
            max_condition: 1e8,
        }
    }
}

/// Physical second-order model: M xdd + D xd + K x = Phi_a u,
/// y = Phi_s(p) x.
#[derive(Debug, Clone)]
pub struct MechModel {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// Actuator influence map, n_x by n_u.
    pub actuator_map: DMatrix<f64>,
    /// Position-dependent sensor map, n_y by n_x.
    pub sensor_map: PositionPolynomial,
    pub workspace: Workspace,
    pub tol: ModelTolerances,
}

impl MechModel {
    pub fn n_states(&self) -> usize {
        self.mass.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.actuator_map.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.sensor_map.nrows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if self.damping.nrows() != n
            || self.stiffness.nrows() != n
            || self.actuator_map.nrows() != n
            || self.sensor_map.ncols() != n
        {
            return Err(Error::Config(format!(
                "inconsistent model dimensions: n_x = {n}, D {}x{}, K {}x{}, Phi_a {}x{}, Phi_s {}x{}",
                self.damping.nrows(),
                self.damping.ncols(),
                self.stiffness.nrows(),
                self.stiffness.ncols(),
                self.actuator_map.nrows(),
                self.actuator_map.ncols(),
                self.sensor_map.nrows(),
                self.sensor_map.ncols(),
            )));
        }
        linalg::check_symmetric(&self.mass, "M", self.tol.symmetry)?;
        linalg::check_symmetric(&self.damping, "D", self.tol.symmetry)?;
        linalg::check_symmetric(&self.stiffness, "K", self.tol.symmetry)?;
        Ok(())
    }
}

/// Modal decomposition: decoupled second-order modes with mass-normalized
/// eigenvectors, sorted by ascending eigenfrequency (rigid modes first).
#[derive(Debug, Clone)]
pub struct ModalForm {
    /// Eigenfrequencies, rad/s, ascending.
    pub omega: Vec<f64>,
    /// Modal damping ratios (zero for rigid modes).
    pub zeta: Vec<f64>,
    /// Mass-normalized eigenvector matrix, n_x by n_x.
    pub v_tilde: DMatrix<f64>,
    /// Modal input map V~^T Phi_a, n_x by n_u.
    pub b_modal: DMatrix<f64>,
    /// Modal output map Phi_s(p) V~, n_y by n_x.
    pub c_modal: PositionPolynomial,
    /// Number of rigid-body modes (leading block).
    pub n_rigid: usize,
    pub workspace: Workspace,
    pub tol: ModelTolerances,
}

/// Solve the symmetric generalized eigenproblem K v = lambda M v via a
/// Cholesky factorization of M. Returns ascending eigenvalues and
/// mass-normalized eigenvectors.
fn generalized_symmetric_eig(
    mass: &DMatrix<f64>,
    stiffness: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = mass.clone().cholesky().ok_or(Error::NotPositive {
        name: "M",
        eigenvalue: f64::NAN,
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigSolveFailure("Cholesky factor not invertible".into()))?;
    // symmetric reduced problem: L^-1 K L^-T
    let reduced = linalg::symmetrize(&(&l_inv * stiffness * l_inv.transpose()));
    let eig = reduced.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let n = mass.nrows();
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    let back = l_inv.transpose();
    for (k, &idx) in order.iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let v = &back * eig.eigenvectors.column(idx);
        vectors.set_column(k, &v);
    }
    Ok((values, vectors))
}

/// Diagonalize a mechanical model into modal form.
///
/// Requires proportional damping: the modal damping matrix must be
/// diagonal to within the configured tolerance, otherwise the model is
/// rejected rather than silently approximated.
pub fn to_modal(model: &MechModel) -> Result<ModalForm> {
    model.validate()?;
    let (lambdas, v_tilde) = generalized_symmetric_eig(&model.mass, &model.stiffness)?;

    let lambda_max = lambdas.iter().cloned().fold(0.0, f64::max);
    let rigid_lambda = model.tol.rigid_omega * model.tol.rigid_omega;
    if let Some(&l) = lambdas
        .iter()
        .find(|&&l| l < -rigid_lambda.max(1e-12 * lambda_max.max(1.0)))
    {
        return Err(Error::NotPositive {
            name: "K",
            eigenvalue: l,
        });
    }

    let omega: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            let w = l.max(0.0).sqrt();
            if w <= model.tol.rigid_omega {
                0.0
            } else {
                w
            }
        })
        .collect();
    let n_rigid = omega.iter().filter(|&&w| w == 0.0).count();

    // proportional damping check on V~^T D V~
    let d_modal = linalg::symmetrize(&(v_tilde.transpose() * &model.damping * &v_tilde));
    let mut diag_mass = 0.0;
    let mut off_mass = 0.0;
    for i in 0..d_modal.nrows() {
        for j in 0..d_modal.ncols() {
            let x = d_modal[(i, j)] * d_modal[(i, j)];
            if i == j {
                diag_mass += x;
            } else {
                off_mass += x;
            }
        }
    }
    let off = off_mass.sqrt();
    let diag = diag_mass.sqrt();
    if off > model.tol.proportional_damping * diag.max(f64::MIN_POSITIVE) && off > 0.0 {
        return Err(Error::NonProportionalDamping {
            off_diag: off,
            tol: model.tol.proportional_damping * diag,
        });
    }

    let zeta: Vec<f64> = omega
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            if w == 0.0 {
                0.0
            } else {
                d_modal[(i, i)] / (2.0 * w)
            }
        })
        .collect();

    let b_modal = v_tilde.transpose() * &model.actuator_map;
    let c_modal = model.sensor_map.mul_const_right(&v_tilde);

    Ok(ModalForm {
        omega,
        zeta,
        v_tilde,
        b_modal,
        c_modal,
        n_rigid,
        workspace: model.workspace,
        tol: model.tol,
    })
}

impl ModalForm {
    pub fn n_modes(&self) -> usize {
        self.omega.len()
    }

    pub fn n_flexible(&self) -> usize {
        self.n_modes() - self.n_rigid
    }

    /// Modal input map restricted to a set of modes (rows).
    pub fn b_modal_rows(&self, modes: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(modes.len(), self.b_modal.ncols());
        for (r, &m) in modes.iter().enumerate() {
            out.set_row(r, &self.b_modal.row(m));
        }
        out
    }
}

/// Modal state space grouped per mode: x = (q_1, qd_1, q_2, qd_2, ...),
/// rigid modes first, flexible blocks [[0, 1], [-w^2, -2 z w]].
#[derive(Debug, Clone)]
pub struct PartitionedLpvPlant {
    pub n_rigid: usize,
    pub n_flexible: usize,
    /// Per-mode eigenfrequencies, rigid (zeros) first.
    pub omega: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Rigid block 2 n_RB square.
    pub a_rb: DMatrix<f64>,
    /// Flexible block 2 n_FM square, block diagonal.
    pub a_fm: DMatrix<f64>,
    /// Rigid input rows, 2 n_RB by n_u.
    pub b_rb: DMatrix<f64>,
    /// Flexible input rows, 2 n_FM by n_u.
    pub b_fm: DMatrix<f64>,
    /// Output over rigid mode states, n_y by 2 n_RB.
    pub c_rb: PositionPolynomial,
    /// Output over flexible mode states, n_y by 2 n_FM.
    pub c_fm: PositionPolynomial,
    pub workspace: Workspace,
    pub tol: ModelTolerances,
}

/// Group modal coordinates into per-mode (position, velocity) blocks and
/// partition rigid from flexible dynamics.
pub fn group_and_partition(modal: &ModalForm) -> PartitionedLpvPlant {
    let n_rb = modal.n_rigid;
    let n_fm = modal.n_flexible();
    let n_u = modal.b_modal.ncols();
    let n_y = modal.c_modal.nrows();

    let mut a_rb = DMatrix::zeros(2 * n_rb, 2 * n_rb);
    let mut b_rb = DMatrix::zeros(2 * n_rb, n_u);
    for m in 0..n_rb {
        a_rb[(2 * m, 2 * m + 1)] = 1.0;
        for u in 0..n_u {
            b_rb[(2 * m + 1, u)] = modal.b_modal[(m, u)];
        }
    }

    let mut a_fm = DMatrix::zeros(2 * n_fm, 2 * n_fm);
    let mut b_fm = DMatrix::zeros(2 * n_fm, n_u);
    for f in 0..n_fm {
        let mode = n_rb + f;
        let (w, z) = (modal.omega[mode], modal.zeta[mode]);
        a_fm[(2 * f, 2 * f + 1)] = 1.0;
        a_fm[(2 * f + 1, 2 * f)] = -w * w;
        a_fm[(2 * f + 1, 2 * f + 1)] = -2.0 * z * w;
        for u in 0..n_u {
            b_fm[(2 * f + 1, u)] = modal.b_modal[(mode, u)];
        }
    }

    // outputs act on position states only
    let mut c_rb = PositionPolynomial::zeros(n_y, 2 * n_rb, modal.workspace);
    for i in 0..n_y {
        for m in 0..n_rb {
            *c_rb.entry_mut(i, 2 * m) = modal.c_modal.entry(i, m).clone();
        }
    }
    let mut c_fm = PositionPolynomial::zeros(n_y, 2 * n_fm, modal.workspace);
    for i in 0..n_y {
        for f in 0..n_fm {
            *c_fm.entry_mut(i, 2 * f) = modal.c_modal.entry(i, n_rb + f).clone();
        }
    }

    PartitionedLpvPlant {
        n_rigid: n_rb,
        n_flexible: n_fm,
        omega: modal.omega.clone(),
        zeta: modal.zeta.clone(),
        a_rb,
        a_fm,
        b_rb,
        b_fm,
        c_rb,
        c_fm,
        workspace: modal.workspace,
        tol: modal.tol,
    }
}
