//! Zero-order-hold discretization of the observer design model.

use nalgebra::DMatrix;

use crate::decouple::TruncatedPlant;
use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::poly::{SchedulingPoint, Workspace};

/// Exponential argument above which discretization is refused; the result
/// would overflow or lose all precision long before this.
const MAX_EXP_NORM: f64 = 1e6;

/// Zero-order-hold discretization.
///
/// Computes Ad = exp(A Ts) and Bd = int_0^Ts exp(A tau) dtau B through the
/// augmented matrix exponential exp([[A, B], [0, 0]] Ts), which is exact
/// for singular A as well and coincides with A^-1 (exp(A Ts) - I) B
/// whenever A is invertible.
pub fn zoh_discretize(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    ts: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    assert!(ts > 0.0, "sampling time must be positive");
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "A must be square");
    assert_eq!(b.nrows(), n, "B row count must match A");
    let m = b.ncols();

    let scale = a.amax().max(b.amax()) * ts;
    if !scale.is_finite() || scale > MAX_EXP_NORM {
        return Err(Error::NonFinite("zoh_discretize exponential argument"));
    }

    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = expm(&aug);
    let ad = e.view((0, 0), (n, n)).clone_owned();
    let bd = e.view((0, n), (n, m)).clone_owned();
    if ad.iter().chain(bd.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("zoh_discretize result"));
    }
    Ok((ad, bd))
}

/// Discrete-time observer design model at sampling time Ts. The state is
/// (rigid positions/velocities, retained flexible positions/velocities);
/// the output map and compliance feed-through stay position-dependent.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub ts: f64,
    pub n_rigid: usize,
    truncated: TruncatedPlant,
}

impl DiscreteModel {
    pub fn from_truncated(truncated: &TruncatedPlant, ts: f64) -> Result<Self> {
        let (a, b) = zoh_discretize(&truncated.a_design(), &truncated.b_design(), ts)?;
        Ok(Self {
            a,
            b,
            ts,
            n_rigid: truncated.n_rigid,
            truncated: truncated.clone(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// Output map [I, C_FM^r(p)] frozen at a point.
    pub fn c_at(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        self.truncated.c_at(p)
    }

    /// Compliance feed-through frozen at a point.
    pub fn d_at(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        self.truncated.dc_at(p)
    }

    pub fn workspace(&self) -> Workspace {
        self.truncated.workspace
    }

    pub fn truncated(&self) -> &TruncatedPlant {
        &self.truncated
    }
}
