//! Discrete algebraic Riccati equation solver for predictor gain design.
//!
//! Solves the filter-form DARE
//!
//!   P = A P A^T - A P C^T (C P C^T + R)^-1 C P A^T + Q
//!
//! by the structure-preserving doubling iteration, with a Newton/Stein
//! refinement fallback driven by the residual. The predictor gain is
//!   L = A P C^T (C P C^T + R)^-1.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, symmetrize};

/// Convergence threshold on the doubling increment (relative Frobenius).
const DOUBLING_TOL: f64 = 1e-12;
/// Iteration cap for the doubling loop.
const MAX_DOUBLING_ITERS: usize = 200;
/// Residual target: ||residual|| <= RESIDUAL_TOL * (1 + ||P||).
const RESIDUAL_TOL: f64 = 1e-8;
/// Newton refinement cap.
const MAX_NEWTON_ITERS: usize = 15;

/// Solution of the filter DARE: stabilizing covariance and predictor gain.
#[derive(Debug, Clone)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual at the returned P.
    pub residual: f64,
    /// Spectral radius of the closed predictor matrix A - L C.
    pub closed_loop_radius: f64,
}

/// Riccati residual P - (A P A^T - A P C^T (C P C^T + R)^-1 C P A^T + Q).
fn residual_norm(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let cpc = c * p * c.transpose() + r;
    let inv = cpc.clone().try_inverse().ok_or(Error::IllConditioned {
        what: "innovation covariance C P C^T + R",
        cond: f64::INFINITY,
    })?;
    let apc = a * p * c.transpose();
    let rhs = a * p * a.transpose() - &apc * inv * apc.transpose() + q;
    Ok((p - rhs).norm())
}

fn predictor_gain(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let cpc = c * p * c.transpose() + r;
    let inv = cpc.clone().try_inverse().ok_or(Error::IllConditioned {
        what: "innovation covariance C P C^T + R",
        cond: f64::INFINITY,
    })?;
    Ok(a * p * c.transpose() * inv)
}

/// Structure-preserving doubling iteration on the dual (control-form)
/// problem. The filter DARE in (A, C) maps onto the control form through
/// A -> A^T, B -> C^T.
fn doubling(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().ok_or(Error::IllConditioned {
        what: "measurement covariance R",
        cond: f64::INFINITY,
    })?;

    // control-form data
    let mut ak = a.transpose();
    let mut gk = symmetrize(&(c.transpose() * &r_inv * c));
    let mut hk = q.clone();

    let eye = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_DOUBLING_ITERS {
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        let w_inv_a = lu.solve(&ak).ok_or(Error::IllConditioned {
            what: "doubling iterate I + G H",
            cond: f64::INFINITY,
        })?;
        let w_inv_g = lu.solve(&gk).ok_or(Error::IllConditioned {
            what: "doubling iterate I + G H",
            cond: f64::INFINITY,
        })?;

        let a_next = &ak * &w_inv_a;
        let g_next = symmetrize(&(&gk + &ak * &w_inv_g * ak.transpose()));
        let h_next = symmetrize(&(&hk + ak.transpose() * &hk * &w_inv_a));

        let inc = (&h_next - &hk).norm();
        let good = inc <= DOUBLING_TOL * h_next.norm().max(1.0);
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if !hk.iter().all(|x| x.is_finite()) {
            return Err(Error::NotDetectable(
                "doubling iteration diverged to non-finite values".into(),
            ));
        }
        if good {
            return Ok(hk);
        }
    }
    Err(Error::NotDetectable(format!(
        "doubling iteration did not converge in {MAX_DOUBLING_ITERS} steps"
    )))
}

/// Solve the discrete Lyapunov (Stein) equation X = F X F^T + W by
/// squaring; requires rho(F) < 1.
fn stein(f: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut x = w.clone();
    let mut fk = f.clone();
    for _ in 0..MAX_DOUBLING_ITERS {
        let update = &fk * &x * fk.transpose();
        x = symmetrize(&(&x + &update));
        fk = &fk * &fk;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NotDetectable(
                "Stein iteration diverged; closed loop not stable".into(),
            ));
        }
        if fk.norm() < 1e-150 || update.norm() <= 1e-16 * x.norm().max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::NotDetectable(
        "Stein iteration did not converge".into(),
    ))
}

/// Newton step: with gain L fixed, the exact solution of the linearized
/// equation solves P = F P F^T + Q + L R L^T, F = A - L C.
fn newton_refine(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mut p: DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_NEWTON_ITERS {
        let res = residual_norm(a, c, q, r, &p)?;
        if res <= RESIDUAL_TOL * (1.0 + p.norm()) {
            return Ok(p);
        }
        let l = predictor_gain(a, c, r, &p)?;
        let f = a - &l * c;
        if spectral_radius(&f) >= 1.0 {
            return Err(Error::NotDetectable(
                "Newton iterate lost closed-loop stability".into(),
            ));
        }
        let w = symmetrize(&(q + &l * r * l.transpose()));
        p = stein(&f, &w)?;
    }
    Ok(p)
}

/// Solve the filter DARE and form the predictor gain.
///
/// `q` is the process-noise covariance (PSD), `r` the measurement-noise
/// covariance (PD). Fails with `NotDetectable` when no stabilizing
/// solution is found.
pub fn solve_dare(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "A must be square");
    assert_eq!(c.ncols(), n, "C column count must match A");
    assert_eq!(q.nrows(), n, "Q must be n x n");
    assert_eq!(r.nrows(), c.nrows(), "R must match output count");

    let mut p = symmetrize(&doubling(a, c, q, r)?);
    let mut res = residual_norm(a, c, q, r, &p)?;
    if res > RESIDUAL_TOL * (1.0 + p.norm()) {
        p = newton_refine(a, c, q, r, p)?;
        res = residual_norm(a, c, q, r, &p)?;
        if res > RESIDUAL_TOL * (1.0 + p.norm()) {
            return Err(Error::NotDetectable(format!(
                "Riccati residual {res:.3e} above tolerance after refinement"
            )));
        }
    }

    let gain = predictor_gain(a, c, r, &p)?;
    let closed = a - &gain * c;
    let rho = spectral_radius(&closed);
    // a gain of exactly zero leaves the open-loop poles; that is fine when
    // A itself is stable (e.g. no measurements), otherwise reject
    if rho >= 1.0 && gain.norm() > 0.0 {
        return Err(Error::NotDetectable(format!(
            "closed predictor spectral radius {rho:.6} >= 1"
        )));
    }
    if rho >= 1.0 {
        return Err(Error::NotDetectable(format!(
            "open-loop spectral radius {rho:.6} >= 1 with zero gain"
        )));
    }
    Ok(DareSolution {
        p,
        gain,
        residual: res,
        closed_loop_radius: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_golden_section_solution() {
        // a = c = q = r = 1: P^2 - P - 1 = 0, P = (1 + sqrt(5)) / 2
        let sol = solve_dare(&m1(1.0), &m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(sol.p[(0, 0)], phi, epsilon = 1e-10);
        assert_relative_eq!(sol.gain[(0, 0)], (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
        assert!(sol.residual <= 1e-8 * (1.0 + sol.p.norm()));
        assert!(sol.closed_loop_radius < 1.0);
    }

    #[test]
    fn no_measurement_reduces_to_lyapunov() {
        // c = 0 with stable a: L = 0 and P solves P = a P a + q
        let a = 0.8;
        let q = 2.0;
        let sol = solve_dare(&m1(a), &m1(0.0), &m1(q), &m1(1.0)).unwrap();
        assert_relative_eq!(sol.gain[(0, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(sol.p[(0, 0)], q / (1.0 - a * a), max_relative = 1e-10);
    }

    #[test]
    fn zero_process_noise_gives_zero_solution() {
        let sol = solve_dare(&m1(0.5), &m1(1.0), &m1(0.0), &m1(1.0)).unwrap();
        assert_relative_eq!(sol.p[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(sol.gain[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn undetectable_unstable_mode_is_rejected() {
        // unstable a with no measurement cannot be stabilized
        assert!(matches!(
            solve_dare(&m1(1.5), &m1(0.0), &m1(1.0), &m1(1.0)),
            Err(Error::NotDetectable(_))
        ));
    }

    #[test]
    fn marginally_stable_multivariable_case() {
        // discretized double integrator, position measured
        let ts = 0.01;
        let a = DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let q = DMatrix::identity(2, 2) * 1e-6;
        let r = m1(1e-4);
        let sol = solve_dare(&a, &c, &q, &r).unwrap();
        assert!(sol.closed_loop_radius < 1.0);
        assert!(sol.residual <= 1e-8 * (1.0 + sol.p.norm()));
        // P must be PSD
        let eig = sol.p.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
    }

    #[test]
    fn deterministic_across_calls() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.02, 0.0, 0.97]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let q = DMatrix::from_row_slice(2, 2, &[1e-5, 0.0, 0.0, 2e-5]);
        let r = m1(1e-3);
        let s1 = solve_dare(&a, &c, &q, &r).unwrap();
        let s2 = solve_dare(&a, &c, &q, &r).unwrap();
        assert_eq!(s1.p, s2.p);
        assert_eq!(s1.gain, s2.gain);
    }
}
