//! Dense linear-algebra helpers: matrix exponential, pseudoinverse with
//! conditioning checks, spectral radius, symmetry tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative Frobenius asymmetry ||A - A^T|| / max(1, ||A||).
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let diff = a - a.transpose();
    diff.norm() / a.norm().max(1.0)
}

/// Check symmetry to a relative tolerance, naming the matrix in the error.
pub fn check_symmetric(a: &DMatrix<f64>, name: &'static str, tol: f64) -> Result<()> {
    let asymmetry = relative_asymmetry(a);
    if asymmetry > tol {
        return Err(Error::NonSymmetric {
            name,
            asymmetry,
            tol,
        });
    }
    Ok(())
}

/// Force exact symmetry: (A + A^T) / 2.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Moore-Penrose pseudoinverse via SVD. Returns the pseudoinverse together
/// with the condition number over the retained singular values.
pub fn pinv(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(Error::RankDeficient {
            what: "pseudoinverse (zero matrix)",
            cond: f64::INFINITY,
            max_cond: f64::INFINITY,
        });
    }
    let cutoff = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|&s| s > cutoff)
        .fold(f64::INFINITY, f64::min);
    let cond = smax / smin;
    let pinv = svd
        .pseudo_inverse(cutoff)
        .map_err(|e| Error::EigSolveFailure(e.to_string()))?;
    Ok((pinv, cond))
}

/// Pseudoinverse that fails when conditioning exceeds `max_cond`.
pub fn pinv_checked(
    a: &DMatrix<f64>,
    what: &'static str,
    max_cond: f64,
) -> Result<DMatrix<f64>> {
    let (p, cond) = pinv(a)?;
    if !cond.is_finite() || cond > max_cond {
        return Err(Error::RankDeficient {
            what,
            cond,
            max_cond,
        });
    }
    Ok(p)
}

/// 1-norm (maximum absolute column sum).
fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Diagonal balancing by powers of two (LAPACK-style gebal sweep without
/// permutation). Returns (d, balanced) with balanced = D^-1 A D and d the
/// diagonal of D. Similarity by powers of two is exact in floating point.
fn balance(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&k| k != i).map(|k| b[(k, i)].abs()).sum();
            let mut r: f64 = (0..n).filter(|&k| k != i).map(|k| b[(i, k)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut f = 1.0;
            let s = c + r;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if c + r < 0.95 * s {
                converged = false;
                d[i] *= f;
                for k in 0..n {
                    b[(i, k)] /= f;
                }
                for k in 0..n {
                    b[(k, i)] *= f;
                }
            }
        }
    }
    (d, b)
}

/// Matrix exponential by scaling-and-squaring with a [13/13] Pade
/// approximant, preceded by diagonal balancing.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (d, ab) = balance(a);
    let e = expm_pade(&ab);
    // undo the similarity: exp(A) = D exp(D^-1 A D) D^-1
    let mut out = e;
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = out[(i, j)] * d[i] / d[j];
        }
    }
    out
}

fn expm_pade(a: &DMatrix<f64>) -> DMatrix<f64> {
    // Pade [13/13] coefficients.
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;

    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);

    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
        + B[7] * &a6
        + B[5] * &a4
        + B[3] * &a2
        + B[1] * &ident;
    let u = &a * u_inner;
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &ident;

    let num = &v + &u;
    let den = &v - &u;
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Pade denominator is singular; input norm out of range");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Taylor-series exponential, valid only for small norms.
    fn expm_series(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..60 {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn expm_matches_series_on_small_norms() {
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state as f64 / u64::MAX as f64) - 0.5
        };
        for n in 2..=6 {
            let a = DMatrix::from_fn(n, n, |_, _| next());
            let e = expm(&a);
            let s = expm_series(&a);
            assert_relative_eq!(e, s, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn expm_modal_block_closed_form() {
        // underdamped 2x2 companion block has a textbook closed form
        let omega = 2.0 * std::f64::consts::PI * 1050.0;
        let zeta = 0.001;
        let ts = 5e-5;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -omega * omega, -2.0 * zeta * omega]);
        let e = expm(&(a * ts));

        let wd = omega * (1.0 - zeta * zeta).sqrt();
        let (sn, cs) = ((wd * ts).sin(), (wd * ts).cos());
        let decay = (-zeta * omega * ts).exp();
        let closed = DMatrix::from_row_slice(
            2,
            2,
            &[
                decay * (cs + zeta * omega / wd * sn),
                decay * sn / wd,
                decay * (-omega * omega / wd * sn),
                decay * (cs - zeta * omega / wd * sn),
            ],
        );
        assert_relative_eq!(e, closed, max_relative = 1e-12);
    }

    #[test]
    fn expm_nilpotent_is_identity_plus_a() {
        let ts = 0.1;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, ts, 0.0, 0.0]);
        let e = expm(&a);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]);
        assert_relative_eq!(e, expected, epsilon = 1e-15);
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        let (p, cond) = pinv(&i).unwrap();
        assert_relative_eq!(p, i, epsilon = 1e-14);
        assert_relative_eq!(cond, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pinv_checked_rejects_ill_conditioned() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
        assert!(matches!(
            pinv_checked(&a, "test", 1e8),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn spectral_radius_of_rotation_scaled() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.9, -0.9, 0.0]);
        assert_relative_eq!(spectral_radius(&a), 0.9, epsilon = 1e-12);
    }
}
