//! Position-dependent polynomial maps over the planar workspace.
//!
//! Output matrices of the stage model depend on the measured (x, y)
//! position. That dependence is carried exactly as per-entry bivariate
//! polynomials so that freezing, decoupling, and compliance corrections
//! stay closed-form.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular workspace of the scheduling variables, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Workspace {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Self {
        assert!(x_lo < x_hi && y_lo < y_hi, "degenerate workspace");
        Self {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        }
    }

    /// Symmetric square workspace [-half, half]^2.
    pub fn centered(half: f64) -> Self {
        Self::new(-half, half, -half, half)
    }

    pub fn contains(&self, p: SchedulingPoint) -> bool {
        p.x >= self.x_lo && p.x <= self.x_hi && p.y >= self.y_lo && p.y <= self.y_hi
    }

    pub fn check(&self, p: SchedulingPoint) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfWorkspace {
                x: p.x,
                y: p.y,
                x_lo: self.x_lo,
                x_hi: self.x_hi,
                y_lo: self.y_lo,
                y_hi: self.y_hi,
            })
        }
    }

    /// Tensor grid of nx-by-ny points spanning the workspace, row-major in
    /// y then x: index = ix * ny + iy.
    pub fn grid(&self, nx: usize, ny: usize) -> Vec<SchedulingPoint> {
        assert!(nx >= 1 && ny >= 1);
        let xs: Vec<f64> = (0..nx)
            .map(|i| {
                if nx == 1 {
                    0.5 * (self.x_lo + self.x_hi)
                } else {
                    self.x_lo + (self.x_hi - self.x_lo) * i as f64 / (nx - 1) as f64
                }
            })
            .collect();
        let ys: Vec<f64> = (0..ny)
            .map(|i| {
                if ny == 1 {
                    0.5 * (self.y_lo + self.y_hi)
                } else {
                    self.y_lo + (self.y_hi - self.y_lo) * i as f64 / (ny - 1) as f64
                }
            })
            .collect();
        let mut pts = Vec::with_capacity(nx * ny);
        for &x in &xs {
            for &y in &ys {
                pts.push(SchedulingPoint::new(x, y));
            }
        }
        pts
    }
}

/// Planar scheduling coordinate (q_x, q_y) in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulingPoint {
    pub x: f64,
    pub y: f64,
}

impl SchedulingPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A single bivariate polynomial sum_{v,w} c[v][w] x^v y^w.
///
/// Coefficients are stored dense, row index = x power, column index = y
/// power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    /// (d_x + 1) rows by (d_y + 1) columns.
    pub coeffs: DMatrix<f64>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Self {
            coeffs: DMatrix::zeros(1, 1),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coeffs: DMatrix::from_element(1, 1, c),
        }
    }

    pub fn from_coeffs(coeffs: DMatrix<f64>) -> Self {
        Self { coeffs }
    }

    pub fn degree(&self) -> (usize, usize) {
        (self.coeffs.nrows() - 1, self.coeffs.ncols() - 1)
    }

    /// Exact evaluation by nested Horner in y then x.
    pub fn eval(&self, p: SchedulingPoint) -> f64 {
        let mut acc = 0.0;
        for v in (0..self.coeffs.nrows()).rev() {
            let mut row = 0.0;
            for w in (0..self.coeffs.ncols()).rev() {
                row = row * p.y + self.coeffs[(v, w)];
            }
            acc = acc * p.x + row;
        }
        acc
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: &self.coeffs * s,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let rows = self.coeffs.nrows().max(other.coeffs.nrows());
        let cols = self.coeffs.ncols().max(other.coeffs.ncols());
        let mut c = DMatrix::zeros(rows, cols);
        for v in 0..self.coeffs.nrows() {
            for w in 0..self.coeffs.ncols() {
                c[(v, w)] += self.coeffs[(v, w)];
            }
        }
        for v in 0..other.coeffs.nrows() {
            for w in 0..other.coeffs.ncols() {
                c[(v, w)] += other.coeffs[(v, w)];
            }
        }
        Self { coeffs: c }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let rows = self.coeffs.nrows() + other.coeffs.nrows() - 1;
        let cols = self.coeffs.ncols() + other.coeffs.ncols() - 1;
        let mut c = DMatrix::zeros(rows, cols);
        for v1 in 0..self.coeffs.nrows() {
            for w1 in 0..self.coeffs.ncols() {
                let a = self.coeffs[(v1, w1)];
                if a == 0.0 {
                    continue;
                }
                for v2 in 0..other.coeffs.nrows() {
                    for w2 in 0..other.coeffs.ncols() {
                        c[(v1 + v2, w1 + w2)] += a * other.coeffs[(v2, w2)];
                    }
                }
            }
        }
        Self { coeffs: c }
    }

    /// Negate in place semantics kept functional for clarity.
    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// True if every coefficient beyond the constant term is below `tol`
    /// in magnitude.
    pub fn is_constant(&self, tol: f64) -> bool {
        for v in 0..self.coeffs.nrows() {
            for w in 0..self.coeffs.ncols() {
                if (v, w) != (0, 0) && self.coeffs[(v, w)].abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[(0, 0)]
    }

    /// Largest coefficient magnitude, used for relative tolerances.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max)
    }
}

/// Matrix whose entries are bivariate polynomials in the scheduling point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionPolynomial {
    rows: usize,
    cols: usize,
    entries: Vec<Poly2>, // row-major
    pub workspace: Workspace,
}

impl PositionPolynomial {
    pub fn zeros(rows: usize, cols: usize, workspace: Workspace) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Poly2::zero(); rows * cols],
            workspace,
        }
    }

    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: Vec<Poly2>,
        workspace: Workspace,
    ) -> Self {
        assert_eq!(entries.len(), rows * cols);
        Self {
            rows,
            cols,
            entries,
            workspace,
        }
    }

    /// Wrap a constant matrix as a degree-(0,0) polynomial map.
    pub fn constant(m: &DMatrix<f64>, workspace: Workspace) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| Poly2::constant(m[(i, j)]))
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
            workspace,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &Poly2 {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Poly2 {
        &mut self.entries[i * self.cols + j]
    }

    /// Exact evaluation at a point (no workspace check; callers gate).
    pub fn eval(&self, p: SchedulingPoint) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(p))
    }

    /// Evaluation with the workspace bound enforced.
    pub fn eval_checked(&self, p: SchedulingPoint) -> Result<DMatrix<f64>> {
        self.workspace.check(p)?;
        let m = self.eval(p);
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("position polynomial evaluation"));
        }
        Ok(m)
    }

    /// Column sub-block [all rows, col_start .. col_start + n).
    pub fn columns(&self, col_start: usize, n: usize) -> Self {
        let entries = (0..self.rows)
            .flat_map(|i| (col_start..col_start + n).map(move |j| (i, j)))
            .map(|(i, j)| self.entry(i, j).clone())
            .collect();
        Self {
            rows: self.rows,
            cols: n,
            entries,
            workspace: self.workspace,
        }
    }

    /// Product with a constant matrix on the right: self(p) * k.
    pub fn mul_const_right(&self, k: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, k.nrows());
        let mut out = Self::zeros(self.rows, k.ncols(), self.workspace);
        for i in 0..self.rows {
            for j in 0..k.ncols() {
                let mut acc = Poly2::zero();
                for l in 0..self.cols {
                    acc = acc.add(&self.entry(i, l).scale(k[(l, j)]));
                }
                *out.entry_mut(i, j) = acc;
            }
        }
        out
    }

    /// Product with a constant matrix on the left: k * self(p).
    pub fn mul_const_left(&self, k: &DMatrix<f64>) -> Self {
        assert_eq!(k.ncols(), self.rows);
        let mut out = Self::zeros(k.nrows(), self.cols, self.workspace);
        for i in 0..k.nrows() {
            for j in 0..self.cols {
                let mut acc = Poly2::zero();
                for l in 0..self.rows {
                    acc = acc.add(&self.entry(l, j).scale(k[(i, l)]));
                }
                *out.entry_mut(i, j) = acc;
            }
        }
        out
    }

    /// Polynomial matrix product self(p) * other(p).
    pub fn mul_poly(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols, self.workspace);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Poly2::zero();
                for l in 0..self.cols {
                    acc = acc.add(&self.entry(i, l).mul(other.entry(l, j)));
                }
                *out.entry_mut(i, j) = acc;
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
            workspace: self.workspace,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.scale(s)).collect(),
            workspace: self.workspace,
        }
    }

    /// Horizontal concatenation [self other].
    pub fn hcat(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        let mut out = Self::zeros(self.rows, self.cols + other.cols, self.workspace);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(i, j) = self.entry(i, j).clone();
            }
            for j in 0..other.cols {
                *out.entry_mut(i, self.cols + j) = other.entry(i, j).clone();
            }
        }
        out
    }

    /// Determinant as a polynomial, by cofactor expansion. Intended for the
    /// small square output blocks (n <= 4).
    pub fn det_poly(&self) -> Poly2 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        match n {
            0 => Poly2::constant(1.0),
            1 => self.entry(0, 0).clone(),
            _ => {
                let mut acc = Poly2::zero();
                for j in 0..n {
                    let minor = self.minor(0, j);
                    let term = self.entry(0, j).mul(&minor.det_poly());
                    acc = if j % 2 == 0 {
                        acc.add(&term)
                    } else {
                        acc.add(&term.neg())
                    };
                }
                acc
            }
        }
    }

    fn minor(&self, row: usize, col: usize) -> Self {
        let n = self.rows;
        let mut entries = Vec::with_capacity((n - 1) * (n - 1));
        for i in 0..n {
            if i == row {
                continue;
            }
            for j in 0..n {
                if j == col {
                    continue;
                }
                entries.push(self.entry(i, j).clone());
            }
        }
        Self {
            rows: n - 1,
            cols: n - 1,
            entries,
            workspace: self.workspace,
        }
    }

    /// Adjugate (transposed cofactor matrix) as a polynomial matrix.
    pub fn adjugate(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 1 {
            return Self::constant(&DMatrix::from_element(1, 1, 1.0), self.workspace);
        }
        let mut out = Self::zeros(n, n, self.workspace);
        for i in 0..n {
            for j in 0..n {
                let cof = self.minor(i, j).det_poly();
                let signed = if (i + j) % 2 == 0 { cof } else { cof.neg() };
                // transpose: adj[j][i] = cofactor[i][j]
                *out.entry_mut(j, i) = signed;
            }
        }
        out
    }

    /// Exact polynomial inverse when the determinant is a nonzero constant
    /// over the workspace (adjugate over constant determinant). Returns
    /// None when the determinant actually varies with position.
    pub fn try_poly_inverse(&self) -> Option<Self> {
        if self.rows != self.cols {
            return None;
        }
        let det = self.det_poly();
        let scale = det.max_coeff();
        if scale == 0.0 {
            return None;
        }
        if !det.is_constant(1e-12 * scale) {
            return None;
        }
        let d0 = det.constant_term();
        if d0 == 0.0 {
            return None;
        }
        Some(self.adjugate().scale(1.0 / d0))
    }

    /// Largest coefficient magnitude over all entries.
    pub fn max_coeff(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_coeff())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ws() -> Workspace {
        Workspace::centered(1.0)
    }

    #[test]
    fn poly_eval_is_exact_double_sum() {
        // 2 + 3 x + 4 y + 5 x y + 7 x^2 y
        let mut c = DMatrix::zeros(3, 2);
        c[(0, 0)] = 2.0;
        c[(1, 0)] = 3.0;
        c[(0, 1)] = 4.0;
        c[(1, 1)] = 5.0;
        c[(2, 1)] = 7.0;
        let p = Poly2::from_coeffs(c);
        let at = SchedulingPoint::new(0.3, -0.2);
        let expected = 2.0 + 3.0 * 0.3 + 4.0 * (-0.2) + 5.0 * 0.3 * (-0.2)
            + 7.0 * 0.3 * 0.3 * (-0.2);
        assert_relative_eq!(p.eval(at), expected, epsilon = 1e-15);
    }

    #[test]
    fn poly_mul_matches_pointwise_product() {
        let a = Poly2::from_coeffs(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = Poly2::from_coeffs(DMatrix::from_row_slice(2, 1, &[5.0, -1.0]));
        let prod = a.mul(&b);
        for &(x, y) in &[(0.1, 0.7), (-0.5, 0.3), (0.9, -0.9)] {
            let p = SchedulingPoint::new(x, y);
            assert_relative_eq!(prod.eval(p), a.eval(p) * b.eval(p), epsilon = 1e-14);
        }
    }

    #[test]
    fn unimodular_matrix_has_polynomial_inverse() {
        // [[1, x], [0, 1]] has det = 1; inverse is [[1, -x], [0, 1]]
        let x = Poly2::from_coeffs(DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        let one = Poly2::constant(1.0);
        let zero = Poly2::zero();
        let m = PositionPolynomial::from_entries(
            2,
            2,
            vec![one.clone(), x, zero, one],
            ws(),
        );
        let inv = m.try_poly_inverse().expect("unit determinant");
        let p = SchedulingPoint::new(0.5, 0.0);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.0, 1.0]);
        assert_relative_eq!(inv.eval(p), expected, epsilon = 1e-14);
        // product with original is the identity everywhere
        let prod = m.mul_poly(&inv).eval(SchedulingPoint::new(-0.8, 0.2));
        assert_relative_eq!(prod, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn varying_determinant_has_no_polynomial_inverse() {
        // [[1 + x, 0], [0, 1]] has det = 1 + x
        let oneplux = Poly2::from_coeffs(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
        let m = PositionPolynomial::from_entries(
            2,
            2,
            vec![oneplux, Poly2::zero(), Poly2::zero(), Poly2::constant(1.0)],
            ws(),
        );
        assert!(m.try_poly_inverse().is_none());
    }

    #[test]
    fn workspace_check_rejects_outside_points() {
        let w = Workspace::centered(0.15);
        assert!(w.check(SchedulingPoint::new(0.1, -0.1)).is_ok());
        assert!(w.check(SchedulingPoint::new(0.2, 0.0)).is_err());
    }

    #[test]
    fn grid_covers_corners_and_center() {
        let w = Workspace::centered(0.15);
        let g = w.grid(3, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], SchedulingPoint::new(-0.15, -0.15));
        assert_eq!(g[4], SchedulingPoint::new(0.0, 0.0));
        assert_eq!(g[8], SchedulingPoint::new(0.15, 0.15));
    }
}
