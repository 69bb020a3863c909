//! Dense linear-algebra kernels: symmetric (Cholesky) factorization, real
//! Schur decomposition, and a Sylvester solver with a cached-Schur fast path.
//!
//! The model only ever solves `AF + FB = C` with `A`, `B` symmetric positive
//! definite, so the solver specializes to spectral decompositions; the
//! general quasi-upper-triangular back-substitution is kept as the fallback
//! for nearly-symmetric inputs (e.g. kernels loaded from files).

mod eigen;
mod schur;
mod sylvester;

pub use sylvester::{solve_sylvester, solve_sylvester_general};

use crate::mat::Mat;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use num_traits::Float;

/// Relative tolerance used when deciding whether an input is symmetric.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Cholesky hit a non-positive pivot; the index names the failing row.
    NotPositiveDefinite { pivot: usize },
    /// QR/QL iteration exceeded its sweep cap.
    NonConvergence { iterations: usize },
    /// An eigenvalue of `A` (numerically) equals the negative of one of `B`.
    SpectralOverlap,
    /// The computed solution failed the residual check.
    ResidualTooLarge { residual: f64 },
    DimensionMismatch { context: String },
    NotSquare { rows: usize, cols: usize },
    NonFiniteInput,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot} non-positive)")
            }
            LinalgError::NonConvergence { iterations } => {
                write!(f, "eigenvalue iteration failed to converge after {iterations} sweeps")
            }
            LinalgError::SpectralOverlap => {
                write!(f, "spectra of A and -B overlap; Sylvester equation is singular")
            }
            LinalgError::ResidualTooLarge { residual } => {
                write!(f, "Sylvester solution residual {residual:e} exceeds tolerance")
            }
            LinalgError::DimensionMismatch { context } => {
                write!(f, "dimension mismatch: {context}")
            }
            LinalgError::NotSquare { rows, cols } => {
                write!(f, "matrix is not square ({rows}x{cols})")
            }
            LinalgError::NonFiniteInput => write!(f, "input contains non-finite entries"),
        }
    }
}

impl core::error::Error for LinalgError {}

/// Cholesky factorization `A = LLᵀ` of a symmetric positive-definite matrix.
///
/// Carries the log-determinant and the diagonal of `A⁻¹` so callers never
/// need a materialized inverse.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: Mat,
    log_det: f64,
    inv_diag: Vec<f64>,
    a_diag: Vec<f64>,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Lower-triangular factor `L`.
    pub fn l(&self) -> &Mat {
        &self.l
    }

    /// `log |A|`
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal of `A⁻¹`.
    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }

    /// Diagonal of the original `A`.
    pub fn a_diag(&self) -> &[f64] {
        &self.a_diag
    }

    /// Solves `L y = b` (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = y[i];
            for k in 0..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i];
        }
        y
    }

    /// Solves `A x = b` via `L` then `Lᵀ`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        assert_eq!(b.rows(), self.dim(), "rhs row count mismatch");
        let mut out = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let col = b.col(j);
            out.set_col(j, &self.solve_vec(&col));
        }
        out
    }

    /// Quadratic form `xᵀ A⁻¹ x = ‖L⁻¹x‖²`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let y = self.solve_lower(x);
        let mut s = 0.0;
        for v in y {
            s += v * v;
        }
        s
    }

    /// `Tr(X A⁻¹ Xᵀ)` summed over the rows of `X`.
    pub fn trace_quad_rows(&self, x: &Mat) -> f64 {
        assert_eq!(x.cols(), self.dim(), "row length mismatch");
        let mut s = 0.0;
        for i in 0..x.rows() {
            s += self.quad_form(x.row(i));
        }
        s
    }

    /// Reconstructs `LLᵀ`; used by verification paths.
    pub fn reconstruct(&self) -> Mat {
        self.l.mul_transpose(&self.l)
    }
}

/// Factorizes a symmetric positive-definite matrix as `LLᵀ`.
///
/// Only the lower triangle of `a` is read; the caller is responsible for
/// symmetry (construction enforces it everywhere in this crate).
pub fn spd_factorize(a: &Mat) -> Result<SpdFactor, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { pivot: j });
        }
        let ljj = Float::sqrt(d);
        l[(j, j)] = ljj;
        log_det += 2.0 * Float::ln(ljj);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    // (A⁻¹)ᵢᵢ = ‖L⁻¹eᵢ‖²
    let mut inv_diag = vec![0.0; n];
    let mut col = vec![0.0; n];
    for i in 0..n {
        for c in col.iter_mut() {
            *c = 0.0;
        }
        col[i] = 1.0;
        for r in i..n {
            let row = l.row(r);
            let mut s = col[r];
            for k in i..r {
                s -= row[k] * col[k];
            }
            col[r] = s / row[r];
        }
        let mut q = 0.0;
        for &v in &col[i..] {
            q += v * v;
        }
        inv_diag[i] = q;
    }
    let a_diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    Ok(SpdFactor { l, log_det, inv_diag, a_diag })
}

/// Real Schur decomposition `A = Q T Qᵀ` with orthogonal `Q` and
/// quasi-upper-triangular `T` (1x1 and 2x2 diagonal blocks).
///
/// For symmetric input `T` is diagonal and the decomposition is the spectral
/// one, which is what the training loop caches for the document kernel.
#[derive(Debug, Clone)]
pub struct SchurFactor {
    q: Mat,
    t: Mat,
    diagonal_t: bool,
}

impl SchurFactor {
    pub fn dim(&self) -> usize {
        self.t.rows()
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn t(&self) -> &Mat {
        &self.t
    }

    /// True when `T` is exactly diagonal (symmetric input).
    pub fn is_diagonal(&self) -> bool {
        self.diagonal_t
    }

    /// Diagonal of `T`; the eigenvalues when `T` is diagonal.
    pub fn t_diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.t[(i, i)]).collect()
    }

    /// Reconstructs `Q T Qᵀ`; used by verification paths.
    pub fn reconstruct(&self) -> Mat {
        self.q.mul(&self.t).mul_transpose(&self.q)
    }
}

/// Computes the real Schur form of a square matrix.
///
/// Symmetric inputs take the tridiagonalization + implicit-QL route and come
/// back with diagonal `T`; everything else goes through Hessenberg reduction
/// and Francis double-shift QR.
pub fn real_schur(a: &Mat) -> Result<SchurFactor, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    let scale = a.max_abs().max(1.0);
    if a.is_symmetric(SYMMETRY_TOL * scale) {
        let (q, d) = eigen::symmetric_eigen(a)?;
        let n = a.rows();
        let mut t = Mat::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = d[i];
        }
        Ok(SchurFactor { q, t, diagonal_t: true })
    } else {
        let (q, t) = schur::general_schur(a)?;
        Ok(SchurFactor { q, t, diagonal_t: false })
    }
}

/// Spectral decomposition of a symmetric matrix: `(Q, d)` with
/// `A = Q diag(d) Qᵀ` and `d` ascending.
pub fn symmetric_eigenvalues(a: &Mat) -> Result<Vec<f64>, LinalgError> {
    let (_, d) = eigen::symmetric_eigen(a)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_identity() {
        let f = spd_factorize(&Mat::identity(3)).unwrap();
        assert_eq!(f.l(), &Mat::identity(3));
        assert_eq!(f.log_det(), 0.0);
        assert_eq!(f.inv_diag(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn spd_scalar() {
        let f = spd_factorize(&Mat::from_rows(&[&[4.0]])).unwrap();
        assert_eq!(f.l()[(0, 0)], 2.0);
        assert!((f.log_det() - 4.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn spd_rejects_indefinite_naming_pivot() {
        let a = Mat::from_rows(&[&[1.0, 0.0], &[0.0, -2.0]]);
        match spd_factorize(&a) {
            Err(LinalgError::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn spd_solve_and_inv_diag() {
        // A = M Mᵀ + I is comfortably SPD.
        let m = Mat::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.4);
        let a = m.mul_transpose(&m).add(&Mat::identity(4));
        let f = spd_factorize(&a).unwrap();
        let rec = f.reconstruct();
        assert!(rec.max_abs_diff(&a) <= 1e-12 * a.max_abs());
        // solve check
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = f.solve_vec(&b);
        let ax = a.mul_vec(&x);
        for (got, want) in ax.iter().zip(b.iter()) {
            assert!((got - want).abs() < 1e-10);
        }
        // inv_diag against explicit solves
        for i in 0..4 {
            let mut e = [0.0; 4];
            e[i] = 1.0;
            let col = f.solve_vec(&e);
            assert!((f.inv_diag()[i] - col[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn schur_identity() {
        let f = real_schur(&Mat::identity(2)).unwrap();
        assert_eq!(f.q(), &Mat::identity(2));
        assert_eq!(f.t(), &Mat::identity(2));
        assert!(f.is_diagonal());
    }

    #[test]
    fn schur_symmetric_2x2_analytic() {
        let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let f = real_schur(&a).unwrap();
        assert!(f.is_diagonal());
        let mut d = f.t_diag();
        d.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!((d[1] - 3.0).abs() < 1e-12);
        assert!(f.reconstruct().max_abs_diff(&a) < 1e-12);
    }
}
