//! Direct dense solver for `A F + F B = C` via Schur decomposition of both
//! sides (Bartels–Stewart).
//!
//! `A` is the small topic covariance and `B` the large document kernel, so
//! the decomposition of `B` is accepted precomputed: the training loop holds
//! the kernel fixed and factors it once, making every subsequent solve cheap.

use super::{real_schur, LinalgError, SchurFactor};
use crate::mat::Mat;
use alloc::format;
use alloc::vec;
use num_traits::Float;

/// Relative residual tolerance enforced on every returned solution.
pub const SYLVESTER_RESIDUAL_TOL: f64 = 1e-8;

/// Solves `A F + F B = C` for `F` (`A`: K×K, `B`: D×D, `C`: K×D).
///
/// Both `A` and `B` are expected symmetric positive definite, which makes the
/// equation uniquely solvable (the spectra are positive, so no eigenvalue of
/// `A` can equal the negative of one of `B`). `cached` may hold the Schur
/// factor of `B` from an earlier call; it is reused instead of refactoring.
///
/// The returned solution satisfies
/// `‖AF + FB − C‖_F / ((‖A‖_F + ‖B‖_F)·max(‖F‖_F, 1)) ≤ 1e-8`,
/// otherwise an error carrying the residual is returned.
pub fn solve_sylvester(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    cached: Option<&SchurFactor>,
) -> Result<Mat, LinalgError> {
    check_dims(a, b, c)?;
    let fa = real_schur(a)?;
    let fb_owned;
    let fb = match cached {
        Some(f) => {
            if f.dim() != b.rows() {
                return Err(LinalgError::DimensionMismatch {
                    context: format!("cached Schur factor is {}x{0}, B is {1}x{1}", f.dim(), b.rows()),
                });
            }
            f
        }
        None => {
            fb_owned = real_schur(b)?;
            &fb_owned
        }
    };
    solve_with_factors(a, b, c, &fa, fb)
}

/// Forces the general quasi-triangular back-substitution path even when the
/// inputs are symmetric. Fallback for nearly-symmetric kernels loaded from
/// outside; also the reference the spectral fast path is tested against.
pub fn solve_sylvester_general(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat, LinalgError> {
    check_dims(a, b, c)?;
    let fa = real_schur(a)?;
    let fb = real_schur(b)?;
    let ct = fa.q().transpose_mul(c).mul(fb.q());
    let y = backsub_quasi_triangular(fa.t(), fb.t(), &ct)?;
    let f = fa.q().mul(&y).mul_transpose(fb.q());
    check_residual(a, b, c, &f)?;
    Ok(f)
}

fn solve_with_factors(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    fa: &SchurFactor,
    fb: &SchurFactor,
) -> Result<Mat, LinalgError> {
    // rotate, solve against the (quasi-)triangular forms, rotate back
    let ct = fa.q().transpose_mul(c).mul(fb.q());
    let y = if fa.is_diagonal() && fb.is_diagonal() {
        let alpha = fa.t_diag();
        let beta = fb.t_diag();
        let mut y = Mat::zeros(ct.rows(), ct.cols());
        for i in 0..y.rows() {
            for j in 0..y.cols() {
                let denom = alpha[i] + beta[j];
                if denom == 0.0 || !denom.is_finite() {
                    return Err(LinalgError::SpectralOverlap);
                }
                y[(i, j)] = ct[(i, j)] / denom;
            }
        }
        y
    } else {
        backsub_quasi_triangular(fa.t(), fb.t(), &ct)?
    };
    let f = fa.q().mul(&y).mul_transpose(fb.q());
    check_residual(a, b, c, &f)?;
    Ok(f)
}

// Solves Ta·Y + Y·Tb = C with both matrices quasi-upper-triangular, walking
// column blocks of Tb left to right and row blocks of Ta bottom up. Each
// diagonal-block pair gives a tiny (≤4)×(≤4) linear system via
// vec(AX) = (I⊗A)vec(X), vec(XB) = (Bᵀ⊗I)vec(X).
#[allow(clippy::needless_range_loop)]
fn backsub_quasi_triangular(ta: &Mat, tb: &Mat, c: &Mat) -> Result<Mat, LinalgError> {
    let m = ta.rows();
    let n = tb.rows();
    let row_blocks = diag_blocks(ta);
    let col_blocks = diag_blocks(tb);
    let mut y = Mat::zeros(m, n);

    for &(j0, wb) in &col_blocks {
        // rhs for this column block, minus contributions of solved columns
        let mut rhs = Mat::zeros(m, wb);
        for i in 0..m {
            for jj in 0..wb {
                let mut v = c[(i, j0 + jj)];
                for k in 0..j0 {
                    v -= y[(i, k)] * tb[(k, j0 + jj)];
                }
                rhs[(i, jj)] = v;
            }
        }

        for &(i0, wa) in row_blocks.iter().rev() {
            // subtract already-solved rows below this block
            let mut local = [[0.0f64; 2]; 2];
            for ii in 0..wa {
                for jj in 0..wb {
                    let mut v = rhs[(i0 + ii, jj)];
                    for k in (i0 + wa)..m {
                        v -= ta[(i0 + ii, k)] * y[(k, j0 + jj)];
                    }
                    local[ii][jj] = v;
                }
            }

            // vectorize the wa×wb block system (column-major)
            let sz = wa * wb;
            let mut sys = [[0.0f64; 4]; 4];
            let mut rv = [0.0f64; 4];
            for col in 0..wb {
                for row in 0..wa {
                    let idx = col * wa + row;
                    rv[idx] = local[row][col];
                    for row2 in 0..wa {
                        sys[idx][col * wa + row2] += ta[(i0 + row, i0 + row2)];
                    }
                    for col2 in 0..wb {
                        sys[idx][col2 * wa + row] += tb[(j0 + col2, j0 + col)];
                    }
                }
            }
            let sol = solve_small(&mut sys, &mut rv, sz)?;
            for col in 0..wb {
                for row in 0..wa {
                    y[(i0 + row, j0 + col)] = sol[col * wa + row];
                }
            }
        }
    }
    Ok(y)
}

// Diagonal block starts/widths of a quasi-upper-triangular matrix.
fn diag_blocks(t: &Mat) -> alloc::vec::Vec<(usize, usize)> {
    let n = t.rows();
    let mut blocks = vec![];
    let mut s = 0;
    while s < n {
        let w = if s + 1 < n && t[(s + 1, s)] != 0.0 { 2 } else { 1 };
        blocks.push((s, w));
        s += w;
    }
    blocks
}

// Gaussian elimination with partial pivoting on an up-to-4×4 system.
#[allow(clippy::needless_range_loop)]
fn solve_small(sys: &mut [[f64; 4]; 4], rhs: &mut [f64; 4], n: usize) -> Result<[f64; 4], LinalgError> {
    for col in 0..n {
        let mut piv = col;
        let mut best = sys[col][col].abs();
        for row in (col + 1)..n {
            let v = sys[row][col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(LinalgError::SpectralOverlap);
        }
        if piv != col {
            sys.swap(piv, col);
            rhs.swap(piv, col);
        }
        for row in (col + 1)..n {
            let f = sys[row][col] / sys[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                sys[row][k] -= f * sys[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0f64; 4];
    for row in (0..n).rev() {
        let mut v = rhs[row];
        for k in (row + 1)..n {
            v -= sys[row][k] * x[k];
        }
        x[row] = v / sys[row][row];
    }
    Ok(x)
}

fn check_dims(a: &Mat, b: &Mat, c: &Mat) -> Result<(), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if !b.is_square() {
        return Err(LinalgError::NotSquare { rows: b.rows(), cols: b.cols() });
    }
    if c.rows() != a.rows() || c.cols() != b.rows() {
        return Err(LinalgError::DimensionMismatch {
            context: format!(
                "C is {}x{}, expected {}x{}",
                c.rows(),
                c.cols(),
                a.rows(),
                b.rows()
            ),
        });
    }
    Ok(())
}

fn check_residual(a: &Mat, b: &Mat, c: &Mat, f: &Mat) -> Result<(), LinalgError> {
    let lhs = a.mul(f).add(&f.mul(b));
    let resid = lhs.sub(c).frob_norm();
    let denom = (a.frob_norm() + b.frob_norm()) * Float::max(f.frob_norm(), 1.0);
    let rel = if denom > 0.0 { resid / denom } else { resid };
    if rel.is_nan() || rel > SYLVESTER_RESIDUAL_TOL {
        return Err(LinalgError::ResidualTooLarge { residual: rel });
    }
    Ok(())
}
