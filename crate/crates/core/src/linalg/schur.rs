//! Real Schur form of a general square matrix: Householder reduction to
//! Hessenberg form followed by Francis double-shift QR iteration with
//! accumulated transformations (EISPACK orthes/hqr lineage).

use super::LinalgError;
use crate::mat::Mat;
use alloc::vec;
use num_traits::Float;

// Per-deflation sweep cap; the exceptional shifts fire at 10 and 30 sweeps.
const MAX_QR_SWEEPS: usize = 60;

/// Returns `(Q, T)` with `A = Q T Qᵀ`, `T` quasi-upper-triangular.
pub(super) fn general_schur(a: &Mat) -> Result<(Mat, Mat), LinalgError> {
    let n = a.rows();
    let mut h = a.clone();
    if n <= 1 {
        return Ok((Mat::identity(n), h));
    }
    let q = hessenberg(&mut h);
    // Householder remnants live below the subdiagonal; clear them so `h` is
    // a genuine Hessenberg matrix from here on.
    for i in 2..n {
        for j in 0..(i - 1) {
            h[(i, j)] = 0.0;
        }
    }
    francis_qr(&mut h, q)
}

// Reduces `h` to upper Hessenberg form in place and returns the accumulated
// orthogonal transformation. The Householder vectors are stashed below the
// subdiagonal until accumulation reads them back.
fn hessenberg(h: &mut Mat) -> Mat {
    let n = h.rows();
    let low = 0;
    let high = n - 1;
    let mut ort = vec![0.0; n];

    for m in (low + 1)..high {
        let mut scale = 0.0;
        for i in m..=high {
            scale += h[(i, m - 1)].abs();
        }
        if scale == 0.0 {
            continue;
        }

        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = Float::sqrt(hh);
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        // similarity transform H ← (I - uuᵀ/hh) H (I - uuᵀ/hh)
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    // accumulate transformations
    let mut v = Mat::identity(n);
    for m in ((low + 1)..high).rev() {
        if h[(m, m - 1)] != 0.0 {
            for i in (m + 1)..=high {
                ort[i] = h[(i, m - 1)];
            }
            for j in m..=high {
                let mut g = 0.0;
                for i in m..=high {
                    g += ort[i] * v[(i, j)];
                }
                // double division avoids possible underflow
                g = (g / ort[m]) / h[(m, m - 1)];
                for i in m..=high {
                    v[(i, j)] += g * ort[i];
                }
            }
        }
    }
    v
}

// Francis double-shift QR on a Hessenberg matrix, accumulating the
// transformations into `v`. On success `h` holds the quasi-triangular T.
fn francis_qr(hm: &mut Mat, mut v: Mat) -> Result<(Mat, Mat), LinalgError> {
    let nn = hm.rows();
    let low: isize = 0;
    let high: isize = nn as isize - 1;
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut x, mut y, mut w): (f64, f64, f64);

    macro_rules! h {
        ($i:expr, $j:expr) => {
            hm[($i as usize, $j as usize)]
        };
    }

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += hm[(i, j)].abs();
        }
    }

    let mut en: isize = nn as isize - 1;
    let mut iter = 0usize;
    while en >= low {
        // look for a single small subdiagonal element
        let mut l = en;
        while l > low {
            s = h![l - 1, l - 1].abs() + h![l, l].abs();
            if s == 0.0 {
                s = norm;
            }
            if h![l, l - 1].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == en {
            // one root found
            h![en, en] += exshift;
            if en > low {
                h![en, en - 1] = 0.0;
            }
            en -= 1;
            iter = 0;
        } else if l == en - 1 {
            // two roots found
            w = h![en, en - 1] * h![en - 1, en];
            p = (h![en - 1, en - 1] - h![en, en]) / 2.0;
            q = p * p + w;
            z = Float::sqrt(q.abs());
            h![en, en] += exshift;
            h![en - 1, en - 1] += exshift;

            if q >= 0.0 {
                // real pair: rotate the block to upper triangular
                z = if p >= 0.0 { p + z } else { p - z };
                x = h![en, en - 1];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = Float::sqrt(p * p + q * q);
                p /= r;
                q /= r;
                for j in (en - 1)..nn as isize {
                    z = h![en - 1, j];
                    h![en - 1, j] = q * z + p * h![en, j];
                    h![en, j] = q * h![en, j] - p * z;
                }
                for i in 0..=en {
                    z = h![i, en - 1];
                    h![i, en - 1] = q * z + p * h![i, en];
                    h![i, en] = q * h![i, en] - p * z;
                }
                for i in low..=high {
                    z = v[(i as usize, (en - 1) as usize)];
                    v[(i as usize, (en - 1) as usize)] = q * z + p * v[(i as usize, en as usize)];
                    v[(i as usize, en as usize)] = q * v[(i as usize, en as usize)] - p * z;
                }
                h![en, en - 1] = 0.0;
            }
            if en - 1 > low {
                h![en - 1, en - 2] = 0.0;
            }
            en -= 2;
            iter = 0;
        } else {
            // no convergence yet: form shift
            x = h![en, en];
            y = 0.0;
            w = 0.0;
            if l < en {
                y = h![en - 1, en - 1];
                w = h![en, en - 1] * h![en - 1, en];
            }

            if iter == 10 {
                // exceptional shift
                exshift += x;
                for i in low..=en {
                    h![i, i] -= x;
                }
                s = h![en, en - 1].abs() + h![en - 1, en - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = Float::sqrt(s);
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=en {
                        h![i, i] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = 0.964;
                    w = 0.964;
                }
            }

            iter += 1;
            if iter > MAX_QR_SWEEPS {
                return Err(LinalgError::NonConvergence { iterations: iter });
            }

            // look for two consecutive small subdiagonal elements
            let mut m = en - 2;
            let (mut sp, mut sq, mut sr) = (0.0, 0.0, 0.0);
            while m >= l {
                z = h![m, m];
                r = x - z;
                s = y - z;
                sp = (r * s - w) / h![m + 1, m] + h![m, m + 1];
                sq = h![m + 1, m + 1] - z - r - s;
                sr = h![m + 2, m + 1];
                s = sp.abs() + sq.abs() + sr.abs();
                sp /= s;
                sq /= s;
                sr /= s;
                if m == l {
                    break;
                }
                if h![m, m - 1].abs() * (sq.abs() + sr.abs())
                    < eps * (sp.abs() * (h![m - 1, m - 1].abs() + z.abs() + h![m + 1, m + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..=en {
                h![i, i - 2] = 0.0;
                if i > m + 2 {
                    h![i, i - 3] = 0.0;
                }
            }

            // double QR step on rows l..en, columns m..en
            p = sp;
            q = sq;
            r = sr;
            for k in m..en {
                let notlast = k != en - 1;
                if k != m {
                    p = h![k, k - 1];
                    q = h![k + 1, k - 1];
                    r = if notlast { h![k + 2, k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                } else {
                    x = 0.0;
                }
                s = Float::sqrt(p * p + q * q + r * r);
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h![k, k - 1] = -s * x;
                    } else if l != m {
                        h![k, k - 1] = -h![k, k - 1];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn as isize {
                        p = h![k, j] + q * h![k + 1, j];
                        if notlast {
                            p += r * h![k + 2, j];
                            h![k + 2, j] -= p * z;
                        }
                        h![k, j] -= p * x;
                        h![k + 1, j] -= p * y;
                    }

                    let imax = if en < k + 3 { en } else { k + 3 };
                    for i in 0..=imax {
                        p = x * h![i, k] + y * h![i, k + 1];
                        if notlast {
                            p += z * h![i, k + 2];
                            h![i, k + 2] -= p * r;
                        }
                        h![i, k] -= p;
                        h![i, k + 1] -= p * q;
                    }

                    for i in low..=high {
                        let iu = i as usize;
                        p = x * v[(iu, k as usize)] + y * v[(iu, (k + 1) as usize)];
                        if notlast {
                            p += z * v[(iu, (k + 2) as usize)];
                            v[(iu, (k + 2) as usize)] -= p * r;
                        }
                        v[(iu, k as usize)] -= p;
                        v[(iu, (k + 1) as usize)] -= p * q;
                    }
                }
            }
        }
    }

    // anything left below the subdiagonal is converged-but-unset noise
    for i in 2..nn {
        for j in 0..(i - 1) {
            hm[(i, j)] = 0.0;
        }
    }
    let t = hm.clone();
    Ok((v, t))
}
