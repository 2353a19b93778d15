//! Real Schur decomposition `F = Q T Q^T`.
//!
//! The fast path is nalgebra's Schur iteration under a sweep cap. When that does not
//! converge, a Householder reduction to upper Hessenberg form followed by the Francis
//! double-shift QR iteration with the classic exceptional shifts takes over. That
//! iteration is capped too, so a non-converging input reports an error instead of spinning.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real Schur form: `T` is upper quasi-triangular with 1x1 and 2x2 diagonal blocks,
/// the 2x2 blocks carrying complex conjugate eigenvalue pairs.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// `(start, size)` of each diagonal block, in increasing `start` order.
    pub blocks: Vec<(usize, usize)>,
}

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Computes the real Schur decomposition of a square matrix.
pub fn real_schur(f: &DMatrix<f64>) -> Result<RealSchur> {
    let n = f.nrows();
    if f.ncols() != n {
        return Err(Error::DimensionMismatch(format!("schur of {}x{} matrix", n, f.ncols())));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite entry in matrix".into()));
    }
    if n == 0 {
        return Ok(RealSchur { q: DMatrix::zeros(0, 0), t: DMatrix::zeros(0, 0), blocks: Vec::new() });
    }
    if let Some(s) = library_schur(f) {
        return Ok(s);
    }
    let mut h = f.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    hessenberg(&mut h, &mut v);
    let pairs = francis_qr(&mut h, &mut v)?;

    // Clean the strictly lower part: only the subdiagonal of complex 2x2 blocks survives.
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && pairs[i] {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            let keep = i == j + 1 && pairs[j];
            if !keep {
                h[(i, j)] = 0.0;
            }
        }
    }
    Ok(RealSchur { q: v, t: h, blocks })
}

/// nalgebra's Schur form, normalized so that every 2x2 block carries a complex pair and
/// everything below the block diagonal is exactly zero. `None` if it does not converge.
fn library_schur(f: &DMatrix<f64>) -> Option<RealSchur> {
    let n = f.nrows();
    let (mut q, mut t) = nalgebra::linalg::Schur::try_new(f.clone(), f64::EPSILON, MAX_SWEEPS_PER_EIGENVALUE * n)?.unpack();
    if t.iter().chain(q.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let coupled = i + 1 < n && t[(i + 1, i)].abs() > f64::EPSILON * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs());
        if coupled && !split_real_pair(&mut t, &mut q, i) {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    let mut keep = vec![false; n];
    for &(st, size) in &blocks {
        keep[st] = size == 2;
    }
    for j in 0..n {
        for i in j + 1..n {
            if !(i == j + 1 && keep[j]) {
                t[(i, j)] = 0.0;
            }
        }
    }
    Some(RealSchur { q, t, blocks })
}

/// Triangularizes the 2x2 block at `i` by a rotation when its eigenvalues are real.
/// Returns false, leaving everything untouched, for a complex pair.
fn split_real_pair(t: &mut DMatrix<f64>, v: &mut DMatrix<f64>, i: usize) -> bool {
    let n = t.nrows();
    let p = 0.5 * (t[(i, i)] - t[(i + 1, i + 1)]);
    let disc = p * p + t[(i + 1, i)] * t[(i, i + 1)];
    if disc < 0.0 {
        return false;
    }
    let z = if p >= 0.0 { p + disc.sqrt() } else { p - disc.sqrt() };
    let x = t[(i + 1, i)];
    let r = x.hypot(z);
    if r == 0.0 {
        t[(i + 1, i)] = 0.0;
        return true;
    }
    let (s, c) = (x / r, z / r);
    for j in i..n {
        let a = t[(i, j)];
        t[(i, j)] = c * a + s * t[(i + 1, j)];
        t[(i + 1, j)] = c * t[(i + 1, j)] - s * a;
    }
    for k in 0..n {
        if k <= i + 1 {
            let a = t[(k, i)];
            t[(k, i)] = c * a + s * t[(k, i + 1)];
            t[(k, i + 1)] = c * t[(k, i + 1)] - s * a;
        }
        let a = v[(k, i)];
        v[(k, i)] = c * a + s * v[(k, i + 1)];
        v[(k, i + 1)] = c * v[(k, i + 1)] - s * a;
    }
    t[(i + 1, i)] = 0.0;
    true
}

impl RealSchur {
    /// Eigenvalues in block order; complex pairs appear as `(a + bi, a - bi)`.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.t.nrows());
        for &(s, size) in &self.blocks {
            if size == 1 {
                out.push(Complex64::new(self.t[(s, s)], 0.0));
            } else {
                let (a, b) = block_eigenvalues(self.t[(s, s)], self.t[(s, s + 1)], self.t[(s + 1, s)], self.t[(s + 1, s + 1)]);
                out.push(a);
                out.push(b);
            }
        }
        out
    }
}

/// Eigenvalues of the 2x2 matrix `[[a, b], [c, d]]`.
pub(crate) fn block_eigenvalues(a: f64, b: f64, c: f64, d: f64) -> (Complex64, Complex64) {
    let half_tr = 0.5 * (a + d);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (Complex64::new(half_tr + s, 0.0), Complex64::new(half_tr - s, 0.0))
    } else {
        let s = (-disc).sqrt();
        (Complex64::new(half_tr, s), Complex64::new(half_tr, -s))
    }
}

fn hessenberg(h: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

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

    for m in (1..high).rev() {
        if h[(m, m - 1)] != 0.0 {
            for i in m + 1..=high {
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
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = 0.0;
        }
    }
}

/// Runs the shifted QR iteration on an upper Hessenberg `h`, accumulating into `v`.
/// Returns `pairs[i] == true` when rows `i, i+1` hold a complex 2x2 block.
fn francis_qr(h: &mut DMatrix<f64>, v: &mut DMatrix<f64>) -> Result<Vec<bool>> {
    let nn = h.nrows();
    let eps = f64::EPSILON;
    let mut pairs = vec![false; nn];
    let mut exshift = 0.0;

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let budget = MAX_SWEEPS_PER_EIGENVALUE * nn.max(1);
    let (mut p, mut q, mut r, mut s, mut z);
    let (mut x, mut y, mut w);

    while n >= 0 {
        let nu = n as usize;
        // Look for a single small subdiagonal element.
        let mut l = nu;
        while l > 0 {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() <= eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            // One root.
            h[(nu, nu)] += exshift;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            // Two roots.
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;

            if q >= 0.0 {
                // Real pair: rotate the block to upper triangular form.
                z = if p >= 0.0 { p + z } else { p - z };
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in nu - 1..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                for i in 0..nn {
                    z = v[(i, nu - 1)];
                    v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                    v[(i, nu)] = q * v[(i, nu)] - p * z;
                }
                h[(nu, nu - 1)] = 0.0;
            } else {
                pairs[nu - 1] = true;
            }
            n -= 2;
            iter = 0;
        } else {
            total += 1;
            if total > budget {
                return Err(Error::NoConvergence("real Schur QR iteration"));
            }
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }
            // Wilkinson's ad hoc shift.
            if iter == 10 {
                exshift += x;
                for i in 0..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            // Second exceptional shift.
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            x = 0.0;
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    for i in 0..nn {
                        p = x * v[(i, k)] + y * v[(i, k + 1)];
                        if notlast {
                            p += z * v[(i, k + 2)];
                            v[(i, k + 2)] -= p * r;
                        }
                        v[(i, k)] -= p;
                        v[(i, k + 1)] -= p * q;
                    }
                }
            }
        }
    }
    Ok(pairs)
}
