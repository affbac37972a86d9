//! Spectral radius estimation.
//!
//! Plain power iteration stalls when the dominant eigenvalue is one of a
//! complex-conjugate pair, which is the common case for random non-symmetric
//! reservoirs. We therefore iterate a small block of vectors (subspace
//! iteration) and read the radius off the Ritz values of the projected
//! `p × p` matrix. The block size covers conjugate pairs and near-ties at the
//! top of the spectrum.

use num_complex::Complex64;
use rand::Rng;

use super::matrix::{dot, gemm_into, MatRef};
use super::{Matrix, SeededRng};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

const BLOCK: usize = 16;
/// Fixed seed for the start block, so estimates are a pure function of the matrix.
const START_SEED: u64 = 0x005e_ed0f_5ec7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEstimate {
    pub radius: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest absolute eigenvalue of a square matrix.
pub fn spectral_radius(m: &Matrix, tol: f64, max_iters: usize) -> Result<SpectralEstimate> {
    if !m.is_square() {
        return Err(Error::Shape {
            op: "spectral_radius",
            left: m.shape(),
            right: m.shape(),
        });
    }
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = m.rows();
    if n == 0 || m.is_zero() {
        return Ok(SpectralEstimate {
            radius: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let p = BLOCK.min(n);
    // Column-major n×p block: column j is q[j*n..(j+1)*n].
    let mut start = SeededRng::new(START_SEED).stream("power-iteration");
    let mut q: Vec<f64> = (0..n * p).map(|_| start.random_range(-1.0..1.0)).collect();
    orthonormalize(&mut q, n, p);

    let mut z = vec![0.0; n * p];
    let mut prev = f64::NAN;
    let mut streak = 0;
    let mut radius = 0.0;
    for it in 1..=max_iters {
        // z = A q. With q column-major, q is the row-major p×n matrix Qᵀ.
        // Compute Zᵀ (p×n, row-major) = Qᵀ Aᵀ.
        gemm_into(
            1.0,
            MatRef::row_major(&q, p, n),
            MatRef::row_major(m.data(), n, n).t(),
            0.0,
            &mut z,
            p,
            n,
        );
        // Ritz matrix H = Qᵀ A Q, H[i][j] = q_i · z_j.
        let h = Matrix::from_fn(p, p, |i, j| {
            dot(&q[i * n..(i + 1) * n], &z[j * n..(j + 1) * n])
        });
        radius = small_eigenvalues(&h)
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.norm()));

        if p == n {
            // Q is a full orthonormal basis, so H is similar to A.
            return Ok(SpectralEstimate {
                radius,
                iterations: it,
                converged: true,
            });
        }
        if (radius - prev).abs() <= tol * radius {
            streak += 1;
            if streak >= 2 {
                return Ok(SpectralEstimate {
                    radius,
                    iterations: it,
                    converged: true,
                });
            }
        } else {
            streak = 0;
        }
        prev = radius;
        std::mem::swap(&mut q, &mut z);
        orthonormalize(&mut q, n, p);
    }
    log::warn!(
        "spectral radius estimate did not converge in {max_iters} iterations (last {radius})"
    );
    Ok(SpectralEstimate {
        radius,
        iterations: max_iters,
        converged: false,
    })
}

/// Rescales `m` so its spectral radius becomes `target_rho`.
pub fn scale_to_radius(m: &Matrix, target_rho: f64) -> Result<Matrix> {
    if !(target_rho > 0.0 && target_rho.is_finite()) {
        return Err(Error::invalid(format!(
            "target spectral radius must be positive, got {target_rho}"
        )));
    }
    let est = spectral_radius(m, DEFAULT_TOL, DEFAULT_MAX_ITERS)?;
    if est.radius <= f64::MIN_POSITIVE {
        return Err(Error::ZeroSpectralRadius);
    }
    Ok(m.scaled(target_rho / est.radius))
}

/// Modified Gram-Schmidt on the `p` column-major columns of `q`. Columns that
/// collapse (rank deficiency) are replaced by a unit vector orthogonal to the
/// others where possible, or zeroed.
fn orthonormalize(q: &mut [f64], n: usize, p: usize) {
    for j in 0..p {
        let before = norm(&q[j * n..(j + 1) * n]);
        for _pass in 0..2 {
            for i in 0..j {
                let (head, tail) = q.split_at_mut(j * n);
                let qi = &head[i * n..(i + 1) * n];
                let qj = &mut tail[..n];
                let r = dot(qi, qj);
                qj.iter_mut().zip(qi).for_each(|(a, b)| *a -= r * b);
            }
        }
        let col = &mut q[j * n..(j + 1) * n];
        let after = norm(col);
        if after > 1e-12 * before && after > 0.0 {
            col.iter_mut().for_each(|v| *v /= after);
        } else {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j % n] = 1.0;
            // One more projection; if it is still dependent the column stays zero.
            let (head, tail) = q.split_at_mut(j * n);
            let qj = &mut tail[..n];
            for i in 0..j {
                let qi = &head[i * n..(i + 1) * n];
                let r = dot(qi, qj);
                qj.iter_mut().zip(qi).for_each(|(a, b)| *a -= r * b);
            }
            let nn = norm(qj);
            if nn > 1e-8 {
                qj.iter_mut().for_each(|v| *v /= nn);
            } else {
                qj.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// All eigenvalues of a small real matrix via complex shifted QR with
/// Wilkinson shifts and deflation from the bottom row.
pub(crate) fn small_eigenvalues(h: &Matrix) -> Vec<Complex64> {
    let n = h.rows();
    let mut a: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|j| Complex64::new(h.get(i, j), 0.0)).collect())
        .collect();
    let scale = h.max_abs();
    let mut eig = Vec::with_capacity(n);
    if scale == 0.0 {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    let mut size = n;
    let mut its = 0usize;
    while size > 1 {
        let last = size - 1;
        let off: f64 = (0..last).map(|j| a[last][j].norm()).fold(0.0, f64::max);
        let local = a[last][last].norm() + a[last - 1][last - 1].norm();
        if off <= f64::EPSILON * local.max(scale * 1e-3) || its >= 500 {
            eig.push(a[last][last]);
            size -= 1;
            its = 0;
            continue;
        }
        its += 1;
        let mu = if its.is_multiple_of(11) {
            // Exceptional shift to break cycles.
            a[last][last] + Complex64::new(off, off)
        } else {
            wilkinson_shift(
                a[last - 1][last - 1],
                a[last - 1][last],
                a[last][last - 1],
                a[last][last],
            )
        };
        qr_step(&mut a, size, mu);
    }
    eig.push(a[0][0]);
    eig
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mean = (a + d) * 0.5;
    let l1 = mean + disc;
    let l2 = mean - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// One shifted QR step on the leading `size × size` block: A − μI = QR, A ← RQ + μI.
fn qr_step(a: &mut [Vec<Complex64>], size: usize, mu: Complex64) {
    for (i, row) in a.iter_mut().enumerate().take(size) {
        row[i] -= mu;
    }
    let mut rots: Vec<(usize, Complex64, Complex64)> = Vec::new();
    for j in 0..size.saturating_sub(1) {
        for i in (j + 1..size).rev() {
            let (x, y) = (a[i - 1][j], a[i][j]);
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            if r == 0.0 || y.norm() == 0.0 {
                continue;
            }
            let (c, s) = (x / r, y / r);
            for col in 0..size {
                let (p, q) = (a[i - 1][col], a[i][col]);
                a[i - 1][col] = c.conj() * p + s.conj() * q;
                a[i][col] = -s * p + c * q;
            }
            rots.push((i - 1, c, s));
        }
    }
    for (k, c, s) in rots {
        for row in a.iter_mut().take(size) {
            let (x, y) = (row[k], row[k + 1]);
            row[k] = x * c + y * s;
            row[k + 1] = -x * s.conj() + y * c.conj();
        }
    }
    for (i, row) in a.iter_mut().enumerate().take(size) {
        row[i] += mu;
    }
}
