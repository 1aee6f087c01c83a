//! Dense Hermitian eigendecomposition.
//!
//! nalgebra's `SymmetricEigen` returns NaN and ±inf eigenvalues on exactly
//! rank-deficient complex Hermitian input (a rank-1 projector is enough to
//! trigger it), and the measurement sampler feeds it matrices whose null
//! spaces span most of the Fock box.  This module supplies the standard
//! robust pair instead: Householder reduction to a real symmetric
//! tridiagonal matrix followed by the implicit-QL iteration with Wilkinson
//! shifts, both straight ports of their EISPACK forms.  Zero subdiagonals
//! deflate instead of dividing by zero, so rank deficiency is harmless.

use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Eigenvalues in ascending order with matching unit eigenvector columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Decomposes a Hermitian matrix as A = V diag(values) V†.
///
/// Only the lower triangle and the real part of the diagonal are read, so
/// a Hermiticity defect below the caller's own tolerance never has to be
/// scrubbed first.  Fails only if the QL iteration stalls, which for a
/// finite Hermitian input it does not.
pub fn hermitian_eigen(a: &DMatrix<Complex64>) -> Result<HermitianEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Numerical(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(HermitianEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let (mut d, mut e, mut z) = tridiagonalize(a);
    ql_implicit(&mut d, &mut e, &mut z)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &z.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// Householder reduction A → Q T Q† with T real symmetric tridiagonal.
/// Returns (diagonal of T, subdiagonal of T, Q).
fn tridiagonalize(a: &DMatrix<Complex64>) -> (Vec<f64>, Vec<f64>, DMatrix<Complex64>) {
    let n = a.nrows();
    let mut m = a.clone_owned();
    let mut q: DMatrix<Complex64> = DMatrix::identity(n, n);
    let mut e = vec![0.0f64; n.saturating_sub(1)];

    for i in 0..n.saturating_sub(2) {
        let len = n - i - 1;
        let x: Vec<Complex64> = (0..len).map(|k| m[(i + 1 + k, i)]).collect();
        let (beta, tau, v) = reflector(&x);
        e[i] = beta;
        if tau == Complex64::new(0.0, 0.0) {
            continue;
        }

        // p = τ A₂₂ v, then w = p − ½τ(p†v)v makes A₂₂ − v w† − w v† Hermitian
        let mut p = vec![Complex64::new(0.0, 0.0); len];
        for r in 0..len {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..len {
                acc += m[(i + 1 + r, i + 1 + c)] * v[c];
            }
            p[r] = tau * acc;
        }
        let pv: Complex64 = p.iter().zip(&v).map(|(pk, vk)| pk.conj() * vk).sum();
        let corr = tau * pv * 0.5;
        let w: Vec<Complex64> = p
            .iter()
            .zip(&v)
            .map(|(pk, vk)| pk - corr * vk)
            .collect();
        for r in 0..len {
            for c in 0..len {
                let upd = v[r] * w[c].conj() + w[r] * v[c].conj();
                m[(i + 1 + r, i + 1 + c)] -= upd;
            }
        }
        m[(i + 1, i)] = Complex64::new(beta, 0.0);
        for r in (i + 2)..n {
            m[(r, i)] = Complex64::new(0.0, 0.0);
        }

        // the reflector satisfies H†x = βe₁, so T = H†AH and Q ← QH
        for row in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..len {
                acc += q[(row, i + 1 + c)] * v[c];
            }
            let scale = tau * acc;
            for c in 0..len {
                let sub = scale * v[c].conj();
                q[(row, i + 1 + c)] -= sub;
            }
        }
    }
    if n >= 2 {
        // the last subdiagonal entry may still be complex; rotate its phase
        // into the final basis column so T stays real
        let t = m[(n - 1, n - 2)];
        let r = t.norm();
        e[n - 2] = r;
        if r > 0.0 {
            let phase = t / r;
            for row in 0..n {
                let scaled = q[(row, n - 1)] * phase;
                q[(row, n - 1)] = scaled;
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    (d, e, q)
}

/// LAPACK-style elementary reflector: H = I − τ v v† with v[0] = 1 and
/// H x = β e₁, β real.  τ = 0 means x is already of that form.
fn reflector(x: &[Complex64]) -> (f64, Complex64, Vec<Complex64>) {
    let alpha = x[0];
    let tail_sq: f64 = x[1..].iter().map(|z| z.norm_sqr()).sum();
    if tail_sq == 0.0 && alpha.im == 0.0 {
        return (alpha.re, Complex64::new(0.0, 0.0), vec![Complex64::new(1.0, 0.0); x.len()]);
    }
    let norm = (alpha.norm_sqr() + tail_sq).sqrt();
    let beta = if alpha.re >= 0.0 { -norm } else { norm };
    let tau = Complex64::new((beta - alpha.re) / beta, -alpha.im / beta);
    let scale = (alpha - beta).inv();
    let mut v = Vec::with_capacity(x.len());
    v.push(Complex64::new(1.0, 0.0));
    for z in &x[1..] {
        v.push(z * scale);
    }
    (beta, tau, v)
}

/// Implicit-QL iteration with Wilkinson shifts on a real symmetric
/// tridiagonal matrix, accumulating the real rotations into z's columns.
fn ql_implicit(d: &mut [f64], e: &mut [f64], z: &mut DMatrix<Complex64>) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    let mut work = e.to_vec();
    work.push(0.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if work[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numerical(
                    "tridiagonal QL iteration failed to converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * work[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + work[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * work[i];
                let b = c * work[i];
                r = f.hypot(g);
                work[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    work[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..z.nrows() {
                    f = z[(k, i + 1)].re;
                    let fi = z[(k, i + 1)].im;
                    let zr = z[(k, i)];
                    z[(k, i + 1)] = Complex64::new(s * zr.re + c * f, s * zr.im + c * fi);
                    z[(k, i)] = Complex64::new(c * zr.re - s * f, c * zr.im - s * fi);
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            work[l] = g;
            work[m] = 0.0;
        }
    }
    Ok(())
}
