//! Thermal attenuation of each mode, computed with exact beam-splitter
//! unitaries.
//!
//! Each mode is coupled to its own thermal ancilla through the
//! photon-number-conserving generator θ(â†ê − âê†) with cos θ = √η, the
//! generator is exponentiated exactly within every total-photon sector of
//! an enlarged box, and the ancilla is traced out again.  Because the
//! unitary is block diagonal in the total photon number, its Kraus
//! operators carry a single Fock-index shift each, which keeps the
//! channel application quadratic in the density-matrix size.
//!
//! The box is padded so that every photon-number sector populated by the
//! input (state support plus thermal ancilla support) rotates without
//! touching the truncation wall; the output is cropped back to the input
//! dimensions and the discarded trace is checked against 1e−10.

use super::TwoModeState;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Thermal ancilla occupations are kept until (n̄/(n̄+1))^N drops below this.
const ANCILLA_TAIL: f64 = 1e-12;

/// Kraus operators whose largest element squared is below this bound are
/// skipped; the total trace deficit stays far below the 1e−10 check.
const KRAUS_PRUNE: f64 = 1e-16;

/// Largest joint dimension (padded mode × other mode) the dense channel
/// accepts.  Bigger states should use the symbolic loss expansion, which
/// never materializes a density matrix.
const JOINT_DIM_LIMIT: usize = 3400;

/// Sends each mode through a beam splitter of transmissivity η whose
/// second port carries an independent thermal state with mean occupation
/// n̄.  η = 1 is an exact identity.  Output purity is generally lost.
pub fn apply_thermal_loss_channel(
    state: &TwoModeState,
    eta: f64,
    n_bar: f64,
) -> Result<TwoModeState> {
    if !eta.is_finite() || !(0.0..=1.0).contains(&eta) {
        return Err(Error::Numerical(format!(
            "transmissivity must lie in [0, 1], got {eta}"
        )));
    }
    if !n_bar.is_finite() || n_bar < 0.0 {
        return Err(Error::Numerical(format!(
            "thermal occupation must be nonnegative, got {n_bar}"
        )));
    }
    if eta == 1.0 {
        return Ok(state.clone());
    }
    let weights = thermal_weights(n_bar);
    let (da, db) = (state.dim_a(), state.dim_b());
    let rho = state.density_matrix();
    let rho = lose_leading_mode(&rho, da, db, eta, &weights)?;
    let rho = swap_modes(&rho, da, db);
    let rho = lose_leading_mode(&rho, db, da, eta, &weights)?;
    let mut rho = swap_modes(&rho, db, da);
    hermitize(&mut rho);
    let out = TwoModeState::from_mixed_parts(rho, *state.config(), state.preparation());
    out.validate_tail()?;
    Ok(out)
}

/// Converts a decay product κt (amplitude decay e^{−κt}) to the
/// beam-splitter transmissivity η = e^{−2κt} of the equivalent channel.
pub fn kappa_t_to_eta(kappa_t: f64) -> Result<f64> {
    if !kappa_t.is_finite() || kappa_t < 0.0 {
        return Err(Error::Numerical(format!(
            "decay product must be nonnegative, got {kappa_t}"
        )));
    }
    Ok((-2.0 * kappa_t).exp())
}

/// Truncated, renormalized thermal occupation distribution.
fn thermal_weights(n_bar: f64) -> Vec<f64> {
    if n_bar <= 0.0 {
        return vec![1.0];
    }
    let lam = n_bar / (n_bar + 1.0);
    let mut levels = 1usize;
    let mut p = lam;
    while p >= ANCILLA_TAIL {
        levels += 1;
        p *= lam;
    }
    let mut w: Vec<f64> = (0..levels).map(|k| lam.powi(k as i32)).collect();
    let norm: f64 = w.iter().sum();
    for x in &mut w {
        *x /= norm;
    }
    w
}

/// exp(θ(â†ê − âê†)) restricted to one total-photon sector of the square
/// box (ds, ds); returns the lowest system occupation of the sector and
/// the unitary block.
fn sector_unitaries(ds: usize, theta: f64) -> Vec<(usize, DMatrix<Complex64>)> {
    let mut out = Vec::with_capacity(2 * ds - 1);
    for total in 0..=(2 * (ds - 1)) {
        let n0 = total.saturating_sub(ds - 1);
        let n1 = total.min(ds - 1);
        let m = n1 - n0 + 1;
        // H = -iG is Hermitian tridiagonal; U = exp(G) = exp(iH)
        let mut h = DMatrix::zeros(m, m);
        for i in 0..(m - 1).max(0) {
            let n = n0 + i;
            let g = theta * (((n + 1) * (total - n)) as f64).sqrt();
            h[(i + 1, i)] = Complex64::new(0.0, -g);
            h[(i, i + 1)] = Complex64::new(0.0, g);
        }
        let eig = crate::linalg::hermitian_eigen(&h).expect("finite tridiagonal generator");
        let phases: Vec<Complex64> = eig
            .values
            .iter()
            .map(|&l| Complex64::from_polar(1.0, l))
            .collect();
        let mut scaled = eig.vectors.clone();
        for (k, col) in scaled.column_iter_mut().enumerate() {
            let mut col = col;
            col *= phases[k];
        }
        let u = scaled * eig.vectors.adjoint();
        out.push((n0, u));
    }
    out
}

/// Applies the loss channel to the leading (slow-index) mode of a density
/// matrix flattened as a·db + b.
fn lose_leading_mode(
    rho: &DMatrix<Complex64>,
    da: usize,
    db: usize,
    eta: f64,
    weights: &[f64],
) -> Result<DMatrix<Complex64>> {
    let nth = weights.len();
    let ds = da + nth + 1;
    let n = ds * db;
    if n > JOINT_DIM_LIMIT {
        return Err(Error::Truncation(format!(
            "dense loss channel needs joint dimension {n} > {JOINT_DIM_LIMIT}; \
             evaluate moments through the symbolic loss expansion instead"
        )));
    }
    let theta = eta.sqrt().min(1.0).acos();
    let sectors = sector_unitaries(ds, theta);

    // flattening uses the same stride, so embedding is a corner copy
    let mut src: DMatrix<Complex64> = DMatrix::zeros(n, n);
    src.view_mut((0, 0), (da * db, da * db)).copy_from(rho);
    let mut dst: DMatrix<Complex64> = DMatrix::zeros(n, n);
    {
        let src_s = src.as_slice();
        let dst_s = dst.as_mut_slice();
        let mut v = vec![Complex64::new(0.0, 0.0); ds];
        for e in 0..ds {
            for (f, &w) in weights.iter().enumerate() {
                let delta = f as isize - e as isize;
                let c_lo = (-delta).max(0) as usize;
                let c_hi_signed = ds as isize - 1 - delta.max(0);
                if c_hi_signed < c_lo as isize {
                    continue;
                }
                let c_hi = c_hi_signed as usize;
                // Kraus diagonal v[c] = √w ⟨c+Δ, e| U |c, f⟩
                let mut vmax = 0.0f64;
                for c in c_lo..=c_hi {
                    let total = c + f;
                    let (n0, u) = &sectors[total];
                    let ia = (c as isize + delta) as usize - n0;
                    let ic = c - n0;
                    let val = u[(ia, ic)] * w.sqrt();
                    vmax = vmax.max(val.norm_sqr());
                    v[c] = val;
                }
                if vmax < KRAUS_PRUNE {
                    continue;
                }
                for cp in c_lo..=c_hi {
                    let right = v[cp].conj();
                    if right.norm_sqr() == 0.0 {
                        continue;
                    }
                    let ap = (cp as isize + delta) as usize;
                    for c in c_lo..=c_hi {
                        let s = v[c] * right;
                        if s.norm_sqr() == 0.0 {
                            continue;
                        }
                        let a = (c as isize + delta) as usize;
                        for bp in 0..db {
                            let jsrc = (cp * db + bp) * n + c * db;
                            let jdst = (ap * db + bp) * n + a * db;
                            for b in 0..db {
                                dst_s[jdst + b] += s * src_s[jsrc + b];
                            }
                        }
                    }
                }
            }
        }
    }

    let trace_in: f64 = rho.diagonal().iter().map(|z| z.re).sum();
    let cropped = dst.view((0, 0), (da * db, da * db)).into_owned();
    let trace_out: f64 = cropped.diagonal().iter().map(|z| z.re).sum();
    if (trace_in - trace_out).abs() > 1e-10 {
        return Err(Error::Truncation(format!(
            "loss channel lost {:.3e} of the trace past the truncation wall",
            trace_in - trace_out
        )));
    }
    Ok(cropped)
}

fn swap_modes(rho: &DMatrix<Complex64>, da: usize, db: usize) -> DMatrix<Complex64> {
    let n = da * db;
    let mut out = DMatrix::zeros(n, n);
    for a in 0..da {
        for b in 0..db {
            let r = b * da + a;
            for ap in 0..da {
                for bp in 0..db {
                    out[(r, bp * da + ap)] = rho[(a * db + b, ap * db + bp)];
                }
            }
        }
    }
    out
}

fn hermitize(rho: &mut DMatrix<Complex64>) {
    let adj = rho.adjoint();
    *rho += adj;
    rho.scale_mut(0.5);
}
