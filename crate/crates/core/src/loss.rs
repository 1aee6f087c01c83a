//! Moments after transmission loss, evaluated symbolically.
//!
//! A lossy line of transmissivity η mixes each mode with an independent
//! thermal environment: â ↦ √η â + √(1−η) ê.  Substituting that into a
//! ladder word and expanding binomially writes the lossy moment as a sum
//! of pre-loss moments weighted by powers of η and thermal factors, so no
//! density matrix for the lossy state is ever formed.
//!
//! The expansion factorizes over the two modes.  Every split term acts on
//! one mode as a pure Fock-shift operator, so all terms with the same
//! shift collapse into a per-level weight table and the final contraction
//! against the state costs O(shifts × state size) regardless of how many
//! splits the word generates.  The split structure depends only on the
//! word, not on (η, n̄), and is cached globally; sweeping a noise grid
//! reuses it.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

use crate::fock::{mode_exponent_check, StateData, TwoModeState};
use crate::index::{LadderRun, LadderWord, OperatorWord};
use crate::{Error, Result};

/// Transmissivity and environment occupation of a symmetric lossy line.
///
/// Both modes see the same η and the same mean thermal photon number n̄,
/// through statistically independent environments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub eta: f64,
    pub n_bar: f64,
}

impl NoiseModel {
    pub fn new(eta: f64, n_bar: f64) -> Result<Self> {
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
        Ok(Self { eta, n_bar })
    }

    /// Noise model of a decay line with amplitude decay product κt, so
    /// that η = e^{−2κt}.
    pub fn from_decay(kappa_t: f64, n_bar: f64) -> Result<Self> {
        Self::new(crate::fock::kappa_t_to_eta(kappa_t)?, n_bar)
    }

    pub fn lossless() -> Self {
        Self { eta: 1.0, n_bar: 0.0 }
    }

    pub fn is_lossless(&self) -> bool {
        self.eta == 1.0
    }
}

/// One split of a single-mode run sequence: the system keeps `system`
/// (same creation pattern, reduced powers), the environment absorbs the
/// rest and contributes a polynomial in n̄.
#[derive(Debug, Clone)]
struct ModeTerm {
    system: Vec<LadderRun>,
    /// Product of binomial choices, exact in f64.
    multiplicity: f64,
    /// Exponent of √η (total system share).
    sqrt_eta_pow: i32,
    /// Exponent of √(1−η) (total environment share).
    sqrt_loss_pow: i32,
    /// Thermal expectation of the environment factor, Σ c·n̄^m.
    env_poly: Vec<(f64, u32)>,
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Thermal expectation of an environment ladder string, as a polynomial
/// in the mean occupation n̄.
///
/// The string is normal-ordered with â^v â†^k = Σ_t t!·C(v,t)·C(k,t)
/// â†^{k−t} â^{v−t}, and then ⟨ê†^u ê^u⟩ = u!·n̄^u picks out the diagonal
/// terms (off-diagonal normal-ordered terms vanish on a thermal state).
fn thermal_poly(runs: &[(bool, u32)]) -> Vec<(f64, u32)> {
    let mut terms: HashMap<(u32, u32), f64> = HashMap::new();
    terms.insert((0, 0), 1.0);
    for &(create, k) in runs {
        if k == 0 {
            continue;
        }
        let mut next: HashMap<(u32, u32), f64> = HashMap::new();
        for (&(u, v), &c) in &terms {
            if create {
                for t in 0..=v.min(k) {
                    let w = c * factorial(t) * binomial(v, t) * binomial(k, t);
                    *next.entry((u + k - t, v - t)).or_insert(0.0) += w;
                }
            } else {
                *next.entry((u, v + k)).or_insert(0.0) += c;
            }
        }
        terms = next;
    }
    let mut poly: Vec<(f64, u32)> = terms
        .into_iter()
        .filter(|&((u, v), c)| u == v && c != 0.0)
        .map(|((u, _), c)| (c * factorial(u), u))
        .collect();
    poly.sort_by_key(|&(_, m)| m);
    poly
}

fn eval_poly(poly: &[(f64, u32)], n_bar: f64) -> f64 {
    poly.iter().map(|&(c, m)| c * n_bar.powi(m as i32)).sum()
}

/// All binomial splits of one mode's run sequence.
fn expand_mode(runs: &[LadderRun]) -> Vec<ModeTerm> {
    let mut terms = Vec::new();
    let mut choice = vec![0u32; runs.len()];
    loop {
        let mut multiplicity = 1.0f64;
        let mut sys_pow = 0i32;
        let mut env_pow = 0i32;
        let mut system = Vec::with_capacity(runs.len());
        let mut env = Vec::with_capacity(runs.len());
        for (run, &j) in runs.iter().zip(&choice) {
            multiplicity *= binomial(run.power, j);
            sys_pow += j as i32;
            env_pow += (run.power - j) as i32;
            system.push(LadderRun { create: run.create, power: j });
            env.push((run.create, run.power - j));
        }
        let env_poly = thermal_poly(&env);
        if !env_poly.is_empty() {
            terms.push(ModeTerm {
                system,
                multiplicity,
                sqrt_eta_pow: sys_pow,
                sqrt_loss_pow: env_pow,
                env_poly,
            });
        }
        // mixed-radix increment over 0..=power per run
        let mut carry = true;
        for (slot, run) in choice.iter_mut().zip(runs) {
            if !carry {
                break;
            }
            if *slot < run.power {
                *slot += 1;
                carry = false;
            } else {
                *slot = 0;
            }
        }
        if carry {
            break;
        }
    }
    terms
}

fn mode_cache() -> &'static RwLock<HashMap<Vec<LadderRun>, Arc<Vec<ModeTerm>>>> {
    static CACHE: OnceLock<RwLock<HashMap<Vec<LadderRun>, Arc<Vec<ModeTerm>>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn cached_expansion(runs: &[LadderRun]) -> Arc<Vec<ModeTerm>> {
    if let Some(hit) = mode_cache().read().expect("cache lock").get(runs) {
        return hit.clone();
    }
    let built = Arc::new(expand_mode(runs));
    mode_cache()
        .write()
        .expect("cache lock")
        .entry(runs.to_vec())
        .or_insert(built)
        .clone()
}

/// Net Fock shift of a run sequence (creations minus annihilations).
fn net_shift(runs: &[LadderRun]) -> i64 {
    runs.iter()
        .map(|r| {
            if r.create {
                r.power as i64
            } else {
                -(r.power as i64)
            }
        })
        .sum()
}

/// Amplitude of `runs` acting on |n⟩ within a box of `dim` levels; the
/// rightmost run acts first.  Zero whenever any intermediate level leaves
/// the box, matching what the dense truncated operators would produce.
fn ladder_amplitude(runs: &[LadderRun], n: usize, dim: usize) -> f64 {
    let mut level = n as i64;
    let mut acc = 1.0f64;
    for run in runs.iter().rev() {
        if run.create {
            for _ in 0..run.power {
                level += 1;
                if level >= dim as i64 {
                    return 0.0;
                }
                acc *= (level as f64).sqrt();
            }
        } else {
            for _ in 0..run.power {
                if level <= 0 {
                    return 0.0;
                }
                acc *= (level as f64).sqrt();
                level -= 1;
            }
        }
    }
    acc
}

/// Per-shift, per-level weight tables for one mode at fixed (η, n̄):
/// the lossy single-mode operator is Σ_Δ Σ_n table[Δ][n] |n+Δ⟩⟨n|.
fn mode_weights(
    runs: &[LadderRun],
    dim: usize,
    noise: &NoiseModel,
) -> HashMap<i64, Vec<f64>> {
    let terms = cached_expansion(runs);
    let sqrt_eta = noise.eta.sqrt();
    let sqrt_loss = (1.0 - noise.eta).max(0.0).sqrt();
    let mut table: HashMap<i64, Vec<f64>> = HashMap::new();
    for term in terms.iter() {
        let scale = term.multiplicity
            * sqrt_eta.powi(term.sqrt_eta_pow)
            * sqrt_loss.powi(term.sqrt_loss_pow)
            * eval_poly(&term.env_poly, noise.n_bar);
        if scale == 0.0 {
            continue;
        }
        let shift = net_shift(&term.system);
        let slot = table.entry(shift).or_insert_with(|| vec![0.0; dim]);
        for (n, w) in slot.iter_mut().enumerate() {
            *w += scale * ladder_amplitude(&term.system, n, dim);
        }
    }
    table
}

/// Expectation value of a ladder word after both modes pass through the
/// lossy line, evaluated against the pre-loss state.
pub fn evaluate_lossy_ladder(
    state: &TwoModeState,
    word: &LadderWord,
    noise: &NoiseModel,
) -> Result<Complex64> {
    let (da, db) = (state.dim_a(), state.dim_b());
    mode_exponent_check(&word.a, da, "a")?;
    mode_exponent_check(&word.b, db, "b")?;
    let fa = mode_weights(&word.a, da, noise);
    let fb = mode_weights(&word.b, db, noise);
    let mut total = Complex64::new(0.0, 0.0);
    match &state.data {
        StateData::Pure(psi) => {
            for (&sa, wa) in &fa {
                for (&sb, wb) in &fb {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..da {
                        let ra = a as i64 + sa;
                        if ra < 0 || ra >= da as i64 {
                            continue;
                        }
                        let scale_a = wa[a];
                        if scale_a == 0.0 {
                            continue;
                        }
                        for b in 0..db {
                            let rb = b as i64 + sb;
                            if rb < 0 || rb >= db as i64 {
                                continue;
                            }
                            acc += psi[(ra as usize, rb as usize)].conj()
                                * (scale_a * wb[b])
                                * psi[(a, b)];
                        }
                    }
                    total += acc;
                }
            }
        }
        StateData::Mixed(rho) => {
            let idx = |a: usize, b: usize| a * db + b;
            for (&sa, wa) in &fa {
                for (&sb, wb) in &fb {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..da {
                        let ra = a as i64 + sa;
                        if ra < 0 || ra >= da as i64 {
                            continue;
                        }
                        let scale_a = wa[a];
                        if scale_a == 0.0 {
                            continue;
                        }
                        for b in 0..db {
                            let rb = b as i64 + sb;
                            if rb < 0 || rb >= db as i64 {
                                continue;
                            }
                            acc += rho[(idx(a, b), idx(ra as usize, rb as usize))]
                                * (scale_a * wb[b]);
                        }
                    }
                    total += acc;
                }
            }
        }
    }
    Ok(total)
}

/// Expectation value of a moment-matrix word after the lossy line.
pub fn evaluate_lossy_moment(
    state: &TwoModeState,
    word: &OperatorWord,
    noise: &NoiseModel,
) -> Result<Complex64> {
    evaluate_lossy_ladder(state, &word.ladder(), noise)
}
