//! Truncated two-mode Fock space.
//!
//! States live on the product of two number bases |a⟩⊗|b⟩ with a < dim_a,
//! b < dim_b, flattened as a·dim_b + b.  Pure states keep their amplitude
//! grid Ψ[a,b]; mixed states (loss-channel output, custom input) carry a
//! dense density matrix.  Every preparation normalizes the truncated state
//! and then checks that the population of the top Fock level of each mode
//! is below the configured tail tolerance, so truncation bias stays far
//! below the accuracy targets of downstream determinants.

mod channel;

pub use channel::{apply_thermal_loss_channel, kappa_t_to_eta};

use crate::index::{HermitianPart, LadderRun, LadderWord, OperatorWord, Part};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Truncation settings for a two-mode state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockConfig {
    pub dim_a: usize,
    pub dim_b: usize,
    /// Upper bound on the allowed population of the top Fock level of
    /// either mode.  Default 1e-10.
    pub tail_tolerance: f64,
}

impl FockConfig {
    pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;

    pub fn new(dim_a: usize, dim_b: usize) -> Self {
        Self {
            dim_a,
            dim_b,
            tail_tolerance: Self::DEFAULT_TAIL_TOLERANCE,
        }
    }

    pub fn with_tail_tolerance(mut self, tol: f64) -> Self {
        self.tail_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim_a < 2 || self.dim_b < 2 {
            return Err(Error::Truncation(format!(
                "mode dimensions must be at least 2, got {}x{}",
                self.dim_a, self.dim_b
            )));
        }
        if !(self.tail_tolerance > 0.0) {
            return Err(Error::Numerical(format!(
                "tail tolerance must be positive, got {}",
                self.tail_tolerance
            )));
        }
        Ok(())
    }

    pub fn joint_dim(&self) -> usize {
        self.dim_a * self.dim_b
    }
}

/// How a state was produced; kept for snapshots and run manifests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preparation {
    /// Two-mode squeezed vacuum with squeeze parameter ζ.
    TwoModeSqueezed { zeta: f64 },
    /// â^n b̂^m applied to a two-mode squeezed vacuum, renormalized.
    SubtractedSqueezed { zeta: f64, n_sub: u32, m_sub: u32 },
    /// (|α⟩|0⟩ − |0⟩|α⟩)/norm entangled coherent state.
    EntangledCat { alpha: f64 },
    /// Caller-supplied density matrix.
    Custom,
}

#[derive(Debug, Clone)]
pub(crate) enum StateData {
    /// Amplitude grid Ψ[a, b] (dim_a × dim_b).
    Pure(DMatrix<Complex64>),
    /// Density matrix on the flattened joint basis.
    Mixed(DMatrix<Complex64>),
}

/// A two-mode bosonic state on a truncated Fock space.
#[derive(Debug, Clone)]
pub struct TwoModeState {
    config: FockConfig,
    preparation: Preparation,
    pub(crate) data: StateData,
}

/// Annihilation operator on a `dim`-level mode: a|n⟩ = √n |n−1⟩.
pub fn annihilation(dim: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    m
}

/// Matrix of a one-mode run product in written order.
pub fn mode_matrix(runs: &[LadderRun], dim: usize) -> DMatrix<Complex64> {
    let a = annihilation(dim);
    let ad = a.adjoint();
    let mut m = DMatrix::identity(dim, dim);
    for run in runs {
        let f = if run.create { &ad } else { &a };
        for _ in 0..run.power {
            m = &m * f;
        }
    }
    m
}

/// Dense matrix of a Hermitian part B̂ₚ on the flattened joint basis.
pub fn part_matrix(part: &HermitianPart, dim_a: usize, dim_b: usize) -> DMatrix<Complex64> {
    let w = part.word.ladder();
    let op = mode_matrix(&w.a, dim_a).kronecker(&mode_matrix(&w.b, dim_b));
    let adj = op.adjoint();
    match part.part {
        Part::Real => (adj + op).scale(0.5),
        Part::Imag => {
            let diff = adj - op;
            diff.map(|z| Complex64::new(0.0, 1.0) * z * 0.5)
        }
    }
}

pub(crate) fn mode_exponent_check(runs: &[LadderRun], dim: usize, label: &str) -> Result<()> {
    let total: u32 = runs.iter().map(|r| r.power).sum();
    if (total as usize) + 1 > dim {
        return Err(Error::Truncation(format!(
            "mode-{label} dimension {dim} cannot support a word of mode order {total}"
        )));
    }
    Ok(())
}

impl TwoModeState {
    pub fn config(&self) -> &FockConfig {
        &self.config
    }

    pub fn dim_a(&self) -> usize {
        self.config.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.config.dim_b
    }

    pub fn preparation(&self) -> Preparation {
        self.preparation
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    /// Pure-state amplitude grid, if this state is pure.
    pub fn amplitudes(&self) -> Option<&DMatrix<Complex64>> {
        match &self.data {
            StateData::Pure(psi) => Some(psi),
            StateData::Mixed(_) => None,
        }
    }

    /// Dense density matrix on the flattened joint basis (materialized
    /// from the amplitude grid for pure states).
    pub fn density_matrix(&self) -> DMatrix<Complex64> {
        match &self.data {
            StateData::Pure(psi) => {
                let v = flatten(psi);
                let n = v.len();
                let mut rho = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        rho[(i, j)] = v[i] * v[j].conj();
                    }
                }
                rho
            }
            StateData::Mixed(rho) => rho.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.data {
            StateData::Pure(psi) => psi.iter().map(|z| z.norm_sqr()).sum(),
            StateData::Mixed(rho) => rho.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    /// Population of the top Fock level of each mode.
    pub fn top_level_populations(&self) -> (f64, f64) {
        let (da, db) = (self.config.dim_a, self.config.dim_b);
        match &self.data {
            StateData::Pure(psi) => {
                let pa = (0..db).map(|b| psi[(da - 1, b)].norm_sqr()).sum();
                let pb = (0..da).map(|a| psi[(a, db - 1)].norm_sqr()).sum();
                (pa, pb)
            }
            StateData::Mixed(rho) => {
                let idx = |a: usize, b: usize| a * db + b;
                let pa = (0..db).map(|b| rho[(idx(da - 1, b), idx(da - 1, b))].re).sum();
                let pb = (0..da).map(|a| rho[(idx(a, db - 1), idx(a, db - 1))].re).sum();
                (pa, pb)
            }
        }
    }

    /// Errors if the top Fock level of either mode carries more
    /// population than the configured tail tolerance.
    pub fn validate_tail(&self) -> Result<()> {
        let (pa, pb) = self.top_level_populations();
        let tol = self.config.tail_tolerance;
        if pa > tol || pb > tol {
            return Err(Error::Truncation(format!(
                "top-level populations ({pa:.3e}, {pb:.3e}) exceed tail tolerance {tol:.1e}"
            )));
        }
        Ok(())
    }

    /// Expectation value of a general ladder word on this state.
    pub fn expectation(&self, word: &LadderWord) -> Result<Complex64> {
        mode_exponent_check(&word.a, self.config.dim_a, "a")?;
        mode_exponent_check(&word.b, self.config.dim_b, "b")?;
        let ma = mode_matrix(&word.a, self.config.dim_a);
        let mb = mode_matrix(&word.b, self.config.dim_b);
        Ok(match &self.data {
            StateData::Pure(psi) => {
                // ⟨ψ| A⊗B |ψ⟩ = Σ conj(Ψ) ∘ (A Ψ Bᵀ)
                let phi = &ma * psi * mb.transpose();
                psi.iter().zip(phi.iter()).map(|(p, f)| p.conj() * f).sum()
            }
            StateData::Mixed(rho) => {
                // Tr[ρ (A⊗B)] with the kron product left implicit
                let (da, db) = (self.config.dim_a, self.config.dim_b);
                let idx = |a: usize, b: usize| a * db + b;
                let mut total = Complex64::new(0.0, 0.0);
                for a in 0..da {
                    for ap in 0..da {
                        let mut s = Complex64::new(0.0, 0.0);
                        for b in 0..db {
                            for bp in 0..db {
                                s += rho[(idx(a, b), idx(ap, bp))] * mb[(bp, b)];
                            }
                        }
                        total += ma[(ap, a)] * s;
                    }
                }
                total
            }
        })
    }

    /// Expectation value of a moment-matrix word.
    pub fn expectation_word(&self, word: &OperatorWord) -> Result<Complex64> {
        self.expectation(&word.ladder())
    }

    /// Mean of a Hermitian part: Re⟨Ô⟩ or Im⟨Ô⟩.
    pub fn part_mean(&self, part: &HermitianPart) -> Result<f64> {
        if part.word.is_identity() {
            return Ok(match part.part {
                Part::Real => 1.0,
                Part::Imag => 0.0,
            });
        }
        let m = self.expectation_word(&part.word)?;
        Ok(match part.part {
            Part::Real => m.re,
            Part::Imag => m.im,
        })
    }

    /// Variance of a Hermitian part, ⟨B̂ₚ²⟩ − ⟨B̂ₚ⟩².
    ///
    /// Small negative floating-point residues are clamped to zero; a
    /// residue beyond −1e−12 relative to ⟨B̂ₚ²⟩ is a genuine numerical
    /// failure and aborts.  The identity word has variance exactly 0.
    pub fn variance_of_part(&self, part: &HermitianPart) -> Result<f64> {
        if part.word.is_identity() {
            return Ok(0.0);
        }
        let o = part.word.ladder();
        let oo = self.expectation(&o.concat(&o))?;
        let dag_o = self.expectation(&o.adjoint().concat(&o))?;
        let o_dag = self.expectation(&o.concat(&o.adjoint()))?;
        let mean = self.part_mean(part)?;
        let sign = match part.part {
            Part::Real => 1.0,
            Part::Imag => -1.0,
        };
        let sq = (dag_o.re + o_dag.re + sign * 2.0 * oo.re) / 4.0;
        clamp_variance(sq - mean * mean, sq)
    }

    /// One-shot measurement probabilities ⟨vₖ|ρ|vₖ⟩ for each column of
    /// `basis` (columns must be orthonormal on the flattened joint basis).
    pub fn measurement_probabilities(&self, basis: &DMatrix<Complex64>) -> Vec<f64> {
        match &self.data {
            StateData::Pure(psi) => {
                let v = flatten(psi);
                let overlaps = basis.adjoint() * v;
                overlaps.iter().map(|z| z.norm_sqr()).collect()
            }
            StateData::Mixed(rho) => {
                let m = rho * basis;
                (0..basis.ncols())
                    .map(|k| {
                        basis
                            .column(k)
                            .iter()
                            .zip(m.column(k).iter())
                            .map(|(v, w)| (v.conj() * w).re)
                            .sum()
                    })
                    .collect()
            }
        }
    }

    /// Builds a validated state from a caller-supplied density matrix.
    ///
    /// The matrix must be trace-one within 1e−8, Hermitian within 1e−10,
    /// and positive semidefinite within −1e−10 on its smallest eigenvalue.
    /// Hermiticity and trace are then enforced exactly.
    pub fn from_density_matrix(rho: DMatrix<Complex64>, config: FockConfig) -> Result<Self> {
        config.validate()?;
        let n = config.joint_dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::DegenerateState(format!(
                "density matrix is {}x{}, expected {n}x{n}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let herm_defect = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_defect > 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix is not Hermitian (defect {herm_defect:.3e})"
            )));
        }
        let tr: Complex64 = rho.diagonal().iter().sum();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        let mut sym = (&rho + rho.adjoint()).scale(0.5);
        sym.scale_mut(1.0 / tr.re);
        let min_eig = crate::linalg::hermitian_eigen(&sym)?
            .values
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eig < -1e-10 {
            return Err(Error::Numerical(format!(
                "density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        let state = Self {
            config,
            preparation: Preparation::Custom,
            data: StateData::Mixed(sym),
        };
        state.validate_tail()?;
        Ok(state)
    }

    /// Builds a validated pure state from a caller-supplied amplitude
    /// grid (`amplitudes[(a, b)]` multiplies |a, b⟩).  The grid is
    /// renormalized, so only its direction matters.
    pub fn from_amplitudes(
        amplitudes: DMatrix<Complex64>,
        config: FockConfig,
    ) -> Result<Self> {
        config.validate()?;
        if amplitudes.nrows() != config.dim_a || amplitudes.ncols() != config.dim_b {
            return Err(Error::DegenerateState(format!(
                "amplitude grid is {}x{}, expected {}x{}",
                amplitudes.nrows(),
                amplitudes.ncols(),
                config.dim_a,
                config.dim_b
            )));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("amplitude grid is not finite".into()));
        }
        finish_pure(amplitudes, config, Preparation::Custom, "custom pure state")
    }

    pub(crate) fn from_mixed_parts(
        rho: DMatrix<Complex64>,
        config: FockConfig,
        preparation: Preparation,
    ) -> Self {
        Self {
            config,
            preparation,
            data: StateData::Mixed(rho),
        }
    }

    /// Restores a state verbatim from stored parts (snapshot loading):
    /// no renormalization or hermitization, so round-trips stay
    /// bit-exact, but shape, trace, and tail are still checked.
    pub(crate) fn from_raw_parts(
        data: StateData,
        config: FockConfig,
        preparation: Preparation,
    ) -> Result<Self> {
        config.validate()?;
        let shape_ok = match &data {
            StateData::Pure(psi) => {
                psi.nrows() == config.dim_a && psi.ncols() == config.dim_b
            }
            StateData::Mixed(rho) => {
                rho.nrows() == config.joint_dim() && rho.ncols() == config.joint_dim()
            }
        };
        if !shape_ok {
            return Err(Error::Format(format!(
                "stored payload does not match a {}x{} two-mode box",
                config.dim_a, config.dim_b
            )));
        }
        let state = Self { config, preparation, data };
        let trace = state.trace();
        if (trace - 1.0).abs() > 1e-8 {
            return Err(Error::Format(format!(
                "stored state has trace {trace:.12}, expected 1"
            )));
        }
        state.validate_tail()?;
        Ok(state)
    }
}

fn flatten(psi: &DMatrix<Complex64>) -> DVector<Complex64> {
    let (da, db) = (psi.nrows(), psi.ncols());
    let mut v = DVector::zeros(da * db);
    for a in 0..da {
        for b in 0..db {
            v[a * db + b] = psi[(a, b)];
        }
    }
    v
}

pub(crate) fn clamp_variance(var: f64, scale: f64) -> Result<f64> {
    if var >= 0.0 {
        return Ok(var);
    }
    let floor = -1e-12 * scale.abs().max(1.0);
    if var >= floor {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "variance {var:.3e} is negative beyond the clamp floor {floor:.3e}"
        )))
    }
}

fn finish_pure(
    psi: DMatrix<Complex64>,
    config: FockConfig,
    preparation: Preparation,
    context: &str,
) -> Result<TwoModeState> {
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if norm < 1e-14 {
        return Err(Error::DegenerateState(format!(
            "{context}: state has vanishing norm"
        )));
    }
    let psi = psi.scale(1.0 / norm.sqrt());
    let state = TwoModeState {
        config,
        preparation,
        data: StateData::Pure(psi),
    };
    state.validate_tail()?;
    Ok(state)
}

/// Two-mode squeezed vacuum: Σₖ sech(ζ/2)(−tanh(ζ/2))ᵏ |k,k⟩, renormalized
/// on the truncated space.
pub fn prepare_tmsv(zeta: f64, config: FockConfig) -> Result<TwoModeState> {
    config.validate()?;
    if !zeta.is_finite() {
        return Err(Error::DegenerateState(format!("squeeze parameter {zeta}")));
    }
    let t = (zeta / 2.0).tanh();
    let sech = 1.0 / (zeta / 2.0).cosh();
    let mut psi = DMatrix::zeros(config.dim_a, config.dim_b);
    let kmax = config.dim_a.min(config.dim_b);
    let mut coeff = sech;
    for k in 0..kmax {
        psi[(k, k)] = Complex64::new(coeff, 0.0);
        coeff *= -t;
    }
    finish_pure(psi, config, Preparation::TwoModeSqueezed { zeta }, "tmsv")
}

/// Photon-subtracted two-mode squeezed vacuum: âⁿ b̂ᵐ applied to the
/// squeezed vacuum and renormalized.
pub fn prepare_subtracted_tmsv(
    zeta: f64,
    n_sub: u32,
    m_sub: u32,
    config: FockConfig,
) -> Result<TwoModeState> {
    config.validate()?;
    if !zeta.is_finite() {
        return Err(Error::DegenerateState(format!("squeeze parameter {zeta}")));
    }
    if zeta == 0.0 && (n_sub > 0 || m_sub > 0) {
        return Err(Error::DegenerateState(
            "photon subtraction annihilates the vacuum".into(),
        ));
    }
    let t = (zeta / 2.0).tanh();
    let n = n_sub as usize;
    let m = m_sub as usize;
    // â^n b̂^m |k,k⟩ = √(k!/(k−n)!) √(k!/(k−m)!) |k−n, k−m⟩
    let kmax = (config.dim_a - 1 + n).min(config.dim_b - 1 + m);
    let mut psi = DMatrix::zeros(config.dim_a, config.dim_b);
    for k in n.max(m)..=kmax {
        let mut amp = (-t).powi(k as i32);
        for j in (k - n + 1)..=k {
            amp *= (j as f64).sqrt();
        }
        for j in (k - m + 1)..=k {
            amp *= (j as f64).sqrt();
        }
        psi[(k - n, k - m)] = Complex64::new(amp, 0.0);
    }
    finish_pure(
        psi,
        config,
        Preparation::SubtractedSqueezed { zeta, n_sub, m_sub },
        "subtracted tmsv",
    )
}

/// Entangled coherent state (|α⟩|0⟩ − |0⟩|α⟩)/√(2(1−e^{−α²})).
pub fn prepare_two_mode_cat(alpha: f64, config: FockConfig) -> Result<TwoModeState> {
    config.validate()?;
    if !alpha.is_finite() || alpha == 0.0 {
        return Err(Error::DegenerateState(format!(
            "cat amplitude {alpha} gives a vanishing superposition"
        )));
    }
    let mut psi = DMatrix::zeros(config.dim_a, config.dim_b);
    // coherent amplitudes α^k/√k!; the global e^{−α²/2} drops out in the
    // final normalization, and the k = 0 components cancel exactly
    let mut coh = 1.0;
    for k in 1..config.dim_a.max(config.dim_b) {
        coh *= alpha / (k as f64).sqrt();
        if k < config.dim_a {
            psi[(k, 0)] += Complex64::new(coh, 0.0);
        }
        if k < config.dim_b {
            psi[(0, k)] -= Complex64::new(coh, 0.0);
        }
    }
    finish_pure(psi, config, Preparation::EntangledCat { alpha }, "cat")
}

/// Independent phase rotations exp(−iθ n̂) of the two modes.
///
/// Moments pick up the corresponding phases, e.g. ⟨âb̂⟩ ↦ e^{−i(θ_a+θ_b)}⟨âb̂⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalRotation {
    pub theta_a: f64,
    pub theta_b: f64,
}

/// Applies a local phase rotation, preserving purity.
pub fn apply_local_rotation(state: &TwoModeState, rotation: &LocalRotation) -> TwoModeState {
    let (da, db) = (state.config.dim_a, state.config.dim_b);
    let phase = |a: usize, b: usize| {
        Complex64::from_polar(
            1.0,
            -(rotation.theta_a * a as f64 + rotation.theta_b * b as f64),
        )
    };
    let data = match &state.data {
        StateData::Pure(psi) => {
            let mut out = psi.clone();
            for a in 0..da {
                for b in 0..db {
                    out[(a, b)] *= phase(a, b);
                }
            }
            StateData::Pure(out)
        }
        StateData::Mixed(rho) => {
            let idx = |a: usize, b: usize| a * db + b;
            let mut out = rho.clone();
            for a in 0..da {
                for b in 0..db {
                    for ap in 0..da {
                        for bp in 0..db {
                            out[(idx(a, b), idx(ap, bp))] *=
                                phase(a, b) * phase(ap, bp).conj();
                        }
                    }
                }
            }
            StateData::Mixed(out)
        }
    };
    TwoModeState {
        config: state.config,
        preparation: state.preparation,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{hermitian_parts, parse_ladder_word, parse_operator_word};
    use approx::assert_relative_eq;

    fn cfg(d: usize) -> FockConfig {
        FockConfig::new(d, d)
    }

    fn expect(state: &TwoModeState, text: &str) -> Complex64 {
        state.expectation(&parse_ladder_word(text).unwrap()).unwrap()
    }

    #[test]
    fn tmsv_photon_number_matches_closed_form() {
        let state = prepare_tmsv(1.0, cfg(20)).unwrap();
        let s = (0.5f64).sinh();
        assert_relative_eq!(expect(&state, "ad a").re, s * s, max_relative = 1e-9);
        assert_relative_eq!(expect(&state, "bd b").re, s * s, max_relative = 1e-9);
        assert!(expect(&state, "ad a").im.abs() < 1e-14);
    }

    #[test]
    fn tmsv_cross_moment_matches_schmidt_ladder_oracle() {
        // oracle: ⟨âb̂⟩ = Σ_k c_k c_{k+1} √(k+1)² on the Schmidt expansion,
        // evaluated directly from the coefficient recursion
        let zeta: f64 = 1.0;
        let t = (zeta / 2.0).tanh();
        let sech = 1.0 / (zeta / 2.0).cosh();
        let mut oracle = 0.0;
        let mut ck = sech;
        for k in 0..60 {
            let ck1 = ck * -t;
            oracle += ck * ck1 * (k as f64 + 1.0);
            ck = ck1;
        }
        let state = prepare_tmsv(zeta, cfg(25)).unwrap();
        let got = expect(&state, "a b");
        assert_relative_eq!(got.re, oracle, max_relative = 1e-10);
        // closed form −cosh(ζ/2)sinh(ζ/2)
        assert_relative_eq!(got.re, -(0.5f64).cosh() * (0.5f64).sinh(), max_relative = 1e-9);
    }

    #[test]
    fn vacuum_antinormal_moment_is_one() {
        let state = prepare_tmsv(0.0, cfg(4)).unwrap();
        assert_relative_eq!(expect(&state, "a ad").re, 1.0, max_relative = 1e-14);
        assert_relative_eq!(expect(&state, "ad a").re, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn subtracted_state_matches_coefficient_oracle() {
        // oracle: amplitudes of â b̂ |tmsv⟩ are ∝ (k+1) tanh(ζ/2)^k |k,k⟩
        let zeta: f64 = 1.0;
        let t = (zeta / 2.0).tanh();
        let mut norm = 0.0;
        let mut mean = 0.0;
        for k in 0..200 {
            let w = ((k as f64 + 1.0) * t.powi(k)).powi(2);
            norm += w;
            mean += w * k as f64;
        }
        let oracle = mean / norm;
        let state = prepare_subtracted_tmsv(zeta, 1, 1, cfg(40)).unwrap();
        assert_relative_eq!(expect(&state, "ad a").re, oracle, max_relative = 1e-10);
        // subtraction raises the mean photon number above the squeezed vacuum
        assert!(oracle > (0.5f64).sinh().powi(2));
    }

    #[test]
    fn subtraction_on_vacuum_is_degenerate() {
        assert!(matches!(
            prepare_subtracted_tmsv(0.0, 1, 1, cfg(10)),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn cat_cross_moment_matches_closed_form() {
        // ⟨â†b̂⟩ = −α²e^{−α²} / (2(1−e^{−α²}))
        let alpha: f64 = 1.0;
        let state = prepare_two_mode_cat(alpha, cfg(18)).unwrap();
        let e = (-alpha * alpha).exp();
        let oracle = -alpha * alpha * e / (2.0 * (1.0 - e));
        assert_relative_eq!(expect(&state, "ad b").re, oracle, max_relative = 1e-10);
        assert_relative_eq!(oracle, -0.2909883534346632, max_relative = 1e-12);
    }

    #[test]
    fn cat_at_zero_amplitude_is_degenerate() {
        assert!(matches!(
            prepare_two_mode_cat(0.0, cfg(10)),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn preparations_are_normalized_and_tail_checked() {
        for state in [
            prepare_tmsv(1.0, cfg(20)).unwrap(),
            prepare_subtracted_tmsv(1.0, 1, 1, cfg(40)).unwrap(),
            prepare_two_mode_cat(1.5, cfg(24)).unwrap(),
        ] {
            assert_relative_eq!(state.trace(), 1.0, epsilon = 1e-12);
            state.validate_tail().unwrap();
        }
    }

    #[test]
    fn undersized_truncation_is_rejected() {
        assert!(matches!(
            prepare_tmsv(2.0, cfg(10)),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn rotation_rotates_moment_phases() {
        let state = prepare_tmsv(1.0, cfg(20)).unwrap();
        let rot = LocalRotation {
            theta_a: 0.7,
            theta_b: -0.3,
        };
        let rotated = apply_local_rotation(&state, &rot);
        let before = expect(&state, "a b");
        let after = expect(&rotated, "a b");
        let expected = before * Complex64::from_polar(1.0, -(0.7 - 0.3));
        assert!((after - expected).norm() < 1e-12);
        // photon numbers are rotation invariant
        assert_relative_eq!(
            expect(&rotated, "ad a").re,
            expect(&state, "ad a").re,
            max_relative = 1e-12
        );
    }

    #[test]
    fn identity_part_statistics_are_exact() {
        let state = prepare_two_mode_cat(1.0, cfg(16)).unwrap();
        let (re, im) = hermitian_parts(&parse_operator_word("1").unwrap());
        assert_eq!(state.part_mean(&re).unwrap(), 1.0);
        assert_eq!(state.variance_of_part(&re).unwrap(), 0.0);
        assert_eq!(state.part_mean(&im).unwrap(), 0.0);
        assert_eq!(state.variance_of_part(&im).unwrap(), 0.0);
    }

    #[test]
    fn vacuum_part_variances_match_four_level_arithmetic() {
        // On |0,0⟩ with Ô = â†b̂†: Ô|00⟩ = |11⟩ and Ô†|00⟩ = 0, so
        // ⟨Ô†Ô⟩ = 1, ⟨ÔÔ†⟩ = ⟨ÔÔ⟩ = ⟨Ô⟩ = 0 and both quadrature parts
        // have variance exactly 1/4.
        let vac = prepare_tmsv(0.0, cfg(6)).unwrap();
        let (re, im) = hermitian_parts(&parse_operator_word("ad bd").unwrap());
        assert_relative_eq!(vac.variance_of_part(&re).unwrap(), 0.25, epsilon = 1e-14);
        assert_relative_eq!(vac.variance_of_part(&im).unwrap(), 0.25, epsilon = 1e-14);
        // number operators are deterministic on the vacuum
        let (n_a, _) = hermitian_parts(&parse_operator_word("ad a").unwrap());
        assert_eq!(vac.variance_of_part(&n_a).unwrap(), 0.0);
    }

    #[test]
    fn part_matrix_is_hermitian_and_reproduces_means() {
        let state = prepare_tmsv(0.8, cfg(14)).unwrap();
        for text in ["ad bd", "ad a", "ad^2 a b"] {
            let word = parse_operator_word(text).unwrap();
            let (re, im) = hermitian_parts(&word);
            for part in [re, im] {
                let m = part_matrix(&part, 14, 14);
                let defect = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(defect < 1e-12, "{text}");
                let rho = state.density_matrix();
                let mean_from_matrix: Complex64 = (&rho * &m).diagonal().iter().sum();
                assert_relative_eq!(
                    mean_from_matrix.re,
                    state.part_mean(&part).unwrap(),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn custom_density_matrix_round_trips_and_validates() {
        let pure = prepare_tmsv(0.6, cfg(12)).unwrap();
        let rho = pure.density_matrix();
        let custom = TwoModeState::from_density_matrix(rho, cfg(12)).unwrap();
        assert_eq!(custom.preparation(), Preparation::Custom);
        assert_relative_eq!(
            expect(&custom, "ad a").re,
            expect(&pure, "ad a").re,
            epsilon = 1e-12
        );

        // non-Hermitian input is rejected
        let mut bad = pure.density_matrix();
        bad[(0, 1)] += Complex64::new(1e-3, 0.0);
        assert!(TwoModeState::from_density_matrix(bad, cfg(12)).is_err());

        // wrong trace is rejected
        let bad = pure.density_matrix().scale(1.5);
        assert!(TwoModeState::from_density_matrix(bad, cfg(12)).is_err());
    }

    #[test]
    fn mixed_and_pure_expectations_agree() {
        let pure = prepare_two_mode_cat(1.2, cfg(16)).unwrap();
        let mixed = TwoModeState::from_density_matrix(pure.density_matrix(), cfg(16)).unwrap();
        for text in ["ad a", "a b", "ad b", "ad a bd b", "ad^2 b^2"] {
            let p = expect(&pure, text);
            let m = expect(&mixed, text);
            assert!((p - m).norm() < 1e-11, "{text}: {p} vs {m}");
        }
    }

    #[test]
    fn word_too_large_for_truncation_errors() {
        let state = prepare_tmsv(0.0, FockConfig::new(3, 3)).unwrap();
        let word = parse_ladder_word("ad^2 a^2").unwrap();
        assert!(matches!(
            state.expectation(&word),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn custom_amplitude_grid_builds_a_normalized_pure_state() {
        // (|0,1⟩ + |1,0⟩)/√2, supplied unnormalized.
        let mut grid = DMatrix::zeros(4, 4);
        grid[(0, 1)] = Complex64::new(3.0, 0.0);
        grid[(1, 0)] = Complex64::new(0.0, 3.0);
        let state = TwoModeState::from_amplitudes(grid, cfg(4)).unwrap();
        assert!(state.is_pure());
        assert_eq!(state.preparation(), Preparation::Custom);
        assert!((state.trace() - 1.0).abs() < 1e-12);
        let n_a = expect(&state, "ad a");
        assert!((n_a.re - 0.5).abs() < 1e-12 && n_a.im.abs() < 1e-14);

        let wrong_shape = DMatrix::zeros(3, 4);
        assert!(TwoModeState::from_amplitudes(wrong_shape, cfg(4)).is_err());
        let zero = DMatrix::zeros(4, 4);
        assert!(TwoModeState::from_amplitudes(zero, cfg(4)).is_err());
    }
}
