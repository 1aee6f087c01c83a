//! Measurement budgets for determinant criteria.
//!
//! Every matrix entry is measured through its Hermitian parts
//! B̂₀ = (Ô† + Ô)/2 and B̂₁ = i(Ô† − Ô)/2, whose sample means carry
//! variance Var[B̂ₚ]/M when M shots go to that part.  To first order the
//! determinant's variance follows from ∂det/∂A[i,j] = adj(A)[j,i]:
//!
//!   (Δdet)² = Σᵢ adjᵢᵢ² Var[B̄ᵢᵢ] + 4 Σᵢ<ⱼ Σₚ cᵢⱼₚ² Var[B̄ᵢⱼₚ]
//!
//! with cᵢⱼ₀ = Re adjᵢⱼ and cᵢⱼ₁ = Im adjᵢⱼ.  Splitting a total shot
//! budget M in proportion to weight·σ per entry minimizes Δdet, giving
//! Δdet = Γ/√M with Γ the sum of those weights.  The detection
//! confidence of a measured determinant is then Φ(−det·√M/Γ).

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::criteria::{adjugate, build_matrix, CriterionMatrix, CriterionSpec};
use crate::fock::{clamp_variance, TwoModeState};
use crate::index::{matrix_element_word, Part};
use crate::loss::{evaluate_lossy_ladder, NoiseModel};
use crate::{Error, Result};

/// One measured quantity: a Hermitian part of the entry at (row, col),
/// positions 0-based within the criterion's ordinal list, row ≤ col.
/// Diagonal entries only carry the real part; their words are Hermitian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryKey {
    pub row: usize,
    pub col: usize,
    pub part: Part,
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.part {
            Part::Real => "re",
            Part::Imag => "im",
        };
        write!(f, "{}:{}:{}", self.row, self.col, tag)
    }
}

/// Mean, variance, and allocation weight of one measured quantity.
#[derive(Debug, Clone, Copy)]
pub struct BudgetEntry {
    pub key: EntryKey,
    /// True quantum expectation of the part on the lossy state.
    pub mean: f64,
    /// Single-shot variance of the part on the lossy state.
    pub variance: f64,
    /// |sensitivity|·σ; the optimal shot share is proportional to this.
    pub weight: f64,
}

/// Everything the allocation and the trial simulator need about one
/// criterion on one state behind one lossy line.
#[derive(Debug, Clone)]
pub struct ErrorBudget {
    matrix: CriterionMatrix,
    adjugate: DMatrix<Complex64>,
    determinant: f64,
    entries: Vec<BudgetEntry>,
}

impl ErrorBudget {
    pub fn spec(&self) -> &CriterionSpec {
        self.matrix.spec()
    }

    pub fn matrix(&self) -> &CriterionMatrix {
        &self.matrix
    }

    pub fn adjugate(&self) -> &DMatrix<Complex64> {
        &self.adjugate
    }

    pub fn determinant(&self) -> f64 {
        self.determinant
    }

    /// Budget rows in deterministic order: diagonal and upper-triangle
    /// entries by (row, col), real part before imaginary.
    pub fn entries(&self) -> &[BudgetEntry] {
        &self.entries
    }

    /// Γ: the sum of allocation weights.  Δdet = Γ/√M under the optimal
    /// split.  Zero means the determinant is first-order insensitive to
    /// every measurable quantity.
    pub fn gamma(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Assembles a budget from an explicit matrix and per-entry means
    /// and variances (e.g. estimated from measurement data).  The
    /// adjugate, determinant, and allocation weights are derived here;
    /// incoming weights are ignored.  Entries must cover exactly the
    /// criterion's measurable quantities in canonical order.
    pub fn from_parts(matrix: CriterionMatrix, entries: Vec<BudgetEntry>) -> Result<Self> {
        let d = matrix.spec().dimension();
        let mut expected = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in i..d {
                expected.push(EntryKey { row: i, col: j, part: Part::Real });
                if i != j {
                    expected.push(EntryKey { row: i, col: j, part: Part::Imag });
                }
            }
        }
        if entries.len() != expected.len()
            || entries.iter().zip(&expected).any(|(e, k)| e.key != *k)
        {
            return Err(Error::Allocation(
                "budget entries do not match the criterion's measurable quantities".into(),
            ));
        }
        if let Some(e) = entries.iter().find(|e| !(e.variance >= 0.0)) {
            return Err(Error::Numerical(format!(
                "entry {} carries an invalid variance {}",
                e.key, e.variance
            )));
        }
        let adj = adjugate(&matrix)?;
        let det = crate::criteria::determinant(&matrix)?;
        let mut budget = Self { matrix, adjugate: adj, determinant: det, entries };
        for k in 0..budget.entries.len() {
            let e = budget.entries[k];
            budget.entries[k].weight =
                budget.sensitivity_sq(&e.key).sqrt() * e.variance.sqrt();
        }
        Ok(budget)
    }

    /// Squared sensitivity of the determinant to this entry's sample
    /// mean: adjᵢᵢ² on the diagonal, (2·Re adjᵢⱼ)² or (2·Im adjᵢⱼ)² off
    /// it (the factor 2 folds in the mirrored lower-triangle entry).
    pub fn sensitivity_sq(&self, key: &EntryKey) -> f64 {
        let a = self.adjugate[(key.col, key.row)];
        if key.row == key.col {
            a.re * a.re
        } else {
            let c = match key.part {
                Part::Real => 2.0 * a.re,
                // adj[j,i] = ∂det/∂A[i,j]; the imaginary direction picks
                // up the conjugate pair's sign through the mirrored entry
                Part::Imag => 2.0 * a.im,
            };
            c * c
        }
    }
}

/// Builds the error budget: fills the criterion matrix with lossy
/// moments, forms its adjugate, and computes the single-shot variance of
/// every Hermitian part through
///   ⟨B̂ₚ²⟩ = (⟨Ô†Ô⟩ + ⟨ÔÔ†⟩ ± 2 Re⟨ÔÔ⟩)/4,
/// all evaluated on the pre-loss state through the symbolic expansion.
pub fn error_budget(
    state: &TwoModeState,
    spec: &CriterionSpec,
    noise: &NoiseModel,
) -> Result<ErrorBudget> {
    let matrix = build_matrix(state, spec, noise)?;
    let indices = spec.indices();
    let d = indices.len();
    let mut entries = Vec::new();
    for i in 0..d {
        for j in i..d {
            let word = matrix_element_word(&indices[i], &indices[j]).ladder();
            let value = matrix.entries()[(i, j)];
            if word.is_identity() {
                entries.push(BudgetEntry {
                    key: EntryKey { row: i, col: j, part: Part::Real },
                    mean: 1.0,
                    variance: 0.0,
                    weight: 0.0,
                });
                continue;
            }
            let dag_o = evaluate_lossy_ladder(state, &word.adjoint().concat(&word), noise)?;
            let o_dag = evaluate_lossy_ladder(state, &word.concat(&word.adjoint()), noise)?;
            let oo = evaluate_lossy_ladder(state, &word.concat(&word), noise)?;
            let parts: &[Part] = if i == j { &[Part::Real] } else { &[Part::Real, Part::Imag] };
            for &part in parts {
                let mean = match part {
                    Part::Real => value.re,
                    Part::Imag => value.im,
                };
                let sign = match part {
                    Part::Real => 1.0,
                    Part::Imag => -1.0,
                };
                let second = (dag_o.re + o_dag.re + sign * 2.0 * oo.re) / 4.0;
                let variance = clamp_variance(second - mean * mean, second)?;
                let key = EntryKey { row: i, col: j, part };
                entries.push(BudgetEntry {
                    key,
                    mean,
                    variance,
                    weight: 0.0,
                });
            }
        }
    }
    ErrorBudget::from_parts(matrix, entries)
}

/// A shot split over the budget's entries.  Counts are ideal (real
/// valued); simulation code rounds them to integers separately.
#[derive(Debug, Clone)]
pub struct AllocationPlan {
    pub counts: Vec<(EntryKey, f64)>,
    pub m_tot: f64,
    pub gamma: f64,
}

impl AllocationPlan {
    /// First-order determinant uncertainty under this plan's optimal
    /// proportions: Δdet = Γ/√M.
    pub fn delta_det(&self) -> f64 {
        if self.m_tot <= 0.0 {
            return f64::INFINITY;
        }
        self.gamma / self.m_tot.sqrt()
    }

    pub fn count_of(&self, key: &EntryKey) -> f64 {
        self.counts
            .iter()
            .find(|(k, _)| k == key)
            .map(|&(_, c)| c)
            .unwrap_or(0.0)
    }
}

/// Splits a total shot budget across the entries in proportion to their
/// weights, which minimizes the first-order Δdet.  A zero-weight entry
/// gets no shots; if every weight vanishes (Γ = 0) the plan is empty and
/// Δdet = 0, and the caller decides what a zero-uncertainty zero-length
/// experiment means.
pub fn optimal_allocation(budget: &ErrorBudget, m_tot: f64) -> Result<AllocationPlan> {
    if !m_tot.is_finite() || m_tot <= 0.0 {
        return Err(Error::Allocation(format!(
            "total shot budget must be positive, got {m_tot}"
        )));
    }
    let gamma = budget.gamma();
    let counts = budget
        .entries()
        .iter()
        .map(|e| {
            let share = if gamma > 0.0 { e.weight / gamma * m_tot } else { 0.0 };
            (e.key, share)
        })
        .collect();
    Ok(AllocationPlan { counts, m_tot, gamma })
}

/// First-order Δdet for an arbitrary (not necessarily optimal) split.
///
/// Entries whose sensitivity-weighted variance vanishes contribute
/// nothing and may have zero shots; an entry that does contribute must
/// have a positive count, otherwise the determinant's uncertainty is
/// not finite and the split is rejected.
pub fn predicted_delta_det(
    budget: &ErrorBudget,
    counts: &HashMap<EntryKey, f64>,
) -> Result<f64> {
    let mut var = 0.0f64;
    for e in budget.entries() {
        let contribution = budget.sensitivity_sq(&e.key) * e.variance;
        if contribution == 0.0 {
            continue;
        }
        let m = counts.get(&e.key).copied().unwrap_or(0.0);
        if m <= 0.0 {
            return Err(Error::Allocation(format!(
                "entry {} carries determinant uncertainty but receives no shots",
                e.key
            )));
        }
        var += contribution / m;
    }
    Ok(var.sqrt())
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    libm::erfc(-z / std::f64::consts::SQRT_2) / 2.0
}

/// Confidence that the determinant is truly negative, given its measured
/// value and first-order uncertainty Γ/√M: Φ(−det·√M/Γ).
///
/// Γ = 0 means the measurement has no uncertainty; the sign of det then
/// decides outright, and det = 0 carries no evidence either way.
pub fn confidence(det: f64, gamma: f64, m_tot: f64) -> Result<f64> {
    if !det.is_finite() || !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::Numerical(format!(
            "confidence needs finite det and nonnegative gamma, got det={det}, gamma={gamma}"
        )));
    }
    if !m_tot.is_finite() || m_tot <= 0.0 {
        return Err(Error::Numerical(format!(
            "total shot count must be positive, got {m_tot}"
        )));
    }
    if gamma == 0.0 {
        return if det < 0.0 {
            Ok(1.0)
        } else if det > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Degenerate(
                "determinant and its uncertainty are both zero".into(),
            ))
        };
    }
    Ok(normal_cdf(-det * m_tot.sqrt() / gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{apply_thermal_loss_channel, prepare_tmsv, FockConfig};
    use crate::index::{hermitian_parts, ordinal_to_multiindex};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn tmsv(zeta: f64, dim: usize) -> TwoModeState {
        prepare_tmsv(zeta, FockConfig::new(dim, dim)).unwrap()
    }

    fn pair_spec() -> CriterionSpec {
        CriterionSpec::new(vec![3, 5]).unwrap()
    }

    #[test]
    fn normal_cdf_frozen_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.0), 0.8413447460685429, epsilon = 1e-12);
        assert_relative_eq!(
            normal_cdf(-8.0),
            6.220960574271819e-16,
            max_relative = 1e-9
        );
        assert_relative_eq!(normal_cdf(3.0) + normal_cdf(-3.0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn confidence_orientation_and_degeneracy() {
        // det = −Γ/√M sits one standard deviation below zero
        assert_relative_eq!(
            confidence(-0.1, 0.1 * 100.0f64.sqrt(), 100.0).unwrap(),
            0.8413447460685429,
            epsilon = 1e-12
        );
        assert!(confidence(-1.0, 1.0, 1e4).unwrap() > 0.999);
        assert!(confidence(1.0, 1.0, 1e4).unwrap() < 1e-3);
        assert_eq!(confidence(-0.5, 0.0, 100.0).unwrap(), 1.0);
        assert_eq!(confidence(0.5, 0.0, 100.0).unwrap(), 0.0);
        assert!(matches!(
            confidence(0.0, 0.0, 100.0),
            Err(Error::Degenerate(_))
        ));
        assert!(confidence(0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn budget_variances_match_direct_state_variances_when_lossless() {
        let state = tmsv(1.0, 26);
        let spec = pair_spec();
        let budget = error_budget(&state, &spec, &NoiseModel::lossless()).unwrap();
        let indices = spec.indices();
        for e in budget.entries() {
            let word = matrix_element_word(&indices[e.key.row], &indices[e.key.col]);
            let (re_part, im_part) = hermitian_parts(&word);
            let part = match e.key.part {
                Part::Real => re_part,
                Part::Imag => im_part,
            };
            assert_relative_eq!(
                e.variance,
                state.variance_of_part(&part).unwrap(),
                epsilon = 1e-10
            );
            assert_relative_eq!(e.mean, state.part_mean(&part).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn budget_variances_match_the_dense_channel() {
        let state = tmsv(0.9, 24);
        let (eta, n_bar) = (0.7, 0.08);
        let budget =
            error_budget(&state, &pair_spec(), &NoiseModel::new(eta, n_bar).unwrap()).unwrap();
        let lossy = apply_thermal_loss_channel(&state, eta, n_bar).unwrap();
        let indices = pair_spec().indices();
        for e in budget.entries() {
            let word = matrix_element_word(&indices[e.key.row], &indices[e.key.col]);
            let (re_part, im_part) = hermitian_parts(&word);
            let part = match e.key.part {
                Part::Real => re_part,
                Part::Imag => im_part,
            };
            assert_relative_eq!(
                e.variance,
                lossy.variance_of_part(&part).unwrap(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn pair_budget_reproduces_closed_form_determinant() {
        let zeta: f64 = 1.0;
        let budget = error_budget(&tmsv(zeta, 26), &pair_spec(), &NoiseModel::lossless()).unwrap();
        assert_relative_eq!(
            budget.determinant(),
            -(zeta / 2.0).sinh().powi(2),
            epsilon = 1e-10
        );
        // (3,5) has entries on both modes; all four parts measurable
        assert_eq!(budget.entries().len(), 4);
        assert!(budget.gamma() > 0.0);
    }

    #[test]
    fn optimal_allocation_minimizes_the_predicted_uncertainty() {
        let budget = error_budget(
            &tmsv(1.0, 26),
            &pair_spec(),
            &NoiseModel::new(0.8, 0.0).unwrap(),
        )
        .unwrap();
        let m_tot = 1e4;
        let plan = optimal_allocation(&budget, m_tot).unwrap();
        let spent: f64 = plan.counts.iter().map(|&(_, c)| c).sum();
        assert_relative_eq!(spent, m_tot, epsilon = 1e-9);

        let optimal_map: HashMap<EntryKey, f64> = plan.counts.iter().cloned().collect();
        let optimal = predicted_delta_det(&budget, &optimal_map).unwrap();
        assert_relative_eq!(optimal, plan.delta_det(), epsilon = 1e-12);
        assert_relative_eq!(optimal, budget.gamma() / m_tot.sqrt(), epsilon = 1e-12);

        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let active: Vec<EntryKey> = budget
            .entries()
            .iter()
            .filter(|e| budget.sensitivity_sq(&e.key) * e.variance > 0.0)
            .map(|e| e.key)
            .collect();
        for _ in 0..20 {
            let raw: Vec<f64> = active.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let counts: HashMap<EntryKey, f64> = active
                .iter()
                .zip(&raw)
                .map(|(&k, &r)| (k, r / total * m_tot))
                .collect();
            let other = predicted_delta_det(&budget, &counts).unwrap();
            assert!(other >= optimal - 1e-12, "{other} < {optimal}");
        }
    }

    #[test]
    fn contributing_entry_without_shots_is_rejected() {
        let budget = error_budget(&tmsv(1.0, 26), &pair_spec(), &NoiseModel::lossless()).unwrap();
        let counts = HashMap::new();
        assert!(matches!(
            predicted_delta_det(&budget, &counts),
            Err(Error::Allocation(_))
        ));
    }

    #[test]
    fn vacuum_pair_budget_is_degenerate_but_not_an_error() {
        // every matrix entry vanishes on the vacuum, so the adjugate and
        // all weights vanish with it, even though the off-diagonal parts
        // keep single-shot variance 1/4
        let budget = error_budget(&tmsv(0.0, 8), &pair_spec(), &NoiseModel::lossless()).unwrap();
        assert_eq!(budget.determinant(), 0.0);
        assert_eq!(budget.gamma(), 0.0);
        let off: Vec<&BudgetEntry> = budget
            .entries()
            .iter()
            .filter(|e| e.key.row != e.key.col)
            .collect();
        assert_eq!(off.len(), 2);
        for e in off {
            assert_relative_eq!(e.variance, 0.25, epsilon = 1e-12);
            assert_eq!(e.weight, 0.0);
        }
        let plan = optimal_allocation(&budget, 100.0).unwrap();
        assert_eq!(plan.delta_det(), 0.0);
        assert!(plan.counts.iter().all(|&(_, c)| c == 0.0));
        // in that degenerate situation a zero determinant is no evidence
        assert!(matches!(
            confidence(0.0, plan.gamma, plan.m_tot),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn identity_entry_is_exact() {
        // ordinal 1 against itself is the identity word
        let spec = CriterionSpec::new(vec![1, 13]).unwrap();
        let budget = error_budget(
            &tmsv(0.8, 22),
            &spec,
            &NoiseModel::new(0.9, 0.05).unwrap(),
        )
        .unwrap();
        let id = budget
            .entries()
            .iter()
            .find(|e| e.key.row == 0 && e.key.col == 0)
            .unwrap();
        assert_eq!(id.mean, 1.0);
        assert_eq!(id.variance, 0.0);
        assert_eq!(id.weight, 0.0);
    }

    #[test]
    fn larger_budgets_order_entries_deterministically() {
        let spec = CriterionSpec::new(vec![1, 3, 5]).unwrap();
        let budget = error_budget(
            &tmsv(0.7, 22),
            &spec,
            &NoiseModel::new(0.85, 0.0).unwrap(),
        )
        .unwrap();
        let keys: Vec<String> = budget.entries().iter().map(|e| e.key.to_string()).collect();
        assert_eq!(
            keys,
            vec![
                "0:0:re", "0:1:re", "0:1:im", "0:2:re", "0:2:im", "1:1:re", "1:2:re", "1:2:im",
                "2:2:re"
            ]
        );
        let _ = ordinal_to_multiindex(3);
    }
}
