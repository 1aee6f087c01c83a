//! Monte Carlo simulation of the measurement process.
//!
//! One observable is measured per experimental run: a Hermitian part B̂
//! of a matrix entry is diagonalized on the truncated joint space,
//! degenerate eigenvalues are merged into spectral projectors, and
//! single-shot outcomes are drawn from the Born distribution of the
//! post-loss state.  Sample means and unbiased sample variances of those
//! outcomes realize exactly the statistics the error budget predicts,
//! which makes this module the oracle for the analytic Δdet.
//!
//! Randomness is organized as independent streams keyed by
//! (master seed, trial, measured quantity), so parallel trials reproduce
//! bit-exactly and never share draws across operators.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::criteria::{CriterionMatrix, CriterionSpec};
use crate::fock::{apply_thermal_loss_channel, mode_exponent_check, part_matrix, TwoModeState};
use crate::index::{matrix_element_word, HermitianPart, OperatorWord, Part};
use crate::linalg::hermitian_eigen;
use crate::loss::NoiseModel;
use crate::stats::{
    predicted_delta_det, AllocationPlan, BudgetEntry, EntryKey, ErrorBudget,
};
use crate::{Error, Result};

/// Eigenvalues closer than this (relative to their size) belong to one
/// spectral projector; splitting them would make outcome probabilities
/// depend on the numerical eigenbasis inside the degenerate subspace.
const DEGENERACY_TOL: f64 = 1e-9;

/// Born probabilities must sum to one within this residual; smaller
/// deviations are renormalized away, larger ones abort.
const PROBABILITY_TOL: f64 = 1e-9;

/// Identifies one independent randomness stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeed {
    pub master: u64,
    pub trial: u64,
    pub operator: u64,
}

/// Stable stream id of a measured quantity, independent of how many
/// other quantities share the experiment.
fn stream_id(key: &EntryKey) -> u64 {
    let part = match key.part {
        Part::Real => 0u64,
        Part::Imag => 1u64,
    };
    (key.row as u64) << 32 | (key.col as u64) << 1 | part
}

fn stream_rng(seed: StreamSeed) -> ChaCha12Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.master.to_le_bytes());
    bytes[8..16].copy_from_slice(&seed.trial.to_le_bytes());
    bytes[16..24].copy_from_slice(&seed.operator.to_le_bytes());
    bytes[24..32].copy_from_slice(b"mmnt-mc1");
    ChaCha12Rng::from_seed(bytes)
}

/// Spectral outcome distribution of one Hermitian observable on one
/// fixed state: grouped eigenvalues with their Born probabilities.
#[derive(Debug, Clone)]
pub struct OutcomeDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    picker: WeightedIndex<f64>,
}

impl OutcomeDistribution {
    /// Diagonalizes the truncated observable and collects the Born
    /// probability of each spectral projector.
    pub fn build(state: &TwoModeState, part: &HermitianPart) -> Result<Self> {
        let word = part.word.ladder();
        mode_exponent_check(&word.a, state.dim_a(), "a")?;
        mode_exponent_check(&word.b, state.dim_b(), "b")?;
        let matrix = part_matrix(part, state.dim_a(), state.dim_b());
        let eig = hermitian_eigen(&matrix)?;
        let probs = state.measurement_probabilities(&eig.vectors);
        Self::from_spectrum(&eig.values, &probs)
    }

    /// Groups an ascending spectrum into near-degenerate clusters and
    /// validates the probability vector.
    fn from_spectrum(eigenvalues: &[f64], probs: &[f64]) -> Result<Self> {
        let mut values = Vec::new();
        let mut weights = Vec::new();
        let mut k = 0;
        while k < eigenvalues.len() {
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut j = k;
            while j < eigenvalues.len() {
                let gap = eigenvalues[j] - eigenvalues[j.saturating_sub(1).max(k)];
                if j > k && gap > DEGENERACY_TOL * eigenvalues[j].abs().max(1.0) {
                    break;
                }
                sum += eigenvalues[j];
                count += 1;
                j += 1;
            }
            let mut p = 0.0;
            for value in &probs[k..j] {
                if *value < -PROBABILITY_TOL {
                    return Err(Error::Numerical(format!(
                        "Born probability {value:.3e} is significantly negative"
                    )));
                }
                p += value.max(0.0);
            }
            values.push(sum / count as f64);
            weights.push(p);
            k = j;
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::Numerical(format!(
                "Born probabilities sum to {total:.12} on a unit-trace state"
            )));
        }
        for w in &mut weights {
            *w /= total;
        }
        let picker = WeightedIndex::new(&weights).map_err(|e| {
            Error::Numerical(format!("outcome distribution is unsampleable: {e}"))
        })?;
        Ok(Self { values, weights, picker })
    }

    /// Grouped outcome values, ascending.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Born probability of each outcome.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Distribution mean Σ pₖvₖ.
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    /// Draws `count` independent outcomes.
    pub fn sample(&self, count: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
        (0..count)
            .map(|_| self.values[self.picker.sample(rng)])
            .collect()
    }
}

/// Single-shot outcomes of one measured quantity.
#[derive(Debug, Clone)]
pub struct SampleSet {
    key: EntryKey,
    outcomes: Vec<f64>,
}

impl SampleSet {
    pub fn new(key: EntryKey, outcomes: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InsufficientSamples(format!(
                "sample set {key} holds no outcomes"
            )));
        }
        Ok(Self { key, outcomes })
    }

    pub fn key(&self) -> EntryKey {
        self.key
    }

    pub fn count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    /// Sample mean B̄ = (1/M) Σ b⁽ᵐ⁾.
    pub fn mean(&self) -> f64 {
        self.outcomes.iter().sum::<f64>() / self.count() as f64
    }

    /// Unbiased sample variance Σ (B̄ − b⁽ᵐ⁾)²/(M − 1).
    pub fn variance(&self) -> Result<f64> {
        if self.count() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "variance of {} needs at least two outcomes, got {}",
                self.key,
                self.count()
            )));
        }
        let mean = self.mean();
        let ss: f64 = self.outcomes.iter().map(|b| (b - mean) * (b - mean)).sum();
        Ok(ss / (self.count() - 1) as f64)
    }
}

/// Measures one quantity: diagonalize its observable on the state and
/// draw `count` seeded outcomes.
pub fn sample_operator(
    state: &TwoModeState,
    key: EntryKey,
    word: &OperatorWord,
    count: usize,
    seed: StreamSeed,
) -> Result<SampleSet> {
    if count < 2 {
        return Err(Error::InsufficientSamples(format!(
            "measurement of {key} needs at least two shots, got {count}"
        )));
    }
    let part = HermitianPart { word: *word, part: key.part };
    let dist = OutcomeDistribution::build(state, &part)?;
    let mut rng = stream_rng(seed);
    SampleSet::new(key, dist.sample(count, &mut rng))
}

/// A moment matrix estimated from measurement data: sampled entries
/// carry their outcome sets, entries the plan left unmeasured keep their
/// exactly known values (identity entries, zero-sensitivity entries).
#[derive(Debug, Clone)]
pub struct EmpiricalMatrix {
    matrix: CriterionMatrix,
    sample_sets: BTreeMap<EntryKey, SampleSet>,
    exact: BTreeMap<EntryKey, f64>,
}

impl EmpiricalMatrix {
    /// Assembles A with A[i,j] = B̄ᵢⱼ₀ + i·B̄ᵢⱼ₁ from the upper-triangle
    /// estimates; the lower triangle is their conjugate mirror, so the
    /// result is Hermitian by construction.  Every upper-triangle
    /// quantity of the criterion must be covered exactly once, either by
    /// a sample set or by an exact value.
    pub fn assemble(
        spec: CriterionSpec,
        sample_sets: Vec<SampleSet>,
        exact: Vec<(EntryKey, f64)>,
    ) -> Result<Self> {
        let mut sets = BTreeMap::new();
        for set in sample_sets {
            if sets.insert(set.key(), set).is_some() {
                return Err(Error::Allocation(
                    "duplicate sample set for one measured quantity".into(),
                ));
            }
        }
        let mut fixed = BTreeMap::new();
        for (key, value) in exact {
            if fixed.insert(key, value).is_some() || sets.contains_key(&key) {
                return Err(Error::Allocation(format!(
                    "quantity {key} is supplied more than once"
                )));
            }
        }
        let d = spec.dimension();
        let mut covered = 0usize;
        let mut entries = DMatrix::<Complex64>::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let mut value = Complex64::new(0.0, 0.0);
                let parts: &[Part] =
                    if i == j { &[Part::Real] } else { &[Part::Real, Part::Imag] };
                for &part in parts {
                    let key = EntryKey { row: i, col: j, part };
                    let mean = match (sets.get(&key), fixed.get(&key)) {
                        (Some(set), None) => set.mean(),
                        (None, Some(&v)) => v,
                        (None, None) => {
                            return Err(Error::Allocation(format!(
                                "quantity {key} has neither samples nor an exact value"
                            )))
                        }
                        (Some(_), Some(_)) => unreachable!("rejected above"),
                    };
                    match part {
                        Part::Real => value.re = mean,
                        Part::Imag => value.im = mean,
                    }
                    covered += 1;
                }
                entries[(i, j)] = value;
                entries[(j, i)] = value.conj();
            }
        }
        if covered != sets.len() + fixed.len() {
            return Err(Error::Allocation(
                "supplied quantities do not match the criterion's entries".into(),
            ));
        }
        let matrix = CriterionMatrix::from_parts(spec, entries)?;
        Ok(Self { matrix, sample_sets: sets, exact: fixed })
    }

    pub fn spec(&self) -> &CriterionSpec {
        self.matrix.spec()
    }

    pub fn matrix(&self) -> &CriterionMatrix {
        &self.matrix
    }

    pub fn sample_sets(&self) -> &BTreeMap<EntryKey, SampleSet> {
        &self.sample_sets
    }

    pub fn determinant(&self) -> Result<f64> {
        crate::criteria::determinant(&self.matrix)
    }
}

/// Error budget estimated from measurement data alone: means and
/// unbiased variances from the samples, adjugate and determinant from
/// the assembled matrix.  Exact entries enter with zero variance.
pub fn empirical_budget(matrix: &EmpiricalMatrix) -> Result<ErrorBudget> {
    let d = matrix.spec().dimension();
    let mut entries = Vec::new();
    for i in 0..d {
        for j in i..d {
            let parts: &[Part] =
                if i == j { &[Part::Real] } else { &[Part::Real, Part::Imag] };
            for &part in parts {
                let key = EntryKey { row: i, col: j, part };
                let (mean, variance) = match matrix.sample_sets.get(&key) {
                    Some(set) => (set.mean(), set.variance()?),
                    None => (matrix.exact[&key], 0.0),
                };
                entries.push(BudgetEntry { key, mean, variance, weight: 0.0 });
            }
        }
    }
    ErrorBudget::from_parts(matrix.matrix().clone(), entries)
}

/// Rounds a continuous shot plan to integers: largest-remainder rounding
/// to the plan's total, then a floor of two shots wherever the plan
/// assigns any, because unbiased variances need M > 1.  The floor can
/// push the total slightly above the plan's.  Zero-share entries stay at
/// zero and are not measured.
pub fn integer_counts(plan: &AllocationPlan) -> Vec<(EntryKey, u64)> {
    let mut counts: Vec<(EntryKey, u64)> = Vec::new();
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0u64;
    for &(key, share) in &plan.counts {
        if share <= 0.0 {
            continue;
        }
        let floor = share.floor() as u64;
        remainders.push((counts.len(), share - share.floor()));
        counts.push((key, floor));
        assigned += floor;
    }
    let target = plan.m_tot.round().max(0.0) as u64;
    let mut leftover = target.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (idx, _) in remainders {
        if leftover == 0 {
            break;
        }
        counts[idx].1 += 1;
        leftover -= 1;
    }
    for entry in &mut counts {
        entry.1 = entry.1.max(2);
    }
    counts
}

/// Per-quantity audit record of one trial.
#[derive(Debug, Clone, Copy)]
pub struct OperatorRecord {
    pub key: EntryKey,
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
}

/// Result of one simulated experiment.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: u64,
    pub determinant: f64,
    pub delta_det: f64,
    pub operators: Vec<OperatorRecord>,
}

/// Reusable simulator for repeated experiments on one state behind one
/// lossy line: the channel output and every measured observable's
/// spectral distribution are prepared once, then each trial draws fresh
/// outcomes from its own streams.
#[derive(Debug, Clone)]
pub struct TrialRunner {
    lossy: TwoModeState,
    budget: ErrorBudget,
    counts: Vec<(EntryKey, u64)>,
    distributions: BTreeMap<EntryKey, OutcomeDistribution>,
    master_seed: u64,
}

impl TrialRunner {
    /// Applies the loss channel and diagonalizes every observable the
    /// plan measures.  The budget must describe the same criterion and
    /// noise point; it supplies the exact values of unmeasured entries.
    pub fn new(
        state: &TwoModeState,
        budget: &ErrorBudget,
        plan: &AllocationPlan,
        noise: &NoiseModel,
        master_seed: u64,
    ) -> Result<Self> {
        let lossy = apply_thermal_loss_channel(state, noise.eta, noise.n_bar)?;
        let mut runner = Self {
            lossy,
            budget: budget.clone(),
            counts: Vec::new(),
            distributions: BTreeMap::new(),
            master_seed,
        };
        runner.set_plan(plan)?;
        Ok(runner)
    }

    /// Re-targets the runner to another shot plan for the same budget,
    /// reusing the channel output and any already-diagonalized
    /// observables.
    pub fn set_plan(&mut self, plan: &AllocationPlan) -> Result<()> {
        let counts = integer_counts(plan);
        let indices = self.budget.spec().indices();
        for &(key, _) in &counts {
            if self.distributions.contains_key(&key) {
                continue;
            }
            if !self.budget.entries().iter().any(|e| e.key == key) {
                return Err(Error::Allocation(format!(
                    "plan measures {key}, which the budget does not describe"
                )));
            }
            let word = matrix_element_word(&indices[key.row], &indices[key.col]);
            let part = HermitianPart { word, part: key.part };
            self.distributions
                .insert(key, OutcomeDistribution::build(&self.lossy, &part)?);
        }
        self.counts = counts;
        Ok(())
    }

    /// The channel output being measured.
    pub fn lossy_state(&self) -> &TwoModeState {
        &self.lossy
    }

    /// Integer shot counts of the current plan.
    pub fn counts(&self) -> &[(EntryKey, u64)] {
        &self.counts
    }

    /// Runs one simulated experiment: sample every planned quantity,
    /// assemble the empirical matrix (unmeasured entries keep their
    /// exact values), and propagate the empirical variances through the
    /// empirical adjugate.
    pub fn trial(&self, trial: u64) -> Result<TrialOutcome> {
        let mut sets = Vec::new();
        let mut shot_map = HashMap::new();
        for &(key, count) in &self.counts {
            let seed = StreamSeed {
                master: self.master_seed,
                trial,
                operator: stream_id(&key),
            };
            let mut rng = stream_rng(seed);
            let outcomes = self.distributions[&key].sample(count as usize, &mut rng);
            sets.push(SampleSet::new(key, outcomes)?);
            shot_map.insert(key, count as f64);
        }
        let exact: Vec<(EntryKey, f64)> = self
            .budget
            .entries()
            .iter()
            .filter(|e| !shot_map.contains_key(&e.key))
            .map(|e| (e.key, e.mean))
            .collect();
        let empirical = EmpiricalMatrix::assemble(self.budget.spec().clone(), sets, exact)?;
        let emp_budget = empirical_budget(&empirical)?;
        let operators = empirical
            .sample_sets()
            .values()
            .map(|set| {
                Ok(OperatorRecord {
                    key: set.key(),
                    count: set.count() as u64,
                    mean: set.mean(),
                    variance: set.variance()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialOutcome {
            trial,
            determinant: emp_budget.determinant(),
            delta_det: predicted_delta_det(&emp_budget, &shot_map)?,
            operators,
        })
    }
}

/// One simulated experiment end to end: round the plan, measure on the
/// post-loss state, return the empirical determinant and its empirical
/// first-order uncertainty.
pub fn empirical_determinant_trial(
    state: &TwoModeState,
    budget: &ErrorBudget,
    plan: &AllocationPlan,
    noise: &NoiseModel,
    seed: u64,
) -> Result<(f64, f64)> {
    let runner = TrialRunner::new(state, budget, plan, noise, seed)?;
    let outcome = runner.trial(0)?;
    Ok((outcome.determinant, outcome.delta_det))
}
