//! The three-step search pipeline.
//!
//! Step 1 keeps only criteria whose determinant is negative somewhere on
//! the ideal sweep, step 2 propagates loss and budget into det, Γ, Δdet
//! and a confidence per grid point, step 3 ranks criteria per point and
//! folds numerically identical ones into annotated groups.

use std::cmp::Ordering;

use rayon::prelude::*;

use npt_core::criteria::{
    self, build_matrix, enumerate_specs, name_of, CriterionSpec,
};
use npt_core::family::StateFamily;
use npt_core::fock::{FockConfig, TwoModeState};
use npt_core::loss::NoiseModel;
use npt_core::sampler::{TrialOutcome, TrialRunner};
use npt_core::stats::{confidence, error_budget, optimal_allocation, EntryKey};

use crate::config::SweepConfig;
use crate::{with_context, CliError};

/// Negativity threshold for step-1 survival, relative to the matrix's
/// diagonal scale so large- and small-moment criteria are treated alike.
const FILTER_TOL: f64 = 1e-12;

/// Criteria whose det and Γ agree this closely at a grid point are
/// reported as one group.
const DEDUP_TOL: f64 = 1e-10;

/// One point of the evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub sweep_value: f64,
    pub eta: f64,
    pub n_bar: f64,
    pub m_tot: f64,
}

/// Verdict at the configured confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Detected,
    NotDetected,
    InsufficientEvidence,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Detected => "detected",
            Decision::NotDetected => "not_detected",
            Decision::InsufficientEvidence => "insufficient_evidence",
        }
    }
}

/// One evaluated (criterion, grid point) pair.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub point: GridPoint,
    pub spec: CriterionSpec,
    /// Catalog name for a named criterion, otherwise its ordinal form.
    pub criterion: String,
    pub det: f64,
    pub gamma: f64,
    pub delta_det: f64,
    pub confidence: f64,
    pub decision: Decision,
    /// Optimal shot shares, zero-share entries dropped.
    pub allocation: Vec<(EntryKey, f64)>,
}

/// One output row of the ranking step: a group of criteria that share
/// det and Γ at this point, or a placeholder when nothing survived.
#[derive(Debug, Clone)]
pub struct RankedRow {
    pub point: GridPoint,
    /// 1-based rank; 0 marks the no-candidates placeholder.
    pub rank: usize,
    /// Group label, members joined by '=' (e.g. "D_I=D_IV").
    pub criterion: String,
    /// Ordinal form of the group's first member, empty for placeholders.
    pub spec: String,
    pub det: f64,
    pub gamma: f64,
    pub delta_det: f64,
    pub confidence: f64,
    pub decision: Decision,
}

impl RankedRow {
    fn insufficient(point: GridPoint) -> Self {
        RankedRow {
            point,
            rank: 0,
            criterion: "none".into(),
            spec: String::new(),
            det: f64::NAN,
            gamma: f64::NAN,
            delta_det: f64::NAN,
            confidence: f64::NAN,
            decision: Decision::InsufficientEvidence,
        }
    }
}

/// The prepared sweep: one state per sweep value, boxed generously
/// enough for every word the search will evaluate.
pub struct SweepContext {
    pub family_id: String,
    pub sweep_parameter: String,
    pub values: Vec<f64>,
    pub configs: Vec<FockConfig>,
    pub states: Vec<TwoModeState>,
}

/// Picks the truncation box for one sweep value: the family's own box,
/// widened so a word with `max_word_order` ladder operators per mode
/// still fits, unless the user pinned the dimensions.
pub fn state_box(
    family: &dyn StateFamily,
    value: f64,
    max_word_order: u32,
    tail: f64,
    dims: Option<[usize; 2]>,
) -> Result<FockConfig, CliError> {
    let mut config = with_context(
        || format!("sizing the box for {} = {value}", family.sweep_parameter()),
        family.default_config(value, tail),
    )?;
    if let Some([dim_a, dim_b]) = dims {
        config.dim_a = dim_a;
        config.dim_b = dim_b;
    } else {
        let need = max_word_order as usize + 2;
        config.dim_a = config.dim_a.max(need);
        config.dim_b = config.dim_b.max(need);
    }
    Ok(config)
}

impl SweepContext {
    /// Prepares every sweep state up front; both pipeline steps and the
    /// manifest reuse them.  Error budgets square the matrix-element
    /// words, so with moments up to order `n_max` the boxes must absorb
    /// words of per-mode order `2 * n_max`.
    pub fn new(
        family: &dyn StateFamily,
        values: Vec<f64>,
        n_max: u32,
        tail: f64,
        dims: Option<[usize; 2]>,
    ) -> Result<Self, CliError> {
        let parameter = family.sweep_parameter();
        let mut configs = Vec::with_capacity(values.len());
        let mut states = Vec::with_capacity(values.len());
        for &value in &values {
            let config = state_box(family, value, 2 * n_max, tail, dims)?;
            let state = with_context(
                || format!("preparing {} at {parameter} = {value}", family.id()),
                family.prepare(value, config),
            )?;
            configs.push(config);
            states.push(state);
        }
        Ok(SweepContext {
            family_id: family.id().to_string(),
            sweep_parameter: parameter.to_string(),
            values,
            configs,
            states,
        })
    }
}

/// Step 1: enumerate all specs within the bounds and keep those whose
/// exact lossless determinant is negative at any sweep value.  Survivors
/// come back in enumeration order.
pub fn step1_filter(
    context: &SweepContext,
    d_min: usize,
    d_max: usize,
    n_max: u32,
) -> Result<Vec<CriterionSpec>, CliError> {
    let specs = enumerate_specs(d_min, d_max, n_max)?;
    let lossless = NoiseModel::lossless();
    let negative_at: Vec<Vec<bool>> = context
        .states
        .par_iter()
        .zip(&context.values)
        .map(|(state, &value)| {
            specs
                .iter()
                .map(|spec| {
                    let matrix = with_context(
                        || {
                            format!(
                                "filtering {spec} at {} = {value}",
                                context.sweep_parameter
                            )
                        },
                        build_matrix(state, spec, &lossless),
                    )?;
                    let det = with_context(
                        || {
                            format!(
                                "determinant of {spec} at {} = {value}",
                                context.sweep_parameter
                            )
                        },
                        criteria::determinant(&matrix),
                    )?;
                    Ok(det < -FILTER_TOL * matrix.diagonal_scale().max(1.0))
                })
                .collect::<Result<Vec<bool>, CliError>>()
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(specs
        .into_iter()
        .enumerate()
        .filter(|(k, _)| negative_at.iter().any(|flags| flags[*k]))
        .map(|(_, spec)| spec)
        .collect())
}

/// Full evaluation grid in output order: sweep value, then η, then n̄,
/// then budget.
pub fn grid_points(
    context: &SweepContext,
    etas: &[f64],
    n_bars: &[f64],
    m_tots: &[f64],
) -> Vec<GridPoint> {
    let mut points = Vec::new();
    for &sweep_value in &context.values {
        for &eta in etas {
            for &n_bar in n_bars {
                for &m_tot in m_tots {
                    points.push(GridPoint { sweep_value, eta, n_bar, m_tot });
                }
            }
        }
    }
    points
}

/// Step 2: per (criterion, grid point), the post-loss determinant, its
/// error budget, the optimal allocation of the shot budget, and the
/// resulting confidence and verdict.  Rows come out in grid order with
/// criteria in survivor order inside each point.
pub fn step2_evaluate(
    context: &SweepContext,
    specs: &[CriterionSpec],
    etas: &[f64],
    n_bars: &[f64],
    m_tots: &[f64],
    threshold: f64,
) -> Result<Vec<Evaluation>, CliError> {
    let mut tasks = Vec::new();
    for value_index in 0..context.values.len() {
        for &eta in etas {
            for &n_bar in n_bars {
                tasks.push((value_index, eta, n_bar));
            }
        }
    }
    let rows: Vec<Vec<Evaluation>> = tasks
        .par_iter()
        .map(|&(value_index, eta, n_bar)| {
            let sweep_value = context.values[value_index];
            let state = &context.states[value_index];
            let describe = |spec: &CriterionSpec| {
                format!(
                    "evaluating {spec} at {} = {sweep_value}, eta = {eta}, n_bar = {n_bar}",
                    context.sweep_parameter
                )
            };
            let noise = with_context(
                || format!("noise point eta = {eta}, n_bar = {n_bar}"),
                NoiseModel::new(eta, n_bar),
            )?;
            let mut budgets = Vec::with_capacity(specs.len());
            for spec in specs {
                budgets.push(with_context(|| describe(spec), error_budget(state, spec, &noise))?);
            }
            let mut rows = Vec::with_capacity(m_tots.len() * specs.len());
            for &m_tot in m_tots {
                let point = GridPoint { sweep_value, eta, n_bar, m_tot };
                for (spec, budget) in specs.iter().zip(&budgets) {
                    let plan = with_context(
                        || describe(spec),
                        optimal_allocation(budget, m_tot),
                    )?;
                    let det = budget.determinant();
                    let gamma = budget.gamma();
                    let (conf, decision) = match confidence(det, gamma, m_tot) {
                        Ok(c) if c >= threshold => (c, Decision::Detected),
                        Ok(c) => (c, Decision::NotDetected),
                        Err(npt_core::Error::Degenerate(_)) => {
                            (0.5, Decision::InsufficientEvidence)
                        }
                        Err(source) => {
                            return Err(CliError::Context {
                                context: describe(spec),
                                source,
                            })
                        }
                    };
                    rows.push(Evaluation {
                        point,
                        spec: spec.clone(),
                        criterion: label_of(spec),
                        det,
                        gamma,
                        delta_det: plan.delta_det(),
                        confidence: conf,
                        decision,
                        allocation: plan
                            .counts
                            .iter()
                            .filter(|(_, count)| *count > 0.0)
                            .cloned()
                            .collect(),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Catalog name of a spec, or its ordinal form when unnamed.
pub fn label_of(spec: &CriterionSpec) -> String {
    name_of(spec)
        .map(str::to_string)
        .unwrap_or_else(|| spec.to_string())
}

/// Step 3: rank criteria per grid point by confidence (descending, ties
/// broken lexicographically on the ordinal form) and fold criteria with
/// identical det and Γ into one annotated group.  Points with no rows
/// get an explicit insufficient-evidence placeholder.
pub fn step3_rank(rows: &[Evaluation], points: &[GridPoint]) -> Vec<RankedRow> {
    let catalog = criteria::named_catalog();
    let mut out = Vec::new();
    let mut cursor = 0;
    for &point in points {
        let start = cursor;
        while cursor < rows.len() && rows[cursor].point == point {
            cursor += 1;
        }
        let at_point = &rows[start..cursor];
        if at_point.is_empty() {
            out.push(RankedRow::insufficient(point));
            continue;
        }
        let mut sorted: Vec<&Evaluation> = at_point.iter().collect();
        sorted.sort_by(|x, y| {
            y.confidence
                .partial_cmp(&x.confidence)
                .unwrap_or(Ordering::Equal)
                .then_with(|| x.spec.to_string().cmp(&y.spec.to_string()))
        });
        let mut groups: Vec<Vec<&Evaluation>> = Vec::new();
        'rows: for row in sorted {
            for group in groups.iter_mut() {
                let head = group[0];
                if (head.det - row.det).abs() < DEDUP_TOL
                    && (head.gamma - row.gamma).abs() < DEDUP_TOL
                {
                    group.push(row);
                    continue 'rows;
                }
            }
            groups.push(vec![row]);
        }
        for (k, group) in groups.iter_mut().enumerate() {
            // Named members lead in catalog order, so annotations read
            // "D_I=D_IV" rather than following the string sort.
            group.sort_by_key(|r| {
                (
                    catalog
                        .iter()
                        .position(|n| n.spec == r.spec)
                        .unwrap_or(usize::MAX),
                    r.spec.clone(),
                )
            });
            let head = group[0];
            let criterion = group
                .iter()
                .map(|r| r.criterion.clone())
                .collect::<Vec<_>>()
                .join("=");
            out.push(RankedRow {
                point,
                rank: k + 1,
                criterion,
                spec: head.spec.to_string(),
                det: head.det,
                gamma: head.gamma,
                delta_det: head.delta_det,
                confidence: head.confidence,
                decision: head.decision,
            });
        }
    }
    out
}

/// Everything the full pipeline produces, ready for serialization.
pub struct SweepOutput {
    pub context: SweepContext,
    pub survivors: Vec<CriterionSpec>,
    pub evaluations: Vec<Evaluation>,
    pub ranked: Vec<RankedRow>,
}

/// Runs filter, evaluate and rank for a validated config.
pub fn run_pipeline(config: &SweepConfig) -> Result<SweepOutput, CliError> {
    let family = config.resolve_family()?;
    let context = SweepContext::new(
        family.as_ref(),
        config.sweep_values()?,
        config.search.n_max,
        config.options.tail_tolerance,
        config.options.dims,
    )?;
    let survivors =
        step1_filter(&context, config.d_min(), config.search.d_max, config.search.n_max)?;
    let etas = config.eta_values()?;
    let n_bars = config.n_bar_values()?;
    let m_tots = config.m_tot_values()?;
    let evaluations = step2_evaluate(
        &context,
        &survivors,
        &etas,
        &n_bars,
        &m_tots,
        config.options.confidence_threshold,
    )?;
    let ranked = step3_rank(&evaluations, &grid_points(&context, &etas, &n_bars, &m_tots));
    Ok(SweepOutput { context, survivors, evaluations, ranked })
}

/// Monte Carlo validation of one criterion at the first grid point.
pub struct MonteCarloOutput {
    pub criterion: String,
    pub spec: CriterionSpec,
    pub point: GridPoint,
    pub master_seed: u64,
    pub det: f64,
    pub delta_det: f64,
    pub trials: Vec<TrialOutcome>,
}

/// Simulates repeated finite-budget experiments for the configured
/// criterion at the first point of every grid, so predicted and
/// empirical determinant scatter can be compared off-line.
pub fn run_montecarlo(
    config: &SweepConfig,
    seed: u64,
    trials_override: Option<u64>,
) -> Result<MonteCarloOutput, CliError> {
    let section = config.montecarlo.as_ref().ok_or_else(|| {
        CliError::Config("montecarlo command needs a [montecarlo] config section".into())
    })?;
    let spec = criteria::by_name(&section.criterion)
        .map(Ok)
        .unwrap_or_else(|| section.criterion.parse::<CriterionSpec>())
        .map_err(|_| {
            CliError::Config(format!(
                "montecarlo.criterion {:?} is neither a catalog name nor an ordinal list",
                section.criterion
            ))
        })?;
    let family = config.resolve_family()?;
    let sweep_value = config.sweep_values()?[0];
    let eta = config.eta_values()?[0];
    let n_bar = config.n_bar_values()?[0];
    let m_tot = config.m_tot_values()?[0];
    let point = GridPoint { sweep_value, eta, n_bar, m_tot };

    let box_config = state_box(
        family.as_ref(),
        sweep_value,
        4 * spec.max_degree(),
        config.options.tail_tolerance,
        config.options.dims,
    )?;
    let describe = || {
        format!(
            "simulating {spec} at {} = {sweep_value}, eta = {eta}, n_bar = {n_bar}",
            family.sweep_parameter()
        )
    };
    let state = with_context(describe, family.prepare(sweep_value, box_config))?;
    let noise = with_context(describe, NoiseModel::new(eta, n_bar))?;
    let budget = with_context(describe, error_budget(&state, &spec, &noise))?;
    let plan = with_context(describe, optimal_allocation(&budget, m_tot))?;
    let runner = with_context(
        describe,
        TrialRunner::new(&state, &budget, &plan, &noise, seed),
    )?;
    let count = trials_override.or(section.trials).unwrap_or(100);
    let mut trials = Vec::with_capacity(count as usize);
    for trial in 0..count {
        trials.push(with_context(describe, runner.trial(trial))?);
    }
    Ok(MonteCarloOutput {
        criterion: label_of(&spec),
        spec,
        point,
        master_seed: seed,
        det: budget.determinant(),
        delta_det: plan.delta_det(),
        trials,
    })
}
