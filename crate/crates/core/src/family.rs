//! State families for parameter sweeps.
//!
//! A family turns one sweep-parameter value into a prepared state and
//! picks a truncation that keeps the tails far below tolerance, with
//! headroom for operator words and for the thermal photons a lossy line
//! injects.  Families are resolved by name through a registry of trait
//! objects, so sweep code treats every preparation uniformly.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fock::{
    prepare_subtracted_tmsv, prepare_tmsv, prepare_two_mode_cat, FockConfig, StateData,
    TwoModeState,
};
use crate::snapshot::load_snapshot;
use crate::{Error, Result};

/// Extra Fock levels above the scanned support, absorbing channel
/// mixing and moderate thermal occupation without retuning.
const HEADROOM: usize = 10;

/// The truncation scan keeps cumulative tail mass below this fraction of
/// the tail tolerance, so post-processing cannot push the top levels
/// over it.
const TAIL_MARGIN: f64 = 1e-3;

/// Longest per-mode support the scan will consider.
const PROBE_MAX: usize = 4096;

/// One sweepable preparation.
pub trait StateFamily: Send + Sync {
    /// Registry name.
    fn id(&self) -> &'static str;

    /// Name of the swept parameter, for reports.
    fn sweep_parameter(&self) -> &'static str;

    /// Prepares the state at one sweep value on an explicit box.
    fn prepare(&self, value: f64, config: FockConfig) -> Result<TwoModeState>;

    /// A box that holds the state at this sweep value: the scanned
    /// support at a small fraction of the tail tolerance, plus headroom.
    fn default_config(&self, value: f64, tail_tolerance: f64) -> Result<FockConfig>;
}

/// Smallest level count whose excluded tail mass stays below
/// `tol · TAIL_MARGIN`, given unnormalized per-level weights.
fn support_levels(weights: &[f64], tol: f64) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateState(
            "state has no weight on the probe box".into(),
        ));
    }
    let budget = total * tol * TAIL_MARGIN;
    let mut tail = 0.0;
    for level in (0..weights.len()).rev() {
        tail += weights[level];
        if tail > budget {
            if level + 1 == weights.len() {
                return Err(Error::Truncation(
                    "sweep value needs more levels than the probe box holds".into(),
                ));
            }
            return Ok(level + 1);
        }
    }
    Ok(2)
}

fn boxed(levels_a: usize, levels_b: usize, tol: f64) -> FockConfig {
    FockConfig::new((levels_a + HEADROOM).max(4), (levels_b + HEADROOM).max(4))
        .with_tail_tolerance(tol)
}

/// Two-mode squeezed vacuum swept over the squeeze parameter ζ.
#[derive(Debug, Clone, Copy, Default)]
pub struct TmsvFamily;

impl StateFamily for TmsvFamily {
    fn id(&self) -> &'static str {
        "tmsv"
    }

    fn sweep_parameter(&self) -> &'static str {
        "zeta"
    }

    fn prepare(&self, value: f64, config: FockConfig) -> Result<TwoModeState> {
        prepare_tmsv(value, config)
    }

    fn default_config(&self, value: f64, tail_tolerance: f64) -> Result<FockConfig> {
        let lambda2 = (value / 2.0).tanh().powi(2);
        let mut weights = Vec::with_capacity(PROBE_MAX);
        let mut w = 1.0;
        for _ in 0..PROBE_MAX {
            weights.push(w);
            w *= lambda2;
            if w < f64::MIN_POSITIVE {
                break;
            }
        }
        let levels = support_levels(&weights, tail_tolerance)?;
        Ok(boxed(levels, levels, tail_tolerance))
    }
}

/// Photon-subtracted squeezed vacuum at fixed subtraction counts, swept
/// over ζ.
#[derive(Debug, Clone, Copy)]
pub struct SubtractedTmsvFamily {
    pub n_sub: u32,
    pub m_sub: u32,
}

impl Default for SubtractedTmsvFamily {
    fn default() -> Self {
        Self { n_sub: 1, m_sub: 1 }
    }
}

impl StateFamily for SubtractedTmsvFamily {
    fn id(&self) -> &'static str {
        "subtracted-tmsv"
    }

    fn sweep_parameter(&self) -> &'static str {
        "zeta"
    }

    fn prepare(&self, value: f64, config: FockConfig) -> Result<TwoModeState> {
        prepare_subtracted_tmsv(value, self.n_sub, self.m_sub, config)
    }

    fn default_config(&self, value: f64, tail_tolerance: f64) -> Result<FockConfig> {
        // |c_k|² ∝ k!/(k−n)! · k!/(k−m)! · λ^{2k} on |k−n, k−m⟩, so the
        // two modes see the same weights shifted by n and m
        let lambda2 = (value / 2.0).tanh().powi(2);
        let n = self.n_sub as usize;
        let m = self.m_sub as usize;
        let mut weights = Vec::new();
        let mut w = 1.0f64;
        for k in n.max(m)..PROBE_MAX {
            let mut c = w;
            for j in (k + 1 - n)..=k {
                c *= j as f64;
            }
            for j in (k + 1 - m)..=k {
                c *= j as f64;
            }
            weights.push(c);
            w *= lambda2;
            if c < f64::MIN_POSITIVE && k > 4 * (n + m + 1) {
                break;
            }
        }
        let k_levels = support_levels(&weights, tail_tolerance)? + n.max(m);
        Ok(boxed(
            k_levels.saturating_sub(n),
            k_levels.saturating_sub(m),
            tail_tolerance,
        ))
    }
}

/// Entangled coherent state swept over the amplitude α.
#[derive(Debug, Clone, Copy, Default)]
pub struct CatFamily;

impl StateFamily for CatFamily {
    fn id(&self) -> &'static str {
        "cat"
    }

    fn sweep_parameter(&self) -> &'static str {
        "alpha"
    }

    fn prepare(&self, value: f64, config: FockConfig) -> Result<TwoModeState> {
        prepare_two_mode_cat(value, config)
    }

    fn default_config(&self, value: f64, tail_tolerance: f64) -> Result<FockConfig> {
        // each mode carries one coherent branch: Poisson weights α^{2k}/k!
        let a2 = value * value;
        let mut weights = Vec::new();
        let mut w = 1.0f64;
        let mut k = 0usize;
        while k < PROBE_MAX {
            weights.push(w);
            k += 1;
            w *= a2 / k as f64;
            if w < f64::MIN_POSITIVE && (k as f64) > 2.0 * a2 {
                break;
            }
        }
        let levels = support_levels(&weights, tail_tolerance)?;
        Ok(boxed(levels, levels, tail_tolerance))
    }
}

/// A state loaded from a snapshot file; the sweep parameter is unused.
#[derive(Debug, Clone)]
pub struct CustomFamily {
    path: PathBuf,
    state: TwoModeState,
}

impl CustomFamily {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), state: load_snapshot(path)? })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Embeds a state into a box at least as large as its own, padding with
/// empty levels; moments are unchanged.
fn embed(state: &TwoModeState, config: FockConfig) -> Result<TwoModeState> {
    let (da, db) = (state.dim_a(), state.dim_b());
    if config.dim_a < da || config.dim_b < db {
        return Err(Error::Truncation(format!(
            "cannot shrink a {}x{} state into a {}x{} box",
            da, db, config.dim_a, config.dim_b
        )));
    }
    if config.dim_a == da && config.dim_b == db {
        return TwoModeState::from_raw_parts(state.data.clone(), config, state.preparation());
    }
    let data = match &state.data {
        StateData::Pure(psi) => {
            let mut grid = DMatrix::<Complex64>::zeros(config.dim_a, config.dim_b);
            grid.view_mut((0, 0), (da, db)).copy_from(psi);
            StateData::Pure(grid)
        }
        StateData::Mixed(rho) => {
            let mut big =
                DMatrix::<Complex64>::zeros(config.joint_dim(), config.joint_dim());
            for a1 in 0..da {
                for b1 in 0..db {
                    for a2 in 0..da {
                        for b2 in 0..db {
                            big[(a1 * config.dim_b + b1, a2 * config.dim_b + b2)] =
                                rho[(a1 * db + b1, a2 * db + b2)];
                        }
                    }
                }
            }
            StateData::Mixed(big)
        }
    };
    TwoModeState::from_raw_parts(data, config, state.preparation())
}

impl StateFamily for CustomFamily {
    fn id(&self) -> &'static str {
        "custom"
    }

    fn sweep_parameter(&self) -> &'static str {
        "index"
    }

    fn prepare(&self, _value: f64, config: FockConfig) -> Result<TwoModeState> {
        embed(&self.state, config)
    }

    fn default_config(&self, _value: f64, tail_tolerance: f64) -> Result<FockConfig> {
        let config = *self.state.config();
        Ok(config.with_tail_tolerance(tail_tolerance.min(config.tail_tolerance)))
    }
}

/// Options consumed by [`family_by_name`] for families that need more
/// than a name.
#[derive(Debug, Clone)]
pub struct FamilyOptions {
    /// Photons subtracted from mode a (subtracted-tmsv).
    pub n_sub: u32,
    /// Photons subtracted from mode b (subtracted-tmsv).
    pub m_sub: u32,
    /// Snapshot file (custom).
    pub snapshot: Option<PathBuf>,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self { n_sub: 1, m_sub: 1, snapshot: None }
    }
}

/// Registry names, in presentation order.
pub fn family_names() -> [&'static str; 4] {
    ["tmsv", "subtracted-tmsv", "cat", "custom"]
}

/// Resolves a family by registry name.
pub fn family_by_name(name: &str, options: &FamilyOptions) -> Result<Box<dyn StateFamily>> {
    match name.to_ascii_lowercase().replace('_', "-").as_str() {
        "tmsv" => Ok(Box::new(TmsvFamily)),
        "subtracted-tmsv" => Ok(Box::new(SubtractedTmsvFamily {
            n_sub: options.n_sub,
            m_sub: options.m_sub,
        })),
        "cat" => Ok(Box::new(CatFamily)),
        "custom" => {
            let path = options.snapshot.as_deref().ok_or_else(|| {
                Error::Parse("the custom family needs a snapshot path".into())
            })?;
            Ok(Box::new(CustomFamily::load(path)?))
        }
        other => Err(Error::Parse(format!(
            "unknown state family '{other}'; known: {}",
            family_names().join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::apply_thermal_loss_channel;
    use crate::index::parse_ladder_word;
    use approx::assert_relative_eq;

    #[test]
    fn registry_resolves_every_name() {
        let options = FamilyOptions::default();
        for name in ["tmsv", "subtracted-tmsv", "cat"] {
            assert_eq!(family_by_name(name, &options).unwrap().id(), name);
        }
        assert_eq!(
            family_by_name("Subtracted_TMSV", &options).unwrap().id(),
            "subtracted-tmsv"
        );
        assert!(matches!(
            family_by_name("gaussian", &options),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            family_by_name("custom", &options),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn default_boxes_hold_preparation_and_a_hot_channel() {
        // the roughest noise point the cross-validation grids use; the
        // dense channel only covers moderate sweep values, larger ones
        // go through the symbolic expansion
        let options = FamilyOptions::default();
        for name in ["tmsv", "subtracted-tmsv", "cat"] {
            let family = family_by_name(name, &options).unwrap();
            for value in [0.25, 1.0] {
                let config = family.default_config(value, 1e-10).unwrap();
                let state = family.prepare(value, config).unwrap();
                let lossy = apply_thermal_loss_channel(&state, 0.5, 0.1).unwrap();
                lossy.validate_tail().unwrap();
            }
            let config = family.default_config(2.0, 1e-10).unwrap();
            family.prepare(2.0, config).unwrap().validate_tail().unwrap();
        }
    }

    #[test]
    fn default_boxes_grow_with_the_sweep_value() {
        let family = TmsvFamily;
        let small = family.default_config(0.5, 1e-10).unwrap();
        let large = family.default_config(2.0, 1e-10).unwrap();
        assert!(large.dim_a > small.dim_a);
        let cat_small = CatFamily.default_config(0.5, 1e-10).unwrap();
        let cat_large = CatFamily.default_config(2.0, 1e-10).unwrap();
        assert!(cat_large.dim_a > cat_small.dim_a);
    }

    #[test]
    fn custom_family_round_trips_and_embeds() {
        let family = TmsvFamily;
        let config = family.default_config(1.0, 1e-10).unwrap();
        let state = family.prepare(1.0, config).unwrap();
        let path = std::env::temp_dir().join(format!(
            "family-test-{}-{:?}.bin",
            std::process::id(),
            std::thread::current().id()
        ));
        crate::snapshot::save_snapshot(&state, &path).unwrap();
        let custom = family_by_name(
            "custom",
            &FamilyOptions { snapshot: Some(path.clone()), ..Default::default() },
        )
        .unwrap();
        std::fs::remove_file(&path).unwrap();

        let same = custom.prepare(0.0, custom.default_config(0.0, 1e-10).unwrap()).unwrap();
        let number = parse_ladder_word("ad a").unwrap();
        let expected = state.expectation(&number).unwrap().re;
        assert_relative_eq!(same.expectation(&number).unwrap().re, expected, epsilon = 1e-13);

        let bigger = FockConfig::new(config.dim_a + 5, config.dim_b + 3)
            .with_tail_tolerance(1e-10);
        let embedded = custom.prepare(0.0, bigger).unwrap();
        assert_eq!(embedded.dim_a(), config.dim_a + 5);
        assert_relative_eq!(
            embedded.expectation(&number).unwrap().re,
            expected,
            epsilon = 1e-13
        );

        let smaller = FockConfig::new(4, 4);
        assert!(matches!(
            custom.prepare(0.0, smaller),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn embedded_mixed_states_keep_their_moments() {
        let state =
            prepare_tmsv(0.8, FockConfig::new(12, 12).with_tail_tolerance(1e-6)).unwrap();
        let lossy = apply_thermal_loss_channel(&state, 0.6, 0.05).unwrap();
        let bigger = FockConfig::new(15, 14).with_tail_tolerance(1e-6);
        let embedded = embed(&lossy, bigger).unwrap();
        for text in ["ad a", "bd b", "a b", "ad a bd b"] {
            let word = parse_ladder_word(text).unwrap();
            let x = lossy.expectation(&word).unwrap();
            let y = embedded.expectation(&word).unwrap();
            assert_relative_eq!(x.re, y.re, epsilon = 1e-12);
            assert_relative_eq!(x.im, y.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_parameters_are_named() {
        assert_eq!(TmsvFamily.sweep_parameter(), "zeta");
        assert_eq!(SubtractedTmsvFamily::default().sweep_parameter(), "zeta");
        assert_eq!(CatFamily.sweep_parameter(), "alpha");
    }
}
