//! Determinant criteria over moment-matrix principal submatrices.
//!
//! A criterion is a set of row/column ordinals.  The corresponding
//! submatrix is filled with lossy moments, and a negative determinant
//! certifies that the state's partial transpose is not a valid state,
//! i.e. that the two modes are entangled.  Separable states keep every
//! such determinant nonnegative no matter which ordinals are chosen.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fock::TwoModeState;
use crate::index::{matrix_element_word, ordinal_to_multiindex, MultiIndex};
use crate::loss::{evaluate_lossy_moment, NoiseModel};
use crate::{Error, Result};

/// Relative bound on the imaginary residue a determinant or diagonal
/// entry may carry before it is treated as a numerical failure instead
/// of rounding noise.
const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// An ordered set of moment-matrix ordinals selecting a principal
/// submatrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CriterionSpec {
    ordinals: Vec<u64>,
}

impl CriterionSpec {
    /// Builds a spec from ordinals (1-based); they are sorted and must be
    /// distinct.
    pub fn new(ordinals: impl Into<Vec<u64>>) -> Result<Self> {
        let mut ordinals = ordinals.into();
        if ordinals.is_empty() {
            return Err(Error::Parse("criterion needs at least one ordinal".into()));
        }
        if ordinals.iter().any(|&o| o == 0) {
            return Err(Error::Parse("ordinals are 1-based; 0 is not valid".into()));
        }
        ordinals.sort_unstable();
        if ordinals.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parse(format!(
                "criterion ordinals must be distinct, got {ordinals:?}"
            )));
        }
        Ok(Self { ordinals })
    }

    pub fn ordinals(&self) -> &[u64] {
        &self.ordinals
    }

    /// Number of rows of the submatrix.
    pub fn dimension(&self) -> usize {
        self.ordinals.len()
    }

    pub fn indices(&self) -> Vec<MultiIndex> {
        self.ordinals.iter().map(|&o| ordinal_to_multiindex(o)).collect()
    }

    /// Largest total degree among the selected indices; matrix entries
    /// then reach twice this order per mode at most.
    pub fn max_degree(&self) -> u32 {
        self.indices().iter().map(|i| i.degree()).max().unwrap_or(0)
    }

    /// True when the selected indices probe both modes, a necessary
    /// condition for the determinant to respond to entanglement at all.
    pub fn touches_both_modes(&self) -> bool {
        let idx = self.indices();
        idx.iter().any(|i| i.degree_a() > 0) && idx.iter().any(|i| i.degree_b() > 0)
    }
}

impl fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, o) in self.ordinals.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for CriterionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        let body = trimmed
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .unwrap_or(trimmed);
        let ordinals = body
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Parse(format!("bad ordinal {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<u64>>>()?;
        Self::new(ordinals)
    }
}

/// Enumerates every criterion whose size lies in [d_min, d_max] drawn
/// from the ordinals of total degree ≤ n_max/2 (so that matrix entries
/// stay within moment order n_max).  Grouped by size ascending, and
/// lexicographic within a size.
pub fn enumerate_specs(d_min: usize, d_max: usize, n_max: u32) -> Result<Vec<CriterionSpec>> {
    if d_min == 0 || d_min > d_max {
        return Err(Error::Parse(format!(
            "invalid size range [{d_min}, {d_max}]"
        )));
    }
    let pool = ordinal_pool(n_max);
    if (d_max as u64) > pool.len() as u64 {
        return Err(Error::Parse(format!(
            "size {d_max} exceeds the {} ordinals of degree <= {}",
            pool.len(),
            n_max / 2
        )));
    }
    let mut out = Vec::new();
    for size in d_min..=d_max {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            out.push(CriterionSpec {
                ordinals: combo.iter().map(|&k| pool[k]).collect(),
            });
            // next lexicographic combination
            let mut i = size;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if combo[i] != i + pool.len() - size {
                    combo[i] += 1;
                    for j in i + 1..size {
                        combo[j] = combo[j - 1] + 1;
                    }
                    break;
                }
                if i == 0 {
                    combo.clear();
                    break;
                }
            }
            if combo.is_empty() {
                break;
            }
        }
    }
    Ok(out)
}

/// Ordinals whose index degree is at most n_max/2, in ordinal order.
fn ordinal_pool(n_max: u32) -> Vec<u64> {
    let g = n_max / 2;
    let mut pool = Vec::new();
    let mut o = 1u64;
    loop {
        let idx = ordinal_to_multiindex(o);
        if idx.degree() > g {
            break;
        }
        pool.push(o);
        o += 1;
    }
    pool
}

/// A filled principal submatrix for one criterion.
#[derive(Debug, Clone)]
pub struct CriterionMatrix {
    spec: CriterionSpec,
    entries: DMatrix<Complex64>,
}

impl CriterionMatrix {
    pub fn spec(&self) -> &CriterionSpec {
        &self.spec
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    /// Product of the diagonal entries; the natural scale against which
    /// a determinant's sign is judged.
    pub fn diagonal_scale(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).product()
    }

    /// Wraps a raw Hermitian matrix; test and sampling code builds the
    /// matrix elsewhere and reuses the determinant machinery here.
    pub fn from_parts(spec: CriterionSpec, entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != spec.dimension() || entries.ncols() != spec.dimension() {
            return Err(Error::Numerical(format!(
                "matrix is {}x{} but the criterion selects {} ordinals",
                entries.nrows(),
                entries.ncols(),
                spec.dimension()
            )));
        }
        Ok(Self { spec, entries })
    }
}

/// Evaluates every entry of the criterion's submatrix on the given state
/// behind the given lossy line.
///
/// Only the upper triangle is computed; the transposed entry is its exact
/// conjugate because the transposed word is the adjoint word.  Diagonal
/// entries are forced real after checking the imaginary residue.
pub fn build_matrix(
    state: &TwoModeState,
    spec: &CriterionSpec,
    noise: &NoiseModel,
) -> Result<CriterionMatrix> {
    let indices = spec.indices();
    let d = indices.len();
    let mut entries = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let word = matrix_element_word(&indices[i], &indices[j]);
            let value = evaluate_lossy_moment(state, &word, noise)?;
            if i == j {
                if value.im.abs() > IMAG_RESIDUE_TOL * value.re.abs().max(1.0) {
                    return Err(Error::Numerical(format!(
                        "diagonal moment {} is not real: {value}",
                        spec.ordinals[i]
                    )));
                }
                entries[(i, i)] = Complex64::new(value.re, 0.0);
            } else {
                entries[(i, j)] = value;
                entries[(j, i)] = value.conj();
            }
        }
    }
    Ok(CriterionMatrix { spec: spec.clone(), entries })
}

/// Determinant of a filled criterion matrix, as a real number.
///
/// Sizes up to 3 use exact cofactor expansion; larger sizes go through a
/// pivoted LU.  A Hermitian matrix has a real determinant, so any
/// imaginary residue beyond rounding is reported as a failure.
pub fn determinant(matrix: &CriterionMatrix) -> Result<f64> {
    let det = raw_determinant(matrix.entries());
    realize(det, "determinant")
}

fn raw_determinant(m: &DMatrix<Complex64>) -> Complex64 {
    match m.nrows() {
        0 => Complex64::new(1.0, 0.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => m.clone_owned().lu().determinant(),
    }
}

fn realize(z: Complex64, what: &str) -> Result<f64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Numerical(format!("{what} is not finite: {z}")));
    }
    if z.im.abs() > IMAG_RESIDUE_TOL * z.re.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "{what} of a Hermitian matrix came out complex: {z}"
        )));
    }
    Ok(z.re)
}

/// Adjugate matrix: adj(A)[j, i] is the (i, j) cofactor, so that
/// A·adj(A) = det(A)·I and ∂det/∂A[i, j] = adj(A)[j, i].
///
/// Computed from cofactors directly, so it stays finite on singular
/// matrices.  For Hermitian input the adjugate is Hermitian too.
pub fn adjugate(matrix: &CriterionMatrix) -> Result<DMatrix<Complex64>> {
    let m = matrix.entries();
    let d = m.nrows();
    if d == 1 {
        return Ok(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
    }
    let mut adj = DMatrix::zeros(d, d);
    let mut minor = DMatrix::zeros(d - 1, d - 1);
    for i in 0..d {
        for j in 0..d {
            for (rr, r) in (0..d).filter(|&r| r != i).enumerate() {
                for (cc, c) in (0..d).filter(|&c| c != j).enumerate() {
                    minor[(rr, cc)] = m[(r, c)];
                }
            }
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = raw_determinant(&minor) * sign;
        }
    }
    for v in adj.iter() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Numerical("adjugate entry is not finite".into()));
        }
    }
    Ok(adj)
}

/// A criterion with a conventional name.
#[derive(Debug, Clone)]
pub struct NamedCriterion {
    pub name: &'static str,
    pub spec: CriterionSpec,
}

/// The named low-order criteria, covering photon-number witnesses of the
/// squeezed-vacuum family (D), the photon-subtracted family (E), and the
/// Hillery-Zubairy family probing ⟨âb̂†⟩ (F), plus the three-ordinal S_III
/// that extends the simplest F witness.
pub fn named_catalog() -> Vec<NamedCriterion> {
    let table: &[(&'static str, &[u64])] = &[
        ("D_I", &[3, 5]),
        ("D_II", &[2, 3, 5]),
        ("D_III", &[2, 3, 4, 5]),
        ("D_IV", &[1, 3, 5]),
        ("D_V", &[1, 2, 3, 5]),
        ("D_VI", &[1, 2, 3, 4, 5]),
        ("D_VII", &[3, 4, 5]),
        ("D_VIII", &[1, 3, 4, 5]),
        ("E_I", &[7, 12]),
        ("E_II", &[8, 13]),
        ("E_III", &[8, 15]),
        ("E_IV", &[10, 14]),
        ("E_V", &[13, 15]),
        ("F_I", &[1, 13]),
        ("F_II", &[2, 13]),
        ("F_III", &[6, 13]),
        ("F_IV", &[9, 13]),
        ("F_V", &[4, 13]),
        ("F_VI", &[11, 13]),
        ("S_III", &[1, 5, 13]),
    ];
    table
        .iter()
        .map(|&(name, ords)| NamedCriterion {
            name,
            spec: CriterionSpec::new(ords.to_vec()).expect("catalog entries are valid"),
        })
        .collect()
}

/// Looks up the conventional name of a spec, if it has one.
pub fn name_of(spec: &CriterionSpec) -> Option<&'static str> {
    named_catalog()
        .into_iter()
        .find(|n| &n.spec == spec)
        .map(|n| n.name)
}

/// Looks up a named criterion, e.g. "D_I".
pub fn by_name(name: &str) -> Option<CriterionSpec> {
    named_catalog()
        .into_iter()
        .find(|n| n.name.eq_ignore_ascii_case(name))
        .map(|n| n.spec)
}

/// Distinct ordinals appearing across a set of specs, for moment-table
/// sizing.
pub fn ordinal_union(specs: &[CriterionSpec]) -> Vec<u64> {
    let set: BTreeSet<u64> = specs.iter().flat_map(|s| s.ordinals.iter().copied()).collect();
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{prepare_tmsv, FockConfig};
    use approx::assert_relative_eq;

    fn tmsv(zeta: f64, dim: usize) -> TwoModeState {
        prepare_tmsv(zeta, FockConfig::new(dim, dim)).unwrap()
    }

    #[test]
    fn enumeration_counts_are_exact() {
        // 5 first-degree ordinals: all nonempty subsets
        assert_eq!(enumerate_specs(1, 5, 2).unwrap().len(), 31);
        // 15 ordinals of degree <= 2, pairs only
        assert_eq!(enumerate_specs(2, 2, 4).unwrap().len(), 105);
        // sizes 1..=3 over the same 15: 15 + 105 + 455
        assert_eq!(enumerate_specs(1, 3, 4).unwrap().len(), 575);
        assert_eq!(enumerate_specs(1, 1, 2).unwrap().len(), 5);
    }

    #[test]
    fn enumeration_is_grouped_and_lexicographic() {
        let specs = enumerate_specs(1, 5, 2).unwrap();
        assert_eq!(specs[0].ordinals(), &[1]);
        assert_eq!(specs[4].ordinals(), &[5]);
        assert_eq!(specs[5].ordinals(), &[1, 2]);
        assert_eq!(specs[6].ordinals(), &[1, 3]);
        assert_eq!(specs[30].ordinals(), &[1, 2, 3, 4, 5]);
        let mut sizes: Vec<usize> = specs.iter().map(|s| s.dimension()).collect();
        let sorted = {
            let mut s = sizes.clone();
            s.sort_unstable();
            s
        };
        assert_eq!(sizes, sorted);
        sizes.dedup();
        assert_eq!(sizes, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn both_mode_membership_matches_hand_count() {
        // among the 31 first-degree criteria: 2^5−1 total, minus those
        // supported on one mode only: (2^3−1) each side, re-adding the
        // shared pure-identity subset {1}: 31 − 7 − 7 + 1 = 18
        let specs = enumerate_specs(1, 5, 2).unwrap();
        let both = specs.iter().filter(|s| s.touches_both_modes()).count();
        assert_eq!(both, 18);
        assert!(CriterionSpec::new(vec![3, 5]).unwrap().touches_both_modes());
        assert!(!CriterionSpec::new(vec![2, 3]).unwrap().touches_both_modes());
    }

    #[test]
    fn simplest_pair_criterion_matches_closed_form() {
        for &zeta in &[0.5f64, 1.0, 2.0] {
            let dim = 24 + (14.0 * zeta) as usize;
            let state = tmsv(zeta, dim);
            let spec = CriterionSpec::new(vec![3, 5]).unwrap();
            let m = build_matrix(&state, &spec, &NoiseModel::lossless()).unwrap();
            let det = determinant(&m).unwrap();
            assert_relative_eq!(det, -(zeta / 2.0).sinh().powi(2), epsilon = 1e-10);
        }
    }

    #[test]
    fn attenuation_rescales_the_pair_determinant() {
        let zeta: f64 = 1.0;
        let state = tmsv(zeta, 30);
        let spec = CriterionSpec::new(vec![3, 5]).unwrap();
        for &eta in &[0.5, 0.8] {
            let noise = NoiseModel::new(eta, 0.0).unwrap();
            let det = determinant(&build_matrix(&state, &spec, &noise).unwrap()).unwrap();
            assert_relative_eq!(
                det,
                -eta * eta * (zeta / 2.0).sinh().powi(2),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn only_one_pair_flags_the_squeezed_state() {
        let state = tmsv(1.0, 30);
        let noise = NoiseModel::lossless();
        let mut negatives = Vec::new();
        for spec in enumerate_specs(2, 2, 2).unwrap() {
            let m = build_matrix(&state, &spec, &noise).unwrap();
            let det = determinant(&m).unwrap();
            if det < -1e-12 * m.diagonal_scale().abs().max(1e-300) {
                negatives.push(spec.to_string());
            }
        }
        assert_eq!(negatives, vec!["(3,5)".to_string()]);
    }

    #[test]
    fn single_ordinal_criteria_are_nonnegative() {
        // diagonal entries are expectations of X†X forms
        let state = tmsv(1.2, 32);
        for spec in enumerate_specs(1, 1, 4).unwrap() {
            let m = build_matrix(&state, &spec, &NoiseModel::new(0.7, 0.1).unwrap()).unwrap();
            assert!(determinant(&m).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn catalog_contents_and_lookup() {
        let catalog = named_catalog();
        assert_eq!(catalog.len(), 20);
        assert_eq!(by_name("D_I").unwrap().ordinals(), &[3, 5]);
        assert_eq!(by_name("d_iv").unwrap().ordinals(), &[1, 3, 5]);
        assert_eq!(by_name("S_III").unwrap().ordinals(), &[1, 5, 13]);
        assert_eq!(by_name("F_VI").unwrap().ordinals(), &[11, 13]);
        assert!(by_name("Z_9").is_none());
        let spec = CriterionSpec::new(vec![5, 3]).unwrap();
        assert_eq!(name_of(&spec), Some("D_I"));
        assert_eq!(name_of(&CriterionSpec::new(vec![2, 14]).unwrap()), None);
    }

    #[test]
    fn spec_text_round_trips() {
        for text in ["(3,5)", "(1,2,3,4,5)", "(13)"] {
            let spec: CriterionSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        let unsorted: CriterionSpec = "(5, 3, 1)".parse().unwrap();
        assert_eq!(unsorted.to_string(), "(1,3,5)");
        assert!("(3,3)".parse::<CriterionSpec>().is_err());
        assert!("()".parse::<CriterionSpec>().is_err());
        assert!("(0,2)".parse::<CriterionSpec>().is_err());
        assert!("(a,b)".parse::<CriterionSpec>().is_err());
    }

    #[test]
    fn adjugate_matches_two_by_two_closed_form() {
        let spec = CriterionSpec::new(vec![3, 5]).unwrap();
        let m = build_matrix(&tmsv(0.8, 24), &spec, &NoiseModel::lossless()).unwrap();
        let adj = adjugate(&m).unwrap();
        let e = m.entries();
        assert_eq!(adj[(0, 0)], e[(1, 1)]);
        assert_eq!(adj[(1, 1)], e[(0, 0)]);
        assert_eq!(adj[(0, 1)], -e[(0, 1)]);
        assert_eq!(adj[(1, 0)], -e[(1, 0)]);
    }

    #[test]
    fn adjugate_times_matrix_is_determinant_scaled_identity() {
        let spec = CriterionSpec::new(vec![1, 2, 3, 4, 5]).unwrap();
        let m = build_matrix(&tmsv(0.9, 26), &spec, &NoiseModel::new(0.8, 0.05).unwrap()).unwrap();
        let det = determinant(&m).unwrap();
        let adj = adjugate(&m).unwrap();
        let product = m.entries() * &adj;
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { det } else { 0.0 };
                assert!(
                    (product[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-10 * det.abs().max(1.0),
                    "({i},{j})"
                );
            }
        }
        // Hermitian input gives a Hermitian adjugate
        let defect = (&adj - adj.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(defect < 1e-11);
    }

    #[test]
    fn lu_and_cofactor_determinants_agree() {
        let spec = CriterionSpec::new(vec![1, 2, 3]).unwrap();
        let m = build_matrix(&tmsv(1.1, 28), &spec, &NoiseModel::new(0.9, 0.02).unwrap()).unwrap();
        let cofactor = determinant(&m).unwrap();
        let lu = m.entries().clone_owned().lu().determinant();
        assert_relative_eq!(cofactor, lu.re, epsilon = 1e-10 * cofactor.abs().max(1.0));
    }
}
