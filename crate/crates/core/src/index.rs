//! Multi-index bookkeeping for two-mode moment matrices.
//!
//! Rows and columns of a moment matrix are labelled by quadruples
//! (p, q, r, s) of ladder-operator exponents.  The quadruples are ordered
//! by total degree p+q+r+s, and within a degree block by iterating s, then
//! r, then q in ascending order (p takes the remainder).  The first few
//! ordinals are
//!
//! ```text
//!  1: (0,0,0,0)   2: (1,0,0,0)   3: (0,1,0,0)   4: (0,0,1,0)   5: (0,0,0,1)
//!  6: (2,0,0,0)   7: (1,1,0,0)   8: (0,2,0,0)   9: (1,0,1,0)  10: (0,1,1,0)
//! 11: (0,0,2,0)  12: (1,0,0,1)  13: (0,1,0,1)  14: (0,0,1,1)  15: (0,0,0,2)
//! ```
//!
//! The matrix element at (row i, column j) is the expectation value of the
//! ladder-operator word
//!
//! ```text
//! â†^{q_i} â^{p_i} â†^{p_j} â^{q_j} · b̂†^{s_j} b̂^{r_j} b̂†^{r_i} b̂^{s_i}
//! ```
//!
//! written exactly in this factor order (it is not normal ordered).  Rows
//! and columns are exchanged by the operator adjoint, which makes the
//! matrix Hermitian on every physical state.

use crate::{Error, Result};
use std::fmt;

/// Exponent quadruple (p, q, r, s) labelling one moment-matrix index.
///
/// p and q count mode-a annihilation/creation exponents, r and s the
/// mode-b annihilation/creation exponents of the row factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    pub p: u32,
    pub q: u32,
    pub r: u32,
    pub s: u32,
}

impl MultiIndex {
    pub const fn new(p: u32, q: u32, r: u32, s: u32) -> Self {
        Self { p, q, r, s }
    }

    /// Total degree p + q + r + s.
    pub fn degree(&self) -> u32 {
        self.p + self.q + self.r + self.s
    }

    /// Degree carried by mode a.
    pub fn degree_a(&self) -> u32 {
        self.p + self.q
    }

    /// Degree carried by mode b.
    pub fn degree_b(&self) -> u32 {
        self.r + self.s
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.p, self.q, self.r, self.s)
    }
}

/// Number of quadruples with total degree <= g.
fn count_through_degree(g: u32) -> u64 {
    // C(g+4, 4), evaluated in an overflow-safe order.
    let g = g as u64;
    (g + 1) * (g + 2) * (g + 3) * (g + 4) / 24
}

/// Number of (r, q) pairs with r + q <= x.
fn pairs_through(x: u32) -> u64 {
    let x = x as u64;
    (x + 1) * (x + 2) / 2
}

/// Maps a 1-based ordinal to its exponent quadruple.
///
/// Panics if `ordinal` is zero; every positive ordinal is valid.
pub fn ordinal_to_multiindex(ordinal: u64) -> MultiIndex {
    assert!(ordinal >= 1, "ordinals are 1-based");
    let mut degree = 0u32;
    while count_through_degree(degree) < ordinal {
        degree += 1;
    }
    let before = if degree == 0 {
        0
    } else {
        count_through_degree(degree - 1)
    };
    let mut pos = ordinal - before - 1;
    let g = degree;
    for s in 0..=g {
        let block = pairs_through(g - s);
        if pos >= block {
            pos -= block;
            continue;
        }
        for r in 0..=(g - s) {
            let row = (g - s - r + 1) as u64;
            if pos >= row {
                pos -= row;
                continue;
            }
            let q = pos as u32;
            return MultiIndex::new(g - s - r - q, q, r, s);
        }
    }
    unreachable!("position exhausted inside degree block");
}

/// Maps an exponent quadruple back to its 1-based ordinal.
pub fn multiindex_to_ordinal(m: &MultiIndex) -> u64 {
    let g = m.degree();
    let base = if g == 0 {
        0
    } else {
        count_through_degree(g - 1)
    };
    let mut pos = 0u64;
    for s in 0..m.s {
        pos += pairs_through(g - s);
    }
    for r in 0..m.r {
        pos += (g - m.s - r + 1) as u64;
    }
    pos += m.q as u64;
    base + pos + 1
}

/// Shared ordered table of multi-indices, grown on demand.
///
/// The table is append-only: once an ordinal has been assigned a quadruple
/// it never changes, so cached prefixes stay valid.
#[derive(Debug, Default, Clone)]
pub struct IndexMap {
    table: Vec<MultiIndex>,
}

impl IndexMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the quadruple for `ordinal` (1-based), extending the table.
    pub fn get(&mut self, ordinal: u64) -> MultiIndex {
        while (self.table.len() as u64) < ordinal {
            let next = self.table.len() as u64 + 1;
            self.table.push(ordinal_to_multiindex(next));
        }
        self.table[(ordinal - 1) as usize]
    }

    /// All ordinals whose quadruple degree is at most `max_degree`.
    pub fn ordinals_with_degree_at_most(&mut self, max_degree: u32) -> Vec<u64> {
        let limit = count_through_degree(max_degree);
        self.get(limit);
        (1..=limit).collect()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// One maximal run of equal ladder factors, e.g. â†² or b̂³.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LadderRun {
    pub create: bool,
    pub power: u32,
}

/// A product of ladder operators on the two modes, in written order.
///
/// Mode-a and mode-b factors commute, so the word is stored as one run
/// sequence per mode.  The run lists are kept canonical: no zero powers,
/// no two adjacent runs of the same kind.  This is the general form used
/// for operator products (e.g. squares of Hermitian parts); most public
/// entry points use the fixed-shape [`OperatorWord`] instead.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LadderWord {
    pub a: Vec<LadderRun>,
    pub b: Vec<LadderRun>,
}

fn canonicalize(runs: &[LadderRun]) -> Vec<LadderRun> {
    let mut out: Vec<LadderRun> = Vec::with_capacity(runs.len());
    for run in runs {
        if run.power == 0 {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.create == run.create => last.power += run.power,
            _ => out.push(*run),
        }
    }
    out
}

impl LadderWord {
    pub fn new(a: Vec<LadderRun>, b: Vec<LadderRun>) -> Self {
        Self {
            a: canonicalize(&a),
            b: canonicalize(&b),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.a.is_empty() && self.b.is_empty()
    }

    /// Total exponent over both modes.
    pub fn order(&self) -> u32 {
        self.a.iter().chain(&self.b).map(|r| r.power).sum()
    }

    /// Operator adjoint: reverses factor order and swaps â ↔ â†.
    pub fn adjoint(&self) -> Self {
        let flip = |runs: &[LadderRun]| {
            runs.iter()
                .rev()
                .map(|r| LadderRun {
                    create: !r.create,
                    power: r.power,
                })
                .collect()
        };
        Self {
            a: flip(&self.a),
            b: flip(&self.b),
        }
    }

    /// Operator product: `self` applied after being written to the left
    /// of `rhs` (mode by mode; the modes commute).
    pub fn concat(&self, rhs: &Self) -> Self {
        let mut a = self.a.clone();
        a.extend_from_slice(&rhs.a);
        let mut b = self.b.clone();
        b.extend_from_slice(&rhs.b);
        Self::new(a, b)
    }

    pub fn touches_a(&self) -> bool {
        !self.a.is_empty()
    }

    pub fn touches_b(&self) -> bool {
        !self.b.is_empty()
    }
}

/// A moment-matrix word: four mode-a and four mode-b exponents in the
/// fixed factor pattern creation, annihilation, creation, annihilation.
///
/// `a = [u0, u1, u2, u3]` stands for â†^{u0} â^{u1} â†^{u2} â^{u3}, and
/// likewise for mode b.  Every matrix element of a moment matrix has this
/// shape; arbitrary products generally do not (see [`LadderWord`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperatorWord {
    pub a: [u32; 4],
    pub b: [u32; 4],
}

/// The word whose expectation value sits at (row, column) of the moment
/// matrix.
pub fn matrix_element_word(row: &MultiIndex, col: &MultiIndex) -> OperatorWord {
    OperatorWord {
        a: [row.q, row.p, col.p, col.q],
        b: [col.s, col.r, row.r, row.s],
    }
}

impl OperatorWord {
    pub fn identity() -> Self {
        Self {
            a: [0; 4],
            b: [0; 4],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.a.iter().all(|&e| e == 0) && self.b.iter().all(|&e| e == 0)
    }

    /// Total exponent over both modes.
    pub fn order(&self) -> u32 {
        self.a.iter().chain(self.b.iter()).sum()
    }

    /// Adjoint stays within the fixed slot pattern: reversing the factor
    /// order and swapping daggers maps slot k to slot 3-k.
    pub fn adjoint(&self) -> Self {
        Self {
            a: [self.a[3], self.a[2], self.a[1], self.a[0]],
            b: [self.b[3], self.b[2], self.b[1], self.b[0]],
        }
    }

    pub fn touches_a(&self) -> bool {
        self.a.iter().any(|&e| e > 0)
    }

    pub fn touches_b(&self) -> bool {
        self.b.iter().any(|&e| e > 0)
    }

    /// General-form view of the word.
    pub fn ladder(&self) -> LadderWord {
        let runs = |e: &[u32; 4]| {
            vec![
                LadderRun {
                    create: true,
                    power: e[0],
                },
                LadderRun {
                    create: false,
                    power: e[1],
                },
                LadderRun {
                    create: true,
                    power: e[2],
                },
                LadderRun {
                    create: false,
                    power: e[3],
                },
            ]
        };
        LadderWord::new(runs(&self.a), runs(&self.b))
    }
}

/// Embeds a canonical run list into the creation/annihilation slot
/// pattern of [`OperatorWord`], preserving order.
fn embed_runs(runs: &[LadderRun]) -> Option<[u32; 4]> {
    let mut slots = [0u32; 4];
    let mut cursor = 0usize;
    for run in runs {
        // slots 0 and 2 are creation, 1 and 3 annihilation
        while cursor < 4 && (cursor % 2 == 0) != run.create {
            cursor += 1;
        }
        if cursor >= 4 {
            return None;
        }
        slots[cursor] = run.power;
        cursor += 1;
    }
    Some(slots)
}

impl TryFrom<&LadderWord> for OperatorWord {
    type Error = Error;

    fn try_from(w: &LadderWord) -> Result<Self> {
        let a = embed_runs(&w.a)
            .ok_or_else(|| Error::Parse(format!("word `{}` is not in moment form", w)))?;
        let b = embed_runs(&w.b)
            .ok_or_else(|| Error::Parse(format!("word `{}` is not in moment form", w)))?;
        Ok(Self { a, b })
    }
}

fn render_runs(f: &mut fmt::Formatter<'_>, runs: &[LadderRun], sym: &str, first: &mut bool) -> fmt::Result {
    for run in runs {
        if !*first {
            write!(f, " ")?;
        }
        *first = false;
        let d = if run.create { "d" } else { "" };
        if run.power == 1 {
            write!(f, "{sym}{d}")?;
        } else {
            write!(f, "{sym}{d}^{}", run.power)?;
        }
    }
    Ok(())
}

impl fmt::Display for LadderWord {
    /// Compact text form, e.g. `ad^2 a bd b` (`ad` is â†, `bd` is b̂†).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return write!(f, "1");
        }
        let mut first = true;
        render_runs(f, &self.a, "a", &mut first)?;
        render_runs(f, &self.b, "b", &mut first)
    }
}

impl fmt::Display for OperatorWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ladder().fmt(f)
    }
}

/// Parses the textual word grammar: whitespace-separated factors
/// `a`, `ad`, `b`, `bd`, each with an optional positive exponent `^k`;
/// the bare token `1` denotes the identity.  Mode-a and mode-b factors
/// may be interleaved (the modes commute); order within a mode is kept.
pub fn parse_ladder_word(text: &str) -> Result<LadderWord> {
    let trimmed = text.trim();
    if trimmed == "1" {
        return Ok(LadderWord::identity());
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for token in trimmed.split_whitespace() {
        let (head, power) = match token.split_once('^') {
            Some((h, exp)) => {
                let power: u32 = exp
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad exponent in `{token}`")))?;
                if power == 0 {
                    return Err(Error::Parse(format!("zero exponent in `{token}`")));
                }
                (h, power)
            }
            None => (token, 1),
        };
        let (mode_a, create) = match head {
            "a" => (true, false),
            "ad" => (true, true),
            "b" => (false, false),
            "bd" => (false, true),
            _ => return Err(Error::Parse(format!("unknown factor `{token}`"))),
        };
        let run = LadderRun { create, power };
        if mode_a {
            a.push(run);
        } else {
            b.push(run);
        }
    }
    if a.is_empty() && b.is_empty() {
        return Err(Error::Parse("empty operator word".into()));
    }
    Ok(LadderWord::new(a, b))
}

/// Parses a word and requires it to fit the moment-matrix slot pattern.
pub fn parse_operator_word(text: &str) -> Result<OperatorWord> {
    let ladder = parse_ladder_word(text)?;
    OperatorWord::try_from(&ladder)
}

/// Which Hermitian component of a word an observable measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    /// B̂₀ = (Ô† + Ô)/2, with ⟨B̂₀⟩ = Re⟨Ô⟩.
    Real,
    /// B̂₁ = i(Ô† − Ô)/2, with ⟨B̂₁⟩ = Im⟨Ô⟩.
    Imag,
}

impl Part {
    /// 0 for the real part, 1 for the imaginary part.
    pub fn phase_index(&self) -> u32 {
        match self {
            Part::Real => 0,
            Part::Imag => 1,
        }
    }
}

/// One Hermitian observable extracted from a moment word.
///
/// A non-Hermitian word Ô splits as Ô = B̂₀ + iB̂₁ with both B̂ₚ
/// Hermitian; measuring both components of the upper triangle determines
/// the full moment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HermitianPart {
    pub word: OperatorWord,
    pub part: Part,
}

/// Splits a word into its two Hermitian observables (B̂₀, B̂₁).
pub fn hermitian_parts(word: &OperatorWord) -> (HermitianPart, HermitianPart) {
    (
        HermitianPart {
            word: *word,
            part: Part::Real,
        },
        HermitianPart {
            word: *word,
            part: Part::Imag,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// First fifteen ordinals, frozen.
    const FIRST_FIFTEEN: [(u32, u32, u32, u32); 15] = [
        (0, 0, 0, 0),
        (1, 0, 0, 0),
        (0, 1, 0, 0),
        (0, 0, 1, 0),
        (0, 0, 0, 1),
        (2, 0, 0, 0),
        (1, 1, 0, 0),
        (0, 2, 0, 0),
        (1, 0, 1, 0),
        (0, 1, 1, 0),
        (0, 0, 2, 0),
        (1, 0, 0, 1),
        (0, 1, 0, 1),
        (0, 0, 1, 1),
        (0, 0, 0, 2),
    ];

    #[test]
    fn leading_ordinals_match_frozen_table() {
        for (k, &(p, q, r, s)) in FIRST_FIFTEEN.iter().enumerate() {
            let m = ordinal_to_multiindex(k as u64 + 1);
            assert_eq!(m, MultiIndex::new(p, q, r, s), "ordinal {}", k + 1);
        }
        // first ordinal of the next degree block
        assert_eq!(ordinal_to_multiindex(16), MultiIndex::new(3, 0, 0, 0));
    }

    #[test]
    fn ordinals_are_degree_graded() {
        let mut last_degree = 0;
        for k in 1..=2000u64 {
            let d = ordinal_to_multiindex(k).degree();
            assert!(d >= last_degree, "degree dropped at ordinal {k}");
            last_degree = d;
        }
    }

    #[test]
    fn round_trip_through_ten_thousand() {
        for k in 1..=10_000u64 {
            let m = ordinal_to_multiindex(k);
            assert_eq!(multiindex_to_ordinal(&m), k, "round trip at {k}");
        }
    }

    #[test]
    fn index_map_extends_lazily() {
        let mut map = IndexMap::new();
        assert_eq!(map.get(13), MultiIndex::new(0, 1, 0, 1));
        assert_eq!(map.len(), 13);
        assert_eq!(map.get(5), MultiIndex::new(0, 0, 0, 1));
        assert_eq!(map.len(), 13);
    }

    fn word(i: u64, j: u64) -> OperatorWord {
        matrix_element_word(&ordinal_to_multiindex(i), &ordinal_to_multiindex(j))
    }

    #[test]
    fn known_matrix_element_words() {
        assert_eq!(word(1, 1).to_string(), "1");
        assert_eq!(word(3, 5).to_string(), "ad bd");
        assert_eq!(word(5, 3).to_string(), "a b");
        assert_eq!(word(3, 3).to_string(), "ad a");
        assert_eq!(word(5, 5).to_string(), "bd b");
        assert_eq!(word(1, 13).to_string(), "a bd");
        assert_eq!(word(13, 13).to_string(), "ad a bd b");
        assert_eq!(word(7, 7).to_string(), "ad a ad a");
        assert_eq!(word(7, 12).to_string(), "ad a ad bd");
        assert_eq!(word(12, 12).to_string(), "a ad bd b");
        assert_eq!(word(2, 2).to_string(), "a ad");
    }

    #[test]
    fn transposed_element_is_adjoint() {
        for i in 1..=15 {
            for j in 1..=15 {
                assert_eq!(word(j, i), word(i, j).adjoint());
            }
        }
    }

    #[test]
    fn diagonal_words_are_self_adjoint() {
        for i in 1..=15 {
            assert_eq!(word(i, i), word(i, i).adjoint());
        }
    }

    #[test]
    fn word_text_round_trips() {
        for i in 1..=15 {
            for j in 1..=15 {
                let w = word(i, j);
                let parsed = parse_operator_word(&w.to_string()).unwrap();
                assert_eq!(parsed.ladder(), w.ladder(), "({i},{j})");
            }
        }
    }

    #[test]
    fn parser_handles_exponents_and_modes() {
        let w = parse_operator_word("ad^2 a bd b").unwrap();
        assert_eq!(w.a, [2, 1, 0, 0]);
        assert_eq!(w.b, [1, 1, 0, 0]);
        assert_eq!(parse_operator_word("1").unwrap(), OperatorWord::identity());
        // interleaved modes are accepted; within-mode order is preserved
        let w = parse_operator_word("bd ad a b").unwrap();
        assert_eq!(w.a, [1, 1, 0, 0]);
        assert_eq!(w.b, [1, 1, 0, 0]);
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_operator_word("").is_err());
        assert!(parse_operator_word("c^2").is_err());
        assert!(parse_operator_word("a^0").is_err());
        assert!(parse_operator_word("a^x").is_err());
        // alternation deeper than the slot pattern
        assert!(parse_operator_word("a ad a ad a").is_err());
    }

    #[test]
    fn ladder_adjoint_and_concat() {
        let w = parse_ladder_word("ad a b").unwrap();
        assert_eq!(w.adjoint().to_string(), "ad a bd");
        let sq = w.concat(&w);
        assert_eq!(sq.to_string(), "ad a ad a b^2");
        assert_eq!(sq.order(), 6);
    }

    #[test]
    fn hermitian_parts_carry_phase_indices() {
        let (re, im) = hermitian_parts(&word(3, 5));
        assert_eq!(re.part.phase_index(), 0);
        assert_eq!(im.part.phase_index(), 1);
        assert_eq!(re.word, im.word);
    }

    proptest::proptest! {
        #[test]
        fn ordinal_mapping_is_a_bijection(ordinal in 1u64..500_000) {
            let m = ordinal_to_multiindex(ordinal);
            proptest::prop_assert_eq!(multiindex_to_ordinal(&m), ordinal);
        }

        #[test]
        fn multiindex_mapping_round_trips(
            p in 0u32..14, q in 0u32..14, r in 0u32..14, s in 0u32..14,
        ) {
            let m = MultiIndex::new(p, q, r, s);
            let back = ordinal_to_multiindex(multiindex_to_ordinal(&m));
            proptest::prop_assert_eq!(back, m);
        }

        #[test]
        fn element_words_transpose_to_their_adjoints(
            row in 1u64..3000, col in 1u64..3000,
        ) {
            let (ri, ci) = (ordinal_to_multiindex(row), ordinal_to_multiindex(col));
            let upper = matrix_element_word(&ri, &ci);
            let lower = matrix_element_word(&ci, &ri);
            proptest::prop_assert_eq!(upper.adjoint(), lower);
        }
    }
}
