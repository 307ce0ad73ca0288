//! Pair partitions of the signed index set `{±1, …, ±n}`.
//!
//! A [`PairPartition`] is a fixed-point-free involution, drawn as a two-row
//! graph with the upper row `1..n` and the lower row `-1..-n`. Internally every
//! signed index is mapped to a *position* in the order `(1, -1, 2, -2, …, n, -n)`:
//! index `j` lives at `2(|j| - 1)` and `-j` at `2(|j| - 1) + 1`. With this
//! encoding the distinguished matching `δ` pairs position `p` with `p ^ 1`, the
//! crossing order is the position order, and `|j| - 1 == p >> 1`.

use std::fmt;

use thiserror::Error;

use crate::mp::SetPartition;

/// Enumerators refuse `n` above this unless the caller opts in.
pub const DEFAULT_MAX_N: usize = 9;

/// Positions are stored in `u8`, so `2n` must fit.
pub const HARD_MAX_N: usize = 127;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairingError {
    #[error("size must be at least 1")]
    Empty,
    #[error("n = {n} exceeds the enumeration bound {bound}; enable the large-n override to proceed")]
    TooLarge { n: usize, bound: usize },
    #[error("index {0} is outside ±1..±n")]
    OutOfRange(i64),
    #[error("index {0} is matched more than once")]
    Duplicate(i64),
    #[error("index {0} is left unmatched")]
    Unmatched(i64),
    #[error("index {0} is matched to itself")]
    FixedPoint(i64),
    #[error("sigma must join every upper index to a lower index")]
    NotPlus,
    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("pair partition is not color-preserving for the given coloring")]
    NotColorPreserving,
    #[error("pair partition has crossings")]
    Crossing,
    #[error("not a bijection of 1..n")]
    InvalidPermutation,
    #[error("invalid coloring: {0}")]
    InvalidColoring(String),
    #[error("invalid integer partition: {0}")]
    InvalidPartition(String),
}

#[inline]
pub(crate) fn position(j: i64, n: usize) -> Option<usize> {
    let a = j.unsigned_abs() as usize;
    if j == 0 || a > n {
        return None;
    }
    Some(2 * (a - 1) + usize::from(j < 0))
}

#[inline]
pub(crate) fn label(p: usize) -> i64 {
    let a = (p >> 1) as i64 + 1;
    if p & 1 == 1 {
        -a
    } else {
        a
    }
}

fn check_size(n: usize) -> Result<(), PairingError> {
    if n == 0 {
        return Err(PairingError::Empty);
    }
    if n > HARD_MAX_N {
        return Err(PairingError::TooLarge { n, bound: HARD_MAX_N });
    }
    Ok(())
}

/// Rejects `n` above [`DEFAULT_MAX_N`] unless `allow_large_n` is set.
pub fn check_enumeration_bound(n: usize, allow_large_n: bool) -> Result<(), PairingError> {
    check_size(n)?;
    if !allow_large_n && n > DEFAULT_MAX_N {
        return Err(PairingError::TooLarge { n, bound: DEFAULT_MAX_N });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Permutations
// ---------------------------------------------------------------------------

/// A bijection of `{1..n}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    // zero-based images
    image: Vec<u8>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { image: (0..n as u8).collect() }
    }

    /// The full cycle `(1, 2, …, n)`.
    pub fn full_cycle(n: usize) -> Self {
        Permutation { image: (0..n).map(|i| ((i + 1) % n) as u8).collect() }
    }

    /// Builds a permutation from one-based images: `images[i - 1] = α(i)`.
    pub fn from_images(images: &[usize]) -> Result<Self, PairingError> {
        let n = images.len();
        check_size(n)?;
        let mut seen = vec![false; n];
        let mut image = Vec::with_capacity(n);
        for &a in images {
            if a == 0 || a > n || seen[a - 1] {
                return Err(PairingError::InvalidPermutation);
            }
            seen[a - 1] = true;
            image.push((a - 1) as u8);
        }
        Ok(Permutation { image })
    }

    /// Builds a permutation from disjoint cycles written with one-based entries.
    /// Elements not mentioned are fixed.
    pub fn from_cycles(n: usize, cycles: &[Vec<usize>]) -> Result<Self, PairingError> {
        check_size(n)?;
        let mut images: Vec<usize> = (1..=n).collect();
        let mut seen = vec![false; n];
        for c in cycles {
            for (k, &a) in c.iter().enumerate() {
                if a == 0 || a > n || seen[a - 1] {
                    return Err(PairingError::InvalidPermutation);
                }
                seen[a - 1] = true;
                images[a - 1] = c[(k + 1) % c.len()];
            }
        }
        Self::from_images(&images)
    }

    pub(crate) fn from_raw(image: Vec<u8>) -> Self {
        Permutation { image }
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    /// `α(i)` for one-based `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.image[i - 1] as usize + 1
    }

    pub fn images(&self) -> Vec<usize> {
        self.image.iter().map(|&a| a as usize + 1).collect()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len(), "composing permutations of different sizes");
        Permutation { image: other.image.iter().map(|&a| self.image[a as usize]).collect() }
    }

    pub fn inverse(&self) -> Permutation {
        let mut image = vec![0u8; self.len()];
        for (i, &a) in self.image.iter().enumerate() {
            image[a as usize] = i as u8;
        }
        Permutation { image }
    }

    /// Cycles written from their minimum, ordered by minima; entries are one-based.
    pub fn canonical_cycles(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut cycles = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut c = Vec::new();
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                c.push(i + 1);
                i = self.image[i] as usize;
            }
            cycles.push(c);
        }
        cycles
    }

    pub fn cycle_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if !seen[start] {
                count += 1;
                let mut i = start;
                while !seen[i] {
                    seen[i] = true;
                    i = self.image[i] as usize;
                }
            }
        }
        count
    }
}

/// [`Permutation::canonical_cycles`] as a free function.
pub fn canonical_cycles(perm: &Permutation) -> Vec<Vec<usize>> {
    perm.canonical_cycles()
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.canonical_cycles() {
            let body: Vec<String> = c.iter().map(|a| a.to_string()).collect();
            write!(f, "({})", body.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{self}")
    }
}

// ---------------------------------------------------------------------------
// Colorings and integer partitions
// ---------------------------------------------------------------------------

/// An assignment of colors `1..=s` to the positions `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coloring {
    assign: Vec<usize>,
    colors: usize,
}

impl Coloring {
    pub fn new(assign: Vec<usize>, colors: usize) -> Result<Self, PairingError> {
        check_size(assign.len())?;
        if colors == 0 {
            return Err(PairingError::InvalidColoring("at least one color is required".into()));
        }
        if let Some(&bad) = assign.iter().find(|&&c| c == 0 || c > colors) {
            return Err(PairingError::InvalidColoring(format!("color {bad} is outside 1..={colors}")));
        }
        Ok(Coloring { assign, colors })
    }

    /// Uses the largest color present as `s`.
    pub fn from_assignment(assign: Vec<usize>) -> Result<Self, PairingError> {
        let s = assign.iter().copied().max().unwrap_or(0);
        Self::new(assign, s)
    }

    pub fn constant(n: usize) -> Self {
        Coloring { assign: vec![1; n], colors: 1 }
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn colors(&self) -> usize {
        self.colors
    }

    /// Color of one-based position `i`.
    pub fn get(&self, i: usize) -> usize {
        self.assign[i - 1]
    }

    /// Color of a signed index, `t(u) = t(|u|)`.
    pub fn of_signed(&self, j: i64) -> usize {
        self.assign[j.unsigned_abs() as usize - 1]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assign
    }

    /// Color per position in the `(1, -1, 2, -2, …)` order.
    pub(crate) fn per_position(&self) -> Vec<u8> {
        self.assign.iter().flat_map(|&c| [c as u8, c as u8]).collect()
    }
}

/// `λ ⊢ n` as a weakly decreasing list of positive parts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntegerPartition {
    parts: Vec<usize>,
}

impl IntegerPartition {
    pub fn new(parts: Vec<usize>) -> Result<Self, PairingError> {
        if parts.is_empty() {
            return Err(PairingError::InvalidPartition("no parts".into()));
        }
        if parts.contains(&0) {
            return Err(PairingError::InvalidPartition("parts must be positive".into()));
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(PairingError::InvalidPartition("parts must be weakly decreasing".into()));
        }
        check_size(parts.iter().sum())?;
        Ok(IntegerPartition { parts })
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn total(&self) -> usize {
        self.parts.iter().sum()
    }

    /// All partitions of `n`, largest first part first.
    pub fn all(n: usize) -> Vec<IntegerPartition> {
        fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<IntegerPartition>) {
            if rest == 0 {
                out.push(IntegerPartition { parts: cur.clone() });
                return;
            }
            for p in (1..=rest.min(max)).rev() {
                cur.push(p);
                rec(rest - p, p, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        if n > 0 {
            rec(n, n, &mut Vec::new(), &mut out);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Pair partitions
// ---------------------------------------------------------------------------

/// A fixed-point-free involution of `{±1, …, ±n}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairPartition {
    mate: Vec<u8>,
}

/// Direction in which an edge of `δ` is traversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// The permutation `π(γ)` together with the sign sequence `ε(γ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTraversal {
    pub perm: Permutation,
    pub signs: Vec<Sign>,
}

impl SignedTraversal {
    /// Cycles in traversal order with the sign attached to each element.
    pub fn signed_cycles(&self) -> Vec<Vec<(usize, Sign)>> {
        self.perm
            .canonical_cycles()
            .into_iter()
            .map(|c| c.into_iter().map(|i| (i, self.signs[i - 1])).collect())
            .collect()
    }
}

impl PairPartition {
    pub(crate) fn from_raw(mate: Vec<u8>) -> Self {
        debug_assert!(raw::is_valid(&mate));
        PairPartition { mate }
    }

    pub(crate) fn raw(&self) -> &[u8] {
        &self.mate
    }

    /// Builds a pair partition from its pairs of signed indices.
    pub fn from_pairs(n: usize, pairs: &[(i64, i64)]) -> Result<Self, PairingError> {
        check_size(n)?;
        const UNSET: u8 = u8::MAX;
        let mut mate = vec![UNSET; 2 * n];
        for &(a, b) in pairs {
            let pa = position(a, n).ok_or(PairingError::OutOfRange(a))?;
            let pb = position(b, n).ok_or(PairingError::OutOfRange(b))?;
            if pa == pb {
                return Err(PairingError::FixedPoint(a));
            }
            if mate[pa] != UNSET {
                return Err(PairingError::Duplicate(a));
            }
            if mate[pb] != UNSET {
                return Err(PairingError::Duplicate(b));
            }
            mate[pa] = pb as u8;
            mate[pb] = pa as u8;
        }
        if let Some(p) = mate.iter().position(|&m| m == UNSET) {
            return Err(PairingError::Unmatched(label(p)));
        }
        Ok(PairPartition { mate })
    }

    /// The distinguished matching `δ` pairing `j` with `-j`.
    pub fn delta(n: usize) -> Self {
        assert!((1..=HARD_MAX_N).contains(&n), "n out of range");
        PairPartition { mate: (0..2 * n).map(|p| (p ^ 1) as u8).collect() }
    }

    /// `σ_λ`: consecutive blocks `(1..λ₁)(λ₁+1..λ₁+λ₂)…` as cycles of the traversal permutation.
    pub fn sigma_from_partition(lambda: &IntegerPartition) -> Self {
        Self::sigma_from_blocks(lambda.parts()).expect("validated partition")
    }

    /// Like [`sigma_from_partition`](Self::sigma_from_partition) but with block
    /// lengths taken in the given order (not necessarily decreasing).
    pub fn sigma_from_blocks(lengths: &[usize]) -> Result<Self, PairingError> {
        if lengths.contains(&0) {
            return Err(PairingError::InvalidPartition("block lengths must be positive".into()));
        }
        let n: usize = lengths.iter().sum();
        check_size(n)?;
        let mut images = Vec::with_capacity(n);
        let mut start = 0;
        for &l in lengths {
            for k in 0..l {
                images.push(start + (k + 1) % l + 1);
            }
            start += l;
        }
        Ok(Self::pi_inverse(&Permutation::from_images(&images)?))
    }

    /// The unique `σ ∈ F_n⁺` with `σ(j) = -α(j)`.
    pub fn pi_inverse(alpha: &Permutation) -> Self {
        let n = alpha.len();
        let mut mate = vec![0u8; 2 * n];
        for i in 0..n {
            let up = 2 * i;
            let low = 2 * alpha.image[i] as usize + 1;
            mate[up] = low as u8;
            mate[low] = up as u8;
        }
        PairPartition { mate }
    }

    pub fn n(&self) -> usize {
        self.mate.len() / 2
    }

    /// `γ(j)` for a signed index `j`.
    pub fn partner(&self, j: i64) -> i64 {
        let p = position(j, self.n()).expect("index within ±1..±n");
        label(self.mate[p] as usize)
    }

    /// Each pair once, listed from the endpoint earlier in the order `(1, -1, 2, -2, …)`.
    pub fn pairs(&self) -> Vec<(i64, i64)> {
        self.mate
            .iter()
            .enumerate()
            .filter(|&(p, &m)| p < m as usize)
            .map(|(p, &m)| (label(p), label(m as usize)))
            .collect()
    }

    /// Every pair joins an upper (positive) index with a lower (negative) one.
    pub fn is_plus(&self) -> bool {
        self.mate.iter().enumerate().all(|(p, &m)| (p ^ m as usize) & 1 == 1)
    }

    pub fn is_noncrossing(&self) -> bool {
        self.crossings() == 0
    }

    /// Number of crossing pairs of edges in the point order `(1, -1, 2, -2, …, n, -n)`.
    pub fn crossings(&self) -> u32 {
        raw::crossings(&self.mate)
    }

    /// `(π(γ), ε(γ))` from the path construction on `δ ∪ γ`.
    pub fn traverse(&self) -> SignedTraversal {
        let n = self.n();
        let mut perm = vec![0u8; n];
        let mut plus = vec![false; n];
        raw::traverse(&self.mate, &mut perm, &mut plus);
        SignedTraversal {
            perm: Permutation::from_raw(perm),
            signs: plus.into_iter().map(|p| if p { Sign::Plus } else { Sign::Minus }).collect(),
        }
    }

    /// Number of cycles of `π(γ)`, i.e. components of `δ ∪ γ`.
    pub fn cycle_count(&self) -> usize {
        raw::cycle_count(&self.mate)
    }

    /// The Brauer product `self ⊚ gamma` for `self ∈ F_n⁺`.
    pub fn brauer(&self, gamma: &PairPartition) -> Result<PairPartition, PairingError> {
        if self.n() != gamma.n() {
            return Err(PairingError::SizeMismatch(self.n(), gamma.n()));
        }
        if !self.is_plus() {
            return Err(PairingError::NotPlus);
        }
        let mut out = vec![0u8; self.mate.len()];
        let mut via = vec![0u8; self.mate.len()];
        raw::brauer(&self.mate, &gamma.mate, &mut out, &mut via);
        Ok(PairPartition::from_raw(out))
    }

    /// `γ` is color-preserving for `t`: `t(|γ(j)|) = t(|j|)` for all `j`.
    pub fn preserves(&self, t: &Coloring) -> bool {
        t.len() == self.n()
            && self
                .mate
                .iter()
                .enumerate()
                .all(|(p, &m)| t.as_slice()[p >> 1] == t.as_slice()[m as usize >> 1])
    }

    /// The induced coloring `t(σ, γ)` of the positions of `π(σ ⊚ γ)`.
    ///
    /// Every edge of `σ ⊚ γ` contracts a path through the three-row diagram
    /// that contains exactly one edge of `γ`; the edge inherits that color.
    /// Position `i` receives the color of the edge crossed when stepping from
    /// `i` to its successor in `π(σ ⊚ γ)`.
    pub fn induced_coloring(&self, gamma: &PairPartition, t: &Coloring) -> Result<Coloring, PairingError> {
        if self.n() != gamma.n() {
            return Err(PairingError::SizeMismatch(self.n(), gamma.n()));
        }
        if t.len() != self.n() {
            return Err(PairingError::SizeMismatch(self.n(), t.len()));
        }
        if !self.is_plus() {
            return Err(PairingError::NotPlus);
        }
        if !gamma.preserves(t) {
            return Err(PairingError::NotColorPreserving);
        }
        let n = self.n();
        let mut beta = vec![0u8; 2 * n];
        let mut via = vec![0u8; 2 * n];
        raw::brauer(&self.mate, &gamma.mate, &mut beta, &mut via);
        let colors = t.per_position();
        let mut out = vec![0u8; n];
        raw::induced_colors(&beta, &via, &colors, &mut out);
        Coloring::new(out.into_iter().map(usize::from).collect(), t.colors())
    }

    /// Decomposes `δ ∪ σ ∪ γ` into connected components and reports the genus
    /// defect `h_u = 2 - (#C(γ_u) + #C(σ_u) + #C(σ_u ⊚ γ_u) - n_u)` of each.
    pub fn components_and_genus(&self, gamma: &PairPartition) -> Result<GenusDecomposition, PairingError> {
        if self.n() != gamma.n() {
            return Err(PairingError::SizeMismatch(self.n(), gamma.n()));
        }
        if !self.is_plus() {
            return Err(PairingError::NotPlus);
        }
        let info = SigmaInfo::new(self);
        let mut scratch = DiagramScratch::new(self.n());
        scratch.analyze(&info, &gamma.mate);
        let sigma_cycles = self.traverse().perm.canonical_cycles();
        let mut components: Vec<GenusComponent> = (0..scratch.components)
            .map(|u| GenusComponent {
                positions: Vec::new(),
                sigma_cycles: Vec::new(),
                sigma_cycle_count: scratch.sigma_cycles[u] as usize,
                gamma_cycle_count: scratch.gamma_cycles[u] as usize,
                product_cycle_count: scratch.beta_cycles[u] as usize,
                genus_defect: scratch.genus_defect(u),
            })
            .collect();
        for i in 0..self.n() {
            components[scratch.comp_of[i] as usize].positions.push(i + 1);
        }
        for (k, c) in sigma_cycles.iter().enumerate() {
            components[scratch.comp_of[c[0] - 1] as usize].sigma_cycles.push(k);
        }
        Ok(GenusDecomposition { components })
    }

    /// Partition of `{1..n}` into the cycles of `π(γ)` for non-crossing `γ`.
    pub fn nc_image(&self) -> Result<SetPartition, PairingError> {
        if !self.is_noncrossing() {
            return Err(PairingError::Crossing);
        }
        let blocks = self.traverse().perm.canonical_cycles();
        Ok(SetPartition::from_blocks(self.n(), blocks).expect("cycles partition 1..n"))
    }

    /// Restriction to the indices `±elements` (one-based, increasing), relabeled
    /// `1..elements.len()` in order. The set must be closed under the pairing.
    pub fn restrict(&self, elements: &[usize]) -> Result<PairPartition, PairingError> {
        let n = self.n();
        let mut new_index = vec![usize::MAX; n];
        for (k, &i) in elements.iter().enumerate() {
            if i == 0 || i > n {
                return Err(PairingError::OutOfRange(i as i64));
            }
            if new_index[i - 1] != usize::MAX || (k > 0 && elements[k - 1] > i) {
                return Err(PairingError::Duplicate(i as i64));
            }
            new_index[i - 1] = k;
        }
        let mut mate = vec![0u8; 2 * elements.len()];
        for (k, &i) in elements.iter().enumerate() {
            for side in 0..2 {
                let m = self.mate[2 * (i - 1) + side] as usize;
                let target = new_index[m >> 1];
                if target == usize::MAX {
                    return Err(PairingError::Unmatched(label(2 * (i - 1) + side)));
                }
                mate[2 * k + side] = (2 * target + (m & 1)) as u8;
            }
        }
        Ok(PairPartition::from_raw(mate))
    }
}

impl fmt::Display for PairPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body: Vec<String> = self.pairs().iter().map(|(a, b)| format!("{{{a},{b}}}")).collect();
        write!(f, "{{{}}}", body.join(","))
    }
}

impl fmt::Debug for PairPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PairPartition{self}")
    }
}

/// One connected component of `δ ∪ σ ∪ γ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenusComponent {
    /// One-based positions covered by the component.
    pub positions: Vec<usize>,
    /// Indices into the canonical cycle list of `π(σ)`.
    pub sigma_cycles: Vec<usize>,
    /// `m_u`
    pub sigma_cycle_count: usize,
    pub gamma_cycle_count: usize,
    pub product_cycle_count: usize,
    /// `h_u`
    pub genus_defect: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenusDecomposition {
    pub components: Vec<GenusComponent>,
}

// ---------------------------------------------------------------------------
// Hot-loop helpers shared with the moment engines
// ---------------------------------------------------------------------------

/// Precomputed data about a fixed `σ ∈ F_n⁺`.
#[derive(Debug, Clone)]
pub(crate) struct SigmaInfo {
    pub mate: Vec<u8>,
    /// cycle id of `π(σ)` per element
    pub cycle_of: Vec<u8>,
    /// first element of each cycle
    pub cycle_root: Vec<u8>,
}

impl SigmaInfo {
    pub fn new(sigma: &PairPartition) -> Self {
        debug_assert!(sigma.is_plus());
        let cycles = sigma.traverse().perm.canonical_cycles();
        let mut cycle_of = vec![0u8; sigma.n()];
        let mut cycle_root = Vec::with_capacity(cycles.len());
        for (k, c) in cycles.iter().enumerate() {
            cycle_root.push((c[0] - 1) as u8);
            for &i in c {
                cycle_of[i - 1] = k as u8;
            }
        }
        SigmaInfo { mate: sigma.mate.clone(), cycle_of, cycle_root }
    }
}

/// Reusable buffers for component and genus analysis of `δ ∪ σ ∪ γ`.
#[derive(Debug, Clone)]
pub(crate) struct DiagramScratch {
    parent: Vec<u8>,
    pub comp_of: Vec<u8>,
    pub components: usize,
    pub positions: Vec<u32>,
    pub sigma_cycles: Vec<u32>,
    pub gamma_cycles: Vec<u32>,
    pub beta_cycles: Vec<u32>,
    pub beta: Vec<u8>,
    via: Vec<u8>,
    seen: Vec<bool>,
    dense: Vec<u8>,
    pub total_gamma_cycles: usize,
    pub total_beta_cycles: usize,
}

impl DiagramScratch {
    pub fn new(n: usize) -> Self {
        DiagramScratch {
            parent: vec![0; n],
            comp_of: vec![0; n],
            components: 0,
            positions: vec![0; n],
            sigma_cycles: vec![0; n],
            gamma_cycles: vec![0; n],
            beta_cycles: vec![0; n],
            beta: vec![0; 2 * n],
            via: vec![0; 2 * n],
            seen: vec![false; n],
            dense: vec![0; n],
            total_gamma_cycles: 0,
            total_beta_cycles: 0,
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] as usize != i {
            let g = self.parent[self.parent[i] as usize];
            self.parent[i] = g;
            i = g as usize;
        }
        i
    }

    /// Connected components only: fills `comp_of`, `components`, `sigma_cycles`.
    pub fn connect(&mut self, sigma: &SigmaInfo, gamma: &[u8]) {
        let n = sigma.cycle_of.len();
        for i in 0..n {
            self.parent[i] = sigma.cycle_root[sigma.cycle_of[i] as usize];
        }
        for p in 0..2 * n {
            let m = gamma[p] as usize;
            if p < m {
                let a = self.find(p >> 1);
                let b = self.find(m >> 1);
                if a != b {
                    self.parent[a.max(b)] = a.min(b) as u8;
                }
            }
        }
        const NONE: u8 = u8::MAX;
        self.dense[..n].fill(NONE);
        self.components = 0;
        for i in 0..n {
            let r = self.find(i);
            if self.dense[r] == NONE {
                self.dense[r] = self.components as u8;
                self.positions[self.components] = 0;
                self.sigma_cycles[self.components] = 0;
                self.components += 1;
            }
            let c = self.dense[r];
            self.comp_of[i] = c;
            self.positions[c as usize] += 1;
        }
        for &root in &sigma.cycle_root {
            self.sigma_cycles[self.comp_of[root as usize] as usize] += 1;
        }
    }

    /// Every component holds at least two cycles of `σ`.
    pub fn connects_all(&self) -> bool {
        self.sigma_cycles[..self.components].iter().all(|&m| m >= 2)
    }

    /// Full analysis: components plus per-component cycle counts of `π(γ)` and `π(σ⊚γ)`.
    pub fn analyze(&mut self, sigma: &SigmaInfo, gamma: &[u8]) {
        self.connect(sigma, gamma);
        self.count_cycles(sigma, gamma);
    }

    pub fn count_cycles(&mut self, sigma: &SigmaInfo, gamma: &[u8]) {
        let k = self.components;
        self.gamma_cycles[..k].fill(0);
        self.beta_cycles[..k].fill(0);
        raw::brauer(&sigma.mate, gamma, &mut self.beta, &mut self.via);
        self.total_gamma_cycles = 0;
        self.total_beta_cycles = 0;
        for which in 0..2 {
            let mate: &[u8] = if which == 0 { gamma } else { &self.beta };
            let n = self.comp_of.len();
            self.seen[..n].fill(false);
            for start in 0..n {
                if self.seen[start] {
                    continue;
                }
                let c = self.comp_of[start] as usize;
                if which == 0 {
                    self.gamma_cycles[c] += 1;
                    self.total_gamma_cycles += 1;
                } else {
                    self.beta_cycles[c] += 1;
                    self.total_beta_cycles += 1;
                }
                let up = 2 * start;
                self.seen[start] = true;
                let mut cur = up;
                loop {
                    let v = mate[cur] as usize;
                    if v == up ^ 1 {
                        break;
                    }
                    self.seen[v >> 1] = true;
                    cur = v ^ 1;
                }
            }
        }
    }

    pub fn genus_defect(&self, u: usize) -> i32 {
        2 - (self.gamma_cycles[u] as i32 + self.sigma_cycles[u] as i32 + self.beta_cycles[u] as i32
            - self.positions[u] as i32)
    }
}

/// Slice-level primitives on position-encoded matchings.
pub(crate) mod raw {
    pub fn is_valid(mate: &[u8]) -> bool {
        mate.len().is_multiple_of(2)
            && mate.iter().enumerate().all(|(p, &m)| {
                (m as usize) < mate.len() && m as usize != p && mate[m as usize] as usize == p
            })
    }

    pub fn crossings(mate: &[u8]) -> u32 {
        let mut count = 0;
        for a in 0..mate.len() {
            let b = mate[a] as usize;
            if b <= a {
                continue;
            }
            for c in a + 1..b {
                if mate[c] as usize > b {
                    count += 1;
                }
            }
        }
        count
    }

    /// Fills zero-based `perm` and `plus` (sign is `+`) from the `δ ∪ γ` walk.
    pub fn traverse(mate: &[u8], perm: &mut [u8], plus: &mut [bool]) {
        let n = mate.len() / 2;
        let mut seen = [false; 128];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            plus[start] = true;
            let up = 2 * start;
            let mut cur = up;
            let mut elem = start;
            loop {
                let v = mate[cur] as usize;
                if v == up ^ 1 {
                    perm[elem] = start as u8;
                    break;
                }
                let next = v >> 1;
                perm[elem] = next as u8;
                plus[next] = v & 1 == 1;
                seen[next] = true;
                elem = next;
                cur = v ^ 1;
            }
        }
    }

    pub fn cycle_count(mate: &[u8]) -> usize {
        let n = mate.len() / 2;
        let mut seen = [false; 128];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let up = 2 * start;
            let mut cur = up;
            loop {
                let v = mate[cur] as usize;
                if v == up ^ 1 {
                    break;
                }
                seen[v >> 1] = true;
                cur = v ^ 1;
            }
        }
        count
    }

    /// Brauer product `σ ⊚ γ` for `σ ∈ F_n⁺`. `via[p]` receives an endpoint of
    /// the unique `γ` edge contained in the contracted edge at `p`.
    pub fn brauer(sigma: &[u8], gamma: &[u8], out: &mut [u8], via: &mut [u8]) {
        for p in 0..sigma.len() {
            // upper vertex of γ, or the middle vertex reached from σ's lower row
            let start = if p & 1 == 0 { p } else { sigma[p] as usize ^ 1 };
            let g = gamma[start] as usize;
            out[p] = if g & 1 == 1 { sigma[g ^ 1] } else { g as u8 };
            via[p] = start as u8;
        }
    }

    /// Colors of the positions of `π(β)` inherited through `via`.
    pub fn induced_colors(beta: &[u8], via: &[u8], colors: &[u8], out: &mut [u8]) {
        let n = beta.len() / 2;
        let mut seen = [false; 128];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let up = 2 * start;
            let mut cur = up;
            let mut elem = start;
            loop {
                out[elem] = colors[via[cur] as usize];
                let v = beta[cur] as usize;
                if v == up ^ 1 {
                    break;
                }
                elem = v >> 1;
                seen[elem] = true;
                cur = v ^ 1;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// Depth-first enumeration of color-preserving pair partitions.
///
/// The smallest unmatched position (order `1, -1, 2, -2, …`) is matched with
/// each larger free position of the same color in ascending order.
#[derive(Debug, Clone)]
pub struct PairingIter {
    colors: Vec<u8>,
    mate: Vec<u8>,
    stack: Vec<(u8, u8)>,
    first: Option<u8>,
    started: bool,
    done: bool,
}

const FREE: u8 = u8::MAX;

impl PairingIter {
    fn new(colors: Vec<u8>) -> Self {
        let len = colors.len();
        PairingIter {
            colors,
            mate: vec![FREE; len],
            stack: Vec::with_capacity(len / 2),
            first: None,
            started: false,
            done: false,
        }
    }

    /// Positions (zero-based, in the `1, -1, 2, -2, …` order) that position 0 can be matched to.
    pub fn first_partners(&self) -> Vec<usize> {
        (1..self.colors.len()).filter(|&r| self.colors[r] == self.colors[0]).collect()
    }

    /// Restricts the enumeration to pairings that match position 0 with `partner`.
    pub fn with_first_partner(mut self, partner: usize) -> Self {
        self.first = Some(partner as u8);
        self
    }

    fn candidate(&self, p: usize, from: usize) -> Option<usize> {
        if p == 0 {
            if let Some(f) = self.first {
                return (from <= f as usize).then_some(f as usize);
            }
        }
        let c = self.colors[p];
        (from..self.colors.len()).find(|&r| self.mate[r] == FREE && self.colors[r] == c)
    }

    fn backtrack(&mut self) -> bool {
        while let Some((p, r)) = self.stack.pop() {
            let (p, r) = (p as usize, r as usize);
            self.mate[p] = FREE;
            self.mate[r] = FREE;
            if let Some(r2) = self.candidate(p, r + 1) {
                self.mate[p] = r2 as u8;
                self.mate[r2] = p as u8;
                self.stack.push((p as u8, r2 as u8));
                return true;
            }
        }
        false
    }

    fn fill(&mut self) -> bool {
        let mut from = self.stack.last().map_or(0, |&(p, _)| p as usize + 1);
        loop {
            let Some(p) = (from..self.mate.len()).find(|&q| self.mate[q] == FREE) else {
                return true;
            };
            match self.candidate(p, p + 1) {
                Some(r) => {
                    self.mate[p] = r as u8;
                    self.mate[r] = p as u8;
                    self.stack.push((p as u8, r as u8));
                    from = p + 1;
                }
                None => {
                    if !self.backtrack() {
                        return false;
                    }
                    from = self.stack.last().map_or(0, |&(p, _)| p as usize + 1);
                }
            }
        }
    }

    /// Advances and exposes the current matching without allocating.
    pub(crate) fn advance(&mut self) -> Option<&[u8]> {
        if self.done {
            return None;
        }
        if self.started && !self.backtrack() {
            self.done = true;
            return None;
        }
        self.started = true;
        if self.fill() {
            Some(&self.mate)
        } else {
            self.done = true;
            None
        }
    }
}

impl Iterator for PairingIter {
    type Item = PairPartition;

    fn next(&mut self) -> Option<PairPartition> {
        self.advance().map(|m| PairPartition::from_raw(m.to_vec()))
    }
}

/// All of `F_n`, each exactly once, in a deterministic order.
pub fn enumerate_all(n: usize, allow_large_n: bool) -> Result<PairingIter, PairingError> {
    check_enumeration_bound(n, allow_large_n)?;
    Ok(PairingIter::new(vec![1; 2 * n]))
}

/// `F_n(t)`: pairings that only join positions of equal color.
pub fn enumerate_color_preserving(t: &Coloring, allow_large_n: bool) -> Result<PairingIter, PairingError> {
    check_enumeration_bound(t.len(), allow_large_n)?;
    Ok(PairingIter::new(t.per_position()))
}

/// `F_n(t, σ)`: color-preserving pairings for which every component of
/// `δ ∪ σ ∪ γ` contains at least two cycles of `σ`.
pub fn enumerate_connecting(
    t: &Coloring,
    sigma: &PairPartition,
    allow_large_n: bool,
) -> Result<impl Iterator<Item = PairPartition>, PairingError> {
    if t.len() != sigma.n() {
        return Err(PairingError::SizeMismatch(t.len(), sigma.n()));
    }
    if !sigma.is_plus() {
        return Err(PairingError::NotPlus);
    }
    let inner = enumerate_color_preserving(t, allow_large_n)?;
    let info = SigmaInfo::new(sigma);
    let mut scratch = DiagramScratch::new(sigma.n());
    Ok(inner.filter(move |g| {
        scratch.connect(&info, g.raw());
        scratch.connects_all()
    }))
}

/// `(2n - 1)!!`
pub fn double_factorial_odd(n: usize) -> u128 {
    (1..=n as u128).map(|k| 2 * k - 1).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(n: usize, pairs: &[(i64, i64)]) -> PairPartition {
        PairPartition::from_pairs(n, pairs).unwrap()
    }

    #[test]
    fn delta_small() {
        assert_eq!(PairPartition::delta(1).pairs(), vec![(1, -1)]);
        assert_eq!(PairPartition::delta(3).pairs(), vec![(1, -1), (2, -2), (3, -3)]);
        for n in 1..=6 {
            assert_eq!(PairPartition::delta(n).crossings(), 0);
        }
    }

    #[test]
    fn from_pairs_rejects_bad_input() {
        assert_eq!(PairPartition::from_pairs(2, &[(1, 3)]), Err(PairingError::OutOfRange(3)));
        assert_eq!(PairPartition::from_pairs(2, &[(1, 1)]), Err(PairingError::FixedPoint(1)));
        assert_eq!(PairPartition::from_pairs(2, &[(1, -1), (1, 2)]), Err(PairingError::Duplicate(1)));
        assert!(matches!(PairPartition::from_pairs(2, &[(1, -1)]), Err(PairingError::Unmatched(_))));
        assert_eq!(PairPartition::from_pairs(0, &[]), Err(PairingError::Empty));
    }

    #[test]
    fn sigma_shapes() {
        let s22 = PairPartition::sigma_from_partition(&IntegerPartition::new(vec![2, 2]).unwrap());
        assert_eq!(s22, pp(4, &[(1, -2), (2, -1), (3, -4), (4, -3)]));
        for n in 1..=5 {
            let ones = IntegerPartition::new(vec![1; n]).unwrap();
            let s = PairPartition::sigma_from_partition(&ones);
            assert_eq!(s, PairPartition::delta(n));
            assert_eq!(s.traverse().perm, Permutation::identity(n));
            let full = PairPartition::sigma_from_partition(&IntegerPartition::new(vec![n]).unwrap());
            assert_eq!(full.traverse().perm, Permutation::full_cycle(n));
            assert_eq!(PairPartition::pi_inverse(&Permutation::full_cycle(n)), full);
        }
    }

    #[test]
    fn traverse_worked_example() {
        let g = pp(4, &[(1, 2), (3, -4), (-1, -2), (-3, 4)]);
        let tr = g.traverse();
        assert_eq!(tr.perm.to_string(), "(1,2)(3,4)");
        let signs: String = tr.signs.iter().map(|s| s.to_string()).collect();
        assert_eq!(signs, "+-++");
        assert!(!g.is_plus());
    }

    #[test]
    fn traverse_sigma_lambda_cycle_type() {
        for lambda in IntegerPartition::all(6) {
            let tr = PairPartition::sigma_from_partition(&lambda).traverse();
            let mut lens: Vec<usize> = tr.perm.canonical_cycles().iter().map(Vec::len).collect();
            lens.sort_unstable_by(|a, b| b.cmp(a));
            assert_eq!(lens, lambda.parts());
            assert!(tr.signs.iter().all(|&s| s == Sign::Plus));
        }
    }

    #[test]
    fn brauer_worked_example() {
        let sigma = pp(4, &[(1, -2), (2, -3), (3, -4), (4, -1)]);
        let gamma = pp(4, &[(1, 2), (3, -4), (-1, -2), (-3, 4)]);
        let prod = sigma.brauer(&gamma).unwrap();
        assert_eq!(prod, pp(4, &[(1, 2), (-2, -3), (-1, 3), (-4, 4)]));
    }

    #[test]
    fn brauer_rejects() {
        let gamma = pp(2, &[(1, 2), (-1, -2)]);
        assert_eq!(gamma.brauer(&gamma), Err(PairingError::NotPlus));
        assert_eq!(
            PairPartition::delta(3).brauer(&PairPartition::delta(2)),
            Err(PairingError::SizeMismatch(3, 2))
        );
    }

    #[test]
    fn crossings_small() {
        assert_eq!(pp(2, &[(1, 2), (-1, -2)]).crossings(), 1);
        assert_eq!(pp(2, &[(1, -2), (-1, 2)]).crossings(), 0);
    }

    #[test]
    fn canonical_cycle_convention() {
        assert_eq!(Permutation::identity(3).canonical_cycles(), vec![vec![1], vec![2], vec![3]]);
        let p = Permutation::from_cycles(4, &[vec![3, 4], vec![2, 1]]).unwrap();
        assert_eq!(p.canonical_cycles(), vec![vec![1, 2], vec![3, 4]]);
        let p = Permutation::from_cycles(4, &[vec![3, 1], vec![4, 2]]).unwrap();
        assert_eq!(p.to_string(), "(1,3)(2,4)");
    }

    #[test]
    fn color_preserving_counts() {
        let t = Coloring::from_assignment(vec![1, 2]).unwrap();
        let all: Vec<_> = enumerate_color_preserving(&t, false).unwrap().collect();
        assert_eq!(all, vec![PairPartition::delta(2)]);
        let t = Coloring::from_assignment(vec![1, 2, 1, 2]).unwrap();
        assert_eq!(enumerate_color_preserving(&t, false).unwrap().count(), 9);
        assert_eq!(enumerate_color_preserving(&Coloring::constant(4), false).unwrap().count(), 105);
    }

    #[test]
    fn connecting_small() {
        let got: Vec<_> = enumerate_connecting(&Coloring::constant(2), &PairPartition::delta(2), false)
            .unwrap()
            .collect();
        assert_eq!(got.len(), 2);
        assert!(got.contains(&pp(2, &[(1, 2), (-1, -2)])));
        assert!(got.contains(&pp(2, &[(1, -2), (-1, 2)])));
    }

    #[test]
    fn bound_enforced() {
        assert!(matches!(enumerate_all(10, false), Err(PairingError::TooLarge { .. })));
        assert!(enumerate_all(10, true).is_ok());
    }

    #[test]
    fn split_enumeration_covers_everything() {
        let t = Coloring::from_assignment(vec![1, 2, 1, 1, 2]).unwrap();
        let whole: Vec<_> = enumerate_color_preserving(&t, false).unwrap().collect();
        let base = enumerate_color_preserving(&t, false).unwrap();
        let mut parts = Vec::new();
        for r in base.first_partners() {
            parts.extend(base.clone().with_first_partner(r));
        }
        assert_eq!(whole, parts);
    }

    #[test]
    fn induced_coloring_single_color_and_delta() {
        let t = Coloring::from_assignment(vec![1, 2, 1, 2]).unwrap();
        let sigma = pp(4, &[(1, -2), (2, -1), (3, -4), (4, -3)]);
        assert_eq!(sigma.induced_coloring(&PairPartition::delta(4), &t).unwrap(), t);
        let bad = pp(4, &[(1, 2), (-1, -2), (3, -3), (4, -4)]);
        assert_eq!(sigma.induced_coloring(&bad, &t), Err(PairingError::NotColorPreserving));
        let c = Coloring::constant(4);
        for g in enumerate_all(4, false).unwrap() {
            assert_eq!(sigma.induced_coloring(&g, &c).unwrap(), c);
        }
    }

    #[test]
    fn induced_coloring_table_row_two() {
        let t = Coloring::from_assignment(vec![1, 2, 1, 2]).unwrap();
        let sigma = pp(4, &[(1, -2), (2, -1), (3, -4), (4, -3)]);
        let gamma = pp(4, &[(1, -1), (2, 4), (3, -3), (-2, -4)]);
        let beta = sigma.brauer(&gamma).unwrap();
        assert_eq!(beta.traverse().perm.to_string(), "(1,2,4,3)");
        let tt = sigma.induced_coloring(&gamma, &t).unwrap();
        // cycle (1,2,4,3) alternates colors 1,2,1,2
        assert_eq!([tt.get(1), tt.get(2), tt.get(4), tt.get(3)], [1, 2, 1, 2]);
    }

    #[test]
    fn genus_of_delta_pair() {
        let d = PairPartition::delta(4);
        let g = d.components_and_genus(&d).unwrap();
        assert_eq!(g.components.len(), 4);
        assert!(g.components.iter().all(|c| c.genus_defect == 0 && c.sigma_cycle_count == 1));
    }

    #[test]
    fn nc_image_examples() {
        let img = PairPartition::delta(3).nc_image().unwrap();
        assert_eq!(img.blocks(), &[vec![1], vec![2], vec![3]]);
        let img = pp(2, &[(1, -2), (2, -1)]).nc_image().unwrap();
        assert_eq!(img.blocks(), &[vec![1, 2]]);
        assert_eq!(pp(2, &[(1, 2), (-1, -2)]).nc_image(), Err(PairingError::Crossing));
    }

    #[test]
    fn integer_partition_validation() {
        assert!(IntegerPartition::new(vec![1, 2]).is_err());
        assert!(IntegerPartition::new(vec![]).is_err());
        assert!(IntegerPartition::new(vec![2, 0]).is_err());
        assert_eq!(IntegerPartition::all(5).len(), 7);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn perm(n: usize) -> impl Strategy<Value = Permutation> {
            Just((1..=n).collect::<Vec<_>>()).prop_shuffle().prop_map(|v| Permutation::from_images(&v).unwrap())
        }

        fn pairing(n: usize) -> impl Strategy<Value = PairPartition> {
            Just((0..2 * n).collect::<Vec<_>>()).prop_shuffle().prop_map(|v| {
                let mut mate = vec![0u8; v.len()];
                for c in v.chunks(2) {
                    mate[c[0]] = c[1] as u8;
                    mate[c[1]] = c[0] as u8;
                }
                PairPartition::from_raw(mate)
            })
        }

        proptest! {
            #[test]
            fn pi_is_a_homomorphism((a, b) in (1usize..=7).prop_flat_map(|n| (perm(n), perm(n)))) {
                let prod = PairPartition::pi_inverse(&a).brauer(&PairPartition::pi_inverse(&b)).unwrap();
                prop_assert!(prod.is_plus());
                prop_assert_eq!(prod.traverse().perm, a.compose(&b));
            }

            #[test]
            fn brauer_stays_in_pairings((a, g) in (1usize..=7).prop_flat_map(|n| (perm(n), pairing(n)))) {
                let sigma = PairPartition::pi_inverse(&a);
                let beta = sigma.brauer(&g).unwrap();
                prop_assert!(raw::is_valid(beta.raw()));
                prop_assert_eq!(PairPartition::delta(g.n()).brauer(&g).unwrap(), g.clone());
            }

            #[test]
            fn traversal_round_trip(g in (1usize..=8).prop_flat_map(pairing)) {
                let tr = g.traverse();
                prop_assert_eq!(tr.perm.cycle_count(), g.cycle_count());
                prop_assert_eq!(g.clone(), PairPartition::from_pairs(g.n(), &g.pairs()).unwrap());
                prop_assert_eq!(g.is_noncrossing(), g.crossings() == 0);
            }

            #[test]
            fn genus_nonnegative((a, g) in (1usize..=6).prop_flat_map(|n| (perm(n), pairing(n)))) {
                let sigma = PairPartition::pi_inverse(&a);
                let d = sigma.components_and_genus(&g).unwrap();
                prop_assert!(d.components.iter().all(|c| c.genus_defect >= 0));
                for c in &d.components {
                    let sub = g.restrict(&c.positions).unwrap();
                    prop_assert_eq!(sub.n(), c.positions.len());
                }
            }
        }
    }
}
