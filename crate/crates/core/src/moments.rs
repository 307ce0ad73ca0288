//! Exact finite-size trace moments of compound real Wishart and q-Wishart
//! families, expressed as sums over color-preserving pair partitions, plus an
//! independent brute-force q-Wick evaluator.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::linalg::{check_spd, evaluate_atom, LinalgError, Matrix};
use crate::pairings::{
    enumerate_all, enumerate_color_preserving, raw, Coloring, IntegerPartition, PairPartition, PairingError,
    PairingIter, Permutation,
};
use crate::polynomials::{
    format_rational, rat, rational_from_json, AtomKind, Letter, MomentPolynomial, PolyError, Symbol, TraceAtom,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("no binding for color {0}")]
    MissingColor(usize),
    #[error("shape matrix B{0} must be symmetric")]
    NonSymmetricShape(usize),
    #[error("scale matrix Sigma{color}: {source}")]
    InvalidScale { color: usize, source: LinalgError },
    #[error("this formula needs sigma built from consecutive blocks")]
    ShapeViolation,
    #[error("float matrices need a numeric q")]
    NeedsNumericQ,
    #[error("float evaluation needs concrete matrices or sizes for every role")]
    SymbolicInFloat,
    #[error("brute-force work {work} exceeds the guard {limit}")]
    GuardExceeded { work: u128, limit: u128 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid matrices: {0}")]
    InvalidMatrices(String),
}

/// Enumeration controls shared by all engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    pub allow_large_n: bool,
    /// Number of enumeration splits run on separate threads (1 = sequential).
    pub threads: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { allow_large_n: false, threads: 1 }
    }
}

/// Runs `body` over every pairing produced by `iter`, split by the partner of
/// the first position into at most `threads` groups. One accumulator per group,
/// returned in group order.
pub(crate) fn for_each_split<T, I, F>(iter: PairingIter, threads: usize, init: I, body: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[u8]) + Sync,
{
    let run = |mut it: PairingIter, acc: &mut T| {
        while let Some(m) = it.advance() {
            body(acc, m);
        }
    };
    if threads <= 1 {
        let mut acc = init();
        run(iter, &mut acc);
        return vec![acc];
    }
    let partners = iter.first_partners();
    let groups = threads.min(partners.len()).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..groups)
            .map(|g| {
                let iter = iter.clone();
                let partners = &partners;
                let (init, run) = (&init, &run);
                scope.spawn(move || {
                    let mut acc = init();
                    for &r in partners.iter().skip(g).step_by(groups) {
                        run(iter.clone().with_first_partner(r), &mut acc);
                    }
                    acc
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("enumeration worker panicked")).collect()
    })
}

// ---------------------------------------------------------------------------
// Monomial specs
// ---------------------------------------------------------------------------

/// A product of traces `∏_cycles tr(W_{c₁}W_{c₂}⋯)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialSpec {
    cycle_words: Vec<Vec<usize>>,
    sigma: PairPartition,
    t: Coloring,
    consecutive: bool,
}

impl MonomialSpec {
    /// Trace factors occupy consecutive positions in the given order.
    pub fn new(cycle_words: Vec<Vec<usize>>) -> Result<Self, MomentError> {
        if cycle_words.is_empty() || cycle_words.iter().any(Vec::is_empty) {
            return Err(MomentError::InvalidSpec("cycle_words must be a nonempty list of nonempty words".into()));
        }
        if cycle_words.iter().flatten().any(|&c| c == 0 || c > u8::MAX as usize - 1) {
            return Err(MomentError::InvalidSpec("colors must lie in 1..=254".into()));
        }
        let lengths: Vec<usize> = cycle_words.iter().map(Vec::len).collect();
        let sigma = PairPartition::sigma_from_blocks(&lengths)?;
        let t = Coloring::from_assignment(cycle_words.iter().flatten().copied().collect())?;
        Ok(MonomialSpec { cycle_words, sigma, t, consecutive: true })
    }

    /// An arbitrary `σ ∈ F_n⁺` with coloring `t`; accepted by the real-Wishart path.
    pub fn general(sigma: PairPartition, t: Coloring) -> Result<Self, MomentError> {
        if !sigma.is_plus() {
            return Err(PairingError::NotPlus.into());
        }
        if sigma.n() != t.len() {
            return Err(PairingError::SizeMismatch(sigma.n(), t.len()).into());
        }
        let cycles = sigma.traverse().perm.canonical_cycles();
        let cycle_words: Vec<Vec<usize>> = cycles.iter().map(|c| c.iter().map(|&i| t.get(i)).collect()).collect();
        let lengths: Vec<usize> = cycles.iter().map(Vec::len).collect();
        let consecutive = PairPartition::sigma_from_blocks(&lengths)? == sigma;
        Ok(MonomialSpec { cycle_words, sigma, t, consecutive })
    }

    /// `tr(W₁ⁿ)` style spec: one cycle per part of `λ`, all color 1.
    pub fn from_partition(lambda: &IntegerPartition) -> Self {
        Self::new(lambda.parts().iter().map(|&p| vec![1; p]).collect()).expect("valid partition")
    }

    pub fn cycle_words(&self) -> &[Vec<usize>] {
        &self.cycle_words
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn colors(&self) -> usize {
        self.t.colors()
    }

    pub fn sigma(&self) -> &PairPartition {
        &self.sigma
    }

    pub fn coloring(&self) -> &Coloring {
        &self.t
    }

    pub fn is_consecutive(&self) -> bool {
        self.consecutive
    }

    pub fn block_lengths(&self) -> Vec<usize> {
        self.cycle_words.iter().map(Vec::len).collect()
    }

    pub fn to_json(&self) -> Value {
        if self.consecutive {
            json!({ "cycle_words": self.cycle_words })
        } else {
            json!({ "sigma": self.sigma.pairs(), "coloring": self.t.as_slice() })
        }
    }

    pub fn from_json(v: &Value) -> Result<Self, MomentError> {
        let bad = |m: &str| MomentError::InvalidSpec(m.into());
        if let Some(words) = v.get("cycle_words") {
            let words = words.as_array().ok_or_else(|| bad("cycle_words must be an array"))?;
            let mut out = Vec::with_capacity(words.len());
            for w in words {
                let w = w.as_array().ok_or_else(|| bad("each cycle word must be an array of colors"))?;
                let mut word = Vec::with_capacity(w.len());
                for c in w {
                    let c = c.as_u64().ok_or_else(|| bad("colors must be positive integers"))?;
                    word.push(c as usize);
                }
                out.push(word);
            }
            return Self::new(out);
        }
        if let (Some(s), Some(c)) = (v.get("sigma"), v.get("coloring")) {
            let pairs = parse_pairs(s).ok_or_else(|| bad("sigma must be an array of signed-index pairs"))?;
            let colors: Option<Vec<usize>> =
                c.as_array().map(|a| a.iter().map(|x| x.as_u64().map(|x| x as usize)).collect()).unwrap_or(None);
            let colors = colors.ok_or_else(|| bad("coloring must be an array of positive integers"))?;
            let sigma = PairPartition::from_pairs(colors.len(), &pairs)?;
            return Self::general(sigma, Coloring::from_assignment(colors)?);
        }
        Err(bad("expected \"cycle_words\" or \"sigma\" with \"coloring\""))
    }
}

/// `[[a,b],…]` as signed-index pairs.
pub fn parse_pairs(v: &Value) -> Option<Vec<(i64, i64)>> {
    v.as_array()?
        .iter()
        .map(|p| match p.as_array()?.as_slice() {
            [a, b] => Some((a.as_i64()?, b.as_i64()?)),
            _ => None,
        })
        .collect()
}

impl fmt::Display for MonomialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in &self.cycle_words {
            f.write_str("tr(")?;
            for c in w {
                write!(f, "W{c}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bindings
// ---------------------------------------------------------------------------

/// Values for the shape matrices `B_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeBinding {
    /// keep `tr(B…)` atoms symbolic
    Symbolic,
    /// `B_j = I_{M_j}` with the given sizes (symbols or numbers)
    Identity(Vec<MomentPolynomial>),
    Exact(Vec<Matrix<BigRational>>),
    Float(Vec<Matrix<f64>>),
}

/// Values for the scale matrices `Σ_j`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleBinding {
    Symbolic,
    /// `Σ_j = c_j·I_N`
    ScaledIdentity { n: MomentPolynomial, c: Vec<BigRational> },
    Exact(Vec<Matrix<BigRational>>),
    Float(Vec<Matrix<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorMatrices<S> {
    pub b: Matrix<S>,
    pub sigma: Matrix<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBindings {
    pub shape: ShapeBinding,
    pub scale: ScaleBinding,
}

impl MatrixBindings {
    pub fn symbolic() -> Self {
        MatrixBindings { shape: ShapeBinding::Symbolic, scale: ScaleBinding::Symbolic }
    }

    /// `B_j = I_{M_j}` with symbols `M₁…M_s`, `Σ_j = I_N` with symbol `N`.
    pub fn scalar_symbolic(s: usize) -> Self {
        Self::scalar((1..=s).map(|j| MomentPolynomial::m(j as u16)).collect(), MomentPolynomial::n(), vec![rat(1); s])
    }

    pub fn scalar(sizes: Vec<MomentPolynomial>, n: MomentPolynomial, c: Vec<BigRational>) -> Self {
        MatrixBindings { shape: ShapeBinding::Identity(sizes), scale: ScaleBinding::ScaledIdentity { n, c } }
    }

    pub fn exact(colors: Vec<ColorMatrices<BigRational>>) -> Self {
        let (b, sigma) = colors.into_iter().map(|c| (c.b, c.sigma)).unzip();
        MatrixBindings { shape: ShapeBinding::Exact(b), scale: ScaleBinding::Exact(sigma) }
    }

    pub fn float(colors: Vec<ColorMatrices<f64>>) -> Self {
        let (b, sigma) = colors.into_iter().map(|c| (c.b, c.sigma)).unzip();
        MatrixBindings { shape: ShapeBinding::Float(b), scale: ScaleBinding::Float(sigma) }
    }

    pub fn is_float(&self) -> bool {
        matches!(self.shape, ShapeBinding::Float(_)) || matches!(self.scale, ScaleBinding::Float(_))
    }

    /// Checks color coverage, squareness, consistent sizes, and `Σ_j` symmetric positive definite.
    pub fn validate(&self, colors: usize) -> Result<(), MomentError> {
        let need = |len: usize| if len < colors { Err(MomentError::MissingColor(len + 1)) } else { Ok(()) };
        match &self.shape {
            ShapeBinding::Symbolic => {}
            ShapeBinding::Identity(sizes) => need(sizes.len())?,
            ShapeBinding::Exact(b) => {
                need(b.len())?;
                check_square(b.iter().map(|m| (m.rows(), m.cols())), "B")?;
            }
            ShapeBinding::Float(b) => {
                need(b.len())?;
                check_square(b.iter().map(|m| (m.rows(), m.cols())), "B")?;
            }
        }
        match &self.scale {
            ScaleBinding::Symbolic => {}
            ScaleBinding::ScaledIdentity { c, .. } => need(c.len())?,
            ScaleBinding::Exact(s) => {
                need(s.len())?;
                check_scales(&s.iter().map(Matrix::to_f64).collect::<Vec<_>>())?;
                if let Some(j) = s.iter().position(|m| !m.is_symmetric_exact()) {
                    return Err(MomentError::InvalidScale { color: j + 1, source: LinalgError::NotSymmetric });
                }
            }
            ScaleBinding::Float(s) => {
                need(s.len())?;
                check_scales(s)?;
            }
        }
        Ok(())
    }

    /// Rejects nonsymmetric `B_j`.
    pub fn require_symmetric_shape(&self) -> Result<(), MomentError> {
        match &self.shape {
            ShapeBinding::Exact(b) => match b.iter().position(|m| !m.is_symmetric_exact()) {
                Some(j) => Err(MomentError::NonSymmetricShape(j + 1)),
                None => Ok(()),
            },
            ShapeBinding::Float(b) => match b.iter().position(|m| !m.is_symmetric(1e-12)) {
                Some(j) => Err(MomentError::NonSymmetricShape(j + 1)),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Parses `[{"B":[[…]],"Sigma":[[…]]}, …]` (or `{"colors":[…]}`), one object per color.
    /// Entries that are strings or integers stay exact; any non-integer number switches to floats.
    pub fn from_json(v: &Value) -> Result<Self, MomentError> {
        let colors = match v {
            Value::Array(a) => a,
            Value::Object(o) => o
                .get("colors")
                .and_then(Value::as_array)
                .ok_or_else(|| MomentError::InvalidMatrices("expected an array of per-color objects".into()))?,
            _ => return Err(MomentError::InvalidMatrices("expected an array of per-color objects".into())),
        };
        if colors.is_empty() {
            return Err(MomentError::InvalidMatrices("no colors given".into()));
        }
        let mut any_float = false;
        let mut raw = Vec::with_capacity(colors.len());
        for (j, c) in colors.iter().enumerate() {
            let b = c.get("B").ok_or_else(|| MomentError::InvalidMatrices(format!("color {}: missing B", j + 1)))?;
            let s = c
                .get("Sigma")
                .ok_or_else(|| MomentError::InvalidMatrices(format!("color {}: missing Sigma", j + 1)))?;
            let b = parse_matrix(b, &mut any_float).map_err(|m| MomentError::InvalidMatrices(format!("B{}: {m}", j + 1)))?;
            let s = parse_matrix(s, &mut any_float)
                .map_err(|m| MomentError::InvalidMatrices(format!("Sigma{}: {m}", j + 1)))?;
            raw.push(ColorMatrices { b, sigma: s });
        }
        Ok(if any_float {
            Self::float(raw.into_iter().map(|c| ColorMatrices { b: c.b.to_f64(), sigma: c.sigma.to_f64() }).collect())
        } else {
            Self::exact(raw)
        })
    }

    pub(crate) fn shape_size(&self, color: usize) -> Option<usize> {
        match &self.shape {
            ShapeBinding::Identity(s) => s[color - 1].as_constant().and_then(|c| c.to_integer().to_usize()),
            ShapeBinding::Exact(b) => Some(b[color - 1].rows()),
            ShapeBinding::Float(b) => Some(b[color - 1].rows()),
            ShapeBinding::Symbolic => None,
        }
    }

    pub(crate) fn scale_size(&self) -> Option<usize> {
        match &self.scale {
            ScaleBinding::ScaledIdentity { n, .. } => n.as_constant().and_then(|c| c.to_integer().to_usize()),
            ScaleBinding::Exact(s) => s.first().map(Matrix::rows),
            ScaleBinding::Float(s) => s.first().map(Matrix::rows),
            ScaleBinding::Symbolic => None,
        }
    }
}

fn check_square(dims: impl Iterator<Item = (usize, usize)>, name: &str) -> Result<(), MomentError> {
    for (j, (r, c)) in dims.enumerate() {
        if r != c {
            return Err(MomentError::Dimension(format!("{name}{} is {r}x{c}, expected square", j + 1)));
        }
    }
    Ok(())
}

fn check_scales(s: &[Matrix<f64>]) -> Result<(), MomentError> {
    check_square(s.iter().map(|m| (m.rows(), m.cols())), "Sigma")?;
    if let Some(first) = s.first() {
        if let Some(j) = s.iter().position(|m| m.rows() != first.rows()) {
            return Err(MomentError::Dimension(format!(
                "Sigma{} is {}x{}, Sigma1 is {}x{}",
                j + 1,
                s[j].rows(),
                s[j].rows(),
                first.rows(),
                first.rows()
            )));
        }
    }
    for (j, m) in s.iter().enumerate() {
        check_spd(m).map_err(|e| MomentError::InvalidScale { color: j + 1, source: e })?;
    }
    Ok(())
}

fn parse_matrix(v: &Value, any_float: &mut bool) -> Result<Matrix<BigRational>, String> {
    let rows = v.as_array().ok_or("expected an array of rows")?;
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let r = r.as_array().ok_or("expected an array of rows")?;
        let mut row = Vec::with_capacity(r.len());
        for x in r {
            if let Value::Number(n) = x {
                if n.as_i64().is_none() {
                    *any_float = true;
                }
            }
            row.push(rational_from_json(x).ok_or("entries must be numbers or \"num/den\" strings")?);
        }
        out.push(row);
    }
    Matrix::from_rows(out).map_err(|e| e.to_string())
}

/// Either a symbolic `q` or a rational value for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QParam {
    Symbolic,
    Value(BigRational),
}

impl QParam {
    pub fn parse(s: &str) -> Option<QParam> {
        if s == "sym" || s == "q" {
            return Some(QParam::Symbolic);
        }
        crate::polynomials::parse_rational(s).map(QParam::Value)
    }

    /// `q^k`
    pub fn power(&self, k: u32) -> MomentPolynomial {
        match self {
            QParam::Symbolic => MomentPolynomial::power(Symbol::Q, k as i32),
            QParam::Value(v) => MomentPolynomial::constant(num_traits::pow(v.clone(), k as usize)),
        }
    }

    /// Collapses coefficients of `q^k`.
    pub fn combine(&self, coeffs: &[MomentPolynomial]) -> MomentPolynomial {
        coeffs.iter().enumerate().map(|(k, c)| c * &self.power(k as u32)).sum()
    }
}

/// A moment value: exact polynomial (possibly constant) or a float.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentValue {
    Exact(MomentPolynomial),
    Float(f64),
}

impl MomentValue {
    pub fn into_exact(self) -> Option<MomentPolynomial> {
        match self {
            MomentValue::Exact(p) => Some(p),
            MomentValue::Float(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MomentValue::Exact(p) => p.as_constant().and_then(|c| c.to_f64()),
            MomentValue::Float(x) => Some(*x),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            MomentValue::Exact(p) => p.to_json(),
            MomentValue::Float(x) => json!(x),
        }
    }
}

impl fmt::Display for MomentValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentValue::Exact(p) => write!(f, "{p}"),
            MomentValue::Float(x) => write!(f, "{x}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Term collection
// ---------------------------------------------------------------------------

/// The data of one `γ` after canonicalization: crossing number and the trace
/// atoms of `q_{γ,t}(B)` (or `p_{γ,t}(B)`) and `p_{σ⊚γ,t(σ,γ)}(Σ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct TermKey {
    pub cr: u32,
    pub shape: Vec<TraceAtom>,
    pub scale: Vec<TraceAtom>,
}

pub(crate) struct TermScratch {
    perm: Vec<u8>,
    plus: Vec<bool>,
    beta: Vec<u8>,
    via: Vec<u8>,
    induced: Vec<u8>,
    seen: Vec<bool>,
    colors: Vec<u8>,
}

impl TermScratch {
    pub fn new(t: &Coloring) -> Self {
        let n = t.len();
        TermScratch {
            perm: vec![0; n],
            plus: vec![false; n],
            beta: vec![0; 2 * n],
            via: vec![0; 2 * n],
            induced: vec![0; n],
            seen: vec![false; n],
            colors: t.per_position(),
        }
    }

    fn cycles_of(&mut self, mut letter: impl FnMut(usize) -> Letter, kind: AtomKind) -> Vec<TraceAtom> {
        let n = self.perm.len();
        self.seen.fill(false);
        let mut atoms = Vec::new();
        for start in 0..n {
            if self.seen[start] {
                continue;
            }
            let mut word = Vec::new();
            let mut i = start;
            while !self.seen[i] {
                self.seen[i] = true;
                word.push(letter(i));
                i = self.perm[i] as usize;
            }
            atoms.push(TraceAtom::canonical(kind, word));
        }
        atoms.sort_unstable();
        atoms
    }

    /// `transposes = false` drops the `x^{-ε}` orientation (symmetric `B`).
    pub fn key(&mut self, sigma: &[u8], gamma: &[u8], transposes: bool) -> TermKey {
        let cr = raw::crossings(gamma);
        raw::traverse(gamma, &mut self.perm, &mut self.plus);
        let plus = self.plus.clone();
        let colors = self.colors.clone();
        let shape = self.cycles_of(
            |i| Letter { color: colors[2 * i] as u16, transposed: transposes && plus[i] },
            AtomKind::Shape,
        );
        raw::brauer(sigma, gamma, &mut self.beta, &mut self.via);
        raw::induced_colors(&self.beta, &self.via, &self.colors, &mut self.induced);
        raw::traverse(&self.beta, &mut self.perm, &mut self.plus);
        let induced = self.induced.clone();
        let scale = self.cycles_of(|i| Letter::plain(induced[i] as u16), AtomKind::Scale);
        TermKey { cr, shape, scale }
    }
}

pub(crate) fn collect_terms(
    spec: &MonomialSpec,
    transposes: bool,
    opts: &EngineOptions,
) -> Result<BTreeMap<TermKey, u64>, MomentError> {
    let iter = enumerate_color_preserving(spec.coloring(), opts.allow_large_n)?;
    let sigma = spec.sigma().raw().to_vec();
    let parts = for_each_split(
        iter,
        opts.threads,
        || (HashMap::<TermKey, u64>::new(), TermScratch::new(spec.coloring())),
        |(acc, scratch), gamma| {
            *acc.entry(scratch.key(&sigma, gamma, transposes)).or_insert(0) += 1;
        },
    );
    let mut out = BTreeMap::new();
    for (part, _) in parts {
        for (k, c) in part {
            *out.entry(k).or_insert(0) += c;
        }
    }
    Ok(out)
}

struct ExactEvaluator<'a> {
    bindings: &'a MatrixBindings,
    cache: HashMap<TraceAtom, MomentPolynomial>,
}

impl ExactEvaluator<'_> {
    fn atom(&mut self, a: &TraceAtom) -> Result<MomentPolynomial, MomentError> {
        if let Some(v) = self.cache.get(a) {
            return Ok(v.clone());
        }
        let v = match (a.kind(), &self.bindings.shape, &self.bindings.scale) {
            (AtomKind::Shape, ShapeBinding::Symbolic, _) | (AtomKind::Scale, _, ScaleBinding::Symbolic) => {
                MomentPolynomial::atom(a.clone())
            }
            (AtomKind::Shape, ShapeBinding::Identity(sizes), _) => sizes[a.word()[0].color as usize - 1].clone(),
            (AtomKind::Shape, ShapeBinding::Exact(b), _) => MomentPolynomial::constant(evaluate_atom(a, b)?),
            (AtomKind::Scale, _, ScaleBinding::ScaledIdentity { n, c }) => {
                let mut prod = BigRational::one();
                for l in a.word() {
                    prod *= &c[l.color as usize - 1];
                }
                n.scale(&prod)
            }
            (AtomKind::Scale, _, ScaleBinding::Exact(s)) => MomentPolynomial::constant(evaluate_atom(a, s)?),
            _ => return Err(MomentError::SymbolicInFloat),
        };
        self.cache.insert(a.clone(), v.clone());
        Ok(v)
    }
}

struct FloatEvaluator<'a> {
    bindings: &'a MatrixBindings,
    cache: HashMap<TraceAtom, f64>,
}

impl FloatEvaluator<'_> {
    fn atom(&mut self, a: &TraceAtom) -> Result<f64, MomentError> {
        if let Some(v) = self.cache.get(a) {
            return Ok(*v);
        }
        let constant = |p: &MomentPolynomial| p.as_constant().and_then(|c| c.to_f64()).ok_or(MomentError::SymbolicInFloat);
        let v = match (a.kind(), &self.bindings.shape, &self.bindings.scale) {
            (AtomKind::Shape, ShapeBinding::Identity(sizes), _) => constant(&sizes[a.word()[0].color as usize - 1])?,
            (AtomKind::Shape, ShapeBinding::Exact(b), _) => evaluate_atom(a, b)?.to_f64().unwrap_or(f64::NAN),
            (AtomKind::Shape, ShapeBinding::Float(b), _) => evaluate_atom(a, b)?,
            (AtomKind::Scale, _, ScaleBinding::ScaledIdentity { n, c }) => {
                a.word().iter().fold(constant(n)?, |acc, l| acc * c[l.color as usize - 1].to_f64().unwrap_or(f64::NAN))
            }
            (AtomKind::Scale, _, ScaleBinding::Exact(s)) => evaluate_atom(a, s)?.to_f64().unwrap_or(f64::NAN),
            (AtomKind::Scale, _, ScaleBinding::Float(s)) => evaluate_atom(a, s)?,
            _ => return Err(MomentError::SymbolicInFloat),
        };
        self.cache.insert(a.clone(), v);
        Ok(v)
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Sums `count · q^cr · ∏ atoms` over the collected terms.
fn evaluate_terms(
    terms: &BTreeMap<TermKey, u64>,
    bindings: &MatrixBindings,
    q: &QParam,
) -> Result<MomentValue, MomentError> {
    if bindings.is_float() {
        let QParam::Value(qv) = q else {
            return Err(MomentError::NeedsNumericQ);
        };
        let qf = qv.to_f64().unwrap_or(f64::NAN);
        let mut ev = FloatEvaluator { bindings, cache: HashMap::new() };
        let mut total = CompensatedSum::default();
        for (key, &count) in terms {
            let mut v = count as f64 * qf.powi(key.cr as i32);
            for a in key.shape.iter().chain(&key.scale) {
                v *= ev.atom(a)?;
            }
            total.add(v);
        }
        return Ok(MomentValue::Float(total.value()));
    }
    let mut ev = ExactEvaluator { bindings, cache: HashMap::new() };
    let mut by_cr: Vec<MomentPolynomial> = Vec::new();
    for (key, &count) in terms {
        let mut v = MomentPolynomial::constant(BigRational::from_integer(count.into()));
        for a in key.shape.iter().chain(&key.scale) {
            v *= &ev.atom(a)?;
        }
        let k = key.cr as usize;
        if by_cr.len() <= k {
            by_cr.resize(k + 1, MomentPolynomial::zero());
        }
        by_cr[k] += &v;
    }
    Ok(MomentValue::Exact(q.combine(&by_cr)))
}

// ---------------------------------------------------------------------------
// Public moment formulas
// ---------------------------------------------------------------------------

/// `E[∏ tr(…)]` for independent real Wishart matrices `W_j = A_j′X_j′B_jX_jA_j`:
/// `Σ_{γ ∈ F_n(t)} q_{γ,t}(B) · p_{σ⊚γ,t(σ,γ)}(Σ)`. Any `σ ∈ F_n⁺` is accepted.
pub fn real_wishart_moment(
    spec: &MonomialSpec,
    bindings: &MatrixBindings,
    opts: &EngineOptions,
) -> Result<MomentValue, MomentError> {
    bindings.validate(spec.colors())?;
    let terms = collect_terms(spec, true, opts)?;
    evaluate_terms(&terms, bindings, &QParam::Value(BigRational::one()))
}

/// `τ(∏ tr(…))` for q-orthogonal q-Wishart matrices with symmetric shape
/// matrices: `Σ_{γ ∈ F_n(t)} q^{cr(γ)} p_{γ,t}(B) · p_{σ⊚γ,t(σ,γ)}(Σ)`.
pub fn q_wishart_moment(
    spec: &MonomialSpec,
    bindings: &MatrixBindings,
    q: &QParam,
    opts: &EngineOptions,
) -> Result<MomentValue, MomentError> {
    if !spec.is_consecutive() {
        return Err(MomentError::ShapeViolation);
    }
    bindings.validate(spec.colors())?;
    bindings.require_symmetric_shape()?;
    let terms = collect_terms(spec, false, opts)?;
    evaluate_terms(&terms, bindings, q)
}

/// `B = I` specialization computed from per-color cycle counts of `π(γ)`:
/// `Σ_γ ∏_j M_j^{#C_j(γ)} · p_{σ⊚γ,t(σ,γ)}(Σ)`.
pub fn identity_shape_moment(
    spec: &MonomialSpec,
    sizes: &[MomentPolynomial],
    scale: &ScaleBinding,
    opts: &EngineOptions,
) -> Result<MomentValue, MomentError> {
    let bindings = MatrixBindings { shape: ShapeBinding::Identity(sizes.to_vec()), scale: scale.clone() };
    bindings.validate(spec.colors())?;
    let s = spec.colors();
    let t = spec.coloring();
    let sigma = spec.sigma().raw().to_vec();
    let iter = enumerate_color_preserving(t, opts.allow_large_n)?;
    let parts = for_each_split(
        iter,
        opts.threads,
        || (HashMap::<(Vec<u32>, Vec<TraceAtom>), u64>::new(), TermScratch::new(t)),
        |(acc, scratch), gamma| {
            let mut per_color = vec![0u32; s];
            let mut seen = vec![false; t.len()];
            raw::traverse(gamma, &mut scratch.perm, &mut scratch.plus);
            for start in 0..t.len() {
                if !seen[start] {
                    per_color[t.as_slice()[start] - 1] += 1;
                    let mut i = start;
                    while !seen[i] {
                        seen[i] = true;
                        i = scratch.perm[i] as usize;
                    }
                }
            }
            let key = scratch.key(&sigma, gamma, false);
            *acc.entry((per_color, key.scale)).or_insert(0) += 1;
        },
    );
    let mut merged: BTreeMap<(Vec<u32>, Vec<TraceAtom>), u64> = BTreeMap::new();
    for (part, _) in parts {
        for (k, c) in part {
            *merged.entry(k).or_insert(0) += c;
        }
    }
    if bindings.is_float() {
        let mut ev = FloatEvaluator { bindings: &bindings, cache: HashMap::new() };
        let mut total = CompensatedSum::default();
        for ((per_color, scale_atoms), count) in &merged {
            let mut v = *count as f64;
            for (j, &e) in per_color.iter().enumerate() {
                let m = sizes[j].as_constant().and_then(|c| c.to_f64()).ok_or(MomentError::SymbolicInFloat)?;
                v *= m.powi(e as i32);
            }
            for a in scale_atoms {
                v *= ev.atom(a)?;
            }
            total.add(v);
        }
        return Ok(MomentValue::Float(total.value()));
    }
    let mut ev = ExactEvaluator { bindings: &bindings, cache: HashMap::new() };
    let mut total = MomentPolynomial::zero();
    for ((per_color, scale_atoms), count) in &merged {
        let mut v = MomentPolynomial::constant(BigRational::from_integer((*count).into()));
        for (j, &e) in per_color.iter().enumerate() {
            v *= &sizes[j].pow(e);
        }
        for a in scale_atoms {
            v *= &ev.atom(a)?;
        }
        total += &v;
    }
    Ok(MomentValue::Exact(total))
}

/// `E[∏_k tr(W^{λ_k})]` for `W = X′X` with `X` an `M×N` standard Gaussian matrix:
/// `Σ_{γ ∈ F_n} M^{#C(δ∪γ)} N^{#C(γ∪σ_λ)}`, the second count taken over
/// connected components of the multigraph `γ ∪ σ_λ` on the `2n` points.
pub fn hss_moment(
    lambda: &IntegerPartition,
    m: &MomentPolynomial,
    n_dim: &MomentPolynomial,
    opts: &EngineOptions,
) -> Result<MomentPolynomial, MomentError> {
    let n = lambda.total();
    let sigma = PairPartition::sigma_from_partition(lambda);
    let sig = sigma.raw().to_vec();
    let parts = for_each_split(
        enumerate_all(n, opts.allow_large_n)?,
        opts.threads,
        HashMap::<(usize, usize), u64>::new,
        |acc, gamma| {
            let cg = raw::cycle_count(gamma);
            let mut parent: Vec<usize> = (0..2 * n).collect();
            fn find(p: &mut [usize], mut i: usize) -> usize {
                while p[i] != i {
                    p[i] = p[p[i]];
                    i = p[i];
                }
                i
            }
            let mut comps = 2 * n;
            for edges in [gamma, &sig[..]] {
                for a in 0..2 * n {
                    let b = edges[a] as usize;
                    if a < b {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        if ra != rb {
                            parent[ra] = rb;
                            comps -= 1;
                        }
                    }
                }
            }
            *acc.entry((cg, comps)).or_insert(0) += 1;
        },
    );
    let mut total = MomentPolynomial::zero();
    for part in parts {
        for ((cg, comps), count) in part {
            let term = &m.pow(cg as u32) * &n_dim.pow(comps as u32);
            total += &term.scale(&BigRational::from_integer(count.into()));
        }
    }
    Ok(total)
}

/// One matrix with symmetric `B`: `Σ_γ p_γ(B) p_{σ⊚γ}(Σ)`.
pub fn single_matrix_moment(
    spec: &MonomialSpec,
    bindings: &MatrixBindings,
    opts: &EngineOptions,
) -> Result<MomentValue, MomentError> {
    if spec.colors() != 1 {
        return Err(MomentError::InvalidSpec("single-matrix moments use color 1 only".into()));
    }
    bindings.validate(1)?;
    bindings.require_symmetric_shape()?;
    let terms = collect_terms(spec, false, opts)?;
    evaluate_terms(&terms, bindings, &QParam::Value(BigRational::one()))
}

// ---------------------------------------------------------------------------
// Per-γ rows of the pairing table
// ---------------------------------------------------------------------------

/// The contribution of one `γ` to the real Wishart moment.
#[derive(Debug, Clone, PartialEq)]
pub struct TermRow {
    pub gamma: PairPartition,
    pub crossings: u32,
    pub pi_gamma: Permutation,
    pub pi_product: Permutation,
    pub induced: Coloring,
    /// `q_{γ,t}(B) · p_{σ⊚γ,t(σ,γ)}(Σ)` with symbolic atoms
    pub contribution: MomentPolynomial,
}

impl TermRow {
    pub fn to_json(&self) -> Value {
        json!({
            "gamma": self.gamma.pairs(),
            "cr": self.crossings,
            "pi_gamma": self.pi_gamma.to_string(),
            "pi_sigma_gamma": self.pi_product.to_string(),
            "induced_coloring": self.induced.as_slice(),
            "contribution": self.contribution.to_json(),
            "contribution_text": self.contribution.to_string(),
        })
    }
}

/// Every `γ ∈ F_n(t)` with its contribution, sorted by the partners of `1..n`
/// (comparing `|γ(j)|` first and preferring upper partners).
pub fn term_rows(spec: &MonomialSpec, opts: &EngineOptions) -> Result<Vec<TermRow>, MomentError> {
    let mut rows = Vec::new();
    let sigma = spec.sigma();
    let mut scratch = TermScratch::new(spec.coloring());
    for gamma in enumerate_color_preserving(spec.coloring(), opts.allow_large_n)? {
        let key = scratch.key(sigma.raw(), gamma.raw(), true);
        let contribution = key
            .shape
            .iter()
            .chain(&key.scale)
            .fold(MomentPolynomial::one(), |acc, a| &acc * &MomentPolynomial::atom(a.clone()));
        let product = sigma.brauer(&gamma)?;
        rows.push(TermRow {
            crossings: key.cr,
            pi_gamma: gamma.traverse().perm,
            pi_product: product.traverse().perm,
            induced: sigma.induced_coloring(&gamma, spec.coloring())?,
            contribution,
            gamma,
        });
    }
    let sort_key = |g: &PairPartition| -> Vec<(i64, bool)> {
        (1..=g.n() as i64).map(|j| g.partner(j)).map(|p| (p.abs(), p < 0)).collect()
    };
    rows.sort_by_key(|r| sort_key(&r.gamma));
    Ok(rows)
}

/// The nine rows of the `tr²(W₁W₂)` expansion.
pub fn table1() -> Vec<TermRow> {
    let spec = MonomialSpec::new(vec![vec![1, 2], vec![1, 2]]).expect("fixed spec");
    term_rows(&spec, &EngineOptions::default()).expect("n = 4 is within bounds")
}

// ---------------------------------------------------------------------------
// Brute-force q-Wick evaluation
// ---------------------------------------------------------------------------

/// Work limit `(N·M)^n (2n-1)!!` for [`brute_force_q_moment`].
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Expands every trace into matrix entries and sums the q-Wick formula over all
/// pairings of the resulting `2n` Gaussian letters, weighting each pairing by
/// `q^{crossings}` and the covariance `δ_{colors}·B_{k,k'}·Σ_{i,i'}`.
pub fn brute_force_q_moment(
    spec: &MonomialSpec,
    bindings: &MatrixBindings,
    q: &QParam,
) -> Result<MomentValue, MomentError> {
    if !spec.is_consecutive() {
        return Err(MomentError::ShapeViolation);
    }
    let s = spec.colors();
    bindings.validate(s)?;
    let mut b_exact = Vec::with_capacity(s);
    let mut s_exact = Vec::with_capacity(s);
    let mut float = None;
    match (&bindings.shape, &bindings.scale) {
        (ShapeBinding::Float(b), ScaleBinding::Float(sg)) => float = Some((b.clone(), sg.clone())),
        _ if bindings.is_float() => {
            let to_f = |m: Matrix<BigRational>| m.to_f64();
            let b = materialize_shape(bindings, s)?.into_iter().map(to_f).collect();
            let sg = materialize_scale(bindings, s)?.into_iter().map(to_f).collect();
            float = Some((b, sg));
        }
        _ => {
            b_exact = materialize_shape(bindings, s)?;
            s_exact = materialize_scale(bindings, s)?;
        }
    }
    let n = spec.n();
    let m_max = (1..=s).filter_map(|j| bindings.shape_size(j)).max().unwrap_or(1);
    let n_dim = bindings.scale_size().unwrap_or(1);
    let work = ((n_dim * m_max) as u128).pow(n as u32) * crate::pairings::double_factorial_odd(n);
    if work > BRUTE_FORCE_LIMIT {
        return Err(MomentError::GuardExceeded { work, limit: BRUTE_FORCE_LIMIT });
    }
    match float {
        Some((b, sg)) => {
            let QParam::Value(qv) = q else {
                return Err(MomentError::NeedsNumericQ);
            };
            let coeffs = wick_coefficients(spec, &b, &sg);
            let qf = qv.to_f64().unwrap_or(f64::NAN);
            let mut total = CompensatedSum::default();
            for (k, c) in coeffs.iter().enumerate() {
                total.add(c * qf.powi(k as i32));
            }
            Ok(MomentValue::Float(total.value()))
        }
        None => {
            let coeffs = wick_coefficients(spec, &b_exact, &s_exact);
            let polys: Vec<MomentPolynomial> = coeffs.into_iter().map(MomentPolynomial::constant).collect();
            Ok(MomentValue::Exact(q.combine(&polys)))
        }
    }
}

fn concrete_size(p: &MomentPolynomial, what: &str) -> Result<usize, MomentError> {
    p.as_constant()
        .filter(|c| c.is_integer() && *c > BigRational::zero())
        .and_then(|c| c.to_integer().to_usize())
        .ok_or_else(|| MomentError::InvalidSpec(format!("{what} must be a concrete positive integer here")))
}

fn materialize_shape(b: &MatrixBindings, s: usize) -> Result<Vec<Matrix<BigRational>>, MomentError> {
    match &b.shape {
        ShapeBinding::Exact(m) => Ok(m.clone()),
        ShapeBinding::Identity(sizes) => {
            (0..s).map(|j| Ok(Matrix::identity(concrete_size(&sizes[j], "M")?))).collect()
        }
        ShapeBinding::Float(_) => Err(MomentError::SymbolicInFloat),
        ShapeBinding::Symbolic => Err(MomentError::InvalidSpec("brute force needs concrete shape matrices".into())),
    }
}

fn materialize_scale(b: &MatrixBindings, s: usize) -> Result<Vec<Matrix<BigRational>>, MomentError> {
    match &b.scale {
        ScaleBinding::Exact(m) => Ok(m.clone()),
        ScaleBinding::ScaledIdentity { n, c } => {
            let dim = concrete_size(n, "N")?;
            Ok((0..s).map(|j| Matrix::diagonal(&vec![c[j].clone(); dim])).collect())
        }
        ScaleBinding::Float(_) => Err(MomentError::SymbolicInFloat),
        ScaleBinding::Symbolic => Err(MomentError::InvalidSpec("brute force needs concrete scale matrices".into())),
    }
}

/// Coefficients of `q^k` in the q-Wick expansion of the spec's trace product.
fn wick_coefficients<S: crate::linalg::Scalar>(spec: &MonomialSpec, b: &[Matrix<S>], sg: &[Matrix<S>]) -> Vec<S> {
    let n = spec.n();
    // the cyclic successor inside each trace factor
    let mut next = vec![0usize; n];
    let mut start = 0;
    for w in spec.cycle_words() {
        for k in 0..w.len() {
            next[start + k] = start + (k + 1) % w.len();
        }
        start += w.len();
    }
    let colors: Vec<usize> = spec.cycle_words().iter().flatten().copied().collect();
    // letter 2i is X_{K(i), I(i)}, letter 2i+1 is X_{K(i), I(next(i))}
    let letter_color = |l: usize| colors[l / 2];
    let k_var = |l: usize| l / 2;
    let i_var = |l: usize| if l.is_multiple_of(2) { l / 2 } else { next[l / 2] };
    let m_dims: Vec<usize> = (0..n).map(|i| b[colors[i] - 1].rows()).collect();
    let n_dim = sg[0].rows();

    let mut coeffs: Vec<S> = Vec::new();
    let mut matching = vec![usize::MAX; 2 * n];
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n);

    fn sum_over<S: crate::linalg::Scalar>(
        vars: usize,
        dims: &dyn Fn(usize) -> usize,
        pairs: &[(usize, usize)],
        var_of: &dyn Fn(usize) -> usize,
        entry: &dyn Fn(usize, usize, usize) -> S,
    ) -> S {
        let mut idx = vec![0usize; vars];
        let mut total = S::zero();
        loop {
            let mut term = S::one();
            for &(a, c) in pairs {
                term = term.mul(&entry(a, idx[var_of(a)], idx[var_of(c)]));
            }
            total = total.add(&term);
            let mut v = 0;
            loop {
                if v == vars {
                    return total;
                }
                idx[v] += 1;
                if idx[v] < dims(v) {
                    break;
                }
                idx[v] = 0;
                v += 1;
            }
        }
    }

    fn rec<S: crate::linalg::Scalar>(
        matching: &mut Vec<usize>,
        pairs: &mut Vec<(usize, usize)>,
        letter_color: &dyn Fn(usize) -> usize,
        visit: &mut dyn FnMut(&[(usize, usize)]),
    ) {
        let Some(a) = matching.iter().position(|&m| m == usize::MAX) else {
            visit(pairs);
            return;
        };
        for c in a + 1..matching.len() {
            if matching[c] == usize::MAX && letter_color(c) == letter_color(a) {
                matching[a] = c;
                matching[c] = a;
                pairs.push((a, c));
                rec::<S>(matching, pairs, letter_color, visit);
                pairs.pop();
                matching[a] = usize::MAX;
                matching[c] = usize::MAX;
            }
        }
    }

    let mut visit = |pairs: &[(usize, usize)]| {
        let mut cr = 0usize;
        for &(a, b2) in pairs {
            for &(c, d) in pairs {
                if a < c && c < b2 && b2 < d {
                    cr += 1;
                }
            }
        }
        let shape_part = sum_over::<S>(
            n,
            &|v| m_dims[v],
            pairs,
            &k_var,
            &|a, x, y| b[letter_color(a) - 1].get(x, y).clone(),
        );
        let scale_part =
            sum_over::<S>(n, &|_| n_dim, pairs, &i_var, &|a, x, y| sg[letter_color(a) - 1].get(x, y).clone());
        if coeffs.len() <= cr {
            coeffs.resize(cr + 1, S::zero());
        }
        coeffs[cr] = coeffs[cr].add(&shape_part.mul(&scale_part));
    };
    rec::<S>(&mut matching, &mut pairs, &letter_color, &mut visit);
    coeffs
}

/// Rational as `"num/den"`, for JSON output.
pub fn rational_json(r: &BigRational) -> Value {
    Value::String(format_rational(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomials::ratio;

    fn spec(words: &[&[usize]]) -> MonomialSpec {
        MonomialSpec::new(words.iter().map(|w| w.to_vec()).collect()).unwrap()
    }

    fn exact(v: MomentValue) -> MomentPolynomial {
        v.into_exact().unwrap()
    }

    fn opts() -> EngineOptions {
        EngineOptions::default()
    }

    #[test]
    fn spec_blocks() {
        let s = spec(&[&[1, 2], &[1, 2]]);
        assert_eq!(s.n(), 4);
        assert_eq!(s.colors(), 2);
        assert_eq!(s.sigma(), &PairPartition::from_pairs(4, &[(1, -2), (2, -1), (3, -4), (4, -3)]).unwrap());
        assert!(MonomialSpec::new(vec![]).is_err());
        assert!(MonomialSpec::new(vec![vec![]]).is_err());
        let round = MonomialSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn general_sigma_spec() {
        let alpha = Permutation::from_cycles(3, &[vec![1, 3]]).unwrap();
        let s = MonomialSpec::general(PairPartition::pi_inverse(&alpha), Coloring::constant(3)).unwrap();
        assert!(!s.is_consecutive());
        assert_eq!(s.cycle_words(), &[vec![1, 1], vec![1]]);
        let b = MatrixBindings::scalar_symbolic(1);
        assert_eq!(
            q_wishart_moment(&s, &b, &QParam::Symbolic, &opts()),
            Err(MomentError::ShapeViolation)
        );
        assert!(real_wishart_moment(&s, &b, &opts()).is_ok());
        assert_eq!(MonomialSpec::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn first_moments_product() {
        // only γ = δ survives when every color appears once
        let s = spec(&[&[1, 2, 3]]);
        let got = exact(real_wishart_moment(&s, &MatrixBindings::symbolic(), &opts()).unwrap());
        let expected = [1u16, 2, 3]
            .iter()
            .map(|&c| MomentPolynomial::atom(TraceAtom::shape(vec![Letter::plain(c)]).unwrap()))
            .fold(MomentPolynomial::atom(TraceAtom::scale(&[1, 2, 3]).unwrap()), |a, b| &a * &b);
        assert_eq!(got, expected);
    }

    #[test]
    fn hss_small() {
        let (m, n) = (MomentPolynomial::m(0), MomentPolynomial::n());
        let p = |v: Vec<usize>| IntegerPartition::new(v).unwrap();
        assert_eq!(hss_moment(&p(vec![1]), &m, &n, &opts()).unwrap(), &m * &n);
        let two = &(&(&m * &n.pow(2)) + &(&m.pow(2) * &n)) + &(&m * &n);
        assert_eq!(hss_moment(&p(vec![2]), &m, &n, &opts()).unwrap(), two);
        let one_one = &(&m.pow(2) * &n.pow(2)) + &(&m * &n).scale(&rat(2));
        assert_eq!(hss_moment(&p(vec![1, 1]), &m, &n, &opts()).unwrap(), one_one);
    }

    #[test]
    fn identity_shape_two_colors() {
        let s = spec(&[&[1, 2]]);
        let sizes = vec![MomentPolynomial::m(1), MomentPolynomial::m(2)];
        let got = exact(identity_shape_moment(&s, &sizes, &ScaleBinding::Symbolic, &opts()).unwrap());
        let expected = &(&sizes[0] * &sizes[1]) * &MomentPolynomial::atom(TraceAtom::scale(&[1, 2]).unwrap());
        assert_eq!(got, expected);
    }

    #[test]
    fn q_moment_tr_w_is_lambda_n() {
        let s = spec(&[&[1]]);
        let lam_n = &MomentPolynomial::lambda() * &MomentPolynomial::n();
        let inv_n = MomentPolynomial::power(Symbol::N, -1);
        let b = MatrixBindings {
            shape: ShapeBinding::Identity(vec![lam_n.clone()]),
            scale: ScaleBinding::ScaledIdentity { n: MomentPolynomial::n(), c: vec![rat(1)] },
        };
        let got = exact(q_wishart_moment(&s, &b, &QParam::Symbolic, &opts()).unwrap());
        // Σ = (1/N)·I_N
        assert_eq!(&got * &inv_n, lam_n);
    }

    #[test]
    fn q_zero_tr_w_squared() {
        let s = spec(&[&[1, 1]]);
        let b = MatrixBindings::scalar(vec![MomentPolynomial::m(0)], MomentPolynomial::n(), vec![rat(1)]);
        let got = exact(q_wishart_moment(&s, &b, &QParam::Value(rat(0)), &opts()).unwrap());
        let (m, n) = (MomentPolynomial::m(0), MomentPolynomial::n());
        assert_eq!(got, &(&m * &n.pow(2)) + &(&m.pow(2) * &n));
    }

    #[test]
    fn brute_force_scalar_case() {
        let s = spec(&[&[1]]);
        let one = Matrix::<BigRational>::identity(1);
        let b = MatrixBindings::exact(vec![ColorMatrices { b: one.clone(), sigma: one }]);
        let got = exact(brute_force_q_moment(&s, &b, &QParam::Symbolic).unwrap());
        assert_eq!(got, MomentPolynomial::one());
    }

    #[test]
    fn brute_force_guard() {
        let s = spec(&[&[1; 7]]);
        let b = MatrixBindings::scalar(vec![MomentPolynomial::int(3)], MomentPolynomial::int(3), vec![rat(1)]);
        assert!(matches!(
            brute_force_q_moment(&s, &b, &QParam::Symbolic),
            Err(MomentError::GuardExceeded { .. })
        ));
    }

    #[test]
    fn validation_errors() {
        let s = spec(&[&[1, 2]]);
        let one = Matrix::<BigRational>::identity(2);
        let b = MatrixBindings::exact(vec![ColorMatrices { b: one.clone(), sigma: one.clone() }]);
        assert_eq!(real_wishart_moment(&s, &b, &opts()), Err(MomentError::MissingColor(2)));
        let ns = Matrix::from_rows(vec![vec![rat(1), rat(2)], vec![rat(0), rat(1)]]).unwrap();
        let b = MatrixBindings::exact(vec![ColorMatrices { b: ns, sigma: one.clone() }]);
        let s1 = spec(&[&[1, 1]]);
        assert_eq!(
            q_wishart_moment(&s1, &b, &QParam::Symbolic, &opts()),
            Err(MomentError::NonSymmetricShape(1))
        );
        assert!(real_wishart_moment(&s1, &b, &opts()).is_ok());
        let bad_sigma = Matrix::from_rows(vec![vec![rat(1), rat(2)], vec![rat(2), rat(1)]]).unwrap();
        let b = MatrixBindings::exact(vec![ColorMatrices { b: one, sigma: bad_sigma }]);
        assert!(matches!(real_wishart_moment(&s1, &b, &opts()), Err(MomentError::InvalidScale { color: 1, .. })));
    }

    #[test]
    fn matrices_json() {
        let v: Value = serde_json::from_str(r#"[{"B":[["1/2",0],[0,1]],"Sigma":[[2,1],[1,2]]}]"#).unwrap();
        let b = MatrixBindings::from_json(&v).unwrap();
        assert!(!b.is_float());
        let v: Value = serde_json::from_str(r#"[{"B":[[0.5]],"Sigma":[[2]]}]"#).unwrap();
        assert!(MatrixBindings::from_json(&v).unwrap().is_float());
        let v: Value = serde_json::from_str(r#"[{"B":[[1]]}]"#).unwrap();
        assert!(MatrixBindings::from_json(&v).is_err());
    }

    #[test]
    fn float_matches_exact() {
        let s = spec(&[&[1, 1], &[1]]);
        let bm = Matrix::from_rows(vec![vec![ratio(1, 2), rat(1)], vec![rat(1), rat(3)]]).unwrap();
        let sm = Matrix::from_rows(vec![vec![rat(2), ratio(1, 3)], vec![ratio(1, 3), rat(1)]]).unwrap();
        let e = MatrixBindings::exact(vec![ColorMatrices { b: bm.clone(), sigma: sm.clone() }]);
        let f = MatrixBindings::float(vec![ColorMatrices { b: bm.to_f64(), sigma: sm.to_f64() }]);
        let ev = real_wishart_moment(&s, &e, &opts()).unwrap().as_f64().unwrap();
        let fv = real_wishart_moment(&s, &f, &opts()).unwrap().as_f64().unwrap();
        assert!((ev - fv).abs() <= 1e-12 * ev.abs());
        assert_eq!(
            q_wishart_moment(&s, &f, &QParam::Symbolic, &opts()),
            Err(MomentError::NeedsNumericQ)
        );
    }

    #[test]
    fn threaded_sum_is_identical() {
        let s = spec(&[&[1, 2, 1], &[2, 1]]);
        let b = MatrixBindings::symbolic();
        let one = real_wishart_moment(&s, &b, &opts()).unwrap();
        let three = real_wishart_moment(&s, &b, &EngineOptions { threads: 3, ..opts() }).unwrap();
        assert_eq!(one, three);
    }
}
