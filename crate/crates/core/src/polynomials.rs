//! Sparse exact-rational Laurent polynomials over the scalar symbols
//! `q, λ, N, M, M₁, M₂, …` and canonical trace-word atoms.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("trace word must be nonempty")]
    EmptyWord,
    #[error("color {0} is outside 1..=65535")]
    InvalidColor(i64),
    #[error("cannot raise a binding of {0} with several terms to a negative power")]
    NegativePowerOfSum(String),
    #[error("cannot invert zero")]
    DivisionByZero,
    #[error("term with N^{0} diverges as N grows")]
    Divergent(i32),
    #[error("{0}")]
    Parse(String),
}

// ---------------------------------------------------------------------------
// Rationals
// ---------------------------------------------------------------------------

/// Parses `"a"`, `"a/b"` or a plain decimal such as `"0.25"`.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: BigInt = a.trim().parse().ok()?;
        let b: BigInt = b.trim().parse().ok()?;
        if b.is_zero() {
            return None;
        }
        return Some(BigRational::new(a, b));
    }
    if let Ok(a) = s.parse::<BigInt>() {
        return Some(BigRational::from_integer(a));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.')?;
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let r = BigRational::new(digits, den);
    Some(if neg { -r } else { r })
}

/// `"num/den"` with a positive denominator.
pub fn format_rational(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Accepts a JSON number (integer or float) or a rational string.
pub fn rational_from_json(v: &Value) -> Option<BigRational> {
    match v {
        Value::String(s) => parse_rational(s),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Some(BigRational::from_integer(i.into()))
            } else {
                n.as_f64().and_then(BigRational::from_float)
            }
        }
        _ => None,
    }
}

pub fn rat(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

// ---------------------------------------------------------------------------
// Trace atoms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub color: u16,
    pub transposed: bool,
}

impl Letter {
    pub fn plain(color: u16) -> Self {
        Letter { color, transposed: false }
    }

    pub fn t(color: u16) -> Self {
        Letter { color, transposed: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomKind {
    /// traces of products of the shape matrices `B_j`
    Shape,
    /// traces of products of the scale matrices `Σ_j`
    Scale,
}

impl AtomKind {
    fn name(self) -> &'static str {
        match self {
            AtomKind::Shape => "shape",
            AtomKind::Scale => "scale",
        }
    }
}

/// `tr(x₁x₂…x_k)` stored in canonical form: the least word among all rotations
/// and all rotations of the reversed word with transposes flipped. Scale
/// matrices are symmetric so their transpose flags are always cleared.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TraceAtom {
    kind: AtomKind,
    word: Vec<Letter>,
}

impl TraceAtom {
    pub fn new(kind: AtomKind, word: Vec<Letter>) -> Result<Self, PolyError> {
        if word.is_empty() {
            return Err(PolyError::EmptyWord);
        }
        if word.iter().any(|l| l.color == 0) {
            return Err(PolyError::InvalidColor(0));
        }
        Ok(Self::canonical(kind, word))
    }

    pub fn shape(word: Vec<Letter>) -> Result<Self, PolyError> {
        Self::new(AtomKind::Shape, word)
    }

    pub fn scale(colors: &[u16]) -> Result<Self, PolyError> {
        Self::new(AtomKind::Scale, colors.iter().map(|&c| Letter::plain(c)).collect())
    }

    pub(crate) fn canonical(kind: AtomKind, mut word: Vec<Letter>) -> Self {
        if kind == AtomKind::Scale {
            for l in &mut word {
                l.transposed = false;
            }
        }
        let flip = kind == AtomKind::Shape;
        let mirrored: Vec<Letter> =
            word.iter().rev().map(|l| Letter { color: l.color, transposed: l.transposed != flip }).collect();
        let k = word.len();
        let best = [&word, &mirrored]
            .into_iter()
            .flat_map(|w| (0..k).map(move |r| [&w[r..], &w[..r]].concat()))
            .min()
            .expect("nonempty word");
        TraceAtom { kind, word: best }
    }

    pub fn kind(&self) -> AtomKind {
        self.kind
    }

    pub fn word(&self) -> &[Letter] {
        &self.word
    }

    fn to_json(&self) -> Value {
        let word: Vec<Value> = self.word.iter().map(|l| json!([l.color, l.transposed])).collect();
        json!({"kind": self.kind.name(), "word": word})
    }

    fn from_json(v: &Value) -> Result<Self, PolyError> {
        let bad = |m: &str| PolyError::Parse(format!("atom: {m}"));
        let kind = match v.get("kind").and_then(Value::as_str) {
            Some("shape") => AtomKind::Shape,
            Some("scale") => AtomKind::Scale,
            _ => return Err(bad("kind must be \"shape\" or \"scale\"")),
        };
        let word = v.get("word").and_then(Value::as_array).ok_or_else(|| bad("missing word"))?;
        let mut letters = Vec::with_capacity(word.len());
        for l in word {
            let (c, t) = match l {
                Value::Array(a) if a.len() == 2 => (a[0].as_i64(), a[1].as_bool()),
                Value::Number(n) => (n.as_i64(), Some(false)),
                _ => (None, None),
            };
            let c = c.ok_or_else(|| bad("letter color must be an integer"))?;
            let t = t.ok_or_else(|| bad("letter transpose flag must be a boolean"))?;
            if !(1..=u16::MAX as i64).contains(&c) {
                return Err(PolyError::InvalidColor(c));
            }
            letters.push(Letter { color: c as u16, transposed: t });
        }
        Self::new(kind, letters)
    }
}

impl fmt::Display for TraceAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            AtomKind::Shape => "B",
            AtomKind::Scale => "S",
        };
        f.write_str("tr(")?;
        for l in &self.word {
            write!(f, "{base}{}{}", l.color, if l.transposed { "'" } else { "" })?;
        }
        f.write_str(")")
    }
}

// ---------------------------------------------------------------------------
// Symbols and monomials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Q,
    Lambda,
    N,
    /// `M(0)` is the shared size `M`; `M(j)` is the size of color `j`.
    M(u16),
    Atom(TraceAtom),
}

impl Symbol {
    pub fn name(&self) -> String {
        match self {
            Symbol::Q => "q".into(),
            Symbol::Lambda => "lambda".into(),
            Symbol::N => "N".into(),
            Symbol::M(0) => "M".into(),
            Symbol::M(j) => format!("M{j}"),
            Symbol::Atom(a) => a.to_string(),
        }
    }

    pub fn from_name(s: &str) -> Option<Symbol> {
        match s {
            "q" => Some(Symbol::Q),
            "lambda" | "λ" => Some(Symbol::Lambda),
            "N" => Some(Symbol::N),
            "M" => Some(Symbol::M(0)),
            _ => s.strip_prefix('M').and_then(|d| d.parse::<u16>().ok()).filter(|&j| j > 0).map(Symbol::M),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A product of symbols with nonzero integer exponents, sorted by symbol.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<(Symbol, i32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn from_powers(powers: impl IntoIterator<Item = (Symbol, i32)>) -> Self {
        let mut map: BTreeMap<Symbol, i32> = BTreeMap::new();
        for (s, e) in powers {
            *map.entry(s).or_insert(0) += e;
        }
        Monomial(map.into_iter().filter(|&(_, e)| e != 0).collect())
    }

    pub fn powers(&self) -> &[(Symbol, i32)] {
        &self.0
    }

    pub fn exponent(&self, s: &Symbol) -> i32 {
        self.0.iter().find(|(t, _)| t == s).map_or(0, |&(_, e)| e)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let e = a[i].1 + b[j].1;
                    if e != 0 {
                        out.push((a[i].0.clone(), e));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    fn without(&self, s: &Symbol) -> Monomial {
        Monomial(self.0.iter().filter(|(t, _)| t != s).cloned().collect())
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for (k, (s, e)) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}^{e}")?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Polynomials
// ---------------------------------------------------------------------------

/// Sparse Laurent polynomial with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MomentPolynomial {
    terms: BTreeMap<Monomial, BigRational>,
}

/// Values substituted for symbols.
pub type Substitution = BTreeMap<Symbol, MomentPolynomial>;

impl MomentPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn int(n: i64) -> Self {
        Self::constant(rat(n))
    }

    pub fn term(c: BigRational, m: Monomial) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        MomentPolynomial { terms }
    }

    pub fn symbol(s: Symbol) -> Self {
        Self::power(s, 1)
    }

    pub fn power(s: Symbol, e: i32) -> Self {
        Self::term(BigRational::one(), Monomial::from_powers([(s, e)]))
    }

    pub fn q() -> Self {
        Self::symbol(Symbol::Q)
    }

    pub fn lambda() -> Self {
        Self::symbol(Symbol::Lambda)
    }

    pub fn n() -> Self {
        Self::symbol(Symbol::N)
    }

    pub fn m(j: u16) -> Self {
        Self::symbol(Symbol::M(j))
    }

    pub fn atom(a: TraceAtom) -> Self {
        Self::symbol(Symbol::Atom(a))
    }

    /// Sum of `coeffs[k]·q^k`.
    pub fn from_q_coefficients(coeffs: &[BigRational]) -> Self {
        let mut p = Self::zero();
        for (k, c) in coeffs.iter().enumerate() {
            p.add_term(c.clone(), Monomial::from_powers([(Symbol::Q, k as i32)]));
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    /// The value when the polynomial has no symbols.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn add_term(&mut self, c: BigRational, m: Monomial) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        MomentPolynomial { terms: self.terms.iter().map(|(m, a)| (m.clone(), a * c)).collect() }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = &out * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        out
    }

    /// Integer power; negative exponents need a single nonzero term.
    pub fn pow_i(&self, e: i32) -> Result<Self, PolyError> {
        if e >= 0 {
            return Ok(self.pow(e as u32));
        }
        self.inverse().map(|inv| inv.pow(e.unsigned_abs()))
    }

    pub fn inverse(&self) -> Result<Self, PolyError> {
        if self.terms.len() != 1 {
            return Err(if self.is_zero() {
                PolyError::DivisionByZero
            } else {
                PolyError::NegativePowerOfSum(self.to_string())
            });
        }
        let (m, c) = self.terms.iter().next().expect("one term");
        let m = Monomial(m.0.iter().map(|(s, e)| (s.clone(), -e)).collect());
        Ok(Self::term(c.recip(), m))
    }

    /// Exact substitution; unbound symbols persist.
    pub fn substitute(&self, bindings: &Substitution) -> Result<Self, PolyError> {
        let mut out = Self::zero();
        let mut cache: BTreeMap<(Symbol, i32), MomentPolynomial> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut acc = Self::constant(c.clone());
            let mut rest = Vec::new();
            for (s, e) in &m.0 {
                match bindings.get(s) {
                    Some(v) => {
                        let key = (s.clone(), *e);
                        if !cache.contains_key(&key) {
                            let p = v.pow_i(*e).map_err(|err| match err {
                                PolyError::NegativePowerOfSum(_) => PolyError::NegativePowerOfSum(s.name()),
                                other => other,
                            })?;
                            cache.insert(key.clone(), p);
                        }
                        acc = &acc * &cache[&key];
                    }
                    None => rest.push((s.clone(), *e)),
                }
            }
            acc = &acc * &Self::term(BigRational::one(), Monomial(rest));
            out += &acc;
        }
        Ok(out)
    }

    /// Convenience for a single symbol.
    pub fn substitute_one(&self, s: Symbol, v: MomentPolynomial) -> Result<Self, PolyError> {
        self.substitute(&BTreeMap::from([(s, v)]))
    }

    /// Drops terms with negative powers of `N`; rejects positive powers.
    pub fn limit_n_to_infinity(&self) -> Result<Self, PolyError> {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            let e = m.exponent(&Symbol::N);
            if e > 0 {
                return Err(PolyError::Divergent(e));
            }
            if e == 0 {
                out.add_term(c.clone(), m.without(&Symbol::N));
            }
        }
        Ok(out)
    }

    pub fn contains(&self, s: &Symbol) -> bool {
        self.terms.keys().any(|m| m.exponent(s) != 0)
    }

    /// Coefficient polynomial of `s^e`.
    pub fn coefficient_of(&self, s: &Symbol, e: i32) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            if m.exponent(s) == e {
                out.add_term(c.clone(), m.without(s));
            }
        }
        out
    }

    /// Largest exponent of `s` over all terms (0 for the zero polynomial).
    pub fn max_exponent(&self, s: &Symbol) -> i32 {
        self.terms.keys().map(|m| m.exponent(s)).max().unwrap_or(0)
    }

    pub fn min_exponent(&self, s: &Symbol) -> i32 {
        self.terms.keys().map(|m| m.exponent(s)).min().unwrap_or(0)
    }

    /// Numeric value when only `q` remains and `q` is given.
    pub fn eval_f64(&self, values: &BTreeMap<Symbol, f64>) -> Option<f64> {
        let mut total = 0.0;
        for (m, c) in &self.terms {
            let mut t = c.to_f64()?;
            for (s, e) in &m.0 {
                t *= values.get(s)?.powi(*e);
            }
            total += t;
        }
        Some(total)
    }

    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut powers = serde_json::Map::new();
                let mut atoms = Vec::new();
                for (s, e) in &m.0 {
                    match s {
                        Symbol::Atom(a) => {
                            let mut v = a.to_json();
                            v["power"] = json!(e);
                            atoms.push(v);
                        }
                        _ => {
                            powers.insert(s.name(), json!(e));
                        }
                    }
                }
                if !atoms.is_empty() {
                    powers.insert("atoms".into(), Value::Array(atoms));
                }
                json!({"coeff": format_rational(c), "powers": Value::Object(powers)})
            })
            .collect();
        json!({ "terms": terms })
    }

    pub fn from_json(v: &Value) -> Result<Self, PolyError> {
        let bad = |m: String| PolyError::Parse(m);
        let terms = v
            .get("terms")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("polynomial: expected an object with a \"terms\" array".into()))?;
        let mut out = Self::zero();
        for t in terms {
            let c = t
                .get("coeff")
                .and_then(rational_from_json)
                .ok_or_else(|| bad("polynomial: term coeff must be a rational".into()))?;
            let mut powers = Vec::new();
            if let Some(p) = t.get("powers") {
                let p = p.as_object().ok_or_else(|| bad("polynomial: powers must be an object".into()))?;
                for (k, e) in p {
                    if k == "atoms" {
                        let atoms = e.as_array().ok_or_else(|| bad("polynomial: atoms must be an array".into()))?;
                        for a in atoms {
                            let pw = a.get("power").and_then(Value::as_i64).unwrap_or(1);
                            powers.push((Symbol::Atom(TraceAtom::from_json(a)?), pw as i32));
                        }
                    } else {
                        let s = Symbol::from_name(k).ok_or_else(|| bad(format!("polynomial: unknown symbol {k}")))?;
                        let e = e.as_i64().ok_or_else(|| bad(format!("polynomial: exponent of {k} must be an integer")))?;
                        powers.push((s, e as i32));
                    }
                }
            }
            out.add_term(c, Monomial::from_powers(powers));
        }
        Ok(out)
    }
}

impl From<BigRational> for MomentPolynomial {
    fn from(c: BigRational) -> Self {
        Self::constant(c)
    }
}

impl From<i64> for MomentPolynomial {
    fn from(c: i64) -> Self {
        Self::int(c)
    }
}

impl fmt::Display for MomentPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if k == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            if m.is_one() {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "{m}")?;
            } else {
                write!(f, "{a}*{m}")?;
            }
        }
        Ok(())
    }
}

impl<'a> AddAssign<&'a MomentPolynomial> for MomentPolynomial {
    fn add_assign(&mut self, rhs: &'a MomentPolynomial) {
        for (m, c) in &rhs.terms {
            self.add_term(c.clone(), m.clone());
        }
    }
}

impl AddAssign for MomentPolynomial {
    fn add_assign(&mut self, rhs: MomentPolynomial) {
        *self += &rhs;
    }
}

impl<'a> SubAssign<&'a MomentPolynomial> for MomentPolynomial {
    fn sub_assign(&mut self, rhs: &'a MomentPolynomial) {
        for (m, c) in &rhs.terms {
            self.add_term(-c, m.clone());
        }
    }
}

impl SubAssign for MomentPolynomial {
    fn sub_assign(&mut self, rhs: MomentPolynomial) {
        *self -= &rhs;
    }
}

impl<'a> Add<&'a MomentPolynomial> for &'a MomentPolynomial {
    type Output = MomentPolynomial;
    fn add(self, rhs: &MomentPolynomial) -> MomentPolynomial {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl<'a> Sub<&'a MomentPolynomial> for &'a MomentPolynomial {
    type Output = MomentPolynomial;
    fn sub(self, rhs: &MomentPolynomial) -> MomentPolynomial {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl<'a> Mul<&'a MomentPolynomial> for &'a MomentPolynomial {
    type Output = MomentPolynomial;
    fn mul(self, rhs: &MomentPolynomial) -> MomentPolynomial {
        let mut out = MomentPolynomial::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ca * cb, ma.mul(mb));
            }
        }
        out
    }
}

impl Neg for &MomentPolynomial {
    type Output = MomentPolynomial;
    fn neg(self) -> MomentPolynomial {
        MomentPolynomial { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }
}

impl Neg for MomentPolynomial {
    type Output = MomentPolynomial;
    fn neg(self) -> MomentPolynomial {
        -&self
    }
}

macro_rules! owned_binop {
    ($tr:ident, $f:ident) => {
        impl $tr for MomentPolynomial {
            type Output = MomentPolynomial;
            fn $f(self, rhs: MomentPolynomial) -> MomentPolynomial {
                (&self).$f(&rhs)
            }
        }
        impl<'a> $tr<&'a MomentPolynomial> for MomentPolynomial {
            type Output = MomentPolynomial;
            fn $f(self, rhs: &MomentPolynomial) -> MomentPolynomial {
                (&self).$f(rhs)
            }
        }
        impl<'a> $tr<MomentPolynomial> for &'a MomentPolynomial {
            type Output = MomentPolynomial;
            fn $f(self, rhs: MomentPolynomial) -> MomentPolynomial {
                self.$f(&rhs)
            }
        }
    };
}

owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);

impl MulAssign<&MomentPolynomial> for MomentPolynomial {
    fn mul_assign(&mut self, rhs: &MomentPolynomial) {
        *self = &*self * rhs;
    }
}

impl std::iter::Sum for MomentPolynomial {
    fn sum<I: Iterator<Item = MomentPolynomial>>(iter: I) -> Self {
        let mut out = Self::zero();
        for p in iter {
            out += &p;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> MomentPolynomial {
        MomentPolynomial::q()
    }

    #[test]
    fn ring_basics() {
        let one = MomentPolynomial::one();
        let p = &one + &q();
        assert!((&p + &p.scale(&rat(-1))).is_zero());
        let qq = &q() * &q();
        assert_eq!(qq.len(), 1);
        assert_eq!(qq, MomentPolynomial::power(Symbol::Q, 2));
        let lhs = &(&one + &q()) * &(&one + &qq);
        let rhs = MomentPolynomial::from_q_coefficients(&[rat(1), rat(1), rat(1), rat(1)]);
        assert_eq!(lhs, rhs);
        assert_eq!(lhs.to_string(), "1 + q + q^2 + q^3");
    }

    #[test]
    fn substitution() {
        let q2 = q().pow(2);
        let sub = BTreeMap::from([(Symbol::Q, MomentPolynomial::one())]);
        assert_eq!(q2.substitute(&sub).unwrap(), MomentPolynomial::one());
        let lam_n = &MomentPolynomial::lambda() * &MomentPolynomial::n();
        let m = MomentPolynomial::m(0);
        assert_eq!(m.substitute_one(Symbol::M(0), lam_n.clone()).unwrap(), lam_n);
        let a = TraceAtom::shape(vec![Letter::plain(1), Letter::plain(1)]).unwrap();
        let p = MomentPolynomial::atom(a.clone()).scale(&rat(2));
        assert_eq!(p.substitute_one(Symbol::Atom(a), MomentPolynomial::int(4)).unwrap(), MomentPolynomial::int(8));
    }

    #[test]
    fn negative_powers() {
        let p = MomentPolynomial::power(Symbol::N, -2).scale(&rat(3));
        let got = p.substitute_one(Symbol::N, MomentPolynomial::int(2)).unwrap();
        assert_eq!(got, MomentPolynomial::constant(ratio(3, 4)));
        let sum = &MomentPolynomial::one() + &MomentPolynomial::n();
        assert!(matches!(p.substitute_one(Symbol::N, sum), Err(PolyError::NegativePowerOfSum(_))));
    }

    #[test]
    fn limits() {
        let inv_n = MomentPolynomial::power(Symbol::N, -1);
        let p = &MomentPolynomial::int(3) + &inv_n.scale(&rat(5));
        assert_eq!(p.limit_n_to_infinity().unwrap(), MomentPolynomial::int(3));
        let lead = &MomentPolynomial::lambda().pow(2) * &q().pow(4);
        let p = &lead + &(&MomentPolynomial::lambda().pow(3) * &inv_n).scale(&rat(2));
        assert_eq!(p.limit_n_to_infinity().unwrap(), lead);
        let bad = &MomentPolynomial::n() + &MomentPolynomial::one();
        assert_eq!(bad.limit_n_to_infinity(), Err(PolyError::Divergent(1)));
    }

    #[test]
    fn atom_canonical_forms() {
        let a = TraceAtom::shape(vec![Letter::plain(1), Letter::t(2)]).unwrap();
        let b = TraceAtom::shape(vec![Letter::plain(2), Letter::t(1)]).unwrap();
        assert_eq!(a, b);
        let c = TraceAtom::shape(vec![Letter::t(2), Letter::t(2)]).unwrap();
        assert_eq!(c.word(), &[Letter::plain(2), Letter::plain(2)]);
        let d = TraceAtom::shape(vec![Letter::t(1)]).unwrap();
        assert_eq!(d.to_string(), "tr(B1)");
        let e = TraceAtom::scale(&[2, 1, 2, 1]).unwrap();
        assert_eq!(e.to_string(), "tr(S1S2S1S2)");
        assert_eq!(TraceAtom::shape(vec![]), Err(PolyError::EmptyWord));
        // B B' is its own reversal-flip
        let f = TraceAtom::shape(vec![Letter::t(1), Letter::plain(1)]).unwrap();
        assert_eq!(f.word(), &[Letter::plain(1), Letter::t(1)]);
    }

    #[test]
    fn json_round_trip() {
        let a = TraceAtom::shape(vec![Letter::plain(1), Letter::t(1)]).unwrap();
        let p = &(&MomentPolynomial::atom(a) * &MomentPolynomial::power(Symbol::N, -1)).scale(&ratio(-3, 7))
            + &(&MomentPolynomial::m(2) * &q());
        let v = p.to_json();
        assert_eq!(MomentPolynomial::from_json(&v).unwrap(), p);
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.contains("\"coeff\":\"-3/7\""));
        assert!(text.contains("\"word\":[[1,false],[1,true]]"));
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("3/6"), Some(ratio(1, 2)));
        assert_eq!(parse_rational("-4"), Some(rat(-4)));
        assert_eq!(parse_rational("0.25"), Some(ratio(1, 4)));
        assert_eq!(parse_rational("-1.5"), Some(ratio(-3, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
        assert_eq!(format_rational(&rat(3)), "3/1");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn poly() -> impl Strategy<Value = MomentPolynomial> {
            let sym = prop_oneof![Just(Symbol::Q), Just(Symbol::Lambda), Just(Symbol::N), Just(Symbol::M(1))];
            let mono = proptest::collection::vec((sym, -2i32..4), 0..3);
            proptest::collection::vec((-5i64..6, 1i64..4, mono), 0..5).prop_map(|terms| {
                let mut p = MomentPolynomial::zero();
                for (a, b, m) in terms {
                    p.add_term(ratio(a, b), Monomial::from_powers(m));
                }
                p
            })
        }

        proptest! {
            #[test]
            fn ring_laws(a in poly(), b in poly(), c in poly()) {
                prop_assert_eq!(&a + &b, &b + &a);
                prop_assert_eq!(&a * &b, &b * &a);
                prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
                prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
                prop_assert!((&a - &a).is_zero());
            }

            #[test]
            fn json_round_trip(a in poly()) {
                prop_assert_eq!(MomentPolynomial::from_json(&a.to_json()).unwrap(), a);
            }

            #[test]
            fn substitution_is_a_homomorphism(a in poly(), b in poly(), v in poly()) {
                let sub = |p: &MomentPolynomial| p.substitute_one(Symbol::Q, v.clone());
                if let (Ok(sa), Ok(sb), Ok(sab)) = (sub(&a), sub(&b), sub(&(&a * &b))) {
                    prop_assert_eq!(sab, &sa * &sb);
                }
            }

            #[test]
            fn laurent_inverse(e in -4i32..5) {
                let x = MomentPolynomial::power(Symbol::N, e);
                prop_assert_eq!(&x * &x.inverse().unwrap(), MomentPolynomial::one());
            }
        }
    }
}
