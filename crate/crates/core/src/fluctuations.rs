//! Centered moments of products of traces for q-orthogonal q-Wishart matrices
//! with `B = I_M`, `Σ = (1/N)·I_N`, and their limits as `N → ∞` with `M/N → λ`.

use std::collections::{BTreeMap, HashMap};

use num_rational::BigRational;
use serde_json::{json, Value};
use thiserror::Error;

use crate::moments::{for_each_split, EngineOptions, MomentError, MonomialSpec, QParam};
use crate::pairings::{enumerate_color_preserving, DiagramScratch, PairingError, SigmaInfo, DEFAULT_MAX_N};
use crate::polynomials::{rational_from_json, MomentPolynomial, PolyError, Symbol};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluctuationError {
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("invalid statistic: {0}")]
    InvalidStatistic(String),
    #[error("expansion needs n = {n}, above the enumeration bound {bound}")]
    BoundExceeded { n: usize, bound: usize },
    #[error("negative genus defect {0} found; the diagram analysis is inconsistent")]
    NegativeGenus(i32),
    #[error("limit still depends on N")]
    ResidualN,
}

/// Aggregated `(crossings, #C(γ), #C(σ⊚γ) − n)` counts over `F_n(t, σ)`.
pub type FiniteCounts = BTreeMap<(u32, u32, i32), u64>;

/// Counts over `F_n(t, σ)` with every component a genus-zero pair of σ-cycles.
pub type LimitCounts = BTreeMap<(u32, u32), u64>;

struct Tally {
    finite: HashMap<(u32, u32, i32), u64>,
    limit: HashMap<(u32, u32), u64>,
    scratch: DiagramScratch,
    negative: Option<i32>,
}

fn tally(spec: &MonomialSpec, opts: &EngineOptions, want_finite: bool) -> Result<(FiniteCounts, LimitCounts), FluctuationError> {
    if !spec.is_consecutive() {
        return Err(MomentError::ShapeViolation.into());
    }
    let n = spec.n();
    let info = SigmaInfo::new(spec.sigma());
    let iter = enumerate_color_preserving(spec.coloring(), opts.allow_large_n)?;
    let parts = for_each_split(
        iter,
        opts.threads,
        || Tally { finite: HashMap::new(), limit: HashMap::new(), scratch: DiagramScratch::new(n), negative: None },
        |acc, gamma| {
            acc.scratch.connect(&info, gamma);
            if !acc.scratch.connects_all() {
                return;
            }
            acc.scratch.count_cycles(&info, gamma);
            let sc = &acc.scratch;
            let cr = crate::pairings::raw::crossings(gamma);
            let cg = sc.total_gamma_cycles as u32;
            if want_finite {
                let e = sc.total_beta_cycles as i32 - n as i32;
                *acc.finite.entry((cr, cg, e)).or_insert(0) += 1;
            }
            let mut kept = true;
            for u in 0..sc.components {
                let h = sc.genus_defect(u);
                if h < 0 {
                    acc.negative = Some(h);
                }
                if h != 0 || sc.sigma_cycles[u] != 2 {
                    kept = false;
                }
            }
            debug_assert!(kept || (0..sc.components).any(|u| sc.sigma_cycles[u] > 2 || sc.genus_defect(u) > 0));
            if kept {
                *acc.limit.entry((cr, cg)).or_insert(0) += 1;
            }
        },
    );
    let mut finite = FiniteCounts::new();
    let mut limit = LimitCounts::new();
    for part in parts {
        if let Some(h) = part.negative {
            return Err(FluctuationError::NegativeGenus(h));
        }
        for (k, c) in part.finite {
            *finite.entry(k).or_insert(0) += c;
        }
        for (k, c) in part.limit {
            *limit.entry(k).or_insert(0) += c;
        }
    }
    Ok((finite, limit))
}

/// Raw counts behind [`centered_moment_finite`].
pub fn finite_counts(spec: &MonomialSpec, opts: &EngineOptions) -> Result<FiniteCounts, FluctuationError> {
    Ok(tally(spec, opts, true)?.0)
}

/// Raw counts behind [`centered_moment_limit`].
pub fn limit_counts(spec: &MonomialSpec, opts: &EngineOptions) -> Result<LimitCounts, FluctuationError> {
    Ok(tally(spec, opts, false)?.1)
}

/// `τ(∏_u (T_u − τT_u))` for the trace factors `T_u` of the spec:
/// `Σ_{γ ∈ F_n(t,σ)} q^{cr(γ)} M^{#C(γ)} N^{#C(σ⊚γ) − n}`.
pub fn centered_moment_finite(
    spec: &MonomialSpec,
    m: &MomentPolynomial,
    n_dim: &MomentPolynomial,
    q: &QParam,
    opts: &EngineOptions,
) -> Result<MomentPolynomial, FluctuationError> {
    let counts = finite_counts(spec, opts)?;
    let mut total = MomentPolynomial::zero();
    for ((cr, cg, e), count) in counts {
        let term = &(&q.power(cr) * &m.pow(cg)) * &n_dim.pow_i(e)?;
        total += &term.scale(&BigRational::from_integer(count.into()));
    }
    Ok(total)
}

/// Limit of a centered moment in the symbols `q` and `λ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LimitMoment {
    pub value: MomentPolynomial,
}

impl LimitMoment {
    pub fn new(value: MomentPolynomial) -> Result<Self, FluctuationError> {
        if value.contains(&Symbol::N) {
            return Err(FluctuationError::ResidualN);
        }
        Ok(LimitMoment { value })
    }
}

/// `lim τ(∏_u (T_u − τT_u))`: only `γ` joining the σ-cycles in pairs with
/// every component of genus defect zero survive, each weighted `q^{cr(γ)} λ^{#C(γ)}`.
pub fn centered_moment_limit(spec: &MonomialSpec, q: &QParam, opts: &EngineOptions) -> Result<LimitMoment, FluctuationError> {
    let counts = limit_counts(spec, opts)?;
    let lambda = MomentPolynomial::lambda();
    let mut total = MomentPolynomial::zero();
    for ((cr, cg), count) in counts {
        let term = &q.power(cr) * &lambda.pow(cg);
        total += &term.scale(&BigRational::from_integer(count.into()));
    }
    LimitMoment::new(total)
}

/// `Σ_u a_u·tr(∏ W_{word_u})` with coefficients in `q, λ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialStatistic {
    terms: Vec<(MomentPolynomial, Vec<usize>)>,
}

impl PolynomialStatistic {
    pub fn new(terms: Vec<(MomentPolynomial, Vec<usize>)>) -> Result<Self, FluctuationError> {
        if terms.is_empty() {
            return Err(FluctuationError::InvalidStatistic("no terms".into()));
        }
        for (c, w) in &terms {
            if w.is_empty() || w.contains(&0) {
                return Err(FluctuationError::InvalidStatistic("words must be nonempty lists of colors ≥ 1".into()));
            }
            if c.contains(&Symbol::N) || c.terms().any(|(m, _)| m.powers().iter().any(|(s, _)| matches!(s, Symbol::M(_) | Symbol::Atom(_)))) {
                return Err(FluctuationError::InvalidStatistic("coefficients may only involve q and lambda".into()));
            }
        }
        Ok(PolynomialStatistic { terms })
    }

    /// Single term `tr(∏ W_{word})`.
    pub fn monomial(word: Vec<usize>) -> Self {
        Self::new(vec![(MomentPolynomial::one(), word)]).expect("nonempty word")
    }

    pub fn terms(&self) -> &[(MomentPolynomial, Vec<usize>)] {
        &self.terms
    }

    pub fn colors(&self) -> usize {
        self.terms.iter().flat_map(|(_, w)| w.iter().copied()).max().unwrap_or(0)
    }

    pub fn max_word_len(&self) -> usize {
        self.terms.iter().map(|(_, w)| w.len()).max().unwrap_or(0)
    }

    /// The same statistic on colors `c + offset`.
    pub fn shifted(&self, offset: usize) -> Self {
        PolynomialStatistic {
            terms: self.terms.iter().map(|(c, w)| (c.clone(), w.iter().map(|x| x + offset).collect())).collect(),
        }
    }

    pub fn scaled(&self, c: &BigRational) -> Self {
        PolynomialStatistic { terms: self.terms.iter().map(|(a, w)| (a.scale(c), w.clone())).collect() }
    }

    /// Concatenation of the term lists.
    pub fn plus(&self, other: &PolynomialStatistic) -> Self {
        PolynomialStatistic { terms: self.terms.iter().chain(&other.terms).cloned().collect() }
    }

    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> = self
            .terms
            .iter()
            .map(|(c, w)| {
                let coeff = match c.as_constant() {
                    Some(r) => json!(crate::polynomials::format_rational(&r)),
                    None => json!({ "poly": c.to_json() }),
                };
                json!({ "coeff": coeff, "word": w })
            })
            .collect();
        json!({ "terms": terms })
    }

    pub fn from_json(v: &Value) -> Result<Self, FluctuationError> {
        let bad = |m: &str| FluctuationError::InvalidStatistic(m.into());
        let terms = v.get("terms").and_then(Value::as_array).ok_or_else(|| bad("expected {\"terms\":[…]}"))?;
        let mut out = Vec::with_capacity(terms.len());
        for t in terms {
            let c = t.get("coeff").ok_or_else(|| bad("term without coeff"))?;
            let coeff = match c.get("poly") {
                Some(p) => MomentPolynomial::from_json(p)?,
                None => MomentPolynomial::constant(rational_from_json(c).ok_or_else(|| bad("coeff must be a rational or {\"poly\":…}"))?),
            };
            let word = t.get("word").and_then(Value::as_array).ok_or_else(|| bad("term without word"))?;
            let word: Option<Vec<usize>> = word.iter().map(|x| x.as_u64().map(|x| x as usize)).collect();
            out.push((coeff, word.ok_or_else(|| bad("word must be a list of colors"))?));
        }
        Self::new(out)
    }
}

/// Memoized limits of centered monomials, keyed up to cyclic rotation of the blocks.
#[derive(Default)]
pub struct LimitCache {
    values: HashMap<Vec<Vec<usize>>, MomentPolynomial>,
}

impl LimitCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(&mut self, blocks: &[Vec<usize>], q: &QParam, opts: &EngineOptions) -> Result<MomentPolynomial, FluctuationError> {
        let r = blocks.len();
        let key = (0..r)
            .map(|k| blocks[k..].iter().chain(&blocks[..k]).cloned().collect::<Vec<_>>())
            .min()
            .expect("at least one block");
        if let Some(v) = self.values.get(&key) {
            return Ok(v.clone());
        }
        let spec = MonomialSpec::new(key.clone())?;
        let v = centered_moment_limit(&spec, q, opts)?.value;
        self.values.insert(key, v.clone());
        Ok(v)
    }
}

/// `lim τ(∏_k (X_k − τX_k))` for factors `X_k = Σ a·tr(word)`, expanded multilinearly.
pub fn mixed_limit(
    factors: &[&PolynomialStatistic],
    q: &QParam,
    opts: &EngineOptions,
    cache: &mut LimitCache,
) -> Result<MomentPolynomial, FluctuationError> {
    if factors.is_empty() {
        return Ok(MomentPolynomial::one());
    }
    let n_max: usize = factors.iter().map(|f| f.max_word_len()).sum();
    if !opts.allow_large_n && n_max > DEFAULT_MAX_N {
        return Err(FluctuationError::BoundExceeded { n: n_max, bound: DEFAULT_MAX_N });
    }
    let mut total = MomentPolynomial::zero();
    let mut choice = vec![0usize; factors.len()];
    loop {
        let mut coeff = MomentPolynomial::one();
        let mut blocks = Vec::with_capacity(factors.len());
        for (f, &k) in factors.iter().zip(&choice) {
            let (a, w) = &f.terms()[k];
            coeff *= a;
            blocks.push(w.clone());
        }
        if !coeff.is_zero() {
            total += &(&coeff * &cache.get(&blocks, q, opts)?);
        }
        let mut i = 0;
        loop {
            if i == factors.len() {
                return Ok(total);
            }
            choice[i] += 1;
            if choice[i] < factors[i].terms().len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Limits `lim τ(X^m)` for `X = Q − τ(Q)`, orders `2..=max_order`.
pub fn statistic_limit_moments(
    stat: &PolynomialStatistic,
    max_order: usize,
    q: &QParam,
    opts: &EngineOptions,
) -> Result<Vec<(usize, LimitMoment)>, FluctuationError> {
    let n_max = max_order * stat.max_word_len();
    if !opts.allow_large_n && n_max > DEFAULT_MAX_N {
        return Err(FluctuationError::BoundExceeded { n: n_max, bound: DEFAULT_MAX_N });
    }
    let mut cache = LimitCache::new();
    let mut out = Vec::new();
    for m in 2..=max_order {
        let factors = vec![stat; m];
        out.push((m, LimitMoment::new(mixed_limit(&factors, q, opts, &mut cache)?)?));
    }
    Ok(out)
}

/// `lim [τ((X−Y)²(X+Y)^m) − 2τ(X²)τ((X+Y)^m)]` where `Y` is the statistic on
/// fresh q-orthogonal colors `s+1..2s`. Zero when the conditional variance of
/// `X` given `X+Y` is deterministic.
pub fn conditional_variance_check(
    stat: &PolynomialStatistic,
    m: usize,
    q: &QParam,
    opts: &EngineOptions,
) -> Result<MomentPolynomial, FluctuationError> {
    let y = stat.shifted(stat.colors());
    let diff = stat.plus(&y.scaled(&BigRational::from_integer((-1).into())));
    let sum = stat.plus(&y);
    let mut cache = LimitCache::new();
    let mut lhs_factors = vec![&diff, &diff];
    lhs_factors.extend(std::iter::repeat_n(&sum, m));
    let lhs = mixed_limit(&lhs_factors, q, opts, &mut cache)?;
    let var = mixed_limit(&[stat, stat], q, opts, &mut cache)?;
    let sums = vec![&sum; m];
    let tail = mixed_limit(&sums, q, opts, &mut cache)?;
    Ok(&lhs - &(&var * &tail).scale(&BigRational::from_integer(2.into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomials::rat;

    fn spec(words: &[&[usize]]) -> MonomialSpec {
        MonomialSpec::new(words.iter().map(|w| w.to_vec()).collect()).unwrap()
    }

    fn o() -> EngineOptions {
        EngineOptions::default()
    }

    #[test]
    fn first_centered_moment_vanishes() {
        let got = centered_moment_finite(&spec(&[&[1]]), &MomentPolynomial::m(0), &MomentPolynomial::n(), &QParam::Symbolic, &o()).unwrap();
        assert!(got.is_zero());
    }

    #[test]
    fn variance_of_trace() {
        let (m, n) = (MomentPolynomial::m(0), MomentPolynomial::n());
        let got = centered_moment_finite(&spec(&[&[1], &[1]]), &m, &n, &QParam::Symbolic, &o()).unwrap();
        let one_q = &MomentPolynomial::one() + &MomentPolynomial::q();
        assert_eq!(got, &(&one_q * &m) * &MomentPolynomial::power(Symbol::N, -1));
        let lim = centered_moment_limit(&spec(&[&[1], &[1]]), &QParam::Symbolic, &o()).unwrap();
        assert_eq!(lim.value, &one_q * &MomentPolynomial::lambda());
    }

    #[test]
    fn odd_blocks_vanish() {
        let lim = centered_moment_limit(&spec(&[&[1], &[1], &[1]]), &QParam::Symbolic, &o()).unwrap();
        assert!(lim.value.is_zero());
    }

    #[test]
    fn statistic_json_round_trip() {
        let a = &MomentPolynomial::one() + &MomentPolynomial::lambda().scale(&rat(2));
        let st = PolynomialStatistic::new(vec![(MomentPolynomial::one(), vec![1, 1]), (-a, vec![1])]).unwrap();
        assert_eq!(PolynomialStatistic::from_json(&st.to_json()).unwrap(), st);
        let v: Value = serde_json::from_str(r#"{"terms":[{"coeff":"1","word":[1]}]}"#).unwrap();
        assert_eq!(PolynomialStatistic::from_json(&v).unwrap(), PolynomialStatistic::monomial(vec![1]));
        assert!(PolynomialStatistic::new(vec![(MomentPolynomial::n(), vec![1])]).is_err());
    }

    #[test]
    fn bound_checked() {
        let st = PolynomialStatistic::monomial(vec![1, 2]);
        assert!(matches!(
            statistic_limit_moments(&st, 5, &QParam::Symbolic, &o()),
            Err(FluctuationError::BoundExceeded { n: 10, .. })
        ));
    }

    #[test]
    fn conditional_variance_m0() {
        let st = PolynomialStatistic::monomial(vec![1]);
        assert!(conditional_variance_check(&st, 0, &QParam::Symbolic, &o()).unwrap().is_zero());
    }

    fn qp(c: &[i64]) -> MomentPolynomial {
        MomentPolynomial::from_q_coefficients(&c.iter().map(|&x| rat(x)).collect::<Vec<_>>())
    }

    #[test]
    fn trace_limit_moments() {
        let st = PolynomialStatistic::monomial(vec![1]);
        let got = statistic_limit_moments(&st, 6, &QParam::Symbolic, &o()).unwrap();
        let s2 = &qp(&[1, 1]) * &MomentPolynomial::lambda();
        assert_eq!(got[0].1.value, s2);
        assert!(got[1].1.value.is_zero());
        assert_eq!(got[2].1.value, &qp(&[2, 0, 0, 0, 1]) * &s2.pow(2));
        assert!(got[3].1.value.is_zero());
        let c6 = qp(&[5, 0, 0, 0, 6, 0, 0, 0, 3, 0, 0, 0, 1]);
        assert_eq!(got[4].1.value, &c6 * &s2.pow(3));
    }

    #[test]
    fn threads_agree() {
        let s = spec(&[&[1, 2], &[1, 2], &[2, 1]]);
        let one = finite_counts(&s, &o()).unwrap();
        let many = finite_counts(&s, &EngineOptions { threads: 3, ..o() }).unwrap();
        assert_eq!(one, many);
    }
}
