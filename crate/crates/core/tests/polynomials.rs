use std::collections::BTreeMap;

use num_rational::BigRational;
use proptest::prelude::*;
use qwishart::linalg::{evaluate_atom, Matrix};
use qwishart::polynomials::{ratio, AtomKind, Letter, Monomial};
use qwishart::{MomentPolynomial, Symbol, TraceAtom};

fn rational_matrix(entries: Vec<(i64, i64)>) -> Matrix<BigRational> {
    Matrix::from_vec(3, 3, entries.into_iter().map(|(a, b)| ratio(a, b)).collect()).unwrap()
}

fn symmetric(m: &Matrix<BigRational>) -> Matrix<BigRational> {
    let mut s = m.clone();
    for i in 0..3 {
        for j in 0..3 {
            s.set(i, j, m.get(i, j) + m.get(j, i));
        }
    }
    s
}

fn matrices() -> impl Strategy<Value = Vec<Matrix<BigRational>>> {
    proptest::collection::vec(proptest::collection::vec((-4i64..5, 1i64..4), 9).prop_map(rational_matrix), 3)
}

fn word() -> impl Strategy<Value = Vec<Letter>> {
    proptest::collection::vec((1u16..=3, any::<bool>()), 1..6)
        .prop_map(|v| v.into_iter().map(|(color, transposed)| Letter { color, transposed }).collect())
}

fn raw_trace(word: &[Letter], mats: &[Matrix<BigRational>], honor_flags: bool) -> BigRational {
    let pick = |l: &Letter| {
        let m = mats[l.color as usize - 1].clone();
        if honor_flags && l.transposed {
            m.transpose()
        } else {
            m
        }
    };
    let mut acc = pick(&word[0]);
    for l in &word[1..] {
        acc = acc.matmul(&pick(l)).unwrap();
    }
    acc.trace()
}

fn poly() -> impl Strategy<Value = MomentPolynomial> {
    let sym = prop_oneof![Just(Symbol::Q), Just(Symbol::Lambda), Just(Symbol::N)];
    let mono = proptest::collection::vec((sym, 0i32..4), 0..3);
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
    fn canonicalization_is_idempotent(w in word(), shape in any::<bool>()) {
        let kind = if shape { AtomKind::Shape } else { AtomKind::Scale };
        let a = TraceAtom::new(kind, w).unwrap();
        let again = TraceAtom::new(kind, a.word().to_vec()).unwrap();
        prop_assert_eq!(&again, &a);
        let p = MomentPolynomial::atom(a.clone()).pow(2);
        prop_assert_eq!(MomentPolynomial::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn shape_atoms_keep_the_trace(w in word(), mats in matrices()) {
        let atom = TraceAtom::shape(w.clone()).unwrap();
        prop_assert_eq!(evaluate_atom(&atom, &mats).unwrap(), raw_trace(&w, &mats, true));
    }

    #[test]
    fn scale_atoms_keep_the_trace_of_symmetric_matrices(w in word(), mats in matrices()) {
        let sym: Vec<_> = mats.iter().map(symmetric).collect();
        let colors: Vec<u16> = w.iter().map(|l| l.color).collect();
        let atom = TraceAtom::scale(&colors).unwrap();
        prop_assert_eq!(evaluate_atom(&atom, &sym).unwrap(), raw_trace(&w, &sym, false));
    }

    #[test]
    fn substitute_then_evaluate(p in poly(), v in poly(), x in -3i32..4, y in -3i32..4) {
        let point = |n: f64| BTreeMap::from([(Symbol::Q, x as f64), (Symbol::Lambda, y as f64), (Symbol::N, n)]);
        let Some(vn) = v.eval_f64(&point(0.5)) else { return Ok(()) };
        let substituted = p.substitute_one(Symbol::N, v.clone()).unwrap();
        let (Some(a), Some(b)) = (substituted.eval_f64(&point(0.5)), p.eval_f64(&point(vn))) else { return Ok(()) };
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())), "{} vs {}", a, b);
    }
}

#[test]
fn transpose_reversal_merges_atoms() {
    let a = TraceAtom::shape(vec![Letter::plain(1), Letter::t(2)]).unwrap();
    let b = TraceAtom::shape(vec![Letter::plain(2), Letter::t(1)]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_string(), "tr(B1B2')");
    assert_eq!(TraceAtom::scale(&[2, 1, 1]).unwrap().to_string(), "tr(S1S1S2)");
}
