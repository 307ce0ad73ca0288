use proptest::prelude::*;
use qwishart::pairings::{
    double_factorial_odd, enumerate_all, enumerate_color_preserving, enumerate_connecting, Sign,
};
use qwishart::{Coloring, IntegerPartition, PairPartition, Permutation};

fn all_perms(n: usize) -> Vec<Permutation> {
    fn rec(n: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Permutation>) {
        if cur.len() == n {
            out.push(Permutation::from_images(cur).unwrap());
            return;
        }
        for a in 1..=n {
            if !used[a - 1] {
                used[a - 1] = true;
                cur.push(a);
                rec(n, cur, used, out);
                cur.pop();
                used[a - 1] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(n, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn signed(n: usize) -> impl Iterator<Item = i64> {
    (1..=n as i64).flat_map(|j| [j, -j])
}

#[test]
fn counts() {
    for n in 1..=7 {
        let all: Vec<_> = enumerate_all(n, false).unwrap().collect();
        assert_eq!(all.len() as u128, double_factorial_odd(n));
        let nc = all.iter().filter(|g| g.is_noncrossing()).count();
        let catalan = [1, 2, 5, 14, 42, 132, 429];
        assert_eq!(nc, catalan[n - 1]);
    }
    let t = Coloring::from_assignment(vec![1, 2, 1, 2]).unwrap();
    assert_eq!(enumerate_color_preserving(&t, false).unwrap().count(), 9);
}

#[test]
fn involution_and_pairs_round_trip() {
    for n in 1..=4 {
        for g in enumerate_all(n, false).unwrap() {
            for j in signed(n) {
                assert_eq!(g.partner(g.partner(j)), j);
                assert_ne!(g.partner(j), j);
            }
            assert_eq!(PairPartition::from_pairs(n, &g.pairs()).unwrap(), g);
        }
    }
}

#[test]
fn pi_bijection_small() {
    for n in 1..=4 {
        for a in all_perms(n) {
            let s = PairPartition::pi_inverse(&a);
            assert!(s.is_plus());
            assert_eq!(s.traverse().perm, a);
        }
        for g in enumerate_all(n, false).unwrap().filter(PairPartition::is_plus) {
            assert_eq!(PairPartition::pi_inverse(&g.traverse().perm), g);
        }
    }
}

#[test]
fn brauer_homomorphism_and_identity() {
    for n in 1..=4 {
        let perms = all_perms(n);
        for a in &perms {
            for b in &perms {
                let prod = PairPartition::pi_inverse(a).brauer(&PairPartition::pi_inverse(b)).unwrap();
                assert_eq!(prod.traverse().perm, a.compose(b));
            }
        }
    }
    for n in 1..=5 {
        let d = PairPartition::delta(n);
        for g in enumerate_all(n, false).unwrap() {
            assert_eq!(d.brauer(&g).unwrap(), g);
        }
    }
}

#[test]
fn sign_law() {
    for n in 1..=5 {
        for g in enumerate_all(n, false).unwrap() {
            let all_plus = g.traverse().signs.iter().all(|s| *s == Sign::Plus);
            assert_eq!(all_plus, g.is_plus(), "{g}");
        }
    }
}

#[test]
fn genus_per_component() {
    for n in 1..=5 {
        for lambda in IntegerPartition::all(n) {
            let sigma = PairPartition::sigma_from_partition(&lambda);
            for g in enumerate_all(n, false).unwrap() {
                let d = sigma.components_and_genus(&g).unwrap();
                let mut covered = 0;
                for c in &d.components {
                    let lhs = c.gamma_cycle_count + c.sigma_cycle_count + c.product_cycle_count;
                    assert!(lhs <= c.positions.len() + 2, "{sigma} {g}");
                    assert!(c.genus_defect >= 0);
                    covered += c.positions.len();
                }
                assert_eq!(covered, n);
                let total: usize = d.components.iter().map(|c| c.gamma_cycle_count).sum();
                assert_eq!(total, g.cycle_count());
            }
        }
    }
}

#[test]
fn enumeration_is_deterministic() {
    let t = Coloring::from_assignment(vec![1, 2, 1, 1, 2, 2]).unwrap();
    let a: Vec<_> = enumerate_color_preserving(&t, false).unwrap().collect();
    let b: Vec<_> = enumerate_color_preserving(&t, false).unwrap().collect();
    assert_eq!(a, b);
    let sigma = PairPartition::sigma_from_blocks(&[2, 2, 2]).unwrap();
    let c: Vec<_> = enumerate_connecting(&t, &sigma, false).unwrap().collect();
    let d: Vec<_> = enumerate_connecting(&t, &sigma, false).unwrap().collect();
    assert_eq!(c, d);
    assert!(c.len() < a.len());
}

#[test]
fn enumeration_bound() {
    assert!(enumerate_all(10, false).is_err());
    assert!(enumerate_all(10, true).is_ok());
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
    Just((1..=n).collect::<Vec<_>>()).prop_shuffle().prop_map(|v| Permutation::from_images(&v).unwrap())
}

fn pairs_strategy(n: usize) -> impl Strategy<Value = PairPartition> {
    Just(signed(n).collect::<Vec<_>>()).prop_shuffle().prop_map(move |v| {
        let pairs: Vec<(i64, i64)> = v.chunks(2).map(|c| (c[0], c[1])).collect();
        PairPartition::from_pairs(n, &pairs).unwrap()
    })
}

proptest! {
    #[test]
    fn random_involutions(g in (1usize..=10).prop_flat_map(pairs_strategy)) {
        for j in signed(g.n()) {
            prop_assert_eq!(g.partner(g.partner(j)), j);
        }
    }

    #[test]
    fn random_pi_bijection(a in (1usize..=8).prop_flat_map(perm_strategy)) {
        let s = PairPartition::pi_inverse(&a);
        prop_assert_eq!(&s.traverse().perm, &a);
        prop_assert_eq!(PairPartition::pi_inverse(&s.traverse().perm), s);
    }
}
