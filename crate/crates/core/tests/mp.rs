use std::collections::BTreeSet;

use qwishart::mp::{compound_mp_moment, nc_partitions, verify_t3, SpectralMeasure};
use qwishart::pairings::enumerate_all;
use qwishart::polynomials::{rat, ratio};
use qwishart::{PairPartition, Permutation};

#[test]
fn nc_image_is_a_bijection() {
    for n in 1..=6 {
        let images: Vec<_> = enumerate_all(n, false)
            .unwrap()
            .filter(PairPartition::is_noncrossing)
            .map(|g| {
                for c in g.traverse().perm.canonical_cycles() {
                    let top = c.iter().position(|&x| x == *c.iter().max().unwrap()).unwrap();
                    let from_top: Vec<usize> = c[top..].iter().chain(&c[..top]).copied().collect();
                    assert!(from_top.windows(2).all(|w| w[0] > w[1]), "{g}");
                }
                g.nc_image().unwrap()
            })
            .collect();
        let distinct: BTreeSet<_> = images.iter().cloned().collect();
        assert_eq!(distinct.len(), images.len());
        let expected: BTreeSet<_> = nc_partitions(n).unwrap().into_iter().collect();
        assert_eq!(distinct, expected);
    }
}

#[test]
fn geodesic_condition() {
    for n in 1..=6 {
        let rho = Permutation::full_cycle(n);
        for g in enumerate_all(n, false).unwrap().filter(PairPartition::is_noncrossing) {
            let alpha = g.traverse().perm;
            assert_eq!(rho.compose(&alpha).cycle_count() + alpha.cycle_count(), n + 1);
        }
    }
}

#[test]
fn catalan_through_ten() {
    let one = SpectralMeasure::from_eigenvalues(&[rat(1)]).unwrap().moments(10);
    let catalan = [1, 2, 5, 14, 42, 132, 429, 1430, 4862, 16796];
    for n in 1..=10 {
        assert_eq!(compound_mp_moment(&rat(1), &one, n).unwrap(), rat(catalan[n - 1]));
    }
}

#[test]
fn finite_n_representation() {
    let r = verify_t3(&[rat(1), rat(1)], 3, 4).unwrap();
    assert!(r.all_equal());
    let lambda = ratio(2, 3);
    assert_eq!(r.rows[1].compound_mp, &lambda + &lambda * &lambda);
    assert!(verify_t3(&[rat(1), rat(4)], 2, 4).unwrap().all_equal());
    assert!(verify_t3(&[rat(1)], 1, 4).unwrap().all_equal());
    assert!(verify_t3(&[rat(0)], 1, 2).is_err());
}
