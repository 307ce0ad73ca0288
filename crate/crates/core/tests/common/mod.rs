#![allow(dead_code)]

use qwishart::MonomialSpec;

/// Ordered block lengths summing to `n`.
pub fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for mut rest in compositions(n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every consecutive-block spec on `n` positions with colors drawn from `1..=s`.
/// With `first_color_one`, specs that differ only by relabeling colors are
/// thinned out by forcing position 1 to color 1.
pub fn consecutive_specs(n: usize, s: usize, first_color_one: bool) -> Vec<MonomialSpec> {
    let mut out = Vec::new();
    let total = s.pow(n as u32);
    for lengths in compositions(n) {
        for code in 0..total {
            let mut c = code;
            let colors: Vec<usize> = (0..n)
                .map(|_| {
                    let x = c % s + 1;
                    c /= s;
                    x
                })
                .collect();
            if first_color_one && colors[0] != 1 {
                continue;
            }
            let mut words = Vec::new();
            let mut start = 0;
            for &l in &lengths {
                words.push(colors[start..start + l].to_vec());
                start += l;
            }
            out.push(MonomialSpec::new(words).unwrap());
        }
    }
    out
}
