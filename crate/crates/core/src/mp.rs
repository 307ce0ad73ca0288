//! Non-crossing partitions and compound Marchenko–Pastur moments.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::moments::{q_wishart_moment, ColorMatrices, MatrixBindings, MomentError, MonomialSpec, QParam};
use crate::polynomials::rat;

/// Largest `n` accepted by the non-crossing enumerators.
pub const NC_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpError {
    #[error("n = {0} is outside 1..=12")]
    OutOfRange(usize),
    #[error("blocks do not partition 1..{0}")]
    NotAPartition(usize),
    #[error("spectral measure needs at least one atom with positive masses summing to 1")]
    InvalidMeasure,
    #[error("eigenvalues must be positive")]
    NonPositiveEigenvalue,
    #[error(transparent)]
    Moment(#[from] MomentError),
}

/// A partition of `{1..n}` with blocks sorted internally and by their minima.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self, MpError> {
        let mut seen = vec![false; n];
        let mut blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        for b in &blocks {
            if b.is_empty() {
                return Err(MpError::NotAPartition(n));
            }
            for &i in b {
                if i == 0 || i > n || seen[i - 1] {
                    return Err(MpError::NotAPartition(n));
                }
                seen[i - 1] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(MpError::NotAPartition(n));
        }
        blocks.sort_unstable();
        Ok(SetPartition { n, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// No `a < b < c < d` with `a, c` in one block and `b, d` in another.
    pub fn is_noncrossing(&self) -> bool {
        let mut label = vec![0usize; self.n + 1];
        for (k, b) in self.blocks.iter().enumerate() {
            for &i in b {
                label[i] = k;
            }
        }
        let n = self.n;
        for a in 1..=n {
            for b in a + 1..=n {
                if label[a] == label[b] {
                    continue;
                }
                for c in b + 1..=n {
                    if label[c] != label[a] {
                        continue;
                    }
                    if (c + 1..=n).any(|d| label[d] == label[b]) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// All non-crossing partitions of `{1..n}` in a deterministic order.
///
/// Elements are placed left to right; element `i` either opens a block or
/// joins an open block, which closes every block opened after it.
pub fn nc_partitions(n: usize) -> Result<Vec<SetPartition>, MpError> {
    if n == 0 || n > NC_MAX_N {
        return Err(MpError::OutOfRange(n));
    }
    fn rec(i: usize, n: usize, blocks: &mut Vec<Vec<usize>>, open: &mut Vec<usize>, out: &mut Vec<SetPartition>) {
        if i > n {
            out.push(SetPartition::from_blocks(n, blocks.clone()).expect("valid by construction"));
            return;
        }
        blocks.push(vec![i]);
        open.push(blocks.len() - 1);
        rec(i + 1, n, blocks, open, out);
        open.pop();
        blocks.pop();
        for k in (0..open.len()).rev() {
            let saved: Vec<usize> = open.drain(k + 1..).collect();
            let b = open[k];
            blocks[b].push(i);
            rec(i + 1, n, blocks, open, out);
            blocks[b].pop();
            open.extend(saved);
        }
    }
    let mut out = Vec::new();
    rec(1, n, &mut Vec::new(), &mut Vec::new(), &mut out);
    Ok(out)
}

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpectralMeasure {
    atoms: Vec<(BigRational, BigRational)>,
}

impl SpectralMeasure {
    /// Atoms given as `(location, mass)`.
    pub fn new(atoms: Vec<(BigRational, BigRational)>) -> Result<Self, MpError> {
        let total: BigRational = atoms.iter().map(|(_, m)| m.clone()).sum();
        if atoms.is_empty() || atoms.iter().any(|(_, m)| *m <= BigRational::zero()) || !total.is_one() {
            return Err(MpError::InvalidMeasure);
        }
        Ok(SpectralMeasure { atoms })
    }

    /// Mass `1/M` at each listed eigenvalue.
    pub fn from_eigenvalues(eigenvalues: &[BigRational]) -> Result<Self, MpError> {
        if eigenvalues.is_empty() {
            return Err(MpError::InvalidMeasure);
        }
        let mut merged: BTreeMap<BigRational, BigRational> = BTreeMap::new();
        let w = BigRational::new(1.into(), eigenvalues.len().into());
        for e in eigenvalues {
            *merged.entry(e.clone()).or_insert_with(BigRational::zero) += &w;
        }
        Self::new(merged.into_iter().collect())
    }

    pub fn atoms(&self) -> &[(BigRational, BigRational)] {
        &self.atoms
    }

    /// `∫ xᵏ ν(dx)`
    pub fn moment(&self, k: usize) -> BigRational {
        self.atoms.iter().map(|(x, m)| num_traits::pow(x.clone(), k) * m).sum()
    }

    pub fn moments(&self, up_to: usize) -> Vec<BigRational> {
        (0..=up_to).map(|k| self.moment(k)).collect()
    }
}

/// `Σ_{V ∈ NC(n)} λ^{#V} ∏_{blocks} m_{|block|}` with `moments[k]` the k-th moment of ν.
pub fn compound_mp_moment(lambda: &BigRational, moments: &[BigRational], n: usize) -> Result<BigRational, MpError> {
    if moments.len() <= n {
        return Err(MpError::InvalidMeasure);
    }
    let mut total = BigRational::zero();
    for v in nc_partitions(n)? {
        let mut term = num_traits::pow(lambda.clone(), v.block_count());
        for b in v.blocks() {
            term *= &moments[b.len()];
        }
        total += term;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpCheckRow {
    pub n: usize,
    /// `N⁻ⁿ·τ(tr Wⁿ)/N` at `q = 0`, from the q-Wishart moment formula
    pub wishart: BigRational,
    /// compound Marchenko–Pastur moment
    pub compound_mp: BigRational,
}

impl MpCheckRow {
    pub fn equal(&self) -> bool {
        self.wishart == self.compound_mp
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpCheckReport {
    pub m: usize,
    pub n_dim: usize,
    pub lambda: BigRational,
    pub rows: Vec<MpCheckRow>,
}

impl MpCheckReport {
    pub fn all_equal(&self) -> bool {
        self.rows.iter().all(MpCheckRow::equal)
    }

    pub fn first_mismatch(&self) -> Option<usize> {
        self.rows.iter().find(|r| !r.equal()).map(|r| r.n)
    }
}

/// Compares the normalized q = 0 Wishart moments with `B = diag(eigenvalues)`,
/// `Σ = I_N` against the compound Marchenko–Pastur moments with `λ = M/N`.
pub fn verify_t3(eigenvalues: &[BigRational], n_dim: usize, n_max: usize) -> Result<MpCheckReport, MpError> {
    if eigenvalues.iter().any(|e| *e <= BigRational::zero()) {
        return Err(MpError::NonPositiveEigenvalue);
    }
    if n_max == 0 || n_max > NC_MAX_N {
        return Err(MpError::OutOfRange(n_max));
    }
    let m = eigenvalues.len();
    let nu = SpectralMeasure::from_eigenvalues(eigenvalues)?;
    let lambda = BigRational::new(m.into(), n_dim.into());
    let moments = nu.moments(n_max);
    let bindings = MatrixBindings::exact(vec![ColorMatrices {
        b: Matrix::diagonal(eigenvalues),
        sigma: Matrix::identity(n_dim),
    }]);
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let spec = MonomialSpec::new(vec![vec![1; n]])?;
        let raw = q_wishart_moment(&spec, &bindings, &QParam::Value(rat(0)), &Default::default())?;
        let raw = raw.into_exact().expect("exact bindings give exact values");
        let value = raw.as_constant().expect("numeric q gives a number");
        let wishart = value / num_traits::pow(BigRational::from_integer(n_dim.into()), n + 1);
        rows.push(MpCheckRow { n, wishart, compound_mp: compound_mp_moment(&lambda, &moments, n)? });
    }
    Ok(MpCheckReport { m, n_dim, lambda, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomials::ratio;

    #[test]
    fn nc_counts() {
        let catalan = [1, 2, 5, 14, 42, 132, 429, 1430];
        for n in 1..=8 {
            let all = nc_partitions(n).unwrap();
            assert_eq!(all.len(), catalan[n - 1]);
            assert!(all.iter().all(SetPartition::is_noncrossing));
            let mut sorted = all.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), all.len());
        }
        assert!(nc_partitions(0).is_err());
        assert!(nc_partitions(13).is_err());
    }

    #[test]
    fn crossing_partition_detected() {
        let p = SetPartition::from_blocks(4, vec![vec![1, 3], vec![2, 4]]).unwrap();
        assert!(!p.is_noncrossing());
        let p = SetPartition::from_blocks(4, vec![vec![1, 4], vec![2, 3]]).unwrap();
        assert!(p.is_noncrossing());
    }

    #[test]
    fn mp_moments_small() {
        let one = SpectralMeasure::from_eigenvalues(&[rat(1)]).unwrap().moments(10);
        let catalan = [1, 2, 5, 14, 42, 132, 429, 1430, 4862, 16796];
        for n in 1..=10 {
            assert_eq!(compound_mp_moment(&rat(1), &one, n).unwrap(), rat(catalan[n - 1]));
        }
        let l = ratio(2, 3);
        assert_eq!(compound_mp_moment(&l, &one, 2).unwrap(), &l + &l * &l);
        let ab = vec![rat(1), rat(3), rat(7)];
        assert_eq!(compound_mp_moment(&l, &ab, 2).unwrap(), &l * rat(7) + &l * &l * rat(9));
    }

    #[test]
    fn measure_validation() {
        assert!(SpectralMeasure::new(vec![(rat(1), ratio(1, 2))]).is_err());
        let nu = SpectralMeasure::from_eigenvalues(&[rat(1), rat(4)]).unwrap();
        assert_eq!(nu.moment(1), ratio(5, 2));
    }

    #[test]
    fn t3_small() {
        let report = verify_t3(&[rat(1)], 1, 4).unwrap();
        assert!(report.all_equal(), "{report:?}");
        assert_eq!(report.rows[3].wishart, rat(14));
    }
}
