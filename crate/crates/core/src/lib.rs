//! Exact trace moments of compound real Wishart and q-Wishart matrices.
//!
//! Moments are sums over pair partitions of `{±1, …, ±n}` combined with the
//! Brauer product; see [`moments`] for the finite-size formulas and
//! [`fluctuations`] for centered moments and their large-`N` limits.

pub mod fluctuations;
pub mod linalg;
pub mod moments;
pub mod montecarlo;
pub mod mp;
pub mod pairings;
pub mod polynomials;

pub use moments::{EngineOptions, MatrixBindings, MomentError, MomentValue, MonomialSpec, QParam};
pub use pairings::{Coloring, IntegerPartition, PairPartition, Permutation};
pub use polynomials::{MomentPolynomial, Symbol, TraceAtom};
