//! Exact probability engine for finite alphabets.
//!
//! Everything downstream works with three value types: [`Alphabet`] (a named
//! finite symbol set), [`JointDist`] (a dense probability tensor with one
//! axis per alphabet, axes kept in canonical name order), and [`Kernel`] (a
//! conditional distribution, one stochastic row per conditioning tuple).
//! Information measures are computed exactly by tensor contraction and are
//! reported in bits.
//!
//! Values are immutable after construction and safe to share across threads.

mod dist;
mod info;
mod rng;
mod typicality;

pub use dist::{Alphabet, JointDist, Kernel};
pub use info::{entropy, kl_divergence, mutual_information, total_variation};
pub use rng::{indexed_u64, inv_cdf, sample_joint, sample_kernel_row, stream_rng};
pub use typicality::{empirical_dist, is_typical};

use thiserror::Error;

/// Tolerance for normalization checks on distributions and kernel rows.
pub const MASS_TOL: f64 = 1e-12;

/// Hard cap on the number of cells of any dense joint tensor.
pub const MAX_CELLS: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum ProbError {
    #[error("axis `{0}` not found")]
    AxisNotFound(String),
    #[error("duplicate axis `{0}`")]
    DuplicateAxis(String),
    #[error("axis sets mismatch: {0}")]
    AxisMismatch(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("mass not normalized: total {total} differs from 1 by more than {}", MASS_TOL)]
    NotNormalized { total: f64 },
    #[error("negative mass {value} at cell {cell}")]
    NegativeMass { cell: usize, value: f64 },
    #[error("tensor would have {cells} cells, above the cap {}", MAX_CELLS)]
    CapExceeded { cells: usize },
    #[error("divergence infinite: p has mass {p} on cell {cell} where q is zero")]
    DivergenceInfinite { cell: usize, p: f64 },
    #[error("conditioning on a zero-probability event")]
    ZeroEvent,
    #[error("kernel row {row} is unreachable (all-zero) but receives mass {mass}")]
    UnreachableRow { row: usize, mass: f64 },
}

pub type Result<T> = std::result::Result<T, ProbError>;
