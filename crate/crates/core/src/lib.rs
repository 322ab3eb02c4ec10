//! Solver for symmetric, positive-semidefinite, diagonally dominant (PSDDD)
//! linear systems `Ax = b` built on graph preconditioners.
//!
//! The pipeline: normalize the input to connected Laplacian systems
//! ([`reductions`]), build a spanning-tree-plus-augmentation preconditioner
//! with a congestion certificate bounding the preconditioned condition number
//! ([`akpw`], [`decompose`], [`precondition`], [`support`]), partially
//! factorize it in trim order ([`elimination`]), and run preconditioned
//! Chebyshev iteration ([`solver`]), optionally recursing on the reduced
//! system.

pub mod akpw;
pub mod decompose;
pub mod dense;
pub mod elimination;
pub mod error;
pub mod generate;
pub mod graph;
pub mod lca;
pub mod matrix;
pub mod precondition;
pub mod reductions;
pub mod solver;
pub mod support;

pub use error::{Error, Result};
pub use graph::{graph_of, laplacian_of, Edge, EdgeId, WeightedGraph};
pub use matrix::{Classification, SparseSymmetricMatrix};
pub use precondition::{precondition, PreconditionerGraph};
pub use reductions::{classify, gremban_cover, reduce, split_diagonal_excess, ReductionPlan};
pub use solver::{chebyshev, one_shot_solve, recursive_solve, ChebyshevConfig, RecursionPlan, SolveReport};
pub use support::{congestion_certificate, kappa_f_oracle, weighted_dilation, CongestionReport, WeightedEmbedding};
