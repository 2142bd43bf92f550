//! Graph matching at desk scale: an exact branch-and-bound solver for the
//! linearized quadratic matching problem with a quality-level stopping rule,
//! its topology-relaxed and continuous (Sinkhorn) relaxations, and a
//! blackbox-differentiation layer that makes any of these solvers trainable
//! inside a gradient-descent matching pipeline.
//!
//! Conventions used throughout:
//!
//! * pair tables are vectorized column-wise: node pair `(i, k)` sits at flat
//!   index `k * |V1| + i`, edge pairs likewise over the two edge-list orders;
//! * arcs are directed; undirected geometry is expanded into opposing arcs;
//! * score comparisons use an absolute tolerance of `1e-9`.

pub mod delaunay;
pub mod diff;
pub mod error;
pub mod gen;
pub mod graph;
pub mod io;
pub mod lap;
pub mod learn;
pub mod matrix;
pub mod reference;
pub mod score;
pub mod sinkhorn;
pub mod solver;

pub use diff::Lambda;
pub use error::{Error, Result};
pub use graph::{Assignment, AttributedGraph, MatchingInstance, Shape, TrainSample};
pub use matrix::Matrix;
pub use solver::{QualityLevel, SolverResult};
