//! Upper and lower bounds on the joint spectral radius of a finite set of
//! matrices, computed through sum-of-squares relaxations that exploit term
//! sparsity in the certificate polynomials.
//!
//! The pipeline: a matrix set (`matio`) is turned into a parametric
//! feasibility program over Gram matrices (`poly`, `basis`, `tsgraph`,
//! `sosprog`), solved by an interior-point method (`sdpsolve`), and driven by
//! bisection on the contraction factor (`driver`). Lower bounds come from
//! spectral radii of finite matrix products (`spectral`).

pub mod basis;
pub mod cli;
pub mod driver;
pub mod matio;
pub mod poly;
pub mod rng;
pub mod sdpsolve;
pub mod sosprog;
pub mod spectral;
pub mod tsgraph;
