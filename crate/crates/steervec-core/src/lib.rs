//! Orthogonal steering-vector optimization on the scaled Stiefel manifold.
//!
//! Given an activation matrix H (d×N) and a magnitude α, the library finds
//! steering matrices V with VᵀV = αI that maximize det((H+V)ᵀ(H+V)), i.e.
//! minimize ℓ(V) = −log det((H+V)ᵀ(H+V)). Two solvers are provided: projected
//! Riemannian gradient descent with backtracking, and a closed-form one-step
//! update from the null-space initialization. A benchmark harness and a
//! streaming per-token session protocol sit on top.

use openblas_src as _;

pub mod error;
pub mod matrix;
pub mod kernel;
pub mod geometry;
pub mod solver;
pub mod bench;
pub mod session;
pub mod check;
pub mod api;

pub use error::{Error, Result};
pub use matrix::Matrix;
