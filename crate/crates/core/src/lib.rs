//! Discovery of sparse polynomial PDEs from scattered, noisy samples.
//!
//! A solution network `U(x, t)` and a hidden-dynamics network
//! `N(U, D_x U, .., D_x^M U)` with trainable rational activations are fit
//! jointly to the data and to the residual `D_t U - N(..)` at resampled
//! collocation points. A polynomial library evaluated on `U` is then
//! regressed against `N` by recursive feature elimination, and candidates
//! are ranked by how sharply the residual grows when a term is removed.

pub mod activation;
pub mod block;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod fd;
pub mod jet;
pub mod library;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod regression;
pub mod rng;
pub mod tape;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
