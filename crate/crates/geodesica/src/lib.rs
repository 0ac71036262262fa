//! Differentiable geodesic distance on immersed Riemannian manifolds.
//!
//! A manifold is described by a smooth immersion of intrinsic coordinates
//! into ambient Euclidean space. The induced metric, Christoffel symbols and
//! curvature follow from exact forward-mode derivatives of the immersion.
//! A neural network, augmented so that the metric-space axioms M1/M2/M3/M5
//! hold for any parameter values, is trained to satisfy the
//! metric-constrained Eikonal equation `g^{ij} φ_,i φ_,j = 1`, yielding a
//! continuous differentiable distance function. On top of the distance
//! function sit geodesic tracing through the gradient flow, Fréchet means
//! and k-means clustering.
//!
//! Modules mirror the pipeline:
//!
//! - [`diffcore`] — dual-number forward-mode differentiation engine
//! - [`manifold`] — immersions, induced metric, Christoffel symbols, curvature
//! - [`geodesic`] — geodesic ODE integration, curve length, upper bounds
//! - [`network`] — modified MLP, analytic backpropagation, Adam, checkpoints
//! - [`eikonal`] — output augmentations, Eikonal residual, training driver
//! - [`sampling`] — uniform and curvature-weighted Metropolis–Hastings sampling
//! - [`geoflow`] — distance fields, gradient flow, log* map, geodesic tracing
//! - [`baseline`] — cubic-spline length-minimisation baseline
//! - [`apps`] — Fréchet means and manifold k-means
//! - [`cli`] / [`config`] — command-line front end and run configuration

pub mod apps;
pub mod baseline;
pub mod cli;
pub mod config;
pub mod diffcore;
pub mod eikonal;
pub mod error;
pub mod geodesic;
pub mod geoflow;
pub mod io;
pub mod manifold;
pub mod network;
pub mod parallel;
pub mod sampling;

pub use error::{Error, Result};
