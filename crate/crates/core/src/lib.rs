//! Numerical laboratory for gradient flows on Minkowski normed spaces.
//!
//! A Minkowski norm is positively homogeneous and strongly convex but not
//! necessarily symmetric (`‖-x‖ ≠ ‖x‖` is allowed). This crate provides
//!
//! * [`norms`] — parametric norm families with analytic metric tensors,
//!   Legendre duality and the 2-uniform convexity/smoothness constants,
//! * [`flows`] — gradient-curve integration, the skew-convexity quotient and
//!   contraction-rate fitting,
//! * [`grid`] / [`entropy`] — probability densities on rectangular grids,
//!   relative entropy and its Wasserstein gradient, the Θ functional,
//! * [`transport`] — exact (network simplex) and entropic (log-domain
//!   Sinkhorn) solvers for the quadratic-cost Kantorovich problem with a
//!   possibly nonsymmetric cost,
//! * [`heat`] — conservative finite-difference solvers for the reverse
//!   nonlinear heat equation with Gaussian-form reference solutions,
//! * [`triangle`] — tangent-triangle geometry: the tent density, the
//!   inner-product detector and the cut-off lift to three dimensions,
//! * [`experiments`] — end-to-end demos (non-contraction of the heat flow,
//!   Gaussian non-expansion) with CSV/JSON/SVG reporting.
//!
//! Heavy inner loops are data-parallel via rayon when the `parallel`
//! feature (default) is enabled; a sequential fallback is used otherwise.
//! All reductions are deterministic regardless of the thread schedule.

pub mod config;
pub mod entropy;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod flows;
pub mod grid;
pub mod heat;
pub(crate) mod linalg;
pub mod norms;
pub mod report;
pub mod transport;
pub mod triangle;

pub use error::{Error, Result};
pub use norms::NormSpec;
