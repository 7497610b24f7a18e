//! Desk-scale numerical laboratory for Lipschitz fields of affine `m`-planes in `R^n`.
//!
//! The crate is organised bottom-up:
//!
//! * [`grassmann`]: planes as orthogonal projections, the operator-norm metric,
//!   Gram–Schmidt frames and the best Binet–Cauchy minor.
//! * [`planefield`]: Lipschitz plane fields, adapted orthonormal frame fields and the
//!   level-set maps `g_u(x) = (<v_i(x), x - u>)_i`.
//! * [`setlib`]: set oracles, Lebesgue and slice-measure estimators, density ratios.
//! * [`fibration`]: coarea Jacobian factors of the fibered spaces and the slice-mass
//!   functionals built on them.
//! * [`density`]: polyballs, the bow-tie and stripe inequalities and the density and
//!   Fubini experiments.
//!
//! Every stochastic estimate is driven by an [`RngKey`]: a counter-based stream keyed by
//! `(seed, estimate id, batch index)`, so results are bit-identical regardless of the
//! number of worker threads.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbox;
pub mod density;
pub mod error;
pub mod fibration;
pub mod grassmann;
mod linalg;
pub mod planefield;
pub mod rng;
pub mod setlib;

pub use bbox::AxisBox;
pub use error::{GmtError, Result};
pub use grassmann::{Frame, Plane};
pub use planefield::{FrameField, PlaneField};
pub use rng::RngKey;
pub use setlib::{MeasureEstimate, Method, Sampler, SetOracle};


/// Dense column vector used for points and directions.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for projections and tangent bases.
pub type Matrix = nalgebra::DMatrix<f64>;
