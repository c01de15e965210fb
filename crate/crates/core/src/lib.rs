//! Overlapping domain decomposition solvers for ptychographic phase retrieval.

// `!(x > 0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Pixel loops index several parallel buffers at once.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fft;
pub mod forward;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod plan;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod stagm;

pub use error::{PtychoError, Result};
pub use forward::{FrameStack, ScanGeometry, ScanOperator};
pub use grid::{ComplexField, Grid, RealField, Region};
pub use plan::{merge, plan_stripes, restrict_overlap, DecompositionPlan, SplitAxis};
pub use scalar::Real;

/// Double-precision complex field.
pub type ComplexField2D = ComplexField<f64>;
/// Double-precision real field.
pub type RealField2D = RealField<f64>;
/// Double-precision measurement stack.
pub type Frames = FrameStack<f64>;
