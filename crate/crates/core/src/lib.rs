//! Target-aware expectation estimation for probabilistic programs.

pub mod density;
pub mod diagnostics;
pub mod distribution;
pub mod error;
pub mod inference;
pub mod model;
pub mod models;
pub mod numerics;
pub mod real;
pub mod rng;
pub mod tabi;
pub mod trace;
pub mod transform;
pub mod validate;

pub use density::{Evaluation, GradientEvaluation, GradientMethod, ProgramDensity};
pub use distribution::{Distribution, Support};
pub use error::{Error, Result};
pub use model::{run_model, Context, Mode, Model};
pub use real::{DenseDual, Dual, Real};
pub use trace::{Trace, TraceEntry, Value};
pub use transform::ConstraintTransform;
