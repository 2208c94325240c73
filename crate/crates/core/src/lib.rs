//! Geodesic and horocycle dynamics on loom surfaces.

pub mod error;
pub mod exec;
pub mod dimension;
pub mod hyperbolic;
pub mod intervals;
pub mod measure;
pub mod output;
pub mod recurrence;
pub mod render;
pub mod surface;
pub mod tracer;
pub mod weaving;

pub use error::{LoomError, Result};
pub use exec::Exec;
