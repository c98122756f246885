//! Gaussian-process surrogate, expected improvement and space-filling designs.

mod acquisition;
mod directions;
mod gp;
mod sampling;

pub use acquisition::{expected_improvement, maximize_ei, normal_cdf, normal_pdf, AcqSettings, Direction};
pub use directions::MAX_DIM as SOBOL_MAX_DIM;
pub use gp::{dedupe, gp_fit, kernel, GpBounds, GpHyper, GpSettings, GpSurrogate, KernelKind, JITTER_LADDER};
pub use sampling::{lhs, sobol, SobolSequence};
