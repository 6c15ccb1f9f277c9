//! Simulation of stochastic integrals and stochastic convolutions driven by
//! compensated Poisson random measures on finite-dimensional ℓ^r spaces,
//! together with a Monte Carlo harness that estimates both sides of the
//! associated moment and maximal inequalities.
//!
//! Modules, bottom up:
//!
//! * [`prm`]: marked Poisson point processes and counting measures.
//! * [`space`]: ℓ^r(d) with `φ(x) = |x|^q` and its derivatives.
//! * [`sgp`]: contraction semigroups, resolvents, Yosida approximations.
//! * [`sint`]: pathwise stochastic integrals and càdlàg paths.
//! * [`sconv`]: stochastic convolutions, strong-solution and Itô checks.
//! * [`verify`]: Monte Carlo reports for the inequalities.
//! * [`cli`]: config parsing and the `jumpconv` batch runner.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
mod expm;
pub mod prm;
pub mod quad;
pub mod rng;
pub mod sconv;
pub mod sgp;
pub mod sint;
pub mod space;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use expm::expm;
pub use prm::{Event, MarkSet, MarkSpace, PoissonPath};
pub use quad::QuadConfig;
pub use sconv::{ConvolutionScenario, GridSpec, ItoTerms, ScenarioIntegrand};
pub use sgp::{Generator, GeneratorKind};
pub use sint::{CadlagPath, FieldIntegrand, StepIntegrand};
pub use space::{Point, SmoothSpace};
