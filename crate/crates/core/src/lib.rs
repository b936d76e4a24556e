//! Small positive values of supercritical branching processes in an i.i.d.
//! random environment.
//!
//! - [`env`]: offspring laws, environment models, the associated random walk,
//!   Lambda(0) and exponential tilting.
//! - [`pgf`], [`quenched`], [`annealed`]: exact truncated generating
//!   functions, quenched laws and annealed enumeration.
//! - [`lf`]: closed forms for linear-fractional environments.
//! - [`spine`]: forward simulation, genealogies, the spine sampler, importance
//!   sampling and conditioned MRCA sampling.
//! - [`lab`]: reports combining the above.

pub mod annealed;
pub mod env;
pub mod error;
pub mod lab;
pub mod lf;
pub mod pgf;
pub mod quenched;
pub mod spine;

pub use env::{EnvironmentModel, OffspringLaw, Regime};
pub use error::{Error, Result};
pub use quenched::EnvSequence;
