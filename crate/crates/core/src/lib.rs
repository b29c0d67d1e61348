//! Two-mode entanglement between separated cavities: a classically driven
//! two-level atom crosses cavity A then cavity B. Builds every Hamiltonian of
//! the scheme, propagates exactly or through the full time-dependent
//! interaction picture, and scores the produced entangled coherent states and
//! Bell states.

pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod measures;
pub mod models;
pub mod propagate;
pub mod protocols;
pub mod validation;

pub use error::{Error, Result};
pub use hilbert::{AtomLabel, Cavity, FieldState, ModeState, Operator, PureState, SystemDims};
pub use models::{ModelKind, ProtocolParams};
pub use propagate::{DensityMatrix, IntegratorOptions, NoiseParams};
pub use protocols::{Engine, ProtocolKind, RunResult};
