//! Simulation and analysis of two-mode Gaussian entanglement experiments.
//!
//! The crate models a single squeezed microwave mode split on a lossy hybrid
//! coupler, synthesizes phase-swept dual-channel quadrature records from the
//! resulting covariance matrix, and recovers the state again with a
//! moment-based estimator.  Entanglement is certified two ways: an optimized
//! EPR-variance witness and the logarithmic-negativity-style measure derived
//! from the partially transposed covariance matrix.  Supporting modules cover
//! gain/phase model fitting, thermal photon-number calibration of the
//! measurement chain, and parametric-bootstrap error bars.
//!
//! Quadrature convention throughout: mode ordering `(X1, Y1, X2, Y2)` and
//! vacuum variance 1/2.

pub mod calibration;
pub mod estimator;
pub mod fit;
pub mod gaussian;
pub mod rng;
pub mod squeezer;
pub mod synth;

pub use calibration::{
    CalibratedQuadratures, ThermalCalibration, ThermalFit, ThermalSweepPoint,
};
pub use estimator::{
    BinnedVariances, BootstrapReport, EstimatedState, JointConvention, MomentAccumulator,
    RepeatabilityReport, StatSeries, SYSTEMATICS_NOTE,
};
pub use gaussian::{
    GaussianState, NegativityResult, PhysicalityCheck, SymplecticTransform, WitnessResult,
};
pub use rng::SplitRng;
pub use squeezer::{SqueezerFit, SqueezerParams, VarianceTraces};
pub use synth::{AcquisitionConfig, QuadratureDataset};
