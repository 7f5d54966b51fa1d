//! Vectorial bounded-confidence opinion dynamics on one-dimensional lattices.
//!
//! Each site holds a profile of `F` binary opinions. Neighbours at Hamming
//! distance at most `theta` imitate each other one issue at a time. The
//! disagreements between neighbours form piles of annihilating random walkers,
//! one per issue, and piles larger than `theta` are frozen.
//!
//! * [`opinion`]: profiles, parameters, initial measures and lattices.
//! * [`engine`]: the event-driven graphical construction.
//! * [`particles`]: the coupled particle picture.
//! * [`ledger`]: per-edge contribution accounting.
//! * [`genealogy`]: ancestors along active arrows.
//! * [`analytics`]: exact weight expectations and phase regions.

pub mod analytics;
pub mod engine;
pub mod error;
pub mod genealogy;
pub mod ledger;
pub mod opinion;
pub mod particles;
pub mod rng;
pub mod scalar;

pub use analytics::{FoldVariant, PhaseRegion, Quadratic, ThresholdOneMargin, WeightLaw};
pub use engine::{
    rate, run, ArrowEvent, Engine, EventMode, FinalClass, LatticeState, Observer, RunOutcome, RunSummary, StopCondition,
};
pub use error::{LedgerError, LogError, ModelError};
pub use genealogy::ActiveArrowLog;
pub use ledger::ContributionLedger;
pub use opinion::{hamming, Boundary, Direction, Dynamics, InitSpec, LatticeSpec, ModelParams, OpinionProfile};
pub use particles::{EdgeClass, ParticleView};
pub use scalar::Scalar;

/// Exact arbitrary-precision fraction.
pub type Rational = num_rational::BigRational;

pub type WeightLawExact = WeightLaw<Rational>;
pub type WeightLawF64 = WeightLaw<f64>;
pub type QuadraticExact = Quadratic<Rational>;
