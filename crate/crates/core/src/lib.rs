//! Convex-body volume estimation by simulated annealing on the pencil
//! construction, plus dense statevector checks of the quantum-walk and
//! estimation primitives that accelerate it.
//!
//! Modules, bottom-up: [`geometry`] (membership oracles), [`hit_and_run`]
//! (the sampler), [`annealing`] (the volume pipeline), [`chain`] (finite
//! discretized walks), [`qwalk`] (walk operators), [`qestimate`]
//! (amplitude estimation and friends), [`reduction`] (search-to-volume).

pub mod annealing;
pub mod chain;
pub mod error;
pub mod geometry;
pub mod hit_and_run;
pub mod linalg;
pub mod qestimate;
pub mod qwalk;
pub mod reduction;
pub mod rng;

pub use annealing::{
    build_schedule, estimate_pencil_volume, estimate_volume, estimate_volume_with, initial_mass, AnnealConfig,
    CoolingSchedule, EstimateReport, StageStats,
};
pub use chain::FiniteChain;
pub use error::{AnnealingError, ChainError, Error, GeometryError, QuantumError, WalkError};
pub use geometry::{apply_affine, make_pencil, BodySpec, ConvexBody, QueryCounter};
pub use hit_and_run::WalkConfig;
pub use linalg::{CMat, CVec};
pub use nalgebra;
pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
