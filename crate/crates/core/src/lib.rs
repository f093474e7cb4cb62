//! Photothermal super-resolution (PSR) reconstruction toolkit.
//!
//! End-to-end pieces for resolving subsurface defects from structured-
//! illumination thermography: thermal PSF synthesis for a thermally thin
//! plate, pseudo-random illumination pattern design, a closed-form forward
//! model for synthetic thermogram stacks, frequency-domain ADMM inversion
//! with group sparsity, reconstruction scoring, automated regularization
//! tuning via differential evolution, and the conventional single-shot
//! baselines (difference thermogram, pristine subtraction, pulsed phase
//! thermography).

pub mod autotune;
pub mod baselines;
pub mod error;
pub mod fft;
pub mod field;
pub mod forward;
pub mod grid;
pub mod material;
pub mod metrics;
pub mod pattern;
pub mod psf;
pub mod rng;
pub mod solver;
pub mod stack;
pub mod tgs;

pub use error::{PsrError, Result};
pub use field::Field2D;
pub use forward::{DefectMap, ForwardOperator, ForwardSpec};
pub use grid::GridSpec;
pub use material::MaterialSpec;
pub use pattern::{HomogeneityReport, PatternSet};
pub use psf::{PsfSpec, PsfStack};
pub use solver::{Grouping, ReconstructionResult, SolverConfig};
pub use stack::ThermogramStack;
