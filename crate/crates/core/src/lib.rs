//! Nonstationary Ruelle–Perron–Frobenius theory on finite samples.
//!
//! Sequences of transfer operators `L_n: C(X_n) -> C(X_{n+1})` are built from
//! maps and potentials ([`transfer`], [`systems`]), checked against the
//! uniform expansion and regularity hypotheses ([`hypotheses`]), and solved
//! for eigenvalue chains `λ_n`, eigenmeasures `m_n`, eigenfunctions `h_n` and
//! pseudo-invariant measures `μ_n = h_n m_n` ([`rpf`]). Projective metrics on
//! the cones used in the convergence arguments live in [`cones`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cones;
pub mod error;
pub mod hypotheses;
pub mod rpf;
pub mod sample;
pub mod spaces;
pub mod systems;
pub mod transfer;

pub use cones::{ConeParams, LogHolderCone};
pub use error::{ConvergenceFailure, Error, Result};
pub use hypotheses::{derive_constants, ConstantsLedger, HypothesisParams, RateConstants};
pub use spaces::{pair, Field, MeasureVec, PointSpace, SpaceKind};
pub use transfer::{Stage, StageSeq};
