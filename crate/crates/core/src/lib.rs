//! Model-based control design for multivariable processes.
//!
//! The pipeline runs from a linearized plant to an evaluated decentralized
//! PI control structure:
//!
//! - [`linss`]: state-space models from DAE Jacobian blocks and transfer
//!   matrix evaluation at complex frequencies.
//! - [`lti`]: zero/pole time-constant transfer functions with dead time,
//!   closed-form step responses and fixed-step numeric simulation.
//! - [`sysid`]: step-test batteries, normalization and second-order plus
//!   dead time fitting.
//! - [`pairing`]: relative gain and relative interaction arrays, sequential
//!   and assignment-based MV/CV pairing.
//! - [`simc`]: half-rule model reduction and SIMC PI tuning.
//! - [`cloop`]: closed-loop simulation of a transfer-function plant under
//!   decentralized PI controllers with output limits.
//! - [`cli`]: the command-line surface tying it all together.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cloop;
pub mod error;
pub mod linss;
pub mod lti;
pub mod matrix;
pub mod pairing;
pub mod plot;
pub mod reference;
pub mod simc;
pub mod sysid;

pub use error::{Error, Result};
pub use lti::{TimeSeries, TransferFunction};
