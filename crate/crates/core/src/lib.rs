//! Adaptive rejection of a harmonic disturbance of unknown frequency for
//! linear plants of known relative degree, with a ball-and-plate model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod lti;
pub mod signals;
pub mod estimator;
pub mod plants;
pub mod switching;
pub mod scenario;
pub mod sim;
