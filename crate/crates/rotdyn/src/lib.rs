//! Numerical rotation sets for annulus homeomorphisms.

// `!(a < b)` is used on purpose so that NaN parameters are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branches;
pub mod cover;
pub mod invsets;
pub mod mapzoo;
pub mod rotset;
