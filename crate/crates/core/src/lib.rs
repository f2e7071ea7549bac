// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod data;
pub mod distributions;
pub mod gibbs;
pub mod selection;
pub mod summary;
pub mod workflow;
