// Negated float comparisons treat NaN as failing the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod deepstack;
pub mod harness;
pub mod network;
pub mod optimizers;
