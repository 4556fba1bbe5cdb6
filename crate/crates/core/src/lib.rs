// `!(x <= bound)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod exec;
pub mod field;
pub mod lie;
pub mod flow;
pub mod gauge;
pub mod analysis;
pub mod harness;
pub mod config;
pub mod cli;
