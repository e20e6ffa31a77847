#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod cli;
pub mod error;
pub mod io;
pub mod kernels;
mod linalg;
pub mod parallel;
pub mod pipelines;
pub mod projection;
pub mod sinkhorn;
pub mod solver;
pub mod spec;
pub mod synthetic;
