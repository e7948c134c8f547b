#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blo;
pub mod environments;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod mab;
pub mod meta;
pub mod metrics;
pub mod newton;
pub mod regularizers;
pub mod rng;
pub mod shortestpath;
pub mod verify;
