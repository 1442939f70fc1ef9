#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod handeye;
pub mod pipeline;
pub mod refinement;
pub mod simulation;
