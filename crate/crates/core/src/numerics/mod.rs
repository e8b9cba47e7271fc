//! Dense matrices, reverse-mode differentiation, and Adam.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod tape;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use matrix::{dropout, dropout_mask, Matrix};
pub use tape::{AggregationPlan, NodeId, Tape};
