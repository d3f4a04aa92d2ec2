#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod groups;
pub mod ik;
pub mod io_g2o;
pub mod numcheck;
pub mod optim;
pub mod pgo;
pub mod tape;

pub use error::{Error, Result};
pub use groups::{GroupElement, GroupKind, TangentVector};
pub use tape::{Gradients, NodeId, Tape, Value};
