//! Minimal neural-network graph: NHWC tensors, a handful of operators, a
//! reference forward pass and field derivation.

mod fields;
mod forward;
mod graph;
mod ops;
pub mod presets;
mod serial;
mod tensor;

pub use fields::{
    check_patch_shape, derive_fields, derive_fields_with_expression, validate_fields, Check, ValidationReport,
};
pub use graph::{GraphBuilder, ModelGraph, Node};
pub use ops::{ActivationKind, Conv, Op, Padding, PoolKind};
pub use serial::model_paths;
pub use tensor::Tensor;
