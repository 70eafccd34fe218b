//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod checkpoint;
mod element;
mod graph;
#[allow(clippy::module_inception)]
mod tensor;

pub use adam::Adam;
pub use checkpoint::{Archive, Manifest, TensorEntry};
pub use element::Element;
pub use graph::{Graph, Var};
pub use tensor::{ParamId, ParamStore, Tensor};
