//! Minimal reverse-mode differentiation: tensors, a per-pass tape, the
//! layer kinds the Q-networks need, and two optimizers.

pub mod kernels;
mod layers;
mod optim;
mod param;
mod tape;
mod tensor;

pub use layers::{Conv2d, Dense, Flatten, Layer, LayerSpec, MaxPool2d, Relu, Sequential};
pub use optim::{by_name as optimizer_by_name, Adam, AdamHyper, Optimizer, Sgd};
pub use param::{Param, Parameter};
pub use tape::{Tape, Var, WindowIndex};
pub use tensor::Tensor;
