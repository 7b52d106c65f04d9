//! Dense numeric kernel: tensors, loss primitives, seeded randomness.

mod loss;
mod rng;
mod tensor;

pub use loss::{log_softmax, per_sample_nll, relu, relu_backward, softmax_cross_entropy};
pub use rng::{mix64, stream, Rng};
pub use tensor::{matmul, matmul_nt, matmul_tn, sgd_step, Tensor};
