//! Dense tensors, reverse-mode differentiation, and the decompositions and
//! divergences the rest of the workbench is built on.

pub mod divergence;
pub mod gradcheck;
pub mod kmeans;
pub mod linalg;
pub mod svd;
pub mod tape;
pub mod tensor;

pub use divergence::{jsd, kl_bits};
pub use gradcheck::{grad_check, grad_check_detailed, GradCheckReport};
pub use kmeans::{kmeans, kmeans_with, KMeansModel};
pub use svd::{svd, SvdResult};
pub use tape::{NodeId, Tape};
pub use tensor::{Scalar, Tensor};
