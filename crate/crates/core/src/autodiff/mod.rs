//! Tensors, a reverse-mode tape, finite-difference checking and Adam.
//!
//! Checkpoints written by [`ParamStore::save`] use this little-endian layout:
//!
//! ```text
//! b"VXPT"  u32 version (= 1)  u32 record_count
//! per record, in name order:
//!   u32 name_len  name (UTF-8)  u32 ndim  u64 dims[ndim]  f64 data[product(dims)]
//! ```

mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport};
pub use graph::{sigmoid, Activation, GradMap, Graph, Var};
pub use optim::{accumulate_grads, clip_grad_norm, grad_norm, Adam};
pub use params::ParamStore;
pub use tensor::Tensor;
