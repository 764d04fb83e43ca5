//! Dense-tensor engine with reverse-mode automatic differentiation, parameter
//! storage, initialization and the Adam optimizer.

pub mod adam;
pub mod fd;
pub mod init;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use fd::finite_diff_check;
pub use init::{init_param, InitScheme};
pub use params::{Bound, Group, ParamKind, ParamSet};
pub use rng::RngStream;
pub use tape::{dropout, NodeId, Tape};
pub use tensor::{Scalar, Tensor};
