//! Small configurable CNN classifier with named post-activation taps, its
//! loss, optimizer and checkpoint format.

mod loss;
mod model;
mod optim;
mod params;
mod spec;

pub use loss::softmax_cross_entropy;
pub use model::{forward, predictions, stack_images, ForwardTrace};
pub use optim::{adam_step, poly_decay, AdamConfig, AdamState};
pub use params::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, write_atomic, ParamTensors,
    Parameters,
};
pub use spec::{pool_tap_name, Block, ConvSpec, ModelSpec, PoolSpec, TapInfo};
