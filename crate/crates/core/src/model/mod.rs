//! Dense encoder with parallel classifier and projection heads.
//!
//! ```text
//! x --enc1--relu--enc2--relu--> features --classifier--> logits
//!                                   \--proj_hidden--relu--proj_out--> projections
//! ```

mod network;
mod optim;

pub use network::{
    Architecture, Dense, ForwardCache, ForwardOutput, NetworkParams, OutputGrads, LAYER_NAMES,
};
pub use optim::{ema_update, Adam, AdamConfig};
