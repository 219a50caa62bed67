//! The probe classifier: parameters, forward/backward, Adam, checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod model;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{Activation, ForwardCache, LinearHead, MlpBlock, ProbeParams};
pub use rng::{derive_run_seed, rng_from_seed, ProbeRng, Setting};
