pub mod anchors;
pub mod codec;
pub mod error;
pub mod harness;
pub mod io;
pub mod lab;
pub mod network;
mod record;
pub mod seed;

pub use anchors::{AnchorMethod, AnchorSet, ScoreRange};
pub use codec::{Distance, EncoderConfig, PqrVector, ReverseMapper};
pub use error::{Error, Result};
pub use network::{ArchConfig, Checkpoint, Head, Network, TrainConfig};
