//! Complex residual classifier and its checkpoint format.

pub mod arch;
pub mod block;
pub mod checkpoint;
pub mod model;

pub use arch::{ArchitectureSpec, HeadPool, HeadSpec, StageSpec, StemSpec};
pub use block::{block_forward, BlockCache, BlockGrad, ConvBn, ConvBnCache, ConvBnGrad, ResidualBlock};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{Model, Tape};
