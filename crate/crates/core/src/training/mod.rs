//! Loss, optimizer, augmentation, the training loop and grid sweeps.

pub mod augment;
pub mod loss;
pub mod sgd;
pub mod sweep;
pub mod trainer;

pub use augment::{augment, flip, AugmentConfig};
pub use loss::{argmax_rows, cross_entropy};
pub use sgd::Sgd;
pub use sweep::{sweep, sweep_csv, SweepRow, SWEEP_HEADER};
pub use trainer::{
    evaluate, input_channels, prepare_batch, train, EpochRecord, EvalReport, LrSchedule, TrainConfig, TrainOutcome,
    TrainState, BEST_CHECKPOINT, HISTORY_FILE, LAST_CHECKPOINT, TIMING_FILE,
};
