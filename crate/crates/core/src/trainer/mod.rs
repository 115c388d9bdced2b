//! Training strategies: joint and split optimization of every model variant.

mod config;
mod engine;
mod model;
mod train;

pub use config::{
    default_architectures, Approach, ModelVariant, NetSpec, NtkConfig, Positivity, Strategy,
    TrainConfig,
};
pub use engine::{
    batch_loss, freeze, run_phase, term_traces, BatchLoss, FrozenValues, HistoryRow, Networks,
    Optimizers, Phase, PhaseHistory, Points,
};
pub use model::{write_history_csv, ResumeState, TrainedModel};
pub use train::{
    extend_training, final_terms, sample_collocation, train, train_joint, train_split, train_window,
};
