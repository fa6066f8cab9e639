pub mod cli;
pub mod commands;
pub mod config;
pub mod hybrid;

pub use commands::{examples, AttentionRecord, EvalMode};
pub use config::{RunConfig, TuneSettings};
pub use hybrid::{
    BackupClassifier, BackupContext, BackupPrediction, BackupRegistry, HybridClassifier, MajorityBackup,
    ModelBackup, PredictionRecord, Stage,
};
