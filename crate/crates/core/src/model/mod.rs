pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod hierarchy;
pub mod lcr_rot;
pub mod lstm;

pub use attention::{attend, AttentionHead, Attended};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ModelConfig, DEFAULT_HOPS, NUM_CLASSES};
pub use hierarchy::{
    FinalAll, FinalPairs, GroupParams, GroupScores, HierarchyRegistry, HierarchyStrategy,
    NoHierarchy, PerHopAll, PerHopPairs,
};
pub use lcr_rot::{
    AttentionTrace, Encoded, Forward, HierarchyGroupTrace, HierarchyTrace, HopOutput, HopTrace,
    LcrRot, Mode, MultiHopOutput, SentenceInput, VECTOR_NAMES,
};
pub use lstm::{BiLstmParams, LstmParams};
