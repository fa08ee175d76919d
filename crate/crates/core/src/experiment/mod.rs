//! Experiment machinery: market-maker controllers, the per-step dealer
//! pipeline, multi-session run drivers, checkpointing, and the
//! non-stationary context-sequence experiments.

mod context;
mod drivers;
mod mm;

pub use context::{
    run_context_sequence, train_library, ContextMethod, ContextSeqConfig, ContextSeqOutput,
    ContextSummary, PolicyLibrary,
};
pub use drivers::{
    run_reward_benchmark, run_sessions, run_test, run_training, run_weight_sweep, AiifArm,
    BenchmarkArm, LearnerAlgo, LearnerSpec, OpponentLineup, RunLog, RunOpts, SessionSummary,
    SweepPoint, TestConfig, TrainConfig, TrainOutput, run_aiif_sweep,
};
pub use mm::{
    checkpoint_from_bytes, checkpoint_to_bytes, Checkpoint, CheckpointError, MmHarness, MmKind,
    MmStepRow, RewardSpec,
};
