//! Deterministic federated rounds over an in-memory bus.

pub mod config;
pub mod engine;
pub mod transcript;

pub use config::{CryptoSuite, ScenarioConfig};
pub use engine::{
    measure_overhead, measure_overhead_reps, run_scenario, FinalMetrics, Metrics, OverheadReport, RoundMetrics,
    RoundPhase, RoundState, ScenarioRun, SentUpdate, Simulation,
};
pub use transcript::{decode_transcripts, encode_transcripts, Phase, PhaseTimings, RoundTranscript, WireMessage};
