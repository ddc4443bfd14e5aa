//! Tests whether the *ordering* of a tool's up/down events carries
//! cycle-time variability beyond what its duration distributions explain.
//!
//! A historical sequence is simulated on a single-tool FIFO queue against
//! many arrival scenarios, alongside uniformly permuted copies of itself on
//! the very same scenarios. The historical effect is then compared with the
//! band of permuted effects, accounting for the estimation uncertainty of
//! both, to produce a verdict.

pub mod engine;
pub mod experiment;
pub mod io;
pub mod model;
pub mod seeds;
pub mod sequences;
pub mod stats;

pub use engine::{simulate_run, EngineError};
pub use experiment::{run_experiment, sweep, ExperimentError, Runner, SweepRow};
pub use io::{
    normalize_report, parse_event_log, parse_event_log_with, parse_report, parse_sweep,
    write_event_log, write_report, write_sweep, EventLogOptions, IoError,
};
pub use model::{
    ArrivalScenario, EffectEstimate, ExperimentReport, Interval, RunResult, ShuffleMode, SimConfig,
    TTestTriplet, ToolState, UpDownSequence, UtilizationBasis, Verdict,
};
pub use sequences::{shuffle, DurationLaw, SynthSpec};
