//! Scenarios, traces, checkers, metrics and reports.

pub mod check;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod suite;
pub mod trace;

pub use check::{check_liveness, check_safety, check_trace_safety, LivenessVerdict, SafetyVerdict};
pub use metrics::{compute_metrics, Metrics};
pub use report::RunReport;
pub use scenario::{load_scenario, parse_scenario, ProtocolKind, ScenarioConfig, ScenarioError, StopCondition};
pub use trace::{StopReason, Trace};
