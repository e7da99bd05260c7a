//! Scenario files: flat `key = value` lines, `#` comments.
//!
//! ```text
//! preset = faultless        # optional, applied before every other key
//! n = 7                     # also sets f = (n - 1) / 3
//! protocol = hotstuff2      # hotstuff3 | hotstuff2
//! pacemaker = epoch         # baseline | epoch | relayer
//! gst = 5000                # time units, or `inf`
//! delta = 1000              # Δ
//! delta_min = 10            # δ range
//! delta_max = 40
//! payload_cost = 0          # time per payload unit
//! pre_gst = random:300      # hold | random:MAX
//! leader = round-robin      # round-robin | seeded-random
//! byzantine = 1:crash@0, 2:silent-leader
//! payload_units = 1
//! seed = 7
//! stop = commits:20         # commits:K | horizon:T
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pacemaker::{LeaderMode, PacemakerKind};
use crate::protocol::Mutation;
use crate::simnet::{ByzantineStrategy, DelayModel, PreGstPolicy};
use crate::types::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("invalid config: {field}: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Chained three-phase HotStuff.
    HotStuff3,
    #[default]
    HotStuff2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    /// Every correct node has committed at least this many blocks.
    Commits(u64),
    /// Process events strictly before this time.
    Horizon(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub f: usize,
    pub protocol: ProtocolKind,
    pub pacemaker: PacemakerKind,
    pub delay: DelayModel,
    pub leaders: LeaderMode,
    pub byzantine: Vec<(NodeId, ByzantineStrategy)>,
    pub payload_units: u64,
    pub seed: u64,
    pub stop: StopCondition,
    pub aggregate: bool,
    pub mutation: Mutation,
    /// Simulated-time cap, whatever the stop condition.
    pub max_time: u64,
    pub max_events: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 4,
            f: 1,
            protocol: ProtocolKind::HotStuff2,
            pacemaker: PacemakerKind::Baseline,
            delay: DelayModel::default(),
            leaders: LeaderMode::RoundRobin,
            byzantine: Vec::new(),
            payload_units: 1,
            seed: 1,
            stop: StopCondition::Commits(20),
            aggregate: true,
            mutation: Mutation::None,
            max_time: 1_000_000_000,
            max_events: 20_000_000,
        }
    }
}

pub const PRESETS: [&str; 4] = ["faultless", "leader-cascade", "equivocation", "late-GST"];

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let mut c = ScenarioConfig::default();
        let pairs: &[(&str, &str)] = match name {
            "faultless" => &[],
            "leader-cascade" => &[
                ("n", "7"),
                ("protocol", "hotstuff3"),
                ("pacemaker", "epoch"),
                ("byzantine", "1:crash@0, 2:crash@0"),
                ("stop", "commits:10"),
            ],
            "equivocation" => &[
                ("protocol", "hotstuff3"),
                ("byzantine", "1:equivocator"),
                ("gst", "3000"),
                ("pre_gst", "random:600"),
                ("delta_max", "60"),
            ],
            "late-GST" => &[
                ("gst", "20000"),
                ("byzantine", "3:max-delay"),
                ("stop", "commits:10"),
            ],
            _ => return Err(invalid("preset", format!("unknown preset {name:?}"))),
        };
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Applies one `key = value` assignment. Setting `n` also sets
    /// `f = (n - 1) / 3`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        let value = value.trim();
        let num = |field: &str| -> Result<u64, ScenarioError> {
            value
                .parse::<u64>()
                .map_err(|_| invalid(field, format!("expected a non-negative integer, got {value:?}")))
        };
        match key.trim() {
            "n" => {
                self.n = num("n")? as usize;
                self.f = self.n.saturating_sub(1) / 3;
            }
            "f" => self.f = num("f")? as usize,
            "protocol" => {
                self.protocol = match value {
                    "hotstuff3" | "hotstuff" => ProtocolKind::HotStuff3,
                    "hotstuff2" => ProtocolKind::HotStuff2,
                    _ => return Err(invalid("protocol", format!("unknown protocol {value:?}"))),
                }
            }
            "pacemaker" => {
                self.pacemaker = match value {
                    "baseline" => PacemakerKind::Baseline,
                    "epoch" => PacemakerKind::Epoch,
                    "relayer" => PacemakerKind::Relayer,
                    _ => return Err(invalid("pacemaker", format!("unknown pacemaker {value:?}"))),
                }
            }
            "gst" => {
                self.delay.gst = match value {
                    "inf" | "infinity" | "never" => None,
                    _ => Some(num("gst")?),
                }
            }
            "delta" => self.delay.delta_cap = num("delta")?,
            "delta_min" => self.delay.delta_min = num("delta_min")?,
            "delta_max" => self.delay.delta_max = num("delta_max")?,
            "payload_cost" => self.delay.payload_cost = num("payload_cost")?,
            "pre_gst" => {
                self.delay.pre_gst = if value == "hold" {
                    PreGstPolicy::AdversarialHold
                } else if let Some(max) = value.strip_prefix("random:") {
                    let max = max
                        .parse()
                        .map_err(|_| invalid("pre_gst", format!("bad random bound in {value:?}")))?;
                    PreGstPolicy::RandomUpTo(max)
                } else {
                    return Err(invalid("pre_gst", format!("expected hold or random:MAX, got {value:?}")));
                }
            }
            "leader" => {
                self.leaders = match value {
                    "round-robin" => LeaderMode::RoundRobin,
                    "seeded-random" => LeaderMode::SeededRandom(self.seed),
                    _ => return Err(invalid("leader", format!("unknown leader mode {value:?}"))),
                }
            }
            "byzantine" => self.byzantine = parse_byzantine(value)?,
            "payload_units" => self.payload_units = num("payload_units")?,
            "seed" => {
                self.seed = num("seed")?;
                if let LeaderMode::SeededRandom(_) = self.leaders {
                    self.leaders = LeaderMode::SeededRandom(self.seed);
                }
            }
            "stop" => {
                self.stop = if let Some(k) = value.strip_prefix("commits:") {
                    StopCondition::Commits(k.parse().map_err(|_| invalid("stop", format!("bad commit count in {value:?}")))?)
                } else if let Some(t) = value.strip_prefix("horizon:") {
                    StopCondition::Horizon(t.parse().map_err(|_| invalid("stop", format!("bad horizon in {value:?}")))?)
                } else {
                    return Err(invalid("stop", format!("expected commits:K or horizon:T, got {value:?}")));
                }
            }
            "aggregate" => {
                self.aggregate = value
                    .parse()
                    .map_err(|_| invalid("aggregate", format!("expected true or false, got {value:?}")))?
            }
            "mutation" => {
                self.mutation = match value {
                    "none" => Mutation::None,
                    "drop-lock" => Mutation::DropLock,
                    "double-vote" => Mutation::DoubleVote,
                    "two-chain-commit" => Mutation::TwoChainCommit,
                    _ => return Err(invalid("mutation", format!("unknown mutation {value:?}"))),
                }
            }
            "max_time" => self.max_time = num("max_time")?,
            "max_events" => self.max_events = num("max_events")?,
            other => return Err(invalid(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.f == 0 || self.n != 3 * self.f + 1 {
            return Err(invalid("n", format!("n must equal 3f+1 with f >= 1 (n={}, f={})", self.n, self.f)));
        }
        if self.byzantine.len() > self.f {
            return Err(invalid(
                "byzantine",
                format!("{} corrupted nodes exceed f={}", self.byzantine.len(), self.f),
            ));
        }
        for (i, (id, _)) in self.byzantine.iter().enumerate() {
            if id.index() >= self.n {
                return Err(invalid("byzantine", format!("node {id} is outside [0, {})", self.n)));
            }
            if self.byzantine[..i].iter().any(|(other, _)| other == id) {
                return Err(invalid("byzantine", format!("node {id} listed twice")));
            }
        }
        let d = &self.delay;
        if d.delta_cap == 0 {
            return Err(invalid("delta", "Δ must be positive"));
        }
        if d.delta_min > d.delta_max {
            return Err(invalid("delta_min", format!("δmin={} exceeds δmax={}", d.delta_min, d.delta_max)));
        }
        if d.delta_max > d.delta_cap {
            return Err(invalid("delta_max", format!("δmax={} exceeds Δ={}", d.delta_max, d.delta_cap)));
        }
        Ok(())
    }

    pub fn is_correct(&self, id: NodeId) -> bool {
        !self.byzantine.iter().any(|(b, _)| *b == id)
    }

    pub fn correct_nodes(&self) -> Vec<NodeId> {
        (0..self.n as u32)
            .map(NodeId)
            .filter(|&id| self.is_correct(id))
            .collect()
    }

    pub fn strategy_of(&self, id: NodeId) -> Option<ByzantineStrategy> {
        self.byzantine
            .iter()
            .find(|(b, _)| *b == id)
            .map(|(_, s)| *s)
    }
}

fn parse_byzantine(value: &str) -> Result<Vec<(NodeId, ByzantineStrategy)>, ScenarioError> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if item == "none" {
            continue;
        }
        let (id, strategy) = item
            .split_once(':')
            .ok_or_else(|| invalid("byzantine", format!("expected NODE:STRATEGY, got {item:?}")))?;
        let id: u32 = id
            .trim()
            .parse()
            .map_err(|_| invalid("byzantine", format!("bad node id in {item:?}")))?;
        let strategy = strategy
            .parse()
            .map_err(|e: String| invalid("byzantine", e))?;
        out.push((NodeId(id), strategy));
    }
    out.sort_by_key(|(id, _)| *id);
    Ok(out)
}

/// Parses scenario text. A `preset` key is applied first wherever it
/// appears; later keys override it.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line: i + 1,
            reason: format!("expected key = value, got {line:?}"),
        })?;
        pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    let mut config = match pairs.iter().find(|(_, k, _)| k == "preset") {
        Some((_, _, name)) => ScenarioConfig::preset(name)?,
        None => ScenarioConfig::default(),
    };
    for (_, k, v) in pairs.iter().filter(|(_, k, _)| k != "preset") {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok(config)
}

/// Reads a scenario file; `preset:NAME` names a built-in scenario instead.
pub fn load_scenario(path: &str) -> Result<ScenarioConfig, ScenarioError> {
    if let Some(name) = path.strip_prefix("preset:") {
        let c = ScenarioConfig::preset(name)?;
        c.validate()?;
        return Ok(c);
    }
    let text = std::fs::read_to_string(Path::new(path)).map_err(|e| ScenarioError::Io(format!("{path}: {e}")))?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let c = parse_scenario("n = 4\nf = 1\nprotocol = hotstuff2\npacemaker = baseline\nseed = 1\n").unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.f, 1);
        assert_eq!(c.protocol, ProtocolKind::HotStuff2);
        assert_eq!(c.pacemaker, PacemakerKind::Baseline);
        assert_eq!(c.seed, 1);
    }

    #[test]
    fn n_must_be_3f_plus_1() {
        let err = parse_scenario("n = 5").unwrap_err();
        assert!(matches!(err, ScenarioError::ConfigInvalid { ref field, .. } if field == "n"), "{err}");
        assert!(err.to_string().contains("n must equal 3f+1"));
        assert!(parse_scenario("n = 7\nf = 1").is_err());
    }

    #[test]
    fn byzantine_out_of_range() {
        let err = parse_scenario("n = 4\nbyzantine = 9:crash@0").unwrap_err();
        assert!(matches!(err, ScenarioError::ConfigInvalid { ref field, .. } if field == "byzantine"));
    }

    #[test]
    fn too_many_byzantine() {
        let err = parse_scenario("n = 4\nbyzantine = 1:crash@0, 2:silent-leader").unwrap_err();
        assert!(matches!(err, ScenarioError::ConfigInvalid { ref field, .. } if field == "byzantine"));
    }

    #[test]
    fn delta_bounds() {
        assert!(parse_scenario("delta = 100\ndelta_max = 200").is_err());
        assert!(parse_scenario("delta_min = 20\ndelta_max = 10").is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_scenario("n = 4\nnonsense\n").unwrap_err();
        assert_eq!(
            err,
            ScenarioError::Parse {
                line: 2,
                reason: "expected key = value, got \"nonsense\"".into()
            }
        );
        assert!(matches!(parse_scenario("colour = blue"), Err(ScenarioError::ConfigInvalid { .. })));
    }

    #[test]
    fn full_file() {
        let text = "
            # everything
            n = 7
            protocol = hotstuff3
            pacemaker = relayer
            gst = inf
            delta = 500
            delta_min = 5
            delta_max = 50
            payload_cost = 2
            pre_gst = random:300
            leader = seeded-random
            byzantine = 4:equivocator, 1:crash@100
            payload_units = 8
            seed = 99
            stop = horizon:40000
            aggregate = false
            mutation = drop-lock
        ";
        let c = parse_scenario(text).unwrap();
        assert_eq!(c.f, 2);
        assert_eq!(c.delay.gst, None);
        assert_eq!(c.delay.pre_gst, PreGstPolicy::RandomUpTo(300));
        assert_eq!(c.leaders, LeaderMode::SeededRandom(99));
        assert_eq!(
            c.byzantine,
            vec![
                (NodeId(1), ByzantineStrategy::Crash { at: 100 }),
                (NodeId(4), ByzantineStrategy::Equivocator)
            ]
        );
        assert_eq!(c.stop, StopCondition::Horizon(40000));
        assert!(!c.aggregate);
        assert_eq!(c.mutation, Mutation::DropLock);
    }

    #[test]
    fn presets_validate_and_can_be_overridden() {
        for p in PRESETS {
            ScenarioConfig::preset(p).unwrap().validate().unwrap();
        }
        let c = parse_scenario("seed = 3\npreset = leader-cascade\npacemaker = baseline").unwrap();
        assert_eq!(c.n, 7);
        assert_eq!(c.pacemaker, PacemakerKind::Baseline);
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn config_json_round_trip() {
        let c = ScenarioConfig::preset("equivocation").unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
