//! Experiment configuration: a JSON-serializable description of one batch of
//! protocol executions (pattern, colouring, thresholds, server behaviour,
//! trial count, seeding, parallelism, output path) plus its resolution into
//! the core types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vbqc::adversary::{Attack, NoiseModel, NoiseSchedule, ServerBehaviour};
use vbqc::graph::{bipartite_colouring, greedy_colouring, validate_colouring, Colouring};
use vbqc::pattern::{builtin, MeasurementPattern};
use vbqc::protocol::{ProtocolParams, RedoPolicy};
use vbqc::sim::Pauli;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown builtin pattern {0:?}")]
    UnknownBuiltin(String),
    #[error("cannot load pattern file: {0}")]
    Pattern(#[from] vbqc::pattern::PatternError),
    #[error("graph is not bipartite; pick greedy or explicit colouring")]
    NotBipartite,
    #[error("explicit colouring lists {got} classes, expected one per vertex ({expected})")]
    ColouringArity { got: usize, expected: usize },
    #[error("explicit colouring is not a proper colouring")]
    ImproperColouring,
    #[error("invalid parameters: {0}")]
    Params(#[from] vbqc::protocol::ProtocolError),
    #[error("invalid behaviour: {0}")]
    Behaviour(#[from] vbqc::adversary::AdversaryError),
    #[error("{0}")]
    Invalid(String),
}

/// How to colour the pattern graph for test runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ColouringSpec {
    /// Greedy proper colouring in vertex order (always succeeds, k <= D + 1).
    Greedy,
    /// Two-colouring; fails on non-bipartite graphs.
    #[default]
    Bipartite,
    /// Explicit classes, one entry per vertex in sorted vertex order.
    Explicit { assignment: Vec<usize> },
}

/// Thresholds for one protocol execution: `n = d + t` runs total, abort at
/// `w` failed test runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub d: usize,
    pub t: usize,
    pub w: usize,
}

/// Server behaviour during the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BehaviourSpec {
    /// Follows the protocol exactly.
    #[default]
    Honest,
    /// Honest operations plus one depolarizing hit per qubit at rate `p`.
    Depolarizing {
        p: f64,
        #[serde(default)]
        schedule: ScheduleSpec,
    },
    /// The one-vertex prefix attack: X on `target` in runs `0..m`,
    /// optionally on top of depolarizing noise.
    Sigma {
        m: usize,
        target: u32,
        #[serde(default)]
        noise: Option<f64>,
    },
    /// Arbitrary per-run, per-vertex Pauli deviations (keys are decimal
    /// strings because JSON object keys are strings).
    Custom { runs: BTreeMap<String, BTreeMap<String, PauliSpec>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleSpec {
    /// Noise strikes after entangling, right before each measurement.
    #[default]
    PostEntangle,
    /// Noise strikes as each qubit is prepared.
    PrePreparation,
}

impl From<ScheduleSpec> for NoiseSchedule {
    fn from(s: ScheduleSpec) -> NoiseSchedule {
        match s {
            ScheduleSpec::PostEntangle => NoiseSchedule::PostEntangle,
            ScheduleSpec::PrePreparation => NoiseSchedule::PrePreparation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliSpec {
    X,
    Y,
    Z,
}

impl From<PauliSpec> for Pauli {
    fn from(p: PauliSpec) -> Pauli {
        match p {
            PauliSpec::X => Pauli::X,
            PauliSpec::Y => Pauli::Y,
            PauliSpec::Z => Pauli::Z,
        }
    }
}

/// Redo behaviour and presampling for the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RedoSpec {
    /// Client redo rate, exercised only in the window before the first
    /// measurement angle is sent.
    pub client_rate: f64,
    /// Forced server redo rate (uniform position within the run).
    pub server_rate: f64,
    /// Cap on attempts per run before the batch errors out.
    pub max_attempts: u32,
    /// Per-qubit preparation success probability; when set, summaries report
    /// how many preparations to presample per run.
    pub p_succ: Option<f64>,
}

impl Default for RedoSpec {
    fn default() -> RedoSpec {
        RedoSpec { client_rate: 0.0, server_rate: 0.0, max_attempts: 64, p_succ: None }
    }
}

/// One batch of protocol executions, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `"builtin:<name>"` or a path to a pattern JSON file.
    pub pattern: String,
    #[serde(default)]
    pub colouring: ColouringSpec,
    pub params: ParamSpec,
    #[serde(default)]
    pub behaviour: BehaviourSpec,
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; defaults to one per logical CPU.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Where to write the summary (NDJSON); stdout when absent.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Classical input bits for the computation.
    #[serde(default)]
    pub inputs: Vec<bool>,
    #[serde(default)]
    pub redo: RedoSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        ExperimentConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Resolves the config into concrete core objects, validating everything.
    pub fn resolve(&self) -> Result<Experiment, ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        let pattern = load_pattern(&self.pattern)?;
        let colouring = self.resolve_colouring(&pattern)?;
        let params = ProtocolParams::new(
            self.params.d + self.params.t,
            self.params.d,
            self.params.t,
            self.params.w,
            colouring.k(),
        )?;
        let behaviour = self.resolve_behaviour()?;
        if self.inputs.len() != pattern.graph().inputs().len() {
            return Err(ConfigError::Invalid(format!(
                "pattern takes {} input bits, config provides {}",
                pattern.graph().inputs().len(),
                self.inputs.len()
            )));
        }
        let policy = RedoPolicy {
            client_rate: self.redo.client_rate,
            server_rate: self.redo.server_rate,
            max_attempts: self.redo.max_attempts,
        };
        Ok(Experiment {
            pattern_ref: self.pattern.clone(),
            pattern,
            colouring,
            params,
            behaviour,
            policy,
            inputs: self.inputs.clone(),
            trials: self.trials,
            seed: self.seed,
            jobs: self.jobs,
            out: self.out.clone(),
            p_succ: self.redo.p_succ,
        })
    }

    fn resolve_colouring(&self, pattern: &MeasurementPattern) -> Result<Colouring, ConfigError> {
        let graph = pattern.graph();
        match &self.colouring {
            ColouringSpec::Greedy => Ok(greedy_colouring(graph)),
            ColouringSpec::Bipartite => {
                bipartite_colouring(graph).ok_or(ConfigError::NotBipartite)
            }
            ColouringSpec::Explicit { assignment } => {
                if assignment.len() != graph.num_vertices() {
                    return Err(ConfigError::ColouringArity {
                        got: assignment.len(),
                        expected: graph.num_vertices(),
                    });
                }
                let k = assignment.iter().copied().max().unwrap_or(0) + 1;
                let map: BTreeMap<_, _> =
                    graph.sorted_vertices().zip(assignment.iter().copied()).collect();
                let colouring = Colouring::new(k, map);
                match validate_colouring(graph, &colouring) {
                    Ok(true) => Ok(colouring),
                    _ => Err(ConfigError::ImproperColouring),
                }
            }
        }
    }

    fn resolve_behaviour(&self) -> Result<ServerBehaviour, ConfigError> {
        Ok(match &self.behaviour {
            BehaviourSpec::Honest => ServerBehaviour::Honest,
            BehaviourSpec::Depolarizing { p, schedule } => ServerBehaviour::Noisy(
                NoiseModel::depolarizing(*p)?.with_schedule((*schedule).into()),
            ),
            BehaviourSpec::Sigma { m, target, noise } => {
                let attack = Attack::sigma_m(*m, *target);
                match noise {
                    Some(p) => {
                        ServerBehaviour::NoisyMalicious(NoiseModel::depolarizing(*p)?, attack)
                    }
                    None => ServerBehaviour::Malicious(attack),
                }
            }
            BehaviourSpec::Custom { runs } => {
                let mut per_run = BTreeMap::new();
                for (run, devs) in runs {
                    let run: usize = run
                        .parse()
                        .map_err(|_| ConfigError::Invalid(format!("bad run index {run:?}")))?;
                    let mut map = BTreeMap::new();
                    for (v, p) in devs {
                        let v: u32 = v.parse().map_err(|_| {
                            ConfigError::Invalid(format!("bad vertex index {v:?}"))
                        })?;
                        map.insert(v, Pauli::from(*p));
                    }
                    per_run.insert(run, map);
                }
                ServerBehaviour::Malicious(Attack::new(per_run))
            }
        })
    }
}

/// A fully resolved experiment, ready to execute.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// The config's pattern reference, kept for labelling summaries.
    pub pattern_ref: String,
    pub pattern: MeasurementPattern,
    pub colouring: Colouring,
    pub params: ProtocolParams,
    pub behaviour: ServerBehaviour,
    pub policy: RedoPolicy,
    pub inputs: Vec<bool>,
    pub trials: u64,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub p_succ: Option<f64>,
}

/// Loads `"builtin:<name>"` from the registry, anything else as a JSON file.
pub fn load_pattern(reference: &str) -> Result<MeasurementPattern, ConfigError> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        return builtin::by_name(name)
            .map(|(p, _)| p)
            .ok_or_else(|| ConfigError::UnknownBuiltin(name.to_string()));
    }
    Ok(MeasurementPattern::from_file(Path::new(reference))?)
}

/// The registry colouring (if any) for `"builtin:<name>"` references.
pub fn builtin_colouring(reference: &str) -> Option<Colouring> {
    builtin::by_name(reference.strip_prefix("builtin:")?).and_then(|(_, c)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "pattern": "builtin:five-vertex",
            "params": {"d": 4, "t": 4, "w": 1},
            "trials": 10,
            "seed": 7,
            "inputs": [false]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let exp = cfg.resolve().unwrap();
        assert_eq!(exp.params.n, 8);
        assert_eq!(exp.params.k, 2, "five-vertex is bipartite");
        assert!(matches!(exp.behaviour, ServerBehaviour::Honest));
        assert_eq!(exp.policy.max_attempts, 64);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = minimal_json().replace("\"seed\": 7", "\"seed\": 7, \"sneaky\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn explicit_colouring_must_be_proper() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let mut bad = cfg.clone();
        bad.colouring = ColouringSpec::Explicit { assignment: vec![0, 0, 1, 0, 1] };
        assert!(matches!(bad.resolve(), Err(ConfigError::ImproperColouring)));
        let mut good = cfg;
        good.colouring = ColouringSpec::Explicit { assignment: vec![0, 1, 2, 1, 0] };
        assert_eq!(good.resolve().unwrap().params.k, 3);
    }

    #[test]
    fn sigma_behaviour_resolves_to_attack() {
        let mut cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        cfg.behaviour = BehaviourSpec::Sigma { m: 4, target: 3, noise: None };
        let exp = cfg.resolve().unwrap();
        match exp.behaviour {
            ServerBehaviour::Malicious(a) => {
                assert!(a.deviations_for_run(3).is_some());
                assert!(a.deviations_for_run(4).is_none());
            }
            other => panic!("expected malicious behaviour, got {other:?}"),
        }
    }

    #[test]
    fn custom_behaviour_parses_string_keys() {
        let json = r#"{
            "pattern": "builtin:linear3-not",
            "params": {"d": 1, "t": 1, "w": 1},
            "behaviour": {"kind": "custom", "runs": {"0": {"2": "x"}}},
            "trials": 1,
            "seed": 1,
            "inputs": [true]
        }"#;
        let exp = ExperimentConfig::from_json(json).unwrap().resolve().unwrap();
        match exp.behaviour {
            ServerBehaviour::Malicious(a) => {
                assert_eq!(a.deviations_for_run(0).unwrap()[&2], Pauli::X);
            }
            other => panic!("expected malicious behaviour, got {other:?}"),
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn wrong_input_arity_is_rejected() {
        let mut cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        cfg.inputs = vec![true, false];
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let mut cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        cfg.trials = 0;
        assert!(cfg.resolve().is_err());
    }
}
