//! Experiment orchestration: attack suites over goal grids, metric
//! aggregation, and the file outputs behind the `snia` CLI.

pub mod outputs;
pub mod suite;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::GradSource;
use crate::error::{Result, SniaError};

pub use outputs::{read_reports_jsonl, write_heatmap_csv, write_manifest, write_reports_jsonl, write_sweep_csv, write_success_rates_csv};
pub use suite::{budget_sweep, goal_grid, heatmap_matrix, run_attack_suite, success_rates, SuiteInputs, SweepRow};

/// Attackers the suite can run. `Clean` is the no-op pseudo-attacker that
/// scores the unmodified graph and anchors the success-rate tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackerSpec {
    Clean,
    Random,
    MostAttr,
    OneShot(GradSource),
    Greedy(GradSource),
    Gsnia,
}

impl AttackerSpec {
    /// Parse a CLI attacker name; gradient attackers bind to the given
    /// source.
    pub fn parse(name: &str, grad_source: GradSource) -> Result<Self> {
        match name {
            "clean" => Ok(AttackerSpec::Clean),
            "random" => Ok(AttackerSpec::Random),
            "mostattr" => Ok(AttackerSpec::MostAttr),
            "oneshot" => Ok(AttackerSpec::OneShot(grad_source)),
            "greedy" => Ok(AttackerSpec::Greedy(grad_source)),
            "gsnia" => Ok(AttackerSpec::Gsnia),
            other => Err(SniaError::Usage(format!(
                "unknown attacker {other:?}; expected clean|random|mostattr|oneshot|greedy|gsnia"
            ))),
        }
    }

    /// Column name in CSV outputs.
    pub fn column_name(&self) -> String {
        match self {
            AttackerSpec::Clean => "clean".into(),
            AttackerSpec::Random => "random".into(),
            AttackerSpec::MostAttr => "mostattr".into(),
            AttackerSpec::OneShot(src) => format!("oneshot_{}", src_name(*src)),
            AttackerSpec::Greedy(src) => format!("greedy_{}", src_name(*src)),
            AttackerSpec::Gsnia => "gsnia".into(),
        }
    }
}

fn src_name(src: GradSource) -> &'static str {
    match src {
        GradSource::Victim => "whitebox",
        GradSource::Surrogate => "blackbox",
    }
}

/// One attack outcome: the unit of `reports.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackReport {
    pub target: usize,
    /// Targeted label y_t.
    pub label: usize,
    /// Victim's clean-graph prediction for the target (heatmap row key).
    pub clean_label: usize,
    pub attacker: String,
    pub victim: String,
    pub success: bool,
    /// Z[target, label] on the clean graph.
    pub clean_prob: f64,
    /// Z[target, label] at the attack's terminal state.
    pub final_prob: f64,
    /// final_prob - clean_prob, exactly.
    pub delta_prob: f64,
    pub steps: usize,
    /// Victim probability-row evaluations spent on this attack.
    pub queries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// Experiment configuration, readable from a `key = value` file (see
/// `ExperimentConfig::from_file`) with CLI flags taking precedence.
#[derive(Clone, Debug, Default)]
pub struct ExperimentConfig {
    pub dataset_dir: Option<PathBuf>,
    pub victim: Option<PathBuf>,
    pub surrogate: Option<PathBuf>,
    pub agent: Option<PathBuf>,
    pub attackers: Option<Vec<String>>,
    pub grad_source: Option<String>,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub num_targets: Option<usize>,
    pub labels: Option<Vec<usize>>,
    pub sweep_budgets: Option<Vec<usize>>,
    pub out_dir: Option<PathBuf>,
    pub timings: Option<bool>,
}

impl ExperimentConfig {
    /// Parse a config file of `key = value` lines; `#` starts a comment.
    /// Lists are comma-separated.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = ExperimentConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| SniaError::Parse {
                path: path.display().to_string(),
                line: ln + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "dataset_dir" => cfg.dataset_dir = Some(PathBuf::from(value)),
                "victim" => cfg.victim = Some(PathBuf::from(value)),
                "surrogate" => cfg.surrogate = Some(PathBuf::from(value)),
                "agent" => cfg.agent = Some(PathBuf::from(value)),
                "attackers" => cfg.attackers = Some(value.split(',').map(|s| s.trim().to_string()).collect()),
                "grad_source" => cfg.grad_source = Some(value.to_string()),
                "seed" => cfg.seed = Some(value.parse().map_err(|_| parse_err(format!("bad seed {value:?}")))?),
                "budget" => cfg.budget = Some(value.parse().map_err(|_| parse_err(format!("bad budget {value:?}")))?),
                "num_targets" => {
                    cfg.num_targets = Some(value.parse().map_err(|_| parse_err(format!("bad num_targets {value:?}")))?)
                }
                "labels" => {
                    let labels: std::result::Result<Vec<usize>, _> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    cfg.labels = Some(labels.map_err(|_| parse_err(format!("bad labels {value:?}")))?)
                }
                "sweep_budgets" => {
                    let budgets: std::result::Result<Vec<usize>, _> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    cfg.sweep_budgets = Some(budgets.map_err(|_| parse_err(format!("bad sweep_budgets {value:?}")))?)
                }
                "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                "timings" => {
                    cfg.timings = Some(
                        value
                            .parse()
                            .map_err(|_| parse_err(format!("bad bool {value:?}")))?,
                    )
                }
                other => return Err(parse_err(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }

    /// Canonical `key = value` rendering of the *set* fields, used for the
    /// manifest hash.
    pub fn canonical_string(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k, v);
            }
        };
        put("dataset_dir", self.dataset_dir.as_ref().map(|p| p.display().to_string()));
        put("victim", self.victim.as_ref().map(|p| p.display().to_string()));
        put("surrogate", self.surrogate.as_ref().map(|p| p.display().to_string()));
        put("agent", self.agent.as_ref().map(|p| p.display().to_string()));
        put("attackers", self.attackers.as_ref().map(|v| v.join(",")));
        put("grad_source", self.grad_source.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("budget", self.budget.map(|v| v.to_string()));
        put("num_targets", self.num_targets.map(|v| v.to_string()));
        put(
            "labels",
            self.labels
                .as_ref()
                .map(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")),
        );
        put(
            "sweep_budgets",
            self.sweep_budgets
                .as_ref()
                .map(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")),
        );
        put("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        put("timings", self.timings.map(|v| v.to_string()));
        map.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
