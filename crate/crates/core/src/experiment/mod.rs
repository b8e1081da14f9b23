//! End-to-end runs: learn `W^∞` and the model, learn `π̃_tr`, plan `π̃_win`,
//! and export the results.

mod check;
mod paths;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::automata::{determinize_kcba, AutomatonError};
use crate::bayes::RiskFunctional;
use crate::learner::{learn_winning_region, LearnerConfig, LearnerError, ProgressRow, PROGRESS_HEADER};
use crate::ltl::{ltl_to_cba, parse_ltl, ParseError};
use crate::planner::{
    combine_policy, evaluate_policy_risk, extract_pi_win, risk_value_iteration, ModelReport, PlanError, RiskModel,
    RiskQ, DEFAULT_RISK_DISCOUNT, DEFAULT_VI_TOLERANCE,
};
use crate::product::{
    exact_max_reach_probability, exact_winning_region, policy_reach_probability, ProdState, ProductError,
    ProductSmdp, WinningRegion,
};
use crate::reach::{extract_pi_tr, qlearn_transient, ReachError, RewardSpec, TransientConfig, TransientQ};
use crate::rng::{child_seed, stream};
use crate::smdp::{ActionId, GridConfig, ScenarioConfig, SmdpError};

pub use check::{self_check, CheckOutcome};
pub use paths::{export_sample_paths, PathHeader, PathRecord};

const PATHS_LABEL: u64 = 4;

/// Relative slack under which an action counts as optimal in the oracle.
pub const OPTIMALITY_SLACK: f64 = 1e-9;

pub const RUNNING_EXAMPLE_FORMULA: &str = "G F a & G F b & G !c";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Smdp(#[from] SmdpError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error("repetition {rep}: {source}")]
    Learner { rep: usize, source: LearnerError },
    #[error("repetition {rep}: {source}")]
    Reach { rep: usize, source: ReachError },
    #[error("repetition {rep}: {source}")]
    Plan { rep: usize, source: PlanError },
    #[error("oracle: {0}")]
    Oracle(PlanError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub formula: String,
    pub k: u32,
    pub reward: RewardSpec,
    pub gamma_r: f64,
    pub risk: RiskFunctional,
    pub learner: LearnerConfig,
    pub transient: TransientConfig,
    pub vi_tolerance: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub sample_paths: usize,
    pub path_horizon: usize,
    /// Oracles are computed only for products up to this many states.
    pub oracle_state_limit: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::desk()
    }
}

impl ExperimentConfig {
    /// 4×4 grid, K = 5: small enough for every oracle and for many seeds.
    pub fn desk() -> Self {
        ExperimentConfig {
            name: "desk".into(),
            scenario: ScenarioConfig::from_grid(GridConfig::desk()),
            formula: RUNNING_EXAMPLE_FORMULA.into(),
            k: 5,
            reward: RewardSpec::default(),
            gamma_r: DEFAULT_RISK_DISCOUNT,
            risk: RiskFunctional::MeanPlusSigma(1.0),
            learner: LearnerConfig::default(),
            transient: TransientConfig::default(),
            vi_tolerance: DEFAULT_VI_TOLERANCE,
            repetitions: 1,
            seed: 0,
            sample_paths: 10,
            path_horizon: 100,
            oracle_state_limit: 100_000,
            output_dir: PathBuf::from("out"),
        }
    }

    /// The 5×5 surveillance scenario at K = 20.
    pub fn paper_scale() -> Self {
        ExperimentConfig {
            name: "paper-scale".into(),
            scenario: ScenarioConfig::from_grid(GridConfig::running_example()),
            k: 20,
            learner: LearnerConfig { episodes: 20_000, ..LearnerConfig::default() },
            ..ExperimentConfig::desk()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.gamma_r) {
            return bad(format!("gamma_r {} outside [0, 1)", self.gamma_r));
        }
        if !(self.vi_tolerance > 0.0) {
            return bad(format!("vi_tolerance {} must be positive", self.vi_tolerance));
        }
        self.learner.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.transient.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.reward.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.risk.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, in hex.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse the formula, build `det(B, K)`, and form the product.
pub fn build_product(cfg: &ExperimentConfig) -> Result<ProductSmdp, ExperimentError> {
    let smdp = Arc::new(cfg.scenario.build()?);
    let cba = ltl_to_cba(&parse_ltl(&cfg.formula)?)?;
    let automaton = Arc::new(determinize_kcba(&cba, cfg.k)?);
    Ok(ProductSmdp::build(smdp, automaton)?)
}

/// Exact quantities used to score a run.
#[derive(Debug, Clone)]
pub struct Oracle {
    pub region: WinningRegion,
    /// `max_π Pr_π(reach W)`.
    pub max_reach: Vec<f64>,
    pub risk_model: RiskModel,
    pub risk_q: RiskQ,
    /// `min_π V^Risk_π` on `W`.
    pub value: Vec<Option<f64>>,
    /// Actions attaining the optimum: risk-minimal inside `W`,
    /// reach-maximal outside.
    pub optimal: Vec<Vec<ActionId>>,
}

impl Oracle {
    pub fn compute(prod: &ProductSmdp, f: RiskFunctional, gamma_r: f64, tol: f64) -> Result<Self, PlanError> {
        let region = exact_winning_region(prod);
        let max_reach = exact_max_reach_probability(prod, region.membership());
        let risk_model = RiskModel::exact(prod, &region, f, gamma_r)?;
        let risk_q = risk_value_iteration(&risk_model, tol)?;
        let mut optimal = Vec::with_capacity(prod.num_states());
        for p in 0..prod.num_states() {
            if region.contains(p) {
                let best = risk_q.min(p).expect("winning states have actions");
                let slack = OPTIMALITY_SLACK * best.abs().max(1.0);
                optimal.push(risk_q.row(p).iter().filter(|&&(_, v)| v <= best + slack).map(|&(a, _)| a).collect());
            } else {
                let slack = OPTIMALITY_SLACK * max_reach[p].max(1e-3);
                optimal.push(
                    prod.enabled_actions(p)
                        .filter(|&a| {
                            let v: f64 = prod.transitions(p, a).map(|(t, pr)| pr * max_reach[t]).sum();
                            v >= max_reach[p] - slack
                        })
                        .collect(),
                );
            }
        }
        let pi: Vec<ActionId> = extract_pi_win(&risk_q).into_iter().map(|a| a.unwrap_or(0)).collect();
        let value = evaluate_policy_risk(&risk_model, &pi)?;
        Ok(Oracle { region, max_reach, risk_model, risk_q, value, optimal })
    }

    pub fn to_json(&self, prod: &ProductSmdp) -> serde_json::Value {
        let mut doc = prod.to_json(Some(&self.region));
        doc["max_reach"] = serde_json::json!(self.max_reach);
        doc["risk_value"] = serde_json::json!(self.value);
        doc["optimal_actions"] = serde_json::json!(self.optimal);
        doc["vi_residual"] = serde_json::json!(self.risk_q.residual());
        doc
    }
}

/// Everything one repetition produces, minus the raw observations.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub seed: u64,
    pub region: WinningRegion,
    /// `W^∞` as planned over; see [`RiskModel::domain`].
    pub w_inf: Vec<bool>,
    pub transient_q: TransientQ,
    pub risk_q: RiskQ,
    pub model_report: ModelReport,
    pub pi_win: Vec<Option<ActionId>>,
    pub pi_tr: Vec<Option<ActionId>>,
    pub policy: Vec<ActionId>,
    pub progress: Vec<ProgressRow>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub episodes: usize,
    pub steps: u64,
    pub converged: bool,
    pub observations: u64,
    pub w: usize,
    pub w_p: usize,
    pub oracle_w: Option<usize>,
    pub oracle_w_p: Option<usize>,
    pub ind_final: Option<f64>,
    pub exact_match: Option<bool>,
    pub monotonicity_violations: usize,
    pub ind_monotone: Option<bool>,
    pub transient_tail_change: f64,
    pub transient_truncated_episodes: usize,
    /// Largest gap between `Pr_{π̃_tr}(reach W)` and the optimum over states
    /// outside `W^∞`.
    pub reach_gap: Option<f64>,
    pub vi_residual: f64,
    pub vi_sweeps: usize,
    pub model: ModelReport,
    /// Largest relative gap between `V^Risk` of `π̃*_γ` under the true model
    /// and the optimum, over the true `W`. `None` if the policy leaves `W`.
    pub risk_gap: Option<f64>,
    /// Fraction of product states where `π̃*_γ` picks an oracle-optimal action.
    pub action_agreement: Option<f64>,
}

/// One repetition: winning-region learning, transient Q-learning, risk value iteration,
/// and the combination, scored against `oracle` when given.
pub fn run_pipeline(
    prod: &ProductSmdp,
    cfg: &ExperimentConfig,
    seed: u64,
    oracle: Option<&Oracle>,
    rep: usize,
) -> Result<PipelineRun, ExperimentError> {
    let learned = learn_winning_region(prod, &cfg.learner, seed, oracle.map(|o| &o.region))
        .map_err(|source| ExperimentError::Learner { rep, source })?;
    let region = learned.estimate.region.clone();
    let plan = |e| ExperimentError::Plan { rep, source: e };
    let model = RiskModel::estimated(prod, &region, &learned.posteriors, cfg.risk, cfg.gamma_r).map_err(plan)?;
    let risk_q = risk_value_iteration(&model, cfg.vi_tolerance).map_err(plan)?;
    let pi_win = extract_pi_win(&risk_q);
    // equal to the learned W unless the estimated model had to be pruned
    let w_inf = model.domain();
    let transient_q = qlearn_transient(prod, &w_inf, &cfg.reward, &cfg.transient, seed)
        .map_err(|source| ExperimentError::Reach { rep, source })?;
    let pi_tr = extract_pi_tr(&transient_q);
    let policy = combine_policy(&pi_win, &pi_tr, &w_inf).map_err(plan)?;

    let ind: Vec<Option<f64>> = learned.progress.iter().map(|r| r.ind).collect();
    let ind_monotone = oracle.map(|_| ind.windows(2).all(|w| w[0] <= w[1]));
    let reach_gap = oracle.map(|o| {
        let got = policy_reach_probability(prod, &policy, o.region.membership());
        (0..prod.num_states())
            .filter(|&p| !w_inf[p])
            .map(|p| o.max_reach[p] - got[p])
            .fold(0.0, f64::max)
    });
    let risk_gap = oracle.and_then(|o| {
        let v = evaluate_policy_risk(&o.risk_model, &policy).ok()?;
        Some(
            o.region
                .state_ids()
                .into_iter()
                .map(|p| {
                    let best = o.value[p].expect("value on W");
                    (v[p].expect("value on W") - best).abs() / best.abs().max(1e-12)
                })
                .fold(0.0, f64::max),
        )
    });
    let action_agreement = oracle.map(|o| {
        let hits = (0..prod.num_states()).filter(|&p| o.optimal[p].contains(&policy[p])).count();
        hits as f64 / prod.num_states() as f64
    });
    let summary = RunSummary {
        seed,
        episodes: learned.episodes,
        steps: learned.steps,
        converged: learned.converged,
        observations: learned.observations.len(),
        w: region.num_states(),
        w_p: region.num_pairs(),
        oracle_w: oracle.map(|o| o.region.num_states()),
        oracle_w_p: oracle.map(|o| o.region.num_pairs()),
        ind_final: oracle.and_then(|o| crate::learner::ind_k(&o.region, &region)),
        exact_match: oracle.map(|o| o.region == region),
        monotonicity_violations: learned.monotonicity_violations,
        ind_monotone,
        transient_tail_change: transient_q.tail_change,
        transient_truncated_episodes: transient_q.truncated_episodes,
        reach_gap,
        vi_residual: risk_q.residual(),
        vi_sweeps: risk_q.sweeps(),
        model: model.report.clone(),
        risk_gap,
        action_agreement,
    };
    Ok(PipelineRun {
        seed,
        region,
        w_inf,
        transient_q,
        risk_q,
        model_report: model.report,
        pi_win,
        pi_tr,
        policy,
        progress: learned.progress,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub repetitions: usize,
    pub converged: usize,
    pub exact_matches: Option<usize>,
    pub mean_ind_final: Option<f64>,
    pub mean_episodes: f64,
    pub mean_observations: f64,
    pub max_reach_gap: Option<f64>,
    pub max_vi_residual: f64,
    pub monotonicity_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub product_states: usize,
    pub automaton_states: usize,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

/// Per-episode means over the repetitions. A run that stopped early keeps
/// contributing its final values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndRow {
    pub episode: usize,
    pub ind: Option<f64>,
    pub w_p: f64,
    pub w: f64,
    pub active: usize,
}

pub fn mean_curves(runs: &[&[ProgressRow]]) -> Vec<IndRow> {
    let longest = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let rows: Vec<&ProgressRow> = runs.iter().filter_map(|r| r.get(i).or(r.last())).collect();
            let n = rows.len() as f64;
            let ind = rows.iter().map(|r| r.ind).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n);
            IndRow {
                episode: i + 1,
                ind,
                w_p: rows.iter().map(|r| r.w_p as f64).sum::<f64>() / n,
                w: rows.iter().map(|r| r.w as f64).sum::<f64>() / n,
                active: runs.iter().filter(|r| r.len() > i).count(),
            }
        })
        .collect()
}

pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub product: ProductSmdp,
    pub oracle: Option<Oracle>,
    pub runs: Vec<PipelineRun>,
    pub summary: Summary,
}

/// Build the pipeline, run every repetition in parallel with its own seed,
/// and collect the results in repetition order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let prod = build_product(cfg)?;
    let oracle = if prod.num_states() <= cfg.oracle_state_limit {
        Some(Oracle::compute(&prod, cfg.risk, cfg.gamma_r, cfg.vi_tolerance).map_err(ExperimentError::Oracle)?)
    } else {
        None
    };
    let runs = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_pipeline(&prod, cfg, child_seed(cfg.seed, rep as u64), oracle.as_ref(), rep))
        .collect::<Result<Vec<_>, _>>()?;
    let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    let n = summaries.len() as f64;
    let aggregate = Aggregate {
        repetitions: summaries.len(),
        converged: summaries.iter().filter(|s| s.converged).count(),
        exact_matches: oracle.as_ref().map(|_| summaries.iter().filter(|s| s.exact_match == Some(true)).count()),
        mean_ind_final: summaries
            .iter()
            .map(|s| s.ind_final)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / n),
        mean_episodes: summaries.iter().map(|s| s.episodes as f64).sum::<f64>() / n,
        mean_observations: summaries.iter().map(|s| s.observations as f64).sum::<f64>() / n,
        max_reach_gap: summaries.iter().map(|s| s.reach_gap).collect::<Option<Vec<f64>>>().map(|v| {
            v.into_iter().fold(0.0, f64::max)
        }),
        max_vi_residual: summaries.iter().map(|s| s.vi_residual).fold(0.0, f64::max),
        monotonicity_violations: summaries.iter().map(|s| s.monotonicity_violations).sum(),
    };
    let summary = Summary {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        product_states: prod.num_states(),
        automaton_states: prod.automaton().num_states(),
        runs: summaries,
        aggregate,
    };
    Ok(ExperimentResult { config: cfg.clone(), product: prod, oracle, runs, summary })
}

impl ExperimentResult {
    pub fn indk_csv(&self) -> String {
        let curves: Vec<&[ProgressRow]> = self.runs.iter().map(|r| r.progress.as_slice()).collect();
        let mut out = String::from("k,ind_mean,W_p_mean,W_mean,active_runs\n");
        for row in mean_curves(&curves) {
            let ind = row.ind.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", row.episode, ind, row.w_p, row.w, row.active));
        }
        out
    }

    pub fn progress_csv(&self) -> String {
        let mut out = format!("rep,{PROGRESS_HEADER}\n");
        for (rep, run) in self.runs.iter().enumerate() {
            for row in &run.progress {
                out.push_str(&format!("{rep},{}\n", row.csv()));
            }
        }
        out
    }

    /// The combined policy of the first repetition, with the values it was
    /// chosen from and its provenance.
    pub fn policy_json(&self) -> serde_json::Value {
        let prod = &self.product;
        let run = &self.runs[0];
        let smdp = prod.smdp();
        let entries: Vec<serde_json::Value> = (0..prod.num_states())
            .map(|p: ProdState| {
                let in_w = run.w_inf[p];
                let value = if in_w { run.risk_q.min(p) } else { Some(run.transient_q.max(p)) };
                serde_json::json!({
                    "id": p,
                    "state": smdp.state_name(prod.smdp_state(p)),
                    "automaton": prod.components(p).1,
                    "in_w": in_w,
                    "action": smdp.action_name(run.policy[p]),
                    "value": value,
                })
            })
            .collect();
        serde_json::json!({
            "provenance": {
                "config_hash": self.summary.config_hash,
                "master_seed": self.config.seed,
                "run_seed": run.seed,
                "observations": run.summary.observations,
                "episodes": run.summary.episodes,
                "vi_residual": run.risk_q.residual(),
                "vi_sweeps": run.risk_q.sweeps(),
                "transient_tail_change": run.transient_q.tail_change,
                "model": run.model_report,
            },
            "policy": entries,
        })
    }

    pub fn sample_paths(&self) -> Vec<String> {
        let run = &self.runs[0];
        let mut rng = stream(run.seed, &[PATHS_LABEL]);
        export_sample_paths(
            &self.product,
            &run.policy,
            &run.w_inf,
            self.config.sample_paths,
            self.config.path_horizon,
            &mut rng,
        )
    }

    /// Write indk.csv, progress.csv, policy.json, paths.jsonl, summary.json,
    /// and oracle.json when an oracle was computed.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut files = vec![
            ("indk.csv", self.indk_csv()),
            ("progress.csv", self.progress_csv()),
            ("policy.json", pretty(&self.policy_json())),
            ("paths.jsonl", self.sample_paths().join("\n") + "\n"),
            ("summary.json", pretty(&serde_json::to_value(&self.summary).expect("summary serializes"))),
        ];
        if let Some(o) = &self.oracle {
            files.push(("oracle.json", pretty(&o.to_json(&self.product))));
        }
        write_files(dir, &files)
    }
}

fn pretty(doc: &serde_json::Value) -> String {
    serde_json::to_string_pretty(doc).expect("json serializes") + "\n"
}

pub fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>, ExperimentError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
