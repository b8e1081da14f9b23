//! A quick self-test of the whole pipeline on built-in fixtures.

use serde::Serialize;

use super::{run_experiment, ExperimentConfig, RUNNING_EXAMPLE_FORMULA};
use crate::automata::{determinize_kcba, is_sink_set, lasso_accepted_kcba, Letter};
use crate::bayes::{update_posteriors, Observation, ObservationStore, Priors};
use crate::learner::LearnerConfig;
use crate::ltl::{ltl_to_cba, parse_ltl};
use crate::planner::{risk_value_iteration, RiskEdge, RiskModel};
use crate::reach::TransientConfig;
use crate::rng::stream;
use crate::smdp::{DwellDistribution, SmdpBuilder};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Lassos over `letters` letters with `|stem| + |cycle| <= max_len`.
fn lassos(letters: u32, max_len: usize) -> Vec<(Vec<Letter>, Vec<Letter>)> {
    let mut out = Vec::new();
    for len in 1..=max_len {
        for code in 0..(letters as usize).pow(len as u32) {
            let word: Vec<Letter> = (0..len).map(|i| (code / (letters as usize).pow(i as u32) % letters as usize) as Letter).collect();
            for cut in 0..len {
                out.push((word[..cut].to_vec(), word[cut..].to_vec()));
            }
        }
    }
    out
}

fn check_determinization() -> CheckOutcome {
    let b = ltl_to_cba(&parse_ltl(RUNNING_EXAMPLE_FORMULA).expect("formula parses")).expect("tableau");
    let mut mismatches = 0;
    let mut structural = 0;
    let words = lassos(b.num_letters() as u32, 4);
    for k in 0..=2 {
        let d = determinize_kcba(&b, k).expect("determinization");
        let a = d.to_automaton();
        if !(a.is_deterministic() && a.is_complete() && is_sink_set(&a, &[d.sink()])) {
            structural += 1;
        }
        for (stem, cycle) in &words {
            let want = lasso_accepted_kcba(&b, k, stem, cycle).expect("valid lasso");
            if lasso_accepted_kcba(&a, 0, stem, cycle).expect("valid lasso") != want {
                mismatches += 1;
            }
        }
    }
    outcome(
        "determinization",
        mismatches == 0 && structural == 0,
        format!("{} lassos x 3 bounds, {mismatches} mismatches, {structural} structural violations", words.len()),
    )
}

fn check_estimation() -> CheckOutcome {
    let mut b = SmdpBuilder::new(vec!["x".into(), "y".into()], vec!["go".into()], vec![]);
    b.transition(0, 0, 0, 0.3, DwellDistribution::exponential(2.0)).expect("valid row");
    b.transition(0, 0, 1, 0.7, DwellDistribution::exponential(2.0)).expect("valid row");
    b.transition(1, 0, 1, 1.0, DwellDistribution::exponential(2.0)).expect("valid row");
    let m = b.build().expect("valid model");
    let mut rng = stream(1, &[]);
    let mut store = ObservationStore::with_capacity(0);
    for _ in 0..10_000 {
        let (next, tau) = m.sample_step(0, 0, &mut rng).expect("enabled");
        store.push(Observation { state: 0, action: 0, next, tau }).expect("finite dwell");
    }
    let post = update_posteriors(&store, Priors::default(), |_, _| true, |s| s, |_, _| Vec::new());
    let pred = post.predictive_transition(0, 0).expect("tracked");
    let tv = 0.5 * pred.iter().map(|&(t, pr)| (pr - m.prob(0, 0, t)).abs()).sum::<f64>();
    outcome("estimation", tv < 0.02, format!("total variation {tv:.4} after 10^4 samples"))
}

fn check_value_iteration() -> CheckOutcome {
    let rm = RiskModel::new(vec![vec![(0, vec![RiskEdge { target: 0, prob: 1.0, risk: 1.0 }])]], 0.9)
        .expect("valid model");
    let q = risk_value_iteration(&rm, 1e-11).expect("converges");
    let v = q.get(0, 0).expect("pair exists");
    outcome("risk value iteration", (v - 10.0).abs() < 1e-9, format!("self-loop value {v}"))
}

fn check_pipeline() -> CheckOutcome {
    let cfg = ExperimentConfig {
        learner: LearnerConfig { patience: 100, ..LearnerConfig::default() },
        transient: TransientConfig { episodes: 1000, ..TransientConfig::default() },
        sample_paths: 0,
        ..ExperimentConfig::desk()
    };
    match run_experiment(&cfg) {
        Ok(r) => {
            let s = &r.summary.runs[0];
            let ok = s.exact_match == Some(true) && s.vi_residual < 1e-9 && s.reach_gap.is_some_and(|g| g < 0.02);
            outcome(
                "desk pipeline",
                ok,
                format!(
                    "exact W_p: {:?}, reach gap {:?}, VI residual {:.1e}",
                    s.exact_match, s.reach_gap, s.vi_residual
                ),
            )
        }
        Err(e) => outcome("desk pipeline", false, e.to_string()),
    }
}

/// Run every check; all must pass.
pub fn self_check() -> Vec<CheckOutcome> {
    vec![check_determinization(), check_estimation(), check_value_iteration(), check_pipeline()]
}
