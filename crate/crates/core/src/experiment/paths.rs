//! Plot-ready sample paths under a positional policy.

use serde::Serialize;

use crate::product::{ProdState, ProductSmdp};
use crate::rng::Rng;
use crate::smdp::ActionId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathHeader {
    pub record: &'static str,
    pub paths: usize,
    pub horizon: usize,
    pub actions: Vec<String>,
    pub ap: Vec<String>,
}

/// One path: `states[0] --actions[0], dwell[0]--> states[1] ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub record: &'static str,
    pub id: usize,
    pub product: Vec<ProdState>,
    pub states: Vec<String>,
    pub automaton: Vec<u32>,
    pub labels: Vec<Vec<String>>,
    pub actions: Vec<String>,
    pub dwell: Vec<f64>,
    pub accepting: Vec<bool>,
    /// First position inside `W^∞`, if any.
    pub entered_w: Option<usize>,
}

/// `n` paths of `horizon` steps from the initial product state. The first
/// line is a header record, so `n = 0` still yields one line.
pub fn export_sample_paths(
    prod: &ProductSmdp,
    policy: &[ActionId],
    w_inf: &[bool],
    n: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Vec<String> {
    let smdp = prod.smdp();
    let header = PathHeader {
        record: "header",
        paths: n,
        horizon,
        actions: smdp.action_names().to_vec(),
        ap: smdp.ap().to_vec(),
    };
    let mut lines = vec![serde_json::to_string(&header).expect("header serializes")];
    for id in 0..n {
        let mut p = prod.initial();
        let mut product = vec![p];
        let mut actions = Vec::with_capacity(horizon);
        let mut dwell = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let a = policy[p];
            let (next, _, tau) = prod.sample_step(p, a, rng);
            actions.push(smdp.action_name(a).to_string());
            dwell.push(tau);
            product.push(next);
            p = next;
        }
        let record = PathRecord {
            record: "path",
            id,
            states: product.iter().map(|&x| smdp.state_name(prod.smdp_state(x)).to_string()).collect(),
            automaton: product.iter().map(|&x| prod.components(x).1).collect(),
            labels: product.iter().map(|&x| smdp.label_atoms(prod.smdp_state(x))).collect(),
            accepting: product.iter().map(|&x| prod.is_accepting(x)).collect(),
            entered_w: product.iter().position(|&x| w_inf[x]),
            product,
            actions,
            dwell,
        };
        lines.push(serde_json::to_string(&record).expect("path serializes"));
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::fixtures::m1_product;
    use crate::rng::stream;

    #[test]
    fn header_only_without_paths() {
        let p = m1_product();
        let lines = export_sample_paths(&p, &[0, 0], &[true, false], 0, 10, &mut stream(0, &[]));
        assert_eq!(lines.len(), 1);
        let doc: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(doc["record"], "header");
        assert_eq!(doc["paths"], 0);
    }

    #[test]
    fn zero_horizon_gives_single_state_records() {
        let p = m1_product();
        let lines = export_sample_paths(&p, &[0, 0], &[true, false], 3, 0, &mut stream(0, &[]));
        assert_eq!(lines.len(), 4);
        for line in &lines[1..] {
            let doc: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(doc["states"], serde_json::json!(["s0"]));
            assert_eq!(doc["actions"], serde_json::json!([]));
            assert_eq!(doc["entered_w"], 0);
        }
    }

    #[test]
    fn paths_follow_the_policy() {
        let p = m1_product();
        let lines = export_sample_paths(&p, &[1, 0], &[true, false], 1, 3, &mut stream(0, &[]));
        let doc: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        assert_eq!(doc["states"], serde_json::json!(["s0", "s1", "s1", "s1"]));
        assert_eq!(doc["actions"], serde_json::json!(["b", "a", "a"]));
        assert_eq!(doc["accepting"], serde_json::json!([false, true, true, true]));
        assert_eq!(doc["labels"][1], serde_json::json!(["c"]));
        assert_eq!(doc["dwell"].as_array().unwrap().len(), 3);
    }
}
