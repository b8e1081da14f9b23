//! Exploration policies over the currently allowed actions.

use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::bayes::PosteriorStore;
use crate::product::{ProdState, ProductSmdp};
use crate::smdp::{ActionId, StateId};

/// Predictive mass below this does not count as support.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationParams {
    /// Softmax temperature `θ_e`.
    pub temperature: f64,
    /// Weight of the uniform component mixed into every distribution.
    pub epsilon: f64,
}

impl Default for ExplorationParams {
    fn default() -> Self {
        ExplorationParams { temperature: 1.0, epsilon: 0.05 }
    }
}

/// Posterior quantities the policies read at every step, computed once per
/// posterior update.
#[derive(Debug, Clone)]
pub struct PosteriorView {
    num_actions: usize,
    score: Vec<f64>,
    predictive: Vec<Option<Vec<(StateId, f64)>>>,
}

impl PosteriorView {
    pub fn new(post: &PosteriorStore, num_states: usize, num_actions: usize) -> Self {
        let mut score = Vec::with_capacity(num_states * num_actions);
        let mut predictive = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                score.push(post.exploration_score(s, a));
                predictive.push(post.predictive_transition(s, a).ok());
            }
        }
        PosteriorView { num_actions, score, predictive }
    }

    /// Entropy score of `(s, a)`; see [`PosteriorStore::exploration_score`].
    pub fn score(&self, s: StateId, a: ActionId) -> f64 {
        self.score[s * self.num_actions + a]
    }

    /// `T̃(·|s,a)`, or `None` while the pair has no data.
    pub fn predictive(&self, s: StateId, a: ActionId) -> Option<&[(StateId, f64)]> {
        self.predictive[s * self.num_actions + a].as_deref()
    }

    /// Successors of `(s, a)` with predictive mass above
    /// [`SUPPORT_THRESHOLD`], or `None` while the pair has no data.
    pub fn support(&self, s: StateId, a: ActionId) -> Option<Vec<StateId>> {
        self.predictive(s, a)
            .map(|row| row.iter().filter(|&&(_, m)| m > SUPPORT_THRESHOLD).map(|&(t, _)| t).collect())
    }

    /// `Σ_{p' ∉ W} T̃⊗(p'|p,a)`. A pair without data has unknown support
    /// and counts as leaving with certainty.
    pub fn out_mass(&self, prod: &ProductSmdp, p: ProdState, a: ActionId, w: &[bool]) -> f64 {
        let Some(row) = self.predictive(prod.smdp_state(p), a) else {
            return 1.0;
        };
        row.iter()
            .filter(|&&(t, _)| !prod.lift(p, t).is_some_and(|q| w[q]))
            .map(|&(_, m)| m)
            .sum()
    }

    /// Whether `(p, a)` may lead outside `W`: some successor with predictive
    /// mass above [`SUPPORT_THRESHOLD`] lies outside, or the pair has no data.
    pub fn may_leave(&self, prod: &ProductSmdp, p: ProdState, a: ActionId, w: &[bool]) -> bool {
        match self.predictive(prod.smdp_state(p), a) {
            None => true,
            Some(row) => row
                .iter()
                .any(|&(t, m)| m > SUPPORT_THRESHOLD && !prod.lift(p, t).is_some_and(|q| w[q])),
        }
    }
}

/// `π(a) ∝ exp(score(a)/θ_e)`, mixed with weight `ε` into the uniform
/// distribution over the same actions.
pub fn softmax_mix(scores: &[f64], params: ExplorationParams) -> Result<Vec<f64>, LearnerError> {
    if scores.is_empty() {
        return Err(LearnerError::NoAllowedAction);
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|&x| ((x - top) / params.temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let uniform = 1.0 / scores.len() as f64;
    Ok(weights.iter().map(|w| (1.0 - params.epsilon) * w / total + params.epsilon * uniform).collect())
}

/// `π_ent` at `p` over `allowed`, aligned with `allowed`.
pub fn pi_ent(
    view: &PosteriorView,
    prod: &ProductSmdp,
    p: ProdState,
    allowed: &[ActionId],
    params: ExplorationParams,
) -> Result<Vec<f64>, LearnerError> {
    let s = prod.smdp_state(p);
    let scores: Vec<f64> = allowed.iter().map(|&a| view.score(s, a)).collect();
    softmax_mix(&scores, params)
}

/// `π_W⊥` at `p` over `allowed`: favors the predictive mass leaving `W`.
pub fn pi_wperp(
    view: &PosteriorView,
    prod: &ProductSmdp,
    p: ProdState,
    allowed: &[ActionId],
    w: &[bool],
    params: ExplorationParams,
) -> Result<Vec<f64>, LearnerError> {
    let scores: Vec<f64> = allowed.iter().map(|&a| view.out_mass(prod, p, a, w)).collect();
    softmax_mix(&scores, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exact(t: f64, eps: f64) -> ExplorationParams {
        ExplorationParams { temperature: t, epsilon: eps }
    }

    #[test]
    fn equal_scores_are_uniform() {
        assert_eq!(softmax_mix(&[0.3, 0.3], exact(1.0, 0.0)).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax_mix(&[0.0, 0.0, 0.0, 0.0], exact(1.0, 0.05)).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn low_temperature_concentrates_on_the_argmax() {
        let pi = softmax_mix(&[0.2, 0.7, 0.1], exact(1e-6, 0.0)).unwrap();
        assert!((pi[1] - 1.0).abs() < 1e-12);
        let pi = softmax_mix(&[1.0, 0.0], exact(0.1, 0.0)).unwrap();
        // e^{-10} / (1 + e^{-10})
        assert!(pi[1] < 1e-4);
        assert!((pi[0] - 1.0 / (1.0 + (-10f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn empty_action_set_is_an_error() {
        assert!(matches!(softmax_mix(&[], exact(1.0, 0.0)), Err(LearnerError::NoAllowedAction)));
    }

    proptest! {
        #[test]
        fn softmax_is_a_monotone_distribution(
            scores in prop::collection::vec(-5.0f64..5.0, 1..6),
            temperature in 0.05f64..5.0,
            epsilon in 0.0f64..0.5,
        ) {
            let pi = softmax_mix(&scores, exact(temperature, epsilon)).unwrap();
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let floor = epsilon / scores.len() as f64;
            for (i, &x) in pi.iter().enumerate() {
                prop_assert!(x >= floor - 1e-15);
                for (j, &y) in pi.iter().enumerate() {
                    if scores[i] <= scores[j] {
                        prop_assert!(x <= y + 1e-15, "score {} <= {} but pi {} > {}", scores[i], scores[j], x, y);
                    }
                }
            }
        }
    }
}
