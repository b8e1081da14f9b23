//! Risk-minimizing control inside the winning region, and the combined
//! policy `π̃*_γ`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::bayes::{risk_of, BayesError, PosteriorStore, RiskFunctional};
use crate::product::{ProdState, ProductSmdp, WinningRegion};
use crate::smdp::{ActionId, ROW_TOLERANCE};

/// Used in place of a functional whose moments do not exist for a
/// predictive law.
pub const FALLBACK_FUNCTIONAL: RiskFunctional = RiskFunctional::Quantile(0.05);

pub const DEFAULT_RISK_DISCOUNT: f64 = 0.9;
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-11;
const MAX_SWEEPS: usize = 1_000_000;
const DENSE_SOLVE_LIMIT: usize = 3000;
const EVAL_TOLERANCE: f64 = 1e-12;

// relative slack under which two Q values count as tied
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("risk of ({state}, {action}, {target}) is {value}")]
    NonfiniteRisk { state: ProdState, action: ActionId, target: ProdState, value: f64 },
    #[error("state {0} lies in W but has no allowed action")]
    EmptyActionSet(ProdState),
    #[error("row ({state}, {action}) sums to {sum}")]
    NotStochastic { state: ProdState, action: ActionId, sum: f64 },
    #[error("({state}, {action}) leads to {target}, which is outside W")]
    TargetOutsideW { state: ProdState, action: ActionId, target: ProdState },
    #[error("policy action {action} at {state} is not in A_φ")]
    PolicyLeavesW { state: ProdState, action: ActionId },
    #[error("state {0} is covered by neither π_win nor π_tr")]
    DomainGap(ProdState),
    #[error("invalid planner parameter: {0}")]
    Config(String),
    #[error("value iteration did not reach tolerance {tol} within {sweeps} sweeps")]
    NoConvergence { tol: f64, sweeps: usize },
    #[error(transparent)]
    Estimate(#[from] BayesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEdge {
    pub target: ProdState,
    pub prob: f64,
    pub risk: f64,
}

/// How an estimated model was patched to stay inside `W`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModelReport {
    /// Pairs whose predictive mass partly left `W` and was renormalized.
    pub renormalized_pairs: usize,
    pub max_escaped_mass: f64,
    /// Triples whose risk used [`FALLBACK_FUNCTIONAL`].
    pub moment_fallbacks: usize,
    /// `W_p` pairs without any posterior, left out of `A_φ`.
    pub unestimated_pairs: usize,
    /// Pairs whose predictive mass all leaves `W`, left out of `A_φ`.
    pub escaping_pairs: usize,
    /// States of the learned `W` left without any pair, left out of `W`.
    pub pruned_states: usize,
}

/// `T̃` and `R̃isk` on `W_p^∞`, the discount `γ_r`, and `A_φ`.
///
/// `rows[p]` lists `(a, edges)` for `a ∈ A_φ(p)` in increasing `a`; it is
/// empty exactly when `p ∉ W`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    gamma_r: f64,
    rows: Vec<Vec<(ActionId, Vec<RiskEdge>)>>,
    pub report: ModelReport,
}

impl RiskModel {
    pub fn new(rows: Vec<Vec<(ActionId, Vec<RiskEdge>)>>, gamma_r: f64) -> Result<Self, PlanError> {
        if !(0.0..1.0).contains(&gamma_r) {
            return Err(PlanError::Config(format!("risk discount {gamma_r} outside [0, 1)")));
        }
        let mut rows = rows;
        for row in &mut rows {
            row.sort_by_key(|&(a, _)| a);
        }
        let in_w: Vec<bool> = rows.iter().map(|r| !r.is_empty()).collect();
        for (p, row) in rows.iter().enumerate() {
            for (a, edges) in row {
                let sum: f64 = edges.iter().map(|e| e.prob).sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE || edges.iter().any(|e| !(e.prob >= 0.0)) {
                    return Err(PlanError::NotStochastic { state: p, action: *a, sum });
                }
                for e in edges {
                    if !in_w.get(e.target).copied().unwrap_or(false) {
                        return Err(PlanError::TargetOutsideW { state: p, action: *a, target: e.target });
                    }
                    if !(e.risk.is_finite() && e.risk >= 0.0) {
                        return Err(PlanError::NonfiniteRisk { state: p, action: *a, target: e.target, value: e.risk });
                    }
                }
            }
        }
        Ok(RiskModel { gamma_r, rows, report: ModelReport::default() })
    }

    /// The model the planner sees: `T̃⊗` and `f(D̃)` from the posteriors,
    /// restricted to the pairs of `region`. Predictive mass that leaves `W`
    /// is dropped and the rest renormalized. A pair whose mass all leaves is
    /// removed from `A_φ`, and a state left without pairs is removed from
    /// `W`, until every remaining pair keeps some mass inside.
    pub fn estimated(
        prod: &ProductSmdp,
        region: &WinningRegion,
        post: &PosteriorStore,
        f: RiskFunctional,
        gamma_r: f64,
    ) -> Result<Self, PlanError> {
        f.validate()?;
        let w = region.membership();
        let mut report = ModelReport::default();
        let mut candidates: Vec<Vec<(ActionId, Vec<RiskEdge>)>> = vec![Vec::new(); prod.num_states()];
        for p in region.state_ids() {
            let s = prod.smdp_state(p);
            for a in region.allowed_actions(p) {
                if !post.is_tracked(s, a) {
                    report.unestimated_pairs += 1;
                    continue;
                }
                let mut edges = Vec::new();
                for (t, m) in post.predictive_transition(s, a)? {
                    // mass with no materialized or winning target keeps `target = usize::MAX`
                    let Some(q) = prod.lift(p, t).filter(|&q| w[q]) else {
                        edges.push(RiskEdge { target: usize::MAX, prob: m, risk: 0.0 });
                        continue;
                    };
                    let law = post.predictive_dwell(s, a, t)?;
                    let risk = match risk_of(&law, f) {
                        Err(BayesError::MomentUndefined { .. }) => {
                            report.moment_fallbacks += 1;
                            risk_of(&law, FALLBACK_FUNCTIONAL)?
                        }
                        r => r?,
                    };
                    edges.push(RiskEdge { target: q, prob: m, risk });
                }
                candidates[p].push((a, edges));
            }
        }
        let mut domain: Vec<bool> = candidates.iter().map(|c| !c.is_empty()).collect();
        loop {
            let mut shrunk = false;
            for p in 0..candidates.len() {
                if !domain[p] {
                    continue;
                }
                let keeps = |edges: &[RiskEdge]| edges.iter().any(|e| e.target != usize::MAX && domain[e.target]);
                if !candidates[p].iter().any(|(_, edges)| keeps(edges)) {
                    domain[p] = false;
                    shrunk = true;
                }
            }
            if !shrunk {
                break;
            }
        }
        let mut rows = vec![Vec::new(); prod.num_states()];
        for (p, pairs) in candidates.into_iter().enumerate() {
            if !domain[p] {
                if w[p] {
                    report.pruned_states += 1;
                }
                continue;
            }
            for (a, edges) in pairs {
                let (kept, lost): (Vec<RiskEdge>, Vec<RiskEdge>) =
                    edges.into_iter().partition(|e| e.target != usize::MAX && domain[e.target]);
                if kept.is_empty() {
                    report.escaping_pairs += 1;
                    continue;
                }
                let escaped: f64 = lost.iter().map(|e| e.prob).sum();
                let mut kept = kept;
                if escaped > 0.0 {
                    report.renormalized_pairs += 1;
                    report.max_escaped_mass = report.max_escaped_mass.max(escaped);
                    let total: f64 = kept.iter().map(|e| e.prob).sum();
                    for e in &mut kept {
                        e.prob /= total;
                    }
                }
                rows[p].push((a, kept));
            }
        }
        let mut model = RiskModel::new(rows, gamma_r)?;
        model.report = report;
        Ok(model)
    }

    /// `W^∞` as planned over: the learned `W` minus pruned states.
    pub fn domain(&self) -> Vec<bool> {
        self.rows.iter().map(|r| !r.is_empty()).collect()
    }

    /// The model with the true `T⊗` and `f(D)`, restricted to `region`.
    pub fn exact(prod: &ProductSmdp, region: &WinningRegion, f: RiskFunctional, gamma_r: f64) -> Result<Self, PlanError> {
        f.validate()?;
        let mut rows = vec![Vec::new(); prod.num_states()];
        for p in region.state_ids() {
            for a in region.allowed_actions(p) {
                let mut edges = Vec::new();
                for (&q, t) in prod.successor_states(p, a).iter().zip(prod.smdp_row(p, a)) {
                    let risk = match risk_of(&t.dwell, f) {
                        Err(BayesError::MomentUndefined { .. }) => risk_of(&t.dwell, FALLBACK_FUNCTIONAL)?,
                        r => r?,
                    };
                    edges.push(RiskEdge { target: q, prob: t.prob, risk });
                }
                rows[p].push((a, edges));
            }
            if rows[p].is_empty() {
                return Err(PlanError::EmptyActionSet(p));
            }
        }
        RiskModel::new(rows, gamma_r)
    }

    pub fn gamma_r(&self) -> f64 {
        self.gamma_r
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn in_w(&self, p: ProdState) -> bool {
        !self.rows[p].is_empty()
    }

    pub fn w_states(&self) -> impl Iterator<Item = ProdState> + '_ {
        (0..self.rows.len()).filter(|&p| self.in_w(p))
    }

    /// `A_φ(p)` in increasing order.
    pub fn allowed(&self, p: ProdState) -> impl Iterator<Item = ActionId> + '_ {
        self.rows[p].iter().map(|(a, _)| *a)
    }

    pub fn edges(&self, p: ProdState, a: ActionId) -> Option<&[RiskEdge]> {
        self.rows[p].iter().find(|(b, _)| *b == a).map(|(_, e)| e.as_slice())
    }

    pub fn max_risk(&self) -> f64 {
        self.rows.iter().flatten().flat_map(|(_, e)| e).map(|e| e.risk).fold(0.0, f64::max)
    }

    /// `Σ T̃(p'|p,a) R̃isk(p,a,p')`.
    pub fn expected_risk(&self, p: ProdState, a: ActionId) -> Option<f64> {
        self.edges(p, a).map(|es| es.iter().map(|e| e.prob * e.risk).sum())
    }
}

/// `Q̃^Risk` on `W_p^∞`, aligned with the rows of its [`RiskModel`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskQ {
    values: Vec<Vec<(ActionId, f64)>>,
    /// Sup-norm Bellman residual before each sweep; the last entry is the
    /// residual of the returned table.
    pub residuals: Vec<f64>,
}

impl RiskQ {
    pub fn get(&self, p: ProdState, a: ActionId) -> Option<f64> {
        self.values[p].iter().find(|(b, _)| *b == a).map(|&(_, v)| v)
    }

    pub fn row(&self, p: ProdState) -> &[(ActionId, f64)] {
        &self.values[p]
    }

    /// `min_{a ∈ A_φ(p)} Q(p,a)`, `None` outside `W`.
    pub fn min(&self, p: ProdState) -> Option<f64> {
        self.values[p].iter().map(|&(_, v)| v).reduce(f64::min)
    }

    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    pub fn sweeps(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }
}

fn backup(rm: &RiskModel, edges: &[RiskEdge], v: &[f64]) -> f64 {
    edges.iter().map(|e| e.prob * (e.risk + rm.gamma_r * v[e.target])).sum()
}

/// Jacobi value iteration for
/// `Q(p,a) = Σ T̃(p'|p,a) (R̃isk(p,a,p') + γ_r min_{a'} Q(p',a'))`
/// from `Q = 0`, until the Bellman residual drops below `tol`.
pub fn risk_value_iteration(rm: &RiskModel, tol: f64) -> Result<RiskQ, PlanError> {
    if !(tol > 0.0) {
        return Err(PlanError::Config(format!("tolerance {tol} must be positive")));
    }
    let mut q = RiskQ {
        values: rm.rows.iter().map(|row| row.iter().map(|(a, _)| (*a, 0.0)).collect()).collect(),
        residuals: Vec::new(),
    };
    let mut v = vec![0.0; rm.num_states()];
    for _ in 0..MAX_SWEEPS {
        for (p, x) in v.iter_mut().enumerate() {
            *x = q.min(p).unwrap_or(0.0);
        }
        let mut next = q.values.clone();
        let mut residual: f64 = 0.0;
        for (p, row) in rm.rows.iter().enumerate() {
            for (i, (_, edges)) in row.iter().enumerate() {
                let x = backup(rm, edges, &v);
                residual = residual.max((x - q.values[p][i].1).abs());
                next[p][i].1 = x;
            }
        }
        q.residuals.push(residual);
        if residual < tol {
            return Ok(q);
        }
        q.values = next;
    }
    Err(PlanError::NoConvergence { tol, sweeps: MAX_SWEEPS })
}

/// `π̃_win(p) ∈ argmin_{a ∈ A_φ(p)} Q̃^Risk(p,a)`, lowest id among ties;
/// `None` outside `W`.
pub fn extract_pi_win(q: &RiskQ) -> Vec<Option<ActionId>> {
    (0..q.values.len())
        .map(|p| {
            let best = q.min(p)?;
            let slack = TIE_TOLERANCE * best.abs().max(1.0);
            q.values[p].iter().find(|&&(_, v)| v <= best + slack).map(|&(a, _)| a)
        })
        .collect()
}

/// `π̃*_γ(p) = π̃_win(p)` on `W^∞`, `π̃_tr(p)` elsewhere.
pub fn combine_policy(
    pi_win: &[Option<ActionId>],
    pi_tr: &[Option<ActionId>],
    w_inf: &[bool],
) -> Result<Vec<ActionId>, PlanError> {
    (0..w_inf.len())
        .map(|p| {
            let choice = if w_inf[p] { pi_win.get(p) } else { pi_tr.get(p) };
            choice.copied().flatten().ok_or(PlanError::DomainGap(p))
        })
        .collect()
}

/// `V^Risk_π` on `W` by solving `V = R_π + γ_r P_π V`; `None` outside `W`.
/// `policy[p]` must lie in `A_φ(p)` on `W`, which keeps the chain in `W`.
pub fn evaluate_policy_risk(rm: &RiskModel, policy: &[ActionId]) -> Result<Vec<Option<f64>>, PlanError> {
    let states: Vec<ProdState> = rm.w_states().collect();
    let mut col = vec![usize::MAX; rm.num_states()];
    for (i, &p) in states.iter().enumerate() {
        col[p] = i;
    }
    let mut chosen = Vec::with_capacity(states.len());
    for &p in &states {
        let a = policy[p];
        chosen.push(rm.edges(p, a).ok_or(PlanError::PolicyLeavesW { state: p, action: a })?);
    }
    let n = states.len();
    let x: Vec<f64> = if n == 0 {
        Vec::new()
    } else if n <= DENSE_SOLVE_LIMIT {
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for (i, edges) in chosen.iter().enumerate() {
            for e in edges.iter() {
                b[i] += e.prob * e.risk;
                m[(i, col[e.target])] -= rm.gamma_r * e.prob;
            }
        }
        let x = m.lu().solve(&b).expect("I - γ_r P is nonsingular for γ_r < 1");
        x.iter().copied().collect()
    } else {
        let mut v = vec![0.0; rm.num_states()];
        loop {
            let mut residual: f64 = 0.0;
            for (i, edges) in chosen.iter().enumerate() {
                let x = backup(rm, edges, &v);
                residual = residual.max((x - v[states[i]]).abs());
                v[states[i]] = x;
            }
            if residual < EVAL_TOLERANCE {
                break;
            }
        }
        states.iter().map(|&p| v[p]).collect()
    };
    let mut out = vec![None; rm.num_states()];
    for (i, &p) in states.iter().enumerate() {
        out[p] = Some(x[i]);
    }
    Ok(out)
}

/// Per-step risk of a transition under the model, for Monte-Carlo checks.
pub fn step_risk(rm: &RiskModel, p: ProdState, a: ActionId, next: ProdState) -> Option<f64> {
    rm.edges(p, a)?.iter().find(|e| e.target == next).map(|e| e.risk)
}
