//! Learning the winning region of a product SMDP together with its dynamics
//! inside that region, from simulated episodes only.

mod explore;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{Observation, ObservationStore, PosteriorStore, Priors, DEFAULT_RAW_CAPACITY};
use crate::product::{ProdState, ProductSmdp, WinningRegion};
use crate::rng::{stream, Rng};
use crate::smdp::{ActionId, StateId};

pub use explore::{pi_ent, pi_wperp, softmax_mix, ExplorationParams, PosteriorView, SUPPORT_THRESHOLD};

const PHASE_LABEL: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("every product state is accepting; there is nothing to learn")]
    EmptyWinningCandidate,
    #[error("no allowed action")]
    NoAllowedAction,
    #[error("product state {0} is outside the current winning estimate")]
    NotInWinningRegion(ProdState),
    #[error("invalid learner configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Constant learning rate `α`.
    pub alpha: f64,
    /// Posterior period `ℓ`, in episodes.
    pub ell: usize,
    pub episodes: usize,
    pub step_cap: usize,
    pub exploration: ExplorationParams,
    /// Episodes without any change to `W_p` before declaring convergence.
    pub patience: usize,
    /// Tries of every pair in `W_p` since its last change before declaring
    /// convergence.
    pub min_tries: u64,
    /// Keep running past convergence until `|O|` reaches this.
    pub min_observations: u64,
    /// Stop once `|O|` reaches this, converged or not; 0 means no cap.
    pub max_observations: u64,
    pub priors: Priors,
    /// Raw tuples kept in `O`; sufficient statistics are unbounded.
    pub raw_capacity: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            alpha: 0.5,
            ell: 1,
            episodes: 12_000,
            step_cap: 4000,
            exploration: ExplorationParams::default(),
            patience: 500,
            min_tries: 10,
            min_observations: 0,
            max_observations: 0,
            priors: Priors::default(),
            raw_capacity: DEFAULT_RAW_CAPACITY,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::Config(m.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if self.ell == 0 {
            return bad("ell must be at least 1");
        }
        if self.step_cap == 0 {
            return bad("step_cap must be at least 1");
        }
        if !(self.exploration.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.exploration.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        Ok(())
    }
}

/// `Q^k` on `S⊗ × A`. Disabled actions hold −1 and never count as winning.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_actions: usize,
    values: Vec<f64>,
    enabled: Vec<bool>,
}

impl QTable {
    /// −1 on `Acc⊗ × A`, 0 elsewhere.
    pub fn init(prod: &ProductSmdp) -> Self {
        let m = prod.num_actions();
        let mut values = Vec::with_capacity(prod.num_states() * m);
        let mut enabled = Vec::with_capacity(prod.num_states() * m);
        for p in 0..prod.num_states() {
            for a in 0..m {
                let on = prod.is_enabled(p, a);
                enabled.push(on);
                values.push(if on && !prod.is_accepting(p) { 0.0 } else { -1.0 });
            }
        }
        QTable { num_actions: m, values, enabled }
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, p: ProdState, a: ActionId) -> f64 {
        self.values[p * self.num_actions + a]
    }

    pub fn max(&self, p: ProdState) -> f64 {
        (0..self.num_actions)
            .filter(|&a| self.enabled[p * self.num_actions + a])
            .map(|a| self.get(p, a))
            .fold(-1.0, f64::max)
    }

    pub fn is_winning_pair(&self, p: ProdState, a: ActionId) -> bool {
        let i = p * self.num_actions + a;
        self.enabled[i] && self.values[i] == 0.0
    }

    pub fn is_winning(&self, p: ProdState) -> bool {
        (0..self.num_actions).any(|a| self.is_winning_pair(p, a))
    }

    /// `W = {s | ∃a. Q(s,a) = 0}` and `W_p = {(s,a) | Q(s,a) = 0}`.
    pub fn region(&self) -> WinningRegion {
        let n = self.num_states();
        let pairs: Vec<Vec<bool>> =
            (0..n).map(|p| (0..self.num_actions).map(|a| self.is_winning_pair(p, a)).collect()).collect();
        let states = pairs.iter().map(|row| row.iter().any(|&x| x)).collect();
        WinningRegion::new(states, pairs)
    }
}

/// `Q(s,a) ← (1−α)Q(s,a) + α(r + max_{a'} Q(s',a'))`, with the result kept
/// in [−1, 0]. Returns the new value.
pub fn q_update(q: &mut QTable, s: ProdState, a: ActionId, next: ProdState, r: f64, alpha: f64) -> f64 {
    let target = r + q.max(next);
    let i = s * q.num_actions + a;
    let v = ((1.0 - alpha) * q.values[i] + alpha * target).clamp(-1.0, 0.0);
    q.values[i] = v;
    v
}

/// `∂W = {s ∈ W | ∃(s,a) ∈ W_p, ∃s' ∉ W with (s,a) possibly reaching s'}`,
/// where `may_leave` decides the last part.
pub fn boundary(region: &WinningRegion, mut may_leave: impl FnMut(ProdState, ActionId) -> bool) -> Vec<bool> {
    (0..region.membership().len())
        .map(|p| region.contains(p) && region.allowed_actions(p).any(|a| may_leave(p, a)))
        .collect()
}

/// `W^k`, `W_p^k` and `∂W^k` at episode `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WinningEstimate {
    pub region: WinningRegion,
    pub boundary: Vec<bool>,
    pub episode: usize,
}

impl WinningEstimate {
    pub fn boundary_size(&self) -> usize {
        self.boundary.iter().filter(|&&x| x).count()
    }
}

/// `π_ex`: `π_W⊥` on the boundary and `π_ent` elsewhere in `W`.
pub fn pi_ex(
    view: &PosteriorView,
    prod: &ProductSmdp,
    est: &WinningEstimate,
    p: ProdState,
    params: ExplorationParams,
) -> Result<Vec<(ActionId, f64)>, LearnerError> {
    if !est.region.contains(p) {
        return Err(LearnerError::NotInWinningRegion(p));
    }
    let allowed: Vec<ActionId> = est.region.allowed_actions(p).collect();
    let probs = if est.boundary[p] {
        pi_wperp(view, prod, p, &allowed, est.region.membership(), params)?
    } else {
        pi_ent(view, prod, p, &allowed, params)?
    };
    Ok(allowed.into_iter().zip(probs).collect())
}

/// One row of the per-episode progress log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressRow {
    pub episode: usize,
    pub w: usize,
    pub w_p: usize,
    pub boundary: usize,
    pub ind: Option<f64>,
    pub length: usize,
    pub wall_ms: f64,
}

pub const PROGRESS_HEADER: &str = "k,W,W_p,boundary,ind,length,wall_ms";

impl ProgressRow {
    pub fn csv(&self) -> String {
        let ind = self.ind.map_or(String::new(), |x| format!("{x}"));
        format!("{},{},{},{},{},{},{:.3}", self.episode, self.w, self.w_p, self.boundary, ind, self.length, self.wall_ms)
    }
}

/// Everything the learner hands to the later phases.
#[derive(Debug, Clone)]
pub struct LearnerOutcome {
    pub q: QTable,
    pub estimate: WinningEstimate,
    pub posteriors: PosteriorStore,
    pub observations: ObservationStore,
    pub converged: bool,
    pub episodes: usize,
    pub steps: u64,
    /// Updates after which `W` or `W_p` grew; always 0 unless the update rule is broken.
    pub monotonicity_violations: usize,
    pub progress: Vec<ProgressRow>,
}

/// Learner state between episodes.
pub struct WinningLearner<'a> {
    prod: &'a ProductSmdp,
    cfg: LearnerConfig,
    q: QTable,
    est: WinningEstimate,
    obs: ObservationStore,
    post: PosteriorStore,
    view: PosteriorView,
    // SMDP state -> product states projecting onto it
    members: Vec<Vec<ProdState>>,
    // O within W_p, pooled per SMDP pair: s' -> (count, Σ τ)
    pooled: Vec<BTreeMap<StateId, (u64, f64)>>,
    // thresholded predictive support per SMDP pair, as of the last refresh
    supports: Vec<Option<Vec<StateId>>>,
    rng: Rng,
    start: ProdState,
    steps: u64,
    last_change: usize,
    epoch: u32,
    stamp: Vec<u32>,
    tries: Vec<u64>,
    covered: usize,
    violations: usize,
}

/// Initialize `Q^0`, `W^0`, `W_p^0` and `∂W^0`, and sample the first start.
pub fn init_learner<'a>(prod: &'a ProductSmdp, cfg: &LearnerConfig, seed: u64) -> Result<WinningLearner<'a>, LearnerError> {
    cfg.validate()?;
    let q = QTable::init(prod);
    let region = q.region();
    if region.num_states() == 0 {
        return Err(LearnerError::EmptyWinningCandidate);
    }
    let post = PosteriorStore::new(cfg.priors);
    let smdp = prod.smdp();
    let view = PosteriorView::new(&post, smdp.num_states(), smdp.num_actions());
    let bnd = boundary(&region, |p, a| view.may_leave(prod, p, a, region.membership()));
    let est = WinningEstimate { region, boundary: bnd, episode: 0 };
    let mut rng = stream(seed, &[PHASE_LABEL]);
    let candidates = est.region.state_ids();
    let start = candidates[rng.gen_range(0..candidates.len())];
    let slots = prod.num_states() * prod.num_actions();
    let mut members = vec![Vec::new(); smdp.num_states()];
    for p in 0..prod.num_states() {
        members[prod.smdp_state(p)].push(p);
    }
    Ok(WinningLearner {
        prod,
        cfg: cfg.clone(),
        q,
        est,
        obs: ObservationStore::with_capacity(cfg.raw_capacity),
        post,
        view,
        members,
        pooled: vec![BTreeMap::new(); smdp.num_states() * smdp.num_actions()],
        supports: vec![None; smdp.num_states() * smdp.num_actions()],
        rng,
        start,
        steps: 0,
        last_change: 0,
        epoch: 0,
        stamp: vec![0; slots],
        tries: vec![0; slots],
        covered: 0,
        violations: 0,
    })
}

impl<'a> WinningLearner<'a> {
    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn estimate(&self) -> &WinningEstimate {
        &self.est
    }

    pub fn observations(&self) -> &ObservationStore {
        &self.obs
    }

    pub fn posteriors(&self) -> &PosteriorStore {
        &self.post
    }

    pub fn start_state(&self) -> ProdState {
        self.start
    }

    fn record_try(&mut self, p: ProdState, a: ActionId) {
        let i = p * self.prod.num_actions() + a;
        if self.stamp[i] != self.epoch {
            self.stamp[i] = self.epoch;
            self.tries[i] = 0;
        }
        self.tries[i] += 1;
        if self.tries[i] == self.cfg.min_tries && self.est.region.allows(p, a) {
            self.covered += 1;
        }
    }

    fn reward(&self, next: ProdState) -> f64 {
        if self.prod.is_accepting(next) {
            -1.0
        } else {
            0.0
        }
    }

    /// Run one episode from the current start state. Returns its length.
    pub fn episode(&mut self) -> Result<usize, LearnerError> {
        let prod = self.prod;
        if self.est.region.num_states() == 0 {
            return Ok(0);
        }
        let mut p = self.start;
        let mut exit = None;
        let mut length = 0;
        while length < self.cfg.step_cap {
            let dist = pi_ex(&self.view, prod, &self.est, p, self.cfg.exploration)?;
            let a = sample(&dist, &mut self.rng);
            let (next, _, tau) = prod.sample_step(p, a, &mut self.rng);
            self.obs
                .push(Observation { state: p, action: a, next, tau })
                .expect("simulated dwell times are finite and nonnegative");
            self.record_try(p, a);
            let slot = &mut self.pooled[prod.smdp_state(p) * prod.num_actions() + a]
                .entry(prod.smdp_state(next))
                .or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += tau;
            length += 1;
            if !self.est.region.contains(next) {
                exit = Some((p, a, next));
                break;
            }
            p = next;
        }
        self.steps += length as u64;
        let k = self.est.episode + 1;

        let mut dirty = Vec::new();
        let mut left = None;
        if let Some((s, a, next)) = exit {
            let r = self.reward(next);
            q_update(&mut self.q, s, a, next, r, self.cfg.alpha);
            // only row `s` of Q changed, so only row `s` of W_p can
            let was = (self.est.region.contains(s), self.est.region.pair_membership()[s].clone());
            for b in 0..prod.num_actions() {
                self.est.region.set_pair(s, b, self.q.is_winning_pair(s, b));
            }
            let now = &self.est.region.pair_membership()[s];
            if (self.est.region.contains(s) && !was.0) || now.iter().zip(&was.1).any(|(&x, &y)| x && !y) {
                self.violations += 1;
            }
            if *now != was.1 {
                self.last_change = k;
                self.epoch += 1;
                self.covered = 0;
                self.drop_pair(s, a);
                dirty.push(s);
                if was.0 && !self.est.region.contains(s) {
                    left = Some(s);
                }
            }
        }
        if k % self.cfg.ell == 0 {
            for (s, _) in self.refresh_posteriors() {
                dirty.extend_from_slice(&self.members[s]);
            }
        }
        if let Some(x) = left {
            dirty.extend(self.predecessors(x));
        }
        self.est.episode = k;
        for p in dirty {
            self.est.boundary[p] = self.on_boundary(p);
        }
        self.start = self.sample_start();
        Ok(length)
    }

    fn on_boundary(&self, p: ProdState) -> bool {
        let region = &self.est.region;
        region.contains(p) && region.allowed_actions(p).any(|a| self.view.may_leave(self.prod, p, a, region.membership()))
    }

    /// States whose observed support may lead into `x`.
    fn predecessors(&self, x: ProdState) -> Vec<ProdState> {
        let prod = self.prod;
        let t = prod.smdp_state(x);
        let m = prod.num_actions();
        let mut out = Vec::new();
        for (i, support) in self.supports.iter().enumerate() {
            if support.as_ref().is_some_and(|sup| sup.contains(&t)) {
                out.extend(self.members[i / m].iter().filter(|&&p| prod.lift(p, t) == Some(x)));
            }
        }
        out
    }

    /// Remove `(s, a)` from `O` and rebuild its SMDP pair's pooled counts
    /// from the product pairs still in `W_p`.
    fn drop_pair(&mut self, s: ProdState, a: ActionId) {
        let prod = self.prod;
        self.obs.remove_pair(s, a);
        let region = &self.est.region;
        let base = prod.smdp_state(s);
        let mut pooled = BTreeMap::new();
        for &p in &self.members[base] {
            if region.allows(p, a) {
                for (t, count, tau) in self.obs.pair_stats(p, a) {
                    let slot = pooled.entry(prod.smdp_state(t)).or_insert((0, 0.0));
                    slot.0 += count;
                    slot.1 += tau;
                }
            }
        }
        self.pooled[base * prod.num_actions() + a] = pooled;
    }

    /// Rebuild the posteriors from the pooled counts. Returns the SMDP pairs
    /// whose thresholded support changed.
    fn refresh_posteriors(&mut self) -> Vec<(StateId, ActionId)> {
        let prod = self.prod;
        let m = prod.num_actions();
        let mut post = PosteriorStore::new(self.cfg.priors);
        for (i, row) in self.pooled.iter().enumerate() {
            for (&t, &(count, tau)) in row {
                post.observe_batch(i / m, i % m, t, count, tau);
            }
        }
        self.post = post;
        let smdp = prod.smdp();
        self.view = PosteriorView::new(&self.post, smdp.num_states(), smdp.num_actions());
        let mut changed = Vec::new();
        for (i, old) in self.supports.iter_mut().enumerate() {
            let new = self.view.support(i / m, i % m);
            if new != *old {
                *old = new;
                changed.push((i / m, i % m));
            }
        }
        changed
    }

    fn sample_start(&mut self) -> ProdState {
        let from_boundary: Vec<ProdState> = (0..self.est.boundary.len()).filter(|&p| self.est.boundary[p]).collect();
        let pool = if from_boundary.is_empty() { self.est.region.state_ids() } else { from_boundary };
        if pool.is_empty() {
            return self.start;
        }
        pool[self.rng.gen_range(0..pool.len())]
    }

    /// `W_p` unchanged for `patience` episodes, every pair in it tried
    /// `min_tries` times since the last change, and enough data.
    pub fn has_converged(&self) -> bool {
        self.est.region.num_states() == 0
            || (self.est.episode - self.last_change >= self.cfg.patience
                && self.covered >= self.est.region.num_pairs()
                && self.obs.len() >= self.cfg.min_observations)
    }

    pub fn finish(mut self, progress: Vec<ProgressRow>) -> LearnerOutcome {
        self.refresh_posteriors();
        let converged = self.has_converged();
        LearnerOutcome {
            q: self.q,
            estimate: self.est,
            posteriors: self.post,
            observations: self.obs,
            converged,
            episodes: progress.len(),
            steps: self.steps,
            monotonicity_violations: self.violations,
            progress,
        }
    }
}

fn sample(dist: &[(ActionId, f64)], rng: &mut Rng) -> ActionId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(a, pr) in dist {
        acc += pr;
        if u < acc {
            return a;
        }
    }
    dist.last().expect("nonempty distribution").0
}

/// `Ind^k = |W_p| / |W_p^k|`.
pub fn ind_k(oracle: &WinningRegion, estimate: &WinningRegion) -> Option<f64> {
    let est = estimate.num_pairs();
    (est > 0).then(|| oracle.num_pairs() as f64 / est as f64)
}

/// Episodes under `π_ex` until `W_p` settles or the budget
/// runs out. With an oracle region, `Ind^k` is logged per episode.
pub fn learn_winning_region(
    prod: &ProductSmdp,
    cfg: &LearnerConfig,
    seed: u64,
    oracle: Option<&WinningRegion>,
) -> Result<LearnerOutcome, LearnerError> {
    let mut learner = init_learner(prod, cfg, seed)?;
    let clock = Instant::now();
    let mut progress = Vec::new();
    let capped = |l: &WinningLearner| cfg.max_observations > 0 && l.observations().len() >= cfg.max_observations;
    while progress.len() < cfg.episodes && !learner.has_converged() && !capped(&learner) {
        let length = learner.episode()?;
        let est = learner.estimate();
        progress.push(ProgressRow {
            episode: est.episode,
            w: est.region.num_states(),
            w_p: est.region.num_pairs(),
            boundary: est.boundary_size(),
            ind: oracle.and_then(|o| ind_k(o, &est.region)),
            length,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(learner.finish(progress))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bayes::update_posteriors;
    use crate::product::exact_winning_region;
    use crate::product::fixtures::{dka, m1_product};
    use crate::rng::stream;
    use crate::smdp::fixtures::m1;
    use crate::smdp::{build_gridworld, GridConfig};
    use proptest::prelude::*;

    fn desk_product(k: u32) -> ProductSmdp {
        let m = build_gridworld(&GridConfig::desk()).unwrap();
        ProductSmdp::build(Arc::new(m), dka("G F a & G F b & G !c", k)).unwrap()
    }

    #[test]
    fn initial_values() {
        let p = m1_product();
        let q = QTable::init(&p);
        let region = q.region();
        for s in 0..p.num_states() {
            assert_eq!(region.contains(s), !p.is_accepting(s));
            for a in 0..p.num_actions() {
                assert!(q.get(s, a) == 0.0 || q.get(s, a) == -1.0);
            }
        }
        let safe = ProductSmdp::build(Arc::new(m1()), dka("true", 0)).unwrap();
        assert_eq!(QTable::init(&safe).region().num_states(), safe.num_states());
    }

    #[test]
    fn update_rule() {
        let p = m1_product();
        let (s0, bad) = (p.initial(), p.successor_states(p.initial(), 1)[0]);
        let mut q = QTable::init(&p);
        assert_eq!(q_update(&mut q, s0, 0, s0, 0.0, 0.5), 0.0);
        assert!(q.is_winning_pair(s0, 0));
        assert_eq!(q_update(&mut q, s0, 1, bad, 0.0, 0.5), -0.5);
        assert!(!q.is_winning_pair(s0, 1));
        // Q_n = -(1 - (1-α)^n) under repeated bad updates
        for n in 2..=20 {
            let v = q_update(&mut q, s0, 1, bad, 0.0, 0.5);
            assert!((v + 1.0 - 0.5f64.powi(n)).abs() < 1e-15);
        }
        assert_eq!(q_update(&mut q, s0, 1, bad, -1.0, 1.0), -1.0);
    }

    #[test]
    fn boundary_cases() {
        let p = m1_product();
        let region = exact_winning_region(&p);
        assert!(boundary(&region, |_, _| false).iter().all(|&x| !x));
        let empty = WinningRegion::new(vec![false; 2], vec![vec![false; 2]; 2]);
        assert!(boundary(&empty, |_, _| true).iter().all(|&x| !x));

        // before learning, s0 keeps action b, which was seen leaving W
        let q = QTable::init(&p);
        let region = q.region();
        let mut obs = ObservationStore::default();
        obs.push(Observation { state: p.initial(), action: 1, next: p.successor_states(p.initial(), 1)[0], tau: 0.1 })
            .unwrap();
        let post = update_posteriors(&obs, Priors::default(), |_, _| true, |s| p.smdp_state(s), |_, _| vec![]);
        let view = PosteriorView::new(&post, 2, 2);
        let bnd = boundary(&region, |s, a| view.may_leave(&p, s, a, region.membership()));
        assert!(bnd[p.initial()]);
    }

    #[test]
    fn pi_ex_dispatches_on_the_boundary() {
        let p = desk_product(5);
        let q = QTable::init(&p);
        let region = q.region();
        let post = PosteriorStore::new(Priors::default());
        let smdp = p.smdp();
        let view = PosteriorView::new(&post, smdp.num_states(), smdp.num_actions());
        let params = ExplorationParams::default();
        let inside = region.state_ids()[0];
        let mut est = WinningEstimate { region: region.clone(), boundary: vec![false; p.num_states()], episode: 0 };
        let allowed: Vec<ActionId> = region.allowed_actions(inside).collect();
        let ent = pi_ent(&view, &p, inside, &allowed, params).unwrap();
        let got: Vec<f64> = pi_ex(&view, &p, &est, inside, params).unwrap().into_iter().map(|x| x.1).collect();
        assert_eq!(got, ent);
        est.boundary[inside] = true;
        let wperp = pi_wperp(&view, &p, inside, &allowed, region.membership(), params).unwrap();
        let got: Vec<f64> = pi_ex(&view, &p, &est, inside, params).unwrap().into_iter().map(|x| x.1).collect();
        assert_eq!(got, wperp);
        let outside = (0..p.num_states()).find(|&s| !region.contains(s)).unwrap();
        assert!(matches!(pi_ex(&view, &p, &est, outside, params), Err(LearnerError::NotInWinningRegion(_))));
    }

    #[test]
    fn m1_converges_to_the_exact_region() {
        let p = m1_product();
        let oracle = exact_winning_region(&p);
        let cfg = LearnerConfig { alpha: 0.2, episodes: 200, patience: 20, step_cap: 200, ..Default::default() };
        for seed in 0..10 {
            let out = learn_winning_region(&p, &cfg, seed, Some(&oracle)).unwrap();
            assert!(out.converged);
            assert_eq!(out.estimate.region, oracle);
            assert_eq!(out.monotonicity_violations, 0);
        }
    }

    #[test]
    fn nothing_to_learn_without_accepting_states() {
        let p = ProductSmdp::build(Arc::new(m1()), dka("true", 0)).unwrap();
        let cfg = LearnerConfig { patience: 5, step_cap: 50, ..Default::default() };
        let out = learn_winning_region(&p, &cfg, 3, None).unwrap();
        assert!(out.converged);
        assert!(out.episodes >= 5);
        assert!(out.progress.iter().all(|r| r.w_p == 3));
        assert_eq!(out.estimate.region.num_states(), p.num_states());
    }

    #[test]
    fn all_accepting_is_rejected() {
        let p = ProductSmdp::build(Arc::new(m1()), dka("false", 0)).unwrap();
        assert!(matches!(init_learner(&p, &LearnerConfig::default(), 0), Err(LearnerError::EmptyWinningCandidate)));
    }

    #[test]
    fn desk_run_invariants() {
        let p = desk_product(5);
        let oracle = exact_winning_region(&p);
        let cfg = LearnerConfig { patience: 100, ..Default::default() };
        let out = learn_winning_region(&p, &cfg, 11, Some(&oracle)).unwrap();
        assert!(out.converged);
        assert_eq!(out.estimate.region, oracle);
        assert_eq!(out.monotonicity_violations, 0);
        let inds: Vec<f64> = out.progress.iter().map(|r| r.ind.unwrap()).collect();
        assert!(inds.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*inds.last().unwrap(), 1.0);
        for o in out.observations.raw() {
            assert!(oracle.allows(o.state, o.action));
        }
        for (s, a) in out.observations.pairs() {
            assert!(oracle.allows(s, a));
        }
        for s in 0..p.num_states() {
            for a in 0..p.num_actions() {
                let v = out.q.get(s, a);
                assert!((-1.0..=0.0).contains(&v));
            }
        }
    }

    #[test]
    fn incremental_state_matches_recomputation() {
        let p = desk_product(5);
        let cfg = LearnerConfig { patience: 30, episodes: 400, ..Default::default() };
        let mut learner = init_learner(&p, &cfg, 9).unwrap();
        for _ in 0..150 {
            learner.episode().unwrap();
            let est = learner.estimate();
            assert_eq!(est.region, learner.q().region());
            let full = boundary(&est.region, |s, a| learner.view.may_leave(&p, s, a, est.region.membership()));
            assert_eq!(est.boundary, full);
        }
        learner.refresh_posteriors();
        let region = &learner.estimate().region;
        let fresh = update_posteriors(
            learner.observations(),
            Priors::default(),
            |s, a| region.allows(s, a),
            |s| p.smdp_state(s),
            |_, _| vec![],
        );
        let got = learner.posteriors();
        assert_eq!(got.tracked_pairs().collect::<Vec<_>>(), fresh.tracked_pairs().collect::<Vec<_>>());
        for (s, a) in fresh.tracked_pairs() {
            assert_eq!(got.transition_posterior(s, a).unwrap(), fresh.transition_posterior(s, a).unwrap());
            for (t, _) in fresh.predictive_transition(s, a).unwrap() {
                let (x, y) = (got.dwell_posterior(s, a, t).unwrap(), fresh.dwell_posterior(s, a, t).unwrap());
                assert_eq!(x.shape, y.shape);
                assert!((x.rate - y.rate).abs() < 1e-9 * y.rate);
            }
        }
    }

    #[test]
    fn learning_is_deterministic_per_seed() {
        let p = desk_product(2);
        let cfg = LearnerConfig { patience: 20, episodes: 300, ..Default::default() };
        let a = learn_winning_region(&p, &cfg, 5, None).unwrap();
        let b = learn_winning_region(&p, &cfg, 5, None).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.observations, b.observations);
        assert_eq!(a.steps, b.steps);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn exploration_policies_on_random_posteriors(seed in 0u64..1000, n in 0usize..400) {
            let p = desk_product(3);
            let mut rng = stream(seed, &[]);
            let mut obs = ObservationStore::default();
            for _ in 0..n {
                let s = rng.gen_range(0..p.num_states());
                let a = rng.gen_range(0..p.num_actions());
                let (next, _, tau) = p.sample_step(s, a, &mut rng);
                obs.push(Observation { state: s, action: a, next, tau }).unwrap();
            }
            let post = update_posteriors(&obs, Priors::default(), |_, _| true, |s| p.smdp_state(s), |_, _| vec![]);
            let smdp = p.smdp();
            let view = PosteriorView::new(&post, smdp.num_states(), smdp.num_actions());
            let region = exact_winning_region(&desk_product(3));
            let w: Vec<bool> = (0..p.num_states()).map(|_| rng.gen_bool(0.7)).collect();
            let params = ExplorationParams { temperature: rng.gen_range(0.1..2.0), epsilon: 0.05 };
            for s in region.state_ids() {
                let allowed: Vec<ActionId> = region.allowed_actions(s).collect();
                let ent = pi_ent(&view, &p, s, &allowed, params).unwrap();
                let perp = pi_wperp(&view, &p, s, &allowed, &w, params).unwrap();
                prop_assert!((ent.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!((perp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for i in 0..allowed.len() {
                    for j in 0..allowed.len() {
                        let si = view.score(p.smdp_state(s), allowed[i]);
                        let sj = view.score(p.smdp_state(s), allowed[j]);
                        if si <= sj {
                            prop_assert!(ent[i] <= ent[j] + 1e-15);
                        }
                        let oi = view.out_mass(&p, s, allowed[i], &w);
                        let oj = view.out_mass(&p, s, allowed[j], &w);
                        if oi <= oj {
                            prop_assert!(perp[i] <= perp[j] + 1e-15);
                        }
                    }
                }
            }
        }
    }
}
