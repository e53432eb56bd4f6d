//! Fitted-Q temporal-difference learning on a deterministic chain MDP, measured
//! against the exact optimal action values.
//!
//! Overestimation at a checkpoint is `mean_s [Q(s, a*) - Q*(s, a*)]` with
//! `a* = argmax_a Q(s, a)` under the learned Q.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagRecord, ExplosionThresholds};
use crate::error::{Error, Result};
use crate::gradcore::{AdamConfig, AdamState, Tape};
use crate::matrix::Matrix;
use crate::network::{Loss, Mlp, MlpSpec, ResetPolicy};
use crate::seed;

/// Actions: 0 = left, 1 = right.
pub const ACTIONS: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainEnd {
    /// Moving right from the last state wraps to state 0.
    Wrap,
    /// Moving right from the last state ends the episode.
    #[default]
    Absorb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub states: usize,
    #[serde(default)]
    pub end: ChainEnd,
    /// `rewards[s][a]` before scaling; defaults to 1 for moving right from the
    /// last state and 0 elsewhere.
    #[serde(default)]
    pub rewards: Option<Vec<[f64; 2]>>,
    #[serde(default = "one")]
    pub reward_scale: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    0.99
}

impl Default for MdpSpec {
    fn default() -> Self {
        MdpSpec {
            states: 10,
            end: ChainEnd::Absorb,
            rewards: None,
            reward_scale: 1.0,
            gamma: default_gamma(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
    pub done: bool,
}

impl MdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.states == 0 {
            return Err(Error::Config("MDP needs at least one state".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("discount must lie in (0, 1), got {}", self.gamma)));
        }
        if !self.reward_scale.is_finite() {
            return Err(Error::Config("reward scale must be finite".into()));
        }
        if let Some(r) = &self.rewards {
            if r.len() != self.states {
                return Err(Error::Config(format!("{} reward rows for {} states", r.len(), self.states)));
            }
            if r.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Config("rewards must be finite".into()));
            }
        }
        Ok(())
    }

    /// Scaled reward for taking `action` in `state`.
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        let raw = match &self.rewards {
            Some(r) => r[state][action],
            None => f64::from(u8::from(state == self.states - 1 && action == 1)),
        };
        raw * self.reward_scale
    }

    pub fn step(&self, state: usize, action: usize) -> Transition {
        let last = self.states - 1;
        let (next, done) = match (action, self.end) {
            (0, ChainEnd::Wrap) => ((state + last) % self.states, false),
            (0, ChainEnd::Absorb) => (state.saturating_sub(1), false),
            (_, ChainEnd::Wrap) => ((state + 1) % self.states, false),
            (_, ChainEnd::Absorb) if state == last => (state, true),
            _ => (state + 1, false),
        };
        Transition {
            state,
            action,
            reward: self.reward(state, action),
            next,
            done,
        }
    }

    /// Network input for a state-action pair: `[s / S, onehot(a)]`.
    pub fn encode(&self, state: usize, action: usize) -> [f64; 3] {
        let mut v = [state as f64 / self.states as f64, 0.0, 0.0];
        v[1 + action] = 1.0;
        v
    }

    /// Inputs for every state-action pair, ordered `(s, a)` row-major.
    pub fn all_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.states).flat_map(|s| (0..ACTIONS).map(move |a| (s, a))).collect()
    }
}

/// Exact optimal action values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub values: Vec<[f64; 2]>,
}

impl QTable {
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state][action]
    }

    /// Largest Bellman optimality residual.
    pub fn bellman_residual(&self, spec: &MdpSpec) -> f64 {
        let mut worst: f64 = 0.0;
        for (s, a) in spec.all_pairs() {
            let t = spec.step(s, a);
            worst = worst.max((self.get(s, a) - backup(spec, &self.values, &t)).abs());
        }
        worst
    }
}

fn backup(spec: &MdpSpec, q: &[[f64; 2]], t: &Transition) -> f64 {
    let future = if t.done { 0.0 } else { q[t.next][0].max(q[t.next][1]) };
    t.reward + spec.gamma * future
}

pub fn value_iteration(spec: &MdpSpec) -> Result<QTable> {
    spec.validate()?;
    let mut q = vec![[0.0; 2]; spec.states];
    let transitions: Vec<Transition> = spec.all_pairs().into_iter().map(|(s, a)| spec.step(s, a)).collect();
    loop {
        let mut next = q.clone();
        let mut residual: f64 = 0.0;
        for t in &transitions {
            let v = backup(spec, &q, t);
            residual = residual.max((v - q[t.state][t.action]).abs());
            next[t.state][t.action] = v;
        }
        q = next;
        if residual < 1e-12 * spec.reward_scale.abs().max(1.0) {
            break;
        }
    }
    Ok(QTable { values: q })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub transitions: Vec<Transition>,
}

/// Uniform-random behavior from uniformly drawn start states. When `n` is large
/// enough (`n >= 50 S A`) the buffer is redrawn until every state-action pair occurs.
pub fn collect_buffer(spec: &MdpSpec, n: usize, seed_value: u64) -> Result<ReplayBuffer> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("buffer needs at least one transition".into()));
    }
    let mut rng = seed::derived_rng(seed_value, seed::STREAM_BUFFER);
    let need_coverage = n >= 50 * spec.states * ACTIONS;
    for _ in 0..100 {
        let transitions: Vec<Transition> = (0..n)
            .map(|_| {
                let s = rng.random_range(0..spec.states);
                let a = rng.random_range(0..ACTIONS);
                spec.step(s, a)
            })
            .collect();
        let mut seen = vec![false; spec.states * ACTIONS];
        for t in &transitions {
            seen[t.state * ACTIONS + t.action] = true;
        }
        if !need_coverage || seen.iter().all(|&v| v) {
            return Ok(ReplayBuffer { transitions });
        }
    }
    Err(Error::Contract("could not cover every state-action pair".into()))
}

/// One-hot linear Q function, one entry per state-action pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularQ {
    pub table: Matrix,
    adam: AdamState,
}

impl TabularQ {
    pub fn new(states: usize, adam: AdamConfig) -> Result<Self> {
        Ok(TabularQ {
            table: Matrix::zeros(states * ACTIONS, 1),
            adam: AdamState::new(adam, [(states * ACTIONS, 1)])?,
        })
    }

    pub fn from_qtable(q: &QTable, adam: AdamConfig) -> Result<Self> {
        let mut t = TabularQ::new(q.values.len(), adam)?;
        for (s, row) in q.values.iter().enumerate() {
            for a in 0..ACTIONS {
                t.table[(s * ACTIONS + a, 0)] = row[a];
            }
        }
        Ok(t)
    }

    fn one_hot(&self, pairs: &[(usize, usize)]) -> Matrix {
        let mut x = Matrix::zeros(pairs.len(), self.table.rows());
        for (r, &(s, a)) in pairs.iter().enumerate() {
            x[(r, s * ACTIONS + a)] = 1.0;
        }
        x
    }
}

/// The learner in a fitted-Q run.
#[derive(Clone, Debug, PartialEq)]
pub enum QModel {
    Net(Box<Mlp>),
    Tabular(TabularQ),
}

impl QModel {
    /// Q values for `(state, action)` pairs, one per row.
    pub fn values(&self, mdp: &MdpSpec, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        match self {
            QModel::Net(net) => {
                let x = encode_pairs(mdp, pairs);
                Ok(net.predict(&x)?.into_vec())
            }
            QModel::Tabular(t) => {
                let x = t.one_hot(pairs);
                Ok(x.matmul(&t.table)?.into_vec())
            }
        }
    }

    /// Greedy Q table over every state.
    pub fn table(&self, mdp: &MdpSpec) -> Result<Vec<[f64; 2]>> {
        let v = self.values(mdp, &mdp.all_pairs())?;
        Ok(v.chunks(ACTIONS).map(|c| [c[0], c[1]]).collect())
    }

    fn regress(
        &mut self,
        mdp: &MdpSpec,
        pairs: &[(usize, usize)],
        target: &Matrix,
        coeff_decay: f64,
        record: bool,
    ) -> Result<(f64, Option<DiagRecord>)> {
        match self {
            QModel::Net(net) => {
                let x = encode_pairs(mdp, pairs);
                let rep = net.train_step(&x, Loss::Mse(target), coeff_decay)?;
                let rec = record.then(|| DiagRecord::from_step(net, &rep));
                Ok((rep.loss, rec))
            }
            QModel::Tabular(t) => {
                let mut tape = Tape::new();
                let x = tape.leaf(t.one_hot(pairs));
                let w = tape.param(t.table.clone());
                let b = tape.leaf(Matrix::zeros(1, 1));
                let y = tape.affine(x, w, b)?;
                let loss = tape.mse_loss(y, target)?;
                let value = tape.value(loss)[(0, 0)];
                if !value.is_finite() {
                    return Err(Error::Explosion {
                        reason: format!("non-finite TD loss {value}"),
                        snapshot: None,
                    });
                }
                let grads = tape.backward(loss)?;
                let mut p = [t.table.clone()];
                t.adam.step(&mut p, &[grads.of(w)], &[0.0])?;
                let [table] = p;
                t.table = table;
                Ok((value, None))
            }
        }
    }

    fn soft_update_from(&mut self, online: &QModel, tau: f64) -> Result<()> {
        match (self, online) {
            (QModel::Net(t), QModel::Net(o)) => t.soft_update_from(o, tau),
            (QModel::Tabular(t), QModel::Tabular(o)) => {
                for (tv, ov) in t.table.data_mut().iter_mut().zip(o.table.data()) {
                    *tv = tau * ov + (1.0 - tau) * *tv;
                }
                Ok(())
            }
            _ => Err(Error::Contract("target and online models differ in kind".into())),
        }
    }

    fn reset(&mut self) {
        match self {
            QModel::Net(n) => n.reset(),
            QModel::Tabular(t) => {
                t.table.data_mut().iter_mut().for_each(|v| *v = 0.0);
                t.adam.reset();
            }
        }
    }
}

fn encode_pairs(mdp: &MdpSpec, pairs: &[(usize, usize)]) -> Matrix {
    let data = pairs.iter().flat_map(|&(s, a)| mdp.encode(s, a)).collect();
    Matrix::from_vec(pairs.len(), 3, data).expect("sized")
}

/// `mean_s [Q(s, a*) - Q*(s, a*)]` with `a*` greedy under `q`.
pub fn overestimation(q: &[[f64; 2]], oracle: &QTable) -> f64 {
    let total: f64 = q
        .iter()
        .enumerate()
        .map(|(s, row)| {
            let a = usize::from(row[1] > row[0]);
            row[a] - oracle.get(s, a)
        })
        .sum();
    total / q.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// Gradient steps per environment step.
    pub utd: usize,
    pub env_steps: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_probe_batch")]
    pub batch_size: usize,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    #[serde(default = "never")]
    pub reset: ResetPolicy,
    #[serde(default)]
    pub coeff_decay: f64,
    /// Seed for minibatch sampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub thresholds: ExplosionThresholds,
}

fn default_tau() -> f64 {
    0.005
}

fn default_probe_batch() -> usize {
    32
}

fn default_checkpoint() -> usize {
    100
}

fn never() -> ResetPolicy {
    ResetPolicy::Never
}

impl ProbeConfig {
    pub fn new(utd: usize, env_steps: usize, seed: u64) -> Self {
        ProbeConfig {
            utd,
            env_steps,
            tau: default_tau(),
            batch_size: default_probe_batch(),
            checkpoint_every: default_checkpoint(),
            reset: never(),
            coeff_decay: 0.0,
            seed,
            thresholds: ExplosionThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeCheckpoint {
    pub env_step: usize,
    pub grad_steps: u64,
    pub overestimation: f64,
    /// Mean TD loss since the previous checkpoint.
    pub loss: f64,
    pub diverged: bool,
    pub explosion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub utd: usize,
    pub checkpoints: Vec<ProbeCheckpoint>,
    pub diverged: bool,
    /// Largest finite overestimation over checkpoints.
    pub peak_overestimation: f64,
    /// Number of checkpoints whose diagnostics were flagged as explosions.
    pub explosion_flags: usize,
    pub first_explosion: Option<String>,
    /// Largest `|Q - Q*|` at the last checkpoint.
    pub final_max_error: f64,
    pub diagnostics: Vec<DiagRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub utd: usize,
    pub diverged: bool,
    pub peak_overestimation: f64,
    pub explosion_flags: usize,
    pub first_explosion: Option<String>,
    pub final_max_error: f64,
}

impl ProbeResult {
    /// Peak overestimation, with diverged runs counted as unbounded.
    pub fn peak_or_infinite(&self) -> f64 {
        if self.diverged {
            f64::INFINITY
        } else {
            self.peak_overestimation
        }
    }

    pub fn exploded(&self) -> bool {
        self.diverged || self.explosion_flags > 0
    }

    pub fn summary(&self) -> ProbeSummary {
        ProbeSummary {
            utd: self.utd,
            diverged: self.diverged,
            peak_overestimation: self.peak_overestimation,
            explosion_flags: self.explosion_flags,
            first_explosion: self.first_explosion.clone(),
            final_max_error: self.final_max_error,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,overestimation,loss,diverged\n");
        for c in &self.checkpoints {
            s.push_str(&format!("{},{},{},{}\n", c.env_step, c.overestimation, c.loss, u8::from(c.diverged)));
        }
        s
    }
}

/// What to train in a fitted-Q run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QModelSpec {
    /// An MLP over `[s / S, onehot(a)]` with a single output; input width must be 3.
    Net { spec: MlpSpec },
    Tabular {
        #[serde(default)]
        adam: AdamConfig,
    },
}

impl QModelSpec {
    pub fn build(&self, mdp: &MdpSpec) -> Result<QModel> {
        match self {
            QModelSpec::Net { spec } => {
                if spec.widths.first() != Some(&3) || spec.widths.last() != Some(&1) {
                    return Err(Error::Config(format!(
                        "Q network must map 3 inputs to 1 output, got widths {:?}",
                        spec.widths
                    )));
                }
                Ok(QModel::Net(Box::new(Mlp::build(spec.clone())?)))
            }
            QModelSpec::Tabular { adam } => Ok(QModel::Tabular(TabularQ::new(mdp.states, *adam)?)),
        }
    }
}

/// Bootstrapped regression toward `r + gamma * max_a Q_target(s', a)` with a
/// Polyak-averaged target. Transitions are revealed one per environment step;
/// each environment step performs `utd` gradient steps on minibatches drawn
/// uniformly from the revealed prefix.
pub fn fitted_q_run(
    mdp: &MdpSpec,
    buffer: &ReplayBuffer,
    model: &QModelSpec,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    mdp.validate()?;
    if cfg.utd == 0 {
        return Err(Error::Config("utd must be >= 1".into()));
    }
    if cfg.batch_size == 0 || cfg.checkpoint_every == 0 {
        return Err(Error::Config("batch size and checkpoint interval must be >= 1".into()));
    }
    if !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(Error::Config(format!("Polyak weight must lie in (0, 1], got {}", cfg.tau)));
    }
    if buffer.transitions.is_empty() {
        return Err(Error::Config("empty replay buffer".into()));
    }
    let oracle = value_iteration(mdp)?;
    let mut online = model.build(mdp)?;
    let mut target = online.clone();
    let mut rng = seed::derived_rng(cfg.seed, seed::STREAM_BATCHES);
    let total_grad = (cfg.env_steps * cfg.utd) as u64;

    let mut result = ProbeResult {
        utd: cfg.utd,
        checkpoints: Vec::new(),
        diverged: false,
        peak_overestimation: f64::NEG_INFINITY,
        explosion_flags: 0,
        first_explosion: None,
        final_max_error: f64::NAN,
        diagnostics: Vec::new(),
    };
    let mut grad_steps: u64 = 0;
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);
    let mut last_record: Option<DiagRecord> = None;

    'env: for env_step in 1..=cfg.env_steps {
        let revealed = env_step.min(buffer.transitions.len());
        let at_checkpoint = env_step % cfg.checkpoint_every == 0 || env_step == cfg.env_steps;
        for k in 0..cfg.utd {
            let batch: Vec<&Transition> = (0..cfg.batch_size)
                .map(|_| &buffer.transitions[rng.random_range(0..revealed)])
                .collect();
            let next_pairs: Vec<(usize, usize)> = batch
                .iter()
                .flat_map(|t| (0..ACTIONS).map(move |a| (t.next, a)))
                .collect();
            let next_q = target.values(mdp, &next_pairs)?;
            let y: Vec<f64> = batch
                .iter()
                .zip(next_q.chunks(ACTIONS))
                .map(|(t, q)| {
                    let future = if t.done { 0.0 } else { q[0].max(q[1]) };
                    t.reward + mdp.gamma * future
                })
                .collect();
            let pairs: Vec<(usize, usize)> = batch.iter().map(|t| (t.state, t.action)).collect();
            let step = if y.iter().all(|v| v.is_finite()) {
                online.regress(mdp, &pairs, &Matrix::column_vector(&y), cfg.coeff_decay, at_checkpoint && k + 1 == cfg.utd)
            } else {
                Err(Error::Explosion {
                    reason: "non-finite TD target".into(),
                    snapshot: None,
                })
            };
            match step {
                Ok((loss, rec)) => {
                    loss_sum += loss;
                    loss_count += 1;
                    if rec.is_some() {
                        last_record = rec;
                    }
                }
                Err(e) if e.is_explosion() => {
                    result.diverged = true;
                    if let Error::Explosion { snapshot: Some(s), .. } = &e {
                        let mut s = (**s).clone();
                        s.explosion = true;
                        result.diagnostics.push(s);
                    }
                    if result.first_explosion.is_none() {
                        result.first_explosion = Some(e.to_string());
                    }
                    result.explosion_flags += 1;
                    result.checkpoints.push(ProbeCheckpoint {
                        env_step,
                        grad_steps,
                        overestimation: f64::NAN,
                        loss: f64::NAN,
                        diverged: true,
                        explosion: true,
                    });
                    break 'env;
                }
                Err(e) => return Err(e),
            }
            grad_steps += 1;
            target.soft_update_from(&online, cfg.tau)?;
            if cfg.reset.fires(grad_steps, total_grad) {
                online.reset();
                target = online.clone();
            }
        }

        if at_checkpoint {
            let q = online.table(mdp)?;
            let over = overestimation(&q, &oracle);
            let mut explosion = false;
            if let Some(mut rec) = last_record.take() {
                let reason = diagnostics::detect_explosion(&rec, &result.diagnostics, &cfg.thresholds);
                explosion = reason.is_some();
                rec.explosion = explosion;
                if let Some(r) = reason {
                    result.explosion_flags += 1;
                    result.first_explosion.get_or_insert(r);
                }
                result.diagnostics.push(rec);
            }
            if over.is_finite() {
                result.peak_overestimation = result.peak_overestimation.max(over);
            }
            result.checkpoints.push(ProbeCheckpoint {
                env_step,
                grad_steps,
                overestimation: over,
                loss: loss_sum / loss_count.max(1) as f64,
                diverged: false,
                explosion,
            });
            (loss_sum, loss_count) = (0.0, 0);
            if !over.is_finite() {
                result.diverged = true;
                break;
            }
        }
    }

    if let Ok(q) = online.table(mdp) {
        result.final_max_error = q
            .iter()
            .zip(&oracle.values)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_self_loop() {
        let spec = MdpSpec {
            states: 1,
            end: ChainEnd::Wrap,
            rewards: Some(vec![[1.0, 1.0]]),
            reward_scale: 1.0,
            gamma: 0.5,
        };
        let q = value_iteration(&spec).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-10);
        assert!((q.get(0, 1) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_rewards_zero_values() {
        let spec = MdpSpec {
            rewards: Some(vec![[0.0; 2]; 10]),
            ..MdpSpec::default()
        };
        assert!(value_iteration(&spec).unwrap().values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn chain_values_are_discount_powers() {
        let spec = MdpSpec {
            states: 5,
            ..MdpSpec::default()
        };
        let q = value_iteration(&spec).unwrap();
        for s in 0..5 {
            let expect = 0.99f64.powi((4 - s) as i32);
            assert!((q.get(s, 1) - expect).abs() < 1e-10, "{s}: {}", q.get(s, 1));
        }
        assert!(q.bellman_residual(&spec) < 1e-10);
    }

    #[test]
    fn invalid_discount_rejected() {
        let spec = MdpSpec {
            gamma: 1.0,
            ..MdpSpec::default()
        };
        assert!(value_iteration(&spec).is_err());
    }

    #[test]
    fn buffers() {
        let spec = MdpSpec::default();
        assert_eq!(collect_buffer(&spec, 1, 0).unwrap().transitions.len(), 1);
        assert_eq!(collect_buffer(&spec, 500, 3).unwrap(), collect_buffer(&spec, 500, 3).unwrap());
        let b = collect_buffer(&spec, 1000, 4).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for t in &b.transitions {
            seen.insert((t.state, t.action));
        }
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn oracle_table_has_zero_overestimation() {
        let spec = MdpSpec {
            reward_scale: 37.0,
            ..MdpSpec::default()
        };
        let q = value_iteration(&spec).unwrap();
        let model = QModel::Tabular(TabularQ::from_qtable(&q, AdamConfig::default()).unwrap());
        assert_eq!(overestimation(&model.table(&spec).unwrap(), &q), 0.0);
    }

    #[test]
    fn no_bootstrap_regresses_to_reward() {
        let spec = MdpSpec {
            gamma: 1e-12,
            reward_scale: 5.0,
            ..MdpSpec::default()
        };
        let buffer = collect_buffer(&spec, 1000, 1).unwrap();
        let mut cfg = ProbeConfig::new(1, 3000, 2);
        cfg.checkpoint_every = 500;
        let model = QModelSpec::Tabular {
            adam: AdamConfig::with_lr(0.05),
        };
        let r = fitted_q_run(&spec, &buffer, &model, &cfg).unwrap();
        let last = r.checkpoints.last().unwrap();
        assert!(last.overestimation.abs() < 0.05 * 5.0, "{r:?}");
        assert_eq!(r.checkpoints.len(), 6);
    }
}
