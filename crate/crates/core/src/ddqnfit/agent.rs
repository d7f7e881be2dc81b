use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    cap: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0);
        Self {
            cap,
            items: Vec::with_capacity(cap.min(4096)),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.cap {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.cap;
    }

    /// Uniform draw with replacement.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

/// Online network `a` and its delayed copy `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFunctionPair {
    pub net_a: Mlp,
    pub net_b: Mlp,
    pub updates: u64,
}

impl QFunctionPair {
    pub fn new<R: Rng>(n_in: usize, hidden: &[usize], n_actions: usize, rng: &mut R) -> Self {
        let mut sizes = vec![n_in];
        sizes.extend(hidden);
        sizes.push(n_actions);
        let net_a = Mlp::new(&sizes, rng);
        Self {
            net_b: net_a.clone(),
            net_a,
            updates: 0,
        }
    }

    pub fn greedy(&self, s: &[f64]) -> usize {
        argmax(&self.net_a.forward(s))
    }

    pub fn sync(&mut self) {
        self.net_b = self.net_a.clone();
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Bootstrap target: `r` for terminal transitions, otherwise
/// `r + gamma * max_a' Q_b(s', a')`, or with `canonical` set
/// `r + gamma * Q_b(s', argmax_a' Q_a(s', a'))`.
pub fn td_target(q: &QFunctionPair, t: &Transition, gamma: f64, canonical: bool) -> f64 {
    if t.done {
        return t.reward;
    }
    let qb = q.net_b.forward(&t.next);
    let next = if canonical {
        qb[argmax(&q.net_a.forward(&t.next))]
    } else {
        qb.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    t.reward + gamma * next
}

/// Mean squared temporal-difference error over `batch` and its gradient
/// with respect to the parameters of `net_a`, holding targets fixed.
pub fn td_loss_and_grad(
    q: &QFunctionPair,
    batch: &[&Transition],
    gamma: f64,
    canonical: bool,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; q.net_a.n_params()];
    let mut loss = 0.0;
    let inv = 1.0 / batch.len() as f64;
    let mut d_out = vec![0.0; q.net_a.n_outputs()];
    for t in batch {
        let y = td_target(q, t, gamma, canonical);
        let tape = q.net_a.forward_tape(&t.state);
        let err = tape.output()[t.action] - y;
        loss += err * err * inv;
        d_out.iter_mut().for_each(|d| *d = 0.0);
        d_out[t.action] = 2.0 * err * inv;
        q.net_a.backward(&tape, &d_out, &mut grad);
    }
    (loss, grad)
}

/// One gradient step on `net_a` toward the bootstrap targets; copies
/// `net_a` into `net_b` every `target_update_interval` updates. Returns the
/// batch loss before the step.
pub fn ddqn_update(q: &mut QFunctionPair, batch: &[&Transition], hp: &HyperParams) -> f64 {
    assert!(!batch.is_empty());
    let (loss, grad) = td_loss_and_grad(q, batch, hp.gamma, hp.double_dqn_canonical);
    q.net_a.sgd_step(&grad, hp.lr_alpha);
    q.updates += 1;
    if q.updates % hp.target_update_interval.max(1) as u64 == 0 {
        q.sync();
    }
    loss
}

/// Lookup-table pair applying the relaxation
/// `Q_a(s,a) <- (1 - alpha) Q_a(s,a) + alpha (r + gamma max Q_b(s', .))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQPair {
    pub q_a: Vec<Vec<f64>>,
    pub q_b: Vec<Vec<f64>>,
    pub updates: u64,
}

impl TabularQPair {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            q_a: vec![vec![0.0; n_actions]; n_states],
            q_b: vec![vec![0.0; n_actions]; n_states],
            updates: 0,
        }
    }

    pub fn update(&mut self, s: usize, a: usize, r: f64, s_next: usize, done: bool, alpha: f64, gamma: f64, sync_every: u64) {
        let target = if done {
            r
        } else {
            r + gamma * self.q_b[s_next].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        self.q_a[s][a] = (1.0 - alpha) * self.q_a[s][a] + alpha * target;
        self.updates += 1;
        if self.updates % sync_every.max(1) == 0 {
            self.q_b = self.q_a.clone();
        }
    }

    pub fn greedy(&self, s: usize) -> usize {
        argmax(&self.q_a[s])
    }
}

pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic task driven by [`train_agent`].
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset<R: Rng>(&mut self, rng: &mut R) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Step;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Undiscounted episode return.
    pub reward: f64,
    pub running_best: f64,
}

/// Linearly decayed exploration rate for `episode`.
pub fn epsilon(hp: &HyperParams, episode: usize) -> f64 {
    let span = hp.epsilon_decay_episodes.max(1) as f64;
    let frac = (episode as f64 / span).min(1.0);
    hp.epsilon_start + frac * (hp.epsilon_end - hp.epsilon_start)
}

/// Epsilon-greedy episodes with experience replay and a delayed target.
pub fn train_agent<E: Environment, R: Rng>(
    env: &mut E,
    hp: &HyperParams,
    rng: &mut R,
) -> (QFunctionPair, Vec<EpisodeRecord>) {
    let mut q = QFunctionPair::new(env.state_dim(), &hp.hidden, env.n_actions(), rng);
    let mut replay = ReplayBuffer::new(hp.replay_capacity);
    let mut trace = Vec::with_capacity(hp.episodes);
    let mut best = f64::NEG_INFINITY;
    for ep in 0..hp.episodes {
        let eps = epsilon(hp, ep);
        let mut s = env.reset(rng);
        let mut ret = 0.0;
        for _ in 0..hp.max_steps_per_episode {
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..env.n_actions())
            } else {
                q.greedy(&s)
            };
            let st = env.step(a);
            ret += st.reward;
            replay.push(Transition {
                state: s,
                action: a,
                reward: st.reward,
                next: st.state.clone(),
                done: st.done,
            });
            s = st.state;
            if replay.len() >= hp.batch_size {
                let batch = replay.sample(hp.batch_size, rng);
                ddqn_update(&mut q, &batch, hp);
            }
            if st.done {
                break;
            }
        }
        best = best.max(ret);
        trace.push(EpisodeRecord {
            episode: ep,
            reward: ret,
            running_best: best,
        });
    }
    (q, trace)
}
