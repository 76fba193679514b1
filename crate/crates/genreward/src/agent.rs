//! Replay buffer and double Q-learning over discrete actions.
//!
//! The learner is deliberately small: states are the frozen frame-encoder
//! latents (so the reward modules and the Q-function see the same stationary
//! features), the critic is one MLP trunk with a linear head per action, and
//! updates use the double-Q target
//!
//!   y = r + gamma * (1 - done) * Q_target(s', argmax_a Q_online(s', a))
//!
//! treated as a constant, with a mean-squared TD loss on the taken action.
//! The target net trails the online net by Polyak averaging after every
//! update. Exploration is epsilon-greedy with a linear anneal over the first
//! chunk of training.
//!
//! The replay buffer is a fixed-capacity ring with strictly FIFO eviction
//! and uniform-with-replacement sampling; it stores encoded state vectors,
//! not raw frames, which is lossless here because the encoder is frozen
//! before the agent starts learning.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::numcore::kernel::{rf, Net, NetGrads, Real};
use crate::numcore::{
    find_block, grad_check, load_blocks, mlp_from_blocks, mlp_to_blocks, save_blocks, seed_rng,
    Activation, Mlp, OptState, Tensor,
};
use crate::seq_encoder::SeqEncoder;
use crate::{Error, Result};

/// One step of experience. `s` and `s_next` are encoded state vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f32>,
    pub action: usize,
    /// The emitted (possibly shaped) reward, not the raw env reward.
    pub reward: f64,
    pub s_next: Vec<f32>,
    pub done: bool,
    /// Global step index at which the transition was taken.
    pub t: u64,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    n_actions: usize,
    /// Slot the next overwrite lands on once the ring is full; the oldest
    /// element lives here.
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, n_actions: usize) -> Result<Self> {
        if capacity == 0 || n_actions == 0 {
            return Err(Error::Config(
                "replay capacity and action count must be positive".into(),
            ));
        }
        Ok(ReplayBuffer {
            data: Vec::new(),
            capacity,
            n_actions,
            head: 0,
            pushed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total insertions ever, including those since evicted.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, tr: Transition) -> Result<()> {
        if !tr.reward.is_finite() {
            return Err(Error::NonFinite(format!("replay reward at t {}", tr.t)));
        }
        if tr.action >= self.n_actions {
            return Err(Error::InvalidArg(format!(
                "action {} out of range (|A| = {})",
                tr.action, self.n_actions
            )));
        }
        if self.data.len() < self.capacity {
            self.data.push(tr);
        } else {
            self.data[self.head] = tr;
            self.head = (self.head + 1) % self.capacity;
        }
        self.pushed += 1;
        Ok(())
    }

    /// Uniform with replacement.
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&Transition>> {
        if self.data.is_empty() {
            return Err(Error::EmptyInput("replay_sample"));
        }
        if batch == 0 {
            return Err(Error::EmptyInput("replay_sample batch"));
        }
        Ok((0..batch)
            .map(|_| &self.data[rng.gen_range(0..self.data.len())])
            .collect())
    }

    /// Contents oldest first.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.data.len() < self.capacity { 0 } else { self.head };
        self.data[split..].iter().chain(self.data[..split].iter())
    }
}

/// Replay snapshot format, little-endian:
///   magic "RPB1"
///   u64 capacity, n_actions, width, len, pushed
///   per record (oldest first): u64 t, u32 action, u8 done,
///                              f64 reward, f32 s[width], f32 s_next[width]
pub const RPB1_MAGIC: &[u8; 4] = b"RPB1";

pub fn save_replay(path: &Path, buffer: &ReplayBuffer) -> Result<()> {
    use std::io::Write;
    let ioerr = |e| Error::io(path.display().to_string(), e);
    let file = std::fs::File::create(path).map_err(ioerr)?;
    let mut w = std::io::BufWriter::new(file);
    let width = buffer.data.first().map_or(0, |tr| tr.s.len());
    for tr in buffer.iter_fifo() {
        if tr.s.len() != width || tr.s_next.len() != width {
            return Err(Error::ShapeMismatch {
                op: "save_replay",
                expected: format!("state width {width}"),
                got: format!("{} / {}", tr.s.len(), tr.s_next.len()),
            });
        }
    }
    w.write_all(RPB1_MAGIC).map_err(ioerr)?;
    for v in [
        buffer.capacity as u64,
        buffer.n_actions as u64,
        width as u64,
        buffer.len() as u64,
        buffer.pushed,
    ] {
        w.write_all(&v.to_le_bytes()).map_err(ioerr)?;
    }
    for tr in buffer.iter_fifo() {
        w.write_all(&tr.t.to_le_bytes()).map_err(ioerr)?;
        w.write_all(&(tr.action as u32).to_le_bytes()).map_err(ioerr)?;
        w.write_all(&[tr.done as u8]).map_err(ioerr)?;
        w.write_all(&tr.reward.to_le_bytes()).map_err(ioerr)?;
        for &x in tr.s.iter().chain(tr.s_next.iter()) {
            w.write_all(&x.to_le_bytes()).map_err(ioerr)?;
        }
    }
    w.flush().map_err(ioerr)
}

pub fn load_replay(path: &Path) -> Result<ReplayBuffer> {
    use std::io::Read;
    let ioerr = |e| Error::io(path.display().to_string(), e);
    let file = std::fs::File::open(path).map_err(ioerr)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(ioerr)?;
    if &magic != RPB1_MAGIC {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: format!("bad magic {magic:?}, want {RPB1_MAGIC:?}"),
        });
    }
    let mut u64s = [0u64; 5];
    for v in u64s.iter_mut() {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(ioerr)?;
        *v = u64::from_le_bytes(buf);
    }
    let [capacity, n_actions, width, len, pushed] = u64s;
    if len > capacity {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: format!("length {len} exceeds capacity {capacity}"),
        });
    }
    let mut buffer = ReplayBuffer::new(capacity as usize, n_actions as usize)?;
    for _ in 0..len {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(ioerr)?;
        let t = u64::from_le_bytes(b8);
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(ioerr)?;
        let action = u32::from_le_bytes(b4) as usize;
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1).map_err(ioerr)?;
        let done = b1[0] != 0;
        r.read_exact(&mut b8).map_err(ioerr)?;
        let reward = f64::from_le_bytes(b8);
        let mut read_vec = |r: &mut std::io::BufReader<std::fs::File>| -> Result<Vec<f32>> {
            let mut out = Vec::with_capacity(width as usize);
            for _ in 0..width {
                let mut b = [0u8; 4];
                r.read_exact(&mut b).map_err(ioerr)?;
                out.push(f32::from_le_bytes(b));
            }
            Ok(out)
        };
        let s = read_vec(&mut r)?;
        let s_next = read_vec(&mut r)?;
        buffer.push(Transition {
            s,
            action,
            reward,
            s_next,
            done,
            t,
        })?;
    }
    buffer.pushed = pushed;
    Ok(buffer)
}

/// Frozen-encoder state features for one observation frame.
pub fn encode_state(encoder: &SeqEncoder, obs: &Tensor) -> Result<Vec<f32>> {
    Ok(encoder.encode_frame_flat(obs)?.data().to_vec())
}

#[derive(Clone, Debug)]
pub struct QConfig {
    pub state_dim: usize,
    pub n_actions: usize,
    pub hidden: usize,
    pub gamma: f64,
    pub lr: f32,
    /// Polyak rate of the target net after each update.
    pub tau: f32,
    pub batch: usize,
    pub replay_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of total steps over which epsilon anneals.
    pub eps_frac: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            state_dim: 144,
            n_actions: crate::gridworld::N_ACTIONS,
            hidden: 64,
            gamma: 0.99,
            lr: 1e-3,
            tau: 0.01,
            batch: 32,
            replay_capacity: 100_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_frac: 0.3,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.n_actions == 0 || self.hidden == 0 || self.batch == 0 {
            return Err(Error::Config("q-learner dims must be positive".into()));
        }
        if self.replay_capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("bad lr {}", self.lr)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau {} outside (0, 1]", self.tau)));
        }
        for (name, e) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("{name} {e} outside [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.eps_frac) {
            return Err(Error::Config(format!("eps_frac {} outside [0, 1]", self.eps_frac)));
        }
        Ok(())
    }
}

/// Linear epsilon anneal: `eps_start` at step 0 down to `eps_end` at
/// `eps_frac * total`, flat afterwards.
pub fn epsilon_at(step: u64, total: u64, cfg: &QConfig) -> f64 {
    let anneal = (total as f64 * cfg.eps_frac).ceil();
    if anneal <= 0.0 || step as f64 >= anneal {
        return cfg.eps_end;
    }
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * step as f64 / anneal
}

pub struct QAgent {
    q: Mlp,
    q_tgt: Mlp,
    cfg: QConfig,
    opt: OptState,
    updates: u64,
}

fn argmax_lowest<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// TD loss and online-parameter gradients, precision-generic so the f64
/// gradient check evaluates the identical computation. The bootstrap value
/// is a constant of the optimization: no gradient flows into the target net
/// or through the argmax.
fn td_loss_core<T: Real>(
    online: &Net<T>,
    target: &Net<T>,
    cfg: &QConfig,
    batch: &[&Transition],
    need_grads: bool,
) -> Result<(f64, Option<NetGrads<T>>)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyInput("q_update batch"));
    }
    let sd = cfg.state_dim;
    let na = cfg.n_actions;
    let mut s = vec![T::zero(); n * sd];
    let mut s_next = vec![T::zero(); n * sd];
    for (i, tr) in batch.iter().enumerate() {
        if tr.s.len() != sd || tr.s_next.len() != sd {
            return Err(Error::ShapeMismatch {
                op: "q_update state",
                expected: format!("[{sd}]"),
                got: format!("[{}] / [{}]", tr.s.len(), tr.s_next.len()),
            });
        }
        if tr.action >= na {
            return Err(Error::InvalidArg(format!(
                "action {} out of range (|A| = {na})",
                tr.action
            )));
        }
        for (j, &v) in tr.s.iter().enumerate() {
            s[i * sd + j] = rf(v);
        }
        for (j, &v) in tr.s_next.iter().enumerate() {
            s_next[i * sd + j] = rf(v);
        }
    }
    let cache = online.forward_cached(&s, n);
    let q: &[T] = cache.outs.last().expect("nonempty net");
    let qn_online = online.forward(&s_next, n);
    let qn_target = target.forward(&s_next, n);
    let mut upstream = vec![T::zero(); n * na];
    let mut loss = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for (i, tr) in batch.iter().enumerate() {
        let best = argmax_lowest(&qn_online[i * na..(i + 1) * na]);
        let boot = if tr.done {
            0.0
        } else {
            cfg.gamma * qn_target[i * na + best].to_f64().expect("finite q")
        };
        let y = tr.reward + boot;
        let pred = q[i * na + tr.action].to_f64().expect("finite q");
        let diff = pred - y;
        loss += diff * diff * inv_n;
        if need_grads {
            upstream[i * na + tr.action] = T::from(2.0 * diff * inv_n).expect("finite upstream");
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("td loss".into()));
    }
    if !need_grads {
        return Ok((loss, None));
    }
    let (grads, _) = online.backward(&s, &cache, &upstream);
    Ok((loss, Some(grads)))
}

impl QAgent {
    pub fn new(cfg: &QConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let dims = [cfg.state_dim, cfg.hidden, cfg.n_actions];
        let q = Mlp::new(&dims, Activation::Relu, Activation::Linear, rng)?;
        let q_tgt = q.clone();
        let opt = OptState::adam(cfg.lr);
        Ok(QAgent {
            q,
            q_tgt,
            cfg: cfg.clone(),
            opt,
            updates: 0,
        })
    }

    pub fn config(&self) -> &QConfig {
        &self.cfg
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, s: &[f32]) -> Result<Vec<f32>> {
        let out = self.q.forward(&Tensor::new(vec![s.len()], s.to_vec())?)?;
        Ok(out.data().to_vec())
    }

    /// Uniform action with probability epsilon, greedy otherwise (ties to
    /// the lowest index).
    pub fn act_epsilon_greedy(&self, s: &[f32], eps: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidArg(format!("epsilon {eps} outside [0, 1]")));
        }
        if rng.gen_range(0.0..1.0) < eps {
            return Ok(rng.gen_range(0..self.cfg.n_actions));
        }
        Ok(argmax_lowest(&self.q_values(s)?))
    }

    /// One double-Q step on the batch; returns the TD loss before the step.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let (loss, grads) = td_loss_core(&self.q.net, &self.q_tgt.net, &self.cfg, batch, true)?;
        let grads = grads.expect("grads requested");
        let mut theta = self.q.flatten();
        let mut flat_grads = Vec::with_capacity(theta.len());
        grads.flatten_into(&mut flat_grads);
        self.opt.step(&mut theta, &flat_grads)?;
        self.q.set_from_flat(&theta);
        self.q_tgt.soft_update_from(&self.q, self.cfg.tau)?;
        self.updates += 1;
        Ok(loss)
    }

    /// TD loss on a batch without touching parameters.
    pub fn td_loss(&self, batch: &[&Transition]) -> Result<f64> {
        td_loss_core(&self.q.net, &self.q_tgt.net, &self.cfg, batch, false).map(|(l, _)| l)
    }

    /// All parameters finite, online and target. Cheap enough to run every
    /// few hundred updates as a divergence tripwire.
    pub fn check_finite(&self) -> Result<()> {
        for (name, net) in [("q", &self.q), ("q_target", &self.q_tgt)] {
            if net.flatten().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!("{name} parameters went non-finite")));
            }
        }
        Ok(())
    }

    pub(crate) fn nets_mut(&mut self) -> (&mut Mlp, &mut Mlp) {
        (&mut self.q, &mut self.q_tgt)
    }
}

const META_BLOCK: &str = "q.meta";

pub fn save_agent(path: &Path, agent: &QAgent) -> Result<()> {
    let cfg = &agent.cfg;
    let meta = vec![
        cfg.state_dim as f32,
        cfg.n_actions as f32,
        cfg.hidden as f32,
        cfg.gamma as f32,
        cfg.lr,
        cfg.tau,
        cfg.batch as f32,
        cfg.replay_capacity as f32,
        cfg.eps_start as f32,
        cfg.eps_end as f32,
        cfg.eps_frac as f32,
        agent.updates as f32,
    ];
    let mut blocks = vec![(META_BLOCK.to_string(), Tensor::from_vec(meta))];
    mlp_to_blocks("q.online", &agent.q, &mut blocks);
    mlp_to_blocks("q.target", &agent.q_tgt, &mut blocks);
    save_blocks(path, &blocks)
}

pub fn load_agent(path: &Path) -> Result<QAgent> {
    let blocks = load_blocks(path)?;
    let meta = find_block(&blocks, META_BLOCK)?;
    if meta.len() != 12 {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: format!("q.meta wants 12 entries, got {}", meta.len()),
        });
    }
    let m = meta.data();
    let cfg = QConfig {
        state_dim: m[0] as usize,
        n_actions: m[1] as usize,
        hidden: m[2] as usize,
        gamma: m[3] as f64,
        lr: m[4],
        tau: m[5],
        batch: m[6] as usize,
        replay_capacity: m[7] as usize,
        eps_start: m[8] as f64,
        eps_end: m[9] as f64,
        eps_frac: m[10] as f64,
    };
    cfg.validate()?;
    let q = mlp_from_blocks("q.online", &blocks)?;
    let q_tgt = mlp_from_blocks("q.target", &blocks)?;
    for (name, net) in [("q.online", &q), ("q.target", &q_tgt)] {
        if net.dims() != [cfg.state_dim, cfg.hidden, cfg.n_actions] {
            return Err(Error::Parse {
                what: path.display().to_string(),
                detail: format!("{name} dims {:?} do not match q.meta", net.dims()),
            });
        }
    }
    let opt = OptState::adam(cfg.lr);
    Ok(QAgent {
        q,
        q_tgt,
        cfg,
        opt,
        updates: m[11] as u64,
    })
}

/// Max relative error between analytic TD gradients and f64 central
/// differences on a random batch.
pub fn td_gradient_check(cfg: &QConfig, seed: u64) -> Result<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = seed_rng(seed, "td-gradcheck");
    let agent = QAgent::new(cfg, &mut rng)?;
    let n = 4;
    let batch: Vec<Transition> = (0..n)
        .map(|i| Transition {
            s: (0..cfg.state_dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
            action: i % cfg.n_actions,
            reward: rng.gen_range(-1.0..1.0),
            s_next: (0..cfg.state_dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
            done: i == n - 1,
            t: i as u64 + 1,
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();

    let (_, grads) = td_loss_core(&agent.q.net, &agent.q_tgt.net, cfg, &refs, true)?;
    let mut analytic = Vec::new();
    grads.expect("grads requested").flatten_into(&mut analytic);
    let theta64: Vec<f64> = agent.q.flatten().iter().map(|&v| v as f64).collect();
    let online64 = agent.q.to_f64();
    let target64 = agent.q_tgt.to_f64();
    grad_check(
        |t: &[f64]| {
            let mut net = online64.clone();
            net.set_from_flat(t);
            td_loss_core(&net, &target64, cfg, &refs, false).unwrap().0
        },
        &theta64,
        &analytic,
        1e-5,
    )
}
