//! Forward-backward representation learning.
//!
//! Two nets factor the discounted successor measure: F(s, a, z) and B(g),
//! both into R^d, so that F(s, a, z_g)^T B(g') tracks M^{pi_g}(s, a, g') /
//! rho(g'). The conditioning z for a goal with embedding psi is a learned
//! linear projection of psi (`goal_proj`); exploration draws Gaussian z
//! rescaled to norm sqrt(d) instead, mixed at probability `p_goal_z`.
//!
//! The Bellman-residual loss comes in two variants:
//! - `GoalAnchored`: every B evaluation uses the goal embedding psi, i.e.
//!   mean (F(s,a,z)^T B(psi) - gamma Fbar(s',pi_z(s'),z)^T Bbar(psi))^2
//!   - 2 mean F(s,a,z)^T B(psi), constant term dropped.
//! - `StateResampled`: the squared term pairs element i with an
//!   independently drawn state embedding (here: the next state of batch
//!   element i+1, cyclically), and the -2 term uses the element's own next
//!   state. This variant has the successor-measure fixed point and is the
//!   one the exact tabular oracles certify.
//!
//! Target copies Fbar, Bbar provide bootstrap values and never receive
//! parameter gradients; z still flows through Fbar's input slot, since the
//! loss is differentiated as written. pi_z(s') is the argmax of
//! F(s', a, z)^T z with ties to the lowest action index, scored by the
//! online F, or by Fbar when pi_from_target is set (see FbConfig).
//!
//! An orthonormality regularizer ||mean_i b_i b_i^T - I||_F^2 over B at the
//! batch's next-state embeddings keeps B from collapsing. After a fixed
//! training budget the parameters freeze permanently.
//!
//! The projection head alone gets no goal-seeking pressure from the Bellman
//! terms (any z works equally well there), so training also pulls
//! goal_proj(psi) toward Bbar(psi): conditioning on a goal should mean
//! conditioning on its backward embedding, which is the inference rule that
//! makes pi_z reach the goal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numcore::kernel::{rf, Net, NetGrads, Real};
use crate::numcore::{
    find_block, grad_check, load_blocks, mlp_from_blocks, mlp_to_blocks, save_blocks, seed_rng,
    Activation, Mlp, OptState, Tensor,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FbVariant {
    /// B is only ever evaluated at the goal embedding.
    GoalAnchored,
    /// B is evaluated at resampled state embeddings (squared term) and the
    /// transition's own next state (-2 term); grounded in the successor
    /// measure.
    StateResampled,
}

impl FbVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            FbVariant::GoalAnchored => "goal-anchored",
            FbVariant::StateResampled => "state-resampled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "goal-anchored" => Ok(FbVariant::GoalAnchored),
            "state-resampled" => Ok(FbVariant::StateResampled),
            other => Err(Error::Config(format!("unknown fb variant '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FbConfig {
    pub d: usize,
    pub state_dim: usize,
    /// Width of goal embeddings fed to B and goal_proj.
    pub goal_dim: usize,
    pub n_actions: usize,
    pub hidden: usize,
    /// Hidden width of B's tower. 0 drops the hidden layer so B is a single
    /// linear map; with one-hot goal embeddings that makes B a plain table of
    /// per-state vectors, which keeps large-magnitude columns from dragging
    /// their neighbors around through shared hidden weights.
    pub b_hidden: usize,
    pub gamma: f32,
    pub lr: f32,
    /// Target soft-update rate.
    pub tau: f32,
    pub ortho_weight: f32,
    /// Weight of the pull of goal_proj(psi) toward Bbar(psi).
    pub align_weight: f32,
    /// Probability that a training z is the projected goal embedding rather
    /// than a Gaussian draw.
    pub p_goal_z: f32,
    /// Compute the bootstrap argmax from the slow target F instead of the
    /// online F. Grids with several equally short routes to a goal leave the
    /// online argmax flipping between them on gradient noise, and every flip
    /// rewrites the TD target measure wholesale; reading the policy off the
    /// Polyak-averaged weights damps that churn. Readout (policy_z) always
    /// uses the online net.
    pub pi_from_target: bool,
    /// Train steps before the permanent freeze.
    pub budget: usize,
    pub variant: FbVariant,
}

impl Default for FbConfig {
    fn default() -> Self {
        FbConfig {
            d: 32,
            state_dim: 144,
            goal_dim: 144,
            n_actions: crate::gridworld::N_ACTIONS,
            hidden: 64,
            b_hidden: 64,
            gamma: 0.997,
            lr: 1e-4,
            tau: 0.01,
            ortho_weight: 1.0,
            align_weight: 1.0,
            p_goal_z: 0.5,
            pi_from_target: false,
            budget: 20_000,
            variant: FbVariant::GoalAnchored,
        }
    }
}

impl FbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.state_dim == 0 || self.goal_dim == 0 || self.n_actions == 0 || self.hidden == 0 {
            return Err(Error::Config("fb dims must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("fb gamma {} out of [0, 1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.p_goal_z) {
            return Err(Error::Config(format!("p_goal_z {} out of [0, 1]", self.p_goal_z)));
        }
        if !(0.0..=1.0).contains(&self.tau) || self.tau == 0.0 {
            return Err(Error::Config(format!("tau {} out of (0, 1]", self.tau)));
        }
        if self.ortho_weight < 0.0 || self.align_weight < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("fb budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FbTransition {
    pub s: Vec<f32>,
    pub a: usize,
    pub s_next: Vec<f32>,
    /// Terminal transitions cut the bootstrap term.
    pub done: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct FbStepMetrics {
    pub fb_loss: f64,
    pub ortho_loss: f64,
    pub align_loss: f64,
    pub total: f64,
}

pub struct FbParams {
    f: Mlp,
    b: Mlp,
    /// Learned linear map psi -> z; trained through F's z slot whenever the
    /// goal branch of sample_z was taken.
    goal_proj: Mlp,
    f_tgt: Mlp,
    b_tgt: Mlp,
    cfg: FbConfig,
    steps: usize,
    frozen: bool,
    opt: OptState,
}

/// ||mean_i b_i b_i^T - I_d||_F^2 over the given B outputs.
pub fn ortho_loss(b_outputs: &[Vec<f64>]) -> Result<f64> {
    if b_outputs.is_empty() {
        return Err(Error::EmptyInput("ortho_loss batch"));
    }
    let d = b_outputs[0].len();
    if b_outputs.iter().any(|b| b.len() != d) {
        return Err(Error::ShapeMismatch {
            op: "ortho_loss",
            expected: format!("uniform width {d}"),
            got: "ragged batch".into(),
        });
    }
    let inv_n = 1.0 / b_outputs.len() as f64;
    let mut loss = 0.0;
    for p in 0..d {
        for q in 0..d {
            let mut c = 0.0;
            for b in b_outputs {
                c += b[p] * b[q];
            }
            c *= inv_n;
            let target = if p == q { 1.0 } else { 0.0 };
            loss += (c - target) * (c - target);
        }
    }
    Ok(loss)
}

struct FbNets<'a, T: Real> {
    f: &'a Net<T>,
    b: &'a Net<T>,
    f_tgt: &'a Net<T>,
    b_tgt: &'a Net<T>,
    proj: &'a Net<T>,
}

struct FbDims {
    d: usize,
    state_dim: usize,
    goal_dim: usize,
    n_actions: usize,
    gamma: f64,
    /// Zero disables the term (pure-loss evaluation).
    ortho_weight: f64,
    /// Zero disables the goal_proj-to-Bbar pull.
    align_weight: f64,
    variant: FbVariant,
    pi_from_target: bool,
}

struct FbGradsOut<T: Real> {
    f: NetGrads<T>,
    b: NetGrads<T>,
    /// None when z came from the Gaussian branch.
    proj: Option<NetGrads<T>>,
}

fn fill_f_row<T: Real>(row: &mut [T], s: &[f32], a: usize, z: &[T], state_dim: usize, n_actions: usize) {
    for (dst, &v) in row[..state_dim].iter_mut().zip(s) {
        *dst = rf(v);
    }
    for v in row[state_dim..state_dim + n_actions].iter_mut() {
        *v = T::zero();
    }
    row[state_dim + a] = T::one();
    row[state_dim + n_actions..].copy_from_slice(z);
}

fn dot_t<T: Real>(u: &[T], v: &[T]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| a.to_f64().unwrap_or(f64::NAN) * b.to_f64().unwrap_or(f64::NAN))
        .sum()
}

/// The full training objective L_FB + lambda L_norm with gradients for F, B
/// and (goal branch only) goal_proj. `z_gaussian` carries an exploration z;
/// None means z = goal_proj(psi) inside the differentiated graph.
#[allow(clippy::too_many_arguments)]
fn fb_total_loss<T: Real>(
    nets: &FbNets<'_, T>,
    dims: &FbDims,
    batch: &[FbTransition],
    goal_emb: &[f32],
    z_gaussian: Option<&[f32]>,
    need_grads: bool,
) -> Result<(FbStepMetrics, Option<FbGradsOut<T>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("fb batch"));
    }
    if goal_emb.len() != dims.goal_dim {
        return Err(Error::ShapeMismatch {
            op: "fb goal_emb",
            expected: format!("{}", dims.goal_dim),
            got: format!("{}", goal_emb.len()),
        });
    }
    for tr in batch {
        if tr.s.len() != dims.state_dim || tr.s_next.len() != dims.state_dim || tr.a >= dims.n_actions {
            return Err(Error::ShapeMismatch {
                op: "fb transition",
                expected: format!("state width {} and action < {}", dims.state_dim, dims.n_actions),
                got: format!("({}, a={}, {})", tr.s.len(), tr.a, tr.s_next.len()),
            });
        }
    }
    let with_ortho = dims.ortho_weight > 0.0;
    let needs_states = dims.variant == FbVariant::StateResampled || with_ortho;
    if needs_states && dims.goal_dim != dims.state_dim {
        return Err(Error::Config(format!(
            "B consumes state embeddings here, so goal_dim ({}) must equal state_dim ({})",
            dims.goal_dim, dims.state_dim
        )));
    }
    let n = batch.len();
    let d = dims.d;
    let f_in = dims.state_dim + dims.n_actions + d;
    let goal_t: Vec<T> = goal_emb.iter().map(|&v| rf(v)).collect();

    // z, either the provided Gaussian or the projected goal embedding.
    let proj_cache = nets.proj.forward_cached(&goal_t, 1);
    let z: Vec<T> = match z_gaussian {
        Some(zv) => {
            if zv.len() != d {
                return Err(Error::ShapeMismatch {
                    op: "fb z",
                    expected: format!("{d}"),
                    got: format!("{}", zv.len()),
                });
            }
            zv.iter().map(|&v| rf(v)).collect()
        }
        None => proj_cache.outs.last().unwrap().clone(),
    };

    // Online F at (s, a, z).
    let mut fx = vec![T::zero(); n * f_in];
    for (i, tr) in batch.iter().enumerate() {
        fill_f_row(&mut fx[i * f_in..][..f_in], &tr.s, tr.a, &z, dims.state_dim, dims.n_actions);
    }
    let f_cache = nets.f.forward_cached(&fx, n);
    let f_out: &[T] = f_cache.outs.last().unwrap();

    // pi_z(s'): argmax of F(s', a, z)^T z, ties to lowest index. The scoring
    // net is online F unless pi_from_target asks for the slow copy.
    let mut pol_rows = vec![T::zero(); n * dims.n_actions * f_in];
    for (i, tr) in batch.iter().enumerate() {
        for a in 0..dims.n_actions {
            let r = i * dims.n_actions + a;
            fill_f_row(&mut pol_rows[r * f_in..][..f_in], &tr.s_next, a, &z, dims.state_dim, dims.n_actions);
        }
    }
    let pol_net = if dims.pi_from_target { nets.f_tgt } else { nets.f };
    let pol_out = pol_net.forward(&pol_rows, n * dims.n_actions);
    let mut pi: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..dims.n_actions {
            let score = dot_t(&pol_out[(i * dims.n_actions + a) * d..][..d], &z);
            if score > best {
                best = score;
                best_a = a;
            }
        }
        pi.push(best_a);
    }

    // Bootstrap F-bar at (s', pi_z(s'), z); cached because z flows through
    // its input even though its parameters stay fixed.
    let mut ft_x = vec![T::zero(); n * f_in];
    for (i, tr) in batch.iter().enumerate() {
        fill_f_row(&mut ft_x[i * f_in..][..f_in], &tr.s_next, pi[i], &z, dims.state_dim, dims.n_actions);
    }
    let ft_cache = nets.f_tgt.forward_cached(&ft_x, n);
    let ft_out: &[T] = ft_cache.outs.last().unwrap();

    // Online B rows. GoalAnchored: row 0 = psi, then ortho rows phi(s').
    // StateResampled: rows 0..n = phi(s''), rows n..2n = phi(s') which serve
    // both the -2 term and the ortho regularizer.
    let resample = |i: usize| &batch[(i + 1) % n].s_next;
    let (b_rows, ortho_base) = match dims.variant {
        FbVariant::GoalAnchored => {
            let extra = if with_ortho { n } else { 0 };
            let mut rows = vec![T::zero(); (1 + extra) * dims.goal_dim];
            rows[..dims.goal_dim].copy_from_slice(&goal_t);
            for i in 0..extra {
                for (dst, &v) in rows[(1 + i) * dims.goal_dim..][..dims.goal_dim]
                    .iter_mut()
                    .zip(&batch[i].s_next)
                {
                    *dst = rf(v);
                }
            }
            (rows, 1)
        }
        FbVariant::StateResampled => {
            let mut rows = vec![T::zero(); 2 * n * dims.goal_dim];
            for i in 0..n {
                for (dst, &v) in rows[i * dims.goal_dim..][..dims.goal_dim].iter_mut().zip(resample(i)) {
                    *dst = rf(v);
                }
                for (dst, &v) in rows[(n + i) * dims.goal_dim..][..dims.goal_dim]
                    .iter_mut()
                    .zip(&batch[i].s_next)
                {
                    *dst = rf(v);
                }
            }
            (rows, n)
        }
    };
    let b_n_rows = b_rows.len() / dims.goal_dim;
    let b_cache = nets.b.forward_cached(&b_rows, b_n_rows);
    let b_out: &[T] = b_cache.outs.last().unwrap();

    // B-bar rows: psi once, or phi(s'') per element.
    let bt_out: Vec<T> = match dims.variant {
        FbVariant::GoalAnchored => nets.b_tgt.forward(&goal_t, 1),
        FbVariant::StateResampled => {
            let mut rows = vec![T::zero(); n * dims.goal_dim];
            for i in 0..n {
                for (dst, &v) in rows[i * dims.goal_dim..][..dims.goal_dim].iter_mut().zip(resample(i)) {
                    *dst = rf(v);
                }
            }
            nets.b_tgt.forward(&rows, n)
        }
    };

    let b_sq = |i: usize| -> &[T] {
        match dims.variant {
            FbVariant::GoalAnchored => &b_out[..d],
            FbVariant::StateResampled => &b_out[i * d..][..d],
        }
    };
    let b_two = |i: usize| -> &[T] {
        match dims.variant {
            FbVariant::GoalAnchored => &b_out[..d],
            FbVariant::StateResampled => &b_out[(n + i) * d..][..d],
        }
    };
    let b_bar = |i: usize| -> &[T] {
        match dims.variant {
            FbVariant::GoalAnchored => &bt_out[..d],
            FbVariant::StateResampled => &bt_out[i * d..][..d],
        }
    };

    let inv_n = 1.0 / n as f64;
    let mut deltas = Vec::with_capacity(n);
    let mut l_fb = 0.0f64;
    for (i, tr) in batch.iter().enumerate() {
        let q = dot_t(&f_out[i * d..][..d], b_sq(i));
        let keep = if tr.done { 0.0 } else { 1.0 };
        let v = keep * dot_t(&ft_out[i * d..][..d], b_bar(i));
        let delta = q - dims.gamma * v;
        deltas.push((delta, keep));
        let r = dot_t(&f_out[i * d..][..d], b_two(i));
        l_fb += (delta * delta - 2.0 * r) * inv_n;
    }

    // Orthonormality over the phi(s') rows of the online B batch.
    let mut l_norm = 0.0f64;
    let mut c = vec![0.0f64; d * d];
    if with_ortho {
        for i in 0..n {
            let b = &b_out[(ortho_base + i) * d..][..d];
            for p in 0..d {
                let bp = b[p].to_f64().unwrap_or(f64::NAN);
                for q in 0..d {
                    c[p * d + q] += bp * b[q].to_f64().unwrap_or(f64::NAN) * inv_n;
                }
            }
        }
        for p in 0..d {
            for q in 0..d {
                let target = if p == q { 1.0 } else { 0.0 };
                let diff = c[p * d + q] - target;
                l_norm += diff * diff;
            }
        }
    }
    // Pull of goal_proj(psi) toward Bbar(psi); Bbar is a fixed target here.
    let proj_out: &[T] = proj_cache.outs.last().unwrap();
    let mut l_align = 0.0f64;
    let bbar_goal: Vec<T> = if dims.align_weight > 0.0 {
        let bg = nets.b_tgt.forward(&goal_t, 1);
        for k in 0..d {
            let diff = proj_out[k].to_f64().unwrap_or(f64::NAN) - bg[k].to_f64().unwrap_or(f64::NAN);
            l_align += diff * diff;
        }
        bg
    } else {
        Vec::new()
    };

    let total = l_fb + dims.ortho_weight * l_norm + dims.align_weight * l_align;
    if !total.is_finite() {
        return Err(Error::NonFinite("fb loss".into()));
    }
    let metrics = FbStepMetrics {
        fb_loss: l_fb,
        ortho_loss: l_norm,
        align_loss: l_align,
        total,
    };
    if !need_grads {
        return Ok((metrics, None));
    }

    // Upstream for online F rows, accumulating dz from the z slot.
    let mut f_up = vec![T::zero(); n * d];
    for (i, _) in batch.iter().enumerate() {
        let (delta, _) = deltas[i];
        let coef_sq = 2.0 * delta * inv_n;
        let row = &mut f_up[i * d..][..d];
        let bs = b_sq(i);
        let b2 = b_two(i);
        for k in 0..d {
            row[k] = T::from(coef_sq).unwrap() * bs[k] - T::from(2.0 * inv_n).unwrap() * b2[k];
        }
    }
    let (f_grads, f_dx) = nets.f.backward(&fx, &f_cache, &f_up);
    let mut dz = vec![T::zero(); d];
    for i in 0..n {
        let row = &f_dx[i * f_in..][..f_in];
        for k in 0..d {
            dz[k] += row[dims.state_dim + dims.n_actions + k];
        }
    }

    // Bootstrap branch: z flows through F-bar's input; its parameter grads
    // are computed and dropped.
    let mut ft_up = vec![T::zero(); n * d];
    for i in 0..n {
        let (delta, keep) = deltas[i];
        let coef = -2.0 * delta * dims.gamma * keep * inv_n;
        let row = &mut ft_up[i * d..][..d];
        let bb = b_bar(i);
        for k in 0..d {
            row[k] = T::from(coef).unwrap() * bb[k];
        }
    }
    let (_, ft_dx) = nets.f_tgt.backward(&ft_x, &ft_cache, &ft_up);
    for i in 0..n {
        let row = &ft_dx[i * f_in..][..f_in];
        for k in 0..d {
            dz[k] += row[dims.state_dim + dims.n_actions + k];
        }
    }

    // Upstream for the online B rows.
    let mut b_up = vec![T::zero(); b_n_rows * d];
    for (i, _) in batch.iter().enumerate() {
        let (delta, _) = deltas[i];
        let coef_sq = T::from(2.0 * delta * inv_n).unwrap();
        let coef_two = T::from(-2.0 * inv_n).unwrap();
        let f_row = &f_out[i * d..][..d];
        match dims.variant {
            FbVariant::GoalAnchored => {
                let row = &mut b_up[..d];
                for k in 0..d {
                    row[k] += (coef_sq + coef_two) * f_row[k];
                }
            }
            FbVariant::StateResampled => {
                for k in 0..d {
                    b_up[i * d + k] += coef_sq * f_row[k];
                    b_up[(n + i) * d + k] += coef_two * f_row[k];
                }
            }
        }
    }
    if with_ortho {
        // d/db_i of ||C - I||_F^2 is (4/n) (C - I) b_i.
        let scale = 4.0 * inv_n * dims.ortho_weight;
        for i in 0..n {
            let b = &b_out[(ortho_base + i) * d..][..d];
            let row = &mut b_up[(ortho_base + i) * d..][..d];
            for p in 0..d {
                let mut acc = 0.0f64;
                for q in 0..d {
                    let target = if p == q { 1.0 } else { 0.0 };
                    acc += (c[p * d + q] - target) * b[q].to_f64().unwrap_or(f64::NAN);
                }
                row[p] += T::from(scale * acc).unwrap();
            }
        }
    }
    let (b_grads, _) = nets.b.backward(&b_rows, &b_cache, &b_up);

    // goal_proj sees the z-slot gradient when z came from the goal branch,
    // plus the alignment pull in every step.
    let mut proj_up = vec![T::zero(); d];
    let mut any_proj = false;
    if z_gaussian.is_none() {
        proj_up.copy_from_slice(&dz);
        any_proj = true;
    }
    if dims.align_weight > 0.0 {
        let w = T::from(2.0 * dims.align_weight).unwrap();
        for k in 0..d {
            proj_up[k] += w * (proj_out[k] - bbar_goal[k]);
        }
        any_proj = true;
    }
    let proj_grads = if any_proj {
        let (pg, _) = nets.proj.backward(&goal_t, &proj_cache, &proj_up);
        Some(pg)
    } else {
        None
    };
    Ok((
        metrics,
        Some(FbGradsOut {
            f: f_grads,
            b: b_grads,
            proj: proj_grads,
        }),
    ))
}

impl FbParams {
    pub fn new(cfg: &FbConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let f = Mlp::new(
            &[cfg.state_dim + cfg.n_actions + cfg.d, cfg.hidden, cfg.d],
            Activation::Relu,
            Activation::Linear,
            rng,
        )?;
        let b_dims: Vec<usize> = if cfg.b_hidden == 0 {
            vec![cfg.goal_dim, cfg.d]
        } else {
            vec![cfg.goal_dim, cfg.b_hidden, cfg.d]
        };
        let b = Mlp::new(&b_dims, Activation::Relu, Activation::Linear, rng)?;
        let goal_proj = Mlp::new(&[cfg.goal_dim, cfg.d], Activation::Linear, Activation::Linear, rng)?;
        let f_tgt = clone_mlp(&f)?;
        let b_tgt = clone_mlp(&b)?;
        let opt = OptState::adam(cfg.lr);
        Ok(FbParams {
            f,
            b,
            goal_proj,
            f_tgt,
            b_tgt,
            cfg: cfg.clone(),
            steps: 0,
            frozen: false,
            opt,
        })
    }

    pub fn config(&self) -> &FbConfig {
        &self.cfg
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    pub fn forward_rep(&self, s: &[f32], a: usize, z: &[f32]) -> Result<Vec<f32>> {
        if s.len() != self.cfg.state_dim || z.len() != self.cfg.d || a >= self.cfg.n_actions {
            return Err(Error::ShapeMismatch {
                op: "forward_rep",
                expected: format!(
                    "state {}, z {}, action < {}",
                    self.cfg.state_dim, self.cfg.d, self.cfg.n_actions
                ),
                got: format!("({}, a={}, {})", s.len(), a, z.len()),
            });
        }
        let f_in = self.cfg.state_dim + self.cfg.n_actions + self.cfg.d;
        let mut row = vec![0.0f32; f_in];
        let z_t: Vec<f32> = z.to_vec();
        fill_f_row(&mut row, s, a, &z_t, self.cfg.state_dim, self.cfg.n_actions);
        Ok(self.f.net.forward(&row, 1))
    }

    pub fn backward_rep(&self, g: &[f32]) -> Result<Vec<f32>> {
        if g.len() != self.cfg.goal_dim {
            return Err(Error::ShapeMismatch {
                op: "backward_rep",
                expected: format!("{}", self.cfg.goal_dim),
                got: format!("{}", g.len()),
            });
        }
        Ok(self.b.net.forward(g, 1))
    }

    /// The z used for a goal: the learned linear projection of psi.
    pub fn goal_z(&self, goal_emb: &[f32]) -> Result<Vec<f32>> {
        if goal_emb.len() != self.cfg.goal_dim {
            return Err(Error::ShapeMismatch {
                op: "goal_z",
                expected: format!("{}", self.cfg.goal_dim),
                got: format!("{}", goal_emb.len()),
            });
        }
        Ok(self.goal_proj.net.forward(goal_emb, 1))
    }

    /// argmax_a F(s, a, z)^T z; ties break to the lowest action index.
    pub fn policy_z(&self, s: &[f32], z: &[f32]) -> Result<usize> {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..self.cfg.n_actions {
            let f = self.forward_rep(s, a, z)?;
            let score: f64 = f.iter().zip(z).map(|(&x, &y)| x as f64 * y as f64).sum();
            if score > best {
                best = score;
                best_a = a;
            }
        }
        Ok(best_a)
    }

    /// F(s, a, proj(psi))^T B(psi).
    pub fn fb_reward(&self, s: &[f32], a: usize, goal_emb: &[f32]) -> Result<f32> {
        let z = self.goal_z(goal_emb)?;
        let f = self.forward_rep(s, a, &z)?;
        let b = self.backward_rep(goal_emb)?;
        let r: f64 = f.iter().zip(&b).map(|(&x, &y)| x as f64 * y as f64).sum();
        Ok(r as f32)
    }

    /// Goal-projected z with probability p_goal_z, otherwise a Gaussian
    /// d-vector rescaled to norm sqrt(d) exactly.
    pub fn sample_z(&self, goal_emb: &[f32], rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
        let take_goal = self.cfg.p_goal_z > 0.0 && rng.gen_range(0.0f32..1.0) < self.cfg.p_goal_z;
        if take_goal {
            return self.goal_z(goal_emb);
        }
        let mut z: Vec<f32> = (0..self.cfg.d).map(|_| StandardNormal.sample(rng)).collect();
        let norm: f64 = z.iter().map(|&v| v as f64 * v as f64).sum::<f64>();
        let norm = norm.sqrt();
        let want = (self.cfg.d as f64).sqrt();
        if norm < 1e-12 {
            z = vec![0.0; self.cfg.d];
            z[0] = want as f32;
        } else {
            let scale = (want / norm) as f32;
            for v in &mut z {
                *v *= scale;
            }
        }
        Ok(z)
    }

    /// `training` switches on the regularizer and alignment terms; pure
    /// loss evaluation leaves them at zero.
    fn dims(&self, variant: FbVariant, training: bool) -> FbDims {
        FbDims {
            d: self.cfg.d,
            state_dim: self.cfg.state_dim,
            goal_dim: self.cfg.goal_dim,
            n_actions: self.cfg.n_actions,
            gamma: self.cfg.gamma as f64,
            ortho_weight: if training { self.cfg.ortho_weight as f64 } else { 0.0 },
            align_weight: if training { self.cfg.align_weight as f64 } else { 0.0 },
            variant,
            pi_from_target: self.cfg.pi_from_target,
        }
    }

    fn nets(&self) -> FbNets<'_, f32> {
        FbNets {
            f: &self.f.net,
            b: &self.b.net,
            f_tgt: &self.f_tgt.net,
            b_tgt: &self.b_tgt.net,
            proj: &self.goal_proj.net,
        }
    }

    /// Bellman-residual loss only (no regularizer), under an explicit z and
    /// a variant override; evaluation, never a training step.
    pub fn fb_loss(
        &self,
        batch: &[FbTransition],
        goal_emb: &[f32],
        z: &[f32],
        variant: FbVariant,
    ) -> Result<f64> {
        let (m, _) = fb_total_loss(
            &self.nets(),
            &self.dims(variant, false),
            batch,
            goal_emb,
            Some(z),
            false,
        )?;
        Ok(m.fb_loss)
    }

    /// One optimizer step on L_FB + lambda L_norm, then target soft
    /// updates. Errors once frozen; freezes permanently at the budget.
    pub fn train_step(
        &mut self,
        batch: &[FbTransition],
        goal_emb: &[f32],
        rng: &mut ChaCha8Rng,
    ) -> Result<FbStepMetrics> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        let take_goal = self.cfg.p_goal_z > 0.0 && rng.gen_range(0.0f32..1.0) < self.cfg.p_goal_z;
        let z_gauss = if take_goal {
            None
        } else {
            let mut z: Vec<f32> = (0..self.cfg.d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = z.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            let want = (self.cfg.d as f64).sqrt();
            if norm < 1e-12 {
                z = vec![0.0; self.cfg.d];
                z[0] = want as f32;
            } else {
                let scale = (want / norm) as f32;
                for v in &mut z {
                    *v *= scale;
                }
            }
            Some(z)
        };
        let (metrics, grads) = fb_total_loss(
            &self.nets(),
            &self.dims(self.cfg.variant, true),
            batch,
            goal_emb,
            z_gauss.as_deref(),
            true,
        )?;
        let g = grads.expect("grads requested");
        let f_n = self.f.param_count();
        let b_n = self.b.param_count();
        let mut params: Vec<f32> = Vec::with_capacity(f_n + b_n + self.goal_proj.param_count());
        self.f.flatten_into(&mut params);
        self.b.flatten_into(&mut params);
        self.goal_proj.flatten_into(&mut params);
        let mut flat_g: Vec<f32> = Vec::with_capacity(params.len());
        g.f.flatten_into(&mut flat_g);
        g.b.flatten_into(&mut flat_g);
        match g.proj {
            Some(pg) => pg.flatten_into(&mut flat_g),
            None => flat_g.extend(std::iter::repeat(0.0).take(self.goal_proj.param_count())),
        }
        self.opt.step(&mut params, &flat_g)?;
        self.f.set_from_flat(&params[..f_n]);
        self.b.set_from_flat(&params[f_n..f_n + b_n]);
        self.goal_proj.set_from_flat(&params[f_n + b_n..]);
        self.f_tgt.soft_update_from(&self.f, self.cfg.tau)?;
        self.b_tgt.soft_update_from(&self.b, self.cfg.tau)?;
        self.steps += 1;
        if self.steps >= self.cfg.budget {
            self.frozen = true;
        }
        Ok(metrics)
    }

    /// Adjust the optimizer's learning rate mid-run (budgeted runs decay it).
    pub fn set_lr(&mut self, lr: f32) {
        self.opt.lr = lr;
    }

    /// FNV-1a over the bit patterns of every parameter (online, targets,
    /// projection); the freeze contract is checked against this.
    pub fn param_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |m: &Mlp| {
            let mut flat = Vec::new();
            m.flatten_into(&mut flat);
            for v in flat {
                for byte in v.to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        };
        eat(&self.f);
        eat(&self.b);
        eat(&self.goal_proj);
        eat(&self.f_tgt);
        eat(&self.b_tgt);
        h
    }
}

fn clone_mlp(m: &Mlp) -> Result<Mlp> {
    let mut blocks = Vec::new();
    mlp_to_blocks("clone", m, &mut blocks);
    mlp_from_blocks("clone", &blocks)
}

const META_BLOCK: &str = "fb.meta";

pub fn save_fb(path: &std::path::Path, params: &FbParams) -> Result<()> {
    let cfg = &params.cfg;
    let variant_code = match cfg.variant {
        FbVariant::GoalAnchored => 0.0,
        FbVariant::StateResampled => 1.0,
    };
    let mut blocks = Vec::new();
    blocks.push((
        META_BLOCK.to_string(),
        Tensor::from_vec(vec![
            cfg.d as f32,
            cfg.state_dim as f32,
            cfg.goal_dim as f32,
            cfg.n_actions as f32,
            cfg.hidden as f32,
            cfg.gamma,
            cfg.lr,
            cfg.tau,
            cfg.ortho_weight,
            cfg.align_weight,
            cfg.p_goal_z,
            cfg.budget as f32,
            variant_code,
            params.steps as f32,
            if params.frozen { 1.0 } else { 0.0 },
            cfg.b_hidden as f32,
            if cfg.pi_from_target { 1.0 } else { 0.0 },
        ]),
    ));
    mlp_to_blocks("fb.f", &params.f, &mut blocks);
    mlp_to_blocks("fb.b", &params.b, &mut blocks);
    mlp_to_blocks("fb.proj", &params.goal_proj, &mut blocks);
    mlp_to_blocks("fb.f_tgt", &params.f_tgt, &mut blocks);
    mlp_to_blocks("fb.b_tgt", &params.b_tgt, &mut blocks);
    save_blocks(path, &blocks)
}

pub fn load_fb(path: &std::path::Path) -> Result<FbParams> {
    let blocks = load_blocks(path)?;
    let meta = find_block(&blocks, META_BLOCK)?.data();
    if meta.len() != 17 {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: format!("fb meta has {} entries, want 17", meta.len()),
        });
    }
    let variant = match meta[12] as usize {
        0 => FbVariant::GoalAnchored,
        1 => FbVariant::StateResampled,
        other => {
            return Err(Error::Parse {
                what: path.display().to_string(),
                detail: format!("unknown fb variant code {other}"),
            })
        }
    };
    let cfg = FbConfig {
        d: meta[0] as usize,
        state_dim: meta[1] as usize,
        goal_dim: meta[2] as usize,
        n_actions: meta[3] as usize,
        hidden: meta[4] as usize,
        b_hidden: meta[15] as usize,
        gamma: meta[5],
        lr: meta[6],
        tau: meta[7],
        ortho_weight: meta[8],
        align_weight: meta[9],
        p_goal_z: meta[10],
        budget: meta[11] as usize,
        variant,
    };
    cfg.validate()?;
    let f = mlp_from_blocks("fb.f", &blocks)?;
    let b = mlp_from_blocks("fb.b", &blocks)?;
    let goal_proj = mlp_from_blocks("fb.proj", &blocks)?;
    let f_tgt = mlp_from_blocks("fb.f_tgt", &blocks)?;
    let b_tgt = mlp_from_blocks("fb.b_tgt", &blocks)?;
    if f.in_dim() != cfg.state_dim + cfg.n_actions + cfg.d
        || f.out_dim() != cfg.d
        || b.in_dim() != cfg.goal_dim
        || b.out_dim() != cfg.d
        || goal_proj.in_dim() != cfg.goal_dim
        || goal_proj.out_dim() != cfg.d
    {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: "fb blocks disagree with meta dims".into(),
        });
    }
    let opt = OptState::adam(cfg.lr);
    Ok(FbParams {
        f,
        b,
        goal_proj,
        f_tgt,
        b_tgt,
        cfg,
        steps: meta[13] as usize,
        frozen: meta[14] != 0.0,
        opt,
    })
}

/// One-hot adapter from tabular indices to the trained nets, so the exact
/// successor-measure machinery can grade them. State s maps to e_s for both
/// B's input and F's state slot; goal g maps through goal_proj(e_g) for z.
/// Panics (via expect) if the wrapped params disagree with the MDP dims;
/// `new` checks the state widths up front.
pub struct TabularFb<'a> {
    params: &'a FbParams,
    n_states: usize,
}

impl<'a> TabularFb<'a> {
    pub fn new(params: &'a FbParams, n_states: usize) -> Result<Self> {
        if params.cfg.state_dim != n_states || params.cfg.goal_dim != n_states {
            return Err(Error::Config(format!(
                "tabular adapter needs one-hot widths {n_states}, fb has state {} goal {}",
                params.cfg.state_dim, params.cfg.goal_dim
            )));
        }
        Ok(TabularFb { params, n_states })
    }

    fn onehot(&self, s: usize) -> Vec<f32> {
        let mut v = vec![0.0f32; self.n_states];
        v[s] = 1.0;
        v
    }
}

impl crate::oracle::FbScorer for TabularFb<'_> {
    fn dim(&self) -> usize {
        self.params.cfg.d
    }

    fn f_vec(&self, state: usize, action: usize, goal: usize) -> Vec<f64> {
        let z = self
            .params
            .goal_z(&self.onehot(goal))
            .expect("adapter widths checked at construction");
        let f = self
            .params
            .forward_rep(&self.onehot(state), action, &z)
            .expect("action index within the fb action count");
        f.into_iter().map(|v| v as f64).collect()
    }

    fn b_vec(&self, state: usize) -> Vec<f64> {
        self.params
            .backward_rep(&self.onehot(state))
            .expect("adapter widths checked at construction")
            .into_iter()
            .map(|v| v as f64)
            .collect()
    }

    fn policy(&self, state: usize, goal: usize) -> usize {
        let z = self
            .params
            .goal_z(&self.onehot(goal))
            .expect("adapter widths checked at construction");
        self.params
            .policy_z(&self.onehot(state), &z)
            .expect("adapter widths checked at construction")
    }
}

#[derive(Clone, Debug)]
pub struct TabularFbTrainConfig {
    pub d: usize,
    pub hidden: usize,
    pub b_hidden: usize,
    pub lr: f32,
    pub tau: f32,
    pub ortho_weight: f32,
    pub align_weight: f32,
    pub p_goal_z: f32,
    pub steps: usize,
    pub batch: usize,
    pub variant: FbVariant,
}

impl Default for TabularFbTrainConfig {
    fn default() -> Self {
        TabularFbTrainConfig {
            d: 16,
            hidden: 64,
            b_hidden: 64,
            lr: 1e-3,
            tau: 0.01,
            ortho_weight: 1.0,
            align_weight: 1.0,
            p_goal_z: 0.5,
            steps: 20_000,
            batch: 32,
            variant: FbVariant::StateResampled,
        }
    }
}

/// Train FB on the exhaustive transitions of a deterministic TabularMDP
/// with one-hot embeddings. Batches draw the next state uniformly and then
/// a uniform (s, a) from its preimage, which makes the resampling
/// distribution rho uniform, matching the fidelity oracle's base measure.
/// Returns the frozen params and the per-step total loss.
pub fn train_tabular_fb(
    mdp: &crate::oracle::TabularMDP,
    tc: &TabularFbTrainConfig,
    seed: u64,
) -> Result<(FbParams, Vec<f64>)> {
    let n = mdp.n_states;
    // next[s][a]; errors on stochastic rows since preimage sampling would
    // then distort the transition frequencies.
    let mut next = vec![vec![0usize; mdp.n_actions]; n];
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let row = mdp.p_row(s, a);
            let hit = row.iter().position(|&p| p >= 1.0 - 1e-9);
            match hit {
                Some(sp) => next[s][a] = sp,
                None => {
                    return Err(Error::Config(
                        "tabular fb training needs deterministic transitions".into(),
                    ))
                }
            }
        }
    }
    let mut pre: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for s in 0..n {
        for (a, &sp) in next[s].iter().enumerate() {
            pre[sp].push((s, a));
        }
    }
    let reachable: Vec<usize> = (0..n).filter(|&sp| !pre[sp].is_empty()).collect();
    if reachable.len() != n {
        return Err(Error::Config(
            "every state must be reachable in one step for uniform rho".into(),
        ));
    }

    let cfg = FbConfig {
        d: tc.d,
        state_dim: n,
        goal_dim: n,
        n_actions: mdp.n_actions,
        hidden: tc.hidden,
        b_hidden: tc.b_hidden,
        gamma: mdp.gamma as f32,
        lr: tc.lr,
        tau: tc.tau,
        ortho_weight: tc.ortho_weight,
        align_weight: tc.align_weight,
        p_goal_z: tc.p_goal_z,
        budget: tc.steps,
        variant: tc.variant,
    };
    let mut rng = seed_rng(seed, "tabular-fb");
    let mut params = FbParams::new(&cfg, &mut rng)?;
    let basis: Vec<Vec<f32>> = (0..n)
        .map(|s| {
            let mut v = vec![0.0f32; n];
            v[s] = 1.0;
            v
        })
        .collect();
    let mut losses = Vec::with_capacity(tc.steps);
    for step in 0..tc.steps {
        // Linear lr decay to lr/100 over the budget; late-run gradient noise
        // otherwise keeps the factorization jittering around its target.
        let frac = step as f32 / tc.steps as f32;
        params.set_lr(tc.lr * (1.0 - frac) + tc.lr / 100.0 * frac);
        // Batch elements are iid draws: next state uniform, then a uniform
        // preimage pair. Independence across elements matters because the
        // loss resamples state embeddings by batch rotation; any coupling
        // between an element and its rotation partner biases the quadratic
        // term.
        let batch: Vec<FbTransition> = (0..tc.batch)
            .map(|_| {
                let sp = reachable[rng.gen_range(0..reachable.len())];
                let (s, a) = pre[sp][rng.gen_range(0..pre[sp].len())];
                FbTransition {
                    s: basis[s].clone(),
                    a,
                    s_next: basis[sp].clone(),
                    done: false,
                }
            })
            .collect();
        let goal = rng.gen_range(0..n);
        let m = params.train_step(&batch, &basis[goal], &mut rng)?;
        losses.push(m.total);
    }
    Ok((params, losses))
}

#[derive(Clone, Debug)]
pub struct OrthoRunReport {
    /// ||mean(b b^T) - I||_F of each training batch; carries an O(d/sqrt(n))
    /// sampling-noise floor even at the population optimum.
    pub batch_norms: Vec<f64>,
    /// Same norm over `eval_batch` fresh draws after training, the number
    /// the collapse-resistance check reads.
    pub final_norm: f64,
}

fn batch_moment_norm(out: &[f32], n: usize, d: usize) -> (Vec<f64>, f64) {
    let inv_n = 1.0 / n as f64;
    let mut c = vec![0.0f64; d * d];
    for i in 0..n {
        let bi = &out[i * d..][..d];
        for p in 0..d {
            let bp = bi[p] as f64;
            for q in 0..d {
                c[p * d + q] += bp * bi[q] as f64 * inv_n;
            }
        }
    }
    let mut sq = 0.0f64;
    for p in 0..d {
        for q in 0..d {
            let target = if p == q { 1.0 } else { 0.0 };
            let diff = c[p * d + q] - target;
            sq += diff * diff;
        }
    }
    (c, sq.sqrt())
}

/// Minimize the orthonormality regularizer alone over random goal batches,
/// from a fresh B.
pub fn train_ortho_only(
    cfg: &FbConfig,
    steps: usize,
    batch: usize,
    eval_batch: usize,
    seed: u64,
) -> Result<OrthoRunReport> {
    cfg.validate()?;
    if batch == 0 || eval_batch == 0 || steps == 0 {
        return Err(Error::InvalidArg("ortho run needs positive steps and batches".into()));
    }
    let mut rng = seed_rng(seed, "ortho-only");
    let mut b = Mlp::new(&[cfg.goal_dim, cfg.hidden, cfg.d], Activation::Relu, Activation::Linear, &mut rng)?;
    let mut opt = OptState::adam(cfg.lr);
    let d = cfg.d;
    let mut batch_norms = Vec::with_capacity(steps);
    let mut params: Vec<f32> = Vec::new();
    for step in 0..steps {
        // Linear decay to lr/20 shrinks the stationary noise ball so the
        // final moment can settle tightly around I.
        let frac = step as f32 / steps as f32;
        opt.lr = cfg.lr * (1.0 - frac) + cfg.lr / 20.0 * frac;
        let mut rows = vec![0.0f32; batch * cfg.goal_dim];
        for v in rows.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let cache = b.net.forward_cached(&rows, batch);
        let out: &[f32] = cache.outs.last().unwrap();
        let (c, norm) = batch_moment_norm(out, batch, d);
        batch_norms.push(norm);
        let inv_n = 1.0 / batch as f64;
        let scale = 4.0 * inv_n * cfg.ortho_weight as f64;
        let mut up = vec![0.0f32; batch * d];
        for i in 0..batch {
            let bi = &out[i * d..][..d];
            let row = &mut up[i * d..][..d];
            for p in 0..d {
                let mut acc = 0.0f64;
                for q in 0..d {
                    let target = if p == q { 1.0 } else { 0.0 };
                    acc += (c[p * d + q] - target) * bi[q] as f64;
                }
                row[p] = (scale * acc) as f32;
            }
        }
        let (grads, _) = b.net.backward(&rows, &cache, &up);
        params.clear();
        b.flatten_into(&mut params);
        let mut flat_g: Vec<f32> = Vec::with_capacity(params.len());
        grads.flatten_into(&mut flat_g);
        opt.step(&mut params, &flat_g)?;
        b.set_from_flat(&params);
    }
    let mut rows = vec![0.0f32; eval_batch * cfg.goal_dim];
    for v in rows.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    let out = b.net.forward(&rows, eval_batch);
    let (_, final_norm) = batch_moment_norm(&out, eval_batch, d);
    Ok(OrthoRunReport {
        batch_norms,
        final_norm,
    })
}

/// Max relative error between the analytic gradients of the total training
/// objective and f64 central differences, at random parameters and a random
/// batch. `goal_branch` exercises the projected-goal z (and so the
/// goal_proj gradient path).
pub fn fb_gradient_check(cfg: &FbConfig, goal_branch: bool, seed: u64) -> Result<f64> {
    let mut rng = seed_rng(seed, "fb-gradcheck");
    let params = FbParams::new(cfg, &mut rng)?;
    let n = 4;
    let batch: Vec<FbTransition> = (0..n)
        .map(|i| FbTransition {
            s: (0..cfg.state_dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
            a: i % cfg.n_actions,
            s_next: (0..cfg.state_dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
            done: i == n - 1,
        })
        .collect();
    let goal_emb: Vec<f32> = (0..cfg.goal_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z_gauss: Option<Vec<f32>> = if goal_branch {
        None
    } else {
        Some((0..cfg.d).map(|_| StandardNormal.sample(&mut rng)).collect())
    };

    let dims = FbDims {
        d: cfg.d,
        state_dim: cfg.state_dim,
        goal_dim: cfg.goal_dim,
        n_actions: cfg.n_actions,
        gamma: cfg.gamma as f64,
        ortho_weight: cfg.ortho_weight as f64,
        align_weight: cfg.align_weight as f64,
        variant: cfg.variant,
    };
    let (_, grads) = fb_total_loss(
        &params.nets(),
        &dims,
        &batch,
        &goal_emb,
        z_gauss.as_deref(),
        true,
    )?;
    let g = grads.expect("grads requested");
    let f_n = params.f.param_count();
    let b_n = params.b.param_count();
    let mut analytic: Vec<f32> = Vec::new();
    g.f.flatten_into(&mut analytic);
    g.b.flatten_into(&mut analytic);
    match g.proj {
        Some(pg) => pg.flatten_into(&mut analytic),
        None => analytic.extend(std::iter::repeat(0.0).take(params.goal_proj.param_count())),
    }
    let mut theta: Vec<f32> = Vec::new();
    params.f.flatten_into(&mut theta);
    params.b.flatten_into(&mut theta);
    params.goal_proj.flatten_into(&mut theta);
    let theta64: Vec<f64> = theta.iter().map(|&v| v as f64).collect();

    let f64_nets = (
        params.f.to_f64(),
        params.b.to_f64(),
        params.f_tgt.to_f64(),
        params.b_tgt.to_f64(),
        params.goal_proj.to_f64(),
    );
    grad_check(
        |t: &[f64]| {
            let mut f = f64_nets.0.clone();
            f.set_from_flat(&t[..f_n]);
            let mut b = f64_nets.1.clone();
            b.set_from_flat(&t[f_n..f_n + b_n]);
            let mut proj = f64_nets.4.clone();
            proj.set_from_flat(&t[f_n + b_n..]);
            let nets = FbNets {
                f: &f,
                b: &b,
                f_tgt: &f64_nets.2,
                b_tgt: &f64_nets.3,
                proj: &proj,
            };
            fb_total_loss(&nets, &dims, &batch, &goal_emb, z_gauss.as_deref(), false)
                .unwrap()
                .0
                .total
        },
        &theta64,
        &analytic,
        1e-5,
    )
}
