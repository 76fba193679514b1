//! Goal-frame selection: a small image tower and a learned token embedding
//! per task, scored by cosine similarity.
//!
//! A frame earns score cos(tower(frame), token[task]) in [-1, 1]. Training
//! regresses the rescaled score (s + 1) / 2 onto binary labels: 1 for frames
//! where the task is satisfied, 0 otherwise, over batches balanced between
//! the two classes. Goal selection over a video takes the argmax score with
//! ties broken toward the earliest frame.
//!
//! The cosine itself is always accumulated in f64 regardless of parameter
//! precision; everything else runs through the precision-generic kernel so
//! gradient checks evaluate the same code in f64.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gridworld::ExpertDataset;
use crate::numcore::kernel::{rf, Net, NetGrads, Real};
use crate::numcore::{
    find_block, load_blocks, mlp_from_blocks, mlp_to_blocks, save_blocks, seed_rng, Activation,
    Mlp, OptState, Tensor,
};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ScorerConfig {
    pub embed_dim: usize,
    pub hidden: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            embed_dim: 64,
            hidden: 64,
        }
    }
}

pub struct FrameScorer {
    pub(crate) tower: Mlp,
    /// [n_tokens, embed_dim], learned jointly with the tower.
    pub(crate) tokens: Tensor,
    frame_shape: Vec<usize>,
    embed_dim: usize,
}

/// Leftmost maximum; NaN never wins.
pub fn argmax_tie_low(xs: &[f32]) -> Result<usize> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("argmax_tie_low"));
    }
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in xs.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    Ok(best)
}

impl FrameScorer {
    pub fn new(
        frame_shape: &[usize],
        n_tokens: usize,
        cfg: &ScorerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if frame_shape.is_empty() || n_tokens == 0 {
            return Err(Error::Config("scorer needs a frame shape and at least one token".into()));
        }
        if cfg.embed_dim == 0 || cfg.hidden == 0 {
            return Err(Error::Config("embed_dim and hidden must be positive".into()));
        }
        let frame_elems: usize = frame_shape.iter().product();
        let tower = Mlp::new(
            &[frame_elems, cfg.hidden, cfg.embed_dim],
            Activation::Relu,
            Activation::Linear,
            rng,
        )?;
        let scale = 1.0 / (cfg.embed_dim as f32).sqrt();
        let data: Vec<f32> = (0..n_tokens * cfg.embed_dim)
            .map(|_| {
                let v: f32 = StandardNormal.sample(rng);
                v * scale
            })
            .collect();
        Ok(FrameScorer {
            tower,
            tokens: Tensor::new(vec![n_tokens, cfg.embed_dim], data)?,
            frame_shape: frame_shape.to_vec(),
            embed_dim: cfg.embed_dim,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn frame_shape(&self) -> &[usize] {
        &self.frame_shape
    }

    fn check_frame(&self, frame: &Tensor) -> Result<()> {
        if frame.shape() != self.frame_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "FrameScorer frame",
                expected: format!("{:?}", self.frame_shape),
                got: format!("{:?}", frame.shape()),
            });
        }
        Ok(())
    }

    fn check_token(&self, token: usize) -> Result<()> {
        if token >= self.n_tokens() {
            return Err(Error::InvalidArg(format!(
                "token {token} out of range, have {}",
                self.n_tokens()
            )));
        }
        Ok(())
    }

    pub fn score(&self, frame: &Tensor, token: usize) -> Result<f32> {
        self.check_frame(frame)?;
        self.check_token(token)?;
        let flat = Tensor::from_vec(frame.data().to_vec());
        let emb = self.tower.forward(&flat)?;
        let tok = &self.tokens.data()[token * self.embed_dim..][..self.embed_dim];
        crate::numcore::cosine(emb.data(), tok)
    }

    pub fn score_frames(&self, frames: &[Tensor], token: usize) -> Result<Vec<f32>> {
        frames.iter().map(|f| self.score(f, token)).collect()
    }

    /// Highest-scoring frame index and its score; ties go to the earliest
    /// frame.
    pub fn select_goal_frame(&self, frames: &[Tensor], token: usize) -> Result<(usize, f32)> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("select_goal_frame frames"));
        }
        let scores = self.score_frames(frames, token)?;
        let idx = argmax_tie_low(&scores)?;
        Ok((idx, scores[idx]))
    }
}

/// One labelled example: a frame, its task token, and whether the task is
/// satisfied in the frame.
pub struct ScorerItem<'a> {
    pub frame: &'a Tensor,
    pub token: usize,
    pub label: f64,
}

/// Squared error of (cos + 1) / 2 against the labels, averaged over the
/// batch, with gradients for the tower and the token table.
pub(crate) fn scorer_batch<T: Real>(
    tower: &Net<T>,
    tokens: &[T],
    embed_dim: usize,
    items: &[ScorerItem<'_>],
    need_grads: bool,
) -> Result<(f64, Option<(NetGrads<T>, Vec<T>)>)> {
    if items.is_empty() {
        return Err(Error::EmptyInput("scorer_batch items"));
    }
    let in_dim = tower.in_dim();
    let rows = items.len();
    let mut x = vec![T::zero(); rows * in_dim];
    for (r, item) in items.iter().enumerate() {
        if item.frame.len() != in_dim {
            return Err(Error::ShapeMismatch {
                op: "scorer_batch",
                expected: format!("{in_dim} frame elements"),
                got: format!("{}", item.frame.len()),
            });
        }
        for (dst, &src) in x[r * in_dim..][..in_dim].iter_mut().zip(item.frame.data()) {
            *dst = rf(src);
        }
    }
    let cache = tower.forward_cached(&x, rows);
    let embs: &[T] = cache.outs.last().unwrap();

    let mut loss = 0.0f64;
    let inv_n = 1.0 / rows as f64;
    let mut up = vec![T::zero(); rows * embed_dim];
    let mut token_grads = vec![T::zero(); tokens.len()];
    for (r, item) in items.iter().enumerate() {
        let u = &embs[r * embed_dim..][..embed_dim];
        let v = &tokens[item.token * embed_dim..][..embed_dim];
        let (uv, uu, vv) = crate::numcore::kernel::cosine_moments(u, v);
        let (nu, nv) = (uu.sqrt(), vv.sqrt());
        let degenerate = nu < 1e-12 || nv < 1e-12;
        let s = if degenerate { 0.0 } else { (uv / (nu * nv)).clamp(-1.0, 1.0) };
        let p = 0.5 * (s + 1.0);
        let d = p - item.label;
        loss += d * d * inv_n;
        if need_grads && !degenerate {
            // d loss / d s = (p - y) / n; ds/du = v/(|u||v|) - s u/|u|^2.
            let g = d * inv_n;
            let a = g / (nu * nv);
            let bu = g * s / uu;
            let bv = g * s / vv;
            let ur = &mut up[r * embed_dim..][..embed_dim];
            let tg = &mut token_grads[item.token * embed_dim..][..embed_dim];
            for k in 0..embed_dim {
                let uk = u[k].to_f64().unwrap_or(f64::NAN);
                let vk = v[k].to_f64().unwrap_or(f64::NAN);
                ur[k] += T::from(a * vk - bu * uk).unwrap();
                tg[k] += T::from(a * uk - bv * vk).unwrap();
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("scorer loss".into()));
    }
    if !need_grads {
        return Ok((loss, None));
    }
    let (tower_grads, _) = tower.backward(&x, &cache, &up);
    Ok((loss, Some((tower_grads, token_grads))))
}

#[derive(Clone, Debug)]
pub struct TrainScorerConfig {
    pub steps: usize,
    /// Total batch size; half positives, half negatives.
    pub batch: usize,
    pub lr: f32,
    pub log_every: usize,
}

impl Default for TrainScorerConfig {
    fn default() -> Self {
        TrainScorerConfig {
            steps: 1500,
            batch: 32,
            lr: 2e-3,
            log_every: 100,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainPoint {
    pub step: usize,
    pub loss: f64,
}

/// (episode, frame) pools split by label, used for balanced sampling.
fn label_pools(dataset: &ExpertDataset) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (e, ep) in dataset.episodes.iter().enumerate() {
        for (f, &ok) in ep.success.iter().enumerate() {
            if ok {
                pos.push((e, f));
            } else {
                neg.push((e, f));
            }
        }
    }
    (pos, neg)
}

pub fn train_scorer(
    cfg: &ScorerConfig,
    train_cfg: &TrainScorerConfig,
    n_tokens: usize,
    dataset: &ExpertDataset,
    seed: u64,
) -> Result<(FrameScorer, Vec<TrainPoint>)> {
    if train_cfg.steps == 0 || train_cfg.batch < 2 {
        return Err(Error::Config("scorer training needs steps >= 1 and batch >= 2".into()));
    }
    let (pos, neg) = label_pools(dataset);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyInput("scorer training needs both labels present"));
    }
    let mut rng = seed_rng(seed, "train-scorer");
    let mut model = FrameScorer::new(&dataset.frame_shape, n_tokens, cfg, &mut rng)?;
    let mut opt = OptState::adam(train_cfg.lr);
    let split = model.tower.param_count();
    let mut params: Vec<f32> = Vec::with_capacity(split + model.tokens.len());
    let mut grads: Vec<f32> = Vec::with_capacity(params.capacity());
    let mut history = Vec::new();
    let half = train_cfg.batch / 2;
    for step in 1..=train_cfg.steps {
        let mut items = Vec::with_capacity(2 * half);
        for i in 0..2 * half {
            let (pool, label) = if i < half { (&pos, 1.0) } else { (&neg, 0.0) };
            let (e, f) = pool[rng.gen_range(0..pool.len())];
            let ep = &dataset.episodes[e];
            if ep.task >= n_tokens {
                return Err(Error::InvalidArg(format!(
                    "episode task {} exceeds token count {n_tokens}",
                    ep.task
                )));
            }
            items.push(ScorerItem {
                frame: &ep.frames[f],
                token: ep.task,
                label,
            });
        }
        let (loss, g) = scorer_batch(
            &model.tower.net,
            model.tokens.data(),
            model.embed_dim,
            &items,
            true,
        )?;
        let (tower_g, token_g) = g.expect("grads requested");
        params.clear();
        model.tower.flatten_into(&mut params);
        params.extend_from_slice(model.tokens.data());
        grads.clear();
        tower_g.flatten_into(&mut grads);
        grads.extend_from_slice(&token_g);
        opt.step(&mut params, &grads)?;
        model.tower.set_from_flat(&params[..split]);
        model.tokens.data_mut().copy_from_slice(&params[split..]);
        if step % train_cfg.log_every == 0 || step == train_cfg.steps {
            history.push(TrainPoint { step, loss });
        }
    }
    Ok((model, history))
}

/// Fraction of episodes whose selected goal frame is a true success frame,
/// among episodes that contain at least one.
pub fn selection_success_rate(model: &FrameScorer, dataset: &ExpertDataset) -> Result<f64> {
    let mut n = 0usize;
    let mut hit = 0usize;
    for ep in &dataset.episodes {
        if !ep.success.iter().any(|&s| s) {
            continue;
        }
        let (idx, _) = model.select_goal_frame(&ep.frames, ep.task)?;
        n += 1;
        if ep.success[idx] {
            hit += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput("selection_success_rate: no successful episodes"));
    }
    Ok(hit as f64 / n as f64)
}

const META_BLOCK: &str = "scorer.meta";
const TOKEN_BLOCK: &str = "scorer.tokens";

pub fn save_scorer(path: &std::path::Path, model: &FrameScorer) -> Result<()> {
    let mut blocks = Vec::new();
    let mut meta = vec![model.embed_dim as f32, model.frame_shape.len() as f32];
    meta.extend(model.frame_shape.iter().map(|&d| d as f32));
    blocks.push((META_BLOCK.to_string(), Tensor::from_vec(meta)));
    blocks.push((TOKEN_BLOCK.to_string(), model.tokens.clone()));
    mlp_to_blocks("scorer.tower", &model.tower, &mut blocks);
    save_blocks(path, &blocks)
}

pub fn load_scorer(path: &std::path::Path) -> Result<FrameScorer> {
    let blocks = load_blocks(path)?;
    let meta = find_block(&blocks, META_BLOCK)?.data();
    if meta.len() < 2 {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: "scorer meta too short".into(),
        });
    }
    let embed_dim = meta[0] as usize;
    let rank = meta[1] as usize;
    if meta.len() != 2 + rank {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: format!("scorer meta has {} entries, want {}", meta.len(), 2 + rank),
        });
    }
    let frame_shape: Vec<usize> = meta[2..].iter().map(|&d| d as usize).collect();
    let tokens = find_block(&blocks, TOKEN_BLOCK)?.clone();
    let tower = mlp_from_blocks("scorer.tower", &blocks)?;
    if tokens.shape().len() != 2 || tokens.shape()[1] != embed_dim {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: "token table shape disagrees with meta".into(),
        });
    }
    let frame_elems: usize = frame_shape.iter().product();
    if tower.in_dim() != frame_elems || tower.out_dim() != embed_dim {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: "tower dims disagree with meta".into(),
        });
    }
    Ok(FrameScorer {
        tower,
        tokens,
        frame_shape,
        embed_dim,
    })
}
