//! Goal-video generation: denoising diffusion over flattened latent videos.
//!
//! The schedule stores, per step t, the signal coefficient a_t and noise
//! level sigma_t with a_t^2 + sigma_t^2 = 1, a_0 = 1 and a_t strictly
//! decreasing; both derive from a linear beta ramp. The forward process is
//! x_t = a_t x_0 + sigma_t eps.
//!
//! The denoiser is one MLP fed [x_t | time embedding | task token | cond],
//! where cond is a learned linear projection of the first latent frame of
//! the video being generated (the environment's current observation at
//! sampling time). It predicts eps; training minimizes the per-item summed
//! squared error ||eps_hat - eps||^2 averaged over the batch, so a zero
//! predictor scores about the latent dimension.
//!
//! Sampling is the ancestral chain
//!   x_{t-1} = (x_t - (beta_t / sigma_t) eps_hat) / sqrt(alpha_t)
//!             + sqrt(beta_t sigma_{t-1}^2 / sigma_t^2) nu,
//! with no noise at the final step. Because sigma_1^2 = beta_1, a perfect
//! predictor for a point mass at c collapses the final step to exactly c,
//! whatever x_1 was; the tests rely on that identity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numcore::kernel::{rf, Net, NetGrads, Real};
use crate::numcore::{
    find_block, load_blocks, mlp_from_blocks, mlp_to_blocks, save_blocks, Activation, Mlp,
    OptState, Tensor,
};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct NoiseSchedule {
    /// Signal coefficients, index 0..=t_steps, a[0] = 1.
    pub a: Vec<f32>,
    /// Noise levels, a[t]^2 + sigma[t]^2 = 1.
    pub sigma: Vec<f32>,
    /// Per-step variances, index 1..=t_steps (index 0 unused).
    pub betas: Vec<f32>,
}

impl NoiseSchedule {
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let mut betas = vec![0.0f32; t_steps + 1];
        for t in 1..=t_steps {
            let frac = if t_steps == 1 {
                0.0
            } else {
                (t - 1) as f64 / (t_steps - 1) as f64
            };
            betas[t] = (beta_start + (beta_end - beta_start) * frac) as f32;
        }
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f32>) -> Result<Self> {
        let t_steps = betas.len().checked_sub(1).filter(|&n| n > 0).ok_or_else(|| {
            Error::Config("beta table needs entries for steps 1..=T".into())
        })?;
        let mut a = vec![0.0f32; t_steps + 1];
        let mut sigma = vec![0.0f32; t_steps + 1];
        a[0] = 1.0;
        sigma[0] = 0.0;
        let mut signal = 1.0f64;
        for t in 1..=t_steps {
            let beta = betas[t] as f64;
            if !(0.0..1.0).contains(&beta) || beta == 0.0 {
                return Err(Error::Config(format!("beta[{t}] = {beta} out of (0, 1)")));
            }
            signal *= 1.0 - beta;
            a[t] = signal.sqrt() as f32;
            sigma[t] = (1.0 - signal).sqrt() as f32;
        }
        Ok(NoiseSchedule { a, sigma, betas })
    }

    pub fn t_steps(&self) -> usize {
        self.a.len() - 1
    }
}

/// x_t = a_t x0 + sigma_t eps.
pub fn forward_diffuse(sch: &NoiseSchedule, x0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
    if t > sch.t_steps() {
        return Err(Error::InvalidArg(format!("t {t} beyond schedule {}", sch.t_steps())));
    }
    if x0.shape() != eps.shape() {
        return Err(Error::ShapeMismatch {
            op: "forward_diffuse",
            expected: format!("{:?}", x0.shape()),
            got: format!("{:?}", eps.shape()),
        });
    }
    let (a, s) = (sch.a[t], sch.sigma[t]);
    let data: Vec<f32> = x0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| a * x + s * e)
        .collect();
    Tensor::new(x0.shape().to_vec(), data)
}

/// One reverse step; `noise` must be None exactly at t = 1.
pub fn ancestral_step(
    sch: &NoiseSchedule,
    t: usize,
    x_t: &[f32],
    eps_hat: &[f32],
    noise: Option<&[f32]>,
) -> Result<Vec<f32>> {
    if t == 0 || t > sch.t_steps() {
        return Err(Error::InvalidArg(format!("ancestral step at t = {t}")));
    }
    if (t == 1) != noise.is_none() {
        return Err(Error::InvalidArg("noise is required for t > 1 and forbidden at t = 1".into()));
    }
    if x_t.len() != eps_hat.len() {
        return Err(Error::ShapeMismatch {
            op: "ancestral_step",
            expected: format!("{}", x_t.len()),
            got: format!("{}", eps_hat.len()),
        });
    }
    let beta = sch.betas[t] as f64;
    let sigma_t = sch.sigma[t] as f64;
    let inv_sqrt_alpha = 1.0 / (1.0 - beta).sqrt();
    let coef = beta / sigma_t;
    let post_sd = match noise {
        Some(_) => {
            let sp = sch.sigma[t - 1] as f64;
            (beta * sp * sp / (sigma_t * sigma_t)).sqrt()
        }
        None => 0.0,
    };
    let mut out = Vec::with_capacity(x_t.len());
    for i in 0..x_t.len() {
        let mean = (x_t[i] as f64 - coef * eps_hat[i] as f64) * inv_sqrt_alpha;
        let nv = noise.map_or(0.0, |n| n[i] as f64);
        out.push((mean + post_sd * nv) as f32);
    }
    Ok(out)
}

/// Fixed sinusoidal time embedding table, rows 0..=t_steps.
fn time_table(t_steps: usize, dim: usize) -> Vec<f32> {
    let mut table = vec![0.0f32; (t_steps + 1) * dim];
    for t in 0..=t_steps {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let freq = (10_000.0f64).powf(-2.0 * pair / dim as f64);
            let angle = t as f64 * freq;
            table[t * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() } as f32;
        }
    }
    table
}

#[derive(Clone, Debug)]
pub struct DiffusionConfig {
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub hidden: usize,
    pub t_embed: usize,
    pub token_embed: usize,
    pub cond_embed: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            t_steps: 100,
            beta_start: 1e-3,
            beta_end: 0.2,
            hidden: 192,
            t_embed: 32,
            token_embed: 16,
            cond_embed: 32,
        }
    }
}

pub struct Denoiser {
    pub(crate) net: Mlp,
    /// Learned linear map from the first latent frame to the cond slot.
    pub(crate) img_proj: Mlp,
    pub(crate) tokens: Tensor,
    /// Fixed sinusoidal table, never trained.
    t_table: Vec<f32>,
    pub schedule: NoiseSchedule,
    d: usize,
    cond_in: usize,
    t_embed: usize,
    token_embed: usize,
    cond_embed: usize,
}

impl Denoiser {
    pub fn new(
        d: usize,
        cond_in: usize,
        n_tokens: usize,
        cfg: &DiffusionConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if d == 0 || cond_in == 0 || n_tokens == 0 {
            return Err(Error::Config("denoiser needs d, cond_in, n_tokens > 0".into()));
        }
        if cfg.hidden == 0 || cfg.t_embed == 0 || cfg.token_embed == 0 || cfg.cond_embed == 0 {
            return Err(Error::Config("denoiser embed dims must be positive".into()));
        }
        let schedule = NoiseSchedule::linear(cfg.t_steps, cfg.beta_start, cfg.beta_end)?;
        let in_dim = d + cfg.t_embed + cfg.token_embed + cfg.cond_embed;
        let net = Mlp::new(
            &[in_dim, cfg.hidden, d],
            Activation::Relu,
            Activation::Linear,
            rng,
        )?;
        let img_proj = Mlp::new(&[cond_in, cfg.cond_embed], Activation::Linear, Activation::Linear, rng)?;
        let scale = 1.0 / (cfg.token_embed as f32).sqrt();
        let tok: Vec<f32> = (0..n_tokens * cfg.token_embed)
            .map(|_| {
                let v: f32 = StandardNormal.sample(rng);
                v * scale
            })
            .collect();
        Ok(Denoiser {
            net,
            img_proj,
            tokens: Tensor::new(vec![n_tokens, cfg.token_embed], tok)?,
            t_table: time_table(cfg.t_steps, cfg.t_embed),
            schedule,
            d,
            cond_in,
            t_embed: cfg.t_embed,
            token_embed: cfg.token_embed,
            cond_embed: cfg.cond_embed,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.d
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_in
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.shape()[0]
    }

    fn check_inputs(&self, x_t: &Tensor, t: usize, token: usize, cond: &Tensor) -> Result<()> {
        if x_t.len() != self.d {
            return Err(Error::ShapeMismatch {
                op: "denoiser x_t",
                expected: format!("{}", self.d),
                got: format!("{}", x_t.len()),
            });
        }
        if cond.len() != self.cond_in {
            return Err(Error::ShapeMismatch {
                op: "denoiser cond",
                expected: format!("{}", self.cond_in),
                got: format!("{}", cond.len()),
            });
        }
        if t == 0 || t > self.schedule.t_steps() {
            return Err(Error::InvalidArg(format!("denoiser t {t} out of range")));
        }
        if token >= self.n_tokens() {
            return Err(Error::InvalidArg(format!("token {token} out of range")));
        }
        Ok(())
    }

    pub fn predict(&self, x_t: &Tensor, t: usize, token: usize, cond: &Tensor) -> Result<Tensor> {
        self.check_inputs(x_t, t, token, cond)?;
        let cond_emb = self.img_proj.forward(&Tensor::from_vec(cond.data().to_vec()))?;
        let mut input = Vec::with_capacity(self.net.in_dim());
        input.extend_from_slice(x_t.data());
        input.extend_from_slice(&self.t_table[t * self.t_embed..][..self.t_embed]);
        input.extend_from_slice(&self.tokens.data()[token * self.token_embed..][..self.token_embed]);
        input.extend_from_slice(cond_emb.data());
        self.net.forward(&Tensor::from_vec(input))
    }

    /// Full ancestral chain from pure noise; deterministic given the rng.
    pub fn sample(&self, token: usize, cond: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let t_steps = self.schedule.t_steps();
        let mut x: Vec<f32> = (0..self.d).map(|_| StandardNormal.sample(rng)).collect();
        for t in (1..=t_steps).rev() {
            let eps_hat = self.predict(&Tensor::from_vec(x.clone()), t, token, cond)?;
            let noise: Option<Vec<f32>> = if t > 1 {
                Some((0..self.d).map(|_| StandardNormal.sample(rng)).collect())
            } else {
                None
            };
            x = ancestral_step(&self.schedule, t, &x, eps_hat.data(), noise.as_deref())?;
        }
        let out = Tensor::from_vec(x);
        out.assert_finite("diffusion sample")?;
        Ok(out)
    }
}

/// One training example with its noise draw fixed by the caller, so the loss
/// is a deterministic function of the parameters.
pub struct DiffusionItem<'a> {
    pub x0: &'a Tensor,
    pub cond: &'a Tensor,
    pub token: usize,
    pub t: usize,
    pub eps: &'a Tensor,
}

pub(crate) struct DenoiserDims {
    pub d: usize,
    pub cond_in: usize,
    pub t_embed: usize,
    pub token_embed: usize,
    pub cond_embed: usize,
}

/// Mean over items of ||eps_hat - eps||^2 (summed over latent dims), with
/// gradients for the trunk, the token table, and the cond projection.
pub(crate) fn diffusion_batch<T: Real>(
    net: &Net<T>,
    tokens: &[T],
    img_proj: &Net<T>,
    t_table: &[f32],
    sch: &NoiseSchedule,
    dims: &DenoiserDims,
    items: &[DiffusionItem<'_>],
    need_grads: bool,
) -> Result<(f64, Option<(NetGrads<T>, Vec<T>, NetGrads<T>)>)> {
    if items.is_empty() {
        return Err(Error::EmptyInput("diffusion_batch items"));
    }
    let n = items.len();
    let d = dims.d;
    let in_dim = net.in_dim();
    // Cond projections for the whole batch first.
    let mut cond_rows = vec![T::zero(); n * dims.cond_in];
    for (r, item) in items.iter().enumerate() {
        if item.x0.len() != d || item.eps.len() != d || item.cond.len() != dims.cond_in {
            return Err(Error::ShapeMismatch {
                op: "diffusion_batch",
                expected: format!("x0/eps of {d}, cond of {}", dims.cond_in),
                got: format!(
                    "{}/{}, {}",
                    item.x0.len(),
                    item.eps.len(),
                    item.cond.len()
                ),
            });
        }
        if item.t == 0 || item.t > sch.t_steps() {
            return Err(Error::InvalidArg(format!("item t {} out of range", item.t)));
        }
        for (dst, &src) in cond_rows[r * dims.cond_in..][..dims.cond_in]
            .iter_mut()
            .zip(item.cond.data())
        {
            *dst = rf(src);
        }
    }
    let proj_cache = img_proj.forward_cached(&cond_rows, n);
    let proj_out: &[T] = proj_cache.outs.last().unwrap();

    let mut x = vec![T::zero(); n * in_dim];
    for (r, item) in items.iter().enumerate() {
        let row = &mut x[r * in_dim..][..in_dim];
        let (a, s) = (sch.a[item.t], sch.sigma[item.t]);
        for i in 0..d {
            row[i] = rf(a * item.x0.data()[i] + s * item.eps.data()[i]);
        }
        let te = &t_table[item.t * dims.t_embed..][..dims.t_embed];
        for (i, &v) in te.iter().enumerate() {
            row[d + i] = rf(v);
        }
        let tok = &tokens[item.token * dims.token_embed..][..dims.token_embed];
        row[d + dims.t_embed..][..dims.token_embed].copy_from_slice(tok);
        row[d + dims.t_embed + dims.token_embed..][..dims.cond_embed]
            .copy_from_slice(&proj_out[r * dims.cond_embed..][..dims.cond_embed]);
    }
    let cache = net.forward_cached(&x, n);
    let eps_hat: &[T] = cache.outs.last().unwrap();

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0f64;
    for (r, item) in items.iter().enumerate() {
        for i in 0..d {
            let diff = eps_hat[r * d + i].to_f64().unwrap_or(f64::NAN) - item.eps.data()[i] as f64;
            loss += diff * diff * inv_n;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("diffusion loss".into()));
    }
    if !need_grads {
        return Ok((loss, None));
    }

    let mut up = vec![T::zero(); n * d];
    for (r, item) in items.iter().enumerate() {
        for i in 0..d {
            let diff = eps_hat[r * d + i] - rf(item.eps.data()[i]);
            up[r * d + i] = rf::<T>(2.0) * diff * T::from(inv_n).unwrap();
        }
    }
    let (net_grads, dx) = net.backward(&x, &cache, &up);
    let mut token_grads = vec![T::zero(); tokens.len()];
    let mut proj_up = vec![T::zero(); n * dims.cond_embed];
    for (r, item) in items.iter().enumerate() {
        let row = &dx[r * in_dim..][..in_dim];
        let tg = &mut token_grads[item.token * dims.token_embed..][..dims.token_embed];
        for i in 0..dims.token_embed {
            tg[i] += row[d + dims.t_embed + i];
        }
        proj_up[r * dims.cond_embed..][..dims.cond_embed]
            .copy_from_slice(&row[d + dims.t_embed + dims.token_embed..][..dims.cond_embed]);
    }
    let (proj_grads, _) = img_proj.backward(&cond_rows, &proj_cache, &proj_up);
    Ok((loss, Some((net_grads, token_grads, proj_grads))))
}

#[derive(Clone, Debug)]
pub struct TrainDiffusionConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub log_every: usize,
}

impl Default for TrainDiffusionConfig {
    fn default() -> Self {
        TrainDiffusionConfig {
            steps: 3000,
            batch: 16,
            lr: 1e-3,
            log_every: 200,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrainPoint {
    pub step: usize,
    pub loss: f64,
}

/// One latent training video: the flattened latent sequence, its first
/// latent frame as conditioning, and the task token.
pub struct LatentVideo {
    pub x0: Tensor,
    pub cond: Tensor,
    pub token: usize,
}

pub fn train_diffusion(
    cfg: &DiffusionConfig,
    train_cfg: &TrainDiffusionConfig,
    n_tokens: usize,
    data: &[LatentVideo],
    rng: &mut ChaCha8Rng,
) -> Result<(Denoiser, Vec<TrainPoint>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("train_diffusion data"));
    }
    if train_cfg.steps == 0 || train_cfg.batch == 0 {
        return Err(Error::Config("diffusion training needs steps, batch > 0".into()));
    }
    let d = data[0].x0.len();
    let cond_in = data[0].cond.len();
    for (i, v) in data.iter().enumerate() {
        if v.x0.len() != d || v.cond.len() != cond_in || v.token >= n_tokens {
            return Err(Error::InvalidArg(format!("latent video {i} disagrees with the first")));
        }
    }
    let mut model = Denoiser::new(d, cond_in, n_tokens, cfg, rng)?;
    let dims = DenoiserDims {
        d,
        cond_in,
        t_embed: cfg.t_embed,
        token_embed: cfg.token_embed,
        cond_embed: cfg.cond_embed,
    };
    let mut opt = OptState::adam(train_cfg.lr);
    let net_n = model.net.param_count();
    let tok_n = model.tokens.len();
    let mut params: Vec<f32> = Vec::new();
    let mut grads: Vec<f32> = Vec::new();
    let mut history = Vec::new();
    for step in 1..=train_cfg.steps {
        let mut noises = Vec::with_capacity(train_cfg.batch);
        let mut picks = Vec::with_capacity(train_cfg.batch);
        for _ in 0..train_cfg.batch {
            let v = rng.gen_range(0..data.len());
            let t = rng.gen_range(1..=cfg.t_steps);
            let eps: Vec<f32> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            picks.push((v, t));
            noises.push(Tensor::from_vec(eps));
        }
        let items: Vec<DiffusionItem> = picks
            .iter()
            .zip(&noises)
            .map(|(&(v, t), eps)| DiffusionItem {
                x0: &data[v].x0,
                cond: &data[v].cond,
                token: data[v].token,
                t,
                eps,
            })
            .collect();
        let (loss, g) = diffusion_batch(
            &model.net.net,
            model.tokens.data(),
            &model.img_proj.net,
            &model.t_table,
            &model.schedule,
            &dims,
            &items,
            true,
        )?;
        let (net_g, tok_g, proj_g) = g.expect("grads requested");
        params.clear();
        model.net.flatten_into(&mut params);
        params.extend_from_slice(model.tokens.data());
        model.img_proj.flatten_into(&mut params);
        grads.clear();
        net_g.flatten_into(&mut grads);
        grads.extend_from_slice(&tok_g);
        proj_g.flatten_into(&mut grads);
        opt.step(&mut params, &grads)?;
        model.net.set_from_flat(&params[..net_n]);
        model.tokens.data_mut().copy_from_slice(&params[net_n..net_n + tok_n]);
        model.img_proj.set_from_flat(&params[net_n + tok_n..]);
        if step % train_cfg.log_every == 0 || step == train_cfg.steps {
            history.push(TrainPoint { step, loss });
        }
    }
    Ok((model, history))
}

const META_BLOCK: &str = "denoiser.meta";
const BETA_BLOCK: &str = "denoiser.betas";
const TOKEN_BLOCK: &str = "denoiser.tokens";

pub fn save_denoiser(path: &std::path::Path, model: &Denoiser) -> Result<()> {
    let mut blocks = Vec::new();
    blocks.push((
        META_BLOCK.to_string(),
        Tensor::from_vec(vec![
            model.d as f32,
            model.cond_in as f32,
            model.t_embed as f32,
            model.token_embed as f32,
            model.cond_embed as f32,
        ]),
    ));
    blocks.push((BETA_BLOCK.to_string(), Tensor::from_vec(model.schedule.betas.clone())));
    blocks.push((TOKEN_BLOCK.to_string(), model.tokens.clone()));
    mlp_to_blocks("denoiser.net", &model.net, &mut blocks);
    mlp_to_blocks("denoiser.proj", &model.img_proj, &mut blocks);
    save_blocks(path, &blocks)
}

pub fn load_denoiser(path: &std::path::Path) -> Result<Denoiser> {
    let blocks = load_blocks(path)?;
    let meta = find_block(&blocks, META_BLOCK)?.data();
    if meta.len() != 5 {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: format!("denoiser meta has {} entries, want 5", meta.len()),
        });
    }
    let d = meta[0] as usize;
    let cond_in = meta[1] as usize;
    let t_embed = meta[2] as usize;
    let token_embed = meta[3] as usize;
    let cond_embed = meta[4] as usize;
    let mut betas = find_block(&blocks, BETA_BLOCK)?.data().to_vec();
    betas[0] = 0.0;
    let schedule = NoiseSchedule::from_betas(betas)?;
    let tokens = find_block(&blocks, TOKEN_BLOCK)?.clone();
    let net = mlp_from_blocks("denoiser.net", &blocks)?;
    let img_proj = mlp_from_blocks("denoiser.proj", &blocks)?;
    if net.in_dim() != d + t_embed + token_embed + cond_embed
        || net.out_dim() != d
        || img_proj.in_dim() != cond_in
        || img_proj.out_dim() != cond_embed
        || tokens.shape().len() != 2
        || tokens.shape()[1] != token_embed
    {
        return Err(Error::Parse {
            what: path.display().to_string(),
            detail: "denoiser blocks disagree with meta dims".into(),
        });
    }
    let t_table = time_table(schedule.t_steps(), t_embed);
    Ok(Denoiser {
        net,
        img_proj,
        tokens,
        t_table,
        schedule,
        d,
        cond_in,
        t_embed,
        token_embed,
        cond_embed,
    })
}
