//! Reward composition and interval gating.
//!
//! Three reward streams meet here. The environment pays `r_env` every step.
//! On gated steps (`t` a multiple of the intrinsic interval) two intrinsic
//! signals are computed: a video-level reward, the cosine between the
//! encoded latent of the episode so far and the goal video latent, and a
//! frame-level reward from the factored successor-measure model. The emitted
//! reward is then `alpha * r_video + beta * r_fb + r_env`; on all other
//! steps it is exactly `r_env` and the intrinsic providers are never
//! invoked. Steps index from 1, so the first gate fires at `t = interval`,
//! not at reset.
//!
//! Sparse environments additionally mask their own raw reward so that it is
//! only visible every `sparse_period` steps or on success; that mask runs
//! before composition and is independent of the intrinsic gate.

use serde::{Deserialize, Serialize};

use crate::goal_diffusion::LatentVideo;
use crate::numcore::{cosine, Tensor};
use crate::seq_encoder::{uniform_sample_frames, SeqEncoder};
use crate::{Error, Result};

/// Frames sampled from the episode history before encoding for the
/// video-level reward; matches the encoder's training clip length.
pub const VIDEO_REWARD_FRAMES: usize = 16;

/// Which reward streams the run uses. The ablation variants zero a weight
/// rather than skip the computation, so gating behavior stays identical.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardVariant {
    Full,
    VideoOnly,
    FbOnly,
    EnvOnly,
}

impl RewardVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardVariant::Full => "full",
            RewardVariant::VideoOnly => "video-only",
            RewardVariant::FbOnly => "fb-only",
            RewardVariant::EnvOnly => "env-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(RewardVariant::Full),
            "video-only" => Ok(RewardVariant::VideoOnly),
            "fb-only" => Ok(RewardVariant::FbOnly),
            "env-only" => Ok(RewardVariant::EnvOnly),
            other => Err(Error::Config(format!(
                "unknown reward variant {other:?} (expected full, video-only, fb-only, env-only)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Intrinsic gate interval in steps.
    pub interval: u64,
    /// Mask raw env rewards outside period boundaries and successes.
    pub sparse: bool,
    pub sparse_period: u64,
    pub variant: RewardVariant,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 1e-2,
            beta: 1e-5,
            interval: 128,
            sparse: false,
            sparse_period: 64,
            variant: RewardVariant::Full,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "reward weights must be finite, got alpha {} beta {}",
                self.alpha, self.beta
            )));
        }
        if self.interval == 0 {
            return Err(Error::Config("intrinsic interval must be >= 1".into()));
        }
        if self.sparse_period == 0 {
            return Err(Error::Config("sparse period must be >= 1".into()));
        }
        Ok(())
    }

    /// Effective (alpha, beta) after the variant zeroes disabled streams.
    pub fn weights(&self) -> (f64, f64) {
        match self.variant {
            RewardVariant::Full => (self.alpha, self.beta),
            RewardVariant::VideoOnly => (self.alpha, 0.0),
            RewardVariant::FbOnly => (0.0, self.beta),
            RewardVariant::EnvOnly => (0.0, 0.0),
        }
    }
}

/// Per-step reward record as it lands in the metrics log. The intrinsic
/// fields are present exactly when the gate fired; a log row alone is enough
/// to check the gate invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub t: u64,
    pub r_env: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_video: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r_fb: Option<f64>,
    pub r_emitted: f64,
    #[serde(rename = "gate")]
    pub gate_fired: bool,
}

/// Cosine between the encoded episode history and the goal video latent.
///
/// The history is subsampled to [`VIDEO_REWARD_FRAMES`] frames (endpoints
/// included), encoded, and flattened across latent frames; the goal latent
/// is already flat. Degenerate norms give 0, so an all-black history never
/// produces a spurious match.
pub fn video_level_reward(
    encoder: &SeqEncoder,
    history: &[Tensor],
    goal: &LatentVideo,
) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptyInput("video_level_reward history"));
    }
    let idx = uniform_sample_frames(history.len(), VIDEO_REWARD_FRAMES)?;
    let sampled: Vec<Tensor> = idx.iter().map(|&i| history[i].clone()).collect();
    let latents = encoder.encode_video(&sampled)?;
    let mut flat = Vec::with_capacity(latents.iter().map(|l| l.len()).sum());
    for lat in &latents {
        flat.extend_from_slice(lat.data());
    }
    Ok(cosine(&flat, goal.x0.data())? as f64)
}

/// Exact linear combination `alpha * r_video + beta * r_fb + r_env` with the
/// variant's effective weights. No clamping or normalization.
pub fn compose_reward(r_video: f64, r_fb: f64, r_env: f64, cfg: &RewardConfig) -> Result<f64> {
    for (name, v) in [("r_video", r_video), ("r_fb", r_fb), ("r_env", r_env)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("compose_reward {name} = {v}")));
        }
    }
    cfg.validate()?;
    let (alpha, beta) = cfg.weights();
    Ok(alpha * r_video + beta * r_fb + r_env)
}

/// One step of the intrinsic gate. On multiples of the interval the provider
/// is called for `(r_video, r_fb)` and the composed reward is emitted; on
/// every other step the provider is untouched and `r_env` passes through
/// bit-for-bit.
pub fn gated_reward<F>(t: u64, r_env: f64, intrinsic: F, cfg: &RewardConfig) -> Result<RewardBreakdown>
where
    F: FnOnce() -> Result<(f64, f64)>,
{
    if t == 0 {
        return Err(Error::InvalidArg("gated_reward steps index from 1".into()));
    }
    cfg.validate()?;
    if t % cfg.interval != 0 {
        return Ok(RewardBreakdown {
            t,
            r_env,
            r_video: None,
            r_fb: None,
            r_emitted: r_env,
            gate_fired: false,
        });
    }
    let (r_video, r_fb) = intrinsic().map_err(|e| e.at_step(t))?;
    let r_emitted = compose_reward(r_video, r_fb, r_env, cfg).map_err(|e| e.at_step(t))?;
    Ok(RewardBreakdown {
        t,
        r_env,
        r_video: Some(r_video),
        r_fb: Some(r_fb),
        r_emitted,
        gate_fired: true,
    })
}

/// Sparse-reward mask: the raw env reward is visible on period boundaries
/// and always on success, otherwise the step pays 0.
pub fn sparse_env_gate(t: u64, raw_r_env: f64, success: bool, period: u64) -> f64 {
    assert!(t >= 1, "steps index from 1");
    assert!(period >= 1, "sparse period must be >= 1");
    if t % period == 0 || success {
        raw_r_env
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::seed_rng;
    use crate::seq_encoder::EncoderConfig;
    use proptest::prelude::*;
    use rand::Rng;

    fn goal_from(flat: Vec<f32>) -> LatentVideo {
        LatentVideo {
            x0: Tensor::new(vec![flat.len()], flat).unwrap(),
            cond: Tensor::new(vec![1], vec![0.0]).unwrap(),
            token: 0,
        }
    }

    fn encode_history_flat(enc: &SeqEncoder, history: &[Tensor]) -> Vec<f32> {
        let idx = uniform_sample_frames(history.len(), VIDEO_REWARD_FRAMES).unwrap();
        let sampled: Vec<Tensor> = idx.iter().map(|&i| history[i].clone()).collect();
        let mut flat = Vec::new();
        for lat in enc.encode_video(&sampled).unwrap() {
            flat.extend_from_slice(lat.data());
        }
        flat
    }

    fn random_history(rng: &mut rand_chacha::ChaCha8Rng, frames: usize) -> Vec<Tensor> {
        (0..frames)
            .map(|_| {
                let data: Vec<f32> = (0..3 * 24 * 24).map(|_| rng.gen_range(0.0..1.0)).collect();
                Tensor::new(vec![3, 24, 24], data).unwrap()
            })
            .collect()
    }

    #[test]
    fn compose_matches_hand_value() {
        let cfg = RewardConfig::default();
        let r = compose_reward(0.5, 100.0, 1.0, &cfg).unwrap();
        assert!((r - 1.006).abs() < 1e-12, "got {r}");
    }

    #[test]
    fn compose_is_bit_exact_against_the_literal_expression() {
        let cfg = RewardConfig::default();
        let mut rng = seed_rng(9, "compose-exact");
        for _ in 0..1000 {
            let rv: f64 = rng.gen_range(-2.0..2.0);
            let rf: f64 = rng.gen_range(-200.0..200.0);
            let re: f64 = rng.gen_range(-1.0..1.0);
            let got = compose_reward(rv, rf, re, &cfg).unwrap();
            let want = 1e-2 * rv + 1e-5 * rf + re;
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }

    #[test]
    fn variants_zero_the_right_weights() {
        let mk = |variant| RewardConfig {
            variant,
            ..RewardConfig::default()
        };
        let (rv, rf, re) = (0.5, 100.0, 1.0);
        let full = compose_reward(rv, rf, re, &mk(RewardVariant::Full)).unwrap();
        let video = compose_reward(rv, rf, re, &mk(RewardVariant::VideoOnly)).unwrap();
        let fb = compose_reward(rv, rf, re, &mk(RewardVariant::FbOnly)).unwrap();
        let env = compose_reward(rv, rf, re, &mk(RewardVariant::EnvOnly)).unwrap();
        assert!((full - 1.006).abs() < 1e-12);
        assert!((video - 1.005).abs() < 1e-12);
        assert!((fb - 1.001).abs() < 1e-12);
        assert_eq!(env.to_bits(), re.to_bits());
    }

    #[test]
    fn compose_rejects_non_finite() {
        let cfg = RewardConfig::default();
        for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert!(matches!(
                compose_reward(bad, 0.0, 0.0, &cfg),
                Err(Error::NonFinite(_))
            ));
            assert!(compose_reward(0.0, bad, 0.0, &cfg).is_err());
            assert!(compose_reward(0.0, 0.0, bad, &cfg).is_err());
        }
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = RewardConfig::default();
        cfg.interval = 0;
        assert!(cfg.validate().is_err());
        cfg.interval = 128;
        cfg.sparse_period = 0;
        assert!(cfg.validate().is_err());
        cfg.sparse_period = 64;
        cfg.alpha = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in [
            RewardVariant::Full,
            RewardVariant::VideoOnly,
            RewardVariant::FbOnly,
            RewardVariant::EnvOnly,
        ] {
            assert_eq!(RewardVariant::parse(v.as_str()).unwrap(), v);
        }
        assert!(RewardVariant::parse("all").is_err());
    }

    #[test]
    fn gate_fires_exactly_on_interval_multiples() {
        let cfg = RewardConfig::default();
        let mut calls = 0usize;
        let mut fired = Vec::new();
        for t in 1..=1024u64 {
            let b = gated_reward(
                t,
                0.25,
                || {
                    calls += 1;
                    Ok((1.0, 2.0))
                },
                &cfg,
            )
            .unwrap();
            assert_eq!(b.gate_fired, t % 128 == 0);
            if b.gate_fired {
                fired.push(t);
                assert_eq!(b.r_video, Some(1.0));
                assert_eq!(b.r_fb, Some(2.0));
            } else {
                // Bitwise passthrough, and the provider must not have run.
                assert_eq!(b.r_emitted.to_bits(), 0.25f64.to_bits());
                assert_eq!(b.r_video, None);
                assert_eq!(b.r_fb, None);
            }
        }
        assert_eq!(fired, vec![128, 256, 384, 512, 640, 768, 896, 1024]);
        assert_eq!(calls, 8);
    }

    #[test]
    fn gate_rejects_step_zero_and_wraps_provider_errors() {
        let cfg = RewardConfig::default();
        assert!(gated_reward(0, 0.0, || Ok((0.0, 0.0)), &cfg).is_err());
        let err = gated_reward(256, 0.0, || Err(Error::Frozen), &cfg).unwrap_err();
        match err {
            Error::AtStep { t, source } => {
                assert_eq!(t, 256);
                assert!(matches!(*source, Error::Frozen));
            }
            other => panic!("expected step context, got {other:?}"),
        }
    }

    #[test]
    fn sparse_gate_hand_cases() {
        assert_eq!(sparse_env_gate(64, 0.75, false, 64), 0.75);
        assert_eq!(sparse_env_gate(63, 0.75, false, 64), 0.0);
        assert_eq!(sparse_env_gate(10, 0.75, true, 64), 0.75);
        assert_eq!(sparse_env_gate(128, 0.75, true, 64), 0.75);
        for t in 1..=256u64 {
            let masked = sparse_env_gate(t, 1.0, false, 64);
            assert_eq!(masked != 0.0, t % 64 == 0, "t = {t}");
        }
    }

    #[test]
    fn video_reward_is_one_for_matching_latent_and_zero_for_orthogonal() {
        let cfg = EncoderConfig::default();
        let mut rng = seed_rng(4, "video-reward");
        let enc = SeqEncoder::new(&cfg, &mut rng).unwrap();
        let history = random_history(&mut rng, 20);
        let flat = encode_history_flat(&enc, &history);

        let same = video_level_reward(&enc, &history, &goal_from(flat.clone())).unwrap();
        assert!((same - 1.0).abs() < 1e-5, "self cosine {same}");

        // Pairwise (x, y) -> (y, -x) makes the dot cancel exactly.
        let mut orth = vec![0.0f32; flat.len()];
        for pair in 0..flat.len() / 2 {
            orth[2 * pair] = flat[2 * pair + 1];
            orth[2 * pair + 1] = -flat[2 * pair];
        }
        let zero = video_level_reward(&enc, &history, &goal_from(orth)).unwrap();
        assert!(zero.abs() < 1e-5, "orthogonal cosine {zero}");
    }

    #[test]
    fn video_reward_stays_in_cosine_bounds() {
        let cfg = EncoderConfig::default();
        let mut rng = seed_rng(5, "video-bounds");
        let enc = SeqEncoder::new(&cfg, &mut rng).unwrap();
        let goal_len = 4 * cfg.latent_frame_len();
        for len in [1usize, 2, 15, 16, 40] {
            let history = random_history(&mut rng, len);
            let goal: Vec<f32> = (0..goal_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = video_level_reward(&enc, &history, &goal_from(goal)).unwrap();
            assert!((-1.0..=1.0).contains(&r), "len {len}: {r}");
        }
        assert!(video_level_reward(&enc, &[], &goal_from(vec![0.0; goal_len])).is_err());
    }

    #[test]
    fn breakdown_serializes_intrinsic_fields_only_when_present() {
        let quiet = RewardBreakdown {
            t: 3,
            r_env: 0.5,
            r_video: None,
            r_fb: None,
            r_emitted: 0.5,
            gate_fired: false,
        };
        let text = serde_json::to_string(&quiet).unwrap();
        assert!(!text.contains("r_video") && !text.contains("r_fb"), "{text}");
        assert!(text.contains("\"gate\":false"), "{text}");

        let loud = RewardBreakdown {
            t: 128,
            r_env: 0.5,
            r_video: Some(0.9),
            r_fb: Some(42.0),
            r_emitted: 0.509420,
            gate_fired: true,
        };
        let text = serde_json::to_string(&loud).unwrap();
        assert!(text.contains("r_video") && text.contains("r_fb"), "{text}");
        let back: RewardBreakdown = serde_json::from_str(&text).unwrap();
        assert_eq!(back, loud);
    }

    proptest! {
        /// gate_fired on every row matches the arithmetic condition, and
        /// quiet rows pass r_env through bitwise.
        #[test]
        fn gate_invariant_holds(t in 1u64..10_000, interval in 1u64..512, r_env in -10.0f64..10.0) {
            let cfg = RewardConfig { interval, ..RewardConfig::default() };
            let b = gated_reward(t, r_env, || Ok((0.5, 1.0)), &cfg).unwrap();
            prop_assert_eq!(b.gate_fired, t % interval == 0);
            prop_assert_eq!(b.r_video.is_some(), b.gate_fired);
            prop_assert_eq!(b.r_fb.is_some(), b.gate_fired);
            if !b.gate_fired {
                prop_assert_eq!(b.r_emitted.to_bits(), r_env.to_bits());
            }
        }

        /// Raising any positively weighted stream never lowers the reward.
        #[test]
        fn compose_is_monotone_in_positive_weights(
            rv in -1.0f64..1.0,
            rf in -100.0f64..100.0,
            re in -1.0f64..1.0,
            bump in 0.0f64..5.0,
        ) {
            let cfg = RewardConfig::default();
            let base = compose_reward(rv, rf, re, &cfg).unwrap();
            prop_assert!(compose_reward(rv + bump, rf, re, &cfg).unwrap() >= base);
            prop_assert!(compose_reward(rv, rf + bump, re, &cfg).unwrap() >= base);
            prop_assert!(compose_reward(rv, rf, re + bump, &cfg).unwrap() >= base);
        }

        /// Shared env term: compose(a) + compose(b) = compose(a + b) + r_env.
        #[test]
        fn compose_is_affine_in_the_intrinsic_terms(
            rv1 in -1.0f64..1.0, rf1 in -10.0f64..10.0,
            rv2 in -1.0f64..1.0, rf2 in -10.0f64..10.0,
            re in -1.0f64..1.0,
        ) {
            let cfg = RewardConfig::default();
            let a = compose_reward(rv1, rf1, re, &cfg).unwrap();
            let b = compose_reward(rv2, rf2, re, &cfg).unwrap();
            let ab = compose_reward(rv1 + rv2, rf1 + rf2, re, &cfg).unwrap();
            prop_assert!((a + b - (ab + re)).abs() < 1e-9);
        }
    }
}
