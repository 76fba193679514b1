//! Minimal dense-tensor and MLP kernel shared by every learned component.
//!
//! Storage is 32-bit floats. MLP matmuls accumulate in f32 (layer widths here
//! stay far below the point where that matters); free-standing dot products
//! switch to f64 accumulation at length >= 4096, and cosine always norms in
//! f64. The forward/backward math is written once, generic over the scalar
//! type, so the finite-difference gradient checker can evaluate the very same
//! loss code in f64 where central differences are not drowned by rounding.

mod checkpoint;
mod gradcheck;
pub(crate) mod kernel;
mod mlp;
mod optim;
mod rng;
mod tensor;

pub use checkpoint::{
    find_block, load_blocks, mlp_from_blocks, mlp_to_blocks, save_blocks, NNP1_MAGIC,
};
pub use gradcheck::grad_check;
pub use kernel::Real;
pub use mlp::{Activation, Mlp, MlpCache, MlpGrads};
pub use optim::{OptKind, OptState};
pub use rng::seed_rng;
pub use tensor::Tensor;

use crate::{Error, Result};

/// Dot product of equal-length slices. Accumulates in f64 once the length
/// reaches 4096; shorter products stay in f32.
pub fn dot(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "dot",
            expected: format!("[{}]", u.len()),
            got: format!("[{}]", v.len()),
        });
    }
    if u.len() >= 4096 {
        let mut acc = 0f64;
        for (a, b) in u.iter().zip(v) {
            acc += *a as f64 * *b as f64;
        }
        Ok(acc as f32)
    } else {
        let mut acc = 0f32;
        for (a, b) in u.iter().zip(v) {
            acc += a * b;
        }
        Ok(acc)
    }
}

/// Cosine similarity with the degenerate-input convention: if either norm is
/// below 1e-12 the result is 0. Output is clamped to [-1, 1]. Norms and the
/// inner product accumulate in f64 regardless of length.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "cosine",
            expected: format!("[{}]", u.len()),
            got: format!("[{}]", v.len()),
        });
    }
    if u.is_empty() {
        return Err(Error::EmptyInput("cosine"));
    }
    Ok(kernel::cosine_g::<f32>(u, v))
}

/// In-place Polyak averaging: target <- (1 - tau) * target + tau * online.
pub fn soft_update(target: &mut [f32], online: &[f32], tau: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArg(format!(
            "soft_update tau must be in [0, 1], got {tau}"
        )));
    }
    if target.len() != online.len() {
        return Err(Error::ShapeMismatch {
            op: "soft_update",
            expected: format!("[{}]", target.len()),
            got: format!("[{}]", online.len()),
        });
    }
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * *o;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_hand_arithmetic() {
        let u = [1.0f32, 2.0, 3.0];
        let v = [4.0f32, -5.0, 6.0];
        assert_eq!(dot(&u, &v).unwrap(), 4.0 - 10.0 + 18.0);
    }

    #[test]
    fn dot_length_mismatch_is_an_error() {
        assert!(dot(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn long_dot_uses_f64_accumulation() {
        // 1e7 + many small terms: f32 accumulation would lose them entirely.
        let mut u = vec![1.0f32; 5000];
        let mut v = vec![1e-3f32; 5000];
        u[0] = 1e7;
        v[0] = 1.0;
        let got = dot(&u, &v).unwrap() as f64;
        let want = 1e7 + 4999.0 * 1e-3;
        assert!((got - want).abs() < 1.0, "got {got}, want {want}");
    }

    #[test]
    fn cosine_of_unit_vectors_at_45_degrees() {
        let got = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((got - 0.70710678).abs() < 1e-6);
    }

    #[test]
    fn cosine_degenerate_norm_returns_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1e-13, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_is_clamped() {
        // Parallel vectors can round to slightly above 1 without the clamp.
        let u = vec![0.1f32; 300];
        let got = cosine(&u, &u).unwrap();
        assert!(got <= 1.0 && got > 0.999999);
    }

    #[test]
    fn soft_update_matches_the_exact_formula() {
        let mut t = vec![1.0f32, -2.0, 0.5];
        let o = vec![0.0f32, 2.0, 0.5];
        let expect: Vec<f32> = t
            .iter()
            .zip(&o)
            .map(|(a, b)| (1.0 - 0.01) * a + 0.01 * b)
            .collect();
        soft_update(&mut t, &o, 0.01).unwrap();
        assert_eq!(t, expect);
    }

    #[test]
    fn soft_update_halving_converges_exactly_for_tau_half() {
        // tau = 1/2 keeps every iterate exactly representable, so the
        // geometric error decay (1 - tau)^n holds bit-for-bit.
        let mut t = vec![1.0f32];
        let o = vec![0.0f32];
        for n in 1..=20 {
            soft_update(&mut t, &o, 0.5).unwrap();
            assert_eq!(t[0], 0.5f32.powi(n));
        }
    }

    #[test]
    fn soft_update_tau_one_copies_online() {
        let mut t = vec![3.0f32, 4.0];
        soft_update(&mut t, &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(t, vec![1.0, 2.0]);
    }

    #[test]
    fn soft_update_rejects_bad_tau() {
        assert!(soft_update(&mut [0.0], &[0.0], -0.1).is_err());
        assert!(soft_update(&mut [0.0], &[0.0], 1.5).is_err());
    }
}
