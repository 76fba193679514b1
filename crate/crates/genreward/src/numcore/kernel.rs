//! Scalar-generic MLP kernel.
//!
//! The same forward/backward code is monomorphized at f32 (production) and at
//! f64 (used by the gradient checker, where finite differences need more
//! precision than f32 evaluation noise allows). Inner dot products use four
//! independent accumulators; the summation order is fixed, so results are
//! deterministic for a given scalar type.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use crate::{Error, Result};

pub trait Real:
    num_traits::Float + AddAssign + SubAssign + MulAssign + Sum + Debug + Default + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossless f32 -> T conversion (both supported scalars hold every f32).
#[inline(always)]
pub fn rf<T: Real>(x: f32) -> T {
    T::from(x).expect("f32 always converts")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline(always)]
    fn apply<T: Real>(self, y: &mut [T]) {
        match self {
            Activation::Linear => {}
            Activation::Relu => {
                for v in y {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            Activation::Sigmoid => {
                for v in y {
                    *v = T::one() / (T::one() + (-*v).exp());
                }
            }
        }
    }

    /// Derivative expressed through the post-activation value. ReLU uses the
    /// subgradient 0 at the kink.
    #[inline(always)]
    fn dpost<T: Real>(self, y: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Sigmoid),
            other => Err(Error::Parse {
                what: "activation code".into(),
                detail: format!("{other}"),
            }),
        }
    }
}

#[inline(always)]
fn dot_unrolled<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = T::zero();
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Fully connected feed-forward net. `dims` = [in, hidden.., out]; weights of
/// layer l are dims[l+1] x dims[l], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Net<T> {
    pub dims: Vec<usize>,
    pub acts: Vec<Activation>,
    pub w: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
}

/// Post-activation outputs of every layer for one forward pass.
pub struct Cache<T> {
    pub outs: Vec<Vec<T>>,
    pub rows: usize,
}

#[derive(Clone, Debug)]
pub struct NetGrads<T> {
    pub w: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
}

impl<T: Real> Net<T> {
    pub fn zeros(dims: &[usize], acts: &[Activation]) -> Self {
        assert_eq!(dims.len(), acts.len() + 1, "one activation per layer");
        assert!(dims.len() >= 2, "need at least one layer");
        let w = (0..acts.len())
            .map(|l| vec![T::zero(); dims[l + 1] * dims[l]])
            .collect();
        let b = (0..acts.len())
            .map(|l| vec![T::zero(); dims[l + 1]])
            .collect();
        Net {
            dims: dims.to_vec(),
            acts: acts.to_vec(),
            w,
            b,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.acts.len()
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.w.iter().map(Vec::len).sum::<usize>() + self.b.iter().map(Vec::len).sum::<usize>()
    }

    fn affine(&self, l: usize, x: &[T], rows: usize, y: &mut [T]) {
        let inn = self.dims[l];
        let out = self.dims[l + 1];
        let w = &self.w[l];
        let b = &self.b[l];
        for r in 0..rows {
            let xr = &x[r * inn..][..inn];
            let yr = &mut y[r * out..][..out];
            for o in 0..out {
                yr[o] = b[o] + dot_unrolled(xr, &w[o * inn..][..inn]);
            }
        }
    }

    /// Forward over `rows` stacked inputs; returns the last layer's output.
    pub fn forward(&self, x: &[T], rows: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), rows * self.in_dim());
        let mut cur = x.to_vec();
        for l in 0..self.n_layers() {
            let mut next = vec![T::zero(); rows * self.dims[l + 1]];
            self.affine(l, &cur, rows, &mut next);
            self.acts[l].apply(&mut next);
            cur = next;
        }
        cur
    }

    pub fn forward_cached(&self, x: &[T], rows: usize) -> Cache<T> {
        debug_assert_eq!(x.len(), rows * self.in_dim());
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let prev: &[T] = if l == 0 { x } else { outs[l - 1].as_slice() };
            let mut next = vec![T::zero(); rows * self.dims[l + 1]];
            self.affine(l, prev, rows, &mut next);
            self.acts[l].apply(&mut next);
            outs.push(next);
        }
        Cache { outs, rows }
    }

    /// Backprop of `upstream` (rows x out, d loss / d output) through the
    /// cached pass. Returns parameter gradients and the gradient w.r.t. the
    /// input batch.
    pub fn backward(&self, x: &[T], cache: &Cache<T>, upstream: &[T]) -> (NetGrads<T>, Vec<T>) {
        let rows = cache.rows;
        debug_assert_eq!(upstream.len(), rows * self.out_dim());
        let mut gw: Vec<Vec<T>> = self.w.iter().map(|w| vec![T::zero(); w.len()]).collect();
        let mut gb: Vec<Vec<T>> = self.b.iter().map(|b| vec![T::zero(); b.len()]).collect();

        let mut dy = upstream.to_vec();
        for l in (0..self.n_layers()).rev() {
            let inn = self.dims[l];
            let out = self.dims[l + 1];
            let post = &cache.outs[l];
            // d pre-activation, in place.
            let act = self.acts[l];
            for (d, y) in dy.iter_mut().zip(post.iter()) {
                *d = *d * act.dpost(*y);
            }
            let xin: &[T] = if l == 0 { x } else { &cache.outs[l - 1] };
            let (dwl, dbl) = (&mut gw[l], &mut gb[l]);
            let mut dx = vec![T::zero(); rows * inn];
            for r in 0..rows {
                let dp = &dy[r * out..][..out];
                let xr = &xin[r * inn..][..inn];
                let dxr = &mut dx[r * inn..][..inn];
                for o in 0..out {
                    let d = dp[o];
                    dbl[o] += d;
                    if d != T::zero() {
                        let wrow = &self.w[l][o * inn..][..inn];
                        let dwrow = &mut dwl[o * inn..][..inn];
                        for k in 0..inn {
                            dwrow[k] += d * xr[k];
                            dxr[k] += d * wrow[k];
                        }
                    }
                }
            }
            dy = dx;
        }
        (NetGrads { w: gw, b: gb }, dy)
    }

    /// Deterministic flattening: per layer, weights row-major then bias.
    pub fn flatten_into(&self, out: &mut Vec<T>) {
        for l in 0..self.n_layers() {
            out.extend_from_slice(&self.w[l]);
            out.extend_from_slice(&self.b[l]);
        }
    }

    /// Inverse of `flatten_into`; returns the number of scalars consumed.
    pub fn set_from_flat(&mut self, flat: &[T]) -> usize {
        let mut off = 0;
        for l in 0..self.acts.len() {
            let wl = self.w[l].len();
            self.w[l].copy_from_slice(&flat[off..off + wl]);
            off += wl;
            let bl = self.b[l].len();
            self.b[l].copy_from_slice(&flat[off..off + bl]);
            off += bl;
        }
        off
    }
}

impl Net<f32> {
    pub fn to_f64(&self) -> Net<f64> {
        Net {
            dims: self.dims.clone(),
            acts: self.acts.clone(),
            w: self.w.iter().map(|l| l.iter().map(|&x| x as f64).collect()).collect(),
            b: self.b.iter().map(|l| l.iter().map(|&x| x as f64).collect()).collect(),
        }
    }
}

impl<T: Real> NetGrads<T> {
    pub fn flatten_into(&self, out: &mut Vec<T>) {
        for l in 0..self.w.len() {
            out.extend_from_slice(&self.w[l]);
            out.extend_from_slice(&self.b[l]);
        }
    }

    pub fn add_scaled(&mut self, other: &NetGrads<T>, scale: T) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
    }
}

/// Cosine over any Real slice pair; all accumulation in f64. Degenerate norms
/// (< 1e-12) yield 0; output clamped to [-1, 1].
pub fn cosine_g<T: Real>(u: &[T], v: &[T]) -> T {
    let (uv, uu, vv) = cosine_moments(u, v);
    let nu = uu.sqrt();
    let nv = vv.sqrt();
    if nu < 1e-12 || nv < 1e-12 {
        return T::zero();
    }
    let c = (uv / (nu * nv)).clamp(-1.0, 1.0);
    T::from(c).expect("finite cosine")
}

/// (u.v, u.u, v.v) accumulated in f64.
pub fn cosine_moments<T: Real>(u: &[T], v: &[T]) -> (f64, f64, f64) {
    let mut uv = 0f64;
    let mut uu = 0f64;
    let mut vv = 0f64;
    for (a, b) in u.iter().zip(v) {
        let a = a.to_f64().unwrap();
        let b = b.to_f64().unwrap();
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    (uv, uu, vv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_independent_loops() {
        // 2-3-2 net with hand-set weights, checked against a from-scratch
        // reimplementation of the same arithmetic.
        let mut net = Net::<f32>::zeros(&[2, 3, 2], &[Activation::Relu, Activation::Linear]);
        net.w[0] = vec![0.5, -0.25, 1.0, 0.75, -1.5, 0.125];
        net.b[0] = vec![0.1, -0.2, 0.3];
        net.w[1] = vec![1.0, 0.5, -0.5, 0.25, -0.75, 2.0];
        net.b[1] = vec![0.0, 1.0];
        let x = [0.4f32, -0.8];

        let mut h = [0f32; 3];
        for o in 0..3 {
            let mut acc = net.b[0][o];
            for k in 0..2 {
                acc += net.w[0][o * 2 + k] * x[k];
            }
            h[o] = acc.max(0.0);
        }
        let mut want = [0f32; 2];
        for o in 0..2 {
            let mut acc = net.b[1][o];
            for k in 0..3 {
                acc += net.w[1][o * 3 + k] * h[k];
            }
            want[o] = acc;
        }

        let got = net.forward(&x, 1);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6, "got {g}, want {w}");
        }
    }

    #[test]
    fn batched_forward_equals_per_row() {
        let mut net = Net::<f32>::zeros(&[3, 4, 2], &[Activation::Relu, Activation::Linear]);
        // Deterministic nonzero fill.
        for (i, v) in net.w[0].iter_mut().enumerate() {
            *v = ((i as f32) * 0.37).sin() * 0.5;
        }
        for (i, v) in net.w[1].iter_mut().enumerate() {
            *v = ((i as f32) * 0.71).cos() * 0.5;
        }
        let xs: Vec<f32> = (0..9).map(|i| (i as f32) * 0.1 - 0.4).collect();
        let batch = net.forward(&xs, 3);
        for r in 0..3 {
            let single = net.forward(&xs[r * 3..][..3], 1);
            assert_eq!(&batch[r * 2..][..2], single.as_slice());
        }
    }

    #[test]
    fn f64_twin_agrees_with_f32_to_float_precision() {
        let mut net = Net::<f32>::zeros(&[4, 8, 3], &[Activation::Sigmoid, Activation::Linear]);
        for (i, v) in net.w[0].iter_mut().enumerate() {
            *v = ((i * 7 % 13) as f32 - 6.0) * 0.1;
        }
        for (i, v) in net.w[1].iter_mut().enumerate() {
            *v = ((i * 5 % 11) as f32 - 5.0) * 0.1;
        }
        let x32: Vec<f32> = vec![0.3, -0.7, 0.9, 0.2];
        let x64: Vec<f64> = x32.iter().map(|&v| v as f64).collect();
        let y32 = net.forward(&x32, 1);
        let y64 = net.to_f64().forward(&x64, 1);
        for (a, b) in y32.iter().zip(&y64) {
            assert!((*a as f64 - b).abs() < 1e-5);
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let mut net = Net::<f32>::zeros(&[2, 3, 1], &[Activation::Relu, Activation::Linear]);
        for (i, v) in net.w[0].iter_mut().enumerate() {
            *v = i as f32;
        }
        net.b[1][0] = 9.0;
        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        assert_eq!(flat.len(), net.param_count());
        let mut other = Net::<f32>::zeros(&[2, 3, 1], &[Activation::Relu, Activation::Linear]);
        let used = other.set_from_flat(&flat);
        assert_eq!(used, flat.len());
        assert_eq!(net, other);
    }
}
