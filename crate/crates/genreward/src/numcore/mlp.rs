//! Public MLP parameter container around the generic kernel.
//!
//! Layers are (weight, bias, activation); hidden layers default to ReLU and
//! the output layer to linear. Initialization is Xavier uniform,
//! U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))), from the caller's
//! seeded RNG, so identical seeds give identical parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use super::kernel::Activation;
use super::kernel::{Cache, Net, NetGrads};
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub(crate) net: Net<f32>,
}

pub struct MlpCache {
    pub(crate) input: Vec<f32>,
    pub(crate) cache: Cache<f32>,
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub(crate) grads: NetGrads<f32>,
}

impl Mlp {
    /// `dims` = [in, hidden.., out]; hidden activation is `hidden_act`, the
    /// output layer is linear unless `out_act` overrides it.
    pub fn new(
        dims: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArg(format!(
                "an MLP needs at least [in, out] dims, got {dims:?}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArg(format!("zero-width layer in {dims:?}")));
        }
        let n_layers = dims.len() - 1;
        let mut acts = vec![hidden_act; n_layers];
        acts[n_layers - 1] = out_act;
        let mut net = Net::<f32>::zeros(dims, &acts);
        for l in 0..n_layers {
            let bound = (6.0 / (dims[l] + dims[l + 1]) as f32).sqrt();
            for v in net.w[l].iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            // Biases start at zero.
        }
        Ok(Mlp { net })
    }

    pub fn n_layers(&self) -> usize {
        self.net.n_layers()
    }

    pub fn in_dim(&self) -> usize {
        self.net.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.net.out_dim()
    }

    pub fn dims(&self) -> &[usize] {
        &self.net.dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.net.acts
    }

    /// Weight matrix of layer `l` as an [out, in] tensor view copy.
    pub fn weight(&self, l: usize) -> Tensor {
        Tensor::new(
            vec![self.net.dims[l + 1], self.net.dims[l]],
            self.net.w[l].clone(),
        )
        .expect("consistent by construction")
    }

    pub fn bias(&self, l: usize) -> Tensor {
        Tensor::from_vec(self.net.b[l].clone())
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [f32] {
        &mut self.net.w[l]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f32] {
        &mut self.net.b[l]
    }

    fn check_input(&self, x: &Tensor, op: &'static str) -> Result<usize> {
        let rows = match x.shape() {
            [n] if *n == self.in_dim() => 1,
            [r, n] if *n == self.in_dim() => *r,
            other => {
                return Err(Error::ShapeMismatch {
                    op,
                    expected: format!("[{}] or [rows, {}]", self.in_dim(), self.in_dim()),
                    got: format!("{other:?}"),
                })
            }
        };
        Ok(rows)
    }

    /// Forward pass; accepts a single input `[in]` or a batch `[rows, in]`
    /// and mirrors that rank on the output.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let rows = self.check_input(x, "mlp_forward")?;
        let y = self.net.forward(x.data(), rows);
        let out = self.out_dim();
        if x.shape().len() == 1 {
            Ok(Tensor::from_vec(y))
        } else {
            Tensor::new(vec![rows, out], y)
        }
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let rows = self.check_input(x, "mlp_forward")?;
        let cache = self.net.forward_cached(x.data(), rows);
        let y = cache.outs.last().unwrap().clone();
        let out = if x.shape().len() == 1 {
            Tensor::from_vec(y)
        } else {
            Tensor::new(vec![rows, self.out_dim()], y)?
        };
        Ok((
            out,
            MlpCache {
                input: x.data().to_vec(),
                cache,
            },
        ))
    }

    /// Backprop `upstream` = d loss / d output through a cached pass.
    /// Returns parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, cache: &MlpCache, upstream: &Tensor) -> Result<(MlpGrads, Tensor)> {
        let want = cache.cache.rows * self.out_dim();
        if upstream.len() != want {
            return Err(Error::ShapeMismatch {
                op: "mlp_backward",
                expected: format!("{want} upstream values"),
                got: format!("{}", upstream.len()),
            });
        }
        let (grads, dx) = self
            .net
            .backward(&cache.input, &cache.cache, upstream.data());
        let dx = if cache.cache.rows == 1 {
            Tensor::from_vec(dx)
        } else {
            Tensor::new(vec![cache.cache.rows, self.in_dim()], dx)?
        };
        Ok((MlpGrads { grads }, dx))
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        self.net.flatten_into(&mut out);
        out
    }

    pub fn flatten_into(&self, out: &mut Vec<f32>) {
        self.net.flatten_into(out);
    }

    pub fn set_from_flat(&mut self, flat: &[f32]) -> usize {
        self.net.set_from_flat(flat)
    }

    /// Polyak-average `online` into `self` (the target copy).
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f32) -> Result<()> {
        if self.net.dims != online.net.dims {
            return Err(Error::ShapeMismatch {
                op: "soft_update",
                expected: format!("{:?}", self.net.dims),
                got: format!("{:?}", online.net.dims),
            });
        }
        for l in 0..self.n_layers() {
            super::soft_update(&mut self.net.w[l], &online.net.w[l], tau)?;
            super::soft_update(&mut self.net.b[l], &online.net.b[l], tau)?;
        }
        Ok(())
    }

    pub fn to_f64(&self) -> Net<f64> {
        self.net.to_f64()
    }
}

impl MlpGrads {
    pub fn flatten_into(&self, out: &mut Vec<f32>) {
        self.grads.flatten_into(out);
    }

    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::new();
        self.grads.flatten_into(&mut out);
        out
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f32) {
        self.grads.add_scaled(&other.grads, scale);
    }
}

#[cfg(test)]
mod tests {
    use super::super::{grad_check, seed_rng};
    use super::*;

    #[test]
    fn init_is_seeded_and_within_xavier_bounds() {
        let mut r1 = seed_rng(7, "mlp");
        let mut r2 = seed_rng(7, "mlp");
        let a = Mlp::new(&[5, 8, 2], Activation::Relu, Activation::Linear, &mut r1).unwrap();
        let b = Mlp::new(&[5, 8, 2], Activation::Relu, Activation::Linear, &mut r2).unwrap();
        assert_eq!(a, b);
        let bound0 = (6.0f32 / (5 + 8) as f32).sqrt();
        for &v in &a.net.w[0] {
            assert!(v.abs() < bound0);
        }
        assert!(a.net.b.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let mut rng = seed_rng(0, "mlp");
        let m = Mlp::new(&[3, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let err = m.forward(&Tensor::from_vec(vec![1.0, 2.0])).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("[3]"), "message should name shapes: {msg}");
    }

    #[test]
    fn single_and_batch_ranks_mirror_input() {
        let mut rng = seed_rng(1, "mlp");
        let m = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let single = m.forward(&Tensor::from_vec(vec![0.1, 0.2, 0.3])).unwrap();
        assert_eq!(single.shape(), &[2]);
        let batch = m
            .forward(&Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap())
            .unwrap();
        assert_eq!(batch.shape(), &[2, 2]);
        assert_eq!(&batch.data()[..2], single.data());
    }

    /// Scalar loss L = sum(g . f(x)) over a random net: analytic gradients
    /// from `backward` against f64 central differences.
    #[test]
    fn backward_matches_central_differences() {
        for seed in [11u64, 12, 13] {
            let mut rng = seed_rng(seed, "mlp-grad");
            let m = Mlp::new(&[4, 6, 3], Activation::Relu, Activation::Linear, &mut rng).unwrap();
            let x = Tensor::new(
                vec![2, 4],
                (0..8).map(|i| ((i * 13 + seed as usize) % 7) as f32 * 0.1 - 0.3).collect(),
            )
            .unwrap();
            let g: Vec<f32> = (0..6).map(|i| ((i % 3) as f32) * 0.5 - 0.4).collect();

            let (_, cache) = m.forward_cached(&x).unwrap();
            let (grads, _) = m
                .backward(&cache, &Tensor::new(vec![2, 3], g.clone()).unwrap())
                .unwrap();
            let analytic = grads.flatten();

            let theta: Vec<f64> = m.flatten().iter().map(|&v| v as f64).collect();
            let dims = m.dims().to_vec();
            let acts = m.activations().to_vec();
            let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
            let g64: Vec<f64> = g.iter().map(|&v| v as f64).collect();
            let loss = |th: &[f64]| {
                let mut net = Net::<f64>::zeros(&dims, &acts);
                net.set_from_flat(th);
                let y = net.forward(&x64, 2);
                y.iter().zip(&g64).map(|(a, b)| a * b).sum()
            };
            let err = grad_check(loss, &theta, &analytic, 1e-4).unwrap();
            assert!(err < 1e-3, "seed {seed}: max rel err {err}");
        }
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let mut rng = seed_rng(42, "mlp-dx");
        let m = Mlp::new(&[3, 5, 2], Activation::Sigmoid, Activation::Linear, &mut rng).unwrap();
        let x = Tensor::from_vec(vec![0.2, -0.4, 0.6]);
        let g = vec![1.0f32, -2.0];
        let (_, cache) = m.forward_cached(&x).unwrap();
        let (_, dx) = m.backward(&cache, &Tensor::from_vec(g.clone())).unwrap();

        let net64 = m.to_f64();
        let g64: Vec<f64> = g.iter().map(|&v| v as f64).collect();
        let x64: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        let loss = |xs: &[f64]| {
            let y = net64.forward(xs, 1);
            y.iter().zip(&g64).map(|(a, b)| a * b).sum()
        };
        let err = grad_check(loss, &x64, dx.data(), 1e-4).unwrap();
        assert!(err < 1e-3, "max rel err {err}");
    }

    #[test]
    fn soft_update_is_exact_polyak() {
        let mut rng = seed_rng(5, "mlp-tgt");
        let online = Mlp::new(&[2, 3], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let mut target = Mlp::new(&[2, 3], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let old = target.flatten();
        target.soft_update_from(&online, 0.01).unwrap();
        for ((t, o), n) in old.iter().zip(online.flatten()).zip(target.flatten()) {
            assert_eq!(n, (1.0 - 0.01) * t + 0.01 * o);
        }
    }
}
