//! Scratch diagnostic: can the FB net architecture fit the exact grid
//! successor measures at all? Supervised regression against frozen
//! value-iteration policies' M/rho, bypassing TD bootstrap entirely.

use genreward::gridworld::{tabular_from_grid, GridConfig};
use genreward::numcore::{seed_rng, Activation, Mlp, OptState, Tensor};
use genreward::oracle::{deterministic_policy, successor_measure, value_iteration, TabularMDP};
use rand::Rng;
use std::time::Instant;

fn main() {
    let cfg = GridConfig {
        side: 4,
        ..GridConfig::default()
    };
    let grid = tabular_from_grid(&cfg, "red", 0.9, 7).unwrap();
    supervised(&grid, 101, 128, 2e-3, 64);
}

fn supervised(mdp: &TabularMDP, seed: u64, hidden: usize, lr: f32, batch: usize) {
    let n = mdp.n_states;
    let na = mdp.n_actions;
    let d = 16usize;
    let steps = 50_000usize;

    // Exact targets per goal under the tie-lowest optimal policy.
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(n);
    for g in 0..n {
        let vi = value_iteration(mdp, g).unwrap();
        let pi = deterministic_policy(mdp, &vi.policy).unwrap();
        let m = successor_measure(mdp, &pi).unwrap();
        let scaled: Vec<f64> = m.iter().map(|v| v * n as f64).collect();
        targets.push(scaled);
    }

    let mut rng = seed_rng(seed, "supervised");
    let mut f = Mlp::new(&[n + na + d, hidden, d], Activation::Relu, Activation::Linear, &mut rng).unwrap();
    let mut b = Mlp::new(&[n, d], Activation::Linear, Activation::Linear, &mut rng).unwrap();
    let mut opt = OptState::adam(lr);

    let eye: Vec<f32> = {
        let mut v = vec![0.0f32; n * n];
        for s in 0..n {
            v[s * n + s] = 1.0;
        }
        v
    };

    let t0 = Instant::now();
    for step in 0..steps {
        // Batch of random (goal, s, a) rows; regress the full s' row.
        let mut fx = Vec::with_capacity(batch * (n + na + d));
        let mut rows = Vec::with_capacity(batch);
        for _ in 0..batch {
            let g = rng.gen_range(0..n);
            let s = rng.gen_range(0..n);
            let a = rng.gen_range(0..na);
            let mut x = vec![0.0f32; n + na + d];
            x[s] = 1.0;
            x[n + a] = 1.0;
            x[n + na + g] = 1.0;
            fx.extend_from_slice(&x);
            rows.push((g, s, a));
        }
        let fx_t = Tensor::new(vec![batch, n + na + d], fx).unwrap();
        let eye_t = Tensor::new(vec![n, n], eye.clone()).unwrap();
        let (fout_t, fcache) = f.forward_cached(&fx_t).unwrap();
        let (bout_t, bcache) = b.forward_cached(&eye_t).unwrap();
        let fout = fout_t.data();
        let bout = bout_t.data();

        let inv = 1.0 / (batch * n) as f64;
        let mut up_f = vec![0.0f32; batch * d];
        let mut up_b = vec![0.0f32; n * d];
        let mut loss = 0.0f64;
        for (i, &(g, s, a)) in rows.iter().enumerate() {
            let fi = &fout[i * d..][..d];
            for sp in 0..n {
                let bsp = &bout[sp * d..][..d];
                let pred: f64 = fi.iter().zip(bsp).map(|(x, y)| *x as f64 * *y as f64).sum();
                let y = targets[g][(s * na + a) * n + sp];
                let diff = pred - y;
                loss += diff * diff * inv;
                let c = (2.0 * diff * inv) as f32;
                for k in 0..d {
                    up_f[i * d + k] += c * bsp[k];
                    up_b[sp * d + k] += c * fi[k];
                }
            }
        }
        let up_f_t = Tensor::new(vec![batch, d], up_f).unwrap();
        let up_b_t = Tensor::new(vec![n, d], up_b).unwrap();
        let (fg, _) = f.backward(&fcache, &up_f_t).unwrap();
        let (bg, _) = b.backward(&bcache, &up_b_t).unwrap();
        let mut params = f.flatten();
        b.flatten_into(&mut params);
        let mut grads = fg.flatten();
        bg.flatten_into(&mut grads);
        opt.step(&mut params, &grads).unwrap();
        let fp = f.param_count();
        f.set_from_flat(&params[..fp]);
        b.set_from_flat(&params[fp..]);

        if (step + 1) % 10_000 == 0 {
            // Full-grid evaluation.
            let mut abs_sum = 0.0f64;
            let mut truth_sum = 0.0f64;
            let eye_t = Tensor::new(vec![n, n], eye.clone()).unwrap();
            let bout_t = b.forward(&eye_t).unwrap();
            let bout = bout_t.data();
            for g in 0..n {
                for s in 0..n {
                    for a in 0..na {
                        let mut x = vec![0.0f32; n + na + d];
                        x[s] = 1.0;
                        x[n + a] = 1.0;
                        x[n + na + g] = 1.0;
                        let fi_t = f.forward(&Tensor::from_vec(x)).unwrap();
                        let fi = fi_t.data().to_vec();
                        for sp in 0..n {
                            let bsp = &bout[sp * d..][..d];
                            let pred: f64 =
                                fi.iter().zip(bsp).map(|(x, y)| *x as f64 * *y as f64).sum();
                            let y = targets[g][(s * na + a) * n + sp];
                            abs_sum += (pred - y).abs();
                            truth_sum += y.abs();
                        }
                    }
                }
            }
            println!(
                "step {:>6}: loss={:.4} rel={:.4} t={}s",
                step + 1,
                loss,
                abs_sum / truth_sum,
                t0.elapsed().as_secs()
            );
        }
    }
}
