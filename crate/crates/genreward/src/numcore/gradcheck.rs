//! Central-difference gradient verification.
//!
//! The loss closure is evaluated in f64 (see the module note in `numcore`):
//! with f32 evaluation the difference (f(x+h) - f(x-h)) / 2h is dominated by
//! rounding noise at the h needed to control truncation error, and a 1e-3
//! relative tolerance would be unverifiable rather than strict.

use crate::{Error, Result};

/// Max over parameters of |analytic_i - central_i| / max(1, |central_i|),
/// with central_i = (f(theta + h e_i) - f(theta - h e_i)) / 2h.
pub fn grad_check<F>(mut loss: F, theta: &[f64], analytic: &[f32], eps: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArg(format!(
            "grad_check eps must be positive and finite, got {eps}"
        )));
    }
    if theta.len() != analytic.len() {
        return Err(Error::ShapeMismatch {
            op: "grad_check",
            expected: format!("[{}]", theta.len()),
            got: format!("[{}]", analytic.len()),
        });
    }
    let mut probe = theta.to_vec();
    let mut max_err = 0f64;
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = loss(&probe);
        probe[i] = theta[i] - eps;
        let down = loss(&probe);
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("grad_check loss at parameter {i}")));
        }
        let central = (up - down) / (2.0 * eps);
        let err = (analytic[i] as f64 - central).abs() / central.abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        // f(w) = w^2 at w = 3: analytic gradient 6.
        let err = grad_check(|t| t[0] * t[0], &[3.0], &[6.0], 1e-4).unwrap();
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let err = grad_check(|_| 42.0, &[1.0, -2.0], &[0.0, 0.0], 1e-4).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn wrong_analytic_gradient_is_flagged() {
        let err = grad_check(|t| t[0] * t[0], &[3.0], &[5.0], 1e-4).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn bad_eps_rejected() {
        assert!(grad_check(|t| t[0], &[0.0], &[1.0], 0.0).is_err());
        assert!(grad_check(|t| t[0], &[0.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn non_finite_loss_rejected() {
        assert!(grad_check(|t| (-t[0]).sqrt(), &[1.0], &[0.0], 1e-4).is_err());
    }
}
