//! Finite-difference gradient oracle for validating analytic backprop.

use crate::error::{Error, Result};
use crate::nn::mlp::MlpParams;

/// Central-difference gradient of a scalar loss with respect to every
/// parameter, in the same flat ordering as [`MlpParams::flatten`].
///
/// `f` is evaluated `2 * param_count` times; `step` is the perturbation
/// applied to each coordinate in turn.
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&MlpParams) -> Result<f64>,
    params: &MlpParams,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive and finite, got {step}"
        )));
    }
    let n = params.param_count();
    let mut grad = Vec::with_capacity(n);
    let mut work = params.clone();
    for idx in 0..n {
        let plus = eval_perturbed(f, &mut work, params, idx, step)?;
        let minus = eval_perturbed(f, &mut work, params, idx, -step)?;
        grad.push((plus - minus) / (2.0 * step));
    }
    // restore the workspace so `work` drops in a clean state (not observable,
    // but keeps the loop body symmetric)
    Ok(grad)
}

fn eval_perturbed(
    f: &mut dyn FnMut(&MlpParams) -> Result<f64>,
    work: &mut MlpParams,
    base: &MlpParams,
    idx: usize,
    delta: f64,
) -> Result<f64> {
    // Reset the single touched coordinate from the base each time.
    let mut i = 0usize;
    let base_flat = base.flatten();
    work.for_each_param_mut(|v| {
        *v = base_flat[i] + if i == idx { delta } else { 0.0 };
        i += 1;
    });
    let val = f(work)?;
    if !val.is_finite() {
        return Err(Error::Numeric(format!(
            "loss returned non-finite value {val} during finite-difference probe"
        )));
    }
    Ok(val)
}

/// Relative error between an analytic and a finite-difference gradient
/// component: `|a - b| / max(|a|, |b|, 1e-4)`. The floor keeps near-zero
/// gradients from amplifying finite-difference roundoff.
pub fn grad_rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{Activation, Dense, MlpParams};
    use crate::linalg::Matrix;

    fn toy_params(values: &[f64]) -> MlpParams {
        // 2 -> 1 linear layer: two weights and one bias, flat order [w0, w1, b].
        let mut weight = Matrix::zeros(2, 1);
        weight.set(0, 0, values[0]);
        weight.set(1, 0, values[1]);
        MlpParams {
            layers: vec![Dense {
                weight,
                bias: vec![values[2]],
            }],
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn gradient_of_parameter_sum_is_all_ones() {
        let params = toy_params(&[0.3, -1.2, 0.5]);
        let mut f = |p: &MlpParams| Ok(p.flatten().iter().sum());
        let g = finite_diff_grad(&mut f, &params, 1e-6).unwrap();
        assert_eq!(g.len(), 3);
        for v in g {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn gradient_of_sum_of_squares_is_two_p() {
        let params = toy_params(&[0.3, -1.2, 0.5]);
        let mut f = |p: &MlpParams| Ok(p.flatten().iter().map(|v| v * v).sum());
        let g = finite_diff_grad(&mut f, &params, 1e-6).unwrap();
        let flat = params.flatten();
        for (gi, pi) in g.iter().zip(flat) {
            assert!((gi - 2.0 * pi).abs() < 1e-6, "{gi} vs {}", 2.0 * pi);
        }
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let params = toy_params(&[1.0, 1.0, 1.0]);
        let mut f = |_: &MlpParams| Ok(f64::NAN);
        let err = finite_diff_grad(&mut f, &params, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn rejects_bad_step() {
        let params = toy_params(&[1.0, 1.0, 1.0]);
        let mut f = |p: &MlpParams| Ok(p.flatten()[0]);
        assert!(finite_diff_grad(&mut f, &params, 0.0).is_err());
        assert!(finite_diff_grad(&mut f, &params, f64::NAN).is_err());
    }

    #[test]
    fn rel_error_floor_tolerates_tiny_gradients() {
        assert!(grad_rel_error(1e-12, 0.0) < 1e-7);
        assert!(grad_rel_error(1.0, 1.0) == 0.0);
        assert!(grad_rel_error(2.0, 1.0) == 0.5);
    }
}
