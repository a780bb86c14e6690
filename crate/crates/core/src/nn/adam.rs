//! Adam optimizer with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{Dense, Gradients, MlpParams};

/// First/second moment accumulators for one [`MlpParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Dense>,
    pub v: Vec<Dense>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    /// Fresh state with the conventional defaults (lr 1e-3, betas 0.9/0.999).
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        let zeros = || {
            params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.d_in(), l.d_out()))
                .collect::<Vec<_>>()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }
}

/// One Adam update in place. Rejects non-finite gradients so a blown-up
/// step surfaces as an error instead of silently poisoning the parameters.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != params.layers.len() || state.m.len() != params.layers.len() {
        return Err(Error::shape_mismatch(
            "adam step",
            format!("{} layers", params.layers.len()),
            format!("{} gradient layers", grads.layers.len()),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric(
            "non-finite gradient passed to adam_step".into(),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for k in 0..params.layers.len() {
        let g = &grads.layers[k];
        let p = &mut params.layers[k];
        if g.d_in() != p.d_in() || g.d_out() != p.d_out() {
            return Err(Error::shape_mismatch(
                format!("adam step (layer {k})"),
                format!("{}x{}", p.d_in(), p.d_out()),
                format!("{}x{}", g.d_in(), g.d_out()),
            ));
        }
        let update = |theta: &mut f64, grad: f64, m: &mut f64, v: &mut f64| {
            *m = state.beta1 * *m + (1.0 - state.beta1) * grad;
            *v = state.beta2 * *v + (1.0 - state.beta2) * grad * grad;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        };
        for ((theta, grad), (m, v)) in p
            .weight
            .as_mut_slice()
            .iter_mut()
            .zip(g.weight.as_slice())
            .zip(
                state.m[k]
                    .weight
                    .as_mut_slice()
                    .iter_mut()
                    .zip(state.v[k].weight.as_mut_slice()),
            )
        {
            update(theta, *grad, m, v);
        }
        for ((theta, grad), (m, v)) in p
            .bias
            .iter_mut()
            .zip(&g.bias)
            .zip(state.m[k].bias.iter_mut().zip(state.v[k].bias.iter_mut()))
        {
            update(theta, *grad, m, v);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpParams::init(&[2, 4, 1], Activation::Tanh, &mut rng)
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut net = small_net(1);
        let before = net.clone();
        let grads = Gradients::zeros_like(&net);
        let mut state = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &grads, &mut state).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_each_param_by_about_lr() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut net = small_net(2);
        let before = net.flatten();
        let mut grads = Gradients::zeros_like(&net);
        for l in &mut grads.layers {
            for v in l.weight.as_mut_slice() {
                *v = 0.3;
            }
            for v in &mut l.bias {
                *v = -0.7;
            }
        }
        let mut state = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &grads, &mut state).unwrap();
        let g = grads.flatten();
        for ((a, b), gi) in before.iter().zip(net.flatten()).zip(g) {
            let step = a - b;
            assert!((step - 1e-3 * gi.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn descends_a_scalar_quadratic() {
        // Minimize (w - 3)^2 for a single 1x1 "network".
        let mut net = MlpParams {
            layers: vec![Dense::zeros(1, 1)],
            activation: Activation::Tanh,
        };
        let mut state = AdamState::new(&net, 0.05);
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let start = loss(net.layers[0].weight.get(0, 0));
        for _ in 0..100 {
            let w = net.layers[0].weight.get(0, 0);
            let mut grads = Gradients::zeros_like(&net);
            grads.layers[0].weight.set(0, 0, 2.0 * (w - 3.0));
            adam_step(&mut net, &grads, &mut state).unwrap();
        }
        let end = loss(net.layers[0].weight.get(0, 0));
        assert!(end < start * 0.05, "loss {start} -> {end}");
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut net = small_net(3);
        let mut grads = Gradients::zeros_like(&net);
        grads.layers[0].weight.set(0, 0, f64::NAN);
        let mut state = AdamState::new(&net, 1e-3);
        let err = adam_step(&mut net, &grads, &mut state).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(state.t, 0);
    }

    #[test]
    fn updates_are_bitwise_deterministic() {
        let run = || {
            let mut net = small_net(4);
            let mut state = AdamState::new(&net, 1e-3);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..10 {
                let mut grads = Gradients::zeros_like(&net);
                for l in &mut grads.layers {
                    for v in l.weight.as_mut_slice() {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                    for v in &mut l.bias {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                }
                adam_step(&mut net, &grads, &mut state).unwrap();
            }
            net.flatten()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn adam_state_survives_json_roundtrip() {
        let net = small_net(5);
        let mut state = AdamState::new(&net, 2e-3);
        state.t = 17;
        let json = serde_json::to_string(&state).unwrap();
        let back: AdamState = serde_json::from_str(&json).unwrap();
        assert_eq!(back.t, 17);
        assert_eq!(back.lr, 2e-3);
        assert_eq!(back.m.len(), state.m.len());
    }
}
