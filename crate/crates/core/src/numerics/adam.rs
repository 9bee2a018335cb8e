use serde::{Deserialize, Serialize};

use super::{NumericsError, Scalar};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-5, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments for parameter tensors of the given lengths.
    pub fn new(config: AdamConfig, lens: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }
}

/// One parameter tensor and its gradient, as seen by the optimizer.
pub struct ParamSlot<'a, T> {
    pub name: &'a str,
    pub value: &'a mut [T],
    pub grad: &'a [T],
}

/// Bias-corrected Adam update of every slot.
///
/// Gradients are validated before anything is written, so a non-finite
/// gradient leaves both parameters and state untouched.
pub fn adam_step<T: Scalar>(slots: &mut [ParamSlot<'_, T>], state: &mut AdamState<T>) -> Result<(), NumericsError> {
    if slots.len() != state.m.len() {
        return Err(NumericsError::shape("adam_step", state.m.len(), slots.len()));
    }
    for (slot, m) in slots.iter().zip(&state.m) {
        if slot.value.len() != m.len() || slot.grad.len() != m.len() {
            return Err(NumericsError::shape(
                "adam_step",
                format!("{} elements in `{}`", m.len(), slot.name),
                format!("value {} / grad {}", slot.value.len(), slot.grad.len()),
            ));
        }
        if slot.grad.iter().any(|g| !g.is_finite()) {
            return Err(NumericsError::NonFiniteGradient { param: slot.name.to_string() });
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let step_size = T::from_f64_lossy(cfg.lr / bc1);
    let inv_bc2 = T::from_f64_lossy(1.0 / bc2);
    let eps = T::from_f64_lossy(cfg.epsilon);

    for ((slot, m), v) in slots.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..m.len() {
            let g = slot.grad[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            slot.value[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(value: &mut [f64], grad: &[f64], state: &mut AdamState<f64>) -> Result<(), NumericsError> {
        let mut slots = [ParamSlot { name: "p", value, grad }];
        adam_step(&mut slots, state)
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 3.0];
        step(&mut p, &[0.0; 3], &mut state).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_is_a_sign_step() {
        let cfg = AdamConfig::default();
        for g in [0.1, 2.5, 1e-3] {
            let mut state = AdamState::new(cfg, &[1]);
            let mut p = vec![0.0];
            step(&mut p, &[g], &mut state).unwrap();
            let closed_form = -cfg.lr * g / (g.abs() + cfg.epsilon);
            assert!((p[0] - closed_form).abs() < 1e-15, "{} vs {closed_form}", p[0]);
            assert!((p[0] + cfg.lr).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let cfg = AdamConfig { lr: 0.0, ..Default::default() };
        let mut state = AdamState::new(cfg, &[2]);
        let mut p = vec![0.5, 0.25];
        for _ in 0..3 {
            step(&mut p, &[1.0, -4.0], &mut state).unwrap();
        }
        assert_eq!(p, vec![0.5, 0.25]);
        assert_eq!(state.step, 3);
    }

    #[test]
    fn non_finite_gradient_names_tensor_and_leaves_state() {
        let mut state = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0, 0.0];
        let err = step(&mut p, &[1.0, f64::NAN], &mut state).unwrap_err();
        assert!(err.to_string().contains("`p`"));
        assert_eq!(state.step, 0);
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn second_moment_stays_non_negative() {
        let mut state = AdamState::new(AdamConfig::default(), &[4]);
        let mut p = vec![0.0; 4];
        for i in 0..20 {
            let g: Vec<f64> = (0..4).map(|j| ((i * 4 + j) as f64).sin()).collect();
            step(&mut p, &g, &mut state).unwrap();
        }
        assert!(state.v[0].iter().all(|&v| v >= 0.0));
    }
}
