use super::{ModelError, ModelResult, TrainConfig};

/// Running average of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub mean_square: Vec<f64>,
}

impl RmsPropState {
    pub fn new(len: usize) -> Self {
        Self {
            mean_square: vec![0.0; len],
        }
    }
}

/// `v <- decay*v + (1-decay)*g^2; p <- p - lr*g/(sqrt(v)+eps)`, elementwise.
/// Nothing is modified if any gradient is non-finite.
pub fn rmsprop_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut RmsPropState,
    cfg: &TrainConfig,
) -> ModelResult<()> {
    if params.len() != grads.len() || params.len() != state.mean_square.len() {
        return Err(ModelError::Shape(format!(
            "rmsprop: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.mean_square.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(ModelError::NonFinite("gradient"));
    }
    let (rho, lr, eps) = (cfg.rmsprop_decay, cfg.learning_rate, cfg.rmsprop_epsilon);
    for ((p, &g), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.mean_square.iter_mut())
    {
        *v = rho * *v + (1.0 - rho) * g * g;
        *p -= lr * g / (v.sqrt() + eps);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(ModelError::NonFinite("parameter after update"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_state() {
        let mut p = vec![1.0, -2.0];
        let mut s = RmsPropState {
            mean_square: vec![0.5, 0.1],
        };
        rmsprop_step(&mut p, &[0.0, 0.0], &mut s, &cfg(0.1)).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.mean_square, vec![0.9 * 0.5, 0.9 * 0.1]);
    }

    #[test]
    fn scalar_hand_evaluation() {
        let mut p = vec![1.0];
        let mut s = RmsPropState::new(1);
        rmsprop_step(&mut p, &[1.0], &mut s, &cfg(0.1)).unwrap();
        assert!((s.mean_square[0] - 0.1).abs() < 1e-16);
        let expect = 1.0 - 0.1 * 1.0 / (0.1f64.sqrt() + 1e-7);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn repeated_steps_increase_state_toward_g2() {
        let mut p = vec![0.0];
        let mut s = RmsPropState::new(1);
        let mut prev = 0.0;
        for _ in 0..20 {
            rmsprop_step(&mut p, &[2.0], &mut s, &cfg(0.01)).unwrap();
            assert!(s.mean_square[0] > prev && s.mean_square[0] < 4.0);
            prev = s.mean_square[0];
        }
    }

    #[test]
    fn non_finite_gradient_rejected_untouched() {
        let mut p = vec![1.0, 1.0];
        let mut s = RmsPropState::new(2);
        assert!(rmsprop_step(&mut p, &[0.1, f64::NAN], &mut s, &cfg(0.1)).is_err());
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.mean_square, vec![0.0, 0.0]);
    }
}
