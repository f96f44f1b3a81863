use crate::error::contract;
use crate::Result;

/// First/second moment accumulators for Adam, one buffer per parameter
/// tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state shaped like `params`, with the usual `0.9 / 0.999 / 1e-8`.
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(lr: f64, params: &[&mut [f64]]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(lr, &shapes)
    }
}

/// One bias-corrected Adam update. Increments `state.step`.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(contract("parameter, gradient and moment tensor counts differ"));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(contract("parameter and gradient shapes differ"));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - state.beta1.powf(t);
    let c2 = 1.0 - state.beta2.powf(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut state = AdamState::new(0.1, &[3]);
        adam_step(&mut [p.as_mut_slice()], &[&[0.0, 0.0, 0.0]], &mut state).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // m_hat = g, v_hat = g^2 after correction, so the step is lr * g / (|g| + eps).
        let lr = 0.01;
        let g = [0.3, -4.0];
        let mut p = vec![0.0, 0.0];
        let mut state = AdamState::new(lr, &[2]);
        adam_step(&mut [p.as_mut_slice()], &[&g], &mut state).unwrap();
        for (pi, gi) in p.iter().zip(g) {
            let expect = -lr * gi / (gi.abs() + 1e-8);
            assert!((pi - expect).abs() < 1e-15);
            assert!((pi.abs() - lr).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectories_are_deterministic() {
        let run = || {
            let mut p = vec![1.0, 2.0];
            let mut state = AdamState::new(0.05, &[2]);
            for k in 0..20 {
                let g = [p[0] - 0.3 * k as f64, 2.0 * p[1]];
                adam_step(&mut [p.as_mut_slice()], &[&g], &mut state).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![0.0; 2];
        let mut state = AdamState::new(0.1, &[2]);
        assert!(adam_step(&mut [p.as_mut_slice()], &[&[1.0]], &mut state).is_err());
    }
}
