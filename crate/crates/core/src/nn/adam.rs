use super::params::{Gradients, NetParams};
use super::NnError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates and step count for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl OptState {
    pub fn new(params: &NetParams) -> Self {
        Self {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &Gradients {
        &self.m
    }

    pub fn second_moment(&self) -> &Gradients {
        &self.v
    }
}

/// One bias-corrected Adam update, in place.
///
/// Non-finite gradients are rejected before anything is modified.
pub fn adam_step(
    params: &mut NetParams,
    grads: &Gradients,
    state: &mut OptState,
    lr: f64,
) -> Result<(), NnError> {
    if !grads.is_congruent(params) || !state.m.is_congruent(params) {
        return Err(NnError::Shape("gradients or optimizer state do not match params".into()));
    }
    if !grads.is_finite() {
        return Err(NnError::NonFiniteGradient);
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    };

    for (((p, g), m), v) in params
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut())
        .zip(state.v.layers.iter_mut())
    {
        update(
            p.weight.as_mut_slice(),
            g.weight.as_slice(),
            m.weight.as_mut_slice(),
            v.weight.as_mut_slice(),
        );
        update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::Matrix;
    use crate::nn::params::Layer;

    fn scalar(w: f64) -> NetParams {
        NetParams::from_layers(vec![Layer {
            weight: Matrix::from_vec(1, 1, vec![w]),
            bias: vec![0.0],
        }])
        .unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(&scalar(0.0));
        grads.layers[0].weight.set(0, 0, g);
        grads
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = NetParams::init(&[3, 4, 2], 9).unwrap();
        let before = p.clone();
        let mut st = OptState::new(&p);
        let g = Gradients::zeros_like(&p);
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t=1: m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
        let mut p = scalar(1.0);
        let mut st = OptState::new(&p);
        adam_step(&mut p, &scalar_grad(1.0), &mut st, 0.1).unwrap();
        let w = p.layers()[0].weight.get(0, 0);
        let want = 1.0 - 0.1 * 1.0 / (1.0 + EPSILON);
        assert_eq!(w, want);
        assert!((w - 0.9).abs() < 1e-8);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn recurrence_matches_hand_evaluation_for_two_steps() {
        let mut p = scalar(0.5);
        let mut st = OptState::new(&p);
        adam_step(&mut p, &scalar_grad(2.0), &mut st, 0.01).unwrap();
        adam_step(&mut p, &scalar_grad(-1.0), &mut st, 0.01).unwrap();

        let (mut w, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for (t, g) in [(1.0f64, 2.0f64), (2.0, -1.0)] {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powf(t));
            let vh = v / (1.0 - 0.999f64.powf(t));
            w -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.layers()[0].weight.get(0, 0) - w).abs() < 1e-15);
    }

    #[test]
    fn deterministic() {
        let p0 = NetParams::init(&[2, 3, 1], 1).unwrap();
        let mut g = Gradients::zeros_like(&p0);
        g.layers[1].weight.set(0, 2, 0.7);
        let (mut a, mut b) = (p0.clone(), p0.clone());
        let (mut sa, mut sb) = (OptState::new(&p0), OptState::new(&p0));
        adam_step(&mut a, &g, &mut sa, 0.05).unwrap();
        adam_step(&mut b, &g, &mut sb, 0.05).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = scalar(1.0);
        let mut st = OptState::new(&p);
        let err = adam_step(&mut p, &scalar_grad(f64::NAN), &mut st, 0.1).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient));
        assert_eq!(st.step_count(), 0);
        assert_eq!(p, scalar(1.0));
    }
}
