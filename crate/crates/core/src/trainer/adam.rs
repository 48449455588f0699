use super::TrainError;
use crate::encoder::{EncoderParams, GradientBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: EncoderParams,
    pub second_moment: EncoderParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &GradientBundle,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) || !params.same_shape(&state.second_moment) {
        return Err(TrainError::Shape("gradient or optimizer state does not match parameters".into()));
    }
    if let Some((i, g)) = grads.values().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient {
            step: state.step + 1,
            index: i,
            value: g,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let p_slices = params.slices_mut();
    let g_slices = grads.slices();
    let m_slices = state.first_moment.slices_mut();
    let v_slices = state.second_moment.slices_mut();
    for (((p, g), m), v) in p_slices.into_iter().zip(g_slices).zip(m_slices).zip(v_slices) {
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
