use crate::autodiff::Matrix;
use crate::error::{Error, Result};

fn check_aligned(op: &'static str, params: &[&mut Matrix], grads: &[Matrix]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(op, (params.len(), 1), (grads.len(), 1)));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape(op, p.shape(), g.shape()));
        }
    }
    Ok(())
}

/// `θ ← θ − lr·g` for every parameter.
pub fn sgd_step(params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
    check_aligned("sgd_step", params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        p.scaled_add_assign(g, -lr);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the registry.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
}

impl AdamMoments {
    pub fn zeros_like(params: &[&Matrix]) -> Self {
        let z: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        AdamMoments {
            first: z.clone(),
            second: z,
        }
    }
}

/// Bias-corrected Adam update at step `t` (1-based).
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    moments: &mut AdamMoments,
    lr: f64,
    t: usize,
    settings: AdamSettings,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Usage("adam step index starts at 1".into()));
    }
    check_aligned("adam_step", params, grads)?;
    if moments.first.len() != grads.len() || moments.second.len() != grads.len() {
        return Err(Error::shape("adam_step moments", (moments.first.len(), 1), (grads.len(), 1)));
    }
    let AdamSettings { beta1, beta2, eps } = settings;
    let bias1 = 1.0 - beta1.powi(t as i32);
    let bias2 = 1.0 - beta2.powi(t as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut moments.first[i], &mut moments.second[i]);
        if m.shape() != g.shape() || v.shape() != g.shape() {
            return Err(Error::shape("adam_step moments", m.shape(), g.shape()));
        }
        let pv = p.values_mut();
        for (k, gk) in g.values().iter().enumerate() {
            let mk = &mut m.values_mut()[k];
            *mk = beta1 * *mk + (1.0 - beta1) * gk;
            let m_hat = *mk / bias1;
            let vk = &mut v.values_mut()[k];
            *vk = beta2 * *vk + (1.0 - beta2) * gk * gk;
            let v_hat = *vk / bias2;
            pv[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
