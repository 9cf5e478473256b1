use crate::error::{Error, Result};
use crate::image_io::PixelRange;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon.is_finite()
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Tensor<T>,
    v: Tensor<T>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(like: &Tensor<T>) -> Self {
        AdamState {
            m: Tensor::zeros_like(like),
            v: Tensor::zeros_like(like),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &Tensor<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &Tensor<T> {
        &self.v
    }
}

/// One bias-corrected Adam update applied in place, optionally followed by
/// clamping an `N x 3 x H x W` image to `clamp`.
pub fn adam_update<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    clamp: Option<&PixelRange>,
) -> Result<()> {
    param.expect_same_shape(grad, "adam_step")?;
    param.expect_same_shape(&state.m, "adam_step")?;
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let channel_of = match clamp {
        Some(_) => {
            let (_, c, h, w) = param.dims4("adam_step")?;
            if c != 3 {
                return Err(Error::shape("adam_step", format!("pixel clamp needs 3 channels, got {:?}", param.shape())));
            }
            Some(move |i: usize| (i / (h * w)) % c)
        }
        None => None,
    };
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        let g = g.wide();
        let mi = cfg.beta1 * m[i].wide() + (1.0 - cfg.beta1) * g;
        let vi = cfg.beta2 * v[i].wide() + (1.0 - cfg.beta2) * g * g;
        m[i] = T::of(mi);
        v[i] = T::of(vi);
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        let mut next = p.wide() - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        if let (Some(range), Some(ch)) = (clamp, &channel_of) {
            let c = ch(i);
            next = next.clamp(range.lo[c], range.hi[c]);
        }
        *p = T::of(next);
    }
    if param.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "adam_step" });
    }
    Ok(())
}

/// Functional form of [`adam_update`]: returns the updated image.
pub fn adam_step<T: Scalar>(
    image: &Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    clamp: Option<&PixelRange>,
) -> Result<Tensor<T>> {
    let mut next = image.clone();
    adam_update(&mut next, grad, state, cfg, clamp)?;
    Ok(next)
}
