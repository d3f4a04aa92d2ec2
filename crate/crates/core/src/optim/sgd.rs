use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::groups::{GroupElement, TangentVector};

/// Tangent-space SGD with momentum and an exponentially decaying step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Per-step multiplier of the learning rate.
    pub decay: f64,
    pub steps: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.0,
            decay: 1.0,
            steps: 1000,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        Ok(())
    }

    /// `lr * decay^step`
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.decay.powi(step as i32)
    }
}

/// Momentum buffers, one per variable.
#[derive(Clone, Debug)]
pub struct SgdState {
    buffers: Vec<DVector<f64>>,
}

impl SgdState {
    pub fn new(vars: &[GroupElement]) -> Self {
        Self {
            buffers: vars
                .iter()
                .map(|x| DVector::zeros(x.kind().tangent_dim()))
                .collect(),
        }
    }

    pub fn buffers(&self) -> &[DVector<f64>] {
        &self.buffers
    }
}

/// One update `m <- mu m + g; X <- Exp(-lr_step m) X`.
pub fn sgd_step(
    vars: &mut [GroupElement],
    grads: &[DVector<f64>],
    state: &mut SgdState,
    cfg: &SgdConfig,
    step: usize,
) -> Result<()> {
    if grads.len() != vars.len() || state.buffers.len() != vars.len() {
        return Err(Error::DimensionMismatch {
            expected: vars.len(),
            found: grads.len().min(state.buffers.len()),
        });
    }
    let lr = cfg.lr_at(step);
    for ((x, g), m) in vars.iter_mut().zip(grads).zip(&mut state.buffers) {
        if g.len() != m.len() {
            return Err(Error::DimensionMismatch {
                expected: m.len(),
                found: g.len(),
            });
        }
        *m *= cfg.momentum;
        *m += g;
        let delta = TangentVector::new(x.kind(), &*m * -lr)?;
        *x = x.oplus(&delta)?;
    }
    Ok(())
}
