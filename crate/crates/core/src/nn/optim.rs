use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};

use super::{clip_grad_norm, scalar};
use crate::{Error, Result};

/// Adam over a fixed set of variables with global-norm clipping.
pub struct Trainer {
    opt: AdamW,
    vars: Vec<Var>,
    clip: f64,
}

impl Trainer {
    pub fn new(vars: Vec<Var>, name: &str, lr: f64, clip: f64) -> Result<Self> {
        if name != "adam" {
            return Err(Error::Config(format!("unsupported optimizer `{name}` (only adam)")));
        }
        let params = ParamsAdamW {
            lr,
            weight_decay: 0.0,
            ..ParamsAdamW::default()
        };
        Ok(Trainer {
            opt: AdamW::new(vars.clone(), params)?,
            vars,
            clip,
        })
    }

    /// Backpropagates `loss`, clips, applies one update and returns the loss value.
    pub fn step(&mut self, loss: &Tensor) -> Result<f64> {
        let value = scalar(loss)?;
        if !value.is_finite() {
            return Err(Error::Data(format!("non-finite training loss {value}")));
        }
        let mut grads = loss.backward()?;
        clip_grad_norm(&mut grads, &self.vars, self.clip)?;
        self.opt.step(&grads)?;
        Ok(value)
    }
}
