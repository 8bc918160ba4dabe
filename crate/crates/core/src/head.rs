//! Multimodal fusion of the pooled text vector with both predicted
//! representations, followed by the regression output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{MmclError, Result};
use crate::nn::{Activation, Init, Linear, Mlp};
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadParams {
    pub fusion_dim: usize,
    pub fusion_hidden: usize,
}

impl Default for HeadParams {
    fn default() -> Self {
        HeadParams {
            fusion_dim: 64,
            fusion_hidden: 64,
        }
    }
}

impl HeadParams {
    pub fn validate(&self) -> Result<()> {
        if self.fusion_dim == 0 {
            return Err(MmclError::config("head.fusion_dim", "must be positive"));
        }
        if self.fusion_hidden == 0 {
            return Err(MmclError::config("head.fusion_hidden", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Head {
    /// widths of the pooled text vector and of each predicted representation
    pub part_dims: [usize; 3],
    pub fusion: Mlp,
    pub output: Linear,
}

impl Head {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, part_dims: [usize; 3], p: &HeadParams) -> Result<Self> {
        p.validate()?;
        let mut init = Init {
            store,
            rng,
            group: ParamGroup::Other,
        };
        let in_dim = part_dims.iter().sum();
        Ok(Head {
            part_dims,
            fusion: Mlp::new(&mut init, "head.fusion", in_dim, p.fusion_hidden, p.fusion_dim, Activation::Tanh),
            output: Linear::new(&mut init, "head.output", p.fusion_dim, 1),
        })
    }

    pub fn fusion_dim(&self) -> usize {
        self.fusion.second.out_dim
    }

    /// `F_M` for a batch: `[n, fusion_dim]`.
    pub fn fuse(&self, tape: &mut Tape, store: &ParamStore, text: Var, audio_pred: Var, vision_pred: Var) -> Var {
        let cat = tape.concat_cols(&[text, audio_pred, vision_pred]);
        self.fusion.forward(tape, store, cat)
    }

    /// `[n, fusion_dim] -> [n, 1]`.
    pub fn predict(&self, tape: &mut Tape, store: &ParamStore, fused: Var) -> Var {
        self.output.forward(tape, store, fused)
    }

    pub fn fuse_multimodal(&self, store: &ParamStore, text: &[f64], audio_pred: &[f64], vision_pred: &[f64]) -> Result<Vec<f64>> {
        let parts = [text, audio_pred, vision_pred];
        for (i, (part, &want)) in parts.iter().zip(&self.part_dims).enumerate() {
            if part.len() != want {
                return Err(MmclError::validation(format!(
                    "fusion input {i} has width {}, expected {want}",
                    part.len()
                )));
            }
            if part.iter().any(|v| !v.is_finite()) {
                return Err(MmclError::validation(format!("fusion input {i} is not finite")));
            }
        }
        let mut tape = Tape::new();
        let [t, a, v] = parts.map(|p| tape.constant(Matrix::row_vector(p)));
        let f = self.fuse(&mut tape, store, t, a, v);
        Ok(tape.value(f).as_slice().to_vec())
    }

    pub fn predict_sentiment(&self, store: &ParamStore, fused: &[f64]) -> Result<f64> {
        if fused.len() != self.fusion_dim() {
            return Err(MmclError::validation(format!(
                "expected a {}-dim fused vector, got {}",
                self.fusion_dim(),
                fused.len()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(fused));
        let y = self.predict(&mut tape, store, x);
        Ok(tape.scalar(y))
    }
}
