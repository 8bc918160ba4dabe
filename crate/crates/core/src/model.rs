//! The assembled model: uni-modal encoders, the two predictive branches, the
//! fusion head, and the batch forward pass that builds every loss on one tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::cmcp::{BranchVars, Cmcp, CmcpParams};
use crate::data::{sentiment_class, Batch, Modality, SentimentClass};
use crate::error::{MmclError, Result};
use crate::head::{Head, HeadParams};
use crate::losses::{
    alignment_loss, cross_instance_loss, cross_instance_loss_all_phases, l2_normalize_rows, regression_loss,
    sentiment_contrastive_loss, sum_vars, uniformity_loss, BranchPair, InfoNceDenominator, LossBreakdown,
    LossWeights, PairingPhase, SentimentForm, UniformityPairs,
};
use crate::params::ParamStore;
use crate::tensor::Matrix;
use crate::umcc::{cutoff_mask, unimodal_instance_loss_seq, EncoderParams, Umcc};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderParams,
    pub cmcp: CmcpParams,
    pub head: HeadParams,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.cmcp.validate()?;
        self.head.validate()
    }
}

/// Switches for the loss/module ablations.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub disable_uni: bool,
    /// drops the cross, alignment and uniformity losses together
    pub disable_icl: bool,
    pub disable_cross: bool,
    pub disable_align: bool,
    pub disable_uniform: bool,
    pub disable_scl: bool,
    pub disable_all_contrast: bool,
    pub replace_transformer_with_linear: bool,
}

/// Which loss components are computed, in `LossBreakdown::NAMES` order after `reg`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnabledLosses {
    pub uni: bool,
    pub sent: bool,
    pub cross: bool,
    pub align: bool,
    pub uniform: bool,
}

impl AblationFlags {
    pub fn enabled(&self) -> EnabledLosses {
        let on = !self.disable_all_contrast;
        let icl = on && !self.disable_icl;
        EnabledLosses {
            uni: on && !self.disable_uni,
            sent: on && !self.disable_scl,
            cross: icl && !self.disable_cross,
            align: icl && !self.disable_align,
            uniform: icl && !self.disable_uniform,
        }
    }
}

impl EnabledLosses {
    /// Names of the logged components, `reg` first.
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = vec!["reg"];
        for (name, on) in [
            ("uni", self.uni),
            ("sent", self.sent),
            ("cross", self.cross),
            ("align", self.align),
            ("uniform", self.uniform),
        ] {
            if on {
                out.push(name);
            }
        }
        out
    }

    pub fn any_contrastive(&self) -> bool {
        self.uni || self.sent || self.cross || self.align || self.uniform
    }
}

/// Modalities whose representations reach the predictive network and the head.
/// A disabled modality's encoded representation is replaced by zeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModalityMask {
    pub use_text: bool,
    pub use_audio: bool,
    pub use_vision: bool,
}

impl Default for ModalityMask {
    fn default() -> Self {
        ModalityMask {
            use_text: true,
            use_audio: true,
            use_vision: true,
        }
    }
}

impl ModalityMask {
    pub fn uses(&self, m: Modality) -> bool {
        match m {
            Modality::Text => self.use_text,
            Modality::Audio => self.use_audio,
            Modality::Vision => self.use_vision,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.use_text || self.use_audio || self.use_vision) {
            return Err(MmclError::config("train.modalities", "at least one modality must be enabled"));
        }
        Ok(())
    }

    /// Short label such as `T+A`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_text {
            parts.push("T");
        }
        if self.use_audio {
            parts.push("A");
        }
        if self.use_vision {
            parts.push("V");
        }
        parts.join("+")
    }
}

/// Compatibility switches selecting alternative loss forms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossVariants {
    pub info_nce: InfoNceDenominator,
    pub uniformity_pairs: UniformityPairs,
    pub sentiment: SentimentForm,
}

/// How the cross-modal loss pairs queries and keys at one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossPairing {
    Phase(PairingPhase),
    Averaged,
}

/// Everything the loss part of a forward pass needs.
#[derive(Clone, Debug)]
pub struct LossPlan {
    pub weights: LossWeights,
    pub enabled: EnabledLosses,
    pub variants: LossVariants,
    pub pairing: CrossPairing,
    /// seed of this step's feature-cutoff draw
    pub augment_seed: u64,
}

/// Outputs of one batch forward pass.
pub struct ForwardOutput {
    /// `[n, 1]`
    pub predictions: Var,
    /// `F_M`, `[n, fusion_dim]`
    pub fused: Var,
    pub losses: Option<LossOutput>,
}

pub struct LossOutput {
    pub total: Var,
    pub breakdown: LossBreakdown,
    /// components that were actually evaluated this step (a disabled or skipped one is absent)
    pub present: [bool; 6],
}

/// The full model with its parameters.
#[derive(Clone, Debug)]
pub struct Mmcl {
    pub config: ModelConfig,
    pub input_dims: [usize; 3],
    pub linear_refiner: bool,
    pub umcc: Umcc,
    pub cmcp: Cmcp,
    pub head: Head,
    pub store: ParamStore,
}

const MODALITIES: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Vision];

fn stack(batch: &Batch<'_>, m: Modality) -> Result<(Matrix, usize)> {
    let first = batch.samples[0].sequence(m);
    let (len, dim) = (first.length(), first.dim());
    let mut data = Vec::with_capacity(batch.size() * len * dim);
    for s in &batch.samples {
        let seq = s.sequence(m);
        if seq.length() != len || seq.dim() != dim {
            return Err(MmclError::validation(format!(
                "sample `{}` has {m:?} shape {:?}, batch expects ({len}, {dim})",
                s.id,
                (seq.length(), seq.dim())
            )));
        }
        data.extend_from_slice(seq.values().as_slice());
    }
    Ok((Matrix::from_vec(batch.size() * len, dim, data)?, len))
}

impl Mmcl {
    /// `input_dims`: raw feature widths (text, audio, vision).
    pub fn new(config: &ModelConfig, input_dims: [usize; 3], linear_refiner: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dims.contains(&0) {
            return Err(MmclError::validation("input feature widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let umcc = Umcc::new(&mut store, &mut rng, input_dims, &config.encoder, linear_refiner)?;
        let refined = [umcc.text.dim(), umcc.audio.out_dim(), umcc.vision.out_dim()];
        let cmcp = Cmcp::new(&mut store, &mut rng, refined, &config.cmcp)?;
        let pred = config.cmcp.cnn_channels;
        let head = Head::new(&mut store, &mut rng, [umcc.text.dim(), pred, pred], &config.head)?;
        Ok(Mmcl {
            config: config.clone(),
            input_dims,
            linear_refiner,
            umcc,
            cmcp,
            head,
            store,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Builds the batch forward pass (and, with a plan, every enabled loss) on `tape`.
    pub fn forward(&self, tape: &mut Tape, batch: &Batch<'_>, mask: &ModalityMask, plan: Option<&LossPlan>) -> Result<ForwardOutput> {
        self.forward_with(&self.store, tape, batch, mask, plan)
    }

    /// As [`Mmcl::forward`], reading parameters from `store` (which must share this model's layout).
    pub fn forward_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        batch: &Batch<'_>,
        mask: &ModalityMask,
        plan: Option<&LossPlan>,
    ) -> Result<ForwardOutput> {
        let n = batch.size();
        if n == 0 {
            return Err(MmclError::validation("empty batch"));
        }
        let mut inputs = Vec::with_capacity(3);
        for m in MODALITIES {
            let (x, len) = stack(batch, m)?;
            if x.cols() != self.input_dims[slot(m)] {
                return Err(MmclError::validation(format!(
                    "{m:?} features have width {}, model expects {}",
                    x.cols(),
                    self.input_dims[slot(m)]
                )));
            }
            inputs.push((tape.constant(x), len));
        }
        let lens = [inputs[0].1, inputs[1].1, inputs[2].1];

        // Uni-modal coding.
        let f_t = self.umcc.text.forward(tape, store, inputs[0].0, lens[0]);
        let t_pooled = self.umcc.text.pool(tape, f_t, lens[0]);
        let mut hidden = [None, None];
        let mut refined = [f_t, f_t, f_t];
        for (i, m) in [Modality::Audio, Modality::Vision].into_iter().enumerate() {
            let enc = self.umcc.recurrent(m)?;
            let (x, len) = inputs[slot(m)];
            let h = enc.bilstm.forward(tape, store, x, len);
            refined[slot(m)] = enc.refiner.forward(tape, store, h, len);
            hidden[i] = Some(h);
        }

        // Zero out the representations of masked modalities.
        let mut cmcp_in = refined;
        for m in MODALITIES {
            if !mask.uses(m) {
                let (r, c) = tape.shape(refined[slot(m)]);
                cmcp_in[slot(m)] = tape.constant(Matrix::zeros(r, c));
            }
        }
        let text_vec = if mask.use_text {
            t_pooled
        } else {
            let (r, c) = tape.shape(t_pooled);
            tape.constant(Matrix::zeros(r, c))
        };

        let branches = self.cmcp.forward(tape, store, cmcp_in, lens)?;
        let [to_v, to_a] = branches;
        let fused = self.head.fuse(tape, store, text_vec, to_a.predicted, to_v.predicted);
        let predictions = self.head.predict(tape, store, fused);

        let losses = match plan {
            None => None,
            Some(plan) => Some(self.losses(store, tape, batch, mask, plan, &refined, &hidden, lens, &branches, predictions)?),
        };
        Ok(ForwardOutput {
            predictions,
            fused,
            losses,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn losses(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        batch: &Batch<'_>,
        mask: &ModalityMask,
        plan: &LossPlan,
        refined: &[Var; 3],
        hidden: &[Option<Var>; 2],
        lens: [usize; 3],
        branches: &[BranchVars; 2],
        predictions: Var,
    ) -> Result<LossOutput> {
        let n = batch.size();
        let w = &plan.weights;
        let en = plan.enabled;
        let labels = batch.labels();
        let label_var = tape.constant(Matrix::from_vec(n, 1, labels.clone())?);
        let reg = regression_loss(tape, predictions, label_var)?;

        // (component index, var, weight)
        let mut terms: Vec<(usize, Var, f64)> = vec![(0, reg, 1.0)];
        let contrastive = n >= 2;

        if en.uni && contrastive {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.augment_seed);
            let mut parts = Vec::new();
            for (i, m) in [Modality::Audio, Modality::Vision].into_iter().enumerate() {
                if !mask.uses(m) {
                    continue;
                }
                let enc = self.umcc.recurrent(m)?;
                let h = hidden[i].expect("recurrent modality has a hidden state");
                let (rows, d) = tape.shape(h);
                let keep = cutoff_mask(rows, d, n, self.config.encoder.cutoff_ratio, self.config.encoder.per_token_cutoff, &mut rng)?;
                let keep = tape.constant(keep);
                let h_aug = tape.mul(h, keep);
                let len = lens[slot(m)];
                let f_aug = enc.refiner.forward(tape, store, h_aug, len);
                parts.push(unimodal_instance_loss_seq(
                    tape,
                    refined[slot(m)],
                    f_aug,
                    len,
                    w.tau,
                    plan.variants.info_nce,
                    self.config.encoder.normalize_pooled,
                )?);
            }
            if !parts.is_empty() {
                terms.push((1, sum_vars(tape, &parts), w.mu));
            }
        }

        // A branch takes part in the predictive losses only when its target and
        // at least one of its fusion inputs are visible.
        let active: Vec<&BranchVars> = branches
            .iter()
            .filter(|b| mask.uses(b.branch.target()) && (mask.use_text || mask.uses(b.branch.source())))
            .collect();
        let needs_pairs = en.cross || en.align || en.uniform || en.sent;
        if needs_pairs && contrastive && !active.is_empty() {
            let mut pairs = Vec::with_capacity(active.len());
            for b in &active {
                pairs.push(BranchPair {
                    predicted: l2_normalize_rows(tape, b.predicted)?,
                    target: l2_normalize_rows(tape, b.target)?,
                });
            }
            if en.sent {
                let classes = labels.iter().map(|&y| sentiment_class(y)).collect::<Result<Vec<SentimentClass>>>()?;
                let both: Vec<SentimentClass> = classes.iter().chain(classes.iter()).copied().collect();
                let mut parts = Vec::new();
                for p in &pairs {
                    let reps = tape.concat_rows(&[p.target, p.predicted]);
                    match sentiment_contrastive_loss(tape, reps, &both, w.tau, plan.variants.sentiment) {
                        Ok(v) => parts.push(v),
                        Err(MmclError::Degenerate(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                if !parts.is_empty() {
                    terms.push((2, sum_vars(tape, &parts), w.eta));
                }
            }
            if en.cross {
                let v = match plan.pairing {
                    CrossPairing::Phase(p) => cross_instance_loss(tape, &pairs, p, w.tau, plan.variants.info_nce)?,
                    CrossPairing::Averaged => cross_instance_loss_all_phases(tape, &pairs, w.tau, plan.variants.info_nce)?,
                };
                terms.push((3, v, w.alpha));
            }
            if en.align {
                let parts = pairs
                    .iter()
                    .map(|p| alignment_loss(tape, p.predicted, p.target, w.lambda))
                    .collect::<Result<Vec<_>>>()?;
                terms.push((4, sum_vars(tape, &parts), w.beta));
            }
            if en.uniform {
                let parts = pairs
                    .iter()
                    .map(|p| uniformity_loss(tape, p.predicted, p.target, w.kappa, plan.variants.uniformity_pairs))
                    .collect::<Result<Vec<_>>>()?;
                terms.push((5, sum_vars(tape, &parts), w.gamma));
            }
        }

        let mut components = [0.0; 6];
        let mut present = [false; 6];
        let mut weighted = Vec::with_capacity(terms.len());
        for &(i, v, weight) in &terms {
            components[i] = tape.scalar(v);
            present[i] = true;
            weighted.push(if weight == 1.0 { v } else { tape.scale(v, weight) });
        }
        let total = sum_vars(tape, &weighted);
        let mut breakdown = crate::losses::total_loss(components, w)?;
        // The tape total and the breakdown agree; keep the exact tape value.
        breakdown.total = tape.scalar(total);
        Ok(LossOutput {
            total,
            breakdown,
            present,
        })
    }

    /// Predictions and fused vectors for a batch, without losses.
    pub fn predict(&self, batch: &Batch<'_>, mask: &ModalityMask) -> Result<(Vec<f64>, Matrix)> {
        let mut tape = Tape::new();
        let out = self.forward_with(&self.store, &mut tape, batch, mask, None)?;
        Ok((tape.value(out.predictions).as_slice().to_vec(), tape.value(out.fused).clone()))
    }
}

fn slot(m: Modality) -> usize {
    match m {
        Modality::Text => 0,
        Modality::Audio => 1,
        Modality::Vision => 2,
    }
}
