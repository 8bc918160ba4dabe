//! Uni-modal contrastive coding: per-modality encoders, feature cutoff and the
//! uni-modal instance loss.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::data::{Modality, ModalitySequence};
use crate::error::{MmclError, Result};
use crate::losses::{info_nce, l2_normalize_rows, InfoNceDenominator};
use crate::nn::{sinusoidal_positions, BiLstm, Init, Linear, TransformerEncoder};
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Matrix;

/// How the text sequence is reduced to one vector for the fusion head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextPooling {
    #[default]
    First,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderParams {
    pub text_dim: usize,
    pub text_layers: usize,
    pub text_heads: usize,
    pub text_ff_dim: usize,
    pub text_pooling: TextPooling,
    pub audio_hidden: usize,
    pub vision_hidden: usize,
    pub transformer_layers: usize,
    pub transformer_heads: usize,
    pub cutoff_ratio: f64,
    /// Draw a fresh column set for every token instead of one set per sequence.
    pub per_token_cutoff: bool,
    /// Project pooled vectors to unit length before the instance loss.
    pub normalize_pooled: bool,
}

impl Default for EncoderParams {
    fn default() -> Self {
        EncoderParams {
            text_dim: 32,
            text_layers: 1,
            text_heads: 4,
            text_ff_dim: 64,
            text_pooling: TextPooling::First,
            audio_hidden: 8,
            vision_hidden: 8,
            transformer_layers: 3,
            transformer_heads: 8,
            cutoff_ratio: 0.2,
            per_token_cutoff: false,
            normalize_pooled: true,
        }
    }
}

impl EncoderParams {
    pub fn hidden(&self, m: Modality) -> usize {
        match m {
            Modality::Audio => self.audio_hidden,
            Modality::Vision => self.vision_hidden,
            Modality::Text => self.text_dim / 2,
        }
    }

    /// Width of `F_u` for a recurrent modality.
    pub fn refined_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Text => self.text_dim,
            _ => 2 * self.hidden(m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("encoder.text_dim", self.text_dim),
            ("encoder.text_layers", self.text_layers),
            ("encoder.text_heads", self.text_heads),
            ("encoder.text_ff_dim", self.text_ff_dim),
            ("encoder.audio_hidden", self.audio_hidden),
            ("encoder.vision_hidden", self.vision_hidden),
            ("encoder.transformer_layers", self.transformer_layers),
            ("encoder.transformer_heads", self.transformer_heads),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(MmclError::config(field, "must be positive"));
            }
        }
        if self.text_dim % self.text_heads != 0 {
            return Err(MmclError::config("encoder.text_heads", "must divide encoder.text_dim"));
        }
        for m in [Modality::Audio, Modality::Vision] {
            if self.refined_dim(m) % self.transformer_heads != 0 {
                return Err(MmclError::config(
                    "encoder.transformer_heads",
                    format!("must divide the {m:?} encoder width {}", self.refined_dim(m)),
                ));
            }
        }
        if !(self.cutoff_ratio > 0.0 && self.cutoff_ratio < 1.0) {
            return Err(MmclError::config("encoder.cutoff_ratio", "must lie in (0, 1)"));
        }
        for m in [Modality::Audio, Modality::Vision] {
            cutoff_count(self.refined_dim(m), self.cutoff_ratio)?;
        }
        Ok(())
    }
}

/// One modality's encoder outputs for a single sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct UniModalEncoding {
    pub modality: Modality,
    /// `h_u` for audio/vision, `F_t` for text
    pub hidden: Matrix,
    pub refined: Matrix,
    pub refined_aug: Option<Matrix>,
    /// Text only: the vector used by the fusion head.
    pub pooled: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub input: Linear,
    pub encoder: TransformerEncoder,
    pub pooling: TextPooling,
}

impl TextEncoder {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, input_dim: usize, p: &EncoderParams) -> Self {
        TextEncoder {
            input: Linear::new(init, "text.input", input_dim, p.text_dim),
            encoder: TransformerEncoder::new(init, "text.encoder", p.text_dim, p.text_layers, p.text_heads, p.text_ff_dim),
            pooling: p.text_pooling,
        }
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim
    }

    /// `[n*L, d_in] -> [n*L, text_dim]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq_len: usize) -> Var {
        let n = tape.shape(x).0 / seq_len;
        let h = self.input.forward(tape, store, x);
        let table = sinusoidal_positions(seq_len, self.dim());
        let pos = Matrix::from_fn(n * seq_len, self.dim(), |r, c| table.get(r % seq_len, c));
        let pos = tape.constant(pos);
        let h = tape.add(h, pos);
        self.encoder.forward(tape, store, h, seq_len)
    }

    /// `[n*L, d] -> [n, d]`.
    pub fn pool(&self, tape: &mut Tape, f: Var, seq_len: usize) -> Var {
        match self.pooling {
            TextPooling::First => {
                let n = tape.shape(f).0 / seq_len;
                let rows: Vec<usize> = (0..n).map(|s| s * seq_len).collect();
                tape.gather_rows(f, &rows)
            }
            TextPooling::Mean => tape.mean_segments(f, seq_len),
        }
    }
}

/// The block applied after the recurrent encoder; a plain linear layer in the
/// transformer-replacement ablation.
#[derive(Clone, Debug)]
pub enum Refiner {
    Transformer(TransformerEncoder),
    Linear(Linear),
}

impl Refiner {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq_len: usize) -> Var {
        match self {
            Refiner::Transformer(t) => t.forward(tape, store, x, seq_len),
            Refiner::Linear(l) => l.forward(tape, store, x),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecurrentEncoder {
    pub modality: Modality,
    pub bilstm: BiLstm,
    pub refiner: Refiner,
}

impl RecurrentEncoder {
    pub fn new<R: Rng>(
        init: &mut Init<'_, R>,
        modality: Modality,
        input_dim: usize,
        p: &EncoderParams,
        linear_refiner: bool,
    ) -> Self {
        let name = format!("{}.", modality_name(modality));
        let hidden = p.hidden(modality);
        let bilstm = BiLstm::new(init, &format!("{name}bilstm"), input_dim, hidden);
        let d = bilstm.out_dim();
        let refiner = if linear_refiner {
            Refiner::Linear(Linear::new(init, &format!("{name}refiner"), d, d))
        } else {
            Refiner::Transformer(TransformerEncoder::new(
                init,
                &format!("{name}transformer"),
                d,
                p.transformer_layers,
                p.transformer_heads,
                2 * d,
            ))
        };
        RecurrentEncoder {
            modality,
            bilstm,
            refiner,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.bilstm.forward.input_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bilstm.out_dim()
    }
}

pub(crate) fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Text => "text",
        Modality::Audio => "audio",
        Modality::Vision => "vision",
    }
}

/// All uni-modal encoders of the model.
#[derive(Clone, Debug)]
pub struct Umcc {
    pub params: EncoderParams,
    pub text: TextEncoder,
    pub audio: RecurrentEncoder,
    pub vision: RecurrentEncoder,
}

impl Umcc {
    /// `input_dims` are the raw feature widths in text, audio, vision order.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        input_dims: [usize; 3],
        params: &EncoderParams,
        linear_refiner: bool,
    ) -> Result<Self> {
        params.validate()?;
        let text = TextEncoder::new(
            &mut Init {
                store,
                rng,
                group: ParamGroup::TextEncoder,
            },
            input_dims[0],
            params,
        );
        let mut init = Init {
            store,
            rng,
            group: ParamGroup::Other,
        };
        let audio = RecurrentEncoder::new(&mut init, Modality::Audio, input_dims[1], params, linear_refiner);
        let vision = RecurrentEncoder::new(&mut init, Modality::Vision, input_dims[2], params, linear_refiner);
        Ok(Umcc {
            params: params.clone(),
            text,
            audio,
            vision,
        })
    }

    pub fn recurrent(&self, m: Modality) -> Result<&RecurrentEncoder> {
        match m {
            Modality::Audio => Ok(&self.audio),
            Modality::Vision => Ok(&self.vision),
            Modality::Text => Err(MmclError::validation("text has no recurrent encoder")),
        }
    }

    fn check_input(seq: &ModalitySequence, expected: Modality, dim: usize) -> Result<()> {
        if seq.modality() != expected {
            return Err(MmclError::validation(format!(
                "expected a {expected:?} sequence, got {:?}",
                seq.modality()
            )));
        }
        if seq.dim() != dim {
            return Err(MmclError::validation(format!(
                "{expected:?} features have width {}, encoder expects {dim}",
                seq.dim()
            )));
        }
        Ok(())
    }

    /// Encodes one text sequence; `hidden` and `refined` both hold `F_t`.
    pub fn encode_text(&self, store: &ParamStore, seq: &ModalitySequence) -> Result<UniModalEncoding> {
        Self::check_input(seq, Modality::Text, self.text.input.in_dim)?;
        let mut tape = Tape::new();
        let x = tape.constant(seq.values().clone());
        let f = self.text.forward(&mut tape, store, x, seq.length());
        let pooled = self.text.pool(&mut tape, f, seq.length());
        let f = tape.value(f).clone();
        Ok(UniModalEncoding {
            modality: Modality::Text,
            hidden: f.clone(),
            refined: f,
            refined_aug: None,
            pooled: Some(tape.value(pooled).as_slice().to_vec()),
        })
    }

    /// Bi-directional recurrent encoding `h_u`, `(L, 2*hidden)`.
    pub fn encode_recurrent(&self, store: &ParamStore, seq: &ModalitySequence) -> Result<Matrix> {
        let enc = self.recurrent(seq.modality())?;
        Self::check_input(seq, enc.modality, enc.input_dim())?;
        let mut tape = Tape::new();
        let x = tape.constant(seq.values().clone());
        let h = enc.bilstm.forward(&mut tape, store, x, seq.length());
        Ok(tape.value(h).clone())
    }

    /// Applies the modality's refiner (shared between original and augmented inputs).
    pub fn unimodal_transformer(&self, store: &ParamStore, h: &Matrix, modality: Modality) -> Result<Matrix> {
        let enc = self.recurrent(modality)?;
        if h.cols() != enc.out_dim() || h.rows() == 0 {
            return Err(MmclError::validation(format!(
                "refiner expects (L>0, {}) input, got {:?}",
                enc.out_dim(),
                h.shape()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(h.clone());
        let f = enc.refiner.forward(&mut tape, store, x, h.rows());
        Ok(tape.value(f).clone())
    }

    /// Full uni-modal encoding of one audio or vision sequence with a cutoff view.
    pub fn encode_with_cutoff(&self, store: &ParamStore, seq: &ModalitySequence, seed: u64) -> Result<UniModalEncoding> {
        let h = self.encode_recurrent(store, seq)?;
        let h_aug = feature_cutoff(&h, self.params.cutoff_ratio, seed)?;
        Ok(UniModalEncoding {
            modality: seq.modality(),
            refined: self.unimodal_transformer(store, &h, seq.modality())?,
            refined_aug: Some(self.unimodal_transformer(store, &h_aug, seq.modality())?),
            hidden: h,
            pooled: None,
        })
    }
}

/// Number of columns zeroed by the cutoff, `floor(ratio * d)`.
pub fn cutoff_count(d: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(MmclError::config("encoder.cutoff_ratio", format!("{ratio} is outside (0, 1)")));
    }
    let k = (ratio * d as f64).floor() as usize;
    if k == 0 {
        return Err(MmclError::config(
            "encoder.cutoff_ratio",
            format!("ratio {ratio} zeroes no column of a width-{d} representation"),
        ));
    }
    Ok(k)
}

/// Zeroes `floor(ratio*d)` randomly chosen columns of `h` in every row.
pub fn feature_cutoff(h: &Matrix, ratio: f64, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = cutoff_mask(h.rows(), h.cols(), 1, ratio, false, &mut rng)?;
    Ok(Matrix::from_fn(h.rows(), h.cols(), |r, c| h.get(r, c) * mask.get(r, c)))
}

/// 0/1 keep-mask for `n` stacked sequences of `seq_len` rows and width `d`.
/// Each sequence draws its own column set (or each token, when `per_token`).
pub fn cutoff_mask<R: Rng>(
    rows: usize,
    d: usize,
    seq_count: usize,
    ratio: f64,
    per_token: bool,
    rng: &mut R,
) -> Result<Matrix> {
    let k = cutoff_count(d, ratio)?;
    if seq_count == 0 || rows % seq_count != 0 {
        return Err(MmclError::validation(format!("{rows} rows do not split into {seq_count} sequences")));
    }
    let seq_len = rows / seq_count;
    let mut mask = Matrix::filled(rows, d, 1.0);
    let zero_row = |mask: &mut Matrix, r: usize, cols: &[usize]| {
        for &c in cols {
            mask.set(r, c, 0.0);
        }
    };
    for s in 0..seq_count {
        if per_token {
            for t in 0..seq_len {
                let cols = sample(rng, d, k).into_vec();
                zero_row(&mut mask, s * seq_len + t, &cols);
            }
        } else {
            let cols = sample(rng, d, k).into_vec();
            for t in 0..seq_len {
                zero_row(&mut mask, s * seq_len + t, &cols);
            }
        }
    }
    Ok(mask)
}

/// Instance loss between mean-pooled original and augmented sequences, each `[n*L, d]`.
pub fn unimodal_instance_loss_seq(
    tape: &mut Tape,
    refined: Var,
    refined_aug: Var,
    seq_len: usize,
    tau: f64,
    denom: InfoNceDenominator,
    normalize: bool,
) -> Result<Var> {
    let mut q = tape.mean_segments(refined, seq_len);
    let mut k = tape.mean_segments(refined_aug, seq_len);
    if normalize {
        q = l2_normalize_rows(tape, q)?;
        k = l2_normalize_rows(tape, k)?;
    }
    info_nce(tape, q, k, tau, denom)
}

/// Instance loss over already pooled vectors (`[n, d]` each), standard InfoNCE.
pub fn unimodal_instance_loss(pooled: &Matrix, pooled_aug: &Matrix, tau: f64) -> Result<f64> {
    crate::losses::info_nce_value(pooled, pooled_aug, tau, InfoNceDenominator::Standard)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(linear: bool) -> (Umcc, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = Umcc::new(&mut store, &mut rng, [6, 4, 3], &EncoderParams::default(), linear).unwrap();
        (u, store)
    }

    fn seq(m: Modality, l: usize, d: usize, seed: u64) -> ModalitySequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModalitySequence::new(m, Matrix::from_fn(l, d, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn text_shapes_and_order_sensitivity() {
        let (u, store) = build(false);
        let s = seq(Modality::Text, 8, 6, 1);
        let e = u.encode_text(&store, &s).unwrap();
        assert_eq!(e.refined.shape(), (8, 32));
        assert_eq!(e.pooled.as_ref().unwrap().len(), 32);
        assert_eq!(e, u.encode_text(&store, &s).unwrap());

        let two = Matrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.5, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0, -0.5, 0.0]]).unwrap();
        let swapped = Matrix::from_rows(&[two.row(1).to_vec(), two.row(0).to_vec()]).unwrap();
        let a = u.encode_text(&store, &ModalitySequence::new(Modality::Text, two).unwrap()).unwrap();
        let b = u.encode_text(&store, &ModalitySequence::new(Modality::Text, swapped).unwrap()).unwrap();
        // Without positions the outputs would be row-swapped copies of each other.
        let swapped_back = Matrix::from_rows(&[b.refined.row(1).to_vec(), b.refined.row(0).to_vec()]).unwrap();
        assert!(a.refined.max_abs_diff(&swapped_back) > 1e-6);
    }

    #[test]
    fn recurrent_shape_and_wrong_modality() {
        let (u, store) = build(false);
        let h = u.encode_recurrent(&store, &seq(Modality::Audio, 5, 4, 2)).unwrap();
        assert_eq!(h.shape(), (5, 16));
        assert!(h.as_slice().iter().all(|v| v.abs() < 1.0));
        assert!(u.encode_recurrent(&store, &seq(Modality::Text, 5, 6, 2)).is_err());
        assert!(u.encode_recurrent(&store, &seq(Modality::Audio, 5, 3, 2)).is_err());
    }

    #[test]
    fn bilstm_reversal_symmetry() {
        // Swapping the two directions' weights and reversing time mirrors the output.
        let (u, mut store) = build(false);
        let s = seq(Modality::Vision, 3, 3, 4);
        let h = u.encode_recurrent(&store, &s).unwrap();
        let (f, b) = (&u.vision.bilstm.forward, &u.vision.bilstm.backward);
        for (x, y) in [(f.input_weight, b.input_weight), (f.hidden_weight, b.hidden_weight), (f.bias, b.bias)] {
            let tmp = store.get(x).clone();
            *store.get_mut(x) = store.get(y).clone();
            *store.get_mut(y) = tmp;
        }
        let rev = Matrix::from_fn(3, 3, |r, c| s.values().get(2 - r, c));
        let hr = u.encode_recurrent(&store, &ModalitySequence::new(Modality::Vision, rev).unwrap()).unwrap();
        for t in 0..3 {
            for c in 0..8 {
                assert!((hr.get(2 - t, c) - h.get(t, c + 8)).abs() < 1e-14);
                assert!((hr.get(2 - t, c + 8) - h.get(t, c)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn refiner_shapes_and_identity_view() {
        for linear in [false, true] {
            let (u, store) = build(linear);
            let e = u.encode_with_cutoff(&store, &seq(Modality::Audio, 5, 4, 3), 9).unwrap();
            assert_eq!(e.refined.shape(), (5, 16));
            assert_eq!(e.refined_aug.as_ref().unwrap().shape(), (5, 16));
            let again = u.unimodal_transformer(&store, &e.hidden, Modality::Audio).unwrap();
            assert_eq!(again, e.refined);
            assert!(u.unimodal_transformer(&store, &Matrix::zeros(5, 15), Modality::Audio).is_err());
        }
    }

    #[test]
    fn cutoff_zeroes_shared_columns() {
        let h = Matrix::from_fn(4, 10, |r, c| 1.0 + r as f64 + 0.1 * c as f64);
        let out = feature_cutoff(&h, 0.2, 3).unwrap();
        let zero_cols: Vec<usize> = (0..10).filter(|&c| (0..4).all(|r| out.get(r, c) == 0.0)).collect();
        assert_eq!(zero_cols.len(), 2);
        for c in (0..10).filter(|c| !zero_cols.contains(c)) {
            assert_eq!(out.column(c), h.column(c));
        }
        let removed: f64 = zero_cols.iter().map(|&c| h.column(c).iter().sum::<f64>()).sum();
        assert!((out.sum() - (h.sum() - removed)).abs() < 1e-12);
        assert_eq!(out, feature_cutoff(&h, 0.2, 3).unwrap());
        assert!(matches!(feature_cutoff(&h, 0.05, 3), Err(MmclError::Config { .. })));
    }

    #[test]
    fn per_token_mask_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = cutoff_mask(12, 10, 3, 0.3, true, &mut rng).unwrap();
        for r in 0..12 {
            assert_eq!(m.row(r).iter().filter(|&&v| v == 0.0).count(), 3);
        }
    }

    #[test]
    fn instance_loss_oracle() {
        let e = Matrix::identity(2);
        let v = unimodal_instance_loss(&e, &e, 1.0).unwrap();
        assert!((v - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let bad = EncoderParams {
            cutoff_ratio: 0.05,
            ..EncoderParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderParams {
            transformer_heads: 3,
            ..EncoderParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
