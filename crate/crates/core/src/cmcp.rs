//! Cross-modal contrastive prediction.
//!
//! Two branches, each fusing text with one non-verbal modality and predicting
//! the encoding of the remaining one:
//!
//! ```text
//! (F_t, F_a) -> fuse -> CNN(fused side) -> LSTM -> linear -> P_v
//!        F_v ->         CNN(target side) -> time mean -> G_v
//! ```
//!
//! and symmetrically `(F_t, F_v) -> P_a` against `G_a`. The two CNNs of a
//! branch share hyper-parameters but never weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::data::Modality;
use crate::error::{MmclError, Result};
use crate::nn::{conv_out_len, Activation, Conv1d, Init, Linear, Lstm, Mlp};
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    PredictVision,
    PredictAudio,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::PredictVision, Branch::PredictAudio];

    /// Non-verbal modality fused with text.
    pub fn source(self) -> Modality {
        match self {
            Branch::PredictVision => Modality::Audio,
            Branch::PredictAudio => Modality::Vision,
        }
    }

    pub fn target(self) -> Modality {
        match self {
            Branch::PredictVision => Modality::Vision,
            Branch::PredictAudio => Modality::Audio,
        }
    }

    fn index(self) -> usize {
        match self {
            Branch::PredictVision => 0,
            Branch::PredictAudio => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Branch::PredictVision => "cmcp.to_vision",
            Branch::PredictAudio => "cmcp.to_audio",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchSide {
    FusedSide,
    TargetSide,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmcpParams {
    pub common_dim: usize,
    pub fusion_hidden: usize,
    pub cnn_strides: Vec<usize>,
    pub cnn_kernels: Vec<usize>,
    pub cnn_channels: usize,
    pub ar_hidden: usize,
    /// One set of modality projections for both branches.
    pub shared_projections: bool,
}

impl Default for CmcpParams {
    fn default() -> Self {
        CmcpParams {
            common_dim: 64,
            fusion_hidden: 64,
            cnn_strides: vec![5, 4, 2, 2, 2],
            cnn_kernels: vec![10, 8, 4, 4, 4],
            cnn_channels: 256,
            ar_hidden: 128,
            shared_projections: true,
        }
    }
}

pub const CNN_LAYERS: usize = 5;

impl CmcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.cnn_strides.len() != CNN_LAYERS {
            return Err(MmclError::config("cmcp.cnn_strides", format!("need exactly {CNN_LAYERS} strides")));
        }
        if self.cnn_kernels.len() != CNN_LAYERS {
            return Err(MmclError::config("cmcp.cnn_kernels", format!("need exactly {CNN_LAYERS} kernel sizes")));
        }
        if self.cnn_strides.contains(&0) {
            return Err(MmclError::config("cmcp.cnn_strides", "strides must be positive"));
        }
        if self.cnn_kernels.contains(&0) {
            return Err(MmclError::config("cmcp.cnn_kernels", "kernel sizes must be positive"));
        }
        for (field, v) in [
            ("cmcp.common_dim", self.common_dim),
            ("cmcp.fusion_hidden", self.fusion_hidden),
            ("cmcp.cnn_channels", self.cnn_channels),
            ("cmcp.ar_hidden", self.ar_hidden),
        ] {
            if v == 0 {
                return Err(MmclError::config(field, "must be positive"));
            }
        }
        Ok(())
    }

    /// Sequence length after each convolution layer.
    pub fn layer_lengths(&self, len: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(CNN_LAYERS);
        let mut l = len;
        for &s in &self.cnn_strides {
            l = conv_out_len(l, s);
            out.push(l);
        }
        out
    }
}

/// Stack of strided convolutions with tanh activations.
#[derive(Clone, Debug)]
pub struct CnnEncoder {
    pub layers: Vec<Conv1d>,
}

impl CnnEncoder {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, in_ch: usize, p: &CmcpParams) -> Self {
        let mut ch = in_ch;
        let layers = p
            .cnn_kernels
            .iter()
            .zip(&p.cnn_strides)
            .enumerate()
            .map(|(i, (&k, &s))| {
                let conv = Conv1d::new(init, &format!("{name}.conv{i}"), ch, p.cnn_channels, k, s);
                ch = p.cnn_channels;
                conv
            })
            .collect();
        CnnEncoder { layers }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_ch)
    }

    /// `[n*len, in] -> ([n*len', channels], len')`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, len: usize) -> (Var, usize) {
        let mut h = x;
        let mut l = len;
        for conv in &self.layers {
            let (y, nl) = conv.forward(tape, store, h, l);
            h = Activation::Tanh.apply(tape, y);
            l = nl;
        }
        (h, l)
    }
}

#[derive(Clone, Debug)]
pub struct CmcpBranch {
    pub branch: Branch,
    pub fusion: Mlp,
    pub fused_cnn: CnnEncoder,
    pub target_cnn: CnnEncoder,
    pub summarizer: Lstm,
    pub predictor: Linear,
}

impl CmcpBranch {
    fn new<R: Rng>(init: &mut Init<'_, R>, branch: Branch, p: &CmcpParams) -> Self {
        let name = branch.name();
        let fusion = Mlp::new(
            init,
            &format!("{name}.fusion"),
            2 * p.common_dim,
            p.fusion_hidden,
            p.common_dim,
            Activation::Tanh,
        );
        let fused_cnn = CnnEncoder::new(init, &format!("{name}.fused_cnn"), p.common_dim, p);
        let target_cnn = CnnEncoder::new(init, &format!("{name}.target_cnn"), p.common_dim, p);
        let summarizer = Lstm::new(init, &format!("{name}.summarizer"), p.cnn_channels, p.ar_hidden);
        let predictor = Linear::new(init, &format!("{name}.predictor"), p.ar_hidden, p.cnn_channels);
        CmcpBranch {
            branch,
            fusion,
            fused_cnn,
            target_cnn,
            summarizer,
            predictor,
        }
    }

    fn cnn(&self, side: BranchSide) -> &CnnEncoder {
        match side {
            BranchSide::FusedSide => &self.fused_cnn,
            BranchSide::TargetSide => &self.target_cnn,
        }
    }
}

/// Tape handles for one branch's outputs over a batch of `n` samples.
#[derive(Clone, Copy, Debug)]
pub struct BranchVars {
    pub branch: Branch,
    /// `[n*L_pair, common_dim]`
    pub fused: Var,
    pub fused_len: usize,
    /// time-mean of the target-side CNN output, `[n, channels]`
    pub target: Var,
    /// `[n, ar_hidden]`
    pub context: Var,
    /// `[n, channels]`
    pub predicted: Var,
}

/// Single-sample outputs of one branch.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossModalBundle {
    pub branch: Branch,
    pub fused: Matrix,
    pub target_encoded: Vec<f64>,
    pub context: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Cmcp {
    pub params: CmcpParams,
    /// Per-modality projections in text, audio, vision order; one set, or one per branch.
    pub projections: Vec<[Linear; 3]>,
    pub branches: [CmcpBranch; 2],
}

fn modality_slot(m: Modality) -> usize {
    match m {
        Modality::Text => 0,
        Modality::Audio => 1,
        Modality::Vision => 2,
    }
}

impl Cmcp {
    /// `input_dims`: widths of `F_t`, `F_a`, `F_v`.
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, input_dims: [usize; 3], params: &CmcpParams) -> Result<Self> {
        params.validate()?;
        let mut init = Init {
            store,
            rng,
            group: ParamGroup::Other,
        };
        let sets = if params.shared_projections { 1 } else { 2 };
        let projections = (0..sets)
            .map(|s| {
                let tag = if params.shared_projections { String::new() } else { format!("{s}.") };
                [Modality::Text, Modality::Audio, Modality::Vision].map(|m| {
                    Linear::new(
                        &mut init,
                        &format!("cmcp.proj.{tag}{}", crate::umcc::modality_name(m)),
                        input_dims[modality_slot(m)],
                        params.common_dim,
                    )
                })
            })
            .collect();
        let branches = Branch::BOTH.map(|b| CmcpBranch::new(&mut init, b, params));
        Ok(Cmcp {
            params: params.clone(),
            projections,
            branches,
        })
    }

    pub fn branch(&self, b: Branch) -> &CmcpBranch {
        &self.branches[b.index()]
    }

    fn projection(&self, branch: Branch, m: Modality) -> &Linear {
        let set = if self.projections.len() == 1 { 0 } else { branch.index() };
        &self.projections[set][modality_slot(m)]
    }

    // ----- tape-level pieces -------------------------------------------------

    /// Keeps the first `keep` rows of every length-`len` block.
    fn truncate(tape: &mut Tape, x: Var, len: usize, keep: usize) -> Var {
        if keep == len {
            return x;
        }
        let n = tape.shape(x).0 / len;
        let rows: Vec<usize> = (0..n).flat_map(|s| (0..keep).map(move |t| s * len + t)).collect();
        tape.gather_rows(x, &rows)
    }

    fn fuse_vars(&self, tape: &mut Tape, store: &ParamStore, b: &CmcpBranch, pt: Var, lt: usize, ps: Var, ls: usize) -> Result<(Var, usize)> {
        let l = lt.min(ls);
        if l == 0 {
            return Err(MmclError::validation("fusion inputs have no overlapping time steps"));
        }
        let pt = Self::truncate(tape, pt, lt, l);
        let ps = Self::truncate(tape, ps, ls, l);
        let cat = tape.concat_cols(&[pt, ps]);
        Ok((b.fusion.forward(tape, store, cat), l))
    }

    /// Runs both branches over a batch. `refined` holds `F_t`, `F_a`, `F_v` as
    /// stacked `[n*L_m, d_m]` nodes with per-sample lengths `lens`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, refined: [Var; 3], lens: [usize; 3]) -> Result<[BranchVars; 2]> {
        let mut out = Vec::with_capacity(2);
        let mut shared: Option<[Var; 3]> = None;
        for b in &self.branches {
            let proj = match shared {
                Some(p) => p,
                None => {
                    let p = [Modality::Text, Modality::Audio, Modality::Vision].map(|m| {
                        self.projection(b.branch, m).forward(tape, store, refined[modality_slot(m)])
                    });
                    if self.projections.len() == 1 {
                        shared = Some(p);
                    }
                    p
                }
            };
            let src = modality_slot(b.branch.source());
            let tgt = modality_slot(b.branch.target());
            let (fused, fused_len) = self.fuse_vars(tape, store, b, proj[0], lens[0], proj[src], lens[src])?;
            let (g_pair, l_pair) = b.fused_cnn.forward(tape, store, fused, fused_len);
            let context = b.summarizer.last_hidden(tape, store, g_pair, l_pair);
            let predicted = b.predictor.forward(tape, store, context);
            let (g_tgt, l_tgt) = b.target_cnn.forward(tape, store, proj[tgt], lens[tgt]);
            let target = tape.mean_segments(g_tgt, l_tgt);
            out.push(BranchVars {
                branch: b.branch,
                fused,
                fused_len,
                target,
                context,
                predicted,
            });
        }
        Ok([out[0], out[1]])
    }

    // ----- single-sample API -------------------------------------------------

    fn check_width(m: &Matrix, width: usize, what: &str) -> Result<()> {
        if m.cols() != width {
            return Err(MmclError::validation(format!("{what} expects width {width}, got {}", m.cols())));
        }
        if m.rows() == 0 {
            return Err(MmclError::validation(format!("{what} got an empty sequence")));
        }
        Ok(())
    }

    pub fn project_common(&self, store: &ParamStore, branch: Branch, m: Modality, f: &Matrix) -> Result<Matrix> {
        let lin = self.projection(branch, m);
        Self::check_width(f, lin.in_dim, "projection")?;
        let mut tape = Tape::new();
        let x = tape.constant(f.clone());
        let y = lin.forward(&mut tape, store, x);
        Ok(tape.value(y).clone())
    }

    /// Fuses projected text with the branch's projected source modality.
    pub fn bimodal_fuse(&self, store: &ParamStore, branch: Branch, f_t: &Matrix, f_src: &Matrix) -> Result<Matrix> {
        let d = self.params.common_dim;
        Self::check_width(f_t, d, "fusion (text)")?;
        Self::check_width(f_src, d, "fusion (source)")?;
        let mut tape = Tape::new();
        let t = tape.constant(f_t.clone());
        let s = tape.constant(f_src.clone());
        let (y, _) = self.fuse_vars(&mut tape, store, self.branch(branch), t, f_t.rows(), s, f_src.rows())?;
        Ok(tape.value(y).clone())
    }

    /// CNN output sequence `(L', channels)` for one side of a branch.
    pub fn cnn_encode(&self, store: &ParamStore, branch: Branch, side: BranchSide, seq: &Matrix) -> Result<Matrix> {
        Self::check_width(seq, self.params.common_dim, "cnn")?;
        let mut tape = Tape::new();
        let x = tape.constant(seq.clone());
        let (y, _) = self.branch(branch).cnn(side).forward(&mut tape, store, x, seq.rows());
        Ok(tape.value(y).clone())
    }

    /// Final hidden state of the summarizer over a CNN output sequence.
    pub fn autoregress(&self, store: &ParamStore, branch: Branch, g_pair: &Matrix) -> Result<Vec<f64>> {
        Self::check_width(g_pair, self.params.cnn_channels, "summarizer")?;
        let mut tape = Tape::new();
        let x = tape.constant(g_pair.clone());
        let h = self.branch(branch).summarizer.last_hidden(&mut tape, store, x, g_pair.rows());
        Ok(tape.value(h).as_slice().to_vec())
    }

    pub fn predict_target(&self, store: &ParamStore, branch: Branch, context: &[f64]) -> Result<Vec<f64>> {
        let lin = &self.branch(branch).predictor;
        if context.len() != lin.in_dim {
            return Err(MmclError::validation(format!(
                "predictor expects {} inputs, got {}",
                lin.in_dim,
                context.len()
            )));
        }
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(context));
        let y = lin.forward(&mut tape, store, x);
        Ok(tape.value(y).as_slice().to_vec())
    }

    /// Both branches for one sample, from the encoder outputs `F_t`, `F_a`, `F_v`.
    pub fn cmcp_forward(&self, store: &ParamStore, f_t: &Matrix, f_a: &Matrix, f_v: &Matrix) -> Result<[CrossModalBundle; 2]> {
        let mut tape = Tape::new();
        let inputs = [f_t, f_a, f_v];
        for (m, f) in [Modality::Text, Modality::Audio, Modality::Vision].iter().zip(inputs) {
            Self::check_width(f, self.projection(Branch::PredictVision, *m).in_dim, "projection")?;
        }
        let vars = inputs.map(|f| tape.constant(f.clone()));
        let lens = inputs.map(|f| f.rows());
        let out = self.forward(&mut tape, store, vars, lens)?;
        let row = |v: Var| tape.value(v).as_slice().to_vec();
        Ok(out.map(|b| CrossModalBundle {
            branch: b.branch,
            fused: tape.value(b.fused).clone(),
            target_encoded: row(b.target),
            context: row(b.context),
            predicted: row(b.predicted),
        }))
    }
}

/// Builds a stand-alone predictive network with a fixed seed, for inspection and examples.
pub fn build_cmcp(input_dims: [usize; 3], params: &CmcpParams, seed: u64) -> Result<(Cmcp, ParamStore)> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Cmcp::new(&mut store, &mut rng, input_dims, params)?;
    Ok((c, store))
}
