//! Contrastive and regression objectives and their weighted total.
//!
//! Each loss exists in two forms: a tape-level builder used during training
//! (differentiable, takes [`Var`]s) and a plain value function over matrices.
//! The value functions build a throwaway tape, so both forms share one
//! implementation.

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::data::SentimentClass;
use crate::error::{MmclError, Result};
use crate::tensor::Matrix;

/// Norm below which a vector cannot be projected onto the unit sphere.
pub const NORM_EPS: f64 = 1e-12;

/// Which terms make up the InfoNCE denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoNceDenominator {
    /// Positive key plus every other anchor; the anchor's self-similarity is excluded.
    #[default]
    Standard,
    /// Every anchor including the anchor itself; the positive key is not added.
    Literal,
}

/// Query/key combination used by the cross-modal instance loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingPhase {
    OriginOrigin,
    PredictPredict,
    OriginPredict,
}

impl PairingPhase {
    pub const ALL: [PairingPhase; 3] = [
        PairingPhase::OriginOrigin,
        PairingPhase::PredictPredict,
        PairingPhase::OriginPredict,
    ];
}

/// Pair set of the uniformity loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformityPairs {
    /// The n matched (prediction, target) couples.
    #[default]
    Matched,
    /// All n^2 (prediction_i, target_j) couples.
    All,
}

/// How same-class partners enter the sentiment contrastive loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentForm {
    /// `-log(sum_partners exp / sum_all exp)`
    #[default]
    SumInLog,
    /// Mean over partners of `-log(exp / sum_all exp)`.
    LogInSum,
}

/// Weights and shape hyper-parameters of the total objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// weight of the uni-modal instance loss
    pub mu: f64,
    /// weight of the sentiment contrastive loss
    pub eta: f64,
    /// weight of the cross-modal instance loss
    pub alpha: f64,
    /// weight of the alignment loss
    pub beta: f64,
    /// weight of the uniformity loss
    pub gamma: f64,
    pub tau: f64,
    /// alignment exponent, 1 or 2
    pub lambda: u8,
    pub kappa: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mu: 0.7,
            eta: 1.0,
            alpha: 1.0,
            beta: 0.75,
            gamma: 0.1,
            tau: 0.1,
            lambda: 2,
            kappa: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("mu", self.mu),
            ("eta", self.eta),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(MmclError::config(format!("weights.{name}"), "must be finite and non-negative"));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(MmclError::config("weights.tau", "must be positive"));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(MmclError::config("weights.kappa", "must be positive"));
        }
        if !matches!(self.lambda, 1 | 2) {
            return Err(MmclError::config("weights.lambda", "must be 1 or 2"));
        }
        Ok(())
    }
}

/// Component values of one evaluation of the total objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reg: f64,
    pub uni: f64,
    pub sent: f64,
    pub cross: f64,
    pub align: f64,
    pub uniform: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const NAMES: [&'static str; 6] = ["reg", "uni", "sent", "cross", "align", "uniform"];

    pub fn component(&self, name: &str) -> Option<f64> {
        match name {
            "reg" => Some(self.reg),
            "uni" => Some(self.uni),
            "sent" => Some(self.sent),
            "cross" => Some(self.cross),
            "align" => Some(self.align),
            "uniform" => Some(self.uniform),
            "total" => Some(self.total),
            _ => None,
        }
    }
}

/// Combines component values into the weighted total.
pub fn total_loss(components: [f64; 6], weights: &LossWeights) -> Result<LossBreakdown> {
    for (name, v) in LossBreakdown::NAMES.iter().zip(components) {
        if !v.is_finite() {
            return Err(MmclError::Numerical(format!("loss component `{name}` is {v}")));
        }
    }
    let [reg, uni, sent, cross, align, uniform] = components;
    Ok(LossBreakdown {
        reg,
        uni,
        sent,
        cross,
        align,
        uniform,
        total: reg
            + weights.mu * uni
            + weights.eta * sent
            + weights.alpha * cross
            + weights.beta * align
            + weights.gamma * uniform,
    })
}

// ---------------------------------------------------------------------------
// Tape-level losses
// ---------------------------------------------------------------------------

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(MmclError::validation(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

fn check_pairs(tape: &Tape, a: Var, b: Var, min_rows: usize) -> Result<usize> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(MmclError::validation(format!("paired inputs differ in shape: {sa:?} vs {sb:?}")));
    }
    if sa.0 < min_rows {
        return Err(MmclError::validation(format!("need at least {min_rows} samples, got {}", sa.0)));
    }
    Ok(sa.0)
}

/// Row-wise projection onto the unit sphere.
pub fn l2_normalize_rows(tape: &mut Tape, x: Var) -> Result<Var> {
    let sq = tape.mul(x, x);
    let ss = tape.sum_rows(sq);
    if let Some(r) = tape.value(ss).as_slice().iter().position(|&s| s.sqrt() <= NORM_EPS) {
        return Err(MmclError::Numerical(format!("row {r} has near-zero norm")));
    }
    let inv = tape.powf(ss, -0.5);
    Ok(tape.mul_col(x, inv))
}

/// Batch-mean InfoNCE with in-batch negatives and dot-product similarity.
pub fn info_nce(tape: &mut Tape, anchors: Var, positives: Var, tau: f64, denom: InfoNceDenominator) -> Result<Var> {
    check_tau(tau)?;
    let n = check_pairs(tape, anchors, positives, 2)?;
    let prod = tape.mul(anchors, positives);
    let pos = tape.sum_rows(prod);
    let pos = tape.scale(pos, 1.0 / tau);
    let sim = tape.matmul_nt(anchors, anchors);
    let sim = tape.scale(sim, 1.0 / tau);
    let lse = match denom {
        InfoNceDenominator::Standard => {
            // [pos | sim] with the diagonal of sim masked out.
            let logits = tape.concat_cols(&[pos, sim]);
            let mask: Vec<bool> = (0..n)
                .flat_map(|i| (0..=n).map(move |c| c == 0 || c - 1 != i))
                .collect();
            tape.logsumexp_rows(logits, Some(mask))
        }
        InfoNceDenominator::Literal => tape.logsumexp_rows(sim, None),
    };
    if !tape.value(lse).is_finite() {
        return Err(MmclError::Numerical("non-finite InfoNCE logits".into()));
    }
    let per = tape.sub(lse, pos);
    Ok(tape.mean_all(per))
}

/// One cross-modal branch's (prediction, target) pair, both `[n, d]` and unit-normalised.
#[derive(Clone, Copy, Debug)]
pub struct BranchPair {
    pub predicted: Var,
    pub target: Var,
}

/// Cross-modal instance loss summed over branches.
///
/// `OriginPredict` contrasts each branch's targets against its own predictions.
/// `OriginOrigin` and `PredictPredict` pair each branch with the next one
/// (targets with targets, predictions with predictions), so with two branches
/// the audio and vision representations of one utterance form the positive
/// pair. With a single branch those phases fall back to self pairing.
pub fn cross_instance_loss(
    tape: &mut Tape,
    branches: &[BranchPair],
    phase: PairingPhase,
    tau: f64,
    denom: InfoNceDenominator,
) -> Result<Var> {
    if branches.is_empty() {
        return Err(MmclError::validation("cross-modal loss needs at least one branch"));
    }
    let k = branches.len();
    let mut terms = Vec::with_capacity(k);
    for (i, b) in branches.iter().enumerate() {
        let other = &branches[(i + 1) % k];
        let (anchor, positive) = match phase {
            PairingPhase::OriginOrigin => (b.target, other.target),
            PairingPhase::PredictPredict => (b.predicted, other.predicted),
            PairingPhase::OriginPredict => (b.target, b.predicted),
        };
        terms.push(info_nce(tape, anchor, positive, tau, denom)?);
    }
    Ok(sum_vars(tape, &terms))
}

/// Mean over all three phases, for the non-curriculum schedule.
pub fn cross_instance_loss_all_phases(
    tape: &mut Tape,
    branches: &[BranchPair],
    tau: f64,
    denom: InfoNceDenominator,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(3);
    for phase in PairingPhase::ALL {
        terms.push(cross_instance_loss(tape, branches, phase, tau, denom)?);
    }
    let s = sum_vars(tape, &terms);
    Ok(tape.scale(s, 1.0 / 3.0))
}

pub(crate) fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Var {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = tape.add(acc, v);
    }
    acc
}

fn pair_sq_dists(tape: &mut Tape, predicted: Var, target: Var) -> Var {
    let d = tape.sub(predicted, target);
    let sq = tape.mul(d, d);
    tape.sum_rows(sq)
}

/// Mean of `||P_i - G_i||^lambda`.
pub fn alignment_loss(tape: &mut Tape, predicted: Var, target: Var, lambda: u8) -> Result<Var> {
    check_pairs(tape, predicted, target, 1)?;
    let sq = pair_sq_dists(tape, predicted, target);
    let per = match lambda {
        2 => sq,
        1 => tape.powf(sq, 0.5),
        other => return Err(MmclError::validation(format!("alignment exponent must be 1 or 2, got {other}"))),
    };
    Ok(tape.mean_all(per))
}

/// Log of the mean Gaussian potential `exp(-kappa ||P - G||^2)` over the pair set.
pub fn uniformity_loss(tape: &mut Tape, predicted: Var, target: Var, kappa: f64, pairs: UniformityPairs) -> Result<Var> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(MmclError::validation(format!("kappa must be positive, got {kappa}")));
    }
    check_pairs(tape, predicted, target, 1)?;
    let sq = match pairs {
        UniformityPairs::Matched => pair_sq_dists(tape, predicted, target),
        UniformityPairs::All => {
            // ||p_i||^2 + ||g_j||^2 - 2 p_i.g_j
            let pp = tape.mul(predicted, predicted);
            let pn = tape.sum_rows(pp);
            let gg = tape.mul(target, target);
            let gn = tape.sum_rows(gg);
            let gn = tape.transpose(gn);
            let cross = tape.matmul_nt(predicted, target);
            let cross = tape.scale(cross, -2.0);
            let with_p = tape.add_col(cross, pn);
            tape.add_row(with_p, gn)
        }
    };
    let scaled = tape.scale(sq, -kappa);
    let pot = tape.exp(scaled);
    let mean = tape.mean_all(pot);
    Ok(tape.ln(mean))
}

/// Supervised contrastive loss over `reps` (`[m, d]`) labelled with `classes`.
/// Anchors without a same-class partner are skipped; the result is the mean
/// over contributing anchors.
pub fn sentiment_contrastive_loss(
    tape: &mut Tape,
    reps: Var,
    classes: &[SentimentClass],
    tau: f64,
    form: SentimentForm,
) -> Result<Var> {
    check_tau(tau)?;
    let m = tape.shape(reps).0;
    if classes.len() != m {
        return Err(MmclError::validation(format!("{} classes for {m} representations", classes.len())));
    }
    if m < 2 {
        return Err(MmclError::validation("sentiment contrastive loss needs at least 2 representations"));
    }
    let anchors: Vec<usize> = (0..m)
        .filter(|&i| (0..m).any(|j| j != i && classes[j] == classes[i]))
        .collect();
    if anchors.is_empty() {
        return Err(MmclError::Degenerate("no anchor has a same-class partner".into()));
    }
    let sim = tape.matmul_nt(reps, reps);
    let sim = tape.scale(sim, 1.0 / tau);
    let sim = tape.gather_rows(sim, &anchors);
    let a = anchors.len();
    let den_mask: Vec<bool> = anchors.iter().flat_map(|&i| (0..m).map(move |j| j != i)).collect();
    let den = tape.logsumexp_rows(sim, Some(den_mask));
    let per = match form {
        SentimentForm::SumInLog => {
            let num_mask: Vec<bool> = anchors
                .iter()
                .flat_map(|&i| (0..m).map(move |j| j != i && classes[j] == classes[i]))
                .collect();
            let num = tape.logsumexp_rows(sim, Some(num_mask));
            tape.sub(den, num)
        }
        SentimentForm::LogInSum => {
            // mean_j (den_i - s_ij) over partners j
            let mut weight = Matrix::zeros(a, m);
            for (r, &i) in anchors.iter().enumerate() {
                let partners: Vec<usize> = (0..m).filter(|&j| j != i && classes[j] == classes[i]).collect();
                let w = 1.0 / partners.len() as f64;
                for j in partners {
                    weight.set(r, j, w);
                }
            }
            let weight = tape.constant(weight);
            let picked = tape.mul(sim, weight);
            let picked = tape.sum_rows(picked);
            tape.sub(den, picked)
        }
    };
    Ok(tape.mean_all(per))
}

/// Mean absolute error between `[n,1]` predictions and labels.
pub fn regression_loss(tape: &mut Tape, predictions: Var, labels: Var) -> Result<Var> {
    check_pairs(tape, predictions, labels, 1)?;
    let d = tape.sub(labels, predictions);
    let a = tape.abs(d);
    Ok(tape.mean_all(a))
}

// ---------------------------------------------------------------------------
// Value-level API
// ---------------------------------------------------------------------------

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > NORM_EPS) {
        return Err(MmclError::Numerical(format!("cannot normalise vector with norm {norm}")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn with_tape(inputs: &[&Matrix], f: impl FnOnce(&mut Tape, &[Var]) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.constant((*m).clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.scalar(out))
}

fn check_unit_rows(m: &Matrix, what: &str) -> Result<()> {
    for r in 0..m.rows() {
        let n = m.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-3 {
            return Err(MmclError::validation(format!("{what} row {r} has norm {n}, expected unit length")));
        }
    }
    Ok(())
}

pub fn info_nce_value(anchors: &Matrix, positives: &Matrix, tau: f64, denom: InfoNceDenominator) -> Result<f64> {
    if !anchors.is_finite() || !positives.is_finite() {
        return Err(MmclError::Numerical("non-finite InfoNCE input".into()));
    }
    with_tape(&[anchors, positives], |t, v| info_nce(t, v[0], v[1], tau, denom))
}

/// Cross-modal instance loss over unit-normalised `(predicted, target)` branch pairs.
pub fn cross_instance_value(branches: &[(Matrix, Matrix)], phase: PairingPhase, tau: f64) -> Result<f64> {
    for (p, g) in branches {
        check_unit_rows(p, "prediction")?;
        check_unit_rows(g, "target")?;
    }
    let mats: Vec<&Matrix> = branches.iter().flat_map(|(p, g)| [p, g]).collect();
    with_tape(&mats, |t, v| {
        let pairs: Vec<BranchPair> = v
            .chunks(2)
            .map(|c| BranchPair {
                predicted: c[0],
                target: c[1],
            })
            .collect();
        cross_instance_loss(t, &pairs, phase, tau, InfoNceDenominator::Standard)
    })
}

pub fn alignment_value(predicted: &Matrix, target: &Matrix, lambda: u8) -> Result<f64> {
    with_tape(&[predicted, target], |t, v| alignment_loss(t, v[0], v[1], lambda))
}

pub fn uniformity_value(predicted: &Matrix, target: &Matrix, kappa: f64, pairs: UniformityPairs) -> Result<f64> {
    if predicted.rows() == 0 {
        return Err(MmclError::validation("uniformity loss over an empty pair set"));
    }
    with_tape(&[predicted, target], |t, v| uniformity_loss(t, v[0], v[1], kappa, pairs))
}

pub fn sentiment_contrastive_value(reps: &Matrix, classes: &[SentimentClass], tau: f64, form: SentimentForm) -> Result<f64> {
    with_tape(&[reps], |t, v| sentiment_contrastive_loss(t, v[0], classes, tau, form))
}

pub fn regression_value(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(MmclError::validation(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(MmclError::validation("regression loss over zero samples"));
    }
    let p = Matrix::from_vec(predictions.len(), 1, predictions.to_vec())?;
    let l = Matrix::from_vec(labels.len(), 1, labels.to_vec())?;
    with_tape(&[&p, &l], |t, v| regression_loss(t, v[0], v[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ORTHO_CASE: f64 = 0.313_261_687_518_222_8; // -ln(e / (e + 1))

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(l2_normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(l2_normalize(&[1e-15, 0.0]).is_err());
    }

    #[test]
    fn info_nce_examples() {
        let e = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let v = info_nce_value(&e, &e, 1.0, InfoNceDenominator::Standard).unwrap();
        assert!((v - ORTHO_CASE).abs() < 1e-12);
        let same = m(&[&[0.3, 0.4], &[0.3, 0.4]]);
        let v = info_nce_value(&same, &same, 0.5, InfoNceDenominator::Standard).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        let v = info_nce_value(&e, &e, 100.0, InfoNceDenominator::Standard).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-2);
        let v = info_nce_value(&e, &e, 1e6, InfoNceDenominator::Standard).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn info_nce_errors() {
        let one = m(&[&[1.0, 0.0]]);
        assert!(info_nce_value(&one, &one, 1.0, InfoNceDenominator::Standard).is_err());
        let e = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(info_nce_value(&e, &e, 0.0, InfoNceDenominator::Standard).is_err());
        assert!(info_nce_value(&e, &e, -1.0, InfoNceDenominator::Standard).is_err());
    }

    #[test]
    fn literal_denominator_includes_self_term() {
        // anchors = positives = e1, e2 ; den = exp(1) + exp(0) over self + other
        let e = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let v = info_nce_value(&e, &e, 1.0, InfoNceDenominator::Literal).unwrap();
        assert!((v - ORTHO_CASE).abs() < 1e-12);
        let a = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let p = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        // literal: pos 0, den e + 1 -> ln(e+1)
        let v = info_nce_value(&a, &p, 1.0, InfoNceDenominator::Literal).unwrap();
        assert!((v - (1f64.exp() + 1.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_instance_examples() {
        let g = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let v = cross_instance_value(&[(g.clone(), g.clone())], PairingPhase::OriginPredict, 1.0).unwrap();
        assert!((v - ORTHO_CASE).abs() < 1e-12);
        let bad = m(&[&[2.0, 0.0], &[0.0, 1.0]]);
        assert!(cross_instance_value(&[(bad, g)], PairingPhase::OriginPredict, 1.0).is_err());
    }

    #[test]
    fn alignment_examples() {
        let p = m(&[&[0.0, 1.0]]);
        let g = m(&[&[1.0, 0.0]]);
        assert_eq!(alignment_value(&p, &p, 2).unwrap(), 0.0);
        assert!((alignment_value(&p, &g, 2).unwrap() - 2.0).abs() < 1e-15);
        assert!((alignment_value(&p, &g, 1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(alignment_value(&p, &m(&[&[1.0, 0.0], &[0.0, 1.0]]), 2).is_err());
    }

    #[test]
    fn uniformity_examples() {
        let p = m(&[&[0.0, 1.0]]);
        let g = m(&[&[1.0, 0.0]]);
        assert_eq!(uniformity_value(&p, &p, 3.0, UniformityPairs::Matched).unwrap(), 0.0);
        assert_eq!(uniformity_value(&p, &g, 2.0, UniformityPairs::Matched).unwrap(), -4.0);
        assert!(uniformity_value(&p, &g, 0.0, UniformityPairs::Matched).is_err());
    }

    #[test]
    fn sentiment_examples() {
        use SentimentClass::*;
        let reps = m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let v = sentiment_contrastive_value(&reps, &[Positive, Positive, Negative], 1.0, SentimentForm::SumInLog).unwrap();
        assert!((v - ORTHO_CASE).abs() < 1e-12);
        let v = sentiment_contrastive_value(&reps, &[Neutral, Neutral, Neutral], 1.0, SentimentForm::SumInLog).unwrap();
        assert!(v.abs() < 1e-12);
        assert!(matches!(
            sentiment_contrastive_value(&reps, &[Positive, Neutral, Negative], 1.0, SentimentForm::SumInLog),
            Err(MmclError::Degenerate(_))
        ));
    }

    #[test]
    fn regression_examples() {
        assert_eq!(regression_value(&[1.0, -1.0], &[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(regression_value(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(regression_value(&[0.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn total_examples() {
        let zero = LossWeights {
            mu: 0.0,
            eta: 0.0,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..LossWeights::default()
        };
        assert_eq!(total_loss([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &zero).unwrap().total, 1.0);
        let ones = LossWeights {
            mu: 1.0,
            eta: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            ..LossWeights::default()
        };
        assert_eq!(total_loss([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &ones).unwrap().total, 21.0);
        match total_loss([1.0, f64::NAN, 0.0, 0.0, 0.0, 0.0], &ones) {
            Err(MmclError::Numerical(msg)) => assert!(msg.contains("uni")),
            other => panic!("{other:?}"),
        }
    }
}
