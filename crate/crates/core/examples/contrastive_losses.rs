//! Evaluate each contrastive loss on small hand-made inputs.

use mmcl::data::SentimentClass;
use mmcl::losses::{
    alignment_value, info_nce_value, l2_normalize, sentiment_contrastive_value, uniformity_value, InfoNceDenominator,
    SentimentForm, UniformityPairs,
};
use mmcl::tensor::Matrix;

fn main() -> mmcl::Result<()> {
    // Two orthonormal anchors, each paired with itself.
    let e = Matrix::identity(2);
    println!("InfoNCE, orthonormal pairs, tau 1: {:.6}", info_nce_value(&e, &e, 1.0, InfoNceDenominator::Standard)?);
    for tau in [0.05, 0.1, 0.5, 1.0] {
        println!("  tau {tau:<4}: {:.6}", info_nce_value(&e, &e, tau, InfoNceDenominator::Standard)?);
    }

    let p = Matrix::from_rows(&[l2_normalize(&[1.0, 0.2, 0.0])?, l2_normalize(&[0.0, 1.0, 0.3])?])?;
    let g = Matrix::from_rows(&[l2_normalize(&[0.9, 0.0, 0.1])?, l2_normalize(&[0.1, 1.0, 0.0])?])?;
    println!("alignment (lambda 2): {:.6}", alignment_value(&p, &g, 2)?);
    println!("uniformity (kappa 2): {:.6}", uniformity_value(&p, &g, 2.0, UniformityPairs::Matched)?);

    let reps = Matrix::from_rows(&[
        l2_normalize(&[1.0, 0.1])?,
        l2_normalize(&[0.9, 0.2])?,
        l2_normalize(&[-1.0, 0.1])?,
        l2_normalize(&[-0.8, -0.3])?,
    ])?;
    let classes = [SentimentClass::Positive, SentimentClass::Positive, SentimentClass::Negative, SentimentClass::Negative];
    println!(
        "sentiment contrastive (tau 0.1): {:.6}",
        sentiment_contrastive_value(&reps, &classes, 0.1, SentimentForm::SumInLog)?
    );
    Ok(())
}
