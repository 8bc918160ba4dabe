//! Run both branches of the cross-modal predictive network on one sample.

use mmcl::cmcp::{build_cmcp, CmcpParams};
use mmcl::tensor::Matrix;

fn main() -> mmcl::Result<()> {
    let params = CmcpParams {
        common_dim: 16,
        fusion_hidden: 16,
        cnn_channels: 32,
        ar_hidden: 16,
        ..CmcpParams::default()
    };
    for len in [160, 40, 5] {
        println!("sequence length {len:>3} -> CNN layer lengths {:?}", params.layer_lengths(len));
    }

    let dims = [12, 8, 8];
    let (net, store) = build_cmcp(dims, &params, 3)?;
    let len = 40;
    let f = |d: usize, phase: f64| Matrix::from_fn(len, d, |t, j| ((t as f64) * 0.3 + j as f64 + phase).sin());
    let bundles = net.cmcp_forward(&store, &f(dims[0], 0.0), &f(dims[1], 1.0), &f(dims[2], 2.0))?;
    for b in &bundles {
        let cos = dot(&b.predicted, &b.target_encoded) / (norm(&b.predicted) * norm(&b.target_encoded));
        println!(
            "{:?}: fused {:?}, context width {}, prediction width {}, cosine(prediction, target) {:+.4}",
            b.branch,
            b.fused.shape(),
            b.context.len(),
            b.predicted.len(),
            cos
        );
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
