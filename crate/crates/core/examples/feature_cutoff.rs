//! Feature cutoff on a recurrent encoding: the same columns vanish at every token.

use mmcl::tensor::Matrix;
use mmcl::umcc::{cutoff_count, feature_cutoff};

fn main() -> mmcl::Result<()> {
    let h = Matrix::from_fn(4, 10, |r, c| 1.0 + r as f64 + c as f64 / 10.0);
    println!("width 10, ratio 0.2 -> {} zeroed columns", cutoff_count(10, 0.2)?);
    for seed in 0..3 {
        let out = feature_cutoff(&h, 0.2, seed)?;
        let zeroed: Vec<usize> = (0..10).filter(|&c| out.column(c).iter().all(|&v| v == 0.0)).collect();
        println!("seed {seed}: zeroed columns {zeroed:?}");
    }
    let mut hits = [0usize; 10];
    let trials = 1000;
    for seed in 0..trials {
        let out = feature_cutoff(&h, 0.2, seed)?;
        for (c, n) in hits.iter_mut().enumerate() {
            *n += usize::from(out.get(0, c) == 0.0);
        }
    }
    let freq: Vec<String> = hits.iter().map(|&n| format!("{:.3}", n as f64 / trials as f64)).collect();
    println!("per-column zero frequency over {trials} seeds: {}", freq.join(" "));
    Ok(())
}
