//! Train a small model, print its loss trace, and evaluate on held-out data.

use mmcl::config::Config;
use mmcl::data::{generate_synthetic_dataset, split_dataset};
use mmcl::trainer::{evaluate, train};

fn main() -> mmcl::Result<()> {
    let mut cfg = Config::from_toml_str(include_str!("../../../configs/tiny.toml"))?;
    cfg.synth.num_samples = 120;
    cfg.train.epochs = 10;
    let data = generate_synthetic_dataset(&cfg.synth)?;
    let (tr, va, te) = split_dataset(&data, (0.7, 0.15, 0.15), 1)?;
    let out = train(&cfg, 1, &tr, &va)?;

    println!("{} steps; best epoch {} by validation MAE", out.steps.len(), out.checkpoint.epoch);
    for e in &out.epochs {
        println!("epoch {:>2}: train L_reg {:.4}  val MAE {:.4}", e.epoch, e.train_reg, e.val_reg.unwrap_or(f64::NAN));
    }
    for name in ["reg", "uni", "sent", "cross", "align", "uniform"] {
        let series = out.trace.series(name);
        if let (Some(first), Some(last)) = (series.first(), series.last()) {
            println!("{name:<8} step {:>3}: {:+.4}  ->  step {:>3}: {:+.4}", first.0, first.1, last.0, last.1);
        }
    }
    let report = evaluate(&out.checkpoint, &te)?;
    println!("test: {}", serde_json::to_string(&report)?);
    Ok(())
}
