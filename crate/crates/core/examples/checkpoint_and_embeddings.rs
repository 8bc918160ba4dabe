//! Save a trained checkpoint, reload it, and dump fused representations.

use mmcl::checkpoint::Checkpoint;
use mmcl::config::Config;
use mmcl::data::{generate_synthetic_dataset, sentiment_class};
use mmcl::model::ModalityMask;
use mmcl::trainer::{predict_all, train};

fn main() -> mmcl::Result<()> {
    let cfg = Config::from_toml_str(include_str!("../../../configs/tiny.toml"))?;
    let data = generate_synthetic_dataset(&cfg.synth)?;
    let (tr, va) = data.split_at(48);
    let out = train(&cfg, 4, tr, va)?;

    let path = std::env::temp_dir().join("mmcl-example.ckpt");
    out.checkpoint.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    println!("checkpoint: {} bytes, config sha256 {}", std::fs::metadata(&path)?.len(), loaded.config_hash()?);

    let mask = ModalityMask::default();
    let (before, _) = predict_all(&out.checkpoint.model, &mask, va)?;
    let (after, fused) = predict_all(&loaded.model, &mask, va)?;
    assert_eq!(before, after);
    for (i, s) in va.iter().take(4).enumerate() {
        let head: Vec<String> = fused.row(i).iter().take(4).map(|v| format!("{v:+.3}")).collect();
        println!("{} {:>8} F_M[..4] = [{}]", s.id, sentiment_class(s.label)?.as_str(), head.join(", "));
    }
    Ok(())
}
