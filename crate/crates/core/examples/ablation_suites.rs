//! List the settings of each ablation suite and run the modality suite.

use mmcl::config::Config;
use mmcl::data::{generate_synthetic_dataset, split_dataset};
use mmcl::trainer::{ablate, ablation_settings, AblationSuite};

fn main() -> mmcl::Result<()> {
    let mut cfg = Config::from_toml_str(include_str!("../../../configs/tiny.toml"))?;
    cfg.train.seeds = vec![1];
    for suite in [AblationSuite::Losses, AblationSuite::Modalities, AblationSuite::Weights] {
        let names: Vec<String> = ablation_settings(&cfg, suite)?.into_iter().map(|(n, _)| n).collect();
        println!("{suite:?} ({}): {}", names.len(), names.join(", "));
    }
    let data = generate_synthetic_dataset(&cfg.synth)?;
    let (tr, va, te) = split_dataset(&data, (0.7, 0.15, 0.15), 1)?;
    for row in ablate(&cfg, AblationSuite::Modalities, &tr, &va, &te)? {
        println!("{:<6} MAE {:.4}  Acc2 {:.4}", row.setting, row.report.mae, row.report.acc2_has0);
    }
    Ok(())
}
