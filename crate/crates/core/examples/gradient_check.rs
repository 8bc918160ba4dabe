//! Compare analytic gradients of the full objective with central differences.

use mmcl::config::Config;
use mmcl::data::{generate_synthetic_dataset, Batch};
use mmcl::losses::PairingPhase;
use mmcl::model::{CrossPairing, LossPlan, Mmcl, ModalityMask};
use mmcl::trainer::gradient_check;

fn main() -> mmcl::Result<()> {
    let cfg = Config::from_toml_str(include_str!("../../../configs/tiny.toml"))?;
    let data = generate_synthetic_dataset(&cfg.synth)?;
    let batch = Batch::new(data.iter().take(6).collect());
    let dims = data[0].shapes().map(|(_, d)| d);
    let mut model = Mmcl::new(&cfg.model, dims, false, 1)?;
    let mask = ModalityMask::default();
    for phase in PairingPhase::ALL {
        let plan = LossPlan {
            weights: cfg.train.weights.clone(),
            enabled: cfg.train.ablation.enabled(),
            variants: cfg.train.variants,
            pairing: CrossPairing::Phase(phase),
            augment_seed: 9,
        };
        let err = gradient_check(&mut model, &batch, &mask, &plan, 40, 1e-5, 2)?;
        println!("{phase:?}: max relative error over 40 sampled parameters {err:.2e}");
    }
    Ok(())
}
