//! Rank a small hyper-parameter grid by validation regression loss.

use std::collections::BTreeMap;

use mmcl::config::Config;
use mmcl::data::{generate_synthetic_dataset, split_dataset};
use mmcl::trainer::grid_search;

fn main() -> mmcl::Result<()> {
    let mut cfg = Config::from_toml_str(include_str!("../../../configs/tiny.toml"))?;
    cfg.train.seeds = vec![1];
    let data = generate_synthetic_dataset(&cfg.synth)?;
    let (tr, va, _) = split_dataset(&data, (0.7, 0.15, 0.15), 1)?;
    let grid = BTreeMap::from([("tau".to_string(), vec![0.07, 0.1, 0.5]), ("beta".to_string(), vec![0.25, 0.75])]);
    for (rank, r) in grid_search(&cfg, &grid, &tr, &va)?.iter().enumerate() {
        println!("{:>2}. {:?}  val L_reg {:.4}", rank + 1, r.assignment, r.val_reg);
    }
    Ok(())
}
