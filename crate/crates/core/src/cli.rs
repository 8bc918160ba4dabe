//! Command-line front end. Every subcommand reads the run configuration from a
//! TOML file; flags only carry paths and the seed override.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::Config;
use crate::data::{generate_synthetic_dataset, load_dataset, sentiment_class, split_dataset, write_dataset, DataFormat, UtteranceTriplet};
use crate::error::{MmclError, Result};
use crate::metrics::{write_results_table, MetricsReport};
use crate::trainer::{ablate, evaluate, grid_search, predict_all, train, write_grid_table, AblationSuite};

#[derive(Debug, Parser)]
#[command(name = "mmcl", version, about = "Multimodal contrastive learning for sentiment regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from the `[synth]` table.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// output file, `.csv` or `.json`
        #[arg(long)]
        out: PathBuf,
        /// overrides `synth.seed`
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on the split of a dataset and evaluate on its held-out part.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// dataset file; synthesised from `[synth]` when omitted
        #[arg(long)]
        data: Option<PathBuf>,
        /// output directory for checkpoint, trace and metrics
        #[arg(long)]
        out: PathBuf,
        /// overrides the first entry of `train.seeds`
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on every sample of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// metrics JSON; printed to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one ablation suite and write its results table.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: AblationSuite,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// replaces `train.seeds` with a single seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid search over the `[grid]` table, ranked by validation regression loss.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump the fused representation of every sample.
    ExportEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Process exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &MmclError) -> i32 {
    match err {
        MmclError::Config { .. } => 2,
        _ => 1,
    }
}

fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| MmclError::config("--config", format!("cannot read `{}`: {e}", path.display())))?;
    let cfg = Config::from_toml_str(&text)?;
    eprintln!("resolved config (sha256 {}):\n{}", cfg.hash()?, cfg.to_toml_string()?);
    Ok(cfg)
}

fn load_data(path: &Path) -> Result<Vec<UtteranceTriplet>> {
    if !path.is_file() {
        return Err(MmclError::validation(format!("data file `{}` does not exist", path.display())));
    }
    load_dataset(path, DataFormat::from_path(path)?)
}

fn dataset(cfg: &Config, data: Option<&Path>) -> Result<Vec<UtteranceTriplet>> {
    match data {
        Some(p) => load_data(p),
        None => generate_synthetic_dataset(&cfg.synth),
    }
}

type Splits = (Vec<UtteranceTriplet>, Vec<UtteranceTriplet>, Vec<UtteranceTriplet>);

fn splits(cfg: &Config, data: &[UtteranceTriplet]) -> Result<Splits> {
    let [a, b, c] = cfg.train.split;
    let s = split_dataset(data, (a, b, c), cfg.synth.seed)?;
    if s.0.is_empty() || s.1.is_empty() || s.2.is_empty() {
        return Err(MmclError::validation(format!(
            "{} samples are too few for a non-empty train/validation/test split",
            data.len()
        )));
    }
    Ok(s)
}

fn summary(data: &[UtteranceTriplet]) -> String {
    let n = data.len() as f64;
    let mean = data.iter().map(|s| s.label).sum::<f64>() / n;
    let sd = (data.iter().map(|s| (s.label - mean).powi(2)).sum::<f64>() / n).sqrt();
    let shapes = data[0].shapes();
    format!(
        "{} samples, label mean {mean:.4} sd {sd:.4}, shapes text {:?} audio {:?} vision {:?}",
        data.len(),
        shapes[0],
        shapes[1],
        shapes[2]
    )
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            let data = generate_synthetic_dataset(&cfg.synth)?;
            write_dataset(&out, &data, DataFormat::from_path(&out)?)?;
            println!("wrote {}: {}", out.display(), summary(&data));
        }
        Command::Train { config, data, out, seed } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.train.seeds[0]);
            let all = dataset(&cfg, data.as_deref())?;
            let (tr, va, te) = splits(&cfg, &all)?;
            std::fs::create_dir_all(&out)?;
            let outcome = train(&cfg, seed, &tr, &va)?;
            let report = evaluate(&outcome.checkpoint, &te)?;
            outcome.checkpoint.save(&out.join("checkpoint.mmcl"))?;
            outcome.trace.write_csv(&out.join("trace.csv"))?;
            report.write_json(&out.join("metrics.json"))?;
            std::fs::write(out.join("config.toml"), cfg.to_toml_string()?)?;
            println!(
                "seed {seed}: {} steps, best epoch {} (val MAE {:.4}); test {}",
                outcome.steps.len(),
                outcome.checkpoint.epoch,
                outcome.checkpoint.val_loss.unwrap_or(f64::NAN),
                format_report(&report)
            );
        }
        Command::Eval { checkpoint, data, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let report = evaluate(&ck, &load_data(&data)?)?;
            match out {
                Some(p) => {
                    report.write_json(&p)?;
                    println!("{}", format_report(&report));
                }
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Ablate {
            config,
            suite,
            data,
            out,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.train.seeds = vec![s];
            }
            let all = dataset(&cfg, data.as_deref())?;
            let (tr, va, te) = splits(&cfg, &all)?;
            let rows = ablate(&cfg, suite, &tr, &va, &te)?;
            let table: Vec<(String, MetricsReport)> = rows.iter().map(|r| (r.setting.clone(), r.report.clone())).collect();
            write_results_table(&out, &table)?;
            for r in &rows {
                let spread = spread(&r.per_seed);
                let cells: Vec<String> = MetricsReport::COLUMNS
                    .iter()
                    .zip(r.report.values())
                    .zip(spread)
                    .map(|((c, m), s)| format!("{c} {m:.4}±{s:.4}"))
                    .collect();
                println!("{:<14} {}", r.setting, cells.join("  "));
            }
        }
        Command::Grid { config, data, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.train.seeds = vec![s];
            }
            let all = dataset(&cfg, data.as_deref())?;
            let (tr, va, _) = splits(&cfg, &all)?;
            let results = grid_search(&cfg, &cfg.grid, &tr, &va)?;
            write_grid_table(&out, &results)?;
            if let Some(best) = results.first() {
                println!("best: {:?} val_reg {:.4}", best.assignment, best.val_reg);
            }
        }
        Command::ExportEmbeddings { checkpoint, data, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let data = load_data(&data)?;
            let (_, fused) = predict_all(&ck.model, &ck.config.train.modalities, &data)?;
            let mut w = csv::Writer::from_path(&out)?;
            let mut header = vec!["id".to_string(), "label".into(), "class".into()];
            header.extend((0..fused.cols()).map(|j| format!("f_{j}")));
            w.write_record(&header)?;
            for (i, s) in data.iter().enumerate() {
                let mut row = vec![s.id.clone(), s.label.to_string(), sentiment_class(s.label)?.as_str().to_string()];
                row.extend(fused.row(i).iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
            println!("wrote {} embeddings of width {} to {}", data.len(), fused.cols(), out.display());
        }
    }
    Ok(())
}

fn format_report(r: &MetricsReport) -> String {
    MetricsReport::COLUMNS
        .iter()
        .zip(r.values())
        .map(|(c, v)| format!("{c}={v:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Population standard deviation of each metric across seeds.
fn spread(reports: &[MetricsReport]) -> [f64; 7] {
    let k = reports.len() as f64;
    let mut out = [0.0; 7];
    for (j, o) in out.iter_mut().enumerate() {
        let mean = reports.iter().map(|r| r.values()[j]).sum::<f64>() / k;
        *o = (reports.iter().map(|r| (r.values()[j] - mean).powi(2)).sum::<f64>() / k).sqrt();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_suite_is_a_usage_error() {
        let err = Cli::try_parse_from(["mmcl", "ablate", "--config", "c.toml", "--suite", "bogus", "--out", "x.csv"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn config_errors_exit_with_two() {
        assert_eq!(exit_code(&MmclError::config("x", "y")), 2);
        assert_eq!(exit_code(&MmclError::validation("y")), 1);
    }
}
