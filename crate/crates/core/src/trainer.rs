//! Training, evaluation, grid search, the ablation suites and gradient checks.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::{relative_error, Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::config::{Config, PairingMode, PairingSchedule};
use crate::data::{batch_iterator, Batch, UtteranceTriplet};
use crate::error::{MmclError, Result};
use crate::losses::{LossBreakdown, PairingPhase};
use crate::metrics::MetricsReport;
use crate::model::{CrossPairing, LossPlan, ModalityMask, Mmcl};
use crate::optim::{warmup_lr, Adam, AdamHyper};
use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Matrix;

/// Steps averaged into one trace entry.
pub const TRACE_INTERVAL: usize = 5;
const EVAL_BATCH: usize = 64;

/// Averaged loss values, one entry per enabled loss every [`TRACE_INTERVAL`] steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub entries: Vec<TraceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub loss_name: String,
    pub value: f64,
}

impl TraceLog {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "loss_name", "value"])?;
        for e in &self.entries {
            w.write_record([e.step.to_string(), e.loss_name.clone(), e.value.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| MmclError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    /// Values logged for one loss, in step order.
    pub fn series(&self, name: &str) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .filter(|e| e.loss_name == name)
            .map(|e| (e.step, e.value))
            .collect()
    }
}

/// Running sums for the current trace window.
struct TraceWindow {
    sums: [f64; 6],
    counts: [usize; 6],
}

impl TraceWindow {
    fn new() -> Self {
        TraceWindow {
            sums: [0.0; 6],
            counts: [0; 6],
        }
    }

    fn push(&mut self, b: &LossBreakdown, present: &[bool; 6]) {
        for (i, name) in LossBreakdown::NAMES.iter().enumerate() {
            if present[i] {
                self.sums[i] += b.component(name).expect("known component");
                self.counts[i] += 1;
            }
        }
    }

    fn flush(&mut self, step: usize, names: &[&str], log: &mut TraceLog) {
        for name in names {
            let i = LossBreakdown::NAMES.iter().position(|n| n == name).expect("known component");
            if self.counts[i] > 0 {
                log.entries.push(TraceEntry {
                    step,
                    loss_name: name.to_string(),
                    value: self.sums[i] / self.counts[i] as f64,
                });
            }
        }
        *self = TraceWindow::new();
    }
}

/// Pairing used at 0-based `step` of a run with `total_steps` updates.
pub fn pairing_at(schedule: &PairingSchedule, step: usize, total_steps: usize) -> CrossPairing {
    match schedule.mode {
        PairingMode::Averaged => CrossPairing::Averaged,
        PairingMode::Curriculum => {
            let progress = step as f64 / total_steps.max(1) as f64;
            let [b1, b2] = schedule.boundaries;
            CrossPairing::Phase(if progress < b1 {
                PairingPhase::OriginOrigin
            } else if progress < b2 {
                PairingPhase::PredictPredict
            } else {
                PairingPhase::OriginPredict
            })
        }
    }
}

/// Number of batches one epoch yields.
pub fn batches_per_epoch(n: usize, batch_size: usize, contrastive: bool) -> usize {
    let min = if contrastive { 2 } else { 1 };
    let rem = n % batch_size;
    n / batch_size + usize::from(rem >= min)
}

fn mix(seed: u64, salt: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(i);
    rng.random()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub pairing: Option<PairingPhase>,
    pub lr: f64,
    pub breakdown: LossBreakdown,
    pub present: [bool; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// mean training regression loss over the epoch's steps
    pub train_reg: f64,
    pub val_reg: Option<f64>,
}

/// Everything a training run produces.
#[derive(Debug)]
pub struct TrainOutcome {
    /// parameters from the epoch with the lowest validation regression loss
    pub checkpoint: Checkpoint,
    pub trace: TraceLog,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

fn check_data(config: &Config, data: &[UtteranceTriplet], what: &str) -> Result<()> {
    crate::data::check_uniform_shapes(data)?;
    if config.train.aligned {
        if let Some(s) = data.iter().find(|s| !s.is_aligned()) {
            return Err(MmclError::validation(format!(
                "{what} sample `{}` is not token-aligned; set train.aligned = false for unaligned data",
                s.id
            )));
        }
    }
    Ok(())
}

fn input_dims(data: &[UtteranceTriplet]) -> [usize; 3] {
    data[0].shapes().map(|(_, d)| d)
}

/// Trains one model with `seed` and returns the best checkpoint by validation
/// regression loss (the last epoch when `val` is empty).
pub fn train(config: &Config, seed: u64, train: &[UtteranceTriplet], val: &[UtteranceTriplet]) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(MmclError::validation("training set is empty"));
    }
    check_data(config, train, "training")?;
    if !val.is_empty() {
        check_data(config, val, "validation")?;
        if input_dims(val) != input_dims(train) || val[0].shapes() != train[0].shapes() {
            return Err(MmclError::validation("validation shapes differ from the training set"));
        }
    }
    let tc = &config.train;
    let enabled = tc.ablation.enabled();
    let contrastive = enabled.any_contrastive();
    let per_epoch = batches_per_epoch(train.len(), tc.batch_size, contrastive);
    if per_epoch == 0 {
        return Err(MmclError::validation("training set too small for one batch"));
    }
    let total_steps = per_epoch * tc.epochs;
    let warmup_steps = (tc.warmup_fraction * total_steps as f64).round() as usize;
    let names = enabled.names();

    let mut model = Mmcl::new(&config.model, input_dims(train), tc.ablation.replace_transformer_with_linear, seed)?;
    let mut adam = Adam::new(&model.store, AdamHyper::default());
    let mut best: Option<(f64, usize, ParamStore, Adam)> = None;
    let mut trace = TraceLog::default();
    let mut window = TraceWindow::new();
    let mut steps = Vec::with_capacity(total_steps);
    let mut epochs = Vec::with_capacity(tc.epochs);
    let mut last_finite: Option<LossBreakdown> = None;
    let mut step = 0usize;

    for epoch in 1..=tc.epochs {
        let mut reg_sum = 0.0;
        let mut reg_count = 0usize;
        for batch in batch_iterator(train, tc.batch_size, Some(mix(seed, 1, epoch as u64)), contrastive)? {
            let pairing = pairing_at(&tc.pairing, step, total_steps);
            let plan = LossPlan {
                weights: tc.weights.clone(),
                enabled,
                variants: tc.variants,
                pairing,
                augment_seed: mix(seed, 2, step as u64),
            };
            step += 1;
            let diverged = |msg: String, last: &Option<LossBreakdown>| MmclError::Diverged {
                step,
                message: format!("{msg}; last finite breakdown: {last:?}"),
            };
            let mut tape = Tape::new();
            let out = model.forward(&mut tape, &batch, &tc.modalities, Some(&plan))?;
            let losses = out.losses.expect("plan given");
            let b = losses.breakdown;
            if !b.total.is_finite() {
                return Err(diverged(format!("total loss is {}", b.total), &last_finite));
            }
            let grads = tape.backward(losses.total)?.params(&tape);
            if grads.iter().any(|(_, g)| !g.is_finite()) {
                return Err(diverged("non-finite gradient".into(), &last_finite));
            }
            let lr_text = warmup_lr(tc.text_lr, step, warmup_steps);
            let lr_other = warmup_lr(tc.lr, step, warmup_steps);
            adam.update(&mut model.store, &grads, |g| match g {
                ParamGroup::TextEncoder => lr_text,
                ParamGroup::Other => lr_other,
            });
            last_finite = Some(b);
            reg_sum += b.reg;
            reg_count += 1;
            window.push(&b, &losses.present);
            if step % TRACE_INTERVAL == 0 {
                window.flush(step, &names, &mut trace);
            }
            steps.push(StepRecord {
                step,
                epoch,
                pairing: match pairing {
                    CrossPairing::Phase(p) if enabled.cross => Some(p),
                    _ => None,
                },
                lr: lr_other,
                breakdown: b,
                present: losses.present,
            });
        }
        let val_reg = if val.is_empty() {
            None
        } else {
            Some(regression_mae(&model, &tc.modalities, val)?)
        };
        epochs.push(EpochRecord {
            epoch,
            train_reg: reg_sum / reg_count.max(1) as f64,
            val_reg,
        });
        let score = val_reg.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, ..)| score < *s || val_reg.is_none()) {
            best = Some((score, epoch, model.store.clone(), adam.clone()));
        }
    }

    let (score, best_epoch, store, opt) = best.expect("at least one epoch");
    model.store = store;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            seed,
            epoch: best_epoch,
            val_loss: score.is_finite().then_some(score),
            model,
            optimizer: Some(opt),
        },
        trace,
        steps,
        epochs,
    })
}

/// Predictions and fused representations for every sample, in order.
pub fn predict_all(model: &Mmcl, mask: &ModalityMask, data: &[UtteranceTriplet]) -> Result<(Vec<f64>, Matrix)> {
    if data.is_empty() {
        return Err(MmclError::validation("cannot evaluate an empty dataset"));
    }
    let mut preds = Vec::with_capacity(data.len());
    let mut fused_rows = Vec::with_capacity(data.len());
    for batch in batch_iterator(data, EVAL_BATCH, None, false)? {
        let (p, f) = model.predict(&batch, mask)?;
        preds.extend(p);
        fused_rows.extend(f.to_rows());
    }
    Ok((preds, Matrix::from_rows(&fused_rows)?))
}

/// Mean absolute error of the model's predictions on `data`.
pub fn regression_mae(model: &Mmcl, mask: &ModalityMask, data: &[UtteranceTriplet]) -> Result<f64> {
    let (preds, _) = predict_all(model, mask, data)?;
    let labels: Vec<f64> = data.iter().map(|s| s.label).collect();
    crate::metrics::mae(&preds, &labels)
}

pub fn evaluate_model(model: &Mmcl, mask: &ModalityMask, data: &[UtteranceTriplet]) -> Result<MetricsReport> {
    if let Some(s) = data.first() {
        let dims = s.shapes().map(|(_, d)| d);
        if dims != model.input_dims {
            return Err(MmclError::Checkpoint(format!(
                "dataset feature widths {dims:?} do not match the checkpoint's {:?}",
                model.input_dims
            )));
        }
    }
    let (preds, _) = predict_all(model, mask, data)?;
    let labels: Vec<f64> = data.iter().map(|s| s.label).collect();
    MetricsReport::compute(&preds, &labels)
}

/// Evaluates a checkpoint with the modality mask it was trained with.
pub fn evaluate(checkpoint: &Checkpoint, test: &[UtteranceTriplet]) -> Result<MetricsReport> {
    evaluate_model(&checkpoint.model, &checkpoint.config.train.modalities, test)
}

/// Worker count for parallel runs: `MMCL_THREADS` if set, else the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var("MMCL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_parallel<T: Send, R: Send>(jobs: Vec<T>, f: impl Fn(T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| MmclError::validation(format!("cannot start worker pool: {e}")))?;
    pool.install(|| jobs.into_par_iter().map(f).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub assignment: Vec<(String, f64)>,
    /// validation regression loss of the selected epoch, averaged over seeds
    pub val_reg: f64,
}

/// Trains every point of the Cartesian product of `grid` and ranks the points
/// by validation regression loss (ascending).
pub fn grid_search(
    base: &Config,
    grid: &BTreeMap<String, Vec<f64>>,
    train_set: &[UtteranceTriplet],
    val: &[UtteranceTriplet],
) -> Result<Vec<GridResult>> {
    if grid.is_empty() || grid.values().any(Vec::is_empty) {
        return Err(MmclError::config("grid", "grid must name at least one parameter with at least one value"));
    }
    if val.is_empty() {
        return Err(MmclError::validation("grid search needs a validation set"));
    }
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (k, vals) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((k.clone(), v));
                    q
                })
            })
            .collect();
    }
    let mut jobs = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        let mut cfg = base.clone();
        for (k, v) in point {
            cfg.apply_override(k, *v)?;
        }
        cfg.validate()?;
        for &seed in &base.train.seeds {
            jobs.push((pi, cfg.clone(), seed));
        }
    }
    let scores = run_parallel(jobs, |(pi, cfg, seed)| {
        let out = train(&cfg, seed, train_set, val)?;
        Ok((pi, out.checkpoint.val_loss.unwrap_or(f64::INFINITY)))
    })?;
    let k = base.train.seeds.len() as f64;
    let mut results: Vec<GridResult> = points
        .into_iter()
        .enumerate()
        .map(|(pi, assignment)| GridResult {
            assignment,
            val_reg: scores.iter().filter(|(i, _)| *i == pi).map(|(_, s)| s / k).sum(),
        })
        .collect();
    results.sort_by(|a, b| a.val_reg.total_cmp(&b.val_reg));
    Ok(results)
}

pub fn write_grid_table(path: &Path, results: &[GridResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(first) = results.first() {
        let mut header = vec!["rank".to_string()];
        header.extend(first.assignment.iter().map(|(k, _)| k.clone()));
        header.push("val_reg".into());
        w.write_record(&header)?;
    }
    for (rank, r) in results.iter().enumerate() {
        let mut rec = vec![(rank + 1).to_string()];
        rec.extend(r.assignment.iter().map(|(_, v)| v.to_string()));
        rec.push(r.val_reg.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationSuite {
    Losses,
    Modalities,
    Weights,
}

pub const WEIGHT_SWEEP: [(&str, [f64; 6]); 3] = [
    ("mu", [0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
    ("eta", [0.4, 0.6, 0.8, 1.0, 1.2, 1.4]),
    ("alpha", [0.4, 0.6, 0.8, 1.0, 1.2, 1.4]),
];

/// Named configurations of one ablation suite, derived from `base`.
pub fn ablation_settings(base: &Config, suite: AblationSuite) -> Result<Vec<(String, Config)>> {
    let mut out = Vec::new();
    match suite {
        AblationSuite::Losses => {
            let flag_rows: [(&str, fn(&mut crate::model::AblationFlags)); 9] = [
                ("full", |_| {}),
                ("rp_transformer", |f| f.replace_transformer_with_linear = true),
                ("wo_uni", |f| f.disable_uni = true),
                ("wo_icl", |f| f.disable_icl = true),
                ("wo_cross", |f| f.disable_cross = true),
                ("wo_align", |f| f.disable_align = true),
                ("wo_uniform", |f| f.disable_uniform = true),
                ("wo_scl", |f| f.disable_scl = true),
                ("wo_contrast", |f| f.disable_all_contrast = true),
            ];
            for (name, set) in flag_rows {
                let mut c = base.clone();
                c.train.ablation = Default::default();
                set(&mut c.train.ablation);
                out.push((name.to_string(), c));
            }
        }
        AblationSuite::Modalities => {
            for (t, a, v) in [
                (false, true, false),
                (false, false, true),
                (true, false, false),
                (false, true, true),
                (true, true, false),
                (true, false, true),
                (true, true, true),
            ] {
                let mut c = base.clone();
                c.train.modalities = ModalityMask {
                    use_text: t,
                    use_audio: a,
                    use_vision: v,
                };
                out.push((c.train.modalities.label(), c));
            }
        }
        AblationSuite::Weights => {
            for (key, values) in WEIGHT_SWEEP {
                for v in values {
                    let mut c = base.clone();
                    c.apply_override(key, v)?;
                    out.push((format!("{key}={v}"), c));
                }
            }
        }
    }
    for (_, c) in &out {
        c.validate()?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub setting: String,
    /// mean over seeds
    pub report: MetricsReport,
    pub per_seed: Vec<MetricsReport>,
}

/// Trains and evaluates every setting of `suite` over the base config's seeds.
pub fn ablate(
    base: &Config,
    suite: AblationSuite,
    train_set: &[UtteranceTriplet],
    val: &[UtteranceTriplet],
    test: &[UtteranceTriplet],
) -> Result<Vec<AblationRow>> {
    let settings = ablation_settings(base, suite)?;
    let jobs: Vec<(usize, Config, u64)> = settings
        .iter()
        .enumerate()
        .flat_map(|(i, (_, c))| base.train.seeds.iter().map(move |&s| (i, c.clone(), s)))
        .collect();
    let reports = run_parallel(jobs, |(i, cfg, seed)| {
        let out = train(&cfg, seed, train_set, val)?;
        Ok((i, evaluate(&out.checkpoint, test)?))
    })?;
    settings
        .into_iter()
        .enumerate()
        .map(|(i, (setting, _))| {
            let per_seed: Vec<MetricsReport> = reports.iter().filter(|(j, _)| *j == i).map(|(_, r)| r.clone()).collect();
            Ok(AblationRow {
                setting,
                report: MetricsReport::mean(&per_seed)?,
                per_seed,
            })
        })
        .collect()
}

/// Compares analytic gradients of the scalar built by `f` against central
/// differences on `sample_size` randomly chosen parameter entries. Returns the
/// largest relative error, with denominators floored at `1e-6`.
pub fn check_param_gradients(
    store: &mut ParamStore,
    sample_size: usize,
    step: f64,
    seed: u64,
    f: impl Fn(&ParamStore) -> Result<(Tape, Var)>,
) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(MmclError::validation(format!("finite-difference step must be positive, got {step}")));
    }
    if sample_size == 0 {
        return Err(MmclError::validation("sample size must be positive"));
    }
    let (tape, root) = f(store)?;
    if !tape.scalar(root).is_finite() {
        return Err(MmclError::Numerical("loss is not finite".into()));
    }
    let grads = tape.backward(root)?.params(&tape);
    drop(tape);
    let total: usize = grads.iter().map(|(_, g)| g.len()).sum();
    if total == 0 {
        return Err(MmclError::validation("the loss depends on no parameter"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |store: &ParamStore| -> Result<f64> {
        let (t, r) = f(store)?;
        let v = t.scalar(r);
        if !v.is_finite() {
            return Err(MmclError::Numerical("loss is not finite under perturbation".into()));
        }
        Ok(v)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..sample_size {
        let mut k = rng.random_range(0..total);
        let (id, g) = grads
            .iter()
            .find(|(_, g)| {
                if k < g.len() {
                    true
                } else {
                    k -= g.len();
                    false
                }
            })
            .expect("index within total");
        let analytic = g.as_slice()[k];
        let orig = store.get(*id).as_slice()[k];
        store.get_mut(*id).as_mut_slice()[k] = orig + step;
        let up = eval(store);
        store.get_mut(*id).as_mut_slice()[k] = orig - step;
        let down = eval(store);
        store.get_mut(*id).as_mut_slice()[k] = orig;
        let numeric = (up? - down?) / (2.0 * step);
        worst = worst.max(relative_error(analytic, numeric, 1e-6));
    }
    Ok(worst)
}

/// Gradient check of the full objective w.r.t. a random sample of model parameters.
pub fn gradient_check(
    model: &mut Mmcl,
    batch: &Batch<'_>,
    mask: &ModalityMask,
    plan: &LossPlan,
    param_sample_size: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    let mut store = std::mem::take(&mut model.store);
    let m = &*model;
    let result = check_param_gradients(&mut store, param_sample_size, step, seed, |s| {
        let mut tape = Tape::new();
        let out = m.forward_with(s, &mut tape, batch, mask, Some(plan))?;
        let total = out.losses.expect("plan given").total;
        Ok((tape, total))
    });
    model.store = store;
    result
}
