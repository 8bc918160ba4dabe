//! Multimodal utterance data: synthetic generation, CSV/JSON ingestion,
//! splitting, batching and sentiment-class assignment.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MmclError, Result};
use crate::tensor::Matrix;

pub const LABEL_MIN: f64 = -3.0;
pub const LABEL_MAX: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Audio,
    Vision,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Vision];

    /// Column prefix used by the CSV schema.
    pub fn prefix(self) -> &'static str {
        match self {
            Modality::Text => "t",
            Modality::Audio => "a",
            Modality::Vision => "v",
        }
    }
}

/// One modality's feature sequence, `length x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalitySequence {
    modality: Modality,
    values: Matrix,
}

impl ModalitySequence {
    pub fn new(modality: Modality, values: Matrix) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(MmclError::validation(format!(
                "{modality:?} sequence must have at least one step and one feature, got {:?}",
                values.shape()
            )));
        }
        if !values.is_finite() {
            return Err(MmclError::validation(format!("{modality:?} sequence has non-finite values")));
        }
        Ok(ModalitySequence { modality, values })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn length(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceTriplet {
    pub id: String,
    pub label: f64,
    pub text: ModalitySequence,
    pub audio: ModalitySequence,
    pub vision: ModalitySequence,
}

impl UtteranceTriplet {
    pub fn new(
        id: impl Into<String>,
        label: f64,
        text: ModalitySequence,
        audio: ModalitySequence,
        vision: ModalitySequence,
    ) -> Result<Self> {
        check_label(label)?;
        for (seq, want) in [(&text, Modality::Text), (&audio, Modality::Audio), (&vision, Modality::Vision)] {
            if seq.modality() != want {
                return Err(MmclError::validation(format!(
                    "expected a {want:?} sequence, got {:?}",
                    seq.modality()
                )));
            }
        }
        Ok(UtteranceTriplet {
            id: id.into(),
            label,
            text,
            audio,
            vision,
        })
    }

    pub fn sequence(&self, m: Modality) -> &ModalitySequence {
        match m {
            Modality::Text => &self.text,
            Modality::Audio => &self.audio,
            Modality::Vision => &self.vision,
        }
    }

    /// True when all three modalities share one sequence length.
    pub fn is_aligned(&self) -> bool {
        self.text.length() == self.audio.length() && self.audio.length() == self.vision.length()
    }

    /// `(length, dim)` for text, audio, vision.
    pub fn shapes(&self) -> [(usize, usize); 3] {
        Modality::ALL.map(|m| {
            let s = self.sequence(m);
            (s.length(), s.dim())
        })
    }
}

fn check_label(label: f64) -> Result<()> {
    if !(LABEL_MIN..=LABEL_MAX).contains(&label) {
        return Err(MmclError::validation(format!("label {label} outside [-3, 3]")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentClass {
    Positive,
    Neutral,
    Negative,
}

impl SentimentClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SentimentClass::Positive => "positive",
            SentimentClass::Neutral => "neutral",
            SentimentClass::Negative => "negative",
        }
    }
}

/// Exact zero is neutral; otherwise the sign decides.
pub fn sentiment_class(y: f64) -> Result<SentimentClass> {
    check_label(y)?;
    Ok(if y > 0.0 {
        SentimentClass::Positive
    } else if y < 0.0 {
        SentimentClass::Negative
    } else {
        SentimentClass::Neutral
    })
}

/// Checks that every sample shares the per-modality `(length, dim)` of the first.
pub fn check_uniform_shapes(data: &[UtteranceTriplet]) -> Result<()> {
    let Some(first) = data.first() else { return Ok(()) };
    let want = first.shapes();
    for (i, s) in data.iter().enumerate() {
        if s.shapes() != want {
            return Err(MmclError::Parse {
                record: i + 1,
                message: format!("modality shapes {:?} differ from the first record's {:?}", s.shapes(), want),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Parameters of the synthetic generator. Every modality carries informative
/// columns that are smooth functions of the latent sentiment; the last
/// `noise_dims_*` columns of audio and vision are pure noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub num_samples: usize,
    /// `(N_t, N_a, N_v)`
    pub lengths: [usize; 3],
    /// `(d_t, d_a, d_v)`
    pub dims: [usize; 3],
    pub shared_latent_dim: usize,
    pub noise_dims_audio: usize,
    pub noise_dims_vision: usize,
    pub label_noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_samples: 200,
            lengths: [8, 8, 8],
            dims: [12, 16, 16],
            shared_latent_dim: 4,
            noise_dims_audio: 8,
            noise_dims_vision: 8,
            label_noise_std: 0.1,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(MmclError::config("synth.num_samples", "must be positive"));
        }
        for (i, name) in ["text", "audio", "vision"].iter().enumerate() {
            if self.lengths[i] == 0 {
                return Err(MmclError::config(format!("synth.lengths[{i}]"), format!("{name} length must be positive")));
            }
            if self.dims[i] == 0 {
                return Err(MmclError::config(format!("synth.dims[{i}]"), format!("{name} dim must be positive")));
            }
        }
        if self.shared_latent_dim == 0 {
            return Err(MmclError::config("synth.shared_latent_dim", "must be positive"));
        }
        if self.noise_dims_audio >= self.dims[1] {
            return Err(MmclError::config(
                "synth.noise_dims_audio",
                format!("{} noise columns leave no informative audio column (d_a = {})", self.noise_dims_audio, self.dims[1]),
            ));
        }
        if self.noise_dims_vision >= self.dims[2] {
            return Err(MmclError::config(
                "synth.noise_dims_vision",
                format!("{} noise columns leave no informative vision column (d_v = {})", self.noise_dims_vision, self.dims[2]),
            ));
        }
        if !(self.label_noise_std.is_finite() && self.label_noise_std >= 0.0) {
            return Err(MmclError::config("synth.label_noise_std", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn noise_dims(&self, m: Modality) -> usize {
        match m {
            Modality::Text => 0,
            Modality::Audio => self.noise_dims_audio,
            Modality::Vision => self.noise_dims_vision,
        }
    }
}

struct ModalityRecipe {
    mixing: Matrix,
    freq: Vec<f64>,
    phase: Vec<f64>,
    nuisance: Vec<f64>,
    nuisance_scale: f64,
}

pub fn generate_synthetic_dataset(spec: &SynthSpec) -> Result<Vec<UtteranceTriplet>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.shared_latent_dim;
    let latent_freq: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..1.0)).collect();
    let latent_phase: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let latent = |y: f64| -> Vec<f64> {
        (0..k)
            .map(|i| if i == 0 { y / 3.0 } else { (latent_freq[i] * y + latent_phase[i]).tanh() })
            .collect()
    };

    let recipes: Vec<ModalityRecipe> = Modality::ALL
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let informative = spec.dims[mi] - spec.noise_dims(m);
            let mix_std = 1.0 / (k as f64).sqrt();
            let mixing = Matrix::from_fn(informative, k, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * mix_std
            });
            ModalityRecipe {
                mixing,
                freq: (0..informative).map(|_| rng.random_range(0.2..1.5)).collect(),
                phase: (0..informative).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect(),
                nuisance: (0..informative).map(|_| StandardNormal.sample(&mut rng)).collect(),
                nuisance_scale: if m == Modality::Text { 0.2 } else { 0.5 },
            }
        })
        .collect();

    let label_noise = Normal::new(0.0, spec.label_noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| MmclError::config("synth.label_noise_std", e.to_string()))?;

    let mut out = Vec::with_capacity(spec.num_samples);
    for idx in 0..spec.num_samples {
        let y: f64 = rng.random_range(LABEL_MIN..=LABEL_MAX);
        let u = latent(y);
        let mut seqs = Vec::with_capacity(3);
        for (mi, &m) in Modality::ALL.iter().enumerate() {
            let r = &recipes[mi];
            let (len, dim) = (spec.lengths[mi], spec.dims[mi]);
            let informative = dim - spec.noise_dims(m);
            let sample_nuisance: f64 = StandardNormal.sample(&mut rng);
            let mut values = Matrix::zeros(len, dim);
            for t in 0..len {
                for j in 0..dim {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    let v = if j < informative {
                        let base: f64 = (0..k).map(|q| r.mixing.get(j, q) * u[q]).sum();
                        let temporal = 1.0 + 0.3 * (r.freq[j] * t as f64 + r.phase[j]).sin();
                        base * temporal + r.nuisance_scale * r.nuisance[j] * sample_nuisance + 0.1 * eps
                    } else {
                        eps
                    };
                    values.set(t, j, v);
                }
            }
            seqs.push(ModalitySequence::new(m, values)?);
        }
        let noisy = if spec.label_noise_std > 0.0 { y + label_noise.sample(&mut rng) } else { y };
        let label = noisy.clamp(LABEL_MIN, LABEL_MAX);
        let vision = seqs.pop().expect("three modalities");
        let audio = seqs.pop().expect("three modalities");
        let text = seqs.pop().expect("three modalities");
        out.push(UtteranceTriplet::new(format!("syn-{idx:05}"), label, text, audio, vision)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Json,
}

impl DataFormat {
    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(DataFormat::Csv),
            Some("json") => Ok(DataFormat::Json),
            _ => Err(MmclError::validation(format!(
                "cannot infer data format from `{}` (expected .csv or .json)",
                path.display()
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    label: f64,
    text: Vec<Vec<f64>>,
    audio: Vec<Vec<f64>>,
    vision: Vec<Vec<f64>>,
}

pub fn write_dataset(path: &Path, data: &[UtteranceTriplet], format: DataFormat) -> Result<()> {
    match format {
        DataFormat::Csv => write_csv(path, data),
        DataFormat::Json => {
            let records: Vec<JsonRecord> = data
                .iter()
                .map(|s| JsonRecord {
                    id: s.id.clone(),
                    label: s.label,
                    text: s.text.values().to_rows(),
                    audio: s.audio.values().to_rows(),
                    vision: s.vision.values().to_rows(),
                })
                .collect();
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer(&mut w, &records)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn write_csv(path: &Path, data: &[UtteranceTriplet]) -> Result<()> {
    check_uniform_shapes(data)?;
    let mut w = csv::Writer::from_path(path)?;
    let Some(first) = data.first() else {
        w.write_record(["id", "label"])?;
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["id".to_string(), "label".to_string()];
    for m in Modality::ALL {
        let s = first.sequence(m);
        for i in 0..s.length() {
            for j in 0..s.dim() {
                header.push(format!("{}_{i}_{j}", m.prefix()));
            }
        }
    }
    w.write_record(&header)?;
    for s in data {
        let mut row = Vec::with_capacity(header.len());
        row.push(s.id.clone());
        row.push(s.label.to_string());
        for m in Modality::ALL {
            row.extend(s.sequence(m).values().as_slice().iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Vec<UtteranceTriplet>> {
    let data = match format {
        DataFormat::Csv => load_csv(path)?,
        DataFormat::Json => load_json(path)?,
    };
    check_uniform_shapes(&data)?;
    Ok(data)
}

fn seq_from_rows(m: Modality, rows: Vec<Vec<f64>>, record: usize) -> Result<ModalitySequence> {
    let values = Matrix::from_rows(&rows).map_err(|_| MmclError::Parse {
        record,
        message: format!("ragged {m:?} matrix"),
    })?;
    ModalitySequence::new(m, values).map_err(|e| MmclError::Parse {
        record,
        message: e.to_string(),
    })
}

fn load_json(path: &Path) -> Result<Vec<UtteranceTriplet>> {
    let reader = BufReader::new(File::open(path)?);
    let records: Vec<serde_json::Value> = serde_json::from_reader(reader).map_err(|e| MmclError::Parse {
        record: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::with_capacity(records.len());
    for (i, raw) in records.into_iter().enumerate() {
        let record = i + 1;
        let r: JsonRecord = serde_json::from_value(raw).map_err(|e| MmclError::Parse {
            record,
            message: e.to_string(),
        })?;
        if !(LABEL_MIN..=LABEL_MAX).contains(&r.label) {
            return Err(MmclError::LabelOutOfRange { record, label: r.label });
        }
        let text = seq_from_rows(Modality::Text, r.text, record)?;
        let audio = seq_from_rows(Modality::Audio, r.audio, record)?;
        let vision = seq_from_rows(Modality::Vision, r.vision, record)?;
        out.push(UtteranceTriplet::new(r.id, r.label, text, audio, vision)?);
    }
    Ok(out)
}

/// Column positions of one modality block: `cells[i][j]` = CSV column of step i, feature j.
struct CsvBlock {
    cells: Vec<Vec<usize>>,
}

fn parse_header(header: &csv::StringRecord) -> Result<(usize, usize, [CsvBlock; 3])> {
    let bad = |message: String| MmclError::Parse { record: 0, message };
    let mut id_col = None;
    let mut label_col = None;
    let mut blocks: [BTreeMap<(usize, usize), usize>; 3] = Default::default();
    for (col, name) in header.iter().enumerate() {
        match name {
            "id" => id_col = Some(col),
            "label" => label_col = Some(col),
            _ => {
                let mut parts = name.split('_');
                let (Some(p), Some(i), Some(j), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                    return Err(bad(format!("unrecognised column `{name}`")));
                };
                let mi = Modality::ALL
                    .iter()
                    .position(|m| m.prefix() == p)
                    .ok_or_else(|| bad(format!("unrecognised column `{name}`")))?;
                let (i, j) = match (i.parse::<usize>(), j.parse::<usize>()) {
                    (Ok(i), Ok(j)) => (i, j),
                    _ => return Err(bad(format!("unrecognised column `{name}`"))),
                };
                if blocks[mi].insert((i, j), col).is_some() {
                    return Err(bad(format!("duplicate column `{name}`")));
                }
            }
        }
    }
    let id_col = id_col.ok_or_else(|| bad("missing `id` column".into()))?;
    let label_col = label_col.ok_or_else(|| bad("missing `label` column".into()))?;
    let mut out: Vec<CsvBlock> = Vec::with_capacity(3);
    for (mi, m) in Modality::ALL.iter().enumerate() {
        let map = &blocks[mi];
        let len = map.keys().map(|k| k.0 + 1).max().unwrap_or(0);
        let dim = map.keys().map(|k| k.1 + 1).max().unwrap_or(0);
        if len == 0 || len * dim != map.len() {
            return Err(bad(format!("{m:?} columns do not form a complete {}_i_j grid", m.prefix())));
        }
        let cells = (0..len).map(|i| (0..dim).map(|j| map[&(i, j)]).collect()).collect();
        out.push(CsvBlock { cells });
    }
    let vision = out.pop().expect("3 blocks");
    let audio = out.pop().expect("3 blocks");
    let text = out.pop().expect("3 blocks");
    Ok((id_col, label_col, [text, audio, vision]))
}

fn load_csv(path: &Path) -> Result<Vec<UtteranceTriplet>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers().map_err(|e| MmclError::Parse {
        record: 0,
        message: e.to_string(),
    })?.clone();
    let (id_col, label_col, blocks) = parse_header(&header)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let record = i + 1;
        let row = row.map_err(|e| MmclError::Parse {
            record,
            message: e.to_string(),
        })?;
        let field = |col: usize| -> Result<f64> {
            let raw = row.get(col).ok_or_else(|| MmclError::Parse {
                record,
                message: format!("missing column {col}"),
            })?;
            raw.trim().parse::<f64>().map_err(|_| MmclError::Parse {
                record,
                message: format!("`{raw}` is not a number (column `{}`)", &header[col]),
            })
        };
        let label = field(label_col)?;
        if !(LABEL_MIN..=LABEL_MAX).contains(&label) {
            return Err(MmclError::LabelOutOfRange { record, label });
        }
        let mut seqs = Vec::with_capacity(3);
        for (mi, m) in Modality::ALL.iter().enumerate() {
            let rows = blocks[mi]
                .cells
                .iter()
                .map(|cols| cols.iter().map(|&c| field(c)).collect::<Result<Vec<f64>>>())
                .collect::<Result<Vec<_>>>()?;
            seqs.push(seq_from_rows(*m, rows, record)?);
        }
        let id = row.get(id_col).unwrap_or_default().to_string();
        let vision = seqs.pop().expect("3");
        let audio = seqs.pop().expect("3");
        let text = seqs.pop().expect("3");
        out.push(UtteranceTriplet::new(id, label, text, audio, vision)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splitting and batching
// ---------------------------------------------------------------------------

/// Shuffles with `seed` and cuts into train/val/test. Sizes are
/// `round(train*n)`, `round(val*n)` and the remainder.
pub fn split_dataset(
    data: &[UtteranceTriplet],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<UtteranceTriplet>, Vec<UtteranceTriplet>, Vec<UtteranceTriplet>)> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(MmclError::config("split.ratios", "every ratio must be positive"));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(MmclError::config("split.ratios", format!("ratios sum to {}, expected 1", tr + va + te)));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((tr * n as f64).round() as usize).min(n);
    let n_val = ((va * n as f64).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}

/// An ordered group of samples processed together.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub samples: Vec<&'a UtteranceTriplet>,
}

impl<'a> Batch<'a> {
    pub fn new(samples: Vec<&'a UtteranceTriplet>) -> Self {
        Batch { samples }
    }

    pub fn size(&self) -> usize {
        self.samples.len()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// Iterator over one epoch of batches.
pub struct BatchIter<'a> {
    data: &'a [UtteranceTriplet],
    order: Vec<usize>,
    batch_size: usize,
    min_size: usize,
    pos: usize,
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = Batch<'a>;

    fn next(&mut self) -> Option<Batch<'a>> {
        let end = (self.pos + self.batch_size).min(self.order.len());
        if end - self.pos < self.min_size.max(1) {
            return None;
        }
        let samples = self.order[self.pos..end].iter().map(|&i| &self.data[i]).collect();
        self.pos = end;
        Some(Batch::new(samples))
    }
}

/// Splits `data` into batches of `batch_size`, shuffled by `shuffle_seed` when
/// given. With `contrastive` set, a trailing batch with fewer than two
/// samples is dropped since it cannot form contrastive pairs.
pub fn batch_iterator(
    data: &[UtteranceTriplet],
    batch_size: usize,
    shuffle_seed: Option<u64>,
    contrastive: bool,
) -> Result<BatchIter<'_>> {
    if batch_size == 0 || (contrastive && batch_size < 2) {
        return Err(MmclError::config(
            "train.batch_size",
            format!("batch size {batch_size} is too small; contrastive losses need at least 2"),
        ));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(BatchIter {
        data,
        order,
        batch_size,
        min_size: if contrastive { 2 } else { 1 },
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            num_samples: 10,
            lengths: [3, 4, 2],
            dims: [3, 4, 5],
            noise_dims_audio: 2,
            noise_dims_vision: 1,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn sentiment_classes() {
        assert_eq!(sentiment_class(2.2).unwrap(), SentimentClass::Positive);
        assert_eq!(sentiment_class(0.0).unwrap(), SentimentClass::Neutral);
        assert_eq!(sentiment_class(-0.4).unwrap(), SentimentClass::Negative);
        assert!(sentiment_class(3.01).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic_dataset(&small_spec()).unwrap();
        let b = generate_synthetic_dataset(&small_spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].audio.values().shape(), (4, 4));
        assert!(!a[0].is_aligned());
    }

    #[test]
    fn noise_dims_equal_to_dim_is_rejected() {
        let spec = SynthSpec {
            noise_dims_audio: 16,
            ..SynthSpec::default()
        };
        match generate_synthetic_dataset(&spec) {
            Err(MmclError::Config { field, .. }) => assert_eq!(field, "synth.noise_dims_audio"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn split_sizes() {
        let data = generate_synthetic_dataset(&small_spec()).unwrap();
        let (a, b, c) = split_dataset(&data, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert!(split_dataset(&data, (0.8, 0.1, 0.2), 3).is_err());
    }

    #[test]
    fn batches_drop_singletons() {
        let spec = SynthSpec {
            num_samples: 65,
            ..small_spec()
        };
        let data = generate_synthetic_dataset(&spec).unwrap();
        let sizes: Vec<usize> = batch_iterator(&data, 32, Some(1), true).unwrap().map(|b| b.size()).collect();
        assert_eq!(sizes, vec![32, 32]);
        let sizes: Vec<usize> = batch_iterator(&data[..40], 32, None, true).unwrap().map(|b| b.size()).collect();
        assert_eq!(sizes, vec![32, 8]);
        assert!(batch_iterator(&data, 1, None, true).is_err());
        assert!(batch_iterator(&data, 1, None, false).is_ok());
    }
}
