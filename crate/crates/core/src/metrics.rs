//! Sentiment regression metrics: seven-class accuracy, binary accuracy and F1
//! under both zero-label conventions, mean absolute error and Pearson correlation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MmclError, Result};

/// Binary convention for Acc2 and F1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryConvention {
    /// non-negative vs negative, zero labels included
    Has0,
    /// positive vs negative, zero labels excluded
    Non0,
}

fn check_pair(preds: &[f64], labels: &[f64]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(MmclError::validation(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(MmclError::validation("metrics need at least one sample"));
    }
    Ok(())
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, y)| !(-3.0..=3.0).contains(*y)) {
        return Err(MmclError::LabelOutOfRange { record: i + 1, label: y });
    }
    Ok(())
}

/// Integer class in -3..=3; `f64::round` rounds half away from zero.
fn seven_class(v: f64) -> i32 {
    v.clamp(-3.0, 3.0).round() as i32
}

pub fn acc7(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(preds, labels)?;
    check_labels(labels)?;
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(p, y)| seven_class(**p) == seven_class(**y))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Binary accuracy and F1 (positive sentiment is the positive class).
/// Returns `(acc, f1, evaluated_count)`.
pub fn acc2_f1(preds: &[f64], labels: &[f64], convention: BinaryConvention) -> Result<(f64, f64, usize)> {
    check_pair(preds, labels)?;
    let pairs: Vec<(bool, bool)> = match convention {
        BinaryConvention::Has0 => preds.iter().zip(labels).map(|(&p, &y)| (p >= 0.0, y >= 0.0)).collect(),
        BinaryConvention::Non0 => preds
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y != 0.0)
            .map(|(&p, &y)| (p > 0.0, y > 0.0))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(MmclError::Degenerate("no non-zero labels left for the non-0 metrics".into()));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    let mut correct = 0usize;
    for &(p, y) in &pairs {
        correct += usize::from(p == y);
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    // With no positive on either side every prediction agrees with its label.
    let f1 = if tp + fp + fneg == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    };
    Ok((correct as f64 / pairs.len() as f64, f1, pairs.len()))
}

pub fn mae(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(preds, labels)?;
    Ok(preds.iter().zip(labels).map(|(p, y)| (y - p).abs()).sum::<f64>() / preds.len() as f64)
}

pub fn pearson_corr(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(preds, labels)?;
    if preds.len() < 2 {
        return Err(MmclError::validation("correlation needs at least two samples"));
    }
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let ml = labels.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, y) in preds.iter().zip(labels) {
        let (dp, dy) = (p - mp, y - ml);
        sxy += dp * dy;
        sxx += dp * dp;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MmclError::Degenerate("correlation with a constant vector".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Full metric set for one evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc7: f64,
    pub acc2_has0: f64,
    pub acc2_non0: f64,
    pub f1_has0: f64,
    pub f1_non0: f64,
    pub mae: f64,
    pub corr: f64,
    #[serde(skip)]
    pub n_samples: usize,
    /// samples behind the non-0 metrics
    #[serde(skip)]
    pub n_non0: usize,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 7] = ["acc7", "acc2_has0", "acc2_non0", "f1_has0", "f1_non0", "mae", "corr"];

    /// Computes every metric. A constant prediction (or label) vector has no
    /// defined correlation and is reported as `corr = 0`; a set without
    /// non-zero labels reports zeros for the non-0 metrics.
    pub fn compute(preds: &[f64], labels: &[f64]) -> Result<Self> {
        check_pair(preds, labels)?;
        if let Some(p) = preds.iter().find(|p| !p.is_finite()) {
            return Err(MmclError::Numerical(format!("non-finite prediction {p}")));
        }
        let (acc2_has0, f1_has0, n) = acc2_f1(preds, labels, BinaryConvention::Has0)?;
        let (acc2_non0, f1_non0, n_non0) = match acc2_f1(preds, labels, BinaryConvention::Non0) {
            Ok(v) => v,
            Err(MmclError::Degenerate(_)) => (0.0, 0.0, 0),
            Err(e) => return Err(e),
        };
        let corr = match pearson_corr(preds, labels) {
            Ok(c) => c,
            Err(MmclError::Degenerate(_)) | Err(MmclError::Validation(_)) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            acc7: acc7(preds, labels)?,
            acc2_has0,
            acc2_non0,
            f1_has0,
            f1_non0,
            mae: mae(preds, labels)?,
            corr,
            n_samples: n,
            n_non0,
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.acc7,
            self.acc2_has0,
            self.acc2_non0,
            self.f1_has0,
            self.f1_non0,
            self.mae,
            self.corr,
        ]
    }

    /// Element-wise mean of several reports.
    pub fn mean(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(MmclError::validation("cannot average zero reports"));
        }
        let k = reports.len() as f64;
        let mut acc = [0.0; 7];
        for r in reports {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v / k;
            }
        }
        Ok(MetricsReport {
            acc7: acc[0],
            acc2_has0: acc[1],
            acc2_non0: acc[2],
            f1_has0: acc[3],
            f1_non0: acc[4],
            mae: acc[5],
            corr: acc[6],
            n_samples: reports[0].n_samples,
            n_non0: reports[0].n_non0,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::COLUMNS)?;
        w.write_record(self.values().map(|v| v.to_string()))?;
        w.flush()?;
        Ok(())
    }
}

/// Writes `setting,<metric columns>` rows.
pub fn write_results_table(path: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["setting"];
    header.extend(MetricsReport::COLUMNS);
    w.write_record(&header)?;
    for (name, r) in rows {
        let mut rec = vec![name.clone()];
        rec.extend(r.values().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
