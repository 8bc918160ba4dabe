//! Score a set of predictions with every sentiment metric.

use mmcl::metrics::MetricsReport;

fn main() -> mmcl::Result<()> {
    let labels = [2.4, -1.2, 0.0, 0.6, -2.8, 1.4, 0.0, -0.2, 3.0, -3.0];
    let preds = [1.9, -0.7, 0.3, -0.1, -2.2, 1.1, -0.4, -0.6, 2.7, -1.5];
    let r = MetricsReport::compute(&preds, &labels)?;
    for (name, v) in MetricsReport::COLUMNS.iter().zip(r.values()) {
        println!("{name:<10} {v:.4}");
    }
    println!("({} samples, {} with non-zero labels)", r.n_samples, r.n_non0);
    Ok(())
}
