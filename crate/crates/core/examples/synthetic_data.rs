//! Generate a synthetic dataset, write it as CSV, read it back, and split it.

use mmcl::data::{generate_synthetic_dataset, load_dataset, split_dataset, write_dataset, DataFormat, SynthSpec};

fn main() -> mmcl::Result<()> {
    let spec = SynthSpec {
        num_samples: 50,
        ..SynthSpec::default()
    };
    let data = generate_synthetic_dataset(&spec)?;
    let dir = std::env::temp_dir().join("mmcl-example-synth");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("synth.csv");
    write_dataset(&path, &data, DataFormat::Csv)?;
    let back = load_dataset(&path, DataFormat::Csv)?;
    assert_eq!(back, data);

    let (train, val, test) = split_dataset(&data, (0.7, 0.15, 0.15), 11)?;
    println!("{} samples -> train {} / val {} / test {}", data.len(), train.len(), val.len(), test.len());
    for s in data.iter().take(3) {
        println!("{}  label {:+.3}  shapes {:?}", s.id, s.label, s.shapes());
    }
    Ok(())
}
