//! Regenerates the bundled synthetic datasets.
//!
//! cargo run -p pibgen --example make_synthetic -- <output-dir>

use std::fs::File;
use std::path::PathBuf;

use pibgen::synth::{generate, write_frame_csv, SynthSpec};

fn main() -> pibgen::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")));
    std::fs::create_dir_all(&dir)?;
    let binary = generate(&SynthSpec::default())?;
    write_frame_csv(&binary, File::create(dir.join("indiana_synthetic.csv"))?)?;
    let continuous = generate(&SynthSpec {
        n_population: 300,
        n_sample: 40,
        n_treated: 20,
        seed: 7,
        binary: false,
        ..Default::default()
    })?;
    write_frame_csv(&continuous, File::create(dir.join("continuous_synthetic.csv"))?)?;
    eprintln!("wrote datasets to {}", dir.display());
    Ok(())
}
