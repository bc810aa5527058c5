// SPDX-License-Identifier: Apache-2.0

//! The whole two-step pipeline for one method, driven from a JSON config
//! like the `run` subcommand.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [epochs]
//! ```

use std::env;

use crystalgan::corpus::{make_synthetic_corpus, CorpusSpec, Prototype};
use crystalgan::pipeline::{report, run_pipeline, Method, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = env::args().nth(1).map_or(Ok(200), |s| s.parse())?;
    let root = env::temp_dir().join("crystalgan_full");
    let _ = std::fs::remove_dir_all(&root);
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Pd", (3.9, 4.2), 35, 1), &root.join("PdH"))?;
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Ni", (3.6, 3.9), 35, 2), &root.join("NiH"))?;

    let mut cfg = RunConfig::new(root.join("PdH"), root.join("NiH"), root.join("run"), "Pd", "Ni", Method::Crystalgan);
    cfg.seeds = vec![0];
    cfg.hyper.epochs = epochs;
    let config_path = root.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&cfg)?)?;
    let cfg = RunConfig::load(&config_path)?;

    let out = run_pipeline(&cfg)?;
    for s in &out.manifest.seeds {
        println!("seed {} good {}/{} ({} decoded) in {:.1} s", s.seed, s.good_count, s.total, s.decoded, s.wall_clock_secs);
    }
    println!("{}", report(&[out.out_dir.clone()])?.to_text());
    println!("artifacts under {}", out.out_dir.display());
    Ok(())
}
