// SPDX-License-Identifier: Apache-2.0

//! Runs all four methods on synthetic PdH / NiH corpora and prints the
//! comparison table.
//!
//! ```text
//! cargo run --release --example compare_methods -- [epochs] [seeds] [geo_mode]
//! ```

use std::env;
use std::time::Instant;

use crystalgan::corpus::{make_synthetic_corpus, CorpusSpec, Prototype};
use crystalgan::geometry::GeoMode;
use crystalgan::pipeline::{report, run_pipeline, Method, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = env::args().collect();
    let epochs: usize = args.get(1).map_or(Ok(200), |s| s.parse())?;
    let n_seeds: u64 = args.get(2).map_or(Ok(2), |s| s.parse())?;
    let geo_mode: GeoMode = args.get(3).map_or(Ok(GeoMode::Paper), |s| s.parse())?;

    let root = env::temp_dir().join("crystalgan_compare");
    let _ = std::fs::remove_dir_all(&root);
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Pd", (3.9, 4.2), 35, 1), &root.join("PdH"))?;
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Ni", (3.6, 3.9), 35, 2), &root.join("NiH"))?;

    let mut dirs = Vec::new();
    for method in Method::ALL {
        let start = Instant::now();
        let mut cfg = RunConfig::new(root.join("PdH"), root.join("NiH"), root.join(method.as_str()), "Pd", "Ni", method);
        cfg.seeds = (0..n_seeds).collect();
        cfg.hyper.epochs = epochs;
        cfg.hyper.geo_mode = geo_mode;
        cfg.save_checkpoints = false;
        let out = run_pipeline(&cfg)?;
        for (s, logs) in out.manifest.seeds.iter().zip(&out.logs) {
            let trends: Vec<String> = logs
                .iter()
                .filter_map(|l| l.generator_trend(0.1))
                .map(|(first, last)| format!("{first:.3}->{last:.3}"))
                .collect();
            println!(
                "{:<26} seed {} good {:>2}/{:<2} decoded {:>2} loss_g {}",
                method.as_str(),
                s.seed,
                s.good_count,
                s.total,
                s.decoded,
                trends.join(" ")
            );
        }
        println!("{method}: {:.1} s", start.elapsed().as_secs_f64());
        dirs.push(out.out_dir);
    }
    println!("\n{}", report(&dirs)?.to_text());
    println!("artifacts under {}", root.display());
    Ok(())
}
