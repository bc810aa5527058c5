// SPDX-License-Identifier: Apache-2.0

//! Periodic first-neighbour distances and the pair distribution of a
//! rocksalt hydride, plus the validator verdict.
//!
//! ```text
//! cargo run --example neighbor_pdf -- [lattice_constant]
//! ```

use std::env;

use crystalgan::corpus::{synthetic_structures, CorpusSpec, Prototype};
use crystalgan::geometry::{neighbor_distances, pair_distribution, validate_structure, GeoConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a: f64 = env::args().nth(1).map_or(Ok(4.0), |s| s.parse())?;
    let mut spec = CorpusSpec::new(Prototype::Rocksalt, "Pd", (a, a), 1, 0);
    spec.jitter = 0.0;
    let s = synthetic_structures(&spec)?.remove(0);

    let report = neighbor_distances(&s, 6.0)?;
    println!("{} pairs within 6 A", report.pairs.len());
    for f in report.per_atom_first.iter().filter(|f| f.atom == 0) {
        println!("  atom 0 ({}) nearest {}-{}: {:.4} A", s.sites[0].species, f.class.0, f.class.1, f.distance);
    }

    let pdf = pair_distribution(&s, 0.1, 6.0)?;
    let peaks: Vec<String> = pdf
        .total
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0.0)
        .map(|(k, c)| format!("{:.2}:{c:.1}", (k as f64 + 0.5) * pdf.bin_width))
        .collect();
    println!("g(r) peaks (A:count) {}", peaks.join(" "));

    let verdict = validate_structure(&s, &GeoConfig::hydride("Pd", "Ni"))?;
    println!("good: {} ({} violations)", verdict.good, verdict.violations.len());
    Ok(())
}
