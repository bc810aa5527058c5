// SPDX-License-Identifier: Apache-2.0

//! Step-1 training followed by feature transfer: the placeholder metal block
//! of every binary sample is filled from the generator output.
//!
//! ```text
//! cargo run --release --example feature_transfer -- [epochs]
//! ```

use std::env;

use crystalgan::corpus::{make_synthetic_corpus, CorpusSpec, Prototype};
use crystalgan::crossgan::{train, GanModel, HyperParams, StepTag};
use crystalgan::encoding::{load_domain_dataset, DomainTag, Normalizer, SlotMap};
use crystalgan::transfer::build_step2_datasets;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = env::args().nth(1).map_or(Ok(100), |s| s.parse())?;
    let root = env::temp_dir().join("crystalgan_transfer");
    let _ = std::fs::remove_dir_all(&root);
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Pd", (3.9, 4.2), 35, 1), &root.join("PdH"))?;
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Ni", (3.6, 3.9), 35, 2), &root.join("NiH"))?;

    let slots = SlotMap::ternary("Pd", "Ni")?;
    let ah = load_domain_dataset(&root.join("PdH"), DomainTag::AH, &slots)?;
    let bh = load_domain_dataset(&root.join("NiH"), DomainTag::BH, &slots)?;
    let hp = HyperParams { epochs, ..HyperParams::default() };
    let mut model = GanModel::new(StepTag::Step1, &hp, Normalizer::fit(ah.samples.iter().chain(&bh.samples)), "Pd", "Ni")?;
    train(&mut model, &ah, &bh, &hp)?;

    let (ahbg, bhag, manifest) = build_step2_datasets(&ah, &bh, &model, hp.threshold)?;
    println!("AHBg {} samples ({} dropped)", ahbg.len(), manifest.dropped_ah);
    println!("BHAg {} samples ({} dropped)", bhag.len(), manifest.dropped_bh);
    for (before, after) in ah.samples.iter().zip(&ahbg.samples).take(3) {
        println!(
            "  occupancy {:?} -> {:?}, H block unchanged: {}",
            before.counts(hp.threshold),
            after.counts(hp.threshold),
            before.blocks[1] == after.blocks[1]
        );
    }
    Ok(())
}
