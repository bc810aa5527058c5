// SPDX-License-Identifier: Apache-2.0

//! Train the first cross-domain GAN between PdH and NiH and decode a few
//! pseudo-binary outputs.
//!
//! ```text
//! cargo run --release --example train_step1 -- [epochs]
//! ```

use std::env;

use crystalgan::corpus::{make_synthetic_corpus, CorpusSpec, Prototype};
use crystalgan::crossgan::{generate, train, Direction, GanModel, HyperParams, StepTag};
use crystalgan::encoding::{decode, load_domain_dataset, DomainTag, Normalizer, SlotMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = env::args().nth(1).map_or(Ok(200), |s| s.parse())?;
    let root = env::temp_dir().join("crystalgan_step1");
    let _ = std::fs::remove_dir_all(&root);
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Pd", (3.9, 4.2), 35, 1), &root.join("PdH"))?;
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Ni", (3.6, 3.9), 35, 2), &root.join("NiH"))?;

    let slots = SlotMap::ternary("Pd", "Ni")?;
    let ah = load_domain_dataset(&root.join("PdH"), DomainTag::AH, &slots)?;
    let bh = load_domain_dataset(&root.join("NiH"), DomainTag::BH, &slots)?;

    let hp = HyperParams { epochs, ..HyperParams::default() };
    let norm = Normalizer::fit(ah.samples.iter().chain(&bh.samples));
    let mut model = GanModel::new(StepTag::Step1, &hp, norm, "Pd", "Ni")?;
    let log = train(&mut model, &ah, &bh, &hp)?;
    for e in log.entries.iter().step_by((epochs / 10).max(1)) {
        println!("epoch {:>5} L_G {:.4} L_D {:.4}", e.epoch, e.terms.loss_g, e.terms.loss_d);
    }
    if let Some((first, last)) = log.generator_trend(0.1) {
        println!("median L_G first 10% {first:.4}, last 10% {last:.4}");
    }

    for g in generate(&model, &ah, 3, Direction::Forward)? {
        match decode(&g.sample, hp.threshold) {
            Ok(s) => println!("{} from {}: {} atoms, volume {:.2}", g.id, g.source, s.num_atoms(), s.lattice.volume()),
            Err(e) => println!("{} from {}: not decodable ({e})", g.id, g.source),
        }
    }
    Ok(())
}
