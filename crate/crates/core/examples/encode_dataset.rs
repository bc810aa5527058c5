// SPDX-License-Identifier: Apache-2.0

//! Build a synthetic corpus and encode it into the 4 x 18 x 3 layout.
//!
//! ```text
//! cargo run --example encode_dataset
//! ```

use std::env;

use crystalgan::corpus::{make_synthetic_corpus, CorpusSpec, Prototype};
use crystalgan::encoding::{decode, load_domain_dataset, DomainTag, Normalizer, SlotMap, DEFAULT_THRESHOLD};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = env::temp_dir().join("crystalgan_encode/PdH");
    let _ = std::fs::remove_dir_all(&dir);
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Pd", (3.9, 4.2), 35, 1), &dir)?;

    let slots = SlotMap::ternary("Pd", "Ni")?;
    let data = load_domain_dataset(&dir, DomainTag::AH, &slots)?;
    println!("shape {:?}", data.shape());
    println!("blocks {:?}", slots.labels());

    let first = &data.samples[0];
    println!("occupancy of {}: {:?}", data.names[0], first.counts(DEFAULT_THRESHOLD));
    for (k, row) in first.blocks[0][..3].iter().enumerate() {
        println!("  lattice row {k}: {row:?}");
    }
    println!("  empty Ni block rows: {}", first.blocks[3].iter().filter(|r| r == &&[0.0; 3]).count());

    let norm = Normalizer::fit(&data.samples);
    println!("per-block shift {:?}", norm.shift);
    println!("per-block scale {:?}", norm.scale);

    let back = decode(first, DEFAULT_THRESHOLD)?;
    println!("decoded {} atoms: {:?}", back.num_atoms(), back.species().collect::<Vec<_>>());
    Ok(())
}
