// SPDX-License-Identifier: Apache-2.0

//! Geometric constraint values for a hydride pulled apart and squeezed,
//! in the default, hinge and disabled modes.
//!
//! ```text
//! cargo run --example geo_constraints
//! ```

use crystalgan::corpus::{synthetic_structures, CorpusSpec, Prototype};
use crystalgan::encoding::{encode, SlotMap, DEFAULT_THRESHOLD};
use crystalgan::geometry::{geo_losses, GeoConfig, GeoMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let slots = SlotMap::ternary("Pd", "Ni")?;
    let cfg = GeoConfig::hydride("Pd", "Ni");
    println!("{:>6} {:>8} {:>12} {:>12} {:>6}", "a", "mode", "geo1", "geo2", "|S|");
    for a in [2.8, 3.6, 4.0, 6.0, 8.0] {
        let mut spec = CorpusSpec::new(Prototype::Rocksalt, "Pd", (a, a), 1, 0);
        spec.jitter = 0.0;
        let e = encode(&synthetic_structures(&spec)?[0], &slots)?;
        for mode in [GeoMode::Paper, GeoMode::Hinge, GeoMode::Off] {
            let g = geo_losses(&e, &cfg, mode, DEFAULT_THRESHOLD);
            println!("{a:>6.2} {:>8} {:>12.5} {:>12.5} {:>6}", format!("{mode:?}"), g.geo1, g.geo2, g.set_size);
        }
    }
    Ok(())
}
