// SPDX-License-Identifier: Apache-2.0

//! Parse a POSCAR, write it back and parse again.
//!
//! ```text
//! cargo run --example poscar_roundtrip -- [path/to/POSCAR]
//! ```

use std::env;

use crystalgan::poscar::{parse_poscar, write_poscar};

const PDH: &str = "PdH rocksalt
1.0
4.02 0.0 0.0
0.0 4.02 0.0
0.0 0.0 4.02
Pd H
4 4
Direct
0.0 0.0 0.0
0.0 0.5 0.5
0.5 0.0 0.5
0.5 0.5 0.0
0.5 0.5 0.5
0.5 0.0 0.0
0.0 0.5 0.0
0.0 0.0 0.5
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => PDH.to_string(),
    };
    let s = parse_poscar(&text)?;
    println!("{} atoms, volume {:.4} A^3", s.num_atoms(), s.lattice.volume());
    for species in ["Pd", "Ni", "H"] {
        if s.count_of(species) > 0 {
            println!("  {species}: {}", s.count_of(species));
        }
    }
    let written = write_poscar(&s)?;
    let back = parse_poscar(&written)?;
    println!("round trip exact: {}", back.approx_eq(&s, 0.0));
    print!("{written}");
    Ok(())
}
