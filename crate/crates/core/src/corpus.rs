// SPDX-License-Identifier: Apache-2.0

//! Seeded synthetic binary-hydride corpora on cubic prototypes.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::poscar::{self, AtomSite, CrystalStructure, Lattice};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Poscar(#[from] poscar::PoscarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prototype {
    /// 4 metal + 4 octahedral H.
    Rocksalt,
    /// 4 metal + 8 tetrahedral H.
    Fluorite,
}

impl FromStr for Prototype {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rocksalt" => Ok(Prototype::Rocksalt),
            "fluorite" => Ok(Prototype::Fluorite),
            other => Err(CorpusError::Invalid(format!("unknown prototype {other:?}"))),
        }
    }
}

const FCC: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];

impl Prototype {
    /// Ideal fractional sites `(metal, hydrogen)`, shifted off the cell
    /// origin so that no atom encodes as an all-zero row.
    pub fn sites(self) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
        let shift = |p: [f64; 3], d: f64| p.map(|x| poscar::wrap_unit(x + d));
        match self {
            Prototype::Rocksalt => (
                FCC.iter().map(|p| shift(*p, 0.25)).collect(),
                FCC.iter().map(|p| shift(*p, 0.75)).collect(),
            ),
            Prototype::Fluorite => {
                let mut h = Vec::new();
                for x in [0.25, 0.75] {
                    for y in [0.25, 0.75] {
                        for z in [0.25, 0.75] {
                            h.push(shift([x, y, z], 0.125));
                        }
                    }
                }
                (FCC.iter().map(|p| shift(*p, 0.125)).collect(), h)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub prototype: Prototype,
    pub metal: String,
    /// Cubic lattice constant range in Å.
    pub lattice_range: (f64, f64),
    pub count: usize,
    pub seed: u64,
    /// Largest fractional displacement per coordinate.
    pub jitter: f64,
}

impl CorpusSpec {
    pub fn new(prototype: Prototype, metal: &str, lattice_range: (f64, f64), count: usize, seed: u64) -> Self {
        Self {
            prototype,
            metal: metal.into(),
            lattice_range,
            count,
            seed,
            jitter: 0.02,
        }
    }

    fn check(&self) -> Result<(), CorpusError> {
        let (lo, hi) = self.lattice_range;
        if self.count < 1 {
            return Err(CorpusError::Invalid("count must be >= 1".into()));
        }
        if !(2.0..=8.0).contains(&lo) || !(2.0..=8.0).contains(&hi) || lo > hi {
            return Err(CorpusError::Invalid(format!(
                "lattice range [{lo}, {hi}] must lie within [2, 8] A"
            )));
        }
        if !(0.0..=0.02).contains(&self.jitter) {
            return Err(CorpusError::Invalid(format!("jitter {} outside [0, 0.02]", self.jitter)));
        }
        if self.metal == "H" || self.metal.is_empty() {
            return Err(CorpusError::Invalid(format!("bad metal symbol {:?}", self.metal)));
        }
        Ok(())
    }
}

pub fn synthetic_structures(spec: &CorpusSpec) -> Result<Vec<CrystalStructure>, CorpusError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (metal_sites, h_sites) = spec.prototype.sites();
    let (lo, hi) = spec.lattice_range;
    let mut out = Vec::with_capacity(spec.count);
    for k in 0..spec.count {
        let a = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let mut jitter = |p: &[f64; 3]| {
            p.map(|x| {
                let d = if spec.jitter > 0.0 {
                    rng.gen_range(-spec.jitter..=spec.jitter)
                } else {
                    0.0
                };
                poscar::wrap_unit(x + d)
            })
        };
        let mut sites: Vec<AtomSite> = metal_sites
            .iter()
            .map(|p| AtomSite::new(&spec.metal, jitter(p)))
            .collect();
        sites.extend(h_sites.iter().map(|p| AtomSite::new("H", jitter(p))));
        let comment = format!("{}H synthetic {k}", spec.metal);
        out.push(CrystalStructure::from_sites(
            comment,
            Lattice::from_matrix(linalg::diag(a))?,
            sites,
        ));
    }
    Ok(out)
}

/// Writes `count` POSCAR files named `<metal>H_<k>.vasp` into `dir`.
pub fn make_synthetic_corpus(spec: &CorpusSpec, dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let structures = synthetic_structures(spec)?;
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(structures.len());
    for (k, s) in structures.iter().enumerate() {
        let path = dir.join(format!("{}H_{k:03}.vasp", spec.metal));
        fs::write(&path, poscar::write_poscar(s)?)?;
        paths.push(path);
    }
    Ok(paths)
}
