// SPDX-License-Identifier: Apache-2.0

//! Fixed-shape tensor representation of binary and ternary hydrides.
//!
//! A sample is four 18×3 blocks: the lattice (three used rows, Å), then the
//! fractional coordinates of H, metal A and metal B. A binary sample leaves
//! the other metal's block empty; that empty block is the placeholder later
//! filled by feature transfer.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat3;
use crate::poscar::{self, AtomSite, CrystalStructure, Lattice, PoscarError};

pub const N_BLOCKS: usize = 4;
pub const MAX_ROWS: usize = 18;
pub const SAMPLE_DIM: usize = N_BLOCKS * MAX_ROWS * 3;

pub const LATTICE_BLOCK: usize = 0;
pub const H_BLOCK: usize = 1;
pub const A_BLOCK: usize = 2;
pub const B_BLOCK: usize = 3;

/// Row-norm threshold separating generated atoms from padding.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

pub type Blocks = [[[f64; 3]; MAX_ROWS]; N_BLOCKS];

#[derive(Debug, Error)]
pub enum EncodingError {
    #[error("{count} atoms of {species} exceed the {MAX_ROWS}-row block capacity")]
    TooManyAtoms { species: String, count: usize },
    #[error("structure has no hydrogen")]
    MissingHydrogen,
    #[error("species {0} and {1} both map to block {2}")]
    SlotConflict(String, String, usize),
    #[error("invalid slot assignment: {0}")]
    InvalidSlot(String),
    #[error("species {0} has no block in the slot map")]
    UnmappedSpecies(String),
    #[error("block {0} holds atoms but has no species label")]
    UnlabeledBlock(usize),
    #[error("decoded sample has no atoms")]
    NoAtoms,
    #[error("sample does not match the {tag:?} placeholder pattern (occupancy {occupancy:?})")]
    DomainMismatch { tag: DomainTag, occupancy: [usize; N_BLOCKS] },
    #[error("directory {0} holds no POSCAR files")]
    EmptyDirectory(PathBuf),
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<EncodingError>,
    },
    #[error(transparent)]
    Poscar(#[from] PoscarError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Assignment of species to the three coordinate blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotMap {
    labels: [Option<String>; N_BLOCKS],
}

impl SlotMap {
    pub fn new(assignments: &[(&str, usize)]) -> Result<Self, EncodingError> {
        let mut labels: [Option<String>; N_BLOCKS] = Default::default();
        for &(species, block) in assignments {
            if !(H_BLOCK..N_BLOCKS).contains(&block) {
                return Err(EncodingError::InvalidSlot(format!(
                    "{species} -> block {block} (coordinate blocks are 1..=3)"
                )));
            }
            if let Some(prev) = &labels[block] {
                return Err(EncodingError::SlotConflict(prev.clone(), species.into(), block));
            }
            if labels.iter().flatten().any(|l| l == species) {
                return Err(EncodingError::InvalidSlot(format!("{species} assigned twice")));
            }
            labels[block] = Some(species.to_string());
        }
        match &labels[H_BLOCK] {
            Some(_) => Ok(Self { labels }),
            None => Err(EncodingError::InvalidSlot("hydrogen block 1 is unassigned".into())),
        }
    }

    /// H in block 1, A in block 2, B in block 3.
    pub fn ternary(metal_a: &str, metal_b: &str) -> Result<Self, EncodingError> {
        Self::new(&[("H", H_BLOCK), (metal_a, A_BLOCK), (metal_b, B_BLOCK)])
    }

    pub fn block_of(&self, species: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.as_deref() == Some(species))
    }

    pub fn label(&self, block: usize) -> Option<&str> {
        self.labels.get(block).and_then(|l| l.as_deref())
    }

    pub fn labels(&self) -> &[Option<String>; N_BLOCKS] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub blocks: Blocks,
    /// Real rows per block; `None` for generated samples, which are read
    /// through the threshold rule instead.
    pub occupancy: Option<[usize; N_BLOCKS]>,
    pub labels: [Option<String>; N_BLOCKS],
}

impl EncodedSample {
    /// Wraps a flat network output. Occupancy is unknown.
    pub fn from_flat(values: &[f64], labels: [Option<String>; N_BLOCKS]) -> Self {
        assert_eq!(values.len(), SAMPLE_DIM, "sample must have {SAMPLE_DIM} values");
        let mut blocks = [[[0.0; 3]; MAX_ROWS]; N_BLOCKS];
        for (i, v) in values.iter().enumerate() {
            blocks[i / (MAX_ROWS * 3)][(i / 3) % MAX_ROWS][i % 3] = *v;
        }
        Self {
            blocks,
            occupancy: None,
            labels,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().flatten().copied().collect()
    }

    pub fn lattice_matrix(&self) -> Mat3 {
        [self.blocks[0][0], self.blocks[0][1], self.blocks[0][2]]
    }

    /// Indices of rows of `block` that hold atoms: the occupancy prefix when
    /// known, otherwise rows whose L∞ norm exceeds `threshold`.
    pub fn atom_rows(&self, block: usize, threshold: f64) -> Vec<usize> {
        match self.occupancy {
            Some(occ) => (0..occ[block]).collect(),
            None => (0..MAX_ROWS)
                .filter(|&r| row_linf(&self.blocks[block][r]) > threshold)
                .collect(),
        }
    }

    /// Per-block atom counts under the same rule as [`atom_rows`](Self::atom_rows).
    pub fn counts(&self, threshold: f64) -> [usize; N_BLOCKS] {
        let mut c = [3, 0, 0, 0];
        for (b, n) in c.iter_mut().enumerate().skip(1) {
            *n = self.atom_rows(b, threshold).len();
        }
        c
    }
}

pub fn row_linf(row: &[f64; 3]) -> f64 {
    row.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn encode(s: &CrystalStructure, slots: &SlotMap) -> Result<EncodedSample, EncodingError> {
    for (species, count) in &s.species_order {
        if slots.block_of(species).is_none() {
            return Err(EncodingError::UnmappedSpecies(species.clone()));
        }
        if *count > MAX_ROWS {
            return Err(EncodingError::TooManyAtoms {
                species: species.clone(),
                count: *count,
            });
        }
    }
    let hydrogen = slots.label(H_BLOCK).expect("slot map always labels block 1");
    if s.count_of(hydrogen) == 0 {
        return Err(EncodingError::MissingHydrogen);
    }

    let mut blocks = [[[0.0; 3]; MAX_ROWS]; N_BLOCKS];
    let mut occupancy = [3, 0, 0, 0];
    blocks[LATTICE_BLOCK][..3].copy_from_slice(&s.lattice.matrix());
    for site in &s.sites {
        let b = slots.block_of(&site.species).expect("checked above");
        let row = occupancy[b];
        if row >= MAX_ROWS {
            return Err(EncodingError::TooManyAtoms {
                species: site.species.clone(),
                count: s.count_of(&site.species),
            });
        }
        blocks[b][row] = site.frac.map(poscar::wrap_unit);
        occupancy[b] += 1;
    }
    Ok(EncodedSample {
        blocks,
        occupancy: Some(occupancy),
        labels: slots.labels().clone(),
    })
}

/// Species are emitted metals first (block 2, block 3) and hydrogen last.
pub const DECODE_ORDER: [usize; 3] = [A_BLOCK, B_BLOCK, H_BLOCK];

pub fn decode(e: &EncodedSample, threshold: f64) -> Result<CrystalStructure, EncodingError> {
    let lattice = Lattice::from_matrix(e.lattice_matrix())?;
    let mut sites = Vec::new();
    for b in DECODE_ORDER {
        let rows = e.atom_rows(b, threshold);
        if rows.is_empty() {
            continue;
        }
        let label = e.labels[b].as_deref().ok_or(EncodingError::UnlabeledBlock(b))?;
        sites.extend(
            rows.into_iter()
                .map(|r| AtomSite::new(label, e.blocks[b][r].map(poscar::wrap_unit))),
        );
    }
    if sites.is_empty() {
        return Err(EncodingError::NoAtoms);
    }
    let comment = e.labels[1..]
        .iter()
        .flatten()
        .cloned()
        .collect::<Vec<_>>()
        .join(" ");
    Ok(poscar::canonicalize(&CrystalStructure::from_sites(comment, lattice, sites)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainTag {
    AH,
    BH,
    AHBg,
    BHAg,
}

impl DomainTag {
    /// Whether blocks 2 and 3 must be occupied.
    fn pattern(self) -> (bool, bool) {
        match self {
            DomainTag::AH => (true, false),
            DomainTag::BH => (false, true),
            DomainTag::AHBg | DomainTag::BHAg => (true, true),
        }
    }

    pub fn matches(self, occupancy: &[usize; N_BLOCKS]) -> bool {
        let (a, b) = self.pattern();
        occupancy[0] == 3 && occupancy[1] > 0 && (occupancy[2] > 0) == a && (occupancy[3] > 0) == b
    }
}

/// Per-block affine map `net = (raw - shift) / scale` applied before the
/// networks and inverted after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub shift: [f64; N_BLOCKS],
    pub scale: [f64; N_BLOCKS],
}

impl Default for Normalizer {
    /// Identity.
    fn default() -> Self {
        Self {
            shift: [0.0; N_BLOCKS],
            scale: [1.0; N_BLOCKS],
        }
    }
}

impl Normalizer {
    /// Shift by the mean and scale by the root-mean-square of the occupied
    /// entries of each block.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a EncodedSample>) -> Self {
        let mut sum = [0.0_f64; N_BLOCKS];
        let mut sum_sq = [0.0_f64; N_BLOCKS];
        let mut n = [0_usize; N_BLOCKS];
        for s in samples {
            for b in 0..N_BLOCKS {
                let rows = if b == LATTICE_BLOCK {
                    vec![0, 1, 2]
                } else {
                    s.atom_rows(b, DEFAULT_THRESHOLD)
                };
                for r in rows {
                    for x in s.blocks[b][r] {
                        sum[b] += x;
                        sum_sq[b] += x * x;
                        n[b] += 1;
                    }
                }
            }
        }
        let mut out = Self::default();
        for b in 0..N_BLOCKS {
            if n[b] == 0 {
                continue;
            }
            let mean = sum[b] / n[b] as f64;
            let rms = (sum_sq[b] / n[b] as f64).sqrt();
            out.shift[b] = mean;
            out.scale[b] = if rms > 1e-12 { rms } else { 1.0 };
        }
        out
    }

    fn block(i: usize) -> usize {
        i / (MAX_ROWS * 3)
    }

    /// `d raw / d net` for flat index `i`.
    pub fn factor(&self, i: usize) -> f64 {
        self.scale[Self::block(i)]
    }

    pub fn shift_of(&self, i: usize) -> f64 {
        self.shift[Self::block(i)]
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(i, x)| (x - self.shift_of(i)) / self.factor(i))
            .collect()
    }

    pub fn denormalize(&self, net: &[f64]) -> Vec<f64> {
        net.iter()
            .enumerate()
            .map(|(i, x)| x * self.factor(i) + self.shift_of(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    pub domain_tag: DomainTag,
    pub element_a: String,
    pub element_b: String,
    /// Source file name or provenance id per sample.
    pub names: Vec<String>,
    pub samples: Vec<EncodedSample>,
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Stacked tensor shape `[N, 4, 18, 3]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.samples.len(), N_BLOCKS, MAX_ROWS, 3]
    }

    pub fn slot_map(&self) -> SlotMap {
        SlotMap::ternary(&self.element_a, &self.element_b).expect("distinct elements")
    }

    /// Rows are flattened samples in raw units.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.samples.len(), SAMPLE_DIM));
        for (mut row, s) in m.rows_mut().into_iter().zip(&self.samples) {
            for (dst, src) in row.iter_mut().zip(s.to_flat()) {
                *dst = src;
            }
        }
        m
    }

    pub fn save(&self, path: &Path) -> Result<(), EncodingError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EncodingError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Reads every POSCAR in `dir` (sorted by file name) and encodes it with the
/// ternary slot map. Each sample must match the placeholder pattern of `tag`.
pub fn load_domain_dataset(
    dir: &Path,
    tag: DomainTag,
    slots: &SlotMap,
) -> Result<DomainDataset, EncodingError> {
    let (Some(a), Some(b)) = (slots.label(A_BLOCK), slots.label(B_BLOCK)) else {
        return Err(EncodingError::InvalidSlot(
            "dataset slot map must name both metals".into(),
        ));
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(EncodingError::EmptyDirectory(dir.to_path_buf()));
    }
    let mut names = Vec::with_capacity(files.len());
    let mut samples = Vec::with_capacity(files.len());
    for path in files {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let annotate = |e: EncodingError| EncodingError::InFile {
            file: name.clone(),
            source: Box::new(e),
        };
        let text = fs::read_to_string(&path).map_err(|e| annotate(e.into()))?;
        let s = poscar::parse_poscar(&text).map_err(|e| annotate(e.into()))?;
        let enc = encode(&s, slots).map_err(annotate)?;
        let occ = enc.occupancy.expect("encode records occupancy");
        if !tag.matches(&occ) {
            return Err(annotate(EncodingError::DomainMismatch { tag, occupancy: occ }));
        }
        names.push(name);
        samples.push(enc);
    }
    Ok(DomainDataset {
        domain_tag: tag,
        element_a: a.to_string(),
        element_b: b.to_string(),
        names,
        samples,
    })
}
