// SPDX-License-Identifier: Apache-2.0

//! Periodic nearest-neighbour geometry.
//!
//! Distances are taken between an atom and every periodic image of every other
//! atom (and of itself, excluding the zero image). Image ranges come from the
//! perpendicular widths of a size-reduced cell, so skewed cells are searched
//! completely and cheaply.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{self, Blocks, EncodedSample, LATTICE_BLOCK, MAX_ROWS, N_BLOCKS};
use crate::linalg::{self, Mat3, Unimodular, Vec3};
use crate::poscar::{self, CrystalStructure, SINGULAR_DET};

/// Upper bound on periodic images examined for a single atom pair.
const MAX_IMAGES: i64 = 1_000_000;

/// Upper bound on images examined by one full pair enumeration.
const MAX_VISITS: i64 = 1_000_000;

/// Distances below this are overlapping atoms.
pub const OVERLAP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular or left-handed lattice (det = {0:e})")]
    SingularLattice(f64),
    #[error("cell too thin for a neighbour search within {0} Å")]
    DegenerateCell(f64),
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
}

pub type Image = [i32; 3];

/// Unordered species pair, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairClass(pub String, pub String);

impl PairClass {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            Self(a.into(), b.into())
        } else {
            Self(b.into(), a.into())
        }
    }

    pub fn contains(&self, species: &str) -> bool {
        self.0 == species || self.1 == species
    }

    /// The other member of the pair, seen from `species`.
    pub fn partner(&self, species: &str) -> Option<&str> {
        if self.0 == species {
            Some(&self.1)
        } else if self.1 == species {
            Some(&self.0)
        } else {
            None
        }
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoConfig {
    /// Minimum allowed first-neighbour distance, Å.
    pub d1: f64,
    /// Maximum allowed first-neighbour distance, Å.
    pub d2: f64,
    /// Neighbour search radius, Å.
    pub cutoff: f64,
    pub penalized: Vec<PairClass>,
}

impl GeoConfig {
    /// Thresholds 1.8 Å / 3.0 Å with H–H, A–A, B–B and A–B penalized;
    /// metal–hydrogen distances are free.
    pub fn hydride(metal_a: &str, metal_b: &str) -> Self {
        Self {
            d1: 1.8,
            d2: 3.0,
            cutoff: 8.0,
            penalized: vec![
                PairClass::new("H", "H"),
                PairClass::new(metal_a, metal_a),
                PairClass::new(metal_b, metal_b),
                PairClass::new(metal_a, metal_b),
            ],
        }
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        if !(0.0 < self.d1 && self.d1 < self.d2 && self.d2 <= self.cutoff) {
            return Err(GeometryError::InvalidConfig(format!(
                "need 0 < d1 < d2 <= cutoff, got d1={} d2={} cutoff={}",
                self.d1, self.d2, self.cutoff
            )));
        }
        Ok(())
    }

    pub fn is_penalized(&self, a: &str, b: &str) -> bool {
        let c = PairClass::new(a, b);
        self.penalized.contains(&c)
    }
}

/// Atoms in a periodic cell, in the form every routine here works on.
///
/// Image searches run in a size-reduced basis of the lattice; images and
/// distances are always reported in the original basis.
#[derive(Debug, Clone)]
pub struct PeriodicAtoms {
    pub matrix: Mat3,
    pub frac: Vec<Vec3>,
    pub species: Vec<String>,
    reduced: Mat3,
    /// `reduced = u · matrix`
    u: Unimodular,
    /// Face widths of the reduced cell.
    widths: Vec3,
    /// Coordinates in the reduced basis, wrapped into [0, 1).
    rfrac: Vec<Vec3>,
    /// Integer part removed by that wrap.
    rshift: Vec<[i64; 3]>,
}

impl PeriodicAtoms {
    pub fn new(matrix: Mat3, frac: Vec<Vec3>, species: Vec<String>) -> Result<Self, GeometryError> {
        let det = linalg::det(&matrix);
        if !(det > SINGULAR_DET) {
            return Err(GeometryError::SingularLattice(det));
        }
        let frac: Vec<Vec3> = frac.into_iter().map(|f| f.map(poscar::wrap_unit)).collect();
        let (reduced, u) = linalg::reduce_basis(&matrix);
        let uf = u.map(|r| r.map(|x| x as f64));
        let u_inv = linalg::inverse(&uf)
            .expect("unimodular")
            .map(|r| r.map(f64::round));
        let mut rfrac = Vec::with_capacity(frac.len());
        let mut rshift = Vec::with_capacity(frac.len());
        for f in &frac {
            let r = linalg::row_times(f, &u_inv);
            rshift.push(r.map(|x| x.floor() as i64));
            rfrac.push(r.map(|x| x - x.floor()));
        }
        Ok(Self {
            widths: linalg::face_widths(&reduced),
            matrix,
            frac,
            species,
            reduced,
            u,
            rfrac,
            rshift,
        })
    }

    pub fn from_structure(s: &CrystalStructure) -> Result<Self, GeometryError> {
        Self::new(
            s.lattice.matrix(),
            s.sites.iter().map(|x| x.frac).collect(),
            s.sites.iter().map(|x| x.species.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.frac.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frac.is_empty()
    }

    fn delta(&self, i: usize, j: usize, image: &Image) -> Vec3 {
        [0, 1, 2].map(|k| self.frac[j][k] - self.frac[i][k] + image[k] as f64)
    }

    pub fn distance(&self, i: usize, j: usize, image: &Image) -> f64 {
        linalg::norm(&linalg::row_times(&self.delta(i, j, image), &self.matrix))
    }

    /// Original-basis image of reduced-basis image `n` for the pair (i, j).
    fn original_image(&self, i: usize, j: usize, n: [i64; 3]) -> Result<Image, GeometryError> {
        let shifted = [0, 1, 2].map(|k| n[k] - self.rshift[j][k] + self.rshift[i][k]);
        let o = linalg::int_row_times(&shifted, &self.u);
        let mut out = [0; 3];
        for k in 0..3 {
            out[k] = i32::try_from(o[k]).map_err(|_| GeometryError::DegenerateCell(f64::NAN))?;
        }
        Ok(out)
    }

    fn reduced_delta(&self, i: usize, j: usize) -> Vec3 {
        [0, 1, 2].map(|k| self.rfrac[j][k] - self.rfrac[i][k])
    }

    /// Inclusive per-axis reduced-basis image ranges holding every image of
    /// `j` within `radius` of `i`.
    fn image_ranges(&self, delta: &Vec3, radius: f64) -> Result<[(i64, i64); 3], GeometryError> {
        let mut ranges = [(0, 0); 3];
        let mut total: i64 = 1;
        for k in 0..3 {
            let reach = radius / self.widths[k] + 1e-9;
            let lo = (-delta[k] - reach).ceil();
            let hi = (-delta[k] + reach).floor();
            if !(lo.is_finite() && hi.is_finite()) || hi - lo > MAX_IMAGES as f64 {
                return Err(GeometryError::DegenerateCell(radius));
            }
            ranges[k] = (lo as i64, hi as i64);
            total = total.saturating_mul((hi - lo + 1.0).max(0.0) as i64);
        }
        if total > MAX_IMAGES {
            return Err(GeometryError::DegenerateCell(radius));
        }
        Ok(ranges)
    }

    /// Nearest image of `j` seen from `i` (zero image excluded when `i == j`),
    /// restricted to distances ≤ `limit`. Ties resolve to the
    /// lexicographically smallest image.
    pub fn nearest_image(
        &self,
        i: usize,
        j: usize,
        limit: f64,
    ) -> Result<Option<(f64, Image)>, GeometryError> {
        let raw = self.reduced_delta(i, j);
        let mut best: Option<(f64, Image)> = None;
        if i != j {
            let base = self.original_image(i, j, raw.map(|x| -(x.round()) as i64))?;
            best = Some((self.distance(i, j, &base), base));
        }
        let shortest_vec = self.reduced.iter().map(linalg::norm).fold(f64::INFINITY, f64::min);
        // slack covers rounding between the two bases
        let radius = best.map_or(shortest_vec, |b| b.0).min(limit) * (1.0 + 1e-12) + 1e-12;
        if !radius.is_finite() {
            return Err(GeometryError::DegenerateCell(radius));
        }
        let ranges = self.image_ranges(&raw, radius)?;
        for a in ranges[0].0..=ranges[0].1 {
            for b in ranges[1].0..=ranges[1].1 {
                for c in ranges[2].0..=ranges[2].1 {
                    let image = self.original_image(i, j, [a, b, c])?;
                    if i == j && image == [0, 0, 0] {
                        continue;
                    }
                    let d = self.distance(i, j, &image);
                    let better = match best {
                        None => true,
                        Some((bd, bi)) => d < bd || (d == bd && image < bi),
                    };
                    if better {
                        best = Some((d, image));
                    }
                }
            }
        }
        Ok(best.filter(|(d, _)| *d <= limit))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub image: Image,
    pub distance: f64,
}

/// First neighbour of one atom within one species-pair class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstNeighbor {
    pub atom: usize,
    pub partner: usize,
    pub image: Image,
    pub distance: f64,
    pub class: PairClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborReport {
    /// Directed pairs with 0 < distance ≤ cutoff, ordered by (i, j, image).
    pub pairs: Vec<Pair>,
    /// Per atom and per species-pair class, within the cutoff.
    pub per_atom_first: Vec<FirstNeighbor>,
}

impl NeighborReport {
    /// The multiset S of first-neighbour distances.
    pub fn first_distances(&self) -> Vec<f64> {
        self.per_atom_first.iter().map(|f| f.distance).collect()
    }
}

/// First neighbours of every atom for each class accepted by `keep`.
/// `limit` bounds the search; pass `f64::INFINITY` for the true first
/// neighbour.
pub fn first_neighbors(
    atoms: &PeriodicAtoms,
    keep: impl Fn(&PairClass) -> bool,
    limit: f64,
) -> Result<Vec<FirstNeighbor>, GeometryError> {
    let mut species: Vec<&str> = atoms.species.iter().map(String::as_str).collect();
    species.sort_unstable();
    species.dedup();
    let mut out = Vec::new();
    for i in 0..atoms.len() {
        for partner in &species {
            let class = PairClass::new(&atoms.species[i], partner);
            if !keep(&class) {
                continue;
            }
            let mut best: Option<(f64, usize, Image)> = None;
            for j in (0..atoms.len()).filter(|&j| atoms.species[j] == *partner) {
                let cap = best.map_or(limit, |b| b.0.min(limit));
                if let Some((d, image)) = atoms.nearest_image(i, j, cap)? {
                    if best.map_or(true, |b| d < b.0) {
                        best = Some((d, j, image));
                    }
                }
            }
            if let Some((distance, partner, image)) = best {
                out.push(FirstNeighbor {
                    atom: i,
                    partner,
                    image,
                    distance,
                    class,
                });
            }
        }
    }
    Ok(out)
}

pub fn neighbor_distances(s: &CrystalStructure, cutoff: f64) -> Result<NeighborReport, GeometryError> {
    let atoms = PeriodicAtoms::from_structure(s)?;
    neighbor_distances_of(&atoms, cutoff)
}

pub fn neighbor_distances_of(atoms: &PeriodicAtoms, cutoff: f64) -> Result<NeighborReport, GeometryError> {
    let mut pairs = Vec::new();
    for_each_pair(atoms, cutoff, |p| pairs.push(p))?;
    let per_atom_first = first_neighbors(atoms, |_| true, cutoff)?;
    Ok(NeighborReport { pairs, per_atom_first })
}

/// Visits every directed pair within `cutoff`, ordered by (i, j, image).
fn for_each_pair(atoms: &PeriodicAtoms, cutoff: f64, mut visit: impl FnMut(Pair)) -> Result<(), GeometryError> {
    let radius = cutoff * (1.0 + 1e-12) + 1e-12;
    let mut ranges = Vec::with_capacity(atoms.len() * atoms.len());
    let mut budget = MAX_VISITS;
    for i in 0..atoms.len() {
        for j in 0..atoms.len() {
            let r = atoms.image_ranges(&atoms.reduced_delta(i, j), radius)?;
            budget -= r.iter().map(|(lo, hi)| (hi - lo + 1).max(0)).product::<i64>();
            if budget < 0 {
                return Err(GeometryError::DegenerateCell(cutoff));
            }
            ranges.push(r);
        }
    }
    let mut block = Vec::new();
    for i in 0..atoms.len() {
        for j in 0..atoms.len() {
            let r = &ranges[i * atoms.len() + j];
            for a in r[0].0..=r[0].1 {
                for b in r[1].0..=r[1].1 {
                    for c in r[2].0..=r[2].1 {
                        let image = atoms.original_image(i, j, [a, b, c])?;
                        let d = atoms.distance(i, j, &image);
                        if d > 0.0 && d <= cutoff && !(i == j && image == [0, 0, 0]) {
                            block.push(Pair { i, j, image, distance: d });
                        }
                    }
                }
            }
            block.sort_by(|p, q| p.image.cmp(&q.image));
            block.drain(..).for_each(&mut visit);
        }
    }
    Ok(())
}

/// Neighbour counts per distance bin, averaged per centre atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistribution {
    pub bin_width: f64,
    pub cutoff: f64,
    /// All pairs, divided by the number of atoms.
    pub total: Vec<f64>,
    /// Keyed by (centre species, neighbour species), divided by the number of
    /// centre atoms of that species.
    pub by_species: BTreeMap<(String, String), Vec<f64>>,
}

impl PairDistribution {
    pub fn bin_of(&self, distance: f64) -> usize {
        (distance / self.bin_width).floor() as usize
    }

    /// Two columns: bin centre (Å) and averaged count.
    pub fn to_columns(&self, counts: &[f64]) -> String {
        let mut out = String::from("# distance_A count_per_atom\n");
        for (k, c) in counts.iter().enumerate() {
            out.push_str(&format!("{:.6} {:.6}\n", (k as f64 + 0.5) * self.bin_width, c));
        }
        out
    }
}

pub fn pair_distribution(
    s: &CrystalStructure,
    bin_width: f64,
    cutoff: f64,
) -> Result<PairDistribution, GeometryError> {
    if !(bin_width > 0.0) {
        return Err(GeometryError::InvalidBinWidth(bin_width));
    }
    let atoms = PeriodicAtoms::from_structure(s)?;
    let n_bins = ((cutoff / bin_width).ceil() as usize).max(1) + 1;
    let mut total = vec![0.0; n_bins];
    let mut by_species: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for_each_pair(&atoms, cutoff, |p| {
        let k = ((p.distance / bin_width).floor() as usize).min(n_bins - 1);
        total[k] += 1.0;
        let key = (atoms.species[p.i].clone(), atoms.species[p.j].clone());
        by_species.entry(key).or_insert_with(|| vec![0.0; n_bins])[k] += 1.0;
    })?;
    let n = atoms.len() as f64;
    total.iter_mut().for_each(|c| *c /= n);
    for ((centre, _), counts) in by_species.iter_mut() {
        let m = s.count_of(centre) as f64;
        counts.iter_mut().for_each(|c| *c /= m);
    }
    Ok(PairDistribution {
        bin_width,
        cutoff,
        total,
        by_species,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeoMode {
    /// `min (d1-s)^2` and `-min (d2-s)^2` over S.
    #[default]
    Paper,
    /// `Σ max(0,d1-s)^2` and `Σ max(0,s-d2)^2` over S.
    Hinge,
    Off,
}

impl std::str::FromStr for GeoMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Self::Paper),
            "hinge" => Ok(Self::Hinge),
            "off" => Ok(Self::Off),
            _ => Err(format!("unknown geo mode {s:?} (paper, hinge, off)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeoWarning {
    /// S is empty: no penalized pair within the cutoff.
    NoPenalizedPairs,
    /// The sample does not decode to a usable cell.
    Undecodable,
}

/// Constraint values plus their gradients with respect to the raw sample.
#[derive(Debug, Clone)]
pub struct GeoLosses {
    pub geo1: f64,
    pub geo2: f64,
    pub grad1: Blocks,
    pub grad2: Blocks,
    /// |S|
    pub set_size: usize,
    pub warning: Option<GeoWarning>,
}

impl GeoLosses {
    fn zero(warning: Option<GeoWarning>) -> Self {
        let z = [[[0.0; 3]; MAX_ROWS]; N_BLOCKS];
        Self {
            geo1: 0.0,
            geo2: 0.0,
            grad1: z,
            grad2: z,
            set_size: 0,
            warning,
        }
    }
}

/// Gradient of `|(f_j + n - f_i) M|` accumulated into `grad` with weight `w`.
/// `slots` maps atom index to its (block, row) in the sample.
fn accumulate_distance_grad(
    atoms: &PeriodicAtoms,
    slots: &[(usize, usize)],
    f: &FirstNeighbor,
    w: f64,
    grad: &mut Blocks,
) {
    if w == 0.0 || f.distance < 1e-12 {
        return;
    }
    let delta = atoms.delta(f.atom, f.partner, &f.image);
    let r = linalg::row_times(&delta, &atoms.matrix);
    let s = f.distance;
    for a in 0..3 {
        for k in 0..3 {
            grad[LATTICE_BLOCK][a][k] += w * delta[a] * r[k] / s;
        }
    }
    if f.atom != f.partner {
        let (bj, rj) = slots[f.partner];
        let (bi, ri) = slots[f.atom];
        for a in 0..3 {
            let g = w * linalg::dot(&atoms.matrix[a], &r) / s;
            grad[bj][rj][a] += g;
            grad[bi][ri][a] -= g;
        }
    }
}

/// Atoms read from a raw sample: occupancy rows, or thresholded rows for
/// generated samples.
pub fn sample_atoms(
    e: &EncodedSample,
    threshold: f64,
) -> Option<(PeriodicAtoms, Vec<(usize, usize)>)> {
    let mut frac = Vec::new();
    let mut species = Vec::new();
    let mut slots = Vec::new();
    for b in encoding::DECODE_ORDER {
        let Some(label) = &e.labels[b] else { continue };
        for r in e.atom_rows(b, threshold) {
            frac.push(e.blocks[b][r]);
            species.push(label.clone());
            slots.push((b, r));
        }
    }
    if frac.is_empty() {
        return None;
    }
    let atoms = PeriodicAtoms::new(e.lattice_matrix(), frac, species).ok()?;
    Some((atoms, slots))
}

/// Geometric constraint losses of a raw-unit sample and their gradients.
///
/// Atom selection (which rows are atoms) is treated as fixed; the wrap into
/// [0,1) has unit derivative.
pub fn geo_losses(e: &EncodedSample, cfg: &GeoConfig, mode: GeoMode, threshold: f64) -> GeoLosses {
    if mode == GeoMode::Off {
        return GeoLosses::zero(None);
    }
    let Some((atoms, slots)) = sample_atoms(e, threshold) else {
        return GeoLosses::zero(Some(GeoWarning::Undecodable));
    };
    let set = match first_neighbors(&atoms, |c| cfg.penalized.contains(c), cfg.cutoff) {
        Ok(set) => set,
        Err(_) => return GeoLosses::zero(Some(GeoWarning::Undecodable)),
    };
    if set.is_empty() {
        return GeoLosses::zero(Some(GeoWarning::NoPenalizedPairs));
    }
    let mut out = GeoLosses::zero(None);
    out.set_size = set.len();
    match mode {
        GeoMode::Paper => {
            // set is ordered by atom, then partner species; first minimum wins
            let argmin = |target: f64| {
                let mut best = 0;
                for (k, f) in set.iter().enumerate() {
                    if (target - f.distance).powi(2) < (target - set[best].distance).powi(2) {
                        best = k;
                    }
                }
                &set[best]
            };
            let s1 = argmin(cfg.d1);
            out.geo1 = (cfg.d1 - s1.distance).powi(2);
            accumulate_distance_grad(&atoms, &slots, s1, -2.0 * (cfg.d1 - s1.distance), &mut out.grad1);
            let s2 = argmin(cfg.d2);
            out.geo2 = -(cfg.d2 - s2.distance).powi(2);
            accumulate_distance_grad(&atoms, &slots, s2, 2.0 * (cfg.d2 - s2.distance), &mut out.grad2);
        }
        GeoMode::Hinge => {
            for f in &set {
                let low = (cfg.d1 - f.distance).max(0.0);
                let high = (f.distance - cfg.d2).max(0.0);
                out.geo1 += low * low;
                out.geo2 += high * high;
                accumulate_distance_grad(&atoms, &slots, f, -2.0 * low, &mut out.grad1);
                accumulate_distance_grad(&atoms, &slots, f, 2.0 * high, &mut out.grad2);
            }
        }
        GeoMode::Off => unreachable!(),
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TooClose,
    TooFar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub atom: usize,
    pub partner: usize,
    pub class: PairClass,
    pub distance: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub good: bool,
    pub violations: Vec<Violation>,
    /// Every penalized first-neighbour distance that was checked.
    pub checked: Vec<FirstNeighbor>,
}

/// Checks every penalized first-neighbour distance against [d1, d2]. First
/// neighbours are searched without a cutoff, so isolated atoms are reported
/// as too far rather than skipped.
pub fn validate_structure(s: &CrystalStructure, cfg: &GeoConfig) -> Result<Verdict, GeometryError> {
    let atoms = PeriodicAtoms::from_structure(s)?;
    let checked = first_neighbors(&atoms, |c| cfg.penalized.contains(c), f64::INFINITY)?;
    let violations: Vec<Violation> = checked
        .iter()
        .filter_map(|f| {
            let kind = if f.distance < cfg.d1 {
                ViolationKind::TooClose
            } else if f.distance > cfg.d2 {
                ViolationKind::TooFar
            } else {
                return None;
            };
            Some(Violation {
                atom: f.atom,
                partner: f.partner,
                class: f.class.clone(),
                distance: f.distance,
                kind,
            })
        })
        .collect();
    Ok(Verdict {
        good: violations.is_empty(),
        violations,
        checked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureVerdict {
    pub good: bool,
    /// All required species are present.
    pub complete: bool,
    pub violations: Vec<Violation>,
    /// Set when the candidate could not be decoded or analysed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub per_structure: BTreeMap<String, StructureVerdict>,
    /// Structures with no violations that contain every required species.
    pub good_count: usize,
    pub total: usize,
}

impl ValidationReport {
    /// Builds a report from candidates keyed by id. `Err` entries are
    /// candidates that failed to decode; they count as bad.
    pub fn build<'a>(
        candidates: impl IntoIterator<Item = (String, Result<&'a CrystalStructure, String>)>,
        cfg: &GeoConfig,
        required_species: &[&str],
    ) -> Self {
        let mut report = Self::default();
        for (id, cand) in candidates {
            let verdict = match cand {
                Err(msg) => StructureVerdict {
                    good: false,
                    complete: false,
                    violations: vec![],
                    error: Some(msg),
                },
                Ok(s) => {
                    let complete = required_species.iter().all(|sp| s.count_of(sp) > 0);
                    match validate_structure(s, cfg) {
                        Ok(v) => StructureVerdict {
                            good: v.good && complete,
                            complete,
                            violations: v.violations,
                            error: None,
                        },
                        Err(e) => StructureVerdict {
                            good: false,
                            complete,
                            violations: vec![],
                            error: Some(e.to_string()),
                        },
                    }
                }
            };
            report.total += 1;
            report.good_count += usize::from(verdict.good);
            report.per_structure.insert(id, verdict);
        }
        report
    }

    pub fn recount(&self) -> usize {
        self.per_structure.values().filter(|v| v.good).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("good {} / {}\n", self.good_count, self.total);
        for (id, v) in &self.per_structure {
            let verdict = if v.good { "good" } else { "bad" };
            out.push_str(&format!("{id}: {verdict}"));
            if !v.complete {
                out.push_str(" (missing species)");
            }
            if let Some(e) = &v.error {
                out.push_str(&format!(" error: {e}"));
            }
            out.push('\n');
            for x in &v.violations {
                out.push_str(&format!(
                    "    atom {} -> {} [{}] {:.4} A {:?}\n",
                    x.atom, x.partner, x.class, x.distance, x.kind
                ));
            }
        }
        out
    }
}
