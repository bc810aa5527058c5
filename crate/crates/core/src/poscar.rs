// SPDX-License-Identifier: Apache-2.0

//! VASP POSCAR reading and writing.
//!
//! Structures are always held in fractional ("Direct") coordinates. Cartesian
//! input is converted through the inverse lattice on the way in, and output is
//! always Direct with a unit scaling factor.

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{self, Mat3, Vec3};

/// Determinant below which a cell is treated as singular.
pub const SINGULAR_DET: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoscarError {
    #[error("malformed POSCAR header: {0}")]
    MalformedHeader(String),
    #[error("species counts call for {expected} coordinate rows, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("singular or left-handed lattice (det = {0:e})")]
    SingularLattice(f64),
    #[error("unknown coordinate mode line {0:?}")]
    UnknownCoordinateMode(String),
    #[error("structure invariant violated: {0}")]
    InvariantViolation(String),
}

/// Unit cell. Rows of `vectors` are the lattice vectors a, b, c in Å before
/// scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    vectors: Mat3,
    scale: f64,
}

impl Lattice {
    pub fn new(vectors: Mat3, scale: f64) -> Result<Self, PoscarError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(PoscarError::MalformedHeader(format!(
                "scale factor must be positive, got {scale}"
            )));
        }
        let det = linalg::det(&linalg::scale(&vectors, scale));
        if !(det > SINGULAR_DET) {
            return Err(PoscarError::SingularLattice(det));
        }
        Ok(Self { vectors, scale })
    }

    /// Lattice from already-scaled vectors.
    pub fn from_matrix(matrix: Mat3) -> Result<Self, PoscarError> {
        Self::new(matrix, 1.0)
    }

    pub fn vectors(&self) -> &Mat3 {
        &self.vectors
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Scaled lattice vectors, rows in Å.
    pub fn matrix(&self) -> Mat3 {
        linalg::scale(&self.vectors, self.scale)
    }

    pub fn volume(&self) -> f64 {
        linalg::det(&self.matrix())
    }

    pub fn to_cartesian(&self, frac: &Vec3) -> Vec3 {
        linalg::row_times(frac, &self.matrix())
    }

    pub fn to_fractional(&self, cart: &Vec3) -> Vec3 {
        // det > 0 is guaranteed by construction
        let inv = linalg::inverse(&self.matrix()).expect("non-singular lattice");
        linalg::row_times(cart, &inv)
    }

    /// Uniformly scaled copy.
    pub fn scaled(&self, k: f64) -> Result<Self, PoscarError> {
        Self::new(self.vectors, self.scale * k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSite {
    pub species: String,
    pub frac: Vec3,
}

impl AtomSite {
    pub fn new(species: impl Into<String>, frac: Vec3) -> Self {
        Self {
            species: species.into(),
            frac,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrystalStructure {
    pub comment: String,
    pub lattice: Lattice,
    /// Distinct species with their atom counts, in POSCAR order.
    pub species_order: Vec<(String, usize)>,
    pub sites: Vec<AtomSite>,
}

impl CrystalStructure {
    /// Builds a structure from sites, deriving `species_order` from first
    /// appearance and grouping sites contiguously.
    pub fn from_sites(
        comment: impl Into<String>,
        lattice: Lattice,
        sites: Vec<AtomSite>,
    ) -> Self {
        let mut order: Vec<String> = Vec::new();
        for s in &sites {
            if !order.contains(&s.species) {
                order.push(s.species.clone());
            }
        }
        let mut grouped = Vec::with_capacity(sites.len());
        let mut species_order = Vec::with_capacity(order.len());
        for sp in order {
            let before = grouped.len();
            grouped.extend(sites.iter().filter(|s| s.species == sp).cloned());
            species_order.push((sp, grouped.len() - before));
        }
        Self {
            comment: comment.into(),
            lattice,
            species_order,
            sites: grouped,
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.sites.len()
    }

    pub fn species(&self) -> impl Iterator<Item = &str> {
        self.species_order.iter().map(|(s, _)| s.as_str())
    }

    pub fn count_of(&self, species: &str) -> usize {
        self.species_order
            .iter()
            .find(|(s, _)| s == species)
            .map_or(0, |(_, n)| *n)
    }

    pub fn cartesian(&self, i: usize) -> Vec3 {
        self.lattice.to_cartesian(&self.sites[i].frac)
    }

    /// Checks counts, grouping, and non-emptiness.
    pub fn check_invariants(&self) -> Result<(), PoscarError> {
        if self.sites.is_empty() {
            return Err(PoscarError::InvariantViolation("structure has no sites".into()));
        }
        let total: usize = self.species_order.iter().map(|(_, n)| n).sum();
        if total != self.sites.len() {
            return Err(PoscarError::InvariantViolation(format!(
                "species counts sum to {total} but there are {} sites",
                self.sites.len()
            )));
        }
        let mut idx = 0;
        for (sp, n) in &self.species_order {
            if sp.is_empty() || sp.contains(char::is_whitespace) {
                return Err(PoscarError::InvariantViolation(format!(
                    "invalid species symbol {sp:?}"
                )));
            }
            for site in &self.sites[idx..idx + n] {
                if &site.species != sp {
                    return Err(PoscarError::InvariantViolation(format!(
                        "site {idx} has species {} but {sp} was expected",
                        site.species
                    )));
                }
            }
            idx += n;
        }
        Ok(())
    }

    /// Field-by-field comparison on the scaled lattice, species, and
    /// fractional coordinates. The comment line is ignored.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let (a, b) = (self.lattice.matrix(), other.lattice.matrix());
        let lattice_ok = (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() <= tol));
        lattice_ok
            && self.species_order == other.species_order
            && self.sites.len() == other.sites.len()
            && self.sites.iter().zip(&other.sites).all(|(x, y)| {
                x.species == y.species && (0..3).all(|k| (x.frac[k] - y.frac[k]).abs() <= tol)
            })
    }
}

/// Wraps a fractional coordinate into [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Wraps all coordinates into [0,1) and regroups sites by species, keeping the
/// existing species order and intra-species order.
pub fn canonicalize(s: &CrystalStructure) -> CrystalStructure {
    let mut order: Vec<String> = s.species_order.iter().map(|(sp, _)| sp.clone()).collect();
    for site in &s.sites {
        if !order.contains(&site.species) {
            order.push(site.species.clone());
        }
    }
    let mut sites = Vec::with_capacity(s.sites.len());
    let mut species_order = Vec::with_capacity(order.len());
    for sp in order {
        let before = sites.len();
        sites.extend(s.sites.iter().filter(|x| x.species == sp).map(|x| AtomSite {
            species: x.species.clone(),
            frac: x.frac.map(wrap_unit),
        }));
        let n = sites.len() - before;
        if n > 0 {
            species_order.push((sp, n));
        }
    }
    CrystalStructure {
        comment: s.comment.clone(),
        lattice: s.lattice.clone(),
        species_order,
        sites,
    }
}

fn parse_floats(line: &str, n: usize, what: &str) -> Result<Vec<f64>, PoscarError> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .take(n)
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| PoscarError::MalformedHeader(format!("cannot parse {what}: {line:?}")))?;
    if vals.len() < n {
        return Err(PoscarError::MalformedHeader(format!(
            "expected {n} numbers in {what}: {line:?}"
        )));
    }
    Ok(vals)
}

fn parse_counts(line: &str) -> Option<Vec<usize>> {
    let counts: Option<Vec<usize>> = line.split_whitespace().map(|t| t.parse().ok()).collect();
    counts.filter(|c| !c.is_empty())
}

/// Parses a POSCAR document. Coordinates are returned in fractional form and
/// wrapped into [0,1).
pub fn parse_poscar(text: &str) -> Result<CrystalStructure, PoscarError> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let header = |i: usize, what: &str| -> Result<&str, PoscarError> {
        lines
            .get(i)
            .copied()
            .ok_or_else(|| PoscarError::MalformedHeader(format!("missing {what} line")))
    };

    let comment = header(0, "comment")?.trim().to_string();
    let scale = parse_floats(header(1, "scale")?, 1, "scale factor")?[0];
    let mut vectors = [[0.0; 3]; 3];
    for (i, row) in vectors.iter_mut().enumerate() {
        let v = parse_floats(header(2 + i, "lattice vector")?, 3, "lattice vector")?;
        row.copy_from_slice(&v);
    }
    let lattice = Lattice::new(vectors, scale)?;

    let mut cursor = 5;
    let first = header(cursor, "species or counts")?;
    let (symbols, counts) = match parse_counts(first) {
        // pre-VASP5: no symbols line, species come from the comment
        Some(counts) => {
            let symbols: Vec<String> = comment
                .split_whitespace()
                .take(counts.len())
                .map(String::from)
                .collect();
            if symbols.len() != counts.len() {
                return Err(PoscarError::MalformedHeader(format!(
                    "no species line and comment {comment:?} does not name {} species",
                    counts.len()
                )));
            }
            cursor += 1;
            (symbols, counts)
        }
        None => {
            let symbols: Vec<String> = first.split_whitespace().map(String::from).collect();
            let counts = parse_counts(header(cursor + 1, "counts")?).ok_or_else(|| {
                PoscarError::MalformedHeader(format!("bad counts line {:?}", lines[cursor + 1]))
            })?;
            if symbols.len() != counts.len() {
                return Err(PoscarError::MalformedHeader(format!(
                    "{} species symbols but {} counts",
                    symbols.len(),
                    counts.len()
                )));
            }
            cursor += 2;
            (symbols, counts)
        }
    };

    let mode_line = header(cursor, "coordinate mode")?.trim();
    let cartesian = match mode_line.chars().next() {
        Some('D' | 'd') => false,
        Some('C' | 'c' | 'K' | 'k') => true,
        Some('S' | 's') => {
            return Err(PoscarError::MalformedHeader(
                "selective dynamics is not supported".into(),
            ))
        }
        _ => return Err(PoscarError::UnknownCoordinateMode(mode_line.to_string())),
    };
    cursor += 1;

    let expected: usize = counts.iter().sum();
    let body = &lines[cursor.min(lines.len())..];
    let n_rows = body.iter().take_while(|l| !l.trim().is_empty()).count();
    if n_rows != expected {
        return Err(PoscarError::CountMismatch {
            expected,
            found: n_rows,
        });
    }
    if body[n_rows..].iter().any(|l| !l.trim().is_empty()) {
        return Err(PoscarError::MalformedHeader(
            "velocity or predictor blocks are not supported".into(),
        ));
    }

    let mut sites = Vec::with_capacity(expected);
    let mut rows = body.iter();
    for (sp, &n) in symbols.iter().zip(&counts) {
        for _ in 0..n {
            let line = rows.next().expect("row count checked");
            let v = parse_floats(line, 3, "coordinate row")?;
            let mut p = [v[0], v[1], v[2]];
            if cartesian {
                p = lattice.to_fractional(&p.map(|x| x * scale));
            }
            sites.push(AtomSite::new(sp.clone(), p.map(wrap_unit)));
        }
    }

    let species_order: Vec<(String, usize)> = symbols.into_iter().zip(counts).collect();
    let s = CrystalStructure {
        comment,
        lattice,
        species_order,
        sites,
    };
    // duplicate species symbols would break the grouping invariant
    Ok(if has_duplicate_species(&s) {
        canonicalize(&s)
    } else {
        s
    })
}

fn has_duplicate_species(s: &CrystalStructure) -> bool {
    s.species_order
        .iter()
        .enumerate()
        .any(|(i, (a, _))| s.species_order[..i].iter().any(|(b, _)| a == b))
}

/// Serializes to a Direct-mode POSCAR with scale 1.0 and the lattice vectors
/// pre-multiplied. Numbers use the shortest decimal form that reads back to
/// the same `f64`.
pub fn write_poscar(s: &CrystalStructure) -> Result<String, PoscarError> {
    s.check_invariants()?;
    let mut out = String::new();
    let comment = s.comment.lines().next().unwrap_or("").trim();
    let comment = if comment.is_empty() {
        s.species().collect::<Vec<_>>().join(" ")
    } else {
        comment.to_string()
    };
    writeln!(out, "{comment}").unwrap();
    writeln!(out, "   1.000000000").unwrap();
    for row in s.lattice.matrix() {
        writeln!(out, " {:>22} {:>22} {:>22}", row[0], row[1], row[2]).unwrap();
    }
    let symbols: Vec<String> = s.species_order.iter().map(|(sp, _)| format!("{sp:>5}")).collect();
    let counts: Vec<String> = s.species_order.iter().map(|(_, n)| format!("{n:>5}")).collect();
    writeln!(out, "{}", symbols.join("")).unwrap();
    writeln!(out, "{}", counts.join("")).unwrap();
    writeln!(out, "Direct").unwrap();
    for site in &s.sites {
        let f = site.frac;
        writeln!(out, " {:>22} {:>22} {:>22}", f[0], f[1], f[2]).unwrap();
    }
    Ok(out)
}
