// SPDX-License-Identifier: Apache-2.0

mod common;

use rand::Rng;

use crystalgan::geometry::{self, validate_structure, GeoConfig, PairClass, PeriodicAtoms};
use crystalgan::poscar::{AtomSite, CrystalStructure, Lattice};

use common::*;

#[test]
fn matches_brute_force_on_random_cells() {
    let mut r = rng(99);
    for k in 0..20 {
        let s = random_structure(&mut r, 8);
        assert!(face_widths(&s.lattice.matrix()).iter().all(|&w| w >= 2.5));
        let err = neighbor_mismatch(&s, 5.0, 3).unwrap_or_else(|| panic!("structure {k}: pair sets differ"));
        assert!(err <= 1e-9, "structure {k}: {err:e}");
    }
}

#[test]
fn matches_brute_force_on_skewed_cells() {
    let mut r = rng(3);
    for k in 0..6 {
        let m = [
            [3.0, 0.0, 0.0],
            [r.gen_range(4.0..9.0), 3.2, 0.0],
            [r.gen_range(-9.0..-4.0), r.gen_range(4.0..9.0), 3.4],
        ];
        let sites = (0..3)
            .map(|i| AtomSite::new(SPECIES[i], [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)]))
            .collect();
        let s = CrystalStructure::from_sites("skew", Lattice::from_matrix(m).unwrap(), sites);
        let err = neighbor_mismatch(&s, 4.5, 12).unwrap_or_else(|| panic!("cell {k}: pair sets differ"));
        assert!(err <= 1e-9);
    }
}

#[test]
fn rocksalt_metal_hydrogen_shell() {
    let s = rocksalt("Pd", 4.0);
    let report = geometry::neighbor_distances(&s, 2.5).unwrap();
    for i in 0..4 {
        let shell: Vec<_> = report.pairs.iter().filter(|p| p.i == i && s.sites[p.j].species == "H").collect();
        assert_eq!(shell.len(), 6);
        assert!(shell.iter().all(|p| (p.distance - 2.0).abs() <= 1e-9));
    }
    let first = report
        .per_atom_first
        .iter()
        .find(|f| f.atom == 0 && f.class == PairClass::new("Pd", "H"))
        .unwrap();
    assert!((first.distance - 2.0).abs() <= 1e-9);
}

#[test]
fn translation_leaves_distances_unchanged() {
    let mut r = rng(17);
    for _ in 0..10 {
        let s = random_structure(&mut r, 6);
        let shift = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let moved = CrystalStructure::from_sites(
            "moved",
            s.lattice.clone(),
            s.sites
                .iter()
                .map(|a| AtomSite::new(a.species.clone(), [0, 1, 2].map(|k| a.frac[k] + shift[k])))
                .collect(),
        );
        let mut d0 = geometry::neighbor_distances(&s, 4.0).unwrap().first_distances();
        let mut d1 = geometry::neighbor_distances(&moved, 4.0).unwrap().first_distances();
        d0.sort_by(f64::total_cmp);
        d1.sort_by(f64::total_cmp);
        assert_eq!(d0.len(), d1.len());
        assert!(d0.iter().zip(&d1).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}

#[test]
fn scaling_the_lattice_scales_distances() {
    let mut r = rng(23);
    for _ in 0..10 {
        let s = random_structure(&mut r, 6);
        let k = r.gen_range(1.1..1.6);
        let big = CrystalStructure::from_sites("big", s.lattice.scaled(k).unwrap(), s.sites.clone());
        let a = geometry::neighbor_distances(&s, 4.0).unwrap();
        let b = geometry::neighbor_distances(&big, 4.0 * k).unwrap();
        assert_eq!(a.pairs.len(), b.pairs.len());
        for (p, q) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!((p.i, p.j, p.image), (q.i, q.j, q.image));
            assert!((q.distance - k * p.distance).abs() < 1e-9);
        }
    }
}

#[test]
fn pdf_counts_every_pair_once() {
    let mut r = rng(31);
    for _ in 0..10 {
        let s = random_structure(&mut r, 8);
        let cutoff = 4.0;
        let pdf = geometry::pair_distribution(&s, 0.1, cutoff).unwrap();
        let pairs = brute_pairs(&s, cutoff, 3).into_iter().filter(|p| p.3 < cutoff).count();
        let total: f64 = pdf.total.iter().sum::<f64>() * s.num_atoms() as f64;
        assert!((total - pairs as f64).abs() < 1e-9, "{total} vs {pairs}");
    }
}

#[test]
fn nearest_image_prefers_smallest_index_on_ties() {
    let atoms = PeriodicAtoms::new(diag(4.0), vec![[0.0; 3]], vec!["Pd".into()]).unwrap();
    let (d, image) = atoms.nearest_image(0, 0, f64::INFINITY).unwrap().unwrap();
    assert_eq!(d, 4.0);
    assert_eq!(image, [-1, 0, 0]);
}

#[test]
fn validator_thresholds() {
    let cfg = GeoConfig::hydride("Pd", "Ni");
    assert!(validate_structure(&rocksalt("Pd", 4.0), &cfg).unwrap().good);
    // metal-metal 2.83 A, H-H 2.83 A at a = 4; at a = 2.4 both drop to 1.70 A
    let v = validate_structure(&rocksalt("Pd", 2.4), &cfg).unwrap();
    assert!(!v.good);
    assert!(v.violations.iter().all(|x| x.distance < 1.8));
    let v = validate_structure(&rocksalt("Pd", 4.4), &cfg).unwrap();
    assert!(v.violations.iter().all(|x| x.distance > 3.0));
    assert!(!v.good);
}
