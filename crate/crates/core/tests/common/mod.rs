// SPDX-License-Identifier: Apache-2.0

//! Independent oracles shared by the integration tests and the acceptance
//! runner.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crystalgan::corpus::{make_synthetic_corpus, CorpusSpec, Prototype};
use crystalgan::crossgan::{self, GanModel, HyperParams, StepTag};
use crystalgan::encoding::{
    encode, DomainDataset, DomainTag, EncodedSample, Normalizer, SlotMap, DEFAULT_THRESHOLD, MAX_ROWS, SAMPLE_DIM,
};
use crystalgan::geometry::{self, GeoConfig, GeoMode};
use crystalgan::nn::{Activation, AdamConfig, Dense, Mlp, MlpGrads, MlpSpec};
use crystalgan::poscar::{AtomSite, CrystalStructure, Lattice};

pub const SPECIES: [&str; 3] = ["Pd", "Ni", "H"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn det(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Distance between opposite faces of the cell along each lattice row.
pub fn face_widths(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let v = det(m).abs();
    [
        v / norm(&cross(&m[1], &m[2])),
        v / norm(&cross(&m[2], &m[0])),
        v / norm(&cross(&m[0], &m[1])),
    ]
}

/// Right-handed lattice with diagonal in [lo, hi] and shear up to `shear`.
pub fn random_lattice(r: &mut ChaCha8Rng, lo: f64, hi: f64, shear: f64) -> [[f64; 3]; 3] {
    loop {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = if i == j { r.gen_range(lo..hi) } else { r.gen_range(-shear..=shear) };
            }
        }
        if det(&m) > 1.0 {
            return m;
        }
    }
}

/// Random structure with 1..=max_atoms atoms of Pd, Ni and H.
pub fn random_structure(r: &mut ChaCha8Rng, max_atoms: usize) -> CrystalStructure {
    let lattice = random_lattice(r, 3.0, 6.0, 1.0);
    let n = r.gen_range(1..=max_atoms);
    let sites = (0..n)
        .map(|_| {
            let sp = SPECIES[r.gen_range(0..SPECIES.len())];
            AtomSite::new(sp, [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)])
        })
        .collect();
    CrystalStructure::from_sites("random", Lattice::from_matrix(lattice).unwrap(), sites)
}

/// Every directed pair `(i, j, image, distance)` with `0 < d <= cutoff`,
/// enumerating images in `[-range, range]^3`.
pub fn brute_pairs(s: &CrystalStructure, cutoff: f64, range: i32) -> Vec<(usize, usize, [i32; 3], f64)> {
    let m = s.lattice.matrix();
    let mut out = Vec::new();
    for (i, a) in s.sites.iter().enumerate() {
        for (j, b) in s.sites.iter().enumerate() {
            for n0 in -range..=range {
                for n1 in -range..=range {
                    for n2 in -range..=range {
                        if i == j && [n0, n1, n2] == [0, 0, 0] {
                            continue;
                        }
                        let df = [
                            b.frac[0] + n0 as f64 - a.frac[0],
                            b.frac[1] + n1 as f64 - a.frac[1],
                            b.frac[2] + n2 as f64 - a.frac[2],
                        ];
                        let mut r = [0.0; 3];
                        for k in 0..3 {
                            r[k] = df[0] * m[0][k] + df[1] * m[1][k] + df[2] * m[2][k];
                        }
                        let d = norm(&r);
                        if d > 0.0 && d <= cutoff {
                            out.push((i, j, [n0, n1, n2], d));
                        }
                    }
                }
            }
        }
    }
    out.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
    out
}

/// Largest mismatch between the library neighbour list and the brute-force
/// list, or `None` when the pair sets differ.
pub fn neighbor_mismatch(s: &CrystalStructure, cutoff: f64, range: i32) -> Option<f64> {
    let report = geometry::neighbor_distances(s, cutoff).ok()?;
    let brute = brute_pairs(s, cutoff, range);
    let mut lib: Vec<_> = report.pairs.iter().map(|p| (p.i, p.j, p.image, p.distance)).collect();
    lib.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
    if lib.len() != brute.len() {
        return None;
    }
    let mut worst = 0.0_f64;
    for (a, b) in lib.iter().zip(&brute) {
        if (a.0, a.1, a.2) != (b.0, b.1, b.2) {
            return None;
        }
        worst = worst.max((a.3 - b.3).abs());
    }
    Some(worst)
}

/// Ideal rock-salt cell with the metal at the origin sublattice.
pub fn rocksalt(metal: &str, a: f64) -> CrystalStructure {
    let fcc = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];
    let mut sites: Vec<AtomSite> = fcc.iter().map(|p| AtomSite::new(metal, *p)).collect();
    sites.extend(fcc.iter().map(|p| AtomSite::new("H", p.map(|x| (x + 0.5) % 1.0))));
    CrystalStructure::from_sites("rocksalt", Lattice::from_matrix(diag(a)).unwrap(), sites)
}

pub fn diag(a: f64) -> [[f64; 3]; 3] {
    [[a, 0.0, 0.0], [0.0, a, 0.0], [0.0, 0.0, a]]
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂).
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn flat_grads(g: &MlpGrads) -> Vec<f64> {
    g.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied().collect::<Vec<_>>()).collect()
}

fn param_mut(net: &mut Mlp, mut k: usize) -> &mut f64 {
    for l in &mut net.layers {
        let nw = l.w.len();
        if k < nw {
            return l.w.iter_mut().nth(k).unwrap();
        }
        k -= nw;
        let nb = l.b.len();
        if k < nb {
            return &mut l.b[k];
        }
        k -= nb;
    }
    panic!("parameter index out of range")
}

/// Relative error of `Mlp::backward` against central differences of
/// `Σ c ⊙ net(x)` over every parameter and every input.
pub fn mlp_gradient_error(spec: MlpSpec, seed: u64, batch: usize) -> (f64, f64) {
    let mut r = rng(seed);
    let mut net = Mlp::init(spec.clone(), seed).unwrap();
    for l in &mut net.layers {
        l.b.mapv_inplace(|_| r.gen_range(-0.3..0.3));
    }
    let x = Array2::from_shape_fn((batch, spec.input_dim()), |_| r.gen_range(-1.0..1.0));
    let c = Array2::from_shape_fn((batch, spec.output_dim()), |_| r.gen_range(-1.0..1.0));
    let loss = |net: &Mlp, x: &Array2<f64>| (net.predict(x.view()).unwrap() * &c).sum();
    let (_, cache) = net.forward_batch(x.view()).unwrap();
    let (grads, dx) = net.backward(&cache, c.view()).unwrap();
    let h = 1e-6;
    let analytic = flat_grads(&grads);
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..analytic.len() {
        let orig = *param_mut(&mut net, k);
        *param_mut(&mut net, k) = orig + h;
        let up = loss(&net, &x);
        *param_mut(&mut net, k) = orig - h;
        let down = loss(&net, &x);
        *param_mut(&mut net, k) = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    let mut dx_num = Vec::with_capacity(x.len());
    for idx in 0..x.len() {
        let mut xp = x.clone();
        let (row, col) = (idx / x.ncols(), idx % x.ncols());
        xp[[row, col]] += h;
        let up = loss(&net, &xp);
        xp[[row, col]] -= 2.0 * h;
        let down = loss(&net, &xp);
        dx_num.push((up - down) / (2.0 * h));
    }
    (
        rel_error(&analytic, &numeric),
        rel_error(dx.as_slice().unwrap(), &dx_num),
    )
}

pub fn small_spec(output: Activation) -> MlpSpec {
    MlpSpec {
        layer_dims: vec![6, 9, 7, if output == Activation::Sigmoid { 1 } else { 4 }],
        hidden: Activation::Relu,
        output,
    }
}

/// Encoded H2 + Pd + Ni sample in a slightly sheared cell.
pub fn toy_sample(seed: u64) -> EncodedSample {
    let mut r = rng(seed);
    let m = [
        [3.3 + r.gen_range(0.0..0.1), 0.2, 0.0],
        [0.1, 3.6 + r.gen_range(0.0..0.1), 0.3],
        [0.0, 0.2, 4.1 + r.gen_range(0.0..0.1)],
    ];
    let jitter = |r: &mut ChaCha8Rng, p: [f64; 3]| p.map(|x| x + r.gen_range(-0.02..0.02));
    let sites = vec![
        AtomSite::new("H", jitter(&mut r, [0.10, 0.15, 0.20])),
        AtomSite::new("H", jitter(&mut r, [0.45, 0.40, 0.35])),
        AtomSite::new("Pd", jitter(&mut r, [0.70, 0.20, 0.60])),
        AtomSite::new("Ni", jitter(&mut r, [0.30, 0.75, 0.80])),
    ];
    let s = CrystalStructure::from_sites("toy", Lattice::from_matrix(m).unwrap(), sites);
    encode(&s, &SlotMap::ternary("Pd", "Ni").unwrap()).unwrap()
}

/// Flat indices of the lattice rows and occupied atom rows.
pub fn active_indices(e: &EncodedSample) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..9).collect();
    for b in 1..4 {
        for row in e.atom_rows(b, DEFAULT_THRESHOLD) {
            idx.extend((0..3).map(|k| (b * MAX_ROWS + row) * 3 + k));
        }
    }
    idx
}

/// Relative error of both constraint gradients against central differences
/// over the active entries of `e`.
pub fn geo_gradient_error(e: &EncodedSample, cfg: &GeoConfig, mode: GeoMode) -> (f64, f64) {
    let g = geometry::geo_losses(e, cfg, mode, DEFAULT_THRESHOLD);
    let flat1: Vec<f64> = g.grad1.iter().flatten().flatten().copied().collect();
    let flat2: Vec<f64> = g.grad2.iter().flatten().flatten().copied().collect();
    let base = e.to_flat();
    let h = 1e-6;
    let eval = |values: &[f64]| {
        let s = EncodedSample::from_flat(values, e.labels.clone());
        let l = geometry::geo_losses(&s, cfg, mode, DEFAULT_THRESHOLD);
        (l.geo1, l.geo2)
    };
    let (mut a1, mut a2, mut n1, mut n2) = (vec![], vec![], vec![], vec![]);
    for i in active_indices(e) {
        let mut v = base.clone();
        v[i] += h;
        let up = eval(&v);
        v[i] -= 2.0 * h;
        let down = eval(&v);
        a1.push(flat1[i]);
        a2.push(flat2[i]);
        n1.push((up.0 - down.0) / (2.0 * h));
        n2.push((up.1 - down.1) / (2.0 * h));
    }
    (rel_error(&a1, &n1), rel_error(&a2, &n2))
}

fn near_identity(r: &mut ChaCha8Rng, noise: f64) -> Mlp {
    let mut w = Array2::from_shape_fn((SAMPLE_DIM, SAMPLE_DIM), |_| r.gen_range(-noise..noise));
    for k in 0..SAMPLE_DIM {
        w[[k, k]] += 1.0;
    }
    Mlp {
        spec: MlpSpec::generator(SAMPLE_DIM, 0, 1),
        layers: vec![Dense {
            w,
            b: Array1::from_shape_fn(SAMPLE_DIM, |_| r.gen_range(-noise..noise)),
        }],
    }
}

fn dataset(tag: DomainTag, samples: Vec<EncodedSample>) -> DomainDataset {
    DomainDataset {
        domain_tag: tag,
        element_a: "Pd".into(),
        element_b: "Ni".into(),
        names: (0..samples.len()).map(|k| format!("toy_{k}")).collect(),
        samples,
    }
}

/// Step-2 model with near-identity linear generators, plus one toy batch
/// per domain.
pub fn step2_toy(mode: GeoMode) -> (GanModel, DomainDataset, DomainDataset, HyperParams) {
    let mut r = rng(11);
    let x = dataset(DomainTag::AHBg, vec![toy_sample(1), toy_sample(2)]);
    let y = dataset(DomainTag::BHAg, vec![toy_sample(3), toy_sample(4)]);
    let normalizer = Normalizer::fit(x.samples.iter().chain(&y.samples));
    let d = MlpSpec::discriminator(SAMPLE_DIM, 1, 16);
    let model = GanModel::from_parts(
        StepTag::Step2,
        near_identity(&mut r, 1e-5),
        near_identity(&mut r, 1e-5),
        Mlp::init(d.clone(), 21).unwrap(),
        Mlp::init(d, 22).unwrap(),
        AdamConfig::default(),
        normalizer,
        "Pd",
        "Ni",
    )
    .unwrap();
    let hp = HyperParams {
        geo_mode: mode,
        lambdas: [1.0, 0.7, 1.3, 0.9, 1.1, 0.8],
        ..HyperParams::default()
    };
    (model, x, y, hp)
}

/// Relative error of the full step-2 generator gradient on the toy, over a
/// fixed subset of both generators' parameters. Also returns the constraint
/// terms seen at the base point.
pub fn step2_gradient_error(mode: GeoMode) -> (f64, f64, f64) {
    let (model, x, y, hp) = step2_toy(mode);
    let xn = model.to_network(x.to_matrix().view());
    let yn = model.to_network(y.to_matrix().view());
    let (terms, g_xy, g_yx) = crossgan::generator_gradients(&model, xn.view(), yn.view(), &hp).unwrap();
    let mut r = rng(5);
    let mut outputs: Vec<usize> = (0..9).collect();
    for e in x.samples.iter().chain(&y.samples).take(1) {
        outputs.extend(active_indices(e).into_iter().filter(|&i| i >= 9));
    }
    let picks: Vec<(usize, usize)> = outputs
        .iter()
        .flat_map(|&o| {
            let i1 = r.gen_range(0..9);
            let i2 = r.gen_range(0..SAMPLE_DIM);
            [(o, i1), (o, i2), (o, o)]
        })
        .collect();
    let h = 1e-6;
    let loss = |m: &GanModel| {
        crossgan::generator_gradients(m, xn.view(), yn.view(), &hp)
            .unwrap()
            .0
            .loss_g
    };
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for which in 0..2 {
        let grads = if which == 0 { &g_xy } else { &g_yx };
        for &(o, i) in &picks {
            let mut m = model.clone();
            let net = if which == 0 { &mut m.g_xy } else { &mut m.g_yx };
            net.layers[0].w[[o, i]] += h;
            let up = loss(&m);
            let net = if which == 0 { &mut m.g_xy } else { &mut m.g_yx };
            net.layers[0].w[[o, i]] -= 2.0 * h;
            let down = loss(&m);
            analytic.push(grads.layers[0].w[[o, i]]);
            numeric.push((up - down) / (2.0 * h));
        }
        for &o in &outputs {
            let mut m = model.clone();
            let net = if which == 0 { &mut m.g_xy } else { &mut m.g_yx };
            net.layers[0].b[o] += h;
            let up = loss(&m);
            let net = if which == 0 { &mut m.g_xy } else { &mut m.g_yx };
            net.layers[0].b[o] -= 2.0 * h;
            let down = loss(&m);
            analytic.push(grads.layers[0].b[o]);
            numeric.push((up - down) / (2.0 * h));
        }
    }
    (rel_error(&analytic, &numeric), terms.geo1, terms.geo2)
}

/// Synthetic rock-salt PdH-like and NiH-like corpora, 35 structures each.
pub fn hydride_corpora(root: &Path) -> (PathBuf, PathBuf) {
    let a = root.join("PdH");
    let b = root.join("NiH");
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Pd", (3.9, 4.2), 35, 1), &a).unwrap();
    make_synthetic_corpus(&CorpusSpec::new(Prototype::Rocksalt, "Ni", (3.6, 3.9), 35, 2), &b).unwrap();
    (a, b)
}

/// Bitwise equality of two floats, treating every NaN alike.
pub fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

/// POSCAR text with a random scale, lattice, species list and coordinates,
/// in Direct or Cartesian mode. Direct coordinates may lie outside [0, 1).
pub fn random_poscar_text(r: &mut ChaCha8Rng) -> String {
    let scale: f64 = r.gen_range(0.5..2.0);
    let m = random_lattice(r, 2.0, 8.0, 1.5);
    let n_species = r.gen_range(1..=3);
    let counts: Vec<usize> = (0..n_species).map(|_| r.gen_range(1..=6)).collect();
    let cartesian = r.gen_bool(0.5);
    let mut text = format!("random {}\n{scale}\n", r.gen::<u32>());
    for row in &m {
        text.push_str(&format!("{} {} {}\n", row[0], row[1], row[2]));
    }
    text.push_str(&SPECIES[..n_species].join(" "));
    text.push('\n');
    text.push_str(&counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "));
    text.push_str(if cartesian { "\nCartesian\n" } else { "\nDirect\n" });
    for _ in 0..counts.iter().sum::<usize>() {
        let f = [r.gen_range(-1.5..2.5), r.gen_range(-1.5..2.5), r.gen_range(-1.5..2.5)];
        let p = if cartesian {
            let mut c = [0.0; 3];
            for k in 0..3 {
                c[k] = f[0] * m[0][k] + f[1] * m[1][k] + f[2] * m[2][k];
            }
            c
        } else {
            f
        };
        text.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    text
}

/// Largest field difference after parse → write → parse, or `None` when the
/// species lists or counts differ.
pub fn round_trip_error(text: &str) -> Option<f64> {
    let first = crystalgan::poscar::parse_poscar(text).ok()?;
    let written = crystalgan::poscar::write_poscar(&first).ok()?;
    let second = crystalgan::poscar::parse_poscar(&written).ok()?;
    if first.species_order != second.species_order || first.sites.len() != second.sites.len() {
        return None;
    }
    let (a, b) = (first.lattice.matrix(), second.lattice.matrix());
    let mut worst = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((a[i][j] - b[i][j]).abs());
        }
    }
    for (x, y) in first.sites.iter().zip(&second.sites) {
        if x.species != y.species {
            return None;
        }
        for k in 0..3 {
            worst = worst.max((x.frac[k] - y.frac[k]).abs());
        }
    }
    Some(worst)
}

/// Loads the two synthetic corpora as AH / BH datasets.
pub fn hydride_datasets(root: &Path) -> (DomainDataset, DomainDataset) {
    let (a, b) = hydride_corpora(root);
    let slots = SlotMap::ternary("Pd", "Ni").unwrap();
    (
        crystalgan::encoding::load_domain_dataset(&a, DomainTag::AH, &slots).unwrap(),
        crystalgan::encoding::load_domain_dataset(&b, DomainTag::BH, &slots).unwrap(),
    )
}

pub fn zero_net(net: &mut Mlp) {
    for l in &mut net.layers {
        l.w.fill(0.0);
        l.b.fill(0.0);
    }
}

pub fn identity_net() -> Mlp {
    let mut w = Array2::zeros((SAMPLE_DIM, SAMPLE_DIM));
    for k in 0..SAMPLE_DIM {
        w[[k, k]] = 1.0;
    }
    Mlp {
        spec: MlpSpec::generator(SAMPLE_DIM, 0, 1),
        layers: vec![Dense {
            w,
            b: Array1::zeros(SAMPLE_DIM),
        }],
    }
}

/// Small-network hyper-parameters for fast tests.
pub fn small_hyper(seed: u64) -> HyperParams {
    HyperParams {
        hidden_layers: 2,
        hidden_width: 24,
        seed,
        ..HyperParams::default()
    }
}

/// Every regular file under `dir`, relative path to bytes.
pub fn read_tree(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Generated POSCARs and training logs of a run directory.
pub fn reproducible_artifacts(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    read_tree(dir)
        .into_iter()
        .filter(|(p, _)| {
            let name = p.to_string_lossy();
            name.ends_with(".vasp") || (name.contains("trainlog_") && name.ends_with(".csv"))
        })
        .collect()
}

/// Number of transferred samples and the number that changed anything but
/// the placeholder block, over both step-2 datasets of a seed directory.
pub fn transfer_violations(seed_dir: &Path, ah: &DomainDataset, bh: &DomainDataset) -> (usize, usize) {
    use crystalgan::encoding::{A_BLOCK, B_BLOCK};
    let mut checked = 0;
    let mut bad = 0;
    for (file, original, target) in [("ahbg.json", ah, B_BLOCK), ("bhag.json", bh, A_BLOCK)] {
        let out = DomainDataset::load(&seed_dir.join("step2").join(file)).unwrap();
        for (name, s) in out.names.iter().zip(&out.samples) {
            let k = original.names.iter().position(|n| n == name).unwrap();
            let o = &original.samples[k];
            checked += 1;
            let kept = (0..4).filter(|&b| b != target).all(|b| {
                o.blocks[b].iter().flatten().zip(s.blocks[b].iter().flatten()).all(|(x, y)| same_bits(*x, *y))
            });
            let filled = s.occupancy.map_or(false, |occ| occ[target] > 0);
            let was_empty = o.blocks[target].iter().flatten().all(|&x| x == 0.0);
            if !(kept && filled && was_empty) {
                bad += 1;
            }
        }
    }
    (checked, bad)
}
