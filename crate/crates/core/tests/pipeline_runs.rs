// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use crystalgan::crossgan::{self, GanModel, StepTag};
use crystalgan::encoding::Normalizer;
use crystalgan::geometry::{StructureVerdict, ValidationReport};
use crystalgan::pipeline::{report, run_pipeline, write_report, Method, PipelineError, RunConfig, RunManifest};

use common::*;

fn small_config(root: &Path, method: Method, out: &str) -> RunConfig {
    let (a, b) = (root.join("PdH"), root.join("NiH"));
    if !a.exists() {
        hydride_corpora(root);
    }
    let mut cfg = RunConfig::new(a, b, root.join(out), "Pd", "Ni", method);
    cfg.hyper = small_hyper(0);
    cfg.hyper.epochs = 12;
    cfg.seeds = vec![3, 4];
    cfg
}

#[test]
fn every_method_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    for method in Method::ALL {
        let a = run_pipeline(&small_config(root.path(), method, &format!("{method}_a"))).unwrap();
        let b = run_pipeline(&small_config(root.path(), method, &format!("{method}_b"))).unwrap();
        let (fa, fb) = (reproducible_artifacts(&a.out_dir), reproducible_artifacts(&b.out_dir));
        assert!(fa.keys().any(|p| p.to_string_lossy().ends_with(".csv")));
        assert_eq!(fa, fb, "{method}");
        for s in &a.manifest.seeds {
            assert!(s.dir.join("validation.json").is_file());
            assert!(s.dir.join("report.txt").is_file());
        }
    }
}

#[test]
fn crystalgan_layout_and_transfer_invariants() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small_config(root.path(), Method::Crystalgan, "cg");
    let out = run_pipeline(&cfg).unwrap();
    let (ah, bh) = crystalgan::pipeline::load_domains(&cfg).unwrap();
    for s in &out.manifest.seeds {
        for f in [
            "trainlog_step1.csv",
            "trainlog_step2.csv",
            "checkpoints/step1.json",
            "checkpoints/step2.json",
            "step2/transfer_manifest.json",
            "generated/provenance.json",
        ] {
            assert!(s.dir.join(f).is_file(), "missing {f}");
        }
        let (checked, bad) = transfer_violations(&s.dir, &ah, &bh);
        assert!(checked > 0);
        assert_eq!(bad, 0);
        assert_eq!(s.final_loss_g.len(), 2);
    }
    assert_eq!(out.manifest.hyper.lambdas, [1.0; 6]);
    let log = fs::read_to_string(out.manifest.seeds[0].dir.join("trainlog_step1.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), crossgan::TRAINLOG_HEADER);
    assert_eq!(log.lines().count(), 13);
}

#[test]
fn noconstraints_manifest_records_zero_weights() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config(root.path(), Method::CrystalganNoconstraints, "nc");
    cfg.seeds = vec![0];
    cfg.hyper.epochs = 3;
    run_pipeline(&cfg).unwrap();
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(root.path().join("nc/manifest.json")).unwrap()).unwrap();
    assert_eq!(&m.hyper.lambdas[4..], &[0.0, 0.0]);
    assert_eq!(m.method, Method::CrystalganNoconstraints);
}

#[test]
fn invalid_domain_path_fails_before_running() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = small_config(root.path(), Method::Crystalgan, "never");
    cfg.domain_a_dir = root.path().join("missing");
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
    assert!(!root.path().join("never").exists());
}

#[test]
fn checkpoint_round_trip_and_version_check() {
    let dir = tempfile::tempdir().unwrap();
    let (ah, bh) = hydride_datasets(dir.path());
    let mut hp = small_hyper(5);
    hp.epochs = 3;
    let mut m = GanModel::new(StepTag::Step1, &hp, Normalizer::fit(ah.samples.iter().chain(&bh.samples)), "Pd", "Ni")
        .unwrap();
    crossgan::train(&mut m, &ah, &bh, &hp).unwrap();
    let path = dir.path().join("ck.json");
    crossgan::save_checkpoint(&path, hp.seed, hp.epochs, &m).unwrap();
    let back = crossgan::load_checkpoint::<GanModel>(&path).unwrap();
    assert_eq!(back.model, m);
    assert_eq!(back.model.checksum(), m.checksum());
    assert_eq!((back.seed, back.epoch), (5, 3));
    let text = fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":9", 1);
    fs::write(&path, text).unwrap();
    assert!(crossgan::load_checkpoint::<GanModel>(&path).is_err());
}

fn verdict(good: bool) -> StructureVerdict {
    StructureVerdict {
        good,
        complete: true,
        violations: vec![],
        error: None,
    }
}

/// A run directory holding a manifest and one report per seed.
fn fabricated_run(root: &Path, a: &str, b: &str, method: Method, per_seed: &[(usize, usize)]) -> PathBuf {
    let dir = root.join(format!("{a}{b}_{method}"));
    fs::create_dir_all(&dir).unwrap();
    let cfg = RunConfig::new("a", "b", &dir, a, b, method);
    let manifest = RunManifest {
        version: "test".into(),
        method,
        system: cfg.system(),
        hyper: cfg.effective_hyper(),
        config: cfg,
        dataset_checksums: BTreeMap::new(),
        seeds: vec![],
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string(&manifest).unwrap()).unwrap();
    for (seed, &(good, total)) in per_seed.iter().enumerate() {
        let mut rep = ValidationReport::default();
        for k in 0..total {
            rep.per_structure.insert(format!("s{k:03}"), verdict(k < good));
        }
        rep.good_count = good;
        rep.total = total;
        let sd = dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&sd).unwrap();
        fs::write(sd.join("validation.json"), serde_json::to_string(&rep).unwrap()).unwrap();
    }
    dir
}

#[test]
fn report_renders_reference_counts() {
    let root = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for (a, b, counts) in [("Pd", "Ni", [0, 0, 4, 9]), ("Mg", "Ti", [0, 0, 2, 8])] {
        for (m, c) in Method::ALL.into_iter().zip(counts) {
            dirs.push(fabricated_run(root.path(), a, b, m, &[(c, 20)]));
        }
    }
    let table = report(&dirs).unwrap();
    let row = |sys: &str, m| table.get(sys, m).unwrap().good;
    assert_eq!(Method::ALL.map(|m| row("Pd-Ni-H", m)), [0, 0, 4, 9]);
    assert_eq!(Method::ALL.map(|m| row("Mg-Ti-H", m)), [0, 0, 2, 8]);
    let text = table.to_text();
    let pd = text.lines().find(|l| l.starts_with("Pd-Ni-H")).unwrap();
    let cells: Vec<&str> = pd.split_whitespace().collect();
    assert_eq!(cells, ["Pd-Ni-H", "0", "/", "20", "0", "/", "20", "4", "/", "20", "9", "/", "20"]);
    write_report(&table, &root.path().join("rep")).unwrap();
    assert!(root.path().join("rep/comparison.json").is_file());
}

#[test]
fn report_of_empty_run_is_zero() {
    let root = tempfile::tempdir().unwrap();
    let dir = fabricated_run(root.path(), "Pd", "Ni", Method::Crystalgan, &[(0, 0)]);
    let table = report(&[dir]).unwrap();
    let r = table.get("Pd-Ni-H", Method::Crystalgan).unwrap();
    assert_eq!((r.good, r.total, r.per_seed.clone()), (0, 0, vec![0]));
}

#[test]
fn report_recounts_verdicts() {
    let root = tempfile::tempdir().unwrap();
    let dir = fabricated_run(root.path(), "Pd", "Ni", Method::Crystalgan, &[(3, 10), (1, 10)]);
    let path = dir.join("seed_0/validation.json");
    let mut rep: ValidationReport = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    rep.good_count = 7;
    fs::write(&path, serde_json::to_string(&rep).unwrap()).unwrap();
    let r = report(&[dir]).unwrap();
    let row = r.get("Pd-Ni-H", Method::Crystalgan).unwrap();
    assert_eq!(row.per_seed, vec![3, 1]);
    assert_eq!(row.good, 4);
}

#[test]
fn report_without_reports_fails() {
    let root = tempfile::tempdir().unwrap();
    assert!(matches!(report(&[root.path().to_path_buf()]), Err(PipelineError::MissingReport(_))));
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_crystalgan");
    let root = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| Command::new(bin).args(args).current_dir(root.path()).output().unwrap().status.code();
    assert_eq!(code(&["make-corpus", "--metal", "Pd", "--a-min", "3.9", "--a-max", "4.2", "--out", "PdH"]), Some(0));
    assert_eq!(code(&["make-corpus", "--metal", "Ni", "--a-min", "3.6", "--a-max", "3.9", "--seed", "2", "--out", "NiH"]), Some(0));
    assert_eq!(code(&["make-corpus", "--metal", "Ni", "--a-min", "1", "--a-max", "3", "--out", "bad"]), Some(1));
    let cfg = r#"{"domain_a_dir":"PdH","domain_b_dir":"NiH","out_dir":"out","element_a":"Pd","element_b":"Ni",
        "method":"crystalgan","hyper":{"epochs":2,"hidden_layers":1,"hidden_width":8}}"#;
    fs::write(root.path().join("cfg.json"), cfg).unwrap();
    assert_eq!(code(&["run", "--config", "cfg.json", "--method", "discogan", "--seed", "1"]), Some(0));
    assert!(root.path().join("out/seed_1/validation.json").is_file());
    assert_eq!(code(&["report", "out", "--out", "rep"]), Some(0));
    assert_eq!(code(&["run", "--config", "missing.json"]), Some(1));
    assert_eq!(code(&["run", "--config", "cfg.json", "--geo-mode", "sideways"]), Some(1));
    assert_eq!(code(&["report", "PdH"]), Some(2));
    assert_eq!(code(&["generate", "--config", "cfg.json", "--checkpoint", "missing.json"]), Some(2));
}
