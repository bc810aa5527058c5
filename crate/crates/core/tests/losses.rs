// SPDX-License-Identifier: Apache-2.0

mod common;

use std::f64::consts::LN_2;

use rand::Rng;

use crystalgan::crossgan::{self, GanModel, HyperParams, Metric, StepTag};
use crystalgan::encoding::Normalizer;
use crystalgan::geometry::GeoMode;
use crystalgan::transfer::build_step2_datasets;

use common::*;

#[test]
fn half_discriminator_identities() {
    let dir = tempfile::tempdir().unwrap();
    let (ah, bh) = hydride_datasets(dir.path());
    let hp = small_hyper(0);
    let mut m = GanModel::new(StepTag::Step1, &hp, Normalizer::fit(ah.samples.iter().chain(&bh.samples)), "Pd", "Ni")
        .unwrap();
    zero_net(&mut m.d_x);
    zero_net(&mut m.d_y);
    let x = m.to_network(ah.to_matrix().view());
    let fake = m.g_xy.predict(x.view()).unwrap();
    assert!((crossgan::adversarial_gen_loss(&m.d_y, fake.view()).unwrap() - LN_2).abs() <= 1e-12);
    assert!((crossgan::adversarial_disc_loss(&m.d_y, x.view(), fake.view()).unwrap() - 2.0 * LN_2).abs() <= 1e-12);
    let (_, _, t) = crossgan::step1_losses(&m, &ah, &bh, &hp).unwrap();
    for v in [t.gan_x, t.gan_y] {
        assert!((v - LN_2).abs() <= 1e-12);
    }
    for v in [t.d_x, t.d_y] {
        assert!((v - 2.0 * LN_2).abs() <= 1e-12);
    }
}

#[test]
fn identity_generators_reconstruct_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (ah, _) = hydride_datasets(dir.path());
    for metric in [Metric::L2Squared, Metric::L1] {
        let hp = HyperParams { metric, ..small_hyper(0) };
        let mut m = GanModel::new(StepTag::Step1, &hp, Normalizer::fit(&ah.samples), "Pd", "Ni").unwrap();
        m.g_xy = identity_net();
        m.g_yx = identity_net();
        let (_, _, t) = crossgan::step1_losses(&m, &ah, &ah, &hp).unwrap();
        assert_eq!(t.rec_x, 0.0);
        assert_eq!(t.rec_y, 0.0);
    }
}

#[test]
fn totals_equal_weighted_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let (ah, bh) = hydride_datasets(dir.path());
    let mut r = rng(4);
    let mut hp = small_hyper(1);
    let norm = Normalizer::fit(ah.samples.iter().chain(&bh.samples));
    let step1 = GanModel::new(StepTag::Step1, &hp, norm, "Pd", "Ni").unwrap();
    let (ahbg, bhag, _) = build_step2_datasets(&ah, &bh, &step1, hp.threshold).unwrap();
    for mode in [GeoMode::Paper, GeoMode::Hinge] {
        hp.geo_mode = mode;
        hp.lambdas = [0; 6].map(|_| r.gen_range(0.1..2.0));
        let l = hp.lambdas;
        let (g1, d1, t1) = crossgan::step1_losses(&step1, &ah, &bh, &hp).unwrap();
        let sum1 = l[0] * t1.gan_y + l[1] * t1.rec_x + l[2] * t1.gan_x + l[3] * t1.rec_y;
        assert!((g1 - sum1).abs() <= 1e-12);
        assert!((d1 - (t1.d_x + t1.d_y)).abs() <= 1e-12);
        assert_eq!((t1.geo1, t1.geo2), (0.0, 0.0));

        let norm2 = Normalizer::fit(ahbg.samples.iter().chain(&bhag.samples));
        let step2 = GanModel::new(StepTag::Step2, &hp, norm2, "Pd", "Ni").unwrap();
        let (g2, d2, t2) = crossgan::step2_losses(&step2, &ahbg, &bhag, &hp).unwrap();
        let sum2 = l[0] * t2.gan_y + l[1] * t2.rec_x + l[2] * t2.gan_x + l[3] * t2.rec_y + l[4] * t2.geo1 + l[5] * t2.geo2;
        assert!((g2 - sum2).abs() <= 1e-12);
        assert!((d2 - (t2.d_x + t2.d_y)).abs() <= 1e-12);
        assert!(t2.geo1 != 0.0);
    }
}

#[test]
fn terms_match_standalone_losses() {
    let dir = tempfile::tempdir().unwrap();
    let (ah, bh) = hydride_datasets(dir.path());
    let hp = small_hyper(2);
    let m = GanModel::new(StepTag::Step1, &hp, Normalizer::fit(ah.samples.iter().chain(&bh.samples)), "Pd", "Ni")
        .unwrap();
    let (_, _, t) = crossgan::step1_losses(&m, &ah, &bh, &hp).unwrap();
    let x = m.to_network(ah.to_matrix().view());
    let y = m.to_network(bh.to_matrix().view());
    let fake_y = m.g_xy.predict(x.view()).unwrap();
    let rec_x = m.g_yx.predict(fake_y.view()).unwrap();
    let fake_x = m.g_yx.predict(y.view()).unwrap();
    assert!((t.gan_y - crossgan::adversarial_gen_loss(&m.d_y, fake_y.view()).unwrap()).abs() <= 1e-12);
    assert!((t.d_x - crossgan::adversarial_disc_loss(&m.d_x, x.view(), fake_x.view()).unwrap()).abs() <= 1e-12);
    let expect = crossgan::reconstruction_loss(x.as_slice().unwrap(), rec_x.as_slice().unwrap(), Metric::L2Squared).unwrap();
    assert!((t.rec_x - expect).abs() <= 1e-12);
}

#[test]
fn wrong_step_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (ah, bh) = hydride_datasets(dir.path());
    let hp = small_hyper(0);
    let m = GanModel::new(StepTag::Step1, &hp, Normalizer::default(), "Pd", "Ni").unwrap();
    assert!(crossgan::step2_losses(&m, &ah, &bh, &hp).is_err());
}
