// SPDX-License-Identifier: Apache-2.0

//! End-to-end runs, artifact layout and the method comparison table.
//!
//! Layout of one run directory:
//!
//! ```text
//! <out>/manifest.json
//! <out>/seed_<s>/trainlog_step1.csv, trainlog_step2.csv
//! <out>/seed_<s>/checkpoints/*.json
//! <out>/seed_<s>/step2/{ahbg,bhag}.json, transfer_manifest.json
//! <out>/seed_<s>/generated/*.vasp
//! <out>/seed_<s>/report.txt, validation.json
//! <out>/seed_<s>/pdf/*.dat
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crossgan::{self, ClassicGan, Direction, GanModel, Generated, HyperParams, StepTag, TrainLog};
use crate::encoding::{self, DomainDataset, DomainTag, Normalizer, SlotMap};
use crate::geometry::{self, GeoMode, ValidationReport};
use crate::poscar::{self, CrystalStructure};
use crate::transfer;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("no validation report under {0}")]
    MissingReport(PathBuf),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Wraps an error as a failure of the named stage.
pub fn stage<E: Into<BoxError>>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        source: e.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClassicGan,
    Discogan,
    CrystalganNoconstraints,
    Crystalgan,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::ClassicGan,
        Method::Discogan,
        Method::CrystalganNoconstraints,
        Method::Crystalgan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClassicGan => "classic_gan",
            Method::Discogan => "discogan",
            Method::CrystalganNoconstraints => "crystalgan_noconstraints",
            Method::Crystalgan => "crystalgan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown method {s:?}")))
    }
}

fn default_bin_width() -> f64 {
    0.05
}

fn default_pdf_cutoff() -> f64 {
    6.0
}

fn default_true() -> bool {
    true
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain_a_dir: PathBuf,
    pub domain_b_dir: PathBuf,
    pub out_dir: PathBuf,
    pub element_a: String,
    pub element_b: String,
    pub method: Method,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hyper: HyperParams,
    #[serde(default = "default_bin_width")]
    pub pdf_bin_width: f64,
    #[serde(default = "default_pdf_cutoff")]
    pub pdf_cutoff: f64,
    /// Write a checkpoint of each trained model.
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
    /// Also checkpoint every this many epochs.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

impl RunConfig {
    pub fn new(
        domain_a_dir: impl Into<PathBuf>,
        domain_b_dir: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
        element_a: &str,
        element_b: &str,
        method: Method,
    ) -> Self {
        Self {
            domain_a_dir: domain_a_dir.into(),
            domain_b_dir: domain_b_dir.into(),
            out_dir: out_dir.into(),
            element_a: element_a.into(),
            element_b: element_b.into(),
            method,
            seeds: default_seeds(),
            hyper: HyperParams::default(),
            pdf_bin_width: default_bin_width(),
            pdf_cutoff: default_pdf_cutoff(),
            save_checkpoints: true,
            checkpoint_every: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for dir in [&self.domain_a_dir, &self.domain_b_dir] {
            if !dir.is_dir() {
                return bad(format!("domain directory {} does not exist", dir.display()));
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.element_a == self.element_b || [&self.element_a, &self.element_b].iter().any(|e| e.is_empty() || *e == "H") {
            return bad(format!("invalid element pair {} / {}", self.element_a, self.element_b));
        }
        if !(self.pdf_bin_width > 0.0) || !(self.pdf_cutoff > 0.0) {
            return bad("pdf bin width and cutoff must be positive".into());
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be >= 1".into());
        }
        self.hyper.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Hyper-parameters actually used by the method.
    pub fn effective_hyper(&self) -> HyperParams {
        match self.method {
            Method::CrystalganNoconstraints => self.hyper.without_constraints(),
            _ => self.hyper.clone(),
        }
    }

    pub fn system(&self) -> String {
        format!("{}-{}-H", self.element_a, self.element_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub good_count: usize,
    pub total: usize,
    pub generated: usize,
    pub decoded: usize,
    /// Final-epoch generator losses, one per trained stage.
    pub final_loss_g: Vec<f64>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub method: Method,
    pub system: String,
    pub config: RunConfig,
    pub hyper: HyperParams,
    pub dataset_checksums: BTreeMap<String, String>,
    pub seeds: Vec<SeedOutcome>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    /// Training logs per seed, in stage order.
    pub logs: Vec<Vec<TrainLog>>,
}

pub fn dataset_checksum(d: &DomainDataset) -> String {
    let json = serde_json::to_vec(d).expect("dataset serializes");
    crate::nn::hex(&Sha256::digest(&json))
}

/// Loads both binary domains with the ternary slot layout.
pub fn load_domains(cfg: &RunConfig) -> Result<(DomainDataset, DomainDataset), PipelineError> {
    let slots = SlotMap::ternary(&cfg.element_a, &cfg.element_b).map_err(stage("encode"))?;
    let ah = encoding::load_domain_dataset(&cfg.domain_a_dir, DomainTag::AH, &slots).map_err(stage("encode"))?;
    let bh = encoding::load_domain_dataset(&cfg.domain_b_dir, DomainTag::BH, &slots).map_err(stage("encode"))?;
    Ok((ah, bh))
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let (ah, bh) = load_domains(cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(stage("setup"))?;
    let hyper = cfg.effective_hyper();
    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        method: cfg.method,
        system: cfg.system(),
        config: cfg.clone(),
        hyper: hyper.clone(),
        dataset_checksums: BTreeMap::from([
            ("AH".to_string(), dataset_checksum(&ah)),
            ("BH".to_string(), dataset_checksum(&bh)),
        ]),
        seeds: Vec::new(),
    };
    let mut logs = Vec::new();
    for &seed in &cfg.seeds {
        let mut hp = hyper.clone();
        hp.seed = seed;
        let dir = cfg.out_dir.join(format!("seed_{seed}"));
        let (outcome, seed_logs) = run_seed(cfg, &hp, &ah, &bh, &dir)?;
        manifest.seeds.push(outcome);
        logs.push(seed_logs);
    }
    write_json(&cfg.out_dir.join("manifest.json"), &manifest).map_err(stage("manifest"))?;
    Ok(RunOutcome {
        out_dir: cfg.out_dir.clone(),
        manifest,
        logs,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BoxError> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn checkpointer<'a>(
    cfg: &'a RunConfig,
    dir: &'a Path,
    name: &'a str,
    seed: u64,
) -> impl FnMut(&GanModel, usize) -> Result<(), crossgan::GanError> + 'a {
    move |model, epoch| {
        if let Some(k) = cfg.checkpoint_every {
            if (epoch + 1) % k == 0 {
                let path = dir.join(format!("{name}_epoch{:05}.json", epoch + 1));
                crossgan::save_checkpoint(&path, seed, epoch + 1, model)?;
            }
        }
        Ok(())
    }
}

/// Trains one cross-domain stage and writes its log and checkpoint into `dir`.
pub fn train_stage(
    cfg: &RunConfig,
    hp: &HyperParams,
    step: StepTag,
    x: &DomainDataset,
    y: &DomainDataset,
    dir: &Path,
    name: &'static str,
) -> Result<(GanModel, TrainLog), PipelineError> {
    let normalizer = if hp.normalize {
        Normalizer::fit(x.samples.iter().chain(&y.samples))
    } else {
        Normalizer::default()
    };
    let mut model = GanModel::new(step, hp, normalizer, &cfg.element_a, &cfg.element_b).map_err(stage(name))?;
    let ck_dir = dir.join("checkpoints");
    if cfg.save_checkpoints || cfg.checkpoint_every.is_some() {
        fs::create_dir_all(&ck_dir).map_err(stage(name))?;
    }
    let log = crossgan::train_with(&mut model, x, y, hp, checkpointer(cfg, &ck_dir, name, hp.seed))
        .map_err(stage(name))?;
    fs::write(dir.join(format!("trainlog_{name}.csv")), log.to_csv()).map_err(stage(name))?;
    if cfg.save_checkpoints {
        crossgan::save_checkpoint(&ck_dir.join(format!("{name}.json")), hp.seed, hp.epochs, &model)
            .map_err(stage(name))?;
    }
    Ok((model, log))
}

fn run_seed(
    cfg: &RunConfig,
    hp: &HyperParams,
    ah: &DomainDataset,
    bh: &DomainDataset,
    dir: &Path,
) -> Result<(SeedOutcome, Vec<TrainLog>), PipelineError> {
    fs::create_dir_all(dir).map_err(stage("setup"))?;
    let mut logs = Vec::new();
    let generated: Vec<Generated> = match cfg.method {
        Method::Crystalgan | Method::CrystalganNoconstraints => {
            let (step1, log1) = train_stage(cfg, hp, StepTag::Step1, ah, bh, dir, "step1")?;
            logs.push(log1);
            let (ahbg, bhag, tm) =
                transfer::build_step2_datasets(ah, bh, &step1, hp.threshold).map_err(stage("transfer"))?;
            let step2_dir = dir.join("step2");
            fs::create_dir_all(&step2_dir).map_err(stage("transfer"))?;
            ahbg.save(&step2_dir.join("ahbg.json")).map_err(stage("transfer"))?;
            bhag.save(&step2_dir.join("bhag.json")).map_err(stage("transfer"))?;
            write_json(&step2_dir.join("transfer_manifest.json"), &tm).map_err(stage("transfer"))?;
            let (step2, log2) = train_stage(cfg, hp, StepTag::Step2, &ahbg, &bhag, dir, "step2")?;
            logs.push(log2);
            let mut g = crossgan::generate(&step2, &ahbg, ahbg.len(), Direction::Forward).map_err(stage("generate"))?;
            g.extend(crossgan::generate(&step2, &bhag, bhag.len(), Direction::Backward).map_err(stage("generate"))?);
            g
        }
        Method::Discogan => {
            let (step1, log1) = train_stage(cfg, hp, StepTag::Step1, ah, bh, dir, "step1")?;
            logs.push(log1);
            let mut g = crossgan::generate(&step1, ah, ah.len(), Direction::Forward).map_err(stage("generate"))?;
            g.extend(crossgan::generate(&step1, bh, bh.len(), Direction::Backward).map_err(stage("generate"))?);
            g
        }
        Method::ClassicGan => {
            let normalizer = if hp.normalize {
                Normalizer::fit(ah.samples.iter().chain(&bh.samples))
            } else {
                Normalizer::default()
            };
            let mut gan = ClassicGan::new(hp, normalizer, &cfg.element_a, &cfg.element_b).map_err(stage("classic"))?;
            let log = gan.train(&[ah, bh], hp).map_err(stage("classic"))?;
            fs::write(dir.join("trainlog_classic.csv"), log.to_csv()).map_err(stage("classic"))?;
            if cfg.save_checkpoints {
                let ck = dir.join("checkpoints");
                fs::create_dir_all(&ck).map_err(stage("classic"))?;
                crossgan::save_checkpoint(&ck.join("classic.json"), hp.seed, hp.epochs, &gan)
                    .map_err(stage("classic"))?;
            }
            logs.push(log);
            gan.generate(ah.len() + bh.len(), hp.seed ^ 0x6e6f_6973_65)
                .map_err(stage("generate"))?
        }
    };

    let (report, decoded) = validate_generated(cfg, hp, &generated, dir)?;
    write_pdfs(cfg.pdf_bin_width, cfg.pdf_cutoff, &decoded, &dir.join("pdf"))?;

    let outcome = SeedOutcome {
        seed: hp.seed,
        dir: dir.to_path_buf(),
        good_count: report.good_count,
        total: report.total,
        generated: generated.len(),
        decoded: decoded.len(),
        final_loss_g: logs
            .iter()
            .filter_map(|l| l.entries.last().map(|e| e.terms.loss_g))
            .collect(),
        wall_clock_secs: logs.iter().map(|l| l.wall_clock_secs).sum(),
    };
    Ok((outcome, logs))
}

/// Decodes, writes POSCARs and the validation report. Returns decodable
/// structures by id.
pub fn validate_generated(
    cfg: &RunConfig,
    hp: &HyperParams,
    generated: &[Generated],
    dir: &Path,
) -> Result<(ValidationReport, Vec<(String, CrystalStructure)>), PipelineError> {
    let gen_dir = dir.join("generated");
    fs::create_dir_all(&gen_dir).map_err(stage("decode"))?;
    let mut decoded = Vec::new();
    let mut failures = Vec::new();
    let mut provenance = Vec::new();
    for g in generated {
        provenance.push(serde_json::json!({
            "id": g.id,
            "source": g.source,
            "model_checksum": g.model_checksum,
            "pseudo_binary": g.pseudo_binary,
        }));
        match encoding::decode(&g.sample, hp.threshold) {
            Ok(s) => {
                let text = poscar::write_poscar(&s).map_err(stage("decode"))?;
                fs::write(gen_dir.join(format!("{}.vasp", g.id)), text).map_err(stage("decode"))?;
                decoded.push((g.id.clone(), s));
            }
            Err(e) => failures.push((g.id.clone(), e.to_string())),
        }
    }
    write_json(&gen_dir.join("provenance.json"), &provenance).map_err(stage("decode"))?;

    let geo = hp.geo_config(&cfg.element_a, &cfg.element_b);
    let required = [cfg.element_a.as_str(), cfg.element_b.as_str(), "H"];
    let candidates = decoded
        .iter()
        .map(|(id, s)| (id.clone(), Ok(s)))
        .chain(failures.into_iter().map(|(id, e)| (id, Err(e))));
    let report = ValidationReport::build(candidates, &geo, &required);
    fs::write(dir.join("report.txt"), report.to_text()).map_err(stage("validate"))?;
    write_json(&dir.join("validation.json"), &report).map_err(stage("validate"))?;
    Ok((report, decoded))
}

/// Mean pair distribution over all decoded structures, total and per
/// species pair.
pub fn write_pdfs(
    bin_width: f64,
    cutoff: f64,
    decoded: &[(String, CrystalStructure)],
    dir: &Path,
) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(stage("pdf"))?;
    let mut total: Vec<f64> = Vec::new();
    let mut by_pair: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut template = None;
    let mut n = 0.0;
    for (_, s) in decoded {
        let Ok(pdf) = geometry::pair_distribution(s, bin_width, cutoff) else {
            continue;
        };
        n += 1.0;
        total.resize(pdf.total.len(), 0.0);
        for (t, v) in total.iter_mut().zip(&pdf.total) {
            *t += v;
        }
        for ((a, b), counts) in &pdf.by_species {
            let acc = by_pair.entry(format!("{a}-{b}")).or_default();
            acc.resize(counts.len(), 0.0);
            for (t, v) in acc.iter_mut().zip(counts) {
                *t += v;
            }
        }
        template.get_or_insert(pdf);
    }
    let Some(template) = template else {
        return Ok(());
    };
    let write = |name: &str, counts: &[f64]| -> Result<(), PipelineError> {
        let mean: Vec<f64> = counts.iter().map(|c| c / n).collect();
        fs::write(dir.join(format!("{name}.dat")), template.to_columns(&mean)).map_err(stage("pdf"))
    };
    write("total", &total)?;
    for (pair, counts) in &by_pair {
        write(pair, counts)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub system: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<usize>,
    pub good: usize,
    pub total: usize,
}

/// Good-quality counts per method and system.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

impl ComparisonTable {
    pub fn get(&self, system: &str, method: Method) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.system == system && r.method == method)
    }

    pub fn systems(&self) -> Vec<String> {
        let mut s: Vec<String> = self.rows.iter().map(|r| r.system.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// One line per system, one column per method.
    pub fn to_text(&self) -> String {
        let mut header = vec![format!("{:<12}", "system")];
        header.extend(Method::ALL.iter().map(|m| format!("{:>26}", m.as_str())));
        let mut out = header.join("") + "\n";
        for sys in self.systems() {
            out.push_str(&format!("{sys:<12}"));
            for m in Method::ALL {
                let cell = match self.get(&sys, m) {
                    Some(r) => format!("{} / {}", r.good, r.total),
                    None => "-".into(),
                };
                out.push_str(&format!("{cell:>26}"));
            }
            out.push('\n');
        }
        out.push_str("\nper seed:\n");
        for r in &self.rows {
            let seeds: Vec<String> = r
                .seeds
                .iter()
                .zip(&r.per_seed)
                .map(|(s, g)| format!("{s}:{g}"))
                .collect();
            out.push_str(&format!("  {} {} [{}]\n", r.system, r.method, seeds.join(" ")));
        }
        out
    }
}

/// Seed directories of a run directory that hold a validation report.
fn seed_reports(dir: &Path) -> Result<Vec<(u64, ValidationReport)>, PipelineError> {
    let missing = || PipelineError::MissingReport(dir.to_path_buf());
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|_| missing())? {
        let path = entry.map_err(|_| missing())?.path();
        let Some(seed) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("seed_"))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        let file = path.join("validation.json");
        let Ok(text) = fs::read_to_string(&file) else {
            continue;
        };
        let report: ValidationReport = serde_json::from_str(&text).map_err(|_| PipelineError::MissingReport(file))?;
        found.push((seed, report));
    }
    if found.is_empty() {
        return Err(missing());
    }
    found.sort_by_key(|(s, _)| *s);
    Ok(found)
}

/// Builds the comparison table from run directories. Counts are recomputed
/// from the per-structure verdicts.
pub fn report(dirs: &[PathBuf]) -> Result<ComparisonTable, PipelineError> {
    let mut rows: BTreeMap<(String, Method), TableRow> = BTreeMap::new();
    for dir in dirs {
        let text = fs::read_to_string(dir.join("manifest.json"))
            .map_err(|_| PipelineError::MissingReport(dir.clone()))?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|_| PipelineError::MissingReport(dir.clone()))?;
        let row = rows
            .entry((manifest.system.clone(), manifest.method))
            .or_insert_with(|| TableRow {
                system: manifest.system.clone(),
                method: manifest.method,
                seeds: vec![],
                per_seed: vec![],
                good: 0,
                total: 0,
            });
        for (seed, rep) in seed_reports(dir)? {
            let good = rep.recount();
            row.seeds.push(seed);
            row.per_seed.push(good);
            row.good += good;
            row.total += rep.total;
        }
    }
    Ok(ComparisonTable {
        rows: rows.into_values().collect(),
    })
}

/// Writes `comparison.txt` and `comparison.json` into `out`.
pub fn write_report(table: &ComparisonTable, out: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(out).map_err(stage("report"))?;
    fs::write(out.join("comparison.txt"), table.to_text()).map_err(stage("report"))?;
    write_json(&out.join("comparison.json"), table).map_err(stage("report"))?;
    Ok(())
}

/// Overrides applied from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub geo_mode: Option<GeoMode>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(e) = self.epochs {
            cfg.hyper.epochs = e;
        }
        if let Some(g) = self.geo_mode {
            cfg.hyper.geo_mode = g;
        }
    }
}
