// SPDX-License-Identifier: Apache-2.0

//! `crystalgan` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crystalgan::corpus::{make_synthetic_corpus, CorpusSpec, Prototype};
use crystalgan::crossgan::{self, Direction, GanModel, Generated, StepTag};
use crystalgan::encoding::{self, DomainDataset, DomainTag, Normalizer, SlotMap};
use crystalgan::geometry::{GeoConfig, GeoMode, ValidationReport};
use crystalgan::pipeline::{
    self, report, run_pipeline, stage, write_json, write_report, Method, Overrides, PipelineError, RunConfig,
};
use crystalgan::poscar::{self, CrystalStructure};
use crystalgan::transfer;

#[derive(Parser)]
#[command(name = "crystalgan", version, about = "Cross-domain GAN for ternary hydride structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    geo_mode: Option<GeoMode>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        Overrides {
            method: self.method,
            seed: self.seed,
            out: self.out.clone(),
            epochs: self.epochs,
            geo_mode: self.geo_mode,
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Resolved config for a single-stage command: the first seed and its
/// directory under the output root.
struct StageCtx {
    cfg: RunConfig,
    hp: crossgan::HyperParams,
    dir: PathBuf,
}

impl StageCtx {
    fn new(args: &RunArgs) -> Result<Self, PipelineError> {
        let cfg = args.load()?;
        let mut hp = cfg.effective_hyper();
        hp.seed = cfg.seeds[0];
        let dir = cfg.out_dir.join(format!("seed_{}", hp.seed));
        fs::create_dir_all(&dir).map_err(stage("setup"))?;
        Ok(Self { cfg, hp, dir })
    }

    fn step2_inputs(&self) -> Result<(DomainDataset, DomainDataset), PipelineError> {
        let d = self.dir.join("step2");
        let load = |name: &str| DomainDataset::load(&d.join(name)).map_err(stage("transfer"));
        Ok((load("ahbg.json")?, load("bhag.json")?))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic binary-hydride corpus.
    MakeCorpus {
        #[arg(long, default_value = "rocksalt")]
        prototype: Prototype,
        #[arg(long)]
        metal: String,
        #[arg(long)]
        a_min: f64,
        #[arg(long)]
        a_max: f64,
        #[arg(long, default_value_t = 35)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        jitter: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a POSCAR directory into a domain dataset.
    Encode {
        #[arg(long)]
        dir: PathBuf,
        /// AH or BH.
        #[arg(long)]
        tag: String,
        #[arg(long)]
        element_a: String,
        #[arg(long)]
        element_b: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the AH <-> BH model.
    TrainStep1(RunArgs),
    /// Build AHBg / BHAg from a step-1 checkpoint.
    Transfer {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train the AHBg <-> BHAg model.
    TrainStep2(RunArgs),
    /// Generate, decode and validate structures from a checkpoint.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Validate a directory of POSCAR files.
    Validate {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        element_a: String,
        #[arg(long)]
        element_b: String,
        #[arg(long, default_value_t = 1.8)]
        d1: f64,
        #[arg(long, default_value_t = 3.0)]
        d2: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean pair distribution of POSCAR files.
    Pdf {
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
        #[arg(long, default_value_t = 6.0)]
        cutoff: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline for every configured seed.
    Run(RunArgs),
    /// Comparison table over run directories.
    Report {
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn read_structures(files: &[PathBuf]) -> Result<Vec<(String, CrystalStructure)>, PipelineError> {
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(f).map_err(|e| config_err(format!("{}: {e}", f.display())))?;
        let s = poscar::parse_poscar(&text).map_err(stage("parse"))?;
        let id = f.file_stem().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        out.push((id, s));
    }
    Ok(out)
}

fn poscar_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| config_err(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vasp") || p.file_name().is_some_and(|n| n == "POSCAR"))
        .collect();
    files.sort();
    Ok(files)
}

fn finish_generation(ctx: &StageCtx, generated: &[Generated]) -> Result<(), PipelineError> {
    let (rep, decoded) = pipeline::validate_generated(&ctx.cfg, &ctx.hp, generated, &ctx.dir)?;
    pipeline::write_pdfs(ctx.cfg.pdf_bin_width, ctx.cfg.pdf_cutoff, &decoded, &ctx.dir.join("pdf"))?;
    println!("good {} / {} ({} decoded)", rep.good_count, rep.total, decoded.len());
    Ok(())
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::MakeCorpus {
            prototype,
            metal,
            a_min,
            a_max,
            count,
            seed,
            jitter,
            out,
        } => {
            let mut spec = CorpusSpec::new(prototype, &metal, (a_min, a_max), count, seed);
            spec.jitter = jitter;
            let paths = make_synthetic_corpus(&spec, &out).map_err(config_err)?;
            println!("wrote {} structures to {}", paths.len(), out.display());
        }
        Command::Encode {
            dir,
            tag,
            element_a,
            element_b,
            out,
        } => {
            let tag = match tag.to_ascii_uppercase().as_str() {
                "AH" => DomainTag::AH,
                "BH" => DomainTag::BH,
                other => return Err(config_err(format!("unknown domain tag {other:?} (AH, BH)"))),
            };
            let slots = SlotMap::ternary(&element_a, &element_b).map_err(config_err)?;
            let data = encoding::load_domain_dataset(&dir, tag, &slots).map_err(stage("encode"))?;
            data.save(&out).map_err(stage("encode"))?;
            let manifest = serde_json::json!({
                "domain_tag": data.domain_tag,
                "shape": data.shape(),
                "element_a": element_a,
                "element_b": element_b,
                "slot_labels": slots.labels(),
                "files": data.names,
                "normalizer": Normalizer::fit(&data.samples),
                "checksum": pipeline::dataset_checksum(&data),
            });
            write_json(&out.with_extension("manifest.json"), &manifest).map_err(stage("encode"))?;
            println!("encoded {} samples, shape {:?}", data.len(), data.shape());
        }
        Command::TrainStep1(args) => {
            let ctx = StageCtx::new(&args)?;
            let (ah, bh) = pipeline::load_domains(&ctx.cfg)?;
            let (model, log) = pipeline::train_stage(&ctx.cfg, &ctx.hp, StepTag::Step1, &ah, &bh, &ctx.dir, "step1")?;
            if !ctx.cfg.save_checkpoints {
                let ck = ctx.dir.join("checkpoints");
                fs::create_dir_all(&ck).map_err(stage("step1"))?;
                crossgan::save_checkpoint(&ck.join("step1.json"), ctx.hp.seed, ctx.hp.epochs, &model)
                    .map_err(stage("step1"))?;
            }
            if let Some(e) = log.entries.last() {
                println!("step1 done: loss_g {:.6} loss_d {:.6}", e.terms.loss_g, e.terms.loss_d);
            }
        }
        Command::Transfer { run, checkpoint } => {
            let ctx = StageCtx::new(&run)?;
            let path = checkpoint.unwrap_or_else(|| ctx.dir.join("checkpoints/step1.json"));
            let step1 = crossgan::load_checkpoint::<GanModel>(&path).map_err(stage("transfer"))?.model;
            let (ah, bh) = pipeline::load_domains(&ctx.cfg)?;
            let (ahbg, bhag, tm) =
                transfer::build_step2_datasets(&ah, &bh, &step1, ctx.hp.threshold).map_err(stage("transfer"))?;
            let d = ctx.dir.join("step2");
            fs::create_dir_all(&d).map_err(stage("transfer"))?;
            ahbg.save(&d.join("ahbg.json")).map_err(stage("transfer"))?;
            bhag.save(&d.join("bhag.json")).map_err(stage("transfer"))?;
            write_json(&d.join("transfer_manifest.json"), &tm).map_err(stage("transfer"))?;
            println!(
                "AHBg {} samples ({} dropped), BHAg {} samples ({} dropped)",
                ahbg.len(),
                tm.dropped_ah,
                bhag.len(),
                tm.dropped_bh
            );
        }
        Command::TrainStep2(args) => {
            let ctx = StageCtx::new(&args)?;
            let (ahbg, bhag) = ctx.step2_inputs()?;
            let (model, log) =
                pipeline::train_stage(&ctx.cfg, &ctx.hp, StepTag::Step2, &ahbg, &bhag, &ctx.dir, "step2")?;
            if !ctx.cfg.save_checkpoints {
                let ck = ctx.dir.join("checkpoints");
                fs::create_dir_all(&ck).map_err(stage("step2"))?;
                crossgan::save_checkpoint(&ck.join("step2.json"), ctx.hp.seed, ctx.hp.epochs, &model)
                    .map_err(stage("step2"))?;
            }
            if let Some(e) = log.entries.last() {
                println!("step2 done: loss_g {:.6} loss_d {:.6}", e.terms.loss_g, e.terms.loss_d);
            }
        }
        Command::Generate { run, checkpoint } => {
            let ctx = StageCtx::new(&run)?;
            let path = checkpoint.unwrap_or_else(|| ctx.dir.join("checkpoints/step2.json"));
            let model = crossgan::load_checkpoint::<GanModel>(&path).map_err(stage("generate"))?.model;
            let (x, y) = match model.step {
                StepTag::Step1 => pipeline::load_domains(&ctx.cfg)?,
                StepTag::Step2 => ctx.step2_inputs()?,
            };
            let mut g = crossgan::generate(&model, &x, x.len(), Direction::Forward).map_err(stage("generate"))?;
            g.extend(crossgan::generate(&model, &y, y.len(), Direction::Backward).map_err(stage("generate"))?);
            finish_generation(&ctx, &g)?;
        }
        Command::Validate {
            dir,
            element_a,
            element_b,
            d1,
            d2,
            out,
        } => {
            let mut geo = GeoConfig::hydride(&element_a, &element_b);
            geo.d1 = d1;
            geo.d2 = d2;
            geo.check().map_err(config_err)?;
            let structures = read_structures(&poscar_files(&dir)?)?;
            let required = [element_a.as_str(), element_b.as_str(), "H"];
            let rep = ValidationReport::build(structures.iter().map(|(id, s)| (id.clone(), Ok(s))), &geo, &required);
            let out = out.unwrap_or(dir);
            fs::create_dir_all(&out).map_err(stage("validate"))?;
            fs::write(out.join("report.txt"), rep.to_text()).map_err(stage("validate"))?;
            write_json(&out.join("validation.json"), &rep).map_err(stage("validate"))?;
            println!("good {} / {}", rep.good_count, rep.total);
        }
        Command::Pdf {
            files,
            bin_width,
            cutoff,
            out,
        } => {
            if !(bin_width > 0.0 && cutoff > 0.0) {
                return Err(config_err("bin width and cutoff must be positive"));
            }
            let mut paths = Vec::new();
            for f in files {
                if f.is_dir() {
                    paths.extend(poscar_files(&f)?);
                } else {
                    paths.push(f);
                }
            }
            if paths.is_empty() {
                return Err(config_err("no POSCAR files given"));
            }
            let structures = read_structures(&paths)?;
            pipeline::write_pdfs(bin_width, cutoff, &structures, &out)?;
            println!("wrote pair distributions for {} structures to {}", structures.len(), out.display());
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcome = run_pipeline(&cfg)?;
            for s in &outcome.manifest.seeds {
                println!("seed {}: good {} / {} ({} decoded)", s.seed, s.good_count, s.total, s.decoded);
            }
        }
        Command::Report { dirs, out } => {
            if dirs.is_empty() {
                return Err(config_err("no run directories given"));
            }
            let table = report(&dirs)?;
            if let Some(out) = out {
                write_report(&table, &out)?;
            }
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
