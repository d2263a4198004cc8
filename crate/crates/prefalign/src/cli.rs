//! Command-line driver: argument parsing and the `cmd_*` stages, each
//! reading the previous stage's artifacts from the output directory and
//! writing its own.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::{Rgb, RgbImage};
use prefalign_core::align::{CrossValForm, Variant};
use prefalign_core::eval::{compare_reports, EvalReport, ImageSource, Prompt, SamplerSource};
use prefalign_core::Denoiser;

use crate::checkpoint::{self, CheckpointHeader};
use crate::config::{Backend, RunConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forge::ForgeManifest;
use crate::pipeline::{self, Arm, Backends, ORIGIN};
use crate::report::{self, CurveTable, NamedReport, WinRow};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Parser)]
#[command(name = "prefalign", version, about = "Preference data forging and cross-validation alignment at desk scale")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Mock,
    Http,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,
    /// Use the cross-validation loss exactly as printed (loser term doubled,
    /// second loser dropped) instead of the symmetric form.
    #[arg(long, global = true)]
    pub literal_loss: bool,
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<Variant>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.as_str()).collect();
        format!("unknown variant {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_arm(s: &str) -> std::result::Result<Arm, String> {
    Arm::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Arm::ALL.iter().map(|a| a.name()).collect();
        format!("unknown arm {s:?}; expected one of {}", names.join(", "))
    })
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Build the theme/subtopic taxonomy.
    Taxonomy,
    /// Entities, instruction pairs, judged preference samples and held-out prompts.
    Forge {
        /// Taxonomy file; defaults to `<out>/taxonomy.json`.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Where to write the pairs manifest; defaults to `<out>/pairs.json`.
        #[arg(long)]
        pairs_out: Option<PathBuf>,
    },
    /// Train the base model on every forged instruction's raw candidates.
    Pretrain,
    /// Align the base model with one variant.
    Align,
    /// Evaluate checkpoints on the held-out prompts.
    Eval {
        /// Checkpoints to evaluate; defaults to every checkpoint under `<out>/checkpoints`.
        #[arg(long = "ckpt")]
        ckpts: Vec<PathBuf>,
        /// Also write a PNG grid of samples per checkpoint.
        #[arg(long)]
        export_png: bool,
    },
    /// Pretrain once, align every arm and evaluate all of them.
    Ablate {
        #[arg(long, value_delimiter = ',', value_parser = parse_arm)]
        arms: Vec<Arm>,
    },
}

/// A resolved invocation: the effective configuration and output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl GlobalArgs {
    /// Config file first, then flag overrides.
    pub fn resolve(&self) -> Result<Run> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(b) = self.backend {
            config.backend = match b {
                BackendArg::Mock => Backend::Mock,
                BackendArg::Http => Backend::Http,
            };
        }
        if self.literal_loss {
            config.align.cross_val_form = CrossValForm::Literal;
        }
        if let Some(v) = self.variant {
            config.align.variant = v;
        }
        config.validate()?;
        Ok(Run {
            config,
            out: self.out.clone(),
        })
    }
}

impl Run {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>) -> Self {
        Self { config, out: out.into() }
    }

    pub fn hash(&self) -> String {
        self.config.hash()
    }

    pub fn taxonomy_path(&self) -> PathBuf {
        self.out.join("taxonomy.json")
    }

    pub fn pairs_path(&self) -> PathBuf {
        self.out.join("pairs.json")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.out.join("dataset.json")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn checkpoint_path(&self, name: &str) -> PathBuf {
        self.checkpoint_dir().join(format!("{name}.ckpt"))
    }

    fn check_hash(&self, path: &Path, found: &str) {
        if found != self.hash() {
            log::warn!(
                "{} was written with config hash {found}, current config hashes to {}",
                path.display(),
                self.hash()
            );
        }
    }

    fn load_dataset(&self) -> Result<Dataset> {
        let path = self.dataset_path();
        let (d, hash) = Dataset::load(&path)?;
        self.check_hash(&path, &hash);
        if d.cond_dim != self.config.model.cond_dim || d.image_shape != self.config.world.shape {
            return Err(Error::Invalid(format!(
                "{} does not match the configured model shapes",
                path.display()
            )));
        }
        Ok(d)
    }

    fn load_checkpoint(&self, path: &Path) -> Result<(CheckpointHeader, Denoiser)> {
        let (header, model) = checkpoint::load(path)?;
        self.check_hash(path, &header.config_hash);
        if header.denoiser != self.config.denoiser_config()
            || header.schedule != self.config.model.schedule
            || header.timesteps != self.config.model.timesteps
        {
            return Err(Error::Invalid(format!(
                "{}: checkpoint model or schedule differs from the configuration",
                path.display()
            )));
        }
        Ok((header, model))
    }

    fn header(&self, variant: Option<&str>) -> CheckpointHeader {
        CheckpointHeader {
            denoiser: self.config.denoiser_config(),
            schedule: self.config.model.schedule,
            timesteps: self.config.model.timesteps,
            config_hash: self.hash(),
            variant: variant.map(str::to_string),
        }
    }
}

pub fn cmd_taxonomy(run: &Run) -> Result<PathBuf> {
    let backends = Backends::from_config(&run.config)?;
    let tax = pipeline::run_taxonomy(&run.config, &backends)?;
    let path = run.taxonomy_path();
    tax.save(&path, &run.hash())?;
    Ok(path)
}

/// Returns the pairs manifest and dataset paths.
pub fn cmd_forge(run: &Run, taxonomy: Option<&Path>, pairs_out: Option<&Path>) -> Result<(PathBuf, PathBuf)> {
    let tax_path = taxonomy.map_or_else(|| run.taxonomy_path(), Path::to_path_buf);
    let (tax, hash) = Taxonomy::load(&tax_path)?;
    run.check_hash(&tax_path, &hash);
    let backends = Backends::from_config(&run.config)?;
    let (manifest, dataset) = pipeline::run_forge(&run.config, &backends, &tax)?;
    let pairs = pairs_out.map_or_else(|| run.pairs_path(), Path::to_path_buf);
    manifest.save(&pairs, &run.hash())?;
    dataset.save(&run.dataset_path(), &run.hash())?;
    let c = &manifest.counts;
    log::info!(
        "{} of {} instruction pairs survived judging",
        c.samples,
        c.instruction_pairs
    );
    Ok((pairs, run.dataset_path()))
}

pub fn cmd_pretrain(run: &Run) -> Result<PathBuf> {
    let path = run.pairs_path();
    let (manifest, hash) = ForgeManifest::load(&path)?;
    run.check_hash(&path, &hash);
    let backends = Backends::from_config(&run.config)?;
    let corpus = pipeline::pretrain_corpus(&run.config, &backends, &manifest)?;
    let (model, losses) = pipeline::run_pretrain(&run.config, &corpus)?;
    let ckpt = run.checkpoint_path(ORIGIN);
    checkpoint::save(&ckpt, &run.header(None), &model)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l:.9}\n"));
    }
    crate::io::write_file(&run.out.join("pretrain_loss.csv"), csv.as_bytes())?;
    Ok(ckpt)
}

/// Aligns `config.align.variant`; its curve replaces any earlier curve of
/// the same variant in `curves.csv`.
pub fn cmd_align(run: &Run) -> Result<PathBuf> {
    let dataset = run.load_dataset()?;
    let (_, base) = run.load_checkpoint(&run.checkpoint_path(ORIGIN))?;
    let variant = run.config.align.variant;
    let (model, curve) = pipeline::run_align(&run.config, &base, &dataset, variant)?;
    let ckpt = run.checkpoint_path(variant.as_str());
    checkpoint::save(&ckpt, &run.header(Some(variant.as_str())), &model)?;
    let curves_path = run.out.join("curves.csv");
    let fresh = CurveTable::from_curves(&[curve]);
    let table = if curves_path.exists() {
        CurveTable::load(&curves_path)?.merge(&fresh)
    } else {
        fresh
    };
    crate::io::write_file(&curves_path, table.to_csv().as_bytes())?;
    report::plot_curves(&run.out.join("plots"), &table)?;
    Ok(ckpt)
}

fn default_checkpoints(run: &Run) -> Result<Vec<PathBuf>> {
    let dir = run.checkpoint_dir();
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    // origin first, the rest by name
    paths.sort_by_key(|p| (p.file_stem().map_or(true, |s| s != ORIGIN), p.clone()));
    Ok(paths)
}

/// Pairwise rows: every model against origin, and cross_val against every
/// other aligned model.
fn win_rows(named: &[(String, EvalReport)], margin: f64) -> Result<Vec<WinRow>> {
    let mut rows = Vec::new();
    let find = |n: &str| named.iter().find(|(m, _)| m == n);
    let mut push = |a: &(String, EvalReport), b: &(String, EvalReport)| -> Result<()> {
        rows.push(WinRow {
            a: a.0.clone(),
            b: b.0.clone(),
            result: compare_reports(&a.1, &b.1, margin)?,
        });
        Ok(())
    };
    if let Some(origin) = find(ORIGIN) {
        for r in named.iter().filter(|(n, _)| n != ORIGIN) {
            push(r, origin)?;
        }
    }
    if let Some(cv) = find(Variant::CrossVal.as_str()) {
        for r in named.iter().filter(|(n, _)| n != ORIGIN && n != cv.0.as_str()) {
            push(cv, r)?;
        }
    }
    Ok(rows)
}

fn export_grid(path: &Path, source: &SamplerSource<'_>, prompts: &[Prompt], seed: u64) -> Result<()> {
    const SCALE: u32 = 8;
    const COLS: usize = 4;
    let shape = source.shape;
    let n = prompts.len().min(16);
    let rows = n.div_ceil(COLS).max(1);
    let (tw, th) = (shape.width as u32 * SCALE, shape.height as u32 * SCALE);
    let mut grid = RgbImage::from_pixel(tw * COLS as u32, th * rows as u32, Rgb([255, 255, 255]));
    for (i, p) in prompts.iter().take(n).enumerate() {
        let img = source.generate(p, prefalign_core::eval::sample_seed(seed, i))?;
        let (ox, oy) = ((i % COLS) as u32 * tw, (i / COLS) as u32 * th);
        for y in 0..th {
            for x in 0..tw {
                let rgb = img.rgb((y / SCALE) as usize, (x / SCALE) as usize);
                let px = rgb.map(|c| (c * 255.0).round() as u8);
                grid.put_pixel(ox + x, oy + y, Rgb(px));
            }
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    grid.save(path).map_err(|e| Error::Plot(format!("{}: {e}", path.display())))
}

pub fn cmd_eval(run: &Run, ckpts: &[PathBuf], export_png: bool) -> Result<Vec<PathBuf>> {
    let dataset = run.load_dataset()?;
    let ckpts = if ckpts.is_empty() {
        default_checkpoints(run)?
    } else {
        ckpts.to_vec()
    };
    if ckpts.is_empty() {
        return Err(Error::Invalid("no checkpoints to evaluate".into()));
    }
    let schedule = run.config.schedule()?;
    let prompts: Vec<Prompt> = dataset.eval_prompts.iter().map(|p| p.prompt()).collect();
    let seeds = pipeline::eval_seeds(&run.config, 0);
    let mut named = Vec::new();
    for path in &ckpts {
        let (header, model) = run.load_checkpoint(path)?;
        let name = header.variant.unwrap_or_else(|| ORIGIN.to_string());
        let report = pipeline::run_eval(&run.config, &model, &schedule, &prompts, &seeds)?;
        log::info!("{name}: composite {:.4}", report.average);
        if export_png {
            let source = SamplerSource {
                denoiser: &model,
                schedule: &schedule,
                shape: run.config.world.shape,
            };
            export_grid(&run.out.join("samples").join(format!("{name}.png")), &source, &prompts, seeds[0])?;
        }
        named.push((name, report));
    }
    let reports: Vec<NamedReport<'_>> = named
        .iter()
        .map(|(n, r)| NamedReport { name: n, report: r })
        .collect();
    let wins = win_rows(&named, run.config.eval.tie_margin)?;
    report::emit(&run.out, &reports, &wins, &[], run.config.seed, &run.hash())
}

pub fn cmd_ablate(run: &Run, arms: &[Arm]) -> Result<Vec<PathBuf>> {
    let arms = if arms.is_empty() { &Arm::ALL[..] } else { arms };
    let result = pipeline::run_seed(&run.config, arms, false)?;
    let named: Vec<(String, EvalReport)> = result
        .runs
        .iter()
        .map(|r| (r.name.clone(), r.report.clone()))
        .collect();
    let reports: Vec<NamedReport<'_>> = named
        .iter()
        .map(|(n, r)| NamedReport { name: n, report: r })
        .collect();
    let wins = win_rows(&named, run.config.eval.tie_margin)?;
    let curves: Vec<_> = result.runs.iter().filter_map(|r| r.curve.clone()).collect();
    let mut written = report::emit(&run.out, &reports, &wins, &curves, run.config.seed, &run.hash())?;
    let table = run.out.join("ablation.csv");
    crate::io::write_file(&table, report::ablation_table(&reports, ORIGIN).as_bytes())?;
    written.push(table);
    Ok(written)
}

/// Dispatch a parsed command line; returns the files written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let run = cli.global.resolve()?;
    match &cli.command {
        Command::Taxonomy => Ok(vec![cmd_taxonomy(&run)?]),
        Command::Forge { taxonomy, pairs_out } => {
            let (a, b) = cmd_forge(&run, taxonomy.as_deref(), pairs_out.as_deref())?;
            Ok(vec![a, b])
        }
        Command::Pretrain => Ok(vec![cmd_pretrain(&run)?]),
        Command::Align => Ok(vec![cmd_align(&run)?]),
        Command::Eval { ckpts, export_png } => cmd_eval(&run, ckpts, *export_png),
        Command::Ablate { arms } => cmd_ablate(&run, arms),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "prefalign",
            "align",
            "--seed",
            "7",
            "--variant",
            "sft",
            "--literal-loss",
            "--out",
            "x",
        ])
        .unwrap();
        let run = cli.global.resolve().unwrap();
        assert_eq!(run.config.seed, 7);
        assert_eq!(run.config.align.variant, Variant::Sft);
        assert_eq!(run.config.align.cross_val_form, CrossValForm::Literal);
        assert_eq!(run.out, PathBuf::from("x"));
    }

    #[test]
    fn unknown_variant_is_a_usage_error() {
        let err = Cli::try_parse_from(["prefalign", "align", "--variant", "ppo"]).unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::ValueValidation);
        assert!(Cli::try_parse_from(["prefalign", "ablate", "--arms", "cross_val,random_select"]).is_ok());
    }
}
