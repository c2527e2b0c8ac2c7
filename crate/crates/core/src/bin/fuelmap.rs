//! `fuelmap` command-line tool.
//!
//! Every subcommand prints one `key=value` summary line on success. Usage
//! errors exit with 2, stage failures with 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use fuelmap::datamodel::{
    load_raster_stack, load_sample_table, write_raster_stack, write_sample_table, FeatureSchema, SampleTable,
};
use fuelmap::ensemble::{
    default_registry, desk_roster_l1, desk_roster_l2, evaluate, full_roster, leaderboard, leaderboard_csv,
    load_ensemble, save_ensemble, train_stack, LearnerSpec, StackConfig, StackEnsemble, DEFAULT_FOLDS,
    DEFAULT_ITERATIONS,
};
use fuelmap::fixtures::{generate_world, write_world, WorldSpec};
use fuelmap::importance::{permutation_importance, write_importance_csv, DEFAULT_REPEATS};
use fuelmap::indices::build_feature_stack;
use fuelmap::labelprop::{load_plots, plot_samples, propagate_labels, PropagationConfig};
use fuelmap::pipeline::{augment, parse_roster, run_with_config, PipelineConfig};
use fuelmap::postprocess::{apply_nonburnable_mask, classify_raster, export_fuel_map, mask_bands, MaskThresholds};
use fuelmap::synth::fidelity_report;

#[derive(Parser)]
#[command(name = "fuelmap", version, about = "Fuel-type mapping from fused raster stacks")]
struct Cli {
    /// Worker threads; defaults to all cores
    #[arg(long, env = "FV_JOBS", global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// A missing or inconsistent argument that clap cannot check on its own.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Args, Clone)]
struct Common {
    /// Random seed (required by stochastic stages)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn seed(&self, command: &str) -> Result<u64> {
        self.seed.ok_or_else(|| Usage(format!("`{command}` needs --seed")).into())
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

#[derive(Args, Clone)]
struct Features {
    /// Comma-separated feature columns; defaults to the 24 standard ones
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
}

impl Features {
    fn schema(&self) -> Result<FeatureSchema> {
        Ok(match &self.features {
            Some(names) => FeatureSchema::unitless(names)?,
            None => FeatureSchema::default(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a raster manifest (and optionally plots) and report what was read
    Ingest {
        manifest: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Derive the feature stack from raw bands
    Indices {
        manifest: PathBuf,
        #[command(flatten)]
        features: Features,
        #[command(flatten)]
        common: Common,
    },
    /// Propagate plot labels to similar nearby pixels
    Pseudolabel {
        manifest: PathBuf,
        plots: PathBuf,
        #[arg(long, default_value_t = 1000.0)]
        radius_m: f64,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[command(flatten)]
        features: Features,
        #[command(flatten)]
        common: Common,
    },
    /// Score a synthetic table against a real one
    SynthEval {
        real: PathBuf,
        synthetic: PathBuf,
        #[arg(long, default_value = "synthetic")]
        model: String,
        #[command(flatten)]
        features: Features,
        #[command(flatten)]
        common: Common,
    },
    /// Balance a labeled table with synthetic rows
    Augment {
        table: PathBuf,
        #[arg(long, default_value = "gaussian_copula")]
        synthesizer: String,
        #[command(flatten)]
        features: Features,
        #[command(flatten)]
        common: Common,
    },
    /// Train the stacked ensemble
    Train {
        train: PathBuf,
        val: PathBuf,
        /// Roster preset: desk or full
        #[arg(long, default_value = "desk")]
        roster: String,
        /// Comma-separated L1 learner names, overriding the preset
        #[arg(long)]
        roster_l1: Option<String>,
        /// Comma-separated L2 learner names, overriding the preset
        #[arg(long)]
        roster_l2: Option<String>,
        #[arg(long, default_value_t = DEFAULT_FOLDS)]
        folds: usize,
        #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
        greedy_iterations: usize,
        #[command(flatten)]
        features: Features,
        #[command(flatten)]
        common: Common,
    },
    /// Per-class report and confusion matrix on a labeled table
    Evaluate {
        model: PathBuf,
        test: PathBuf,
        /// Validation table; adds the per-model leaderboard
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Permutation importance on a held-out table
    Importance {
        model: PathBuf,
        table: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Classify a raster stack and mask non-burnable pixels
    Map {
        model: PathBuf,
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        ndvi_thresh: f64,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        ndwi_thresh: f64,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        bui_thresh: f64,
        #[arg(long, default_value_t = fuelmap::postprocess::DEFAULT_TILE)]
        tile: usize,
        /// Skip the non-burnable mask
        #[arg(long)]
        no_mask: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic world and a pipeline config for it
    Fixture {
        /// imbalanced or separable
        #[arg(long, default_value = "imbalanced")]
        preset: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run every stage from a config file; --seed and --out override it
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn load_table(path: &Path, schema: &FeatureSchema) -> Result<SampleTable> {
    let (table, report) = load_sample_table(path, schema).with_context(|| format!("reading {}", path.display()))?;
    for (line, msg) in &report.row_errors {
        eprintln!("warning: {}:{line}: {msg}", path.display());
    }
    Ok(table)
}

fn load_model(path: &Path) -> Result<StackEnsemble> {
    load_ensemble(path, &default_registry()).with_context(|| format!("loading model {}", path.display()))
}

fn roster(preset: &str, l1: Option<&str>, l2: Option<&str>) -> Result<(Vec<LearnerSpec>, Vec<LearnerSpec>)> {
    let (mut a, mut b) = match preset {
        "desk" => (desk_roster_l1(), desk_roster_l2()),
        "full" => (full_roster(), full_roster()),
        other => return Err(Usage(format!("unknown roster preset `{other}`")).into()),
    };
    if let Some(v) = l1 {
        a = parse_roster(v)?;
    }
    if let Some(v) = l2 {
        b = parse_roster(v)?;
    }
    Ok((a, b))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(command: Command) -> Result<String> {
    match command {
        Command::Ingest { manifest, plots, common } => {
            let out = common.out_dir()?;
            let stack = load_raster_stack(&manifest)?;
            let nodata: usize = stack
                .bands()
                .iter()
                .map(|b| (0..b.values.len()).filter(|&i| b.is_nodata(i)).count())
                .sum();
            let n_plots = plots.as_deref().map(load_plots).transpose()?.map_or(0, |p| p.len());
            let mut text = format!(
                "bands={}\nwidth={}\nheight={}\nnodata_cells={nodata}\nplots={n_plots}\n",
                stack.bands().len(),
                stack.width(),
                stack.height()
            );
            for b in stack.bands() {
                text.push_str(&format!("band={}\t{}\n", b.name, b.domain.as_str()));
            }
            write_text(&out.join("ingest.txt"), &text)?;
            Ok(format!(
                "command=ingest status=ok bands={} width={} height={} nodata_cells={nodata} plots={n_plots}",
                stack.bands().len(),
                stack.width(),
                stack.height()
            ))
        }
        Command::Indices { manifest, features, common } => {
            let out = common.out_dir()?;
            let stack = build_feature_stack(&load_raster_stack(&manifest)?, &features.schema()?)?;
            let path = write_raster_stack(&out, &stack)?;
            Ok(format!(
                "command=indices status=ok features={} manifest={}",
                stack.bands().len(),
                path.display()
            ))
        }
        Command::Pseudolabel {
            manifest,
            plots,
            radius_m,
            threshold,
            window,
            features,
            common,
        } => {
            let out = common.out_dir()?;
            let schema = features.schema()?;
            let stack = build_feature_stack(&load_raster_stack(&manifest)?, &schema)?;
            let plots = load_plots(&plots)?;
            let cfg = PropagationConfig {
                radius_m,
                threshold,
                window,
                ..PropagationConfig::default()
            };
            let (mut labeled, dropped) = plot_samples(&stack, &schema, &plots)?;
            let (pseudo, report) = propagate_labels(&stack, &plots, &cfg)?;
            labeled.extend_from(&pseudo)?;
            write_sample_table(&out.join("pseudo_labels.csv"), &pseudo)?;
            write_sample_table(&out.join("labeled.csv"), &labeled)?;
            Ok(format!(
                "command=pseudolabel status=ok plots={} dropped_plots={dropped} pseudo_labels={} growth_factor={:.4} skipped={}",
                report.plots, report.pseudo_labels, report.growth_factor, report.skipped
            ))
        }
        Command::SynthEval {
            real,
            synthetic,
            model,
            features,
            common,
        } => {
            let out = common.out_dir()?;
            let schema = features.schema()?;
            let report = fidelity_report(&load_table(&real, &schema)?, &load_table(&synthetic, &schema)?)?;
            report.write(&out, &model)?;
            Ok(format!(
                "command=synth-eval status=ok overall_quality={:.4} column_shapes={:.4} column_pair_trends={:.4} proximity={:.6}",
                report.overall_quality, report.column_shapes, report.column_pair_trends, report.proximity
            ))
        }
        Command::Augment {
            table,
            synthesizer,
            features,
            common,
        } => {
            let seed = common.seed("augment")?;
            let out = common.out_dir()?;
            let table = load_table(&table, &features.schema()?)?;
            let name = (synthesizer != "none").then_some(synthesizer.as_str());
            let aug = augment(&table, name, seed)?;
            write_sample_table(&out.join("augmented.csv"), &aug.table)?;
            if let (Some(f), Some(name)) = (&aug.fidelity, name) {
                f.write(&out, name)?;
            }
            let (synthesized, growth) = aug.balance.map_or((0, 1.0), |b| (b.synthesized, b.growth_factor));
            Ok(format!(
                "command=augment status=ok seed={seed} rows={} synthetic_rows={synthesized} growth_factor={growth:.4}",
                aug.table.len()
            ))
        }
        Command::Train {
            train,
            val,
            roster: preset,
            roster_l1,
            roster_l2,
            folds,
            greedy_iterations,
            features,
            common,
        } => {
            let seed = common.seed("train")?;
            let out = common.out_dir()?;
            let schema = features.schema()?;
            let (l1, l2) = roster(&preset, roster_l1.as_deref(), roster_l2.as_deref())?;
            let train = load_table(&train, &schema)?;
            let val = load_table(&val, &schema)?;
            let cfg = StackConfig {
                folds,
                groups: None,
                greedy_iterations,
                seed,
            };
            let ens = train_stack(&default_registry(), &l1, &l2, &train, &val, &cfg)?;
            save_ensemble(&out.join("model.fven"), &ens)?;
            let val_report = evaluate(&ens, &val)?;
            Ok(format!(
                "command=train status=ok seed={seed} rows={} classes={} l1_models={} l2_models={} val_accuracy={:.4}",
                train.len(),
                ens.classes.len(),
                ens.l1.len(),
                ens.l2.len(),
                val_report.accuracy
            ))
        }
        Command::Evaluate { model, test, val, common } => {
            let out = common.out_dir()?;
            let ens = load_model(&model)?;
            let test = load_table(&test, &ens.schema)?;
            let report = evaluate(&ens, &test)?;
            write_text(&out.join("eval_report.csv"), &report.to_csv())?;
            write_text(&out.join("confusion.csv"), &report.confusion_csv())?;
            let mut max_gap = None;
            if let Some(val) = val {
                let lb = leaderboard(&ens, &load_table(&val, &ens.schema)?, &test)?;
                write_text(&out.join("leaderboard.csv"), &leaderboard_csv(&lb))?;
                max_gap = lb.iter().map(|r| r.gap()).reduce(f64::max);
            }
            let gap = max_gap.map_or(String::new(), |g| format!(" max_abs_gap={g:.4}"));
            Ok(format!(
                "command=evaluate status=ok rows={} accuracy={:.4} macro_f1={:.4}{gap}",
                test.len(),
                report.accuracy,
                report.macro_avg.f1
            ))
        }
        Command::Importance {
            model,
            table,
            repeats,
            common,
        } => {
            let seed = common.seed("importance")?;
            let out = common.out_dir()?;
            let ens = load_model(&model)?;
            let table = load_table(&table, &ens.schema)?;
            let recs = permutation_importance(&ens, &table, repeats, seed)?;
            write_importance_csv(&out.join("importance.csv"), &recs)?;
            let top = recs.first().map_or("none", |r| r.feature.as_str());
            Ok(format!(
                "command=importance status=ok seed={seed} features={} repeats={repeats} top={top}",
                recs.len()
            ))
        }
        Command::Map {
            model,
            manifest,
            ndvi_thresh,
            ndwi_thresh,
            bui_thresh,
            tile,
            no_mask,
            common,
        } => {
            let out = common.out_dir()?;
            let ens = load_model(&model)?;
            let raw = load_raster_stack(&manifest)?;
            let features = build_feature_stack(&raw, &ens.schema)?;
            let mut map = classify_raster(&ens, &features, tile)?;
            let mut masked = 0;
            if !no_mask {
                let th = MaskThresholds {
                    ndvi: ndvi_thresh,
                    ndwi: ndwi_thresh,
                    bui: bui_thresh,
                };
                let (ndvi, ndwi, bui) = mask_bands(&raw)?;
                (map, masked) = apply_nonburnable_mask(&map, &ndvi, &ndwi, &bui, &th)?;
            }
            let files = export_fuel_map(&map, &out.join("fuelmap"))?;
            Ok(format!(
                "command=map status=ok width={} height={} masked_pixels={masked} labels={}",
                map.labels.width,
                map.labels.height,
                files.labels.display()
            ))
        }
        Command::Fixture { preset, common } => {
            let seed = common.seed("fixture")?;
            let out = common.out_dir()?;
            let spec = match preset.as_str() {
                "imbalanced" => WorldSpec::imbalanced(seed),
                "separable" => WorldSpec::separable(seed),
                other => return Err(Usage(format!("unknown fixture preset `{other}`")).into()),
            };
            let world = generate_world(&spec)?;
            write_world(&out, &world)?;
            let config = out.join("pipeline.cfg");
            write_text(&config, &PipelineConfig::fixture_text(seed, &world.schema))?;
            Ok(format!(
                "command=fixture status=ok seed={seed} width={} height={} plots={} holdout={} config={}",
                world.stack.width(),
                world.stack.height(),
                world.plots.len(),
                world.holdout.len(),
                config.display()
            ))
        }
        Command::Run { .. } => unreachable!("handled before dispatch"),
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => Err(Usage("--jobs must be positive".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
    }
}

fn run(config: &Path, common: &Common, jobs: Option<usize>) -> Result<String> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    let summary = in_pool(jobs.or(cfg.jobs), || Ok(run_with_config(&cfg)?))?;
    Ok(format!("command=run seed={} {}", cfg.seed, summary.to_line()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, common } => run(&config, &common, cli.jobs),
        command => in_pool(cli.jobs, || execute(command)),
    };
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
