//! End-to-end driver: ingest, indices, pseudo-labels, augmentation,
//! stacked training, evaluation, importance and the fuel map.
//!
//! Runs are configured by a flat text file. Each non-blank line that does
//! not start with `#` is `key = value`; keys may appear once. Paths are
//! relative to the file's directory. `seed` is required.
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | required |
//! | `manifest`, `plots` | required |
//! | `holdout`, or both `val` and `test` | required |
//! | `out` | `out` |
//! | `features` | the 24 default columns |
//! | `radius_m`, `threshold`, `window` | 1000, 0.99, 3 |
//! | `synthesizer` | `gaussian_copula` (`smote`, `none`) |
//! | `roster` | `desk` (`full`) |
//! | `roster_l1`, `roster_l2` | preset lists of learner names |
//! | `folds`, `greedy_iterations`, `importance_repeats` | 5, 100, 10 |
//! | `tile`, `ndvi_thresh`, `ndwi_thresh`, `bui_thresh` | 256, 0, 0.5, 0.5 |
//! | `jobs` | all cores |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datamodel::{
    load_raster_stack, load_sample_table, stratified_split, write_sample_table, FeatureSchema, RasterStack,
    SampleTable, DEFAULT_FEATURES,
};
use crate::ensemble::{
    default_registry as learner_registry, desk_roster_l1, desk_roster_l2, evaluate, full_roster, leaderboard,
    leaderboard_csv, save_ensemble, table_folds, train_stack, EvalReport, Family, LeaderboardRow, LearnerSpec, StackConfig,
    StackEnsemble, DEFAULT_FOLDS, DEFAULT_ITERATIONS,
};
use crate::error::{Error, Result};
use crate::fixtures::World;
use crate::importance::{permutation_importance, write_importance_csv, ImportanceRecord, DEFAULT_REPEATS};
use crate::indices::build_feature_stack;
use crate::labelprop::{load_plots, plot_samples, propagate_labels, Plot, PropagationConfig, PropagationReport};
use crate::postprocess::{
    apply_nonburnable_mask, classify_raster, export_fuel_map, mask_bands, FuelMap, MaskThresholds, DEFAULT_TILE,
};
use crate::rng;
use crate::synth::{self, fidelity_report, BalanceReport, FidelityReport};

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

const KEYS: [&str; 23] = [
    "seed",
    "manifest",
    "plots",
    "holdout",
    "val",
    "test",
    "out",
    "features",
    "radius_m",
    "threshold",
    "window",
    "synthesizer",
    "roster",
    "roster_l1",
    "roster_l2",
    "folds",
    "greedy_iterations",
    "importance_repeats",
    "tile",
    "ndvi_thresh",
    "ndwi_thresh",
    "bui_thresh",
    "jobs",
];

/// Where held-out rows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum HoldoutSource {
    /// One table split evenly into validation and test by class.
    Split(PathBuf),
    Separate { val: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub manifest: PathBuf,
    pub plots: PathBuf,
    pub holdout: HoldoutSource,
    pub out: PathBuf,
    pub features: FeatureSchema,
    pub propagation: PropagationConfig,
    /// `None` skips augmentation.
    pub synthesizer: Option<String>,
    pub roster_l1: Vec<LearnerSpec>,
    pub roster_l2: Vec<LearnerSpec>,
    pub folds: usize,
    pub greedy_iterations: usize,
    pub importance_repeats: usize,
    pub tile: usize,
    pub mask: MaskThresholds,
    pub jobs: Option<usize>,
}

/// Desk-preset hyperparameters for one family.
fn desk_spec(family: Family) -> LearnerSpec {
    desk_roster_l1()
        .into_iter()
        .chain(desk_roster_l2())
        .find(|s| s.family == family)
        .unwrap_or_else(|| LearnerSpec::new(family))
}

pub fn parse_roster(value: &str) -> Result<Vec<LearnerSpec>> {
    let specs = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|n| Family::from_name(n).map(desk_spec))
        .collect::<Result<Vec<_>>>()?;
    if specs.is_empty() {
        return Err(Error::Config("empty roster".into()));
    }
    Ok(specs)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

impl PipelineConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let path = |k: &str| -> Result<PathBuf> {
            get(k)
                .map(|v| base.join(v))
                .ok_or_else(|| Error::Config(format!("missing required key `{k}`")))
        };
        let num = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |v| parse_value(k, v)) };
        let count = |k: &str, default: usize| -> Result<usize> { get(k).map_or(Ok(default), |v| parse_value(k, v)) };

        let seed = get("seed")
            .ok_or_else(|| Error::Config("missing required key `seed`".into()))
            .and_then(|v| parse_value("seed", v))?;
        let holdout = match (get("holdout"), get("val"), get("test")) {
            (Some(_), None, None) => HoldoutSource::Split(path("holdout")?),
            (None, Some(_), Some(_)) => HoldoutSource::Separate {
                val: path("val")?,
                test: path("test")?,
            },
            _ => return Err(Error::Config("give either `holdout` or both `val` and `test`".into())),
        };
        let features = match get("features") {
            Some(v) => {
                let names: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                FeatureSchema::unitless(&names)?
            }
            None => FeatureSchema::default(),
        };
        let synthesizer = match get("synthesizer").unwrap_or("gaussian_copula") {
            "none" => None,
            name => {
                synth::default_registry().get(name)?;
                Some(name.to_string())
            }
        };
        let (mut l1, mut l2) = match get("roster").unwrap_or("desk") {
            "desk" => (desk_roster_l1(), desk_roster_l2()),
            "full" => (full_roster(), full_roster()),
            other => return Err(Error::Config(format!("unknown roster preset `{other}`"))),
        };
        if let Some(v) = get("roster_l1") {
            l1 = parse_roster(v)?;
        }
        if let Some(v) = get("roster_l2") {
            l2 = parse_roster(v)?;
        }
        let defaults = PropagationConfig::default();
        let mask = MaskThresholds::default();
        let cfg = PipelineConfig {
            seed,
            manifest: path("manifest")?,
            plots: path("plots")?,
            holdout,
            out: base.join(get("out").unwrap_or("out")),
            features,
            propagation: PropagationConfig {
                radius_m: num("radius_m", defaults.radius_m)?,
                threshold: num("threshold", defaults.threshold)?,
                window: count("window", defaults.window)?,
                ..defaults
            },
            synthesizer,
            roster_l1: l1,
            roster_l2: l2,
            folds: count("folds", DEFAULT_FOLDS)?,
            greedy_iterations: count("greedy_iterations", DEFAULT_ITERATIONS)?,
            importance_repeats: count("importance_repeats", DEFAULT_REPEATS)?,
            tile: count("tile", DEFAULT_TILE)?,
            mask: MaskThresholds {
                ndvi: num("ndvi_thresh", mask.ndvi)?,
                ndwi: num("ndwi_thresh", mask.ndwi)?,
                bui: num("bui_thresh", mask.bui)?,
            },
            jobs: get("jobs").map(|v| parse_value("jobs", v)).transpose()?,
        };
        if cfg.folds < 2 || cfg.importance_repeats < 2 || cfg.tile == 0 || cfg.greedy_iterations == 0 {
            return Err(Error::Config(
                "folds and importance_repeats must be at least 2; tile and greedy_iterations positive".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// A config for the files of [`crate::fixtures::write_world`], relative to that directory.
    pub fn fixture_text(seed: u64, features: &FeatureSchema) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# generated fixture run");
        let _ = writeln!(s, "seed = {seed}");
        let _ = writeln!(s, "manifest = rasters/manifest.txt");
        let _ = writeln!(s, "plots = plots.csv");
        let _ = writeln!(s, "holdout = holdout.csv");
        let _ = writeln!(s, "out = out");
        if features.names() != DEFAULT_FEATURES {
            let _ = writeln!(s, "features = {}", features.names().join(","));
        }
        s
    }
}

/// Everything read from disk before any processing.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub raw: RasterStack,
    pub plots: Vec<Plot>,
    pub val: SampleTable,
    pub test: SampleTable,
}

fn split_holdout(holdout: &SampleTable, seed: u64) -> Result<(SampleTable, SampleTable)> {
    let s = stratified_split(holdout, (0.0, 0.5, 0.5), rng::derive(seed, 1))?;
    Ok((s.val, s.test))
}

impl Inputs {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let raw = load_raster_stack(&cfg.manifest)?;
        let plots = load_plots(&cfg.plots)?;
        let (val, test) = match &cfg.holdout {
            HoldoutSource::Split(p) => split_holdout(&load_sample_table(p, &cfg.features)?.0, cfg.seed)?,
            HoldoutSource::Separate { val, test } => (
                load_sample_table(val, &cfg.features)?.0,
                load_sample_table(test, &cfg.features)?.0,
            ),
        };
        Ok(Inputs { raw, plots, val, test })
    }

    /// In-memory inputs from a generated world; the holdout is split as in [`Inputs::load`].
    pub fn from_world(world: &World, seed: u64) -> Result<Self> {
        let (val, test) = split_holdout(&world.holdout, seed)?;
        Ok(Inputs {
            raw: world.stack.clone(),
            plots: world.plots.clone(),
            val,
            test,
        })
    }
}

/// Feature stack and labeled rows ready for augmentation and training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: RasterStack,
    pub plots: Vec<Plot>,
    pub features: RasterStack,
    pub field: SampleTable,
    pub pseudo: SampleTable,
    pub propagation: PropagationReport,
    /// Plots on nodata cells, left out of training.
    pub dropped_plots: usize,
    pub val: SampleTable,
    pub test: SampleTable,
}

impl Prepared {
    /// Field rows followed by pseudo-labeled rows.
    pub fn labeled(&self) -> Result<SampleTable> {
        let mut t = self.field.clone();
        t.extend_from(&self.pseudo)?;
        Ok(t)
    }

    /// Fold groups for the [`Prepared::labeled`] rows.
    ///
    /// A field row and every pixel propagated from it share the plot's
    /// pixel as group, so near-duplicates never straddle a fold boundary.
    pub fn fold_groups(&self) -> Vec<usize> {
        let w = self.features.width();
        let cells = w * self.features.height();
        let field = self.field.rows().iter().map(|r| r.pixel.map_or(cells, |(i, j)| i * w + j));
        let pseudo = self.propagation.sources.iter().map(|&k| self.plots[k].row * w + self.plots[k].col);
        field.chain(pseudo).collect()
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

pub fn prepare(inputs: Inputs, cfg: &PipelineConfig) -> Result<Prepared> {
    let features = stage("indices", build_feature_stack(&inputs.raw, &cfg.features))?;
    let (field, dropped_plots) = stage("pseudolabel", plot_samples(&features, &cfg.features, &inputs.plots))?;
    let (pseudo, propagation) = stage("pseudolabel", propagate_labels(&features, &inputs.plots, &cfg.propagation))?;
    Ok(Prepared {
        raw: inputs.raw,
        plots: inputs.plots,
        features,
        field,
        pseudo,
        propagation,
        dropped_plots,
        val: inputs.val,
        test: inputs.test,
    })
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub table: SampleTable,
    /// Fold groups for every row when augmentation was fold-aware.
    pub groups: Option<Vec<usize>>,
    pub balance: Option<BalanceReport>,
    pub fidelity: Option<FidelityReport>,
}

fn score_fidelity(real: &SampleTable, out: &SampleTable, report: &BalanceReport) -> Result<Option<FidelityReport>> {
    if report.synthesized == 0 {
        return Ok(None);
    }
    let synthetic = out.select(&(real.len()..out.len()).collect::<Vec<_>>());
    fidelity_report(real, &synthetic).map(Some)
}

/// Balances `table` with the configured synthesizer and scores the
/// synthetic rows against the real ones.
pub fn augment(table: &SampleTable, synthesizer: Option<&str>, seed: u64) -> Result<Augmented> {
    let Some(name) = synthesizer else {
        return Ok(Augmented {
            table: table.clone(),
            groups: None,
            balance: None,
            fidelity: None,
        });
    };
    let synth = synth::default_registry().get(name)?;
    let (out, report) = synth::balance_with(table, synth.as_ref(), None, seed)?;
    let fidelity = score_fidelity(table, &out, &report)?;
    Ok(Augmented {
        table: out,
        groups: None,
        balance: Some(report),
        fidelity,
    })
}

fn stack_config(cfg: &PipelineConfig, groups: Option<Vec<usize>>, seed: u64) -> StackConfig {
    StackConfig {
        folds: cfg.folds,
        groups,
        greedy_iterations: cfg.greedy_iterations,
        seed,
    }
}

/// Like [`augment`], but synthesizes inside the folds that [`train`] will
/// use with `groups` and `train_seed`. Each synthetic row joins the group of
/// the nearest real row of its class and fold (z-scored features).
pub fn augment_in_folds(
    table: &SampleTable,
    groups: Vec<usize>,
    synthesizer: Option<&str>,
    cfg: &PipelineConfig,
    train_seed: u64,
    seed: u64,
) -> Result<Augmented> {
    let Some(name) = synthesizer else {
        return Ok(Augmented {
            table: table.clone(),
            groups: Some(groups),
            balance: None,
            fidelity: None,
        });
    };
    let (folds, _) = table_folds(table, &stack_config(cfg, Some(groups.clone()), train_seed))?;
    let synth = synth::default_registry().get(name)?;
    let (out, synth_folds, report) = synth::balance_within_folds(table, &folds, synth.as_ref(), seed)?;

    let real = table.rows();
    let scale: Vec<f64> = (0..table.schema().len())
        .map(|j| {
            let sd = crate::stats::sample_sd(&real.iter().map(|r| r.features[j]).collect::<Vec<_>>());
            if sd > 0.0 { 1.0 / sd } else { 1.0 }
        })
        .collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(&scale).map(|((x, y), s)| ((x - y) * s).powi(2)).sum() };
    let mut all_groups = groups;
    for (row, &f) in out.rows()[real.len()..].iter().zip(&synth_folds) {
        let nearest = (0..real.len())
            .filter(|&i| folds[i] == f && real[i].label == row.label)
            .min_by(|&i, &j| dist(&real[i].features, &row.features).total_cmp(&dist(&real[j].features, &row.features)))
            .expect("synthetic rows come from non-empty folds");
        all_groups.push(all_groups[nearest]);
    }
    let fidelity = score_fidelity(table, &out, &report)?;
    Ok(Augmented {
        table: out,
        groups: Some(all_groups),
        balance: Some(report),
        fidelity,
    })
}

pub fn train(
    table: &SampleTable,
    groups: Option<Vec<usize>>,
    val: &SampleTable,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<StackEnsemble> {
    train_stack(&learner_registry(), &cfg.roster_l1, &cfg.roster_l2, table, val, &stack_config(cfg, groups, seed))
}

/// Classifies the feature stack and masks non-burnable pixels using the raw stack's optical bands.
pub fn make_map(ens: &StackEnsemble, prepared: &Prepared, cfg: &PipelineConfig) -> Result<(FuelMap, usize)> {
    let map = classify_raster(ens, &prepared.features, cfg.tile)?;
    let (ndvi, ndwi, bui) = mask_bands(&prepared.raw)?;
    apply_nonburnable_mask(&map, &ndvi, &ndwi, &bui, &cfg.mask)
}

/// Test-set scores of the three training sets compared in the ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub raw: EvalReport,
    pub pseudo: EvalReport,
    pub synthetic: EvalReport,
    pub propagation_growth: f64,
    pub augmentation_growth: f64,
}

impl AblationReport {
    pub fn macro_f1(&self) -> [f64; 3] {
        [self.raw.macro_avg.f1, self.pseudo.macro_avg.f1, self.synthetic.macro_avg.f1]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, r) in [("raw", &self.raw), ("pseudo", &self.pseudo), ("synthetic", &self.synthetic)] {
            let _ = writeln!(s, "{name}_macro_f1={:.4}", r.macro_avg.f1);
            let _ = writeln!(s, "{name}_accuracy={:.4}", r.accuracy);
        }
        let _ = writeln!(s, "propagation_growth={:.4}", self.propagation_growth);
        let _ = writeln!(s, "augmentation_growth={:.4}", self.augmentation_growth);
        s
    }
}

/// Trains on field plots alone, then with pseudo-labels, then with
/// pseudo-labels and synthetic balancing, scoring each on the test rows.
pub fn ablation(prepared: &Prepared, cfg: &PipelineConfig) -> Result<AblationReport> {
    let train_seed = rng::derive(cfg.seed, 3);
    let labeled = prepared.labeled()?;
    let groups = prepared.fold_groups();
    let synthesizer = cfg.synthesizer.as_deref().or(Some("gaussian_copula"));
    let aug = augment_in_folds(&labeled, groups.clone(), synthesizer, cfg, train_seed, rng::derive(cfg.seed, 2))?;
    let score = |t: &SampleTable, g: Vec<usize>| -> Result<EvalReport> {
        evaluate(&train(t, Some(g), &prepared.val, cfg, train_seed)?, &prepared.test)
    };
    Ok(AblationReport {
        raw: score(&prepared.field, groups[..prepared.field.len()].to_vec())?,
        pseudo: score(&labeled, groups)?,
        synthetic: score(&aug.table, aug.groups.clone().expect("fold-aware augmentation"))?,
        propagation_growth: prepared.propagation.growth_factor,
        augmentation_growth: aug.balance.map_or(1.0, |b| b.growth_factor),
    })
}

/// Headline numbers of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub propagation_growth: f64,
    pub augmentation_growth: f64,
    pub training_rows: usize,
    pub masked_pixels: usize,
    pub leaderboard: Vec<LeaderboardRow>,
    pub importance: Vec<ImportanceRecord>,
}

impl RunSummary {
    pub fn to_line(&self) -> String {
        format!(
            "status=ok out={} accuracy={:.4} macro_f1={:.4} propagation_growth={:.4} augmentation_growth={:.4} training_rows={} masked_pixels={}",
            self.out.display(),
            self.accuracy,
            self.macro_f1,
            self.propagation_growth,
            self.augmentation_growth,
            self.training_rows,
            self.masked_pixels
        )
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every stage for a loaded config, writing artifacts under `cfg.out`.
pub fn run_with_config(cfg: &PipelineConfig) -> Result<RunSummary> {
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let marker = out.join(INCOMPLETE_MARKER);
    write(&marker, "stage=start\n")?;
    let mut log = String::new();
    let result = run_stages(cfg, &out, &mut log);
    let log_path = out.join("run.log");
    match &result {
        Ok(_) => {
            let _ = writeln!(log, "status=ok");
            write(&log_path, &log)?;
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
        Err(e) => {
            let stage = match e {
                Error::Stage { stage, .. } => stage,
                _ => "unknown",
            };
            let msg = e.full_message();
            let _ = writeln!(log, "status=failed\nfailed_stage={stage}\nerror={msg}");
            let _ = write(&log_path, &log);
            let _ = write(&marker, &format!("stage={stage}\nerror={msg}\n"));
        }
    }
    result
}

fn run_stages(cfg: &PipelineConfig, out: &Path, log: &mut String) -> Result<RunSummary> {
    let seeds = [
        ("split", rng::derive(cfg.seed, 1)),
        ("augment", rng::derive(cfg.seed, 2)),
        ("train", rng::derive(cfg.seed, 3)),
        ("importance", rng::derive(cfg.seed, 4)),
    ];
    let _ = writeln!(log, "seed={}", cfg.seed);
    for (name, s) in seeds {
        let _ = writeln!(log, "seed_{name}={s}");
    }
    let _ = writeln!(
        log,
        "roster_l1={}\nroster_l2={}",
        cfg.roster_l1.iter().map(|s| s.family.name()).collect::<Vec<_>>().join(","),
        cfg.roster_l2.iter().map(|s| s.family.name()).collect::<Vec<_>>().join(",")
    );

    let inputs = stage("ingest", Inputs::load(cfg))?;
    let _ = writeln!(
        log,
        "ingest_plots={}\ningest_val_rows={}\ningest_test_rows={}\nraster={}x{}",
        inputs.plots.len(),
        inputs.val.len(),
        inputs.test.len(),
        inputs.raw.width(),
        inputs.raw.height()
    );
    let prepared = prepare(inputs, cfg)?;
    let p = &prepared.propagation;
    let _ = writeln!(
        log,
        "field_rows={}\ndropped_plots={}\npseudo_labels={}\npropagation_growth={:.4}",
        prepared.field.len(),
        prepared.dropped_plots,
        p.pseudo_labels,
        p.growth_factor
    );
    let labeled = stage("pseudolabel", prepared.labeled())?;
    stage("pseudolabel", write_sample_table(&out.join("pseudo_labels.csv"), &prepared.pseudo))?;

    let aug = stage(
        "augment",
        augment_in_folds(&labeled, prepared.fold_groups(), cfg.synthesizer.as_deref(), cfg, seeds[2].1, seeds[1].1),
    )?;
    let augmentation_growth = aug.balance.as_ref().map_or(1.0, |b| b.growth_factor);
    let _ = writeln!(
        log,
        "synthesizer={}\nsynthetic_rows={}\naugmentation_growth={:.4}\ntraining_rows={}\ntotal_growth={:.4}",
        cfg.synthesizer.as_deref().unwrap_or("none"),
        aug.balance.as_ref().map_or(0, |b| b.synthesized),
        augmentation_growth,
        aug.table.len(),
        aug.table.len() as f64 / prepared.field.len().max(1) as f64
    );
    if let (Some(f), Some(name)) = (&aug.fidelity, cfg.synthesizer.as_deref()) {
        stage("augment", f.write(out, name))?;
    }

    let ens = stage("train", train(&aug.table, aug.groups.clone(), &prepared.val, cfg, seeds[2].1))?;
    stage("train", save_ensemble(&out.join("model.fven"), &ens))?;
    let _ = writeln!(
        log,
        "classes={}\nl3_weights={}",
        ens.classes.iter().map(|c| c.code()).collect::<Vec<_>>().join(","),
        ens.l3_weights.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>().join(",")
    );

    let report = stage("evaluate", evaluate(&ens, &prepared.test))?;
    let lb = stage("evaluate", leaderboard(&ens, &prepared.val, &prepared.test))?;
    stage("evaluate", write(&out.join("eval_report.csv"), &report.to_csv()))?;
    stage("evaluate", write(&out.join("confusion.csv"), &report.confusion_csv()))?;
    stage("evaluate", write(&out.join("leaderboard.csv"), &leaderboard_csv(&lb)))?;
    let _ = writeln!(log, "test_accuracy={:.4}\ntest_macro_f1={:.4}", report.accuracy, report.macro_avg.f1);

    let imp = stage(
        "importance",
        permutation_importance(&ens, &prepared.test, cfg.importance_repeats, seeds[3].1),
    )?;
    stage("importance", write_importance_csv(&out.join("importance.csv"), &imp))?;

    let (map, masked) = stage("map", make_map(&ens, &prepared, cfg))?;
    stage("map", export_fuel_map(&map, &out.join("fuelmap")))?;
    let _ = writeln!(log, "masked_pixels={masked}");

    Ok(RunSummary {
        out: out.to_path_buf(),
        accuracy: report.accuracy,
        macro_f1: report.macro_avg.f1,
        propagation_growth: p.growth_factor,
        augmentation_growth,
        training_rows: aug.table.len(),
        masked_pixels: masked,
        leaderboard: lb,
        importance: imp,
    })
}

/// Loads the config and runs it, honouring its `jobs` cap.
pub fn run_pipeline(config: &Path) -> Result<RunSummary> {
    let cfg = PipelineConfig::load(config)?;
    with_jobs(cfg.jobs, || run_with_config(&cfg))
}

/// Runs `f` on a pool of `jobs` workers, or the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => Err(Error::Config("jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 7\nmanifest = m.txt\nplots = p.csv\nholdout = h.csv\n";

    #[test]
    fn parses_defaults_relative_to_base() {
        let cfg = PipelineConfig::parse(MINIMAL, Path::new("/data/run")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.manifest, PathBuf::from("/data/run/m.txt"));
        assert_eq!(cfg.out, PathBuf::from("/data/run/out"));
        assert_eq!(cfg.holdout, HoldoutSource::Split(PathBuf::from("/data/run/h.csv")));
        assert_eq!(cfg.features.len(), 24);
        assert_eq!(cfg.propagation.threshold, 0.99);
        assert_eq!(cfg.synthesizer.as_deref(), Some("gaussian_copula"));
        assert_eq!((cfg.folds, cfg.importance_repeats, cfg.tile), (5, 10, 256));
        assert_eq!(cfg.mask, MaskThresholds::default());
    }

    #[test]
    fn seed_is_mandatory() {
        let text = MINIMAL.replace("seed = 7\n", "");
        match PipelineConfig::parse(&text, Path::new(".")) {
            Err(Error::Config(m)) => assert!(m.contains("seed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_lines() {
        for extra in ["colour = red", "seed = 8", "just words", "folds = 1", "synthesizer = gan", "roster_l1 = svm"] {
            let text = format!("{MINIMAL}{extra}\n");
            assert!(PipelineConfig::parse(&text, Path::new(".")).is_err(), "{extra}");
        }
        let both = format!("{MINIMAL}val = v.csv\ntest = t.csv\n");
        assert!(PipelineConfig::parse(&both, Path::new(".")).is_err());
    }

    #[test]
    fn overrides() {
        let text = format!(
            "{MINIMAL}# comment\nsynthesizer = none\nroster_l1 = knn_uniform, mlp\nroster_l2 = decision_tree\nndwi_thresh = 0.4\njobs = 2\nfeatures = a,b\n"
        );
        let cfg = PipelineConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(cfg.synthesizer, None);
        assert_eq!(cfg.roster_l1.len(), 2);
        assert_eq!(cfg.roster_l1[1].params.hidden, 32);
        assert_eq!(cfg.roster_l2[0].family, Family::DecisionTree);
        assert_eq!(cfg.mask.ndwi, 0.4);
        assert_eq!(cfg.jobs, Some(2));
        assert_eq!(cfg.features.names(), ["a", "b"]);
    }

    #[test]
    fn fixture_text_parses() {
        let cfg = PipelineConfig::parse(&PipelineConfig::fixture_text(3, &FeatureSchema::default()), Path::new("w")).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.plots, PathBuf::from("w/plots.csv"));
    }
}
