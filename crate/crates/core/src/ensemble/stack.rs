use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::bagging::{bagged_train_on_folds, stratified_folds, BaggedModel};
use super::eval::{evaluate_predictions, EvalReport};
use super::greedy::{accuracy, blend_rows, greedy_weighted_ensemble, DEFAULT_ITERATIONS};
use super::learner::{LearnerRegistry, LearnerSpec};
use super::matrix::{argmax, Matrix};
use crate::datamodel::{FeatureSchema, FuelClass, SampleTable};
use crate::error::{Error, Result};
use crate::rng;

/// Bagged L1 learners, bagged L2 learners on features plus L1
/// probabilities, and blend weights over the L2 learners.
#[derive(Debug)]
pub struct StackEnsemble {
    pub schema: FeatureSchema,
    pub classes: Vec<FuelClass>,
    pub l1: Vec<BaggedModel>,
    pub l2: Vec<BaggedModel>,
    pub l3_weights: Vec<f64>,
}

/// Per-layer probabilities for one input row.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutputs {
    pub l1: Vec<Vec<f64>>,
    pub l2: Vec<Vec<f64>>,
    pub blended: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StackConfig {
    pub folds: usize,
    /// Fold groups for the training rows; rows of one group share a fold.
    pub groups: Option<Vec<usize>>,
    pub greedy_iterations: usize,
    pub seed: u64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            folds: super::bagging::DEFAULT_FOLDS,
            groups: None,
            greedy_iterations: DEFAULT_ITERATIONS,
            seed: 0,
        }
    }
}

/// The fold assignment shared by every bagged model of a stack trained on
/// `table` with `cfg`; also returns any fold warnings.
pub fn table_folds(table: &SampleTable, cfg: &StackConfig) -> Result<(Vec<usize>, Vec<String>)> {
    if cfg.groups.as_ref().is_some_and(|g| g.len() != table.len()) {
        return Err(Error::InvalidArgument("one fold group per training row required".into()));
    }
    let classes: Vec<FuelClass> = table.class_histogram().counts.keys().copied().collect();
    let y: Vec<usize> = table
        .rows()
        .iter()
        .map(|r| r.label.and_then(|c| classes.binary_search(&c).ok()).unwrap_or(usize::MAX))
        .collect();
    stratified_folds(&y, cfg.groups.as_deref(), classes.len(), cfg.folds, rng::derive(cfg.seed, 0))
}

/// Features and class indices of a labeled table.
pub fn design(table: &SampleTable, classes: &[FuelClass]) -> Result<(Matrix, Vec<Option<usize>>)> {
    let x = Matrix::from_rows(&table.features())?;
    let y = table
        .rows()
        .iter()
        .map(|r| r.label.and_then(|c| classes.binary_search(&c).ok()))
        .collect();
    Ok((x, y))
}

fn layer_seed(seed: u64, layer: u64, idx: usize, spec: &LearnerSpec) -> u64 {
    rng::derive(rng::derive(seed, layer * 10_000 + idx as u64), spec.seed)
}

fn probs_matrix(rows: Vec<Vec<f64>>, k: usize) -> Matrix {
    let n = rows.len();
    Matrix::from_vec(n, k, rows.concat()).expect("rectangular probabilities")
}

pub fn train_stack(
    registry: &LearnerRegistry,
    roster_l1: &[LearnerSpec],
    roster_l2: &[LearnerSpec],
    train: &SampleTable,
    val: &SampleTable,
    cfg: &StackConfig,
) -> Result<StackEnsemble> {
    if roster_l1.is_empty() || roster_l2.is_empty() {
        return Err(Error::InvalidArgument("both stacking rosters must be non-empty".into()));
    }
    if val.is_empty() {
        return Err(Error::InsufficientData("validation table is empty".into()));
    }
    if train.schema().names() != val.schema().names() {
        return Err(Error::SchemaMismatch("train and validation columns differ".into()));
    }
    let hist = train.class_histogram();
    if hist.unlabeled > 0 {
        return Err(Error::InvalidArgument(format!("{} unlabeled training rows", hist.unlabeled)));
    }
    let classes: Vec<FuelClass> = hist.counts.keys().copied().collect();
    if classes.is_empty() {
        return Err(Error::InsufficientData("training table is empty".into()));
    }
    if let Some(c) = classes.iter().find(|c| !c.is_trainable()) {
        return Err(Error::InvalidArgument(format!("class {c} is not trainable")));
    }
    let k = classes.len();
    let (folds, warnings) = table_folds(train, cfg)?;
    let (x, y) = design(train, &classes)?;
    let y: Vec<usize> = y.into_iter().map(|v| v.expect("training classes indexed")).collect();

    let l1 = roster_l1
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            bagged_train_on_folds(registry, spec, &x, &y, k, folds.clone(), warnings.clone(), layer_seed(cfg.seed, 1, i, spec))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut x2 = x.clone();
    for m in &l1 {
        x2 = x2.hstack(&m.oof)?;
    }
    let l2 = roster_l2
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            bagged_train_on_folds(registry, spec, &x2, &y, k, folds.clone(), warnings.clone(), layer_seed(cfg.seed, 2, i, spec))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ens = StackEnsemble {
        schema: train.schema().clone(),
        classes,
        l1,
        l2,
        l3_weights: Vec::new(),
    };
    let (xv, yv) = design(val, &ens.classes)?;
    let outs = ens.layer_outputs_batch(&xv)?;
    let val_probs: Vec<Matrix> = (0..ens.l2.len())
        .map(|m| probs_matrix(outs.iter().map(|o| o.l2[m].clone()).collect(), k))
        .collect();
    // validation rows of classes unseen in training can never be right
    let labels: Vec<usize> = yv.iter().map(|v| v.unwrap_or(usize::MAX)).collect();
    ens.l3_weights = greedy_weighted_ensemble(&val_probs, &labels, cfg.greedy_iterations)?;
    Ok(ens)
}

impl StackEnsemble {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "row has {} features, model expects {}",
                x.len(),
                self.schema.len()
            )));
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("NaN in prediction input".into()));
        }
        Ok(())
    }

    pub fn layer_outputs(&self, x: &[f64]) -> Result<LayerOutputs> {
        self.check_row(x)?;
        let l1: Vec<Vec<f64>> = self.l1.iter().map(|m| m.predict_proba_row(x)).collect();
        let mut x2 = x.to_vec();
        for p in &l1 {
            x2.extend_from_slice(p);
        }
        let l2: Vec<Vec<f64>> = self.l2.iter().map(|m| m.predict_proba_row(&x2)).collect();
        let blended = if self.l3_weights.is_empty() {
            Vec::new()
        } else {
            let rows: Vec<&[f64]> = l2.iter().map(Vec::as_slice).collect();
            blend_rows(&rows, &self.l3_weights)
        };
        Ok(LayerOutputs { l1, l2, blended })
    }

    pub fn layer_outputs_batch(&self, x: &Matrix) -> Result<Vec<LayerOutputs>> {
        (0..x.rows()).into_par_iter().map(|i| self.layer_outputs(x.row(i))).collect()
    }

    /// Final blended class probabilities, in `classes` order.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.layer_outputs(x).map(|o| o.blended)
    }

    pub fn predict_proba_batch(&self, x: &Matrix) -> Result<Matrix> {
        let rows = (0..x.rows())
            .into_par_iter()
            .map(|i| self.predict_proba(x.row(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(probs_matrix(rows, self.n_classes()))
    }

    /// Most probable class; ties go to the lowest class id.
    pub fn predict_class(&self, x: &[f64]) -> Result<FuelClass> {
        Ok(self.classes[argmax(&self.predict_proba(x)?)])
    }

    /// Model names in leaderboard form, L1 then L2 then the blend.
    pub fn model_names(&self) -> Vec<String> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut names = Vec::new();
        for (layer, models) in [(1, &self.l1), (2, &self.l2)] {
            for m in models.iter() {
                let stem = format!("{}_BAG_L{layer}", m.spec.family.display());
                let n = seen.entry(stem.clone()).or_insert(0);
                *n += 1;
                names.push(if *n == 1 { stem } else { format!("{stem}_{n}") });
            }
        }
        names.push("WeightedEnsemble_L3".to_string());
        names
    }
}

pub fn evaluate(ens: &StackEnsemble, test: &SampleTable) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InsufficientData("test table is empty".into()));
    }
    let truth = test
        .rows()
        .iter()
        .map(|r| r.label.ok_or_else(|| Error::InvalidArgument("test rows must be labeled".into())))
        .collect::<Result<Vec<_>>>()?;
    let x = Matrix::from_rows(&test.features())?;
    let probs = ens.predict_proba_batch(&x)?;
    let predicted: Vec<FuelClass> = probs.iter_rows().map(|p| ens.classes[argmax(p)]).collect();
    evaluate_predictions(&truth, &predicted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub model: String,
    pub test_acc: f64,
    pub val_acc: f64,
}

impl LeaderboardRow {
    pub fn gap(&self) -> f64 {
        (self.test_acc - self.val_acc).abs()
    }
}

fn per_model_accuracy(ens: &StackEnsemble, table: &SampleTable) -> Result<Vec<f64>> {
    let (x, y) = design(table, &ens.classes)?;
    let labels: Vec<usize> = y.into_iter().map(|v| v.unwrap_or(usize::MAX)).collect();
    let outs = ens.layer_outputs_batch(&x)?;
    let k = ens.n_classes();
    let mut acc = Vec::new();
    for m in 0..ens.l1.len() {
        acc.push(accuracy(&probs_matrix(outs.iter().map(|o| o.l1[m].clone()).collect(), k), &labels));
    }
    for m in 0..ens.l2.len() {
        acc.push(accuracy(&probs_matrix(outs.iter().map(|o| o.l2[m].clone()).collect(), k), &labels));
    }
    acc.push(accuracy(&probs_matrix(outs.into_iter().map(|o| o.blended).collect(), k), &labels));
    Ok(acc)
}

/// Every model's validation and test accuracy, best test accuracy first.
pub fn leaderboard(ens: &StackEnsemble, val: &SampleTable, test: &SampleTable) -> Result<Vec<LeaderboardRow>> {
    if val.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("leaderboard needs validation and test rows".into()));
    }
    let va = per_model_accuracy(ens, val)?;
    let ta = per_model_accuracy(ens, test)?;
    let mut rows: Vec<LeaderboardRow> = ens
        .model_names()
        .into_iter()
        .zip(va.into_iter().zip(ta))
        .map(|(model, (val_acc, test_acc))| LeaderboardRow {
            model,
            test_acc,
            val_acc,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.test_acc
            .total_cmp(&a.test_acc)
            .then(b.val_acc.total_cmp(&a.val_acc))
            .then(a.model.cmp(&b.model))
    });
    Ok(rows)
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut s = String::from("model,test_acc,val_acc,abs_gap\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", r.model, r.test_acc, r.val_acc, r.gap());
    }
    s
}
