use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::learner::{fit_classifier, Classifier, LearnerRegistry, LearnerSpec};
use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 5;

/// Fold models of one learner plus their out-of-fold predictions.
#[derive(Debug)]
pub struct BaggedModel {
    pub spec: LearnerSpec,
    /// Fold index of every training row.
    pub folds: Vec<usize>,
    pub fold_models: Vec<Box<dyn Classifier>>,
    /// Row `i` comes only from `fold_models[folds[i]]`, which never saw it.
    pub oof: Matrix,
    pub warnings: Vec<String>,
}

/// Stratified fold assignment over groups of rows.
///
/// Rows sharing a group id always land in the same fold; without groups
/// every row is its own group. A group takes the class of its first row.
/// Each class's groups are shuffled and dealt round-robin, continuing where
/// the previous class stopped; a class with fewer groups than folds is kept
/// whole in fold `class % k`.
pub fn stratified_folds(
    y: &[usize],
    groups: Option<&[usize]>,
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<String>)> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if groups.is_some_and(|g| g.len() != y.len()) {
        return Err(Error::InvalidArgument("one group id per row required".into()));
    }
    let group_of = |i: usize| groups.map_or(i, |g| g[i]);
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..y.len() {
        members.entry(group_of(i)).or_default().push(i);
    }
    let mut folds = vec![0usize; y.len()];
    let mut warnings = Vec::new();
    let mut next = 0usize;
    for c in 0..n_classes {
        let mut units: Vec<&Vec<usize>> = members.values().filter(|m| y[m[0]] == c).collect();
        if units.is_empty() {
            continue;
        }
        if units.len() < k {
            warnings.push(format!(
                "class index {c} has {} groups for {k} folds; pinned to fold {}",
                units.len(),
                c % k
            ));
            for i in units.into_iter().flatten() {
                folds[*i] = c % k;
            }
            continue;
        }
        units.shuffle(&mut rng::seeded(rng::derive(seed, c as u64)));
        for unit in units {
            for &i in unit {
                folds[i] = next % k;
            }
            next += 1;
        }
    }
    Ok((folds, warnings))
}

#[allow(clippy::too_many_arguments)]
pub fn bagged_oof_train(
    registry: &LearnerRegistry,
    spec: &LearnerSpec,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    k: usize,
    groups: Option<&[usize]>,
    seed: u64,
) -> Result<BaggedModel> {
    let (folds, warnings) = stratified_folds(y, groups, n_classes, k, seed)?;
    bagged_train_on_folds(registry, spec, x, y, n_classes, folds, warnings, seed)
}

/// Bagged training on a precomputed fold assignment (`folds[i] < k` for all
/// rows, every fold non-empty in use).
#[allow(clippy::too_many_arguments)]
pub fn bagged_train_on_folds(
    registry: &LearnerRegistry,
    spec: &LearnerSpec,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    folds: Vec<usize>,
    warnings: Vec<String>,
    seed: u64,
) -> Result<BaggedModel> {
    if folds.len() != y.len() {
        return Err(Error::InvalidArgument("one fold per row required".into()));
    }
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let fold_models = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            if train.is_empty() {
                return Err(Error::InsufficientData(format!("fold {f} leaves no training rows")));
            }
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            fit_classifier(registry, spec, &x.select_rows(&train), &yt, n_classes, rng::derive(seed, 1000 + f as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = BaggedModel {
        spec: spec.clone(),
        folds,
        fold_models,
        oof: Matrix::zeros(0, 0),
        warnings,
    };
    m.oof = m.recompute_oof(x);
    Ok(m)
}

impl BaggedModel {
    pub fn n_classes(&self) -> usize {
        self.fold_models[0].n_classes()
    }

    /// Average over all fold models.
    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes()];
        for m in &self.fold_models {
            for (a, b) in p.iter_mut().zip(m.predict_proba_row(x)) {
                *a += b;
            }
        }
        let k = self.fold_models.len() as f64;
        p.iter_mut().for_each(|v| *v /= k);
        p
    }

    /// Out-of-fold predictions for the training rows `x`, from the stored
    /// fold models.
    pub fn recompute_oof(&self, x: &Matrix) -> Matrix {
        let k = self.n_classes();
        let mut oof = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            let p = self.fold_models[self.folds[i]].predict_proba_row(x.row(i));
            oof.row_mut(i).copy_from_slice(&p);
        }
        oof
    }

    /// Deliberately wrong variant that scores each row with a model trained
    /// on it. Exists only as a negative control for leakage tests.
    pub fn leaky_oof(&self, x: &Matrix) -> Matrix {
        let k = self.n_classes();
        let nf = self.fold_models.len();
        let mut oof = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            let p = self.fold_models[(self.folds[i] + 1) % nf].predict_proba_row(x.row(i));
            oof.row_mut(i).copy_from_slice(&p);
        }
        oof
    }

    pub fn replace_fold_model(&mut self, fold: usize, model: Box<dyn Classifier>) -> Result<()> {
        if fold >= self.fold_models.len() || model.n_classes() != self.n_classes() {
            return Err(Error::InvalidArgument(format!("cannot replace fold model {fold}")));
        }
        self.fold_models[fold] = model;
        Ok(())
    }
}
