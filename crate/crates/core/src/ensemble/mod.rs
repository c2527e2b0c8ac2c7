//! Bagged, stacked and greedily blended classifiers.
//!
//! Learner families sit behind [`Learner`] and are looked up by name in a
//! [`LearnerRegistry`]. Models work on class indices into the sorted class
//! list of the training table.

mod bagging;
mod eval;
mod forest;
mod gbt;
mod greedy;
mod knn;
mod learner;
mod matrix;
mod mlp;
mod persist;
mod stack;
mod tree;

pub use bagging::{bagged_oof_train, bagged_train_on_folds, stratified_folds, BaggedModel, DEFAULT_FOLDS};
pub use eval::{evaluate_predictions, Averages, ClassMetrics, EvalReport};
pub use forest::{TreeEnsemble, TreeLearner};
pub use gbt::{Gbt, GbtLearner};
pub use greedy::{accuracy, blend, blend_rows, greedy_weighted_ensemble, log_loss, DEFAULT_ITERATIONS};
pub use knn::{Knn, KnnLearner};
pub use learner::{
    decode_classifier, default_registry, fit_classifier, Classifier, ConstantClassifier, Family, Hyperparams, Learner,
    LearnerRegistry, LearnerSpec,
};
pub use matrix::{argmax, Matrix, Standardizer};
pub use mlp::{train_mlp, Mlp, MlpLearner, MlpParams};
pub use persist::{load_ensemble, read_ensemble, save_ensemble, write_ensemble, FORMAT_VERSION, MAGIC};
pub use stack::{
    design, evaluate, leaderboard, leaderboard_csv, table_folds, train_stack, LayerOutputs, LeaderboardRow, StackConfig,
    StackEnsemble,
};

use crate::datamodel::{FuelClass, SampleTable};
use crate::error::{Error, Result};

/// A single fitted learner with its class list.
#[derive(Debug)]
pub struct TrainedLearner {
    pub classes: Vec<FuelClass>,
    pub model: Box<dyn Classifier>,
    /// True when the training table held a single class.
    pub constant: bool,
}

impl TrainedLearner {
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.model.predict_proba_row(x)
    }

    pub fn predict_class(&self, x: &[f64]) -> FuelClass {
        self.classes[argmax(&self.predict_proba(x))]
    }
}

pub fn train_base_learner(spec: &LearnerSpec, train: &SampleTable) -> Result<TrainedLearner> {
    let classes = train.classes();
    if train.is_empty() {
        return Err(Error::InsufficientData("cannot train on an empty table".into()));
    }
    let (x, y) = design(train, &classes)?;
    let y = y
        .into_iter()
        .map(|v| v.ok_or_else(|| Error::InvalidArgument("training rows must be labeled".into())))
        .collect::<Result<Vec<_>>>()?;
    let model = fit_classifier(&default_registry(), spec, &x, &y, classes.len(), spec.seed)?;
    Ok(TrainedLearner {
        constant: classes.len() == 1,
        classes,
        model,
    })
}

/// One learner of every family with default hyperparameters.
pub fn full_roster() -> Vec<LearnerSpec> {
    Family::ALL.into_iter().map(LearnerSpec::new).collect()
}

/// Smaller presets for laptop-scale runs.
pub fn desk_roster_l1() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new(Family::DecisionTree).with_params(|p| p.min_samples_leaf = 2),
        LearnerSpec::new(Family::RandomForestGini).with_params(|p| p.n_trees = 40),
        LearnerSpec::new(Family::RandomForestEntropy).with_params(|p| p.n_trees = 40),
        LearnerSpec::new(Family::ExtraTreesGini).with_params(|p| p.n_trees = 40),
        LearnerSpec::new(Family::ExtraTreesEntropy).with_params(|p| p.n_trees = 40),
        LearnerSpec::new(Family::GradientBoostedTrees).with_params(|p| p.n_trees = 40),
        LearnerSpec::new(Family::KnnUniform),
        LearnerSpec::new(Family::KnnDistance),
        LearnerSpec::new(Family::Mlp).with_params(|p| {
            p.hidden = 32;
            p.epochs = 30;
        }),
    ]
}

pub fn desk_roster_l2() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new(Family::RandomForestGini).with_params(|p| p.n_trees = 40),
        LearnerSpec::new(Family::ExtraTreesGini).with_params(|p| p.n_trees = 40),
        LearnerSpec::new(Family::GradientBoostedTrees).with_params(|p| p.n_trees = 30),
    ]
}
