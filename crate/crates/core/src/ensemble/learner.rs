use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    DecisionTree,
    RandomForestGini,
    RandomForestEntropy,
    ExtraTreesGini,
    ExtraTreesEntropy,
    GradientBoostedTrees,
    KnnUniform,
    KnnDistance,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::DecisionTree,
        Family::RandomForestGini,
        Family::RandomForestEntropy,
        Family::ExtraTreesGini,
        Family::ExtraTreesEntropy,
        Family::GradientBoostedTrees,
        Family::KnnUniform,
        Family::KnnDistance,
        Family::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::DecisionTree => "decision_tree",
            Family::RandomForestGini => "random_forest_gini",
            Family::RandomForestEntropy => "random_forest_entropy",
            Family::ExtraTreesGini => "extra_trees_gini",
            Family::ExtraTreesEntropy => "extra_trees_entropy",
            Family::GradientBoostedTrees => "gradient_boosted_trees",
            Family::KnnUniform => "knn_uniform",
            Family::KnnDistance => "knn_distance",
            Family::Mlp => "mlp",
        }
    }

    /// Leaderboard stem.
    pub fn display(self) -> &'static str {
        match self {
            Family::DecisionTree => "DecisionTree",
            Family::RandomForestGini => "RandomForestGini",
            Family::RandomForestEntropy => "RandomForestEntr",
            Family::ExtraTreesGini => "ExtraTreesGini",
            Family::ExtraTreesEntropy => "ExtraTreesEntr",
            Family::GradientBoostedTrees => "GradientBoostedTrees",
            Family::KnnUniform => "KNeighborsUnif",
            Family::KnnDistance => "KNeighborsDist",
            Family::Mlp => "NeuralNet",
        }
    }

    pub fn from_name(name: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "learner",
                name: name.to_string(),
            })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Union of per-family hyperparameters; each family reads its own subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` is the family default.
    pub max_features: Option<usize>,
    pub learning_rate: f64,
    /// Leaf L2 penalty for boosting.
    pub lambda: f64,
    pub k: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Hyperparams {
    pub fn defaults(family: Family) -> Self {
        let base = Hyperparams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            learning_rate: 0.1,
            lambda: 1.0,
            k: 5,
            hidden: 64,
            epochs: 100,
            batch_size: 32,
        };
        match family {
            Family::GradientBoostedTrees => Hyperparams {
                max_depth: Some(4),
                ..base
            },
            Family::Mlp => Hyperparams {
                learning_rate: 0.05,
                ..base
            },
            _ => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub family: Family,
    pub params: Hyperparams,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(family: Family) -> Self {
        LearnerSpec {
            family,
            params: Hyperparams::defaults(family),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_params(mut self, f: impl FnOnce(&mut Hyperparams)) -> Self {
        f(&mut self.params);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{}: {what}", self.family)));
        match self.family {
            Family::RandomForestGini
            | Family::RandomForestEntropy
            | Family::ExtraTreesGini
            | Family::ExtraTreesEntropy
                if p.n_trees == 0 =>
            {
                bad("n_trees must be >= 1")
            }
            Family::GradientBoostedTrees if p.n_trees == 0 => bad("n_trees must be >= 1"),
            Family::GradientBoostedTrees if !(p.learning_rate > 0.0) => bad("learning_rate must be > 0"),
            Family::GradientBoostedTrees if p.lambda < 0.0 => bad("lambda must be >= 0"),
            Family::KnnUniform | Family::KnnDistance if p.k == 0 => bad("k must be >= 1"),
            Family::Mlp if p.hidden == 0 || p.epochs == 0 || p.batch_size == 0 => {
                bad("hidden, epochs and batch_size must be >= 1")
            }
            Family::Mlp if !(p.learning_rate > 0.0) => bad("learning_rate must be > 0"),
            _ if p.min_samples_leaf == 0 => bad("min_samples_leaf must be >= 1"),
            _ if p.max_features == Some(0) => bad("max_features must be >= 1"),
            _ => Ok(()),
        }
    }
}

/// A fitted model over a fixed class-index space.
pub trait Classifier: Send + Sync + fmt::Debug {
    /// Persistence key; a registered family name or `constant`.
    fn kind(&self) -> &'static str;

    fn n_classes(&self) -> usize;

    /// Probabilities over all class indices, summing to 1.
    fn predict_proba_row(&self, x: &[f64]) -> Vec<f64>;

    fn encode(&self) -> Result<Vec<u8>>;
}

pub trait Learner: Send + Sync {
    fn family(&self) -> Family;

    /// Fits on rows of `x` with labels in `0..n_classes`.
    fn fit(&self, spec: &LearnerSpec, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Classifier>>;

    fn decode(&self, bytes: &[u8]) -> Result<Box<dyn Classifier>>;
}

pub type LearnerRegistry = Registry<dyn Learner>;

/// Predicts one fixed distribution everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantClassifier {
    pub probs: Vec<f64>,
}

impl ConstantClassifier {
    pub fn one_hot(class: usize, n_classes: usize) -> Self {
        let mut probs = vec![0.0; n_classes];
        probs[class] = 1.0;
        ConstantClassifier { probs }
    }
}

impl Classifier for ConstantClassifier {
    fn kind(&self) -> &'static str {
        "constant"
    }

    fn n_classes(&self) -> usize {
        self.probs.len()
    }

    fn predict_proba_row(&self, _x: &[f64]) -> Vec<f64> {
        self.probs.clone()
    }

    fn encode(&self) -> Result<Vec<u8>> {
        encode(self)
    }
}

pub(crate) fn encode<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    bincode::serialize(v).map_err(|e| Error::Format(format!("encode: {e}")))
}

pub(crate) fn decode<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    bincode::deserialize(bytes).map_err(|e| Error::Format(format!("decode: {e}")))
}

pub(crate) fn check_training(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::InsufficientData("cannot train on an empty table".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::InvalidArgument(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("label index {bad} outside {n_classes} classes")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training features must be finite".into()));
    }
    Ok(())
}

/// The only class present, when there is exactly one.
pub(crate) fn single_class(y: &[usize]) -> Option<usize> {
    let first = *y.first()?;
    y.iter().all(|&c| c == first).then_some(first)
}

/// Fits `spec` through `registry`, short-circuiting single-class data to a
/// constant model.
pub fn fit_classifier(
    registry: &LearnerRegistry,
    spec: &LearnerSpec,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<Box<dyn Classifier>> {
    spec.validate()?;
    check_training(x, y, n_classes)?;
    if let Some(c) = single_class(y) {
        return Ok(Box::new(ConstantClassifier::one_hot(c, n_classes)));
    }
    registry.get(spec.family.name())?.fit(spec, x, y, n_classes, seed)
}

pub fn decode_classifier(registry: &LearnerRegistry, kind: &str, bytes: &[u8]) -> Result<Box<dyn Classifier>> {
    if kind == "constant" {
        return Ok(Box::new(decode::<ConstantClassifier>(bytes)?));
    }
    registry.get(kind)?.decode(bytes)
}

/// All nine families.
pub fn default_registry() -> LearnerRegistry {
    let mut r: LearnerRegistry = Registry::new("learner");
    let entries: Vec<Arc<dyn Learner>> = vec![
        Arc::new(super::forest::TreeLearner(Family::DecisionTree)),
        Arc::new(super::forest::TreeLearner(Family::RandomForestGini)),
        Arc::new(super::forest::TreeLearner(Family::RandomForestEntropy)),
        Arc::new(super::forest::TreeLearner(Family::ExtraTreesGini)),
        Arc::new(super::forest::TreeLearner(Family::ExtraTreesEntropy)),
        Arc::new(super::gbt::GbtLearner),
        Arc::new(super::knn::KnnLearner(Family::KnnUniform)),
        Arc::new(super::knn::KnnLearner(Family::KnnDistance)),
        Arc::new(super::mlp::MlpLearner),
    ];
    for e in entries {
        r.register(e.family().name(), e);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(Family::from_name(f.name()).unwrap(), f);
        }
        assert!(Family::from_name("xgboost").is_err());
        assert_eq!(default_registry().names().len(), 9);
    }

    #[test]
    fn validation() {
        assert!(LearnerSpec::new(Family::KnnUniform).with_params(|p| p.k = 0).validate().is_err());
        assert!(LearnerSpec::new(Family::GradientBoostedTrees)
            .with_params(|p| p.learning_rate = 0.0)
            .validate()
            .is_err());
        for f in Family::ALL {
            LearnerSpec::new(f).validate().unwrap();
        }
    }
}
