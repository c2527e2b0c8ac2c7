use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::learner::{decode, encode, Classifier, Family, Learner, LearnerSpec};
use super::matrix::Matrix;
use super::tree::{grow, Classification, Criterion, Presorted, Tree, TreeConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Single trees, random forests and extremely randomized trees.
#[derive(Debug, Clone, Copy)]
pub struct TreeLearner(pub Family);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub family: Family,
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

struct Recipe {
    criterion: Criterion,
    bootstrap: bool,
    random_splits: bool,
    sqrt_features: bool,
    single: bool,
}

fn recipe(family: Family) -> Result<Recipe> {
    let r = |criterion, bootstrap, random_splits, sqrt_features, single| Recipe {
        criterion,
        bootstrap,
        random_splits,
        sqrt_features,
        single,
    };
    Ok(match family {
        Family::DecisionTree => r(Criterion::Gini, false, false, false, true),
        Family::RandomForestGini => r(Criterion::Gini, true, false, true, false),
        Family::RandomForestEntropy => r(Criterion::Entropy, true, false, true, false),
        Family::ExtraTreesGini => r(Criterion::Gini, false, true, true, false),
        Family::ExtraTreesEntropy => r(Criterion::Entropy, false, true, true, false),
        other => return Err(Error::InvalidArgument(format!("{other} is not a tree family"))),
    })
}

impl Learner for TreeLearner {
    fn family(&self) -> Family {
        self.0
    }

    fn fit(&self, spec: &LearnerSpec, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        let rc = recipe(self.0)?;
        let p = &spec.params;
        let d = x.cols();
        let max_features = match p.max_features {
            Some(m) => Some(m.min(d)),
            None if rc.sqrt_features => Some(((d as f64).sqrt() as usize).max(1)),
            None => None,
        };
        let cfg = TreeConfig {
            max_depth: p.max_depth,
            min_samples_leaf: p.min_samples_leaf,
            max_features,
            random_splits: rc.random_splits,
        };
        let presorted = Presorted::new(x);
        let n_trees = if rc.single { 1 } else { p.n_trees };
        let n = x.rows();
        let trees = (0..n_trees)
            .map(|t| {
                let mut r = rng::seeded(rng::derive(seed, t as u64));
                let mut w = vec![1.0; n];
                let keep = if rc.bootstrap {
                    w = vec![0.0; n];
                    for _ in 0..n {
                        w[r.random_range(0..n)] += 1.0;
                    }
                    Some(w.iter().map(|&c| c > 0.0).collect::<Vec<bool>>())
                } else {
                    None
                };
                let obj = Classification {
                    y,
                    w: &w,
                    n_classes,
                    criterion: rc.criterion,
                };
                grow(x, &presorted, keep.as_deref(), &obj, cfg, &mut r)
            })
            .collect();
        Ok(Box::new(TreeEnsemble {
            family: self.0,
            n_classes,
            trees,
        }))
    }

    fn decode(&self, bytes: &[u8]) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(decode::<TreeEnsemble>(bytes)?))
    }
}

impl Classifier for TreeEnsemble {
    fn kind(&self) -> &'static str {
        self.family.name()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, b) in p.iter_mut().zip(t.predict(x)) {
                *a += b;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }

    fn encode(&self) -> Result<Vec<u8>> {
        encode(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::learner::fit_classifier;
    use crate::ensemble::learner::default_registry;

    #[test]
    fn one_sample_is_certain() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        for f in [Family::DecisionTree, Family::RandomForestGini, Family::ExtraTreesEntropy] {
            let m = fit_classifier(&default_registry(), &LearnerSpec::new(f), &x, &[1], 3, 0).unwrap();
            assert_eq!(m.predict_proba_row(&[7.0, 7.0]), vec![0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn forest_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i % 5) as f64, i as f64 * 0.1]).collect();
        let y: Vec<usize> = (0..60).map(|i| (i % 7 + i % 5) % 3).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let spec = LearnerSpec::new(Family::RandomForestEntropy).with_params(|p| p.n_trees = 10);
        let a = TreeLearner(Family::RandomForestEntropy).fit(&spec, &x, &y, 3, 4).unwrap();
        let b = TreeLearner(Family::RandomForestEntropy).fit(&spec, &x, &y, 3, 4).unwrap();
        assert_eq!(a.encode().unwrap(), b.encode().unwrap());
        let p = a.predict_proba_row(x.row(3));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
