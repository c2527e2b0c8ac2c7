use serde::{Deserialize, Serialize};

use super::learner::{decode, encode, Classifier, Family, Learner, LearnerSpec};
use super::matrix::Matrix;
use super::tree::{grow, Newton, Presorted, Tree, TreeConfig};
use crate::error::Result;
use crate::rng;

/// One-vs-rest logistic boosting with Newton-step regression trees.
#[derive(Debug, Clone, Copy)]
pub struct GbtLearner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub n_classes: usize,
    pub learning_rate: f64,
    /// Initial log-odds per class; `None` for classes absent from training.
    pub base: Vec<Option<f64>>,
    pub trees: Vec<Vec<Tree>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Learner for GbtLearner {
    fn family(&self) -> Family {
        Family::GradientBoostedTrees
    }

    fn fit(&self, spec: &LearnerSpec, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        let p = &spec.params;
        let n = x.rows();
        let cfg = TreeConfig {
            max_depth: p.max_depth,
            min_samples_leaf: p.min_samples_leaf,
            max_features: p.max_features,
            random_splits: false,
        };
        let presorted = Presorted::new(x);
        let mut r = rng::seeded(seed);
        let mut base = vec![None; n_classes];
        let mut trees = vec![Vec::new(); n_classes];
        for k in 0..n_classes {
            let pos = y.iter().filter(|&&c| c == k).count();
            if pos == 0 {
                continue;
            }
            let prior = (pos as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
            let b = (prior / (1.0 - prior)).ln();
            base[k] = Some(b);
            let target: Vec<f64> = y.iter().map(|&c| f64::from(u8::from(c == k))).collect();
            let mut f = vec![b; n];
            let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);
            for _ in 0..p.n_trees {
                for i in 0..n {
                    let pi = sigmoid(f[i]);
                    g[i] = pi - target[i];
                    h[i] = (pi * (1.0 - pi)).max(1e-16);
                }
                let obj = Newton {
                    g: &g,
                    h: &h,
                    lambda: p.lambda,
                };
                let t = grow(x, &presorted, None, &obj, cfg, &mut r);
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += p.learning_rate * t.predict(x.row(i))[0];
                }
                trees[k].push(t);
            }
        }
        Ok(Box::new(Gbt {
            n_classes,
            learning_rate: p.learning_rate,
            base,
            trees,
        }))
    }

    fn decode(&self, bytes: &[u8]) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(decode::<Gbt>(bytes)?))
    }
}

impl Gbt {
    pub fn margins(&self, x: &[f64]) -> Vec<Option<f64>> {
        self.base
            .iter()
            .zip(&self.trees)
            .map(|(b, ts)| b.map(|b| b + self.learning_rate * ts.iter().map(|t| t.predict(x)[0]).sum::<f64>()))
            .collect()
    }
}

impl Classifier for Gbt {
    fn kind(&self) -> &'static str {
        Family::GradientBoostedTrees.name()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self
            .margins(x)
            .into_iter()
            .map(|m| m.map(sigmoid).unwrap_or(0.0))
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    fn encode(&self) -> Result<Vec<u8>> {
        encode(self)
    }
}
