use serde::{Deserialize, Serialize};

use super::learner::{decode, encode, Classifier, Family, Learner, LearnerSpec};
use super::matrix::{Matrix, Standardizer};
use crate::error::{Error, Result};

/// Brute-force nearest neighbours on standardized features.
#[derive(Debug, Clone, Copy)]
pub struct KnnLearner(pub Family);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub distance_weighted: bool,
    pub k: usize,
    pub n_classes: usize,
    pub scaler: Standardizer,
    pub points: Matrix,
    pub labels: Vec<usize>,
}

impl Learner for KnnLearner {
    fn family(&self) -> Family {
        self.0
    }

    fn fit(&self, spec: &LearnerSpec, x: &Matrix, y: &[usize], n_classes: usize, _seed: u64) -> Result<Box<dyn Classifier>> {
        let distance_weighted = match self.0 {
            Family::KnnUniform => false,
            Family::KnnDistance => true,
            other => return Err(Error::InvalidArgument(format!("{other} is not a knn family"))),
        };
        let scaler = Standardizer::fit(x);
        Ok(Box::new(Knn {
            distance_weighted,
            k: spec.params.k.min(x.rows()),
            n_classes,
            points: scaler.apply_matrix(x),
            scaler,
            labels: y.to_vec(),
        }))
    }

    fn decode(&self, bytes: &[u8]) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(decode::<Knn>(bytes)?))
    }
}

impl Knn {
    /// The `k` nearest training rows as (squared distance, index), nearest
    /// first; equal distances prefer the lower index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(f64, usize)> {
        let z = self.scaler.apply(x);
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter_rows()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d
    }
}

impl Classifier for Knn {
    fn kind(&self) -> &'static str {
        if self.distance_weighted {
            Family::KnnDistance.name()
        } else {
            Family::KnnUniform.name()
        }
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let nb = self.neighbours(x);
        let mut p = vec![0.0; self.n_classes];
        let exact = nb.iter().any(|&(d, _)| d == 0.0);
        for &(d, i) in &nb {
            let w = match (self.distance_weighted, exact) {
                (false, _) => 1.0,
                (true, true) => f64::from(u8::from(d == 0.0)),
                (true, false) => 1.0 / d.sqrt(),
            };
            p[self.labels[i]] += w;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    fn encode(&self) -> Result<Vec<u8>> {
        encode(self)
    }
}
