use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::learner::{decode, encode, Classifier, Family, Learner, LearnerSpec};
use super::matrix::{Matrix, Standardizer};
use crate::error::{Error, Result};
use crate::rng;

/// One hidden ReLU layer, softmax output, cross-entropy loss.
#[derive(Debug, Clone, Copy)]
pub struct MlpLearner;

/// Weights of the network; `w1` is hidden x inputs, `w2` is classes x hidden,
/// both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub scaler: Standardizer,
    pub params: MlpParams,
}

fn softmax(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

impl MlpParams {
    pub fn init(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let he = Normal::new(0.0, (2.0 / inputs.max(1) as f64).sqrt()).expect("finite scale");
        let xa = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("finite scale");
        MlpParams {
            inputs,
            hidden,
            classes,
            w1: (0..hidden * inputs).map(|_| he.sample(&mut r)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..classes * hidden).map(|_| xa.sample(&mut r)).collect(),
            b2: vec![0.0; classes],
        }
    }

    fn zeros_like(&self) -> Self {
        MlpParams {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
            ..*self
        }
    }

    /// Hidden activations and output probabilities.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h) = (self.inputs, self.hidden);
        let a: Vec<f64> = (0..h)
            .map(|j| {
                let w = &self.w1[j * d..(j + 1) * d];
                (self.b1[j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).max(0.0)
            })
            .collect();
        let mut z: Vec<f64> = (0..self.classes)
            .map(|k| {
                let w = &self.w2[k * h..(k + 1) * h];
                self.b2[k] + w.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>()
            })
            .collect();
        softmax(&mut z);
        (a, z)
    }

    /// Mean cross-entropy over the rows of `x` and its gradient.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize]) -> (f64, MlpParams) {
        let mut g = self.zeros_like();
        let loss = self.accumulate(x, y, (0..x.rows()).collect::<Vec<_>>().as_slice(), &mut g);
        (loss, g)
    }

    fn accumulate(&self, x: &Matrix, y: &[usize], rows: &[usize], g: &mut MlpParams) -> f64 {
        let (d, h, k) = (self.inputs, self.hidden, self.classes);
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        let mut delta_h = vec![0.0; h];
        for &i in rows {
            let xi = x.row(i);
            let (a, mut p) = self.forward(xi);
            loss -= p[y[i]].max(1e-300).ln() * scale;
            p[y[i]] -= 1.0;
            delta_h.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..k {
                let dz = p[c] * scale;
                g.b2[c] += dz;
                let w = &self.w2[c * h..(c + 1) * h];
                let gw = &mut g.w2[c * h..(c + 1) * h];
                for j in 0..h {
                    gw[j] += dz * a[j];
                    delta_h[j] += dz * w[j];
                }
            }
            for j in 0..h {
                if a[j] <= 0.0 {
                    continue;
                }
                let dj = delta_h[j];
                g.b1[j] += dj;
                let gw = &mut g.w1[j * d..(j + 1) * d];
                for (gv, xv) in gw.iter_mut().zip(xi) {
                    *gv += dj * xv;
                }
            }
        }
        loss
    }

    /// All weights in a fixed order: w1, b1, w2, b2.
    pub fn flat(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        self.w1.copy_from_slice(&v[..a]);
        self.b1.copy_from_slice(&v[a..a + b]);
        self.w2.copy_from_slice(&v[a + b..a + b + c]);
        self.b2.copy_from_slice(&v[a + b + c..]);
    }

    fn step(&mut self, g: &MlpParams, lr: f64) {
        for (p, q) in [
            (&mut self.w1, &g.w1),
            (&mut self.b1, &g.b1),
            (&mut self.w2, &g.w2),
            (&mut self.b2, &g.b2),
        ] {
            for (a, b) in p.iter_mut().zip(q) {
                *a -= lr * b;
            }
        }
    }
}

/// Plain mini-batch gradient descent on standardized inputs.
pub fn train_mlp(spec: &LearnerSpec, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Mlp> {
    let p = &spec.params;
    let scaler = Standardizer::fit(x);
    let z = scaler.apply_matrix(x);
    let mut params = MlpParams::init(x.cols(), p.hidden, n_classes, seed);
    let mut r = rng::seeded(rng::derive(seed, 1));
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut grad = params.zeros_like();
    for _ in 0..p.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(p.batch_size) {
            for v in [&mut grad.w1, &mut grad.b1, &mut grad.w2, &mut grad.b2] {
                v.iter_mut().for_each(|g| *g = 0.0);
            }
            params.accumulate(&z, y, batch, &mut grad);
            params.step(&grad, p.learning_rate);
        }
    }
    if params.flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("network weights diverged".into()));
    }
    Ok(Mlp { scaler, params })
}

impl Learner for MlpLearner {
    fn family(&self) -> Family {
        Family::Mlp
    }

    fn fit(&self, spec: &LearnerSpec, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(train_mlp(spec, x, y, n_classes, seed)?))
    }

    fn decode(&self, bytes: &[u8]) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(decode::<Mlp>(bytes)?))
    }
}

impl Classifier for Mlp {
    fn kind(&self) -> &'static str {
        Family::Mlp.name()
    }

    fn n_classes(&self) -> usize {
        self.params.classes
    }

    fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        self.params.forward(&self.scaler.apply(x)).1
    }

    fn encode(&self) -> Result<Vec<u8>> {
        encode(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::seeded(11);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| nrm.sample(&mut r)).collect()).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y = [0, 1, 2, 1, 0, 2];
        let mut net = MlpParams::init(3, 5, 3, 2);
        net.b1.iter_mut().for_each(|b| *b = 0.1);
        let (_, g) = net.loss_and_grad(&x, &y);
        let analytic = g.flat();
        let theta = net.flat();
        let eps = 1e-6;
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] += eps;
            net.set_flat(&t);
            let up = net.loss_and_grad(&x, &y).0;
            t[i] -= 2.0 * eps;
            net.set_flat(&t);
            let down = net.loss_and_grad(&x, &y).0;
            let numeric = (up - down) / (2.0 * eps);
            let denom = numeric.abs().max(analytic[i].abs()).max(1e-8);
            assert!((numeric - analytic[i]).abs() / denom < 1e-4 || (numeric - analytic[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn learns_two_blobs() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| if i < 20 { vec![i as f64 * 0.01, 1.0] } else { vec![5.0 + i as f64 * 0.01, -1.0] })
            .collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let m = train_mlp(&LearnerSpec::new(Family::Mlp).with_params(|p| p.epochs = 30), &x, &y, 2, 3).unwrap();
        for (i, &c) in y.iter().enumerate() {
            assert!(m.predict_proba_row(x.row(i))[c] > 0.9);
        }
    }
}
