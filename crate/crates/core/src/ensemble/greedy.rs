use super::matrix::{argmax, Matrix};
use crate::error::{Error, Result};

pub const DEFAULT_ITERATIONS: usize = 100;

/// Weighted average of probability rows, accumulated in model order.
pub fn blend_rows(rows: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for (r, &w) in rows.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += w * v;
        }
    }
    out
}

pub fn blend(probs: &[Matrix], weights: &[f64]) -> Matrix {
    let (n, k) = (probs[0].rows(), probs[0].cols());
    let mut out = Matrix::zeros(n, k);
    for i in 0..n {
        let rows: Vec<&[f64]> = probs.iter().map(|p| p.row(i)).collect();
        out.row_mut(i).copy_from_slice(&blend_rows(&rows, weights));
    }
    out
}

pub fn accuracy(probs: &Matrix, labels: &[usize]) -> f64 {
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(probs.row(i)) == y)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn log_loss(probs: &Matrix, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let p = if y < probs.cols() { probs.get(i, y) } else { 0.0 };
            -p.clamp(1e-15, 1.0).ln()
        })
        .sum();
    total / labels.len() as f64
}

/// Greedy forward selection with replacement. Starts from the best single
/// model; each round adds the model that maximizes blended accuracy, ties
/// going to lower log-loss and then the lower index. Returns the weights of
/// the most accurate blend seen, so the result never scores below the best
/// single model.
pub fn greedy_weighted_ensemble(val_probs: &[Matrix], labels: &[usize], iterations: usize) -> Result<Vec<f64>> {
    let m = val_probs.len();
    if m == 0 {
        return Err(Error::InvalidArgument("greedy ensemble needs at least one model".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("greedy ensemble needs at least one iteration".into()));
    }
    if labels.is_empty() {
        return Err(Error::InsufficientData("greedy ensemble needs validation rows".into()));
    }
    let (n, k) = (val_probs[0].rows(), val_probs[0].cols());
    if n != labels.len() || val_probs.iter().any(|p| p.rows() != n || p.cols() != k) {
        return Err(Error::InvalidArgument("probability matrices must share one shape".into()));
    }
    let mut counts = vec![0usize; m];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..iterations {
        let mut round: Option<(f64, f64, usize, Vec<f64>)> = None;
        for c in 0..m {
            counts[c] += 1;
            let total: usize = counts.iter().sum();
            let w: Vec<f64> = counts.iter().map(|&x| x as f64 / total as f64).collect();
            counts[c] -= 1;
            let b = blend(val_probs, &w);
            let (acc, ll) = (accuracy(&b, labels), log_loss(&b, labels));
            let better = match &round {
                None => true,
                Some((ba, bl, _, _)) => acc > *ba || (acc == *ba && ll < *bl),
            };
            if better {
                round = Some((acc, ll, c, w));
            }
        }
        let (acc, _, c, w) = round.expect("at least one candidate");
        counts[c] += 1;
        if best.as_ref().is_none_or(|(ba, _)| acc > *ba) {
            best = Some((acc, w));
        }
    }
    Ok(best.expect("at least one iteration").1)
}
