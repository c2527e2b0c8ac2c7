use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{FittedSynthesizer, Synthesizer};
use crate::datamodel::{FeatureSchema, FuelClass, Provenance, Sample, SampleTable};
use crate::error::{Error, Result};
use crate::rng;

pub const MIN_ROWS: usize = 10;
pub const EIGEN_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianCopula;

#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Constant(f64),
    /// Sorted training values.
    Empirical(Vec<f64>),
}

impl Marginal {
    /// Inverse empirical CDF with linear interpolation between order
    /// statistics placed at the midpoint ranks `(i + 0.5) / n`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Constant(v) => *v,
            Marginal::Empirical(xs) => {
                let n = xs.len();
                let pos = (u * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                let t = pos - lo as f64;
                xs[lo] + t * (xs[hi] - xs[lo])
            }
        }
    }
}

/// Copula for one class.
#[derive(Debug, Clone)]
pub struct ClassCopula {
    pub marginals: Vec<Marginal>,
    /// Indices of non-constant columns, in correlation-matrix order.
    pub active: Vec<usize>,
    /// Repaired Gaussian-space correlation over the active columns.
    pub correlation: DMatrix<f64>,
    factor: DMatrix<f64>,
}

pub struct FittedCopula {
    schema: FeatureSchema,
    pub per_class: BTreeMap<FuelClass, ClassCopula>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Midpoint-rank pseudo-observations `(rank - 0.5) / n`, ties sharing their
/// average rank.
fn midpoint_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut u = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 averaged
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            u[k] = (rank - 0.5) / n as f64;
        }
        i = j + 1;
    }
    u
}

/// Clips eigenvalues at [`EIGEN_FLOOR`] and rescales to unit diagonal.
pub fn repair_correlation(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let mut r = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..r.nrows()).map(|i| r[(i, i)].sqrt()).collect();
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            r[(i, j)] /= d[i] * d[j];
        }
    }
    // symmetrize away rounding and pin the diagonal
    let mut s = (&r + r.transpose()) * 0.5;
    s.fill_diagonal(1.0);
    s
}

fn fit_class(rows: &[&[f64]], d: usize) -> ClassCopula {
    let normal = std_normal();
    let mut marginals = Vec::with_capacity(d);
    let mut active = Vec::new();
    let mut z_cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[sorted.len() - 1] {
            marginals.push(Marginal::Constant(sorted[0]));
            continue;
        }
        active.push(j);
        z_cols.push(midpoint_ranks(&col).into_iter().map(|u| normal.inverse_cdf(u)).collect());
        marginals.push(Marginal::Empirical(sorted));
    }
    let k = active.len();
    let corr = DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            1.0
        } else {
            crate::stats::pearson(&z_cols[a], &z_cols[b]).unwrap_or(0.0)
        }
    });
    let correlation = if k > 0 { repair_correlation(&corr) } else { corr };
    let factor = if k > 0 {
        let eig = SymmetricEigen::new(correlation.clone());
        let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&sq)
    } else {
        DMatrix::zeros(0, 0)
    };
    ClassCopula {
        marginals,
        active,
        correlation,
        factor,
    }
}

/// Fits one copula per labeled class; each class needs [`MIN_ROWS`] rows.
pub fn fit_gaussian_copula(table: &SampleTable) -> Result<FittedCopula> {
    let classes = table.classes();
    fit_copula_classes(table, &classes)
}

pub fn fit_copula_classes(table: &SampleTable, classes: &[FuelClass]) -> Result<FittedCopula> {
    let d = table.schema().len();
    let per_class = classes
        .par_iter()
        .map(|&c| {
            let rows: Vec<&[f64]> = table
                .rows()
                .iter()
                .filter(|r| r.label == Some(c))
                .map(|r| r.features.as_slice())
                .collect();
            if rows.len() < MIN_ROWS {
                return Err(Error::InsufficientData(format!(
                    "Gaussian copula needs at least {MIN_ROWS} rows of class {c}, found {}",
                    rows.len()
                )));
            }
            Ok((c, fit_class(&rows, d)))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(FittedCopula {
        schema: table.schema().clone(),
        per_class,
    })
}

impl Synthesizer for GaussianCopula {
    fn name(&self) -> &'static str {
        "gaussian_copula"
    }

    fn fit(&self, table: &SampleTable, classes: &[FuelClass]) -> Result<Box<dyn FittedSynthesizer>> {
        Ok(Box::new(fit_copula_classes(table, classes)?))
    }
}

impl ClassCopula {
    fn draw(&self, rng: &mut rng::Rng, normal: &Normal) -> Vec<f64> {
        let k = self.active.len();
        let e = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let z = &self.factor * e;
        let mut out: Vec<f64> = self
            .marginals
            .iter()
            .map(|m| match m {
                Marginal::Constant(v) => *v,
                Marginal::Empirical(_) => 0.0,
            })
            .collect();
        for (a, &j) in self.active.iter().enumerate() {
            out[j] = self.marginals[j].quantile(normal.cdf(z[a]));
        }
        out
    }
}

impl FittedSynthesizer for FittedCopula {
    fn name(&self) -> &'static str {
        "gaussian_copula"
    }

    fn classes(&self) -> Vec<FuelClass> {
        self.per_class.keys().copied().collect()
    }

    fn sample(&self, class: FuelClass, n: usize, seed: u64) -> Result<SampleTable> {
        let cop = self
            .per_class
            .get(&class)
            .ok_or_else(|| Error::InvalidArgument(format!("copula not fitted for class {class}")))?;
        let normal = std_normal();
        let mut rng = rng::seeded(seed);
        let mut out = SampleTable::new(self.schema.clone());
        for _ in 0..n {
            out.push(Sample::labeled(cop.draw(&mut rng, &normal), class).with_provenance(Provenance::Synthetic))?;
        }
        Ok(out)
    }
}
