use std::collections::BTreeMap;

use rand::Rng as _;

use super::{FittedSynthesizer, Synthesizer};
use crate::datamodel::{FeatureSchema, FuelClass, Provenance, Sample, SampleTable};
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::mean_sd;

pub const DEFAULT_K: usize = 5;

/// Interpolates between a row and one of its nearest same-class neighbours.
#[derive(Debug, Clone, Copy)]
pub struct Smote {
    pub k: usize,
}

impl Default for Smote {
    fn default() -> Self {
        Smote { k: DEFAULT_K }
    }
}

struct ClassPoints {
    rows: Vec<Vec<f64>>,
    /// For each row, indices of its nearest neighbours, closest first.
    neighbours: Vec<Vec<usize>>,
}

pub struct FittedSmote {
    schema: FeatureSchema,
    classes: BTreeMap<FuelClass, ClassPoints>,
}

impl Synthesizer for Smote {
    fn name(&self) -> &'static str {
        "smote"
    }

    fn fit(&self, table: &SampleTable, classes: &[FuelClass]) -> Result<Box<dyn FittedSynthesizer>> {
        Ok(Box::new(fit_smote(table, classes, self.k)?))
    }
}

/// Column scales over the whole table; zero spread maps to 1.
fn scales(table: &SampleTable) -> Vec<(f64, f64)> {
    (0..table.schema().len())
        .map(|j| match mean_sd(&table.column(j)) {
            Some((m, s)) if s > 0.0 => (m, s),
            Some((m, _)) => (m, 1.0),
            None => (0.0, 1.0),
        })
        .collect()
}

pub fn fit_smote(table: &SampleTable, classes: &[FuelClass], k: usize) -> Result<FittedSmote> {
    if k == 0 {
        return Err(Error::InvalidArgument("SMOTE needs k >= 1".into()));
    }
    let sc = scales(table);
    let mut fitted = BTreeMap::new();
    for &class in classes {
        let rows: Vec<Vec<f64>> = table.of_class(class).rows().iter().map(|r| r.features.clone()).collect();
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "SMOTE needs at least 2 rows of class {class}, found {}",
                rows.len()
            )));
        }
        let z: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&sc).map(|(v, (m, s))| (v - m) / s).collect())
            .collect();
        let kk = k.min(rows.len() - 1);
        let neighbours = (0..z.len())
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..z.len())
                    .filter(|&j| j != i)
                    .map(|j| (z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum(), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(kk).map(|(_, j)| j).collect()
            })
            .collect();
        fitted.insert(class, ClassPoints { rows, neighbours });
    }
    Ok(FittedSmote {
        schema: table.schema().clone(),
        classes: fitted,
    })
}

impl FittedSynthesizer for FittedSmote {
    fn name(&self) -> &'static str {
        "smote"
    }

    fn classes(&self) -> Vec<FuelClass> {
        self.classes.keys().copied().collect()
    }

    fn sample(&self, class: FuelClass, n: usize, seed: u64) -> Result<SampleTable> {
        let pts = self
            .classes
            .get(&class)
            .ok_or_else(|| Error::InvalidArgument(format!("SMOTE model not fitted for class {class}")))?;
        let mut rng = rng::seeded(seed);
        let mut out = SampleTable::new(self.schema.clone());
        for _ in 0..n {
            let i = rng.random_range(0..pts.rows.len());
            let nb = &pts.neighbours[i];
            let j = nb[rng.random_range(0..nb.len())];
            let u: f64 = rng.random();
            let (x, y) = (&pts.rows[i], &pts.rows[j]);
            let features = x.iter().zip(y).map(|(a, b)| a + u * (b - a)).collect();
            out.push(Sample::labeled(features, class).with_provenance(Provenance::Synthetic))?;
        }
        Ok(out)
    }
}

/// Generates `target[class]` synthetic rows for each listed class.
pub fn smote_oversample(table: &SampleTable, target: &BTreeMap<FuelClass, usize>, k: usize, seed: u64) -> Result<SampleTable> {
    let wanted: Vec<FuelClass> = target.iter().filter(|(_, &n)| n > 0).map(|(&c, _)| c).collect();
    let mut out = SampleTable::new(table.schema().clone());
    if wanted.is_empty() {
        return Ok(out);
    }
    let model = fit_smote(table, &wanted, k)?;
    for c in wanted {
        let s = model.sample(c, target[&c], rng::derive(seed, c.id() as u64))?;
        out.extend_from(&s)?;
    }
    Ok(out)
}
