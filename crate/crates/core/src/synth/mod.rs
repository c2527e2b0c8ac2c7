//! Class balancing with synthetic rows and synthetic-data fidelity scores.

mod copula;
mod fidelity;
mod smote;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::datamodel::{FuelClass, SampleTable};
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::rng;

pub use copula::{fit_copula_classes, fit_gaussian_copula, repair_correlation, ClassCopula, FittedCopula, GaussianCopula, Marginal};
pub use fidelity::{
    column_pair_trends, column_pair_trends_score, column_shapes_score, correlation_diff_matrix, correlation_matrix,
    fidelity_report, proximity_level, FidelityReport,
};
pub use smote::{fit_smote, smote_oversample, FittedSmote, Smote};

/// A tabular generator that can be fitted on labeled rows.
pub trait Synthesizer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Fits per-class state for `classes`.
    fn fit(&self, table: &SampleTable, classes: &[FuelClass]) -> Result<Box<dyn FittedSynthesizer>>;
}

pub trait FittedSynthesizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn classes(&self) -> Vec<FuelClass>;

    /// `n` rows of `class` with synthetic provenance.
    fn sample(&self, class: FuelClass, n: usize, seed: u64) -> Result<SampleTable>;
}

pub type SynthesizerRegistry = Registry<dyn Synthesizer>;

/// `smote` and `gaussian_copula`.
pub fn default_registry() -> SynthesizerRegistry {
    let mut r = Registry::new("synthesizer");
    r.register("smote", Arc::new(Smote::default()) as Arc<dyn Synthesizer>);
    r.register("gaussian_copula", Arc::new(GaussianCopula) as Arc<dyn Synthesizer>);
    r
}

pub fn sample_synthesizer(model: &dyn FittedSynthesizer, class: FuelClass, n: usize, seed: u64) -> Result<SampleTable> {
    model.sample(class, n, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub before: BTreeMap<FuelClass, usize>,
    pub after: BTreeMap<FuelClass, usize>,
    pub synthesized: usize,
    /// Rows after over rows before.
    pub growth_factor: f64,
    /// Fold and class pairs too small to fit alone, synthesized from every fold's rows.
    pub pooled_fits: usize,
}

/// Tops every class up to `target` rows (default: the majority count) and
/// returns the original rows followed by the synthetic ones.
pub fn balance_with(
    table: &SampleTable,
    synth: &dyn Synthesizer,
    target: Option<usize>,
    seed: u64,
) -> Result<(SampleTable, BalanceReport)> {
    let hist = table.class_histogram();
    if hist.unlabeled > 0 {
        return Err(Error::InvalidArgument(format!("{} unlabeled rows cannot be balanced", hist.unlabeled)));
    }
    if let Some(c) = hist.counts.keys().find(|c| !c.is_trainable()) {
        return Err(Error::InvalidArgument(format!("class {c} is not trainable")));
    }
    let target = match target {
        Some(t) => t,
        None => hist.majority().map(|(_, n)| n).unwrap_or(0),
    };
    let need: BTreeMap<FuelClass, usize> = hist
        .counts
        .iter()
        .filter(|(_, &n)| n < target)
        .map(|(&c, &n)| (c, target - n))
        .collect();
    let mut out = table.clone();
    if !need.is_empty() {
        let classes: Vec<FuelClass> = need.keys().copied().collect();
        let model = synth.fit(table, &classes)?;
        for (&c, &n) in &need {
            out.extend_from(&model.sample(c, n, rng::derive(seed, c.id() as u64))?)?;
        }
    }
    let synthesized = out.len() - table.len();
    let report = BalanceReport {
        before: hist.counts,
        after: out.class_histogram().counts,
        synthesized,
        growth_factor: if table.is_empty() { 1.0 } else { out.len() as f64 / table.len() as f64 },
        pooled_fits: 0,
    };
    Ok((out, report))
}

fn majority_needs(table: &SampleTable) -> Result<BTreeMap<FuelClass, usize>> {
    let hist = table.class_histogram();
    if hist.unlabeled > 0 {
        return Err(Error::InvalidArgument(format!("{} unlabeled rows cannot be balanced", hist.unlabeled)));
    }
    if let Some(c) = hist.counts.keys().find(|c| !c.is_trainable()) {
        return Err(Error::InvalidArgument(format!("class {c} is not trainable")));
    }
    let target = hist.majority().map(|(_, n)| n).unwrap_or(0);
    Ok(hist.counts.iter().filter(|(_, &n)| n < target).map(|(&c, &n)| (c, target - n)).collect())
}

/// Balances to the majority count like [`balance_with`], but each fold's
/// share of a class's synthetic rows is generated from that fold's rows
/// alone, so cross-validated models never see synthetic copies of the rows
/// they are scored on. Shares follow each fold's share of the class.
///
/// Returns the original rows followed by the synthetic ones, and the fold
/// of every synthetic row.
pub fn balance_within_folds(
    table: &SampleTable,
    folds: &[usize],
    synth: &dyn Synthesizer,
    seed: u64,
) -> Result<(SampleTable, Vec<usize>, BalanceReport)> {
    if folds.len() != table.len() {
        return Err(Error::InvalidArgument("one fold per row required".into()));
    }
    let need = majority_needs(table)?;
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let mut out = table.clone();
    let mut synth_folds = Vec::new();
    let mut pooled_fits = 0;
    for (&c, &n_need) in &need {
        let class_rows: Vec<usize> = (0..table.len()).filter(|&i| table.rows()[i].label == Some(c)).collect();
        let n_class = class_rows.len();
        let mut done = 0;
        let mut cum = 0;
        for f in 0..k {
            let in_fold: Vec<usize> = class_rows.iter().copied().filter(|&i| folds[i] == f).collect();
            cum += in_fold.len();
            let quota = n_need * cum / n_class - done;
            done += quota;
            if quota == 0 {
                continue;
            }
            let sub_seed = rng::derive(rng::derive(seed, c.id() as u64), f as u64);
            let rows = match synth.fit(&table.select(&in_fold), &[c]) {
                Ok(m) => m.sample(c, quota, sub_seed)?,
                Err(Error::InsufficientData(_)) => {
                    pooled_fits += 1;
                    synth.fit(&table.select(&class_rows), &[c])?.sample(c, quota, sub_seed)?
                }
                Err(e) => return Err(e),
            };
            out.extend_from(&rows)?;
            synth_folds.extend(std::iter::repeat_n(f, quota));
        }
    }
    let report = BalanceReport {
        before: table.class_histogram().counts,
        after: out.class_histogram().counts,
        synthesized: out.len() - table.len(),
        growth_factor: if table.is_empty() { 1.0 } else { out.len() as f64 / table.len() as f64 },
        pooled_fits,
    };
    Ok((out, synth_folds, report))
}

/// Balances with a synthesizer from the default registry.
pub fn balance_dataset(table: &SampleTable, model_kind: &str, seed: u64) -> Result<SampleTable> {
    let synth = default_registry().get(model_kind)?;
    balance_with(table, synth.as_ref(), None, seed).map(|(t, _)| t)
}
