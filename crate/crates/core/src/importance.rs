//! Permutation feature importance with t-test significance.
//!
//! The table must be held out from whatever the model was trained on;
//! scoring on training rows measures memorization, not reliance.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::datamodel::{FuelClass, SampleTable};
use crate::ensemble::{argmax, Matrix, StackEnsemble, TrainedLearner};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_REPEATS: usize = 10;

/// Anything that maps a feature matrix to one class per row.
pub trait ClassPredictor: Sync {
    fn predict_classes(&self, x: &Matrix) -> Result<Vec<FuelClass>>;
}

impl ClassPredictor for StackEnsemble {
    fn predict_classes(&self, x: &Matrix) -> Result<Vec<FuelClass>> {
        let p = self.predict_proba_batch(x)?;
        Ok(p.iter_rows().map(|r| self.classes[argmax(r)]).collect())
    }
}

impl ClassPredictor for TrainedLearner {
    fn predict_classes(&self, x: &Matrix) -> Result<Vec<FuelClass>> {
        Ok(x.iter_rows().map(|r| self.predict_class(r)).collect())
    }
}

impl<F> ClassPredictor for F
where
    F: Fn(&[f64]) -> FuelClass + Sync,
{
    fn predict_classes(&self, x: &Matrix) -> Result<Vec<FuelClass>> {
        Ok(x.iter_rows().map(self).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRecord {
    pub feature: String,
    /// Mean accuracy drop over repeats.
    pub importance: f64,
    pub stddev: f64,
    /// One-sided p-value for importance > 0.
    pub p_value: f64,
    pub p99_high: f64,
    pub p99_low: f64,
}

/// Summary statistics of per-repeat accuracy drops.
pub fn drop_statistics(feature: &str, drops: &[f64]) -> Result<ImportanceRecord> {
    let r = drops.len();
    if r < 2 {
        return Err(Error::InvalidArgument("need at least two repeats".into()));
    }
    let mean = drops.iter().sum::<f64>() / r as f64;
    let sd = crate::stats::sample_sd(drops);
    let t = StudentsT::new(0.0, 1.0, (r - 1) as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let se = sd / (r as f64).sqrt();
    let p_value = if se > 0.0 {
        t.sf(mean / se).clamp(0.0, 1.0)
    } else if mean > 0.0 {
        0.0
    } else {
        1.0
    };
    let half = t.inverse_cdf(0.995) * se;
    Ok(ImportanceRecord {
        feature: feature.to_string(),
        importance: mean,
        stddev: sd,
        p_value,
        p99_high: mean + half,
        p99_low: mean - half,
    })
}

fn accuracy(pred: &[FuelClass], truth: &[FuelClass]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Importance of every column of `table`, most important first.
pub fn permutation_importance(
    model: &dyn ClassPredictor,
    table: &SampleTable,
    repeats: usize,
    seed: u64,
) -> Result<Vec<ImportanceRecord>> {
    if repeats < 2 {
        return Err(Error::InvalidArgument("need at least two repeats".into()));
    }
    if table.is_empty() {
        return Err(Error::InsufficientData("importance table is empty".into()));
    }
    let truth = table
        .rows()
        .iter()
        .map(|r| r.label.ok_or_else(|| Error::InvalidArgument("importance rows must be labeled".into())))
        .collect::<Result<Vec<_>>>()?;
    let x = Matrix::from_rows(&table.features())?;
    let baseline = accuracy(&model.predict_classes(&x)?, &truth);
    let d = x.cols();

    let drops = (0..d * repeats)
        .into_par_iter()
        .map(|cell| {
            let (j, k) = (cell / repeats, cell % repeats);
            let mut col = x.column(j);
            col.shuffle(&mut rng::seeded(rng::derive(rng::derive(seed, j as u64), k as u64)));
            let mut xp = x.clone();
            for (i, v) in col.into_iter().enumerate() {
                xp.set(i, j, v);
            }
            Ok(baseline - accuracy(&model.predict_classes(&xp)?, &truth))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut out = table
        .schema()
        .names()
        .iter()
        .enumerate()
        .map(|(j, name)| drop_statistics(name, &drops[j * repeats..(j + 1) * repeats]))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.feature.cmp(&b.feature)));
    Ok(out)
}

pub fn importance_csv(records: &[ImportanceRecord]) -> String {
    let mut s = String::from("feature,importance,stddev,p_value,p99_high,p99_low\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6e},{:.6},{:.6}",
            r.feature, r.importance, r.stddev, r.p_value, r.p99_high, r.p99_low
        );
    }
    s
}

pub fn write_importance_csv(path: &Path, records: &[ImportanceRecord]) -> Result<()> {
    std::fs::write(path, importance_csv(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{FeatureSchema, Sample};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn two_classes() -> (FuelClass, FuelClass) {
        (FuelClass::from_code("GR1").unwrap(), FuelClass::from_code("TL3").unwrap())
    }

    /// Column 0 decides the class, column 1 is noise.
    fn fixture(n: usize, seed: u64) -> SampleTable {
        let (a, b) = two_classes();
        let mut r = rng::seeded(seed);
        let rows = (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { a } else { b };
                let signal = if c == a { -1.0 } else { 1.0 } + r.random_range(-0.5..0.5);
                Sample::labeled(vec![signal, r.random_range(-1.0..1.0)], c)
            })
            .collect();
        SampleTable::from_rows(FeatureSchema::unitless(&["signal", "noise"]).unwrap(), rows).unwrap()
    }

    fn threshold_model(x: &[f64]) -> FuelClass {
        let (a, b) = two_classes();
        if x[0] < 0.0 {
            a
        } else {
            b
        }
    }

    #[test]
    fn t_statistics_match_hand_values() {
        // mean 0.190246, sd 0.012607 over five repeats
        let (m, s) = (0.190246, 0.012607);
        let d = s / 2.5f64.sqrt();
        let drops = [m - 2.0 * d, m - d, m, m + d, m + 2.0 * d];
        let rec = drop_statistics("x", &drops).unwrap();
        assert_relative_eq!(rec.importance, m, epsilon = 1e-12);
        assert_relative_eq!(rec.stddev, s, epsilon = 1e-12);
        // t(0.995, 4) = 4.604094871
        assert_relative_eq!(rec.p99_high, m + 4.604094871 * s / 5f64.sqrt(), epsilon = 1e-8);
        assert_relative_eq!(rec.p99_high, 0.216205, epsilon = 2e-6);
        assert_relative_eq!(rec.p_value, 2.30072e-6, max_relative = 1e-3);
    }

    #[test]
    fn zero_spread() {
        assert_eq!(drop_statistics("x", &[0.1, 0.1]).unwrap().p_value, 0.0);
        let z = drop_statistics("x", &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((z.p_value, z.p99_low, z.p99_high), (1.0, 0.0, 0.0));
        assert!(drop_statistics("x", &[0.1]).is_err());
    }

    #[test]
    fn constant_model_scores_zero() {
        let t = fixture(60, 1);
        let a = two_classes().0;
        let recs = permutation_importance(&|_: &[f64]| a, &t, 5, 3).unwrap();
        for r in recs {
            assert_eq!((r.importance, r.stddev), (0.0, 0.0));
        }
    }

    #[test]
    fn signal_beats_noise() {
        let t = fixture(200, 2);
        let recs = permutation_importance(&threshold_model, &t, 10, 4).unwrap();
        assert_eq!(recs[0].feature, "signal");
        assert!(recs[0].importance > 0.3 && recs[0].p_value < 1e-6);
        let noise = &recs[1];
        assert_eq!(noise.importance, 0.0);
        assert!(permutation_importance(&threshold_model, &t, 1, 4).is_err());
        assert!(permutation_importance(&threshold_model, &t.filter(|_| false), 5, 4).is_err());
    }

    #[test]
    fn deterministic_and_csv_layout() {
        let t = fixture(80, 5);
        let a = permutation_importance(&threshold_model, &t, 4, 9).unwrap();
        let b = permutation_importance(&threshold_model, &t, 4, 9).unwrap();
        assert_eq!(a, b);
        let csv = importance_csv(&a);
        assert_eq!(csv.lines().next().unwrap(), "feature,importance,stddev,p_value,p99_high,p99_low");
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn memorizer_on_training_rows_drops_to_majority_rate() {
        // 1-NN on a single feature with distinct values, scored on its own training rows
        let (a, b) = two_classes();
        let mut r = rng::seeded(11);
        let rows: Vec<Sample> = (0..400)
            .map(|i| Sample::labeled(vec![i as f64 + r.random_range(0.0..0.5)], if i % 4 == 0 { b } else { a }))
            .collect();
        let t = SampleTable::from_rows(FeatureSchema::unitless(&["x"]).unwrap(), rows.clone()).unwrap();
        let memo = move |x: &[f64]| {
            rows.iter()
                .min_by(|p, q| (p.features[0] - x[0]).abs().total_cmp(&(q.features[0] - x[0]).abs()))
                .and_then(|s| s.label)
                .unwrap()
        };
        let rec = &permutation_importance(&memo, &t, 5, 1).unwrap()[0];
        // shuffled accuracy of a memorizer is p_a^2 + p_b^2 = 0.625
        assert!((1.0 - rec.importance - 0.625).abs() < 0.06, "{}", rec.importance);
    }

    proptest! {
        #[test]
        fn bounds_bracket_the_mean(drops in proptest::collection::vec(-1.0f64..1.0, 2..20)) {
            let r = drop_statistics("x", &drops).unwrap();
            prop_assert!(r.p99_low <= r.importance && r.importance <= r.p99_high);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
