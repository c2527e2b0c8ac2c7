use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::datamodel::FuelClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: FuelClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class precision, recall and F1 with a confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Classes in id order; also the confusion-matrix order.
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    /// `confusion[t][p]`: rows with true class `t` predicted as `p`.
    pub confusion: Vec<Vec<usize>>,
    /// Classes that were predicted but never occur in the truth.
    pub zero_support: Vec<FuelClass>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Scores predictions against the truth over the union of both label sets.
pub fn evaluate_predictions(truth: &[FuelClass], predicted: &[FuelClass]) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate on an empty table".into()));
    }
    if truth.len() != predicted.len() {
        return Err(Error::InvalidArgument("truth and prediction lengths differ".into()));
    }
    let classes: Vec<FuelClass> = truth.iter().chain(predicted).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pos = |c: FuelClass| classes.binary_search(&c).expect("class in union");
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[pos(t)][pos(p)] += 1;
    }
    let mut per_class = Vec::with_capacity(k);
    for (c, &class) in classes.iter().enumerate() {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted_c: usize = confusion.iter().map(|r| r[c]).sum();
        let precision = ratio(tp, predicted_c);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            class,
            precision,
            recall,
            f1,
            support,
        });
    }
    let n = truth.len() as f64;
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let mean = |f: &dyn Fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let weighted = |f: &dyn Fn(&ClassMetrics) -> f64| per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / n;
    Ok(EvalReport {
        accuracy: correct as f64 / n,
        macro_avg: Averages {
            precision: mean(&|m| m.precision),
            recall: mean(&|m| m.recall),
            f1: mean(&|m| m.f1),
        },
        weighted_avg: Averages {
            precision: weighted(&|m| m.precision),
            recall: weighted(&|m| m.recall),
            f1: weighted(&|m| m.f1),
        },
        zero_support: per_class.iter().filter(|m| m.support == 0).map(|m| m.class).collect(),
        per_class,
        confusion,
    })
}

impl EvalReport {
    /// Per-class table followed by accuracy and the two averages.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,f1-score,support\n");
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{:.4},{}",
                m.class.code(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        let total: usize = self.per_class.iter().map(|m| m.support).sum();
        let _ = writeln!(s, "accuracy,,,{:.4},{total}", self.accuracy);
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(s, "{name},{:.4},{:.4},{:.4},{total}", a.precision, a.recall, a.f1);
        }
        s
    }

    /// Confusion matrix with class codes on both axes (rows are truth).
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for m in &self.per_class {
            s.push(',');
            s.push_str(m.class.code());
        }
        s.push('\n');
        for (m, row) in self.per_class.iter().zip(&self.confusion) {
            s.push_str(m.class.code());
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(code: &str) -> FuelClass {
        FuelClass::from_code(code).unwrap()
    }

    #[test]
    fn perfect_predictor() {
        let t = vec![c("GR1"), c("TL3"), c("TL3")];
        let r = evaluate_predictions(&t, &t).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![0, 2]]);
        assert_eq!(r.macro_avg.f1, 1.0);
    }

    #[test]
    fn always_wrong() {
        let t = vec![c("GR1"), c("TL3")];
        let p = vec![c("TL3"), c("GR1")];
        let r = evaluate_predictions(&t, &p).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.macro_avg.f1, 0.0);
    }

    #[test]
    fn supports_and_zero_support() {
        let t = vec![c("GR1"), c("GR1"), c("TL3"), c("TL3")];
        let p = vec![c("GR1"), c("SH2"), c("TL3"), c("GR1")];
        let r = evaluate_predictions(&t, &p).unwrap();
        assert_eq!(r.per_class.iter().map(|m| m.support).sum::<usize>(), 4);
        for (m, row) in r.per_class.iter().zip(&r.confusion) {
            assert_eq!(row.iter().sum::<usize>(), m.support);
        }
        assert_eq!(r.zero_support, vec![c("SH2")]);
        let gr1 = &r.per_class[0];
        assert_eq!((gr1.precision, gr1.recall), (0.5, 0.5));
        assert!(evaluate_predictions(&[], &[]).is_err());
    }
}
