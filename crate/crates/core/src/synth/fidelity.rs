use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::datamodel::SampleTable;
use crate::error::{Error, Result};
use crate::stats::{is_constant, ks_statistic, pearson};

/// Synthetic-versus-real quality scores.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub overall_quality: f64,
    pub column_shapes: f64,
    pub column_pair_trends: f64,
    pub proximity: f64,
    pub diff_matrix: DMatrix<f64>,
    pub columns: Vec<String>,
    /// Columns constant in either table, left out of pair trends.
    pub skipped_columns: Vec<String>,
}

fn check_pair(real: &SampleTable, synth: &SampleTable) -> Result<()> {
    if real.schema().names() != synth.schema().names() {
        return Err(Error::SchemaMismatch("real and synthetic tables have different columns".into()));
    }
    if real.is_empty() || synth.is_empty() {
        return Err(Error::InsufficientData("fidelity needs non-empty tables".into()));
    }
    Ok(())
}

/// Mean over columns of `100 (1 - KS)`.
pub fn column_shapes_score(real: &SampleTable, synth: &SampleTable) -> Result<f64> {
    check_pair(real, synth)?;
    let d = real.schema().len();
    let total: f64 = (0..d)
        .map(|j| 100.0 * (1.0 - ks_statistic(&real.column(j), &synth.column(j))))
        .sum();
    Ok(total / d as f64)
}

/// Mean over column pairs of `100 (1 - |rho_real - rho_synth| / 2)`, with
/// the indices of columns skipped for being constant.
pub fn column_pair_trends(real: &SampleTable, synth: &SampleTable) -> Result<(f64, Vec<usize>)> {
    check_pair(real, synth)?;
    let d = real.schema().len();
    let rc: Vec<Vec<f64>> = (0..d).map(|j| real.column(j)).collect();
    let sc: Vec<Vec<f64>> = (0..d).map(|j| synth.column(j)).collect();
    let (usable, skipped): (Vec<usize>, Vec<usize>) = (0..d).partition(|&j| !is_constant(&rc[j]) && !is_constant(&sc[j]));
    if usable.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "pair trends need two non-constant columns, found {}",
            usable.len()
        )));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in usable.iter().enumerate() {
        for &j in &usable[a + 1..] {
            let pr = pearson(&rc[i], &rc[j]).unwrap_or(0.0);
            let ps = pearson(&sc[i], &sc[j]).unwrap_or(0.0);
            total += 100.0 * (1.0 - (pr - ps).abs() / 2.0);
            pairs += 1;
        }
    }
    Ok((total / pairs as f64, skipped))
}

pub fn column_pair_trends_score(real: &SampleTable, synth: &SampleTable) -> Result<f64> {
    column_pair_trends(real, synth).map(|(s, _)| s)
}

/// Pearson correlation matrix. Constant columns correlate 0 with everything
/// else; the diagonal is 1.
pub fn correlation_matrix(table: &SampleTable) -> DMatrix<f64> {
    let d = table.schema().len();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| table.column(j)).collect();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            pearson(&cols[i], &cols[j]).unwrap_or(0.0)
        }
    })
}

/// `corr(real) - corr(synth)` with an exactly zero diagonal.
pub fn correlation_diff_matrix(real: &SampleTable, synth: &SampleTable) -> Result<DMatrix<f64>> {
    check_pair(real, synth)?;
    if real.schema().len() < 2 {
        return Err(Error::InsufficientData("correlation difference needs two columns".into()));
    }
    let mut diff = correlation_matrix(real) - correlation_matrix(synth);
    diff.fill_diagonal(0.0);
    Ok(diff)
}

/// Signed mean of the strictly upper triangle.
pub fn proximity_level(diff: &DMatrix<f64>) -> Result<f64> {
    let n = diff.nrows();
    if n != diff.ncols() {
        return Err(Error::InvalidArgument(format!("{}x{} matrix is not square", n, diff.ncols())));
    }
    if n < 2 {
        return Err(Error::InsufficientData("proximity needs at least one pair".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += diff[(i, j)];
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

pub fn fidelity_report(real: &SampleTable, synth: &SampleTable) -> Result<FidelityReport> {
    let column_shapes = column_shapes_score(real, synth)?;
    let (column_pair_trends, skipped) = column_pair_trends(real, synth)?;
    let diff_matrix = correlation_diff_matrix(real, synth)?;
    let proximity = proximity_level(&diff_matrix)?;
    let names = real.schema().names();
    Ok(FidelityReport {
        overall_quality: (column_shapes + column_pair_trends) / 2.0,
        column_shapes,
        column_pair_trends,
        proximity,
        diff_matrix,
        columns: names.to_vec(),
        skipped_columns: skipped.into_iter().map(|j| names[j].clone()).collect(),
    })
}

impl FidelityReport {
    /// `key=value` lines.
    pub fn to_text(&self, model: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model={model}");
        let _ = writeln!(s, "overall_quality={:.4}", self.overall_quality);
        let _ = writeln!(s, "column_shapes={:.4}", self.column_shapes);
        let _ = writeln!(s, "column_pair_trends={:.4}", self.column_pair_trends);
        let _ = writeln!(s, "proximity={:.6}", self.proximity);
        let _ = writeln!(s, "skipped_columns={}", self.skipped_columns.join(";"));
        s
    }

    /// Square CSV with a header row and a leading name column.
    pub fn diff_csv(&self) -> String {
        let mut s = String::from("feature");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (i, c) in self.columns.iter().enumerate() {
            s.push_str(c);
            for j in 0..self.columns.len() {
                let _ = write!(s, ",{:?}", self.diff_matrix[(i, j)]);
            }
            s.push('\n');
        }
        s
    }

    /// Writes `fidelity.txt` and `diff_corr.csv` into `dir`.
    pub fn write(&self, dir: &Path, model: &str) -> Result<()> {
        let txt = dir.join("fidelity.txt");
        std::fs::write(&txt, self.to_text(model)).map_err(|e| Error::io(&txt, e))?;
        let csv = dir.join("diff_corr.csv");
        std::fs::write(&csv, self.diff_csv()).map_err(|e| Error::io(&csv, e))
    }
}
