//! Labeled sample tables and their CSV representation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use super::{FeatureSchema, FuelClass};
use crate::error::{Error, Result};
use crate::rng;

/// Where a labeled row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    FieldPlot,
    PseudoLabel,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::FieldPlot => "field_plot",
            Provenance::PseudoLabel => "pseudo_label",
            Provenance::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "" | "field_plot" => Ok(Provenance::FieldPlot),
            "pseudo_label" => Ok(Provenance::PseudoLabel),
            "synthetic" => Ok(Provenance::Synthetic),
            other => Err(Error::Parse(format!("unknown provenance `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Option<FuelClass>,
    pub provenance: Provenance,
    /// Zero-based (row, col) grid coordinate.
    pub pixel: Option<(usize, usize)>,
}

impl Sample {
    pub fn labeled(features: Vec<f64>, label: FuelClass) -> Self {
        Sample {
            features,
            label: Some(label),
            provenance: Provenance::FieldPlot,
            pixel: None,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn at_pixel(mut self, row: usize, col: usize) -> Self {
        self.pixel = Some((row, col));
        self
    }
}

/// Counts of labeled rows per class plus the number of unlabeled rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassHistogram {
    pub counts: BTreeMap<FuelClass, usize>,
    pub unlabeled: usize,
}

impl ClassHistogram {
    pub fn total_labeled(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, class: FuelClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn majority(&self) -> Option<(FuelClass, usize)> {
        // ties resolve to the lowest class id
        self.counts
            .iter()
            .fold(None, |best: Option<(FuelClass, usize)>, (&c, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((c, n)),
            })
    }
}

/// A schema plus rows that all conform to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    schema: FeatureSchema,
    rows: Vec<Sample>,
}

impl SampleTable {
    pub fn new(schema: FeatureSchema) -> Self {
        SampleTable {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn from_rows(schema: FeatureSchema, rows: Vec<Sample>) -> Result<Self> {
        let mut t = SampleTable::new(schema);
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.features.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "sample has {} features, schema has {}",
                sample.features.len(),
                self.schema.len()
            )));
        }
        if sample.features.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("sample features contain NaN".into()));
        }
        self.rows.push(sample);
        Ok(())
    }

    /// Appends every row of `other`; column names must match in order.
    pub fn extend_from(&mut self, other: &SampleTable) -> Result<()> {
        if other.schema.names() != self.schema.names() {
            return Err(Error::SchemaMismatch("cannot concatenate tables with different schemas".into()));
        }
        self.rows.extend(other.rows.iter().cloned());
        Ok(())
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Sample> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.features.as_slice()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features[j]).collect()
    }

    pub fn labels(&self) -> Vec<Option<FuelClass>> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Sorted distinct labels present in the table.
    pub fn classes(&self) -> Vec<FuelClass> {
        self.class_histogram().counts.keys().copied().collect()
    }

    pub fn class_histogram(&self) -> ClassHistogram {
        let mut h = ClassHistogram::default();
        for r in &self.rows {
            match r.label {
                Some(c) => *h.counts.entry(c).or_insert(0) += 1,
                None => h.unlabeled += 1,
            }
        }
        h
    }

    pub fn filter(&self, mut keep: impl FnMut(&Sample) -> bool) -> SampleTable {
        SampleTable {
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> SampleTable {
        SampleTable {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Rows of one class.
    pub fn of_class(&self, class: FuelClass) -> SampleTable {
        self.filter(|r| r.label == Some(class))
    }

    pub fn shuffled(&self, seed: u64) -> SampleTable {
        let mut rows = self.rows.clone();
        rows.shuffle(&mut rng::seeded(seed));
        SampleTable {
            schema: self.schema.clone(),
            rows,
        }
    }

    /// Projects the table onto a subset schema (columns looked up by name).
    pub fn project(&self, schema: &FeatureSchema) -> Result<SampleTable> {
        let idx: Vec<usize> = schema
            .names()
            .iter()
            .map(|n| {
                self.schema
                    .index_of(n)
                    .ok_or_else(|| Error::SchemaMismatch(format!("column `{n}` not in table")))
            })
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| Sample {
                features: idx.iter().map(|&j| r.features[j]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(SampleTable {
            schema: schema.clone(),
            rows,
        })
    }
}

/// What happened while reading a sample CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped: usize,
    /// (1-based line number, message) for rows dropped on parse errors.
    pub row_errors: Vec<(usize, String)>,
}

const OPTIONAL_COLUMNS: [&str; 3] = ["provenance", "row", "col"];

/// Reads a sample CSV whose header holds every schema name plus `label`.
///
/// Rows with blank or NaN feature cells are dropped and counted; rows with
/// unparseable numbers are dropped and recorded in the report.
pub fn load_sample_table(path: &Path, schema: &FeatureSchema) -> Result<(SampleTable, IngestReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sample_csv(&text, schema)
}

pub fn parse_sample_csv(text: &str, schema: &FeatureSchema) -> Result<(SampleTable, IngestReport)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::SchemaMismatch("empty file, no header".into()))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();

    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(Error::SchemaMismatch(format!("duplicate column `{h}`")));
        }
        if schema.index_of(h).is_none() && *h != "label" && !OPTIONAL_COLUMNS.contains(h) {
            return Err(Error::SchemaMismatch(format!("unexpected column `{h}`")));
        }
    }
    let find = |name: &str| header.iter().position(|h| *h == name);
    let feature_cols: Vec<usize> = schema
        .names()
        .iter()
        .map(|n| find(n).ok_or_else(|| Error::SchemaMismatch(format!("missing column `{n}`"))))
        .collect::<Result<_>>()?;
    let label_col = find("label").ok_or_else(|| Error::SchemaMismatch("missing column `label`".into()))?;
    let prov_col = find("provenance");
    let row_col = find("row");
    let col_col = find("col");

    let mut table = SampleTable::new(schema.clone());
    let mut report = IngestReport::default();
    'rows: for (lineno, line) in lines {
        report.rows_read += 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            report.dropped += 1;
            report.row_errors.push((
                lineno + 1,
                format!("expected {} cells, found {}", header.len(), cells.len()),
            ));
            continue;
        }
        let mut features = Vec::with_capacity(schema.len());
        for (&c, name) in feature_cols.iter().zip(schema.names()) {
            let cell = cells[c];
            if cell.is_empty() {
                report.dropped += 1;
                continue 'rows;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_nan() => {
                    report.dropped += 1;
                    continue 'rows;
                }
                Ok(v) => features.push(v),
                Err(_) => {
                    report.dropped += 1;
                    report
                        .row_errors
                        .push((lineno + 1, format!("unparseable value `{cell}` in `{name}`")));
                    continue 'rows;
                }
            }
        }
        let label = match cells[label_col] {
            "" => None,
            code => Some(FuelClass::from_code(code)?),
        };
        let provenance = match prov_col {
            Some(c) => Provenance::parse(cells[c])?,
            None => Provenance::FieldPlot,
        };
        let pixel = match (row_col, col_col) {
            (Some(r), Some(c)) if !cells[r].is_empty() && !cells[c].is_empty() => {
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::Parse(format!("line {}: bad pixel index `{s}`", lineno + 1)))
                };
                Some((parse(cells[r])?, parse(cells[c])?))
            }
            _ => None,
        };
        table.rows.push(Sample {
            features,
            label,
            provenance,
            pixel,
        });
    }
    Ok((table, report))
}

/// Writes a table as CSV: schema columns, `label`, `provenance`, `row`, `col`.
///
/// Values use the shortest representation that parses back to the same bits.
pub fn write_sample_table(path: &Path, table: &SampleTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_sample_csv(&mut w, table).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_sample_csv<W: Write>(w: &mut W, table: &SampleTable) -> std::io::Result<()> {
    let mut header = table.schema().names().join(",");
    header.push_str(",label,provenance,row,col");
    writeln!(w, "{header}")?;
    for r in table.rows() {
        let mut line = String::new();
        for v in &r.features {
            line.push_str(&format!("{v:?},"));
        }
        line.push_str(r.label.map(|c| c.code()).unwrap_or(""));
        line.push(',');
        line.push_str(r.provenance.as_str());
        match r.pixel {
            Some((row, col)) => line.push_str(&format!(",{row},{col}")),
            None => line.push_str(",,"),
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn class_histogram(table: &SampleTable) -> ClassHistogram {
    table.class_histogram()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header() -> String {
        let mut h = FeatureSchema::default().names().join(",");
        h.push_str(",label");
        h
    }

    fn row(v: f64, label: &str) -> String {
        let cells: Vec<String> = (0..24).map(|j| format!("{}", v + j as f64)).collect();
        format!("{},{label}", cells.join(","))
    }

    #[test]
    fn parses_three_rows() {
        let text = format!("{}\n{}\n{}\n{}\n", header(), row(1.0, "TU1"), row(2.0, "GR1"), row(3.0, ""));
        let (t, rep) = parse_sample_csv(&text, &FeatureSchema::default()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(rep.dropped, 0);
        assert_eq!(t.rows()[0].features[1], 2.0);
        assert_eq!(t.rows()[2].label, None);
    }

    #[test]
    fn missing_slope_column_is_schema_mismatch() {
        let schema = FeatureSchema::default();
        let names: Vec<&str> = schema.names().iter().map(|s| s.as_str()).filter(|n| *n != "Slope").collect();
        let text = format!("{},label\n", names.join(","));
        assert!(matches!(parse_sample_csv(&text, &schema), Err(Error::SchemaMismatch(m)) if m.contains("Slope")));
    }

    #[test]
    fn duplicate_column_is_schema_mismatch() {
        let text = "a,a,label\n1,2,TU1\n";
        let schema = FeatureSchema::unitless(&["a"]).unwrap();
        assert!(matches!(parse_sample_csv(text, &schema), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn blank_cell_drops_row() {
        let mut bad: Vec<String> = row(5.0, "TU1").split(',').map(String::from).collect();
        bad[2] = String::new(); // NDVI_2
        let text = format!("{}\n{}\n{}\n", header(), row(1.0, "TU1"), bad.join(","));
        let (t, rep) = parse_sample_csv(&text, &FeatureSchema::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(rep.dropped, 1);
        assert!(rep.row_errors.is_empty());
    }

    #[test]
    fn unparseable_cell_recorded() {
        let text = "a,label\n1.5,TU1\nabc,TU1\n";
        let schema = FeatureSchema::unitless(&["a"]).unwrap();
        let (t, rep) = parse_sample_csv(text, &schema).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(rep.dropped, 1);
        assert_eq!(rep.row_errors[0].0, 3);
    }

    #[test]
    fn unknown_label_names_code() {
        let text = "a,label\n1.5,QQ7\n";
        let schema = FeatureSchema::unitless(&["a"]).unwrap();
        assert!(matches!(parse_sample_csv(text, &schema), Err(Error::UnknownClass(c)) if c == "QQ7"));
    }

    #[test]
    fn histogram_counts() {
        let schema = FeatureSchema::unitless(&["a"]).unwrap();
        assert!(SampleTable::new(schema.clone()).class_histogram().counts.is_empty());
        let tu1 = FuelClass::from_code("TU1").unwrap();
        let gr1 = FuelClass::from_code("GR1").unwrap();
        let mut rows: Vec<Sample> = (0..5).map(|i| Sample::labeled(vec![i as f64], tu1)).collect();
        rows.extend((0..2).map(|i| Sample::labeled(vec![i as f64], gr1)));
        rows.push(Sample { label: None, ..Sample::labeled(vec![0.0], gr1) });
        let h = SampleTable::from_rows(schema, rows).unwrap().class_histogram();
        assert_eq!(h.get(tu1), 5);
        assert_eq!(h.get(gr1), 2);
        assert_eq!(h.unlabeled, 1);
        assert_eq!(h.total_labeled(), 7);
        assert_eq!(h.majority(), Some((tu1, 5)));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40)) {
            let schema = FeatureSchema::unitless(&["x", "y"]).unwrap();
            let tl3 = FuelClass::from_code("TL3").unwrap();
            let rows: Vec<Sample> = values.chunks(2).filter(|c| c.len() == 2)
                .enumerate()
                .map(|(i, c)| Sample::labeled(c.to_vec(), tl3).with_provenance(Provenance::Synthetic).at_pixel(i, i + 1))
                .collect();
            let table = SampleTable::from_rows(schema.clone(), rows).unwrap();
            let mut buf = Vec::new();
            write_sample_csv(&mut buf, &table).unwrap();
            let (back, rep) = parse_sample_csv(std::str::from_utf8(&buf).unwrap(), &schema).unwrap();
            prop_assert_eq!(rep.dropped, 0);
            for (a, b) in table.rows().iter().zip(back.rows()) {
                for (x, y) in a.features.iter().zip(&b.features) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            prop_assert_eq!(back, table);
        }
    }
}
