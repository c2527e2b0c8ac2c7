//! Pseudo-labelling of pixels around field plots by spectral similarity.
//!
//! Each plot and each candidate pixel is summarised by a diagonal Gaussian
//! over a small window of standardized features. Candidates inside a disc
//! around the plot whose combined Jeffries-Matusita / spectral-angle score
//! exceeds the threshold inherit the plot's label.

mod similarity;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::datamodel::{FuelClass, Provenance, RasterBand, RasterStack, Sample, SampleTable, FeatureSchema, DEFAULT_NODATA};
use crate::error::{Error, Result};

pub use similarity::{
    combine_jmsam, estimate_distribution, jm_distance, jmsam_similarity, jmsam_similarity_with, spectral_angle,
    Combiner, PlotDistribution, SimilarityScore, VARIANCE_FLOOR,
};

/// A labeled field plot located on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plot {
    pub row: usize,
    pub col: usize,
    pub class: FuelClass,
}

#[derive(Debug, Clone, Copy)]
pub struct PropagationConfig {
    pub radius_m: f64,
    /// Scores must strictly exceed this value.
    pub threshold: f64,
    pub window: usize,
    pub combiner: Combiner,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            radius_m: 1000.0,
            threshold: 0.99,
            window: 3,
            combiner: combine_jmsam,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagationReport {
    pub plots: usize,
    pub pseudo_labels: usize,
    /// (plots + pseudo-labels) / plots.
    pub growth_factor: f64,
    pub per_class: BTreeMap<FuelClass, usize>,
    /// Candidates skipped because their window had no usable statistics.
    pub skipped: usize,
    /// Index into the plot list of the plot behind each pseudo-labeled row.
    pub sources: Vec<usize>,
}

/// Z-scores every band over its valid cells; constant bands are centred only.
pub fn standardize_stack(stack: &RasterStack) -> RasterStack {
    let bands = stack
        .bands()
        .iter()
        .map(|b| {
            let (mean, sd) = b.stats().unwrap_or((0.0, 1.0));
            let sd = if sd > 0.0 { sd } else { 1.0 };
            let values = (0..b.values.len())
                .map(|i| b.valid(i).map_or(f64::NAN, |v| (v - mean) / sd))
                .collect();
            RasterBand {
                values,
                nodata: DEFAULT_NODATA,
                ..b.clone()
            }
        })
        .collect();
    RasterStack::from_bands(bands, stack.geotransform).expect("same grid")
}

/// Field-plot samples read from the feature stack; plots on nodata cells are dropped.
pub fn plot_samples(stack: &RasterStack, schema: &FeatureSchema, plots: &[Plot]) -> Result<(SampleTable, usize)> {
    let stack = stack.select(schema.names())?;
    let mut table = SampleTable::new(schema.clone());
    let mut dropped = 0;
    for p in plots {
        if p.row >= stack.height() || p.col >= stack.width() {
            return Err(Error::InvalidArgument(format!("plot at ({}, {}) outside grid", p.row, p.col)));
        }
        match stack.pixel(p.row, p.col) {
            Some(f) => table.push(Sample::labeled(f, p.class).at_pixel(p.row, p.col))?,
            None => dropped += 1,
        }
    }
    Ok((table, dropped))
}

/// Parses a `row,col,label` plot list; the header line is required.
pub fn parse_plots_csv(text: &str) -> Result<Vec<Plot>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty plot file".into()))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("plot file lacks `{name}` column")))
    };
    let (ri, ci, li) = (find("row")?, find("col")?, find("label")?);
    lines
        .map(|(n, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let cell = |i: usize| {
                cells
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("line {}: too few cells", n + 1)))
            };
            let index = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad pixel index `{s}`", n + 1)))
            };
            Ok(Plot {
                row: index(cell(ri)?)?,
                col: index(cell(ci)?)?,
                class: FuelClass::from_code(cell(li)?)?,
            })
        })
        .collect()
}

pub fn load_plots(path: &Path) -> Result<Vec<Plot>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_plots_csv(&text)
}

pub fn plots_csv(plots: &[Plot]) -> String {
    let mut s = String::from("row,col,label\n");
    for p in plots {
        s.push_str(&format!("{},{},{}\n", p.row, p.col, p.class));
    }
    s
}

pub fn write_plots(path: &Path, plots: &[Plot]) -> Result<()> {
    std::fs::write(path, plots_csv(plots)).map_err(|e| Error::io(path, e))
}

/// Pixel offsets whose centres lie within `radius_m` of the origin pixel.
fn disc_offsets(radius_m: f64, sx: f64, sy: f64) -> Vec<(isize, isize, f64)> {
    let rr = (radius_m / sy).floor() as isize;
    let rc = (radius_m / sx).floor() as isize;
    let mut out = Vec::new();
    for dr in -rr..=rr {
        for dc in -rc..=rc {
            let d2 = (dr as f64 * sy).powi(2) + (dc as f64 * sx).powi(2);
            if d2 <= radius_m * radius_m {
                out.push((dr, dc, d2));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Claim {
    pixel: usize,
    score: f64,
    dist2: f64,
    plot: usize,
}

impl Claim {
    /// Highest score, then nearest plot centre, then lowest plot index.
    fn beats(&self, other: &Claim) -> bool {
        self.score > other.score
            || (self.score == other.score
                && (self.dist2 < other.dist2 || (self.dist2 == other.dist2 && self.plot < other.plot)))
    }
}

/// Single-pass label propagation from plots to similar pixels.
///
/// Returns pseudo-labeled samples (original feature values, provenance
/// `pseudo_label`), one per pixel, ordered by pixel index.
pub fn propagate_labels(
    stack: &RasterStack,
    plots: &[Plot],
    config: &PropagationConfig,
) -> Result<(SampleTable, PropagationReport)> {
    if plots.is_empty() {
        return Err(Error::InvalidArgument("no plots to propagate from".into()));
    }
    if config.window % 2 == 0 {
        return Err(Error::InvalidArgument("window must be odd".into()));
    }
    let (w, h) = (stack.width(), stack.height());
    for p in plots {
        if p.row >= h || p.col >= w {
            return Err(Error::InvalidArgument(format!("plot at ({}, {}) outside grid", p.row, p.col)));
        }
    }
    let z = standardize_stack(stack);
    let dists: Vec<Option<PlotDistribution>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i / w, i % w);
            z.pixel(r, c)?;
            estimate_distribution(&z, (r, c), config.window).ok()
        })
        .collect();
    let centers: std::collections::HashSet<usize> = plots.iter().map(|p| p.row * w + p.col).collect();
    let gt = stack.geotransform;
    let offsets = disc_offsets(config.radius_m, gt.pixel_size_x.abs(), gt.pixel_size_y.abs());

    let per_plot: Vec<(Vec<Claim>, usize)> = plots
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let mut claims = Vec::new();
            let mut skipped = 0;
            let Some(plot_dist) = &dists[p.row * w + p.col] else {
                return (claims, skipped);
            };
            for &(dr, dc, d2) in &offsets {
                let (r, c) = (p.row as isize + dr, p.col as isize + dc);
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    continue;
                }
                let i = r as usize * w + c as usize;
                if centers.contains(&i) {
                    continue;
                }
                let Some(cand) = &dists[i] else { continue };
                match jmsam_similarity_with(plot_dist, cand, config.combiner) {
                    Ok(s) if s.value > config.threshold => claims.push(Claim {
                        pixel: i,
                        score: s.value,
                        dist2: d2,
                        plot: k,
                    }),
                    Ok(_) => {}
                    Err(_) => skipped += 1,
                }
            }
            (claims, skipped)
        })
        .collect();

    let mut best: BTreeMap<usize, Claim> = BTreeMap::new();
    let mut skipped = 0;
    for (claims, s) in per_plot {
        skipped += s;
        for c in claims {
            match best.get(&c.pixel) {
                Some(cur) if !c.beats(cur) => {}
                _ => {
                    best.insert(c.pixel, c);
                }
            }
        }
    }

    let schema = FeatureSchema::new(
        stack.names().iter().map(|s| s.to_string()).collect(),
        vec![crate::datamodel::Unit::Unitless; stack.bands().len()],
    )?;
    let mut table = SampleTable::new(schema);
    let mut per_class = BTreeMap::new();
    let mut sources = Vec::with_capacity(best.len());
    for (pixel, claim) in &best {
        sources.push(claim.plot);
        let (r, c) = (pixel / w, pixel % w);
        let features = stack.pixel(r, c).expect("candidate cells are valid");
        let class = plots[claim.plot].class;
        *per_class.entry(class).or_insert(0) += 1;
        table.push(
            Sample::labeled(features, class)
                .with_provenance(Provenance::PseudoLabel)
                .at_pixel(r, c),
        )?;
    }
    let report = PropagationReport {
        plots: plots.len(),
        pseudo_labels: table.len(),
        growth_factor: (plots.len() + table.len()) as f64 / plots.len() as f64,
        per_class,
        skipped,
        sources,
    };
    Ok((table, report))
}
