//! Pixel-wise classification of a feature raster, non-burnable masking and
//! fuel-map export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::datamodel::{
    read_fvr, write_fvr, FeatureSchema, FuelClass, GeoTransform, RasterBand, RasterStack, DEFAULT_NODATA,
};
use crate::ensemble::{argmax, StackEnsemble};
use crate::error::{Error, Result};
use crate::indices::build_feature_stack;

pub const DEFAULT_TILE: usize = 256;

/// A model that scores one feature vector over a fixed class list.
pub trait PixelClassifier: Sync {
    fn schema(&self) -> &FeatureSchema;
    fn classes(&self) -> &[FuelClass];
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl PixelClassifier for StackEnsemble {
    fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    fn classes(&self) -> &[FuelClass] {
        &self.classes
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        StackEnsemble::predict_proba(self, x)
    }
}

/// Class-id and max-probability grids on one geotransform.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelMap {
    pub labels: RasterBand,
    pub probabilities: RasterBand,
    pub geotransform: GeoTransform,
}

impl FuelMap {
    pub fn class_at(&self, i: usize) -> Option<FuelClass> {
        self.labels.valid(i).and_then(|v| FuelClass::from_id(v as u8).ok())
    }

    /// Classes present in the map plus NB, by id.
    pub fn legend(&self) -> Vec<FuelClass> {
        let mut seen = vec![false; FuelClass::all().count()];
        seen[FuelClass::NB.id() as usize] = true;
        for i in 0..self.labels.values.len() {
            if let Some(c) = self.class_at(i) {
                seen[c.id() as usize] = true;
            }
        }
        FuelClass::all().filter(|c| seen[c.id() as usize]).collect()
    }

    pub fn legend_csv(&self) -> String {
        let mut s = String::from("id,code,color\n");
        for c in self.legend() {
            let _ = writeln!(s, "{},{},{}", c.id(), c.code(), c.color_hex());
        }
        s
    }
}

/// Classifies every pixel, `tile` x `tile` blocks at a time.
///
/// A pixel with any nodata feature is nodata in both outputs. Pixels are
/// scored independently, so the tile size never changes the result.
pub fn classify_raster(model: &dyn PixelClassifier, features: &RasterStack, tile: usize) -> Result<FuelMap> {
    if tile == 0 {
        return Err(Error::InvalidArgument("tile size must be positive".into()));
    }
    let stack = features.select(model.schema().names())?;
    let (w, h) = (stack.width(), stack.height());
    let tiles: Vec<(usize, usize)> = (0..h.div_ceil(tile))
        .flat_map(|ty| (0..w.div_ceil(tile)).map(move |tx| (ty * tile, tx * tile)))
        .collect();
    let classes = model.classes();
    let blocks = tiles
        .par_iter()
        .map(|&(r0, c0)| {
            let mut out = Vec::with_capacity(tile * tile);
            for r in r0..(r0 + tile).min(h) {
                for c in c0..(c0 + tile).min(w) {
                    let cell = match stack.pixel(r, c) {
                        None => (DEFAULT_NODATA, DEFAULT_NODATA),
                        Some(x) => {
                            let p = model.predict_proba(&x)?;
                            let k = argmax(&p);
                            (classes[k].id() as f64, p[k])
                        }
                    };
                    out.push((r * w + c, cell));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut labels = vec![DEFAULT_NODATA; w * h];
    let mut probs = vec![DEFAULT_NODATA; w * h];
    for (i, (l, p)) in blocks.into_iter().flatten() {
        labels[i] = l;
        probs[i] = p;
    }
    Ok(FuelMap {
        labels: RasterBand::new("labels", w, h, labels, DEFAULT_NODATA)?,
        probabilities: RasterBand::new("probability", w, h, probs, DEFAULT_NODATA)?,
        geotransform: stack.geotransform,
    })
}

/// Strict thresholds: NB when NDVI is below `ndvi`, or NDWI above `ndwi`,
/// or BUI above `bui`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskThresholds {
    pub ndvi: f64,
    pub ndwi: f64,
    pub bui: f64,
}

impl Default for MaskThresholds {
    fn default() -> Self {
        MaskThresholds {
            ndvi: 0.0,
            ndwi: 0.5,
            bui: 0.5,
        }
    }
}

impl MaskThresholds {
    /// Missing index values never trigger their condition.
    pub fn is_nonburnable(&self, ndvi: Option<f64>, ndwi: Option<f64>, bui: Option<f64>) -> bool {
        ndvi.is_some_and(|v| v < self.ndvi) || ndwi.is_some_and(|v| v > self.ndwi) || bui.is_some_and(|v| v > self.bui)
    }
}

/// Relabels masked pixels as NB, keeping their probabilities. Nodata pixels
/// stay nodata. Returns the map and the number of pixels changed.
pub fn apply_nonburnable_mask(
    map: &FuelMap,
    ndvi: &RasterBand,
    ndwi: &RasterBand,
    bui: &RasterBand,
    thresholds: &MaskThresholds,
) -> Result<(FuelMap, usize)> {
    for b in [ndvi, ndwi, bui] {
        map.labels.same_shape(b)?;
    }
    let mut out = map.clone();
    let nb = FuelClass::NB.id() as f64;
    let mut flipped = 0;
    for (i, label) in out.labels.values.iter_mut().enumerate() {
        if map.labels.is_nodata(i) || *label == nb {
            continue;
        }
        if thresholds.is_nonburnable(ndvi.valid(i), ndwi.valid(i), bui.valid(i)) {
            *label = nb;
            flipped += 1;
        }
    }
    Ok((out, flipped))
}

/// NDVI, NDWI and BUI bands derived from a raw or feature stack.
pub fn mask_bands(stack: &RasterStack) -> Result<(RasterBand, RasterBand, RasterBand)> {
    let s = build_feature_stack(stack, &FeatureSchema::unitless(&["NDVI", "NDWI", "BUI"])?)?;
    let mut it = s.bands().iter().cloned();
    let (a, b, c) = (it.next(), it.next(), it.next());
    Ok((a.expect("NDVI"), b.expect("NDWI"), c.expect("BUI")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuelMapFiles {
    pub labels: PathBuf,
    pub probabilities: PathBuf,
    pub legend: PathBuf,
}

impl FuelMapFiles {
    pub fn for_prefix(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        FuelMapFiles {
            labels: with("_labels.fvr"),
            probabilities: with("_prob.fvr"),
            legend: with("_legend.csv"),
        }
    }
}

pub fn export_fuel_map(map: &FuelMap, prefix: &Path) -> Result<FuelMapFiles> {
    let files = FuelMapFiles::for_prefix(prefix);
    write_fvr(&files.labels, &map.labels, &map.geotransform)?;
    write_fvr(&files.probabilities, &map.probabilities, &map.geotransform)?;
    std::fs::write(&files.legend, map.legend_csv()).map_err(|e| Error::io(&files.legend, e))?;
    Ok(files)
}

pub fn load_fuel_map(prefix: &Path) -> Result<FuelMap> {
    let files = FuelMapFiles::for_prefix(prefix);
    let (labels, geotransform) = read_fvr(&files.labels, "labels")?;
    let (probabilities, _) = read_fvr(&files.probabilities, "probability")?;
    labels.same_shape(&probabilities)?;
    Ok(FuelMap {
        labels,
        probabilities,
        geotransform,
    })
}
