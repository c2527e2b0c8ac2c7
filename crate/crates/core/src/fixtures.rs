//! Deterministic synthetic landscapes for desk-scale runs.
//!
//! The grid is tiled with square stands. Every stand has one class and one
//! feature vector drawn from that class's Gaussian; pixels of a stand share
//! it, except in textured classes where each pixel adds its own jitter.
//! Field plots and held-out plots sit at stand centres, one per stand, so
//! no held-out plot shares a stand with a training plot. A few stands are
//! planted as water, barren or built-up ground via the optical bands that
//! drive the non-burnable mask.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::datamodel::{
    write_fvr, write_raster_stack, write_sample_table, FeatureSchema, FuelClass, GeoTransform, RasterBand,
    RasterStack, Sample, SampleTable, DEFAULT_FEATURES, DEFAULT_NODATA,
};
use crate::error::{Error, Result};
use crate::labelprop::{write_plots, Plot};
use crate::rng::{self, Rng};

/// Optical bands the fixture writes for the non-burnable indices.
pub const OPTICAL_BANDS: [&str; 4] = ["NIR", "R", "G", "MIR"];
const NIR: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub classes: Vec<FuelClass>,
    /// Training plots per class, in `classes` order.
    pub plots_per_class: Vec<usize>,
    /// Held-out plots per class.
    pub holdout_per_class: usize,
    pub feature_dim: usize,
    /// Distance between class means in units of `within_sd`.
    pub separation: f64,
    /// Stand-to-stand spread inside a class.
    pub within_sd: f64,
    /// Per-pixel jitter (in units of `within_sd`) for classes in `textured`.
    pub texture_sd: f64,
    pub textured: Vec<FuelClass>,
    /// Stand edge in pixels.
    pub stand_size: usize,
    /// Unplotted vegetated stands added to the landscape.
    pub extra_stands: usize,
    pub nonburnable_stands: usize,
    pub seed: u64,
}

fn codes(list: &[&str]) -> Vec<FuelClass> {
    list.iter().map(|c| FuelClass::from_code(c).expect("static code")).collect()
}

impl WorldSpec {
    /// Three well separated, evenly sampled classes.
    pub fn separable(seed: u64) -> Self {
        WorldSpec {
            classes: codes(&["GR1", "SH2", "TL3"]),
            plots_per_class: vec![40, 40, 40],
            holdout_per_class: 40,
            feature_dim: DEFAULT_FEATURES.len(),
            separation: 10.0,
            within_sd: 1.0,
            texture_sd: 0.0,
            textured: Vec::new(),
            stand_size: 5,
            extra_stands: 0,
            nonburnable_stands: 12,
            seed,
        }
    }

    /// A dominant, textured TU1 class over sparse minority classes at 30:1.
    pub fn imbalanced(seed: u64) -> Self {
        WorldSpec {
            classes: codes(&["TU1", "GR1", "SH2", "TL3"]),
            plots_per_class: vec![300, 10, 10, 10],
            holdout_per_class: 80,
            feature_dim: DEFAULT_FEATURES.len(),
            separation: 3.0,
            within_sd: 1.0,
            texture_sd: 0.2,
            textured: codes(&["TU1"]),
            stand_size: 5,
            extra_stands: 0,
            nonburnable_stands: 24,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("world spec: {m}")));
        if self.classes.is_empty() {
            return bad("no classes");
        }
        if self.plots_per_class.len() != self.classes.len() {
            return bad("plots_per_class must match classes");
        }
        if let Some(c) = self.classes.iter().find(|c| !c.is_trainable()) {
            return bad(&format!("class {c} is not trainable"));
        }
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return bad("duplicate classes");
        }
        if self.feature_dim < self.classes.len() {
            return bad("feature_dim must be at least the class count");
        }
        if self.stand_size < 3 {
            return bad("stand_size must be at least 3");
        }
        if !(self.separation >= 0.0 && self.within_sd > 0.0 && self.texture_sd >= 0.0) {
            return bad("separation, within_sd and texture_sd must be non-negative (within_sd positive)");
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        if self.feature_dim == DEFAULT_FEATURES.len() {
            FeatureSchema::default()
        } else {
            let names: Vec<String> = (0..self.feature_dim).map(|j| format!("f{j:02}")).collect();
            FeatureSchema::unitless(&names).expect("unique names")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub schema: FeatureSchema,
    /// Feature bands followed by the optical bands.
    pub stack: RasterStack,
    /// Class id per pixel; NB on planted stands.
    pub truth: RasterBand,
    pub plots: Vec<Plot>,
    pub holdout: SampleTable,
    /// Pixel indices of the planted non-burnable stands.
    pub planted: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cover {
    Vegetated(usize),
    Water,
    Barren,
    BuiltUp,
}

#[derive(Debug, Clone, Copy)]
enum Role {
    Plot,
    Holdout,
    Background,
}

/// Typical level and spread of a named feature, so values look like the
/// quantities they stand for.
fn feature_scale(name: &str) -> (f64, f64) {
    match name {
        "Elevation" => (1200.0, 350.0),
        "Slope" => (15.0, 6.0),
        n if n.starts_with("NDVI_") => (0.45, 0.12),
        "PL_HH" | "PL_HV" | "S1_VV" | "S1_VH" => (-12.0, 2.5),
        _ => (1.0, 0.25),
    }
}

fn normal(r: &mut Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, r)
}

/// NIR, R, G, MIR reflectances that reproduce the given NDVI, NDWI and NDBI.
fn optical(ndvi: f64, ndwi: f64, ndbi: f64) -> [f64; 4] {
    [
        NIR,
        NIR * (1.0 - ndvi) / (1.0 + ndvi),
        NIR * (1.0 + ndwi) / (1.0 - ndwi),
        NIR * (1.0 + ndbi) / (1.0 - ndbi),
    ]
}

fn cover_indices(cover: Cover, r: &mut Rng) -> (f64, f64, f64) {
    let (ndvi, ndwi, bui) = match cover {
        Cover::Vegetated(_) => (r.random_range(0.2..0.6), r.random_range(-0.4..0.2), r.random_range(0.0..0.4)),
        Cover::Water => (r.random_range(-0.5..-0.1), r.random_range(0.6..0.9), r.random_range(-0.3..0.3)),
        Cover::Barren => (r.random_range(-0.3..-0.05), r.random_range(-0.3..0.3), r.random_range(-0.3..0.3)),
        Cover::BuiltUp => (r.random_range(0.05..0.3), r.random_range(-0.3..0.2), r.random_range(0.6..0.9)),
    };
    (ndvi, ndwi, ndvi - bui)
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let schema = spec.schema();
    let d = spec.feature_dim;
    let k = spec.classes.len();

    // random directions are nearly orthogonal, so pairs sit about `separation` sd apart
    let offset = spec.separation * spec.within_sd / std::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| offset * x / norm).collect()
        })
        .collect();
    let centroid: Vec<f64> = (0..d).map(|j| means.iter().map(|m| m[j]).sum::<f64>() / k as f64).collect();

    let mut stands: Vec<(Cover, Role)> = Vec::new();
    for (c, &n) in spec.plots_per_class.iter().enumerate() {
        stands.extend(std::iter::repeat_n((Cover::Vegetated(c), Role::Plot), n));
        stands.extend(std::iter::repeat_n((Cover::Vegetated(c), Role::Holdout), spec.holdout_per_class));
    }
    let total_plots: usize = spec.plots_per_class.iter().sum();
    for i in 0..spec.extra_stands {
        let mut pick = (i * total_plots.max(1) / spec.extra_stands.max(1)) % total_plots.max(1);
        let c = spec.plots_per_class.iter().position(|&n| {
            if pick < n {
                true
            } else {
                pick -= n;
                false
            }
        });
        stands.push((Cover::Vegetated(c.unwrap_or(0)), Role::Background));
    }
    for i in 0..spec.nonburnable_stands {
        let cover = [Cover::Water, Cover::Barren, Cover::BuiltUp][i % 3];
        stands.push((cover, Role::Background));
    }
    // leftover grid cells become background stands of the most sampled class
    let gw = (stands.len() as f64).sqrt().ceil() as usize;
    let gh = stands.len().div_ceil(gw);
    let dominant = (0..k).max_by_key(|&c| (spec.plots_per_class[c], std::cmp::Reverse(c))).unwrap_or(0);
    while stands.len() < gw * gh {
        stands.push((Cover::Vegetated(dominant), Role::Background));
    }
    stands.shuffle(&mut r);

    let s = spec.stand_size;
    let (w, h) = (gw * s, gh * s);
    let mut features = vec![vec![0.0; w * h]; d];
    let mut optics = vec![vec![0.0; w * h]; 4];
    let mut truth = vec![0.0; w * h];
    let mut plots = Vec::new();
    let mut holdout_rows = Vec::new();
    let mut planted = Vec::new();
    let scales: Vec<(f64, f64)> = schema.names().iter().map(|n| feature_scale(n)).collect();

    for (idx, &(cover, role)) in stands.iter().enumerate() {
        let (r0, c0) = ((idx / gw) * s, (idx % gw) * s);
        let base: Vec<f64> = match cover {
            Cover::Vegetated(c) => &means[c],
            _ => &centroid,
        }
        .iter()
        .map(|m| m + spec.within_sd * normal(&mut r))
        .collect();
        let (ndvi, ndwi, ndbi) = cover_indices(cover, &mut r);
        let bands = optical(ndvi, ndwi, ndbi);
        let (label, textured) = match cover {
            Cover::Vegetated(c) => (spec.classes[c], spec.textured.contains(&spec.classes[c])),
            _ => (FuelClass::NB, false),
        };
        for rr in r0..r0 + s {
            for cc in c0..c0 + s {
                let i = rr * w + cc;
                for j in 0..d {
                    let jitter = if textured {
                        spec.texture_sd * spec.within_sd * normal(&mut r)
                    } else {
                        0.0
                    };
                    features[j][i] = scales[j].0 + scales[j].1 * (base[j] + jitter);
                }
                for (b, v) in optics.iter_mut().zip(bands) {
                    b[i] = v;
                }
                truth[i] = label.id() as f64;
                if label == FuelClass::NB {
                    planted.push(i);
                }
            }
        }
        let centre = (r0 + s / 2, c0 + s / 2);
        match role {
            Role::Plot => plots.push(Plot {
                row: centre.0,
                col: centre.1,
                class: label,
            }),
            Role::Holdout => {
                let i = centre.0 * w + centre.1;
                let f = (0..d).map(|j| features[j][i]).collect();
                holdout_rows.push(Sample::labeled(f, label).at_pixel(centre.0, centre.1));
            }
            Role::Background => {}
        }
    }
    plots.sort_by_key(|p| (p.row, p.col));
    holdout_rows.sort_by_key(|s| s.pixel);
    planted.sort_unstable();

    let mut bands = Vec::with_capacity(d + 4);
    for (name, values) in schema.names().iter().zip(features) {
        bands.push(RasterBand::new(name.clone(), w, h, values, DEFAULT_NODATA)?);
    }
    for (name, values) in OPTICAL_BANDS.iter().zip(optics) {
        bands.push(RasterBand::new(*name, w, h, values, DEFAULT_NODATA)?);
    }
    Ok(World {
        stack: RasterStack::from_bands(bands, GeoTransform::default())?,
        truth: RasterBand::new("truth", w, h, truth, DEFAULT_NODATA)?,
        plots,
        holdout: SampleTable::from_rows(schema.clone(), holdout_rows)?,
        planted,
        schema,
    })
}

/// Paths of a world written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldFiles {
    pub manifest: PathBuf,
    pub truth: PathBuf,
    pub plots: PathBuf,
    pub holdout: PathBuf,
}

/// Writes the raster stack (with its manifest), the truth band, `plots.csv`
/// and `holdout.csv` under `dir`.
pub fn write_world(dir: &Path, world: &World) -> Result<WorldFiles> {
    let manifest = write_raster_stack(&dir.join("rasters"), &world.stack)?;
    let files = WorldFiles {
        manifest,
        truth: dir.join("truth.fvr"),
        plots: dir.join("plots.csv"),
        holdout: dir.join("holdout.csv"),
    };
    write_fvr(&files.truth, &world.truth, &world.stack.geotransform)?;
    write_plots(&files.plots, &world.plots)?;
    write_sample_table(&files.holdout, &world.holdout)?;
    Ok(files)
}
