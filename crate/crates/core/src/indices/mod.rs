//! Spectral and polarimetric indices, DN calibration, and feature-stack
//! construction from raw optical/SAR/terrain bands.

mod features;

use rayon::prelude::*;

use crate::datamodel::{RasterBand, DEFAULT_NODATA};
use crate::error::{Error, Result};

pub use features::{build_feature_stack, FeatureRecipe};

/// Physical quantity an index input expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandRole {
    Nir,
    Red,
    Green,
    Mir,
    Vv,
    Vh,
    Hh,
    Hv,
    Ndvi,
    Ndbi,
}

impl BandRole {
    /// Conventional raw band name in a raster manifest.
    pub fn band_name(self) -> &'static str {
        match self {
            BandRole::Nir => "NIR",
            BandRole::Red => "R",
            BandRole::Green => "G",
            BandRole::Mir => "MIR",
            BandRole::Vv => "VV",
            BandRole::Vh => "VH",
            BandRole::Hh => "HH",
            BandRole::Hv => "HV",
            BandRole::Ndvi => "NDVI",
            BandRole::Ndbi => "NDBI",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectralIndex {
    Ndvi,
    Sr1,
    Sr2,
    Pr,
    Span,
    Di,
    Rvi,
    CNpdi,
    LNpdi,
    Esprit,
    LDiff,
    CRatio,
    Ndwi,
    Ndbi,
    Bui,
}

use BandRole::*;

impl SpectralIndex {
    pub const ALL: [SpectralIndex; 15] = [
        SpectralIndex::Ndvi,
        SpectralIndex::Sr1,
        SpectralIndex::Sr2,
        SpectralIndex::Pr,
        SpectralIndex::Span,
        SpectralIndex::Di,
        SpectralIndex::Rvi,
        SpectralIndex::CNpdi,
        SpectralIndex::LNpdi,
        SpectralIndex::Esprit,
        SpectralIndex::LDiff,
        SpectralIndex::CRatio,
        SpectralIndex::Ndwi,
        SpectralIndex::Ndbi,
        SpectralIndex::Bui,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpectralIndex::Ndvi => "NDVI",
            SpectralIndex::Sr1 => "SR1",
            SpectralIndex::Sr2 => "SR2",
            SpectralIndex::Pr => "PR",
            SpectralIndex::Span => "SPAN",
            SpectralIndex::Di => "DI",
            SpectralIndex::Rvi => "RVI",
            SpectralIndex::CNpdi => "C_NPDI",
            SpectralIndex::LNpdi => "L_NPDI",
            SpectralIndex::Esprit => "ESPRIT",
            SpectralIndex::LDiff => "L_DIFF",
            SpectralIndex::CRatio => "C_RATIO",
            SpectralIndex::Ndwi => "NDWI",
            SpectralIndex::Ndbi => "NDBI",
            SpectralIndex::Bui => "BUI",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        SpectralIndex::ALL
            .into_iter()
            .find(|i| i.name() == name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "index",
                name: name.to_string(),
            })
    }

    /// Ordered inputs. PR takes decibel magnitudes; SAR ratios and sums take
    /// linear power.
    pub fn inputs(self) -> &'static [BandRole] {
        match self {
            SpectralIndex::Ndvi => &[Nir, Red],
            SpectralIndex::Sr1
            | SpectralIndex::Sr2
            | SpectralIndex::Pr
            | SpectralIndex::Span
            | SpectralIndex::Di
            | SpectralIndex::Rvi
            | SpectralIndex::CNpdi => &[Vv, Vh],
            SpectralIndex::LNpdi | SpectralIndex::Esprit | SpectralIndex::LDiff | SpectralIndex::CRatio => &[Hh, Hv],
            SpectralIndex::Ndwi => &[Green, Nir],
            SpectralIndex::Ndbi => &[Mir, Nir],
            SpectralIndex::Bui => &[Ndvi, Ndbi],
        }
    }

    /// True when the index expects decibel inputs.
    pub fn takes_decibels(self) -> bool {
        self == SpectralIndex::Pr
    }

    /// Evaluates the closed form on scalars. `Ok(None)` marks nodata: a NaN
    /// input, a zero denominator, or a non-finite result.
    pub fn evaluate(self, inputs: &[f64]) -> Result<Option<f64>> {
        let arity = self.inputs().len();
        if inputs.len() != arity {
            return Err(Error::Arity {
                name: self.name().to_string(),
                expected: arity,
                got: inputs.len(),
            });
        }
        Ok(self.formula(inputs[0], inputs[1]))
    }

    fn formula(self, a: f64, b: f64) -> Option<f64> {
        if a.is_nan() || b.is_nan() {
            return None;
        }
        let ratio = |num: f64, den: f64| if den == 0.0 { None } else { Some(num / den) };
        let v = match self {
            // (a - b) / (a + b) family
            SpectralIndex::Ndvi
            | SpectralIndex::CNpdi
            | SpectralIndex::LNpdi
            | SpectralIndex::Ndwi
            | SpectralIndex::Ndbi => ratio(a - b, a + b),
            SpectralIndex::Sr1 => ratio(b, a),
            SpectralIndex::Sr2 => ratio(a, b),
            SpectralIndex::Pr => ratio(a * a, b * b),
            SpectralIndex::Span => Some(0.5 * (a * a + b * b)),
            SpectralIndex::Di => Some(0.5 * (a * a - b * b)),
            SpectralIndex::Rvi => ratio(4.0 * b, a + b),
            SpectralIndex::Esprit => Some((a + b) / 2.0),
            SpectralIndex::LDiff => Some(a - b),
            SpectralIndex::CRatio => ratio(a, b),
            SpectralIndex::Bui => Some(a - b),
        }?;
        v.is_finite().then_some(v)
    }

    /// Cell-wise evaluation over co-registered bands.
    pub fn evaluate_bands(self, bands: &[&RasterBand]) -> Result<RasterBand> {
        let arity = self.inputs().len();
        if bands.len() != arity {
            return Err(Error::Arity {
                name: self.name().to_string(),
                expected: arity,
                got: bands.len(),
            });
        }
        let (a, b) = (bands[0], bands[1]);
        a.same_shape(b)?;
        let values = (0..a.values.len())
            .into_par_iter()
            .map(|i| match (a.valid(i), b.valid(i)) {
                (Some(x), Some(y)) => self.formula(x, y).unwrap_or(DEFAULT_NODATA),
                _ => DEFAULT_NODATA,
            })
            .collect();
        RasterBand::new(self.name(), a.width, a.height, values, DEFAULT_NODATA)
    }
}

/// Scalar index evaluation by name.
pub fn compute_index(name: &str, inputs: &[f64]) -> Result<Option<f64>> {
    SpectralIndex::from_name(name)?.evaluate(inputs)
}

/// Calibrates a SAR digital number to gamma-naught decibels:
/// `10 * log10(dn^2) - 83`.
pub fn dn_to_gamma_naught(dn: f64) -> Result<f64> {
    if !(dn > 0.0) || !dn.is_finite() {
        return Err(Error::Domain(format!("digital number must be positive, got {dn}")));
    }
    Ok(10.0 * (dn * dn).log10() - 83.0)
}

/// Raster form of [`dn_to_gamma_naught`]; non-positive cells become nodata.
pub fn gamma_naught_band(dn: &RasterBand) -> RasterBand {
    let values = (0..dn.values.len())
        .into_par_iter()
        .map(|i| {
            dn.valid(i)
                .and_then(|v| dn_to_gamma_naught(v).ok())
                .unwrap_or(DEFAULT_NODATA)
        })
        .collect();
    RasterBand {
        name: dn.name.clone(),
        width: dn.width,
        height: dn.height,
        values,
        nodata: DEFAULT_NODATA,
        domain: crate::datamodel::Domain::Decibel,
    }
}

/// Decibels to linear power.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power to decibels; `None` for non-positive power.
pub fn linear_to_db(p: f64) -> Option<f64> {
    (p > 0.0).then(|| 10.0 * p.log10())
}
