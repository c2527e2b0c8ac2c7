use rayon::prelude::*;

use super::{db_to_linear, linear_to_db, BandRole, SpectralIndex};
use crate::datamodel::{Domain, FeatureSchema, RasterBand, RasterStack, DEFAULT_NODATA};
use crate::error::{Error, Result};

/// How one schema feature is obtained from a raw stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureRecipe {
    /// A band of the same name is copied as is.
    PassThrough,
    /// A raw SAR band expressed in decibels.
    Decibels(BandRole),
    Index(SpectralIndex),
}

impl FeatureRecipe {
    /// Recipe for a feature name when no band of that name exists.
    pub fn for_feature(name: &str) -> Option<FeatureRecipe> {
        use FeatureRecipe::*;
        let r = match name {
            "S1_VV" => Decibels(BandRole::Vv),
            "S1_VH" => Decibels(BandRole::Vh),
            "PL_HH" => Decibels(BandRole::Hh),
            "PL_HV" => Decibels(BandRole::Hv),
            "S1_SPAN" => Index(SpectralIndex::Span),
            "S1_D1" => Index(SpectralIndex::Di),
            "S1_VHVV" => Index(SpectralIndex::Sr1),
            "S1_VVVH" => Index(SpectralIndex::Sr2),
            "S1_RVI" => Index(SpectralIndex::Rvi),
            "S1_PRatio" => Index(SpectralIndex::Pr),
            "S1_NPDI" => Index(SpectralIndex::CNpdi),
            "PL_ESPRIT" => Index(SpectralIndex::Esprit),
            "PL_NPDI" => Index(SpectralIndex::LNpdi),
            "PL_DIFF" => Index(SpectralIndex::LDiff),
            "PL_Ratio" => Index(SpectralIndex::CRatio),
            other => Index(SpectralIndex::from_name(other).ok()?),
        };
        Some(r)
    }
}

fn is_sar(role: BandRole) -> bool {
    matches!(role, BandRole::Vv | BandRole::Vh | BandRole::Hh | BandRole::Hv)
}

/// Resolves an index input band, converting SAR bands to the domain the
/// index expects. Derived inputs (NDVI, NDBI) are computed when absent.
fn role_band(stack: &RasterStack, role: BandRole, decibels: bool, feature: &str) -> Result<RasterBand> {
    let name = role.band_name();
    let Some(band) = stack.get(name) else {
        return match role {
            BandRole::Ndvi => index_band(stack, SpectralIndex::Ndvi, feature),
            BandRole::Ndbi => index_band(stack, SpectralIndex::Ndbi, feature),
            _ => Err(Error::MissingBand {
                band: name.to_string(),
                feature: feature.to_string(),
            }),
        };
    };
    if !is_sar(role) {
        return Ok(band.clone());
    }
    let convert: fn(f64) -> Option<f64> = match (band.domain, decibels) {
        (Domain::Decibel, true) | (Domain::Linear, false) => return Ok(band.clone()),
        (Domain::Decibel, false) => |v| Some(db_to_linear(v)),
        (Domain::Linear, true) => linear_to_db,
    };
    let values = (0..band.values.len())
        .into_par_iter()
        .map(|i| band.valid(i).and_then(convert).unwrap_or(DEFAULT_NODATA))
        .collect();
    Ok(RasterBand {
        name: name.to_string(),
        width: band.width,
        height: band.height,
        values,
        nodata: DEFAULT_NODATA,
        domain: if decibels { Domain::Decibel } else { Domain::Linear },
    })
}

fn index_band(stack: &RasterStack, index: SpectralIndex, feature: &str) -> Result<RasterBand> {
    let inputs = index
        .inputs()
        .iter()
        .map(|&r| role_band(stack, r, index.takes_decibels(), feature))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&RasterBand> = inputs.iter().collect();
    index.evaluate_bands(&refs)
}

/// Builds one band per schema feature on the stack's grid.
///
/// A cell is nodata in an output band iff a contributing input is nodata
/// there (or the formula's denominator vanishes).
pub fn build_feature_stack(stack: &RasterStack, schema: &FeatureSchema) -> Result<RasterStack> {
    let mut out = RasterStack::new(stack.geotransform);
    for name in schema.names() {
        let mut band = if let Some(b) = stack.get(name) {
            b.clone()
        } else {
            match FeatureRecipe::for_feature(name) {
                Some(FeatureRecipe::Decibels(role)) => role_band(stack, role, true, name)?,
                Some(FeatureRecipe::Index(index)) => index_band(stack, index, name)?,
                Some(FeatureRecipe::PassThrough) | None => {
                    return Err(Error::MissingBand {
                        band: name.clone(),
                        feature: name.clone(),
                    })
                }
            }
        };
        band.name = name.clone();
        out.push(band)?;
    }
    Ok(out)
}
