use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical unit of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Meters,
    Degrees,
    Decibels,
    Unitless,
}

impl Unit {
    pub fn tag(self) -> &'static str {
        match self {
            Unit::Meters => "m",
            Unit::Degrees => "deg",
            Unit::Decibels => "dB",
            Unit::Unitless => "1",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "m" => Ok(Unit::Meters),
            "deg" => Ok(Unit::Degrees),
            "dB" => Ok(Unit::Decibels),
            "1" => Ok(Unit::Unitless),
            other => Err(Error::Parse(format!("unknown unit tag `{other}`"))),
        }
    }
}

/// The 24 fused optical/SAR/terrain predictors, in column order.
pub const DEFAULT_FEATURES: [&str; 24] = [
    "Elevation", "NDVI_1", "NDVI_2", "NDVI_3", "NDVI_4", "NDVI_5", "NDVI_6", "NDVI_7", "NDVI_8",
    "Slope", "PL_ESPRIT", "PL_HV", "S1_VH", "PL_HH", "S1_SPAN", "S1_VV", "PL_NPDI", "PL_DIFF",
    "PL_Ratio", "S1_PRatio", "S1_D1", "S1_VHVV", "S1_VVVH", "S1_RVI",
];

/// Ordered, uniquely named feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    units: Vec<Unit>,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>, units: Vec<Unit>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::SchemaMismatch("schema has no features".into()));
        }
        if names.len() != units.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} names but {} units",
                names.len(),
                units.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n == "label" {
                return Err(Error::SchemaMismatch(format!("invalid feature name `{n}`")));
            }
            if names[..i].contains(n) {
                return Err(Error::SchemaMismatch(format!("duplicate feature `{n}`")));
            }
        }
        Ok(FeatureSchema { names, units })
    }

    /// Schema with every column unitless.
    pub fn unitless<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let units = vec![Unit::Unitless; names.len()];
        Self::new(names, units)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// A copy of this schema without the named columns.
    pub fn without(&self, drop: &[&str]) -> Result<Self> {
        let (names, units): (Vec<_>, Vec<_>) = self
            .names
            .iter()
            .zip(&self.units)
            .filter(|(n, _)| !drop.contains(&n.as_str()))
            .map(|(n, u)| (n.clone(), *u))
            .unzip();
        Self::new(names, units)
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        let units = DEFAULT_FEATURES
            .iter()
            .map(|n| match *n {
                "Elevation" => Unit::Meters,
                "Slope" => Unit::Degrees,
                "PL_HV" | "PL_HH" | "S1_VH" | "S1_VV" => Unit::Decibels,
                _ => Unit::Unitless,
            })
            .collect();
        FeatureSchema {
            names: DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect(),
            units,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_24_unique_names() {
        let s = FeatureSchema::default();
        assert_eq!(s.len(), 24);
        assert_eq!(s.index_of("Slope"), Some(9));
        assert_eq!(s.units()[0], Unit::Meters);
        assert!(FeatureSchema::new(s.names().to_vec(), s.units().to_vec()).is_ok());
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(FeatureSchema::unitless(&["a", "a"]).is_err());
        assert!(FeatureSchema::unitless::<&str>(&[]).is_err());
        assert!(FeatureSchema::unitless(&["label"]).is_err());
    }

    #[test]
    fn without_drops_columns() {
        let s = FeatureSchema::default().without(&["S1_RVI", "S1_VHVV"]).unwrap();
        assert_eq!(s.len(), 22);
        assert!(s.index_of("S1_RVI").is_none());
    }
}
