//! Scott & Burgan fuel-model codes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CODES: [&str; 46] = [
    "GR1", "GR2", "GR3", "GR4", "GR5", "GR6", "GR7", "GR8", "GR9", //
    "GS1", "GS2", "GS3", "GS4", //
    "SH1", "SH2", "SH3", "SH4", "SH5", "SH6", "SH7", "SH8", "SH9", //
    "TU1", "TU2", "TU3", "TU4", "TU5", //
    "TL1", "TL2", "TL3", "TL4", "TL5", "TL6", "TL7", "TL8", "TL9", //
    "SB1", "SB2", "SB3", "SB4", //
    "NB1", "NB2", "NB3", "NB8", "NB9", //
    "NB",
];

/// Codes observed in the reference test set; the default trainable roster.
const TRAINABLE: [&str; 24] = [
    "GR1", "GR2", "GR4", "GR7", "GS1", "GS2", "SB1", "SB2", "SH1", "SH2", "SH5", "SH7", "TL1",
    "TL2", "TL3", "TL4", "TL5", "TL6", "TL7", "TL8", "TL9", "TU1", "TU4", "TU5",
];

/// A fuel-model label with a stable integer id.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FuelClass(u8);

impl FuelClass {
    /// Collapsed non-burnable code assigned during post-processing.
    pub const NB: FuelClass = FuelClass(45);

    pub fn from_id(id: u8) -> Result<Self> {
        if (id as usize) < CODES.len() {
            Ok(FuelClass(id))
        } else {
            Err(Error::UnknownClass(format!("id {id}")))
        }
    }

    pub fn from_code(code: &str) -> Result<Self> {
        let code = code.trim();
        CODES
            .iter()
            .position(|c| c.eq_ignore_ascii_case(code))
            .map(|i| FuelClass(i as u8))
            .ok_or_else(|| Error::UnknownClass(code.to_string()))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn code(self) -> &'static str {
        CODES[self.0 as usize]
    }

    /// True for NB and the individual NB1..NB9 models.
    pub fn is_nonburnable(self) -> bool {
        self.code().starts_with("NB")
    }

    pub fn is_trainable(self) -> bool {
        TRAINABLE.contains(&self.code())
    }

    pub fn all() -> impl Iterator<Item = FuelClass> {
        (0..CODES.len() as u8).map(FuelClass)
    }

    pub fn trainable() -> Vec<FuelClass> {
        TRAINABLE
            .iter()
            .map(|c| FuelClass::from_code(c).expect("static code"))
            .collect()
    }

    /// Display colour for legends, grouped by fuel family.
    pub fn color_hex(self) -> String {
        let code = self.code();
        let (base, span): ((u8, u8, u8), u8) = match &code[..2] {
            "GR" => ((0xF0, 0xE0, 0x60), 9),
            "GS" => ((0xC8, 0xD2, 0x50), 4),
            "SH" => ((0xC0, 0x80, 0x40), 9),
            "TU" => ((0x50, 0xA0, 0x50), 5),
            "TL" => ((0x20, 0x70, 0x30), 9),
            "SB" => ((0x90, 0x50, 0x70), 4),
            _ => ((0x90, 0x90, 0x90), 1),
        };
        let step: u8 = code[2..].parse::<u8>().unwrap_or(1).saturating_sub(1);
        let shade = |v: u8| v.saturating_sub(step * (60 / span.max(1)));
        format!("#{:02X}{:02X}{:02X}", shade(base.0), shade(base.1), shade(base.2))
    }
}

impl fmt::Debug for FuelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Display for FuelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FuelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FuelClass::from_code(s)
    }
}
