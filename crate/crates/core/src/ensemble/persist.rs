//! `FVEN` model container: 4-byte magic, little-endian u32 format version,
//! then a bincode body holding the schema, class list and per-family model
//! payloads.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::bagging::BaggedModel;
use super::learner::{decode, decode_classifier, encode, LearnerRegistry, LearnerSpec};
use super::matrix::Matrix;
use super::stack::StackEnsemble;
use crate::datamodel::{FeatureSchema, FuelClass, Unit};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FVEN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredModel {
    kind: String,
    bytes: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct StoredBagged {
    spec: LearnerSpec,
    folds: Vec<usize>,
    models: Vec<StoredModel>,
    oof: Matrix,
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct StoredEnsemble {
    names: Vec<String>,
    units: Vec<String>,
    classes: Vec<u8>,
    l1: Vec<StoredBagged>,
    l2: Vec<StoredBagged>,
    l3_weights: Vec<f64>,
}

fn store_bagged(m: &BaggedModel) -> Result<StoredBagged> {
    Ok(StoredBagged {
        spec: m.spec.clone(),
        folds: m.folds.clone(),
        models: m
            .fold_models
            .iter()
            .map(|c| {
                Ok(StoredModel {
                    kind: c.kind().to_string(),
                    bytes: c.encode()?,
                })
            })
            .collect::<Result<_>>()?,
        oof: m.oof.clone(),
        warnings: m.warnings.clone(),
    })
}

fn load_bagged(registry: &LearnerRegistry, s: StoredBagged) -> Result<BaggedModel> {
    Ok(BaggedModel {
        spec: s.spec,
        folds: s.folds,
        fold_models: s
            .models
            .iter()
            .map(|m| decode_classifier(registry, &m.kind, &m.bytes))
            .collect::<Result<_>>()?,
        oof: s.oof,
        warnings: s.warnings,
    })
}

pub fn write_ensemble<W: Write>(w: &mut W, ens: &StackEnsemble) -> Result<()> {
    let stored = StoredEnsemble {
        names: ens.schema.names().to_vec(),
        units: ens.schema.units().iter().map(|u| u.tag().to_string()).collect(),
        classes: ens.classes.iter().map(|c| c.id()).collect(),
        l1: ens.l1.iter().map(store_bagged).collect::<Result<_>>()?,
        l2: ens.l2.iter().map(store_bagged).collect::<Result<_>>()?,
        l3_weights: ens.l3_weights.clone(),
    };
    let body = encode(&stored)?;
    let io = |e: std::io::Error| Error::Format(format!("write: {e}"));
    w.write_all(MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
    w.write_all(&body).map_err(io)
}

pub fn read_ensemble<R: Read>(r: &mut R, registry: &LearnerRegistry) -> Result<StackEnsemble> {
    let io = |e: std::io::Error| Error::Format(format!("read: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an FVEN model file".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported model format version {version}")));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(io)?;
    let s: StoredEnsemble = decode(&body)?;
    let units = s.units.iter().map(|t| Unit::from_tag(t)).collect::<Result<_>>()?;
    Ok(StackEnsemble {
        schema: FeatureSchema::new(s.names, units)?,
        classes: s.classes.into_iter().map(FuelClass::from_id).collect::<Result<_>>()?,
        l1: s.l1.into_iter().map(|b| load_bagged(registry, b)).collect::<Result<_>>()?,
        l2: s.l2.into_iter().map(|b| load_bagged(registry, b)).collect::<Result<_>>()?,
        l3_weights: s.l3_weights,
    })
}

pub fn save_ensemble(path: &Path, ens: &StackEnsemble) -> Result<()> {
    let mut buf = Vec::new();
    write_ensemble(&mut buf, ens)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_ensemble(path: &Path, registry: &LearnerRegistry) -> Result<StackEnsemble> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_ensemble(&mut bytes.as_slice(), registry)
}
