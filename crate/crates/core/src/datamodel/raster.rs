//! Gridded bands and the flat "FVR" raster format.
//!
//! An FVR file is a short text header of `key=value` lines (`width`,
//! `height`, `nodata`, `origin_x`, `origin_y`, `pixel_size_x`,
//! `pixel_size_y`), one blank line, then `width * height` little-endian
//! `f64` values in row-major order. A manifest lists `name<TAB>path` pairs
//! (optionally `<TAB>db` or `<TAB>linear`) plus the geotransform keys.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;
pub const DEFAULT_PIXEL_SIZE: f64 = 30.0;

/// Maps grid indices to projected metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
}

impl Default for GeoTransform {
    fn default() -> Self {
        GeoTransform {
            origin_x: 0.0,
            origin_y: 0.0,
            pixel_size_x: DEFAULT_PIXEL_SIZE,
            pixel_size_y: -DEFAULT_PIXEL_SIZE,
        }
    }
}

impl GeoTransform {
    /// Ground resolution in metres along x.
    pub fn resolution(&self) -> f64 {
        self.pixel_size_x.abs()
    }

    /// Projected coordinate of a pixel centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size_x,
            self.origin_y + (row as f64 + 0.5) * self.pixel_size_y,
        )
    }
}

/// Whether a SAR band stores decibels or linear power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Domain {
    #[default]
    Linear,
    Decibel,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Linear => "linear",
            Domain::Decibel => "db",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterBand {
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// Row-major cell values.
    pub values: Vec<f64>,
    pub nodata: f64,
    pub domain: Domain,
}

impl RasterBand {
    pub fn new(name: impl Into<String>, width: usize, height: usize, values: Vec<f64>, nodata: f64) -> Result<Self> {
        let name = name.into();
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("band `{name}` has zero size")));
        }
        if values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "band `{name}`: {} values for {width}x{height} grid",
                values.len()
            )));
        }
        Ok(RasterBand {
            name,
            width,
            height,
            values,
            nodata,
            domain: Domain::Linear,
        })
    }

    pub fn filled(name: impl Into<String>, width: usize, height: usize, value: f64) -> Self {
        RasterBand::new(name, width, height, vec![value; width * height], DEFAULT_NODATA)
            .expect("non-zero size")
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    /// The value, or `None` for a nodata or NaN cell.
    pub fn valid(&self, i: usize) -> Option<f64> {
        let v = self.values[i];
        if v.is_nan() || v == self.nodata {
            None
        } else {
            Some(v)
        }
    }

    pub fn is_nodata(&self, i: usize) -> bool {
        self.valid(i).is_none()
    }

    pub fn same_shape(&self, other: &RasterBand) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                a: self.name.clone(),
                aw: self.width,
                ah: self.height,
                b: other.name.clone(),
                bw: other.width,
                bh: other.height,
            });
        }
        Ok(())
    }

    /// Mean and population standard deviation over valid cells.
    pub fn stats(&self) -> Option<(f64, f64)> {
        let vals: Vec<f64> = (0..self.values.len()).filter_map(|i| self.valid(i)).collect();
        if vals.is_empty() {
            return None;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }
}

/// Co-registered named bands sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    bands: Vec<RasterBand>,
    pub geotransform: GeoTransform,
}

impl RasterStack {
    pub fn new(geotransform: GeoTransform) -> Self {
        RasterStack {
            bands: Vec::new(),
            geotransform,
        }
    }

    pub fn from_bands(bands: Vec<RasterBand>, geotransform: GeoTransform) -> Result<Self> {
        let mut s = RasterStack::new(geotransform);
        for b in bands {
            s.push(b)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, band: RasterBand) -> Result<()> {
        if let Some(first) = self.bands.first() {
            first.same_shape(&band)?;
        }
        if self.get(&band.name).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate band `{}`", band.name)));
        }
        self.bands.push(band);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RasterBand> {
        self.bands.iter().find(|b| b.name == name)
    }

    pub fn bands(&self) -> &[RasterBand] {
        &self.bands
    }

    pub fn names(&self) -> Vec<&str> {
        self.bands.iter().map(|b| b.name.as_str()).collect()
    }

    pub fn width(&self) -> usize {
        self.bands.first().map_or(0, |b| b.width)
    }

    pub fn height(&self) -> usize {
        self.bands.first().map_or(0, |b| b.height)
    }

    pub fn resolution(&self) -> f64 {
        self.geotransform.resolution()
    }

    /// Values of every band at one cell, or `None` if any band is nodata there.
    pub fn pixel(&self, row: usize, col: usize) -> Option<Vec<f64>> {
        let i = row * self.width() + col;
        self.bands.iter().map(|b| b.valid(i)).collect()
    }

    /// Bands reordered/subset to the given names.
    pub fn select(&self, names: &[String]) -> Result<RasterStack> {
        let bands = names
            .iter()
            .map(|n| {
                self.get(n).cloned().ok_or_else(|| Error::MissingBand {
                    band: n.clone(),
                    feature: n.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RasterStack::from_bands(bands, self.geotransform)
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_band<W: Write>(w: &mut W, band: &RasterBand, gt: &GeoTransform) -> std::io::Result<()> {
    writeln!(w, "width={}", band.width)?;
    writeln!(w, "height={}", band.height)?;
    writeln!(w, "nodata={}", fmt_f64(band.nodata))?;
    writeln!(w, "origin_x={}", fmt_f64(gt.origin_x))?;
    writeln!(w, "origin_y={}", fmt_f64(gt.origin_y))?;
    writeln!(w, "pixel_size_x={}", fmt_f64(gt.pixel_size_x))?;
    writeln!(w, "pixel_size_y={}", fmt_f64(gt.pixel_size_y))?;
    writeln!(w)?;
    for &v in &band.values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn write_fvr(path: &Path, band: &RasterBand, gt: &GeoTransform) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_band(&mut w, band, gt).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_kv(line: &str) -> Result<(&str, &str)> {
    line.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Parse(format!("expected key=value, got `{line}`")))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("bad value `{v}` for `{key}`")))
}

fn geotransform_from(map: &BTreeMap<String, String>) -> Result<GeoTransform> {
    let get = |k: &str| -> Result<f64> {
        map.get(k)
            .ok_or_else(|| Error::Parse(format!("missing header key `{k}`")))
            .and_then(|v| parse_num(k, v))
    };
    Ok(GeoTransform {
        origin_x: get("origin_x")?,
        origin_y: get("origin_y")?,
        pixel_size_x: get("pixel_size_x")?,
        pixel_size_y: get("pixel_size_y")?,
    })
}

pub fn read_band<R: BufRead>(r: &mut R, name: &str) -> Result<(RasterBand, GeoTransform)> {
    let mut header = BTreeMap::new();
    loop {
        let mut line = String::new();
        let n = r
            .read_line(&mut line)
            .map_err(|e| Error::Parse(format!("band `{name}`: {e}")))?;
        if n == 0 {
            return Err(Error::Parse(format!("band `{name}`: header not terminated")));
        }
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            break;
        }
        let (k, v) = parse_kv(line)?;
        header.insert(k.to_string(), v.to_string());
    }
    let dim = |k: &str| -> Result<usize> {
        header
            .get(k)
            .ok_or_else(|| Error::Parse(format!("band `{name}`: missing `{k}`")))
            .and_then(|v| parse_num(k, v))
    };
    let (width, height) = (dim("width")?, dim("height")?);
    let nodata: f64 = header
        .get("nodata")
        .map(|v| parse_num("nodata", v))
        .transpose()?
        .unwrap_or(DEFAULT_NODATA);
    let gt = geotransform_from(&header)?;
    let mut values = vec![0.0; width * height];
    r.read_f64_into::<LittleEndian>(&mut values)
        .map_err(|e| Error::Parse(format!("band `{name}`: truncated data ({e})")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::Parse(e.to_string()))? != 0 {
        return Err(Error::Parse(format!("band `{name}`: trailing bytes after grid")));
    }
    Ok((RasterBand::new(name, width, height, values, nodata)?, gt))
}

pub fn read_fvr(path: &Path, name: &str) -> Result<(RasterBand, GeoTransform)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_band(&mut BufReader::new(file), name)
}

/// Loads every band listed in a manifest; paths resolve relative to it.
pub fn load_raster_stack(manifest_path: &Path) -> Result<RasterStack> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut keys = BTreeMap::new();
    let mut entries: Vec<(String, PathBuf, Domain)> = Vec::new();
    for line in text.lines() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        if line.contains('\t') {
            let parts: Vec<&str> = line.split('\t').collect();
            let domain = match parts.get(2).map(|s| s.trim()) {
                None | Some("") | Some("linear") => Domain::Linear,
                Some("db") => Domain::Decibel,
                Some(other) => return Err(Error::Parse(format!("unknown band domain `{other}`"))),
            };
            entries.push((parts[0].trim().to_string(), base.join(parts[1].trim()), domain));
        } else {
            let (k, v) = parse_kv(line)?;
            keys.insert(k.to_string(), v.to_string());
        }
    }
    if entries.is_empty() {
        return Err(Error::Parse(format!("manifest {} lists no bands", manifest_path.display())));
    }
    let gt = geotransform_from(&keys)?;
    let mut stack = RasterStack::new(gt);
    for (name, path, domain) in entries {
        let (band, _) = read_fvr(&path, &name)?;
        stack.push(band.with_domain(domain))?;
    }
    Ok(stack)
}

/// Writes each band to `<dir>/<name>.fvr` and a manifest at `<dir>/manifest.txt`.
pub fn write_raster_stack(dir: &Path, stack: &RasterStack) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gt = &stack.geotransform;
    let mut manifest = format!(
        "origin_x={}\norigin_y={}\npixel_size_x={}\npixel_size_y={}\n",
        fmt_f64(gt.origin_x),
        fmt_f64(gt.origin_y),
        fmt_f64(gt.pixel_size_x),
        fmt_f64(gt.pixel_size_y)
    );
    for b in stack.bands() {
        let file = format!("{}.fvr", b.name);
        write_fvr(&dir.join(&file), b, gt)?;
        manifest.push_str(&format!("{}\t{}\t{}\n", b.name, file, b.domain.as_str()));
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn band(name: &str, w: usize, h: usize) -> RasterBand {
        RasterBand::new(name, w, h, (0..w * h).map(|i| i as f64).collect(), DEFAULT_NODATA).unwrap()
    }

    #[test]
    fn manifest_with_two_bands() {
        let dir = tempfile::tempdir().unwrap();
        let stack = RasterStack::from_bands(vec![band("a", 4, 4), band("b", 4, 4)], GeoTransform::default()).unwrap();
        let path = write_raster_stack(dir.path(), &stack).unwrap();
        let back = load_raster_stack(&path).unwrap();
        assert_eq!(back.bands().len(), 2);
        assert_eq!((back.width(), back.height()), (4, 4));
        assert_eq!(back.resolution(), 30.0);
        assert_eq!(back, stack);
    }

    #[test]
    fn manifest_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let gt = GeoTransform::default();
        write_fvr(&dir.path().join("a.fvr"), &band("a", 4, 4), &gt).unwrap();
        write_fvr(&dir.path().join("b.fvr"), &band("b", 5, 4), &gt).unwrap();
        let manifest = dir.path().join("m.txt");
        std::fs::write(
            &manifest,
            "origin_x=0\norigin_y=0\npixel_size_x=30\npixel_size_y=-30\na\ta.fvr\nb\tb.fvr\n",
        )
        .unwrap();
        match load_raster_stack(&manifest) {
            Err(Error::DimensionMismatch { a, b, .. }) => assert_eq!((a.as_str(), b.as_str()), ("a", "b")),
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_band_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.txt");
        std::fs::write(&manifest, "origin_x=0\norigin_y=0\npixel_size_x=30\npixel_size_y=-30\na\tnope.fvr\n").unwrap();
        assert!(matches!(load_raster_stack(&manifest), Err(Error::Io { .. })));
    }

    #[test]
    fn fvr_header_layout() {
        let mut buf = Vec::new();
        write_band(&mut buf, &band("a", 2, 1), &GeoTransform::default()).unwrap();
        let header_end = buf.windows(2).position(|w| w == b"\n\n").unwrap() + 2;
        let header = std::str::from_utf8(&buf[..header_end]).unwrap();
        assert_eq!(
            header,
            "width=2\nheight=1\nnodata=-9999.0\norigin_x=0.0\norigin_y=0.0\npixel_size_x=30.0\npixel_size_y=-30.0\n\n"
        );
        assert_eq!(buf.len() - header_end, 16);
        assert_eq!(&buf[header_end + 8..], &1.0f64.to_le_bytes());
    }

    #[test]
    fn nodata_excluded_from_stats() {
        let mut b = band("a", 2, 2);
        b.values[3] = DEFAULT_NODATA;
        let (mean, _) = b.stats().unwrap();
        assert_eq!(mean, 1.0);
    }

    proptest! {
        #[test]
        fn fvr_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 1..64), nodata_mask in proptest::collection::vec(any::<bool>(), 64)) {
            let w = values.len();
            let mut vals = values.clone();
            for (v, &m) in vals.iter_mut().zip(&nodata_mask) {
                if m { *v = DEFAULT_NODATA; }
            }
            let b = RasterBand::new("x", w, 1, vals, DEFAULT_NODATA).unwrap();
            let mut buf = Vec::new();
            write_band(&mut buf, &b, &GeoTransform::default()).unwrap();
            let (back, gt) = read_band(&mut buf.as_slice(), "x").unwrap();
            prop_assert_eq!(gt, GeoTransform::default());
            for i in 0..w {
                prop_assert_eq!(back.values[i].to_bits(), b.values[i].to_bits());
                prop_assert_eq!(back.is_nodata(i), b.is_nodata(i));
            }
        }
    }
}
