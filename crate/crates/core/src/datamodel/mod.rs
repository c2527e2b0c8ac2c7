//! Shared domain types: fuel classes, feature schemas, sample tables and rasters.

mod fuel_class;
mod raster;
mod schema;
mod split;
mod table;

pub use fuel_class::FuelClass;
pub use raster::{
    load_raster_stack, read_band, read_fvr, write_band, write_fvr, write_raster_stack, Domain, GeoTransform,
    RasterBand, RasterStack, DEFAULT_NODATA, DEFAULT_PIXEL_SIZE,
};
pub use schema::{FeatureSchema, Unit, DEFAULT_FEATURES};
pub use split::{stratified_split, Split};
pub use table::{
    class_histogram, load_sample_table, parse_sample_csv, write_sample_csv, write_sample_table, ClassHistogram,
    IngestReport, Provenance, Sample, SampleTable,
};
