//! Region and physical-grid arithmetic shared by every stage of the engine.

mod field;
mod geo;
mod region;

pub use field::{
    compute_output_size, propagate_geo, requested_input_region, Axis, AxisField, Extent, FieldSpec, InputField,
    ScaleFactor,
};
pub use geo::{centered_window_start, map_region_between_grids, GeoInfo, ALIGNMENT_TOLERANCE};
pub use region::ImageRegion;
