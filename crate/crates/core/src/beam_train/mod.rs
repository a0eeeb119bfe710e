//! Facet-plane channel fields, finite-NA imaging onto the ion plane, and per-target
//! crosstalk.

mod compose;
mod crosstalk;
mod imaging;

pub use compose::{compose_facet_field, ChannelLayout, Combination, PlaneGrid, OVERFLOW_TOLERANCE};
pub use crosstalk::{crosstalk_matrix, crosstalk_row, default_integration_radius, local_peaks, BeamTrainSummary, Peak};
pub use imaging::{image_field, max_sampling_step, ImagingModel, ImagingSystemSpec};
