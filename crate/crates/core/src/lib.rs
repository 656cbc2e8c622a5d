//! Active-learning pixel selection for semantic segmentation.
//!
//! Pixel uncertainty from a multi-head segmentation model is aggregated over
//! superpixels and feature clusters; the labeling budget is then spread across
//! clusters in proportion to their uncertainty.

pub mod error;
pub mod grid;
pub mod round;
pub mod selection;
pub mod session;
pub mod superpixels;
pub mod synthetic;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::{Grid, Planes};
pub use selection::SelectionMode;
pub use session::{load_session, LabelRecord, LabelSource, Session, SessionConfig, SessionManifest};
pub use tensor::{read_tensor, write_tensor, DType, Tensor};
pub use uncertainty::{HeadOutputs, PixelUncertaintyMap, UncertaintyVariant};
