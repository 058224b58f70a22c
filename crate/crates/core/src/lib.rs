//! Digitization of fixed-layout historical assessment cards and regression
//! of historical building values from contemporary parcel features.
//!
//! The card side runs `align` (template registration) -> `segment` (cell
//! extraction) -> `ocr` (recognition, normalization, confidence filtering).
//! The tabular side runs `ingest` (cleaning, harmonization, encoding) ->
//! `model` (random forest, cross-validation, cross-county adjustment) ->
//! `eval` (metrics, bias audit, two-sample test, cost model). `synthcards`
//! generates ground-truthed fixtures for both.

pub mod align;
pub mod error;
pub mod eval;
pub mod font;
pub mod geometry;
pub mod imagecore;
pub mod ingest;
pub mod model;
pub mod num;
pub mod ocr;
pub mod pipeline;
pub mod segment;
pub mod synthcards;

pub use error::{Error, Result};
pub use imagecore::GrayImage;
pub use num::Scalar;

pub type PointF = geometry::Point<f64>;
pub type Quad = geometry::Quad<f64>;
pub type Homography = geometry::Homography<f64>;





