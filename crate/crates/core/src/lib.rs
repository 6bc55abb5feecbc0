//! Zero-shot referring image segmentation post-processing.
//!
//! Given pre-extracted text embeddings, intermediate patch embeddings of a
//! vision-language encoder and a set of candidate masks, the engine
//!
//! 1. fuses sentence-level and noun+context text embeddings ([`textfusion`]),
//! 2. builds a negation-corrected patch-level similarity map ([`spatialmap`]),
//! 3. clusters above-threshold patches into a CoMap ([`clustering`]),
//! 4. reranks the top candidates by cluster overlap and picks a final mask
//!    ([`scoring`]),
//! 5. evaluates the result with IoU-family metrics ([`evaluation`]).
//!
//! [`pipeline`] ties the steps together over a fixture directory
//! ([`tensorio`]), and [`report`] / [`ppm`] emit results.

pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod linalg;
pub mod pipeline;
pub mod ppm;
pub mod report;
pub mod scoring;
pub mod spatialmap;
pub mod tensorio;
pub mod textfusion;

pub use error::{Error, FixtureError, FormatError, ShapeError, TensorIoError, ValidationError};
pub use grid::{FloatGrid, Grid, LabelGrid, Mask};
