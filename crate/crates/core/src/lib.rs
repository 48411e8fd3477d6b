//! Pseudo-colored ECG image toolkit.
//!
//! Renders single-lead ECG records into single-beat and rhythm images whose
//! QT span is filled with a color gradient keyed to a QT-vs-heart-rate risk
//! boundary, trains prototypical few-shot classifiers on those images, and
//! explains individual predictions with a perturbation surrogate.
//!
//! The pipeline is split by stage:
//!
//! * [`signal`]: records, R-peak detection and beat anchoring.
//! * [`nomogram`]: the risk boundary, labeling.
//! * [`render`]: rasterization, color scale, PNG output.
//! * [`synth`]: synthetic records with planted QT and labels.
//! * [`dataset`]: manifests, image corpora, cross-validation folds.
//! * [`fewshot`]: embedding network, episodes, training and evaluation.
//! * [`explain`]: grid segmentation and the weighted ridge surrogate.
//! * [`report`]: metrics, aggregation and result tables.
//! * [`experiment`]: the cross-validated representation × fold matrix.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod fewshot;
pub mod nomogram;
pub mod render;
pub mod report;
pub mod signal;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
pub use nomogram::{NomogramBoundary, RiskLabel};
pub use render::{ColorScale, EcgImage, ImageKind, RenderConfig};
pub use signal::{BeatAnnotation, EcgRecord};
