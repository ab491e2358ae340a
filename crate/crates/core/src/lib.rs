//! Evaluation toolkit for real and generated fruit imagery.
//!
//! The crate bundles four pipelines that share one image model:
//!
//! - [`metrics`]: full-reference quality (MSE, PSNR, windowed SSIM).
//! - [`detect_eval`]: bounding-box IoU and ground-truth/prediction matching
//!   over YOLO-format annotation files.
//! - [`net_quality`]: skin/net binarization of a masked melon and
//!   connected-component island statistics (net density and uniformity).
//! - [`stats`]: one-way ANOVA, Tukey HSD and compact letter displays.
//!
//! [`synthgen`] produces net-pattern fixtures with exact ground truth and
//! [`report`] serializes results. The `melonqa` binary drives everything
//! through [`cli`].

pub mod cli;
pub mod detect_eval;
pub mod error;
pub mod image_core;
pub mod metrics;
pub mod net_quality;
pub mod report;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
pub use image_core::{BinaryMask, Image};
