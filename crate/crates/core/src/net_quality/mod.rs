//! Net-quality quantification of a masked melon.
//!
//! The fruit region is binarized into skin and net on luma, skin pixels are
//! grouped into connected islands, and the island areas are summarized:
//! net density is the mean island area (total skin area over island count)
//! and net uniformity is the population standard deviation of the areas.
//! Lower is better for both.

mod islands;
mod otsu;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use islands::{component_areas, label_components, Connectivity};
pub use otsu::{masked_histogram, otsu_threshold};

use crate::error::{Error, Result};
use crate::image_core::{check_mask_shape, list_images, load_image, load_mask, to_luma, BinaryMask, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMethod {
    #[default]
    Otsu,
    Fixed(u8),
}

/// Which side of the threshold is skin. A pixel with luma `v` is skin when
/// `v > t` under `Light` and when `v <= t` under `Dark`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Light,
    Dark,
}

impl Polarity {
    pub fn is_skin(self, value: u8, threshold: u8) -> bool {
        match self {
            Polarity::Light => value > threshold,
            Polarity::Dark => value <= threshold,
        }
    }
}

impl FromStr for ThresholdMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("otsu") {
            return Ok(Self::Otsu);
        }
        s.parse::<u8>()
            .map(Self::Fixed)
            .map_err(|_| format!("expected `otsu` or a level in 0..=255, got {s:?}"))
    }
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Otsu => f.write_str("otsu"),
            Self::Fixed(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "light" => Ok(Self::Light),
            "dark" => Ok(Self::Dark),
            _ => Err(format!("expected `light` or `dark`, got {s:?}")),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Light => "light",
            Self::Dark => "dark",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinarizeParams {
    pub method: ThresholdMethod,
    pub polarity: Polarity,
    pub min_island_area: usize,
    pub connectivity: Connectivity,
}

impl Default for BinarizeParams {
    fn default() -> Self {
        Self {
            method: ThresholdMethod::Otsu,
            polarity: Polarity::Light,
            min_island_area: 4,
            connectivity: Connectivity::Eight,
        }
    }
}

impl BinarizeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_island_area == 0 {
            return Err(Error::InvalidParameter("min_island_area must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandReport {
    /// Skin island areas in pixels, largest first.
    pub island_areas: Vec<usize>,
    pub island_count: usize,
    pub total_skin_area: usize,
    pub net_density: f64,
    pub net_uniformity: f64,
    pub roi_area: usize,
    /// Threshold applied to luma; skin side given by the polarity.
    pub threshold: u8,
    /// Set when no island survived, in which case density and uniformity are 0.
    pub degenerate: bool,
}

/// Mean and population standard deviation of island areas, `(0, 0)` for none.
///
/// Both come from exact integer sums so equal areas give a uniformity of
/// exactly zero.
pub fn island_statistics(areas: &[usize]) -> (f64, f64) {
    if areas.is_empty() {
        return (0.0, 0.0);
    }
    let n = areas.len() as u128;
    let sum: u128 = areas.iter().map(|&a| a as u128).sum();
    let sum_sq: u128 = areas.iter().map(|&a| (a as u128) * (a as u128)).sum();
    let density = sum as f64 / n as f64;
    let spread = n * sum_sq - sum * sum;
    let uniformity = (spread as f64).sqrt() / n as f64;
    (density, uniformity)
}

fn resolve_threshold(luma: &Image, mask: &BinaryMask, method: ThresholdMethod) -> Result<u8> {
    check_mask_shape(luma, mask)?;
    if mask.count_true() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(match method {
        ThresholdMethod::Fixed(t) => t,
        ThresholdMethod::Otsu => {
            let hist = masked_histogram(luma.data(), mask.bits());
            // a single-valued ROI has no split; its one value becomes the threshold
            otsu_threshold(&hist).unwrap_or_else(|| {
                hist.iter().position(|&c| c > 0).unwrap_or(0) as u8
            })
        }
    })
}

fn threshold_skin(luma: &Image, mask: &BinaryMask, threshold: u8, polarity: Polarity) -> BinaryMask {
    let bits = luma
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &inside)| inside && polarity.is_skin(v, threshold))
        .collect();
    BinaryMask::new(luma.width(), luma.height(), bits).expect("shape checked")
}

/// Skin map of the masked fruit; pixels outside the mask are never skin.
pub fn binarize_skin(img: &Image, mask: &BinaryMask, params: &BinarizeParams) -> Result<BinaryMask> {
    let luma = to_luma(img);
    let t = resolve_threshold(&luma, mask, params.method)?;
    Ok(threshold_skin(&luma, mask, t, params.polarity))
}

/// Island areas of a skin map under the configured connectivity and noise floor.
pub fn label_islands(skin: &BinaryMask, params: &BinarizeParams) -> Vec<usize> {
    component_areas(skin, params.connectivity, params.min_island_area.max(1))
}

pub fn report_from_areas(island_areas: Vec<usize>, roi_area: usize, threshold: u8) -> IslandReport {
    let (net_density, net_uniformity) = island_statistics(&island_areas);
    IslandReport {
        island_count: island_areas.len(),
        total_skin_area: island_areas.iter().sum(),
        degenerate: island_areas.is_empty(),
        island_areas,
        net_density,
        net_uniformity,
        roi_area,
        threshold,
    }
}

pub fn assess_net_quality(img: &Image, mask: &BinaryMask, params: &BinarizeParams) -> Result<IslandReport> {
    params.validate()?;
    let luma = to_luma(img);
    let threshold = resolve_threshold(&luma, mask, params.method)?;
    let skin = threshold_skin(&luma, mask, threshold, params.polarity);
    Ok(report_from_areas(label_islands(&skin, params), mask.count_true(), threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub reports: Vec<(String, IslandReport)>,
    pub failures: Vec<ItemFailure>,
}

/// One image with its same-stem mask, if one exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetItem {
    pub image_id: String,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

/// Pairs every image in `image_dir` with the same-stem mask in `mask_dir`,
/// ordered by image id.
pub fn pair_with_masks(image_dir: &Path, mask_dir: &Path) -> Result<Vec<NetItem>> {
    let masks: BTreeMap<String, PathBuf> = list_images(mask_dir)?.into_iter().collect();
    Ok(list_images(image_dir)?
        .into_iter()
        .map(|(image_id, image)| NetItem {
            mask: masks.get(&image_id).cloned(),
            image_id,
            image,
        })
        .collect())
}

fn assess_item(item: &NetItem, params: &BinarizeParams) -> Result<IslandReport> {
    let mask_path = item.mask.as_ref().ok_or_else(|| {
        Error::InvalidParameter(format!("no mask with stem {:?}", item.image_id))
    })?;
    let img = load_image(&item.image)?;
    let mask = load_mask(mask_path)?;
    assess_net_quality(&img, &mask, params)
}

/// Assesses items on the current rayon pool; the outcome keeps input order
/// regardless of scheduling.
pub fn assess_items(items: &[NetItem], params: &BinarizeParams) -> Result<BatchOutcome> {
    params.validate()?;
    let results: Vec<Result<IslandReport>> = items.par_iter().map(|item| assess_item(item, params)).collect();
    let mut outcome = BatchOutcome::default();
    for (item, result) in items.iter().zip(results) {
        match result {
            Ok(report) => outcome.reports.push((item.image_id.clone(), report)),
            Err(e) => outcome.failures.push(ItemFailure {
                image_id: item.image_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Assesses every image in `image_dir` against the same-stem mask in
/// `mask_dir`, ordered by image id.
pub fn batch_assess(image_dir: impl AsRef<Path>, mask_dir: impl AsRef<Path>, params: &BinarizeParams) -> Result<BatchOutcome> {
    params.validate()?;
    assess_items(&pair_with_masks(image_dir.as_ref(), mask_dir.as_ref())?, params)
}
