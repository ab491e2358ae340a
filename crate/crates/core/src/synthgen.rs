//! Procedural net-pattern fixtures with exact island ground truth.
//!
//! Each fixture is a two-level luma image (skin cells separated by net
//! cracks), a fruit mask and the island statistics measured on the emitted
//! raster itself. Randomness comes from [`SplitMix64`], so a spec and seed
//! reproduce the same bytes in any implementation of the generator.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_core::{save_mask, save_png, BinaryMask, Image};
use crate::net_quality::{island_statistics, Connectivity, Polarity};

/// SplitMix64 (Steele, Lea and Flood). `next_u64` advances the state by
/// `0x9E3779B97F4A7C15` and mixes it with the two xor-shift-multiply rounds
/// `(z ^ z >> 30) * 0xBF58476D1CE4E5B9`, `(z ^ z >> 27) * 0x94D049BB133111EB`
/// followed by `z ^ z >> 31`. Floats take the top 53 bits.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn next_in(&mut self, lo: i64, hi: i64) -> i64 {
        let span = (hi - lo + 1) as f64;
        lo + ((self.next_f64() * span) as i64).min(hi - lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Grid,
    JitteredGrid,
    Voronoi,
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "grid" => Ok(Self::Grid),
            "jittered_grid" => Ok(Self::JitteredGrid),
            "voronoi" => Ok(Self::Voronoi),
            _ => Err(format!("expected grid, jittered_grid or voronoi, got {s:?}")),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Grid => "grid",
            Self::JitteredGrid => "jittered_grid",
            Self::Voronoi => "voronoi",
        })
    }
}

fn default_connectivity() -> Connectivity {
    Connectivity::Eight
}

fn default_min_island_area() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub layout: Layout,
    pub cell_size: usize,
    pub crack_width: usize,
    pub skin_level: u8,
    pub net_level: u8,
    /// Circular fruit mask radius in pixels; `None` masks the full frame.
    #[serde(default)]
    pub fruit_radius: Option<f64>,
    /// Voronoi site count; defaults to one site per `cell_size^2` pixels.
    #[serde(default)]
    pub site_count: Option<usize>,
    /// Connectivity used when measuring the ground truth.
    #[serde(default = "default_connectivity")]
    pub connectivity: Connectivity,
    /// Noise floor used when measuring the ground truth.
    #[serde(default = "default_min_island_area")]
    pub min_island_area: usize,
}

impl SynthSpec {
    pub fn grid(width: usize, height: usize, cell_size: usize, crack_width: usize) -> Self {
        Self {
            width,
            height,
            seed: 0,
            layout: Layout::Grid,
            cell_size,
            crack_width,
            skin_level: 200,
            net_level: 60,
            fruit_radius: None,
            site_count: None,
            connectivity: Connectivity::Eight,
            min_island_area: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParameter(m));
        if self.width == 0 || self.height == 0 {
            return fail(format!("fixture size {}x{} has a zero dimension", self.width, self.height));
        }
        if self.crack_width < 1 {
            return fail("crack_width must be >= 1".into());
        }
        if self.cell_size <= self.crack_width {
            return fail(format!(
                "cell_size ({}) must exceed crack_width ({})",
                self.cell_size, self.crack_width
            ));
        }
        if self.skin_level == self.net_level {
            return fail("skin_level and net_level must differ".into());
        }
        if let Some(r) = self.fruit_radius {
            if !(r > 0.0 && r.is_finite()) {
                return fail(format!("fruit_radius must be positive, got {r}"));
            }
        }
        if self.site_count == Some(0) {
            return fail("site_count must be >= 1".into());
        }
        if self.min_island_area == 0 {
            return fail("min_island_area must be >= 1".into());
        }
        Ok(())
    }

    /// Luma threshold halfway between the two levels.
    pub fn midpoint_threshold(&self) -> u8 {
        ((u16::from(self.skin_level) + u16::from(self.net_level)) / 2) as u8
    }

    /// Side of the midpoint the skin level falls on.
    pub fn polarity(&self) -> Polarity {
        if self.skin_level > self.net_level {
            Polarity::Light
        } else {
            Polarity::Dark
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub island_areas: Vec<usize>,
    pub island_count: usize,
    pub total_skin_area: usize,
    pub expected_density: f64,
    pub expected_uniformity: f64,
    pub roi_area: usize,
    pub degenerate: bool,
    pub threshold: u8,
    pub polarity: Polarity,
    pub connectivity: Connectivity,
    pub min_island_area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFixture {
    pub image: Image,
    pub mask: BinaryMask,
    pub truth: SynthGroundTruth,
}

/// Crack boundaries along one axis: segment `s` spans `[b[s], b[s + 1])` and
/// its last `crack` pixels are net.
fn axis_boundaries(len: usize, cell: usize, crack: usize, jitter: bool, rng: &mut SplitMix64) -> Vec<usize> {
    let amplitude = if jitter { ((cell - crack) / 3) as i64 } else { 0 };
    let mut bounds = vec![0usize];
    let mut i = 1;
    loop {
        let nominal = (i * cell) as i64;
        let offset = if amplitude > 0 { rng.next_in(-amplitude, amplitude) } else { 0 };
        let b = (nominal + offset) as usize;
        bounds.push(b);
        if b >= len {
            break;
        }
        i += 1;
    }
    bounds
}

fn is_crack_on_axis(bounds: &[usize], crack: usize, v: usize) -> bool {
    // first boundary strictly greater than v closes v's segment
    let end = bounds[bounds.partition_point(|&b| b <= v)];
    v + crack >= end
}

fn grid_skin(spec: &SynthSpec, rng: &mut SplitMix64) -> Vec<bool> {
    let jitter = spec.layout == Layout::JitteredGrid;
    let xs = axis_boundaries(spec.width, spec.cell_size, spec.crack_width, jitter, rng);
    let ys = axis_boundaries(spec.height, spec.cell_size, spec.crack_width, jitter, rng);
    let col_crack: Vec<bool> = (0..spec.width).map(|x| is_crack_on_axis(&xs, spec.crack_width, x)).collect();
    let mut skin = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        let row_crack = is_crack_on_axis(&ys, spec.crack_width, y);
        skin.extend(col_crack.iter().map(|&c| !c && !row_crack));
    }
    skin
}

fn voronoi_skin(spec: &SynthSpec, rng: &mut SplitMix64) -> Vec<bool> {
    let area = (spec.width * spec.height) as f64;
    let cell_area = (spec.cell_size * spec.cell_size) as f64;
    let sites_n = spec
        .site_count
        .unwrap_or_else(|| ((area / cell_area).round() as usize).max(1));
    let sites: Vec<(f64, f64)> = (0..sites_n)
        .map(|_| {
            let x = rng.next_f64() * spec.width as f64;
            let y = rng.next_f64() * spec.height as f64;
            (x, y)
        })
        .collect();
    let crack = spec.crack_width as f64;
    let mut skin = Vec::with_capacity(spec.width * spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (mut d1, mut d2) = (f64::INFINITY, f64::INFINITY);
            for &(sx, sy) in &sites {
                let d = ((px - sx).powi(2) + (py - sy).powi(2)).sqrt();
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                } else if d < d2 {
                    d2 = d;
                }
            }
            // pixels within the band around a bisector are net
            skin.push(d2 - d1 >= crack);
        }
    }
    skin
}

fn fruit_mask(spec: &SynthSpec) -> BinaryMask {
    match spec.fruit_radius {
        None => BinaryMask::filled(spec.width, spec.height, true),
        Some(r) => {
            let cx = (spec.width as f64 - 1.0) / 2.0;
            let cy = (spec.height as f64 - 1.0) / 2.0;
            BinaryMask::from_fn(spec.width, spec.height, |x, y| {
                (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r
            })
        }
    }
}

/// Breadth-first flood fill over `fg`; areas of regions at least `min_area`
/// large, largest first.
fn flood_fill_areas(fg: &[bool], width: usize, height: usize, connectivity: Connectivity, min_area: usize) -> Vec<usize> {
    let mut seen = vec![false; fg.len()];
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    let diagonal = connectivity == Connectivity::Eight;
    for start in 0..fg.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut area = 0;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % width) as i64, (i / width) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dx == 0 && dy == 0) || (!diagonal && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if fg[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if area >= min_area {
            areas.push(area);
        }
    }
    areas.sort_unstable_by(|a, b| b.cmp(a));
    areas
}

pub fn generate(spec: &SynthSpec) -> Result<SynthFixture> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let skin = match spec.layout {
        Layout::Grid | Layout::JitteredGrid => grid_skin(spec, &mut rng),
        Layout::Voronoi => voronoi_skin(spec, &mut rng),
    };
    let mask = fruit_mask(spec);
    let data: Vec<u8> = skin
        .iter()
        .zip(mask.bits())
        .map(|(&s, &inside)| match (inside, s) {
            (false, _) => 0,
            (true, true) => spec.skin_level,
            (true, false) => spec.net_level,
        })
        .collect();
    let image = Image::new(spec.width, spec.height, 1, data)?;

    // measure the emitted raster, not the layout
    let threshold = spec.midpoint_threshold();
    let polarity = spec.polarity();
    let measured: Vec<bool> = image
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &inside)| inside && polarity.is_skin(v, threshold))
        .collect();
    let island_areas = flood_fill_areas(&measured, spec.width, spec.height, spec.connectivity, spec.min_island_area);
    let (expected_density, expected_uniformity) = island_statistics(&island_areas);
    let truth = SynthGroundTruth {
        island_count: island_areas.len(),
        total_skin_area: island_areas.iter().sum(),
        degenerate: island_areas.is_empty(),
        island_areas,
        expected_density,
        expected_uniformity,
        roi_area: mask.count_true(),
        threshold,
        polarity,
        connectivity: spec.connectivity,
        min_island_area: spec.min_island_area,
    };
    Ok(SynthFixture { image, mask, truth })
}

/// Writes the image and mask as PNG and the ground truth as pretty JSON.
pub fn save_fixture(fixture: &SynthFixture, image_path: &Path, mask_path: &Path, truth_path: &Path) -> Result<()> {
    save_png(&fixture.image, image_path)?;
    save_mask(&fixture.mask, mask_path)?;
    let json = serde_json::to_string_pretty(&fixture.truth).map_err(|e| Error::Serialization(e.to_string()))?;
    std::fs::write(truth_path, json + "\n").map_err(|e| Error::io(truth_path, e))
}

/// Adds seeded uniform noise `round((2u - 1) * amplitude)` to every sample,
/// clamped to the 8-bit range. For a fixed seed the per-sample noise
/// magnitude never shrinks as the amplitude grows.
pub fn degrade(img: &Image, noise_amplitude: f64, seed: u64) -> Result<Image> {
    if !(noise_amplitude >= 0.0 && noise_amplitude.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise amplitude must be non-negative, got {noise_amplitude}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let noise = ((2.0 * rng.next_f64() - 1.0) * noise_amplitude).round();
            (f64::from(v) + noise).clamp(0.0, 255.0) as u8
        })
        .collect();
    Image::new(img.width(), img.height(), img.channels(), data)
}
