//! Full-reference quality metrics comparing a generated image with its original.
//!
//! MSE and PSNR run over every channel of the raw samples. SSIM runs on luma
//! with uniform square windows slid at stride one over the interior of the
//! image and averaged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_core::{load_image, resize_bilinear, to_luma, Image, MAX_SAMPLE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub mse: f64,
    /// `f64::INFINITY` when the images are identical.
    #[serde(with = "crate::report::float")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl SsimParams {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window
            )));
        }
        let positive = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("dynamic_range", self.dynamic_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "SSIM {name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "SSIM exponent {name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn c3(&self) -> f64 {
        self.c2() / 2.0
    }
}

/// Whether a size mismatch between a pair is an error or is resolved by
/// resampling the generated image onto the original's grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizePolicy {
    #[default]
    Off,
    Bilinear,
}

fn check_same_shape(original: &Image, generated: &Image) -> Result<()> {
    if !original.same_shape(generated) {
        return Err(Error::DimensionMismatch(format!(
            "original is {}x{}x{}, generated is {}x{}x{}",
            original.width(),
            original.height(),
            original.channels(),
            generated.width(),
            generated.height(),
            generated.channels()
        )));
    }
    Ok(())
}

pub fn mse(original: &Image, generated: &Image) -> Result<f64> {
    check_same_shape(original, generated)?;
    let sum: u64 = original
        .data()
        .iter()
        .zip(generated.data())
        .map(|(&o, &a)| {
            let d = i64::from(o) - i64::from(a);
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / original.data().len() as f64)
}

/// PSNR in decibels for a given MSE; infinite when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = f64::from(MAX_SAMPLE);
    10.0 * (peak * peak / mse).log10()
}

pub fn psnr(original: &Image, generated: &Image) -> Result<f64> {
    mse(original, generated).map(psnr_from_mse)
}

/// Summed-area table with a zero row and column prepended.
struct Integral {
    stride: usize,
    table: Vec<i64>,
}

impl Integral {
    fn build(width: usize, height: usize, value: impl Fn(usize) -> i64) -> Self {
        let stride = width + 1;
        let mut table = vec![0i64; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0i64;
            for x in 0..width {
                row += value(y * width + x);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Self { stride, table }
    }

    fn window_sum(&self, x: usize, y: usize, size: usize) -> i64 {
        let s = self.stride;
        let (x1, y1) = (x + size, y + size);
        self.table[y1 * s + x1] - self.table[y * s + x1] - self.table[y1 * s + x] + self.table[y * s + x]
    }
}

/// `v^e`, keeping the sign of `v` for non-integer exponents so a negative
/// structure term never yields NaN.
fn signed_pow(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else {
        v.signum() * v.abs().powf(e)
    }
}

/// Per-window SSIM from the window moments.
///
/// `mean_*` are window means, `var_*` population variances, `cov` the
/// population covariance.
pub(crate) fn ssim_window_value(
    params: &SsimParams,
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
) -> f64 {
    let (c1, c2, c3) = (params.c1(), params.c2(), params.c3());
    let (sd_x, sd_y) = (var_x.max(0.0).sqrt(), var_y.max(0.0).sqrt());
    let luminance = (2.0 * mean_x * mean_y + c1) / (mean_x * mean_x + mean_y * mean_y + c1);
    let contrast = (2.0 * sd_x * sd_y + c2) / (var_x + var_y + c2);
    let structure = (cov + c3) / (sd_x * sd_y + c3);
    signed_pow(luminance, params.alpha)
        * signed_pow(contrast, params.beta)
        * signed_pow(structure, params.gamma)
}

/// Mean SSIM over all fully-interior windows of the luma planes.
pub fn ssim(original: &Image, generated: &Image, params: &SsimParams) -> Result<f64> {
    params.validate()?;
    if original.width() != generated.width() || original.height() != generated.height() {
        return Err(Error::DimensionMismatch(format!(
            "original is {}x{}, generated is {}x{}",
            original.width(),
            original.height(),
            generated.width(),
            generated.height()
        )));
    }
    let (w, h, win) = (original.width(), original.height(), params.window);
    if w.min(h) < win {
        return Err(Error::InvalidParameter(format!(
            "image {w}x{h} is smaller than the {win}x{win} SSIM window"
        )));
    }
    let x = to_luma(original);
    let y = to_luma(generated);
    let (xs, ys) = (x.data(), y.data());
    let px = |i: usize| i64::from(xs[i]);
    let py = |i: usize| i64::from(ys[i]);

    let sum_x = Integral::build(w, h, px);
    let sum_y = Integral::build(w, h, py);
    let sum_xx = Integral::build(w, h, |i| px(i) * px(i));
    let sum_yy = Integral::build(w, h, |i| py(i) * py(i));
    let sum_xy = Integral::build(w, h, |i| px(i) * py(i));

    let n = (win * win) as i128;
    let n_f = n as f64;
    let n2_f = (n * n) as f64;
    let mut total = 0.0;
    for top in 0..=(h - win) {
        for left in 0..=(w - win) {
            let sx = i128::from(sum_x.window_sum(left, top, win));
            let sy = i128::from(sum_y.window_sum(left, top, win));
            let sxx = i128::from(sum_xx.window_sum(left, top, win));
            let syy = i128::from(sum_yy.window_sum(left, top, win));
            let sxy = i128::from(sum_xy.window_sum(left, top, win));
            // integer numerators keep the moments exact until the final division
            let var_x = (n * sxx - sx * sx) as f64 / n2_f;
            let var_y = (n * syy - sy * sy) as f64 / n2_f;
            let cov = (n * sxy - sx * sy) as f64 / n2_f;
            total += ssim_window_value(params, sx as f64 / n_f, sy as f64 / n_f, var_x, var_y, cov);
        }
    }
    let windows = ((w - win + 1) * (h - win + 1)) as f64;
    Ok(total / windows)
}

pub fn score_images(original: &Image, generated: &Image, params: &SsimParams) -> Result<QualityScore> {
    let mse = mse(original, generated)?;
    Ok(QualityScore {
        mse,
        psnr: psnr_from_mse(mse),
        ssim: ssim(original, generated, params)?,
    })
}

/// Loads and scores one original/generated pair.
pub fn score_pair(
    original_path: impl AsRef<Path>,
    generated_path: impl AsRef<Path>,
    params: &SsimParams,
    resize: ResizePolicy,
) -> Result<QualityScore> {
    let original = load_image(original_path)?;
    let mut generated = load_image(generated_path)?;
    let size_differs =
        original.width() != generated.width() || original.height() != generated.height();
    if size_differs && resize == ResizePolicy::Bilinear {
        generated = resize_bilinear(&generated, original.width(), original.height())?;
    }
    score_images(&original, &generated, params)
}
