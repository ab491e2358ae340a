//! Acceptance suite. Each criterion is checked against an independent
//! brute-force oracle and reported as one PASS/FAIL line; the process exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use melonqa::detect_eval::{iou, match_annotations, Annotation, BoundingBox};
use melonqa::image_core::{save_mask, save_png};
use melonqa::metrics::{mse, psnr, ssim, SsimParams};
use melonqa::net_quality::{
    assess_net_quality, label_islands, otsu_threshold, BinarizeParams, Connectivity, ThresholdMethod,
};
use melonqa::stats::{one_way_anova, studentized_range_critical, tukey_hsd, GroupSample};
use melonqa::synthgen::{degrade, generate, Layout, SplitMix64, SynthSpec};
use melonqa::{BinaryMask, Image};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

fn random_image(rng: &mut SplitMix64, w: usize, h: usize, channels: usize) -> Image {
    let data = (0..w * h * channels).map(|_| rng.next_in(0, 255) as u8).collect();
    Image::new(w, h, channels, data).unwrap()
}

/// Smooth random field: a few random sinusoids plus light texture.
fn textured_image(rng: &mut SplitMix64, w: usize, h: usize, channels: usize) -> Image {
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.next_f64() * 0.4, rng.next_f64() * 0.4, rng.next_f64() * 6.0))
        .collect();
    let mut data = Vec::with_capacity(w * h * channels);
    for y in 0..h {
        for x in 0..w {
            let s: f64 = waves
                .iter()
                .map(|(fx, fy, p)| (fx * x as f64 + fy * y as f64 + p).sin())
                .sum();
            for c in 0..channels {
                let v = 128.0 + 30.0 * s + 10.0 * c as f64 + rng.next_f64() * 20.0 - 10.0;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(w, h, channels, data).unwrap()
}

// ---------------------------------------------------------------- oracles

fn oracle_luma(img: &Image) -> Vec<f64> {
    let c = img.channels();
    img.data()
        .chunks(c)
        .map(|p| {
            if c == 1 {
                f64::from(p[0])
            } else {
                (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])).round()
            }
        })
        .collect()
}

fn oracle_mse(a: &Image, b: &Image) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = f64::from(*x) - f64::from(*y);
        sum += d * d;
    }
    sum / a.data().len() as f64
}

fn oracle_psnr(a: &Image, b: &Image) -> f64 {
    let m = oracle_mse(a, b);
    if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / m).log10()
    }
}

fn oracle_ssim(a: &Image, b: &Image, win: usize) -> f64 {
    let (w, h) = (a.width(), a.height());
    let (la, lb) = (oracle_luma(a), oracle_luma(b));
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let c3 = c2 / 2.0;
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - win {
        for left in 0..=w - win {
            let (mut mx, mut my) = (0.0, 0.0);
            for y in top..top + win {
                for x in left..left + win {
                    mx += la[y * w + x];
                    my += lb[y * w + x];
                }
            }
            mx /= n;
            my /= n;
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for y in top..top + win {
                for x in left..left + win {
                    let dx = la[y * w + x] - mx;
                    let dy = lb[y * w + x] - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            }
            vx /= n;
            vy /= n;
            cov /= n;
            let (sx, sy) = (vx.sqrt(), vy.sqrt());
            let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            let c = (2.0 * sx * sy + c2) / (vx + vy + c2);
            let s = (cov + c3) / (sx * sy + c3);
            total += l * c * s;
            count += 1;
        }
    }
    total / count as f64
}

/// Area of the intersection over the union by counting unit cells.
fn oracle_raster_iou(a: [i32; 4], b: [i32; 4]) -> f64 {
    let inside = |r: [i32; 4], x: i32, y: i32| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (mut both, mut either) = (0u32, 0u32);
    for y in 0..64 {
        for x in 0..64 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            both += u32::from(ia && ib);
            either += u32::from(ia || ib);
        }
    }
    if either == 0 {
        0.0
    } else {
        f64::from(both) / f64::from(either)
    }
}

/// Best total IoU over all one-to-one assignments of eligible pairs.
fn oracle_best_assignment(weights: &[Vec<f64>]) -> f64 {
    fn go(i: usize, used: &mut Vec<bool>, weights: &[Vec<f64>]) -> f64 {
        if i == weights.len() {
            return 0.0;
        }
        let mut best = go(i + 1, used, weights);
        for j in 0..used.len() {
            if !used[j] && weights[i][j] > 0.0 {
                used[j] = true;
                best = best.max(weights[i][j] + go(i + 1, used, weights));
                used[j] = false;
            }
        }
        best
    }
    let cols = weights.first().map_or(0, Vec::len);
    go(0, &mut vec![false; cols], weights)
}

fn oracle_flood_fill(mask: &BinaryMask, eight: bool) -> Vec<usize> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut areas = Vec::new();
    let steps: &[(i64, i64)] = if eight {
        &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    } else {
        &[(1, 0), (-1, 0), (0, 1), (0, -1)]
    };
    for sy in 0..h {
        for sx in 0..w {
            let start = (sy * w + sx) as usize;
            if seen[start] || !mask.get(sx as usize, sy as usize) {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([(sx, sy)]);
            let mut area = 0;
            while let Some((x, y)) = queue.pop_front() {
                area += 1;
                for (dx, dy) in steps {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let k = (ny * w + nx) as usize;
                    if !seen[k] && mask.get(nx as usize, ny as usize) {
                        seen[k] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            areas.push(area);
        }
    }
    areas.sort_unstable_by(|a, b| b.cmp(a));
    areas
}

/// Exhaustive between-class variance scan with exact i128 comparisons.
fn oracle_otsu(hist: &[u64; 256]) -> Option<u8> {
    let n: i128 = hist.iter().map(|&c| i128::from(c)).sum();
    let s: i128 = hist.iter().enumerate().map(|(v, &c)| v as i128 * i128::from(c)).sum();
    let mut best: Option<(u8, i128, i128)> = None;
    for t in 0..=255usize {
        let n0: i128 = hist[..=t].iter().map(|&c| i128::from(c)).sum();
        let s0: i128 = hist[..=t].iter().enumerate().map(|(v, &c)| v as i128 * i128::from(c)).sum();
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // sigma_b^2 * n^2 = (n*s0 - n0*s)^2 / (n0*n1)
        let num = (n * s0 - n0 * s).pow(2);
        let den = n0 * n1;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    best.map(|(t, _, _)| t)
}

fn oracle_anova_f(groups: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let k = groups.len() as f64;
    let n = all.len() as f64;
    (ssb / (k - 1.0)) / (ssw / (n - k))
}

fn normal(rng: &mut SplitMix64) -> f64 {
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `n` draws rescaled to exactly the given mean and sample standard deviation.
fn sample_with_moments(rng: &mut SplitMix64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let m = raw.iter().sum::<f64>() / n as f64;
    let s = (raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    raw.iter().map(|v| mean + sd * (v - m) / s).collect()
}

// --------------------------------------------------------------- criteria

fn criterion_1() -> Outcome {
    let mut rng = SplitMix64::new(0xA11CE);
    let mut cases = Vec::new();
    for i in 0..200 {
        let w = rng.next_in(8, 64) as usize;
        let h = rng.next_in(8, 64) as usize;
        let channels = if i % 2 == 0 { 1 } else { 3 };
        let a = textured_image(&mut rng, w, h, channels);
        let b = if i % 5 == 4 {
            random_image(&mut rng, w, h, channels)
        } else {
            let amplitude = 1.0 + rng.next_f64() * 100.0;
            degrade(&a, amplitude, rng.next_u64()).unwrap()
        };
        let win = {
            let m = 11.min(w.min(h));
            if m % 2 == 0 { m - 1 } else { m }
        };
        cases.push((a, b, win));
    }
    let start = Instant::now();
    let computed: Vec<(f64, f64, f64)> = cases
        .iter()
        .map(|(a, b, win)| {
            (
                mse(a, b).unwrap(),
                psnr(a, b).unwrap(),
                ssim(a, b, &SsimParams::with_window(*win)).unwrap(),
            )
        })
        .collect();
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for ((a, b, win), (m, p, s)) in cases.iter().zip(&computed) {
        let errs = [
            rel_err(*m, oracle_mse(a, b)),
            rel_err(*p, oracle_psnr(a, b)),
            rel_err(*s, oracle_ssim(a, b, *win)),
        ];
        for e in errs {
            ensure(e <= 1e-9, || format!("{}x{} pair: relative error {e:e}", a.width(), a.height()))?;
            worst = worst.max(e);
        }
    }
    ensure(elapsed.as_secs_f64() < 10.0, || format!("took {elapsed:?}"))?;
    Ok(format!("200 pairs, worst relative error {worst:.1e}, {:.2} s", elapsed.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let mut rng = SplitMix64::new(0xB0B);
    let p = SsimParams::default();
    for _ in 0..50 {
        let (w, h) = (rng.next_in(11, 48) as usize, rng.next_in(11, 48) as usize);
        let channels = if rng.next_f64() < 0.5 { 1 } else { 3 };
        let x = random_image(&mut rng, w, h, channels);
        let s = ssim(&x, &x, &p).unwrap();
        ensure((s - 1.0).abs() <= 1e-9, || format!("ssim(x, x) = {s}"))?;
        let q = psnr(&x, &x).unwrap();
        ensure(q == f64::INFINITY, || format!("psnr(x, x) = {q}"))?;
    }
    for _ in 0..50 {
        let (w, h) = (rng.next_in(11, 48) as usize, rng.next_in(11, 48) as usize);
        let a = textured_image(&mut rng, w, h, 3);
        let b = random_image(&mut rng, w, h, 3);
        let (s_ab, s_ba) = (ssim(&a, &b, &p).unwrap(), ssim(&b, &a, &p).unwrap());
        ensure(s_ab == s_ba, || format!("ssim asymmetric: {s_ab} vs {s_ba}"))?;
        let (m_ab, m_ba) = (mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        ensure(m_ab == m_ba, || format!("mse asymmetric: {m_ab} vs {m_ba}"))?;
    }
    Ok("50 identities, 50 symmetric pairs".into())
}

fn criterion_3() -> Outcome {
    let mut rng = SplitMix64::new(0xC0FFEE);
    let base = textured_image(&mut rng, 256, 256, 3);
    let p = SsimParams::default();
    let mut rows = Vec::new();
    for amplitude in [5.0, 10.0, 20.0, 40.0, 80.0] {
        let noisy = degrade(&base, amplitude, 42).unwrap();
        rows.push((amplitude, psnr(&base, &noisy).unwrap(), ssim(&base, &noisy, &p).unwrap()));
    }
    for pair in rows.windows(2) {
        let ((a0, p0, s0), (a1, p1, s1)) = (pair[0], pair[1]);
        ensure(p1 < p0, || format!("PSNR not decreasing from {a0} to {a1}: {p0} -> {p1}"))?;
        ensure(s1 < s0, || format!("SSIM not decreasing from {a0} to {a1}: {s0} -> {s1}"))?;
    }
    let text: Vec<String> = rows.iter().map(|(a, p, s)| format!("{a}:{p:.2}dB/{s:.4}")).collect();
    Ok(text.join(" "))
}

fn criterion_4() -> Outcome {
    let bb = |x0: f64, y0: f64, x1: f64, y1: f64| BoundingBox::new(x0, y0, x1, y1).unwrap();
    let a = bb(0.0, 0.0, 10.0, 10.0);
    ensure(iou(&a, &a) == 1.0, || "identity IoU is not 1".into())?;
    ensure(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)) == 0.0, || "disjoint IoU is not 0".into())?;
    let third = iou(&a, &bb(5.0, 0.0, 15.0, 10.0));
    ensure((third - 1.0 / 3.0).abs() <= 1e-9, || format!("50/150 case gave {third}"))?;
    let mut rng = SplitMix64::new(0xD1CE);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let mut rect = || {
            let x0 = rng.next_in(0, 40) as i32;
            let y0 = rng.next_in(0, 40) as i32;
            [x0, y0, x0 + rng.next_in(1, 23) as i32, y0 + rng.next_in(1, 23) as i32]
        };
        let (r, s) = (rect(), rect());
        let to_box = |r: [i32; 4]| bb(f64::from(r[0]), f64::from(r[1]), f64::from(r[2]), f64::from(r[3]));
        let got = iou(&to_box(r), &to_box(s));
        let want = oracle_raster_iou(r, s);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-6, || format!("{r:?} vs {s:?}: {got} vs raster {want}"))?;
    }
    Ok(format!("analytic cases plus 500 raster pairs, worst |diff| {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = SplitMix64::new(0xF00D);
    let threshold = 0.5;
    let mut worst_ratio = f64::INFINITY;
    for case in 0..100 {
        let n_gt = rng.next_in(1, 5) as usize;
        let mut gts = Vec::new();
        for _ in 0..n_gt {
            let (x, y) = (rng.next_f64() * 60.0, rng.next_f64() * 60.0);
            let (w, h) = (10.0 + rng.next_f64() * 30.0, 10.0 + rng.next_f64() * 30.0);
            gts.push((x, y, w, h, rng.next_in(0, 1) as u32));
        }
        let mut preds = Vec::new();
        for g in &gts {
            if preds.len() < 5 && rng.next_f64() < 0.8 {
                let j = |rng: &mut SplitMix64| (rng.next_f64() - 0.5) * 12.0;
                let (dx, dy, dw, dh) = (j(&mut rng), j(&mut rng), j(&mut rng), j(&mut rng));
                preds.push((g.0 + dx, g.1 + dy, (g.2 + dw).max(2.0), (g.3 + dh).max(2.0), g.4));
            }
        }
        while preds.len() < 5 && rng.next_f64() < 0.4 {
            let (x, y) = (rng.next_f64() * 60.0, rng.next_f64() * 60.0);
            preds.push((x, y, 10.0 + rng.next_f64() * 30.0, 10.0 + rng.next_f64() * 30.0, rng.next_in(0, 1) as u32));
        }
        let ann = |b: &(f64, f64, f64, f64, u32)| Annotation {
            image_id: "img".into(),
            class_id: b.4,
            bbox: BoundingBox::new(b.0, b.1, b.0 + b.2, b.1 + b.3).unwrap(),
            confidence: None,
        };
        let gt: Vec<Annotation> = gts.iter().map(ann).collect();
        let pr: Vec<Annotation> = preds.iter().map(ann).collect();
        let summary = match_annotations(&gt, &pr, threshold).unwrap();

        let mut gt_used = vec![false; gt.len()];
        let mut pr_used = vec![false; pr.len()];
        for m in &summary.matches {
            ensure(!gt_used[m.gt_index] && !pr_used[m.pred_index], || {
                format!("case {case}: box assigned twice")
            })?;
            gt_used[m.gt_index] = true;
            pr_used[m.pred_index] = true;
        }
        let greedy: f64 = summary.matches.iter().map(|m| m.iou).sum();
        let weights: Vec<Vec<f64>> = gt
            .iter()
            .map(|g| {
                pr.iter()
                    .map(|p| {
                        let v = iou(&g.bbox, &p.bbox);
                        if g.class_id == p.class_id && v >= threshold { v } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let best = oracle_best_assignment(&weights);
        if best > 0.0 {
            worst_ratio = worst_ratio.min(greedy / best);
        }
        ensure(greedy >= 0.9 * best - 1e-12, || {
            format!("case {case}: greedy {greedy} < 0.9 x optimal {best}")
        })?;
    }
    Ok(format!("100 instances, worst greedy/optimal {worst_ratio:.4}"))
}

fn criterion_6() -> Outcome {
    let mut rng = SplitMix64::new(0x15_1A_4D);
    let mut masks = Vec::new();
    for _ in 0..500 {
        let (w, h) = (rng.next_in(1, 64) as usize, rng.next_in(1, 64) as usize);
        let density = 0.2 + rng.next_f64() * 0.6;
        masks.push(BinaryMask::from_fn(w, h, |_, _| rng.next_f64() < density));
    }
    let start = Instant::now();
    let mut components = 0usize;
    for mask in &masks {
        for connectivity in [Connectivity::Four, Connectivity::Eight] {
            let params = BinarizeParams {
                connectivity,
                min_island_area: 1,
                ..BinarizeParams::default()
            };
            let got = label_islands(mask, &params);
            let want = oracle_flood_fill(mask, connectivity == Connectivity::Eight);
            components += want.len();
            ensure(got == want, || {
                format!("{}x{} mask, {connectivity}-connectivity: {} vs {} components",
                    mask.width(), mask.height(), got.len(), want.len())
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed.as_secs_f64() < 10.0, || format!("took {elapsed:?}"))?;
    Ok(format!("500 masks x 2 connectivities, {components} components, {:.2} s", elapsed.as_secs_f64()))
}

fn criterion_7() -> Outcome {
    let mut rng = SplitMix64::new(0x7E57);
    let layouts = [Layout::Grid, Layout::JitteredGrid, Layout::Voronoi];
    let mut uniform_grids = 0;
    for i in 0..50 {
        let layout = layouts[i % 3];
        let cell = rng.next_in(8, 20) as usize;
        let crack = rng.next_in(1, (cell / 3) as i64) as usize;
        let uniform = layout == Layout::Grid && i % 2 == 0;
        let (w, h) = if uniform {
            (cell * rng.next_in(2, 6) as usize, cell * rng.next_in(2, 6) as usize)
        } else {
            (rng.next_in(40, 120) as usize, rng.next_in(40, 120) as usize)
        };
        let (skin, net) = if i % 4 == 1 { (50, 210) } else { (200, 60) };
        let spec = SynthSpec {
            width: w,
            height: h,
            seed: rng.next_u64(),
            layout,
            cell_size: cell,
            crack_width: crack,
            skin_level: skin,
            net_level: net,
            fruit_radius: (!uniform && i % 3 != 0).then(|| w.min(h) as f64 * 0.45),
            site_count: None,
            connectivity: if i % 5 == 0 { Connectivity::Four } else { Connectivity::Eight },
            min_island_area: if i % 7 == 0 { 1 } else { 4 },
        };
        let fixture = generate(&spec).map_err(|e| format!("fixture {i}: {e}"))?;
        let params = BinarizeParams {
            method: ThresholdMethod::Fixed(spec.midpoint_threshold()),
            polarity: spec.polarity(),
            min_island_area: spec.min_island_area,
            connectivity: spec.connectivity,
        };
        let report = assess_net_quality(&fixture.image, &fixture.mask, &params).unwrap();
        let truth = &fixture.truth;
        ensure(report.island_areas == truth.island_areas, || format!("fixture {i} ({layout:?}): island areas differ"))?;
        ensure(report.island_count == truth.island_count, || format!("fixture {i}: count differs"))?;
        ensure(report.net_density == truth.expected_density, || {
            format!("fixture {i}: density {} vs {}", report.net_density, truth.expected_density)
        })?;
        ensure(report.net_uniformity == truth.expected_uniformity, || {
            format!("fixture {i}: uniformity {} vs {}", report.net_uniformity, truth.expected_uniformity)
        })?;
        if uniform {
            uniform_grids += 1;
            ensure(report.net_uniformity == 0.0, || {
                format!("uniform grid fixture {i} has uniformity {}", report.net_uniformity)
            })?;
        }
    }
    Ok(format!("50 fixtures over 3 layouts, {uniform_grids} uniform grids with uniformity 0"))
}

fn criterion_8() -> Outcome {
    let mut rng = SplitMix64::new(0x0750);
    for case in 0..100 {
        let (w, h) = (rng.next_in(4, 64) as usize, rng.next_in(4, 64) as usize);
        let modes: Vec<(f64, f64)> = (0..rng.next_in(1, 3))
            .map(|_| (rng.next_f64() * 255.0, 2.0 + rng.next_f64() * 40.0))
            .collect();
        let luma = Image::from_fn_luma(w, h, |_, _| {
            let (c, s) = modes[rng.next_in(0, modes.len() as i64 - 1) as usize];
            (c + s * normal(&mut rng)).round().clamp(0.0, 255.0) as u8
        })
        .unwrap();
        let keep = 0.3 + rng.next_f64() * 0.7;
        let mask = BinaryMask::from_fn(w, h, |_, _| rng.next_f64() < keep);
        let mut hist = [0u64; 256];
        for (v, &inside) in luma.data().iter().zip(mask.bits()) {
            if inside {
                hist[usize::from(*v)] += 1;
            }
        }
        let got = otsu_threshold(&hist);
        let want = oracle_otsu(&hist);
        ensure(got == want, || format!("case {case}: {got:?} vs exhaustive {want:?}"))?;
    }
    Ok("100 masked histograms agree with the exhaustive scan".into())
}

fn criterion_9() -> Outcome {
    let mut rng = SplitMix64::new(0x57A7);
    let mut worst_f: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.next_in(2, 6) as usize;
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let n = rng.next_in(2, 12) as usize;
                let center = rng.next_f64() * 10.0;
                (0..n).map(|_| center + normal(&mut rng)).collect()
            })
            .collect();
        let samples: Vec<GroupSample> =
            groups.iter().enumerate().map(|(i, v)| GroupSample::new(format!("g{i}"), v.clone())).collect();
        let f = one_way_anova(&samples).unwrap().f_statistic.unwrap();
        let e = rel_err(f, oracle_anova_f(&groups));
        worst_f = worst_f.max(e);
        ensure(e <= 1e-9, || format!("F {f} off by relative {e:e}"))?;
    }

    let q = studentized_range_critical(3, 12.0, 0.05);
    ensure((q - 3.77).abs() <= 0.02, || format!("q(3, 12, 0.05) = {q}"))?;
    let table = [
        (3, 10.0, 0.05, 3.877),
        (3, 20.0, 0.05, 3.578),
        (3, 60.0, 0.05, 3.399),
        (4, 10.0, 0.05, 4.327),
        (4, 20.0, 0.05, 3.958),
        (4, 60.0, 0.05, 3.737),
        (5, 10.0, 0.05, 4.654),
        (5, 20.0, 0.05, 4.232),
        (5, 60.0, 0.05, 3.977),
    ];
    let mut worst_q: f64 = 0.0;
    for (k, df, alpha, want) in table {
        let got = studentized_range_critical(k, df, alpha);
        worst_q = worst_q.max((got - want).abs());
        ensure((got - want).abs() <= 0.02, || format!("q({k}, {df}, {alpha}) = {got}, table {want}"))?;
    }

    let mut pairs_checked = 0;
    for case in 0..100 {
        let k = rng.next_in(2, 6) as usize;
        let n = if case % 2 == 0 { 4 } else { 6 };
        let spread = rng.next_f64() * 4.0;
        let groups: Vec<GroupSample> = (0..k)
            .map(|i| {
                let center = rng.next_f64() * spread;
                GroupSample::new(format!("g{i}"), (0..n).map(|_| center + normal(&mut rng)).collect())
            })
            .collect();
        let outcome = tukey_hsd(&groups, 0.05).unwrap();
        for p in &outcome.pairwise {
            pairs_checked += 1;
            let shares = outcome.shares_letter(&p.group_a, &p.group_b);
            ensure(shares != p.significant, || {
                format!("case {case}: {} vs {} share={shares} significant={}", p.group_a, p.group_b, p.significant)
            })?;
        }
    }
    Ok(format!(
        "F worst rel {worst_f:.1e}; q(3,12,.05)={q:.4}; grid worst |diff| {worst_q:.4}; {pairs_checked} letter pairs"
    ))
}

fn criterion_10() -> Outcome {
    let mut rng = SplitMix64::new(0x7AB1E1);
    let groups = vec![
        GroupSample::new("high", sample_with_moments(&mut rng, 20, 28.8, 0.3)),
        GroupSample::new("mid", sample_with_moments(&mut rng, 20, 27.9, 0.05)),
        GroupSample::new("low", sample_with_moments(&mut rng, 20, 27.5, 0.6)),
    ];
    let outcome = tukey_hsd(&groups, 0.05).unwrap();
    let letters: Vec<&str> = ["high", "mid", "low"].iter().map(|g| outcome.letters[*g].as_str()).collect();
    let detail: Vec<String> = outcome
        .pairwise
        .iter()
        .map(|p| format!("{}-{} q={:.3}", p.group_a, p.group_b, p.q_statistic))
        .collect();
    let summary = format!(
        "letters {letters:?}; {}; q_crit(.05)={:.3}, q_crit(.001)={:.3}",
        detail.join(", "),
        outcome.q_critical_005,
        outcome.q_critical_0001
    );
    ensure(letters == ["a", "b", "c"], || format!("letters differ: {summary}"))?;
    let weak: Vec<String> = outcome
        .pairwise
        .iter()
        .filter(|p| !p.significant_at_0001)
        .map(|p| format!("{}-{}", p.group_a, p.group_b))
        .collect();
    ensure(weak.is_empty(), || format!("not significant at p < 0.001: {}; {summary}", weak.join(", ")))?;
    Ok(summary)
}

fn melonqa(dir: &Path, args: &[String]) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_melonqa"))
        .args(args)
        .current_dir(dir)
        .env_remove("MELONQA_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    out.status.code().ok_or_else(|| "killed by signal".to_string())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn without_timestamp(manifest: &[u8]) -> String {
    String::from_utf8_lossy(manifest)
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn build_cli_corpus(root: &Path) {
    let mut rng = SplitMix64::new(0xDE7);
    for dir in ["orig", "gen", "nq_images", "nq_masks", "gt", "pred"] {
        fs::create_dir_all(root.join(dir)).unwrap();
    }
    for i in 0..12 {
        let spec = SynthSpec {
            seed: i,
            layout: [Layout::Grid, Layout::JitteredGrid, Layout::Voronoi][i as usize % 3],
            fruit_radius: Some(30.0),
            ..SynthSpec::grid(72, 64, 12, 2)
        };
        let fixture = generate(&spec).unwrap();
        let base = textured_image(&mut rng, 48, 40, 3);
        save_png(&base, root.join(format!("orig/img{i:02}.png"))).unwrap();
        save_png(&degrade(&base, 4.0 * (i + 1) as f64, i).unwrap(), root.join(format!("gen/img{i:02}.png"))).unwrap();
        save_png(&fixture.image, root.join(format!("nq_images/m{i:02}.png"))).unwrap();
        save_mask(&fixture.mask, root.join(format!("nq_masks/m{i:02}.png"))).unwrap();
        let mut gt = String::new();
        let mut pred = String::new();
        for _ in 0..4 {
            let (cx, cy, w, h) = (0.2 + rng.next_f64() * 0.6, 0.2 + rng.next_f64() * 0.6, 0.1 + rng.next_f64() * 0.2, 0.1 + rng.next_f64() * 0.2);
            gt.push_str(&format!("0 {cx} {cy} {w} {h}\n"));
            pred.push_str(&format!("0 {} {} {w} {h} 0.9\n", cx + 0.01, cy - 0.01));
        }
        fs::write(root.join(format!("gt/img{i:02}.txt")), gt).unwrap();
        fs::write(root.join(format!("pred/img{i:02}.txt")), pred).unwrap();
    }
    let sizes: String = (0..12).map(|i| format!("img{i:02},640,480\n")).collect();
    fs::write(root.join("sizes.csv"), format!("image_id,width,height\n{sizes}")).unwrap();
    let mut csv = String::from("group,value\n");
    for (g, m, s) in [("A", 28.8, 0.3), ("B", 27.9, 0.3), ("C", 27.5, 0.6), ("D", 27.6, 0.4)] {
        for v in sample_with_moments(&mut rng, 10, m, s) {
            csv.push_str(&format!("{g},{v}\n"));
        }
    }
    fs::write(root.join("groups.csv"), csv).unwrap();
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    build_cli_corpus(root);
    let commands: [(&str, &[&str]); 5] = [
        ("metrics", &["metrics", "--original", "orig", "--generated", "gen"]),
        ("detect-eval", &["detect-eval", "--ground-truth", "gt", "--predictions", "pred", "--image-sizes", "sizes.csv"]),
        ("net-quality", &["net-quality", "--images", "nq_images", "--masks", "nq_masks"]),
        ("stats", &["stats", "--input", "groups.csv", "--metric-name", "PSNR"]),
        ("synth", &["synth", "--layout", "voronoi", "--count", "6", "--fruit-radius", "25", "--seed", "9"]),
    ];
    let mut compared = 0usize;
    for (name, base) in commands {
        let mut per_jobs = Vec::new();
        for jobs in ["1", "8"] {
            let run_id = format!("{name}-j{jobs}");
            let mut argv: Vec<String> = base.iter().map(|s| s.to_string()).collect();
            argv.extend(["--out", "runs", "--run-id", &run_id, "--jobs", jobs].map(String::from));
            let dir = root.join("runs").join(&run_id);
            let code = melonqa(root, &argv)?;
            ensure(code == 0, || format!("{name} --jobs {jobs} exited {code}"))?;
            let first_dir = root.join("runs").join(format!("{run_id}-first"));
            fs::rename(&dir, &first_dir).map_err(|e| e.to_string())?;
            let code = melonqa(root, &argv)?;
            ensure(code == 0, || format!("{name} --jobs {jobs} rerun exited {code}"))?;
            let (first, second) = (snapshot(&first_dir), snapshot(&dir));
            ensure(first.keys().eq(second.keys()), || format!("{name} --jobs {jobs}: different file sets"))?;
            for (file, bytes) in &first {
                let same = if file == "manifest.json" {
                    without_timestamp(bytes) == without_timestamp(&second[file])
                } else {
                    *bytes == second[file]
                };
                ensure(same, || format!("{name} --jobs {jobs}: {file} differs between reruns"))?;
                compared += 1;
            }
            per_jobs.push(second);
        }
        let (serial, parallel) = (&per_jobs[0], &per_jobs[1]);
        for (file, bytes) in serial.iter().filter(|(f, _)| f.as_str() != "manifest.json") {
            ensure(parallel.get(file) == Some(bytes), || format!("{name}: {file} differs between --jobs 1 and 8"))?;
            compared += 1;
        }
    }
    Ok(format!("5 commands x jobs {{1, 8}}, {compared} file comparisons"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("metric oracle equivalence", criterion_1),
        ("metric identities", criterion_2),
        ("degradation monotonicity", criterion_3),
        ("IoU correctness", criterion_4),
        ("matching soundness", criterion_5),
        ("connected components", criterion_6),
        ("end-to-end net quality", criterion_7),
        ("Otsu optimality", criterion_8),
        ("statistics validation", criterion_9),
        ("table-shape reproduction", criterion_10),
        ("CLI determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {message}"))
        });
        match result {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
