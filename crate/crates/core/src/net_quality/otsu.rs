//! Otsu threshold selection on a 256-bin histogram.

/// Histogram of the luma samples selected by `include`.
pub fn masked_histogram(samples: &[u8], include: &[bool]) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for (&v, &keep) in samples.iter().zip(include) {
        if keep {
            hist[v as usize] += 1;
        }
    }
    hist
}

/// Between-class variance (up to the constant 1/N^2 factor) when the
/// lower class is `v <= t`.
///
/// Computed in exact integer arithmetic: with class counts `n0`, `n1` and
/// sums `s0`, `s1`, `w0 w1 (mu0 - mu1)^2 * N^2 = (n1 s0 - n0 s1)^2 / (n0 n1)`.
/// The returned pair is that fraction as (numerator, denominator).
fn between_class(n0: u64, s0: u64, n1: u64, s1: u64) -> Option<(u128, u128)> {
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let diff = (i128::from(n1) * i128::from(s0) - i128::from(n0) * i128::from(s1)).unsigned_abs();
    Some((diff * diff, u128::from(n0) * u128::from(n1)))
}

/// Full 256-bit product as (high, low) limbs, ordered lexicographically.
fn wide_mul(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;
    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let lo = (ll & MASK) | (mid << 64);
    let hi = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (hi, lo)
}

/// Threshold `t` maximizing between-class variance, where the lower class
/// is `v <= t`. Ties resolve to the smallest `t`.
///
/// Returns `None` when fewer than two distinct values are present (every
/// split leaves one class empty).
pub fn otsu_threshold(hist: &[u64; 256]) -> Option<u8> {
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let mut best: Option<(u8, (u128, u128))> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for (t, &count) in hist.iter().enumerate().take(255) {
        n0 += count;
        s0 += t as u64 * count;
        let Some(score) = between_class(n0, s0, total_n - n0, total_s - s0) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((_, (bn, bd))) => wide_mul(score.0, bd) > wide_mul(bn, score.1),
        };
        if better {
            best = Some((t as u8, score));
        }
    }
    best.map(|(t, _)| t)
}
