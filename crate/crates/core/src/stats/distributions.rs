//! Tail probabilities of the F and studentized range distributions by
//! direct numerical integration of their densities.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::sync::{Mutex, OnceLock};

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::quadrature::{geometric_breaks, integrate_with_breaks};

/// Upper tail `P(F > f)` of the F distribution with `(d1, d2)` degrees of freedom.
///
/// With `u = d1 f / (d1 f + d2)` the statistic maps onto a Beta(d1/2, d2/2)
/// variable; the density is integrated in `theta` where `u = sin^2(theta)`,
/// which removes the endpoint singularities for half-integer shapes. Both
/// sides of the cut are integrated and the tail is their ratio, so the
/// normalizing beta function never has to be evaluated.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    assert!(d1 > 0.0 && d2 > 0.0, "degrees of freedom must be positive");
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let (pa, pb) = (d1 - 1.0, d2 - 1.0);
    let cut = (d1 * f / (d1 * f + d2)).sqrt().asin();
    // log-density maximum keeps large degrees of freedom from underflowing
    let mode = if pa <= 0.0 {
        0.0
    } else {
        (pa / pb.max(f64::MIN_POSITIVE)).sqrt().atan()
    };
    let log_density = |t: f64| pa * t.sin().ln() + pb * t.cos().ln();
    let peak = log_density(mode.clamp(1e-300, FRAC_PI_2 - 1e-12));
    let density = |t: f64| {
        if t <= 0.0 || t >= FRAC_PI_2 {
            // endpoint values: only finite when the exponent is zero
            let at_zero = t <= 0.0;
            let exponent = if at_zero { pa } else { pb };
            return if exponent == 0.0 { (-peak).exp() } else { 0.0 };
        }
        (log_density(t) - peak).exp()
    };
    let width = 1.0 / (2.0 * (d1 + d2)).sqrt();
    let mut breaks = geometric_breaks(mode, width, 12);
    breaks.push(cut);
    // the density peaks at 1, so this absolute floor is far below any tail
    // that matters and stops subdivision in the subnormal region
    let lower = integrate_with_breaks(density, 0.0, cut, &breaks, 1e-18, 1e-12);
    let upper = integrate_with_breaks(density, cut, FRAC_PI_2, &breaks, 1e-18, 1e-12);
    upper / (lower + upper)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(R > w)` for the range `R` of `k` independent standard normals.
fn normal_range_upper_tail(w: f64, k: u32) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    let m = (k - 1) as i32;
    // k * phi(z) * (Phi(z)^(k-1) - (Phi(z) - Phi(z - w))^(k-1)); the first term
    // integrates to one, so this is exactly 1 - P(R <= w)
    let integrand = |z: f64| {
        let upper = std_normal_cdf(z);
        let inside = (upper - std_normal_cdf(z - w)).max(0.0);
        f64::from(k) * std_normal_pdf(z) * (upper.powi(m) - inside.powi(m))
    };
    let breaks = [-3.0, 0.0, 3.0, 0.5 * w, w - 3.0];
    integrate_with_breaks(integrand, -9.0, 9.0, &breaks, 1e-13, 1e-10).clamp(0.0, 1.0)
}

/// Upper tail `P(Q > q)` of the studentized range for `k` means and `df`
/// error degrees of freedom.
///
/// `Q = R / S` with `S = sqrt(chi^2_df / df)`, so the tail is the normal-range
/// tail at `q s` averaged over the density of `S`. Both the inner range
/// integral and the outer integral over `s` are adaptive.
pub fn studentized_range_upper_tail(q: f64, k: u32, df: f64) -> f64 {
    assert!(k >= 2, "studentized range needs at least two means");
    assert!(df > 0.0, "degrees of freedom must be positive");
    if q <= 0.0 {
        return 1.0;
    }
    if q.is_infinite() {
        return 0.0;
    }
    let half = df / 2.0;
    let log_norm = std::f64::consts::LN_2 + half * half.ln() - ln_gamma(half);
    let s_density = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        (log_norm + (df - 1.0) * s.ln() - half * s * s).exp()
    };
    let mode = ((df - 1.0).max(0.0) / df).sqrt();
    let width = 1.0 / (2.0 * df).sqrt();
    let s_max = mode + 40.0 * width + 2.0;
    let integrand = |s: f64| {
        let d = s_density(s);
        if d == 0.0 {
            0.0
        } else {
            d * normal_range_upper_tail(q * s, k)
        }
    };
    integrate_with_breaks(integrand, 0.0, s_max, &geometric_breaks(mode, width, 6), 1e-12, 1e-10)
        .clamp(0.0, 1.0)
}

type CacheKey = (u32, u64, u64);

fn cache() -> &'static Mutex<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Critical value `q` with `P(Q > q) = alpha`, found by Brent's method on
/// the integrated tail. Results are memoized per `(k, df, alpha)`.
pub fn studentized_range_critical(k: u32, df: f64, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let key = (k, df.to_bits(), alpha.to_bits());
    if let Some(&q) = cache().lock().expect("cache poisoned").get(&key) {
        return q;
    }
    let g = |q: f64| studentized_range_upper_tail(q, k, df) - alpha;
    let mut hi = 4.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    let q = brent(g, 0.0, hi, 1e-10);
    cache().lock().expect("cache poisoned").insert(key, q);
    q
}

/// Brent root finder on a bracketing interval with `f(a) > 0 >= f(b)` or vice versa.
fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    debug_assert!(fa * fb < 0.0, "root not bracketed");
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}
