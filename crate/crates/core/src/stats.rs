//! Small numeric helpers shared across the crate: densities, CDFs, sample
//! moments and quantiles.

use statrs::function::erf;
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.8378770664093453;
pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// log N(x | mu, sd^2).
pub fn normal_logpdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// CDF of the positive half-Cauchy with the given scale.
pub fn half_cauchy_cdf(x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        std::f64::consts::FRAC_2_PI * (x / scale).atan()
    }
}

/// Inverse CDF of the positive half-Cauchy: `scale * tan(pi*u/2)`.
pub fn half_cauchy_quantile(u: f64, scale: f64) -> f64 {
    scale * (std::f64::consts::FRAC_PI_2 * u).tan()
}

/// log density of the positive half-Cauchy at x > 0.
pub fn half_cauchy_logpdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    (2.0 / std::f64::consts::PI).ln() - scale.ln() - (1.0 + z * z).ln()
}

/// log density of InvGamma(shape, rate) at x > 0
/// (density `rate^shape/Gamma(shape) * x^{-shape-1} e^{-rate/x}`).
pub fn inv_gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// log density of Beta(a, b) at x in (0, 1).
pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n-1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Linear-interpolation quantile (the common "type 7" definition) of a sorted
/// slice. `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty slice");
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Quantile of an unsorted slice (sorts a copy).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, q)
}

/// Median via `quantile(xs, 0.5)`.
pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// FNV-1a over the raw bit patterns of a float slice; used to fingerprint
/// generated datasets for paired-seeding checks.
pub fn hash_f64s(chunks: &[&[f64]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for chunk in chunks {
        for &x in *chunk {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_matches_known_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-8);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-7);
        // round trip
        for &p in &[0.01, 0.2, 0.5, 0.9, 0.999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-8);
        }
    }

    #[test]
    fn half_cauchy_quantile_inverts_cdf() {
        for &u in &[0.1, 0.5, 0.9, 0.99] {
            let x = half_cauchy_quantile(u, 2.5);
            assert!((half_cauchy_cdf(x, 2.5) - u).abs() < 1e-12);
        }
        // median of C+(0,1) is 1
        assert!((half_cauchy_quantile(0.5, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_type7() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn inv_gamma_logpdf_mode() {
        // mode of InvGamma(a, b) is b/(a+1)
        let (a, b) = (2.0, 2.0);
        let mode = b / (a + 1.0);
        let at_mode = inv_gamma_logpdf(mode, a, b);
        assert!(inv_gamma_logpdf(mode * 0.8, a, b) < at_mode);
        assert!(inv_gamma_logpdf(mode * 1.2, a, b) < at_mode);
    }
}
