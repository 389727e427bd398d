//! Convergence diagnostics: split potential-scale-reduction (R-hat) and
//! rank-normalized bulk effective sample size.

use crate::stats;

/// Split each chain in half (dropping the middle draw of odd-length chains).
fn split_chains(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[n - half..n].to_vec());
    }
    out
}

fn rhat_of(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len();
    let n = seqs[0].len();
    if n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = seqs.iter().map(|s| stats::mean(s)).collect();
    let vars: Vec<f64> = seqs.iter().map(|s| stats::sample_variance(s)).collect();
    let w = stats::mean(&vars);
    let b = if m > 1 { n as f64 * stats::sample_variance(&means) } else { 0.0 };
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

/// Split R-hat over two or more chains of equal length.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 4) {
        return f64::NAN;
    }
    rhat_of(&split_chains(chains))
}

/// Rank-normalize draws across all chains: average ranks mapped through the
/// normal quantile function.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    for (ci, c) in chains.iter().enumerate() {
        for (i, &x) in c.iter().enumerate() {
            indexed.push((x, ci * total + i));
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // average ranks for ties
    let mut rank = vec![0.0f64; total];
    let mut i = 0;
    let flat_pos = |key: usize| -> (usize, usize) { (key / total, key % total) };
    let mut positions: Vec<usize> = Vec::with_capacity(total);
    for &(_, key) in &indexed {
        positions.push(key);
    }
    while i < total {
        let mut j = i;
        while j + 1 < total && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for item in rank.iter_mut().take(j + 1).skip(i) {
            *item = avg;
        }
        i = j + 1;
    }
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    for (sorted_idx, &key) in positions.iter().enumerate() {
        let (ci, ii) = flat_pos(key);
        let r = rank[sorted_idx];
        out[ci][ii] = stats::normal_quantile((r - 0.375) / (total as f64 + 0.25));
    }
    out
}

/// Rank-normalized bulk effective sample size over two or more chains.
pub fn ess_bulk(chains: &[&[f64]]) -> f64 {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) {
        return f64::NAN;
    }
    let split = split_chains(chains);
    let normalized = rank_normalize(&split);
    ess_of(&normalized)
}

fn autocovariance(seq: &[f64], mean: f64, lag: usize) -> f64 {
    let n = seq.len();
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (seq[i] - mean) * (seq[i + lag] - mean);
    }
    s / n as f64
}

/// Effective sample size via Geyer's initial monotone positive sequence.
fn ess_of(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len();
    let n = seqs[0].len();
    let total = (m * n) as f64;
    let means: Vec<f64> = seqs.iter().map(|s| stats::mean(s)).collect();
    let vars: Vec<f64> = seqs.iter().map(|s| stats::sample_variance(s)).collect();
    let w = stats::mean(&vars);
    if w == 0.0 {
        return f64::NAN;
    }
    let b = if m > 1 { n as f64 * stats::sample_variance(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;

    // mean autocovariance across sequences at each lag
    let acov = |lag: usize| -> f64 {
        let mut s = 0.0;
        for (j, seq) in seqs.iter().enumerate() {
            s += autocovariance(seq, means[j], lag);
        }
        s / m as f64
    };
    let rho = |lag: usize| -> f64 { 1.0 - (w - acov(lag)) / var_plus };

    // Geyer pairs: Gamma_t = rho(2t) + rho(2t+1), truncated at the first
    // negative pair, pair sums forced nonincreasing; tau = -1 + 2 sum Gamma
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let r_even = if lag == 0 { 1.0 } else { rho(lag) };
        let r_odd = rho(lag + 1);
        let mut pair = r_even + r_odd;
        if pair < 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_chain(n: usize, seed: u64, offset: f64) -> Vec<f64> {
        let mut rng = stream_rng(seed, Stream::Chain(seed));
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) + offset).collect()
    }

    #[test]
    fn iid_chains_have_unit_rhat() {
        let a = normal_chain(2000, 1, 0.0);
        let b = normal_chain(2000, 2, 0.0);
        let r = split_rhat(&[&a, &b]);
        assert!((0.99..=1.01).contains(&r), "rhat {r}");
    }

    #[test]
    fn offset_chains_have_large_rhat() {
        let a = normal_chain(1000, 3, 0.0);
        let b = normal_chain(1000, 4, 10.0);
        let r = split_rhat(&[&a, &b]);
        assert!(r > 2.0, "rhat {r}");
    }

    #[test]
    fn constant_chains_rhat_is_one() {
        let a = vec![2.5; 100];
        let b = vec![2.5; 100];
        assert_eq!(split_rhat(&[&a, &b]), 1.0);
    }

    #[test]
    fn iid_ess_is_near_sample_size() {
        let a = normal_chain(2000, 5, 0.0);
        let b = normal_chain(2000, 6, 0.0);
        let ess = ess_bulk(&[&a, &b]);
        assert!(ess > 2500.0, "ess {ess}");
    }

    #[test]
    fn ar1_ess_matches_analytic_ratio() {
        // ESS/S for AR(1) with rho = 0.9 is about (1-rho)/(1+rho) = 0.0526
        let rho: f64 = 0.9;
        let scale = (1.0 - rho * rho).sqrt();
        let make = |seed: u64| -> Vec<f64> {
            let mut rng = stream_rng(seed, Stream::Chain(0));
            let mut x = 0.0;
            (0..20000)
                .map(|_| {
                    x = rho * x + scale * rng.sample::<f64, _>(StandardNormal);
                    x
                })
                .collect()
        };
        let a = make(7);
        let b = make(8);
        let s_total = 40000.0;
        let ess = ess_bulk(&[&a, &b]);
        let expect = s_total * (1.0 - rho) / (1.0 + rho);
        assert!(
            ess > expect * 0.5 && ess < expect * 1.5,
            "ess {ess}, analytic {expect}"
        );
    }
}
