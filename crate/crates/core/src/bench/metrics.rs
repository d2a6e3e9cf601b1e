//! The five progress-reward quality metrics.

use crate::{Error, Result};

/// Value returned by [`smd`] when pooled variance vanishes but the means
/// differ; carries the sign of the mean difference.
pub const SMD_SENTINEL: f64 = 1e6;
/// Lower bound on the MMD kernel bandwidth.
pub const MIN_BANDWIDTH: f64 = 1e-6;
pub const JSD_SMOOTHING: f64 = 1e-12;
pub const DEFAULT_JSD_BINS: usize = 20;

/// A metric value plus a flag for the degenerate-input convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub flagged: bool,
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn need_len(curve: &[f64], what: &str) -> Result<()> {
    if curve.len() < 2 {
        return Err(Error::Contract(format!("{what} needs a curve of length >= 2, got {}", curve.len())));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("{what}: non-finite curve value")));
    }
    Ok(())
}

/// Spearman correlation between curve values and frame order. A constant
/// curve scores 0 and is flagged.
pub fn spearman(curve: &[f64]) -> Result<Flagged> {
    need_len(curve, "spearman")?;
    let ranks = average_ranks(curve);
    let order: Vec<f64> = (1..=curve.len()).map(|t| t as f64).collect();
    Ok(match pearson(&ranks, &order) {
        Some(value) => Flagged { value, flagged: false },
        None => Flagged { value: 0.0, flagged: true },
    })
}

/// Fraction of consecutive steps with a strict increase.
pub fn monotonicity(curve: &[f64]) -> Result<f64> {
    need_len(curve, "monotonicity")?;
    let ups = curve.windows(2).filter(|w| w[1] > w[0]).count();
    Ok(ups as f64 / (curve.len() - 1) as f64)
}

fn need_populations(s: &[f64], f: &[f64], what: &str) -> Result<()> {
    if s.is_empty() || f.is_empty() {
        return Err(Error::Contract(format!("{what} needs two non-empty populations")));
    }
    if s.iter().chain(f).any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("{what}: non-finite value")));
    }
    Ok(())
}

/// Median of pairwise absolute differences over the pooled sample, floored
/// at [`MIN_BANDWIDTH`].
pub fn median_bandwidth(s: &[f64], f: &[f64]) -> f64 {
    let pooled: Vec<f64> = s.iter().chain(f).copied().collect();
    let mut d: Vec<f64> = Vec::with_capacity(pooled.len() * pooled.len() / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push((pooled[i] - pooled[j]).abs());
        }
    }
    if d.is_empty() {
        return MIN_BANDWIDTH;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    med.max(MIN_BANDWIDTH)
}

fn rbf_mean(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut acc = 0.0;
    for x in a {
        for y in b {
            acc += (-(x - y) * (x - y) * inv).exp();
        }
    }
    acc / (a.len() * b.len()) as f64
}

/// Biased squared MMD with an RBF kernel of bandwidth `sigma`.
pub fn mmd_with_bandwidth(s: &[f64], f: &[f64], sigma: f64) -> Result<f64> {
    need_populations(s, f, "mmd")?;
    if !(sigma > 0.0) {
        return Err(Error::Contract("mmd bandwidth must be positive".into()));
    }
    let v = rbf_mean(s, s, sigma) + rbf_mean(f, f, sigma) - 2.0 * rbf_mean(s, f, sigma);
    Ok(v.max(0.0))
}

/// Squared MMD with the median-heuristic bandwidth.
pub fn mmd(s: &[f64], f: &[f64]) -> Result<f64> {
    need_populations(s, f, "mmd")?;
    mmd_with_bandwidth(s, f, median_bandwidth(s, f))
}

fn histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![JSD_SMOOTHING; bins];
    for v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= total);
    h
}

/// Jensen-Shannon divergence (natural log) of the two populations'
/// histograms over `bins` equal-width bins on `[0, 1]`.
pub fn jsd(s: &[f64], f: &[f64], bins: usize) -> Result<f64> {
    need_populations(s, f, "jsd")?;
    if bins == 0 {
        return Err(Error::Contract("jsd needs at least one bin".into()));
    }
    Ok(jsd_of_distributions(&histogram(s, bins), &histogram(f, bins)))
}

/// JSD of two strictly positive probability vectors.
pub fn jsd_of_distributions(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).ln()).sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).clamp(0.0, std::f64::consts::LN_2)
}

fn mean_and_sample_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

/// Standardized mean difference with pooled sample standard deviation.
pub fn smd(s: &[f64], f: &[f64]) -> Result<Flagged> {
    need_populations(s, f, "smd")?;
    let (n, m) = (s.len(), f.len());
    if n + m < 3 {
        return Err(Error::Contract(format!("smd needs n + m >= 3, got {}", n + m)));
    }
    let (ms, vs) = mean_and_sample_var(s);
    let (mf, vf) = mean_and_sample_var(f);
    let pooled = (((n - 1) as f64 * vs + (m - 1) as f64 * vf) / (n + m - 2) as f64).sqrt();
    let diff = ms - mf;
    if pooled < 1e-12 {
        return Ok(if diff == 0.0 {
            Flagged { value: 0.0, flagged: false }
        } else {
            Flagged { value: SMD_SENTINEL.copysign(diff), flagged: true }
        });
    }
    Ok(Flagged { value: diff / pooled, flagged: false })
}
