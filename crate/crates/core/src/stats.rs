//! Estimators shared by the experiments: regression, bootstrap, KS and
//! per-replica random streams.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Independent stream for replica `replica` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
}

/// Ordinary least squares y = intercept + slope x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit { slope, intercept, slope_se, r2 }
}

/// Fit of log y against log x.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn stderr(v: &[f64]) -> f64 {
    (variance(v) / v.len() as f64).sqrt()
}

pub fn skewness(v: &[f64]) -> f64 {
    let m = mean(v);
    let n = v.len() as f64;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub se: f64,
}

/// Percentile bootstrap of a statistic of grouped samples; each group is
/// resampled with replacement independently.
pub fn bootstrap<R, F>(groups: &[Vec<f64>], stat: F, resamples: usize, rng: &mut R) -> Interval
where
    R: Rng + ?Sized,
    F: Fn(&[Vec<f64>]) -> f64,
{
    let estimate = stat(groups);
    let mut vals = Vec::with_capacity(resamples);
    let mut buf: Vec<Vec<f64>> = groups.iter().map(|g| Vec::with_capacity(g.len())).collect();
    for _ in 0..resamples {
        for (g, b) in groups.iter().zip(buf.iter_mut()) {
            b.clear();
            for _ in 0..g.len() {
                b.push(g[rng.random_range(0..g.len())]);
            }
        }
        let v = stat(&buf);
        if v.is_finite() {
            vals.push(v);
        }
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if vals.is_empty() {
        return Interval { estimate, lo: f64::NAN, hi: f64::NAN, se: f64::NAN };
    }
    let q = |p: f64| vals[((p * (vals.len() - 1) as f64).round() as usize).min(vals.len() - 1)];
    Interval { estimate, lo: q(0.025), hi: q(0.975), se: variance(&vals).sqrt() }
}

/// Kolmogorov distribution tail P(K > x).
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * x).powi(2)).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS against the normal law with the sample's own mean and sd.
pub fn ks_normal(v: &[f64]) -> KsResult {
    let m = mean(v);
    let sd = variance(v).sqrt();
    let normal = Normal::new(m, sd.max(1e-300)).expect("valid normal");
    ks_against(v, |x| normal.cdf(x))
}

pub fn ks_against(v: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_tail((en + 0.12 + 0.11 / en) * d) }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    y.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let en = ne.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_tail((en + 0.12 + 0.11 / en) * d) }
}

/// Wilson score interval (95%) for a binomial proportion.
pub fn wilson_interval(hits: u64, n: u64) -> Interval {
    if n == 0 {
        return Interval { estimate: f64::NAN, lo: 0.0, hi: 1.0, se: f64::NAN };
    }
    let z = 1.959963984540054;
    let nf = n as f64;
    let p = hits as f64 / nf;
    let den = 1.0 + z * z / nf;
    let c = (p + z * z / (2.0 * nf)) / den;
    let h = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    Interval { estimate: p, lo: c - h, hi: c + h, se: (p * (1.0 - p) / nf).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn exact_power_law_fit() {
        let x = [8.0, 16.0, 32.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        let f = loglog_fit(&x, &y);
        assert!((f.slope + 0.75).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = replica_rng(1, 0);
        let a: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c: Vec<f64> = b.iter().map(|x: &f64| x + 0.5).collect();
        assert!(ks_normal(&a).p_value > 0.001);
        assert!(ks_two_sample(&a, &b).p_value > 0.001);
        assert!(ks_two_sample(&a, &c).p_value < 1e-6);
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let x: u64 = replica_rng(7, 3).random();
        let y: u64 = replica_rng(7, 3).random();
        let z: u64 = replica_rng(7, 4).random();
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn bootstrap_covers_mean() {
        let mut rng = replica_rng(2, 0);
        let g: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let iv = bootstrap(&[g], |gs| mean(&gs[0]), 1000, &mut rng);
        assert!(iv.lo < 0.0 + 0.15 && iv.hi > -0.15);
        assert!((iv.se - 1.0 / 500f64.sqrt()).abs() < 0.01);
    }
}
