//! Parametrized planar curves, the curve distance rho and truncation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeTag {
    Capacity,
    Natural,
    Lattice,
}

impl TimeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeTag::Capacity => "capacity",
            TimeTag::Natural => "natural",
            TimeTag::Lattice => "lattice",
        }
    }
}

/// Polyline with nondecreasing timestamps, linearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    points: Vec<Complex64>,
    times: Vec<f64>,
    pub tag: TimeTag,
}

impl Curve {
    pub fn new(points: Vec<Complex64>, times: Vec<f64>, tag: TimeTag) -> Result<Self> {
        if points.is_empty() || points.len() != times.len() {
            return Err(LabError::InvalidDomain("curve needs matching nonempty points and times".into()));
        }
        if times.windows(2).any(|w| !(w[1] >= w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(LabError::InvalidDomain("curve times must be finite and nondecreasing".into()));
        }
        Ok(Curve { points, times, tag })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Position at time t (clamped to the time range).
    pub fn eval(&self, t: f64) -> Complex64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.points[0];
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if t1 <= t0 {
            return self.points[k];
        }
        let u = (t - t0) / (t1 - t0);
        self.points[k - 1] + (self.points[k] - self.points[k - 1]) * u
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.points)
    }

    /// Same trace with times mapped by t -> f(t); f must be nondecreasing.
    pub fn retime(&self, f: impl Fn(f64) -> f64, tag: TimeTag) -> Result<Curve> {
        Curve::new(self.points.clone(), self.times.iter().map(|&t| f(t)).collect(), tag)
    }

    /// k+1 points equally spaced in time.
    pub fn resample(&self, k: usize) -> Curve {
        let k = k.max(1);
        let (a, d) = (self.start_time(), self.duration());
        let times: Vec<f64> = (0..=k).map(|i| a + d * i as f64 / k as f64).collect();
        let points = times.iter().map(|&t| self.eval(t)).collect();
        Curve { points, times, tag: self.tag }
    }

    /// Inserts the midpoint of every segment.
    pub fn refined(&self) -> Curve {
        let n = self.len();
        let mut points = Vec::with_capacity(2 * n);
        let mut times = Vec::with_capacity(2 * n);
        for i in 0..n {
            if i > 0 {
                points.push((self.points[i - 1] + self.points[i]) * 0.5);
                times.push(0.5 * (self.times[i - 1] + self.times[i]));
            }
            points.push(self.points[i]);
            times.push(self.times[i]);
        }
        Curve { points, times, tag: self.tag }
    }

    /// Largest spatial step plus largest time step.
    pub fn modulus(&self) -> f64 {
        let ds = self.points.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
        let dt = self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        ds + dt
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,tag\n");
        for (t, p) in self.times.iter().zip(&self.points) {
            s.push_str(&format!("{t:.12e},{:.12e},{:.12e},{}\n", p.re, p.im, self.tag.as_str()));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Curve> {
        let mut points = Vec::new();
        let mut times = Vec::new();
        let mut tag = TimeTag::Lattice;
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || LabError::Io(format!("malformed curve row {}", ln + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            times.push(num(f[0])?);
            points.push(Complex64::new(num(f[1])?, num(f[2])?));
            tag = match f[3].trim() {
                "capacity" => TimeTag::Capacity,
                "natural" => TimeTag::Natural,
                "lattice" => TimeTag::Lattice,
                _ => return Err(bad()),
            };
        }
        Curve::new(points, times, tag)
    }
}

pub fn diameter(points: &[Complex64]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max((points[i] - points[j]).norm());
        }
    }
    d
}

/// Smallest achievable sup spatial gap over monotone alignments whose time
/// gap never exceeds tau. Infinite when no alignment fits the band.
fn band_minimax(p: &[Complex64], s: &[f64], q: &[Complex64], u: &[f64], tau: f64) -> f64 {
    let m = q.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..p.len() {
        for j in 0..m {
            if (s[i] - u[j]).abs() > tau {
                cur[j] = f64::INFINITY;
                continue;
            }
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut b = f64::INFINITY;
                if i > 0 {
                    b = b.min(prev[j]);
                    if j > 0 {
                        b = b.min(prev[j - 1]);
                    }
                }
                if j > 0 {
                    b = b.min(cur[j - 1]);
                }
                b
            };
            cur[j] = if best.is_finite() { best.max((p[i] - q[j]).norm()) } else { f64::INFINITY };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// rho distance with the discretization modulus of the inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoEstimate {
    pub value: f64,
    pub time_term: f64,
    pub space_term: f64,
    pub modulus: f64,
}

/// inf over alignments of sup|alpha(t) - t| + sup|c2(alpha(t)) - c1(t)|.
pub fn rho_distance(c1: &Curve, c2: &Curve) -> f64 {
    rho_estimate(c1, c2).value
}

pub fn rho_estimate(c1: &Curve, c2: &Curve) -> RhoEstimate {
    let modulus = c1.modulus().max(c2.modulus());
    let a = c1.refined();
    let b = c2.refined();
    let (p, s, q, u) = (&a.points, &a.times, &b.points, &b.times);
    let tau0 = (s[0] - u[0]).abs().max((s[s.len() - 1] - u[u.len() - 1]).abs());
    let tau_max = (s[s.len() - 1] - u[0]).abs().max((u[u.len() - 1] - s[0]).abs()).max(tau0);
    let slack = 1e-12 * (1.0 + tau_max);
    let eval = |tau: f64| tau + band_minimax(p, s, q, u, tau + slack);
    let mut best = (eval(tau0), tau0);
    let coarse = 32;
    let span = tau_max - tau0;
    if span > 0.0 {
        for k in 1..=coarse {
            let tau = tau0 + span * k as f64 / coarse as f64;
            let v = eval(tau);
            if v < best.0 {
                best = (v, tau);
            }
        }
        let h = span / coarse as f64;
        let lo = (best.1 - h).max(tau0);
        let fine = 16;
        for k in 0..=2 * fine {
            let tau = lo + h * k as f64 / fine as f64;
            if tau > tau_max {
                break;
            }
            let v = eval(tau);
            if v < best.0 {
                best = (v, tau);
            }
        }
    }
    RhoEstimate { value: best.0, time_term: best.1, space_term: best.0 - best.1, modulus }
}

/// What `truncate` cut off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationTail {
    pub duration: f64,
    pub diameter: f64,
}

/// Prefix of the curve up to time t1.
pub fn truncate(c: &Curve, t1: f64) -> Result<(Curve, TruncationTail)> {
    if !(t1 >= c.start_time() && t1 <= c.end_time()) {
        return Err(LabError::OutOfRange(t1));
    }
    let k = c.times.partition_point(|&s| s <= t1);
    let mut points = c.points[..k].to_vec();
    let mut times = c.times[..k].to_vec();
    let end = c.eval(t1);
    if times.last() != Some(&t1) {
        points.push(end);
        times.push(t1);
    }
    let mut tail = vec![end];
    tail.extend_from_slice(&c.points[k..]);
    let diam = diameter(&tail);
    let tr = Curve { points, times, tag: c.tag };
    Ok((tr, TruncationTail { duration: c.end_time() - t1, diameter: diam }))
}
