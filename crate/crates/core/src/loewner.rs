//! Discrete Loewner machinery with the normalization dg/dt = 1/(g - U),
//! hcap = t. Elementary maps are vertical slits of height sqrt(2 dt).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

type C = Complex64;

const ONE: C = C::new(1.0, 0.0);

/// Slit height for a capacity increment.
#[inline]
pub fn slit_height(dt: f64) -> f64 {
    (2.0 * dt).sqrt()
}

/// Capacity of a vertical slit of height y.
#[inline]
pub fn slit_capacity(y: f64) -> f64 {
    0.5 * y * y
}

/// g(z) = U + sqrt((z - U)^2 + 2 dt) and g'(z).
#[inline]
pub fn slit_map(u: f64, dt: f64, z: C) -> (C, C) {
    let w = z - u;
    if w.norm_sqr() == 0.0 {
        return (C::new(u, slit_height(dt)), C::new(f64::INFINITY, 0.0));
    }
    let r = (ONE + 2.0 * dt / (w * w)).sqrt();
    let g = w * r;
    let g = if g.im < 0.0 { C::new(g.re, 0.0) } else { g };
    (g + u, w / g)
}

/// Real points; the slit base collapses to U (tip side is not defined here).
#[inline]
pub fn slit_map_real(u: f64, dt: f64, x: f64) -> f64 {
    let w = x - u;
    u + w.signum() * (w * w + 2.0 * dt).sqrt()
}

/// Inverse slit map U + sqrt((w - U)^2 - 2 dt) on the closed half-plane.
#[inline]
pub fn slit_inverse(u: f64, dt: f64, w: C) -> C {
    let v = w - u;
    if v.norm_sqr() == 0.0 {
        return C::new(u, slit_height(dt));
    }
    let z = v * (ONE - 2.0 * dt / (v * v)).sqrt();
    let z = if z.im < 0.0 { -z } else { z };
    z + u
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Constant,
    Linear,
}

/// Driving values U_k at capacities t_0 = 0 < t_1 < ...; U_k drives the
/// elementary map on (t_{k-1}, t_k].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingRecord {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub interpolation: Interpolation,
}

impl DrivingRecord {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(LabError::Config("driving record needs matching times and values".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Config("driving times must be strictly increasing".into()));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(LabError::Config("driving record has non-finite entries".into()));
        }
        Ok(DrivingRecord { times, values, interpolation: Interpolation::Constant })
    }

    /// Elementary steps (U_k, dt_k), k = 1..n.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..self.times.len()).map(move |k| (self.values[k], self.times[k] - self.times[k - 1]))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_capacity(&self) -> f64 {
        self.times.last().unwrap() - self.times[0]
    }

    /// U at capacity t.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&s| s < t);
        match self.interpolation {
            Interpolation::Constant => self.values[k],
            Interpolation::Linear => {
                let (t0, t1) = (self.times[k - 1], self.times[k]);
                let u = (t - t0) / (t1 - t0);
                self.values[k - 1] * (1.0 - u) + self.values[k] * u
            }
        }
    }

    /// Prefix with t_k <= t.
    pub fn truncated(&self, t: f64) -> DrivingRecord {
        let k = self.times.partition_point(|&s| s <= t).max(1);
        DrivingRecord {
            times: self.times[..k].to_vec(),
            values: self.values[..k].to_vec(),
            interpolation: self.interpolation,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,t,u\n");
        for (k, (t, u)) in self.times.iter().zip(&self.values).enumerate() {
            s.push_str(&format!("{k},{t:.12e},{u:.12e}\n"));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || LabError::Io(format!("malformed driving row {}", ln + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            times.push(f[1].trim().parse::<f64>().map_err(|_| bad())?);
            values.push(f[2].trim().parse::<f64>().map_err(|_| bad())?);
        }
        DrivingRecord::new(times, values)
    }

    pub fn chain(&self) -> MapChain {
        MapChain { steps: self.steps().collect() }
    }
}

/// g_n = g^n o ... o g^1.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MapChain {
    pub steps: Vec<(f64, f64)>,
}

impl MapChain {
    pub fn push(&mut self, u: f64, dt: f64) {
        self.steps.push((u, dt));
    }

    pub fn total_capacity(&self) -> f64 {
        self.steps.iter().map(|s| s.1).sum()
    }

    pub fn eval(&self, z: C) -> C {
        self.steps.iter().fold(z, |w, &(u, dt)| slit_map(u, dt, w).0)
    }

    pub fn eval_with_derivative(&self, z: C) -> (C, C) {
        let mut w = z;
        let mut d = ONE;
        for &(u, dt) in &self.steps {
            let (w2, dw) = slit_map(u, dt, w);
            w = w2;
            d *= dw;
        }
        (w, d)
    }

    pub fn eval_prefix(&self, k: usize, z: C) -> C {
        self.steps[..k].iter().fold(z, |w, &(u, dt)| slit_map(u, dt, w).0)
    }

    pub fn inverse(&self, w: C) -> C {
        self.steps.iter().rev().fold(w, |z, &(u, dt)| slit_inverse(u, dt, z))
    }
}

/// hcap from lim z (g(z) - z), extrapolated in 1/z along the imaginary axis.
pub fn hcap_of_map(g: impl Fn(C) -> C) -> Result<f64> {
    let radii = [1e2, 10f64.powf(2.0 + 1.0 / 3.0), 10f64.powf(2.0 + 2.0 / 3.0), 1e3];
    let samples: Vec<(f64, C)> = radii
        .iter()
        .map(|&r| {
            let z = C::new(0.0, r);
            (r, z * (g(z) - z))
        })
        .collect();
    let extrapolate = |pts: &[(f64, C)]| -> f64 {
        // Lagrange interpolation in x = 1/r evaluated at x = 0.
        let mut acc = C::new(0.0, 0.0);
        for (i, &(ri, ei)) in pts.iter().enumerate() {
            let xi = 1.0 / ri;
            let mut w = 1.0;
            for (j, &(rj, _)) in pts.iter().enumerate() {
                if i != j {
                    let xj = 1.0 / rj;
                    w *= xj / (xj - xi);
                }
            }
            acc += ei * w;
        }
        acc.re
    };
    let a = extrapolate(&samples[..3]);
    let b = extrapolate(&samples);
    if (a - b).abs() > 1e-6 * a.abs().max(1e-6) {
        return Err(LabError::NonConvergentExpansion(a, b));
    }
    Ok(b)
}

/// A compact hull in H with cached radius and capacity.
#[derive(Clone, Debug)]
pub struct Hull {
    pub points: Vec<C>,
    pub rad: f64,
    pub hcap: f64,
}

impl Hull {
    /// Hull generated by a driving record (the union of its slits).
    pub fn from_record(rec: &DrivingRecord) -> Hull {
        let pts = crate::sle::trace(rec).points().to_vec();
        let rad = pts.iter().map(|p| p.norm()).fold(0.0, f64::max);
        Hull { points: pts, rad, hcap: rec.total_capacity() }
    }
}

/// Micro and meso outputs of `extract_driving`.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub micro: DrivingRecord,
    pub meso: DrivingRecord,
    /// Micro index closing each meso piece.
    pub meso_index: Vec<usize>,
    pub chain: MapChain,
    /// Number of curve points consumed.
    pub consumed: usize,
}

/// Vertical-slit zipper along the curve points (first point on R). Meso
/// pieces close when their hcap reaches h or their image diameter reaches
/// h^{2/5}. Stops once the total capacity reaches `max_capacity`.
pub fn extract_driving(points: &[C], h: f64, max_capacity: f64) -> Result<Extraction> {
    if points.len() < 2 {
        return Err(LabError::Config("curve needs at least two points".into()));
    }
    let start = points[0].re;
    let mut chain = MapChain::default();
    let mut times = vec![0.0];
    let mut values = vec![start];
    let mut meso_t = vec![0.0];
    let mut meso_u = vec![start];
    let mut meso_index = vec![0];
    let diam_cap = h.powf(0.4);
    let mut piece_start = 0usize;
    let mut piece_lo = C::new(start, 0.0);
    let mut piece_hi = C::new(start, 0.0);
    let mut total = 0.0;
    let mut consumed = 1;
    for (k, &p) in points.iter().enumerate().skip(1) {
        if total >= max_capacity {
            break;
        }
        let mut w = p;
        let mut piece_img = p;
        for (j, &(u, dt)) in chain.steps.iter().enumerate() {
            if j == piece_start {
                piece_img = w;
            }
            w = slit_map(u, dt, w).0;
        }
        if piece_start == chain.steps.len() {
            piece_img = w;
        }
        if !(w.im > 0.0) || !w.is_finite() {
            return Err(LabError::TipEscapedResolution(k));
        }
        let dt = slit_capacity(w.im);
        chain.push(w.re, dt);
        total += dt;
        times.push(total);
        values.push(w.re);
        consumed = k + 1;
        piece_lo = C::new(piece_lo.re.min(piece_img.re), piece_lo.im.min(piece_img.im));
        piece_hi = C::new(piece_hi.re.max(piece_img.re), piece_hi.im.max(piece_img.im));
        let piece_cap = total - meso_t.last().unwrap();
        if piece_cap >= h || (piece_hi - piece_lo).norm() >= diam_cap {
            meso_t.push(total);
            meso_u.push(w.re);
            meso_index.push(chain.steps.len());
            piece_start = chain.steps.len();
            piece_lo = C::new(w.re, 0.0);
            piece_hi = piece_lo;
        }
    }
    if meso_t.len() == 1 && times.len() > 1 {
        meso_t.push(total);
        meso_u.push(*values.last().unwrap());
        meso_index.push(chain.steps.len());
    }
    Ok(Extraction {
        micro: DrivingRecord::new(times, values)?,
        meso: DrivingRecord::new(meso_t, meso_u)?,
        meso_index,
        chain,
        consumed,
    })
}

/// z_k = g_k(z) with running derivatives.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub points: Vec<C>,
    pub derivatives: Vec<C>,
    /// First step at which Im z_k fell below the resolution.
    pub hit_hull: Option<usize>,
}

pub fn evolve(rec: &DrivingRecord, z: C, y_min: f64) -> Trajectory {
    let mut points = vec![z];
    let mut derivatives = vec![ONE];
    let (mut w, mut d) = (z, ONE);
    for (k, (u, dt)) in rec.steps().enumerate() {
        let (w2, dw) = slit_map(u, dt, w);
        debug_assert!(w2.im <= w.im + 1e-12 * w.im.abs().max(1.0));
        w = w2;
        d *= dw;
        points.push(w);
        derivatives.push(d);
        if w.im < y_min {
            return Trajectory { points, derivatives, hit_hull: Some(k + 1) };
        }
    }
    Trajectory { points, derivatives, hit_hull: None }
}

/// -sum Re dt_j / (z_{j-1} - U_j)^2, the first-order value of log |g_n'|.
pub fn log_derivative_estimate(rec: &DrivingRecord, traj: &Trajectory) -> f64 {
    rec.steps()
        .zip(&traj.points)
        .map(|((u, dt), &z)| {
            let w = z - u;
            -(dt / (w * w)).re
        })
        .sum()
}

/// nu = min_j sin arg(z_{j-1} - U_j).
pub fn angle_parameter(rec: &DrivingRecord, traj: &Trajectory) -> f64 {
    rec.steps()
        .zip(&traj.points)
        .map(|((u, _), &z)| {
            let w = z - u;
            w.im / w.norm()
        })
        .fold(1.0, f64::min)
}

/// |g_n'(z)| / (y_n / y)^{1 - 2 nu^2}; the derivative lower bound says this
/// stays above a constant.
pub fn derivative_bound_ratio(rec: &DrivingRecord, z: C) -> f64 {
    let traj = evolve(rec, z, 0.0);
    let nu = angle_parameter(rec, &traj);
    let zn = *traj.points.last().unwrap();
    let dn = traj.derivatives.last().unwrap().norm();
    dn / (zn.im / z.im).powf(1.0 - 2.0 * nu * nu)
}

/// Hypotheses of the chain comparison that can be checked from the records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonParams {
    pub h: f64,
    pub r: f64,
    pub eps: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainComparison {
    /// sup |g_n(z) - g~_n(z)| over admissible grid points.
    pub sup_difference: f64,
    /// max over admissible points of |g_n - g~_n| / ((eps/delta)(y ^ 1)).
    pub constant_estimate: f64,
    pub admissible_points: usize,
}

fn check_hypotheses(rec: &DrivingRecord, other: &DrivingRecord, p: &ComparisonParams) -> Result<()> {
    let ComparisonParams { h, r, eps, delta } = *p;
    if !(0.0 < h && h < r * r && r < eps && eps * eps < delta.powi(8) && delta < 1.0) {
        return Err(LabError::HypothesisViolation {
            step: 0,
            reason: "need 0 < h < r^2 < eps^2 < delta^8 < 1".into(),
        });
    }
    if rec.len() != other.len() {
        return Err(LabError::HypothesisViolation { step: 0, reason: "records differ in length".into() });
    }
    if (rec.len() - 1) as f64 > 1.0 / h {
        return Err(LabError::HypothesisViolation { step: rec.len() - 1, reason: "n > 1/h".into() });
    }
    for (j, ((u1, h1), (u2, h2))) in rec.steps().zip(other.steps()).enumerate() {
        let tol = h * r / delta;
        let reason = if (h1 - h).abs() > tol || (h2 - h).abs() > tol {
            Some("capacity increment off h")
        } else if slit_height(h1) > r || slit_height(h2) > r {
            Some("hull radius exceeds r")
        } else if (u1 - u2).abs() > eps {
            Some("driving gap exceeds eps")
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(LabError::HypothesisViolation { step: j + 1, reason: reason.into() });
        }
    }
    Ok(())
}

/// Empirical form of the chain comparison estimate.
pub fn compare_chains(
    rec: &DrivingRecord,
    other: &DrivingRecord,
    params: &ComparisonParams,
    grid: &[C],
) -> Result<ChainComparison> {
    check_hypotheses(rec, other, params)?;
    let (c1, c2) = (rec.chain(), other.chain());
    let mut sup: f64 = 0.0;
    let mut cst: f64 = 0.0;
    let mut count = 0;
    for &z in grid {
        let (a, b) = (c1.eval(z), c2.eval(z));
        if a.im < params.delta || b.im < params.delta {
            continue;
        }
        count += 1;
        let d = (a - b).norm();
        sup = sup.max(d);
        cst = cst.max(d / (params.eps / params.delta * z.im.min(1.0)));
    }
    Ok(ChainComparison { sup_difference: sup, constant_estimate: cst, admissible_points: count })
}

/// max over test points of |g(z) - z - t/z| |z|^2 / (t r) for the hull of a
/// record, evaluated on circles of radius 2r, 4r and 8r.
pub fn difference_constant(rec: &DrivingRecord) -> f64 {
    let hull = Hull::from_record(rec);
    let t = hull.hcap;
    let r = hull.rad;
    let chain = rec.chain();
    let mut c: f64 = 0.0;
    for m in [2.0, 4.0, 8.0] {
        for j in 1..16 {
            let z = C::from_polar(m * r, std::f64::consts::PI * j as f64 / 16.0);
            let g = chain.eval(z);
            let e = (g - z - t / z).norm() * z.norm_sqr() / (t * r);
            c = c.max(e);
        }
    }
    c
}
