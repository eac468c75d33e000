//! SLE_kappa traces from Brownian driving, SLE in lattice domains and the
//! Green's function shape.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conformal::{sine_and_radius, HalfPlaneMap};
use crate::error::Result;
use crate::loewner::{slit_height, slit_inverse, slit_map_real, DrivingRecord};
use crate::metrics::{Curve, TimeTag};

type C = Complex64;

/// Brownian driving U = sqrt(kappa/2) B sampled on the given capacity grid.
pub fn sample_driving_on<R: Rng + ?Sized>(kappa: f64, times: Vec<f64>, rng: &mut R) -> DrivingRecord {
    let sd = (kappa / 2.0).sqrt();
    let mut values = Vec::with_capacity(times.len());
    let mut u = 0.0;
    values.push(0.0);
    for k in 1..times.len() {
        let z: f64 = StandardNormal.sample(rng);
        u += sd * (times[k] - times[k - 1]).sqrt() * z;
        values.push(u);
    }
    DrivingRecord::new(times, values).expect("valid grid")
}

/// Uniform grid 0, dt, ..., total.
pub fn uniform_grid(total: f64, dt: f64) -> Vec<f64> {
    let n = (total / dt).round() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

/// Uniform steps dt up to t0, then steps dt * (t / t0)^2 up to t_max.
pub fn geometric_grid(dt: f64, t0: f64, t_max: f64) -> Vec<f64> {
    let mut g = uniform_grid(t0, dt);
    let mut t = *g.last().unwrap();
    while t < t_max {
        let step = dt * (t / t0).powi(2);
        t += step;
        g.push(t);
    }
    g
}

pub fn sample_driving<R: Rng + ?Sized>(kappa: f64, total: f64, dt: f64, rng: &mut R) -> DrivingRecord {
    sample_driving_on(kappa, uniform_grid(total, dt), rng)
}

/// gamma(t_k) = g_{k-1}^{-1}(U_k + i sqrt(2 dt_k)), by direct composition.
pub fn trace_naive(rec: &DrivingRecord) -> Curve {
    let steps: Vec<(f64, f64)> = rec.steps().collect();
    let mut pts = vec![C::new(rec.values[0], 0.0)];
    for k in 0..steps.len() {
        let (u, dt) = steps[k];
        let mut w = C::new(u, slit_height(dt));
        for &(uj, dtj) in steps[..k].iter().rev() {
            w = slit_inverse(uj, dtj, w);
        }
        pts.push(w);
    }
    Curve::new(pts, rec.times.clone(), TimeTag::Capacity).expect("valid times")
}

const LEAF: usize = 16;
const SAMPLES: usize = 64;
const TERMS: usize = 24;
const FAR: f64 = 3.0;

/// Composition G_lo o ... o G_{hi-1} of inverse slit maps, with a Laurent
/// expansion about the real interval where it fails to be analytic.
struct Node {
    lo: usize,
    hi: usize,
    center: f64,
    radius: f64,
    coef: Vec<f64>,
    children: Option<(usize, usize)>,
}

/// Hierarchical evaluator for prefix compositions of inverse slit maps.
pub struct InverseTree {
    steps: Vec<(f64, f64)>,
    nodes: Vec<Node>,
    root: usize,
}

impl InverseTree {
    pub fn new(steps: Vec<(f64, f64)>) -> Self {
        let mut t = InverseTree { steps, nodes: Vec::new(), root: 0 };
        if !t.steps.is_empty() {
            t.root = t.build(0, t.steps.len()).0;
        }
        t
    }

    /// Returns node index and its singular interval.
    fn build(&mut self, lo: usize, hi: usize) -> (usize, f64, f64) {
        if hi - lo <= LEAF {
            let (mut l, mut r) = (f64::INFINITY, f64::NEG_INFINITY);
            for j in lo..hi {
                let (u, dt) = self.steps[j];
                let s = slit_height(dt);
                if l.is_finite() {
                    l = slit_map_real(u, dt, l).min(u - s);
                    r = slit_map_real(u, dt, r).max(u + s);
                } else {
                    l = u - s;
                    r = u + s;
                }
            }
            let idx = self.nodes.len();
            self.nodes.push(Node { lo, hi, center: 0.5 * (l + r), radius: 0.5 * (r - l), coef: Vec::new(), children: None });
            return (idx, l, r);
        }
        let mid = lo + (hi - lo) / 2;
        let (li, ll, lr) = self.build(lo, mid);
        let (ri, rl, rr) = self.build(mid, hi);
        let (mut l, mut r) = (ll, lr);
        for j in mid..hi {
            let (u, dt) = self.steps[j];
            l = slit_map_real(u, dt, l);
            r = slit_map_real(u, dt, r);
        }
        let (l, r) = (l.min(rl), r.max(rr));
        let idx = self.nodes.len();
        let center = 0.5 * (l + r);
        let radius = 0.5 * (r - l);
        self.nodes.push(Node { lo, hi, center, radius, coef: Vec::new(), children: Some((li, ri)) });
        let rad = 1.5 * radius;
        let mut f = vec![C::new(0.0, 0.0); SAMPLES];
        for j in 0..SAMPLES / 2 {
            let th = std::f64::consts::PI * (2 * j + 1) as f64 / SAMPLES as f64;
            let w = C::new(center, 0.0) + C::from_polar(rad, th);
            let v = self.eval_children(li, ri, w) - w;
            f[j] = v;
            f[SAMPLES - 1 - j] = v.conj();
        }
        let mut coef = Vec::with_capacity(TERMS + 1);
        for k in 0..=TERMS {
            let mut acc = C::new(0.0, 0.0);
            for (j, v) in f.iter().enumerate() {
                let th = std::f64::consts::PI * (2 * j + 1) as f64 / SAMPLES as f64;
                acc += v * C::from_polar(1.0, k as f64 * th);
            }
            coef.push(acc.re / SAMPLES as f64 * rad.powi(k as i32));
        }
        self.nodes[idx].coef = coef;
        (idx, l, r)
    }

    fn eval_children(&self, li: usize, ri: usize, w: C) -> C {
        let w = self.eval_node(ri, w);
        self.eval_node(li, w)
    }

    fn eval_node(&self, idx: usize, w: C) -> C {
        let n = &self.nodes[idx];
        match n.children {
            None => {
                let mut z = w;
                for j in (n.lo..n.hi).rev() {
                    let (u, dt) = self.steps[j];
                    z = slit_inverse(u, dt, z);
                }
                z
            }
            Some((li, ri)) => {
                let d = w - n.center;
                if d.norm() > FAR * n.radius {
                    let x = d.inv();
                    let mut acc = 0.0 * x;
                    for &a in n.coef.iter().rev() {
                        acc = acc * x + a;
                    }
                    let z = w + acc;
                    if z.im < 0.0 {
                        C::new(z.re, 0.0)
                    } else {
                        z
                    }
                } else {
                    self.eval_children(li, ri, w)
                }
            }
        }
    }

    fn eval_prefix(&self, idx: usize, end: usize, w: C) -> C {
        let n = &self.nodes[idx];
        if n.hi <= end {
            return self.eval_node(idx, w);
        }
        if n.lo >= end {
            return w;
        }
        match n.children {
            None => {
                let mut z = w;
                for j in (n.lo..end).rev() {
                    let (u, dt) = self.steps[j];
                    z = slit_inverse(u, dt, z);
                }
                z
            }
            Some((li, ri)) => {
                let w = self.eval_prefix(ri, end, w);
                self.eval_prefix(li, end, w)
            }
        }
    }

    /// G_0 o ... o G_{k-1}(w).
    pub fn apply_prefix(&self, k: usize, w: C) -> C {
        if k == 0 || self.steps.is_empty() {
            return w;
        }
        self.eval_prefix(self.root, k, w)
    }
}

/// Capacity-parametrized trace of a record.
pub fn trace(rec: &DrivingRecord) -> Curve {
    let steps: Vec<(f64, f64)> = rec.steps().collect();
    if steps.len() <= 4 * LEAF {
        return trace_naive(rec);
    }
    let tree = InverseTree::new(steps);
    let mut pts = Vec::with_capacity(rec.len());
    pts.push(C::new(rec.values[0], 0.0));
    for k in 0..tree.steps.len() {
        let (u, dt) = tree.steps[k];
        pts.push(tree.apply_prefix(k, C::new(u, slit_height(dt))));
    }
    Curve::new(pts, rec.times.clone(), TimeTag::Capacity).expect("valid times")
}

/// Pointwise F^{-1}; capacity timestamps are kept.
pub fn map_into_domain(curve: &Curve, m: &HalfPlaneMap) -> Result<Curve> {
    let pts = curve.points().iter().map(|&w| m.inverse(w)).collect::<Result<Vec<_>>>()?;
    Curve::new(pts, curve.times().to_vec(), curve.tag)
}

/// Smallest distance between trace points more than `window` indices apart.
pub fn min_self_distance(points: &[C], window: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + window + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

/// d = 1 + kappa/8 and beta = 8/kappa - 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenShape {
    pub kappa: f64,
    pub d: f64,
    pub beta: f64,
}

impl GreenShape {
    pub fn new(kappa: f64) -> Self {
        GreenShape { kappa, d: 1.0 + kappa / 8.0, beta: 8.0 / kappa - 1.0 }
    }

    /// r^{d-2} S^beta.
    pub fn from_sine_radius(&self, s: f64, r: f64) -> f64 {
        r.powf(self.d - 2.0) * s.powf(self.beta)
    }
}

/// Green's function in D_A at z without the unknown constant.
pub fn green_shape_value(gs: &GreenShape, m: &HalfPlaneMap, z: C) -> Result<f64> {
    let (s, r) = sine_and_radius(m, z)?;
    Ok(gs.from_sine_radius(s, r))
}

/// One row of the one-point table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnePointRow {
    pub z: [f64; 2],
    pub eps: f64,
    pub hits: u64,
    pub replicas: u64,
    pub probability: f64,
    pub stderr: f64,
    pub green: f64,
    pub ratio: f64,
}

/// dist(z, curve) for each z.
pub fn distances_to_points(curve_pts: &[C], zs: &[C]) -> Vec<f64> {
    zs.iter()
        .map(|&z| curve_pts.iter().map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Monte Carlo P{dist(z, gamma) <= eps} and its ratio to eps^{2-d} G.
/// `dists[i][j]` is dist(z_j, gamma_i) for replica i.
pub fn one_point_table(gs: &GreenShape, m: &HalfPlaneMap, zs: &[C], eps: &[f64], dists: &[Vec<f64>]) -> Result<Vec<OnePointRow>> {
    let mut rows = Vec::new();
    let n = dists.len() as u64;
    for (j, &z) in zs.iter().enumerate() {
        let g = green_shape_value(gs, m, z)?;
        for &e in eps {
            let hits = dists.iter().filter(|d| d[j] <= e).count() as u64;
            let p = hits as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let norm = e.powf(2.0 - gs.d) * g;
            rows.push(OnePointRow {
                z: [z.re, z.im],
                eps: e,
                hits,
                replicas: n,
                probability: p,
                stderr: se,
                green: g,
                ratio: p / norm,
            });
        }
    }
    Ok(rows)
}

/// Samples SLE_kappa in the domain of `m` and tabulates one-point ratios.
#[allow(clippy::too_many_arguments)]
pub fn one_point_ratio<R: Rng + ?Sized>(
    kappa: f64,
    m: &HalfPlaneMap,
    zs: &[C],
    eps: &[f64],
    replicas: usize,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<OnePointRow>> {
    let gs = GreenShape::new(kappa);
    let mut dists = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        let rec = sample_driving_on(kappa, grid.to_vec(), rng);
        let c = map_into_domain(&trace(&rec), m)?;
        dists.push(distances_to_points(c.points(), zs));
    }
    one_point_table(&gs, m, zs, eps, &dists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loewner::extract_driving;
    use crate::stats::replica_rng;

    #[test]
    fn zero_driving_is_vertical() {
        let rec = sample_driving(0.0, 1.0, 1e-3, &mut replica_rng(1, 0));
        assert!(rec.values.iter().all(|&u| u == 0.0));
        let c = trace(&rec);
        for (t, p) in c.times().iter().zip(c.points()) {
            assert!((p - C::new(0.0, (2.0 * t).sqrt())).norm() < 1e-6, "{t} {p}");
        }
    }

    #[test]
    fn tree_matches_naive() {
        let rec = sample_driving(2.0, 1.0, 1.0 / 3000.0, &mut replica_rng(5, 0));
        let a = trace_naive(&rec);
        let b = trace(&rec);
        let err = a.points().iter().zip(b.points()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn round_trip_driving() {
        let rec = sample_driving(2.0, 1.0, 1e-3, &mut replica_rng(9, 0));
        let c = trace(&rec);
        let ex = extract_driving(c.points(), 1e-3, f64::INFINITY).unwrap();
        let err = ex.micro.values.iter().zip(&rec.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn green_shape_constants() {
        let g = GreenShape::new(2.0);
        assert_eq!((g.d, g.beta), (1.25, 3.0));
        assert!((g.from_sine_radius(1.0, 16.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn geometric_grid_grows() {
        let g = geometric_grid(1e-3, 1.0, 10.0);
        assert!(*g.last().unwrap() >= 10.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.len() < 2000);
    }
}
