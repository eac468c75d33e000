//! Minkowski content of curves, natural-time reparametrization, Green's
//! function integrals and the content martingale probe.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{sine_radius_of, HalfPlaneMap};
use crate::error::{LabError, Result};
use crate::grid::point_segment_distance;
use crate::loewner::slit_map;
use crate::metrics::{Curve, TimeTag};
use crate::sle::{geometric_grid, sample_driving_on, trace, GreenShape};

type C = Complex64;

/// Relative drift allowed between consecutive plateau values.
pub const PLATEAU_DRIFT: f64 = 0.05;
/// Consecutive dyadic scales forming a plateau.
pub const PLATEAU_LEN: usize = 3;
const MAX_CELLS: usize = 60_000_000;

/// Content of gamma[0, t_k] at each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentProfile {
    pub times: Vec<f64>,
    pub contents: Vec<f64>,
    pub eps_used: Vec<f64>,
    pub plateau: Vec<bool>,
    pub eps_grid: Vec<f64>,
    /// eps^{d-2} Area(eps-neighborhood) per checkpoint and scale.
    pub raw: Vec<Vec<f64>>,
}

impl ContentProfile {
    pub fn total(&self) -> f64 {
        *self.contents.last().unwrap_or(&0.0)
    }

    /// Content at time t, linear between checkpoints.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 || t <= self.times[0] {
            return self.contents.first().copied().unwrap_or(0.0);
        }
        if t >= self.times[n - 1] {
            return self.contents[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let u = (t - t0) / (t1 - t0);
        self.contents[k - 1] * (1.0 - u) + self.contents[k] * u
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,content,eps_used,plateau\n");
        for k in 0..self.times.len() {
            s.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{}\n",
                self.times[k], self.contents[k], self.eps_used[k], self.plateau[k] as u8
            ));
        }
        s
    }
}

/// Plateau value from values ordered by increasing eps: the geometric mean of
/// the finest run of `PLATEAU_LEN` scales with pairwise drift below
/// `PLATEAU_DRIFT`. Falls back to the finest scale with the flag cleared.
pub fn plateau_value(values: &[f64], eps: &[f64]) -> (f64, f64, bool) {
    let n = values.len();
    if n >= PLATEAU_LEN {
        for i in 0..=n - PLATEAU_LEN {
            let w = &values[i..i + PLATEAU_LEN];
            let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = w.iter().cloned().fold(0.0, f64::max);
            if lo > 0.0 && hi / lo - 1.0 < PLATEAU_DRIFT {
                let g = (w.iter().map(|v| v.ln()).sum::<f64>() / PLATEAU_LEN as f64).exp();
                return (g, eps[i], true);
            }
        }
    }
    (values.first().copied().unwrap_or(0.0), eps.first().copied().unwrap_or(0.0), false)
}

/// Raster of the eps-neighborhoods of polyline prefixes.
struct Raster {
    origin: C,
    spacing: f64,
    nx: usize,
    ny: usize,
}

impl Raster {
    fn around(points: &[C], pad: f64, spacing: f64) -> Result<Raster> {
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = C::new(lo.re.min(p.re), lo.im.min(p.im));
            hi = C::new(hi.re.max(p.re), hi.im.max(p.im));
        }
        let origin = lo - C::new(pad + spacing, pad + spacing);
        let nx = ((hi.re - lo.re + 2.0 * pad) / spacing).ceil() as usize + 3;
        let ny = ((hi.im - lo.im + 2.0 * pad) / spacing).ceil() as usize + 3;
        if nx.saturating_mul(ny) > MAX_CELLS {
            return Err(LabError::Config(format!("content raster of {nx}x{ny} cells is too large")));
        }
        Ok(Raster { origin, spacing, nx, ny })
    }

    fn center(&self, i: usize, j: usize) -> C {
        self.origin + C::new((i as f64 + 0.5) * self.spacing, (j as f64 + 0.5) * self.spacing)
    }
}

/// Minkowski content eps^{d-2} Area{z: dist(z, gamma[0,t]) <= eps} of curve
/// prefixes ending at `checkpoints`, each scale rasterized at spacing eps/4,
/// with the plateau rule applied over `eps_grid`. The eps-disk about the
/// starting point is subtracted, so the empty prefix has content 0 and a
/// segment of length L has 1-dimensional content 2L (unnormalized).
pub fn minkowski_content(curve: &Curve, d: f64, eps_grid: &[f64], checkpoints: &[f64]) -> Result<ContentProfile> {
    if !(d > 0.0 && d <= 2.0) || eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(LabError::Config("content needs d in (0,2] and positive scales".into()));
    }
    let mut eps = eps_grid.to_vec();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pts = curve.points();
    let times = curve.times();
    let ends: Vec<usize> = checkpoints.iter().map(|&t| times.partition_point(|&s| s <= t).saturating_sub(1)).collect();
    let mut raw = vec![vec![0.0; eps.len()]; checkpoints.len()];
    for (e, &ep) in eps.iter().enumerate() {
        let raster = Raster::around(pts, ep, ep / 4.0)?;
        // First point index whose prefix covers the cell.
        let mut first = vec![u32::MAX; raster.nx * raster.ny];
        let segs = std::iter::once((0u32, pts[0], pts[0])).chain((1..pts.len()).map(|i| (i as u32, pts[i - 1], pts[i])));
        for (label, p, q) in segs {
            let lo = C::new(p.re.min(q.re) - ep, p.im.min(q.im) - ep) - raster.origin;
            let hi = C::new(p.re.max(q.re) + ep, p.im.max(q.im) + ep) - raster.origin;
            let i0 = (lo.re / raster.spacing).floor().max(0.0) as usize;
            let j0 = (lo.im / raster.spacing).floor().max(0.0) as usize;
            let i1 = ((hi.re / raster.spacing).ceil() as usize).min(raster.nx - 1);
            let j1 = ((hi.im / raster.spacing).ceil() as usize).min(raster.ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let cell = j * raster.nx + i;
                    if first[cell] <= label {
                        continue;
                    }
                    if point_segment_distance(raster.center(i, j), p, q) <= ep {
                        first[cell] = label;
                    }
                }
            }
        }
        let mut hist = vec![0usize; pts.len()];
        for &l in &first {
            if l != u32::MAX {
                hist[l as usize] += 1;
            }
        }
        let mut cum = Vec::with_capacity(hist.len());
        let mut acc = 0usize;
        for h in &hist {
            acc += h;
            cum.push(acc);
        }
        let area = raster.spacing * raster.spacing * ep.powf(d - 2.0);
        for (k, &m) in ends.iter().enumerate() {
            raw[k][e] = (cum[m] - cum[0]) as f64 * area;
        }
    }
    let mut profile = ContentProfile {
        times: checkpoints.to_vec(),
        contents: Vec::with_capacity(checkpoints.len()),
        eps_used: Vec::with_capacity(checkpoints.len()),
        plateau: Vec::with_capacity(checkpoints.len()),
        eps_grid: eps.clone(),
        raw,
    };
    let mut running: f64 = 0.0;
    for k in 0..checkpoints.len() {
        let (v, e, ok) = plateau_value(&profile.raw[k], &eps);
        running = running.max(v);
        profile.contents.push(running);
        profile.eps_used.push(e);
        profile.plateau.push(ok);
    }
    Ok(profile)
}

/// Content of the whole curve; NoPlateau when no plateau is found.
pub fn content_estimate(curve: &Curve, d: f64, eps_grid: &[f64]) -> Result<f64> {
    let p = minkowski_content(curve, d, eps_grid, &[curve.end_time()])?;
    if !p.plateau[0] {
        return Err(LabError::NoPlateau);
    }
    Ok(p.contents[0])
}

/// eps^{d-2} Area at a single scale.
pub fn content_at_scale(curve: &Curve, d: f64, eps: f64) -> Result<f64> {
    Ok(minkowski_content(curve, d, &[eps], &[curve.end_time()])?.raw[0][0])
}

/// A curve re-timed by accumulated content.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalCurve {
    pub curve: Curve,
    pub total_content: f64,
}

/// gamma o s with s(t) = inf{s: Theta_s = t}; the trace keeps its points and
/// each point is stamped with the content accumulated up to it.
pub fn natural_reparam(curve: &Curve, profile: &ContentProfile) -> Result<NaturalCurve> {
    if profile.times.len() < 2 || profile.total() <= 0.0 {
        return Err(LabError::DegenerateProfile);
    }
    if profile.contents.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::DegenerateProfile);
    }
    let mut last: f64 = 0.0;
    let times: Vec<f64> = curve
        .times()
        .iter()
        .map(|&t| {
            last = last.max(profile.at(t));
            last
        })
        .collect();
    let c = Curve::new(curve.points().to_vec(), times, TimeTag::Natural)?;
    Ok(NaturalCurve { total_content: c.end_time() - c.start_time(), curve: c })
}

/// Profile Theta_t = t evaluated at the curve's own timestamps.
pub fn identity_profile(curve: &Curve) -> ContentProfile {
    let t = curve.times().to_vec();
    let n = t.len();
    ContentProfile {
        contents: t.clone(),
        eps_used: vec![0.0; n],
        plateau: vec![true; n],
        eps_grid: Vec::new(),
        raw: vec![Vec::new(); n],
        times: t,
    }
}

/// Quadrature cell: center and area.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub center: C,
    pub area: f64,
}

/// Square cells of side `h` whose centers lie in the map's domain.
pub fn domain_cells(m: &HalfPlaneMap, lo: C, hi: C, h: f64) -> Vec<Cell> {
    let nx = ((hi.re - lo.re) / h).ceil() as usize;
    let ny = ((hi.im - lo.im) / h).ceil() as usize;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let z = lo + C::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            if m.contains(z) {
                out.push(Cell { center: z, area: h * h });
            }
        }
    }
    out
}

/// Green integral with its boundary error bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenIntegral {
    pub value: f64,
    pub skipped_cells: usize,
    /// Analytic allowance c delta^{5/4} for the skipped boundary strip.
    pub boundary_bound: f64,
}

/// Midpoint rule for the integral of r^{d-2} S^beta over the cells. Cells the
/// map refuses to evaluate are skipped and counted.
pub fn green_integral(gs: &GreenShape, m: &HalfPlaneMap, cells: &[Cell]) -> GreenIntegral {
    let mut value = 0.0;
    let mut skipped = 0;
    let mut delta: f64 = 0.0;
    for c in cells {
        match m.eval(c.center) {
            Ok((f, df)) => {
                let (s, r) = sine_radius_of(f, df);
                value += c.area * gs.from_sine_radius(s, r);
            }
            Err(_) => {
                skipped += 1;
                delta = delta.max(m.distance_to_boundary(c.center) + c.area.sqrt());
            }
        }
    }
    GreenIntegral { value, skipped_cells: skipped, boundary_bound: if skipped > 0 { delta.powf(1.25) } else { 0.0 } }
}

/// Integral over the strip of cells within `delta` of the boundary.
pub fn boundary_strip_integral(gs: &GreenShape, m: &HalfPlaneMap, cells: &[Cell], delta: f64) -> f64 {
    let strip: Vec<Cell> = cells.iter().copied().filter(|c| m.distance_to_boundary(c.center) < delta).collect();
    green_integral(gs, m, &strip).value
}

/// Cells carried forward under g_t o F together with F'.
struct CarriedCells {
    w: Vec<C>,
    dw: Vec<C>,
    area: Vec<f64>,
    alive: Vec<bool>,
}

impl CarriedCells {
    fn new(m: &HalfPlaneMap, cells: &[Cell]) -> Self {
        let mut w = Vec::with_capacity(cells.len());
        let mut dw = Vec::with_capacity(cells.len());
        let mut area = Vec::with_capacity(cells.len());
        let mut alive = Vec::with_capacity(cells.len());
        for c in cells {
            let (f, df) = m.eval_unchecked(c.center);
            alive.push(f.im > 0.0 && f.is_finite());
            w.push(f);
            dw.push(df);
            area.push(c.area);
        }
        CarriedCells { w, dw, area, alive }
    }

    fn advance(&mut self, u: f64, dt: f64, y_min: f64) {
        for i in 0..self.w.len() {
            if !self.alive[i] {
                continue;
            }
            let (g, dg) = slit_map(u, dt, self.w[i]);
            self.w[i] = g;
            self.dw[i] *= dg;
            if !(g.im > y_min) || !g.is_finite() {
                self.alive[i] = false;
            }
        }
    }

    /// Integral of the Green shape in D minus the curve, tip at u.
    fn integral(&self, gs: &GreenShape, u: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.w.len() {
            if self.alive[i] {
                let (s, r) = sine_radius_of(self.w[i] - u, self.dw[i]);
                acc += self.area[i] * gs.from_sine_radius(s, r);
            }
        }
        acc
    }
}

/// Content martingale probe settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub kappa: f64,
    /// Mesoscopic capacity step.
    pub h: f64,
    pub steps: usize,
    pub dt: f64,
    /// Capacity at which the trace is stopped for the total content.
    pub t_max: f64,
    /// Quadrature cell side in the unit disk.
    pub cell: f64,
    pub eps: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { kappa: 2.0, h: 0.05, steps: 20, dt: 1e-4, t_max: 400.0, cell: 1.0 / 20.0, eps: 1.0 / 16.0 }
    }
}

/// One replica: content of gamma[0, n h] and the Green integral of the
/// remaining domain, n = 0..steps, plus the total content.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReplica {
    pub content: Vec<f64>,
    pub integral: Vec<f64>,
    pub total: f64,
}

pub fn probe_replica<R: Rng + ?Sized>(cfg: &ProbeConfig, rng: &mut R) -> Result<ProbeReplica> {
    let gs = GreenShape::new(cfg.kappa);
    let m = HalfPlaneMap::disk(1.0);
    let window = cfg.h * cfg.steps as f64;
    let t0 = window.max(1.0);
    let grid = geometric_grid(cfg.dt, t0, cfg.t_max);
    let rec = sample_driving_on(cfg.kappa, grid, rng);
    let half = trace(&rec);
    let mut pts = Vec::with_capacity(half.len());
    let mut times = Vec::with_capacity(half.len());
    for (p, &t) in half.points().iter().zip(half.times()) {
        if let Ok(z) = m.inverse(*p) {
            if z.is_finite() {
                pts.push(z);
                times.push(t);
            }
        }
    }
    pts.push(C::new(-1.0, 0.0));
    times.push(times.last().copied().unwrap_or(0.0) + 1.0);
    let curve = Curve::new(pts, times, TimeTag::Capacity)?;
    let checkpoints: Vec<f64> = (0..=cfg.steps).map(|n| n as f64 * cfg.h).chain([curve.end_time()]).collect();
    let prof = minkowski_content(&curve, gs.d, &[cfg.eps], &checkpoints)?;
    let content: Vec<f64> = prof.raw.iter().map(|r| r[0]).collect();
    let total = *content.last().unwrap();

    let cells = domain_cells(&m, C::new(-1.0, -1.0), C::new(1.0, 1.0), cfg.cell);
    let mut carried = CarriedCells::new(&m, &cells);
    let mut integral = vec![carried.integral(&gs, 0.0)];
    let mut next = 1;
    for (k, (u, dt)) in rec.steps().enumerate() {
        if next > cfg.steps {
            break;
        }
        carried.advance(u, dt, 1e-9);
        if rec.times[k + 1] >= next as f64 * cfg.h - 1e-12 {
            integral.push(carried.integral(&gs, u));
            next += 1;
        }
    }
    Ok(ProbeReplica { content: content[..=cfg.steps].to_vec(), integral, total })
}

/// Calibrated series M_n = Theta_n + c I_n with c = mean total / mean I_0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleProbe {
    pub calibration: f64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Standard error of M_n - M_0 across replicas.
    pub increment_stderr: Vec<f64>,
    pub max_deviation_sigma: f64,
}

pub fn content_martingale_probe(reps: &[ProbeReplica]) -> MartingaleProbe {
    let n = reps.len() as f64;
    let mean_total = reps.iter().map(|r| r.total).sum::<f64>() / n;
    let mean_i0 = reps.iter().map(|r| r.integral[0]).sum::<f64>() / n;
    let c = mean_total / mean_i0;
    let steps = reps.iter().map(|r| r.integral.len().min(r.content.len())).min().unwrap_or(0);
    let mut mean = Vec::with_capacity(steps);
    let mut stderr = Vec::with_capacity(steps);
    let mut inc_se = Vec::with_capacity(steps);
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let m: Vec<f64> = reps.iter().map(|r| r.content[k] + c * r.integral[k]).collect();
        let d: Vec<f64> = reps.iter().map(|r| r.content[k] + c * r.integral[k] - c * r.integral[0] - r.content[0]).collect();
        let mu = crate::stats::mean(&m);
        mean.push(mu);
        stderr.push(crate::stats::stderr(&m));
        let se = crate::stats::stderr(&d);
        inc_se.push(se);
        if k > 0 {
            let dm = crate::stats::mean(&d);
            // Against the unconditional fluctuation of M_n itself.
            let sigma = stderr[k].max(se);
            if sigma > 0.0 {
                worst = worst.max(dm.abs() / sigma);
            }
        }
    }
    MartingaleProbe { calibration: c, mean, stderr, increment_stderr: inc_se, max_deviation_sigma: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{loglog_fit, replica_rng};

    fn segment(len: f64, n: usize) -> Curve {
        let pts = (0..=n).map(|i| C::new(len * i as f64 / n as f64, 0.0)).collect();
        let ts = (0..=n).map(|i| i as f64 / n as f64).collect();
        Curve::new(pts, ts, TimeTag::Capacity).unwrap()
    }

    #[test]
    fn segment_content_is_twice_length() {
        let c = segment(1.0, 50);
        let eps = [1.0 / 4096.0, 1.0 / 2048.0, 1.0 / 1024.0, 1.0 / 512.0];
        let v = content_estimate(&c, 1.0, &eps).unwrap();
        assert!((v / 2.0 - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn profile_is_monotone_and_starts_at_point() {
        let c = segment(1.0, 20);
        let ck: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let p = minkowski_content(&c, 1.0, &[0.01, 0.02], &ck).unwrap();
        assert!(p.contents.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(p.contents[0], 0.0);
        assert!((p.total() - 2.0).abs() < 0.02);
        let half = p.at(0.5);
        assert!((half / p.total() - 0.5).abs() < 0.03);
    }

    #[test]
    fn content_scales_with_dimension() {
        let mut rng = replica_rng(5, 0);
        let rec = crate::sle::sample_driving(2.0, 1.0, 1e-3, &mut rng);
        let c = trace(&rec);
        let d = 1.25;
        let eps = [0.02, 0.04];
        let base = content_at_scale(&c, d, eps[0]).unwrap();
        for lam in [0.5, 2.0] {
            let scaled = Curve::new(c.points().iter().map(|p| p * lam).collect(), c.times().to_vec(), c.tag).unwrap();
            let v = content_at_scale(&scaled, d, eps[0] * lam).unwrap();
            assert!((v / (lam.powf(d) * base) - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn natural_reparam_round_trip() {
        let c = segment(1.0, 40);
        let lin = ContentProfile {
            times: c.times().to_vec(),
            contents: c.times().iter().map(|t| 3.0 * t).collect(),
            eps_used: vec![0.0; 41],
            plateau: vec![true; 41],
            eps_grid: vec![],
            raw: vec![vec![]; 41],
        };
        let n = natural_reparam(&c, &lin).unwrap();
        assert!((n.total_content - 3.0).abs() < 1e-12);
        assert_eq!(n.curve.points(), c.points());
        let again = natural_reparam(&n.curve, &identity_profile(&n.curve)).unwrap();
        for (a, b) in again.curve.times().iter().zip(n.curve.times()) {
            assert!((a - b).abs() < 1e-6);
        }
        let flat = ContentProfile { contents: vec![0.0; 41], ..lin };
        assert!(matches!(natural_reparam(&c, &flat), Err(LabError::DegenerateProfile)));
    }

    #[test]
    fn green_integral_basics() {
        let gs = GreenShape::new(2.0);
        let m = HalfPlaneMap::disk(1.0);
        assert_eq!(green_integral(&gs, &m, &[]).value, 0.0);
        let cells = domain_cells(&m, C::new(-1.0, -1.0), C::new(1.0, 1.0), 1.0 / 16.0);
        let (left, right): (Vec<Cell>, Vec<Cell>) = cells.iter().partition(|c| c.center.re < 0.0);
        let whole = green_integral(&gs, &m, &cells).value;
        let parts = green_integral(&gs, &m, &left).value + green_integral(&gs, &m, &right).value;
        assert!((whole - parts).abs() < 1e-12 * whole);
        let fine = green_integral(&gs, &m, &domain_cells(&m, C::new(-1.0, -1.0), C::new(1.0, 1.0), 1.0 / 32.0)).value;
        assert!((whole / fine - 1.0).abs() < 0.05);
    }

    #[test]
    fn boundary_strip_exponent() {
        let gs = GreenShape::new(2.0);
        let m = HalfPlaneMap::disk(1.0);
        let cells = domain_cells(&m, C::new(-1.0, -1.0), C::new(1.0, 1.0), 1.0 / 1024.0);
        let deltas = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        let vals: Vec<f64> = deltas.iter().map(|&d| boundary_strip_integral(&gs, &m, &cells, d)).collect();
        let fit = loglog_fit(&deltas, &vals);
        assert!((fit.slope - 1.25).abs() < 0.2, "{}", fit.slope);
    }
}
