//! Conformal maps of lattice domains onto the upper half-plane.
//!
//! Polygons are unzipped with the geodesic algorithm: a square-root step that
//! sends b to infinity, one slit-removal step per boundary point, and a final
//! squaring of the remaining quadrant.

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::grid::{
    approximate_domain, point_in_polygon, point_segment_distance, union_of_squares, AnalyticShape,
    DomainTriple, UnionOfSquares,
};

type C = Complex64;

const I: C = C::new(0.0, 1.0);
const TINY: f64 = 1e-300;

/// Default number of pieces per unit of boundary length.
pub const DEFAULT_REFINE: usize = 2;
/// Evaluation is refused closer than this to the boundary (lattice units).
pub const DEFAULT_CUTOFF: f64 = 1.0;

/// Removal of the hyperbolic geodesic from 0 to a point, renormalized to fix
/// infinity with unit derivative there.
#[derive(Clone, Copy, Debug)]
struct GeoStep {
    s: f64,
    d: f64,
    /// Image of infinity under the unnormalized slit map (None when it stays at infinity).
    xinf: Option<f64>,
    kappa: f64,
}

impl GeoStep {
    fn from_point(z: C) -> Self {
        let r2 = z.norm_sqr();
        let s = z.re / r2;
        let d = r2 / z.im.max(TINY);
        if s == 0.0 {
            return GeoStep { s, d, xinf: None, kappa: 1.0 };
        }
        let p = -1.0 / s;
        let xinf = p.signum() * (p * p + d * d).sqrt();
        let kappa = (1.0 + s * s * d * d).powf(1.5);
        GeoStep { s, d, xinf: Some(xinf), kappa }
    }

    #[inline]
    fn forward(&self, z: C) -> (C, C) {
        let one = C::new(1.0, 0.0);
        let den = one - z * self.s;
        let t = z / den;
        let dt = (den * den).inv();
        let (w, dw) = if t.norm_sqr() == 0.0 {
            (C::new(-self.d, 0.0), C::new(0.0, 0.0))
        } else {
            let w = t * (one + self.d * self.d / (t * t)).sqrt();
            let w = if w.im < 0.0 { C::new(w.re, TINY) } else { w };
            (w, t / w * dt)
        };
        match self.xinf {
            None => (w, dw),
            Some(x) => {
                let m = one - w / x;
                let u = w / m / self.kappa;
                let u = if u.im < 0.0 { C::new(u.re, TINY) } else { u };
                (u, dw / (m * m) / self.kappa)
            }
        }
    }

    /// Boundary points; `None` is infinity.
    fn forward_real(&self, x: Option<f64>) -> Option<f64> {
        let x = x?;
        let den = 1.0 - self.s * x;
        if den == 0.0 {
            return None;
        }
        let t = x / den;
        let w = if t == 0.0 { -self.d } else { t.signum() * (t * t + self.d * self.d).sqrt() };
        match self.xinf {
            None => Some(w),
            Some(xi) => {
                let m = 1.0 - w / xi;
                if m == 0.0 {
                    None
                } else {
                    Some(w / m / self.kappa)
                }
            }
        }
    }

    #[inline]
    fn inverse(&self, u: C) -> C {
        let one = C::new(1.0, 0.0);
        let w = match self.xinf {
            None => u,
            Some(x) => {
                let w1 = u * self.kappa;
                w1 / (one + w1 / x)
            }
        };
        let t = if w.norm_sqr() == 0.0 {
            C::new(0.0, self.d)
        } else {
            let t = w * (one - self.d * self.d / (w * w)).sqrt();
            if t.im < 0.0 {
                -t
            } else {
                t
            }
        };
        t / (one + t * self.s)
    }
}

/// Geodesic-algorithm map of a Jordan polygon onto H with b at infinity,
/// before normalization.
#[derive(Clone, Debug)]
pub struct ZipperMap {
    z0: C,
    z1: C,
    steps: Vec<GeoStep>,
    sigma: f64,
    x_a: f64,
    polygon: Vec<C>,
    mark_a: C,
    mark_b: C,
}

/// Splits every side into pieces of length at most `h`.
pub fn refine_polygon(v: &[C], a_index: usize, b_index: usize, h: f64) -> (Vec<C>, usize, usize) {
    let n = v.len();
    let mut out = Vec::new();
    let (mut a_new, mut b_new) = (0, 0);
    for i in 0..n {
        if i == a_index {
            a_new = out.len();
        }
        if i == b_index {
            b_new = out.len();
        }
        let (p, q) = (v[i], v[(i + 1) % n]);
        let k = ((q - p).norm() / h).ceil().max(1.0) as usize;
        for j in 0..k {
            out.push(p + (q - p) * (j as f64 / k as f64));
        }
    }
    (out, a_new, b_new)
}

impl ZipperMap {
    /// `vertices` run counterclockwise; a and b are vertex indices.
    pub fn build(vertices: &[C], a_index: usize, b_index: usize) -> Result<Self> {
        let n = vertices.len();
        if n < 3 || a_index == b_index || a_index >= n || b_index >= n {
            return Err(LabError::InvalidDomain("polygon needs three vertices and distinct marks".into()));
        }
        let area: f64 = 0.5
            * (0..n)
                .map(|i| {
                    let (p, q) = (vertices[i], vertices[(i + 1) % n]);
                    p.re * q.im - q.re * p.im
                })
                .sum::<f64>();
        if area <= 0.0 {
            return Err(LabError::InvalidDomain("polygon must be counterclockwise".into()));
        }
        let pts: Vec<C> = (0..n).map(|k| vertices[(b_index + k) % n]).collect();
        let a_pos = (a_index + n - b_index) % n;
        let (z0, z1) = (pts[0], pts[1]);
        let mut map = ZipperMap {
            z0,
            z1,
            steps: Vec::with_capacity(n),
            sigma: 1.0,
            x_a: 0.0,
            polygon: vertices.to_vec(),
            mark_a: vertices[a_index],
            mark_b: vertices[b_index],
        };
        let mut xa: Option<Option<f64>> = if a_pos == 1 { Some(Some(0.0)) } else { None };
        for (k, &z) in pts.iter().enumerate().skip(2) {
            let mut w = map.step0(z).0;
            for st in &map.steps {
                w = st.forward(w).0;
            }
            let st = GeoStep::from_point(w);
            if !(st.d.is_finite() && st.s.is_finite()) {
                return Err(LabError::MapConvergenceFailure(w.im));
            }
            if let Some(x) = xa.as_mut() {
                *x = st.forward_real(*x);
            }
            if k == a_pos {
                xa = Some(Some(0.0));
            }
            map.steps.push(st);
        }
        let probe = interior_probe(vertices)?;
        let mut w = map.step0(probe).0;
        for st in &map.steps {
            w = st.forward(w).0;
        }
        map.sigma = if (w * w).im >= 0.0 { 1.0 } else { -1.0 };
        let xa = xa.flatten().ok_or(LabError::MapConvergenceFailure(f64::INFINITY))?;
        map.x_a = map.sigma * xa * xa;
        Ok(map)
    }

    #[inline]
    fn step0(&self, z: C) -> (C, C) {
        let m = (z - self.z1) / (z - self.z0);
        let r = m.sqrt();
        let w = I * r;
        let dm = (self.z1 - self.z0) / ((z - self.z0) * (z - self.z0));
        let dw = I / (r * 2.0) * dm;
        (w, dw)
    }

    /// Unnormalized map and its derivative; a goes to `x_a`.
    pub fn eval_raw(&self, z: C) -> (C, C) {
        let (mut w, mut dw) = self.step0(z);
        for st in &self.steps {
            let (w2, d) = st.forward(w);
            w = w2;
            dw *= d;
        }
        (w * w * self.sigma, w * 2.0 * self.sigma * dw)
    }

    pub fn inverse_raw(&self, f: C) -> C {
        let r = f.sqrt();
        let v = if self.sigma > 0.0 { r } else { I * r };
        let mut w = v;
        for st in self.steps.iter().rev() {
            w = st.inverse(w);
        }
        let m = -(w * w);
        (self.z1 - m * self.z0) / (C::new(1.0, 0.0) - m)
    }

    pub fn x_a(&self) -> f64 {
        self.x_a
    }

    pub fn num_points(&self) -> usize {
        self.steps.len() + 2
    }
}

/// A point well inside the polygon.
fn interior_probe(v: &[C]) -> Result<C> {
    let n = v.len();
    let (mut lo, mut hi) = (v[0], v[0]);
    for p in v {
        lo = C::new(lo.re.min(p.re), lo.im.min(p.im));
        hi = C::new(hi.re.max(p.re), hi.im.max(p.im));
    }
    let mut best = (0.0, None);
    let k = 24;
    for i in 0..=k {
        for j in 0..=k {
            let z = C::new(
                lo.re + (hi.re - lo.re) * (i as f64 + 0.37) / (k as f64 + 1.0),
                lo.im + (hi.im - lo.im) * (j as f64 + 0.41) / (k as f64 + 1.0),
            );
            if point_in_polygon(v, z) {
                let d = (0..n).map(|q| point_segment_distance(z, v[q], v[(q + 1) % n])).fold(f64::INFINITY, f64::min);
                if d > best.0 {
                    best = (d, Some(z));
                }
            }
        }
    }
    best.1.ok_or_else(|| LabError::InvalidDomain("no interior point found".into()))
}

#[derive(Clone, Debug)]
enum Chart {
    Zipper(Box<ZipperMap>),
    /// Disk of radius R centered at 0 with a = R, b = -R.
    Disk { radius: f64 },
    /// The half-plane itself.
    Identity,
}

/// Conformal map F onto H with F(a) = 0, F(b) = infinity.
#[derive(Clone, Debug)]
pub struct HalfPlaneMap {
    chart: Chart,
    scale: f64,
    shift: f64,
    cutoff: f64,
}

impl HalfPlaneMap {
    pub fn from_zipper(z: ZipperMap) -> Result<Self> {
        let shift = z.x_a;
        let mut m = HalfPlaneMap { chart: Chart::Zipper(Box::new(z)), scale: 1.0, shift, cutoff: DEFAULT_CUTOFF };
        let probe = if m.contains(C::new(0.0, 0.0)) {
            C::new(0.0, 0.0)
        } else if let Chart::Zipper(zm) = &m.chart {
            interior_probe(&zm.polygon)?
        } else {
            unreachable!()
        };
        let (f, df) = m.eval_unchecked(probe);
        m.scale = if probe == C::new(0.0, 0.0) { 1.0 / f.im } else { 1.0 / df.norm() };
        if !m.scale.is_finite() || m.scale <= 0.0 {
            return Err(LabError::MapConvergenceFailure(f.im));
        }
        Ok(m)
    }

    /// i(R - z)/(R + z), so F(0) = i.
    pub fn disk(radius: f64) -> Self {
        HalfPlaneMap { chart: Chart::Disk { radius }, scale: 1.0, shift: 0.0, cutoff: 0.0 }
    }

    pub fn identity() -> Self {
        HalfPlaneMap { chart: Chart::Identity, scale: 1.0, shift: 0.0, cutoff: 0.0 }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn contains(&self, z: C) -> bool {
        match &self.chart {
            Chart::Zipper(m) => point_in_polygon(&m.polygon, z),
            Chart::Disk { radius } => z.norm() < *radius,
            Chart::Identity => z.im > 0.0,
        }
    }

    pub fn distance_to_boundary(&self, z: C) -> f64 {
        match &self.chart {
            Chart::Zipper(m) => {
                let v = &m.polygon;
                let n = v.len();
                (0..n).map(|i| point_segment_distance(z, v[i], v[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
            Chart::Disk { radius } => radius - z.norm(),
            Chart::Identity => z.im,
        }
    }

    fn near_marks(&self, z: C) -> bool {
        match &self.chart {
            Chart::Zipper(m) => (z - m.mark_a).norm() < self.cutoff || (z - m.mark_b).norm() < self.cutoff,
            _ => false,
        }
    }

    /// (F(z), F'(z)) with no boundary check.
    pub fn eval_unchecked(&self, z: C) -> (C, C) {
        let (f, df) = match &self.chart {
            Chart::Zipper(m) => m.eval_raw(z),
            Chart::Disk { radius } => {
                let r = *radius;
                let den = C::new(r, 0.0) + z;
                (I * (C::new(r, 0.0) - z) / den, -I * 2.0 * r / (den * den))
            }
            Chart::Identity => (z, C::new(1.0, 0.0)),
        };
        ((f - self.shift) * self.scale, df * self.scale)
    }

    pub fn eval(&self, z: C) -> Result<(C, C)> {
        if !self.contains(z) {
            return Err(LabError::BoundaryEvaluation(-self.distance_to_boundary(z)));
        }
        if self.cutoff > 0.0 {
            let d = self.distance_to_boundary(z);
            if d < self.cutoff && !self.near_marks(z) {
                return Err(LabError::BoundaryEvaluation(d));
            }
        }
        Ok(self.eval_unchecked(z))
    }

    pub fn forward(&self, z: C) -> Result<C> {
        Ok(self.eval(z)?.0)
    }

    pub fn derivative(&self, z: C) -> Result<C> {
        Ok(self.eval(z)?.1)
    }

    /// F^{-1}(w) for w in H.
    pub fn inverse(&self, w: C) -> Result<C> {
        if !(w.im >= 0.0) || !w.is_finite() {
            return Err(LabError::InverseOutOfRange);
        }
        let u = w / self.scale + self.shift;
        Ok(match &self.chart {
            Chart::Zipper(m) => m.inverse_raw(u),
            Chart::Disk { radius } => {
                let r = *radius;
                r * (I - u) / (I + u)
            }
            Chart::Identity => u,
        })
    }

    /// d F^{-1}/dw at w.
    pub fn inverse_derivative(&self, w: C) -> Result<C> {
        let z = self.inverse(w)?;
        Ok(self.eval_unchecked(z).1.inv())
    }
}

/// Map of the union-of-squares polygon with the default refinement.
pub fn map_to_halfplane(u: &UnionOfSquares) -> Result<HalfPlaneMap> {
    map_to_halfplane_refined(u, DEFAULT_REFINE)
}

pub fn map_to_halfplane_refined(u: &UnionOfSquares, refine: usize) -> Result<HalfPlaneMap> {
    let (v, a, b) = refine_polygon(&u.vertices, u.a_index, u.b_index, 1.0 / refine as f64);
    HalfPlaneMap::from_zipper(ZipperMap::build(&v, a, b)?)
}

pub fn map_triple(t: &DomainTriple) -> Result<HalfPlaneMap> {
    map_to_halfplane(&union_of_squares(t))
}

/// (S, r): sin arg F(z) and the conformal radius 2 Im F / |F'|.
pub fn sine_and_radius(m: &HalfPlaneMap, z: C) -> Result<(f64, f64)> {
    let (f, df) = m.eval(z)?;
    Ok(sine_radius_of(f, df))
}

pub fn sine_radius_of(f: C, df: C) -> (f64, f64) {
    let s = (f.im / f.norm()).clamp(0.0, 1.0);
    (s, 2.0 * f.im / df.norm())
}

/// The image of b under the disk map f with f(z) = 0, arg f(a) = 0.
pub fn disk_image_of_b(m: &HalfPlaneMap, z: C) -> C {
    let f = m.eval_unchecked(z).0;
    f.conj() / f
}

/// sin(arg f(b) / 2) for f: D_A -> unit disk with f(0) = 0 and arg f(a) = 0.
pub fn disk_normalized_sine(t: &DomainTriple) -> Result<f64> {
    let m = map_triple(t)?.with_cutoff(0.0);
    if !m.contains(C::new(0.0, 0.0)) {
        return Err(LabError::InvalidDomain("0 is not in the domain".into()));
    }
    let fb = disk_image_of_b(&m, C::new(0.0, 0.0));
    let mut arg = fb.arg();
    if arg <= 0.0 {
        arg += 2.0 * std::f64::consts::PI;
    }
    Ok((arg / 2.0).sin().clamp(0.0, 1.0))
}

/// Sup-norm gap between the scaled inverse maps of two lattice approximations.
#[derive(Clone, Debug, PartialEq)]
pub struct MapComparison {
    pub n1: usize,
    pub n2: usize,
    pub sup_error: f64,
    pub grid_points: usize,
}

/// Compares z -> F_N^{-1}(w)/N over a grid of w in a compact set of H.
pub fn compare_lattice_maps(shape: &AnalyticShape, n1: usize, n2: usize) -> Result<MapComparison> {
    let grid = comparison_grid();
    let m1 = map_triple(&approximate_domain(shape, n1)?)?;
    let m2 = if n1 == n2 { m1.clone() } else { map_triple(&approximate_domain(shape, n2)?)? };
    let mut sup: f64 = 0.0;
    for &w in &grid {
        let z1 = m1.inverse(w)? / n1 as f64;
        let z2 = m2.inverse(w)? / n2 as f64;
        sup = sup.max((z1 - z2).norm());
    }
    Ok(MapComparison { n1, n2, sup_error: sup, grid_points: grid.len() })
}

/// Half-plane test points: |w| in [1/2, 2], arg in [pi/6, 5pi/6].
pub fn comparison_grid() -> Vec<C> {
    let mut g = Vec::new();
    for i in 0..5 {
        let r = 0.5 * 4f64.powf(i as f64 / 4.0);
        for j in 0..5 {
            let th = std::f64::consts::PI * (1.0 + j as f64) / 6.0;
            g.push(C::from_polar(r, th));
        }
    }
    g
}

/// CSV rows: x, y, F, F', S, r at each test point inside the domain.
pub fn diagnostics_csv(m: &HalfPlaneMap, points: &[C]) -> String {
    let mut s = String::from("x,y,f_re,f_im,df_re,df_im,sine,radius\n");
    for &z in points {
        if let Ok((f, df)) = m.eval(z) {
            let (sn, r) = sine_radius_of(f, df);
            s.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                z.re, z.im, f.re, f.im, df.re, df.im, sn, r
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryEdge, Site};
    use crate::harmonic::dirichlet_solve;
    use crate::grid::SiteSet;

    fn square_triple(l: i32, a: BoundaryEdge, b: BoundaryEdge) -> DomainTriple {
        let mut sites = Vec::new();
        for x in -l..=l {
            for y in -l..=l {
                sites.push(Site::new(x, y));
            }
        }
        DomainTriple::new(sites, a, b).unwrap()
    }

    fn edge(ix: i32, iy: i32, ox: i32, oy: i32) -> BoundaryEdge {
        BoundaryEdge::new(Site::new(ix, iy), Site::new(ox, oy)).unwrap()
    }

    #[test]
    fn opposite_sides_of_square() {
        let t = square_triple(4, edge(4, 0, 5, 0), edge(-4, 0, -5, 0));
        let m = map_triple(&t).unwrap();
        let (f0, _) = m.eval(C::new(0.0, 0.0)).unwrap();
        assert!((f0.im - 1.0).abs() < 1e-12);
        let (s, r) = sine_and_radius(&m, C::new(0.0, 0.0)).unwrap();
        assert!((s - 1.0).abs() < 1e-4, "{s}");
        // Koebe bracket with dist = 4.5
        assert!(r >= 4.5 && r <= 18.0, "{r}");
        let fa = m.eval_unchecked(C::new(4.49, 0.0)).0;
        assert!(fa.norm() < 0.05, "{fa}");
        let fb = m.eval_unchecked(C::new(-4.49, 0.0)).0;
        assert!(fb.norm() > 20.0, "{fb}");
    }

    #[test]
    fn images_lie_in_half_plane_and_invert() {
        let t = square_triple(4, edge(4, 1, 5, 1), edge(-2, 4, -2, 5));
        let m = map_triple(&t).unwrap();
        for x in -3..=3 {
            for y in -3..=3 {
                let z = C::new(x as f64 + 0.3, y as f64 - 0.2);
                let (f, df) = m.eval(z).unwrap();
                assert!(f.im > 0.0);
                let back = m.inverse(f).unwrap();
                assert!((back - z).norm() < 1e-8, "{z} {back}");
                let h = 1e-5;
                let fd = (m.eval_unchecked(z + h).0 - m.eval_unchecked(z - h).0) / (2.0 * h);
                assert!((fd - df).norm() < 1e-6 * df.norm());
            }
        }
    }

    #[test]
    fn disk_chart() {
        let m = HalfPlaneMap::disk(1.0);
        let (f, df) = m.eval(C::new(0.0, 0.0)).unwrap();
        assert!((f - I).norm() < 1e-15);
        let (s, r) = sine_radius_of(f, df);
        assert!((s - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15);
        let z = C::new(0.3, -0.2);
        assert!((m.inverse(m.forward(z).unwrap()).unwrap() - z).norm() < 1e-14);
    }

    #[test]
    fn scale_invariance() {
        let t = square_triple(3, edge(3, 1, 4, 1), edge(0, -3, 0, -4));
        let m = map_triple(&t).unwrap();
        let z = C::new(0.4, 0.7);
        let a = sine_and_radius(&m, z).unwrap();
        let b = sine_and_radius(&m.clone().with_scale(m.scale() * 7.5), z).unwrap();
        assert!((a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-12 * a.1);
    }

    /// Harmonic measure of the arc from b to a (counterclockwise) by a fine
    /// finite-difference solve on the square [-L-1/2, L+1/2]^2.
    fn fd_harmonic_measure(l: i32, k: i32, arc: impl Fn(f64, f64) -> bool, z: C) -> f64 {
        let half = l as f64 + 0.5;
        let n = (2 * l + 1) * k;
        let h = 2.0 * half / n as f64;
        let sites: Vec<Site> = (1..n).flat_map(|i| (1..n).map(move |j| Site::new(i, j))).collect();
        let set = SiteSet::new(sites);
        let coord = |s: Site| (-half + s.x as f64 * h, -half + s.y as f64 * h);
        let u = dirichlet_solve(&set, |s| {
            let (x, y) = coord(s);
            if arc(x, y) { 1.0 } else { 0.0 }
        }, 1e-12)
        .unwrap();
        let gx = (z.re + half) / h;
        let gy = (z.im + half) / h;
        let (i, j) = (gx.floor() as i32, gy.floor() as i32);
        let (fx, fy) = (gx - i as f64, gy - j as f64);
        let val = |i: i32, j: i32| u[set.index_of(Site::new(i, j)).unwrap()];
        val(i, j) * (1.0 - fx) * (1.0 - fy)
            + val(i + 1, j) * fx * (1.0 - fy)
            + val(i, j + 1) * (1.0 - fx) * fy
            + val(i + 1, j + 1) * fx * fy
    }

    #[test]
    fn harmonic_measure_matches_finite_differences() {
        // a on the east side at y = 0, b on the north side at x = 0.
        let l = 3;
        let t = square_triple(l, edge(l, 0, l + 1, 0), edge(0, l, 0, l + 1));
        let m = map_triple(&t).unwrap();
        let half = l as f64 + 0.5;
        let arc = |x: f64, y: f64| (x >= half - 1e-9 && y >= 0.0) || (y >= half - 1e-9 && x >= 0.0);
        for z in [C::new(0.0, 0.0), C::new(-0.7, 0.4), C::new(1.1, -0.9)] {
            let f = m.eval_unchecked(z).0;
            let omega_ab = fd_harmonic_measure(l, 24, arc, z);
            let from_map = 1.0 - f.arg() / std::f64::consts::PI;
            assert!((from_map - omega_ab).abs() < 0.01, "{z}: map {from_map} fd {omega_ab}");
        }
    }

    #[test]
    fn disk_sine_identity() {
        let t = square_triple(4, edge(4, 2, 5, 2), edge(-1, -4, -1, -5));
        let m = map_triple(&t).unwrap();
        let s = sine_and_radius(&m, C::new(0.0, 0.0)).unwrap().0;
        let sd = disk_normalized_sine(&t).unwrap();
        assert!((s - sd).abs() < 1e-10);
    }

    #[test]
    fn lattice_disk_against_exact_map() {
        let n = 40;
        let t = approximate_domain(&AnalyticShape::unit_disk(), n).unwrap();
        let u = union_of_squares(&t);
        let m = map_to_halfplane_refined(&u, 2).unwrap();
        let fine = map_to_halfplane_refined(&u, 4).unwrap();
        let exact = HalfPlaneMap::disk(n as f64);
        for z in [C::new(0.0, 0.0), C::new(10.0, 5.0), C::new(-12.0, -20.0)] {
            let (s1, r1) = sine_and_radius(&m, z).unwrap();
            let (s2, r2) = sine_and_radius(&fine, z).unwrap();
            assert!((s1 - s2).abs() < 2e-3 && (r1 / r2 - 1.0).abs() < 2e-3, "{z}");
            let (s3, r3) = sine_and_radius(&exact, z).unwrap();
            assert!((s1 - s3).abs() < 0.03, "{z} {s1} {s3}");
            assert!((r1 / r3 - 1.0).abs() < 0.06, "{z} {r1} {r3}");
        }
    }
}
