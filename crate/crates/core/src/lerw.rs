//! Loop erasure, chordal LERW sampling through the h-process, exact weights
//! on small domains and the path observables used by the experiments.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::disk_normalized_sine;
use crate::error::{LabError, Result};
use crate::grid::{lattice_disk, BoundaryEdge, DomainTriple, Site, SiteSet, NONE};
use crate::harmonic::{arc_harmonic_measure, green_column, HProcessLaw, HarmonicTable, EXIT};
use crate::metrics::{Curve, TimeTag};

/// Largest domain handled by exhaustive SAW enumeration.
pub const ORACLE_LIMIT: usize = 12;

/// A nearest-neighbor walk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePath {
    pub vertices: Vec<Site>,
}

impl LatticePath {
    pub fn new(vertices: Vec<Site>) -> Result<Self> {
        if let Some(k) = vertices.windows(2).position(|w| !w[0].is_adjacent(w[1])) {
            return Err(LabError::PathNotInDomain(format!("step {k} is not a lattice step")));
        }
        Ok(LatticePath { vertices })
    }
}

/// A self-avoiding walk. Chordal SAWs carry their marked edges and store
/// `[a-, a+, ..., b+, b-]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Saw {
    pub vertices: Vec<Site>,
    pub start_edge: Option<BoundaryEdge>,
    pub end_edge: Option<BoundaryEdge>,
}

impl Saw {
    pub fn chordal(vertices: Vec<Site>, a: BoundaryEdge, b: BoundaryEdge) -> Self {
        Saw { vertices, start_edge: Some(a), end_edge: Some(b) }
    }

    pub fn rooted(vertices: Vec<Site>) -> Self {
        Saw { vertices, start_edge: None, end_edge: None }
    }

    /// Number of steps |eta|.
    pub fn steps(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    /// Vertices that lie in the domain.
    pub fn interior(&self) -> &[Site] {
        let lo = usize::from(self.start_edge.is_some());
        let hi = self.vertices.len() - usize::from(self.end_edge.is_some());
        &self.vertices[lo..hi.max(lo)]
    }

    /// T = number of lattice points of the domain visited.
    pub fn t_count(&self) -> usize {
        self.interior().len()
    }

    pub fn is_self_avoiding(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.vertices.len());
        self.vertices.iter().all(|v| seen.insert(*v))
    }

    /// Unit-speed curve from a to b with eta(j - 1/2) = eta_j.
    pub fn to_curve(&self) -> Curve {
        let inner = self.interior();
        let mut pts = Vec::with_capacity(inner.len() + 2);
        let mut times = Vec::with_capacity(inner.len() + 2);
        if let Some(a) = self.start_edge {
            pts.push(a.midpoint());
            times.push(0.0);
        }
        let off = if self.start_edge.is_some() { 0.5 } else { 0.0 };
        for (j, s) in inner.iter().enumerate() {
            pts.push(s.to_complex());
            times.push(j as f64 + off);
        }
        if let Some(b) = self.end_edge {
            pts.push(b.midpoint());
            times.push(inner.len() as f64);
        }
        Curve::new(pts, times, TimeTag::Lattice).expect("monotone lattice times")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,x,y\n");
        for (i, v) in self.vertices.iter().enumerate() {
            s.push_str(&format!("{i},{},{}\n", v.x, v.y));
        }
        s
    }
}

/// Chronological loop erasure (stack form).
pub fn loop_erase(path: &[Site]) -> Vec<Site> {
    let mut out: Vec<Site> = Vec::with_capacity(path.len());
    let mut pos: HashMap<Site, usize> = HashMap::with_capacity(path.len());
    for &v in path {
        if let Some(&p) = pos.get(&v) {
            for w in out.drain(p + 1..) {
                pos.remove(&w);
            }
        } else {
            pos.insert(v, out.len());
            out.push(v);
        }
    }
    out
}

/// Samples LERW from a to b: h-process walk from a+, erased on the fly.
pub fn sample_lerw<R: Rng + ?Sized>(t: &DomainTriple, law: &HProcessLaw, rng: &mut R) -> Saw {
    let (idx, _) = sample_lerw_indices(t.len(), law, rng);
    let mut v = Vec::with_capacity(idx.len() + 2);
    v.push(t.a.outer);
    v.extend(idx.iter().map(|&i| t.site(i as usize)));
    v.push(t.b.outer);
    Saw::chordal(v, t.a, t.b)
}

/// Loop-erased h-process as site indices, plus the raw walk length.
pub fn sample_lerw_indices<R: Rng + ?Sized>(
    n: usize,
    law: &HProcessLaw,
    rng: &mut R,
) -> (Vec<u32>, usize) {
    let mut pos = vec![0u32; n];
    let start = law.start();
    let mut stack: Vec<u32> = vec![start as u32];
    pos[start] = 1;
    let mut cur = start;
    let mut steps = 0usize;
    loop {
        let nxt = law.step(cur, rng);
        steps += 1;
        if nxt == EXIT {
            break;
        }
        let j = nxt as usize;
        if pos[j] != 0 {
            let keep = pos[j] as usize;
            for w in stack.drain(keep..) {
                pos[w as usize] = 0;
            }
        } else {
            stack.push(nxt);
            pos[j] = stack.len() as u32;
        }
        cur = j;
    }
    (stack, steps)
}

/// Simple random walk from `start` stopped on leaving C_r, loop-erased. The
/// last vertex lies outside C_r.
pub fn sample_radial_lerw<R: Rng + ?Sized>(r: f64, rng: &mut R) -> Vec<Site> {
    let r2 = r * r;
    let m = r.ceil() as i32 + 1;
    let w = (2 * m + 1) as usize;
    let cell = |s: Site| ((s.y + m) as usize) * w + (s.x + m) as usize;
    let mut pos = vec![0u32; w * w];
    let mut stack = vec![Site::ORIGIN];
    pos[cell(Site::ORIGIN)] = 1;
    let mut cur = Site::ORIGIN;
    loop {
        let k = rng.random_range(0..4usize);
        let nxt = cur.neighbors()[k];
        let c = cell(nxt);
        if pos[c] != 0 {
            let keep = pos[c] as usize;
            for s in stack.drain(keep..) {
                pos[cell(s)] = 0;
            }
        } else {
            stack.push(nxt);
            pos[c] = stack.len() as u32;
        }
        cur = nxt;
        if (cur.norm2() as f64) >= r2 {
            break;
        }
    }
    stack
}

/// log of the loop-erased measure p^(eta).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SawWeight {
    pub log_weight: f64,
}

impl SawWeight {
    pub fn value(&self) -> f64 {
        self.log_weight.exp()
    }
}

fn check_chordal(t: &DomainTriple, eta: &Saw) -> Result<()> {
    let v = &eta.vertices;
    if v.len() < 3 || v[0] != t.a.outer || v[1] != t.a.inner {
        return Err(LabError::PathNotInDomain("must start with the edge a".into()));
    }
    if v[v.len() - 1] != t.b.outer || v[v.len() - 2] != t.b.inner {
        return Err(LabError::PathNotInDomain("must end with the edge b".into()));
    }
    if let Some(k) = v.windows(2).position(|w| !w[0].is_adjacent(w[1])) {
        return Err(LabError::PathNotInDomain(format!("step {k} is not a lattice step")));
    }
    if let Some(s) = v[1..v.len() - 1].iter().find(|s| !t.contains(**s)) {
        return Err(LabError::PathNotInDomain(format!("{s} is not in A")));
    }
    if !eta.is_self_avoiding() {
        return Err(LabError::PathNotInDomain("path is not self-avoiding".into()));
    }
    Ok(())
}

/// p^(eta) = 4^{-|eta|} prod_j G_{A minus eta_1..eta_{j-1}}(eta_j, eta_j).
pub fn exact_saw_weight(t: &DomainTriple, eta: &Saw) -> Result<SawWeight> {
    check_chordal(t, eta)?;
    let mut alive: Vec<Site> = t.sites().to_vec();
    let mut log_w = -(eta.steps() as f64) * 4f64.ln();
    for &s in eta.interior() {
        let set = SiteSet::new(alive.clone());
        let i = set.index_of(s).expect("vertex present");
        let g = green_column(&set, i)?[i];
        log_w += g.ln();
        alive.retain(|x| *x != s);
    }
    Ok(SawWeight { log_weight: log_w })
}

/// All SAWs from a to b with their weights p^(eta).
pub fn enumerate_saws(t: &DomainTriple) -> Result<Vec<(Saw, f64)>> {
    if t.len() > ORACLE_LIMIT {
        return Err(LabError::TooLargeForOracle(t.len()));
    }
    let start = t.index_of(t.a.inner).unwrap();
    let end = t.index_of(t.b.inner).unwrap();
    let mut out = Vec::new();
    let mut path = vec![start];
    let mut used = vec![false; t.len()];
    used[start] = true;
    fn dfs(
        t: &DomainTriple,
        end: usize,
        path: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let cur = *path.last().unwrap();
        if cur == end {
            out.push(path.clone());
            return;
        }
        for &j in t.neighbor_slots(cur) {
            if j != NONE && !used[j as usize] {
                used[j as usize] = true;
                path.push(j as usize);
                dfs(t, end, path, used, out);
                path.pop();
                used[j as usize] = false;
            }
        }
    }
    let mut paths = Vec::new();
    dfs(t, end, &mut path, &mut used, &mut paths);
    for p in paths {
        let mut v = vec![t.a.outer];
        v.extend(p.iter().map(|&i| t.site(i)));
        v.push(t.b.outer);
        let saw = Saw::chordal(v, t.a, t.b);
        let w = exact_saw_weight(t, &saw)?.value();
        out.push((saw, w));
    }
    Ok(out)
}

/// P_{A,a,b}{zeta in eta} by enumeration.
pub fn exact_visit_probability(t: &DomainTriple, zeta: Site) -> Result<f64> {
    let saws = enumerate_saws(t)?;
    let h = HarmonicTable::build(t)?.boundary_poisson();
    let hit: f64 = saws.iter().filter(|(s, _)| s.interior().contains(&zeta)).map(|(_, w)| w).sum();
    Ok(hit / h)
}

/// det(I - P) on a set, used as an independent check of loop-measure factors.
pub fn laplacian_determinant(sites: &[Site]) -> f64 {
    if sites.is_empty() {
        return 1.0;
    }
    let set = SiteSet::new(sites.to_vec());
    let n = set.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0;
        for &j in set.neighbor_slots(i) {
            if j != NONE {
                m[(i, j as usize)] = -0.25;
            }
        }
    }
    m.determinant()
}

/// eta = eta1 + eta_tilde + eta2 split at the first and last visits to C_r.
#[derive(Clone, Debug)]
pub struct FirstLastDecomposition {
    pub eta1: Vec<Site>,
    pub eta_tilde: Vec<Site>,
    pub eta2: Vec<Site>,
    pub inner: DomainTriple,
}

impl FirstLastDecomposition {
    pub fn reassemble(&self) -> Vec<Site> {
        let mut v = self.eta1.clone();
        v.extend_from_slice(&self.eta_tilde[1..]);
        v.extend_from_slice(&self.eta2[1..]);
        v
    }
}

/// Returns `None` when eta misses C_r.
pub fn first_last_decompose(eta: &Saw, r: f64, t: &DomainTriple) -> Result<Option<FirstLastDecomposition>> {
    if !t.contains_disk(r) {
        return Err(LabError::InvalidDomain(format!("C_{r} is not contained in A")));
    }
    let r2 = r * r;
    let v = &eta.vertices;
    let inside = |s: &Site| (s.norm2() as f64) < r2;
    let n = v.len();
    let Some(i) = (1..n - 1).find(|&k| inside(&v[k])) else {
        return Ok(None);
    };
    let k = (1..n - 1).rev().find(|&k| inside(&v[k])).unwrap();
    let eta1 = v[..=i].to_vec();
    let eta_tilde = v[i..=k].to_vec();
    let eta2 = v[k..].to_vec();
    let removed: std::collections::HashSet<Site> =
        eta1[..eta1.len() - 1].iter().chain(eta2[1..].iter()).copied().collect();
    let alive: Vec<bool> = t.sites().iter().map(|s| !removed.contains(s)).collect();
    let origin = t.index_of(Site::ORIGIN).expect("origin in A");
    let comp = t.set().component(origin, &alive);
    let sites: Vec<Site> = (0..t.len()).filter(|&j| comp[j]).map(|j| t.site(j)).collect();
    let a_r = BoundaryEdge { inner: v[i], outer: v[i - 1] };
    let b_r = BoundaryEdge { inner: v[k], outer: v[k + 1] };
    let inner = DomainTriple::new(sites, a_r, b_r)?;
    Ok(Some(FirstLastDecomposition { eta1, eta_tilde, eta2, inner }))
}

/// S_r: the disk-normalized sine of the inner configuration at 0.
pub fn separation_statistic(d: &FirstLastDecomposition) -> Result<f64> {
    disk_normalized_sine(&d.inner)
}

/// S_r as sin(pi w), w the random-walk harmonic measure from 0 of the arc
/// between a_r and b_r. Agrees with `separation_statistic` up to lattice
/// effects and needs one sparse solve instead of a conformal map.
pub fn separation_statistic_harmonic(d: &FirstLastDecomposition) -> Result<f64> {
    let w = arc_harmonic_measure(&d.inner, Site::ORIGIN)?;
    Ok((std::f64::consts::PI * w).sin().clamp(0.0, 1.0))
}

/// Some interior vertex of the path lies in C_r.
pub fn meets_disk(points: &[Site], r: f64) -> bool {
    let r2 = r * r;
    points.iter().any(|s| (s.norm2() as f64) < r2)
}

/// S_r of eta, or 0 when eta misses C_r.
pub fn separation_of(eta: &Saw, r: f64, t: &DomainTriple) -> Result<f64> {
    match first_last_decompose(eta, r, t)? {
        Some(d) => separation_statistic(&d),
        None => Ok(0.0),
    }
}

/// Visit-count statistics of a path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitCounts {
    /// Number of visited lattice points.
    pub t: usize,
    /// max over centers of the sublattice of spacing ceil(r) of T(2r; zeta).
    pub tbar: usize,
    /// Sum over centers of the dyadic lattice of spacing 2^m >= r of T(2^{m+1}; zeta)^2.
    pub lattice_sum: f64,
}

/// T(r; zeta) = #{j : |eta_j - zeta| <= r}.
pub fn count_in_ball(points: &[Site], zeta: Complex64, r: f64) -> usize {
    points.iter().filter(|s| (s.to_complex() - zeta).norm() <= r + 1e-12).count()
}

fn max_over_grid(points: &[Site], spacing: i64, radius: f64) -> (usize, f64) {
    let mut counts: HashMap<(i64, i64), usize> = HashMap::new();
    let reach = (radius / spacing as f64).ceil() as i64 + 1;
    let r2 = radius * radius + 1e-9;
    for s in points {
        let (x, y) = (s.x as i64, s.y as i64);
        let (cx, cy) = (x.div_euclid(spacing), y.div_euclid(spacing));
        for gx in cx - reach..=cx + reach + 1 {
            for gy in cy - reach..=cy + reach + 1 {
                let dx = (gx * spacing - x) as f64;
                let dy = (gy * spacing - y) as f64;
                if dx * dx + dy * dy <= r2 {
                    *counts.entry((gx, gy)).or_insert(0) += 1;
                }
            }
        }
    }
    let max = counts.values().copied().max().unwrap_or(0);
    let sum_sq = counts.values().map(|&c| (c * c) as f64).sum();
    (max, sum_sq)
}

pub fn visit_counts(points: &[Site], r: f64) -> VisitCounts {
    let spacing = (r.ceil() as i64).max(1);
    let (tbar, _) = max_over_grid(points, spacing, 2.0 * r);
    let m = r.log2().ceil().max(0.0) as u32;
    let dyadic = 1i64 << m;
    let (_, lattice_sum) = max_over_grid(points, dyadic, 2.0 * dyadic as f64);
    VisitCounts { t: points.len(), tbar, lattice_sum }
}

/// max over all lattice centers of T(r; zeta).
pub fn tbar_exact(points: &[Site], r: f64) -> usize {
    max_over_grid(points, 1, r).0
}

/// Some 0 < j < k < n with |eta_j| >= R and |eta_k| <= r.
pub fn bottleneck_event(points: &[Site], r: f64, big_r: f64) -> bool {
    let mut far = false;
    for s in points {
        let d = s.norm();
        if far && d <= r {
            return true;
        }
        if d >= big_r {
            far = true;
        }
    }
    false
}

/// The literal s_i recursion (quadratic); used to cross-check `loop_erase`.
pub fn loop_erase_reference(path: &[Site]) -> Vec<Site> {
    let n = path.len() - 1;
    let last_visit = |v: Site| (0..=n).rev().find(|&j| path[j] == v).unwrap();
    let mut s = last_visit(path[0]);
    let mut out = vec![path[s]];
    while s < n {
        s = last_visit(path[s + 1]);
        out.push(path[s]);
    }
    out
}

/// Sites of C_r, used by radial experiments.
pub fn disk_sites(r: f64) -> Vec<Site> {
    lattice_disk(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{approximate_domain, AnalyticShape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(x: i32, y: i32) -> Site {
        Site::new(x, y)
    }

    fn e(ix: i32, iy: i32, ox: i32, oy: i32) -> BoundaryEdge {
        BoundaryEdge::new(s(ix, iy), s(ox, oy)).unwrap()
    }

    #[test]
    fn hand_examples() {
        let w1 = [s(0, 0), s(1, 0), s(0, 0), s(0, 1)];
        assert_eq!(loop_erase(&w1), vec![s(0, 0), s(0, 1)]);
        let w2 = [s(0, 0), s(1, 0), s(1, 1), s(1, 0), s(2, 0)];
        assert_eq!(loop_erase(&w2), vec![s(0, 0), s(1, 0), s(2, 0)]);
        let straight = [s(0, 0), s(1, 0), s(2, 0)];
        assert_eq!(loop_erase(&straight), straight.to_vec());
        assert_eq!(loop_erase_reference(&w1), loop_erase(&w1));
        assert_eq!(loop_erase_reference(&w2), loop_erase(&w2));
    }

    #[test]
    fn single_site_weight() {
        let t = DomainTriple::new(vec![Site::ORIGIN], e(0, 0, -1, 0), e(0, 0, 1, 0)).unwrap();
        let saws = enumerate_saws(&t).unwrap();
        assert_eq!(saws.len(), 1);
        assert!((saws[0].1 - 1.0 / 16.0).abs() < 1e-15);
        assert!((exact_visit_probability(&t, Site::ORIGIN).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_site_weight() {
        let t = DomainTriple::new(vec![s(0, 0), s(1, 0)], e(0, 0, -1, 0), e(1, 0, 2, 0)).unwrap();
        let saws = enumerate_saws(&t).unwrap();
        assert_eq!(saws.len(), 1);
        assert!((saws[0].1 - 1.0 / 60.0).abs() < 1e-15);
        assert!((exact_visit_probability(&t, s(0, 0)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_match_determinant_ratio() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 2).unwrap();
        let det_a = laplacian_determinant(t.sites());
        for (saw, w) in enumerate_saws(&t).unwrap() {
            let rest: Vec<Site> =
                t.sites().iter().copied().filter(|x| !saw.interior().contains(x)).collect();
            let f = laplacian_determinant(&rest) / det_a;
            let expect = 4f64.powi(-(saw.steps() as i32)) * f;
            assert!((w - expect).abs() < 1e-13 * expect, "{w} vs {expect}");
        }
    }

    #[test]
    fn sampler_on_single_site() {
        let t = DomainTriple::new(vec![Site::ORIGIN], e(0, 0, -1, 0), e(0, 0, 0, 1)).unwrap();
        let law = HarmonicTable::build(&t).unwrap().hprocess_law().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let saw = sample_lerw(&t, &law, &mut rng);
            assert_eq!(saw.vertices, vec![s(-1, 0), s(0, 0), s(0, 1)]);
        }
    }

    #[test]
    fn decomposition_reassembles() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 10).unwrap();
        let law = HarmonicTable::build(&t).unwrap().hprocess_law().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = 0;
        for _ in 0..50 {
            let saw = sample_lerw(&t, &law, &mut rng);
            if let Some(d) = first_last_decompose(&saw, 3.0, &t).unwrap() {
                seen += 1;
                assert_eq!(d.reassemble(), saw.vertices);
                assert!(d.inner.in_s_r(3.0));
                assert!(d.inner.contains(Site::ORIGIN));
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn straight_path_through_origin() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 6).unwrap();
        let mut v: Vec<Site> = (-6..=6).rev().map(|x| s(x, 0)).collect();
        v[0] = t.a.outer;
        *v.last_mut().unwrap() = t.b.outer;
        let saw = Saw::chordal(v, t.a, t.b);
        let d = first_last_decompose(&saw, 2.0, &t).unwrap().unwrap();
        assert_eq!(d.eta_tilde, vec![s(1, 0), s(0, 0), s(-1, 0)]);
        assert_eq!(d.inner.a.inner, s(1, 0));
        assert_eq!(d.inner.b.inner, s(-1, 0));
        let far = Saw::chordal(vec![t.a.outer, t.a.inner, t.a.outer], t.a, t.b);
        assert!(first_last_decompose(&far, 2.0, &t).unwrap().is_none());
    }

    #[test]
    fn separation_extremes() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 10).unwrap();
        let mut v: Vec<Site> = (-10..=10).rev().map(|x| s(x, 0)).collect();
        v[0] = t.a.outer;
        *v.last_mut().unwrap() = t.b.outer;
        let through = Saw::chordal(v, t.a, t.b);
        let s_through = separation_of(&through, 4.0, &t).unwrap();
        assert!(s_through > 0.97, "{s_through}");

        let a = e(9, 2, 10, 2);
        let b = e(8, 3, 9, 3);
        let t2 = t.with_marks(a, b).unwrap();
        let mut w = vec![s(10, 2)];
        w.extend((3..=9).rev().map(|x| s(x, 2)));
        w.extend((3..=8).map(|x| s(x, 3)));
        w.push(s(9, 3));
        let touch = Saw::chordal(w, a, b);
        let d = first_last_decompose(&touch, 4.0, &t2).unwrap().unwrap();
        assert_eq!(d.eta_tilde, vec![s(3, 2)]);
        let s_touch = separation_statistic(&d).unwrap();
        assert!(s_touch < 0.2, "{s_touch}");
        let miss = Saw::chordal(vec![t.a.outer, t.a.inner, t.a.outer], t.a, t.b);
        assert_eq!(separation_of(&miss, 4.0, &t).unwrap(), 0.0);
    }

    #[test]
    fn harmonic_separation_tracks_conformal() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 16).unwrap();
        let law = HarmonicTable::build(&t).unwrap().hprocess_law().unwrap();
        let mut rng = crate::stats::replica_rng(11, 0);
        let mut seen = 0;
        while seen < 6 {
            let eta = sample_lerw(&t, &law, &mut rng);
            let Some(d) = first_last_decompose(&eta, 8.0, &t).unwrap() else { continue };
            let a = separation_statistic(&d).unwrap();
            let b = separation_statistic_harmonic(&d).unwrap();
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
            seen += 1;
        }
    }

    #[test]
    fn visit_count_examples() {
        let line: Vec<Site> = (0..=10).map(|x| s(x, 0)).collect();
        let vc = visit_counts(&line, 10.0);
        assert_eq!(vc.t, 11);
        assert_eq!(vc.tbar, 11);
        let mut prev = 0;
        for r in [1.0, 2.0, 3.0, 5.0, 8.0] {
            let tb = tbar_exact(&line, r);
            assert!(tb >= prev);
            prev = tb;
        }
    }

    #[test]
    fn bottleneck_examples() {
        let out: Vec<Site> = (0..20).map(|x| s(x, 0)).collect();
        assert!(!bottleneck_event(&out, 2.0, 10.0));
        let mut back = out.clone();
        back.extend((0..19).rev().map(|x| s(x, 1)));
        assert!(bottleneck_event(&back, 2.0, 10.0));
    }

    #[test]
    fn radial_lerw_ends_outside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let eta = sample_radial_lerw(8.0, &mut rng);
            assert_eq!(eta[0], Site::ORIGIN);
            assert!(eta.last().unwrap().norm() >= 8.0);
            assert!(eta[..eta.len() - 1].iter().all(|p| p.norm() < 8.0));
            assert!(Saw::rooted(eta).is_self_avoiding());
        }
    }
}
