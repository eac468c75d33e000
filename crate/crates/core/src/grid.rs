//! Lattice geometry: sites, boundary edges, domain triples, union-of-squares
//! polygons and lattice approximations of planar shapes.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const NONE: u32 = u32::MAX;

/// A point of the square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl From<[i32; 2]> for Site {
    fn from(v: [i32; 2]) -> Self {
        Site { x: v[0], y: v[1] }
    }
}

impl From<Site> for [i32; 2] {
    fn from(s: Site) -> Self {
        [s.x, s.y]
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    /// East, north, west, south.
    pub fn neighbors(self) -> [Site; 4] {
        [
            Site::new(self.x + 1, self.y),
            Site::new(self.x, self.y + 1),
            Site::new(self.x - 1, self.y),
            Site::new(self.x, self.y - 1),
        ]
    }

    pub fn is_adjacent(self, other: Site) -> bool {
        (self.x - other.x).abs() + (self.y - other.y).abs() == 1
    }

    pub fn norm2(self) -> i64 {
        let (x, y) = (self.x as i64, self.y as i64);
        x * x + y * y
    }

    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x as f64, self.y as f64)
    }
}

/// A directed boundary edge: `inner` lies in the domain, `outer` does not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub inner: Site,
    pub outer: Site,
}

impl BoundaryEdge {
    pub fn new(inner: Site, outer: Site) -> Result<Self> {
        if !inner.is_adjacent(outer) {
            return Err(LabError::InvalidDomain(format!(
                "edge endpoints {inner} and {outer} are not nearest neighbors"
            )));
        }
        Ok(BoundaryEdge { inner, outer })
    }

    pub fn midpoint(&self) -> Complex64 {
        (self.inner.to_complex() + self.outer.to_complex()) * 0.5
    }

    /// Unit vector from inner to outer.
    pub fn direction(&self) -> (i32, i32) {
        (self.outer.x - self.inner.x, self.outer.y - self.inner.y)
    }
}

/// Dense bounding-box lookup from sites to indices.
#[derive(Clone, Debug)]
pub struct SiteIndex {
    xmin: i32,
    ymin: i32,
    width: usize,
    height: usize,
    slots: Vec<u32>,
}

impl SiteIndex {
    pub fn new(sites: &[Site]) -> Self {
        if sites.is_empty() {
            return SiteIndex { xmin: 0, ymin: 0, width: 0, height: 0, slots: Vec::new() };
        }
        let xmin = sites.iter().map(|s| s.x).min().unwrap();
        let xmax = sites.iter().map(|s| s.x).max().unwrap();
        let ymin = sites.iter().map(|s| s.y).min().unwrap();
        let ymax = sites.iter().map(|s| s.y).max().unwrap();
        let width = (xmax - xmin + 1) as usize;
        let height = (ymax - ymin + 1) as usize;
        let mut slots = vec![NONE; width * height];
        for (i, s) in sites.iter().enumerate() {
            slots[(s.y - ymin) as usize * width + (s.x - xmin) as usize] = i as u32;
        }
        SiteIndex { xmin, ymin, width, height, slots }
    }

    #[inline]
    pub fn get(&self, s: Site) -> Option<usize> {
        let dx = s.x - self.xmin;
        let dy = s.y - self.ymin;
        if dx < 0 || dy < 0 || dx as usize >= self.width || dy as usize >= self.height {
            return None;
        }
        let v = self.slots[dy as usize * self.width + dx as usize];
        (v != NONE).then_some(v as usize)
    }
}

/// A finite lattice set with neighbor tables, stored in row-major order.
#[derive(Clone, Debug)]
pub struct SiteSet {
    sites: Vec<Site>,
    index: SiteIndex,
    nbr: Vec<[u32; 4]>,
}

impl SiteSet {
    pub fn new(mut sites: Vec<Site>) -> Self {
        sites.sort_by_key(|s| (s.y, s.x));
        sites.dedup();
        let index = SiteIndex::new(&sites);
        let nbr = sites
            .iter()
            .map(|s| {
                let n = s.neighbors();
                let mut out = [NONE; 4];
                for k in 0..4 {
                    if let Some(i) = index.get(n[k]) {
                        out[k] = i as u32;
                    }
                }
                out
            })
            .collect();
        SiteSet { sites, index, nbr }
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index.get(s).is_some()
    }

    #[inline]
    pub fn index_of(&self, s: Site) -> Option<usize> {
        self.index.get(s)
    }

    #[inline]
    pub fn site(&self, i: usize) -> Site {
        self.sites[i]
    }

    /// Neighbor indices in the order east, north, west, south; `NONE` for outside.
    #[inline]
    pub fn neighbor_slots(&self, i: usize) -> &[u32; 4] {
        &self.nbr[i]
    }

    /// Indices reachable from `start` inside `alive`.
    pub fn component(&self, start: usize, alive: &[bool]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        if !alive[start] {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.nbr[i] {
                if j != NONE && alive[j as usize] && !seen[j as usize] {
                    seen[j as usize] = true;
                    queue.push_back(j as usize);
                }
            }
        }
        seen
    }
}

/// A finite simply connected lattice set with two marked boundary edges.
#[derive(Clone, Debug)]
pub struct DomainTriple {
    set: SiteSet,
    pub a: BoundaryEdge,
    pub b: BoundaryEdge,
}

#[derive(Serialize, Deserialize)]
struct DomainJson {
    sites: Vec<Site>,
    a: BoundaryEdge,
    b: BoundaryEdge,
}

impl PartialEq for DomainTriple {
    fn eq(&self, other: &Self) -> bool {
        self.sites() == other.sites() && self.a == other.a && self.b == other.b
    }
}

impl DomainTriple {
    /// Builds and validates a triple. Sites are stored in row-major order.
    pub fn new(sites: Vec<Site>, a: BoundaryEdge, b: BoundaryEdge) -> Result<Self> {
        let t = Self::build(sites, a, b);
        t.validate()?;
        Ok(t)
    }

    fn build(sites: Vec<Site>, a: BoundaryEdge, b: BoundaryEdge) -> Self {
        DomainTriple { set: SiteSet::new(sites), a, b }
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(LabError::EmptyDomain);
        }
        for (name, e) in [("a", &self.a), ("b", &self.b)] {
            if !e.inner.is_adjacent(e.outer) {
                return Err(LabError::InvalidDomain(format!("edge {name} is not a lattice edge")));
            }
            if !self.contains(e.inner) || self.contains(e.outer) {
                return Err(LabError::InvalidDomain(format!(
                    "edge {name} must go from a site of A to a site outside A"
                )));
            }
        }
        if self.a.outer == self.b.outer {
            return Err(LabError::DegenerateMarks);
        }
        if !check_simply_connected(self.sites()) {
            return Err(LabError::InvalidDomain("A is not simply connected".into()));
        }
        Ok(())
    }

    pub fn set(&self) -> &SiteSet {
        &self.set
    }

    pub fn sites(&self) -> &[Site] {
        self.set.sites()
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.set.contains(s)
    }

    pub fn index_of(&self, s: Site) -> Option<usize> {
        self.set.index_of(s)
    }

    pub fn site(&self, i: usize) -> Site {
        self.set.site(i)
    }

    #[inline]
    pub fn neighbor_slots(&self, i: usize) -> &[u32; 4] {
        self.set.neighbor_slots(i)
    }

    /// All boundary edges (inner in A, outer not in A).
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let mut out = Vec::new();
        for (i, s) in self.sites().iter().enumerate() {
            let n = s.neighbors();
            for k in 0..4 {
                if self.neighbor_slots(i)[k] == NONE {
                    out.push(BoundaryEdge { inner: *s, outer: n[k] });
                }
            }
        }
        out
    }

    /// C_r is contained in A.
    pub fn contains_disk(&self, r: f64) -> bool {
        lattice_disk(r).into_iter().all(|s| self.contains(s))
    }

    /// C_r is contained in A and both inner endpoints lie in C_r.
    pub fn in_s_r(&self, r: f64) -> bool {
        let r2 = r * r;
        self.contains_disk(r)
            && (self.a.inner.norm2() as f64) < r2
            && (self.b.inner.norm2() as f64) < r2
    }

    pub fn with_marks(&self, a: BoundaryEdge, b: BoundaryEdge) -> Result<Self> {
        let t = DomainTriple { a, b, ..self.clone() };
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DomainJson { sites: self.sites().to_vec(), a: self.a, b: self.b })
            .expect("domain serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: DomainJson =
            serde_json::from_str(s).map_err(|e| LabError::InvalidDomain(e.to_string()))?;
        DomainTriple::new(j.sites, j.a, j.b)
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

}

/// The discrete open disk {z : |z| < r}.
pub fn lattice_disk(r: f64) -> Vec<Site> {
    let r2 = r * r;
    let m = r.ceil() as i32;
    let mut out = Vec::new();
    for y in -m..=m {
        for x in -m..=m {
            let s = Site::new(x, y);
            if (s.norm2() as f64) < r2 {
                out.push(s);
            }
        }
    }
    out
}

/// True iff the set is 4-connected and its complement (with a point at
/// infinity) is 4-connected.
pub fn check_simply_connected(sites: &[Site]) -> bool {
    if sites.is_empty() {
        return false;
    }
    let idx = SiteIndex::new(sites);
    let n = sites.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([idx.get(sites[0]).unwrap()]);
    seen[queue[0]] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for s in sites[i].neighbors() {
            if let Some(j) = idx.get(s) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
    }
    if count != sites.iter().collect::<std::collections::HashSet<_>>().len() {
        return false;
    }
    // Complement flood fill on the bounding box grown by one cell.
    let xmin = sites.iter().map(|s| s.x).min().unwrap() - 1;
    let xmax = sites.iter().map(|s| s.x).max().unwrap() + 1;
    let ymin = sites.iter().map(|s| s.y).min().unwrap() - 1;
    let ymax = sites.iter().map(|s| s.y).max().unwrap() + 1;
    let w = (xmax - xmin + 1) as usize;
    let h = (ymax - ymin + 1) as usize;
    let cell = |x: i32, y: i32| (y - ymin) as usize * w + (x - xmin) as usize;
    let mut outside = vec![false; w * h];
    let mut total_out = 0usize;
    for y in ymin..=ymax {
        for x in xmin..=xmax {
            if idx.get(Site::new(x, y)).is_none() {
                outside[cell(x, y)] = true;
                total_out += 1;
            }
        }
    }
    let mut visited = vec![false; w * h];
    let mut q = VecDeque::from([(xmin, ymin)]);
    visited[cell(xmin, ymin)] = true;
    let mut reached = 1usize;
    while let Some((x, y)) = q.pop_front() {
        for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if nx < xmin || nx > xmax || ny < ymin || ny > ymax {
                continue;
            }
            let c = cell(nx, ny);
            if outside[c] && !visited[c] {
                visited[c] = true;
                reached += 1;
                q.push_back((nx, ny));
            }
        }
    }
    reached == total_out
}

/// Containment test callback for user-supplied shapes.
pub type ShapePredicate = Arc<dyn Fn(Complex64) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum ShapeKind {
    Disk { center: Complex64, radius: f64 },
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Polygon(Vec<Complex64>),
    Predicate { inside: ShapePredicate, bbox: [f64; 4] },
}

impl fmt::Debug for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeKind::Disk { center, radius } => {
                write!(f, "Disk {{ center: {center}, radius: {radius} }}")
            }
            ShapeKind::Rectangle { x0, x1, y0, y1 } => {
                write!(f, "Rectangle [{x0}, {x1}] x [{y0}, {y1}]")
            }
            ShapeKind::Polygon(v) => write!(f, "Polygon({} vertices)", v.len()),
            ShapeKind::Predicate { bbox, .. } => write!(f, "Predicate(bbox {bbox:?})"),
        }
    }
}

/// A bounded simply connected planar shape containing the origin, with two
/// marked boundary points.
#[derive(Clone, Debug)]
pub struct AnalyticShape {
    pub kind: ShapeKind,
    pub mark_a: Complex64,
    pub mark_b: Complex64,
}

impl AnalyticShape {
    pub fn unit_disk() -> Self {
        AnalyticShape {
            kind: ShapeKind::Disk { center: Complex64::new(0.0, 0.0), radius: 1.0 },
            mark_a: Complex64::new(1.0, 0.0),
            mark_b: Complex64::new(-1.0, 0.0),
        }
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, a: Complex64, b: Complex64) -> Self {
        AnalyticShape { kind: ShapeKind::Rectangle { x0, x1, y0, y1 }, mark_a: a, mark_b: b }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match &self.kind {
            ShapeKind::Disk { center, radius } => (z - center).norm() < *radius,
            ShapeKind::Rectangle { x0, x1, y0, y1 } => {
                z.re > *x0 && z.re < *x1 && z.im > *y0 && z.im < *y1
            }
            ShapeKind::Polygon(v) => point_in_polygon(v, z),
            ShapeKind::Predicate { inside, .. } => inside(z),
        }
    }

    fn is_convex_kind(&self) -> bool {
        matches!(self.kind, ShapeKind::Disk { .. } | ShapeKind::Rectangle { .. })
    }

    fn bbox(&self) -> [f64; 4] {
        match &self.kind {
            ShapeKind::Disk { center, radius } => {
                [center.re - radius, center.re + radius, center.im - radius, center.im + radius]
            }
            ShapeKind::Rectangle { x0, x1, y0, y1 } => [*x0, *x1, *y0, *y1],
            ShapeKind::Polygon(v) => {
                let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
                for p in v {
                    b[0] = b[0].min(p.re);
                    b[1] = b[1].max(p.re);
                    b[2] = b[2].min(p.im);
                    b[3] = b[3].max(p.im);
                }
                b
            }
            ShapeKind::Predicate { bbox, .. } => *bbox,
        }
    }

    /// Whether the closed unit square centered at `s` lies in `n` times the shape.
    fn square_inside(&self, s: Site, n: f64) -> bool {
        let c = s.to_complex();
        let test = |dx: f64, dy: f64| self.contains((c + Complex64::new(dx, dy)) / n);
        let corners = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)];
        if !corners.iter().all(|&(dx, dy)| test(dx, dy)) {
            return false;
        }
        if self.is_convex_kind() {
            return true;
        }
        let k = 8;
        (0..k).all(|i| {
            let t = -0.5 + i as f64 / k as f64;
            test(t, -0.5) && test(0.5, t) && test(-t, 0.5) && test(-0.5, -t)
        })
    }
}

pub fn point_in_polygon(v: &[Complex64], z: Complex64) -> bool {
    let mut inside = false;
    let n = v.len();
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (v[i], v[j]);
        if (pi.im > z.im) != (pj.im > z.im)
            && z.re < (pj.re - pi.re) * (z.im - pi.im) / (pj.im - pi.im) + pi.re
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn angle_0_2pi(z: Complex64) -> f64 {
    let a = z.im.atan2(z.re);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

fn nearest_edge(edges: &[BoundaryEdge], target: Complex64) -> BoundaryEdge {
    let key = |e: &BoundaryEdge| {
        let m = e.midpoint();
        ((m - target).norm(), angle_0_2pi(m))
    };
    *edges
        .iter()
        .min_by(|e1, e2| key(e1).partial_cmp(&key(e2)).expect("finite keys"))
        .expect("nonempty boundary")
}

/// Lattice approximation: component containing 0 of {z : square(z) in N*shape},
/// with marks at the boundary edges nearest to N*a' and N*b'.
pub fn approximate_domain(shape: &AnalyticShape, n: usize) -> Result<DomainTriple> {
    if shape.mark_a == shape.mark_b {
        return Err(LabError::DegenerateMarks);
    }
    let nf = n as f64;
    let bb = shape.bbox();
    let (x0, x1) = ((bb[0] * nf).floor() as i32 - 1, (bb[1] * nf).ceil() as i32 + 1);
    let (y0, y1) = ((bb[2] * nf).floor() as i32 - 1, (bb[3] * nf).ceil() as i32 + 1);
    let mut fits = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let s = Site::new(x, y);
            if shape.square_inside(s, nf) {
                fits.push(s);
            }
        }
    }
    let idx = SiteIndex::new(&fits);
    let start = idx.get(Site::ORIGIN).ok_or(LabError::EmptyDomain)?;
    let mut seen = vec![false; fits.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut comp = vec![Site::ORIGIN];
    while let Some(i) = queue.pop_front() {
        for s in fits[i].neighbors() {
            if let Some(j) = idx.get(s) {
                if !seen[j] {
                    seen[j] = true;
                    comp.push(s);
                    queue.push_back(j);
                }
            }
        }
    }
    let probe = DomainTriple::build(comp, dummy_edge(), dummy_edge());
    let edges = probe.boundary_edges();
    let a = nearest_edge(&edges, shape.mark_a * nf);
    let b = nearest_edge(&edges, shape.mark_b * nf);
    if a == b || a.outer == b.outer {
        return Err(LabError::DegenerateMarks);
    }
    let t = DomainTriple { a, b, ..probe };
    t.validate()?;
    Ok(t)
}

fn dummy_edge() -> BoundaryEdge {
    BoundaryEdge { inner: Site::ORIGIN, outer: Site::new(1, 0) }
}

/// Removes the initial segment eta_1..eta_j of a path `[eta_0 = a-, eta_1 = a+, ...]`.
/// The result is the component of the remainder containing `b.inner`, marked
/// at the edge from eta_j to eta_{j+1}.
pub fn remove_initial_segment(t: &DomainTriple, path: &[Site], j: usize) -> Result<DomainTriple> {
    if path.len() < 2 || path[0] != t.a.outer || path[1] != t.a.inner {
        return Err(LabError::PathNotInDomain("path must start with the edge a".into()));
    }
    if j == 0 {
        return Ok(t.clone());
    }
    if j + 1 >= path.len() {
        return Err(LabError::PathExhaustsDomain(j));
    }
    let mut alive = vec![true; t.len()];
    for (k, s) in path[1..=j].iter().enumerate() {
        let i = t
            .index_of(*s)
            .ok_or_else(|| LabError::PathNotInDomain(format!("vertex {} = {s} not in A", k + 1)))?;
        alive[i] = false;
    }
    let tip = path[j + 1];
    let tip_i = t.index_of(tip).ok_or(LabError::PathExhaustsDomain(j))?;
    let bi = t.index_of(t.b.inner).expect("b.inner in A");
    if !alive[bi] || !alive[tip_i] {
        return Err(LabError::PathExhaustsDomain(j));
    }
    let comp = t.set().component(bi, &alive);
    if !comp[tip_i] {
        return Err(LabError::PathExhaustsDomain(j));
    }
    let sites: Vec<Site> = (0..t.len()).filter(|&i| comp[i]).map(|i| t.site(i)).collect();
    let a = BoundaryEdge { inner: tip, outer: path[j] };
    DomainTriple::new(sites, a, t.b)
}

/// The Jordan polygon bounding the union of closed unit squares of a triple,
/// traversed counterclockwise from the midpoint of `a`.
#[derive(Clone, Debug)]
pub struct UnionOfSquares {
    pub vertices: Vec<Complex64>,
    pub a_index: usize,
    pub b_index: usize,
    pub source: DomainTriple,
}

type P2 = (i64, i64);

fn edge_segment(e: &BoundaryEdge) -> (P2, P2, P2) {
    let (dx, dy) = e.direction();
    let (dx, dy) = (dx as i64, dy as i64);
    let mid = (2 * e.inner.x as i64 + dx, 2 * e.inner.y as i64 + dy);
    let v = (-dy, dx);
    ((mid.0 - v.0, mid.1 - v.1), mid, (mid.0 + v.0, mid.1 + v.1))
}

fn half(p: P2) -> Complex64 {
    Complex64::new(p.0 as f64 * 0.5, p.1 as f64 * 0.5)
}

pub fn union_of_squares(t: &DomainTriple) -> UnionOfSquares {
    let edges = t.boundary_edges();
    let mut next: HashMap<P2, usize> = HashMap::with_capacity(edges.len());
    for (k, e) in edges.iter().enumerate() {
        let (s, _, _) = edge_segment(e);
        let prev = next.insert(s, k);
        debug_assert!(prev.is_none(), "pinched boundary vertex");
    }
    let (a_start, a_mid, a_end) = edge_segment(&t.a);
    let mut verts = vec![half(a_mid)];
    let mut b_index = usize::MAX;
    let mut cur = a_end;
    loop {
        verts.push(half(cur));
        if cur == a_start {
            break;
        }
        let e = &edges[next[&cur]];
        let (_, m, end) = edge_segment(e);
        if *e == t.b {
            b_index = verts.len();
            verts.push(half(m));
        }
        cur = end;
    }
    UnionOfSquares { vertices: verts, a_index: 0, b_index, source: t.clone() }
}

/// Boundary edges met counterclockwise strictly between a and b.
pub fn boundary_arc(t: &DomainTriple) -> Vec<BoundaryEdge> {
    let edges = t.boundary_edges();
    let mut next: HashMap<P2, usize> = HashMap::with_capacity(edges.len());
    for (k, e) in edges.iter().enumerate() {
        next.insert(edge_segment(e).0, k);
    }
    let mut out = Vec::new();
    let mut cur = edge_segment(&t.a).2;
    loop {
        let e = edges[next[&cur]];
        if e == t.b || e == t.a {
            break;
        }
        out.push(e);
        cur = edge_segment(&e).2;
    }
    out
}

impl UnionOfSquares {
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n).map(|i| v[i].re * v[(i + 1) % n].im - v[(i + 1) % n].re * v[i].im).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        (0..n).map(|i| (v[(i + 1) % n] - v[i]).norm()).sum()
    }

    pub fn contains(&self, z: Complex64) -> bool {
        point_in_polygon(&self.vertices, z)
    }

    pub fn distance_to_boundary(&self, z: Complex64) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        (0..n).map(|i| point_segment_distance(z, v[i], v[(i + 1) % n])).fold(f64::INFINITY, f64::min)
    }

    /// Vertex list with each side split into `m` equal pieces; returns the
    /// refined list and the new indices of a and b.
    pub fn refined(&self, m: usize) -> (Vec<Complex64>, usize, usize) {
        let v = &self.vertices;
        let n = v.len();
        let mut out = Vec::with_capacity(n * m);
        let mut b_new = 0;
        for i in 0..n {
            if i == self.b_index {
                b_new = out.len();
            }
            let (p, q) = (v[i], v[(i + 1) % n]);
            for k in 0..m {
                out.push(p + (q - p) * (k as f64 / m as f64));
            }
        }
        (out, 0, b_new)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,x,y\n");
        for (i, p) in self.vertices.iter().enumerate() {
            s.push_str(&format!("{i},{},{}\n", p.re, p.im));
        }
        s
    }
}

pub fn point_segment_distance(z: Complex64, p: Complex64, q: Complex64) -> f64 {
    let d = q - p;
    let l2 = d.norm_sqr();
    if l2 == 0.0 {
        return (z - p).norm();
    }
    let t = (((z - p) * d.conj()).re / l2).clamp(0.0, 1.0);
    (z - (p + d * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(ix: i32, iy: i32, ox: i32, oy: i32) -> BoundaryEdge {
        BoundaryEdge::new(Site::new(ix, iy), Site::new(ox, oy)).unwrap()
    }

    #[test]
    fn small_disks() {
        assert_eq!(lattice_disk(1.0), vec![Site::ORIGIN]);
        // |(1,1)| = 1.414 < 1.5, so the corners belong to C_1.5.
        assert_eq!(lattice_disk(1.5).len(), 9);
        assert_eq!(lattice_disk(1.4).len(), 5);
    }

    #[test]
    fn disk_2_5_matches_box_scan() {
        let mut scan = Vec::new();
        for x in -3..=3 {
            for y in -3..=3 {
                if x * x + y * y < 7 {
                    scan.push(Site::new(x, y));
                }
            }
        }
        let mut d = lattice_disk(2.5);
        d.sort();
        scan.sort();
        assert_eq!(d, scan);
        assert_eq!(d.len(), 21);
    }

    #[test]
    fn simple_connectivity_checks() {
        assert!(check_simply_connected(&[Site::ORIGIN]));
        let ring: Vec<Site> = (-1..=1)
            .flat_map(|x| (-1..=1).map(move |y| Site::new(x, y)))
            .filter(|s| *s != Site::ORIGIN)
            .collect();
        assert!(!check_simply_connected(&ring));
        assert!(check_simply_connected(&lattice_disk(10.0)));
        assert!(!check_simply_connected(&[Site::ORIGIN, Site::new(2, 0)]));
    }

    #[test]
    fn disk_approximation_n3() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 3).unwrap();
        assert_eq!(t.len(), 21);
        assert_eq!(t.a.midpoint(), Complex64::new(2.5, 0.0));
        assert_eq!(t.b.midpoint(), Complex64::new(-2.5, 0.0));
    }

    #[test]
    fn disk_approximation_n1_is_origin() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 1).unwrap();
        assert_eq!(t.sites(), &[Site::ORIGIN]);
    }

    #[test]
    fn coinciding_marks_rejected() {
        let mut s = AnalyticShape::unit_disk();
        s.mark_b = s.mark_a;
        assert_eq!(approximate_domain(&s, 5).unwrap_err(), LabError::DegenerateMarks);
    }

    #[test]
    fn squares_polygons() {
        let t = DomainTriple::new(vec![Site::ORIGIN], e(0, 0, -1, 0), e(0, 0, 1, 0)).unwrap();
        let u = union_of_squares(&t);
        assert!((u.signed_area() - 1.0).abs() < 1e-12);
        assert!((u.perimeter() - 4.0).abs() < 1e-12);
        assert_eq!(u.vertices[u.b_index], Complex64::new(0.5, 0.0));
        let t2 = DomainTriple::new(vec![Site::ORIGIN, Site::new(1, 0)], e(0, 0, -1, 0), e(1, 0, 2, 0))
            .unwrap();
        assert!((union_of_squares(&t2).signed_area() - 2.0).abs() < 1e-12);
        let t3 = DomainTriple::new(lattice_disk(2.5), e(2, 0, 3, 0), e(-2, 0, -3, 0)).unwrap();
        assert!((union_of_squares(&t3).signed_area() - 21.0).abs() < 1e-12);
    }

    #[test]
    fn remove_prefix_steps() {
        let t = DomainTriple::new(lattice_disk(2.5), e(2, 0, 3, 0), e(-2, 0, -3, 0)).unwrap();
        let path = [Site::new(3, 0), Site::new(2, 0), Site::new(1, 0), Site::new(0, 0)];
        assert_eq!(remove_initial_segment(&t, &path, 0).unwrap(), t);
        let t1 = remove_initial_segment(&t, &path, 1).unwrap();
        assert_eq!(t1.len(), 20);
        assert_eq!(t1.a.midpoint(), Complex64::new(1.5, 0.0));
    }

    #[test]
    fn remove_prefix_drops_pocket() {
        // Removing the middle of the top row isolates the square above it.
        let sites: Vec<Site> =
            [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (1, 2)].iter().map(|&(x, y)| Site::new(x, y)).collect();
        let t = DomainTriple::new(sites, e(2, 1, 3, 1), e(0, 0, -1, 0)).unwrap();
        let path = [Site::new(3, 1), Site::new(2, 1), Site::new(1, 1), Site::new(1, 0)];
        let t2 = remove_initial_segment(&t, &path, 2).unwrap();
        assert!(!t2.contains(Site::new(1, 2)));
        assert_eq!(t2.len(), 4);
    }

    #[test]
    fn json_round_trip() {
        let t = DomainTriple::new(lattice_disk(2.5), e(2, 0, 3, 0), e(-2, 0, -3, 0)).unwrap();
        let back = DomainTriple::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.content_hash(), t.content_hash());
    }
}
