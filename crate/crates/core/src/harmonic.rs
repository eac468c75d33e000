//! Discrete potential theory on lattice domains: Green's functions, exit
//! kernels, the boundary Poisson kernel and the h-process toward an edge.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::grid::{boundary_arc, lattice_disk, BoundaryEdge, DomainTriple, Site, SiteSet, NONE};

/// Largest domain for which the full Green matrix is stored.
pub const DENSE_LIMIT: usize = 1024;

/// Relative residual target for the iterative solver.
pub const ITERATIVE_TOL: f64 = 1e-13;

const CACHE_MAGIC: &[u8; 8] = b"LERWHTAB";
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Applies y = (4I - Adj) x on the set.
pub fn apply_operator(set: &SiteSet, x: &[f64], y: &mut [f64]) {
    for i in 0..set.len() {
        let mut s = 4.0 * x[i];
        for &j in set.neighbor_slots(i) {
            if j != NONE {
                s -= x[j as usize];
            }
        }
        y[i] = s;
    }
}

fn ssor_omega(n: usize) -> f64 {
    let n = n.max(1) as f64;
    (2.0 / (1.0 + 3.0 / n.sqrt())).clamp(1.0, 1.97)
}

// Symmetric SOR preconditioner; sites are row-major so east/north have larger index.
fn ssor_apply(set: &SiteSet, omega: f64, r: &[f64], z: &mut [f64]) {
    let n = set.len();
    for i in 0..n {
        let nb = set.neighbor_slots(i);
        let mut s = r[i];
        for k in [2usize, 3] {
            if nb[k] != NONE {
                s += omega * z[nb[k] as usize];
            }
        }
        z[i] = s / 4.0;
    }
    for v in z.iter_mut() {
        *v *= 4.0;
    }
    for i in (0..n).rev() {
        let nb = set.neighbor_slots(i);
        let mut s = z[i];
        for k in [0usize, 1] {
            if nb[k] != NONE {
                s += omega * z[nb[k] as usize];
            }
        }
        z[i] = s / 4.0;
    }
}

/// Solves (4I - Adj) x = rhs by SSOR-preconditioned conjugate gradients.
pub fn solve_operator(set: &SiteSet, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, SolveStats)> {
    let n = set.len();
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveStats::default()));
    }
    let omega = ssor_omega(n);
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    ssor_apply(set, omega, &r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let max_iter = 20 * n + 1000;
    let mut rel = 1.0;
    for it in 0..max_iter {
        apply_operator(set, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        if rel <= tol {
            return Ok((x, SolveStats { iterations: it + 1, relative_residual: rel }));
        }
        ssor_apply(set, omega, &r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // Accept a residual that stalled at rounding level.
    if rel <= tol * 100.0 {
        return Ok((x, SolveStats { iterations: max_iter, relative_residual: rel }));
    }
    Err(LabError::SolverFailure { residual: rel, iterations: max_iter })
}

/// Full Green matrix G = (I - P)^{-1}, row-major.
pub fn dense_green(set: &SiteSet) -> Result<Vec<f64>> {
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
    let chol = m.cholesky().ok_or(LabError::SolverFailure { residual: f64::NAN, iterations: 0 })?;
    let inv = chol.inverse();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    Ok(out)
}

/// Column G(., w) of the Green's function of an arbitrary finite set.
pub fn green_column(set: &SiteSet, w: usize) -> Result<Vec<f64>> {
    let n = set.len();
    if n <= 64 {
        let g = dense_green(set)?;
        return Ok((0..n).map(|i| g[i * n + w]).collect());
    }
    let mut rhs = vec![0.0; n];
    rhs[w] = 4.0;
    Ok(solve_operator(set, &rhs, ITERATIVE_TOL)?.0)
}

/// Solves the Dirichlet problem on `set` with boundary data on outside neighbors.
pub fn dirichlet_solve(set: &SiteSet, boundary: impl Fn(Site) -> f64, tol: f64) -> Result<Vec<f64>> {
    let n = set.len();
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let nb = set.site(i).neighbors();
        for k in 0..4 {
            if set.neighbor_slots(i)[k] == NONE {
                rhs[i] += boundary(nb[k]);
            }
        }
    }
    Ok(solve_operator(set, &rhs, tol)?.0)
}

#[derive(Clone, Debug)]
enum GreenStore {
    Dense(Vec<f64>),
    OnDemand,
}

/// Green's function data for a domain triple.
#[derive(Clone, Debug)]
pub struct HarmonicTable {
    domain: DomainTriple,
    store: GreenStore,
    /// G(., b.inner).
    b_column: Vec<f64>,
}

impl HarmonicTable {
    pub fn build(t: &DomainTriple) -> Result<Self> {
        if t.len() <= DENSE_LIMIT {
            Self::build_dense(t)
        } else {
            Self::build_iterative(t)
        }
    }

    pub fn build_dense(t: &DomainTriple) -> Result<Self> {
        let g = dense_green(t.set())?;
        let n = t.len();
        let bi = t.index_of(t.b.inner).expect("b.inner in A");
        let b_column = (0..n).map(|i| g[i * n + bi]).collect();
        Ok(HarmonicTable { domain: t.clone(), store: GreenStore::Dense(g), b_column })
    }

    pub fn build_iterative(t: &DomainTriple) -> Result<Self> {
        let bi = t.index_of(t.b.inner).expect("b.inner in A");
        let mut rhs = vec![0.0; t.len()];
        rhs[bi] = 4.0;
        let (b_column, _) = solve_operator(t.set(), &rhs, ITERATIVE_TOL)?;
        Ok(HarmonicTable { domain: t.clone(), store: GreenStore::OnDemand, b_column })
    }

    pub fn domain(&self) -> &DomainTriple {
        &self.domain
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.store, GreenStore::Dense(_))
    }

    /// Column G(., w) by index.
    pub fn column(&self, w: usize) -> Result<Vec<f64>> {
        let n = self.domain.len();
        match &self.store {
            GreenStore::Dense(g) => Ok((0..n).map(|i| g[i * n + w]).collect()),
            GreenStore::OnDemand => {
                let mut rhs = vec![0.0; n];
                rhs[w] = 4.0;
                Ok(solve_operator(self.domain.set(), &rhs, ITERATIVE_TOL)?.0)
            }
        }
    }

    /// G_A(z, w); zero if either site lies outside A. Iterative tables solve a column per call.
    pub fn green(&self, z: Site, w: Site) -> f64 {
        let (Some(i), Some(j)) = (self.domain.index_of(z), self.domain.index_of(w)) else {
            return 0.0;
        };
        if w == self.domain.b.inner {
            return self.b_column[i];
        }
        if z == self.domain.b.inner {
            return self.b_column[j];
        }
        match &self.store {
            GreenStore::Dense(g) => g[i * self.domain.len() + j],
            GreenStore::OnDemand => self.column(j).map(|c| c[i]).unwrap_or(f64::NAN),
        }
    }

    /// Exit distribution H_A(z, e) = G_A(z, e.inner)/4 over boundary edges.
    pub fn exit_kernel(&self, z: Site) -> Result<Vec<(BoundaryEdge, f64)>> {
        let zi = self
            .domain
            .index_of(z)
            .ok_or_else(|| LabError::PathNotInDomain(format!("{z} not in A")))?;
        let row = self.column(zi)?;
        Ok(self
            .domain
            .boundary_edges()
            .into_iter()
            .map(|e| {
                let u = self.domain.index_of(e.inner).unwrap();
                (e, row[u] / 4.0)
            })
            .collect())
    }

    /// H_dA(a, b) = G_A(a+, b+)/16.
    pub fn boundary_poisson(&self) -> f64 {
        let ai = self.domain.index_of(self.domain.a.inner).unwrap();
        self.b_column[ai] / 16.0
    }

    /// h(z) = H_A(z, b) for every site.
    pub fn h_values(&self) -> Vec<f64> {
        self.b_column.iter().map(|g| (g / 4.0).max(0.0)).collect()
    }

    /// Largest violation of G(z,w) = delta + (1/4) sum G(z',w) over the stored columns.
    pub fn mean_value_residual(&self) -> f64 {
        let n = self.domain.len();
        let set = self.domain.set();
        let check = |col: &dyn Fn(usize) -> f64, w: usize| {
            (0..n)
                .map(|i| {
                    let mut s = if i == w { 1.0 } else { 0.0 };
                    for &j in set.neighbor_slots(i) {
                        if j != NONE {
                            s += 0.25 * col(j as usize);
                        }
                    }
                    (col(i) - s).abs()
                })
                .fold(0.0, f64::max)
        };
        let bi = self.domain.index_of(self.domain.b.inner).unwrap();
        let mut worst = check(&|i| self.b_column[i], bi);
        if let GreenStore::Dense(g) = &self.store {
            for w in 0..n {
                worst = worst.max(check(&|i| g[i * n + w], w));
            }
        }
        worst
    }

    pub fn hprocess_law(&self) -> Result<HProcessLaw> {
        HProcessLaw::new(&self.domain, self.h_values())
    }

    fn cache_path(dir: &Path, t: &DomainTriple) -> PathBuf {
        dir.join(format!("{}.lht", t.content_hash()))
    }

    /// Writes the table as header (magic, version, |A|, rows) plus row-major doubles.
    pub fn save_cache(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = Self::cache_path(dir, &self.domain);
        let n = self.domain.len();
        let (rows, data): (u64, &[f64]) = match &self.store {
            GreenStore::Dense(g) => (n as u64, g),
            GreenStore::OnDemand => (1, &self.b_column),
        };
        let mut f = fs::File::create(&path)?;
        f.write_all(CACHE_MAGIC)?;
        f.write_all(&CACHE_VERSION.to_le_bytes())?;
        f.write_all(&(n as u64).to_le_bytes())?;
        f.write_all(&rows.to_le_bytes())?;
        let mut buf = Vec::with_capacity(data.len() * 8);
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf)?;
        Ok(path)
    }

    pub fn load_cache(dir: &Path, t: &DomainTriple) -> Result<Option<Self>> {
        let path = Self::cache_path(dir, t);
        let Ok(mut f) = fs::File::open(&path) else {
            return Ok(None);
        };
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        let bad = || LabError::Io(format!("corrupt cache file {}", path.display()));
        if bytes.len() < 28 || &bytes[..8] != CACHE_MAGIC {
            return Err(bad());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let rows = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
        if version != CACHE_VERSION || n != t.len() || bytes.len() != 28 + rows * n * 8 {
            return Err(bad());
        }
        let data: Vec<f64> = bytes[28..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bi = t.index_of(t.b.inner).unwrap();
        if rows == n && rows > 1 {
            let b_column = (0..n).map(|i| data[i * n + bi]).collect();
            Ok(Some(HarmonicTable { domain: t.clone(), store: GreenStore::Dense(data), b_column }))
        } else {
            Ok(Some(HarmonicTable { domain: t.clone(), store: GreenStore::OnDemand, b_column: data }))
        }
    }

    /// Loads from the cache directory or builds and stores.
    pub fn build_cached(t: &DomainTriple, dir: &Path) -> Result<Self> {
        if let Some(tab) = Self::load_cache(dir, t)? {
            return Ok(tab);
        }
        let tab = Self::build(t)?;
        tab.save_cache(dir)?;
        Ok(tab)
    }
}

/// Transition law of the walk conditioned to leave A through the edge b.
#[derive(Clone, Debug)]
pub struct HProcessLaw {
    pub target: BoundaryEdge,
    pub h: Vec<f64>,
    start: usize,
    exit_site: usize,
    /// Cumulative probabilities over (east, north, west, south, exit).
    cum: Vec<[f64; 5]>,
    nbr: Vec<[u32; 4]>,
}

/// Marker returned by a transition that leaves through b.
pub const EXIT: u32 = u32::MAX - 1;

impl HProcessLaw {
    pub fn new(t: &DomainTriple, h: Vec<f64>) -> Result<Self> {
        let start = t.index_of(t.a.inner).unwrap();
        let exit_site = t.index_of(t.b.inner).unwrap();
        if h[start] <= 0.0 {
            return Err(LabError::UnreachableTarget);
        }
        let n = t.len();
        let mut cum = vec![[0.0; 5]; n];
        let mut nbr = vec![[NONE; 4]; n];
        for i in 0..n {
            nbr[i] = *t.neighbor_slots(i);
            if h[i] <= 0.0 {
                continue;
            }
            let mut w = [0.0; 5];
            for k in 0..4 {
                let j = nbr[i][k];
                if j != NONE {
                    w[k] = h[j as usize] / (4.0 * h[i]);
                }
            }
            if i == exit_site {
                w[4] = 1.0 / (4.0 * h[i]);
            }
            let total: f64 = w.iter().sum();
            let mut acc = 0.0;
            for k in 0..5 {
                acc += w[k] / total;
                cum[i][k] = acc;
            }
            cum[i][4] = 1.0;
        }
        Ok(HProcessLaw { target: t.b, h, start, exit_site, cum, nbr })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn exit_site(&self) -> usize {
        self.exit_site
    }

    /// Row of transition probabilities from site index `i`.
    pub fn transitions(&self, i: usize) -> [f64; 5] {
        let c = self.cum[i];
        [c[0], c[1] - c[0], c[2] - c[1], c[3] - c[2], c[4] - c[3]]
    }

    /// One step from site `i`: a neighbor index or `EXIT`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let c = &self.cum[i];
        for k in 0..4 {
            if u < c[k] {
                let j = self.nbr[i][k];
                if j != NONE {
                    return j;
                }
            }
        }
        EXIT
    }
}

/// Probability that random walk from `z` leaves A through the boundary arc
/// running counterclockwise from a to b; the marked edges count one half.
pub fn arc_harmonic_measure(t: &DomainTriple, z: Site) -> Result<f64> {
    let zi = t.index_of(z).ok_or_else(|| LabError::PathNotInDomain(format!("{z} not in A")))?;
    let mut rhs = vec![0.0; t.len()];
    for e in boundary_arc(t) {
        rhs[t.index_of(e.inner).expect("inner site in A")] += 1.0;
    }
    for e in [t.a, t.b] {
        rhs[t.index_of(e.inner).expect("inner site in A")] += 0.5;
    }
    let (u, _) = solve_operator(t.set(), &rhs, 1e-10)?;
    Ok(u[zi].clamp(0.0, 1.0))
}

/// Probability that simple random walk from the origin reaches the outside of
/// C_r without returning to the path `eta` (which starts at the origin).
pub fn escape_probability(r: f64, eta: &[Site]) -> Result<f64> {
    let on_path: std::collections::HashSet<Site> = eta.iter().copied().collect();
    let r2 = r * r;
    let outside = |s: Site| (s.norm2() as f64) >= r2;
    let free: Vec<Site> = lattice_disk(r).into_iter().filter(|s| !on_path.contains(s)).collect();
    let set = SiteSet::new(free);
    let boundary = |s: Site| if on_path.contains(&s) { 0.0 } else if outside(s) { 1.0 } else { 0.0 };
    let u = if set.is_empty() { Vec::new() } else { dirichlet_solve(&set, boundary, 1e-12)? };
    let start = eta.first().copied().unwrap_or(Site::ORIGIN);
    let mut total = 0.0;
    for x in start.neighbors() {
        total += match set.index_of(x) {
            Some(i) => u[i],
            None => boundary(x),
        };
    }
    Ok((total / 4.0).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::approximate_domain;
    use crate::grid::AnalyticShape;

    fn e(ix: i32, iy: i32, ox: i32, oy: i32) -> BoundaryEdge {
        BoundaryEdge::new(Site::new(ix, iy), Site::new(ox, oy)).unwrap()
    }

    fn two_site() -> DomainTriple {
        DomainTriple::new(vec![Site::ORIGIN, Site::new(1, 0)], e(0, 0, -1, 0), e(1, 0, 2, 0)).unwrap()
    }

    #[test]
    fn single_site() {
        let t = DomainTriple::new(vec![Site::ORIGIN], e(0, 0, -1, 0), e(0, 0, 1, 0)).unwrap();
        let tab = HarmonicTable::build(&t).unwrap();
        assert!((tab.green(Site::ORIGIN, Site::ORIGIN) - 1.0).abs() < 1e-14);
        assert!((tab.boundary_poisson() - 1.0 / 16.0).abs() < 1e-15);
        let law = tab.hprocess_law().unwrap();
        let p = law.transitions(0);
        assert!((p[4] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_site_values() {
        let tab = HarmonicTable::build(&two_site()).unwrap();
        assert!((tab.green(Site::ORIGIN, Site::ORIGIN) - 16.0 / 15.0).abs() < 1e-14);
        assert!((tab.green(Site::ORIGIN, Site::new(1, 0)) - 4.0 / 15.0).abs() < 1e-14);
        assert!((tab.boundary_poisson() - 1.0 / 60.0).abs() < 1e-15);
        let law = tab.hprocess_law().unwrap();
        let p0 = law.transitions(0);
        assert!((p0[0] - 1.0).abs() < 1e-14, "{p0:?}");
        let p1 = law.transitions(1);
        assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // From (1,0): h((1,0)) = 4/15, so exit has weight (1/4)/(4/15) = 15/16.
        assert!((p1[4] - 15.0 / 16.0).abs() < 1e-13);
    }

    #[test]
    fn exit_kernel_sums_to_one() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 6).unwrap();
        let tab = HarmonicTable::build(&t).unwrap();
        for &z in t.sites() {
            let s: f64 = tab.exit_kernel(z).unwrap().iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(tab.mean_value_residual() < 1e-10);
    }

    #[test]
    fn iterative_matches_dense() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 12).unwrap();
        let d = HarmonicTable::build_dense(&t).unwrap();
        let it = HarmonicTable::build_iterative(&t).unwrap();
        assert!((d.boundary_poisson() - it.boundary_poisson()).abs() < 1e-12 * d.boundary_poisson().max(1e-3));
        let z = Site::new(3, -2);
        let w = Site::new(-4, 1);
        assert!((d.green(z, w) - it.green(z, w)).abs() < 1e-10);
        assert!(it.mean_value_residual() < 1e-10);
    }

    #[test]
    fn poisson_symmetry() {
        let t = approximate_domain(&AnalyticShape::unit_disk(), 7).unwrap();
        let swapped = t.with_marks(t.b, t.a).unwrap();
        let p1 = HarmonicTable::build(&t).unwrap().boundary_poisson();
        let p2 = HarmonicTable::build(&swapped).unwrap().boundary_poisson();
        assert!((p1 - p2).abs() < 1e-15);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = approximate_domain(&AnalyticShape::unit_disk(), 5).unwrap();
        let tab = HarmonicTable::build(&t).unwrap();
        tab.save_cache(dir.path()).unwrap();
        let back = HarmonicTable::load_cache(dir.path(), &t).unwrap().unwrap();
        assert_eq!(back.boundary_poisson(), tab.boundary_poisson());
        assert_eq!(back.green(Site::new(1, 1), Site::new(-2, 0)), tab.green(Site::new(1, 1), Site::new(-2, 0)));
    }

    #[test]
    fn escape_from_origin_of_small_disk() {
        // C_1.5 minus the origin: eight unknowns solved by hand assembly.
        let h = escape_probability(1.5, &[Site::ORIGIN]).unwrap();
        let free: Vec<Site> = lattice_disk(1.5).into_iter().filter(|s| *s != Site::ORIGIN).collect();
        let n = free.len();
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut rhs = nalgebra::DVector::<f64>::zeros(n);
        for (i, s) in free.iter().enumerate() {
            m[(i, i)] = 4.0;
            for x in s.neighbors() {
                if let Some(j) = free.iter().position(|f| *f == x) {
                    m[(i, j)] -= 1.0;
                } else if x.norm2() >= 3 {
                    rhs[i] += 1.0;
                }
            }
        }
        let u = m.lu().solve(&rhs).unwrap();
        let expect: f64 = Site::ORIGIN
            .neighbors()
            .iter()
            .map(|x| u[free.iter().position(|f| f == x).unwrap()])
            .sum::<f64>()
            / 4.0;
        assert!((h - expect).abs() < 1e-10, "{h} vs {expect}");
    }

    #[test]
    fn escape_blocked_by_diameter_is_one_sided() {
        let r = 10.0;
        let eta: Vec<Site> = (0..=10).map(|x| Site::new(x, 0)).collect();
        let full: Vec<Site> = (-10..=10).map(|x| Site::new(x, 0)).collect();
        let h_half = escape_probability(r, &eta).unwrap();
        let mut eta2 = vec![Site::ORIGIN];
        eta2.extend(full.iter().filter(|s| s.x != 0));
        let h_full = escape_probability(r, &eta2).unwrap();
        assert!(h_full > 0.0 && h_full < h_half);
        // Upper and lower half-disks are mirror images: from the origin only the
        // north and south neighbors escape, with equal probability.
        let free: Vec<Site> = lattice_disk(r).into_iter().filter(|s| s.y > 0).collect();
        let set = SiteSet::new(free);
        let u = dirichlet_solve(&set, |s: Site| if s.y <= 0 { 0.0 } else { 1.0 }, 1e-13).unwrap();
        let north = u[set.index_of(Site::new(0, 1)).unwrap()];
        assert!((h_full - north / 2.0).abs() < 1e-9, "{h_full} vs {}", north / 2.0);
    }
}
