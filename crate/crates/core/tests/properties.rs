use lerwlab_core::conformal::{map_triple, sine_and_radius};
use lerwlab_core::grid::{
    approximate_domain, check_simply_connected, lattice_disk, remove_initial_segment, union_of_squares,
};
use lerwlab_core::harmonic::HarmonicTable;
use lerwlab_core::lerw::{loop_erase, loop_erase_reference, sample_lerw, tbar_exact};
use lerwlab_core::loewner::{hcap_of_map, slit_map, MapChain};
use lerwlab_core::metrics::{rho_estimate, truncate, Curve, TimeTag};
use lerwlab_core::stats::replica_rng;
use lerwlab_core::{AnalyticShape, Site};
use num_complex::Complex64;
use proptest::prelude::*;

const DIRS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

fn walk_in_box(start: Site, moves: &[u8], half: i32) -> Vec<Site> {
    let mut v = vec![start];
    for &m in moves {
        let (dx, dy) = DIRS[m as usize % 4];
        let last = *v.last().unwrap();
        let next = Site::new(last.x + dx, last.y + dy);
        if next.x.abs() <= half && next.y.abs() <= half {
            v.push(next);
        }
    }
    v
}

fn curve_from(xs: &[(f64, f64)], t_end: f64) -> Curve {
    let n = xs.len();
    let times = (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect();
    let pts = xs.iter().map(|&(x, y)| Complex64::new(x, y)).collect();
    Curve::new(pts, times, TimeTag::Capacity).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn loop_erasure_is_idempotent(moves in prop::collection::vec(0u8..4, 1..400)) {
        let w = walk_in_box(Site::ORIGIN, &moves, 4);
        let le = loop_erase(&w);
        prop_assert_eq!(loop_erase(&le), le.clone());
        prop_assert_eq!(&le, &loop_erase_reference(&w));
        prop_assert_eq!(le[0], w[0]);
        prop_assert_eq!(*le.last().unwrap(), *w.last().unwrap());
        let mut seen = std::collections::HashSet::new();
        prop_assert!(le.iter().all(|s| seen.insert(*s)));
        prop_assert!(le.windows(2).all(|p| p[0].is_adjacent(p[1])));
    }

    #[test]
    fn boundary_edges_commute_with_erasure(moves in prop::collection::vec(0u8..4, 0..300), ty in -3i32..=3) {
        let half = 3;
        let mut w = walk_in_box(Site::new(-half, 0), &moves, half);
        let last = *w.last().unwrap();
        let mut y = last.y;
        let mut x = last.x;
        while y != ty {
            y += (ty - y).signum();
            w.push(Site::new(x, y));
        }
        while x < half {
            x += 1;
            w.push(Site::new(x, y));
        }
        let a_out = Site::new(-half - 1, 0);
        let b_out = Site::new(half + 1, y);
        let mut full = vec![a_out];
        full.extend_from_slice(&w);
        full.push(b_out);
        let mut expected = vec![a_out];
        expected.extend(loop_erase(&w));
        expected.push(b_out);
        prop_assert_eq!(loop_erase(&full), expected);
    }

    #[test]
    fn lattice_disks_are_nested(r in 1.0f64..12.0, dr in 0.0f64..5.0) {
        let small = lattice_disk(r);
        let big: std::collections::HashSet<Site> = lattice_disk(r + dr).into_iter().collect();
        prop_assert!(small.iter().all(|s| big.contains(s)));
    }

    #[test]
    fn approximations_are_simply_connected(
        n in 2usize..24,
        w in 0.6f64..2.0,
        h in 0.6f64..2.0,
        disk in any::<bool>(),
    ) {
        let shape = if disk {
            AnalyticShape::unit_disk()
        } else {
            AnalyticShape::rectangle(-w, w, -h, h, Complex64::new(w, 0.0), Complex64::new(-w, 0.0))
        };
        if let Ok(t) = approximate_domain(&shape, n) {
            prop_assert!(check_simply_connected(t.sites()));
            let u = union_of_squares(&t);
            prop_assert!((u.signed_area() - t.len() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn rho_is_nearly_symmetric_and_triangular(
        a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..12),
        b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..12),
        c in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..12),
        ta in 0.5f64..2.0,
        tb in 0.5f64..2.0,
        tc in 0.5f64..2.0,
    ) {
        let (x, y, z) = (curve_from(&a, ta), curve_from(&b, tb), curve_from(&c, tc));
        let xy = rho_estimate(&x, &y);
        let yx = rho_estimate(&y, &x);
        prop_assert!((xy.value - yx.value).abs() <= 2.0 * xy.modulus + 1e-9);
        let yz = rho_estimate(&y, &z);
        let xz = rho_estimate(&x, &z);
        let m = xy.modulus.max(yz.modulus).max(xz.modulus);
        prop_assert!(xz.value <= xy.value + yz.value + 3.0 * m + 1e-9);
    }

    #[test]
    fn truncation_bound_holds(
        a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..20),
        frac in 0.0f64..1.0,
    ) {
        let c = curve_from(&a, 1.0);
        let (cut, tail) = truncate(&c, frac).unwrap();
        let r = rho_estimate(&c, &cut);
        prop_assert!(r.value <= tail.duration + tail.diameter + 1e-9);
    }

    #[test]
    fn chains_add_capacity_and_lower_points(
        steps in prop::collection::vec((-1.0f64..1.0, 1e-3f64..0.05), 1..30),
        x in -2.0f64..2.0,
        y in 0.05f64..2.0,
    ) {
        let chain = MapChain { steps: steps.clone() };
        let total: f64 = steps.iter().map(|s| s.1).sum();
        let h = hcap_of_map(|z| chain.eval(z)).unwrap();
        prop_assert!((h - total).abs() <= 1e-8 * total.max(1.0) + 1e-9);
        let mut z = Complex64::new(x, y);
        for &(u, dt) in &steps {
            let next = slit_map(u, dt, z).0;
            prop_assert!(next.im <= z.im + 1e-12);
            z = next;
        }
    }

    #[test]
    fn tbar_is_monotone(moves in prop::collection::vec(0u8..4, 1..200), r in 1.0f64..6.0, dr in 0.0f64..4.0) {
        let w = loop_erase(&walk_in_box(Site::ORIGIN, &moves, 6));
        prop_assert!(tbar_exact(&w, r) <= tbar_exact(&w, r + dr));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sine_and_radius_ignore_scale(n in 4usize..12, lam in 0.1f64..10.0, x in -0.4f64..0.4, y in -0.4f64..0.4) {
        let t = approximate_domain(&AnalyticShape::unit_disk(), n).unwrap();
        let m = map_triple(&t).unwrap().with_cutoff(0.0);
        let z = Complex64::new(x * n as f64, y * n as f64);
        let scaled = m.clone().with_scale(m.scale() * lam);
        let (s1, r1) = sine_and_radius(&m, z).unwrap();
        let (s2, r2) = sine_and_radius(&scaled, z).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!((r1 / r2 - 1.0).abs() < 1e-12);
        let d = m.distance_to_boundary(z);
        prop_assert!(r1 >= d * (1.0 - 1e-6) && r1 <= 4.0 * d * (1.0 + 1e-6));
    }

    #[test]
    fn tables_are_symmetric(n in 2usize..7) {
        let t = approximate_domain(&AnalyticShape::unit_disk(), n).unwrap();
        let tab = HarmonicTable::build(&t).unwrap();
        let swapped = HarmonicTable::build(&t.with_marks(t.b, t.a).unwrap()).unwrap();
        prop_assert!((tab.boundary_poisson() - swapped.boundary_poisson()).abs() <= 1e-12 * tab.boundary_poisson());
        for &z in t.sites() {
            for &w in t.sites() {
                prop_assert!((tab.green(z, w) - tab.green(w, z)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stepwise_removal_reaches_b(seed in 0u64..1000, n in 3usize..9) {
        let t = approximate_domain(&AnalyticShape::unit_disk(), n).unwrap();
        let law = HarmonicTable::build(&t).unwrap().hprocess_law().unwrap();
        let mut rng = replica_rng(seed, 0);
        let eta = sample_lerw(&t, &law, &mut rng);
        for j in 0..eta.vertices.len() - 2 {
            prop_assert!(remove_initial_segment(&t, &eta.vertices, j).is_ok(), "failed at {}", j);
        }
    }
}
