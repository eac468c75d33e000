use lerwlab_core::conformal::compare_lattice_maps;
use lerwlab_core::stats::loglog_fit;
use lerwlab_core::AnalyticShape;
use num_complex::Complex64;

#[test]
fn identical_scales_agree() {
    let c = compare_lattice_maps(&AnalyticShape::unit_disk(), 20, 20).unwrap();
    assert_eq!(c.sup_error, 0.0);
}

#[test]
fn disk_maps_converge_at_rate_one_over_n() {
    let ns = [25usize, 50, 100, 200];
    let errs: Vec<f64> = ns
        .windows(2)
        .map(|w| compare_lattice_maps(&AnalyticShape::unit_disk(), w[0], w[1]).unwrap().sup_error)
        .collect();
    println!("sup errors {errs:?}");
    assert!(errs.windows(2).all(|e| e[1] < e[0]));
    let x: Vec<f64> = ns[..3].iter().map(|&n| n as f64).collect();
    let slope = loglog_fit(&x, &errs).slope;
    println!("slope {slope:.3}");
    assert!((-1.2..=-0.8).contains(&slope), "slope {slope}");
}

#[test]
fn rectangle_maps_also_converge() {
    let rect = AnalyticShape::rectangle(-1.0, 1.0, -0.5, 0.5, Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0));
    let e1 = compare_lattice_maps(&rect, 12, 24).unwrap().sup_error;
    let e2 = compare_lattice_maps(&rect, 24, 48).unwrap().sup_error;
    assert!(e2 < e1, "{e1} {e2}");
}
