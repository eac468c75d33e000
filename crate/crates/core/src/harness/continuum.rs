//! Experiments on Loewner chains, SLE traces and curve metrics.

use num_complex::Complex64 as C;
use rand::Rng;

use super::lattice::{chart_for, lerw_image, shape_for};
use super::{derive_seed, run_replicas, Check, ExperimentConfig, Fit, ResultRecord};
use crate::conformal::HalfPlaneMap;
use crate::content::{content_martingale_probe, minkowski_content, probe_replica, ProbeConfig};
use crate::error::{LabError, Result};
use crate::grid::approximate_domain;
use crate::harmonic::HarmonicTable;
use crate::lerw::sample_lerw_indices;
use crate::loewner::{derivative_bound_ratio, difference_constant, evolve, extract_driving};
use crate::metrics::{rho_distance, truncate, Curve, TimeTag};
use crate::sle::{
    distances_to_points, geometric_grid, one_point_table, sample_driving, sample_driving_on, trace, GreenShape,
};
use crate::stats::{ks_two_sample, linear_fit, mean, stderr, variance};

const Y_FLOOR: f64 = 0.05;

pub fn exp_loewner_core(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let dt = cfg.extra_f64("dt")?;
    let c = cfg.extra_f64("bound_constant")?;
    let hull_cap = cfg.extra_f64("hull_capacity")?;
    let n = cfg.replicas;

    let zero = sample_driving(0.0, 1.0, dt, &mut crate::stats::replica_rng(cfg.seed, 0));
    let tr = trace(&zero);
    let err = tr
        .points()
        .iter()
        .zip(tr.times())
        .map(|(p, &t)| (p - C::new(0.0, (2.0 * t).sqrt())).norm())
        .fold(0.0, f64::max);
    rec.check(Check::within("zero_driving_error", err, 0.0, 1e-6));
    let s: f64 = 0.25;
    let at = (tr.eval(2.0 * s) - C::new(0.0, 2.0 * s.sqrt())).norm();
    rec.check(Check::within("doubled_time_error", at, 0.0, 1e-6));

    let round: Vec<Result<f64>> = run_replicas(cfg.seed, "loewner/round-trip", 20, |_, rng| {
        let d = sample_driving(2.0, 1.0, dt, rng);
        let ex = extract_driving(trace(&d).points(), dt, f64::INFINITY)?;
        Ok(ex.micro.values.iter().zip(&d.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    });
    let round: Vec<f64> = round.into_iter().collect::<Result<_>>()?;
    let worst = round.iter().cloned().fold(0.0, f64::max);
    rec.check(Check::within("round_trip_error", worst, 0.0, 0.05));

    for kappa in [2.0, 8.0 / 3.0] {
        let u1: Vec<f64> = run_replicas(cfg.seed, &format!("loewner/var/{kappa}"), n, |_, rng| {
            let d = sample_driving(kappa, 1.0, dt, rng);
            *d.values.last().unwrap()
        });
        let v = variance(&u1);
        let se = kappa / 2.0 * (2.0 / (n as f64 - 1.0)).sqrt();
        let name = format!("var_u1_sigma[kappa={kappa:.4}]");
        rec.scalar(&format!("var_u1[kappa={kappa:.4}]"), v);
        rec.check(Check::within(&name, (v - kappa / 2.0).abs() / se, 0.0, 3.0));
    }

    let zs = [C::new(0.0, 1.0), C::new(0.5, 0.8), C::new(-1.0, 2.0)];
    let ratios: Vec<Vec<(f64, f64)>> = run_replicas(cfg.seed, "loewner/derivative", n, |_, rng| {
        let d = sample_driving(cfg.kappa, 1.0, dt, rng);
        zs.iter()
            .map(|&z| {
                let yn = evolve(&d, z, 0.0).points.last().unwrap().im;
                (derivative_bound_ratio(&d, z), yn)
            })
            .collect()
    });
    let mut violations = 0usize;
    let mut min_ratio = f64::INFINITY;
    for (i, row) in ratios.iter().enumerate() {
        for (j, &(r, yn)) in row.iter().enumerate() {
            rec.row(&format!("z={j}"), i, "derivative_ratio", r);
            if yn >= Y_FLOOR {
                min_ratio = min_ratio.min(r);
                if r < c {
                    violations += 1;
                }
            }
        }
    }
    rec.scalar("derivative_ratio_min", min_ratio);
    rec.check(Check::within("derivative_bound_violations", violations as f64, 0.0, 0.0));

    let hulls = 200usize.min(n.max(1));
    let diff = |cap: f64, label: &str| -> Vec<f64> {
        run_replicas(cfg.seed, label, hulls, |_, rng| {
            let d = sample_driving(cfg.kappa, cap, (cap / 100.0).min(dt), rng);
            difference_constant(&d)
        })
    };
    let big = diff(hull_cap, "loewner/diff/full");
    let small = diff(hull_cap / 4.0, "loewner/diff/half");
    let ratio = mean(&small) / mean(&big);
    rec.scalar("difference_constant[r]", mean(&big));
    rec.scalar("difference_constant[r/2]", mean(&small));
    rec.check(Check::within("difference_constant_ratio", ratio, 0.5, 2.0));
    Ok(rec)
}

fn parse_points(text: &str) -> Result<Vec<C>> {
    text.split(';')
        .map(|p| {
            let (x, y) = p.split_once(':').ok_or_else(|| LabError::Config(format!("bad point '{p}'")))?;
            let f = |s: &str| s.trim().parse::<f64>().map_err(|_| LabError::Config(format!("bad point '{p}'")));
            Ok(C::new(f(x)?, f(y)?))
        })
        .collect()
}

/// Images in the unit disk of an SLE trace in H, dropping points that the
/// inverse chart cannot resolve.
fn trace_in_disk(curve: &Curve, m: &HalfPlaneMap) -> (Vec<C>, Vec<f64>) {
    let mut pts = Vec::with_capacity(curve.len());
    let mut times = Vec::with_capacity(curve.len());
    for (p, &t) in curve.points().iter().zip(curve.times()) {
        if let Ok(z) = m.inverse(*p) {
            if z.is_finite() {
                pts.push(z);
                times.push(t);
            }
        }
    }
    (pts, times)
}

pub fn exp_sle_one_point(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let m = HalfPlaneMap::disk(1.0);
    let zs = parse_points(cfg.extra.get("points").map(String::as_str).unwrap_or("0:0"))?;
    let grid = geometric_grid(cfg.extra_f64("dt")?, cfg.extra_f64("t0")?, cfg.extra_f64("t_max")?);
    let eps = cfg.eps_grid.clone();
    let dists: Vec<Vec<f64>> = run_replicas(cfg.seed, "sle-one-point", cfg.replicas, |_, rng| {
        let d = sample_driving_on(cfg.kappa, grid.clone(), rng);
        let (pts, _) = trace_in_disk(&trace(&d), &m);
        distances_to_points(&pts, &zs)
    });
    for (i, d) in dists.iter().enumerate() {
        for (j, v) in d.iter().enumerate() {
            rec.row(&format!("z={j}"), i, "distance", *v);
        }
    }
    let gs = GreenShape::new(cfg.kappa);
    let table = one_point_table(&gs, &m, &zs, &eps, &dists)?;
    let expo = 2.0 - gs.d;
    for (j, z) in zs.iter().enumerate() {
        let rows: Vec<_> = table.iter().filter(|r| r.z == [z.re, z.im]).collect();
        for r in &rows {
            rec.scalar(&format!("probability[z={j};eps={}]", r.eps), r.probability);
            rec.scalar(&format!("ratio[z={j};eps={}]", r.eps), r.ratio);
        }
        let name = format!("eps_exponent[z={j}]");
        let frac = |k: usize, sel: &[usize]| sel.iter().filter(|&&s| dists[s][j] <= eps[k]).count() as f64 / sel.len() as f64;
        let lx: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let fit_on = |sel: &[usize]| {
            let ly: Vec<f64> = (0..eps.len()).map(|k| frac(k, sel).ln()).collect();
            linear_fit(&lx, &ly)
        };
        let all: Vec<usize> = (0..dists.len()).collect();
        let base = fit_on(&all);
        let iv = super::bootstrap_indices(&[dists.len()], derive_seed(cfg.seed, &name), |g| fit_on(&g[0]).slope);
        rec.check(Check::within(&name, base.slope, expo - 0.08, expo + 0.08));
        rec.fits.push(Fit { name, slope: base.slope, intercept: base.intercept, slope_se: iv.se, ci_lo: iv.lo, ci_hi: iv.hi });
    }
    let greens: Vec<f64> = table.iter().step_by(eps.len()).map(|r| r.green).collect();
    let ratio_of = |j: usize, sel: &[usize]| {
        let logs: f64 = eps
            .iter()
            .map(|&e| {
                let p = sel.iter().filter(|&&s| dists[s][j] <= e).count() as f64 / sel.len() as f64;
                (p / (e.powf(expo) * greens[j])).ln()
            })
            .sum();
        (logs / eps.len() as f64).exp()
    };
    let all: Vec<usize> = (0..dists.len()).collect();
    let mut est = Vec::new();
    for j in 0..zs.len() {
        let iv = super::bootstrap_indices(&[dists.len()], derive_seed(cfg.seed, &format!("ratio{j}")), |g| ratio_of(j, &g[0]));
        let r = ratio_of(j, &all);
        rec.scalar(&format!("ratio[z={j}]"), r);
        rec.scalar(&format!("ratio_se[z={j}]"), iv.se);
        est.push((r, iv.se));
    }
    let mut spread: f64 = 0.0;
    for a in 0..est.len() {
        for b in a + 1..est.len() {
            let se = (est[a].1.powi(2) + est[b].1.powi(2)).sqrt();
            spread = spread.max((est[a].0 - est[b].0).abs() / se);
        }
    }
    rec.check(Check::within("ratio_spread_sigma", spread, 0.0, 3.0));
    Ok(rec)
}

/// Minkowski content of an SLE trace in the unit disk up to capacity `cap`.
fn sle_content<R: Rng + ?Sized>(kappa: f64, cap: f64, dt: f64, eps: &[f64], rng: &mut R) -> Result<f64> {
    let d = sample_driving(kappa, cap, dt, rng);
    let (pts, times) = trace_in_disk(&trace(&d), &HalfPlaneMap::disk(1.0));
    let curve = Curve::new(pts, times, TimeTag::Capacity)?;
    let gs = GreenShape::new(kappa);
    let prof = minkowski_content(&curve, gs.d, eps, &[curve.end_time()])?;
    Ok(*prof.contents.last().unwrap())
}

fn calibrated(v: &[f64]) -> Vec<f64> {
    let m = mean(v);
    v.iter().map(|x| x / m).collect()
}

pub fn exp_natural_time(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let shape = shape_for(cfg)?;
    let dt = cfg.extra_f64("dt")?;
    let cap = 1.0;
    let theta: Vec<Result<f64>> = run_replicas(cfg.seed, "natural-time/sle", cfg.replicas, |_, rng| {
        sle_content(cfg.kappa, cap, dt, &cfg.eps_grid, rng)
    });
    let theta: Vec<f64> = theta.into_iter().collect::<Result<_>>()?;
    for (i, v) in theta.iter().enumerate() {
        rec.row("sle", i, "theta", *v);
    }
    let theta_n = calibrated(&theta);
    let mut ks = Vec::new();
    let mut positive = theta.iter().all(|v| *v > 0.0);
    let last = *cfg.n_list.last().unwrap();
    for &n in &cfg.n_list {
        let t = approximate_domain(&shape, n)?;
        let law = HarmonicTable::build(&t)?.hprocess_law()?;
        let m = chart_for(cfg, &t, n)?;
        let size = t.len();
        let scale = (n as f64).powf(-1.25);
        let steps: Vec<Result<f64>> = run_replicas(cfg.seed, &format!("natural-time/N={n}"), cfg.replicas, |_, rng| {
            let idx = sample_lerw_indices(size, &law, rng).0;
            let ex = extract_driving(&lerw_image(&t, &idx, &m), cfg.h, cap)?;
            Ok(scale * ex.consumed.saturating_sub(1) as f64)
        });
        let steps: Vec<f64> = steps.into_iter().collect::<Result<_>>()?;
        positive &= steps.iter().all(|v| *v > 0.0);
        let param = format!("N={n}");
        for (i, v) in steps.iter().enumerate() {
            rec.row(&param, i, "t_check", *v);
        }
        let tn = calibrated(&steps);
        let k = ks_two_sample(&tn, &theta_n).statistic;
        let vr = variance(&tn) / variance(&theta_n);
        rec.scalar(&format!("c_hat[{param}]"), mean(&steps));
        rec.scalar(&format!("ks[{param}]"), k);
        rec.scalar(&format!("variance_ratio[{param}]"), vr);
        ks.push(k);
        if n == last {
            rec.check(Check::within("variance_ratio", vr, 0.85, 1.15));
            rec.check(Check::within("ks", k, 0.0, 0.10));
        }
    }
    rec.scalar("theta_mean", mean(&theta));
    rec.scalar("theta_stderr", stderr(&theta));
    let decreasing = ks.windows(2).all(|w| w[1] < w[0]);
    rec.check(Check::within("ks_decreasing", f64::from(u8::from(decreasing)), 1.0, 1.0));
    rec.check(Check::within("positive_support", f64::from(u8::from(positive)), 1.0, 1.0));
    Ok(rec)
}

pub fn exp_martingale(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let pc = ProbeConfig {
        kappa: cfg.kappa,
        h: cfg.h,
        steps: cfg.extra_usize("steps")?,
        dt: cfg.extra_f64("dt")?,
        eps: cfg.eps_grid[0],
        ..ProbeConfig::default()
    };
    let reps: Vec<Result<_>> = run_replicas(cfg.seed, "martingale", cfg.replicas, |_, rng| probe_replica(&pc, rng));
    let reps: Vec<_> = reps.into_iter().collect::<Result<Vec<_>>>()?;
    for (i, r) in reps.iter().enumerate() {
        for (k, (c, g)) in r.content.iter().zip(&r.integral).enumerate() {
            rec.row(&format!("n={k}"), i, "content", *c);
            rec.row(&format!("n={k}"), i, "integral", *g);
        }
        rec.row("total", i, "content", r.total);
    }
    let probe = content_martingale_probe(&reps);
    rec.scalar("calibration", probe.calibration);
    for (k, (m, s)) in probe.mean.iter().zip(&probe.stderr).enumerate() {
        rec.scalar(&format!("mean[n={k}]"), *m);
        rec.scalar(&format!("stderr[n={k}]"), *s);
    }
    rec.check(Check::within("max_deviation_sigma", probe.max_deviation_sigma, 0.0, 3.0));
    Ok(rec)
}

fn polyline(pts: Vec<C>, t0: f64, t1: f64) -> Result<Curve> {
    let n = pts.len();
    let times = (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect();
    Curve::new(pts, times, TimeTag::Capacity)
}

pub fn exp_metric(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let seg = |len: f64, k: usize| (0..=k).map(|i| C::new(len * i as f64 / k as f64, 0.0)).collect::<Vec<_>>();
    let base = polyline(seg(1.0, 64), 0.0, 1.0)?;
    rec.check(Check::within("identity", rho_distance(&base, &base), 0.0, 1e-3));
    let v = C::new(0.3, 0.4);
    let moved = polyline(seg(1.0, 64).into_iter().map(|p| p + v).collect(), 0.0, 1.0)?;
    rec.check(Check::within("translation", rho_distance(&base, &moved), v.norm() - 1e-3, v.norm() + 1e-3));
    let fast = polyline(seg(1.0, 64), 0.0, 0.5)?;
    rec.check(Check::within("time_dilation", rho_distance(&base, &fast), 0.5 - 1e-3, 0.5 + 1e-3));

    let bad: Vec<f64> = run_replicas(cfg.seed, "metric/truncation", cfg.replicas, |_, rng| {
        let k = rng.random_range(2..20usize);
        let pts: Vec<C> = (0..k).map(|_| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let c = polyline(pts, 0.0, 1.0).expect("valid curve");
        let t1: f64 = rng.random_range(0.0..1.0);
        let (cut, tail) = truncate(&c, t1).expect("t1 in range");
        let excess = rho_distance(&c, &cut) - (tail.duration + tail.diameter);
        if excess > 1e-9 {
            1.0
        } else {
            0.0
        }
    });
    let violations: f64 = bad.iter().sum();
    rec.row("truncation", 0, "violations", violations);
    rec.check(Check::within("truncation_violations", violations, 0.0, 0.0));
    Ok(rec)
}
