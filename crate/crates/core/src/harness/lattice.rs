//! Experiments on loop-erased random walk.

use std::collections::HashMap;

use num_complex::Complex64 as C;

use super::{loglog_bootstrap, mean_at, run_replicas, Check, ExperimentConfig, Fit, ResultRecord};
use crate::conformal::{map_triple, sine_and_radius, HalfPlaneMap};
use crate::error::{LabError, Result};
use crate::grid::{approximate_domain, lattice_disk, AnalyticShape, BoundaryEdge, DomainTriple, Site};
use crate::harmonic::{escape_probability, HProcessLaw, HarmonicTable};
use crate::lerw::{
    bottleneck_event, enumerate_saws, first_last_decompose, loop_erase, loop_erase_reference, meets_disk,
    sample_lerw, sample_lerw_indices, sample_radial_lerw, separation_statistic_harmonic, visit_counts,
};
use crate::loewner::extract_driving;
use crate::stats::{ks_normal, linear_fit, mean, skewness, stderr, variance};

pub(super) fn shape_for(cfg: &ExperimentConfig) -> Result<AnalyticShape> {
    match cfg.shape.as_str() {
        "disk" => Ok(AnalyticShape::unit_disk()),
        "square" => Ok(AnalyticShape::rectangle(-1.0, 1.0, -1.0, 1.0, C::new(1.0, 0.0), C::new(-1.0, 0.0))),
        other => Err(LabError::Config(format!("unknown shape '{other}' (disk, square)"))),
    }
}

/// F for the lattice approximation at scale n: the exact Moebius chart for
/// the disk, the zipper map of the union of squares otherwise.
pub(super) fn chart_for(cfg: &ExperimentConfig, t: &DomainTriple, n: usize) -> Result<HalfPlaneMap> {
    if cfg.shape == "disk" {
        Ok(HalfPlaneMap::disk(n as f64))
    } else {
        Ok(map_triple(t)?.with_cutoff(0.0))
    }
}

fn law_for(t: &DomainTriple) -> Result<HProcessLaw> {
    HarmonicTable::build(t)?.hprocess_law()
}

/// Boundary edge whose midpoint is closest to `p`.
pub(super) fn edge_near(t: &DomainTriple, p: C) -> BoundaryEdge {
    t.boundary_edges()
        .into_iter()
        .min_by(|x, y| (x.midpoint() - p).norm().partial_cmp(&(y.midpoint() - p).norm()).unwrap())
        .expect("domain has boundary edges")
}

/// Lattice disk of radius n with marks near n e^{i alpha} and n e^{i beta}.
fn disk_with_marks(n: usize, alpha: f64, beta: f64) -> Result<DomainTriple> {
    let t = approximate_domain(&AnalyticShape::unit_disk(), n)?;
    let r = n as f64;
    let a = edge_near(&t, C::from_polar(r, alpha));
    let b = edge_near(&t, C::from_polar(r, beta));
    t.with_marks(a, b)
}

fn batch_sizes(total: usize, batch: usize) -> (usize, usize) {
    let b = batch.clamp(1, total.max(1));
    (total.div_ceil(b).max(1), b)
}

fn fmt_r(r: f64) -> String {
    format!("{r}")
}

fn paired_loglog<F>(name: &str, x: &[f64], n: usize, seed: u64, y_of: F) -> Fit
where
    F: Fn(usize, &[usize]) -> f64,
{
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let fit_with = |idx: &[usize]| {
        let ly: Vec<f64> = (0..x.len()).map(|k| y_of(k, idx).ln()).collect();
        linear_fit(&lx, &ly)
    };
    let all: Vec<usize> = (0..n).collect();
    let base = fit_with(&all);
    let iv = super::bootstrap_indices(&[n], super::derive_seed(seed, name), |g| fit_with(&g[0]).slope);
    Fit { name: name.to_string(), slope: base.slope, intercept: base.intercept, slope_se: iv.se, ci_lo: iv.lo, ci_hi: iv.hi }
}

fn e(ix: i32, iy: i32, ox: i32, oy: i32) -> BoundaryEdge {
    BoundaryEdge::new(Site::new(ix, iy), Site::new(ox, oy)).expect("adjacent")
}

fn block(w: i32, h: i32) -> Vec<Site> {
    (0..h).flat_map(|y| (0..w).map(move |x| Site::new(x, y))).collect()
}

fn sites(v: &[(i32, i32)]) -> Vec<Site> {
    v.iter().map(|&(x, y)| Site::new(x, y)).collect()
}

/// Fixed catalog of small triples (|A| <= 12) used by the oracle suite.
pub fn oracle_catalog() -> Vec<DomainTriple> {
    let plus = sites(&[(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]);
    let ell = sites(&[(0, 0), (1, 0), (2, 0), (0, 1), (0, 2)]);
    let tee = sites(&[(0, 0), (1, 0), (2, 0), (1, 1), (1, 2)]);
    let cup = sites(&[(0, 0), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (2, 2)]);
    let zig = sites(&[(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2)]);
    let mut bump = block(3, 3);
    bump.push(Site::new(3, 1));
    let specs: Vec<(Vec<Site>, BoundaryEdge, BoundaryEdge)> = vec![
        (block(1, 1), e(0, 0, -1, 0), e(0, 0, 1, 0)),
        (block(1, 1), e(0, 0, -1, 0), e(0, 0, 0, 1)),
        (block(2, 1), e(0, 0, -1, 0), e(1, 0, 2, 0)),
        (block(2, 1), e(0, 0, -1, 0), e(1, 0, 1, 1)),
        (block(3, 1), e(0, 0, -1, 0), e(2, 0, 3, 0)),
        (block(3, 1), e(0, 0, 0, -1), e(2, 0, 2, -1)),
        (block(2, 2), e(0, 0, -1, 0), e(1, 1, 2, 1)),
        (block(2, 2), e(0, 0, -1, 0), e(0, 0, 0, -1)),
        (block(3, 2), e(0, 0, -1, 0), e(2, 1, 3, 1)),
        (block(3, 2), e(1, 0, 1, -1), e(1, 1, 1, 2)),
        (block(3, 3), e(0, 1, -1, 1), e(2, 1, 3, 1)),
        (block(3, 3), e(0, 0, -1, 0), e(2, 2, 3, 2)),
        (block(3, 3), e(0, 0, 0, -1), e(0, 0, -1, 0)),
        (ell, e(2, 0, 3, 0), e(0, 2, 0, 3)),
        (tee, e(0, 0, -1, 0), e(1, 2, 1, 3)),
        (plus.clone(), e(-1, 0, -2, 0), e(1, 0, 2, 0)),
        (plus, e(-1, 0, -2, 0), e(0, 1, 0, 2)),
        (block(4, 2), e(0, 0, -1, 0), e(3, 1, 4, 1)),
        (block(2, 4), e(0, 0, 0, -1), e(1, 3, 1, 4)),
        (cup, e(0, 2, 0, 3), e(2, 2, 2, 3)),
        (zig, e(0, 0, -1, 0), e(3, 2, 4, 2)),
        (bump, e(0, 1, -1, 1), e(3, 1, 4, 1)),
        (block(5, 2), e(0, 0, -1, 0), e(4, 1, 5, 1)),
    ];
    specs
        .into_iter()
        .map(|(s, a, b)| DomainTriple::new(s, a, b).expect("catalog triple is valid"))
        .collect()
}

pub fn exp_oracle_suite(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let samples = cfg.replicas;
    let batches = 100usize.min(samples);
    let per = samples.div_ceil(batches);
    let mut tv_max: f64 = 0.0;
    let mut werr_max: f64 = 0.0;
    for (k, t) in oracle_catalog().iter().enumerate() {
        let saws = enumerate_saws(t)?;
        let h = HarmonicTable::build(t)?;
        let hp = h.boundary_poisson();
        let total: f64 = saws.iter().map(|(_, w)| w).sum();
        let werr = (total - hp).abs() / hp;
        let mut exact: HashMap<Vec<Site>, f64> = HashMap::new();
        for (s, w) in &saws {
            exact.insert(s.interior().to_vec(), w / hp);
        }
        let law = h.hprocess_law()?;
        let n = t.len();
        let counts: Vec<HashMap<Vec<u32>, u64>> = run_replicas(cfg.seed, &format!("oracle/{k}"), batches, |_, rng| {
            let mut m: HashMap<Vec<u32>, u64> = HashMap::new();
            for _ in 0..per {
                let (v, _) = sample_lerw_indices(n, &law, rng);
                *m.entry(v).or_insert(0) += 1;
            }
            m
        });
        let mut merged: HashMap<Vec<Site>, u64> = HashMap::new();
        for m in counts {
            for (v, c) in m {
                *merged.entry(v.iter().map(|&i| t.site(i as usize)).collect()).or_insert(0) += c;
            }
        }
        let drawn = (per * batches) as f64;
        let mut tv = 0.0;
        for (path, p) in &exact {
            let q = merged.get(path).copied().unwrap_or(0) as f64 / drawn;
            tv += (p - q).abs();
        }
        for (path, c) in &merged {
            if !exact.contains_key(path) {
                tv += *c as f64 / drawn;
            }
        }
        tv *= 0.5;
        let param = format!("triple={k}");
        rec.row(&param, 0, "sites", n as f64);
        rec.row(&param, 0, "saws", saws.len() as f64);
        rec.row(&param, 0, "tv", tv);
        rec.row(&param, 0, "weight_sum_rel_err", werr);
        tv_max = tv_max.max(tv);
        werr_max = werr_max.max(werr);
    }
    let walks = cfg.extra_usize("walks")?;
    let chunks = 100usize.min(walks.max(1));
    let per_chunk = walks.div_ceil(chunks);
    let failures: usize = run_replicas(cfg.seed, "oracle/walks", chunks, |_, rng| {
        use rand::Rng;
        let mut bad = 0usize;
        for _ in 0..per_chunk {
            let half = 4;
            let len = rng.random_range(1..300usize);
            let mut w = vec![Site::new(-half, rng.random_range(-half..=half))];
            for _ in 0..len {
                let last = *w.last().unwrap();
                let nb = last.neighbors()[rng.random_range(0..4usize)];
                if nb.x.abs() <= half && nb.y.abs() <= half {
                    w.push(nb);
                }
            }
            let le = loop_erase(&w);
            let mut ok = loop_erase(&le) == le && le == loop_erase_reference(&w);
            let a_out = Site::new(-half - 1, w[0].y);
            let last = *w.last().unwrap();
            let b_out = Site::new(last.x, half + 1);
            let mut full = vec![a_out];
            full.extend_from_slice(&w);
            let mut cur = last;
            while cur.y < half {
                cur = Site::new(cur.x, cur.y + 1);
                full.push(cur);
            }
            full.push(b_out);
            let mut tail = w.clone();
            tail.extend_from_slice(&full[w.len() + 1..full.len() - 1]);
            let mut expected = vec![a_out];
            expected.extend(loop_erase(&tail));
            expected.push(b_out);
            ok &= loop_erase(&full) == expected;
            if !ok {
                bad += 1;
            }
        }
        bad
    })
    .into_iter()
    .sum();
    rec.row("walks", 0, "count", (per_chunk * chunks) as f64);
    rec.row("walks", 0, "failures", failures as f64);
    rec.check(Check::within("tv_max", tv_max, 0.0, 0.01));
    rec.check(Check::within("weight_sum_rel_err_max", werr_max, 0.0, 1e-9));
    rec.check(Check::within("loop_erase_failures", failures as f64, 0.0, 0.0));
    Ok(rec)
}

/// Per-batch fraction of samples with 0 on the path.
fn hit_fractions(t: &DomainTriple, seed: u64, label: &str, total: usize, batch: usize) -> Result<Vec<f64>> {
    let law = law_for(t)?;
    let o = t.index_of(Site::ORIGIN).ok_or_else(|| LabError::InvalidDomain("0 is not in A".into()))? as u32;
    let (nb, bs) = batch_sizes(total, batch);
    let n = t.len();
    Ok(run_replicas(seed, label, nb, |_, rng| {
        let mut hits = 0usize;
        for _ in 0..bs {
            let (v, _) = sample_lerw_indices(n, &law, rng);
            if v.contains(&o) {
                hits += 1;
            }
        }
        hits as f64 / bs as f64
    }))
}

pub fn exp_one_point(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let shape = shape_for(cfg)?;
    let batch = cfg.extra_usize("batch")?;
    let mut xs = Vec::new();
    let mut sines = Vec::new();
    let mut groups = Vec::new();
    for &r in &cfg.r_list {
        let n = r.round() as usize;
        let t = approximate_domain(&shape, n)?;
        let m = map_triple(&t)?.with_cutoff(0.0);
        let (s, ra) = sine_and_radius(&m, C::new(0.0, 0.0))?;
        let frac = hit_fractions(&t, cfg.seed, &format!("one-point/r={n}"), cfg.replicas, batch)?;
        let param = format!("r={n}");
        for (k, f) in frac.iter().enumerate() {
            rec.row(&param, k, "hit_fraction", *f);
        }
        rec.scalar(&format!("S[{param}]"), s);
        rec.scalar(&format!("r_A[{param}]"), ra);
        xs.push(ra);
        sines.push(s);
        groups.push(frac);
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let fit = loglog_bootstrap("r_exponent", &xs, &sizes, cfg.seed, |k, idx| {
        mean_at(&groups[k], idx) / sines[k].powi(3)
    });
    rec.check(Check::within("r_exponent", fit.slope, -0.85, -0.65));
    rec.fits.push(fit);
    let chat: Vec<f64> = (0..xs.len()).map(|k| mean(&groups[k]) * xs[k].powf(0.75) / sines[k].powi(3)).collect();
    for (k, c) in chat.iter().enumerate() {
        rec.scalar(&format!("c_hat[r={}]", cfg.r_list[k]), *c);
    }
    let spread = chat.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / chat.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    rec.check(Check::within("c_hat_spread", spread, 0.0, 0.15));

    let rs = cfg.extra_usize("s_radius")?;
    let marks = cfg.extra_usize("s_marks")?.max(2);
    let mut s_vals = Vec::new();
    let mut s_groups = Vec::new();
    for j in 0..marks {
        let theta = std::f64::consts::PI * (1.0 - 0.75 * j as f64 / (marks - 1) as f64);
        let t = disk_with_marks(rs, 0.0, theta)?;
        let m = map_triple(&t)?.with_cutoff(0.0);
        let (s, _) = sine_and_radius(&m, C::new(0.0, 0.0))?;
        let frac = hit_fractions(&t, cfg.seed, &format!("one-point/s{j}"), cfg.replicas, batch)?;
        let param = format!("r={rs};theta={theta:.6}");
        for (k, f) in frac.iter().enumerate() {
            rec.row(&param, k, "hit_fraction", *f);
        }
        rec.scalar(&format!("S[{param}]"), s);
        s_vals.push(s);
        s_groups.push(frac);
    }
    let sizes: Vec<usize> = s_groups.iter().map(|g| g.len()).collect();
    let fit = loglog_bootstrap("s_exponent", &s_vals, &sizes, cfg.seed, |k, idx| mean_at(&s_groups[k], idx));
    rec.check(Check::within("s_exponent", fit.slope, 2.7, 3.3));
    rec.fits.push(fit);
    Ok(rec)
}

pub fn exp_conditional_hitting(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let n = cfg.n_list[0];
    let t = disk_with_marks(n, 0.0, cfg.extra_f64("mark_angle")?)?;
    let law = law_for(&t)?;
    let o = t.index_of(Site::ORIGIN).expect("origin in disk") as u32;
    let (nb, bs) = batch_sizes(cfg.replicas, cfg.extra_usize("batch")?);
    let rs = cfg.r_list.clone();
    let size = t.len();
    let out: Vec<(f64, Vec<f64>)> = run_replicas(cfg.seed, "conditional-hitting", nb, |_, rng| {
        let mut hits = 0usize;
        let mut meets = vec![0usize; rs.len()];
        for _ in 0..bs {
            let (v, _) = sample_lerw_indices(size, &law, rng);
            if v.contains(&o) {
                hits += 1;
            }
            let m2 = v.iter().map(|&i| t.site(i as usize).norm2()).min().unwrap_or(i64::MAX) as f64;
            for (k, r) in rs.iter().enumerate() {
                if m2 < r * r {
                    meets[k] += 1;
                }
            }
        }
        (hits as f64, meets.into_iter().map(|c| c as f64).collect())
    });
    for (b, (h, m)) in out.iter().enumerate() {
        rec.row("origin", b, "hit_fraction", h / bs as f64);
        for (k, r) in rs.iter().enumerate() {
            rec.row(&format!("r={}", fmt_r(*r)), b, "meets_fraction", m[k] / bs as f64);
        }
    }
    let cond = |k: usize, idx: &[usize]| {
        let h: f64 = idx.iter().map(|&i| out[i].0).sum();
        let m: f64 = idx.iter().map(|&i| out[i].1[k]).sum();
        h / m
    };
    let all: Vec<usize> = (0..nb).collect();
    let p0 = all.iter().map(|&i| out[i].0).sum::<f64>() / (nb * bs) as f64;
    let mut ratios = Vec::new();
    for (k, r) in rs.iter().enumerate() {
        let c = cond(k, &all);
        let p_meet = all.iter().map(|&i| out[i].1[k]).sum::<f64>() / (nb * bs) as f64;
        rec.scalar(&format!("conditional[r={}]", fmt_r(*r)), c);
        let q = p_meet * r.powf(-0.75) / p0;
        rec.scalar(&format!("companion[r={}]", fmt_r(*r)), q);
        ratios.push((*r, q));
        if (*r - 1.0).abs() < 1e-12 {
            rec.check(Check::within("degenerate_r1", c, 1.0, 1.0));
        }
    }
    let min_r = cfg.extra_f64("fit_min_r")?;
    let fit_k: Vec<usize> = (0..rs.len()).filter(|&k| rs[k] >= min_r).collect();
    let xs: Vec<f64> = fit_k.iter().map(|&k| rs[k]).collect();
    let fit = paired_loglog("conditional_exponent", &xs, nb, cfg.seed, |j, idx| cond(fit_k[j], idx));
    rec.check(Check::within("conditional_exponent", fit.slope, -0.87, -0.63));
    rec.fits.push(fit);
    let drift = ratios
        .windows(2)
        .filter(|w| w[0].0 >= min_r)
        .map(|w| (w[1].1 / w[0].1 - 1.0).abs())
        .fold(0.0, f64::max);
    rec.check(Check::within("companion_drift_max", drift, 0.0, 0.2));
    Ok(rec)
}

pub fn exp_growth(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let shape = shape_for(cfg)?;
    let reps: Vec<usize> = match cfg.extra.get("replicas_by_n") {
        Some(_) => {
            let v: Vec<usize> = cfg.extra_list("replicas_by_n")?.into_iter().map(|x| x as usize).collect();
            if v.len() != cfg.n_list.len() {
                return Err(LabError::Config("replicas_by_n must match the n list".into()));
            }
            v
        }
        None => vec![cfg.replicas; cfg.n_list.len()],
    };
    let mut ts: Vec<Vec<f64>> = Vec::new();
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let t = approximate_domain(&shape, n)?;
        let law = law_for(&t)?;
        let size = t.len();
        let v: Vec<f64> = run_replicas(cfg.seed, &format!("growth/N={n}"), reps[i], |_, rng| {
            sample_lerw_indices(size, &law, rng).0.len() as f64
        });
        let param = format!("N={n}");
        for (k, x) in v.iter().enumerate() {
            rec.row(&param, k, "T", *x);
        }
        let m1 = mean(&v);
        let m2 = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        rec.scalar(&format!("second_moment_ratio[{param}]"), m2 / (m1 * m1));
        ts.push(v);
    }
    let xs: Vec<f64> = cfg.n_list.iter().map(|&n| n as f64).collect();
    let sizes: Vec<usize> = ts.iter().map(|v| v.len()).collect();
    let f1 = loglog_bootstrap("mean_exponent", &xs, &sizes, cfg.seed, |k, idx| mean_at(&ts[k], idx));
    let f2 = loglog_bootstrap("second_moment_exponent", &xs, &sizes, cfg.seed, |k, idx| {
        idx.iter().map(|&i| ts[k][i] * ts[k][i]).sum::<f64>() / idx.len() as f64
    });
    rec.check(Check::within("mean_exponent", f1.slope, 1.20, 1.30));
    rec.check(Check::within("second_moment_exponent", f2.slope, 2.4, 2.6));
    rec.fits.push(f1);
    rec.fits.push(f2);
    Ok(rec)
}

pub fn exp_maximal(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let shape = shape_for(cfg)?;
    let n = cfg.n_list[0];
    let t = approximate_domain(&shape, n)?;
    let law = law_for(&t)?;
    let size = t.len();
    let rs = cfg.r_list.clone();
    let norm = (n as f64).powf(2.5);
    let out: Vec<Vec<(f64, f64)>> = run_replicas(cfg.seed, &format!("maximal/N={n}"), cfg.replicas, |_, rng| {
        let pts: Vec<Site> = sample_lerw_indices(size, &law, rng).0.iter().map(|&i| t.site(i as usize)).collect();
        rs.iter()
            .map(|r| {
                let v = visit_counts(&pts, r * n as f64);
                ((v.tbar * v.tbar) as f64 / norm, v.lattice_sum / norm)
            })
            .collect()
    });
    for (i, row) in out.iter().enumerate() {
        for (k, r) in rs.iter().enumerate() {
            let param = format!("N={n};r={}", fmt_r(*r));
            rec.row(&param, i, "tbar_sq_scaled", row[k].0);
            rec.row(&param, i, "lattice_sum_scaled", row[k].1);
        }
    }
    let reps = out.len();
    let f = paired_loglog("tbar_exponent", &rs, reps, cfg.seed, |k, idx| idx.iter().map(|&i| out[i][k].0).sum::<f64>() / idx.len() as f64);
    let g = paired_loglog("lattice_sum_exponent", &rs, reps, cfg.seed, |k, idx| idx.iter().map(|&i| out[i][k].1).sum::<f64>() / idx.len() as f64);
    let means: Vec<f64> = (0..rs.len()).map(|k| out.iter().map(|o| o[k].0).sum::<f64>() / reps as f64).collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    rec.check(Check::within("tbar_exponent", f.slope, 0.95, 1.55));
    rec.check(Check::within("monotone_in_r", f64::from(u8::from(monotone)), 1.0, 1.0));
    rec.scalar("lattice_sum_exponent", g.slope);
    rec.fits.push(f);
    rec.fits.push(g);
    Ok(rec)
}

pub fn exp_two_point(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let (nb, bs) = batch_sizes(cfg.replicas, cfg.extra_usize("batch")?);
    let mut max_ratio = Vec::new();
    let mut last_diag: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut sym_worst: f64 = 0.0;
    for &n in &cfg.n_list {
        let t = approximate_domain(&AnalyticShape::unit_disk(), n)?;
        let law = law_for(&t)?;
        let size = t.len();
        let h = (n / 2) as i32;
        let mut tracked: Vec<Site> = Vec::new();
        for y in [-h, 0, h] {
            for x in [-h, 0, h] {
                tracked.push(Site::new(x, y));
            }
        }
        let ks: Vec<i32> = [2, 4, 8, 16, 32, 64].into_iter().filter(|&k| k as usize * 4 <= n).collect();
        for &k in &ks {
            tracked.push(Site::new(0, k));
            tracked.push(Site::new(0, -k));
        }
        let mut slot = vec![usize::MAX; size];
        for (j, s) in tracked.iter().enumerate() {
            slot[t.index_of(*s).expect("tracked site in A")] = j;
        }
        let m = tracked.len();
        let counts: Vec<Vec<u64>> = run_replicas(cfg.seed, &format!("two-point/N={n}"), nb, |_, rng| {
            let mut c = vec![0u64; m * m];
            let mut on = Vec::with_capacity(m);
            for _ in 0..bs {
                on.clear();
                for &i in &sample_lerw_indices(size, &law, rng).0 {
                    let j = slot[i as usize];
                    if j != usize::MAX {
                        on.push(j);
                    }
                }
                for &p in &on {
                    for &q in &on {
                        c[p * m + q] += 1;
                    }
                }
            }
            c
        });
        let total = (nb * bs) as f64;
        let mut pair = vec![0.0; m * m];
        for c in &counts {
            for (x, y) in pair.iter_mut().zip(c) {
                *x += *y as f64 / total;
            }
        }
        let param = format!("N={n}");
        for (b, c) in counts.iter().enumerate() {
            let origin = 4;
            rec.row(&param, b, "origin_fraction", c[origin * m + origin] as f64 / bs as f64);
        }
        let delta = |s: Site| n as f64 - s.norm();
        let mut worst: f64 = 0.0;
        for p in 0..9 {
            for q in 0..9 {
                if p == q {
                    continue;
                }
                let (z, w) = if delta(tracked[p]) <= delta(tracked[q]) { (tracked[p], tracked[q]) } else { (tracked[q], tracked[p]) };
                let bound = delta(z).powf(-0.75) * (delta(w).powf(-0.75) + (z.to_complex() - w.to_complex()).norm().powf(-0.75));
                let ratio = pair[p * m + q] / bound;
                worst = worst.max(ratio);
                let (zr, wr) = (Site::new(tracked[p].x, -tracked[p].y), Site::new(tracked[q].x, -tracked[q].y));
                let pr = tracked.iter().position(|s| *s == zr).unwrap();
                let qr = tracked.iter().position(|s| *s == wr).unwrap();
                let (a, b) = (pair[p * m + q], pair[pr * m + qr]);
                let se = ((a * (1.0 - a) + b * (1.0 - b)) / total).sqrt();
                if se > 0.0 {
                    sym_worst = sym_worst.max((a - b).abs() / se);
                }
            }
        }
        rec.scalar(&format!("max_ratio[{param}]"), worst);
        max_ratio.push(worst);
        let p0 = pair[4 * m + 4];
        let mut kx = Vec::new();
        let mut cond = Vec::new();
        for (j, &k) in ks.iter().enumerate() {
            let (u, d) = (9 + 2 * j, 10 + 2 * j);
            let c = 0.5 * (pair[4 * m + u] + pair[4 * m + d]) / p0;
            rec.scalar(&format!("diag_conditional[{param};k={k}]"), c);
            rec.scalar(&format!("diag_scaled[{param};k={k}]"), c * (k as f64).powf(0.75));
            kx.push(k as f64);
            cond.push(c);
        }
        let keep: Vec<usize> = (0..kx.len()).filter(|&j| kx[j] >= 4.0 && kx[j] * 8.0 <= n as f64).collect();
        last_diag = Some((keep.iter().map(|&j| kx[j]).collect(), keep.iter().map(|&j| cond[j]).collect()));
    }
    if max_ratio.len() >= 2 {
        let s = max_ratio[max_ratio.len() - 1] / max_ratio[max_ratio.len() - 2];
        rec.check(Check::within("ratio_stability", s, 0.5, 2.0));
    }
    rec.check(Check::within("symmetry_sigma", sym_worst, 0.0, 4.0));
    if let Some((kx, cond)) = last_diag {
        if kx.len() >= 2 {
            let f = crate::stats::loglog_fit(&kx, &cond);
            rec.fits.push(Fit {
                name: "diagonal_exponent".into(),
                slope: f.slope,
                intercept: f.intercept,
                slope_se: f.slope_se,
                ci_lo: f.slope - 1.96 * f.slope_se,
                ci_hi: f.slope + 1.96 * f.slope_se,
            });
            rec.check(Check::within("diagonal_exponent", f.slope, -0.9, -0.6));
        }
    }
    Ok(rec)
}

pub fn exp_separation(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let angles = cfg.extra_list("angles")?;
    let factor = cfg.extra_f64("domain_factor")?;
    let max_attempts = cfg.extra_usize("max_attempts")?;
    let thresholds = cfg.extra_list("thresholds")?;
    let c0 = thresholds[0];
    let mut min_p: f64 = f64::INFINITY;
    let mut trend_min: f64 = f64::INFINITY;
    for (ai, &theta) in angles.iter().enumerate() {
        let mut ps = Vec::new();
        let mut vs = Vec::new();
        for &r in &cfg.r_list {
            let n = (factor * r).round() as usize;
            let t = disk_with_marks(n, -theta / 2.0, theta / 2.0)?;
            let law = law_for(&t)?;
            let mut accepted: Vec<f64> = Vec::new();
            let mut attempts = 0usize;
            let chunk = 64usize;
            let mut round = 0usize;
            while accepted.len() < cfg.replicas && attempts < max_attempts {
                let label = format!("separation/{ai}/r={r}/round={round}");
                let got: Vec<Result<Option<f64>>> = run_replicas(cfg.seed, &label, chunk, |_, rng| {
                    let eta = sample_lerw(&t, &law, rng);
                    if !meets_disk(eta.interior(), r) {
                        return Ok(None);
                    }
                    match first_last_decompose(&eta, r, &t)? {
                        Some(d) => Ok(Some(separation_statistic_harmonic(&d)?)),
                        None => Ok(None),
                    }
                });
                for g in got {
                    attempts += 1;
                    if let Some(s) = g? {
                        if accepted.len() < cfg.replicas {
                            accepted.push(s);
                        }
                    }
                    if accepted.len() >= cfg.replicas {
                        break;
                    }
                }
                round += 1;
            }
            let param = format!("r={};theta={theta:.6}", fmt_r(r));
            for (k, s) in accepted.iter().enumerate() {
                rec.row(&param, k, "S", *s);
            }
            rec.scalar(&format!("attempts[{param}]"), attempts as f64);
            rec.scalar(&format!("meets_probability[{param}]"), accepted.len() as f64 / attempts.max(1) as f64);
            let k = accepted.len() as f64;
            for &c in &thresholds {
                let p = accepted.iter().filter(|&&s| s >= c).count() as f64 / k;
                rec.scalar(&format!("conditional[{param};c0={c}]"), p);
            }
            let p = accepted.iter().filter(|&&s| s >= c0).count() as f64 / k;
            min_p = min_p.min(if k > 0.0 { p } else { f64::NAN });
            ps.push(p);
            vs.push(p * (1.0 - p) / k);
        }
        let xs: Vec<f64> = cfg.r_list.iter().map(|r| r.log2()).collect();
        let mx = mean(&xs);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = if sxx > 0.0 { linear_fit(&xs, &ps).slope } else { 0.0 };
        let se = if sxx > 0.0 { (xs.iter().zip(&vs).map(|(x, v)| (x - mx).powi(2) * v).sum::<f64>()).sqrt() / sxx } else { 0.0 };
        let z = if se > 0.0 { slope / se } else { 0.0 };
        rec.scalar(&format!("trend_slope[theta={theta:.6}]"), slope);
        rec.scalar(&format!("trend_z[theta={theta:.6}]"), z);
        trend_min = trend_min.min(z);
    }
    rec.check(Check::within("min_conditional", min_p, 0.05, 1.0));
    rec.check(Check::within("trend_z_min", trend_min, -2.58, f64::INFINITY));
    Ok(rec)
}

/// Lattice disk of radius m slit along the negative real axis up to -r, so
/// that C_r stays inside A, with a at the slit tip and b on the far side.
pub fn bottleneck_domain(m: usize, r: usize) -> Result<DomainTriple> {
    let (mi, ri) = (m as i32, r as i32);
    let sites: Vec<Site> = lattice_disk(m as f64).into_iter().filter(|s| !(s.y == 0 && s.x <= -ri)).collect();
    let a = BoundaryEdge::new(Site::new(1 - ri, 0), Site::new(-ri, 0))?;
    let b = BoundaryEdge::new(Site::new(mi - 1, 0), Site::new(mi, 0))?;
    DomainTriple::new(sites, a, b)
}

pub fn exp_bottleneck(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let small = cfg.extra_usize("small_r")?;
    let r = small as f64;
    let m = cfg.extra_usize("domain_radius")?;
    if cfg.r_list.iter().any(|&big| big >= m as f64 || big <= r) {
        return Err(LabError::Config("need small_r < R < domain_radius".into()));
    }
    let t = bottleneck_domain(m, small)?;
    let law = law_for(&t)?;
    let size = t.len();
    let big = cfg.r_list.clone();
    let out: Vec<Vec<f64>> = run_replicas(cfg.seed, "bottleneck", cfg.replicas, |_, rng| {
        let pts: Vec<Site> = sample_lerw_indices(size, &law, rng).0.iter().map(|&i| t.site(i as usize)).collect();
        big.iter().map(|&rr| f64::from(u8::from(bottleneck_event(&pts, r, rr)))).collect()
    });
    for (i, row) in out.iter().enumerate() {
        for (k, rr) in big.iter().enumerate() {
            rec.row(&format!("R={}", fmt_r(*rr)), i, "event", row[k]);
        }
    }
    for (k, rr) in big.iter().enumerate() {
        let p = out.iter().map(|o| o[k]).sum::<f64>() / out.len() as f64;
        rec.scalar(&format!("probability[R={}]", fmt_r(*rr)), p);
    }
    let xs: Vec<f64> = big.iter().map(|rr| r / rr).collect();
    let f = paired_loglog("slope", &xs, out.len(), cfg.seed, |k, idx| idx.iter().map(|&i| out[i][k]).sum::<f64>() / idx.len() as f64);
    rec.scalar("slope_minus_conjectured", f.slope - 1.5);
    rec.check(Check::within("slope", f.slope, 0.85, f64::INFINITY));
    rec.fits.push(f);
    Ok(rec)
}

pub fn exp_escape(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let mut groups = Vec::new();
    let mut out_of_range = 0usize;
    for &r in &cfg.r_list {
        let v: Vec<Result<f64>> = run_replicas(cfg.seed, &format!("escape/r={r}"), cfg.replicas, |_, rng| {
            let eta = sample_radial_lerw(r, rng);
            escape_probability(r, &eta)
        });
        let v: Vec<f64> = v.into_iter().collect::<Result<_>>()?;
        out_of_range += v.iter().filter(|h| !(**h >= 0.0 && **h <= 1.0)).count();
        let param = format!("r={}", fmt_r(r));
        for (k, h) in v.iter().enumerate() {
            rec.row(&param, k, "h", *h);
        }
        groups.push(v);
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let f = loglog_bootstrap("exponent", &cfg.r_list, &sizes, cfg.seed, |k, idx| mean_at(&groups[k], idx));
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let monotone = means.windows(2).all(|w| w[1] < w[0]);
    rec.check(Check::within("exponent", f.slope, -0.85, -0.65));
    rec.check(Check::within("out_of_range", out_of_range as f64, 0.0, 0.0));
    rec.check(Check::within("monotone_decreasing", f64::from(u8::from(monotone)), 1.0, 1.0));
    rec.fits.push(f);
    Ok(rec)
}

/// Image under `m` of a LERW path: F(a) projected to R, then the interior.
pub(super) fn lerw_image(t: &DomainTriple, idx: &[u32], m: &HalfPlaneMap) -> Vec<C> {
    let mut pts = Vec::with_capacity(idx.len() + 1);
    let fa = m.eval_unchecked(t.a.midpoint()).0;
    pts.push(C::new(fa.re, 0.0));
    for &i in idx {
        pts.push(m.eval_unchecked(t.site(i as usize).to_complex()).0);
    }
    pts
}

struct DrivingSummary {
    slope: f64,
    slope_se: f64,
    ks: f64,
    skew: f64,
    drift_sigma: f64,
}

fn driving_stats(
    rec: &mut ResultRecord,
    param: &str,
    records: &[(Vec<f64>, Vec<f64>)],
    caps: &[f64],
    seed: u64,
    ks_count: usize,
) -> DrivingSummary {
    let n = records.len();
    for (i, (u, _)) in records.iter().enumerate() {
        for (c, v) in caps.iter().zip(u) {
            rec.row(param, i, &format!("U@{c}"), *v);
        }
    }
    let slope_of = |idx: &[usize]| {
        let vars: Vec<f64> = (0..caps.len())
            .map(|k| {
                let v: Vec<f64> = idx.iter().map(|&i| records[i].0[k]).collect();
                variance(&v)
            })
            .collect();
        linear_fit(caps, &vars).slope
    };
    let all: Vec<usize> = (0..n).collect();
    let slope = slope_of(&all);
    let iv = super::bootstrap_indices(&[n], super::derive_seed(seed, param), |g| slope_of(&g[0]));
    let inc: Vec<f64> = records.iter().take(ks_count).flat_map(|(_, d)| d.iter().copied()).collect();
    let last: Vec<f64> = records.iter().map(|(u, _)| *u.last().unwrap()).collect();
    let se = stderr(&last);
    DrivingSummary {
        slope,
        slope_se: iv.se,
        ks: ks_normal(&inc).statistic,
        skew: skewness(&inc),
        drift_sigma: if se > 0.0 { mean(&last).abs() / se } else { 0.0 },
    }
}

/// (U at each capacity in `caps` minus U_0, normalized meso increments).
fn driving_observables(points: &[C], h: f64, caps: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let cap = *caps.last().unwrap();
    let ex = extract_driving(points, h, 1.05 * cap + 2.0 * h)?;
    if ex.meso.total_capacity() < cap {
        return Err(LabError::Config("path ended before the capacity window closed".into()));
    }
    let u0 = ex.meso.values[0];
    let u: Vec<f64> = caps.iter().map(|&c| ex.meso.value_at(c) - u0).collect();
    let inc: Vec<f64> = ex
        .meso
        .times
        .windows(2)
        .zip(ex.meso.values.windows(2))
        .filter(|(t, _)| t[1] <= cap)
        .map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0]).sqrt())
        .collect();
    Ok((u, inc))
}

pub fn exp_driving(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let mut rec = ResultRecord::new(cfg);
    let shape = shape_for(cfg)?;
    let cap = cfg.extra_f64("capacity")?;
    let caps: Vec<f64> = (1..=10).map(|k| cap * k as f64 / 10.0).collect();
    let mut ks = Vec::new();
    let last_n = *cfg.n_list.last().unwrap();
    let last_reps = match cfg.extra.get("replicas_last") {
        Some(_) => cfg.extra_usize("replicas_last")?,
        None => cfg.replicas,
    };
    for &n in &cfg.n_list {
        let t = approximate_domain(&shape, n)?;
        let law = law_for(&t)?;
        let m = chart_for(cfg, &t, n)?;
        let size = t.len();
        let hs: Vec<f64> = if n == last_n { vec![cfg.h, cfg.h / 2.0] } else { vec![cfg.h] };
        let reps = if n == last_n { cfg.replicas.max(last_reps) } else { cfg.replicas };
        let out: Vec<Result<Vec<(Vec<f64>, Vec<f64>)>>> = run_replicas(cfg.seed, &format!("driving/N={n}"), reps, |_, rng| {
            let idx = sample_lerw_indices(size, &law, rng).0;
            let pts = lerw_image(&t, &idx, &m);
            hs.iter().map(|&h| driving_observables(&pts, h, &caps)).collect()
        });
        let out: Vec<Vec<(Vec<f64>, Vec<f64>)>> = out.into_iter().collect::<Result<_>>()?;
        let mut slopes = Vec::new();
        for (j, h) in hs.iter().enumerate() {
            let records: Vec<(Vec<f64>, Vec<f64>)> = out.iter().map(|o| o[j].clone()).collect();
            let param = format!("N={n};h={h}");
            let s = driving_stats(&mut rec, &param, &records, &caps, cfg.seed, cfg.replicas);
            rec.scalar(&format!("variance_slope[{param}]"), s.slope);
            rec.scalar(&format!("variance_slope_se[{param}]"), s.slope_se);
            rec.scalar(&format!("ks[{param}]"), s.ks);
            rec.scalar(&format!("skewness[{param}]"), s.skew);
            rec.scalar(&format!("drift_sigma[{param}]"), s.drift_sigma);
            if j == 0 {
                ks.push(s.ks);
            }
            slopes.push(s);
        }
        if n == last_n {
            rec.check(Check::within("variance_slope", slopes[0].slope, 0.9, 1.1));
            rec.check(Check::within("h_halving_shift", (slopes[1].slope - slopes[0].slope).abs(), 0.0, 0.1));
            rec.check(Check::within("mean_drift_sigma", slopes[0].drift_sigma, 0.0, 3.0));
        }
    }
    let decreasing = ks.windows(2).all(|w| w[1] < w[0]);
    rec.check(Check::within("ks_decreasing", f64::from(u8::from(decreasing)), 1.0, 1.0));
    Ok(rec)
}
