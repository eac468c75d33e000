//! Acceptance suite. Prints one PASS/FAIL line per criterion check and a
//! verdict per criterion. A FAIL is reported, not raised, so the run always
//! completes; errors while running an experiment do fail the test.
//!
//! Every experiment runs at its default scale.
//! LERWLAB_ONLY=<id>[,<id>...] restricts the run to some experiments.

use std::time::Instant;

use lerwlab_core::harness::{run, ExperimentConfig, ResultRecord};

struct Criterion {
    label: &'static str,
    experiment: &'static str,
    /// Check names (or name prefixes ending in '[') that decide the verdict.
    required: &'static [&'static str],
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        label: "oracle suite",
        experiment: "oracle-suite",
        required: &["tv_max", "weight_sum_rel_err_max", "loop_erase_failures"],
    },
    Criterion { label: "one-point law", experiment: "one-point", required: &["r_exponent", "s_exponent"] },
    Criterion {
        label: "growth exponents",
        experiment: "growth",
        required: &["mean_exponent", "second_moment_exponent"],
    },
    Criterion { label: "maximal second moment", experiment: "maximal", required: &["tbar_exponent"] },
    Criterion {
        label: "separation",
        experiment: "separation",
        required: &["min_conditional", "trend_z_min"],
    },
    Criterion { label: "bottleneck", experiment: "bottleneck", required: &["slope"] },
    Criterion { label: "escape probability", experiment: "escape", required: &["exponent"] },
    Criterion {
        label: "loewner/sle core",
        experiment: "loewner-core",
        required: &[
            "zero_driving_error",
            "doubled_time_error",
            "round_trip_error",
            "var_u1_sigma[",
            "derivative_bound_violations",
            "difference_constant_ratio",
        ],
    },
    Criterion {
        label: "sle one-point",
        experiment: "sle-one-point",
        required: &["eps_exponent[", "ratio_spread_sigma"],
    },
    Criterion {
        label: "driving of lerw",
        experiment: "driving",
        required: &["variance_slope", "h_halving_shift", "ks_decreasing"],
    },
    Criterion {
        label: "natural-time match",
        experiment: "natural-time",
        required: &["variance_ratio", "ks"],
    },
    Criterion {
        label: "content martingale",
        experiment: "martingale",
        required: &["max_deviation_sigma"],
    },
    Criterion {
        label: "metric rho",
        experiment: "metric",
        required: &["identity", "translation", "time_dilation", "truncation_violations"],
    },
];

fn is_required(c: &Criterion, name: &str) -> bool {
    c.required.iter().any(|r| if r.ends_with('[') { name.starts_with(r) } else { name == *r })
}

fn report(c: &Criterion, rec: &ResultRecord, secs: f64) -> bool {
    let mut ok = true;
    let mut seen = 0;
    for chk in &rec.checks {
        if is_required(c, &chk.name) {
            seen += 1;
            ok &= chk.pass;
            println!("  {}", chk.line());
        } else {
            println!("  INFO {}", chk.line());
        }
    }
    for f in &rec.fits {
        println!("  INFO fit {}: slope {:.4}, 95% CI [{:.4}, {:.4}]", f.name, f.slope, f.ci_lo, f.ci_hi);
    }
    ok &= seen >= c.required.len();
    println!("{} {} ({:.0} s)", if ok { "PASS" } else { "FAIL" }, c.label, secs);
    ok
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        for c in CRITERIA {
            println!("{}: test", c.experiment);
        }
        return;
    }
    let only: Option<Vec<String>> = std::env::var("LERWLAB_ONLY").ok().map(|v| v.split(',').map(String::from).collect());
    println!("acceptance suite");
    let mut verdicts = Vec::new();
    for c in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == c.experiment)) {
            continue;
        }
        let cfg = ExperimentConfig::defaults(c.experiment).expect("known experiment");
        println!("[{}] {} replicas={} seed={}", c.label, c.experiment, cfg.replicas, cfg.seed);
        let start = Instant::now();
        let rec = run(&cfg).unwrap_or_else(|e| panic!("{} failed to run: {e}", c.experiment));
        verdicts.push((c.label, report(c, &rec, start.elapsed().as_secs_f64())));
    }
    let passed = verdicts.iter().filter(|v| v.1).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
    for (label, ok) in &verdicts {
        if !ok {
            println!("  not met: {label}");
        }
    }
}
