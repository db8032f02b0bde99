//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. With ACCEPTANCE_STRICT set, any failure fails the process.

use std::process::Command;
use std::time::{Duration, Instant};

use hawkes_watch::bench::{
    auc_preset, case_preset, estimate_arl_mc, evaluate_case, preset_threshold, run_case_preset, BenchRow, CaseOptions,
    CasePreset, ThresholdSource,
};
use hawkes_watch::detector::{Detector, DetectorConfig, Method};
use hawkes_watch::em::{e_step, fit, EmConfig};
use hawkes_watch::likelihood::{excitation_pass, llr_hawkes_to_hawkes, llr_poisson_to_hawkes};
use hawkes_watch::model::spectral_radius;
use hawkes_watch::simulate::{simulate_hawkes, SimSeed};
use hawkes_watch::theory::{
    info_hawkes_to_hawkes_1d, info_poisson_to_hawkes_1d, info_quantities, nu, solve_threshold, stationary_intensity,
    InfoQuantities, IntegrationConfig,
};
use hawkes_watch::{Event, EventStream, HawkesParams, Setting, Window};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_stationary_rate() -> Outcome {
    let p1 = HawkesParams::scalar(1.0, 0.3, 1.0);
    let a2 = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, 0.2]);
    let p2 = HawkesParams::new(vec![0.5, 0.5], a2, 1.0);
    let h = 1e4;
    let rates = |p: &HawkesParams, salt: u64| -> Vec<f64> {
        (0..20u64)
            .into_par_iter()
            .map(|s| {
                let st = simulate_hawkes(p, h, SimSeed::new(salt).replicate(s)).unwrap();
                st.len() as f64 / (h * p.dim() as f64)
            })
            .collect()
    };
    let r1: f64 = rates(&p1, 11).iter().sum::<f64>() / 20.0;
    let r2: f64 = rates(&p2, 12).iter().sum::<f64>() / 20.0;
    let t1 = stationary_intensity(&p1).unwrap()[0];
    let t2 = stationary_intensity(&p2).unwrap()[0];
    let (e1, e2) = (rel(r1, t1), rel(r2, t2));
    outcome(
        e1 < 0.02 && e2 < 0.03,
        format!(
            "d=1 rate {r1:.5} vs {t1:.5} (err {:.2}%), d=2 per-node {r2:.5} vs {t2:.5} (err {:.2}%)",
            100.0 * e1,
            100.0 * e2
        ),
    )
}

fn c2_second_order() -> Outcome {
    let p = HawkesParams::scalar(1.0, 0.3, 1.0);
    let width = 0.5;
    let horizon = 2e6;
    let st = simulate_hawkes(&p, horizon, SimSeed::new(21)).unwrap();
    let bins = (horizon / width) as usize;
    let mut counts = vec![0.0f64; bins];
    for e in st.events() {
        let k = ((e.time / width) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let mean = counts.iter().sum::<f64>() / bins as f64;
    let dev: Vec<f64> = counts.iter().map(|c| c - mean).collect();
    let lags: Vec<usize> = (1..=10).collect();
    let mut pts = Vec::new();
    for &k in &lags {
        let n = bins - k;
        let cov = (0..n).map(|i| dev[i] * dev[i + k]).sum::<f64>() / n as f64;
        pts.push((k as f64 * width, cov));
    }
    if pts.iter().any(|p| p.1 <= 0.0) {
        return outcome(false, format!("nonpositive autocovariance: {pts:?}"));
    }
    // Least squares of log covariance on lag.
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let rate = -sxy / sxx;
    outcome(
        rel(rate, 0.7) < 0.1,
        format!("fitted decay {rate:.4} vs 0.7 over lags 0.5..5 ({} events)", st.len()),
    )
}

fn random_stream(rng: &mut ChaCha8Rng, d: usize, n: usize, horizon: f64) -> EventStream {
    let mut ev: Vec<Event> = (0..n)
        .map(|_| Event::new(rng.gen_range(0.0..horizon), rng.gen_range(0..d)))
        .collect();
    ev.sort_by(|a, b| a.time.total_cmp(&b.time));
    EventStream::new(d, ev, horizon).unwrap()
}

fn c3_likelihood_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut identities = true;
    for _ in 0..200 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=500);
        let horizon = rng.gen_range(5.0..100.0);
        let st = random_stream(&mut rng, d, n, horizon);
        let beta = rng.gen_range(0.1..5.0);
        let mask = DMatrix::from_fn(d, d, |_, _| rng.gen_bool(0.7));
        let tau = rng.gen_range(0.0..horizon / 2.0);
        let w = Window::new(tau, horizon).unwrap();
        let fast = excitation_pass(&st, beta, &mask, w);
        let inw: Vec<Event> = st
            .events()
            .iter()
            .copied()
            .filter(|e| e.time > tau && e.time <= horizon)
            .collect();
        for (i, ei) in inw.iter().enumerate() {
            for &(v, r) in &fast[i] {
                let brute: f64 = inw[..i]
                    .iter()
                    .filter(|e| e.node == v)
                    .map(|e| (-beta * (ei.time - e.time)).exp())
                    .sum();
                let err = if brute == 0.0 {
                    r.abs()
                } else {
                    (r - brute).abs() / brute
                };
                worst = worst.max(err);
            }
            let expect: Vec<usize> = (0..d).filter(|&v| mask[(ei.node, v)]).collect();
            let got: Vec<usize> = fast[i].iter().map(|p| p.0).collect();
            if expect != got {
                worst = f64::INFINITY;
            }
        }
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..2.0)).collect();
        let a = DMatrix::from_fn(d, d, |i, j| {
            if mask[(i, j)] {
                rng.gen_range(0.0..0.8 / d as f64)
            } else {
                0.0
            }
        });
        let null = HawkesParams::new(mu.clone(), a.clone(), beta).with_mask(mask.clone());
        identities &= llr_hawkes_to_hawkes(&st, &null, &a, w).unwrap() == 0.0;
        let poi = HawkesParams::new(mu, DMatrix::zeros(d, d), beta).with_mask(mask);
        identities &= llr_poisson_to_hawkes(&st, &poi, w).unwrap() == 0.0;
    }
    outcome(
        worst < 1e-10 && identities,
        format!("max relative deviation {worst:.2e} over 200 instances; llr identities exact: {identities}"),
    )
}

fn random_params(rng: &mut ChaCha8Rng, d: usize) -> HawkesParams {
    loop {
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(0.0..0.6));
        if spectral_radius(&a) < 0.8 {
            let mu = (0..d).map(|_| rng.gen_range(0.2..2.0)).collect();
            return HawkesParams::new(mu, a, rng.gen_range(0.5..3.0));
        }
    }
}

fn c4_em() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst_row = 0.0f64;
    let mut worst_drop = 0.0f64;
    for k in 0..100u64 {
        let d = rng.gen_range(1..=3);
        let truth = random_params(&mut rng, d);
        let h = rng.gen_range(20.0..80.0);
        let st = simulate_hawkes(&truth, h, SimSeed::new(42).replicate(k)).unwrap();
        let w = Window::new(rng.gen_range(0.0..h / 3.0), h).unwrap();
        let guess = truth.with_influence(DMatrix::from_fn(d, d, |_, _| rng.gen_range(0.0..0.5)));
        for row in e_step(&st, w, &guess).unwrap().rows {
            let s = row.background + row.parents.iter().map(|p| p.1).sum::<f64>();
            worst_row = worst_row.max((s - 1.0).abs());
        }
        let f = fit(
            &st,
            w,
            &guess.with_influence(EmConfig::default().cold_start(&guess.mask)),
            &EmConfig::default(),
        )
        .unwrap();
        for pair in f.loglik_trace.windows(2) {
            worst_drop = worst_drop.max(pair[0] - pair[1]);
        }
    }

    let truth = HawkesParams::scalar(10.0, 0.5, 1.0);
    let st = simulate_hawkes(&truth, 250.0, SimSeed::new(43)).unwrap();
    let w = Window::new(50.0, 250.0).unwrap();
    let n_in = st.window_events(&w).len();
    let prior = truth.with_influence(DMatrix::from_element(1, 1, 0.1));
    let alpha = fit(&st, w, &prior, &EmConfig::default()).unwrap().influence[(0, 0)];

    // Warm start at the truth on stationary windows.
    let mut at_truth: Vec<usize> = (0..20u64)
        .into_par_iter()
        .map(|k| {
            let st = simulate_hawkes(&truth, 250.0, SimSeed::new(45).replicate(k)).unwrap();
            fit(&st, w, &truth, &EmConfig::default()).unwrap().iterations
        })
        .collect();
    at_truth.sort_unstable();
    let truth_median = at_truth[at_truth.len() / 2];
    let truth_max = *at_truth.last().unwrap();

    // Warm-started refreshes of the sliding detector, for reference.
    let null = HawkesParams::scalar(1.0, 0.3, 1.0);
    let st = simulate_hawkes(&null, 2000.0, SimSeed::new(44)).unwrap();
    let cfg = DetectorConfig::new(null.clone(), Setting::HawkesToHawkes, 50.0, f64::INFINITY);
    let mut det = Detector::new(cfg).unwrap();
    let mut iters = Vec::new();
    for &e in st.events() {
        if let Some(r) = det.step(e).unwrap() {
            if e.time > 100.0 {
                iters.push(r.iterations);
            }
        }
    }
    iters.sort_unstable();
    let median = iters[iters.len() / 2];

    let pass =
        worst_row < 1e-12 && worst_drop <= 1e-9 && (0.45..=0.55).contains(&alpha) && n_in >= 2000 && truth_max <= 4;
    outcome(
        pass,
        format!(
            "row-sum err {worst_row:.1e}; max loglik drop {worst_drop:.1e}; alpha_hat {alpha:.4} on {n_in} events; \
             iterations from a warm start at the truth: median {truth_median}, max {truth_max} {at_truth:?}; \
             sliding refreshes (L=50, gamma=1): median {median}"
        ),
    )
}

/// Per-unit-time mean and variance of the window llr at the true parameters.
fn llr_moments(
    stream_params: &HawkesParams,
    null: &HawkesParams,
    alt: &DMatrix<f64>,
    setting: Setting,
    l: f64,
    windows: usize,
    seed: u64,
) -> (f64, f64) {
    let burn = 20.0;
    let st = simulate_hawkes(stream_params, burn + l * windows as f64, SimSeed::new(seed)).unwrap();
    let vals: Vec<f64> = (0..windows)
        .map(|k| {
            let w = Window::new(burn + k as f64 * l, burn + (k + 1) as f64 * l).unwrap();
            match setting {
                Setting::PoissonToHawkes => llr_poisson_to_hawkes(&st, &null.with_influence(alt.clone()), w).unwrap(),
                Setting::HawkesToHawkes => llr_hawkes_to_hawkes(&st, null, alt, w).unwrap(),
            }
        })
        .collect();
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m / l, v / l)
}

fn c5_table1() -> Outcome {
    const WINDOWS: usize = 1000;
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, q: InfoQuantities, alt_moments: (f64, f64), null_moments: (f64, f64)| {
        let errs = [
            ("I", alt_moments.0, q.i),
            ("s2", alt_moments.1, q.sigma2),
            ("I0", null_moments.0, q.i0),
            ("s02", null_moments.1, q.sigma02),
        ];
        let parts: Vec<String> = errs
            .iter()
            .map(|(n, mc, th)| {
                let e = rel(*mc, *th);
                pass &= e <= 0.10;
                format!("{n} {mc:.4}/{th:.4}{}", if e <= 0.10 { "" } else { " (off)" })
            })
            .collect();
        lines.push(format!("{name}: {}", parts.join(", ")));
    };

    // Poisson to Hawkes, d = 1.
    let null = HawkesParams::poisson(vec![10.0], 1.0);
    let alt = DMatrix::from_element(1, 1, 0.5);
    let l = 50.0;
    let q = info_poisson_to_hawkes_1d(10.0, 0.5);
    let a = llr_moments(
        &null.with_influence(alt.clone()),
        &null,
        &alt,
        Setting::PoissonToHawkes,
        l,
        WINDOWS,
        51,
    );
    let n = llr_moments(&null, &null, &alt, Setting::PoissonToHawkes, l, WINDOWS, 52);
    check("poi2haw d=1", q, a, n);

    // Hawkes to Hawkes, d = 1.
    let null = HawkesParams::scalar(10.0, 0.3, 1.0);
    let alt = DMatrix::from_element(1, 1, 0.5);
    let q = info_hawkes_to_hawkes_1d(10.0, 0.3, 0.5);
    let a = llr_moments(
        &null.with_influence(alt.clone()),
        &null,
        &alt,
        Setting::HawkesToHawkes,
        l,
        WINDOWS,
        53,
    );
    let n = llr_moments(&null, &null, &alt, Setting::HawkesToHawkes, l, WINDOWS, 54);
    check("haw2haw d=1", q, a, n);

    // Poisson to Hawkes, d = 2.
    let null = HawkesParams::poisson(vec![0.5, 0.5], 1.0);
    let alt = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, 0.2]);
    let q = info_quantities(Setting::PoissonToHawkes, &null, &alt).unwrap();
    let l = 400.0;
    let a = llr_moments(
        &null.with_influence(alt.clone()),
        &null,
        &alt,
        Setting::PoissonToHawkes,
        l,
        WINDOWS,
        55,
    );
    let n = llr_moments(&null, &null, &alt, Setting::PoissonToHawkes, l, WINDOWS, 56);
    check("poi2haw d=2", q, a, n);

    outcome(pass, format!("MC/theory over {WINDOWS} windows: {}", lines.join("; ")))
}

fn c6_threshold_accuracy() -> Outcome {
    let null = HawkesParams::poisson(vec![1.0], 1.0);
    let x = solve_threshold(
        1e3,
        10.0,
        Setting::PoissonToHawkes,
        &null,
        &IntegrationConfig::default(),
    )
    .unwrap();
    let cfg = DetectorConfig::new(null.clone(), Setting::PoissonToHawkes, 10.0, x);
    let est = estimate_arl_mc(&cfg, &null, 200, 2e4, SimSeed::new(61)).unwrap();
    outcome(
        (500.0..=2000.0).contains(&est.mean),
        format!(
            "x = {x:.4}; MC ARL {:.1} +- {:.1} over 200 runs (censored {:.1}%)",
            est.mean,
            est.std_error,
            100.0 * est.censored_fraction
        ),
    )
}

fn edd_summary(r: &BenchRow) -> String {
    format!(
        "{} x={:.3} ({:?}) EDD {:.2} +- {:.2}, detected {}/{}, discarded {}",
        r.method,
        r.threshold,
        r.threshold_source,
        r.edd.edd,
        r.edd.std_error,
        r.edd.detected,
        r.edd.replicates,
        r.edd.discarded
    )
}

fn c7_case1() -> Outcome {
    let opts = CaseOptions::default();
    let glr = run_case_preset(1, Method::Glr, &opts, 71).unwrap();
    let b1 = run_case_preset(1, Method::BinnedPoisson { bin_width: 1.0 }, &opts, 71).unwrap();
    let pass = (3.4..=7.2).contains(&glr.edd.edd) && glr.edd.edd < b1.edd.edd;
    outcome(pass, format!("{}; {}", edd_summary(&glr), edd_summary(&b1)))
}

fn c8_orderings() -> Outcome {
    // Orderings compare methods at a common false-alarm rate, so every
    // method is calibrated by Monte Carlo here.
    let opts = CaseOptions {
        primary_threshold: ThresholdSource::MonteCarlo,
        ..CaseOptions::default()
    };
    let seed = 81;
    let (p3, p4) = (case_preset(3).unwrap(), case_preset(4).unwrap());
    // Cases 3 and 4 share the null model and topology, hence the thresholds.
    let shared = p3.null_model() == p4.null_model() && p3.setting() == p4.setting();
    let methods = [
        Method::Glr,
        Method::NodewiseGlr,
        Method::BinnedPoisson {
            bin_width: opts.bin_width,
        },
    ];
    let thresholds: Vec<f64> = methods
        .iter()
        .map(|&m| preset_threshold(&p3, m, &opts, seed).unwrap().0)
        .collect();
    let run = |p: &CasePreset| -> Vec<BenchRow> {
        methods
            .iter()
            .zip(&thresholds)
            .map(|(&m, &x)| evaluate_case(p, m, x, &opts, seed).unwrap())
            .collect()
    };
    let c3 = run(&p3);
    let hi = |r: &BenchRow| r.edd.edd + 2.0 * r.edd.std_error;
    let lo = |r: &BenchRow| r.edd.edd - 2.0 * r.edd.std_error;
    let ordered = hi(&c3[0]) < lo(&c3[1]) && hi(&c3[1]) < lo(&c3[2]);
    let c4 = run(&p4);
    let rates: Vec<f64> = c4.iter().map(|r| r.edd.detection_rate()).collect();
    let structural = rates[0] >= 0.8 && rates[1] <= 0.2 && rates[2] <= 0.2;
    let c3s: Vec<String> = c3.iter().map(edd_summary).collect();
    outcome(
        shared && ordered && structural,
        format!(
            "case 3 [{}] ordered: {ordered}; case 4 detection rates glr {:.2}, baseline2 {:.2}, baseline1 {:.2}",
            c3s.join("; "),
            rates[0],
            rates[1],
            rates[2]
        ),
    )
}

fn c9_auc() -> Outcome {
    use hawkes_watch::bench::roc_auc;
    let methods = [Method::Glr, Method::BinnedPoisson { bin_width: 1.0 }];
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["A.2", "A.4"] {
        let cfg = auc_preset(name).unwrap();
        let r = roc_auc(&cfg, &methods, 91).unwrap();
        let gap = r[0].auc - r[1].auc;
        pass &= gap >= 0.05;
        parts.push(format!("{name} glr {:.3} vs baseline1 {:.3}", r[0].auc, r[1].auc));
    }
    let control = auc_preset("A.4").unwrap().control();
    let c = roc_auc(&control, &methods[..1], 92).unwrap()[0].auc;
    pass &= (c - 0.5).abs() <= 0.05;
    parts.push(format!("null control glr {c:.3}"));
    outcome(pass, parts.join("; "))
}

fn c10_nu() -> Outcome {
    let small = nu(1e-4).unwrap();
    let grid: Vec<f64> = (0..1000).map(|k| nu(10.0 * k as f64 / 999.0).unwrap()).collect();
    let monotone = grid.windows(2).all(|p| p[1] < p[0]);
    let n = Normal::new(0.0, 1.0).unwrap();
    let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let reference = (n.cdf(1.0) - 0.5) / (n.cdf(1.0) + phi1);
    let v2 = nu(2.0).unwrap();
    let pass =
        (0.999..=1.001).contains(&small) && monotone && (v2 - 0.315).abs() <= 0.001 && (v2 - reference).abs() < 1e-12;
    outcome(
        pass,
        format!("nu(1e-4) = {small:.6}; monotone on [0,10]: {monotone}; nu(2) = {v2:.6} (reference {reference:.6})"),
    )
}

fn c11_determinism() -> Outcome {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_hawkes-watch"))
            .args(["bench", "edd", "--case", "1", "--seed", "42"])
            .output()
            .expect("spawn hawkes-watch")
    };
    let a = run();
    let b = run();
    let ok = a.status.success() && b.status.success();
    let same = a.stdout == b.stdout;
    outcome(
        ok && same && !a.stdout.is_empty(),
        format!(
            "exit {:?}/{:?}; {} bytes; identical: {same}{}",
            a.status.code(),
            b.status.code(),
            a.stdout.len(),
            if ok {
                String::new()
            } else {
                format!("; stderr: {}", String::from_utf8_lossy(&a.stderr).trim())
            }
        ),
    )
}

/// Id, name, runtime budget and check.
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "stationary rate", Duration::from_secs(10), c1_stationary_rate),
        (2, "second-order decay", Duration::from_secs(60), c2_second_order),
        (3, "likelihood oracle", Duration::MAX, c3_likelihood_oracle),
        (4, "EM correctness", Duration::MAX, c4_em),
        (
            5,
            "llr moments vs information quantities",
            Duration::from_secs(120),
            c5_table1,
        ),
        (6, "threshold accuracy", Duration::from_secs(600), c6_threshold_accuracy),
        (7, "case 1 detection delay", Duration::from_secs(900), c7_case1),
        (8, "detection delay orderings", Duration::MAX, c8_orderings),
        (9, "AUC sensitivity", Duration::from_secs(600), c9_auc),
        (10, "nu function", Duration::MAX, c10_nu),
        (11, "CLI determinism", Duration::MAX, c11_determinism),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = Vec::new();
    for (id, name, limit, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took < limit;
        let pass = out.pass && in_time;
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" of {}s", limit.as_secs())
        };
        println!(
            "{} criterion {id:>2} {name}: {} [{:.1}s{budget}{}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        // Unmet criteria are reported, not hidden; a strict run turns them
        // into a failing exit status.
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
