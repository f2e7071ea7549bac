//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criteria needing a dataset look for it in `$MLCONSTRAIN_DATA_DIR`, else in
//! the workspace `data/` directory, and skip when it is absent.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use constrained_mlm::constraints::{parse_hypothesis, Hypothesis, ValidatedHypothesis};
use constrained_mlm::data::TwoLevelDataset;
use constrained_mlm::distributions::{
    sample_inv_wishart, sample_scaled_inv_chisq, sample_truncnormal, RngStream, SpdMatrix,
    PRIOR_STREAM,
};
use constrained_mlm::gibbs::{
    default_prior, run_chain, ChainConfig, EncompassingPrior, SampleStore,
};
use constrained_mlm::selection::{compute_pmps, posterior_proportions, prior_proportions};
use constrained_mlm::summary::summarize;
use constrained_mlm::workflow::{cmd_fit, cmd_select, FitOutcome, RunConfig, SelectOutcome};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> PathBuf {
    std::env::var_os("MLCONSTRAIN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace().join("data"))
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("b{i}")).collect()
}

fn validated(name: &str, text: &str, p: usize) -> ValidatedHypothesis {
    parse_hypothesis(name, text)
        .unwrap()
        .validate(&names(p))
        .unwrap()
}

fn exchangeable(p: usize, mean: f64) -> EncompassingPrior {
    EncompassingPrior {
        beta_means: vec![mean; p],
        beta_vars: vec![1e4; p],
        sigma2_df: 1.0,
        sigma2_scale: 1.0,
        v_df: 3.0,
        v_scale: SpdMatrix::identity(2),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_1() -> Outcome {
    let mut rng = RngStream::new(2024, PRIOR_STREAM);
    let three = [
        Hypothesis::encompassing("H1").validate(&names(3)).unwrap(),
        validated("pair", "b1 > b2", 3),
        validated("order", "b1 > b2 > b3", 3),
    ];
    let est = prior_proportions(&exchangeable(3, 0.0), &three, 1_000_000, &mut rng).unwrap();
    let (pair, order) = (est[1].proportion, est[2].proportion);

    let seven = [validated("neg", "b7 < 0", 7)];
    let est = prior_proportions(&exchangeable(7, 12.75), &seven, 1_000_000, &mut rng).unwrap();
    let neg = est[0].proportion;
    let oracle = Normal::new(12.75, 100.0).unwrap().cdf(0.0);

    let ok = (pair - 0.5).abs() <= 0.005
        && (order - 1.0 / 6.0).abs() <= 0.005
        && (neg - oracle).abs() <= 0.005
        && (oracle - 0.4493).abs() < 5e-5;
    verdict(
        ok,
        format!(
            "P(b1>b2) = {pair:.4} (0.5), P(b1>b2>b3) = {order:.4} (0.1667), \
             P(b7<0) = {neg:.4} ({oracle:.4})"
        ),
    )
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(-1, 1).
fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = (x + 1.0) / 2.0;
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let mut rng = RngStream::new(7, 3);
    let n = 1_000_000;

    let half: Vec<f64> = (0..n)
        .map(|_| sample_truncnormal(0.0, 1.0, 0.0, f64::INFINITY, &mut rng).unwrap())
        .collect();
    let half_target = (2.0 / std::f64::consts::PI).sqrt();
    let half_err = (mean(&half) - half_target).abs() / half_target;

    let chisq: Vec<f64> = (0..n)
        .map(|_| sample_scaled_inv_chisq(10.0, 2.0, &mut rng).unwrap())
        .collect();
    let chisq_err = (mean(&chisq) - 2.5).abs() / 2.5;

    let id = SpdMatrix::identity(2);
    let m = 200_000;
    let mut sum = DMatrix::<f64>::zeros(2, 2);
    for _ in 0..m {
        sum += sample_inv_wishart(10.0, &id, &mut rng).unwrap().matrix();
    }
    let iw_mean = sum / m as f64;
    let target = 1.0 / 7.0;
    let iw_err = iw_mean
        .iter()
        .zip(DMatrix::<f64>::identity(2, 2).iter())
        .map(|(a, b)| (a - b * target).abs() / target)
        .fold(0.0, f64::max);

    let corr: Vec<f64> = (0..100_000)
        .map(|_| {
            let v = sample_inv_wishart(3.0, &id, &mut rng).unwrap().into_inner();
            v[(0, 1)] / (v[(0, 0)] * v[(1, 1)]).sqrt()
        })
        .collect();
    let ks = ks_uniform(corr);

    let ok = half_err < 0.01 && chisq_err < 0.01 && iw_err < 0.02 && ks < 0.01;
    verdict(
        ok,
        format!(
            "half-normal rel err {half_err:.4}, scaled-inv-chi2 rel err {chisq_err:.4}, \
             inverse-Wishart rel err {iw_err:.4}, correlation KS {ks:.4}"
        ),
    )
}

struct Truth {
    beta: Vec<f64>,
    sigma2: f64,
}

/// Two-level data with `P = 4` fixed columns (intercept, pupil covariate,
/// group covariate, their product) and random intercepts and slopes.
fn synthetic(
    groups: usize,
    size: usize,
    truth: &Truth,
    v: [[f64; 2]; 2],
    seed: u64,
) -> TwoLevelDataset {
    let mut rng = RngStream::new(seed, 77);
    let n = groups * size;
    let l11 = v[0][0].sqrt();
    let l21 = v[1][0] / l11;
    let l22 = (v[1][1] - l21 * l21).sqrt();
    let mut x = DMatrix::zeros(n, 4);
    let mut z = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    let mut group = Vec::with_capacity(n);
    for j in 0..groups {
        let w: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let u = [l11 * e1, l21 * e1 + l22 * e2];
        for i in 0..size {
            let k = j * size + i;
            let xk: f64 = rng.sample(StandardNormal);
            let row = [1.0, xk, w, xk * w];
            for (c, r) in row.iter().enumerate() {
                x[(k, c)] = *r;
            }
            z[(k, 0)] = 1.0;
            z[(k, 1)] = xk;
            let xb: f64 = row.iter().zip(&truth.beta).map(|(a, b)| a * b).sum();
            let e: f64 = rng.sample(StandardNormal);
            y[k] = xb + u[0] + u[1] * xk + truth.sigma2.sqrt() * e;
            group.push(j);
        }
    }
    TwoLevelDataset::new(y, x, z, group, names(4), vec!["u1".into(), "u2".into()]).unwrap()
}

fn criterion_3() -> Outcome {
    let truth = Truth {
        beta: vec![1.0, 0.5, -0.7, 0.3],
        sigma2: 1.0,
    };
    let v = [[0.5, 0.1], [0.1, 0.2]];
    let open = Hypothesis::encompassing("H1").validate(&names(4)).unwrap();
    let (mut covered, mut total) = (0, 0);
    for rep in 0..20 {
        let d = synthetic(50, 20, &truth, v, 1000 + rep);
        let store = run_chain(
            &d,
            &default_prior(&d),
            &open,
            &ChainConfig::new(4000, 1000, rep),
        )
        .unwrap();
        let s = summarize(&store).unwrap();
        let targets = truth.beta.iter().chain(std::iter::once(&truth.sigma2));
        for (row, t) in s.iter().zip(targets) {
            total += 1;
            if row.cci_low <= *t && *t <= row.cci_high {
                covered += 1;
            }
        }
    }
    let rate = covered as f64 / total as f64;
    verdict(
        rate >= 0.9,
        format!("{covered}/{total} intervals cover the truth ({rate:.2})"),
    )
}

fn all_satisfy(store: &SampleStore, h: &ValidatedHypothesis) -> bool {
    store.beta_rows().all(|row| h.satisfies(row))
}

fn criterion_4(hsb_fit: Option<&FitOutcome>, hsb_h5: Option<&ValidatedHypothesis>) -> Outcome {
    let truth = Truth {
        beta: vec![1.0, 0.5, -0.7, 0.3],
        sigma2: 1.0,
    };
    let d = synthetic(30, 10, &truth, [[0.5, 0.1], [0.1, 0.2]], 42);
    let prior = default_prior(&d);
    let texts = [
        "b1 > b2",
        "b2 > b1",
        "b3 > 0",
        "b1 > b2 > b4 > b3",
        "b3 > b4, b2 < 0.2",
        "b1 > 2, b4 < -1",
    ];
    let mut draws = 0;
    let mut bad = Vec::new();
    for (k, t) in texts.iter().enumerate() {
        let h = validated(&format!("C{k}"), t, 4);
        let mut cfg = ChainConfig::new(2000, 200, 9 + k as u64);
        cfg.chains = 2;
        let store = run_chain(&d, &prior, &h, &cfg).unwrap();
        draws += store.len();
        if !all_satisfy(&store, &h) {
            bad.push(t.to_string());
        }
    }
    let mut fits = texts.len();
    if let (Some(fit), Some(h)) = (hsb_fit, hsb_h5) {
        fits += 1;
        draws += fit.store.len();
        if !all_satisfy(&fit.store, h) {
            bad.push(h.name().to_string());
        }
    }
    verdict(
        bad.is_empty(),
        format!("{fits} constrained fits, {draws} stored draws, violations in: {bad:?}"),
    )
}

fn criterion_5(hsb: Option<&SelectOutcome>) -> Outcome {
    let truth = Truth {
        beta: vec![1.0, 0.5, -0.7, 0.3],
        sigma2: 1.0,
    };
    let d = synthetic(30, 10, &truth, [[0.5, 0.1], [0.1, 0.2]], 5);
    let prior = default_prior(&d);
    let hyps = [
        Hypothesis::encompassing("H1").validate(&names(4)).unwrap(),
        validated("H2", "b1 > b2", 4),
        validated("H3", "b3 < 0", 4),
        validated("H4", "b1 > b2, b3 < 0", 4),
        validated("H5", "b1 > b2, b3 < 0, b4 > b3", 4),
        validated("H6", "b1 > b2 > b4 > b3", 4),
    ];
    // (subset, superset) pairs by index
    let nested = [(1, 0), (2, 0), (3, 1), (3, 2), (4, 3), (5, 4)];
    let store = run_chain(&d, &prior, &hyps[0], &ChainConfig::new(20_000, 1000, 3)).unwrap();
    let mut rng = RngStream::new(3, PRIOR_STREAM);
    let pri = prior_proportions(&prior, &hyps, 200_000, &mut rng).unwrap();
    let post = posterior_proportions(&store, &hyps).unwrap();
    let report = compute_pmps(&pri, &post, None).unwrap();

    let mut problems = Vec::new();
    let sum: f64 = report.pmps().iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        problems.push(format!("synthetic PMP sum {sum}"));
    }
    if report.rows[0].bf != 1.0 {
        problems.push(format!("synthetic encompassing BF {}", report.rows[0].bf));
    }
    for &(sub, sup) in &nested {
        for (label, est) in [("prior", &pri), ("posterior", &post)] {
            if est[sub].proportion > est[sup].proportion {
                problems.push(format!(
                    "{label} {} above {}",
                    est[sub].hypothesis, est[sup].hypothesis
                ));
            }
        }
    }
    if let Some(sel) = hsb {
        let sum: f64 = sel.report.pmps().iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            problems.push(format!("school PMP sum {sum}"));
        }
        if sel.report.row("H1").map(|r| r.bf) != Some(1.0) {
            problems.push("school encompassing BF".into());
        }
        // H5 and H6 lie in H4, which lies in both H2 and H3
        for (sub, sup) in [("H4", "H2"), ("H4", "H3"), ("H5", "H4"), ("H6", "H4")] {
            let (a, b) = (sel.report.row(sub).unwrap(), sel.report.row(sup).unwrap());
            if a.prior_prop > b.prior_prop || a.post_prop > b.post_prop {
                problems.push(format!("school {sub} above {sup}"));
            }
        }
    }
    verdict(
        problems.is_empty(),
        format!(
            "PMP sum {sum:.15}, encompassing BF {}, {} nesting checks{}; problems: {problems:?}",
            report.rows[0].bf,
            nested.len() * 2,
            if hsb.is_some() {
                " plus school data"
            } else {
                ""
            }
        ),
    )
}

const TABLE1: [(&str, f64); 6] = [
    ("H1", 0.059),
    ("H2", 0.117),
    ("H3", 0.118),
    ("H4", 0.235),
    ("H5", 0.471),
    ("H6", 0.0),
];

const TABLE2_BETA: [(&str, f64); 7] = [
    ("cat", 14.33),
    ("pub", 12.67),
    ("mses", 4.18),
    ("cat_ses", 1.16),
    ("pub_ses", 2.64),
    ("mses_ses", 0.98),
    ("min", -2.76),
];

fn summary_mean(rows: &[constrained_mlm::summary::ParameterSummary], name: &str) -> f64 {
    rows.iter().find(|r| r.name == name).unwrap().mean
}

struct SchoolRun {
    select: SelectOutcome,
    fit: FitOutcome,
    seconds: f64,
}

fn school_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&workspace().join("configs/hsb.toml")).unwrap();
    cfg.data.path = data_dir().join("hsb.csv");
    cfg.output.dir = out.to_path_buf();
    cfg
}

fn school_run(out: &Path) -> SchoolRun {
    let started = Instant::now();
    let cfg = school_config(out);
    let (select, _) = cmd_select(&cfg).unwrap();
    let (fit, _) = cmd_fit(&cfg, Some("H5")).unwrap();
    SchoolRun {
        select,
        fit,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn criterion_6(run: &SchoolRun) -> Outcome {
    let report = &run.select.report;
    let mut problems = Vec::new();
    let mut pmps = Vec::new();
    for (h, want) in TABLE1 {
        let got = report.row(h).unwrap().pmp;
        pmps.push(format!("{h} {got:.3}/{want:.3}"));
        if (got - want).abs() > 0.03 {
            problems.push(format!("{h} PMP {got:.4}"));
        }
    }
    let best = report
        .rows
        .iter()
        .max_by(|a, b| a.pmp.total_cmp(&b.pmp))
        .unwrap();
    if best.hypothesis != "H5" {
        problems.push(format!("maximum PMP at {}", best.hypothesis));
    }
    if report.row("H6").unwrap().pmp > 0.005 {
        problems.push("H6 PMP above 0.005".into());
    }
    let s = &run.fit.summaries;
    let mut worst_beta: f64 = 0.0;
    for (name, want) in TABLE2_BETA {
        let d = (summary_mean(s, name) - want).abs();
        worst_beta = worst_beta.max(d);
        if d > 0.15 {
            problems.push(format!("{name} mean {:.3}", summary_mean(s, name)));
        }
    }
    let sigma2 = summary_mean(s, "sigma2");
    if (sigma2 - 35.88).abs() > 0.6 {
        problems.push(format!("sigma2 mean {sigma2:.3}"));
    }
    verdict(
        problems.is_empty(),
        format!(
            "PMP got/paper: {}; largest beta deviation {worst_beta:.3}; sigma2 {sigma2:.2} (35.88); \
             Var(u1) {:.2} (1.99), Var(u2) {:.2} (0.24); {:.0}s; problems: {problems:?}",
            pmps.join(", "),
            summary_mean(s, "Var(u1)"),
            summary_mean(s, "Var(u2)"),
            run.seconds
        ),
    )
}

const TABLE3: [(&str, f64); 4] = [("H1", 0.208), ("H2", 0.416), ("H3", 0.0), ("H4", 0.375)];

const TABLE4: [(&str, f64); 10] = [
    ("coa", 0.97),
    ("ncoa", 0.39),
    ("speer", 1.01),
    ("coa_t", 0.43),
    ("ncoa_t", 0.45),
    ("t_speer", -0.35),
    ("Var(u1)", 0.27),
    ("Cov(u1,u2)", -0.01),
    ("Var(u2)", 0.18),
    ("sigma2", 0.35),
];

fn criterion_7() -> Outcome {
    let path = data_dir().join("alcohol.csv");
    if !path.exists() {
        return Outcome::Skip(format!(
            "{} not found; see scripts/fetch_data.py for how to obtain it",
            path.display()
        ));
    }
    let started = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&workspace().join("configs/alcohol.toml")).unwrap();
    cfg.data.path = path;
    cfg.output.dir = out.path().to_path_buf();
    let (sel, _) = cmd_select(&cfg).unwrap();
    let (fit, _) = cmd_fit(&cfg, Some("H2")).unwrap();

    let mut problems = Vec::new();
    for (h, want) in TABLE3 {
        let got = sel.report.row(h).unwrap().pmp;
        if (got - want).abs() > 0.03 {
            problems.push(format!("{h} PMP {got:.4}"));
        }
    }
    let best = sel
        .report
        .rows
        .iter()
        .max_by(|a, b| a.pmp.total_cmp(&b.pmp))
        .unwrap();
    if best.hypothesis != "H2" {
        problems.push(format!("maximum PMP at {}", best.hypothesis));
    }
    if sel.report.row("H3").unwrap().pmp > 0.005 {
        problems.push("H3 PMP above 0.005".into());
    }
    for (name, want) in TABLE4 {
        let got = summary_mean(&fit.summaries, name);
        if (got - want).abs() > 0.08 {
            problems.push(format!("{name} mean {got:.3}"));
        }
    }
    let diff = &fit.derived[0];
    if (diff.mean - 0.58).abs() > 0.06
        || (diff.cci_low - 0.28).abs() > 0.08
        || (diff.cci_high - 0.88).abs() > 0.08
    {
        problems.push(format!(
            "coa - ncoa {:.3} ({:.3}, {:.3})",
            diff.mean, diff.cci_low, diff.cci_high
        ));
    }
    let peer = summary_mean(&fit.original_units, "speer");
    let inter = summary_mean(&fit.original_units, "t_speer");
    if (peer - 0.69).abs() > 0.05 {
        problems.push(format!("peer slope {peer:.3}"));
    }
    if (inter + 0.15).abs() > 0.05 {
        problems.push(format!("peer by age {inter:.3}"));
    }
    verdict(
        problems.is_empty(),
        format!(
            "coa - ncoa {:.2} ({:.2}, {:.2}); peer {peer:.2}; interaction {inter:.2}; {:.0}s; problems: {problems:?}",
            diff.mean,
            diff.cci_low,
            diff.cci_high,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_8(a: &Path, b: &Path) -> Outcome {
    let mut compared = 0;
    let mut differing = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    entries.sort();
    for name in entries {
        let name = name.to_string_lossy().into_owned();
        // manifests record wall time
        if name.starts_with("manifest_") {
            continue;
        }
        compared += 1;
        let same = fs::read(a.join(&name)).ok() == fs::read(b.join(&name)).ok();
        if !same {
            differing.push(name);
        }
    }
    verdict(
        differing.is_empty() && compared > 0,
        format!("{compared} output files compared byte for byte; differing: {differing:?}"),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::Fail(format!("panicked: {msg}"))
        }
    }
}

fn report(k: usize, outcome: &Outcome, seconds: f64) -> bool {
    let (tag, detail, ok) = match outcome {
        Outcome::Pass(d) => ("PASS", d, true),
        Outcome::Fail(d) => ("FAIL", d, false),
        Outcome::Skip(d) => ("SKIP", d, true),
    };
    println!("criterion {k}: {tag} [{seconds:.1}s] {detail}");
    ok
}

fn main() -> ExitCode {
    let mut ok = true;
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = guarded(f);
        (o, t.elapsed().as_secs_f64())
    };

    for (k, f) in [
        (1, criterion_1 as fn() -> Outcome),
        (2, criterion_2),
        (3, criterion_3),
    ] {
        let (o, s) = timed(&f);
        ok &= report(k, &o, s);
    }

    let hsb_present = data_dir().join("hsb.csv").exists();
    let dirs = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let started = Instant::now();
    let runs = if hsb_present {
        std::thread::scope(|s| {
            let first = s.spawn(|| catch_unwind(AssertUnwindSafe(|| school_run(dirs.0.path()))));
            let second = s.spawn(|| catch_unwind(AssertUnwindSafe(|| school_run(dirs.1.path()))));
            Some((first.join().unwrap(), second.join().unwrap()))
        })
    } else {
        None
    };
    let school_seconds = started.elapsed().as_secs_f64();
    let school = runs.as_ref().and_then(|(a, _)| a.as_ref().ok());
    let h5 = school.map(|_| {
        let cfg = school_config(dirs.0.path());
        let d = constrained_mlm::workflow::prepare(&cfg).unwrap();
        d.hypothesis("H5").unwrap().clone()
    });

    let (o, s) = timed(&|| criterion_4(school.map(|r| &r.fit), h5.as_ref()));
    ok &= report(4, &o, s);
    let (o, s) = timed(&|| criterion_5(school.map(|r| &r.select)));
    ok &= report(5, &o, s);

    let missing = || {
        Outcome::Skip(format!(
            "{} not found; run scripts/fetch_data.py",
            data_dir().join("hsb.csv").display()
        ))
    };
    let o6 = match &runs {
        None => missing(),
        Some((Err(_), _)) => Outcome::Fail("school run panicked".into()),
        Some((Ok(run), _)) => guarded(|| criterion_6(run)),
    };
    ok &= report(6, &o6, school.map_or(0.0, |r| r.seconds));

    let (o, s) = timed(&criterion_7);
    ok &= report(7, &o, s);

    let o8 = match &runs {
        None => missing(),
        Some((Ok(_), Ok(_))) => guarded(|| criterion_8(dirs.0.path(), dirs.1.path())),
        _ => Outcome::Fail("school run panicked".into()),
    };
    ok &= report(8, &o8, school_seconds);

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
