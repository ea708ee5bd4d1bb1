//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the criteria share the
//! scenarios they generate. Exits non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use floodrisk_core::data_model::{assemble_features, Column, ColumnData, IndicatorEncoding, LayerTag, RowKey, TriClass};
use floodrisk_core::geo::{wctrii, WctriiThresholds};
use floodrisk_core::glm::{chi2_log10_sf, fit_glm, likelihood_ratio_test, score, WeightScheme};
use floodrisk_core::metrics::{csi_at, csi_sweep, gini, logloss};
use floodrisk_core::pipeline::Evaluation;
use floodrisk_core::synthetic::generate;
use floodrisk_core::tail::{excesses, fit_gpd, kmeans_1d, GpdMethod, TailAnalysis, TailConfig};
use floodrisk_core::{Family, FeatureBundle, FeatureTable, FitOptions, Layer, ModelSpec, Scenario, ScenarioConfig, Task, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Scenario plus the pipeline's features for it.
struct Prepared {
    scenario: Scenario,
    bundle: FeatureBundle,
    feature_time: Duration,
}

fn prepare(profile: &str, seed: u64) -> Prepared {
    let cfg = ScenarioConfig::profile(profile, seed).expect("profile");
    let scenario = generate(&cfg).expect("scenario");
    let t = Instant::now();
    let bundle = FeatureBundle::compute(&scenario.portfolio, &scenario.grid, Some(&scenario.layers), &Default::default()).expect("features");
    Prepared {
        scenario,
        bundle,
        feature_time: t.elapsed(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_1(ci: &Prepared) -> Outcome {
    let truth = &ci.scenario.truth;
    let ind = &ci.bundle.indicators;
    let mut worst: f64 = 0.0;
    let mut bad = 0usize;
    for a in &truth.ann_milre {
        match ind.annual_value(&a.building_id, a.year) {
            Some(v) if (v - a.ann_milre).abs() <= 1e-12 => worst = worst.max((v - a.ann_milre).abs()),
            _ => bad += 1,
        }
    }
    for m in &truth.milre {
        match ind.event_value(&m.building_id, m.flood_date) {
            Some(v) if (v - m.milre).abs() <= 1e-12 => worst = worst.max((v - m.milre).abs()),
            _ => bad += 1,
        }
    }
    let secs = ci.feature_time.as_secs_f64();
    outcome(
        bad == 0 && secs < 300.0,
        format!(
            "{} policy-years + {} claims, {bad} mismatches, max |diff| {worst:e}, features in {secs:.1}s",
            truth.ann_milre.len(),
            truth.milre.len()
        ),
    )
}

fn criterion_2(ci: &Prepared) -> Outcome {
    let ind = &ci.bundle.indicators;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for p in &ci.scenario.portfolio.policies {
        let v = ind.annual_value(&p.building_id, p.year).expect("annual indicator");
        if p.claim_nb > 0 {
            pos.push(v);
        } else {
            neg.push(v);
        }
    }
    let gap = median(pos) - median(neg);
    let threshold = ci.scenario.config.separation_threshold;
    outcome(gap >= threshold, format!("median gap {gap:.4} (threshold {threshold})"))
}

fn criterion_3(ci: &Prepared) -> Outcome {
    let analysis = TailAnalysis::run(&ci.scenario.grid, &TailConfig::default()).expect("tail analysis");
    let mut pass = true;
    let mut parts = Vec::new();
    let mut mean_score = BTreeMap::new();
    for regime in ["south", "north"] {
        let mut pooled = Vec::new();
        let mut scores = Vec::new();
        let mut xi_true = f64::NAN;
        for (k, r) in ci.scenario.truth.regimes.iter().enumerate() {
            if r.regime != regime {
                continue;
            }
            xi_true = r.xi;
            let fit = &analysis.fits[k];
            pooled.extend(excesses(&ci.scenario.grid.points()[k].series, fit.threshold));
            scores.push(analysis.scores[k].score);
        }
        let fit = fit_gpd(&pooled, GpdMethod::Mle, 50).expect("pooled fit");
        let ok = pooled.len() >= 50_000 && (fit.shape - xi_true).abs() <= 0.05;
        pass &= ok;
        mean_score.insert(regime, scores.iter().sum::<f64>() / scores.len() as f64);
        parts.push(format!("{regime}: xi_hat {:.4} vs {xi_true} on {} exceedances", fit.shape, pooled.len()));
    }
    let ordered = mean_score["south"] > mean_score["north"];
    parts.push(format!("mean score south {:.1} > north {:.1}", mean_score["south"], mean_score["north"]));
    outcome(pass && ordered, parts.join("; "))
}

/// Exact comparison key for a partition of values `m / 1024`: the sum over
/// clusters of `S^2 / n` (larger is better; WCSS = sum of squares minus it),
/// returned as a fraction over the lcm of the cluster sizes.
fn between_score(m: &[u64], assignment: &[usize]) -> (u128, u128) {
    let mut groups: BTreeMap<usize, (u128, u128)> = BTreeMap::new();
    for (v, &c) in m.iter().zip(assignment) {
        let e = groups.entry(c).or_default();
        e.0 += *v as u128;
        e.1 += 1;
    }
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let lcm = groups.values().fold(1u128, |l, g| l / gcd(l, g.1) * g.1);
    let num = groups.values().map(|(s, n)| s * s * (lcm / n)).sum();
    (num, lcm)
}

/// Textbook O(k n^2) dynamic program on sorted values.
fn dp_partition(x: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let s: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let n = s.len();
    let (mut p1, mut p2) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    for i in 0..n {
        p1[i + 1] = p1[i] + s[i];
        p2[i + 1] = p2[i] + s[i] * s[i];
    }
    let cost = |a: usize, b: usize| {
        let c = (b - a) as f64;
        let t = p1[b] - p1[a];
        p2[b] - p2[a] - t * t / c
    };
    let k = k.min(n);
    let mut d = vec![vec![f64::INFINITY; n + 1]; k + 1];
    let mut arg = vec![vec![0usize; n + 1]; k + 1];
    d[0][0] = 0.0;
    for c in 1..=k {
        for j in c..=n {
            for i in c - 1..j {
                let v = d[c - 1][i] + cost(i, j);
                if v < d[c][j] {
                    d[c][j] = v;
                    arg[c][j] = i;
                }
            }
        }
    }
    let mut assignment = vec![0; n];
    let mut j = n;
    for c in (1..=k).rev() {
        let i = arg[c][j];
        for &idx in &order[i..j] {
            assignment[idx] = c - 1;
        }
        j = i;
    }
    assignment
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=500);
        let k = rng.random_range(1..=8);
        let spread = *[64u64, 1024, 65_536].get(rng.random_range(0..3)).unwrap();
        let m: Vec<u64> = (0..n).map(|_| rng.random_range(0..spread)).collect();
        let x: Vec<f64> = m.iter().map(|&v| v as f64 / 1024.0).collect();
        let got = kmeans_1d(&x, k).expect("kmeans");
        let oracle = dp_partition(&x, k);
        let (a, la) = between_score(&m, &got.assignment);
        let (b, lb) = between_score(&m, &oracle);
        if a * lb != b * la {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures}/100 instances differ from the DP optimum (exact rational comparison)"))
}

fn numeric(name: &str, v: Vec<f64>) -> Column {
    Column {
        name: name.into(),
        tag: LayerTag::Ins,
        data: ColumnData::Numeric(v),
    }
}

fn plain_table(task: Task, columns: Vec<Column>, target: Vec<f64>) -> FeatureTable {
    let n = target.len();
    FeatureTable {
        task,
        keys: (0..n)
            .map(|i| RowKey {
                policy_id: format!("P{i}"),
                building_id: format!("B{i}"),
                municipality_code: "M0".into(),
                year: 2020,
                flood_date: None,
            })
            .collect(),
        columns,
        target,
        exposure: vec![1.0; n],
    }
}

/// Mean weighted Bernoulli log-likelihood at `beta` for columns (1, x1, x2, g=b, g=c).
fn mean_loglik(rows: &[[f64; 5]], y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    let mut wsum = 0.0;
    for i in 0..y.len() {
        let eta: f64 = rows[i].iter().zip(beta).map(|(a, b)| a * b).sum();
        // log sigmoid and log(1 - sigmoid) in stable form.
        let lp = -(1.0 + (-eta).exp()).ln();
        let lq = -(1.0 + eta.exp()).ln();
        ll += w[i] * (y[i] * lp + (1.0 - y[i]) * lq);
        wsum += w[i];
    }
    ll / wsum
}

fn criterion_5() -> Outcome {
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = [-6.4, 0.5, -0.3, 0.4, -0.2];
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b = f64::from(u8::from(rng.random::<f64>() < 0.4));
        let u = rng.random::<f64>();
        let level = if u < 0.6 { "a" } else if u < 0.8 { "b" } else { "c" };
        let row = [1.0, a, b, f64::from(u8::from(level == "b")), f64::from(u8::from(level == "c"))];
        let eta: f64 = row.iter().zip(&truth).map(|(r, t)| r * t).sum();
        y.push(f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))));
        x1.push(a);
        x2.push(b);
        g.push(level);
        rows.push(row);
    }
    let n1 = y.iter().filter(|v| **v == 1.0).count() as f64;
    let (w0, w1) = (n as f64 / (2.0 * (n as f64 - n1)), n as f64 / (2.0 * n1));
    let mut expected = truth;
    // Class weighting shifts only the intercept, by ln(w1 / w0).
    expected[0] += (w1 / w0).ln();
    let table = plain_table(
        Task::Occurrence,
        vec![numeric("x1", x1), numeric("x2", x2), Column {
            name: "g".into(),
            tag: LayerTag::Ins,
            data: ColumnData::categorical(&g),
        }],
        y.clone(),
    );
    let spec = ModelSpec {
        weight_scheme: WeightScheme::ClassBalanced,
        ..ModelSpec::new(Family::BernoulliLogit, vec![Term::main("x1"), Term::main("x2"), Term::main("g")])
    };
    let (model, design) = fit_glm(&table, &spec, None, &FitOptions::default()).expect("fit");
    let names = ["(Intercept)", "x1", "x2", "g=b", "g=c"];
    let by_name: BTreeMap<&str, (f64, f64)> = model.coefficients.iter().map(|c| (c.name.as_str(), (c.beta, c.std_error))).collect();
    let mut worst_z: f64 = 0.0;
    let mut beta = Vec::new();
    for (name, t) in names.iter().zip(&expected) {
        let (b, se) = by_name.get(name).copied().unwrap_or((f64::NAN, f64::NAN));
        worst_z = worst_z.max(((b - t) / se).abs());
        beta.push(b);
    }
    let w: Vec<f64> = y.iter().map(|v| if *v == 1.0 { w1 } else { w0 }).collect();
    let wsum: f64 = w.iter().sum();
    let cols: Vec<usize> = names.iter().map(|nm| design.names.iter().position(|d| d == nm).expect("design column")).collect();
    let analytic: Vec<f64> = score(&design, &cols, &beta, &y, &w, Family::BernoulliLogit).iter().map(|g| g / wsum).collect();
    let h = 1e-5;
    let mut fd_gap: f64 = 0.0;
    let mut grad_max: f64 = 0.0;
    for j in 0..beta.len() {
        let (mut up, mut dn) = (beta.clone(), beta.clone());
        up[j] += h;
        dn[j] -= h;
        let fd = (mean_loglik(&rows, &y, &w, &up) - mean_loglik(&rows, &y, &w, &dn)) / (2.0 * h);
        fd_gap = fd_gap.max((fd - analytic[j]).abs());
        grad_max = grad_max.max(analytic[j].abs()).max(fd.abs());
    }
    let null = ModelSpec {
        weight_scheme: WeightScheme::ClassBalanced,
        ..ModelSpec::new(Family::BernoulliLogit, vec![])
    };
    let (intercept_only, _) = fit_glm(&table, &null, None, &FitOptions::default()).expect("intercept-only fit");
    let b0 = intercept_only.coefficients[0].beta;
    outcome(
        worst_z <= 3.0 && grad_max < 1e-6 && fd_gap < 1e-6 && b0.abs() <= 1e-8 && model.converged,
        format!(
            "{} positives; max |beta_hat - beta| / SE {worst_z:.2}; max |gradient| {grad_max:.1e}; FD gap {fd_gap:.1e}; weighted intercept-only beta0 {b0:.1e}",
            n1
        ),
    )
}

fn criterion_6(small_dummy_gini: &[f64]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut notes = Vec::new();
    // Dummy Gini: constant predictions, both on random data and on the evaluation runs.
    let mut dummy_ok = small_dummy_gini.iter().all(|g| *g == 0.0);
    for _ in 0..100 {
        let n = rng.random_range(2..300);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1000.0 + 1.0).collect();
        dummy_ok &= gini(&y, &vec![rng.random::<f64>(); n], None).expect("gini") == 0.0;
    }
    notes.push(format!("dummy gini 0: {dummy_ok}"));

    let mut dev_gap: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..2000);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.999)).collect();
        let mut y: Vec<f64> = p.iter().map(|&q| f64::from(u8::from(rng.random::<f64>() < q))).collect();
        y[0] = 1.0;
        let dev = floodrisk_core::glm::deviance(Family::BernoulliLogit, &y, &p, None).expect("deviance");
        let ll = logloss(&y, &p).expect("logloss");
        dev_gap = dev_gap.max((dev - 2.0 * n as f64 * ll).abs() / dev);
    }
    notes.push(format!("deviance vs 2n*logloss rel gap {dev_gap:.1e}"));

    let mut csi_bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(5..200);
        let p: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 100.0).round() / 100.0).collect();
        let mut y: Vec<f64> = p.iter().map(|&q| f64::from(u8::from(rng.random::<f64>() < q))).collect();
        y[0] = 1.0;
        let best = csi_sweep(&y, &p).expect("sweep").csi;
        let grid_best = (0..=1000)
            .map(|t| {
                let t = t as f64 / 1000.0;
                let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
                for (yi, pi) in y.iter().zip(&p) {
                    match (*yi == 1.0, *pi >= t) {
                        (true, true) => tp += 1.0,
                        (false, true) => fp += 1.0,
                        (true, false) => fn_ += 1.0,
                        _ => {}
                    }
                }
                tp / (tp + fp + fn_)
            })
            .fold(0.0, f64::max);
        let at = csi_at(&y, &p, csi_sweep(&y, &p).unwrap().threshold).unwrap().csi;
        if best < grid_best || at != best {
            csi_bad += 1;
        }
    }
    notes.push(format!("csi sweep below grid oracle on {csi_bad}/1000"));

    let mut gini_bad = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..500);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0..200) as f64 / 100.0).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.3 { rng.random::<f64>() * 10.0 } else { 0.0 }).collect();
        let mut y = y;
        y[0] += 1.0;
        let base = gini(&y, &p, None).unwrap();
        let transforms: [fn(f64) -> f64; 3] = [|v| v.exp(), |v| v * v * v + 5.0 * v, |v| (v + 0.5).ln()];
        if transforms.iter().any(|f| gini(&y, &p.iter().map(|v| f(*v)).collect::<Vec<_>>(), None).unwrap() != base) {
            gini_bad += 1;
        }
    }
    notes.push(format!("gini changed under monotone transforms on {gini_bad}/100"));
    outcome(dummy_ok && dev_gap <= 1e-12 && csi_bad == 0 && gini_bad == 0, notes.join("; "))
}

fn nested_ok(devs: &[f64]) -> bool {
    devs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10))
}

fn layer_devs(ev: &Evaluation) -> Vec<f64> {
    ev.runs.iter().filter(|r| r.layer.is_some()).map(|r| r.train_deviance).collect()
}

fn criterion_7(small: &[Prepared], ci: &Prepared, dummy_gini: &mut Vec<f64>) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (seed, p) in small.iter().enumerate() {
        let sources = p.bundle.sources(IndicatorEncoding::Continuous);
        for task in [Task::Occurrence, Task::Severity] {
            let table = assemble_features(&p.scenario.portfolio, &sources, task, Layer::All).expect("table");
            let ev = Evaluation::run(&table, &Layer::ALL, 5, seed as u64 + 1, &FitOptions::default()).expect("evaluation");
            let devs = layer_devs(&ev);
            let nested = nested_ok(&devs) && ev.converged();
            pass &= nested;
            if let Some(d) = ev.run_named("Dummy") {
                dummy_gini.push(d.report.gini);
            }
            let mut line = format!("seed {} {task}: nested {nested}", seed + 1);
            if task == Task::Occurrence {
                let g = |n: &str| ev.run_named(n).expect("run").report.gini;
                let better = g("GLM ins+r") > g("GLM ins");
                pass &= better;
                line.push_str(&format!(", gini ins {:.3} < ins+r {:.3}: {better}", g("GLM ins"), g("GLM ins+r")));
            }
            notes.push(line);
        }
    }
    let table = assemble_features(&ci.scenario.portfolio, &ci.bundle.sources(IndicatorEncoding::Continuous), Task::Occurrence, Layer::InsR)
        .expect("ci table");
    let ev = Evaluation::run(&table, &[Layer::Ins, Layer::InsR], 5, 1, &FitOptions::default()).expect("ci evaluation");
    let (gi, gr) = (ev.runs[0].report.gini, ev.runs[1].report.gini);
    pass &= gr > gi && nested_ok(&layer_devs(&ev));
    notes.push(format!("ci occurrence gini ins {gi:.3} < ins+r {gr:.3}"));
    outcome(pass, notes.join("; "))
}

/// Chi-square survival function by composite Simpson integration of the density.
fn chi2_sf_numeric(x: f64, df: usize) -> f64 {
    let k = df as f64 / 2.0;
    let ln_norm = -(k * 2f64.ln() + ln_gamma_lanczos(k));
    let pdf = |t: f64| if t <= 0.0 { 0.0 } else { ((k - 1.0) * t.ln() - t / 2.0 + ln_norm).exp() };
    let upper = x + 400.0;
    let m = 400_000;
    let h = (upper - x) / m as f64;
    let mut s = pdf(x) + pdf(upper);
    for i in 1..m {
        s += pdf(x + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn ln_gamma_lanczos(z: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * z).sin()).ln() - ln_gamma_lanczos(1.0 - z);
    }
    let z = z - 1.0;
    let mut a = C[0];
    let t = z + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reps = 1000;
    let n = 800;
    let mut pvals = Vec::with_capacity(reps);
    for _ in 0..reps {
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|&v| f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (0.5 - 0.8 * v).exp())))).collect();
        let table = plain_table(Task::Occurrence, vec![numeric("x", x), numeric("z", z)], y);
        let opts = FitOptions::default();
        let (full, _) = fit_glm(&table, &ModelSpec::new(Family::BernoulliLogit, vec![Term::main("x"), Term::main("z")]), None, &opts).unwrap();
        let (restricted, _) = fit_glm(&table, &ModelSpec::new(Family::BernoulliLogit, vec![Term::main("x")]), None, &opts).unwrap();
        pvals.push(10f64.powf(likelihood_ratio_test(&full, &restricted).unwrap().log10_p));
    }
    pvals.sort_by(f64::total_cmp);
    let ks = pvals
        .iter()
        .enumerate()
        .map(|(i, p)| ((i + 1) as f64 / reps as f64 - p).max(p - i as f64 / reps as f64))
        .fold(0.0, f64::max);
    let mut tail_gap: f64 = 0.0;
    for df in 1..=10 {
        for x in [0.05, 0.5, 1.0, 2.5, 5.0, 10.0, 20.0, 40.0] {
            let ours = 10f64.powf(chi2_log10_sf(x, df));
            tail_gap = tail_gap.max((ours - chi2_sf_numeric(x, df)).abs());
        }
    }
    outcome(
        ks < 0.05 && tail_gap < 1e-6,
        format!("KS {ks:.4} over {reps} null replications; chi-square tail max |diff| {tail_gap:.1e}"),
    )
}

fn criterion_9(small: &Prepared) -> Outcome {
    let geo = small.bundle.geo.as_ref().expect("geo features");
    let truth = &small.scenario.truth.geo;
    let mut dist_gap: f64 = 0.0;
    let mut exact_bad = 0;
    for t in truth {
        let g = &geo[&t.building_id];
        dist_gap = dist_gap.max((g.distance_watercourse - t.distance_watercourse).abs());
        dist_gap = dist_gap.max((g.altitude_diffwatercourse - t.altitude_diffwatercourse).abs());
        if g.nb_building_50m != t.nb_building_50m
            || g.terrain_maxslope_50m != t.terrain_maxslope_50m
            || g.impervious_surface != t.impervious_surface
            || g.soil_type != t.soil_type
            || g.wctrii != t.wctrii
        {
            exact_bad += 1;
        }
    }
    let th = WctriiThresholds::default();
    let mut image: BTreeMap<(u8, u8), u8> = BTreeMap::new();
    let tri_levels = [TriClass::None, TriClass::Low, TriClass::Medium, TriClass::High];
    for tri in tri_levels {
        for (d, alt) in [(10.0, 0.0), (300.0, 0.0), (900.0, 0.0), (50.0, 30.0), (300.0, 30.0)] {
            let class = wctrii(tri, d, alt, &th).expect("wctrii");
            let key = (floodrisk_core::geo::tri_band(tri), floodrisk_core::geo::proximity_band(d, alt, &th));
            if image.insert(key, class).is_some_and(|old| old != class) {
                exact_bad += 1;
            }
        }
    }
    let values: BTreeSet<u8> = image.values().copied().collect();
    let bijective = image.len() == 9 && values == (1..=9).collect();
    outcome(
        truth.len() >= 1000 && dist_gap <= 1e-9 && exact_bad == 0 && bijective,
        format!("{} buildings: max distance/altitude gap {dist_gap:.1e}, {exact_bad} exact mismatches; WCTRII bijective onto 1..9: {bijective}", truth.len()),
    )
}

fn run_cli(args: &[&str], cwd: &Path) -> bool {
    let status = Command::new(env!("CARGO_BIN_EXE_floodrisk"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "error")
        .stdout(std::process::Stdio::null())
        .status()
        .expect("spawn floodrisk");
    status.success()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut trees = Vec::new();
    for (name, threads) in [("a", None), ("b", None), ("c", Some("3"))] {
        let root = tmp.path().join(name);
        std::fs::create_dir_all(&root).unwrap();
        let mut common = vec!["--seed", "11", "--data-dir", "data", "--output-dir", "out"];
        if let Some(t) = threads {
            common.extend(["--threads", t]);
        }
        let with = |cmd: &[&str]| -> Vec<String> { cmd.iter().chain(common.iter()).map(|s| s.to_string()).collect() };
        let steps = [
            with(&["simulate", "--profile", "small"]),
            with(&["features"]),
            with(&["fit", "--task", "occurrence", "--all-layers"]),
            with(&["fit", "--task", "severity", "--all-layers"]),
            with(&["report"]),
        ];
        for s in &steps {
            let args: Vec<&str> = s.iter().map(String::as_str).collect();
            if !run_cli(&args, &root) {
                return outcome(false, format!("`floodrisk {}` failed in run {name}", args.join(" ")));
            }
        }
        trees.push(tree(&root));
    }
    let files = trees[0].len();
    let same_rerun = trees[0] == trees[1];
    let same_threads = trees[0] == trees[2];
    outcome(
        files > 20 && same_rerun && same_threads,
        format!("{files} files; rerun identical: {same_rerun}; --threads 3 identical: {same_threads}"),
    )
}

fn report(results: &mut Vec<(usize, &'static str, Outcome)>, id: usize, name: &'static str, o: Outcome) {
    println!("criterion {id:>2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    results.push((id, name, o));
}

fn main() {
    // `cargo test -- --list` and filters from other harnesses are not supported; run everything.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut results = Vec::new();
    let ci = prepare("ci", 2024);
    report(&mut results, 1, "indicator correctness", criterion_1(&ci));
    report(&mut results, 2, "indicator separation", criterion_2(&ci));
    report(&mut results, 3, "GPD recovery and score ordering", criterion_3(&ci));
    report(&mut results, 4, "1-D clustering optimality", criterion_4());
    report(&mut results, 5, "GLM solver", criterion_5());
    let small: Vec<Prepared> = (1..=5).map(|s| prepare("small", s)).collect();
    let mut dummy_gini = Vec::new();
    let c7 = criterion_7(&small, &ci, &mut dummy_gini);
    report(&mut results, 6, "metric identities", criterion_6(&dummy_gini));
    report(&mut results, 7, "layer nesting", c7);
    report(&mut results, 8, "LRT calibration", criterion_8());
    report(&mut results, 9, "geometry oracles", criterion_9(&small[0]));
    report(&mut results, 10, "determinism", criterion_10());
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
