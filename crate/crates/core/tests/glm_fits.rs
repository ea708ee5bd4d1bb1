use floodrisk_core::data_model::{Column, ColumnData, LayerTag, RowKey};
use floodrisk_core::glm::{chi2_log10_sf, fit_glm, likelihood_ratio_test, ln_gamma_q, INTERCEPT};
use floodrisk_core::{Family, FeatureTable, FitOptions, FittedGlm, ModelSpec, Task, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

struct Sample {
    x1: Vec<f64>,
    x2: Vec<f64>,
    g: Vec<&'static str>,
    y: Vec<f64>,
}

fn eta(beta: &[f64; 4], x1: f64, x2: f64, g: &str) -> f64 {
    beta[0] + beta[1] * x1 + beta[2] * x2 + if g == "b" { beta[3] } else { 0.0 }
}

fn sample(n: usize, seed: u64, family: Family, beta: &[f64; 4]) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Sample { x1: vec![], x2: vec![], g: vec![], y: vec![] };
    for _ in 0..n {
        let x1: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let x2: f64 = rng.random::<f64>();
        let g = if rng.random::<f64>() < 0.4 { "b" } else { "a" };
        let e = eta(beta, x1, x2, g);
        let y = match family {
            Family::BernoulliLogit => f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()))),
            Family::GammaLog => Gamma::new(2.0, e.exp() / 2.0).unwrap().sample(&mut rng),
        };
        s.x1.push(x1);
        s.x2.push(x2);
        s.g.push(g);
        s.y.push(y);
    }
    s
}

fn table(s: &Sample, task: Task, rows: &[usize]) -> FeatureTable {
    let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let num = |name: &str, v: Vec<f64>| Column { name: name.into(), tag: LayerTag::Ins, data: ColumnData::Numeric(v) };
    let g: Vec<&str> = rows.iter().map(|&i| s.g[i]).collect();
    FeatureTable {
        task,
        keys: rows
            .iter()
            .map(|i| RowKey {
                policy_id: format!("P{i}"),
                building_id: format!("B{i}"),
                municipality_code: "M".into(),
                year: 2020,
                flood_date: None,
            })
            .collect(),
        columns: vec![
            num("x1", pick(&s.x1)),
            num("x2", pick(&s.x2)),
            Column { name: "g".into(), tag: LayerTag::Ins, data: ColumnData::categorical(&g) },
        ],
        target: pick(&s.y),
        exposure: vec![1.0; rows.len()],
    }
}

fn spec(family: Family, terms: &[&str]) -> ModelSpec {
    ModelSpec::new(family, terms.iter().map(|t| Term::main(t)).collect())
}

fn coef(m: &FittedGlm, name: &str) -> (f64, f64) {
    let c = m.coefficients.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no {name}"));
    (c.beta, c.std_error)
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

#[test]
fn logistic_recovers_truth() {
    let beta = [-1.0, 0.8, -0.6, 0.5];
    let s = sample(40_000, 1, Family::BernoulliLogit, &beta);
    let (m, _) = fit_glm(&table(&s, Task::Occurrence, &all(40_000)), &spec(Family::BernoulliLogit, &["x1", "x2", "g"]), None, &FitOptions::default()).unwrap();
    assert!(m.converged);
    for (name, truth) in [(INTERCEPT, beta[0]), ("x1", beta[1]), ("x2", beta[2]), ("g=b", beta[3])] {
        let (b, se) = coef(&m, name);
        assert!((b - truth).abs() < 4.0 * se, "{name}: {b} vs {truth} (se {se})");
    }
}

#[test]
fn gamma_recovers_truth_and_dispersion() {
    let beta = [8.0, 0.3, -0.4, 0.2];
    let s = sample(20_000, 2, Family::GammaLog, &beta);
    let (m, _) = fit_glm(&table(&s, Task::Severity, &all(20_000)), &spec(Family::GammaLog, &["x1", "x2", "g"]), None, &FitOptions::default()).unwrap();
    assert!(m.converged);
    for (name, truth) in [(INTERCEPT, beta[0]), ("x1", beta[1]), ("x2", beta[2]), ("g=b", beta[3])] {
        let (b, se) = coef(&m, name);
        assert!((b - truth).abs() < 4.0 * se, "{name}: {b} vs {truth} (se {se})");
    }
    // shape 2 means dispersion 1/2
    assert!((m.dispersion - 0.5).abs() < 0.03, "dispersion {}", m.dispersion);
}

#[test]
fn masked_rows_fit_like_the_subset() {
    let s = sample(3000, 3, Family::BernoulliLogit, &[-0.5, 1.0, 0.5, -0.3]);
    let full = table(&s, Task::Occurrence, &all(3000));
    let mask: Vec<bool> = (0..3000).map(|i| i % 5 != 2).collect();
    let kept: Vec<usize> = (0..3000).filter(|&i| mask[i]).collect();
    let sp = spec(Family::BernoulliLogit, &["x1", "x2", "g"]);
    let (masked, _) = fit_glm(&full, &sp, Some(&mask), &FitOptions::default()).unwrap();
    let (subset, _) = fit_glm(&table(&s, Task::Occurrence, &kept), &sp, None, &FitOptions::default()).unwrap();
    for (a, b) in masked.coefficients.iter().zip(&subset.coefficients) {
        assert_eq!(a.name, b.name);
        assert!((a.beta - b.beta).abs() < 1e-9, "{}: {} vs {}", a.name, a.beta, b.beta);
    }
    assert!((masked.deviance - subset.deviance).abs() < 1e-8 * subset.deviance);
}

#[test]
fn duplicated_rows_keep_the_estimates() {
    let s = sample(2000, 4, Family::GammaLog, &[6.0, 0.5, 0.2, 0.1]);
    let sp = spec(Family::GammaLog, &["x1", "x2", "g"]);
    let (once, _) = fit_glm(&table(&s, Task::Severity, &all(2000)), &sp, None, &FitOptions::default()).unwrap();
    let twice_rows: Vec<usize> = (0..4000).map(|i| i % 2000).collect();
    let (twice, _) = fit_glm(&table(&s, Task::Severity, &twice_rows), &sp, None, &FitOptions::default()).unwrap();
    for (a, b) in once.coefficients.iter().zip(&twice.coefficients) {
        assert!((a.beta - b.beta).abs() < 1e-9);
        assert!((a.std_error / b.std_error - 2f64.sqrt()).abs() < 2e-3);
    }
}

#[test]
fn lrt_matches_deviance_difference() {
    let s = sample(5000, 5, Family::BernoulliLogit, &[-0.5, 1.0, 0.0, 0.0]);
    let t = table(&s, Task::Occurrence, &all(5000));
    let opts = FitOptions::default();
    let (full, _) = fit_glm(&t, &spec(Family::BernoulliLogit, &["x1", "x2", "g"]), None, &opts).unwrap();
    let (restricted, _) = fit_glm(&t, &spec(Family::BernoulliLogit, &["x1"]), None, &opts).unwrap();
    let r = likelihood_ratio_test(&full, &restricted).unwrap();
    assert_eq!(r.df, 2);
    assert!((r.statistic - (restricted.deviance - full.deviance)).abs() < 1e-9);
    assert!((r.log10_p - chi2_log10_sf(r.statistic, 2)).abs() < 1e-12);
    assert!(likelihood_ratio_test(&restricted, &full).is_err());
}

#[test]
fn chi_square_tail_closed_forms() {
    for x in [0.1, 1.0, 5.0, 30.0, 200.0, 1500.0] {
        // df 2: Q = exp(-x/2); df 4: Q = exp(-x/2)(1 + x/2)
        let want2 = -x / 2.0 / std::f64::consts::LN_10;
        let want4 = want2 + (1.0 + x / 2.0).log10();
        assert!((chi2_log10_sf(x, 2) - want2).abs() < 1e-10 * want2.abs().max(1.0), "df2 at {x}");
        assert!((chi2_log10_sf(x, 4) - want4).abs() < 1e-10 * want4.abs().max(1.0), "df4 at {x}");
        assert!((ln_gamma_q(1.0, x) + x).abs() < 1e-10 * x.max(1.0));
    }
}
