//! Independent oracles shared by the oracle tests and the acceptance run. Each check
//! returns a short detail line on success and a diagnosis on failure.
#![allow(dead_code)]

use std::collections::BTreeMap;

use tabaug_core::augment::{
    generate_cmixup, generate_mixup, generate_naive_noise, generate_teacher_noise, AugmentationConfig, NoiseCenter,
    Provenance,
};
use tabaug_core::dataset::{compute_column_stats, Dataset};
use tabaug_core::harness::report::{emit_report, Report, ReportKind};
use tabaug_core::harness::trial::{PhaseDurations, TrialResult};
use tabaug_core::harness::{confidence_interval, improvement, paired_t_test};
use tabaug_core::metrics::rmse;
use tabaug_core::ndarray::{Array1, Array2};
use tabaug_core::rng::{rng_from_seed, splitmix64};
use tabaug_core::student::{Activation, Network};
use tabaug_core::teacher::{fit_teacher, forest_fit, knn_fit, CandidateKind, ForestParams, TeacherSpec};
use tabaug_core::Strategy;

pub type Check = Result<String, String>;

/// Uniform draws on [0, 1) from a counter hash, independent of the library's RNG use.
pub fn uniform(seed: u64, i: u64) -> f64 {
    (splitmix64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(i)) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn random_matrix(seed: u64, n: usize, p: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |(i, j)| {
        scale * (2.0 * uniform(seed, (i * p + j) as u64) - 1.0) + j as f64
    })
}

pub fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let x = random_matrix(seed, n, p, 3.0);
    let y = Array1::from_shape_fn(n, |i| 10.0 * uniform(seed ^ 0xFFFF, i as u64) - 5.0);
    Dataset::from_arrays(x, y).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- exact oracles ----

pub fn rmse_oracle() -> Check {
    let got = rmse(Array1::from(vec![1.0, 3.0]).view(), Array1::from(vec![1.0, 1.0]).view()).unwrap();
    ensure(
        format!("{got:.7}") == "1.4142136" && close(got, 2f64.sqrt(), 1e-15),
        || format!("rmse([1,3],[1,1]) = {got}"),
    )?;
    let mut worst = 0.0f64;
    for s in 0..50u64 {
        let n = 1 + (s as usize * 7) % 97;
        let p: Vec<f64> = (0..n).map(|i| 100.0 * uniform(s, i as u64) - 50.0).collect();
        let t: Vec<f64> = (0..n).map(|i| 100.0 * uniform(s + 1000, i as u64) - 50.0).collect();
        let mut ss = 0.0;
        for i in 0..n {
            ss += (p[i] - t[i]) * (p[i] - t[i]);
        }
        let expect = (ss / n as f64).sqrt();
        let got = rmse(Array1::from(p).view(), Array1::from(t).view()).unwrap();
        worst = worst.max((got - expect).abs() / expect.max(1.0));
    }
    ensure(worst <= 1e-10, || format!("rmse relative error {worst:e}"))?;
    Ok(format!("1.4142135 reproduced; 50 random cases within {worst:.1e}"))
}

pub fn column_stats_oracle() -> Check {
    let d = Dataset::from_arrays(
        Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        Array1::zeros(4),
    )
    .unwrap();
    let s = compute_column_stats(&d).unwrap();
    ensure(s.means[0] == 2.5 && format!("{:.7}", s.stds[0]) == "1.2909944", || {
        format!("stats of [1,2,3,4] = ({}, {})", s.means[0], s.stds[0])
    })?;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let d = random_dataset(seed, 3 + seed as usize * 5, 4);
        let s = compute_column_stats(&d).unwrap();
        for c in 0..4 {
            let col: Vec<f64> = d.features().column(c).to_vec();
            let n = col.len() as f64;
            let m = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            worst = worst.max((s.means[c] - m).abs() / m.abs().max(1.0));
            worst = worst.max((s.stds[c] - sd).abs() / sd.max(1.0));
        }
    }
    ensure(worst <= 1e-10, || format!("column stats error {worst:e}"))?;
    Ok(format!("sigma 1.2909944 reproduced; brute-force agreement {worst:.1e}"))
}

pub fn improvement_oracle() -> Check {
    let d = improvement(8.62, 6.34).unwrap();
    ensure(format!("{d:.2}") == "26.45", || {
        format!("improvement(8.62, 6.34) = {d}")
    })?;
    ensure(improvement(2.0, 2.0).unwrap() == 0.0, || {
        "p_aug = p_baseline should give 0".into()
    })?;
    ensure(improvement(1.0, 1.5).unwrap() == -50.0, || {
        "1.0 -> 1.5 should give -50".into()
    })?;
    ensure(improvement(0.0, 1.0).is_err(), || "zero baseline accepted".into())?;
    for i in 0..100u64 {
        let (b, a) = (0.01 + 10.0 * uniform(7, i), 10.0 * uniform(8, i));
        let got = improvement(b, a).unwrap();
        let expect = 100.0 * (b - a) / b;
        ensure(close(got, expect, 1e-12), || {
            format!("improvement({b}, {a}) = {got}, expected {expect}")
        })?;
    }
    Ok("26.45%, 0%, -50% reproduced; 100 random cases exact".into())
}

/// `t_{0.975, df}` from closed forms (df 1, 2) and standard tables (others).
const T_TABLE: [(usize, f64); 6] = [
    (1, 12.706_204_736_174_696),
    (2, 4.302_652_729_749_464),
    (4, 2.776_445_105_197_799),
    (9, 2.262_157_162_854_099),
    (19, 2.093_024_054_408_263),
    (29, 2.045_229_642_132_703),
];

pub fn confidence_interval_oracle() -> Check {
    let hw = confidence_interval(&[1.0, 3.0], 0.95).unwrap();
    ensure(format!("{hw:.4}") == "12.7062", || {
        format!("CI half-width of [1,3] = {hw}")
    })?;
    // closed forms: df=1 is tan(pi (p - 1/2)); df=2 is (2p-1)/sqrt(2p(1-p))
    let t1 = (std::f64::consts::PI * 0.475).tan();
    let t2 = 0.95 / (2.0f64 * 0.975 * 0.025).sqrt();
    ensure(close(T_TABLE[0].1, t1, 1e-12) && close(T_TABLE[1].1, t2, 1e-12), || {
        "t table disagrees with closed forms".into()
    })?;
    ensure(confidence_interval(&[4.0; 5], 0.95).unwrap() == 0.0, || {
        "identical values should give 0".into()
    })?;
    ensure(confidence_interval(&[1.0], 0.95).is_err(), || {
        "single value accepted".into()
    })?;
    for &(df, t) in &T_TABLE {
        let n = df + 1;
        let v: Vec<f64> = (0..n).map(|i| 5.0 * uniform(df as u64, i as u64)).collect();
        let m = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let expect = t * sd / (n as f64).sqrt();
        let got = confidence_interval(&v, 0.95).unwrap();
        ensure(close(got, expect, 1e-10), || {
            format!("df {df}: half-width {got}, oracle {expect}")
        })?;
    }
    // paired test: with two pairs the statistic has df = 1 and p = 1 - 2 atan(|t|) / pi
    let (a, b) = ([1.0, 2.0], [1.5, 3.5]);
    let (d1, d2) = (a[0] - b[0], a[1] - b[1]);
    let md = (d1 + d2) / 2.0;
    let ss: f64 = (d1 - md) * (d1 - md) + (d2 - md) * (d2 - md);
    let sd = ss.sqrt();
    let t = md / (sd / 2f64.sqrt());
    let expect = 1.0 - 2.0 * t.abs().atan() / std::f64::consts::PI;
    let got = paired_t_test(&a, &b).unwrap();
    ensure(close(got, expect, 1e-10), || format!("paired p {got}, oracle {expect}"))?;
    Ok("12.7062 reproduced; t quantiles for df {1,2,4,9,19,29} and paired p agree to 1e-10".into())
}

fn trial(seed: u64, strategy: Strategy, size: usize, base: f64, aug: f64, teacher: f64) -> TrialResult {
    TrialResult {
        dataset: "toy".into(),
        seed,
        train_size: size,
        train_size_label: size.to_string(),
        strategy,
        volume: if strategy.uses_synthetic_rows() { 1000 } else { 0 },
        eta: if strategy.uses_synthetic_rows() { 0.05 } else { 0.0 },
        p_baseline: base,
        p_aug: aug,
        teacher_rmse: Some(teacher),
        teacher_model: Some("ridge[lambda=1]".into()),
        test_target_std: 4.0,
        improvement_pct: improvement(base, aug).unwrap(),
        durations: PhaseDurations::default(),
    }
}

/// Three trials x two strategies with round numbers, plus a random table.
pub fn hand_table() -> Vec<TrialResult> {
    vec![
        trial(0, Strategy::TeacherNoise, 100, 2.0, 1.0, 1.5),
        trial(0, Strategy::NaiveNoise, 100, 2.0, 1.5, 1.5),
        trial(1, Strategy::TeacherNoise, 100, 4.0, 3.0, 2.0),
        trial(1, Strategy::NaiveNoise, 100, 4.0, 4.0, 2.0),
        trial(2, Strategy::TeacherNoise, 100, 5.0, 5.5, 3.0),
        trial(2, Strategy::NaiveNoise, 100, 5.0, 4.5, 3.0),
    ]
}

fn random_table() -> Vec<TrialResult> {
    let mut v = Vec::new();
    for (k, strategy) in [Strategy::TeacherNoise, Strategy::Mixup, Strategy::Cmixup]
        .into_iter()
        .enumerate()
    {
        for size in [50, 200] {
            for seed in 0..7u64 {
                let base = 1.0 + uniform(size as u64, seed);
                let aug = 0.5 + uniform(size as u64 + 10 * k as u64 + 1, seed);
                v.push(trial(seed, strategy, size, base, aug, 0.9 * base));
            }
        }
    }
    v
}

/// Minimal CSV reader for the trial table (no quoted fields are ever written).
fn parse_trials_csv(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    lines
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn brute_stats(v: &[f64]) -> (f64, f64, f64, Option<f64>) {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    };
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let ci = T_TABLE
        .iter()
        .find(|(df, _)| *df == n.saturating_sub(1))
        .map(|(_, t)| t * sd / (n as f64).sqrt());
    (mean, median, sd, ci)
}

/// Emits a report, reads `trials.csv` back with a separate parser and recomputes every
/// configuration aggregate in `summary.json`.
pub fn report_aggregates_oracle() -> Check {
    // hand computation on the 3 x 2 table
    let report = Report::from_trials(ReportKind::Benchmark, hand_table(), vec![]).unwrap();
    let tn = report
        .configurations
        .iter()
        .find(|c| c.strategy == Strategy::TeacherNoise)
        .unwrap();
    // improvements 50, 25, -10
    ensure(
        close(tn.improvement_pct.mean, 65.0 / 3.0, 1e-12) && tn.improvement_pct.median == 25.0,
        || format!("teacher_noise improvement mean/median {:?}", tn.improvement_pct),
    )?;
    ensure(tn.p_aug.mean == 9.5 / 3.0 && tn.p_aug.median == 3.0, || {
        format!("p_aug stats {:?}", tn.p_aug)
    })?;
    let row = &report.benchmark[0];
    ensure(row.best == "naive_noise" || row.best == "teacher_noise", || {
        format!("best column {}", row.best)
    })?;

    let mut checked = 0;
    for table in [hand_table(), random_table()] {
        let report = Report::from_trials(ReportKind::Benchmark, table, vec![]).unwrap();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        emit_report(&report, dir.path()).map_err(|e| e.to_string())?;
        let rows = parse_trials_csv(&std::fs::read_to_string(dir.path().join("trials.csv")).unwrap());
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        let mut groups: BTreeMap<String, Vec<&BTreeMap<String, String>>> = BTreeMap::new();
        for r in &rows {
            let key = format!(
                "{}/{}/{}/{}/{}",
                r["dataset"], r["strategy"], r["train_size_label"], r["volume"], r["eta"]
            );
            groups.entry(key).or_default().push(r);
        }
        let configs = summary["configurations"]
            .as_array()
            .ok_or("summary.json has no configurations")?;
        ensure(configs.len() == groups.len(), || {
            format!("{} configurations vs {} groups", configs.len(), groups.len())
        })?;
        for c in configs {
            let key = c["key"].as_str().unwrap();
            let g = groups
                .get(key)
                .ok_or_else(|| format!("configuration {key} missing from trials.csv"))?;
            for field in ["improvement_pct", "p_baseline", "p_aug"] {
                let vals: Vec<f64> = g.iter().map(|r| r[field].parse().unwrap()).collect();
                let (mean, median, sd, ci) = brute_stats(&vals);
                let s = &c[field];
                let num = |k: &str| s[k].as_f64().unwrap();
                for (name, got, want) in [
                    ("mean", num("mean"), mean),
                    ("median", num("median"), median),
                    ("std", num("std"), sd),
                ] {
                    ensure(close(got, want, 1e-10), || {
                        format!("{key} {field} {name}: {got} vs {want}")
                    })?;
                }
                if let Some(want) = ci {
                    let got = num("ci95");
                    ensure(close(got, want, 1e-10), || {
                        format!("{key} {field} ci95: {got} vs {want}")
                    })?;
                }
                checked += 1;
            }
            for r in g {
                let (b, a, imp): (f64, f64, f64) = (
                    r["p_baseline"].parse().unwrap(),
                    r["p_aug"].parse().unwrap(),
                    r["improvement_pct"].parse().unwrap(),
                );
                ensure(close(imp, 100.0 * (b - a) / b, 1e-12), || {
                    format!("row improvement {imp} inconsistent")
                })?;
            }
        }
    }
    Ok(format!(
        "hand table exact; {checked} aggregates recomputed from trials.csv within 1e-10"
    ))
}

// ---- invariants ----

pub fn convexity_invariant() -> Check {
    let mut worst = 0.0f64;
    let mut rows = 0;
    for seed in 0..5u64 {
        let d = random_dataset(seed, 40, 4);
        for strategy in [Strategy::Mixup, Strategy::Cmixup] {
            let config = AugmentationConfig::new(strategy, 2000, 0.0, seed);
            let s = if strategy == Strategy::Mixup {
                generate_mixup(&d, &config)
            } else {
                generate_cmixup(&d, &config)
            }
            .map_err(|e| e.to_string())?;
            for (r, prov) in s.provenance.iter().enumerate() {
                let Provenance::Mixed { first, second, lambda } = *prov else {
                    return Err("mixed provenance expected".into());
                };
                for c in 0..4 {
                    let v = lambda * d.features()[[first, c]] + (1.0 - lambda) * d.features()[[second, c]];
                    worst = worst.max((s.features[[r, c]] - v).abs());
                }
                let y = lambda * d.target()[first] + (1.0 - lambda) * d.target()[second];
                worst = worst.max((s.labels[r] - y).abs());
                rows += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("convexity error {worst:e}"))?;
    Ok(format!(
        "{rows} mixup/cmixup rows recomputed from provenance, max error {worst:.1e}"
    ))
}

pub fn boundedness_invariant() -> Check {
    let mut count = 0;
    for seed in 0..10u64 {
        let d = random_dataset(seed, 30 + seed as usize, 3);
        let y = d.target();
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // queries well outside the training box as well as inside it
        let q = random_matrix(seed + 77, 200, 3, 30.0);
        let forest = forest_fit(
            d.features().view(),
            y.view(),
            &ForestParams {
                n_trees: 25,
                ..ForestParams::default()
            },
            seed,
        )
        .map_err(|e| e.to_string())?;
        let knn = knn_fit(d.features().view(), y.view(), 1 + seed as usize % 5).map_err(|e| e.to_string())?;
        for p in forest
            .predict(q.view())
            .unwrap()
            .iter()
            .chain(knn.predict(q.view()).unwrap().iter())
        {
            ensure(*p >= lo && *p <= hi, || format!("prediction {p} outside [{lo}, {hi}]"))?;
            count += 1;
        }
    }
    Ok(format!(
        "{count} forest/knn predictions inside [min y_train, max y_train]"
    ))
}

pub fn zero_eta_identity() -> Check {
    let d = random_dataset(3, 50, 4);
    let stats = compute_column_stats(&d).unwrap();
    let teacher = fit_teacher(&d, &TeacherSpec::only(&[CandidateKind::Ridge])).map_err(|e| e.to_string())?;
    let s = generate_teacher_noise(
        &d,
        &stats,
        &AugmentationConfig::new(Strategy::TeacherNoise, 500, 0.0, 9),
        &teacher,
    )
    .map_err(|e| e.to_string())?;
    for (r, prov) in s.provenance.iter().enumerate() {
        let Provenance::Perturbed { source } = *prov else {
            return Err("perturbed provenance expected".into());
        };
        ensure(s.features.row(r) == d.features().row(source), || {
            format!("row {r} differs from source {source}")
        })?;
    }
    let relabel = tabaug_core::teacher::teacher_predict(&teacher, s.features.view()).unwrap();
    ensure(relabel == s.labels, || "labels differ from teacher predictions".into())?;
    Ok("eta = 0 copies 500 source rows exactly, labels = teacher predictions".into())
}

/// Per-column standard deviation of the added noise against `eta * sigma_c`.
pub fn noise_calibration() -> Check {
    let d = random_dataset(11, 300, 3);
    // widen the column scales so a shared-scale bug would show
    let x = d.features().clone() * &Array1::from(vec![0.1, 1.0, 50.0]);
    let d = Dataset::from_arrays(x, d.target().clone()).unwrap();
    let stats = compute_column_stats(&d).unwrap();
    let mut worst = 0.0f64;
    for (k, eta) in [0.01, 0.05, 0.10].into_iter().enumerate() {
        for center in [NoiseCenter::ZeroMean, NoiseCenter::ColumnMean] {
            let config = AugmentationConfig {
                noise_center: center,
                ..AugmentationConfig::new(Strategy::NaiveNoise, 100_000, eta, 40 + k as u64)
            };
            let s = generate_naive_noise(&d, &stats, &config).map_err(|e| e.to_string())?;
            for c in 0..3 {
                let noise: Vec<f64> = s
                    .provenance
                    .iter()
                    .enumerate()
                    .map(|(r, p)| match *p {
                        Provenance::Perturbed { source } => s.features[[r, c]] - d.features()[[source, c]],
                        _ => f64::NAN,
                    })
                    .collect();
                let n = noise.len() as f64;
                let m = noise.iter().sum::<f64>() / n;
                let sd = (noise.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let target = eta * stats.stds[c];
                let rel = (sd - target).abs() / target;
                worst = worst.max(rel);
                ensure(rel <= 0.05, || {
                    format!("eta {eta} column {c}: noise sd {sd}, expected {target}")
                })?;
                let center_value = if center == NoiseCenter::ZeroMean {
                    0.0
                } else {
                    stats.means[c]
                };
                ensure((m - center_value).abs() <= 0.05 * target, || {
                    format!("eta {eta} column {c}: noise mean {m}, expected {center_value}")
                })?;
            }
        }
    }
    Ok(format!(
        "noise sd within {:.2}% of eta*sigma_c for eta in {{0.01, 0.05, 0.10}} at 1e5 rows",
        100.0 * worst
    ))
}

fn param(n: &mut Network, l: usize, w: Option<(usize, usize)>, b: usize) -> &mut f64 {
    match w {
        Some(ij) => &mut n.layers[l].weights[ij],
        None => &mut n.layers[l].bias[b],
    }
}

/// Backprop against central differences on a 5-(4,3)-1 tanh network with 10 samples.
#[allow(clippy::needless_range_loop)]
pub fn gradient_check() -> Check {
    let mut worst = 0.0f64;
    for seed in 1..=3u64 {
        let mut net = Network::init(5, &[4, 3], Activation::Tanh, &mut rng_from_seed(seed));
        for l in &mut net.layers {
            l.bias
                .iter_mut()
                .enumerate()
                .for_each(|(i, b)| *b = 0.3 * (uniform(seed, i as u64) - 0.5));
        }
        let x = random_matrix(seed + 100, 10, 5, 1.0);
        let y = Array1::from_shape_fn(10, |i| uniform(seed + 200, i as u64) - 0.5);
        let (_, grads) = net.loss_and_gradients(x.view(), y.view());
        let h = 1e-6;
        for l in 0..net.layers.len() {
            let shape = net.layers[l].weights.dim();
            let mut params: Vec<(Option<(usize, usize)>, usize)> = Vec::new();
            for i in 0..shape.0 {
                for j in 0..shape.1 {
                    params.push((Some((i, j)), 0));
                }
            }
            params.extend((0..shape.1).map(|j| (None, j)));
            for (w, b) in params {
                let orig = *param(&mut net, l, w, b);
                *param(&mut net, l, w, b) = orig + h;
                let up = net.loss_and_gradients(x.view(), y.view()).0;
                *param(&mut net, l, w, b) = orig - h;
                let down = net.loss_and_gradients(x.view(), y.view()).0;
                *param(&mut net, l, w, b) = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = match w {
                    Some(ij) => grads[l].weights[ij],
                    None => grads[l].bias[b],
                };
                let scale = numeric.abs().max(analytic.abs());
                if scale > 1e-9 {
                    worst = worst.max((numeric - analytic).abs() / scale);
                }
            }
        }
    }
    ensure(worst <= 1e-4, || format!("gradient relative error {worst:e}"))?;
    Ok(format!(
        "backprop vs central differences: max relative error {worst:.1e}"
    ))
}
