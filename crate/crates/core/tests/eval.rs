use chrono::NaiveDate;
use leadlag_core::eval::{chou_chu_test, evaluate_with, location_tests, roc_auc, ChouChuMethod};
use leadlag_core::predict::{ForecastRecord, TargetKind};
use leadlag_core::seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn coin(rng: &mut impl Rng) -> i8 {
    if rng.random_bool(0.5) {
        1
    } else {
        -1
    }
}

fn perm(s: u64, permutations: usize) -> ChouChuMethod {
    ChouChuMethod::BlockPermutation { permutations, seed: s }
}

/// p-values of 500 null replicates.
fn null_p_values(mut draw: impl FnMut(u64) -> f64) -> Vec<f64> {
    (0..500).map(|s| draw(s)).collect()
}

fn rate(p: &[f64], alpha: f64) -> f64 {
    p.iter().filter(|&&v| v <= alpha).count() as f64 / p.len() as f64
}

#[test]
fn chou_chu_is_calibrated_under_independence() {
    let p = null_p_values(|s| {
        let mut rng = seed::rng(s, &[7]);
        let a: Vec<i8> = (0..200).map(|_| coin(&mut rng)).collect();
        let b: Vec<i8> = (0..200).map(|_| coin(&mut rng)).collect();
        chou_chu_test::<f64>(&a, &b, perm(s, 1999)).unwrap().unwrap().p_value
    });
    assert!((rate(&p, 0.05) - 0.05).abs() <= 0.02, "rate {}", rate(&p, 0.05));
    let ks = ks_uniform(&p);
    assert!(ks > 0.01, "KS p-value {ks}");
}

/// Asymptotic p-value of the one-sample Kolmogorov-Smirnov test against
/// the uniform law on [0, 1].
fn ks_uniform(p: &[f64]) -> f64 {
    let mut v = p.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let tail: f64 = (1..=100).map(|k| (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp()).sum();
    (2.0 * tail).clamp(0.0, 1.0)
}

#[test]
fn ks_oracle_separates_uniform_from_skewed() {
    let grid: Vec<f64> = (0..500).map(|k| (k as f64 + 0.5) / 500.0).collect();
    assert!(ks_uniform(&grid) > 0.99);
    let squared: Vec<f64> = grid.iter().map(|x| x * x).collect();
    assert!(ks_uniform(&squared) < 1e-6);
}

#[test]
fn hac_is_calibrated_under_independence() {
    let p = null_p_values(|s| {
        let mut rng = seed::rng(s, &[8]);
        let a: Vec<i8> = (0..500).map(|_| coin(&mut rng)).collect();
        let b: Vec<i8> = (0..500).map(|_| coin(&mut rng)).collect();
        chou_chu_test::<f64>(&a, &b, ChouChuMethod::Hac).unwrap().unwrap().p_value
    });
    assert!((rate(&p, 0.05) - 0.05).abs() <= 0.02, "rate {}", rate(&p, 0.05));
}

#[test]
fn location_tests_are_calibrated_on_continuous_products() {
    let (mut t, mut w) = (Vec::new(), Vec::new());
    for s in 0..500 {
        let mut rng = seed::rng(s, &[9]);
        let x: Vec<f64> = (0..200)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                f64::from(coin(&mut rng)) * z
            })
            .collect();
        let (a, b) = location_tests(&x).unwrap();
        t.push(a.p_value);
        w.push(b.unwrap().p_value);
    }
    assert!((rate(&t, 0.05) - 0.05).abs() <= 0.02, "t rate {}", rate(&t, 0.05));
    assert!((rate(&w, 0.05) - 0.05).abs() <= 0.02, "wilcoxon rate {}", rate(&w, 0.05));
}

#[test]
fn perfect_long_prediction_reaches_permutation_floor() {
    let mut rng = seed::rng(3, &[]);
    let y: Vec<i8> = (0..1000).map(|_| coin(&mut rng)).collect();
    let r = chou_chu_test::<f64>(&y, &y, perm(1, 20_000)).unwrap().unwrap();
    assert!(r.p_value < 1e-4, "{}", r.p_value);
    assert_eq!(r.statistic, 1.0);
}

#[test]
fn half_right_prediction_is_not_significant() {
    let mut rng = seed::rng(4, &[]);
    let y: Vec<i8> = (0..400).map(|_| coin(&mut rng)).collect();
    let mut flip: Vec<bool> = (0..400).map(|k| k < 200).collect();
    for k in (1..400).rev() {
        flip.swap(k, rng.random_range(0..=k));
    }
    let pred: Vec<i8> = y.iter().zip(&flip).map(|(&v, &f)| if f { -v } else { v }).collect();
    let r = chou_chu_test::<f64>(&pred, &y, perm(2, 4000)).unwrap().unwrap();
    assert_eq!(r.statistic, 0.0);
    assert!((0.4..=0.65).contains(&r.p_value), "{}", r.p_value);
}

#[test]
fn flipping_both_signs_changes_nothing() {
    for s in 0..20 {
        let mut rng = seed::rng(s, &[5]);
        let a: Vec<i8> = (0..120).map(|_| coin(&mut rng)).collect();
        let b: Vec<i8> = a.iter().map(|&v| if rng.random_bool(0.6) { v } else { -v }).collect();
        let na: Vec<i8> = a.iter().map(|v| -v).collect();
        let nb: Vec<i8> = b.iter().map(|v| -v).collect();
        for m in [perm(s, 999), ChouChuMethod::Hac] {
            let x = chou_chu_test::<f64>(&a, &b, m).unwrap().unwrap();
            let y = chou_chu_test::<f64>(&na, &nb, m).unwrap().unwrap();
            assert_eq!(x, y);
        }
    }
}

fn record(day: NaiveDate, hour: u8, combined: i8, realized: i8) -> ForecastRecord<f64> {
    ForecastRecord {
        slice_end_ms: 0,
        day,
        hour,
        predictions: vec![combined],
        combined,
        realized_sign: realized,
        realized_flow: f64::from(realized),
        realized_vwap_sign: Some(realized),
    }
}

fn hourly_records(skill: impl Fn(u8) -> f64) -> Vec<ForecastRecord<f64>> {
    let mut rng = seed::rng(12, &[]);
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    let mut out = Vec::new();
    for d in 0..300 {
        let day = start + chrono::Days::new(d);
        for hour in 8..14u8 {
            let y = coin(&mut rng);
            let p = if rng.random_bool(skill(hour)) { y } else { coin(&mut rng) };
            out.push(record(day, hour, p, y));
        }
    }
    out
}

#[test]
fn skill_at_one_hour_shows_only_there() {
    let recs = hourly_records(|h| if h == 10 { 0.5 } else { 0.0 });
    let rep = evaluate_with(&recs, TargetKind::Flow, &[], perm(0, 2000), 30).unwrap();
    assert_eq!(rep.hourly.rows.len(), 6);
    for row in &rep.hourly.rows {
        let p = row.chou_chu.as_ref().unwrap().p_value;
        if row.hour == 10 {
            assert!(p < 1e-3, "hour 10: {p}");
            assert!(row.t.as_ref().unwrap().p_value < 1e-3);
        } else {
            assert!(p > 0.01, "hour {}: {p}", row.hour);
        }
    }
}

#[test]
fn uniform_skill_shows_at_every_hour() {
    let recs = hourly_records(|_| 0.4);
    let rep = evaluate_with(&recs, TargetKind::Vwap, &[], ChouChuMethod::Hac, 30).unwrap();
    assert!(rep.chou_chu.unwrap().p_value < 1e-6);
    for row in &rep.hourly.rows {
        assert!(row.chou_chu.as_ref().unwrap().p_value < 1e-3, "hour {}", row.hour);
        assert!(row.wilcoxon.as_ref().unwrap().p_value < 1e-3, "hour {}", row.hour);
    }
    let acc = rep.accuracy.unwrap();
    assert!(acc.accuracy > 0.65 && acc.accuracy < 0.75, "{acc:?}");
}

#[test]
fn sparse_hours_are_omitted() {
    let mut recs = hourly_records(|_| 0.0);
    let cut = NaiveDate::from_ymd_opt(2024, 1, 20).unwrap();
    recs.retain(|r| r.hour != 13 || r.day < cut);
    let rep = evaluate_with(&recs, TargetKind::Flow, &[], ChouChuMethod::Hac, 30).unwrap();
    assert_eq!(rep.hourly.rows.len(), 5);
    assert_eq!(rep.hourly.omitted, vec![(13, 19)]);
}

fn brute_auc(scores: &[f64], outcomes: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &oi) in outcomes.iter().enumerate() {
        for (j, &oj) in outcomes.iter().enumerate() {
            if oi && !oj {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs
}

proptest! {
    #[test]
    fn auc_matches_pair_counting(rows in prop::collection::vec((0u8..20, any::<bool>()), 2..200)) {
        let scores: Vec<f64> = rows.iter().map(|(s, _)| f64::from(*s) / 4.0).collect();
        let outcomes: Vec<bool> = rows.iter().map(|(_, o)| *o).collect();
        let both = outcomes.iter().any(|&o| o) && outcomes.iter().any(|&o| !o);
        match roc_auc::<f64>(&scores, &outcomes) {
            Ok(a) => {
                prop_assert!(both);
                prop_assert!((a - brute_auc(&scores, &outcomes)).abs() < 1e-12);
            }
            Err(_) => prop_assert!(!both),
        }
    }
}
