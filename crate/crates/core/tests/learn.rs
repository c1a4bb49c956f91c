use leadlag_core::learn::{forest_predict, permutation_importance, train_forest, train_logistic, ForestConfig, LogisticConfig, LogisticModel, PredictorMatrix};
use leadlag_core::seed;
use rand::Rng;

fn noise_level<R: Rng>(rng: &mut R) -> i8 {
    [-1i8, 0, 1, 2][rng.random_range(0..4)]
}

fn informative(n: usize, noise: usize, s: u64) -> (PredictorMatrix, Vec<i8>) {
    let mut rng = seed::rng(s, &[1]);
    let mut cols = vec!["signal".to_owned()];
    cols.extend((0..noise).map(|k| format!("noise{k}")));
    let mut x = PredictorMatrix::new(cols);
    let mut y = Vec::new();
    for _ in 0..n {
        let v: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
        let mut row = vec![v];
        row.extend((0..noise).map(|_| noise_level(&mut rng)));
        x.push_row(&row).unwrap();
        y.push(v);
    }
    (x, y)
}

fn pure_noise(n: usize, k: usize, s: u64) -> (PredictorMatrix, Vec<i8>) {
    let mut rng = seed::rng(s, &[2]);
    let mut x = PredictorMatrix::new((0..k).map(|c| format!("c{c}")).collect());
    let mut y = Vec::new();
    for _ in 0..n {
        let row: Vec<i8> = (0..k).map(|_| noise_level(&mut rng)).collect();
        x.push_row(&row).unwrap();
        y.push(if rng.random_bool(0.5) { 1 } else { -1 });
    }
    (x, y)
}

fn majority_rate(y: &[i8]) -> f64 {
    let mut c = [0usize; 3];
    for &v in y {
        c[(v + 1) as usize] += 1;
    }
    *c.iter().max().unwrap() as f64 / y.len() as f64
}

fn cfg(trees: usize) -> ForestConfig {
    ForestConfig {
        n_trees: trees,
        ..ForestConfig::default()
    }
}

#[test]
fn noise_target_oob_near_base_rate() {
    for s in 0..20 {
        let (x, y) = pure_noise(400, 5, s);
        let m = train_forest(&x, &y, &cfg(200), s).unwrap();
        let acc = m.oob_accuracy.unwrap();
        let base = majority_rate(&y);
        assert!((acc - base).abs() <= 0.1, "seed {s}: oob {acc} base {base}");
    }
}

#[test]
fn noise_column_importance_near_zero() {
    for s in 0..20 {
        let (x, y) = informative(500, 4, 100 + s);
        let m = train_forest(&x, &y, &cfg(200), s).unwrap();
        let r = permutation_importance::<f64>(&m, &x, &y, s).unwrap();
        for c in 1..x.n_cols() {
            assert!(r.importance[c].abs() <= 0.02, "seed {s} col {c}: {}", r.importance[c]);
        }
        assert_eq!(r.rank[0], 1);
    }
}

#[test]
fn duplicated_column_shares_credit() {
    for s in 0..5 {
        let (x, y) = informative(500, 5, 200 + s);
        let single = train_forest(&x, &y, &cfg(200), s).unwrap();
        let alone = permutation_importance::<f64>(&single, &x, &y, s).unwrap().importance[0];
        let signal: Vec<i8> = (0..x.n_rows()).map(|r| x.get(r, 0)).collect();
        let xd = x.with_column("signal_copy", &signal).unwrap();
        let double = train_forest(&xd, &y, &cfg(200), s).unwrap();
        let shared = permutation_importance::<f64>(&double, &xd, &y, s).unwrap().importance[0];
        assert!(shared <= alone, "seed {s}: {shared} > {alone}");
    }
}

#[test]
fn forest_votes_sum_to_one() {
    let (x, y) = informative(300, 3, 7);
    let m = train_forest(&x, &y, &cfg(50), 7).unwrap();
    for r in 0..x.n_rows() {
        let (c, f) = forest_predict::<f64>(&m, x.row(r)).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!([-1, 0, 1].contains(&c));
    }
}

#[test]
fn single_column_ranks_first() {
    let (x, y) = informative(200, 0, 9);
    let m = train_forest(&x, &y, &cfg(30), 9).unwrap();
    let r = permutation_importance::<f64>(&m, &x, &y, 9).unwrap();
    assert_eq!(r.rank, vec![1]);
}

#[test]
fn logistic_f32_matches_f64_classes() {
    let (x, y) = informative(300, 3, 11);
    let a: LogisticModel<f64> = train_logistic(&x, &y, &LogisticConfig::default()).unwrap();
    let b: LogisticModel<f32> = train_logistic(&x, &y, &LogisticConfig::default()).unwrap();
    for r in 0..x.n_rows() {
        assert_eq!(a.predict(x.row(r)).unwrap(), b.predict(x.row(r)).unwrap());
    }
}
