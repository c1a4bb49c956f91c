use leadlag_core::ingest::{classify_states, TraderId};
use leadlag_core::stability::{rolling_stability, RollingConfig};
use leadlag_core::synth::{generate_market, MarketSpec, PlantedEdge};

fn cfg(window_days: usize, step_days: usize) -> RollingConfig {
    RollingConfig {
        window_days,
        step_days,
        ..RollingConfig::default()
    }
}

#[test]
fn regime_switch_concentrates_transitions() {
    let spec = MarketSpec {
        n_days: 80,
        seed: 11,
        ..MarketSpec::default()
    };
    let mut market = generate_market(&spec).unwrap();
    let days = market.grid.days();
    let switch_ms = market.grid.slices[days[40].1.start].start_ms;
    // from day 40 on, half of group 1 and half of group 2 trade as each other
    let swap = |id: &TraderId| -> Option<TraderId> {
        let k: usize = id.as_str()[1..].parse().unwrap();
        match k {
            0..=4 => Some(spec.trader_id(k + 10)),
            10..=14 => Some(spec.trader_id(k - 10)),
            _ => None,
        }
    };
    for t in market.trades.iter_mut().filter(|t| t.timestamp_ms >= switch_ms) {
        if let Some(other) = swap(&t.trader_id) {
            t.trader_id = other;
        }
    }
    let m = classify_states(&market.trades, &market.grid, 0.01).unwrap();
    let run = rolling_stability::<f64>(&m, &cfg(20, 20), 3).unwrap();
    assert_eq!(run.partitions.len(), 4);
    let first_after = run.partitions[2].0;
    let moved = |time: i64| -> usize {
        run.river
            .iter()
            .filter(|r| r.time == time && r.from_label != r.to_label)
            .map(|r| r.trader_count)
            .sum()
    };
    let total: usize = run.partitions.iter().skip(1).map(|(t, _)| moved(*t)).sum();
    assert!(moved(first_after) >= 10, "{} traders moved at the switch", moved(first_after));
    assert!(moved(first_after) as f64 >= 0.9 * total as f64, "{} of {total} moves at the switch", moved(first_after));
    let ari: Vec<f64> = run.ari.iter().map(|(_, a)| a.unwrap()).collect();
    assert!(ari[1] < ari[0] && ari[1] < ari[2], "{ari:?}");
}

#[test]
fn stable_market_keeps_labels_and_leadlag() {
    let spec = MarketSpec {
        n_days: 40,
        edges: vec![PlantedEdge { from: 0, to: 1, sign: 1, fidelity: 0.9 }],
        seed: 5,
        ..MarketSpec::default()
    };
    let market = generate_market(&spec).unwrap();
    let m = classify_states(&market.trades, &market.grid, 0.01).unwrap();
    let run = rolling_stability::<f64>(&m, &cfg(20, 5), 9).unwrap();
    assert_eq!(run.partitions.len(), 5);
    for (_, a) in &run.ari {
        assert!(a.unwrap() > 0.9);
    }
    for (_, b) in &run.beta {
        assert!(b.unwrap() > 0.9);
    }
    let labels: Vec<_> = run.partitions.iter().map(|(_, p)| p.labels()).collect();
    assert!(labels.windows(2).all(|w| w[0] == w[1]));
    assert!(run.river.iter().all(|r| r.from_label == r.to_label || r.trader_count <= 2));
}

#[test]
fn windows_do_not_depend_on_where_the_run_starts() {
    let spec = MarketSpec {
        n_days: 35,
        seed: 2,
        ..MarketSpec::default()
    };
    let market = generate_market(&spec).unwrap();
    let m = classify_states(&market.trades, &market.grid, 0.01).unwrap();
    let full = rolling_stability::<f64>(&m, &cfg(15, 1), 4).unwrap();
    let days = m.grid().days();
    let late = m.window(days[10].1.start..m.n_slices());
    let part = rolling_stability::<f64>(&late, &cfg(15, 1), 4).unwrap();
    // raw partitions agree window by window; labels may differ in history
    let tail = &full.partitions[10..];
    assert_eq!(tail.len(), part.partitions.len());
    for ((ta, pa), (tb, pb)) in tail.iter().zip(&part.partitions) {
        assert_eq!(ta, tb);
        assert_eq!(pa.groups().into_values().collect::<std::collections::BTreeSet<_>>(), pb.groups().into_values().collect());
    }
}

#[test]
fn too_few_days_is_an_error() {
    let spec = MarketSpec {
        n_days: 5,
        ..MarketSpec::default()
    };
    let market = generate_market(&spec).unwrap();
    let m = classify_states(&market.trades, &market.grid, 0.01).unwrap();
    assert!(rolling_stability::<f64>(&m, &cfg(10, 1), 0).is_err());
}
