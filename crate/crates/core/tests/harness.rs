use std::collections::BTreeMap;

use starnoma_core::harness::export::{parse_trace_csv, revalidate_trace, summary_csv, trace_csv, write_records};
use starnoma_core::harness::{
    final_mean, run_cell, run_convergence, run_element_sweep, run_power_sweep, Cell, ExperimentConfig, RunRecord,
};
use starnoma_core::rl::{Algorithm, Env};

const BENCHMARK: &str = include_str!("../../../configs/benchmark.toml");

fn benchmark() -> ExperimentConfig {
    ExperimentConfig::from_toml(BENCHMARK).unwrap()
}

fn small() -> ExperimentConfig {
    let mut cfg = benchmark();
    cfg.hp.episodes = 20;
    cfg.seeds = vec![0, 1];
    cfg
}

#[test]
fn every_csv_row_revalidates() {
    let cfg = small();
    let records = run_convergence(&cfg, true).unwrap();
    assert_eq!(records.len(), cfg.algorithms.len() * cfg.seeds.len());
    for r in &records {
        let env = Env::new(cfg.env_config(r.cell.p_max_dbm, r.cell.elements)).unwrap();
        let csv = trace_csv(&r.trace).unwrap();
        let bad = revalidate_trace(&env, &cfg.hp, r.cell.seed, &r.trace, &csv).unwrap();
        assert!(bad.is_empty(), "{:?}: {bad:?}", r.cell);
        assert_eq!(parse_trace_csv(&csv).unwrap().len(), cfg.hp.episodes);
    }
}

#[test]
fn per_step_fading_rows_revalidate() {
    let mut cfg = small();
    cfg.system.per_step_fading = true;
    let cell = Cell {
        algorithm: Algorithm::Mappo,
        seed: 4,
        p_max_dbm: 15.0,
        elements: Some(5),
    };
    let r = run_cell(&cfg, cell).unwrap();
    let env = Env::new(cfg.env_config(15.0, Some(5))).unwrap();
    let csv = trace_csv(&r.trace).unwrap();
    assert!(revalidate_trace(&env, &cfg.hp, 4, &r.trace, &csv).unwrap().is_empty());
}

#[test]
fn records_are_written_and_sorted() {
    let cfg = small();
    let records = run_convergence(&cfg, true).unwrap();
    let keys: Vec<(Algorithm, u64)> = records.iter().map(|r| (r.cell.algorithm, r.cell.seed)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let dir = tempfile::tempdir().unwrap();
    let files = write_records(dir.path(), &records, cfg.system.users).unwrap();
    assert_eq!(files.len(), records.len() + 2);
    let summary = summary_csv(&records, cfg.system.users).unwrap();
    assert_eq!(summary.lines().count(), records.len() + 1);
}

#[test]
fn random_policy_trace_is_flat() {
    let cfg = benchmark();
    let r = run_cell(
        &cfg,
        Cell {
            algorithm: Algorithm::Random,
            seed: 0,
            p_max_dbm: cfg.system.p_max_dbm,
            elements: None,
        },
    )
    .unwrap();
    // least-squares slope and its standard error
    let n = r.trace.len() as f64;
    let xs: Vec<f64> = (0..r.trace.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = r.trace.iter().map(|s| s.mean_reward).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let se = (resid / (n - 2.0) / sxx).sqrt();
    assert!((slope / se).abs() < 3.0, "slope {slope:e} se {se:e}");
}

fn by_seed<'a>(records: &'a [RunRecord], key: impl Fn(&RunRecord) -> bool) -> BTreeMap<u64, &'a RunRecord> {
    records.iter().filter(|r| key(r)).map(|r| (r.cell.seed, r)).collect()
}

#[test]
#[ignore = "trains 15 MAPPO runs; about 10 minutes in release"]
fn reward_grows_with_elements() {
    let cfg = benchmark();
    let records = run_element_sweep(&cfg, true).unwrap();
    let at = |m: usize| by_seed(&records, |r| r.elements == m);
    let (m5, m10, m20) = (at(5), at(10), at(20));
    let mut grows = 0;
    let mut diminishing = 0;
    for &seed in &cfg.seeds {
        let (a, b, c) = (final_mean(&m5[&seed].trace, 50), final_mean(&m10[&seed].trace, 50), final_mean(&m20[&seed].trace, 50));
        println!("seed {seed}: M=5 {a:.4e} M=10 {b:.4e} M=20 {c:.4e}");
        grows += usize::from(c >= a);
        diminishing += usize::from(c - b <= b - a);
    }
    println!("M=20 >= M=5 on {grows}/5 seeds, diminishing increments on {diminishing}/5 seeds");
    assert!(grows >= 3);
    assert!(diminishing >= 3);
}

#[test]
#[ignore = "trains 75 runs; about 25 minutes in release"]
fn throughput_across_power_budgets() {
    let mut cfg = benchmark();
    cfg.algorithms = vec![Algorithm::Mappo, Algorithm::Ppo, Algorithm::A2c];
    let records = run_power_sweep(&cfg, true).unwrap();
    let throughput = |r: &RunRecord| {
        let tail = &r.trace[r.trace.len() - 50..];
        tail.iter().map(|s| s.sum_rate).sum::<f64>() / 50.0 / cfg.system.users as f64
    };
    let mut monotone = true;
    for &algo in &cfg.algorithms {
        let means: Vec<f64> = cfg
            .sweeps
            .p_max_dbm
            .iter()
            .map(|&p| {
                let rs = by_seed(&records, |r| r.cell.algorithm == algo && r.cell.p_max_dbm == p);
                rs.values().map(|r| throughput(r)).sum::<f64>() / rs.len() as f64
            })
            .collect();
        println!("{}: {means:.4?}", algo.name());
        monotone &= means.windows(2).all(|w| w[1] >= w[0]);
    }
    let mut ordered_points = 0;
    for &p in &cfg.sweeps.p_max_dbm {
        let get = |a| by_seed(&records, |r| r.cell.algorithm == a && r.cell.p_max_dbm == p);
        let (m, pp, a2) = (get(Algorithm::Mappo), get(Algorithm::Ppo), get(Algorithm::A2c));
        let seeds = cfg.seeds.iter().filter(|s| {
            let (x, y, z) = (throughput(m[s]), throughput(pp[s]), throughput(a2[s]));
            x >= y && y >= z
        });
        let count = seeds.count();
        println!("{p} dBm: mappo >= ppo >= a2c on {count}/5 seeds");
        ordered_points += usize::from(count >= 3);
    }
    assert!(monotone);
    assert_eq!(ordered_points, cfg.sweeps.p_max_dbm.len());
}
