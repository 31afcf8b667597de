//! Training runs over (algorithm, seed, power, element-count) cells.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::rl::env::{project_active_action, project_passive_action};
use crate::rl::train::{episode_rng, greedy_episode};
use crate::rl::{train, Agents, Algorithm, Env, EpisodeStats, LayoutSource};

/// One independent training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub p_max_dbm: f64,
    /// Element count override; `None` keeps the configured grid.
    pub elements: Option<usize>,
}

impl Cell {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.elements
            .cmp(&other.elements)
            .then(self.p_max_dbm.total_cmp(&other.p_max_dbm))
            .then(self.algorithm.cmp(&other.algorithm))
            .then(self.seed.cmp(&other.seed))
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub cell: Cell,
    /// Elements per surface actually used.
    pub elements: usize,
    pub p_max: f64,
    pub trace: Vec<EpisodeStats>,
    /// `(β^F, β^B)` per element, per surface, at the last step of the last episode.
    pub amplitudes: Vec<Vec<(f64, f64)>>,
    /// `‖w_k‖²` at the last step of the last episode.
    pub cluster_powers: Vec<f64>,
    pub wall_clock: Duration,
    pub agents: Agents,
}

/// Mean of `mean_reward` over the last `window` episodes.
pub fn final_mean(trace: &[EpisodeStats], window: usize) -> f64 {
    final_mean_by(trace, window, |s| s.mean_reward)
}

pub(crate) fn final_mean_by(trace: &[EpisodeStats], window: usize, f: impl Fn(&EpisodeStats) -> f64) -> f64 {
    let n = window.min(trace.len()).max(1);
    let tail = &trace[trace.len().saturating_sub(n)..];
    tail.iter().map(f).sum::<f64>() / tail.len().max(1) as f64
}

/// Trains one cell.
pub fn run_cell(config: &ExperimentConfig, cell: Cell) -> Result<RunRecord> {
    let env = Env::new(config.env_config(cell.p_max_dbm, cell.elements))?;
    let start = Instant::now();
    let out = train(&env, cell.algorithm, &config.hp, cell.seed)?;
    let wall_clock = start.elapsed();
    let last = out.trace.last().ok_or_else(|| Error::Contract("empty trace".into()))?;
    let beams = project_active_action(&last.final_active, env.antennas(), config.system.clusters, env.config().p_max)?;
    let surfaces = project_passive_action(&last.final_passive, env.num_surfaces(), env.elements())?;
    let amplitudes = surfaces
        .surfaces
        .iter()
        .map(|s| s.beta_f.iter().copied().zip(s.beta_b.iter().copied()).collect())
        .collect();
    Ok(RunRecord {
        config_hash: config.hash(),
        cell,
        elements: env.elements(),
        p_max: env.config().p_max,
        trace: out.trace,
        amplitudes,
        cluster_powers: beams.cluster_powers(),
        wall_clock,
        agents: out.agents,
    })
}

/// Runs every cell, in parallel when `parallel`, and returns records sorted by cell key.
pub fn run_cells(config: &ExperimentConfig, cells: Vec<Cell>, parallel: bool) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let mut records: Vec<RunRecord> = if parallel {
        cells.par_iter().map(|&c| run_cell(config, c)).collect::<Result<_>>()?
    } else {
        cells.iter().map(|&c| run_cell(config, c)).collect::<Result<_>>()?
    };
    records.sort_by(|a, b| a.cell.cmp_key(&b.cell));
    Ok(records)
}

/// One record per (algorithm, seed) at the configured power and grid.
pub fn run_convergence(config: &ExperimentConfig, parallel: bool) -> Result<Vec<RunRecord>> {
    let mut cells = Vec::new();
    for &algorithm in &config.algorithms {
        for &seed in &config.seeds {
            cells.push(Cell {
                algorithm,
                seed,
                p_max_dbm: config.system.p_max_dbm,
                elements: None,
            });
        }
    }
    run_cells(config, cells, parallel)
}

/// MAPPO at each element count of the sweep, per seed.
pub fn run_element_sweep(config: &ExperimentConfig, parallel: bool) -> Result<Vec<RunRecord>> {
    let mut cells = Vec::new();
    for &m in &config.sweeps.elements {
        for &seed in &config.seeds {
            cells.push(Cell {
                algorithm: Algorithm::Mappo,
                seed,
                p_max_dbm: config.system.p_max_dbm,
                elements: Some(m),
            });
        }
    }
    run_cells(config, cells, parallel)
}

/// Every algorithm at each transmit budget of the sweep, per seed.
pub fn run_power_sweep(config: &ExperimentConfig, parallel: bool) -> Result<Vec<RunRecord>> {
    let mut cells = Vec::new();
    for &p in &config.sweeps.p_max_dbm {
        for &algorithm in &config.algorithms {
            for &seed in &config.seeds {
                cells.push(Cell {
                    algorithm,
                    seed,
                    p_max_dbm: p,
                    elements: None,
                });
            }
        }
    }
    run_cells(config, cells, parallel)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceReport {
    pub surface: usize,
    pub forward_faces_ap: bool,
    pub beta_f: Vec<f64>,
    pub beta_b: Vec<f64>,
    pub sum_forward: f64,
    pub sum_backward: f64,
    pub sum_toward_ap: f64,
    pub sum_away_from_ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalReport {
    pub surfaces: Vec<SurfaceReport>,
    pub cluster_powers: Vec<f64>,
    pub p_max: f64,
    pub cluster_members: Vec<Vec<usize>>,
    /// Clusters in which no member has a direct AP path.
    pub hidden_clusters: Vec<bool>,
    pub rates: Vec<f64>,
    pub min_rate: f64,
    pub sum_rate: f64,
}

/// Evaluates trained agents with mean actions on the configured layout with
/// its fixed user positions, over the channel draw of episode 0 of `seed`.
pub fn dump_optimal_config(config: &ExperimentConfig, agents: &Agents, seed: u64) -> Result<OptimalReport> {
    let mut env_cfg = config.env_config(config.system.p_max_dbm, None);
    env_cfg.layout_source = LayoutSource::Fixture;
    env_cfg.users = env_cfg.layout.num_users();
    let env = Env::new(env_cfg)?;
    let ep = env.reset(episode_rng(seed, 0))?;
    let mut rng = episode_rng(seed, 0).derive(1);
    let (ep, out) = greedy_episode(&env, agents, config.hp.steps, ep, &mut rng)?;
    let surfaces = ep
        .surfaces
        .surfaces
        .iter()
        .enumerate()
        .map(|(l, s)| {
            let (sf, sb) = ep.surfaces.amplitude_sums(l);
            let toward = ep.layout.forward_faces_ap(l);
            SurfaceReport {
                surface: l,
                forward_faces_ap: toward,
                beta_f: s.beta_f.clone(),
                beta_b: s.beta_b.clone(),
                sum_forward: sf,
                sum_backward: sb,
                sum_toward_ap: if toward { sf } else { sb },
                sum_away_from_ap: if toward { sb } else { sf },
            }
        })
        .collect();
    let k = ep.assignment.num_clusters();
    let cluster_members: Vec<Vec<usize>> = (0..k).map(|c| ep.assignment.members(c)).collect();
    let hidden_clusters = cluster_members
        .iter()
        .map(|m| m.iter().all(|&u| !ep.adjacency.c_b_u[u]))
        .collect();
    Ok(OptimalReport {
        surfaces,
        cluster_powers: ep.beams.cluster_powers(),
        p_max: env.config().p_max,
        cluster_members,
        hidden_clusters,
        rates: out.rates,
        min_rate: out.min_rate,
        sum_rate: out.sum_rate,
    })
}
