//! Correlation-based K-means user pairing.

use crate::error::{Error, Result};
use crate::noma::ClusterAssignment;
use crate::numerics::{inner, ComplexMatrix, Rng};

pub const MAX_ITERATIONS: usize = 100;

/// Moduli of normalized channel correlations, `U × U`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    cor: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn from_channels(channels: &[ComplexMatrix]) -> Result<Self> {
        let n = channels.len();
        let norms: Vec<f64> = channels.iter().map(|h| h.frobenius_norm()).collect();
        if let Some(u) = norms.iter().position(|&x| x == 0.0 || !x.is_finite()) {
            return Err(Error::DegenerateChannel(u));
        }
        let mut cor = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let c = if i == j {
                    1.0
                } else {
                    (inner(channels[i].as_slice(), channels[j].as_slice()).norm()
                        / (norms[i] * norms[j]))
                        .min(1.0)
                };
                cor[i * n + j] = c;
                cor[j * n + i] = c;
            }
        }
        Ok(Self { n, cor })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cor[i * self.n + j]
    }
}

/// `|ĥ_i^H ĥ_j| / (‖ĥ_i‖ ‖ĥ_j‖)`.
pub fn correlation(hi: &ComplexMatrix, hj: &ComplexMatrix) -> Result<f64> {
    let (ni, nj) = (hi.frobenius_norm(), hj.frobenius_norm());
    if ni == 0.0 {
        return Err(Error::DegenerateChannel(0));
    }
    if nj == 0.0 {
        return Err(Error::DegenerateChannel(1));
    }
    Ok((inner(hi.as_slice(), hj.as_slice()).norm() / (ni * nj)).min(1.0))
}

/// Clusters and their representatives during clustering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusteringState {
    pub clusters: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
}

impl ClusteringState {
    fn cluster_of(&self, u: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&u))
    }
}

/// Total correlation between `u` and the members of every other cluster.
pub fn cluster_correlation(u: usize, state: &ClusteringState, cor: &CorrelationMatrix) -> Result<f64> {
    let k = state
        .cluster_of(u)
        .ok_or_else(|| Error::Contract(format!("user {u} is unassigned")))?;
    Ok(state
        .clusters
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != k)
        .flat_map(|(_, c)| c.iter())
        .map(|&v| cor.get(u, v))
        .sum())
}

/// Member of cluster `k` with the least correlation to other clusters.
pub fn update_representative(k: usize, state: &ClusteringState, cor: &CorrelationMatrix) -> Result<usize> {
    let members = state
        .clusters
        .get(k)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| Error::Contract(format!("cluster {k} is empty")))?;
    let mut sorted = members.clone();
    sorted.sort_unstable();
    let mut best = (f64::INFINITY, usize::MAX);
    for &u in &sorted {
        let c = cluster_correlation(u, state, cor)?;
        if c < best.0 {
            best = (c, u);
        }
    }
    Ok(best.1)
}

/// Index of the representative most correlated with `u`; ties go to the lowest cluster.
fn best_representative(u: usize, reps: &[usize], cor: &CorrelationMatrix) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, &r) in reps.iter().enumerate() {
        let c = cor.get(u, r);
        if c > best.0 {
            best = (c, k);
        }
    }
    best.1
}

fn assign(reps: &[usize], cor: &CorrelationMatrix) -> ClusteringState {
    let mut clusters: Vec<Vec<usize>> = reps.iter().map(|&r| vec![r]).collect();
    for u in 0..cor.len() {
        if !reps.contains(&u) {
            clusters[best_representative(u, reps, cor)].push(u);
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    ClusteringState {
        clusters,
        representatives: reps.to_vec(),
    }
}

fn intra_correlation(state: &ClusteringState, cor: &CorrelationMatrix) -> f64 {
    state
        .clusters
        .iter()
        .map(|c| {
            let mut s = 0.0;
            for (i, &a) in c.iter().enumerate() {
                for &b in &c[i + 1..] {
                    s += cor.get(a, b);
                }
            }
            s
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingOutcome {
    pub assignment: ClusterAssignment,
    pub state: ClusteringState,
    pub iterations: usize,
    pub converged: bool,
}

/// Correlation K-means with random initial representatives drawn from `rng`.
pub fn kmeans_pairing(channels: &[ComplexMatrix], k: usize, rng: &mut Rng) -> Result<PairingOutcome> {
    let u = channels.len();
    if k == 0 || u < k {
        return Err(Error::Config(vec![format!(
            "clusters: need 1 <= K <= U, got K = {k}, U = {u}"
        )]));
    }
    let cor = CorrelationMatrix::from_channels(channels)?;
    let mut reps = rng.sample_distinct(u, k);
    let mut best: Option<(f64, ClusteringState)> = None;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let state = assign(&reps, &cor);
        let score = intra_correlation(&state, &cor);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, state.clone()));
        }
        let next: Vec<usize> = (0..k)
            .map(|c| update_representative(c, &state, &cor))
            .collect::<Result<_>>()?;
        if next == reps {
            converged = true;
            break;
        }
        reps = next;
    }
    let state = if converged {
        assign(&reps, &cor)
    } else {
        best.expect("at least one iteration").1
    };
    let mut labels = vec![0; u];
    for (c, members) in state.clusters.iter().enumerate() {
        for &m in members {
            labels[m] = c;
        }
    }
    Ok(PairingOutcome {
        assignment: ClusterAssignment::new(k, labels)?,
        state,
        iterations,
        converged,
    })
}

/// True when every non-representative sits with its most correlated representative.
pub fn is_argmax_consistent(state: &ClusteringState, cor: &CorrelationMatrix) -> bool {
    state.clusters.iter().enumerate().all(|(k, members)| {
        members.iter().all(|&u| {
            state.representatives.contains(&u)
                || state
                    .representatives
                    .iter()
                    .all(|&r| cor.get(u, r) <= cor.get(u, state.representatives[k]))
        })
    })
}
