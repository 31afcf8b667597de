//! Power-domain NOMA: decoding order, interference terms, SINR, rates and
//! the constraint audit of the sum-rate problem.
//!
//! The product of a user channel and a cluster beam is the inner product
//! `ĥ_u^H w_k`. All powers are linear (watts), rates are in bps/Hz.

use serde::Serialize;

use crate::channel::StarRisState;
use crate::error::{Error, Result};
use crate::numerics::{inner, ComplexMatrix, C64};

/// Cluster membership of every user (`γ_{k,u}`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    clusters: usize,
    cluster_of: Vec<usize>,
}

impl ClusterAssignment {
    /// `cluster_of[u]` is the 0-based cluster of user `u`. Every cluster must
    /// be non-empty.
    pub fn new(clusters: usize, cluster_of: Vec<usize>) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::Contract("at least one cluster".into()));
        }
        if let Some(&bad) = cluster_of.iter().find(|&&k| k >= clusters) {
            return Err(Error::Contract(format!("cluster index {bad} >= {clusters}")));
        }
        for k in 0..clusters {
            if !cluster_of.contains(&k) {
                return Err(Error::Contract(format!("cluster {k} is empty")));
            }
        }
        Ok(Self {
            clusters,
            cluster_of,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters
    }

    pub fn num_users(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn cluster_of(&self, u: usize) -> usize {
        self.cluster_of[u]
    }

    pub fn labels(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn gamma(&self, k: usize, u: usize) -> bool {
        self.cluster_of[u] == k
    }

    /// Members of cluster `k` in ascending user order.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.cluster_of.len())
            .filter(|&u| self.cluster_of[u] == k)
            .collect()
    }

    pub fn size(&self, k: usize) -> usize {
        self.cluster_of.iter().filter(|&&c| c == k).count()
    }

    /// Relabels clusters so that `order[i]` becomes cluster `i`.
    pub fn relabeled(&self, order: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.clusters];
        for (new, &old) in order.iter().enumerate() {
            map[old] = new;
        }
        if order.len() != self.clusters || map.contains(&usize::MAX) {
            return Err(Error::Contract("relabeling is not a permutation".into()));
        }
        Self::new(
            self.clusters,
            self.cluster_of.iter().map(|&k| map[k]).collect(),
        )
    }
}

/// Per-cluster SIC order: `order[k]` lists members from first to last decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodingOrder {
    order: Vec<Vec<usize>>,
    position: Vec<usize>,
}

impl DecodingOrder {
    pub fn new(assignment: &ClusterAssignment, order: Vec<Vec<usize>>) -> Result<Self> {
        if order.len() != assignment.num_clusters() {
            return Err(Error::Contract("one order per cluster".into()));
        }
        let mut position = vec![usize::MAX; assignment.num_users()];
        for (k, members) in order.iter().enumerate() {
            let mut expect = assignment.members(k);
            let mut got = members.clone();
            expect.sort_unstable();
            got.sort_unstable();
            if expect != got {
                return Err(Error::Contract(format!(
                    "order of cluster {k} is not a permutation of its members"
                )));
            }
            for (pos, &u) in members.iter().enumerate() {
                position[u] = pos;
            }
        }
        Ok(Self { order, position })
    }

    pub fn cluster(&self, k: usize) -> &[usize] {
        &self.order[k]
    }

    /// `δ_k(u)`, 0-based.
    pub fn position(&self, u: usize) -> usize {
        self.position[u]
    }

    /// Reverses every cluster's order.
    pub fn reversed(&self) -> Self {
        let order: Vec<Vec<usize>> = self
            .order
            .iter()
            .map(|o| o.iter().rev().copied().collect())
            .collect();
        let mut position = self.position.clone();
        for o in &order {
            for (p, &u) in o.iter().enumerate() {
                position[u] = p;
            }
        }
        Self { order, position }
    }
}

/// Active beamforming vectors `w_k`, each `N_b × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveBeamforming {
    pub w: Vec<ComplexMatrix>,
}

impl ActiveBeamforming {
    pub fn zeros(clusters: usize, antennas: usize) -> Self {
        Self {
            w: vec![ComplexMatrix::zeros(antennas, 1); clusters],
        }
    }

    pub fn total_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_sqr()).sum()
    }

    pub fn cluster_powers(&self) -> Vec<f64> {
        self.w.iter().map(|w| w.norm_sqr()).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            w: self.w.iter().map(|w| w.scale(C64::new(s, 0.0))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct NomaParams {
    pub p0: f64,
    pub sigma2: f64,
    pub p_max: f64,
    pub r_min: Vec<f64>,
}

impl NomaParams {
    /// Equal power share `p0 = 1/U`.
    pub fn new(users: usize, sigma2: f64, p_max: f64, r_min: f64) -> Result<Self> {
        if users == 0 {
            return Err(Error::Contract("at least one user".into()));
        }
        if !(sigma2 > 0.0 && p_max > 0.0 && r_min >= 0.0) {
            return Err(Error::Contract(format!(
                "sigma2 {sigma2}, p_max {p_max}, r_min {r_min}"
            )));
        }
        Ok(Self {
            p0: 1.0 / users as f64,
            sigma2,
            p_max,
            r_min: vec![r_min; users],
        })
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Noise power from a density in dBm/Hz over `bandwidth_hz`, in watts.
pub fn noise_power(density_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(density_dbm_hz + 10.0 * bandwidth_hz.log10())
}

/// Evaluation context with every `|ĥ_u^H w_k|²` precomputed.
#[derive(Debug, Clone)]
pub struct NomaSystem<'a> {
    assignment: &'a ClusterAssignment,
    params: &'a NomaParams,
    /// `beam_gain[u][k] = |ĥ_u^H w_k|²`
    beam_gain: Vec<Vec<f64>>,
}

impl<'a> NomaSystem<'a> {
    pub fn new(
        channels: &[ComplexMatrix],
        beams: &ActiveBeamforming,
        assignment: &'a ClusterAssignment,
        params: &'a NomaParams,
    ) -> Result<Self> {
        if channels.len() != assignment.num_users() || params.r_min.len() != channels.len() {
            return Err(Error::Shape(format!(
                "{} channels, {} assigned users, {} rate targets",
                channels.len(),
                assignment.num_users(),
                params.r_min.len()
            )));
        }
        if beams.w.len() != assignment.num_clusters() {
            return Err(Error::Shape(format!(
                "{} beams for {} clusters",
                beams.w.len(),
                assignment.num_clusters()
            )));
        }
        for h in channels {
            if let Some(w) = beams.w.iter().find(|w| w.rows() != h.rows()) {
                return Err(Error::Shape(format!(
                    "channel length {} vs beam length {}",
                    h.rows(),
                    w.rows()
                )));
            }
        }
        let beam_gain = channels
            .iter()
            .map(|h| {
                beams
                    .w
                    .iter()
                    .map(|w| inner(h.as_slice(), w.as_slice()).norm_sqr())
                    .collect()
            })
            .collect();
        Ok(Self {
            assignment,
            params,
            beam_gain,
        })
    }

    pub fn assignment(&self) -> &ClusterAssignment {
        self.assignment
    }

    pub fn params(&self) -> &NomaParams {
        self.params
    }

    /// `|ĥ_u^H w_k|²`
    pub fn beam_gain(&self, u: usize, k: usize) -> f64 {
        self.beam_gain[u][k]
    }

    fn check_member(&self, k: usize, u: usize) -> Result<()> {
        if self.assignment.cluster_of(u) != k {
            return Err(Error::Contract(format!("user {u} is not in cluster {k}")));
        }
        Ok(())
    }

    /// Inter-cluster power at user `u`'s receiver, excluding cluster `k`:
    /// `Σ_{k'≠k} Σ_{u'} γ_{k',u'} |ĥ_u^H w_{k'}|²`.
    fn inter_at(&self, k: usize, u: usize) -> f64 {
        (0..self.assignment.num_clusters())
            .filter(|&kk| kk != k)
            .map(|kk| self.assignment.size(kk) as f64 * self.beam_gain[u][kk])
            .sum()
    }

    /// Number of members decoded after `u` in its cluster.
    fn later_count(&self, order: &DecodingOrder, k: usize, u: usize) -> usize {
        let pos = order.position(u);
        order
            .cluster(k)
            .iter()
            .filter(|&&v| order.position(v) > pos)
            .count()
    }

    /// Equivalent-combined channel gain `g^k_u`.
    pub fn equivalent_gain(&self, u: usize, k: usize) -> Result<f64> {
        self.check_member(k, u)?;
        Ok(self.beam_gain[u][k] / (self.inter_at(k, u) + self.params.sigma2))
    }

    /// Ascending equivalent gain per cluster, ties by ascending user index.
    pub fn decoding_order(&self) -> DecodingOrder {
        let order = (0..self.assignment.num_clusters())
            .map(|k| {
                let mut members: Vec<(f64, usize)> = self
                    .assignment
                    .members(k)
                    .into_iter()
                    .map(|u| (self.beam_gain[u][k] / (self.inter_at(k, u) + self.params.sigma2), u))
                    .collect();
                members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                members.into_iter().map(|(_, u)| u).collect()
            })
            .collect();
        DecodingOrder::new(self.assignment, order).expect("sorted members form a permutation")
    }

    pub fn intra_interference(&self, order: &DecodingOrder, k: usize, u: usize) -> Result<f64> {
        self.check_member(k, u)?;
        Ok(self.beam_gain[u][k] * self.later_count(order, k, u) as f64 * self.params.p0)
    }

    pub fn inter_interference(&self, k: usize, u: usize) -> Result<f64> {
        self.check_member(k, u)?;
        Ok(self.inter_at(k, u))
    }

    pub fn sinr(&self, order: &DecodingOrder, k: usize, u: usize) -> Result<f64> {
        let intra = self.intra_interference(order, k, u)?;
        let inter = self.inter_at(k, u);
        Ok(self.beam_gain[u][k] * self.params.p0 / (intra + inter + self.params.sigma2))
    }

    pub fn rate(&self, order: &DecodingOrder, k: usize, u: usize) -> Result<f64> {
        Ok((1.0 + self.sinr(order, k, u)?).log2())
    }

    /// SINR of user `u`'s signal observed at user `v` (decoded after `u`).
    pub fn cross_sinr(&self, order: &DecodingOrder, k: usize, v: usize, u: usize) -> Result<f64> {
        self.check_member(k, u)?;
        self.check_member(k, v)?;
        if v != u && order.position(v) <= order.position(u) {
            return Err(Error::Contract(format!(
                "user {v} is not decoded after user {u}"
            )));
        }
        let signal = self.beam_gain[v][k];
        let intra = signal * self.later_count(order, k, u) as f64 * self.params.p0;
        let inter = self.inter_at(k, v);
        Ok(signal * self.params.p0 / (intra + inter + self.params.sigma2))
    }

    /// Every `(v, u)` pair where the SIC condition fails.
    pub fn sic_audit(&self, order: &DecodingOrder) -> Vec<SicViolation> {
        let mut out = Vec::new();
        for k in 0..self.assignment.num_clusters() {
            let members = order.cluster(k);
            for (i, &u) in members.iter().enumerate() {
                for &v in &members[i + 1..] {
                    let at_v = self.cross_sinr(order, k, v, u).expect("ordered pair");
                    let own = self.sinr(order, k, u).expect("member");
                    if at_v < own {
                        out.push(SicViolation {
                            cluster: k,
                            strong: v,
                            weak: u,
                            sinr_at_strong: at_v,
                            sinr_own: own,
                        });
                    }
                }
            }
        }
        out
    }

    /// Rates of every user under `order`.
    pub fn rates(&self, order: &DecodingOrder) -> Vec<f64> {
        (0..self.assignment.num_users())
            .map(|u| {
                self.rate(order, self.assignment.cluster_of(u), u)
                    .expect("user belongs to its cluster")
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SicViolation {
    pub cluster: usize,
    pub strong: usize,
    pub weak: usize,
    pub sinr_at_strong: f64,
    pub sinr_own: f64,
}

/// A violated constraint of the sum-rate problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Rate below the user's minimum.
    MinRate { user: usize, rate: f64, required: f64 },
    /// Total beam power above the budget.
    PowerBudget { total: f64, p_max: f64 },
    /// Amplitude outside `[0, 1]`.
    AmplitudeRange { surface: usize, element: usize },
    /// Forward and backward amplitudes not summing to one.
    EnergySplit { surface: usize, element: usize, sum: f64 },
    /// Phase outside `[0, 2π)`.
    PhaseRange { surface: usize, element: usize },
}

impl Violation {
    /// Short constraint name.
    pub fn tag(&self) -> &'static str {
        match self {
            Violation::MinRate { .. } => "min-rate",
            Violation::PowerBudget { .. } => "power-budget",
            Violation::AmplitudeRange { .. } => "amplitude-range",
            Violation::EnergySplit { .. } => "energy-split",
            Violation::PhaseRange { .. } => "phase-range",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub min_rate: f64,
    pub violations: Vec<Violation>,
}

pub const ENERGY_SPLIT_TOL: f64 = 1e-12;

/// Constraint checks on the passive coefficients alone.
pub fn surface_violations(state: &StarRisState) -> Vec<Violation> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut out = Vec::new();
    for (l, s) in state.surfaces.iter().enumerate() {
        for m in 0..s.len() {
            let (bf, bb) = (s.beta_f[m], s.beta_b[m]);
            if !(0.0..=1.0).contains(&bf) || !(0.0..=1.0).contains(&bb) {
                out.push(Violation::AmplitudeRange { surface: l, element: m });
            }
            if (bf + bb - 1.0).abs() > ENERGY_SPLIT_TOL {
                out.push(Violation::EnergySplit {
                    surface: l,
                    element: m,
                    sum: bf + bb,
                });
            }
            let ok = |t: f64| (0.0..two_pi).contains(&t);
            if !ok(s.theta_f[m]) || !ok(s.theta_b[m]) {
                out.push(Violation::PhaseRange { surface: l, element: m });
            }
        }
    }
    out
}

/// Sum rate, minimum rate and the violated constraints of a configuration.
pub fn objective_and_feasibility(
    system: &NomaSystem<'_>,
    order: &DecodingOrder,
    beams: &ActiveBeamforming,
    state: &StarRisState,
) -> Evaluation {
    let rates = system.rates(order);
    let sum_rate = rates.iter().sum();
    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let mut violations: Vec<Violation> = rates
        .iter()
        .enumerate()
        .filter(|&(u, &r)| r < system.params.r_min[u])
        .map(|(u, &r)| Violation::MinRate {
            user: u,
            rate: r,
            required: system.params.r_min[u],
        })
        .collect();
    let total = beams.total_power();
    if total > system.params.p_max {
        violations.push(Violation::PowerBudget {
            total,
            p_max: system.params.p_max,
        });
    }
    violations.extend(surface_violations(state));
    Evaluation {
        rates,
        sum_rate,
        min_rate,
        violations,
    }
}
