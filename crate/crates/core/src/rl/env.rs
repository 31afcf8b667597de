//! Episodic environment: deployment, channels, pairing, projected actions and
//! the min-rate reward.

use serde::{Deserialize, Serialize};

use crate::channel::{combined_channels, sample_channels, wrap_phase, ChannelParams, ChannelRealization, StarRisState};
use crate::environment::{compute_adjacency, sample_deployment, AdjacencyIndicators, Layout};
use crate::error::{Error, Result};
use crate::noma::{surface_violations, ActiveBeamforming, ClusterAssignment, NomaParams, NomaSystem};
use crate::numerics::{ComplexMatrix, Rng, C64};
use crate::pairing::kmeans_pairing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutSource {
    /// User positions are taken from the layout itself.
    Fixture,
    /// Fresh uniform user positions every episode.
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub layout: Layout,
    pub layout_source: LayoutSource,
    pub users: usize,
    pub clusters: usize,
    pub channel: ChannelParams,
    pub sigma2: f64,
    pub p_max: f64,
    pub r_min: f64,
    /// Redraw small-scale fading before every step instead of once per episode.
    pub per_step_fading: bool,
}

/// `w_k` entries from consecutive `(re, im)` pairs, scaled into the budget.
pub fn project_active_action(raw: &[f64], antennas: usize, clusters: usize, p_max: f64) -> Result<ActiveBeamforming> {
    if raw.len() != 2 * antennas * clusters {
        return Err(Error::Shape(format!(
            "active action of length {}, expected {}",
            raw.len(),
            2 * antennas * clusters
        )));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("active action"));
    }
    let mut beams = ActiveBeamforming {
        w: raw
            .chunks_exact(2 * antennas)
            .map(|c| {
                ComplexMatrix::column(c.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect())
                    .expect("finite, nonempty")
            })
            .collect(),
    };
    // Margin so that the power summed in any order stays within the budget.
    let limit = p_max * (1.0 - 4.0 * raw.len() as f64 * f64::EPSILON);
    let total = beams.total_power();
    if total > limit {
        beams = beams.scaled((limit / total).sqrt());
        while beams.total_power() > limit {
            beams = beams.scaled(1.0 - f64::EPSILON);
        }
    }
    Ok(beams)
}

/// `(logit, θ^F, θ^B)` per element into amplitudes `σ(logit)`, `1 − σ(logit)`
/// and wrapped phases.
pub fn project_passive_action(raw: &[f64], surfaces: usize, elements: usize) -> Result<StarRisState> {
    if raw.len() != 3 * surfaces * elements {
        return Err(Error::Shape(format!(
            "passive action of length {}, expected {}",
            raw.len(),
            3 * surfaces * elements
        )));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("passive action"));
    }
    let mut state = StarRisState::uniform(surfaces, elements, 0.5, 0.0);
    for (l, s) in state.surfaces.iter_mut().enumerate() {
        for m in 0..elements {
            let c = &raw[3 * (l * elements + m)..3 * (l * elements + m) + 3];
            let bf = 1.0 / (1.0 + (-c[0]).exp());
            s.beta_f[m] = bf;
            s.beta_b[m] = 1.0 - bf;
            s.theta_f[m] = wrap_phase(c[1]);
            s.theta_b[m] = wrap_phase(c[2]);
        }
    }
    Ok(state)
}

/// State of one running episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub layout: Layout,
    pub adjacency: AdjacencyIndicators,
    pub realization: ChannelRealization,
    pub assignment: ClusterAssignment,
    pub params: NomaParams,
    pub beams: ActiveBeamforming,
    pub surfaces: StarRisState,
    /// Combined channels under `surfaces`.
    pub channels: Vec<ComplexMatrix>,
    rng: Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub min_rate: f64,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let mut problems = Vec::new();
        if config.clusters == 0 || config.users < config.clusters {
            problems.push(format!("clusters: need 1 <= K <= U, got K = {}, U = {}", config.clusters, config.users));
        }
        if config.layout_source == LayoutSource::Fixture && config.layout.num_users() != config.users {
            problems.push(format!(
                "users: fixture has {} users, config asks for {}",
                config.layout.num_users(),
                config.users
            ));
        }
        if !(config.sigma2 > 0.0) {
            problems.push(format!("sigma2: must be positive, got {}", config.sigma2));
        }
        if !(config.p_max > 0.0) {
            problems.push(format!("p_max: must be positive, got {}", config.p_max));
        }
        if !(config.r_min >= 0.0) {
            problems.push(format!("r_min: must be nonnegative, got {}", config.r_min));
        }
        if config.channel.ap_antennas == 0 {
            problems.push("ap_antennas: must be positive".into());
        }
        if config.layout.num_surfaces() == 0 || config.layout.elements_per_surface() == 0 {
            problems.push("surfaces: need at least one surface with elements".into());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        config.layout.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn antennas(&self) -> usize {
        self.config.channel.ap_antennas
    }

    pub fn num_surfaces(&self) -> usize {
        self.config.layout.num_surfaces()
    }

    pub fn elements(&self) -> usize {
        self.config.layout.elements_per_surface()
    }

    pub fn active_len(&self) -> usize {
        2 * self.antennas() * self.config.clusters
    }

    pub fn passive_len(&self) -> usize {
        3 * self.num_surfaces() * self.elements()
    }

    pub fn obs_len(&self) -> usize {
        let c = &self.config;
        c.clusters * c.users + self.active_len() + 5 * self.num_surfaces() * self.elements() + 2 * self.antennas() * c.users
    }

    /// New deployment, channels and pairing. All randomness comes from `rng`,
    /// which the episode keeps for per-step fading.
    pub fn reset(&self, mut rng: Rng) -> Result<Episode> {
        let c = &self.config;
        let layout = match c.layout_source {
            LayoutSource::Fixture => c.layout.clone(),
            LayoutSource::SeededRandom => sample_deployment(&mut rng, &c.layout, c.users)?,
        };
        let adjacency = compute_adjacency(&layout)?;
        let realization = sample_channels(&layout, &adjacency, &c.channel, &mut rng)?;
        let surfaces = StarRisState::uniform(layout.num_surfaces(), layout.elements_per_surface(), 0.5, 0.0);
        let channels = combined_channels(&realization, &adjacency, &surfaces)?;
        let pairing = kmeans_pairing(&channels, c.clusters, &mut rng)?;
        let assignment = canonical_labels(&pairing.assignment, &channels)?;
        let params = NomaParams::new(c.users, c.sigma2, c.p_max, c.r_min)?;
        Ok(Episode {
            layout,
            adjacency,
            realization,
            assignment,
            params,
            beams: ActiveBeamforming::zeros(c.clusters, self.antennas()),
            surfaces,
            channels,
            rng,
        })
    }

    /// Observation: pairing indicators, previous beams, previous surface
    /// coefficients and the current combined channels.
    pub fn observation(&self, ep: &Episode) -> Vec<f64> {
        let c = &self.config;
        let mut obs = Vec::with_capacity(self.obs_len());
        for k in 0..c.clusters {
            for u in 0..c.users {
                obs.push(if ep.assignment.gamma(k, u) { 1.0 } else { 0.0 });
            }
        }
        let amp = c.p_max.sqrt();
        for w in &ep.beams.w {
            for z in w.as_slice() {
                obs.push(z.re / amp);
                obs.push(z.im / amp);
            }
        }
        for s in &ep.surfaces.surfaces {
            for m in 0..s.len() {
                obs.extend_from_slice(&[
                    s.beta_f[m],
                    s.theta_f[m].cos(),
                    s.theta_f[m].sin(),
                    s.theta_b[m].cos(),
                    s.theta_b[m].sin(),
                ]);
            }
        }
        for h in &ep.channels {
            let r2 = h.norm_sqr();
            let scale = if r2 > 0.0 { (1.0 + r2 / c.sigma2).ln() / r2.sqrt() } else { 0.0 };
            for z in h.as_slice() {
                obs.push(z.re * scale);
                obs.push(z.im * scale);
            }
        }
        obs
    }

    /// Applies raw actions; fails if a projected action is infeasible.
    pub fn step(&self, ep: &mut Episode, raw_active: &[f64], raw_passive: &[f64]) -> Result<StepOutcome> {
        let beams = project_active_action(raw_active, self.antennas(), self.config.clusters, self.config.p_max)?;
        let surfaces = project_passive_action(raw_passive, self.num_surfaces(), self.elements())?;
        check_feasible(&beams, &surfaces, self.config.p_max)?;
        if self.config.per_step_fading {
            ep.realization = sample_channels(&ep.layout, &ep.adjacency, &self.config.channel, &mut ep.rng)?;
        }
        ep.channels = combined_channels(&ep.realization, &ep.adjacency, &surfaces)?;
        ep.beams = beams;
        ep.surfaces = surfaces;
        Ok(evaluate(ep))
    }
}

/// Rates of the episode's current configuration.
pub fn evaluate(ep: &Episode) -> StepOutcome {
    let system = NomaSystem::new(&ep.channels, &ep.beams, &ep.assignment, &ep.params)
        .expect("episode dimensions are consistent");
    let rates = system.rates(&system.decoding_order());
    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    StepOutcome {
        reward: min_rate,
        min_rate,
        sum_rate: rates.iter().sum(),
        rates,
    }
}

/// Errors unless the beams meet the power budget and every element meets
/// the amplitude, energy-split and phase constraints.
pub fn check_feasible(beams: &ActiveBeamforming, surfaces: &StarRisState, p_max: f64) -> Result<()> {
    let total = beams.total_power();
    if total > p_max {
        return Err(Error::Contract(format!("beam power {total} exceeds {p_max}")));
    }
    if let Some(v) = surface_violations(surfaces).first() {
        return Err(Error::Contract(format!("surface constraint {} violated: {v:?}", v.tag())));
    }
    Ok(())
}

/// Relabels clusters by descending mean channel power so weak clusters come last.
pub fn canonical_labels(assignment: &ClusterAssignment, channels: &[ComplexMatrix]) -> Result<ClusterAssignment> {
    let mut keyed: Vec<(f64, usize)> = (0..assignment.num_clusters())
        .map(|k| {
            let m = assignment.members(k);
            let mean = m.iter().map(|&u| channels[u].norm_sqr()).sum::<f64>() / m.len() as f64;
            (mean, k)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|(_, k)| k).collect();
    assignment.relabeled(&order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::verification_layout;
    use crate::noma::{objective_and_feasibility, noise_power};

    pub(crate) fn fixture_env(source: LayoutSource) -> Env {
        Env::new(EnvConfig {
            layout: verification_layout(),
            layout_source: source,
            users: 10,
            clusters: 4,
            channel: ChannelParams::default(),
            sigma2: noise_power(-100.0, 1e7),
            p_max: 0.1,
            r_min: 0.1,
            per_step_fading: false,
        })
        .unwrap()
    }

    #[test]
    fn active_projection() {
        let zero = project_active_action(&[0.0; 8], 2, 2, 1.0).unwrap();
        assert_eq!(zero.total_power(), 0.0);
        let raw = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let kept = project_active_action(&raw, 2, 2, 10.0).unwrap();
        assert_eq!(kept.w[1][(0, 0)], C64::new(1.0, 1.0));
        assert_eq!(kept.total_power(), 4.0);
        let scaled = project_active_action(&raw, 2, 2, 1.0).unwrap();
        assert!(scaled.total_power() <= 1.0);
        assert!((scaled.total_power() - 1.0).abs() < 1e-12);
        assert!(project_active_action(&raw[..6], 2, 2, 1.0).is_err());
    }

    #[test]
    fn active_projection_never_exceeds_budget() {
        let mut rng = Rng::new(3);
        for _ in 0..2000 {
            let raw: Vec<f64> = (0..32).map(|_| 10.0 * rng.standard_normal()).collect();
            let p = 10f64.powf(rng.uniform_range(-3.0, 1.0));
            let beams = project_active_action(&raw, 4, 4, p).unwrap();
            assert!(beams.total_power() <= p);
            let reversed: f64 = beams.w.iter().rev().flat_map(|w| w.as_slice().iter().rev()).map(|z| z.norm_sqr()).sum();
            assert!(reversed <= p);
        }
    }

    #[test]
    fn passive_projection() {
        let s = project_passive_action(&[0.0, 3.0 * std::f64::consts::PI, -0.5], 1, 1).unwrap();
        assert_eq!(s.surfaces[0].beta_f[0], 0.5);
        assert_eq!(s.surfaces[0].beta_b[0], 0.5);
        assert!((s.surfaces[0].theta_f[0] - std::f64::consts::PI).abs() < 1e-12);
        assert!(s.surfaces[0].theta_b[0] >= 0.0);
        let mut rng = Rng::new(4);
        let raw: Vec<f64> = (0..60).map(|_| 30.0 * rng.standard_normal()).collect();
        let s = project_passive_action(&raw, 2, 10).unwrap();
        assert!(surface_violations(&s).is_empty());
    }

    #[test]
    fn observation_shape_and_reward() {
        let env = fixture_env(LayoutSource::SeededRandom);
        let mut ep = env.reset(Rng::new(9)).unwrap();
        let obs = env.observation(&ep);
        assert_eq!(obs.len(), env.obs_len());
        assert_eq!(env.obs_len(), 40 + 32 + 100 + 80);
        assert!(obs.iter().all(|x| x.is_finite()));

        let out = env.step(&mut ep, &vec![0.0; env.active_len()], &vec![0.0; env.passive_len()]).unwrap();
        assert_eq!(out.reward, 0.0);

        let mut rng = Rng::new(10);
        let a: Vec<f64> = (0..env.active_len()).map(|_| rng.standard_normal()).collect();
        let p: Vec<f64> = (0..env.passive_len()).map(|_| rng.standard_normal()).collect();
        let out = env.step(&mut ep, &a, &p).unwrap();
        let sys = NomaSystem::new(&ep.channels, &ep.beams, &ep.assignment, &ep.params).unwrap();
        let ev = objective_and_feasibility(&sys, &sys.decoding_order(), &ep.beams, &ep.surfaces);
        assert!((out.reward - ev.min_rate).abs() <= 1e-12 * ev.min_rate);
        assert!((out.sum_rate - ev.sum_rate).abs() <= 1e-12 * ev.sum_rate);
    }

    #[test]
    fn single_user_reward_is_its_rate() {
        let mut layout = verification_layout();
        layout.mus.truncate(1);
        layout.reference_pairing = None;
        let env = Env::new(EnvConfig {
            layout,
            layout_source: LayoutSource::Fixture,
            users: 1,
            clusters: 1,
            channel: ChannelParams::default(),
            sigma2: 1e-6,
            p_max: 1.0,
            r_min: 0.0,
            per_step_fading: false,
        })
        .unwrap();
        let mut ep = env.reset(Rng::new(1)).unwrap();
        let out = env.step(&mut ep, &[1.0; 8], &vec![0.0; env.passive_len()]).unwrap();
        assert_eq!(out.rates.len(), 1);
        assert_eq!(out.reward, out.rates[0]);
        assert!(out.reward > 0.0);
    }

    #[test]
    fn reset_is_deterministic_and_canonical() {
        let env = fixture_env(LayoutSource::SeededRandom);
        let a = env.reset(Rng::new(77)).unwrap();
        let b = env.reset(Rng::new(77)).unwrap();
        assert_eq!(a.layout, b.layout);
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(env.observation(&a), env.observation(&b));
        let means: Vec<f64> = (0..4)
            .map(|k| {
                let m = a.assignment.members(k);
                m.iter().map(|&u| a.channels[u].norm_sqr()).sum::<f64>() / m.len() as f64
            })
            .collect();
        assert!(means.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn per_step_fading_changes_channels() {
        let mut env = fixture_env(LayoutSource::Fixture);
        env.config.per_step_fading = true;
        let mut ep = env.reset(Rng::new(5)).unwrap();
        let before = ep.realization.clone();
        env.step(&mut ep, &vec![0.1; env.active_len()], &vec![0.0; env.passive_len()]).unwrap();
        assert_ne!(before, ep.realization);
        assert_eq!(ep.layout.mus, verification_layout().mus);
    }

    #[test]
    fn config_validation_lists_fields() {
        let env = fixture_env(LayoutSource::Fixture);
        let mut c = env.config().clone();
        c.clusters = 11;
        c.p_max = -1.0;
        match Env::new(c) {
            Err(Error::Config(list)) => {
                assert!(list.iter().any(|m| m.starts_with("clusters")));
                assert!(list.iter().any(|m| m.starts_with("p_max")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
