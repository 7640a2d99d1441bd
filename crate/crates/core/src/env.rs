//! Adapters exposing the world to the learner, from the typical UAV's or the jammer's side.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::agent::{
    apply_defense, deployment_world, uav_feature_len, uav_featurize, uav_observe, uav_reward, DefenseConfig, DefenseMode, JammerTracker,
    RewardWeights, UavTransition,
};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::geom::{Vec2, VelocityAction};
use crate::jammers::{
    jammer_feature_len, jammer_featurize, jammer_observe, jammer_reward, JammerObservation,
    JammerRewardWeights, JammerTransition,
};
use crate::learner::{argmax, DuelingNet, EnvStep, Environment};
use crate::world::{
    finalize, jammer_actions, reset, step, typical_actions, EpisodeRecord, StepEvents, Trajectory, WorldConfig,
    WorldState,
};

/// Everything that fixes the rules of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub world: WorldConfig,
    /// Defense the typical UAV's policy was (or is being) trained with.
    pub defense: DefenseConfig,
    pub weights: RewardWeights,
    pub jammer_weights: JammerRewardWeights,
    pub features: FeatureConfig,
}

impl Scenario {
    pub fn new(world: WorldConfig) -> Self {
        Self {
            world,
            defense: DefenseConfig::default(),
            weights: RewardWeights::default(),
            jammer_weights: JammerRewardWeights::default(),
            features: FeatureConfig::default(),
        }
    }

    /// Scenario the typical UAV trains in under `defense` (virtual jammer, raised threshold, deadline).
    pub fn training(world: &WorldConfig, defense: DefenseConfig) -> Result<Self> {
        Ok(Self {
            world: apply_defense(world, &defense)?,
            defense,
            ..Self::new(world.clone())
        })
    }

    /// Scenario a policy trained under `defense` is evaluated in: the real world, deadline override only.
    pub fn deployment(world: &WorldConfig, defense: DefenseConfig) -> Result<Self> {
        defense.validate()?;
        Ok(Self {
            world: deployment_world(world, &defense),
            defense,
            ..Self::new(world.clone())
        })
    }

    pub fn uav_feature_len(&self) -> usize {
        uav_feature_len(&self.features, &self.defense)
    }

    pub fn jammer_feature_len(&self) -> Result<usize> {
        let j = self
            .world
            .intelligent_jammer()
            .ok_or_else(|| Error::config("jammer.kind", "no intelligent jammer configured"))?;
        Ok(jammer_feature_len(&self.features, self.world.jammers[j].history_len))
    }

    fn horizon(&self) -> usize {
        (self.world.mission_deadline / self.world.dt).ceil() as usize
    }
}

/// One running episode plus the per-actor memories featurization needs.
#[derive(Debug, Clone)]
struct Episode {
    state: WorldState,
    tracker: JammerTracker,
    jammer_hist: VecDeque<JammerObservation>,
    events: Vec<StepEvents>,
    uav_return: f64,
    trajectory: Option<Trajectory>,
}

impl Episode {
    fn start(sc: &Scenario, seed: u64, record: bool) -> Result<Self> {
        let state = reset(&sc.world, seed)?;
        let mut ep = Self {
            state,
            tracker: JammerTracker::new(sc.defense.jammer_history_len),
            jammer_hist: VecDeque::new(),
            events: Vec::new(),
            uav_return: 0.0,
            trajectory: record.then(Trajectory::default),
        };
        ep.observe(sc)?;
        if let Some(t) = ep.trajectory.as_mut() {
            t.record(&sc.world, &ep.state, 0.0);
        }
        Ok(ep)
    }

    fn observe(&mut self, sc: &Scenario) -> Result<()> {
        if let Some(j) = sc.world.intelligent_jammer() {
            let truth = self.state.jammers[j].pose;
            let visible = !sc.defense.velocity_filter
                || truth.position.distance(self.state.typical.pose.position) <= sc.world.arena.sensing_radius;
            self.tracker.observe(&truth, visible, sc.world.dt)?;
            let cap = sc.world.jammers[j].history_len + 1;
            self.jammer_hist.push_back(jammer_observe(&sc.world, &self.state, j)?);
            while self.jammer_hist.len() > cap {
                self.jammer_hist.pop_front();
            }
        }
        Ok(())
    }

    fn uav_features(&self, sc: &Scenario) -> Vec<f64> {
        let mut obs = uav_observe(&sc.world, &self.state, &sc.defense);
        if sc.defense.mode == DefenseMode::Intelligent && !obs.jammer_track.is_empty() {
            obs.jammer_track = self.tracker.track();
        }
        uav_featurize(&obs, &sc.defense, &sc.features).values
    }

    fn jammer_features(&self, sc: &Scenario) -> Result<Vec<f64>> {
        let j = sc.world.intelligent_jammer().ok_or_else(|| Error::Usage("no intelligent jammer".into()))?;
        let hist: Vec<JammerObservation> = self.jammer_hist.iter().cloned().collect();
        Ok(jammer_featurize(&hist, sc.world.jammers[j].history_len, &sc.features)?.values)
    }

    fn jammer_airborne(&self, sc: &Scenario) -> bool {
        sc.world.intelligent_jammer().is_some_and(|j| self.state.jammers[j].airborne)
    }

    /// Advance one step; returns the events and the typical UAV's reward.
    fn advance(
        &mut self,
        sc: &Scenario,
        typical: &VelocityAction,
        jammer: Option<&VelocityAction>,
    ) -> Result<(WorldState, StepEvents, f64)> {
        let before = self.state.clone();
        let (after, ev) = step(&sc.world, &before, typical, jammer)?;
        let tr = UavTransition::from_step(&sc.world, &before, &after, &ev);
        let r = uav_reward(&tr, &sc.weights, &sc.defense);
        self.uav_return += r;
        self.events.push(ev);
        self.state = after;
        self.observe(sc)?;
        if let Some(t) = self.trajectory.as_mut() {
            t.record(&sc.world, &self.state, ev.data_delivered);
        }
        Ok((before, ev, r))
    }

    fn record(&self) -> Result<EpisodeRecord> {
        finalize(&self.events, self.state.initial_data, self.uav_return)
    }
}

/// Frozen greedy policy.
#[derive(Debug, Clone)]
pub struct Policy {
    pub net: DuelingNet<f32>,
}

impl Policy {
    pub fn act(&self, features: &[f64]) -> Result<usize> {
        let x: Vec<f32> = features.iter().map(|v| *v as f32).collect();
        Ok(argmax(&self.net.q_values(&x)?))
    }
}

/// Action closest to flying straight at the destination (used when no jammer policy is given).
fn scripted_jammer_action(sc: &Scenario, state: &WorldState) -> Option<VelocityAction> {
    let j = sc.world.intelligent_jammer()?;
    let js = &state.jammers[j];
    if !js.airborne {
        return None;
    }
    let spec = &sc.world.jammers[j];
    let to_goal = js.destination - js.pose.position;
    let dist = to_goal.norm();
    let pref = if dist > 0.0 {
        to_goal / dist * spec.limits.v_max.min(dist / sc.world.dt)
    } else {
        Vec2::zero()
    };
    jammer_actions(&sc.world, state)?
        .into_iter()
        .min_by(|a, b| (a.velocity - pref).norm().total_cmp(&(b.velocity - pref).norm()))
}

fn jammer_move(sc: &Scenario, ep: &Episode, policy: Option<&Policy>) -> Result<Option<VelocityAction>> {
    if !ep.jammer_airborne(sc) {
        return Ok(None);
    }
    match policy {
        Some(p) => {
            let a = p.act(&ep.jammer_features(sc)?)?;
            Ok(jammer_actions(&sc.world, &ep.state).map(|acts| acts[a]))
        }
        None => Ok(scripted_jammer_action(sc, &ep.state)),
    }
}

/// The typical UAV learns; any intelligent jammer follows `jammer_policy` (or flies straight home).
#[derive(Debug, Clone)]
pub struct UavEnv {
    pub scenario: Scenario,
    pub jammer_policy: Option<Policy>,
    pub record_trajectory: bool,
    episode: Option<Episode>,
}

impl UavEnv {
    pub fn new(scenario: Scenario, jammer_policy: Option<Policy>) -> Result<Self> {
        scenario.world.validate()?;
        scenario.defense.validate()?;
        scenario.weights.validate()?;
        if let (Some(p), Ok(len)) = (&jammer_policy, scenario.jammer_feature_len()) {
            if p.net.input_len() != len {
                return Err(Error::Checkpoint(format!(
                    "jammer policy expects {} features, scenario provides {len}",
                    p.net.input_len()
                )));
            }
        }
        Ok(Self {
            scenario,
            jammer_policy,
            record_trajectory: false,
            episode: None,
        })
    }

    pub fn state(&self) -> Option<&WorldState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.episode.as_ref().and_then(|e| e.trajectory.as_ref())
    }
}

impl Environment for UavEnv {
    fn feature_len(&self) -> usize {
        self.scenario.uav_feature_len()
    }

    fn action_count(&self) -> usize {
        self.scenario.world.actions.len()
    }

    fn horizon(&self) -> usize {
        self.scenario.horizon()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let ep = Episode::start(&self.scenario, seed, self.record_trajectory)?;
        let f = ep.uav_features(&self.scenario);
        self.episode = Some(ep);
        Ok(f)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let sc = &self.scenario;
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::Usage("step before reset".into()))?;
        let acts = typical_actions(&sc.world, &ep.state);
        let typ = *acts
            .get(action)
            .ok_or_else(|| Error::Usage(format!("action {action} out of range")))?;
        let jam = jammer_move(sc, ep, self.jammer_policy.as_ref())?;
        let (_, ev, reward) = ep.advance(sc, &typ, jam.as_ref())?;
        Ok(EnvStep {
            features: ep.uav_features(sc),
            reward,
            terminal: ev.terminal,
            record: if ev.terminal { Some(ep.record()?) } else { None },
        })
    }
}

/// The intelligent jammer learns against a frozen typical-UAV policy.
///
/// The jammer's episode ends when it lands, crashes or expires, or when the typical UAV's
/// episode ends. The record always describes the typical UAV's full mission.
#[derive(Debug, Clone)]
pub struct JammerEnv {
    pub scenario: Scenario,
    pub uav_policy: Policy,
    episode: Option<Episode>,
}

impl JammerEnv {
    pub fn new(scenario: Scenario, uav_policy: Policy) -> Result<Self> {
        scenario.world.validate()?;
        scenario.jammer_weights.validate()?;
        scenario.jammer_feature_len()?;
        if uav_policy.net.input_len() != scenario.uav_feature_len()
            || uav_policy.net.action_count() != scenario.world.actions.len()
        {
            return Err(Error::Checkpoint("typical-UAV policy does not match the scenario".into()));
        }
        Ok(Self {
            scenario,
            uav_policy,
            episode: None,
        })
    }
}

impl Environment for JammerEnv {
    fn feature_len(&self) -> usize {
        self.scenario.jammer_feature_len().unwrap_or(0)
    }

    fn action_count(&self) -> usize {
        let j = self.scenario.world.intelligent_jammer().unwrap_or(0);
        self.scenario.world.jammers.get(j).map_or(0, |s| s.actions.len())
    }

    fn horizon(&self) -> usize {
        let j = self.scenario.world.intelligent_jammer().unwrap_or(0);
        let jd = self.scenario.world.jammers.get(j).map_or(0.0, |s| s.deadline);
        (jd.min(self.scenario.world.mission_deadline) / self.scenario.world.dt).ceil() as usize
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let ep = Episode::start(&self.scenario, seed, false)?;
        let f = ep.jammer_features(&self.scenario)?;
        self.episode = Some(ep);
        Ok(f)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let sc = &self.scenario;
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::Usage("step before reset".into()))?;
        let j = sc.world.intelligent_jammer().expect("checked in new");
        let jacts = jammer_actions(&sc.world, &ep.state).expect("intelligent jammer");
        let jam = *jacts
            .get(action)
            .ok_or_else(|| Error::Usage(format!("action {action} out of range")))?;
        let typ_idx = self.uav_policy.act(&ep.uav_features(sc))?;
        let typ = typical_actions(&sc.world, &ep.state)[typ_idx];
        let (before, ev, _) = ep.advance(sc, &typ, Some(&jam))?;
        let je = ev.jammer.unwrap_or_default();
        let spec = &sc.world.jammers[j];
        let js = &ep.state.jammers[j];
        let tr = JammerTransition {
            typical_sinr_next: ep.state.link.scheduled_sinr(),
            nearest_neighbor: je.nearest_neighbor,
            own_radius: spec.radius,
            entered_no_fly: je.entered_no_fly,
            time_left_next: js.time_left,
            goal_distance_next: js.pose.position.distance(js.destination),
            v_max: spec.limits.v_max,
            arrived: je.arrived,
            typical_distance: before.jammers[j].pose.position.distance(before.typical.pose.position),
            typical_distance_next: js.pose.position.distance(ep.state.typical.pose.position),
        };
        let reward = jammer_reward(&tr, &sc.jammer_weights);
        let terminal = ev.terminal || je.finished;
        let features = ep.jammer_features(sc)?;
        let record = if terminal {
            // Let the typical UAV finish its mission so the record covers all of it.
            while !ep.state.terminal {
                let a = self.uav_policy.act(&ep.uav_features(sc))?;
                let typ = typical_actions(&sc.world, &ep.state)[a];
                ep.advance(sc, &typ, None)?;
            }
            Some(ep.record()?)
        } else {
            None
        };
        Ok(EnvStep {
            features,
            reward,
            terminal,
            record,
        })
    }
}

/// One-dimensional corridor: move left or right, reward only on reaching the right end.
#[derive(Debug, Clone)]
pub struct CorridorEnv {
    pub length: usize,
    pub horizon: usize,
    pos: usize,
    t: usize,
}

impl CorridorEnv {
    pub fn new(length: usize, horizon: usize) -> Self {
        Self { length: length.max(2), horizon: horizon.max(1), pos: 0, t: 0 }
    }

    fn features(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.length + 1];
        f[self.pos] = 1.0;
        f[self.length] = (self.horizon - self.t) as f64 / self.horizon as f64;
        f
    }
}

impl Environment for CorridorEnv {
    fn feature_len(&self) -> usize {
        self.length + 1
    }

    fn action_count(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.pos = (seed % (self.length as u64 / 2).max(1)) as usize;
        self.t = 0;
        Ok(self.features())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if action > 1 {
            return Err(Error::Usage(format!("action {action} out of range")));
        }
        if self.t >= self.horizon {
            return Err(Error::Usage("step on a finished corridor episode".into()));
        }
        self.t += 1;
        if action == 1 {
            self.pos += 1;
        } else {
            self.pos = self.pos.saturating_sub(1);
        }
        let arrived = self.pos == self.length - 1;
        let terminal = arrived || self.t >= self.horizon;
        let reward = if arrived { 1.0 } else { 0.0 };
        Ok(EnvStep {
            features: self.features(),
            reward,
            terminal,
            record: terminal.then_some(EpisodeRecord {
                success: arrived,
                collected_fraction: 0.0,
                on_time: arrived,
                collision: false,
                total_reward: reward,
            }),
        })
    }
}
