//! The typical UAV's observation, features, reward and anti-jamming defenses.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{azimuth, boundary_block, FeatureBuilder, FeatureConfig, FeatureVector, Frame};
use crate::geom::{violates_no_fly, Pose, Rect, Vec2};
use crate::jammers::JammerSpec;
use crate::world::{StepEvents, WorldConfig, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    /// Reward per megabit collected.
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    pub a7: f64,
    pub d_buffer: f64,
    pub d_buffer2: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            a1: 0.05,
            a2: 25.0,
            a3: 25.0,
            a4: 1.0,
            a5: 20.0,
            a6: 0.1,
            a7: 10.0,
            d_buffer: 4.0,
            d_buffer2: 10.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
            ("a4", self.a4),
            ("a5", self.a5),
            ("a6", self.a6),
            ("a7", self.a7),
            ("d_buffer", self.d_buffer),
            ("d_buffer2", self.d_buffer2),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("weights.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DefenseMode {
    #[default]
    None,
    VirtualJammer,
    HigherThreshold,
    Intelligent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseConfig {
    pub mode: DefenseMode,
    pub virtual_position: Vec2,
    pub virtual_power: f64,
    /// Added to the SINR threshold during training.
    pub threshold_boost: f64,
    pub jammer_history_len: usize,
    /// Jammer is only seen inside the sensing region; elsewhere it is extrapolated.
    pub velocity_filter: bool,
    /// Replaces the mission deadline when set (training and deployment).
    pub mission_deadline: Option<f64>,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            mode: DefenseMode::None,
            virtual_position: Vec2::zero(),
            virtual_power: 1e-3 / 3.0,
            threshold_boost: 0.4,
            jammer_history_len: 4,
            velocity_filter: false,
            mission_deadline: None,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            DefenseMode::HigherThreshold if !(self.threshold_boost > 0.0) => {
                Err(Error::config("defense.threshold_boost", "must be > 0 for higher_threshold"))
            }
            DefenseMode::VirtualJammer if !(self.virtual_power >= 0.0 && self.virtual_power.is_finite()) => {
                Err(Error::config("defense.virtual_power", "must be finite and >= 0"))
            }
            DefenseMode::Intelligent if self.jammer_history_len == 0 => {
                Err(Error::config("defense.jammer_history_len", "must be >= 1"))
            }
            _ => match self.mission_deadline {
                Some(d) if !(d > 0.0) => Err(Error::config("defense.mission_deadline", "must be > 0")),
                _ => Ok(()),
            },
        }
    }
}

/// World used to train under `defense`.
pub fn apply_defense(world: &WorldConfig, defense: &DefenseConfig) -> Result<WorldConfig> {
    defense.validate()?;
    let mut w = deployment_world(world, defense);
    match defense.mode {
        DefenseMode::VirtualJammer => {
            if violates_no_fly(defense.virtual_position, &world.arena) {
                return Err(Error::config(
                    "defense.virtual_position",
                    "outside the arena or inside a no-fly zone",
                ));
            }
            w.jammers.push(JammerSpec::continuous(defense.virtual_position, defense.virtual_power));
        }
        DefenseMode::HigherThreshold => w.radio.sinr_threshold += defense.threshold_boost,
        DefenseMode::None | DefenseMode::Intelligent => {}
    }
    Ok(w)
}

/// World used to evaluate a policy trained under `defense`.
pub fn deployment_world(world: &WorldConfig, defense: &DefenseConfig) -> WorldConfig {
    let mut w = world.clone();
    if let Some(d) = defense.mission_deadline {
        w.mission_deadline = d;
    }
    w
}

/// Linear ramp from `-weight` at contact distance `reach` to 0 at `reach + buffer`.
pub fn proximity_penalty(d: f64, reach: f64, weight: f64, buffer: f64) -> f64 {
    if d <= reach {
        -weight
    } else if d <= reach + buffer && buffer > 0.0 {
        -weight * (1.0 - (d - reach) / buffer)
    } else {
        0.0
    }
}

/// `weight * (time_left - goal_distance / v_max)` when that slack is negative.
pub fn slack_penalty(time_left: f64, goal_distance: f64, v_max: f64, weight: f64) -> f64 {
    let slack = time_left - goal_distance / v_max;
    if slack < 0.0 {
        weight * slack
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub position: Vec2,
    pub data_left: f64,
    pub received_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavObservation {
    pub own: Pose,
    pub destination: Vec2,
    pub v_max: f64,
    pub max_turn_rate: f64,
    /// Same-altitude UAVs inside the sensing region.
    pub others: Vec<Pose>,
    pub nodes: Vec<NodeView>,
    pub time_left: f64,
    /// Known or estimated jammer positions, oldest first; empty unless the defense is intelligent.
    pub jammer_track: Vec<Vec2>,
    pub arena: Rect,
    /// Normalisers for the node block.
    pub initial_data: f64,
    pub noise_power: f64,
}

/// Raw observation. The jammer track holds the true current position in intelligent mode
/// and is left empty otherwise; [`JammerTracker`] supplies histories.
pub fn uav_observe(config: &WorldConfig, state: &WorldState, defense: &DefenseConfig) -> UavObservation {
    let me = &state.typical.pose;
    let others = state
        .others
        .iter()
        .map(|o| o.pose)
        .filter(|p| {
            p.altitude == me.altitude && p.position.distance(me.position) <= config.arena.sensing_radius
        })
        .collect();
    let nodes = state
        .nodes
        .iter()
        .zip(&state.link.received_power)
        .map(|(n, pr)| NodeView {
            position: n.position,
            data_left: n.data_left,
            received_power: *pr,
        })
        .collect();
    let jammer_track = match (defense.mode, config.intelligent_jammer()) {
        (DefenseMode::Intelligent, Some(j)) => vec![state.jammers[j].pose.position],
        _ => Vec::new(),
    };
    UavObservation {
        own: *me,
        destination: state.typical.destination,
        v_max: config.typical_limits.v_max,
        max_turn_rate: config.typical_limits.max_turn_rate,
        others,
        nodes,
        time_left: state.typical.time_left,
        jammer_track,
        arena: config.arena.bounds(),
        initial_data: config.initial_data,
        noise_power: config.radio.noise_power,
    }
}

pub fn uav_feature_len(cfg: &FeatureConfig, defense: &DefenseConfig) -> usize {
    let base = 9 + 8 + 7 * cfg.uav_pad + 6 * cfg.node_pad + 1;
    if defense.mode == DefenseMode::Intelligent {
        base + 2 * (defense.jammer_history_len + 1)
    } else {
        base
    }
}

pub fn uav_featurize(obs: &UavObservation, defense: &DefenseConfig, cfg: &FeatureConfig) -> FeatureVector {
    let l = cfg.length_scale;
    let s = cfg.speed_scale;
    let me = &obs.own;
    let frame = Frame::toward(me.position, obs.destination, me.heading);
    let mut fb = FeatureBuilder::default();

    let v = frame.vector(me.velocity);
    let g = frame.point(obs.destination);
    fb.push(
        "own",
        &[
            v.x / s,
            v.y / s,
            g.x / l,
            g.y / l,
            g.norm() / l,
            azimuth(g),
            me.radius / l,
            obs.v_max / s,
            frame.heading(me.heading),
        ],
    );

    fb.push("arena", &boundary_block(&frame, &obs.arena, me.position, l));

    let mut others: Vec<&Pose> = obs.others.iter().collect();
    others.sort_by(|a, b| {
        a.position
            .distance(me.position)
            .total_cmp(&b.position.distance(me.position))
    });
    let mut block = vec![0.0; 7 * cfg.uav_pad];
    for (i, o) in others.iter().take(cfg.uav_pad).enumerate() {
        let p = frame.point(o.position);
        let ov = frame.vector(o.velocity);
        block[7 * i..7 * i + 7].copy_from_slice(&[
            p.x / l,
            p.y / l,
            ov.x / s,
            ov.y / s,
            p.norm() / l,
            azimuth(p),
            o.radius / l,
        ]);
    }
    fb.push("others", &block);

    let mut nodes: Vec<&NodeView> = obs.nodes.iter().collect();
    nodes.sort_by(|a, b| b.received_power.total_cmp(&a.received_power));
    let mut block = vec![0.0; 6 * cfg.node_pad];
    for (i, n) in nodes.iter().take(cfg.node_pad).enumerate() {
        let p = frame.point(n.position);
        block[6 * i..6 * i + 6].copy_from_slice(&[
            p.x / l,
            p.y / l,
            p.norm() / l,
            azimuth(p),
            n.data_left / obs.initial_data,
            n.received_power / obs.noise_power,
        ]);
    }
    fb.push("nodes", &block);
    fb.push("time_left", &[obs.time_left / cfg.time_scale]);

    if defense.mode == DefenseMode::Intelligent {
        let frames = defense.jammer_history_len + 1;
        let mut block = vec![0.0; 2 * frames];
        let kept = &obs.jammer_track[obs.jammer_track.len().saturating_sub(frames)..];
        if let Some(oldest) = kept.first() {
            let pad = frames - kept.len();
            for f in 0..frames {
                let q = if f < pad { *oldest } else { kept[f - pad] };
                let p = frame.point(q);
                block[2 * f] = p.x / l;
                block[2 * f + 1] = p.y / l;
            }
        }
        fb.push("jammer", &block);
    }
    fb.finish()
}

/// Velocity-filter estimate from a history of jammer velocities.
///
/// Returns `(velocity, position, heading)`; a zero mean velocity keeps `prev_heading`.
pub fn estimate_jammer_motion(
    history: &[Vec2],
    last_position: Vec2,
    dt: f64,
    prev_heading: f64,
) -> Result<(Vec2, Vec2, f64)> {
    if history.is_empty() {
        return Err(Error::Usage("velocity history is empty".into()));
    }
    let sum = history.iter().fold(Vec2::zero(), |acc, v| acc + *v);
    let v = sum / history.len() as f64;
    let heading = if v.norm() > 0.0 { v.angle() } else { prev_heading };
    Ok((v, last_position + v * dt, heading))
}

/// The typical UAV's belief about the mobile jammer over the last few steps.
#[derive(Debug, Clone, Default)]
pub struct JammerTracker {
    positions: VecDeque<Vec2>,
    velocities: VecDeque<Vec2>,
    heading: f64,
    capacity: usize,
}

impl JammerTracker {
    pub fn new(history_len: usize) -> Self {
        Self {
            capacity: history_len + 1,
            ..Self::default()
        }
    }

    /// Record one step. When `visible` is false and a history exists, the position is extrapolated.
    pub fn observe(&mut self, truth: &Pose, visible: bool, dt: f64) -> Result<()> {
        let (pos, vel) = if visible || self.velocities.is_empty() {
            self.heading = truth.heading;
            (truth.position, truth.velocity)
        } else {
            let hist: Vec<Vec2> = self.velocities.iter().copied().collect();
            let last = *self.positions.back().unwrap_or(&truth.position);
            let (v, p, h) = estimate_jammer_motion(&hist, last, dt, self.heading)?;
            self.heading = h;
            (p, v)
        };
        self.positions.push_back(pos);
        self.velocities.push_back(vel);
        while self.positions.len() > self.capacity {
            self.positions.pop_front();
        }
        while self.velocities.len() > self.capacity.saturating_sub(1).max(1) {
            self.velocities.pop_front();
        }
        Ok(())
    }

    pub fn track(&self) -> Vec<Vec2> {
        self.positions.iter().copied().collect()
    }
}

/// Everything the reward needs from one step of the typical UAV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UavTransition {
    pub data_before: f64,
    pub data_after: f64,
    pub nearest_other: Option<(f64, f64)>,
    pub own_radius: f64,
    pub entered_no_fly: bool,
    pub time_left_next: f64,
    pub goal_distance_next: f64,
    pub v_max: f64,
    pub arrived: bool,
    /// Horizontal distance to the mobile jammer after the step.
    pub jammer_distance_next: Option<f64>,
}

impl UavTransition {
    pub fn from_step(config: &WorldConfig, before: &WorldState, after: &WorldState, ev: &StepEvents) -> Self {
        let typ = &after.typical;
        let jammer_distance_next = config
            .intelligent_jammer()
            .map(|j| after.jammers[j].pose.position.distance(typ.pose.position));
        Self {
            data_before: before.remaining_data(),
            data_after: after.remaining_data(),
            nearest_other: ev.nearest_other,
            own_radius: typ.pose.radius,
            entered_no_fly: ev.entered_no_fly,
            time_left_next: typ.time_left,
            goal_distance_next: typ.pose.position.distance(typ.destination),
            v_max: config.typical_limits.v_max,
            arrived: ev.arrived,
            jammer_distance_next,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UavRewardTerms {
    pub data: f64,
    pub collision: f64,
    pub obstacle: f64,
    pub time: f64,
    pub arrival: f64,
    pub step: f64,
    pub jammer: f64,
}

impl UavRewardTerms {
    pub fn total(&self) -> f64 {
        self.data + self.collision + self.obstacle + self.time + self.arrival + self.step + self.jammer
    }
}

pub fn uav_reward_terms(tr: &UavTransition, w: &RewardWeights, defense: &DefenseConfig) -> UavRewardTerms {
    let jammer = match (defense.mode, tr.jammer_distance_next) {
        (DefenseMode::Intelligent, Some(d)) if d <= w.d_buffer2 && w.d_buffer2 > 0.0 => {
            -w.a7 * (1.0 - d / w.d_buffer2)
        }
        _ => 0.0,
    };
    UavRewardTerms {
        data: w.a1 * (tr.data_before - tr.data_after) / 1e6,
        collision: tr
            .nearest_other
            .map_or(0.0, |(d, r)| proximity_penalty(d, tr.own_radius + r, w.a2, w.d_buffer)),
        obstacle: if tr.entered_no_fly { -w.a3 } else { 0.0 },
        time: slack_penalty(tr.time_left_next, tr.goal_distance_next, tr.v_max, w.a4),
        arrival: if tr.arrived { w.a5 } else { 0.0 },
        step: -w.a6,
        jammer,
    }
}

pub fn uav_reward(tr: &UavTransition, w: &RewardWeights, defense: &DefenseConfig) -> f64 {
    uav_reward_terms(tr, w, defense).total()
}
