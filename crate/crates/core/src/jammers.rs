//! Fixed ground jammers and the mobile, learning jammer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{azimuth, boundary_block, FeatureBuilder, FeatureConfig, FeatureVector, Frame};
use crate::geom::{ActionSetConfig, KinematicLimits, Pose, Rect, Vec2};
use crate::radio::Interferer;
use crate::world::{WorldConfig, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JammerKind {
    #[default]
    None,
    Continuous,
    Periodic,
    Intelligent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JammerSpec {
    pub kind: JammerKind,
    /// Fixed location, or the take-off point of an intelligent jammer.
    pub position: Vec2,
    /// Landing point (intelligent only).
    pub destination: Vec2,
    /// 0 for ground jammers.
    pub altitude: f64,
    pub tx_power: f64,
    pub period_on: f64,
    pub period_total: f64,
    pub limits: KinematicLimits,
    pub radius: f64,
    pub deadline: f64,
    /// Past frames kept in the jammer's state (and in the defender's jammer block).
    pub history_len: usize,
    pub actions: ActionSetConfig,
}

impl Default for JammerSpec {
    fn default() -> Self {
        Self {
            kind: JammerKind::None,
            position: Vec2::zero(),
            destination: Vec2::zero(),
            altitude: 0.0,
            tx_power: 1e-3 / 3.0,
            period_on: 60.0,
            period_total: 60.0,
            limits: KinematicLimits {
                v_max: 2.0,
                max_turn_rate: std::f64::consts::FRAC_PI_3,
            },
            radius: 1.0,
            deadline: 100.0,
            history_len: 4,
            actions: ActionSetConfig::default(),
        }
    }
}

impl JammerSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn continuous(position: Vec2, tx_power: f64) -> Self {
        Self {
            kind: JammerKind::Continuous,
            position,
            tx_power,
            ..Self::default()
        }
    }

    pub fn periodic(position: Vec2, tx_power: f64, period_on: f64) -> Self {
        Self {
            kind: JammerKind::Periodic,
            position,
            tx_power,
            period_on,
            ..Self::default()
        }
    }

    pub fn intelligent(start: Vec2, destination: Vec2, altitude: f64, tx_power: f64) -> Self {
        Self {
            kind: JammerKind::Intelligent,
            position: start,
            destination,
            altitude,
            tx_power,
            ..Self::default()
        }
    }

    pub fn validate(&self, typical_altitude: f64) -> Result<()> {
        if self.kind == JammerKind::None {
            return Ok(());
        }
        if !(self.tx_power >= 0.0 && self.tx_power.is_finite()) {
            return Err(Error::config("jammer.tx_power", "must be finite and >= 0"));
        }
        if !self.position.is_finite() || !self.altitude.is_finite() || self.altitude < 0.0 {
            return Err(Error::config("jammer.position", "position/altitude must be finite, altitude >= 0"));
        }
        match self.kind {
            JammerKind::Periodic => {
                if !(self.period_total > 0.0 && self.period_on > 0.0 && self.period_on <= self.period_total) {
                    return Err(Error::config(
                        "jammer.period_on",
                        "need 0 < period_on <= period_total",
                    ));
                }
            }
            JammerKind::Intelligent => {
                if self.altitude == typical_altitude {
                    return Err(Error::config(
                        "jammer.altitude",
                        "an aerial jammer must fly at a different height from the typical UAV",
                    ));
                }
                if self.altitude <= 0.0 {
                    return Err(Error::config("jammer.altitude", "intelligent jammer must be airborne"));
                }
                if !(self.deadline > 0.0) {
                    return Err(Error::config("jammer.deadline", "must be > 0"));
                }
                if self.history_len == 0 {
                    return Err(Error::config("jammer.history_len", "must be >= 1"));
                }
                self.limits.validate("jammer.limits")?;
                self.actions.validate()?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// Transmit power at episode time `elapsed`. Periodic jammers start in their on-window.
pub fn emission(spec: &JammerSpec, elapsed: f64) -> f64 {
    match spec.kind {
        JammerKind::None => 0.0,
        JammerKind::Continuous | JammerKind::Intelligent => spec.tx_power,
        JammerKind::Periodic => {
            if elapsed.rem_euclid(spec.period_total) < spec.period_on {
                spec.tx_power
            } else {
                0.0
            }
        }
    }
}

/// Dynamic state of one jammer during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JammerState {
    pub pose: Pose,
    pub destination: Vec2,
    pub emitting: bool,
    pub time_left: f64,
    /// False once an intelligent jammer has landed, crashed or run out of time.
    pub airborne: bool,
    pub arrived: bool,
    pub collided: bool,
}

impl JammerState {
    pub fn initial(spec: &JammerSpec) -> Self {
        let heading = (spec.destination - spec.position).angle();
        let heading = if heading.is_finite() { heading } else { 0.0 };
        let airborne = spec.kind == JammerKind::Intelligent;
        Self {
            pose: Pose::at_rest(spec.position, spec.altitude, heading, spec.radius),
            destination: spec.destination,
            emitting: emission(spec, 0.0) > 0.0,
            time_left: spec.deadline,
            airborne,
            arrived: false,
            collided: false,
        }
    }

    /// Current emission, taking flight status into account.
    pub fn power(&self, spec: &JammerSpec, elapsed: f64) -> f64 {
        if spec.kind == JammerKind::Intelligent && !self.airborne {
            return 0.0;
        }
        emission(spec, elapsed)
    }

    pub fn interferer(&self, spec: &JammerSpec, elapsed: f64) -> Interferer {
        Interferer {
            position: self.pose.position,
            altitude: spec.altitude,
            power: self.power(spec, elapsed),
        }
    }
}

/// What the typical UAV exposes to the jammer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalView {
    pub position: Vec2,
    pub altitude: f64,
    pub velocity: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JammerObservation {
    pub own: Pose,
    pub destination: Vec2,
    pub v_max: f64,
    pub neighbors: Vec<Pose>,
    pub typical: TypicalView,
    pub active_nodes: Vec<Vec2>,
    pub time_left: f64,
    pub arena: Rect,
}

/// Raw observation of the jammer at index `jammer` in the world's jammer list.
pub fn jammer_observe(
    config: &WorldConfig,
    state: &WorldState,
    jammer: usize,
) -> Result<JammerObservation> {
    let spec = config
        .jammers
        .get(jammer)
        .ok_or_else(|| Error::Usage(format!("no jammer at index {jammer}")))?;
    if spec.kind != JammerKind::Intelligent {
        return Err(Error::Usage("jammer_observe needs an intelligent jammer".into()));
    }
    let js = &state.jammers[jammer];
    let neighbors = state
        .others
        .iter()
        .map(|o| o.pose)
        .filter(|p| {
            p.altitude == spec.altitude
                && p.position.distance(js.pose.position) <= config.arena.sensing_radius
        })
        .collect();
    let t = &state.typical.pose;
    Ok(JammerObservation {
        own: js.pose,
        destination: js.destination,
        v_max: spec.limits.v_max,
        neighbors,
        typical: TypicalView {
            position: t.position,
            altitude: t.altitude,
            velocity: t.velocity,
            radius: t.radius,
        },
        active_nodes: state
            .nodes
            .iter()
            .filter(|n| n.is_active())
            .map(|n| n.position)
            .collect(),
        time_left: js.time_left,
        arena: config.arena.bounds(),
    })
}

pub fn jammer_feature_len(cfg: &FeatureConfig, history_len: usize) -> usize {
    9 + 8 + 7 * cfg.uav_pad + (history_len + 1) * (5 + 4 * cfg.node_pad) + 1
}

/// `history` is oldest first and ends with the current observation.
/// Frames missing at the start of an episode repeat the oldest entry.
pub fn jammer_featurize(
    history: &[JammerObservation],
    history_len: usize,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    let current = history
        .last()
        .ok_or_else(|| Error::Usage("empty jammer history".into()))?;
    let l = cfg.length_scale;
    let s = cfg.speed_scale;
    let own = &current.own;
    let frame = Frame::toward(own.position, current.destination, own.heading);
    let mut fb = FeatureBuilder::default();

    let v = frame.vector(own.velocity);
    let g = frame.point(current.destination);
    fb.push(
        "own",
        &[
            v.x / s,
            v.y / s,
            g.x / l,
            g.y / l,
            g.norm() / l,
            azimuth(g),
            own.radius / l,
            current.v_max / s,
            frame.heading(own.heading),
        ],
    );

    fb.push("arena", &boundary_block(&frame, &current.arena, own.position, l));

    let mut neigh: Vec<&Pose> = current.neighbors.iter().collect();
    neigh.sort_by(|a, b| {
        a.position
            .distance(own.position)
            .total_cmp(&b.position.distance(own.position))
    });
    let mut block = vec![0.0; 7 * cfg.uav_pad];
    for (i, n) in neigh.iter().take(cfg.uav_pad).enumerate() {
        let p = frame.point(n.position);
        let nv = frame.vector(n.velocity);
        block[7 * i..7 * i + 7].copy_from_slice(&[
            p.x / l,
            p.y / l,
            nv.x / s,
            nv.y / s,
            p.norm() / l,
            azimuth(p),
            n.radius / l,
        ]);
    }
    fb.push("neighbors", &block);

    let frames = history_len + 1;
    let start = history.len().saturating_sub(frames);
    let kept = &history[start..];
    let pad = frames - kept.len();
    let per = 5 + 4 * cfg.node_pad;
    let mut hist = vec![0.0; frames * per];
    for f in 0..frames {
        let obs = if f < pad { &kept[0] } else { &kept[f - pad] };
        let out = &mut hist[f * per..(f + 1) * per];
        let tp = frame.point(obs.typical.position);
        let tv = frame.vector(obs.typical.velocity);
        out[..5].copy_from_slice(&[
            tp.x / l,
            tp.y / l,
            (obs.typical.altitude - own.altitude) / l,
            tv.x / s,
            tv.y / s,
        ]);
        let mut nodes: Vec<Vec2> = obs.active_nodes.clone();
        nodes.sort_by(|a, b| {
            a.distance(obs.typical.position)
                .total_cmp(&b.distance(obs.typical.position))
        });
        for (i, n) in nodes.iter().take(cfg.node_pad).enumerate() {
            let p = frame.point(*n);
            let rel = frame.vector(*n - obs.typical.position);
            out[5 + 4 * i..9 + 4 * i].copy_from_slice(&[p.x / l, p.y / l, rel.norm() / l, azimuth(rel)]);
        }
    }
    fb.push("history", &hist);
    fb.push("time_left", &[current.time_left / cfg.time_scale]);
    Ok(fb.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JammerRewardWeights {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub d_buffer: f64,
    /// SINR floor S^V_b below which the SINR term is zero.
    pub sinr_floor: f64,
}

impl Default for JammerRewardWeights {
    fn default() -> Self {
        Self {
            a1: 1.0,
            a2: 25.0,
            a3: 25.0,
            a4: 1.0,
            a5: 20.0,
            d_buffer: 4.0,
            sinr_floor: 0.1,
        }
    }
}

impl JammerRewardWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
            ("a4", self.a4),
            ("a5", self.a5),
            ("d_buffer", self.d_buffer),
            ("sinr_floor", self.sinr_floor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("jammer_weights.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Quantities the jammer reward needs from one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JammerTransition {
    /// SINR of the typical UAV's scheduled link after the step; `None` when nothing was scheduled.
    pub typical_sinr_next: Option<f64>,
    /// Nearest same-altitude UAV after the step: (centre distance, its radius).
    pub nearest_neighbor: Option<(f64, f64)>,
    pub own_radius: f64,
    pub entered_no_fly: bool,
    pub time_left_next: f64,
    pub goal_distance_next: f64,
    pub v_max: f64,
    pub arrived: bool,
    pub typical_distance: f64,
    pub typical_distance_next: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JammerRewardTerms {
    pub sinr: f64,
    pub collision: f64,
    pub obstacle: f64,
    pub time: f64,
    pub arrival: f64,
    pub distance: f64,
}

impl JammerRewardTerms {
    pub fn total(&self) -> f64 {
        self.sinr + self.collision + self.obstacle + self.time + self.arrival + self.distance
    }
}

pub fn jammer_reward_terms(tr: &JammerTransition, w: &JammerRewardWeights) -> JammerRewardTerms {
    let sinr = match tr.typical_sinr_next {
        Some(s) if s > w.sinr_floor => w.a1 / s,
        _ => 0.0,
    };
    let collision = match tr.nearest_neighbor {
        Some((d, r)) => crate::agent::proximity_penalty(d, tr.own_radius + r, w.a2, w.d_buffer),
        None => 0.0,
    };
    JammerRewardTerms {
        sinr,
        collision,
        obstacle: if tr.entered_no_fly { -w.a3 } else { 0.0 },
        time: crate::agent::slack_penalty(tr.time_left_next, tr.goal_distance_next, tr.v_max, w.a4),
        arrival: if tr.arrived { w.a5 } else { 0.0 },
        distance: tr.typical_distance - tr.typical_distance_next,
    }
}

pub fn jammer_reward(tr: &JammerTransition, w: &JammerRewardWeights) -> f64 {
    jammer_reward_terms(tr, w).total()
}
