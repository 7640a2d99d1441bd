//! Episode lifecycle: scenario sampling, synchronous dynamics, data accounting and metrics.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    disc_collision, integrate_motion, sample_velocity_set, violates_no_fly, ActionSetConfig, Arena,
    KinematicLimits, Pose, Rect, Vec2, VelocityAction,
};
use crate::jammers::{JammerKind, JammerSpec, JammerState};
use crate::orca::{orca_step, OrcaAgent};
use crate::radio::{link_report, Interferer, LinkReport, NodeState, RadioParams, RegionScene};

/// Upper bound on the number of IoT nodes in one scenario.
pub const MAX_NODES: usize = 10;

const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub arena: Arena,
    pub departure_area: Rect,
    pub landing_area: Rect,
    pub node_count_range: [usize; 2],
    /// When non-empty, nodes sit here instead of being sampled.
    pub fixed_nodes: Vec<Vec2>,
    pub node_tx_power: f64,
    /// Bits per node at reset.
    pub initial_data: f64,
    pub typical_limits: KinematicLimits,
    pub typical_altitude: f64,
    pub typical_radius: f64,
    pub actions: ActionSetConfig,
    pub other_uav_count: usize,
    pub other_v_max: f64,
    pub other_radius: f64,
    pub orca_time_horizon: f64,
    pub mission_deadline: f64,
    pub radio: RadioParams,
    pub dt: f64,
    pub rng_seed: u64,
    /// Active jammers; filled from the run configuration, not from this section.
    #[serde(skip)]
    pub jammers: Vec<JammerSpec>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            arena: Arena::square(40.0, 15.0),
            departure_area: Rect::new(Vec2::new(-38.0, -30.0), Vec2::new(-30.0, 30.0)),
            landing_area: Rect::new(Vec2::new(30.0, -30.0), Vec2::new(38.0, 30.0)),
            node_count_range: [5, 10],
            fixed_nodes: Vec::new(),
            node_tx_power: 1e-2,
            initial_data: 200e6,
            typical_limits: KinematicLimits {
                v_max: 2.0,
                max_turn_rate: std::f64::consts::FRAC_PI_3,
            },
            typical_altitude: 50.0,
            typical_radius: 1.0,
            actions: ActionSetConfig::default(),
            other_uav_count: 4,
            other_v_max: 1.5,
            other_radius: 1.0,
            orca_time_horizon: 5.0,
            mission_deadline: 100.0,
            radio: RadioParams::default(),
            dt: 1.0,
            rng_seed: 0,
            jammers: Vec::new(),
        }
    }
}

impl WorldConfig {
    /// 40 x 40 m arena, two nodes, no traffic, no jammer, 60 s deadline.
    pub fn toy() -> Self {
        Self {
            arena: Arena::square(20.0, 15.0),
            departure_area: Rect::new(Vec2::new(-18.0, -12.0), Vec2::new(-14.0, 12.0)),
            landing_area: Rect::new(Vec2::new(14.0, -12.0), Vec2::new(18.0, 12.0)),
            node_count_range: [2, 2],
            initial_data: 400e6,
            other_uav_count: 0,
            mission_deadline: 60.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arena.validate()?;
        let bounds = self.arena.bounds();
        for (name, r) in [("world.departure_area", &self.departure_area), ("world.landing_area", &self.landing_area)] {
            if r.max.x < r.min.x || r.max.y < r.min.y || !bounds.contains(r.min) || !bounds.contains(r.max) {
                return Err(Error::config(name, "must be a rectangle inside the arena"));
            }
        }
        let [lo, hi] = self.node_count_range;
        if self.fixed_nodes.is_empty() && !(1 <= lo && lo <= hi && hi <= MAX_NODES) {
            return Err(Error::config(
                "world.node_count_range",
                format!("need 1 <= min <= max <= {MAX_NODES}"),
            ));
        }
        if self.fixed_nodes.len() > MAX_NODES {
            return Err(Error::config("world.fixed_nodes", format!("at most {MAX_NODES} nodes")));
        }
        if let Some(i) = self.fixed_nodes.iter().position(|p| violates_no_fly(*p, &self.arena)) {
            return Err(Error::config(format!("world.fixed_nodes[{i}]"), "outside arena or in a no-fly zone"));
        }
        let positive = [
            ("world.node_tx_power", self.node_tx_power),
            ("world.initial_data", self.initial_data),
            ("world.typical_altitude", self.typical_altitude),
            ("world.typical_radius", self.typical_radius),
            ("world.other_v_max", self.other_v_max),
            ("world.other_radius", self.other_radius),
            ("world.orca_time_horizon", self.orca_time_horizon),
            ("world.mission_deadline", self.mission_deadline),
            ("world.dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and > 0"));
            }
        }
        self.typical_limits.validate("world.typical_limits")?;
        self.actions.validate()?;
        self.radio.validate()?;
        if self.jammers.iter().filter(|j| j.kind == JammerKind::Intelligent).count() > 1 {
            return Err(Error::config("jammer", "at most one intelligent jammer"));
        }
        for j in &self.jammers {
            j.validate(self.typical_altitude)?;
        }
        Ok(())
    }

    pub fn arrival_tolerance(&self) -> f64 {
        self.typical_limits.v_max * self.dt
    }

    /// Index of the learning jammer, if any.
    pub fn intelligent_jammer(&self) -> Option<usize> {
        self.jammers.iter().position(|j| j.kind == JammerKind::Intelligent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalUav {
    pub pose: Pose,
    pub destination: Vec2,
    pub time_left: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub typical: TypicalUav,
    pub others: Vec<OrcaAgent>,
    pub nodes: Vec<NodeState>,
    pub jammers: Vec<JammerState>,
    pub step_index: usize,
    pub link: LinkReport,
    pub initial_data: f64,
    pub delivered: f64,
    pub terminal: bool,
}

impl WorldState {
    pub fn elapsed(&self, dt: f64) -> f64 {
        self.step_index as f64 * dt
    }

    pub fn remaining_data(&self) -> f64 {
        self.nodes.iter().map(|n| n.data_left).sum()
    }

    pub fn interferers(&self, config: &WorldConfig) -> Vec<Interferer> {
        let t = self.elapsed(config.dt);
        config
            .jammers
            .iter()
            .zip(&self.jammers)
            .map(|(spec, js)| js.interferer(spec, t))
            .collect()
    }
}

/// Reliable-region snapshot of `state` with jammer emissions taken at elapsed time `t`.
pub fn region_scene(config: &WorldConfig, state: &WorldState, t: f64) -> RegionScene {
    RegionScene {
        bounds: config.arena.bounds(),
        uav_altitude: config.typical_altitude,
        nodes: state.nodes.clone(),
        interferers: config
            .jammers
            .iter()
            .zip(&state.jammers)
            .map(|(spec, js)| js.interferer(spec, t))
            .collect(),
        params: config.radio,
    }
}

/// Outcome flags for the intelligent jammer over one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JammerEvents {
    pub arrived: bool,
    pub collided: bool,
    pub entered_no_fly: bool,
    pub deadline_violated: bool,
    /// Landed, crashed or expired during this step.
    pub finished: bool,
    pub nearest_neighbor: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub collided: bool,
    pub entered_no_fly: bool,
    pub arrived: bool,
    pub deadline_violated: bool,
    pub data_delivered: f64,
    pub terminal: bool,
    /// Smallest centre distance to another UAV over the step, with that UAV's radius.
    pub nearest_other: Option<(f64, f64)>,
    pub jammer: Option<JammerEvents>,
}

fn sample_in(rng: &mut ChaCha8Rng, r: &Rect) -> Vec2 {
    let x = if r.max.x > r.min.x { rng.gen_range(r.min.x..=r.max.x) } else { r.min.x };
    let y = if r.max.y > r.min.y { rng.gen_range(r.min.y..=r.max.y) } else { r.min.y };
    Vec2::new(x, y)
}

fn sample_free(
    rng: &mut ChaCha8Rng,
    area: &Rect,
    arena: &Arena,
    field: &str,
    extra: impl Fn(Vec2) -> bool,
) -> Result<Vec2> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        let p = sample_in(rng, area);
        if !violates_no_fly(p, arena) && extra(p) {
            return Ok(p);
        }
    }
    Err(Error::config(field, "could not place an entity outside the no-fly zones"))
}

/// Velocity set available to the typical UAV in `state`.
pub fn typical_actions(config: &WorldConfig, state: &WorldState) -> Vec<VelocityAction> {
    sample_velocity_set(&config.typical_limits, state.typical.pose.heading, config.dt, &config.actions)
}

/// Velocity set available to the intelligent jammer, if there is one.
pub fn jammer_actions(config: &WorldConfig, state: &WorldState) -> Option<Vec<VelocityAction>> {
    let j = config.intelligent_jammer()?;
    let spec = &config.jammers[j];
    Some(sample_velocity_set(&spec.limits, state.jammers[j].pose.heading, config.dt, &spec.actions))
}

pub fn reset(config: &WorldConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arena = &config.arena;
    let bounds = arena.bounds();

    let positions: Vec<Vec2> = if config.fixed_nodes.is_empty() {
        let [lo, hi] = config.node_count_range;
        let n = rng.gen_range(lo..=hi);
        (0..n)
            .map(|_| sample_free(&mut rng, &bounds, arena, "world.arena", |_| true))
            .collect::<Result<_>>()?
    } else {
        config.fixed_nodes.clone()
    };
    let nodes: Vec<NodeState> = positions
        .into_iter()
        .map(|p| NodeState::new(p, config.node_tx_power, config.initial_data))
        .collect();

    let start = sample_free(&mut rng, &config.departure_area, arena, "world.departure_area", |_| true)?;
    let destination = sample_free(&mut rng, &config.landing_area, arena, "world.landing_area", |_| true)?;
    let heading = (destination - start).angle();
    let typical = TypicalUav {
        pose: Pose::at_rest(start, config.typical_altitude, heading, config.typical_radius),
        destination,
        time_left: config.mission_deadline,
    };

    let clearance = config.typical_radius.max(config.other_radius) * 2.0 + 1.0;
    let mut others: Vec<OrcaAgent> = Vec::with_capacity(config.other_uav_count);
    for _ in 0..config.other_uav_count {
        let taken: Vec<Vec2> = others.iter().map(|o| o.pose.position).chain([start]).collect();
        let p = sample_free(&mut rng, &bounds, arena, "world.other_uav_count", |p| {
            taken.iter().all(|q| q.distance(p) > clearance)
        })?;
        let goal = sample_free(&mut rng, &bounds, arena, "world.other_uav_count", |_| true)?;
        others.push(OrcaAgent {
            pose: Pose::at_rest(p, config.typical_altitude, (goal - p).angle(), config.other_radius),
            goal,
            v_max: config.other_v_max,
            time_horizon: config.orca_time_horizon,
            neighbor_range: arena.sensing_radius,
        });
    }

    let jammers: Vec<JammerState> = config.jammers.iter().map(JammerState::initial).collect();
    let mut state = WorldState {
        typical,
        others,
        nodes,
        jammers,
        step_index: 0,
        link: LinkReport::empty(0),
        initial_data: 0.0,
        delivered: 0.0,
        terminal: false,
    };
    state.initial_data = state.remaining_data();
    state.link = link_report(
        start,
        config.typical_altitude,
        &state.nodes,
        &state.interferers(config),
        &config.radio,
    )?;
    Ok(state)
}

fn midpoint(a: &Pose, b: &Pose) -> Pose {
    Pose {
        position: (a.position + b.position) * 0.5,
        ..*b
    }
}

fn swept_min_distance(a0: &Pose, a1: &Pose, b0: &Pose, b1: &Pose) -> f64 {
    let end = a1.position.distance(b1.position);
    let mid = midpoint(a0, a1).position.distance(midpoint(b0, b1).position);
    end.min(mid)
}

fn swept_collision(a0: &Pose, a1: &Pose, b0: &Pose, b1: &Pose) -> bool {
    disc_collision(a1, b1) || disc_collision(&midpoint(a0, a1), &midpoint(b0, b1))
}

/// Advance every actor by one step.
///
/// `jammer_action` drives the intelligent jammer; `None` makes it hover.
pub fn step(
    config: &WorldConfig,
    state: &WorldState,
    typical_action: &VelocityAction,
    jammer_action: Option<&VelocityAction>,
) -> Result<(WorldState, StepEvents)> {
    if state.terminal {
        return Err(Error::Usage("step called on a terminal world state".into()));
    }
    if !typical_action.velocity.is_finite()
        || typical_action.velocity.norm() > config.typical_limits.v_max * (1.0 + 1e-9)
    {
        return Err(Error::Usage("typical action outside the velocity limits".into()));
    }
    let dt = config.dt;
    let elapsed = state.elapsed(dt);
    let mut next = state.clone();
    next.step_index += 1;
    let mut ev = StepEvents::default();

    let prev_typ = state.typical.pose;
    next.typical.pose = integrate_motion(&prev_typ, typical_action, dt);
    next.typical.time_left = config.mission_deadline - next.step_index as f64 * dt;

    // Traffic UAVs react to everything flying at their altitude.
    let flying_at = |alt: f64| -> Vec<Pose> {
        let mut v: Vec<Pose> = state.others.iter().map(|o| o.pose).collect();
        v.push(prev_typ);
        for (spec, js) in config.jammers.iter().zip(&state.jammers) {
            if spec.kind == JammerKind::Intelligent && js.airborne {
                v.push(js.pose);
            }
        }
        v.retain(|p| p.altitude == alt);
        v
    };
    let peers = flying_at(config.typical_altitude);
    for (i, other) in state.others.iter().enumerate() {
        let neighbors: Vec<Pose> = peers.iter().copied().filter(|p| *p != other.pose).collect();
        let v = orca_step(other, &neighbors, dt);
        next.others[i].pose = integrate_motion(&other.pose, &VelocityAction { index: 0, velocity: v }, dt);
    }

    if let Some(j) = config.intelligent_jammer() {
        let spec = &config.jammers[j];
        let prev = state.jammers[j];
        let mut js = prev;
        let mut je = JammerEvents::default();
        if prev.airborne {
            let hover = VelocityAction { index: spec.actions.len() - 1, velocity: Vec2::zero() };
            let act = jammer_action.unwrap_or(&hover);
            if !act.velocity.is_finite() || act.velocity.norm() > spec.limits.v_max * (1.0 + 1e-9) {
                return Err(Error::Usage("jammer action outside the velocity limits".into()));
            }
            js.pose = integrate_motion(&prev.pose, act, dt);
            js.time_left = prev.time_left - dt;
            let mut nearest: Option<(f64, f64)> = None;
            for (o0, o1) in state.others.iter().zip(&next.others) {
                if o1.pose.altitude != spec.altitude {
                    continue;
                }
                let d = swept_min_distance(&prev.pose, &js.pose, &o0.pose, &o1.pose);
                if nearest.is_none_or(|(m, _)| d < m) {
                    nearest = Some((d, o1.pose.radius));
                }
                je.collided |= swept_collision(&prev.pose, &js.pose, &o0.pose, &o1.pose);
            }
            je.nearest_neighbor = nearest;
            je.entered_no_fly = violates_no_fly(js.pose.position, &config.arena);
            je.arrived = js.pose.position.distance(js.destination) <= spec.limits.v_max * dt;
            je.deadline_violated = js.time_left <= 1e-9 && !je.arrived;
            je.finished = je.arrived || je.collided || je.entered_no_fly || js.time_left <= 1e-9;
            js.arrived = je.arrived;
            js.collided = je.collided;
            if je.finished {
                js.airborne = false;
                js.pose.velocity = Vec2::zero();
            }
        } else {
            js.pose.velocity = Vec2::zero();
        }
        js.emitting = js.power(spec, elapsed) > 0.0;
        next.jammers[j] = js;
        ev.jammer = Some(je);
    }
    for (spec, js) in config.jammers.iter().zip(next.jammers.iter_mut()) {
        if spec.kind != JammerKind::Intelligent {
            js.emitting = js.power(spec, elapsed) > 0.0;
        }
    }

    let typ = next.typical.pose;
    for (o0, o1) in state.others.iter().zip(&next.others) {
        let d = swept_min_distance(&prev_typ, &typ, &o0.pose, &o1.pose);
        if ev.nearest_other.is_none_or(|(m, _)| d < m) {
            ev.nearest_other = Some((d, o1.pose.radius));
        }
        ev.collided |= swept_collision(&prev_typ, &typ, &o0.pose, &o1.pose);
    }
    ev.entered_no_fly = violates_no_fly(typ.position, &config.arena);
    ev.arrived = typ.position.distance(next.typical.destination) <= config.arrival_tolerance();

    // Emission for this step is evaluated at the step's start time.
    let interferers: Vec<Interferer> = config
        .jammers
        .iter()
        .zip(&next.jammers)
        .map(|(spec, js)| js.interferer(spec, elapsed))
        .collect();
    next.link = link_report(typ.position, typ.altitude, &next.nodes, &interferers, &config.radio)?;
    if let Some(n) = next.link.scheduled_node {
        let bits = dt * config.radio.bandwidth * next.link.effective_rate;
        let got = next.nodes[n].drain(bits);
        next.delivered += got;
        ev.data_delivered = got;
    }

    let out_of_time = next.typical.time_left <= 1e-9;
    ev.deadline_violated = out_of_time && !ev.arrived;
    ev.terminal = ev.arrived || ev.collided || ev.entered_no_fly || out_of_time;
    next.terminal = ev.terminal;
    Ok((next, ev))
}

/// Per-episode outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub success: bool,
    pub collected_fraction: f64,
    pub on_time: bool,
    pub collision: bool,
    pub total_reward: f64,
}

pub fn finalize(history: &[StepEvents], initial_data: f64, total_reward: f64) -> Result<EpisodeRecord> {
    let last = history
        .last()
        .ok_or_else(|| Error::Usage("finalize needs at least one step".into()))?;
    if !last.terminal {
        return Err(Error::Usage("finalize called before the episode ended".into()));
    }
    let delivered: f64 = history.iter().map(|e| e.data_delivered).sum();
    let collision = history.iter().any(|e| e.collided);
    let on_time = last.arrived;
    let collected_fraction = if initial_data > 0.0 {
        (delivered / initial_data).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(EpisodeRecord {
        success: on_time && !collision && !last.entered_no_fly,
        collected_fraction,
        on_time,
        collision,
        total_reward,
    })
}

/// Aggregate metrics in percent. `dr` is `None` when no episode succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sr: f64,
    pub dr: Option<f64>,
    pub tr: f64,
    pub cr: f64,
    pub mean_reward: f64,
    pub episodes: usize,
}

impl Metrics {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// DR with zero successes counted as 0%.
    pub fn dr_or_zero(&self) -> f64 {
        self.dr.unwrap_or(0.0)
    }
}

pub fn aggregate(records: &[EpisodeRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::Usage("aggregate needs at least one record".into()));
    }
    let n = records.len() as f64;
    let pct = |k: usize| 100.0 * k as f64 / n;
    let successes: Vec<&EpisodeRecord> = records.iter().filter(|r| r.success).collect();
    let dr = if successes.is_empty() {
        None
    } else {
        Some(100.0 * successes.iter().map(|r| r.collected_fraction).sum::<f64>() / successes.len() as f64)
    };
    Ok(Metrics {
        sr: pct(successes.len()),
        dr,
        tr: pct(records.iter().filter(|r| r.on_time).count()),
        cr: pct(records.iter().filter(|r| r.collision).count()),
        mean_reward: records.iter().map(|r| r.total_reward).sum::<f64>() / n,
        episodes: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub actor: String,
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub vx: f64,
    pub vy: f64,
    pub scheduled_node: Option<usize>,
    pub sinr: Option<f64>,
    pub data_delivered: Option<f64>,
}

/// Per-actor, per-step rows; nodes are emitted once at step 0.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn record(&mut self, config: &WorldConfig, state: &WorldState, delivered: f64) {
        let s = state.step_index;
        let row = |actor: String, p: &Pose| TrajectoryRow {
            step: s,
            actor,
            x: p.position.x,
            y: p.position.y,
            h: p.altitude,
            vx: p.velocity.x,
            vy: p.velocity.y,
            scheduled_node: None,
            sinr: None,
            data_delivered: None,
        };
        if s == 0 {
            for (i, n) in state.nodes.iter().enumerate() {
                self.rows.push(row(format!("node{i}"), &Pose::at_rest(n.position, 0.0, 0.0, 0.0)));
            }
        }
        let mut t = row("typical".into(), &state.typical.pose);
        t.scheduled_node = state.link.scheduled_node;
        t.sinr = state.link.scheduled_sinr();
        t.data_delivered = Some(delivered);
        self.rows.push(t);
        for (i, o) in state.others.iter().enumerate() {
            self.rows.push(row(format!("other{i}"), &o.pose));
        }
        for (i, (spec, j)) in config.jammers.iter().zip(&state.jammers).enumerate() {
            if spec.kind != JammerKind::None {
                self.rows.push(row(format!("jammer{i}"), &j.pose));
            }
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step", "actor", "x", "y", "h", "vx", "vy", "scheduled_node", "sinr", "data_delivered",
        ])?;
        for r in &self.rows {
            let opt = |v: Option<String>| v.unwrap_or_default();
            w.write_record([
                r.step.to_string(),
                r.actor.clone(),
                r.x.to_string(),
                r.y.to_string(),
                r.h.to_string(),
                r.vx.to_string(),
                r.vy.to_string(),
                opt(r.scheduled_node.map(|n| n.to_string())),
                opt(r.sinr.map(|v| v.to_string())),
                opt(r.data_delivered.map(|v| v.to_string())),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
