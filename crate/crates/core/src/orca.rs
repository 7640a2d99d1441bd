//! Optimal reciprocal collision avoidance for the non-cooperative traffic UAVs.
//!
//! Each neighbour contributes one half-plane of permitted velocities; the new
//! velocity is the point of the intersection nearest the preferred velocity,
//! inside the disc of radius `v_max`. When the half-planes have no common
//! point, a second program finds the velocity that penetrates the worst
//! half-plane the least.

use serde::{Deserialize, Serialize};

use crate::geom::{Pose, Vec2};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrcaAgent<T = f64> {
    pub pose: Pose<T>,
    pub goal: Vec2<T>,
    pub v_max: T,
    pub time_horizon: T,
    pub neighbor_range: T,
}

/// Half-plane boundary; permitted velocities lie to the left of `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Line<T> {
    point: Vec2<T>,
    direction: Vec2<T>,
}

fn eps<T: Real>() -> T {
    T::lit(1e-5)
}

/// Scale on the combined radius inside the velocity obstacles. Steps of a full
/// second let three or more converging agents reach states where the
/// half-planes have no common point; the margin keeps the fallback velocity
/// clear of the true discs.
const SEPARATION_MARGIN: f64 = 1.5;

/// Angle of the clockwise nudge applied to the preferred velocity in exact head-on ties.
const HEAD_ON_BIAS: f64 = 1e-3;

/// Preferred velocity: straight at the goal, capped at `v_max` and at `dist / dt`.
pub fn preferred_velocity<T: Real>(agent: &OrcaAgent<T>, dt: T) -> Vec2<T> {
    let to_goal = agent.goal - agent.pose.position;
    let dist = to_goal.norm();
    if dist <= T::zero() {
        return Vec2::zero();
    }
    let speed = agent.v_max.min(dist / dt);
    to_goal / dist * speed
}

/// New velocity for `agent` given its same-altitude neighbours.
pub fn orca_step<T: Real>(agent: &OrcaAgent<T>, neighbors: &[Pose<T>], dt: T) -> Vec2<T> {
    let me = &agent.pose;
    let mut pref = preferred_velocity(agent, dt);
    let nearby: Vec<&Pose<T>> = neighbors
        .iter()
        .filter(|n| n.position.distance(me.position) <= agent.neighbor_range)
        .collect();

    // Exact head-on: neighbour dead ahead and closing along the same line.
    let head_on = nearby.iter().any(|n| {
        let rel = n.position - me.position;
        let closing = me.velocity - n.velocity;
        pref.cross(rel) == T::zero()
            && pref.dot(rel) > T::zero()
            && closing.cross(rel) == T::zero()
    });
    if head_on {
        pref = pref.rotated(-T::lit(HEAD_ON_BIAS));
    }

    let lines: Vec<Line<T>> = nearby
        .iter()
        .map(|n| constraint_for(me, n, agent.time_horizon, dt))
        .collect();

    let (failed, mut result) = linear_program_2(&lines, agent.v_max, pref, false);
    if failed < lines.len() {
        result = linear_program_3(&lines, 0, failed, agent.v_max, result);
    }
    if result.norm() > agent.v_max {
        result = result.normalized() * agent.v_max;
    }
    result
}

fn constraint_for<T: Real>(me: &Pose<T>, other: &Pose<T>, horizon: T, dt: T) -> Line<T> {
    let rel_pos = other.position - me.position;
    let rel_vel = me.velocity - other.velocity;
    let dist_sq = rel_pos.norm_sq();
    let r = (me.radius + other.radius) * T::lit(SEPARATION_MARGIN);
    let r_sq = r * r;
    let half = T::lit(0.5);

    let (direction, u) = if dist_sq > r_sq {
        let inv_h = T::one() / horizon;
        // Relative velocity measured from the cut-off circle centre.
        let w = rel_vel - rel_pos * inv_h;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < T::zero() && dot1 * dot1 > r_sq * w_len_sq {
            // Closest boundary point lies on the cut-off circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            (Vec2::new(unit_w.y, -unit_w.x), unit_w * (r * inv_h - w_len))
        } else {
            // Closest boundary point lies on one of the cone legs.
            let leg = (dist_sq - r_sq).sqrt();
            let direction = if rel_pos.cross(w) > T::zero() {
                Vec2::new(rel_pos.x * leg - rel_pos.y * r, rel_pos.x * r + rel_pos.y * leg) / dist_sq
            } else {
                -Vec2::new(rel_pos.x * leg + rel_pos.y * r, -rel_pos.x * r + rel_pos.y * leg) / dist_sq
            };
            let dot2 = rel_vel.dot(direction);
            (direction, direction * dot2 - rel_vel)
        }
    } else {
        // Already overlapping: resolve within one step.
        let inv_dt = T::one() / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.norm();
        let unit_w = if w_len > T::zero() { w / w_len } else { rel_pos.normalized().perp() };
        (Vec2::new(unit_w.y, -unit_w.x), unit_w * (r * inv_dt - w_len))
    };
    Line {
        point: me.velocity + u * half,
        direction,
    }
}

/// Optimize along line `idx` subject to lines `0..idx` and the speed disc.
fn linear_program_1<T: Real>(
    lines: &[Line<T>],
    idx: usize,
    radius: T,
    opt: Vec2<T>,
    direction_opt: bool,
) -> Option<Vec2<T>> {
    let line = lines[idx];
    let dot = line.point.dot(line.direction);
    let disc = dot * dot + radius * radius - line.point.norm_sq();
    if disc < T::zero() {
        return None;
    }
    let sq = disc.sqrt();
    let mut t_left = -dot - sq;
    let mut t_right = -dot + sq;
    for prev in &lines[..idx] {
        let denom = line.direction.cross(prev.direction);
        let numer = prev.direction.cross(line.point - prev.point);
        if denom.abs() <= eps() {
            if numer < T::zero() {
                return None;
            }
            continue;
        }
        let t = numer / denom;
        if denom >= T::zero() {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }
    let t = if direction_opt {
        if opt.dot(line.direction) > T::zero() {
            t_right
        } else {
            t_left
        }
    } else {
        line.direction.dot(opt - line.point).max(t_left).min(t_right)
    };
    Some(line.point + line.direction * t)
}

/// Returns (index of first infeasible line or `lines.len()`, best value so far).
fn linear_program_2<T: Real>(
    lines: &[Line<T>],
    radius: T,
    opt: Vec2<T>,
    direction_opt: bool,
) -> (usize, Vec2<T>) {
    let mut result = if direction_opt {
        opt * radius
    } else if opt.norm_sq() > radius * radius {
        opt.normalized() * radius
    } else {
        opt
    };
    for i in 0..lines.len() {
        if lines[i].direction.cross(lines[i].point - result) > T::zero() {
            match linear_program_1(lines, i, radius, opt, direction_opt) {
                Some(r) => result = r,
                None => return (i, result),
            }
        }
    }
    (lines.len(), result)
}

fn linear_program_3<T: Real>(
    lines: &[Line<T>],
    rigid: usize,
    begin: usize,
    radius: T,
    mut result: Vec2<T>,
) -> Vec2<T> {
    let mut distance = T::zero();
    for i in begin..lines.len() {
        let li = lines[i];
        if li.direction.cross(li.point - result) <= distance {
            continue;
        }
        let mut projected: Vec<Line<T>> = lines[..rigid].to_vec();
        for lj in &lines[rigid..i] {
            let det = li.direction.cross(lj.direction);
            let point = if det.abs() <= eps() {
                if li.direction.dot(lj.direction) > T::zero() {
                    continue;
                }
                (li.point + lj.point) * T::lit(0.5)
            } else {
                li.point + li.direction * (lj.direction.cross(li.point - lj.point) / det)
            };
            projected.push(Line {
                point,
                direction: (lj.direction - li.direction).normalized(),
            });
        }
        let target = Vec2::new(-li.direction.y, li.direction.x);
        let (failed, candidate) = linear_program_2(&projected, radius, target, true);
        if failed >= projected.len() {
            result = candidate;
        }
        distance = li.direction.cross(li.point - result);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{disc_collision, integrate_motion, VelocityAction};

    fn agent(x: f64, y: f64, gx: f64, gy: f64) -> OrcaAgent {
        OrcaAgent {
            pose: Pose::at_rest(Vec2::new(x, y), 50.0, 0.0, 1.0),
            goal: Vec2::new(gx, gy),
            v_max: 2.0,
            time_horizon: 5.0,
            neighbor_range: 15.0,
        }
    }

    #[test]
    fn no_neighbors_goes_straight() {
        let a = agent(0.0, 0.0, 10.0, 0.0);
        let v = orca_step(&a, &[], 1.0);
        assert!((v.x - 2.0).abs() < 1e-12 && v.y.abs() < 1e-12);
        let near = agent(0.0, 0.0, 0.5, 0.0);
        let v = orca_step(&near, &[], 1.0);
        assert!((v.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn far_neighbor_ignored() {
        let a = agent(0.0, 0.0, 10.0, 0.0);
        let far = Pose::at_rest(Vec2::new(-30.0, 25.0), 50.0, 0.0, 1.0);
        let v = orca_step(&a, &[far], 1.0);
        assert_eq!(v, preferred_velocity(&a, 1.0));
    }

    #[test]
    fn speed_never_exceeds_limit() {
        let a = agent(0.0, 0.0, 10.0, 0.0);
        let mut crowd = Vec::new();
        for k in 0..6 {
            let theta = k as f64;
            let mut p = Pose::at_rest(Vec2::from_polar(2.2, theta), 50.0, 0.0, 1.0);
            p.velocity = Vec2::from_polar(2.0, theta + 3.0);
            crowd.push(p);
        }
        let v = orca_step(&a, &crowd, 1.0);
        assert!(v.norm() <= 2.0 + 1e-12);
    }

    #[test]
    fn symmetric_head_on_rollout_is_collision_free() {
        let mut agents = [agent(-15.0, 0.0, 15.0, 0.0), agent(15.0, 0.0, -15.0, 0.0)];
        for _ in 0..200 {
            let poses: Vec<Pose> = agents.iter().map(|a| a.pose).collect();
            let vels: Vec<Vec2> = agents
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let others: Vec<Pose> = poses.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
                    orca_step(a, &others, 1.0)
                })
                .collect();
            for (a, v) in agents.iter_mut().zip(vels) {
                a.pose = integrate_motion(&a.pose, &VelocityAction { index: 0, velocity: v }, 1.0);
            }
            assert!(!disc_collision(&agents[0].pose, &agents[1].pose));
        }
        assert!(agents[0].pose.position.distance(agents[0].goal) < 1e-6);
        assert!(agents[1].pose.position.distance(agents[1].goal) < 1e-6);
    }
}
