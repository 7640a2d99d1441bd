//! Planar geometry, kinematics and the discretized velocity action space.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Unit vector, or zero for the zero vector.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self / n
        } else {
            Self::zero()
        }
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    pub fn from_polar(r: T, theta: T) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    /// Rotate counter-clockwise by `theta`.
    pub fn rotated(self, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec2<U> {
        Vec2::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()))
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> AddAssign for Vec2<T> {
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Real> Div<T> for Vec2<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s)
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r > T::PI() {
        r -= two_pi;
    } else if r <= -T::PI() {
        r += two_pi;
    }
    r
}

/// Pose of a disc-shaped aircraft flying at a fixed altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T = f64> {
    pub position: Vec2<T>,
    pub altitude: T,
    pub velocity: Vec2<T>,
    /// Radians in (-pi, pi].
    pub heading: T,
    pub radius: T,
}

impl<T: Real> Pose<T> {
    pub fn at_rest(position: Vec2<T>, altitude: T, heading: T, radius: T) -> Self {
        Self {
            position,
            altitude,
            velocity: Vec2::zero(),
            heading: wrap_angle(heading),
            radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KinematicLimits<T = f64> {
    pub v_max: T,
    /// Maximum heading change per second (rad/s).
    pub max_turn_rate: T,
}

impl<T: Real> KinematicLimits<T> {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.v_max > T::zero()) {
            return Err(Error::config(format!("{field}.v_max"), "must be > 0"));
        }
        if !(self.max_turn_rate > T::zero()) {
            return Err(Error::config(format!("{field}.max_turn_rate"), "must be > 0"));
        }
        Ok(())
    }
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect<T = f64> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

impl<T: Real> Rect<T> {
    pub fn new(min: Vec2<T>, max: Vec2<T>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Vec2<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max.x > self.min.x && self.max.y > self.min.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena<T = f64> {
    pub x_range: [T; 2],
    pub y_range: [T; 2],
    #[serde(default)]
    pub no_fly_zones: Vec<Rect<T>>,
    /// Radius of the circular sensing region around an aircraft.
    pub sensing_radius: T,
}

impl<T: Real> Arena<T> {
    pub fn square(half_width: T, sensing_radius: T) -> Self {
        Self {
            x_range: [-half_width, half_width],
            y_range: [-half_width, half_width],
            no_fly_zones: Vec::new(),
            sensing_radius,
        }
    }

    pub fn bounds(&self) -> Rect<T> {
        Rect::new(
            Vec2::new(self.x_range[0], self.y_range[0]),
            Vec2::new(self.x_range[1], self.y_range[1]),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.bounds();
        if b.is_degenerate() {
            return Err(Error::config("arena.x_range/y_range", "ranges must be non-degenerate"));
        }
        if !(self.sensing_radius >= T::zero()) {
            return Err(Error::config("arena.sensing_radius", "must be >= 0"));
        }
        for (i, z) in self.no_fly_zones.iter().enumerate() {
            if z.is_degenerate() || !b.contains(z.min) || !b.contains(z.max) {
                return Err(Error::config(
                    format!("arena.no_fly_zones[{i}]"),
                    "zone must be non-degenerate and inside the arena",
                ));
            }
        }
        Ok(())
    }
}

/// Shape of the discretized velocity set: `speed_levels * heading_count + 1` actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSetConfig {
    pub speed_levels: usize,
    pub heading_count: usize,
}

impl Default for ActionSetConfig {
    fn default() -> Self {
        Self {
            speed_levels: 3,
            heading_count: 7,
        }
    }
}

impl ActionSetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speed_levels == 0 {
            return Err(Error::config("actions.speed_levels", "must be >= 1"));
        }
        if self.heading_count == 0 {
            return Err(Error::config("actions.heading_count", "must be >= 1"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.speed_levels * self.heading_count + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityAction<T = f64> {
    pub index: usize,
    pub velocity: Vec2<T>,
}

impl<T: Real> VelocityAction<T> {
    pub fn is_hover(&self) -> bool {
        self.velocity.x == T::zero() && self.velocity.y == T::zero()
    }
}

/// Permissible velocities for one step: speed-major, headings ascending, hover last.
pub fn sample_velocity_set<T: Real>(
    limits: &KinematicLimits<T>,
    current_heading: T,
    dt: T,
    shape: &ActionSetConfig,
) -> Vec<VelocityAction<T>> {
    debug_assert!(dt > T::zero());
    let span = dt * limits.max_turn_rate;
    let m = shape.heading_count;
    let k = shape.speed_levels;
    let mut out = Vec::with_capacity(shape.len());
    for level in 1..=k {
        let speed = limits.v_max * T::lit(level as f64) / T::lit(k as f64);
        for j in 0..m {
            let offset = if m == 1 {
                T::zero()
            } else {
                -span + (span + span) * T::lit(j as f64) / T::lit((m - 1) as f64)
            };
            let heading = current_heading + offset;
            out.push(VelocityAction {
                index: out.len(),
                velocity: Vec2::from_polar(speed, heading),
            });
        }
    }
    out.push(VelocityAction {
        index: out.len(),
        velocity: Vec2::zero(),
    });
    out
}

/// First-order hold over one step.
pub fn integrate_motion<T: Real>(pose: &Pose<T>, action: &VelocityAction<T>, dt: T) -> Pose<T> {
    let heading = if action.is_hover() {
        pose.heading
    } else {
        action.velocity.angle()
    };
    Pose {
        position: pose.position + action.velocity * dt,
        velocity: action.velocity,
        heading,
        ..*pose
    }
}

/// Inclusive: touching discs collide.
pub fn disc_collision<T: Real>(a: &Pose<T>, b: &Pose<T>) -> bool {
    a.position.distance(b.position) <= a.radius + b.radius
}

/// Inside a (closed) no-fly zone or outside the arena.
pub fn violates_no_fly<T: Real>(position: Vec2<T>, arena: &Arena<T>) -> bool {
    !arena.bounds().contains(position) || arena.no_fly_zones.iter().any(|z| z.contains(position))
}

pub fn within_sensing<T: Real>(observer: &Pose<T>, target: &Pose<T>, arena: &Arena<T>) -> bool {
    observer.position.distance(target.position) <= arena.sensing_radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pose(x: f64, y: f64, r: f64) -> Pose {
        Pose::at_rest(Vec2::new(x, y), 50.0, 0.0, r)
    }

    #[test]
    fn velocity_set_k1_m3() {
        let lim = KinematicLimits { v_max: 2.0, max_turn_rate: PI / 3.0 };
        let shape = ActionSetConfig { speed_levels: 1, heading_count: 3 };
        let set = sample_velocity_set(&lim, 0.0, 1.0, &shape);
        assert_eq!(set.len(), 4);
        let headings: Vec<f64> = set[..3].iter().map(|a| a.velocity.angle()).collect();
        for (h, want) in headings.iter().zip([-PI / 3.0, 0.0, PI / 3.0]) {
            assert!((h - want).abs() < 1e-12);
        }
        for a in &set[..3] {
            assert!((a.velocity.norm() - 2.0).abs() < 1e-12);
        }
        assert!(set[3].is_hover());
        assert!(set.iter().enumerate().all(|(i, a)| a.index == i));
    }

    #[test]
    fn zero_speed_levels_rejected() {
        let shape = ActionSetConfig { speed_levels: 0, heading_count: 3 };
        assert!(matches!(shape.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn velocity_set_k3_m5() {
        let lim = KinematicLimits { v_max: 1.5, max_turn_rate: 0.7 };
        let shape = ActionSetConfig { speed_levels: 3, heading_count: 5 };
        let set = sample_velocity_set(&lim, 2.9, 1.0, &shape);
        assert_eq!(set.len(), 16);
        assert!(set.iter().all(|a| a.velocity.norm() <= 1.5 + 1e-12));
    }

    #[test]
    fn integrate_examples() {
        let p = pose(0.0, 0.0, 1.0);
        let a = VelocityAction { index: 0, velocity: Vec2::new(1.0, 0.0) };
        let q = integrate_motion(&p, &a, 1.0);
        assert_eq!(q.position, Vec2::new(1.0, 0.0));
        assert_eq!(q.heading, 0.0);

        let hover = VelocityAction { index: 9, velocity: Vec2::zero() };
        let mut p2 = p;
        p2.heading = 1.0;
        let q = integrate_motion(&p2, &hover, 1.0);
        assert_eq!(q.position, p2.position);
        assert_eq!(q.heading, 1.0);

        let up = VelocityAction { index: 0, velocity: Vec2::new(0.0, 2.0) };
        let q = integrate_motion(&p, &up, 0.5);
        assert_eq!(q.position, Vec2::new(0.0, 1.0));
        assert!((q.heading - PI / 2.0).abs() < 1e-15);
        assert_eq!(q.altitude, 50.0);
    }

    #[test]
    fn collision_boundaries() {
        assert!(!disc_collision(&pose(0.0, 0.0, 1.0), &pose(3.0, 0.0, 1.0)));
        assert!(disc_collision(&pose(0.0, 0.0, 1.0), &pose(2.0, 0.0, 1.0)));
        assert!(disc_collision(&pose(1.0, 1.0, 1.0), &pose(1.0, 1.0, 1.0)));
    }

    #[test]
    fn no_fly_boundaries() {
        let mut arena = Arena::square(40.0, 10.0);
        assert!(!violates_no_fly(Vec2::new(0.0, 0.0), &arena));
        arena.no_fly_zones.push(Rect::new(Vec2::new(5.0, 5.0), Vec2::new(10.0, 10.0)));
        assert!(violates_no_fly(Vec2::new(7.0, 7.0), &arena));
        assert!(violates_no_fly(Vec2::new(5.0, 7.0), &arena));
        assert!(violates_no_fly(Vec2::new(10.0, 10.0), &arena));
        assert!(!violates_no_fly(Vec2::new(4.999, 7.0), &arena));
        assert!(violates_no_fly(Vec2::new(41.0, 0.0), &arena));
        assert!(arena.validate().is_ok());
    }

    #[test]
    fn sensing_boundaries() {
        let arena = Arena::square(40.0, 10.0);
        assert!(within_sensing(&pose(0.0, 0.0, 1.0), &pose(10.0, 0.0, 1.0), &arena));
        assert!(!within_sensing(&pose(0.0, 0.0, 1.0), &pose(30.0, 0.0, 1.0), &arena));
        assert!(within_sensing(&pose(2.0, 2.0, 1.0), &pose(2.0, 2.0, 1.0), &arena));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5f64) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn actions_respect_kinematics(
            v_max in 0.1f64..5.0,
            turn in 0.05f64..3.0,
            heading in -PI..PI,
            dt in 0.1f64..2.0,
            k in 1usize..5,
            m in 1usize..9,
        ) {
            let lim = KinematicLimits { v_max, max_turn_rate: turn };
            let shape = ActionSetConfig { speed_levels: k, heading_count: m };
            let pose = Pose::at_rest(Vec2::new(1.0, -2.0), 50.0, heading, 1.0);
            let set = sample_velocity_set(&lim, pose.heading, dt, &shape);
            prop_assert_eq!(set.len(), k * m + 1);
            for a in &set {
                let next = integrate_motion(&pose, a, dt);
                prop_assert!(next.velocity.norm() <= v_max * (1.0 + 1e-12));
                let turned = wrap_angle(next.heading - pose.heading).abs();
                prop_assert!(turned <= dt * turn + 1e-9);
            }
        }

        #[test]
        fn integration_is_time_additive(vx in -3.0f64..3.0, vy in -3.0f64..3.0, dt in 0.01f64..2.0) {
            let p = pose(0.5, -1.5, 1.0);
            let a = VelocityAction { index: 0, velocity: Vec2::new(vx, vy) };
            let twice = integrate_motion(&integrate_motion(&p, &a, dt), &a, dt);
            let once = integrate_motion(&p, &a, 2.0 * dt);
            prop_assert!(twice.position.distance(once.position) < 1e-12);
            prop_assert_eq!(twice.heading, once.heading);
        }

        #[test]
        fn collision_symmetric(ax in -10.0f64..10.0, ay in -10.0f64..10.0, bx in -10.0f64..10.0, by in -10.0f64..10.0, ra in 0.1f64..3.0, rb in 0.1f64..3.0) {
            let a = pose(ax, ay, ra);
            let b = pose(bx, by, rb);
            prop_assert_eq!(disc_collision(&a, &b), disc_collision(&b, &a));
        }
    }
}
