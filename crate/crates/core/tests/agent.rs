use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavjam::agent::{
    apply_defense, estimate_jammer_motion, uav_feature_len, uav_featurize, uav_observe, uav_reward, uav_reward_terms,
    DefenseConfig, DefenseMode, JammerTracker, RewardWeights, UavObservation, UavTransition,
};
use uavjam::features::FeatureConfig;
use uavjam::geom::{wrap_angle, Pose, Rect, Vec2};
use uavjam::jammers::JammerSpec;
use uavjam::world::{reset, WorldConfig};

fn idle() -> UavTransition {
    UavTransition {
        data_before: 5e6,
        data_after: 5e6,
        nearest_other: None,
        own_radius: 1.0,
        entered_no_fly: false,
        time_left_next: 50.0,
        goal_distance_next: 10.0,
        v_max: 2.0,
        arrived: false,
        jammer_distance_next: None,
    }
}

fn intelligent() -> DefenseConfig {
    DefenseConfig { mode: DefenseMode::Intelligent, ..DefenseConfig::default() }
}

#[test]
fn idle_step_costs_only_the_step_penalty() {
    let w = RewardWeights::default();
    let t = uav_reward_terms(&idle(), &w, &DefenseConfig::default());
    assert_eq!(t.step, -0.1);
    assert_eq!(t.total(), -0.1);
}

#[test]
fn each_reward_term_in_isolation() {
    let w = RewardWeights::default();
    let none = DefenseConfig::default();
    let only = |tr: UavTransition, d: &DefenseConfig| {
        let t = uav_reward_terms(&tr, &w, d);
        assert_eq!(uav_reward(&tr, &w, d), t.total());
        t
    };

    // 3 Mbit collected at 0.05 per megabit.
    let t = only(UavTransition { data_after: 2e6, ..idle() }, &none);
    assert!((t.data - 0.15).abs() < 1e-12);
    assert_eq!((t.collision, t.obstacle, t.time, t.arrival, t.jammer), (0.0, 0.0, 0.0, 0.0, 0.0));

    // Contact distance r + r_j = 2 gives the full penalty; the buffer ramps it to zero.
    assert_eq!(only(UavTransition { nearest_other: Some((2.0, 1.0)), ..idle() }, &none).collision, -25.0);
    assert!((only(UavTransition { nearest_other: Some((3.0, 1.0)), ..idle() }, &none).collision + 18.75).abs() < 1e-12);
    assert_eq!(only(UavTransition { nearest_other: Some((6.0, 1.0)), ..idle() }, &none).collision, 0.0);
    assert_eq!(only(UavTransition { nearest_other: Some((6.5, 1.0)), ..idle() }, &none).collision, 0.0);

    assert_eq!(only(UavTransition { entered_no_fly: true, ..idle() }, &none).obstacle, -25.0);

    // 10 s left, 30 m to go at 2 m/s needs 15 s: slack -5.
    let late = only(UavTransition { time_left_next: 10.0, goal_distance_next: 30.0, ..idle() }, &none);
    assert!((late.time + 5.0).abs() < 1e-12);
    assert_eq!(only(UavTransition { time_left_next: 15.0, goal_distance_next: 30.0, ..idle() }, &none).time, 0.0);

    assert_eq!(only(UavTransition { arrived: true, goal_distance_next: 0.0, ..idle() }, &none).arrival, 20.0);

    let jam = |d: f64, mode: &DefenseConfig| only(UavTransition { jammer_distance_next: Some(d), ..idle() }, mode).jammer;
    assert!((jam(4.0, &intelligent()) + 6.0).abs() < 1e-12);
    assert_eq!(jam(10.0, &intelligent()), 0.0);
    assert_eq!(jam(0.0, &intelligent()), -10.0);
    assert_eq!(jam(4.0, &none), 0.0);
}

#[test]
fn collision_ramp_is_continuous_and_linear() {
    let w = RewardWeights::default();
    let at = |d: f64| uav_reward_terms(&UavTransition { nearest_other: Some((d, 1.0)), ..idle() }, &w, &DefenseConfig::default()).collision;
    let mut prev = at(2.0);
    for k in 1..=400 {
        let d = 2.0 + 4.0 * k as f64 / 400.0;
        let v = at(d);
        assert!((v - prev).abs() <= 25.0 / 100.0 + 1e-12);
        assert!((v + 25.0 * (1.0 - (d - 2.0) / 4.0)).abs() < 1e-9);
        prev = v;
    }
}

fn busy_world() -> WorldConfig {
    WorldConfig {
        node_count_range: [4, 6],
        other_uav_count: 4,
        ..WorldConfig::default()
    }
}

#[test]
fn observation_visibility_rules() {
    let mut w = busy_world();
    w.jammers.push(JammerSpec::continuous(Vec2::new(3.0, 4.0), 1e-3));
    let state = reset(&w, 17).unwrap();
    let obs = uav_observe(&w, &state, &DefenseConfig::default());
    let me = state.typical.pose.position;
    for o in &obs.others {
        assert!(o.position.distance(me) <= w.arena.sensing_radius);
    }
    let hidden = state.others.iter().filter(|o| o.pose.position.distance(me) > w.arena.sensing_radius).count();
    assert_eq!(obs.others.len() + hidden, state.others.len());
    assert_eq!(obs.nodes.len(), state.nodes.len());
    assert!(obs.jammer_track.is_empty());
}

#[test]
fn intelligent_layout_only_appends_jammer_block() {
    let cfg = FeatureConfig::default();
    let w = busy_world();
    let state = reset(&w, 3).unwrap();
    let plain = uav_featurize(&uav_observe(&w, &state, &DefenseConfig::default()), &DefenseConfig::default(), &cfg);
    let mut obs = uav_observe(&w, &state, &intelligent());
    obs.jammer_track = vec![Vec2::new(1.0, 2.0)];
    let smart = uav_featurize(&obs, &intelligent(), &cfg);
    assert_eq!(plain.len(), uav_feature_len(&cfg, &DefenseConfig::default()));
    assert_eq!(smart.len(), uav_feature_len(&cfg, &intelligent()));
    assert_eq!(&smart.values[..plain.len()], &plain.values[..]);
    assert!(smart.block("jammer").is_some() && plain.block("jammer").is_none());
}

#[test]
fn goal_features_vanish_at_destination() {
    let w = busy_world();
    let state = reset(&w, 8).unwrap();
    let mut obs = uav_observe(&w, &state, &DefenseConfig::default());
    obs.destination = obs.own.position;
    let f = uav_featurize(&obs, &DefenseConfig::default(), &FeatureConfig::default());
    let own = f.block("own").unwrap();
    assert!(own.iter().all(|v| v.is_finite()));
    // The own block carries the goal offset in the UAV frame; at the goal it is zero.
    assert_eq!(&own[2..4], &[0.0, 0.0]);
}

fn transform(obs: &UavObservation, shift: Vec2, theta: f64) -> UavObservation {
    let pivot = obs.own.position;
    let p = |q: Vec2| (q - pivot).rotated(theta) + pivot + shift;
    let pose = |q: &Pose| Pose {
        position: p(q.position),
        velocity: q.velocity.rotated(theta),
        heading: wrap_angle(q.heading + theta),
        ..*q
    };
    let mut out = obs.clone();
    out.own = pose(&obs.own);
    out.destination = p(obs.destination);
    out.others = obs.others.iter().map(pose).collect();
    for n in &mut out.nodes {
        n.position = p(n.position);
    }
    out.jammer_track = obs.jammer_track.iter().map(|q| p(*q)).collect();
    out.arena = Rect::new(obs.arena.min + shift, obs.arena.max + shift);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn features_invariant_under_translation(seed in 0u64..1000, tx in -500.0f64..500.0, ty in -500.0f64..500.0) {
        let w = busy_world();
        let state = reset(&w, seed).unwrap();
        let d = intelligent();
        let mut obs = uav_observe(&w, &state, &d);
        obs.jammer_track = vec![Vec2::new(5.0, -3.0), Vec2::new(6.0, -2.0)];
        let cfg = FeatureConfig::default();
        let a = uav_featurize(&obs, &d, &cfg);
        let b = uav_featurize(&transform(&obs, Vec2::new(tx, ty), 0.0), &d, &cfg);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    /// The arena is axis aligned, so its block is the only one that sees a rotation.
    #[test]
    fn features_invariant_under_rotation_about_uav(seed in 0u64..1000, theta in -3.1f64..3.1) {
        let w = busy_world();
        let state = reset(&w, seed).unwrap();
        let d = intelligent();
        let mut obs = uav_observe(&w, &state, &d);
        obs.jammer_track = vec![Vec2::new(-4.0, 7.0)];
        let cfg = FeatureConfig::default();
        let a = uav_featurize(&obs, &d, &cfg);
        let b = uav_featurize(&transform(&obs, Vec2::zero(), theta), &d, &cfg);
        for blk in a.layout.blocks.iter().filter(|b| b.name != "arena") {
            let (x, y) = (a.block(&blk.name).unwrap(), b.block(&blk.name).unwrap());
            for (u, v) in x.iter().zip(y) {
                prop_assert!((u - v).abs() < 1e-9, "{}: {u} vs {v}", blk.name);
            }
        }
    }

    #[test]
    fn features_always_finite(seed in 0u64..5000) {
        let w = busy_world();
        let state = reset(&w, seed).unwrap();
        let f = uav_featurize(&uav_observe(&w, &state, &DefenseConfig::default()), &DefenseConfig::default(), &FeatureConfig::default());
        prop_assert!(f.is_finite());
    }
}

#[test]
fn defenses_modify_the_training_world() {
    let w = WorldConfig::default();
    let hst = DefenseConfig { mode: DefenseMode::HigherThreshold, ..DefenseConfig::default() };
    assert!((apply_defense(&w, &hst).unwrap().radio.sinr_threshold - 3.9).abs() < 1e-12);
    let vj = DefenseConfig { mode: DefenseMode::VirtualJammer, ..DefenseConfig::default() };
    let t = apply_defense(&w, &vj).unwrap();
    assert_eq!(t.jammers, vec![JammerSpec::continuous(Vec2::zero(), 1e-3 / 3.0)]);
    assert_eq!(apply_defense(&w, &DefenseConfig::default()).unwrap(), w);
}

#[test]
fn velocity_filter_examples() {
    let (v, p, h) = estimate_jammer_motion(&[Vec2::new(1.0, 0.0); 3], Vec2::new(2.0, 2.0), 1.0, 0.3).unwrap();
    assert_eq!((v, p, h), (Vec2::new(1.0, 0.0), Vec2::new(3.0, 2.0), 0.0));
    let (v, _, h) = estimate_jammer_motion(&[Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)], Vec2::zero(), 1.0, 0.0).unwrap();
    assert_eq!(v, Vec2::new(0.5, 0.5));
    assert!((h - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    let (_, _, h) = estimate_jammer_motion(&[Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)], Vec2::zero(), 1.0, 0.7).unwrap();
    assert_eq!(h, 0.7);
    assert!(estimate_jammer_motion(&[], Vec2::zero(), 1.0, 0.0).is_err());
}

fn moving(pos: Vec2, vel: Vec2) -> Pose {
    Pose { position: pos, altitude: 30.0, velocity: vel, heading: vel.angle(), radius: 1.0 }
}

#[test]
fn tracker_uses_truth_when_visible() {
    let mut t = JammerTracker::new(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let p = moving(Vec2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)), Vec2::new(1.0, 0.0));
        t.observe(&p, true, 1.0).unwrap();
        assert_eq!(*t.track().last().unwrap(), p.position);
    }
    assert_eq!(t.track().len(), 4);
}

#[test]
fn tracker_extrapolates_constant_velocity_exactly() {
    let mut t = JammerTracker::new(4);
    let v = Vec2::new(0.75, -1.5);
    let mut pos = Vec2::new(-30.0, 20.0);
    for k in 0..12 {
        t.observe(&moving(pos, v), k < 5, 1.0).unwrap();
        assert!(t.track().last().unwrap().distance(pos) < 1e-12, "step {k}");
        pos += v;
    }
}
