mod common;

use std::f64::consts::PI;

use common::*;
use npcbench::config::Config;
use npcbench::sim::{charge, fov_visible, replay, Action, FovConfig, Pose, SimConfig, SimError, Simulator, Status, TrajectoryLog};
use npcbench::taskgen::{generate_episode, Task};

fn corridor_with_wall() -> npcbench::scene::Scene {
    room_scene(
        "walled",
        16.0,
        3.0,
        vec![
            obj("chair/1", "1/hall", [14.0, 1.2, 0.0], [14.5, 1.8, 0.9], &["The object is a blue chair."]),
            obj("wall/1", "1/hall", [4.5, 0.0, 0.0], [4.7, 3.0, 2.5], &[]),
            obj("cup/1", "1/hall", [6.0, 1.4, 0.0], [6.1, 1.5, 0.1], &["A cup."]),
        ],
    )
}

#[test]
fn step_charges_follow_duration() {
    let cfg = SimConfig::default();
    assert_eq!(charge(&Action::MoveForward { magnitude: 2.0 }, &cfg), 960);
    assert_eq!(charge(&Action::AdvanceLeft { magnitude: 6.0 }, &cfg), 2880);
    assert_eq!(charge(&Action::TurnRight90, &cfg), 480);
    assert_eq!(charge(&Action::Stop, &cfg), 0);
}

#[test]
fn reset_places_robot_at_start_and_is_repeatable() {
    let w = world(corridor());
    let start = Pose::new(2.0, 1.5, 0.3);
    let ep = episode("corridor", Task::ObjectLoconav, start, "chair/1", p(12.0, 1.5));
    let mut sim = Simulator::new(w.clone(), SimConfig::default());
    let a = sim.reset(&ep).unwrap();
    assert_eq!(a.pose, start);
    assert_eq!(a.physical_steps_used, 0);
    sim.step(&Action::MoveForward { magnitude: 2.0 }).unwrap();
    let b = sim.reset(&ep).unwrap();
    assert_eq!(a, b);

    let other = episode("elsewhere", Task::ObjectLoconav, start, "chair/1", p(12.0, 1.5));
    assert!(matches!(sim.reset(&other), Err(SimError::EpisodeInvalid(_))));
    let blocked = episode("corridor", Task::ObjectLoconav, Pose::new(0.1, 1.5, 0.0), "chair/1", p(12.0, 1.5));
    assert!(matches!(sim.reset(&blocked), Err(SimError::EpisodeInvalid(_))));
}

#[test]
fn moving_into_a_wall_stops_short_and_counts_a_reset() {
    let w = world(corridor_with_wall());
    let ep = episode("walled", Task::ObjectLoconav, Pose::new(4.0, 1.5, 0.0), "chair/1", p(12.0, 1.5));
    let mut sim = Simulator::new(w, SimConfig::default());
    sim.reset(&ep).unwrap();
    let (obs, out) = sim.step(&Action::MoveForward { magnitude: 2.0 }).unwrap();
    assert!(out.collided);
    assert_eq!(obs.reset_count, 1);
    // The wall face is 0.5 m ahead; the disc stops one radius short of it.
    let advanced = obs.pose.position.x - 4.0;
    assert!((advanced - (0.5 - 0.34)).abs() < 0.03, "advanced {advanced}");
    assert!((sim.state().path_length_accum - advanced).abs() < 1e-9);
    assert_eq!(out.charged, 960);
}

#[test]
fn success_requires_visible_target_strictly_inside_three_meters() {
    let w = world(corridor());
    let mut sim = Simulator::new(w, SimConfig::default());
    for (x, expect) in [(14.0 - 2.9, true), (14.0 - 3.1, false)] {
        let ep = episode("corridor", Task::ObjectLoconav, Pose::new(x, 1.5, 0.0), "chair/1", p(x, 1.5));
        sim.reset(&ep).unwrap();
        let (_, out) = sim.step(&Action::Stop).unwrap();
        assert_eq!(out.success, Some(expect), "x = {x}");
        assert_eq!(sim.result("t").unwrap().success, expect);
    }
    // Close enough but facing away.
    let ep = episode("corridor", Task::ObjectLoconav, Pose::new(12.0, 1.5, PI), "chair/1", p(12.0, 1.5));
    sim.reset(&ep).unwrap();
    assert_eq!(sim.step(&Action::Stop).unwrap().1.success, Some(false));
}

#[test]
fn field_of_view_cases() {
    let w = world(corridor_with_wall());
    let fov = FovConfig::default();
    // Cup 1 m ahead in open space.
    assert!(fov_visible(&w, p(5.0, 1.45), 0.0, "cup/1", None, &fov));
    assert!(!fov_visible(&w, p(5.0, 1.45), PI, "cup/1", None, &fov));
    // Chair 2 m ahead, but behind a full-height wall.
    let corridor_only = world(corridor());
    assert!(fov_visible(&corridor_only, p(5.0, 1.5), 0.0, "chair/1", None, &fov));
    let walled = world(room_scene(
        "wall-ahead",
        16.0,
        3.0,
        vec![
            obj("chair/1", "1/hall", [14.0, 1.2, 0.0], [14.5, 1.8, 0.9], &[]),
            obj("wall/1", "1/hall", [13.0, 0.0, 0.0], [13.2, 3.0, 2.5], &[]),
        ],
    ));
    assert!(!fov_visible(&walled, p(12.0, 1.5), 0.0, "chair/1", None, &fov));
    // Out of range.
    let short = FovConfig { range: 5.0, ..fov };
    assert!(!fov_visible(&corridor_only, p(5.0, 1.5), 0.0, "chair/1", None, &short));
}

#[test]
fn budget_overrun_terminates_unsuccessfully() {
    let w = world(corridor());
    // Start already in view of the target so a late stop would succeed.
    let ep = episode("corridor", Task::ObjectLoconav, Pose::new(12.0, 1.5, 0.0), "chair/1", p(12.0, 1.5));
    let mut sim = Simulator::new(w, SimConfig::default());
    sim.reset(&ep).unwrap();
    // 30 quarter turns use exactly the 14,400-step horizon.
    for k in 0..30 {
        let (obs, out) = sim.step(&Action::TurnLeft90).unwrap();
        assert!(!out.terminated, "turn {k}");
        assert_eq!(obs.physical_steps_used, 480 * (k + 1));
    }
    assert_eq!(sim.state().physical_steps_used, 14_400);
    let (obs, out) = sim.step(&Action::TurnLeft90).unwrap();
    assert!(out.budget_exhausted && out.terminated);
    assert_eq!(out.success, Some(false));
    assert_eq!(obs.physical_steps_used, 14_400);
    assert_eq!(sim.status(), Status::BudgetExhausted);
    assert!(!sim.result("t").unwrap().success);
    assert!(matches!(sim.step(&Action::Stop), Err(SimError::Terminated)));
}

#[test]
fn step_charges_sum_to_steps_used() {
    let w = world(corridor());
    let ep = episode("corridor", Task::ObjectLoconav, Pose::new(2.0, 1.5, 0.0), "chair/1", p(12.0, 1.5));
    let mut sim = Simulator::new(w, SimConfig::default());
    sim.reset(&ep).unwrap();
    let actions = [
        Action::MoveForward { magnitude: 4.0 },
        Action::AdvanceLeft { magnitude: 2.0 },
        Action::TurnRight90,
        Action::AdvanceRight { magnitude: 6.0 },
    ];
    let mut total = 0;
    for a in &actions {
        total += sim.step(a).unwrap().1.charged;
    }
    assert_eq!(total, sim.state().physical_steps_used);
}

#[test]
fn illegal_actions_are_rejected() {
    let w = world(corridor());
    let ep = episode("corridor", Task::ObjectLoconav, Pose::new(2.0, 1.5, 0.0), "chair/1", p(12.0, 1.5));
    let mut sim = Simulator::new(w, SimConfig::default());
    assert!(matches!(sim.step(&Action::Stop), Err(SimError::NotReset)));
    sim.reset(&ep).unwrap();
    assert!(matches!(sim.step(&Action::MoveForward { magnitude: 3.0 }), Err(SimError::InvalidAction(_))));
    assert!(matches!(sim.step(&Action::Ask { question: "where?".into() }), Err(SimError::InvalidAction(_))));
    assert!(matches!(sim.step(&Action::Pick { object: "chair/1".into() }), Err(SimError::InvalidAction(_))));
    assert_eq!(sim.state().physical_steps_used, 0);
}

#[test]
fn pick_out_of_reach_fails_but_is_charged() {
    let w = world(room_scene(
        "pick",
        10.0,
        4.0,
        vec![interactive(obj("cup/1", "1/hall", [8.0, 1.9, 0.0], [8.1, 2.0, 0.1], &["A cup."]))],
    ));
    let ep = episode("pick", Task::LocoManip, Pose::new(2.0, 2.0, 0.0), "cup/1", p(7.0, 2.0));
    let mut sim = Simulator::new(w, SimConfig::default());
    sim.reset(&ep).unwrap();
    let (obs, out) = sim.step(&Action::Pick { object: "cup/1".into() }).unwrap();
    assert!(out.failed.is_some());
    assert_eq!(out.charged, 480);
    assert_eq!(obs.held_object, None);
    assert_eq!(obs.pose, ep.start_pose);

    // Within 0.8 m of the body surface the pick attaches.
    let near = episode("pick", Task::LocoManip, Pose::new(7.5, 1.95, 0.0), "cup/1", p(7.5, 2.0));
    sim.reset(&near).unwrap();
    let (obs, out) = sim.step(&Action::Pick { object: "cup/1".into() }).unwrap();
    assert_eq!(out.failed, None);
    assert_eq!(obs.held_object.as_deref(), Some("cup/1"));
}

#[test]
fn replay_reproduces_trajectory_and_path_length() {
    let cfg = Config::default();
    let w = world(npcbench::fixtures::scene("apartment_a"));
    let ep = generate_episode(w.clone(), &cfg, Task::ObjectLoconav, 5).unwrap();
    let actions: Vec<Action> = (0..25).map(|k| Action::navigation_set()[(k * 7) % 11].clone()).collect();
    let mut sim = Simulator::new(w.clone(), cfg.sim.clone());
    sim.reset(&ep).unwrap();
    for a in &actions {
        if sim.status() != Status::Running {
            break;
        }
        sim.step(a).unwrap();
    }
    let log = sim.log();
    let again = replay(w, cfg.sim.clone(), &ep, &actions).unwrap();
    assert_eq!(log, again);

    let geometric: f64 = log.records.iter().map(|r| r.before.position.dist(r.after.position)).sum();
    assert!((geometric - sim.state().path_length_accum).abs() < 1e-6);

    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    assert_eq!(TrajectoryLog::read_jsonl(&buf[..]).unwrap(), log);
}
