mod common;

use num_rational::Ratio;

use common::{interactive, obj, room_scene, world};
use npcbench::config::Config;
use npcbench::geometry::Aabb;
use npcbench::metrics::*;
use npcbench::taskgen::{PlaceRelation, PlacementCondition, Split, Task};
use npcbench::wkm::InfoCondition;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn spl_examples() {
    assert!(close(spl(&[(true, 10.0, 12.5)]).unwrap(), 0.8));
    assert!(close(spl(&[(true, 10.0, 8.0)]).unwrap(), 1.0), "a shorter path is capped at 1");
    assert!(close(spl(&[(false, 10.0, 10.0)]).unwrap(), 0.0));
    assert!(close(spl(&[(true, 10.0, 20.0), (false, 7.0, 3.0)]).unwrap(), 0.25));
    assert_eq!(spl(&[]), Err(MetricError::Undefined("SPL")));
    assert!(matches!(spl(&[(true, 0.0, 1.0)]), Err(MetricError::Invariant(_))));
}

#[test]
fn ecr_and_scr_examples() {
    assert!(close(ecr(&[5, 3, 1]).unwrap(), 1.0));
    assert!(close(ecr(&[5, 3]).unwrap(), 0.5));
    assert!(close(ecr(&[4, 4, 4]).unwrap(), 0.0));
    assert!(close(ecr(&[1]).unwrap(), 1.0), "singleton start is already disambiguated");
    assert!(matches!(ecr(&[2, 3]), Err(MetricError::Invariant(_))));
    assert!(close(scr(&[true, false]).unwrap(), 0.5));
    assert_eq!(scr(&[]), Err(MetricError::Undefined("SCR")));
}

#[test]
fn spl_matches_exact_rationals() {
    // (success, l, p) with integer centimetres so the reference is exact.
    let cases: &[&[(bool, i64, i64)]] = &[
        &[(true, 700, 900), (true, 1000, 1000), (false, 1500, 200)],
        &[(true, 1999, 2000), (true, 701, 3000)],
        &[(false, 700, 700)],
    ];
    for items in cases {
        let mut sum = Ratio::from_integer(0i64);
        for &(s, l, p) in *items {
            if s {
                sum += Ratio::new(l, l.max(p));
            }
        }
        let want = sum / Ratio::from_integer(items.len() as i64);
        let got = spl(&items.iter().map(|&(s, l, p)| (s, l as f64 / 100.0, p as f64 / 100.0)).collect::<Vec<_>>()).unwrap();
        assert!((got - *want.numer() as f64 / *want.denom() as f64).abs() < 1e-12);
    }
}

fn result(task: Task, split: Split, success: bool, l: f64, p: f64, resets: u32) -> EpisodeResult {
    EpisodeResult {
        episode_id: format!("{l}-{p}"),
        task,
        split,
        agent: "t".into(),
        success,
        taken_path_length: p,
        shortest_path_length: l,
        reset_count: resets,
        steps_used: 0,
        candidate_history: vec![],
        condition_flags: vec![],
        dialogue_rounds: 0,
    }
}

#[test]
fn report_aggregates_in_percent() {
    let rs = vec![
        result(Task::ObjectLoconav, Split::Test, true, 10.0, 12.5, 0),
        result(Task::ObjectLoconav, Split::Test, false, 8.0, 4.0, 2),
    ];
    let r = aggregate(&rs, Some(Split::Test)).unwrap();
    assert!(close(r.sr, 50.0) && close(r.spl, 40.0) && close(r.pl, 8.25) && close(r.rt, 1.0));
    assert_eq!((r.ecr, r.scr), (None, None));
    assert!(matches!(aggregate(&rs, Some(Split::Validation)), Err(MetricError::Contract(_))));
    assert_eq!(aggregate(&[], None), Err(MetricError::Undefined("report")));
    let table = render_table(&[("nav".into(), r)]);
    assert!(table.lines().next().unwrap().starts_with("Task"));
    assert!(table.contains("50.00") && table.contains("40.00"));
}

fn placement_world() -> std::sync::Arc<npcbench::world::World> {
    world(room_scene(
        "place",
        10.0,
        6.0,
        vec![
            obj("table/1", "1/hall", [2.0, 2.0, 0.0], [3.0, 3.0, 0.8], &["The object is a brown table."]),
            obj("table/2", "1/hall", [7.0, 2.0, 0.0], [8.0, 3.0, 0.8], &["The object is a white table."]),
            obj("couch/1", "1/hall", [2.0, 3.5, 0.0], [4.0, 4.5, 0.9], &["The object is a grey couch."]),
            interactive(obj("cup/1", "1/hall", [5.0, 5.0, 0.0], [5.1, 5.1, 0.12], &["The object is a cup."])),
        ],
    ))
}

fn cond(relation: PlaceRelation, category: &str, witness: &str) -> PlacementCondition {
    PlacementCondition { relation, receptacle_spec: InfoCondition::category(category), receptacle_witness: witness.into() }
}

fn cup_at(x: f64, y: f64, z: f64) -> Aabb {
    Aabb::new([x, y, z], [x + 0.1, y + 0.1, z + 0.12])
}

#[test]
fn placement_conditions_judge_each_relation() {
    let w = placement_world();
    let cfg = Config::default();
    let check = |placed: Option<&Aabb>, cs: &[PlacementCondition]| {
        check_conditions(placed, cs, &w.knowledge, &w.relations, &cfg.generation.placement)
    };
    let on_table = [cond(PlaceRelation::On, "table", "table/1")];
    assert_eq!(check(Some(&cup_at(2.4, 2.4, 0.805)), &on_table), vec![true]);
    // Any table satisfies a category-only description.
    assert_eq!(check(Some(&cup_at(7.4, 2.4, 0.805)), &on_table), vec![true]);
    assert_eq!(check(Some(&cup_at(5.0, 2.4, 0.0)), &on_table), vec![false]);

    let both = [cond(PlaceRelation::On, "table", "table/1"), cond(PlaceRelation::Nearby, "couch", "couch/1")];
    assert_eq!(check(Some(&cup_at(2.4, 2.4, 0.805)), &both), vec![true, true]);
    assert_eq!(check(Some(&cup_at(7.4, 2.4, 0.805)), &both), vec![true, false]);
    assert_eq!(check(None, &both), vec![false, false]);

    // Nearby is a strict gap below 1.5 m.
    let near_couch = [cond(PlaceRelation::Nearby, "couch", "couch/1")];
    assert_eq!(check(Some(&cup_at(5.49, 4.2, 0.0)), &near_couch), vec![true]);
    assert_eq!(check(Some(&cup_at(5.5, 4.2, 0.0)), &near_couch), vec![false]);
}
