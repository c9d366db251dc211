mod common;

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use npcbench::agents::BevMemory;
use npcbench::config::Config;
use npcbench::fixtures;
use npcbench::geometry::Point2;
use npcbench::metrics::{ecr, scr, spl};
use npcbench::sim::{Action, Simulator};
use npcbench::taskgen::{generate_episodes, polyline_length, Cell, Episode, Path, Task};
use npcbench::wkm::{KnowledgeSession, SimilarityProvider, TokenCosine};
use npcbench::world::World;

struct Bench {
    world: Arc<World>,
    episodes: Vec<Episode>,
}

fn bench() -> &'static Bench {
    static B: OnceLock<Bench> = OnceLock::new();
    B.get_or_init(|| {
        let world = Arc::new(World::build(fixtures::scene("apartment_a"), &Config::default()).unwrap());
        let episodes = generate_episodes(vec![world.clone()], &Config::default(), Task::ObjectLoconav, 12, 99).unwrap();
        Bench { world, episodes }
    })
}

/// Brute-force clearance from `p` to every non-free cell square nearby.
fn disc_clear(w: &World, p: Point2, r: f64) -> bool {
    let m = &w.map;
    let reach = r + m.cell_size;
    let lo = ((p.x - reach - m.origin.x) / m.cell_size).floor().max(0.0) as usize;
    let hi = (((p.x + reach - m.origin.x) / m.cell_size).ceil() as usize).min(m.width);
    let lo_j = ((p.y - reach - m.origin.y) / m.cell_size).floor().max(0.0) as usize;
    let hi_j = (((p.y + reach - m.origin.y) / m.cell_size).ceil() as usize).min(m.height);
    for j in lo_j..hi_j {
        for i in lo..hi {
            if m.get(i, j) != Cell::Free && m.cell_rect(i, j).distance_to_point(p) < r - 1e-9 {
                return false;
            }
        }
    }
    true
}

fn action() -> impl Strategy<Value = Action> {
    let mag = prop_oneof![Just(2.0), Just(4.0), Just(6.0)];
    prop_oneof![
        mag.clone().prop_map(|magnitude| Action::MoveForward { magnitude }),
        mag.clone().prop_map(|magnitude| Action::AdvanceLeft { magnitude }),
        mag.prop_map(|magnitude| Action::AdvanceRight { magnitude }),
        Just(Action::TurnLeft90),
        Just(Action::TurnRight90),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn robot_disc_never_overlaps_an_obstacle(k in 0usize..12, actions in prop::collection::vec(action(), 1..20)) {
        let b = bench();
        let cfg = Config::default();
        let mut sim = Simulator::new(b.world.clone(), cfg.sim.clone());
        let mut obs = sim.reset(&b.episodes[k]).unwrap();
        prop_assert!(disc_clear(&b.world, obs.pose.position, cfg.sim.robot_radius));
        for a in &actions {
            let Ok((o, out)) = sim.step(a) else { break };
            prop_assert!(disc_clear(&b.world, o.pose.position, cfg.sim.robot_radius), "after {a:?} at {:?}", o.pose.position);
            obs = o;
            if out.terminated {
                break;
            }
        }
        let _ = obs;
    }

    #[test]
    fn memory_never_forgets(k in 0usize..12, actions in prop::collection::vec(action(), 1..12)) {
        let b = bench();
        let cfg = Config::default();
        let mut sim = Simulator::new(b.world.clone(), cfg.sim.clone());
        let obs = sim.reset(&b.episodes[k]).unwrap();
        let g = &b.world.coarse;
        let mut mem = BevMemory::new(g.width, g.height, g.cell_size, g.origin);
        mem.observe(&obs);
        for a in &actions {
            let Ok((o, out)) = sim.step(a) else { break };
            let before_cells = mem.cells.clone();
            let before: BTreeSet<String> = mem.candidates.keys().cloned().collect();
            mem.observe(&o);
            for (old, new) in before_cells.iter().zip(&mem.cells) {
                prop_assert!(old.is_none() || new.is_some());
                if *old == Some(Cell::Obstacle) {
                    prop_assert_eq!(*new, Some(Cell::Obstacle));
                }
            }
            let after: BTreeSet<String> = mem.candidates.keys().cloned().collect();
            prop_assert!(before.is_subset(&after));
            if out.terminated {
                break;
            }
        }
    }
}

proptest! {
    #[test]
    fn spl_never_exceeds_success_rate(items in prop::collection::vec((any::<bool>(), 0.1f64..30.0, 0.0f64..60.0), 1..40)) {
        let s = spl(&items).unwrap();
        let sr = items.iter().filter(|i| i.0).count() as f64 / items.len() as f64;
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!(s <= sr + 1e-12);
    }

    #[test]
    fn ecr_and_scr_stay_in_the_unit_interval(
        first in 1usize..12,
        drops in prop::collection::vec(0usize..4, 0..4),
        flags in prop::collection::vec(any::<bool>(), 1..6),
    ) {
        let mut sizes = vec![first];
        for d in drops {
            let last = *sizes.last().unwrap();
            sizes.push(last.saturating_sub(d).max(1));
        }
        let e = ecr(&sizes).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        // The numerator never shrinks as rounds are added.
        for n in 1..sizes.len() {
            prop_assert!(ecr(&sizes[..n]).unwrap() <= ecr(&sizes[..=n]).unwrap() + 1e-12 || first == 1);
        }
        let f = scr(&flags).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn path_length_is_the_sum_of_segments(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..12)) {
        let pts: Vec<Point2> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        let path = Path::new(pts.clone());
        let sum: f64 = pts.windows(2).map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt()).sum();
        prop_assert!((path.length - sum).abs() < 1e-6);
        prop_assert!((polyline_length(&pts) - path.length).abs() < 1e-12);
    }

    #[test]
    fn token_cosine_is_reflexive_and_symmetric(a in "[a-z ]{1,30}", b in "[a-z ]{1,30}") {
        let p = TokenCosine;
        let ab = p.similarity(&a, &b).unwrap();
        prop_assert!((ab - p.similarity(&b, &a).unwrap()).abs() < 1e-6);
        prop_assert!((-1.0..=1.0 + 1e-9).contains(&ab));
        if !a.trim().is_empty() {
            prop_assert!((p.similarity(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn filter_is_sound_and_monotone(target_pick in 0usize..64, mask in 1u64..u64::MAX, seed in 0u64..1000) {
        let w = &bench().world;
        let wk = &w.knowledge;
        let all: Vec<String> = w.scene.objects.keys().cloned().collect();
        let target = all[target_pick % all.len()].clone();
        let mut cands: BTreeSet<String> =
            all.iter().enumerate().filter(|(i, _)| mask >> (i % 64) & 1 == 1).map(|(_, s)| s.clone()).collect();
        cands.insert(target.clone());
        prop_assume!(cands.len() >= 2);
        let mut session = KnowledgeSession::new(seed);
        let diff = wk.find_diff(&target, &cands).unwrap();
        let Ok(info) = wk.get_info(&mut session, &target, &diff) else { return Ok(()) };
        let next = wk.filter(&cands, &info).unwrap();
        prop_assert!(next.contains(&target));
        prop_assert!(next.is_subset(&cands));
        let again = wk.filter(&next, &info).unwrap();
        prop_assert!(again.is_subset(&next));
    }
}

#[test]
fn disc_check_rejects_a_point_inside_an_obstacle() {
    let w = common::world(common::corridor());
    assert!(!disc_clear(&w, Point2::new(14.25, 1.5), 0.34));
    assert!(disc_clear(&w, Point2::new(5.0, 1.5), 0.34));
}
