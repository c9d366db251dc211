use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{base_actions, episode_seed, Agent, Turn};
use crate::sim::{Action, Observation};
use crate::taskgen::{Episode, PlaceRelation, Task};

/// Uniform draws over the task's legal actions. Pick and place target the
/// nearest visible object that could accept them.
pub struct RandomAgent {
    seed: u64,
    rng: ChaCha8Rng,
    task: Task,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed), task: Task::ObjectLoconav }
    }

    fn actions(&self, obs: &Observation) -> Vec<Action> {
        let mut v = base_actions(self.task);
        if self.task == Task::LocoManip {
            let nearest = |want_interactive: bool| {
                obs.visible_objects
                    .iter()
                    .filter(|d| d.interactive == want_interactive)
                    .min_by(|a, b| a.range.total_cmp(&b.range))
                    .map(|d| d.instance_id.clone())
            };
            if let Some(o) = nearest(true).filter(|_| obs.held_object.is_none()) {
                v.push(Action::Pick { object: o });
            }
            if let Some(r) = nearest(false).filter(|_| obs.held_object.is_some()) {
                v.push(Action::Place { relation: PlaceRelation::On, receptacle: r.clone() });
                v.push(Action::Place { relation: PlaceRelation::Nearby, receptacle: r });
            }
        }
        v
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, episode: &Episode, _obs: &Observation) {
        // Per-episode stream so results don't depend on episode order.
        self.rng = ChaCha8Rng::seed_from_u64(episode_seed(self.seed, &episode.episode_id));
        self.task = episode.task;
    }

    fn act(&mut self, turn: Turn<'_>) -> Action {
        let actions = self.actions(turn.obs);
        actions[self.rng.gen_range(0..actions.len())].clone()
    }
}
