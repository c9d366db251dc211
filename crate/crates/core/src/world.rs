//! Per-scene precomputation shared by generation, simulation, agents and
//! the service: scene graph, knowledge manager and occupancy layers.

use std::sync::Arc;

use crate::config::Config;
use crate::scene::{derive_relations, RelationConfig, Scene, SceneGraph};
use crate::sim::{occluders, CoarseGrid, Occluder};
use crate::taskgen::{build_occupancy, Clearance, OccupancyMap, TaskGenError, Traversability};
use crate::wkm::{SimilarityProvider, TokenCosine, WorldKnowledge};

#[derive(Debug)]
pub struct World {
    pub scene: Scene,
    pub graph: Arc<SceneGraph>,
    pub knowledge: WorldKnowledge,
    pub map: OccupancyMap,
    pub clearance: Clearance,
    pub traversable: Traversability,
    pub relations: RelationConfig,
    /// Objects that block sight lines.
    pub occluders: Vec<Occluder>,
    /// Occupancy at the agents' sensing resolution.
    pub coarse: CoarseGrid,
}

impl World {
    pub fn build(scene: Scene, cfg: &Config) -> Result<Self, TaskGenError> {
        Self::with_provider(scene, cfg, Arc::new(TokenCosine))
    }

    pub fn with_provider(
        scene: Scene,
        cfg: &Config,
        provider: Arc<dyn SimilarityProvider>,
    ) -> Result<Self, TaskGenError> {
        let map = build_occupancy(&scene, &cfg.occupancy)?;
        Ok(Self::from_map(scene, map, cfg, provider))
    }

    /// Uses a caller-supplied map, e.g. one with injected obstacles.
    pub fn from_map(scene: Scene, map: OccupancyMap, cfg: &Config, provider: Arc<dyn SimilarityProvider>) -> Self {
        let graph = Arc::new(derive_relations(&scene, &cfg.relations));
        let knowledge = WorldKnowledge::with_provider(graph.clone(), provider);
        let clearance = Clearance::new(&map);
        let traversable = Traversability::new(&map, &clearance, cfg.sim.robot_radius);
        let occluders = occluders(&scene, cfg.occupancy.z_band);
        let coarse = CoarseGrid::from_map(&map, cfg.sim.patch_cell);
        Self { scene, graph, knowledge, map, clearance, traversable, relations: cfg.relations, occluders, coarse }
    }

    pub fn scene_id(&self) -> &str {
        &self.scene.scene_id
    }
}
