use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::sensor::GridPose;
use super::world::WorldModel;
use crate::error::{Error, Result};

pub const TARGETS_PER_EPISODE: usize = 3;

/// How a wrong or missing FOUND affects the rest of the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The episode ends at the first target not found.
    #[default]
    Multion,
    /// Every target is attempted regardless of earlier outcomes.
    Realworld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub query: String,
    pub goal_id: String,
}

/// On-disk episode. `world` is resolved relative to the episode file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeFile {
    pub id: String,
    pub world: String,
    pub start: GridPose,
    #[serde(default)]
    pub mode: Mode,
    pub targets: Vec<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_budget: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub id: String,
    pub world: Arc<WorldModel>,
    pub start: GridPose,
    pub mode: Mode,
    pub targets: Vec<TargetSpec>,
    /// Overrides the configured per-target budget.
    pub step_budget: Option<usize>,
}

impl Episode {
    pub fn new(
        id: impl Into<String>,
        world: Arc<WorldModel>,
        start: GridPose,
        mode: Mode,
        targets: Vec<TargetSpec>,
    ) -> Result<Self> {
        let ep = Self {
            id: id.into(),
            world,
            start: GridPose::new(start.x, start.y, start.heading),
            mode,
            targets,
            step_budget: None,
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEpisode(format!("{}: {m}", self.id)));
        if self.targets.len() != TARGETS_PER_EPISODE {
            return bad(format!("expected {TARGETS_PER_EPISODE} targets, got {}", self.targets.len()));
        }
        for t in &self.targets {
            if t.query.trim().is_empty() {
                return bad("empty target query".into());
            }
            if self.world.object(&t.goal_id).is_none() {
                return bad(format!("goal {:?} is not in the world", t.goal_id));
            }
        }
        match self.start.cell(&self.world.spec) {
            Some(c) if self.world.is_free(c) => {}
            _ => return bad("start pose is not on a free cell".into()),
        }
        if self.step_budget == Some(0) {
            return bad("step_budget must be positive".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: EpisodeFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        let world_path = resolve(path, &file.world);
        let world = Arc::new(WorldModel::load(&world_path)?);
        Self::from_file(file, world)
    }

    pub fn from_file(f: EpisodeFile, world: Arc<WorldModel>) -> Result<Self> {
        let mut ep = Self::new(f.id, world, f.start, f.mode, f.targets)?;
        ep.step_budget = f.step_budget;
        ep.validate()?;
        Ok(ep)
    }

    pub fn to_file(&self, world_ref: &str) -> EpisodeFile {
        EpisodeFile {
            id: self.id.clone(),
            world: world_ref.to_string(),
            start: self.start,
            mode: self.mode,
            targets: self.targets.clone(),
            step_budget: self.step_budget,
        }
    }
}

fn resolve(episode_path: &Path, world: &str) -> PathBuf {
    let p = Path::new(world);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        episode_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}
