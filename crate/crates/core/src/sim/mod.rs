//! Grid-world simulator: worlds, episodes, sensing and the episode runner.

pub mod detector;
pub mod episode;
pub mod generate;
pub mod runner;
pub mod sensor;
pub mod world;

pub use episode::{Episode, EpisodeFile, Mode, TargetSpec};
pub use generate::{generate, GenConfig};
pub use runner::{episode_seed, run_episode, run_episode_observed, run_with, StepRecord};
pub use sensor::{apply_action, sense, AgentAction, GridPose, SensorFrame};
pub use world::{ObjectInstance, Room, WorldModel};
