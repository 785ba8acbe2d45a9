//! Runs many episodes on a worker pool. Each episode owns its state and is
//! seeded from the root seed and its id, so results do not depend on the
//! number of workers.

use crate::config::Config;
use crate::error::Result;
use crate::metrics::EpisodeResult;
use crate::pipeline::PipelineKind;
use crate::sim::{episode_seed, run_episode, Episode};

/// Results come back in the order of `episodes`.
pub fn run_batch(
    episodes: &[Episode],
    cfg: &Config,
    kind: PipelineKind,
    root_seed: u64,
    jobs: usize,
) -> Result<Vec<EpisodeResult>> {
    let one = |ep: &Episode| run_episode(ep, cfg, kind, episode_seed(root_seed, &ep.id));
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::Error::Argument(format!("cannot start {jobs} workers: {e}")))?;
        return pool.install(|| episodes.par_iter().map(one).collect());
    }
    if jobs > 1 {
        log::warn!("built without the parallel feature; running {} episodes sequentially", episodes.len());
    }
    episodes.iter().map(one).collect()
}
