//! Exploration state maps, frontier and revisit-cluster candidates, and
//! greedy goal selection over the fused guidance surface.

use serde::{Deserialize, Serialize};

use crate::belief_map::{FeatureGrid, SimilarityMap};
use crate::error::Result;
use crate::exec::Exec;
use crate::grid::{components8, percentile, Cell, GridSpec, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    /// Confidence at or above which a cell counts as semantically explored.
    pub tau_explored: f64,
    /// Percentile of S_comb over explored-but-unsearched cells that seeds clusters.
    pub cluster_percentile: f64,
    /// Obstacle inflation in cells.
    pub inflation_cells: usize,
    /// How far a non-navigable goal may be moved to a navigable cell.
    pub snap_radius_cells: usize,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            tau_explored: 0.6,
            cluster_percentile: 95.0,
            inflation_cells: 0,
            snap_radius_cells: 3,
        }
    }
}

/// The observed (O), semantically explored (E), searched (C) and navigable
/// (N) masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationState {
    pub spec: GridSpec,
    pub observed: Mask,
    pub explored: Mask,
    pub searched: Mask,
    pub navigable: Mask,
}

fn inflate_free(spec: &GridSpec, occupancy: &Mask, cells: usize) -> Mask {
    let r = cells as isize;
    Mask::from_fn(spec, |c| {
        if occupancy.get(c) {
            return false;
        }
        for dr in -r..=r {
            for dc in -r..=r {
                if dc * dc + dr * dr > r * r {
                    continue;
                }
                if let Some(n) = spec.offset(c, dc, dr) {
                    if occupancy.get(n) {
                        return false;
                    }
                }
            }
        }
        true
    })
}

impl ExplorationState {
    /// Empty O/E/C; N from the occupancy prior.
    pub fn fresh(spec: GridSpec, occupancy: &Mask, cfg: &ExplorationConfig) -> Result<Self> {
        spec.validate()?;
        check_mask(&spec, occupancy)?;
        Ok(Self {
            spec,
            observed: Mask::new(&spec),
            explored: Mask::new(&spec),
            searched: Mask::new(&spec),
            navigable: inflate_free(&spec, occupancy, cfg.inflation_cells),
        })
    }

    /// Recomputes the masks from the belief map.
    ///
    /// O is every cell with nonzero confidence and E every cell at or above
    /// `tau_explored`. Cells sensed in the latest update (`sensed_now`) that
    /// are explored join C. N is the free space of `occupancy` shrunk by the
    /// inflation radius.
    pub fn update(
        &self,
        grid: &FeatureGrid,
        occupancy: &Mask,
        sensed_now: &Mask,
        cfg: &ExplorationConfig,
    ) -> Result<Self> {
        self.spec.ensure_same(grid.spec())?;
        check_mask(&self.spec, occupancy)?;
        check_mask(&self.spec, sensed_now)?;
        let conf = grid.confidences();
        let observed = Mask::from_fn(&self.spec, |c| conf[self.spec.index(c)] > 0.0);
        let explored = Mask::from_fn(&self.spec, |c| conf[self.spec.index(c)] >= cfg.tau_explored);
        let mut searched = self.searched.clone();
        for c in sensed_now.iter_set() {
            if explored.get(c) {
                searched.set(c, true);
            }
        }
        // Keeps C ⊆ E even if the caller swapped in a less confident grid.
        let searched = Mask::from_fn(&self.spec, |c| searched.get(c) && explored.get(c));
        Ok(Self {
            spec: self.spec,
            observed,
            explored,
            searched,
            navigable: inflate_free(&self.spec, occupancy, cfg.inflation_cells),
        })
    }

    /// Clears the searched map; called when a new query begins.
    pub fn reset_searched(&mut self) {
        self.searched.clear();
    }

    /// Observed but not semantically explored cells.
    pub fn unexplored(&self) -> Mask {
        self.observed.difference(&self.explored)
    }

    /// Explored but not yet searched under the current query.
    pub fn unsearched(&self) -> Mask {
        self.explored.difference(&self.searched)
    }

    pub fn invariants_hold(&self) -> bool {
        self.explored.is_subset(&self.observed) && self.searched.is_subset(&self.explored)
    }

    fn goal_reachable(&self, cell: Cell) -> bool {
        self.navigable.get(cell) || self.spec.neighbors8(cell).any(|n| self.navigable.get(n))
    }
}

fn check_mask(spec: &GridSpec, m: &Mask) -> Result<()> {
    if m.matches(spec) {
        Ok(())
    } else {
        Err(crate::error::Error::DimensionMismatch(format!(
            "mask {}x{} vs grid {}x{}",
            m.width(),
            m.height(),
            spec.width,
            spec.height
        )))
    }
}

/// A connected run of boundary cells between E and O∖E.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub cells: Vec<Cell>,
    pub representative: Cell,
    pub score: f64,
}

impl Frontier {
    pub fn to_goal(&self) -> NavGoal {
        NavGoal {
            kind: GoalKind::Frontier,
            cell: self.representative,
            score: self.score,
        }
    }
}

/// Goal kinds, in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalKind {
    Cluster,
    Frontier,
    Detection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavGoal {
    pub kind: GoalKind,
    pub cell: Cell,
    pub score: f64,
}

/// Cell of `cells` minimizing the summed distance to the others; ties go to
/// the first in row-major order.
fn medoid(cells: &[Cell]) -> Cell {
    let mut best = cells[0];
    let mut best_sum = f64::INFINITY;
    for &c in cells {
        let s: f64 = cells.iter().map(|&o| c.dist(o)).sum();
        if s < best_sum - 1e-12 || (s - best_sum).abs() <= 1e-12 && c.row_major() < best.row_major() {
            best = c;
            best_sum = s;
        }
    }
    best
}

/// Boundary cells are O∖E cells 8-adjacent to E and to a navigable cell;
/// they are grouped by 8-connectivity. Scores are left at 0; see
/// [`score_frontier`]. Output is sorted by representative, row-major.
pub fn detect_frontiers(state: &ExplorationState) -> Vec<Frontier> {
    let spec = &state.spec;
    let unexplored = state.unexplored();
    let boundary = Mask::from_fn(spec, |c| {
        unexplored.get(c)
            && spec.neighbors8(c).any(|n| state.explored.get(n))
            && (state.navigable.get(c) || spec.neighbors8(c).any(|n| state.navigable.get(n)))
    });
    let mut out: Vec<Frontier> = components8(spec, &boundary)
        .into_iter()
        .map(|cells| {
            let representative = medoid(&cells);
            Frontier {
                cells,
                representative,
                score: 0.0,
            }
        })
        .collect();
    out.sort_by_key(|f| f.representative.row_major());
    out
}

/// Maximum of `s_comb` over the O∖E cells reachable from the frontier
/// through O∖E (8-connected); 0 when there are none.
pub fn score_frontier(f: &Frontier, s_comb: &SimilarityMap, state: &ExplorationState) -> f64 {
    let spec = &state.spec;
    let region = state.unexplored();
    let mut seen = Mask::new(spec);
    let mut stack: Vec<Cell> = Vec::new();
    for &c in &f.cells {
        if region.get(c) && !seen.get(c) {
            seen.set(c, true);
            stack.push(c);
        }
    }
    let mut best = 0.0_f64;
    while let Some(c) = stack.pop() {
        best = best.max(s_comb.get(c));
        for n in spec.neighbors8(c) {
            if region.get(n) && !seen.get(n) {
                seen.set(n, true);
                stack.push(n);
            }
        }
    }
    best
}

/// Detects and scores every frontier.
pub fn scored_frontiers(state: &ExplorationState, s_comb: &SimilarityMap, exec: Exec) -> Vec<Frontier> {
    let mut frontiers = detect_frontiers(state);
    let scores = exec.map_slice(&frontiers, |f| score_frontier(f, s_comb, state));
    for (f, s) in frontiers.iter_mut().zip(scores) {
        f.score = s;
    }
    frontiers
}

/// High-S_comb clusters in E∖C: cells at or above the configured percentile
/// of S_comb over E∖C, grouped 8-connected, each reported at its argmax.
pub fn find_clusters(
    s_comb: &SimilarityMap,
    state: &ExplorationState,
    cfg: &ExplorationConfig,
) -> Vec<NavGoal> {
    let spec = &state.spec;
    let pool = state.unsearched();
    let values: Vec<f64> = pool.iter_set().map(|c| s_comb.get(c)).collect();
    let Some(threshold) = percentile(&values, cfg.cluster_percentile) else {
        return Vec::new();
    };
    let candidates = Mask::from_fn(spec, |c| pool.get(c) && s_comb.get(c) >= threshold);
    components8(spec, &candidates)
        .into_iter()
        .filter_map(|comp| {
            let mut best = comp[0];
            for &c in &comp[1..] {
                if s_comb.get(c) > s_comb.get(best) {
                    best = c;
                }
            }
            state.goal_reachable(best).then(|| NavGoal {
                kind: GoalKind::Cluster,
                cell: best,
                score: s_comb.get(best),
            })
        })
        .collect()
}

/// Highest-scoring candidate; ties prefer clusters, then row-major order.
pub fn select_goal(frontiers: &[NavGoal], clusters: &[NavGoal]) -> Option<NavGoal> {
    frontiers
        .iter()
        .chain(clusters)
        .copied()
        .min_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.kind.cmp(&b.kind))
                .then(a.cell.row_major().cmp(&b.cell.row_major()))
        })
}
