//! The search agent: maps observations, fuses per-target similarity, picks
//! exploration goals, and drives the search state machine.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief_map::{Embedding, FeatureGrid, SimilarityMap};
use crate::config::Config;
use crate::detection::{
    approach_target, consensus_filter, within, Detection, SearchEvent, SearchMachine, SearchPhase,
    ValidationVerdict,
};
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::exploration::{find_clusters, scored_frontiers, select_goal, ExplorationState, NavGoal};
use crate::fusion::combine_with;
use crate::grid::{Cell, GridSpec, Mask};
use crate::planner::plan_path;
use crate::query_pipeline::{Decomposer, QueryDecomposition};
use crate::sim::sensor::{AgentAction, GridPose, SensorFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// Full pipeline: fused query set and constraint validation.
    #[serde(rename = "divnav")]
    DivNav,
    /// Primary target only; success needs only the primary to be present.
    Baseline,
}

impl PipelineKind {
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::DivNav => "divnav",
            PipelineKind::Baseline => "baseline",
        }
    }
}

/// What the agent perceives after each action.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// Increments with every new sensor frame.
    pub frame_id: u64,
    pub pose: GridPose,
    pub frame: &'a SensorFrame,
    pub detections: &'a [Detection],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetBrief {
    pub index: usize,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Act(AgentAction),
    /// Ask the validator about the current viewpoint.
    Validate { query: String, primary: String },
    GiveUp,
}

pub trait Navigator {
    fn begin_target(&mut self, brief: &TargetBrief) -> Result<()>;
    fn act(&mut self, obs: &Observation) -> Result<Decision>;
    fn on_verdict(&mut self, verdict: ValidationVerdict) -> Result<()>;
    /// Short label of the current search phase, for logs.
    fn phase_label(&self) -> &'static str {
        ""
    }
}

pub struct DivNavAgent {
    cfg: Config,
    kind: PipelineKind,
    spec: GridSpec,
    embedder: Arc<dyn EmbeddingProvider>,
    decomposer: Arc<dyn Decomposer>,
    grid: FeatureGrid,
    known_free: Mask,
    state: ExplorationState,
    decomposition: Option<QueryDecomposition>,
    query: String,
    queries: Vec<Embedding>,
    machine: SearchMachine,
    goal: Option<NavGoal>,
    path: Vec<Cell>,
    goal_blacklist: BTreeSet<Cell>,
    steps_on_goal: usize,
    since_plan: usize,
    goal_patience: usize,
    collisions: usize,
    spin_left: usize,
    last_frame: Option<u64>,
    last_move: Option<(GridPose, AgentAction)>,
    cached: Option<(u64, SimilarityMap)>,
    exec: Exec,
}

impl DivNavAgent {
    pub fn new(
        cfg: Config,
        kind: PipelineKind,
        spec: GridSpec,
        embedder: Arc<dyn EmbeddingProvider>,
        decomposer: Arc<dyn Decomposer>,
    ) -> Result<Self> {
        cfg.validate()?;
        let grid = FeatureGrid::new(spec, embedder.dim())?;
        let known_free = Mask::new(&spec);
        let blocked = Mask::filled(&spec, true);
        let state = ExplorationState::fresh(spec, &blocked, &cfg.exploration)?;
        let spin_left = if cfg.agent.initial_spin {
            (360.0 / cfg.agent.turn_step_deg).round() as usize
        } else {
            0
        };
        Ok(Self {
            kind,
            spec,
            embedder,
            decomposer,
            grid,
            known_free,
            state,
            decomposition: None,
            query: String::new(),
            queries: Vec::new(),
            machine: SearchMachine::new(kind == PipelineKind::DivNav),
            goal: None,
            path: Vec::new(),
            goal_blacklist: BTreeSet::new(),
            steps_on_goal: 0,
            since_plan: 0,
            goal_patience: 0,
            collisions: 0,
            spin_left,
            last_frame: None,
            last_move: None,
            cached: None,
            exec: Exec::Auto,
            cfg,
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn state(&self) -> &ExplorationState {
        &self.state
    }

    pub fn grid(&self) -> &FeatureGrid {
        &self.grid
    }

    pub fn decomposition(&self) -> Option<&QueryDecomposition> {
        self.decomposition.as_ref()
    }

    pub fn phase(&self) -> &SearchPhase {
        self.machine.phase()
    }

    pub fn goal(&self) -> Option<NavGoal> {
        self.goal
    }

    /// Labels whose similarity maps are fused for the current target.
    pub fn query_labels(&self) -> Vec<String> {
        match (&self.decomposition, self.kind) {
            (None, _) => Vec::new(),
            (Some(d), PipelineKind::Baseline) => vec![d.primary.clone()],
            (Some(d), PipelineKind::DivNav) => d.proximity_set.clone(),
        }
    }

    /// Per-target maps S_i, restricted to observed cells.
    pub fn similarity_maps(&self) -> Result<Vec<SimilarityMap>> {
        let blurred = self.grid.blur_features(self.cfg.embedding.blur_radius);
        self.queries
            .iter()
            .map(|q| Ok(blurred.query_with(q, self.exec)?.masked(&self.state.observed)))
            .collect()
    }

    /// S_comb for the current target.
    pub fn guidance(&self) -> Result<SimilarityMap> {
        let maps = self.similarity_maps()?;
        if maps.is_empty() {
            return SimilarityMap::filled(self.spec, 0.0);
        }
        combine_with(&maps, self.cfg.fusion, self.exec)
    }

    fn guidance_cached(&mut self) -> Result<SimilarityMap> {
        let frame = self.last_frame.unwrap_or(u64::MAX);
        if let Some((f, m)) = &self.cached {
            if *f == frame {
                return Ok(m.clone());
            }
        }
        let m = self.guidance()?;
        self.cached = Some((frame, m.clone()));
        Ok(m)
    }

    fn integrate(&mut self, obs: &Observation) -> Result<()> {
        self.grid.integrate(&obs.frame.hits, self.embedder.as_ref())?;
        for c in obs.frame.visible.keys() {
            self.known_free.set(*c, true);
        }
        let blocked = Mask::from_fn(&self.spec, |c| !self.known_free.get(c));
        let sensed = obs.frame.visible_mask(&self.spec);
        self.state = self.state.update(&self.grid, &blocked, &sensed, &self.cfg.exploration)?;
        self.cached = None;
        Ok(())
    }

    fn robot_cell(&self, pose: GridPose) -> Result<Cell> {
        pose.cell(&self.spec)
            .ok_or_else(|| Error::Invariant(format!("agent pose {pose:?} is off the grid")))
    }

    fn clear_path(&mut self) {
        self.goal = None;
        self.path.clear();
        self.steps_on_goal = 0;
        self.collisions = 0;
    }

    fn set_path(&mut self, cells: Vec<Cell>, cost: f64) {
        self.path = cells;
        self.steps_on_goal = 0;
        self.since_plan = 0;
        self.collisions = 0;
        // turning on the spot can take 12 actions per bend
        self.goal_patience = (4.0 * cost).ceil() as usize + 40;
    }

    /// Next primitive along the current path, or `None` once the last cell
    /// is reached.
    fn follow(&mut self, pose: GridPose, cell: Cell) -> Option<AgentAction> {
        if let Some(k) = self.path.iter().rposition(|&c| c == cell) {
            self.path.drain(..=k);
        }
        let last = *self.path.last()?;
        let look = self.cfg.agent.lookahead_m;
        let target = self
            .path
            .iter()
            .copied()
            .find(|&c| {
                let (x, y) = self.spec.cell_center(c);
                (x - pose.x).hypot(y - pose.y) >= look
            })
            .unwrap_or(last);
        let (tx, ty) = self.spec.cell_center(target);
        let desired = (ty - pose.y).atan2(tx - pose.x).to_degrees();
        let diff = (desired - pose.heading + 540.0).rem_euclid(360.0) - 180.0;
        let half = self.cfg.agent.turn_step_deg / 2.0;
        Some(if diff > half {
            AgentAction::TurnLeft
        } else if diff < -half {
            AgentAction::TurnRight
        } else {
            AgentAction::Forward
        })
    }

    fn stuck(&self) -> bool {
        self.collisions >= self.cfg.agent.max_collisions || self.steps_on_goal > self.goal_patience
    }

    fn try_detections(&mut self, obs: &Observation, cell: Cell) -> Result<()> {
        let Some(primary) = self.decomposition.as_ref().map(|d| d.primary.clone()) else {
            return Ok(());
        };
        let dets: Vec<Detection> = obs
            .detections
            .iter()
            .filter(|d| d.label == primary && !self.machine.is_blacklisted(d.cell))
            .cloned()
            .collect();
        if dets.is_empty() {
            return Ok(());
        }
        let s = self.guidance_cached()?;
        let kept = consensus_filter(&dets, &s, &self.state.observed, self.cfg.detection_percentile);
        let Some(best) = kept.into_iter().next() else {
            return Ok(());
        };
        self.machine.step(SearchEvent::Detected(best.clone()))?;
        self.plan_approach(&best, cell)
    }

    fn plan_approach(&mut self, det: &Detection, cell: Cell) -> Result<()> {
        match approach_target(&self.spec, &self.known_free, cell, det, self.cfg.success_radius_m) {
            Ok(p) => {
                self.goal = None;
                self.set_path(p.cells, p.cost);
            }
            Err(Error::NoPath { .. }) => {
                self.clear_path();
                self.machine.step(SearchEvent::NoPath)?;
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn needs_goal(&self, cell: Cell) -> bool {
        match self.goal {
            None => true,
            Some(g) => {
                g.cell == cell
                    || self.path.is_empty()
                    || self.since_plan >= self.cfg.agent.replan_interval
            }
        }
    }

    /// Picks the best reachable goal; `false` when nothing is left.
    fn choose_goal(&mut self, cell: Cell) -> Result<bool> {
        let s = self.guidance_cached()?;
        let frontiers: Vec<NavGoal> = scored_frontiers(&self.state, &s, self.exec)
            .iter()
            .map(|f| f.to_goal())
            .collect();
        let clusters = find_clusters(&s, &self.state, &self.cfg.exploration);
        let keep = |g: &NavGoal| g.cell != cell && !self.goal_blacklist.contains(&g.cell);
        let mut frontiers: Vec<NavGoal> = frontiers.into_iter().filter(keep).collect();
        let mut clusters: Vec<NavGoal> = clusters.into_iter().filter(keep).collect();
        while let Some(g) = select_goal(&frontiers, &clusters) {
            match plan_path(&self.spec, &self.known_free, cell, g.cell, self.cfg.exploration.snap_radius_cells) {
                Ok(p) => {
                    if self.goal.map(|old| old.cell) == Some(g.cell) {
                        // same goal: keep the original deadline
                        self.path = p.cells;
                        self.since_plan = 0;
                    } else {
                        self.goal = Some(g);
                        self.set_path(p.cells, p.cost);
                    }
                    return Ok(true);
                }
                Err(Error::NoPath { .. }) => {
                    self.goal_blacklist.insert(g.cell);
                    frontiers.retain(|x| x.cell != g.cell);
                    clusters.retain(|x| x.cell != g.cell);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(false)
    }

    fn explore(&mut self, pose: GridPose, cell: Cell) -> Result<Decision> {
        if self.goal.is_some() && self.stuck() {
            if let Some(g) = self.goal {
                self.goal_blacklist.insert(g.cell);
            }
            self.clear_path();
        }
        for _ in 0..2 {
            if self.needs_goal(cell) && !self.choose_goal(cell)? {
                self.machine.step(SearchEvent::NoGoals)?;
                return Ok(Decision::GiveUp);
            }
            if let Some(a) = self.follow(pose, cell) {
                return Ok(Decision::Act(a));
            }
            // reached the end of the path: pick again
            self.clear_path();
        }
        Err(Error::Invariant("goal selection produced no action".into()))
    }

    fn approach(&mut self, pose: GridPose, cell: Cell, det: Detection) -> Result<Decision> {
        if within(&self.spec, cell, det.cell, self.cfg.success_radius_m) {
            self.clear_path();
            self.machine.step(SearchEvent::Arrived)?;
            let primary = self.decomposition.as_ref().map(|d| d.primary.clone()).unwrap_or_default();
            return Ok(Decision::Validate {
                query: self.query.clone(),
                primary,
            });
        }
        if self.path.is_empty() || self.stuck() {
            self.plan_approach(&det, cell)?;
            if !matches!(self.machine.phase(), SearchPhase::Approaching(_)) {
                return self.explore(pose, cell);
            }
        }
        match self.follow(pose, cell) {
            Some(a) => Ok(Decision::Act(a)),
            None => {
                // path ended short of the radius; treat as unreachable
                self.clear_path();
                self.machine.step(SearchEvent::NoPath)?;
                self.explore(pose, cell)
            }
        }
    }
}

impl Navigator for DivNavAgent {
    fn begin_target(&mut self, brief: &TargetBrief) -> Result<()> {
        let d = self.decomposer.decompose(&brief.query);
        let labels = match self.kind {
            PipelineKind::Baseline => vec![d.primary.clone()],
            PipelineKind::DivNav => d.proximity_set.clone(),
        };
        self.queries = labels
            .iter()
            .map(|l| self.embedder.embed(l))
            .collect::<Result<_>>()?;
        self.decomposition = Some(d);
        self.query = brief.query.clone();
        self.machine = SearchMachine::new(self.kind == PipelineKind::DivNav);
        self.state.reset_searched();
        self.goal_blacklist.clear();
        self.clear_path();
        self.cached = None;
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Decision> {
        if self.last_frame != Some(obs.frame_id) {
            self.integrate(obs)?;
            self.last_frame = Some(obs.frame_id);
            if let Some((prev, AgentAction::Forward)) = self.last_move {
                if prev == obs.pose {
                    self.collisions += 1;
                } else {
                    self.collisions = 0;
                }
            }
        }
        let decision = self.decide(obs)?;
        if let Decision::Act(a) = decision {
            self.last_move = Some((obs.pose, a));
            self.steps_on_goal += 1;
            self.since_plan += 1;
        }
        Ok(decision)
    }

    fn on_verdict(&mut self, verdict: ValidationVerdict) -> Result<()> {
        self.machine.step(SearchEvent::Verdict(verdict))?;
        Ok(())
    }

    fn phase_label(&self) -> &'static str {
        match self.machine.phase() {
            SearchPhase::Exploring => "exploring",
            SearchPhase::Approaching(_) => "approaching",
            SearchPhase::Validating(_) => "validating",
            SearchPhase::Succeeded => "succeeded",
            SearchPhase::TerminatedNotFound => "terminated_not_found",
        }
    }
}

impl DivNavAgent {
    fn decide(&mut self, obs: &Observation) -> Result<Decision> {
        match self.machine.phase() {
            SearchPhase::Succeeded => return Ok(Decision::Act(AgentAction::Found)),
            SearchPhase::TerminatedNotFound => return Ok(Decision::GiveUp),
            SearchPhase::Validating(_) => {
                return Err(Error::Invariant("act called while awaiting a verdict".into()))
            }
            _ => {}
        }
        if self.decomposition.is_none() {
            return Err(Error::Invariant("act called before begin_target".into()));
        }
        if self.spin_left > 0 {
            self.spin_left -= 1;
            return Ok(Decision::Act(AgentAction::TurnLeft));
        }
        let cell = self.robot_cell(obs.pose)?;
        if matches!(self.machine.phase(), SearchPhase::Exploring) {
            self.try_detections(obs, cell)?;
        }
        match self.machine.phase().clone() {
            SearchPhase::Approaching(det) => self.approach(obs.pose, cell, det),
            _ => self.explore(obs.pose, cell),
        }
    }
}
