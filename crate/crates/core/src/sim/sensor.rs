//! Agent kinematics and the ray-cast range/semantic sensor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::world::WorldModel;
use crate::belief_map::SemanticHit;
use crate::config::{AgentConfig, SensorConfig};
use crate::grid::{Cell, GridSpec, Mask};

/// Continuous position in meters, heading in degrees counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl GridPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: heading.rem_euclid(360.0),
        }
    }

    pub fn at_cell(spec: &GridSpec, c: Cell, heading: f64) -> Self {
        let (x, y) = spec.cell_center(c);
        Self::new(x, y, heading)
    }

    pub fn cell(&self, spec: &GridSpec) -> Option<Cell> {
        spec.world_to_cell(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    Forward,
    TurnLeft,
    TurnRight,
    Found,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOutcome {
    pub pose: GridPose,
    pub collided: bool,
    pub moved_m: f64,
}

/// Advances the agent by one primitive. A forward step whose end point is a
/// wall or off the grid leaves the pose unchanged and flags a collision.
/// `Found` does not move the agent.
pub fn apply_action(world: &WorldModel, pose: GridPose, a: AgentAction, cfg: &AgentConfig) -> ActionOutcome {
    let stay = |collided| ActionOutcome {
        pose,
        collided,
        moved_m: 0.0,
    };
    match a {
        AgentAction::TurnLeft => stay(false).with_pose(GridPose::new(pose.x, pose.y, pose.heading + cfg.turn_step_deg)),
        AgentAction::TurnRight => stay(false).with_pose(GridPose::new(pose.x, pose.y, pose.heading - cfg.turn_step_deg)),
        AgentAction::Found => stay(false),
        AgentAction::Forward => {
            let h = pose.heading.to_radians();
            let nx = pose.x + cfg.forward_step_m * h.cos();
            let ny = pose.y + cfg.forward_step_m * h.sin();
            match world.spec.world_to_cell(nx, ny) {
                Some(c) if !world.walls.get(c) => ActionOutcome {
                    pose: GridPose { x: nx, y: ny, heading: pose.heading },
                    collided: false,
                    moved_m: cfg.forward_step_m,
                },
                _ => stay(true),
            }
        }
    }
}

impl ActionOutcome {
    fn with_pose(mut self, pose: GridPose) -> Self {
        self.pose = pose;
        self
    }
}

/// One sensor reading.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    /// Free cells swept by any ray, with the shortest ray distance (meters).
    pub visible: BTreeMap<Cell, f64>,
    /// Wall cells that stopped a ray.
    pub walls: Vec<Cell>,
    /// Per-ray depth, starting from the rightmost ray.
    pub depths: Vec<f64>,
    pub hits: Vec<SemanticHit>,
}

impl SensorFrame {
    pub fn visible_mask(&self, spec: &GridSpec) -> Mask {
        let mut m = Mask::new(spec);
        for c in self.visible.keys() {
            m.set(*c, true);
        }
        m
    }
}

/// Walks the grid along one ray (Amanatides-Woo traversal), calling `visit`
/// with each free cell and its entry distance. Returns the depth: the
/// distance to the first wall or grid edge, capped at `range`.
pub fn cast_ray(
    spec: &GridSpec,
    walls: &Mask,
    x: f64,
    y: f64,
    theta: f64,
    range: f64,
    mut visit: impl FnMut(Cell, f64),
    mut blocked: impl FnMut(Cell),
) -> f64 {
    let res = spec.resolution;
    let gx = (x - spec.origin[0]) / res;
    let gy = (y - spec.origin[1]) / res;
    let (dx, dy) = (theta.cos(), theta.sin());
    let mut c = gx.floor() as isize;
    let mut r = gy.floor() as isize;
    let inside = |c: isize, r: isize| c >= 0 && r >= 0 && (c as usize) < spec.width && (r as usize) < spec.height;
    if !inside(c, r) {
        return 0.0;
    }
    let axis = |g: f64, cell: isize, d: f64| -> (isize, f64, f64) {
        if d > 1e-12 {
            (1, (cell as f64 + 1.0 - g) / d, 1.0 / d)
        } else if d < -1e-12 {
            (-1, (g - cell as f64) / -d, -1.0 / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, ddx) = axis(gx, c, dx);
    let (sy, mut ty, ddy) = axis(gy, r, dy);
    visit(Cell::new(c as usize, r as usize), 0.0);
    loop {
        let t = if tx < ty {
            c += sx;
            let t = tx;
            tx += ddx;
            t
        } else {
            r += sy;
            let t = ty;
            ty += ddy;
            t
        };
        let d = t * res;
        if d > range {
            return range;
        }
        if !inside(c, r) {
            return d;
        }
        let cell = Cell::new(c as usize, r as usize);
        if walls.get(cell) {
            blocked(cell);
            return d;
        }
        visit(cell, d);
    }
}

/// Casts the fan of rays and converts swept cells into semantic hits.
///
/// Each visible free cell yields a hit for its room label, or a
/// confidence-only footprint hit outside rooms, plus one hit per object on
/// it. Strength falls linearly from 1 at the agent to `strength_floor` at
/// maximum range.
pub fn sense(world: &WorldModel, pose: GridPose, cfg: &SensorConfig) -> SensorFrame {
    let spec = &world.spec;
    let n = (cfg.fov_deg / cfg.ray_spacing_deg).round() as usize + 1;
    let span = cfg.ray_spacing_deg * (n - 1) as f64;
    let mut visible: BTreeMap<Cell, f64> = BTreeMap::new();
    let mut walls = std::collections::BTreeSet::new();
    let mut depths = Vec::with_capacity(n);
    for k in 0..n {
        let angle = pose.heading - span / 2.0 + k as f64 * cfg.ray_spacing_deg;
        let depth = cast_ray(
            spec,
            &world.walls,
            pose.x,
            pose.y,
            angle.to_radians(),
            cfg.range_m,
            |c, d| {
                let e = visible.entry(c).or_insert(d);
                if d < *e {
                    *e = d;
                }
            },
            |c| {
                walls.insert(c);
            },
        );
        depths.push(depth);
    }
    let mut hits = Vec::with_capacity(visible.len() * 2);
    let mut cells: Vec<(&Cell, &f64)> = visible.iter().collect();
    cells.sort_by_key(|(c, _)| c.row_major());
    for (&c, &d) in cells {
        let s = (1.0 - (1.0 - cfg.strength_floor) * (d / cfg.range_m)).clamp(cfg.strength_floor, 1.0);
        match world.room_at(c) {
            Some(room) => hits.push(SemanticHit::new(room.label.clone(), c, s)),
            None => hits.push(SemanticHit::footprint(c, s)),
        }
        for o in world.objects_at(c) {
            hits.push(SemanticHit::new(o.label.clone(), c, s));
        }
    }
    SensorFrame {
        visible,
        walls: walls.into_iter().collect(),
        depths,
        hits,
    }
}
