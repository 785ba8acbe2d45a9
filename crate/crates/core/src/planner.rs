//! A* on the 8-connected navigable grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec, Mask};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// A planned path; `cost` is in cells (straight step 1, diagonal √2).
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<Cell>,
    pub cost: f64,
}

impl Path {
    pub fn goal(&self) -> Cell {
        *self.cells.last().expect("paths are never empty")
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    f: f64,
    g: f64,
    idx: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Min-heap on f, then prefer deeper nodes, then lower index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

fn step_cost(dc: isize, dr: isize) -> f64 {
    if dc != 0 && dr != 0 {
        SQRT2
    } else {
        1.0
    }
}

/// Best-first search from `start` until `is_goal` accepts a popped cell.
/// `heuristic` must be admissible for the result to be optimal.
fn search(
    spec: &GridSpec,
    navigable: &Mask,
    start: Cell,
    is_goal: impl Fn(Cell) -> bool,
    heuristic: impl Fn(Cell) -> f64,
) -> Option<Path> {
    let n = spec.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let s = spec.index(start);
    g[s] = 0.0;
    heap.push(Node {
        f: heuristic(start),
        g: 0.0,
        idx: s,
    });
    while let Some(Node { g: gc, idx, .. }) = heap.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        let cell = spec.cell_at(idx);
        if is_goal(cell) {
            let mut cells = vec![cell];
            let mut cur = idx;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(spec.cell_at(cur));
            }
            cells.reverse();
            return Some(Path { cells, cost: gc });
        }
        for &(dc, dr) in &crate::grid::NEIGHBORS8 {
            let Some(next) = spec.offset(cell, dc, dr) else {
                continue;
            };
            let ni = spec.index(next);
            if closed[ni] || !navigable.get_idx(ni) {
                continue;
            }
            let ng = gc + step_cost(dc, dr);
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = idx;
                heap.push(Node {
                    f: ng + heuristic(next),
                    g: ng,
                    idx: ni,
                });
            }
        }
    }
    None
}

/// Nearest navigable cell to `goal` within `snap_radius` cells (ties in
/// row-major order), or `goal` itself when it is navigable.
pub fn snap_to_navigable(spec: &GridSpec, navigable: &Mask, goal: Cell, snap_radius: usize) -> Option<Cell> {
    if navigable.get(goal) {
        return Some(goal);
    }
    let r = snap_radius as isize;
    let mut best: Option<(f64, Cell)> = None;
    for dr in -r..=r {
        for dc in -r..=r {
            let Some(c) = spec.offset(goal, dc, dr) else {
                continue;
            };
            let d = ((dc * dc + dr * dr) as f64).sqrt();
            if d > snap_radius as f64 || !navigable.get(c) {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, bc)) => d < bd || (d == bd && c.row_major() < bc.row_major()),
            };
            if better {
                best = Some((d, c));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Shortest 8-connected path over `navigable` from `start` to `goal`, with a
/// Euclidean heuristic. A non-navigable goal is replaced by the nearest
/// navigable cell within `snap_radius`.
pub fn plan_path(
    spec: &GridSpec,
    navigable: &Mask,
    start: Cell,
    goal: Cell,
    snap_radius: usize,
) -> Result<Path> {
    spec.checked_index(start)?;
    spec.checked_index(goal)?;
    if start == goal {
        return Ok(Path {
            cells: vec![start],
            cost: 0.0,
        });
    }
    let target = snap_to_navigable(spec, navigable, goal, snap_radius)
        .ok_or(Error::NoPath { start, goal })?;
    search(spec, navigable, start, |c| c == target, |c| c.dist(target))
        .ok_or(Error::NoPath { start, goal })
}

/// Cheapest path from `start` to any cell accepted by `is_goal`.
pub fn plan_to_any(
    spec: &GridSpec,
    navigable: &Mask,
    start: Cell,
    is_goal: impl Fn(Cell) -> bool,
) -> Option<Path> {
    if !spec.contains(start) {
        return None;
    }
    if is_goal(start) {
        return Some(Path {
            cells: vec![start],
            cost: 0.0,
        });
    }
    let accept = |c: Cell| is_goal(c) && navigable.get(c);
    search(spec, navigable, start, accept, |_| 0.0)
}
