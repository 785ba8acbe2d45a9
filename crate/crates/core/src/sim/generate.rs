//! Seeded four-room worlds with related targets and same-label decoys.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{Episode, Mode, TargetSpec, TARGETS_PER_EPISODE};
use super::sensor::GridPose;
use super::world::{ObjectInstance, Room, WorldFile, WorldModel, WorldRelation};
use crate::embedding::Affinity;
use crate::error::Result;
use crate::grid::{Cell, GridSpec};
use crate::query_pipeline::RelationKind;

const ROOMS: [&str; 4] = ["kitchen", "bedroom", "bathroom", "living room"];
const SUPPORTS: [&str; 4] = ["table", "shelf", "counter", "desk"];
const TARGETS: [&str; 10] = ["mug", "book", "plant", "vase", "lamp", "bottle", "clock", "candle", "bowl", "phone"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    /// Same-label instances per target that violate its relation.
    pub decoys_per_target: usize,
    pub mode: Mode,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            decoys_per_target: 2,
            mode: Mode::Multion,
        }
    }
}

const SIZE: usize = 32;
const MID: usize = 16;

fn room_rects() -> [[usize; 4]; 4] {
    [
        [1, 1, MID - 1, MID - 1],
        [MID + 1, 1, SIZE - 2, MID - 1],
        [1, MID + 1, MID - 1, SIZE - 2],
        [MID + 1, MID + 1, SIZE - 2, SIZE - 2],
    ]
}

fn walls() -> Vec<[usize; 3]> {
    let mut runs = vec![[0, 0, SIZE], [SIZE - 1, 0, SIZE]];
    for row in 1..SIZE - 1 {
        if row == MID {
            // horizontal divider with doorways at cols 6..=8 and 22..=24
            runs.push([row, 0, 6]);
            runs.push([row, 9, 13]);
            runs.push([row, 25, SIZE - 25]);
        } else if (6..=8).contains(&row) || (22..=24).contains(&row) {
            runs.push([row, 0, 1]);
            runs.push([row, SIZE - 1, 1]);
        } else {
            runs.push([row, 0, 1]);
            runs.push([row, MID, 1]);
            runs.push([row, SIZE - 1, 1]);
        }
    }
    runs
}

struct Placer {
    rng: ChaCha8Rng,
    taken: Vec<Cell>,
}

impl Placer {
    /// Random unused cell in `rect` with a one-cell margin, at least
    /// `min_gap` cells (Chebyshev) from every placed object, accepted by `ok`.
    fn pick(&mut self, rect: [usize; 4], min_gap: usize, ok: impl Fn(Cell) -> bool) -> Option<Cell> {
        let [c0, r0, c1, r1] = rect;
        let mut cands: Vec<Cell> = (r0 + 1..r1)
            .flat_map(|r| (c0 + 1..c1).map(move |c| Cell::new(c, r)))
            .filter(|&c| {
                ok(c)
                    && self
                        .taken
                        .iter()
                        .all(|t| t.col.abs_diff(c.col).max(t.row.abs_diff(c.row)) >= min_gap)
            })
            .collect();
        cands.shuffle(&mut self.rng);
        let c = *cands.first()?;
        self.taken.push(c);
        Some(c)
    }
}

/// Builds a world and its three-target episode from `seed`.
///
/// Each target is related to a room (`in`) or to a support object (`on`),
/// and `decoys_per_target` more instances of its label are planted where
/// that relation fails.
pub fn generate(seed: u64, cfg: &GenConfig) -> Result<(WorldModel, Episode)> {
    for attempt in 0..64u64 {
        if let Some(out) = try_generate(seed, attempt, cfg)? {
            return Ok(out);
        }
    }
    Err(crate::Error::Invariant(format!("world generation failed for seed {seed}")))
}

fn try_generate(seed: u64, attempt: u64, cfg: &GenConfig) -> Result<Option<(WorldModel, Episode)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ attempt);
    let mut room_labels = ROOMS.to_vec();
    room_labels.shuffle(&mut rng);
    let rects = room_rects();
    let rooms: Vec<Room> = room_labels
        .iter()
        .zip(rects)
        .map(|(l, rect)| Room {
            label: l.to_string(),
            rect,
        })
        .collect();
    let mut supports = SUPPORTS.to_vec();
    supports.shuffle(&mut rng);
    let mut labels = TARGETS.to_vec();
    labels.shuffle(&mut rng);
    let mut p = Placer {
        rng: ChaCha8Rng::seed_from_u64(rng.random()),
        taken: Vec::new(),
    };

    let mut objects = Vec::new();
    let mut targets = Vec::new();
    let mut support_rooms: Vec<usize> = (0..4).collect();
    support_rooms.shuffle(&mut rng);
    for t in 0..TARGETS_PER_EPISODE {
        let label = labels[t];
        let id = format!("target{t}");
        let use_support = rng.random_bool(0.5);
        let (cell, relation, query, violates): (Cell, WorldRelation, String, Box<dyn Fn(Cell) -> bool>) =
            if use_support {
                let support = supports[t];
                let room = support_rooms[t];
                let Some(sc) = p.pick(rooms[room].rect, 4, |_| true) else {
                    return Ok(None);
                };
                let sid = format!("{support}{t}");
                objects.push(ObjectInstance {
                    id: sid.clone(),
                    label: support.to_string(),
                    cell: sc,
                    relations: Vec::new(),
                });
                let Some(tc) = p.pick(rooms[room].rect, 1, |c| {
                    c != sc && c.col.abs_diff(sc.col) <= 1 && c.row.abs_diff(sc.row) <= 1
                }) else {
                    return Ok(None);
                };
                (
                    tc,
                    WorldRelation {
                        kind: RelationKind::On,
                        target: sid,
                    },
                    format!("the {label} on the {support}"),
                    Box::new(move |c: Cell| c.col.abs_diff(sc.col).max(c.row.abs_diff(sc.row)) >= 4),
                )
            } else {
                let room = rng.random_range(0..rooms.len());
                let Some(tc) = p.pick(rooms[room].rect, 3, |_| true) else {
                    return Ok(None);
                };
                let rect = rooms[room].rect;
                let r = Room {
                    label: String::new(),
                    rect,
                };
                (
                    tc,
                    WorldRelation {
                        kind: RelationKind::In,
                        target: rooms[room].label.clone(),
                    },
                    format!("find the {label} in the {}", rooms[room].label),
                    Box::new(move |c: Cell| !r.contains(c)),
                )
            };
        let negated = WorldRelation {
            kind: RelationKind::NotIn,
            target: relation.target.clone(),
        };
        objects.push(ObjectInstance {
            id: id.clone(),
            label: label.to_string(),
            cell,
            relations: vec![relation],
        });
        let mut decoy_rooms: Vec<usize> = (0..rooms.len()).collect();
        decoy_rooms.shuffle(&mut rng);
        let mut placed = 0;
        for &room in decoy_rooms.iter().cycle().take(rooms.len() * 2) {
            if placed == cfg.decoys_per_target {
                break;
            }
            if let Some(dc) = p.pick(rooms[room].rect, 3, &violates) {
                objects.push(ObjectInstance {
                    id: format!("{id}_decoy{placed}"),
                    label: label.to_string(),
                    cell: dc,
                    relations: vec![negated.clone()],
                });
                placed += 1;
            }
        }
        if placed < cfg.decoys_per_target {
            return Ok(None);
        }
        targets.push(TargetSpec { query, goal_id: id });
    }

    let spec = GridSpec::new(0.25, SIZE, SIZE)?;
    let start_room = rng.random_range(0..rooms.len());
    let Some(start_cell) = p.pick(rooms[start_room].rect, 2, |_| true) else {
        return Ok(None);
    };
    let heading = 15.0 * rng.random_range(0..24) as f64;
    let world = WorldModel::from_file(WorldFile {
        spec,
        walls: Vec::new(),
        wall_runs: walls(),
        rooms,
        objects,
        affinity: Affinity::default(),
        near_bound_m: 0.75,
    })?;
    let world = Arc::new(world);
    let ep = Episode::new(
        format!("ep{seed:04}"),
        world.clone(),
        GridPose::at_cell(&spec, start_cell, heading),
        cfg.mode,
        targets,
    )?;
    Ok(Some((Arc::unwrap_or_clone(world), ep)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{components8, Mask};

    #[test]
    fn deterministic_and_valid() {
        for seed in 0..20 {
            let (w, ep) = generate(seed, &GenConfig::default()).unwrap();
            let (w2, ep2) = generate(seed, &GenConfig::default()).unwrap();
            assert_eq!(w, w2);
            assert_eq!(ep.targets, ep2.targets);
            assert_eq!(ep.targets.len(), 3);
            // 3 targets, 6 decoys, up to 3 supports
            let decoys = w.objects.iter().filter(|o| o.id.contains("decoy")).count();
            assert_eq!(decoys, 6);
            for t in &ep.targets {
                let goal = w.object(&t.goal_id).unwrap();
                let same = w.objects.iter().filter(|o| o.label == goal.label).count();
                assert_eq!(same, 3);
                assert!(t.query.contains(&goal.label));
            }
        }
    }

    #[test]
    fn free_space_is_connected() {
        let (w, _) = generate(3, &GenConfig::default()).unwrap();
        let free = Mask::from_fn(&w.spec, |c| !w.walls.get(c));
        assert_eq!(components8(&w.spec, &free).len(), 1);
    }

    #[test]
    fn seeds_differ() {
        let a = generate(1, &GenConfig::default()).unwrap().0;
        let b = generate(2, &GenConfig::default()).unwrap().0;
        assert_ne!(a, b);
    }
}
