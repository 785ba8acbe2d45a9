//! The ground-truth world: walls, rooms, planted objects and label affinity.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{canonical_label, Affinity};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec, Mask};
use crate::query_pipeline::RelationKind;

/// Axis-aligned room region, `[col0, row0, col1, row1]` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub label: String,
    pub rect: [usize; 4],
}

impl Room {
    pub fn contains(&self, c: Cell) -> bool {
        let [c0, r0, c1, r1] = self.rect;
        (c0..=c1).contains(&c.col) && (r0..=r1).contains(&c.row)
    }

    fn overlaps(&self, o: &Room) -> bool {
        let [a0, b0, a1, b1] = self.rect;
        let [c0, d0, c1, d1] = o.rect;
        a0 <= c1 && c0 <= a1 && b0 <= d1 && d0 <= b1
    }
}

/// `kind(self, target)`; the target is an object id or a room label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldRelation {
    pub kind: RelationKind,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub label: String,
    #[serde(with = "cell_pair")]
    pub cell: Cell,
    #[serde(default)]
    pub relations: Vec<WorldRelation>,
}

mod cell_pair {
    use super::Cell;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Cell, s: S) -> Result<S::Ok, S::Error> {
        [c.col, c.row].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Cell, D::Error> {
        let [col, row] = <[usize; 2]>::deserialize(d)?;
        Ok(Cell::new(col, row))
    }
}

fn default_near_bound() -> f64 {
    0.75
}

/// On-disk form. Walls may be listed cell by cell, as `[row, col, length]`
/// runs, or both.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub spec: GridSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub walls: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wall_runs: Vec<[usize; 3]>,
    #[serde(default)]
    pub rooms: Vec<Room>,
    #[serde(default)]
    pub objects: Vec<ObjectInstance>,
    #[serde(default)]
    pub affinity: Affinity,
    /// Distance bound (meters) for `near` / `next_to`.
    #[serde(default = "default_near_bound")]
    pub near_bound_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    pub spec: GridSpec,
    pub walls: Mask,
    pub rooms: Vec<Room>,
    pub objects: Vec<ObjectInstance>,
    pub affinity: Affinity,
    pub near_bound_m: f64,
    object_at: BTreeMap<Cell, Vec<usize>>,
}

impl WorldModel {
    pub fn from_file(f: WorldFile) -> Result<Self> {
        f.spec.validate()?;
        let mut walls = Mask::new(&f.spec);
        let bad = |m: String| Error::InvalidWorld(m);
        for &[col, row] in &f.walls {
            let c = Cell::new(col, row);
            if !f.spec.contains(c) {
                return Err(bad(format!("wall ({col}, {row}) out of bounds")));
            }
            walls.set(c, true);
        }
        for &[row, col, len] in &f.wall_runs {
            if row >= f.spec.height || col + len > f.spec.width {
                return Err(bad(format!("wall run [{row}, {col}, {len}] out of bounds")));
            }
            for c in col..col + len {
                walls.set(Cell::new(c, row), true);
            }
        }
        let mut w = WorldModel {
            spec: f.spec,
            walls,
            rooms: f
                .rooms
                .into_iter()
                .map(|r| Room {
                    label: canonical_label(&r.label),
                    rect: r.rect,
                })
                .collect(),
            objects: f
                .objects
                .into_iter()
                .map(|o| ObjectInstance {
                    label: canonical_label(&o.label),
                    ..o
                })
                .collect(),
            affinity: f.affinity,
            near_bound_m: f.near_bound_m,
            object_at: BTreeMap::new(),
        };
        for (i, o) in w.objects.iter().enumerate() {
            w.object_at.entry(o.cell).or_default().push(i);
        }
        w.validate()?;
        Ok(w)
    }

    pub fn to_file(&self) -> WorldFile {
        let mut wall_runs = Vec::new();
        for row in 0..self.spec.height {
            let mut col = 0;
            while col < self.spec.width {
                if self.walls.get(Cell::new(col, row)) {
                    let start = col;
                    while col < self.spec.width && self.walls.get(Cell::new(col, row)) {
                        col += 1;
                    }
                    wall_runs.push([row, start, col - start]);
                } else {
                    col += 1;
                }
            }
        }
        WorldFile {
            spec: self.spec,
            walls: Vec::new(),
            wall_runs,
            rooms: self.rooms.clone(),
            objects: self.objects.clone(),
            affinity: self.affinity.clone(),
            near_bound_m: self.near_bound_m,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: WorldFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidWorld(m));
        if !(self.near_bound_m > 0.0) {
            return bad("near_bound_m must be positive".into());
        }
        for (i, r) in self.rooms.iter().enumerate() {
            let [c0, r0, c1, r1] = r.rect;
            if c0 > c1 || r0 > r1 || c1 >= self.spec.width || r1 >= self.spec.height {
                return bad(format!("room {:?} has an invalid rect", r.label));
            }
            if r.label.is_empty() {
                return bad("room with empty label".into());
            }
            if let Some(o) = self.rooms[..i].iter().find(|o| o.overlaps(r)) {
                return bad(format!("rooms {:?} and {:?} overlap", o.label, r.label));
            }
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return bad(format!("duplicate object id {:?}", o.id));
            }
            if o.label.is_empty() {
                return bad(format!("object {:?} has an empty label", o.id));
            }
            if !self.spec.contains(o.cell) || self.walls.get(o.cell) {
                return bad(format!("object {:?} is not on a free cell", o.id));
            }
        }
        for o in &self.objects {
            for rel in &o.relations {
                if !self.relation_holds(o, rel)? {
                    return bad(format!(
                        "object {:?}: relation {:?} {:?} does not hold geometrically",
                        o.id, rel.kind, rel.target
                    ));
                }
            }
        }
        self.affinity.to_matrix()?;
        Ok(())
    }

    fn relation_holds(&self, o: &ObjectInstance, rel: &WorldRelation) -> Result<bool> {
        let room = self.rooms.iter().find(|r| r.label == canonical_label(&rel.target));
        let other = self.object(&rel.target);
        let dist = |t: &ObjectInstance| o.cell.dist(t.cell) * self.spec.resolution;
        let touch = self.spec.resolution * std::f64::consts::SQRT_2 + 1e-9;
        let missing = || Error::InvalidWorld(format!("object {:?}: unknown relation target {:?}", o.id, rel.target));
        Ok(match rel.kind {
            RelationKind::Unrelated => true,
            RelationKind::In => room.ok_or_else(missing)?.contains(o.cell),
            RelationKind::NotIn => match (room, other) {
                (Some(r), _) => !r.contains(o.cell),
                (None, Some(t)) => dist(t) > touch,
                (None, None) => return Err(missing()),
            },
            RelationKind::On | RelationKind::Under => dist(other.ok_or_else(missing)?) <= touch,
            RelationKind::Near | RelationKind::NextTo => {
                dist(other.ok_or_else(missing)?) <= self.near_bound_m + 1e-9
            }
            RelationKind::FarFrom => dist(other.ok_or_else(missing)?) > self.near_bound_m,
        })
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn objects_at(&self, c: Cell) -> impl Iterator<Item = &ObjectInstance> + '_ {
        self.object_at
            .get(&c)
            .into_iter()
            .flatten()
            .map(|&i| &self.objects[i])
    }

    pub fn room_at(&self, c: Cell) -> Option<&Room> {
        self.rooms.iter().find(|r| r.contains(c))
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.spec.contains(c) && !self.walls.get(c)
    }

    /// Room and object labels, with the declared affinity entries.
    pub fn vocabulary(&self) -> Affinity {
        let mut a = self.affinity.clone();
        for r in &self.rooms {
            a.declare(&r.label);
        }
        for o in &self.objects {
            a.declare(&o.label);
        }
        a
    }
}
