//! Grid geometry shared by every map layer: the discretization spec, cell
//! coordinates and binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A grid cell addressed as `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    /// Row-major ordering key.
    pub fn row_major(self) -> (usize, usize) {
        (self.row, self.col)
    }

    /// Euclidean distance in cells between cell centres.
    pub fn dist(self, other: Cell) -> f64 {
        let dc = self.col as f64 - other.col as f64;
        let dr = self.row as f64 - other.row as f64;
        (dc * dc + dr * dr).sqrt()
    }
}

impl From<(usize, usize)> for Cell {
    fn from((col, row): (usize, usize)) -> Self {
        Self { col, row }
    }
}

/// Offsets of the 8-neighbourhood, orthogonal moves first.
pub const NEIGHBORS8: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Discretization of the world plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Meters per cell.
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// World coordinates (meters) of the lower corner of cell (0, 0).
    #[serde(default)]
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(resolution: f64, width: usize, height: usize) -> Result<Self> {
        let spec = Self {
            resolution,
            width,
            height,
            origin: [0.0, 0.0],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec(format!(
                "grid must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        debug_assert!(self.contains(cell));
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        Cell::new(idx % self.width, idx / self.width)
    }

    pub fn checked_index(&self, cell: Cell) -> Result<usize> {
        if self.contains(cell) {
            Ok(self.index(cell))
        } else {
            Err(Error::OutOfBounds {
                col: cell.col,
                row: cell.row,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Cell containing the world point, or `None` outside the grid.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<Cell> {
        let fx = (x - self.origin[0]) / self.resolution;
        let fy = (y - self.origin[1]) / self.resolution;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let cell = Cell::new(fx.floor() as usize, fy.floor() as usize);
        self.contains(cell).then_some(cell)
    }

    /// World coordinates of a cell centre.
    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin[0] + (cell.col as f64 + 0.5) * self.resolution,
            self.origin[1] + (cell.row as f64 + 0.5) * self.resolution,
        )
    }

    /// In-bounds 8-neighbours of `cell`.
    pub fn neighbors8(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        NEIGHBORS8.iter().filter_map(move |&(dc, dr)| self.offset(cell, dc, dr))
    }

    pub fn offset(&self, cell: Cell, dc: isize, dr: isize) -> Option<Cell> {
        let c = cell.col as isize + dc;
        let r = cell.row as isize + dr;
        if c < 0 || r < 0 || c >= self.width as isize || r >= self.height as isize {
            None
        } else {
            Some(Cell::new(c as usize, r as usize))
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin == other.origin
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{}@{} vs {}x{}@{}",
                self.width,
                self.height,
                self.resolution,
                other.width,
                other.height,
                other.resolution
            )))
        }
    }
}

/// Binary layer over a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(spec: &GridSpec) -> Self {
        Self {
            width: spec.width,
            height: spec.height,
            bits: vec![false; spec.len()],
        }
    }

    pub fn filled(spec: &GridSpec, value: bool) -> Self {
        Self {
            width: spec.width,
            height: spec.height,
            bits: vec![value; spec.len()],
        }
    }

    pub fn from_fn(spec: &GridSpec, mut f: impl FnMut(Cell) -> bool) -> Self {
        let bits = (0..spec.len()).map(|i| f(spec.cell_at(i))).collect();
        Self {
            width: spec.width,
            height: spec.height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn matches(&self, spec: &GridSpec) -> bool {
        self.width == spec.width && self.height == spec.height
    }

    pub fn get(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height && self.bits[cell.row * self.width + cell.col]
    }

    pub fn set(&mut self, cell: Cell, value: bool) {
        let i = cell.row * self.width + cell.col;
        self.bits[i] = value;
    }

    pub fn get_idx(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set_idx(&mut self, idx: usize, value: bool) {
        self.bits[idx] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn clear(&mut self) {
        self.bits.iter_mut().for_each(|b| *b = false);
    }

    /// `self ⊆ other`.
    pub fn is_subset(&self, other: &Mask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// `self ∖ other`.
    pub fn difference(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect(),
        }
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn iter_set(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Cell::new(i % w, i / w))
    }
}

/// 8-connected components of the set cells of `mask`, each sorted row-major,
/// components ordered by their first cell in row-major order.
pub fn components8(spec: &GridSpec, mask: &Mask) -> Vec<Vec<Cell>> {
    let mut label = vec![usize::MAX; spec.len()];
    let mut out: Vec<Vec<Cell>> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..spec.len() {
        if !mask.get_idx(start) || label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = Vec::new();
        label[start] = id;
        stack.push(spec.cell_at(start));
        while let Some(c) = stack.pop() {
            comp.push(c);
            for n in spec.neighbors8(c) {
                let ni = spec.index(n);
                if mask.get_idx(ni) && label[ni] == usize::MAX {
                    label[ni] = id;
                    stack.push(n);
                }
            }
        }
        comp.sort_by_key(|c| c.row_major());
        out.push(comp);
    }
    out
}

/// Linear-interpolation percentile (`p` in `[0, 100]`) of `values`.
/// Returns `None` for an empty slice.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let p = p.clamp(0.0, 100.0);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}
