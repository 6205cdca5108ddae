//! Grid-wise scene representation.
//!
//! A scene is a binary tensor of `rows x cols x categories` cells laid out
//! row-major with the category channel fastest:
//! `index = (row * cols + col) * categories + category`.
//! Cells are frame-relative: column `c` covers pixels
//! `[c * W / cols, (c + 1) * W / cols)` of a `W`-pixel wide frame.

mod category;
pub mod io;

use serde::{Deserialize, Serialize};

pub use category::ObjectCategory;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub categories: usize,
    pub frame_width_px: u32,
    pub frame_height_px: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 8,
            cols: 8,
            categories: ObjectCategory::COUNT,
            frame_width_px: 1920,
            frame_height_px: 1080,
        }
    }
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, frame_width_px: u32, frame_height_px: u32) -> Result<Self> {
        let spec = GridSpec {
            rows,
            cols,
            categories: ObjectCategory::COUNT,
            frame_width_px,
            frame_height_px,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config(format!(
                "grid must have at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.categories != ObjectCategory::COUNT {
            return Err(Error::config(format!(
                "grid must have {} category channels, got {}",
                ObjectCategory::COUNT,
                self.categories
            )));
        }
        if self.frame_width_px == 0 || self.frame_height_px == 0 {
            return Err(Error::config("frame dimensions must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols * self.categories
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether two specs produce interchangeable grid vectors.
    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.categories == other.categories
    }

    pub fn cell(&self, row: usize, col: usize, category: ObjectCategory) -> Result<GridCell> {
        let cell = GridCell { row, col, category };
        self.check(&cell)?;
        Ok(cell)
    }

    fn check(&self, cell: &GridCell) -> Result<()> {
        if cell.row >= self.rows || cell.col >= self.cols || cell.category.index() >= self.categories {
            return Err(Error::Bounds {
                row: cell.row,
                col: cell.col,
                category: cell.category.index(),
                rows: self.rows,
                cols: self.cols,
                categories: self.categories,
            });
        }
        Ok(())
    }

    /// Row-major index of a cell, category channel fastest.
    pub fn linear_index(&self, cell: &GridCell) -> Result<usize> {
        self.check(cell)?;
        Ok((cell.row * self.cols + cell.col) * self.categories + cell.category.index())
    }

    /// Inverse of [`GridSpec::linear_index`].
    pub fn cell_at(&self, index: usize) -> Result<GridCell> {
        if index >= self.len() {
            return Err(Error::shape(format!(
                "index {index} outside grid of length {}",
                self.len()
            )));
        }
        let category =
            ObjectCategory::from_index(index % self.categories).expect("categories fixed at ObjectCategory::COUNT");
        let spatial = index / self.categories;
        Ok(GridCell {
            row: spatial / self.cols,
            col: spatial % self.cols,
            category,
        })
    }

    fn ensure_same_shape(&self, other: &GridSpec) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "grid {}x{}x{} vs {}x{}x{}",
                self.rows, self.cols, self.categories, other.rows, other.cols, other.categories
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub category: ObjectCategory,
}

/// Pixel-space box, `x_min < x_max` and `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    fn clamp_to(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let b = BoundingBox {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        };
        // A box that clamps to zero area never overlapped the frame.
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

/// Binary occupancy tensor flattened in linear-index order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridVector {
    spec: GridSpec,
    bits: Vec<u8>,
}

impl GridVector {
    pub fn zeros(spec: GridSpec) -> Self {
        GridVector {
            bits: vec![0; spec.len()],
            spec,
        }
    }

    /// Builds a grid from 0/1 values; anything else is rejected.
    pub fn from_bits(spec: GridSpec, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != spec.len() {
            return Err(Error::shape(format!(
                "expected {} bits, got {}",
                spec.len(),
                bits.len()
            )));
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::shape(format!("bit {pos} is {} (not 0/1)", bits[pos])));
        }
        Ok(GridVector { spec, bits })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, cell: &GridCell) -> Result<bool> {
        Ok(self.bits[self.spec.linear_index(cell)?] == 1)
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Occupied cells in linear-index order.
    pub fn occupied(&self) -> Vec<GridCell> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| self.spec.cell_at(i).expect("index within spec"))
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    /// Copy of `self` with `cell` occupied.
    pub fn set_cell(&self, cell: &GridCell) -> Result<GridVector> {
        let mut out = self.clone();
        out.set_in_place(cell)?;
        Ok(out)
    }

    pub fn set_in_place(&mut self, cell: &GridCell) -> Result<()> {
        let idx = self.spec.linear_index(cell)?;
        self.bits[idx] = 1;
        Ok(())
    }

    pub fn clear_in_place(&mut self, cell: &GridCell) -> Result<()> {
        let idx = self.spec.linear_index(cell)?;
        self.bits[idx] = 0;
        Ok(())
    }

    /// Bit string in linear-index order, e.g. `"0010..."`.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(spec: GridSpec, s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::shape(format!("invalid bit character `{other}`"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        GridVector::from_bits(spec, bits)
    }
}

/// Result of rasterizing one frame's annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rasterized {
    pub grid: GridVector,
    /// Annotations whose box lies entirely outside the frame.
    pub skipped: usize,
}

/// Marks the cell containing each box center in the box's category channel.
///
/// Boxes are clamped to the frame first; boxes with no overlap are counted in
/// [`Rasterized::skipped`].
pub fn rasterize(annotations: &[(BoundingBox, ObjectCategory)], spec: &GridSpec) -> Result<Rasterized> {
    spec.validate()?;
    let width = f64::from(spec.frame_width_px);
    let height = f64::from(spec.frame_height_px);
    let mut grid = GridVector::zeros(*spec);
    let mut skipped = 0;
    for (bbox, category) in annotations {
        let Some(clamped) = bbox.clamp_to(width, height) else {
            skipped += 1;
            continue;
        };
        let (cx, cy) = clamped.center();
        let col = ((cx * spec.cols as f64 / width).floor() as usize).min(spec.cols - 1);
        let row = ((cy * spec.rows as f64 / height).floor() as usize).min(spec.rows - 1);
        grid.set_in_place(&GridCell {
            row,
            col,
            category: *category,
        })?;
    }
    if skipped > 0 {
        log::warn!("{skipped} annotation(s) outside the frame were skipped");
    }
    Ok(Rasterized { grid, skipped })
}

/// Cells where `a` and `b` differ, in linear-index order.
pub fn diff_cells(a: &GridVector, b: &GridVector) -> Result<Vec<GridCell>> {
    a.spec.ensure_same_shape(&b.spec)?;
    a.bits
        .iter()
        .zip(&b.bits)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| a.spec.cell_at(i))
        .collect()
}

pub(crate) fn ensure_same_shape(a: &GridVector, b: &GridVector) -> Result<()> {
    a.spec.ensure_same_shape(&b.spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec4() -> GridSpec {
        GridSpec::new(4, 4, 1920, 1080).unwrap()
    }

    #[test]
    fn linear_index_examples() {
        let s = spec4();
        let idx = |r, c, cat| {
            s.linear_index(&GridCell {
                row: r,
                col: c,
                category: cat,
            })
            .unwrap()
        };
        assert_eq!(idx(0, 0, ObjectCategory::Person), 0);
        assert_eq!(idx(0, 1, ObjectCategory::Person), 8);
        assert_eq!(idx(3, 3, ObjectCategory::Trailer), 127);
    }

    #[test]
    fn linear_index_out_of_bounds() {
        let s = spec4();
        let err = s
            .linear_index(&GridCell {
                row: 4,
                col: 0,
                category: ObjectCategory::Car,
            })
            .unwrap_err();
        assert!(matches!(err, Error::Bounds { row: 4, .. }));
        assert!(s.cell_at(128).is_err());
    }

    #[test]
    fn empty_spec_rejected() {
        assert!(matches!(GridSpec::new(0, 4, 10, 10), Err(Error::Config(_))));
        let bad = GridSpec {
            cols: 0,
            ..GridSpec::default()
        };
        assert!(rasterize(&[], &bad).is_err());
    }

    #[test]
    fn rasterize_empty() {
        let r = rasterize(&[], &spec4()).unwrap();
        assert_eq!(r.grid.popcount(), 0);
        assert_eq!(r.grid.len(), 128);
    }

    #[test]
    fn rasterize_center_box() {
        let s = spec4();
        let b = BoundingBox::new(900.0, 500.0, 1020.0, 580.0);
        let r = rasterize(&[(b, ObjectCategory::Car)], &s).unwrap();
        assert_eq!(r.grid.occupied(), vec![s.cell(2, 2, ObjectCategory::Car).unwrap()]);
    }

    #[test]
    fn rasterize_duplicates_collapse() {
        let b = BoundingBox::new(10.0, 10.0, 50.0, 50.0);
        let c = BoundingBox::new(20.0, 5.0, 40.0, 60.0);
        let r = rasterize(&[(b, ObjectCategory::Bike), (c, ObjectCategory::Bike)], &spec4()).unwrap();
        assert_eq!(r.grid.popcount(), 1);
    }

    #[test]
    fn rasterize_clamps_and_skips() {
        let s = spec4();
        // Partly outside: clamped to [1800, 1920] -> center 1860 -> col 3.
        let partial = BoundingBox::new(1800.0, 0.0, 2400.0, 100.0);
        let outside = BoundingBox::new(2000.0, 0.0, 2100.0, 100.0);
        let r = rasterize(&[(partial, ObjectCategory::Van), (outside, ObjectCategory::Van)], &s).unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.grid.occupied(), vec![s.cell(0, 3, ObjectCategory::Van).unwrap()]);
    }

    #[test]
    fn set_cell_examples() {
        let s = spec4();
        let zero = GridVector::zeros(s);
        let cell = s.cell(1, 2, ObjectCategory::Truck).unwrap();
        let one = zero.set_cell(&cell).unwrap();
        assert_eq!(one.popcount(), 1);
        assert_eq!(one.set_cell(&cell).unwrap(), one);
        assert_eq!(diff_cells(&zero, &one).unwrap(), vec![cell]);
        let oob = GridCell {
            row: 0,
            col: 9,
            category: ObjectCategory::Car,
        };
        assert!(zero.set_cell(&oob).is_err());
    }

    #[test]
    fn diff_shape_mismatch() {
        let a = GridVector::zeros(spec4());
        let b = GridVector::zeros(GridSpec::default());
        assert!(matches!(diff_cells(&a, &b), Err(Error::Shape(_))));
        assert!(diff_cells(&a, &a).unwrap().is_empty());
    }

    #[test]
    fn from_bits_rejects_non_binary() {
        assert!(GridVector::from_bits(spec4(), vec![2; 128]).is_err());
        assert!(GridVector::from_bits(spec4(), vec![0; 127]).is_err());
    }

    fn arb_spec() -> impl Strategy<Value = GridSpec> {
        (1usize..7, 1usize..7).prop_map(|(r, c)| GridSpec::new(r, c, 640, 480).unwrap())
    }

    fn arb_grid_pair() -> impl Strategy<Value = (GridVector, GridVector)> {
        arb_spec().prop_flat_map(|s| {
            let n = s.len();
            (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
            )
                .prop_map(move |(a, b)| {
                    (
                        GridVector::from_bits(s, a).unwrap(),
                        GridVector::from_bits(s, b).unwrap(),
                    )
                })
        })
    }

    fn arb_box() -> impl Strategy<Value = (BoundingBox, ObjectCategory)> {
        (
            -100.0..700.0f64,
            -100.0..600.0f64,
            1.0..200.0f64,
            1.0..200.0f64,
            0usize..8,
        )
            .prop_map(|(x, y, w, h, c)| {
                (
                    BoundingBox::new(x, y, x + w, y + h),
                    ObjectCategory::from_index(c).unwrap(),
                )
            })
    }

    proptest! {
        #[test]
        fn linear_index_round_trips(s in arb_spec(), seed in 0usize..10_000) {
            let idx = seed % s.len();
            let cell = s.cell_at(idx).unwrap();
            prop_assert_eq!(s.linear_index(&cell).unwrap(), idx);
        }

        #[test]
        fn diff_matches_elementwise_scan((a, b) in arb_grid_pair()) {
            let expected: Vec<usize> = (0..a.len()).filter(|&i| a.bits()[i] != b.bits()[i]).collect();
            let got: Vec<usize> = diff_cells(&a, &b).unwrap().iter()
                .map(|c| a.spec().linear_index(c).unwrap()).collect();
            prop_assert_eq!(&got, &expected);
            prop_assert_eq!(got.is_empty(), a == b);
        }

        #[test]
        fn rasterize_popcount_and_permutation(mut boxes in proptest::collection::vec(arb_box(), 0..20)) {
            let s = GridSpec::new(5, 6, 640, 480).unwrap();
            let r1 = rasterize(&boxes, &s).unwrap();
            prop_assert!(r1.grid.popcount() <= boxes.len());
            boxes.reverse();
            let r2 = rasterize(&boxes, &s).unwrap();
            prop_assert_eq!(r1, r2);
        }
    }
}
