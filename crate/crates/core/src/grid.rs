//! Dense row-major 2-D grids used for spatial maps, label maps and masks.

use crate::error::ShapeError;

/// A row-major `height × width` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Continuous per-cell values (similarity maps, interpolated heatmaps).
pub type FloatGrid = Grid<f64>;

/// Cluster labels, `0` is background.
pub type LabelGrid = Grid<u32>;

/// Binary grids: thresholded maps and segmentation masks.
pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self, ShapeError> {
        if height == 0 || width == 0 {
            return Err(ShapeError::ZeroDim);
        }
        if data.len() != height * width {
            return Err(ShapeError::Length {
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    /// Builds a grid by evaluating `f(row, col)` in raster order.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }
}

impl Mask {
    /// Number of `true` cells.
    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }
}

impl LabelGrid {
    /// Largest label present, i.e. the cluster count for a canonical labeling.
    pub fn max_label(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Cells with a nonzero label.
    pub fn foreground(&self) -> Mask {
        self.map(|&l| l > 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(
            Grid::from_vec(2, 2, vec![1u8; 3]),
            Err(ShapeError::Length {
                expected: 4,
                found: 3
            })
        ));
        assert!(matches!(
            Grid::<u8>::from_vec(0, 2, vec![]),
            Err(ShapeError::ZeroDim)
        ));
    }

    #[test]
    fn raster_order() {
        let g = Grid::from_fn(2, 3, |r, c| r * 10 + c);
        assert_eq!(g.as_slice(), &[0, 1, 2, 10, 11, 12]);
        assert_eq!(*g.get(1, 2), 12);
    }
}
