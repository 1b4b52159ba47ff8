//! Single-channel intensity grids.

use thiserror::Error;

/// Minimum side length of a valid grid.
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("grid must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}")]
    TooSmall { height: usize, width: usize },
    #[error("expected {expected} pixel values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("pixel value {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

/// An H x W single-channel intensity grid with values in `[0, 1]`,
/// stored row-major in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Validates dimensions, length, and value range.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(ImageError::TooSmall { height, width });
        }
        if data.len() != height * width {
            return Err(ImageError::LengthMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ImageError::OutOfRange { index, value });
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// A grid filled with one value.
    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Row-major pixel values.
    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Builds a grid from already-validated values, clamping into `[0, 1]`.
    /// Dimensions must still satisfy the minimum size.
    pub fn from_clamped(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        let clamped = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(height, width, clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert_eq!(
            Image::new(4, 8, vec![0.0; 32]),
            Err(ImageError::TooSmall {
                height: 4,
                width: 8
            })
        );
    }

    #[test]
    fn rejects_out_of_range() {
        let mut data = vec![0.5; 64];
        data[10] = 1.5;
        assert!(matches!(
            Image::new(8, 8, data),
            Err(ImageError::OutOfRange { index: 10, .. })
        ));
    }

    #[test]
    fn row_major_indexing() {
        let mut data = vec![0.0; 64];
        data[8 + 3] = 0.7; // row 1, column 3
        let img = Image::new(8, 8, data).unwrap();
        assert_eq!(img.get(1, 3), 0.7);
    }

    #[test]
    fn clamping_constructor() {
        let img = Image::from_clamped(8, 8, vec![-0.2; 64]).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }
}
