//! Reshapes between a univariate window and its `H x W` patch grid.
//!
//! Row `i`, column `j` of the grid holds time step `i * W + j`, so the
//! transform is a plain row-major reshape and flattening is its exact
//! inverse.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// A window laid out as `patch_count` patches of `patch_len` steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    grid: Matrix,
}

impl PatchGrid {
    /// Number of patches `H`.
    pub fn patch_count(&self) -> usize {
        self.grid.rows()
    }

    /// Steps per patch `W`.
    pub fn patch_len(&self) -> usize {
        self.grid.cols()
    }

    /// Original window length `L = H * W`.
    pub fn origin_len(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &Matrix {
        &self.grid
    }

    pub fn into_grid(self) -> Matrix {
        self.grid
    }

    /// Wraps an existing `H x W` matrix.
    pub fn from_grid(grid: Matrix) -> Self {
        Self { grid }
    }

    pub fn get(&self, patch: usize, step: usize) -> f64 {
        self.grid.get(patch, step)
    }
}

/// Splits `series` into consecutive patches of `patch_len` steps.
///
/// Lengths that are not a multiple of `patch_len` are rejected; nothing is
/// padded.
pub fn to_patches(series: &[f64], patch_len: usize) -> Result<PatchGrid> {
    if patch_len == 0 || series.is_empty() || !series.len().is_multiple_of(patch_len) {
        return Err(Error::PatchDivisibility {
            len: series.len(),
            patch_len,
        });
    }
    let grid = Matrix::new(series.len() / patch_len, patch_len, series.to_vec())?;
    Ok(PatchGrid { grid })
}

pub fn flatten_patches(g: &PatchGrid) -> Vec<f64> {
    g.grid.as_slice().to_vec()
}

/// `Some(sqrt(len))` when `len` is a perfect square.
pub fn square_patch_len(len: usize) -> Option<usize> {
    let root = libm::round(libm::sqrt(len as f64)) as usize;
    (root * root == len && root > 0).then_some(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn lookback_sixteen_into_four_patches() {
        let series: Vec<f64> = (0..16).map(f64::from).collect();
        let g = to_patches(&series, 4).unwrap();
        assert_eq!((g.patch_count(), g.patch_len()), (4, 4));
        assert_eq!(g.grid().row(0), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.grid().row(3), &[12.0, 13.0, 14.0, 15.0]);
    }

    #[test]
    fn single_patch_is_identity_reshape() {
        let series: Vec<f64> = (0..8).map(|i| f64::from(i) * 0.5).collect();
        let g = to_patches(&series, 8).unwrap();
        assert_eq!(g.patch_count(), 1);
        assert_eq!(g.grid().row(0), series.as_slice());
        assert_eq!(flatten_patches(&g), series);
    }

    #[test]
    fn index_arithmetic() {
        let series: Vec<f64> = (0..16).map(f64::from).collect();
        assert_eq!(to_patches(&series, 8).unwrap().get(1, 2), 10.0);
    }

    #[test]
    fn two_by_two_flattens_row_major() {
        let g = PatchGrid::from_grid(Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        assert_eq!(flatten_patches(&g), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn non_divisible_length_reports_both_values() {
        let err = to_patches(&[0.0; 10], 4).unwrap_err();
        assert_eq!(err, Error::PatchDivisibility { len: 10, patch_len: 4 });
        assert!(to_patches(&[0.0; 10], 0).is_err());
    }

    #[test]
    fn square_patch_lengths() {
        assert_eq!(square_patch_len(16), Some(4));
        assert_eq!(square_patch_len(64), Some(8));
        assert_eq!(square_patch_len(32), None);
    }

    proptest! {
        #[test]
        fn round_trip_and_bijection(
            (len, w) in (1usize..=64).prop_flat_map(|len| {
                let divisors: Vec<usize> = (1..=len).filter(|d| len % d == 0).collect();
                (Just(len), proptest::sample::select(divisors))
            }),
            seed in any::<u64>(),
        ) {
            // distinct values so the bijection check is meaningful
            let series: Vec<f64> = (0..len).map(|i| i as f64 + (seed % 997) as f64 * 1e-3).collect();
            let g = to_patches(&series, w).unwrap();
            prop_assert_eq!(g.patch_count() * g.patch_len(), len);
            for i in 0..g.patch_count() {
                for j in 0..g.patch_len() {
                    prop_assert_eq!(g.get(i, j), series[i * w + j]);
                }
            }
            prop_assert_eq!(flatten_patches(&g), series);
        }
    }
}
