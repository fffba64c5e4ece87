use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use super::BatterySeries;
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// One supervised sample: `x` holds cycles `[start, start + L)`, `y` holds
/// `[start + L, start + L + N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// `C x L`
    pub x: Matrix,
    /// `C x N`
    pub y: Matrix,
    pub battery_id: String,
    /// Column index of the first input cycle.
    pub start: usize,
    /// Cycle number of the first target.
    pub anchor_cycle: u32,
}

/// `floor((m - l - n) / stride) + 1`, or 0 when the series is too short.
pub fn window_count(m: usize, l: usize, n: usize, stride: usize) -> usize {
    if m < l + n || stride == 0 {
        0
    } else {
        (m - l - n) / stride + 1
    }
}

fn check_dims(l: usize, n: usize, stride: usize) -> Result<()> {
    if l == 0 || n == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "lookback {l}, horizon {n} and stride {stride} must all be >= 1"
        )));
    }
    Ok(())
}

pub fn make_windows(series: &BatterySeries, l: usize, n: usize, stride: usize) -> Result<Vec<WindowSample>> {
    check_dims(l, n, stride)?;
    let count = window_count(series.len(), l, n, stride);
    if count == 0 {
        log::warn!(
            "battery `{}` has {} cycles, fewer than lookback + horizon = {}; skipped",
            series.battery_id,
            series.len(),
            l + n
        );
    }
    make_windows_range(series, l, n, stride, 0..count)
}

/// The windows with indices in `range` (window `k` starts at `k * stride`).
pub fn make_windows_range(
    series: &BatterySeries,
    l: usize,
    n: usize,
    stride: usize,
    range: Range<usize>,
) -> Result<Vec<WindowSample>> {
    check_dims(l, n, stride)?;
    let count = window_count(series.len(), l, n, stride);
    if range.end > count {
        return Err(Error::InvalidArgument(format!(
            "window range {range:?} exceeds the {count} windows of battery `{}`",
            series.battery_id
        )));
    }
    Ok(range
        .map(|k| {
            let start = k * stride;
            WindowSample {
                x: series.window(start, l),
                y: series.window(start + l, n),
                battery_id: series.battery_id.clone(),
                start,
                anchor_cycle: series.cycles[start + l],
            }
        })
        .collect())
}
