use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::windows::{make_windows_range, window_count, WindowSample};
use super::BatterySeries;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SplitPolicy {
    /// One battery is held out for testing; the trailing `val_frac` of every
    /// other battery's windows is used for validation.
    LeaveOneOut { test_battery: String, val_frac: f64 },
    /// Every battery is cut by cycle index into train / val / test spans.
    Chronological { train_frac: f64, val_frac: f64 },
}

impl SplitPolicy {
    pub fn leave_one_out(test_battery: &str) -> Self {
        SplitPolicy::LeaveOneOut {
            test_battery: String::from(test_battery),
            val_frac: 0.2,
        }
    }

    pub fn chronological() -> Self {
        SplitPolicy::Chronological {
            train_frac: 0.6,
            val_frac: 0.2,
        }
    }
}

/// A contiguous run of windows of one battery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub battery: usize,
    pub windows: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub train: Vec<Segment>,
    pub val: Vec<Segment>,
    pub test: Vec<Segment>,
    /// Cycle spans the scaler may be fitted on (training inputs and targets).
    pub scaler_cycles: Vec<(usize, Range<usize>)>,
}

impl SplitPlan {
    pub fn samples(&self, batteries: &[BatterySeries], segments: &[Segment]) -> Result<Vec<WindowSample>> {
        let mut out = Vec::new();
        for seg in segments {
            out.extend(make_windows_range(
                &batteries[seg.battery],
                self.lookback,
                self.horizon,
                self.stride,
                seg.windows.clone(),
            )?);
        }
        Ok(out)
    }

    /// Batteries that own at least one test window, in order.
    pub fn test_batteries(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.test.iter().filter(|s| !s.windows.is_empty()).map(|s| s.battery).collect();
        ids.dedup();
        ids
    }

    /// Cycle indices covered by the given segments (inputs and targets).
    fn cycle_span(&self, seg: &Segment) -> Range<usize> {
        if seg.windows.is_empty() {
            return 0..0;
        }
        let first = seg.windows.start * self.stride;
        let last = (seg.windows.end - 1) * self.stride + self.lookback + self.horizon;
        first..last
    }

    /// True when no target cycle of a test window is ever seen by the
    /// scaler, the training windows, or the validation windows.
    pub fn is_leak_free(&self) -> bool {
        self.test.iter().all(|t| {
            let t_targets = self.target_span(t);
            let disjoint = |other: &Range<usize>| other.end <= t_targets.start || other.start >= t_targets.end;
            self.train
                .iter()
                .chain(&self.val)
                .filter(|s| s.battery == t.battery)
                .all(|s| disjoint(&self.cycle_span(s)))
                && self
                    .scaler_cycles
                    .iter()
                    .filter(|(b, _)| *b == t.battery)
                    .all(|(_, r)| disjoint(r))
        })
    }

    fn target_span(&self, seg: &Segment) -> Range<usize> {
        if seg.windows.is_empty() {
            return 0..0;
        }
        let span = self.cycle_span(seg);
        (seg.windows.start * self.stride + self.lookback)..span.end
    }
}

/// Windows whose targets lie entirely inside cycles `[lo, hi)`.
fn windows_with_targets_in(m: usize, l: usize, n: usize, stride: usize, lo: usize, hi: usize) -> Range<usize> {
    let count = window_count(m, l, n, stride);
    let first = if lo <= l { 0 } else { (lo - l).div_ceil(stride) };
    let end = if hi >= l + n { ((hi - l - n) / stride + 1).min(count) } else { 0 };
    first.min(end)..end
}

fn check_frac(name: &str, v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1)")));
    }
    Ok(())
}

pub fn split_dataset(
    batteries: &[BatterySeries],
    policy: &SplitPolicy,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<SplitPlan> {
    if batteries.is_empty() {
        return Err(Error::InvalidArgument(String::from("no batteries to split")));
    }
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "lookback {lookback}, horizon {horizon} and stride {stride} must all be >= 1"
        )));
    }
    let mut plan = SplitPlan {
        lookback,
        horizon,
        stride,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        scaler_cycles: Vec::new(),
    };
    match policy {
        SplitPolicy::LeaveOneOut { test_battery, val_frac } => {
            check_frac("val_frac", *val_frac)?;
            let test_idx = batteries
                .iter()
                .position(|b| &b.battery_id == test_battery)
                .ok_or_else(|| Error::UnknownBattery(test_battery.clone()))?;
            for (i, b) in batteries.iter().enumerate() {
                let count = window_count(b.len(), lookback, horizon, stride);
                if i == test_idx {
                    plan.test.push(Segment { battery: i, windows: 0..count });
                    continue;
                }
                let n_val = libm::round(count as f64 * val_frac) as usize;
                let n_train = count - n_val;
                let train = Segment { battery: i, windows: 0..n_train };
                if n_train > 0 {
                    plan.scaler_cycles.push((i, plan.cycle_span(&train)));
                }
                plan.train.push(train);
                plan.val.push(Segment { battery: i, windows: n_train..count });
            }
        }
        SplitPolicy::Chronological { train_frac, val_frac } => {
            check_frac("train_frac", *train_frac)?;
            check_frac("val_frac", *val_frac)?;
            if train_frac + val_frac > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "train_frac {train_frac} + val_frac {val_frac} exceeds 1"
                )));
            }
            for (i, b) in batteries.iter().enumerate() {
                let m = b.len();
                let train_end = libm::floor(m as f64 * train_frac) as usize;
                let val_end = libm::floor(m as f64 * (train_frac + val_frac)) as usize;
                let w = |lo, hi| windows_with_targets_in(m, lookback, horizon, stride, lo, hi);
                plan.train.push(Segment { battery: i, windows: w(0, train_end) });
                plan.val.push(Segment { battery: i, windows: w(train_end, val_end) });
                plan.test.push(Segment { battery: i, windows: w(val_end, m) });
                if train_end > 0 {
                    plan.scaler_cycles.push((i, 0..train_end));
                }
            }
        }
    }
    if plan.scaler_cycles.is_empty() {
        return Err(Error::InvalidArgument(String::from(
            "split leaves no training windows; batteries are too short for the lookback",
        )));
    }
    Ok(plan)
}
