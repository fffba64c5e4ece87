//! Cycle-level battery data: aggregation, feature derivation, scaling,
//! windowing, splits and a synthetic degradation generator.

mod records;
mod scaler;
mod split;
mod synth;
mod windows;

pub use records::{
    aggregate_cycles, derive_features, BatterySeries, CycleRecord, RawCycle, SignalStats, ACC_CAP_MEAN, BASE_FEATURES,
    CAPACITY,
};
pub use scaler::{fit_apply_scaler, Scaler};
pub use split::{split_dataset, Segment, SplitPlan, SplitPolicy};
pub use synth::{synth_degradation, synth_fleet, synth_series, FleetConfig, SynthConfig};
pub use windows::{make_windows, make_windows_range, window_count, WindowSample};
