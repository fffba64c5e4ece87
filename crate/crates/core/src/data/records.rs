use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Column order of the cycle-level CSV after `battery_id,cycle`.
pub const BASE_FEATURES: [&str; 10] = [
    "capacity_ah",
    "voltage_min",
    "voltage_max",
    "voltage_mean",
    "current_min",
    "current_max",
    "current_mean",
    "temp_min",
    "temp_max",
    "temp_mean",
];

pub const CAPACITY: &str = "capacity_ah";
/// Running mean of capacity over all cycles so far.
pub const ACC_CAP_MEAN: &str = "acc_cap_mean";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SignalStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl SignalStats {
    /// `None` for an empty sample set.
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &s in samples {
            min = min.min(s);
            max = max.max(s);
            sum += s;
        }
        Some(Self {
            min,
            max,
            mean: sum / samples.len() as f64,
        })
    }
}

/// Aggregated measurements of one charge/discharge cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub battery_id: String,
    pub cycle: u32,
    pub capacity: f64,
    pub voltage: SignalStats,
    pub current: SignalStats,
    pub temperature: SignalStats,
}

impl CycleRecord {
    /// Values in [`BASE_FEATURES`] order.
    pub fn features(&self) -> [f64; 10] {
        let (v, i, t) = (&self.voltage, &self.current, &self.temperature);
        [
            self.capacity, v.min, v.max, v.mean, i.min, i.max, i.mean, t.min, t.max, t.mean,
        ]
    }

    pub fn from_features(battery_id: &str, cycle: u32, f: [f64; 10]) -> Self {
        Self {
            battery_id: battery_id.to_string(),
            cycle,
            capacity: f[0],
            voltage: SignalStats { min: f[1], max: f[2], mean: f[3] },
            current: SignalStats { min: f[4], max: f[5], mean: f[6] },
            temperature: SignalStats { min: f[7], max: f[8], mean: f[9] },
        }
    }
}

/// Per-sample measurements of one cycle before aggregation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawCycle {
    pub battery_id: String,
    pub cycle: u32,
    pub capacity: f64,
    pub voltage: Vec<f64>,
    pub current: Vec<f64>,
    pub temperature: Vec<f64>,
}

/// Min/max/mean of every signal, cycle by cycle.
pub fn aggregate_cycles(raw: &[RawCycle]) -> Result<Vec<CycleRecord>> {
    raw.iter()
        .map(|c| {
            let stats = |samples: &[f64], signal: &'static str| {
                SignalStats::of(samples).ok_or_else(|| Error::EmptyCycle {
                    battery: c.battery_id.clone(),
                    cycle: c.cycle,
                    signal,
                })
            };
            Ok(CycleRecord {
                battery_id: c.battery_id.clone(),
                cycle: c.cycle,
                capacity: c.capacity,
                voltage: stats(&c.voltage, "voltage")?,
                current: stats(&c.current, "current")?,
                temperature: stats(&c.temperature, "temperature")?,
            })
        })
        .collect()
}

/// The multivariate series of one battery: one row per feature, one column
/// per cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct BatterySeries {
    pub battery_id: String,
    pub feature_names: Vec<String>,
    pub cycles: Vec<u32>,
    /// `C x M`
    pub values: Matrix,
}

impl BatterySeries {
    /// Builds the series of a single battery. Cycles must be strictly
    /// increasing and capacities positive.
    pub fn from_records(records: &[CycleRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidArgument(String::from("no cycle records")))?;
        let mut cycles = Vec::with_capacity(records.len());
        let mut cols: Vec<[f64; 10]> = Vec::with_capacity(records.len());
        for r in records {
            if r.battery_id != first.battery_id {
                return Err(Error::InvalidArgument(format!(
                    "records of `{}` mixed into battery `{}`",
                    r.battery_id, first.battery_id
                )));
            }
            if let Some(&prev) = cycles.last() {
                if r.cycle <= prev {
                    return Err(Error::InvalidArgument(format!(
                        "battery `{}`: cycle {} does not follow cycle {prev}",
                        r.battery_id, r.cycle
                    )));
                }
            }
            if !(r.capacity > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "battery `{}` cycle {}: capacity {} must be positive",
                    r.battery_id, r.cycle, r.capacity
                )));
            }
            cycles.push(r.cycle);
            cols.push(r.features());
        }
        let values = Matrix::from_fn(BASE_FEATURES.len(), cols.len(), |f, c| cols[c][f]);
        Ok(Self {
            battery_id: first.battery_id.clone(),
            feature_names: BASE_FEATURES.iter().map(|s| s.to_string()).collect(),
            cycles,
            values,
        })
    }

    /// Splits records (sorted by battery, then cycle) into one series per
    /// battery, in order of first appearance.
    pub fn group_records(records: &[CycleRecord]) -> Result<Vec<Self>> {
        let mut out: Vec<Self> = Vec::new();
        let mut start = 0;
        for i in 1..=records.len() {
            if i == records.len() || records[i].battery_id != records[start].battery_id {
                let series = Self::from_records(&records[start..i])?;
                if out.iter().any(|s| s.battery_id == series.battery_id) {
                    return Err(Error::InvalidArgument(format!(
                        "rows of battery `{}` are not contiguous",
                        series.battery_id
                    )));
                }
                out.push(series);
                start = i;
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.values.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.cols() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.rows()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn feature(&self, idx: usize) -> &[f64] {
        self.values.row(idx)
    }

    pub fn capacity_index(&self) -> Result<usize> {
        self.feature_index(CAPACITY)
            .ok_or_else(|| Error::InvalidArgument(format!("battery `{}` has no {CAPACITY} feature", self.battery_id)))
    }

    pub fn capacity(&self) -> Result<&[f64]> {
        Ok(self.feature(self.capacity_index()?))
    }

    /// Keeps the features at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.channels()) {
            return Err(Error::InvalidArgument(format!(
                "feature index {bad} out of range for {} features",
                self.channels()
            )));
        }
        Ok(Self {
            battery_id: self.battery_id.clone(),
            feature_names: indices.iter().map(|&i| self.feature_names[i].clone()).collect(),
            cycles: self.cycles.clone(),
            values: Matrix::from_fn(indices.len(), self.len(), |r, c| self.values.get(indices[r], c)),
        })
    }

    /// `C x len` slice of consecutive cycles starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Matrix {
        Matrix::from_fn(self.channels(), len, |r, c| self.values.get(r, start + c))
    }

    /// Converts the base features back to CSV records.
    pub fn to_records(&self) -> Result<Vec<CycleRecord>> {
        let idx: Vec<usize> = BASE_FEATURES
            .iter()
            .map(|name| {
                self.feature_index(name)
                    .ok_or_else(|| Error::InvalidArgument(format!("missing feature {name}")))
            })
            .collect::<Result<_>>()?;
        Ok((0..self.len())
            .map(|c| {
                let mut f = [0.0; 10];
                for (k, &i) in idx.iter().enumerate() {
                    f[k] = self.values.get(i, c);
                }
                CycleRecord::from_features(&self.battery_id, self.cycles[c], f)
            })
            .collect())
    }
}

/// Appends (or refreshes) the running mean of capacity,
/// `acc[c] = (1 / (c + 1)) * sum_{j <= c} capacity[j]`.
pub fn derive_features(series: &BatterySeries) -> Result<BatterySeries> {
    let cap = series.capacity()?;
    let mut sum = 0.0;
    let acc: Vec<f64> = cap
        .iter()
        .enumerate()
        .map(|(c, &v)| {
            sum += v;
            sum / (c + 1) as f64
        })
        .collect();
    let mut out = series.clone();
    match series.feature_index(ACC_CAP_MEAN) {
        Some(i) => out.values.row_mut(i).copy_from_slice(&acc),
        None => {
            let rows = series.channels();
            out.values = Matrix::from_fn(rows + 1, series.len(), |r, c| {
                if r < rows {
                    series.values.get(r, c)
                } else {
                    acc[c]
                }
            });
            out.feature_names.push(String::from(ACC_CAP_MEAN));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    pub(crate) fn record(id: &str, cycle: u32, capacity: f64) -> CycleRecord {
        let s = SignalStats { min: 1.0, max: 2.0, mean: 1.5 };
        CycleRecord {
            battery_id: id.to_string(),
            cycle,
            capacity,
            voltage: s,
            current: s,
            temperature: s,
        }
    }

    fn raw(cycle: u32, v: Vec<f64>) -> RawCycle {
        RawCycle {
            battery_id: "B1".into(),
            cycle,
            capacity: 2.0,
            voltage: v.clone(),
            current: v.clone(),
            temperature: v,
        }
    }

    #[test]
    fn aggregation_examples() {
        let recs = aggregate_cycles(&[raw(1, vec![3.0, 4.0, 3.5]), raw(2, vec![3.7])]).unwrap();
        assert_eq!(recs[0].voltage, SignalStats { min: 3.0, max: 4.0, mean: 3.5 });
        assert_eq!(recs[1].voltage, SignalStats { min: 3.7, max: 3.7, mean: 3.7 });
    }

    #[test]
    fn empty_cycle_is_named() {
        let mut bad = raw(7, vec![1.0]);
        bad.temperature.clear();
        let err = aggregate_cycles(&[raw(1, vec![1.0]), bad]).unwrap_err();
        assert_eq!(
            err,
            Error::EmptyCycle {
                battery: "B1".into(),
                cycle: 7,
                signal: "temperature"
            }
        );
    }

    #[test]
    fn series_validation() {
        assert!(BatterySeries::from_records(&[record("A", 2, 1.0), record("A", 2, 1.0)]).is_err());
        assert!(BatterySeries::from_records(&[record("A", 1, 0.0)]).is_err());
        assert!(BatterySeries::from_records(&[record("A", 1, 1.0), record("B", 2, 1.0)]).is_err());
        let s = BatterySeries::from_records(&[record("A", 1, 1.0), record("A", 3, 0.9)]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.capacity().unwrap(), &[1.0, 0.9]);
    }

    #[test]
    fn grouping_requires_contiguous_batteries() {
        let recs = [record("A", 1, 1.0), record("B", 1, 1.0), record("A", 2, 1.0)];
        assert!(BatterySeries::group_records(&recs).is_err());
        let recs = [record("A", 1, 1.0), record("A", 2, 1.0), record("B", 1, 1.0)];
        let g = BatterySeries::group_records(&recs).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].battery_id, "B");
    }

    #[test]
    fn running_mean_examples() {
        let s = BatterySeries::from_records(&[record("A", 0, 2.0), record("A", 1, 2.0), record("A", 2, 2.0)]).unwrap();
        let d = derive_features(&s).unwrap();
        let acc = d.feature(d.feature_index(ACC_CAP_MEAN).unwrap());
        assert!(acc.iter().all(|&v| v == 2.0));

        let s = BatterySeries::from_records(&[record("A", 0, 2.0), record("A", 1, 1.8)]).unwrap();
        let d = derive_features(&s).unwrap();
        let acc = d.feature(10);
        assert_eq!(acc[0], 2.0);
        assert!((acc[1] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn deriving_twice_does_not_duplicate() {
        let s = BatterySeries::from_records(&[record("A", 0, 2.0), record("A", 1, 1.8)]).unwrap();
        let once = derive_features(&s).unwrap();
        let twice = derive_features(&once).unwrap();
        assert_eq!(once, twice);
        assert_eq!(twice.channels(), 11);
    }

    proptest! {
        #[test]
        fn running_mean_of_decreasing_capacity(steps in proptest::collection::vec(0.001f64..0.05, 1..60)) {
            let mut cap = vec![2.0];
            for s in &steps {
                let last = *cap.last().unwrap();
                cap.push(last - s);
            }
            let recs: Vec<CycleRecord> = cap.iter().enumerate().map(|(i, &c)| record("A", i as u32, c)).collect();
            let d = derive_features(&BatterySeries::from_records(&recs).unwrap()).unwrap();
            let acc = d.feature(10);
            // direct cumulative-sum oracle
            for c in 0..cap.len() {
                let want: f64 = cap[..=c].iter().sum::<f64>() / (c + 1) as f64;
                prop_assert!((acc[c] - want).abs() < 1e-12);
                prop_assert!(acc[c] >= cap[c]);
                if c > 0 {
                    prop_assert!(acc[c] < acc[c - 1]);
                }
            }
        }
    }
}
