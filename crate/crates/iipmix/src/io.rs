//! CSV formats: cycle-level input, importance, history and report tables.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use iipmix_core::data::{synth_fleet, BatterySeries, CycleRecord};
use iipmix_core::experiment::{DataSection, EpochStats, EvalReport, SeedRun};
use serde::{Deserialize, Serialize};

/// Header of the cycle-level input CSV.
pub const CYCLE_HEADER: [&str; 12] = [
    "battery_id",
    "cycle",
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

pub const REPORT_HEADER: [&str; 7] = ["method", "mae_ah", "rmse_ah", "mape_pct", "are_pct", "rul_true", "rul_pred"];

#[derive(Debug, Serialize, Deserialize)]
struct CycleRow {
    battery_id: String,
    cycle: u32,
    capacity_ah: f64,
    voltage_min: f64,
    voltage_max: f64,
    voltage_mean: f64,
    current_min: f64,
    current_max: f64,
    current_mean: f64,
    temp_min: f64,
    temp_max: f64,
    temp_mean: f64,
}

impl From<&CycleRecord> for CycleRow {
    fn from(r: &CycleRecord) -> Self {
        let f = r.features();
        CycleRow {
            battery_id: r.battery_id.clone(),
            cycle: r.cycle,
            capacity_ah: f[0],
            voltage_min: f[1],
            voltage_max: f[2],
            voltage_mean: f[3],
            current_min: f[4],
            current_max: f[5],
            current_mean: f[6],
            temp_min: f[7],
            temp_max: f[8],
            temp_mean: f[9],
        }
    }
}

impl CycleRow {
    fn into_record(self) -> CycleRecord {
        let f = [
            self.capacity_ah,
            self.voltage_min,
            self.voltage_max,
            self.voltage_mean,
            self.current_min,
            self.current_max,
            self.current_mean,
            self.temp_min,
            self.temp_max,
            self.temp_mean,
        ];
        CycleRecord::from_features(&self.battery_id, self.cycle, f)
    }
}

pub fn read_cycles<R: Read>(reader: R) -> Result<Vec<CycleRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != CYCLE_HEADER {
        bail!("unexpected CSV header `{}`, expected `{}`", header.join(","), CYCLE_HEADER.join(","));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CycleRow>().enumerate() {
        // data rows start on line 2
        let row = row.with_context(|| format!("CSV line {}", i + 2))?;
        out.push(row.into_record());
    }
    Ok(out)
}

pub fn read_cycles_path(path: &Path) -> Result<Vec<CycleRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_cycles(f).with_context(|| format!("reading {}", path.display()))
}

pub fn write_cycles<W: Write>(writer: W, records: &[CycleRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(CycleRow::from(r))?;
    }
    if records.is_empty() {
        w.write_record(CYCLE_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

/// Battery series of the configured source: the CSV at `data.path`, or the
/// synthetic fleet.
pub fn load_batteries(data: &DataSection) -> Result<Vec<BatterySeries>> {
    let records = match &data.path {
        Some(p) => read_cycles_path(Path::new(p))?,
        None => synth_fleet(&data.synth, data.synth_seed)?,
    };
    Ok(BatterySeries::group_records(&records)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn report_fields(r: &EvalReport) -> [String; 6] {
    [r.mae.to_string(), r.rmse.to_string(), opt(r.mape), opt(r.are), opt(r.rul_true), opt(r.rul_pred)]
}

/// One row per report, in the column order of the comparison table. Missing
/// values are empty cells.
pub fn write_report<W: Write>(writer: W, rows: &[(&str, &EvalReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for (label, r) in rows {
        let mut rec = vec![label.to_string()];
        rec.extend(report_fields(r));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes already-parsed rows back in the same format.
pub fn write_report_rows<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        let mut rec = vec![r.method.clone()];
        rec.extend(r.values.iter().map(|v| opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed row of a report CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    /// `mae_ah` through `rul_pred`.
    pub values: [Option<f64>; 6],
}

pub fn read_report<R: Read>(reader: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != REPORT_HEADER {
        bail!("not a report CSV: header `{}`", header.join(","));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut values = [None; 6];
        for (i, v) in values.iter_mut().enumerate() {
            let cell = rec.get(i + 1).unwrap_or("");
            if !cell.is_empty() {
                *v = Some(cell.parse().with_context(|| format!("bad number `{cell}`"))?);
            }
        }
        out.push(ReportRow {
            method: rec.get(0).unwrap_or("").to_string(),
            values,
        });
    }
    Ok(out)
}

impl ReportRow {
    pub fn of(label: &str, r: &EvalReport) -> Self {
        ReportRow {
            method: label.to_string(),
            values: [Some(r.mae), Some(r.rmse), r.mape, r.are, r.rul_true, r.rul_pred],
        }
    }
}

/// Fixed-width text rendering of report rows for the terminal.
pub fn render_report(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<width$} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}\n",
        "method", "MAE(Ah)", "RMSE(Ah)", "MAPE(%)", "ARE(%)", "RUL", "RUL_pred"
    );
    for r in rows {
        let cell = |i: usize, prec: usize| match r.values[i] {
            Some(v) => format!("{v:.prec$}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<width$} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}\n",
            r.method,
            cell(0, 4),
            cell(1, 4),
            cell(2, 3),
            cell(3, 3),
            cell(4, 1),
            cell(5, 1)
        ));
    }
    out
}

/// Per-seed rows: the report columns prefixed with the seed.
pub fn write_seed_reports<W: Write>(writer: W, runs: &[SeedRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["seed"];
    header.extend(REPORT_HEADER);
    w.write_record(&header)?;
    for r in runs {
        let mut rec = vec![r.seed.to_string(), r.report.method.clone()];
        rec.extend(report_fields(&r.report));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history<W: Write>(writer: W, runs: &[(u64, &[EpochStats])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["seed", "epoch", "train_loss", "val_loss"])?;
    for (seed, history) in runs {
        for e in history.iter() {
            w.write_record([seed.to_string(), e.epoch.to_string(), e.train_loss.to_string(), opt(e.val_loss)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// RUL outcome and rollout error of every test battery of every seed.
pub fn write_rul<W: Write>(writer: W, runs: &[SeedRun]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "seed",
        "battery_id",
        "start",
        "rul_true",
        "rul_pred",
        "are_pct",
        "status",
        "rollout_mae_ah",
        "rollout_rmse_ah",
    ])?;
    for r in runs {
        for b in &r.report.per_battery {
            let status = match b.status {
                iipmix_core::experiment::AreStatus::Ok => "ok",
                iipmix_core::experiment::AreStatus::NoTrueCrossing => "no_true_crossing",
                iipmix_core::experiment::AreStatus::NoPredictedCrossing => "no_predicted_crossing",
            };
            w.write_record([
                r.seed.to_string(),
                b.battery_id.clone(),
                b.start.to_string(),
                opt_usize(b.rul_true),
                opt_usize(b.rul_pred),
                opt(b.are),
                status.to_string(),
                opt(b.rollout.map(|m| m.mae)),
                opt(b.rollout.map(|m| m.rmse)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rollout trajectories for plotting; `observed_ah` is empty past the data.
pub fn write_trajectories<W: Write>(writer: W, runs: &[SeedRun], batteries: &[BatterySeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["seed", "battery_id", "cycle_index", "observed_ah", "predicted_ah"])?;
    for r in runs {
        for b in &r.report.per_battery {
            let observed = batteries
                .iter()
                .find(|s| s.battery_id == b.battery_id)
                .map(|s| s.capacity())
                .transpose()?
                .unwrap_or(&[]);
            for (i, p) in b.trajectory.iter().enumerate() {
                let idx = b.start + i;
                w.write_record([
                    r.seed.to_string(),
                    b.battery_id.clone(),
                    idx.to_string(),
                    opt(observed.get(idx).copied()),
                    p.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_importance<W: Write>(writer: W, names: &[String], importances: &[f64], selected: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "importance", "selected"])?;
    for (i, (name, imp)) in names.iter().zip(importances).enumerate() {
        w.write_record([name.clone(), imp.to_string(), selected.contains(&i).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use iipmix_core::data::FleetConfig;

    #[test]
    fn cycle_csv_round_trips_bitwise() {
        let recs = synth_fleet(&FleetConfig::default(), 3).unwrap();
        let mut buf = Vec::new();
        write_cycles(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&CYCLE_HEADER.join(",")));
        let back = read_cycles(buf.as_slice()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let text = "battery_id,cycle,capacity\nB1,1,2.0\n";
        assert!(read_cycles(text.as_bytes()).is_err());
        let derived = format!("{},acc_cap_mean\n", CYCLE_HEADER.join(","));
        assert!(read_cycles(derived.as_bytes()).is_err());
    }

    #[test]
    fn bad_cell_names_its_line() {
        let text = format!("{}\nB1,1,2.0,3,4,3.5,-2,0,-1,24,30,27\nB1,2,x,3,4,3.5,-2,0,-1,24,30,27\n", CYCLE_HEADER.join(","));
        let err = format!("{:#}", read_cycles(text.as_bytes()).unwrap_err());
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn report_round_trips() {
        let r = EvalReport {
            method: "IIP-Mixer".into(),
            mae: 0.1,
            rmse: 0.2,
            mape: Some(3.0),
            are: None,
            rul_true: Some(100.0),
            rul_pred: None,
            rollout_mae: None,
            rollout_rmse: None,
            per_battery: vec![],
        };
        let mut buf = Vec::new();
        write_report(&mut buf, &[("IIP-Mixer", &r)]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "method,mae_ah,rmse_ah,mape_pct,are_pct,rul_true,rul_pred\nIIP-Mixer,0.1,0.2,3,,100,\n"
        );
        let rows = read_report(buf.as_slice()).unwrap();
        assert_eq!(rows[0].values, [Some(0.1), Some(0.2), Some(3.0), None, Some(100.0), None]);
    }
}
