//! Trace files, empirical CDFs and the campaign summary bundle.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::{Mode, RunOutput, StepRecord};
use crate::triangulate::PoseStatus;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfPoint {
    pub error_m: f64,
    pub cdf: f64,
}

/// Empirical CDF evaluated at the sorted unique values of `errors`.
pub fn compute_cdf(errors: &[f64]) -> Result<Vec<CdfPoint>> {
    if errors.is_empty() {
        return Err(Error::NoRecords("cannot build a CDF from an empty error list".into()));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::InvalidConfig("CDF input contains NaN".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, &e) in sorted.iter().enumerate() {
        let cdf = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.error_m == e => last.cdf = cdf,
            _ => out.push(CdfPoint { error_m: e, cdf }),
        }
    }
    Ok(out)
}

/// Smallest tabulated error whose CDF reaches `q`.
pub fn cdf_quantile(table: &[CdfPoint], q: f64) -> f64 {
    table
        .iter()
        .find(|p| p.cdf >= q)
        .or(table.last())
        .map_or(f64::NAN, |p| p.error_m)
}

fn median_of(values: &[f64]) -> f64 {
    compute_cdf(values).map_or(f64::NAN, |t| cdf_quantile(&t, 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub runs: usize,
    pub steps: usize,
    /// Steps without any position estimate.
    pub failed_steps: usize,
    pub mean_m: f64,
    pub median_m: f64,
    pub p90_m: f64,
    pub p95_m: f64,
    pub per_run_median_m: Vec<f64>,
    pub cdf: Vec<CdfPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleMse {
    /// Per-step MSE averaged over paths and runs, rad².
    pub aod_per_step: Vec<f64>,
    pub aoa_per_step: Vec<f64>,
    pub within_epoch_steps: usize,
    pub within_epoch_aod: f64,
    pub within_epoch_aoa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionStats {
    pub deadline: usize,
    pub boundaries: usize,
    /// Boundaries followed by a re-acquisition within `deadline` steps.
    pub timely: usize,
    pub liveness: f64,
    pub triggers: usize,
    /// EKF-updated steps outside every post-boundary window.
    pub quiet_steps: usize,
    pub false_alarms: usize,
    pub false_alarm_rate: f64,
    pub gain_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub modes: Vec<ModeSummary>,
    pub angle_mse: AngleMse,
    pub detection: DetectionStats,
}

impl ReportBundle {
    /// Aggregates runs; the result does not depend on the order of `runs`.
    pub fn from_runs(runs: &[RunOutput], deadline: usize) -> Result<Self> {
        if runs.iter().all(|r| r.records.is_empty()) {
            return Err(Error::NoRecords("no records in any run".into()));
        }
        let mut by_mode: BTreeMap<Mode, Vec<&RunOutput>> = BTreeMap::new();
        for r in runs {
            by_mode.entry(r.mode).or_default().push(r);
        }
        for list in by_mode.values_mut() {
            list.sort_by_key(|r| (r.run, r.seed));
        }

        let mut modes = Vec::new();
        for (&mode, list) in &by_mode {
            let pooled: Vec<f64> = list
                .iter()
                .flat_map(|r| r.records.iter().map(|s| s.pos_error))
                .collect();
            let steps = pooled.len();
            let finite: Vec<f64> = pooled.iter().copied().filter(|e| e.is_finite()).collect();
            let cdf = compute_cdf(&finite).unwrap_or_default();
            let per_run_median_m = list
                .iter()
                .map(|r| {
                    let e: Vec<f64> = r.records.iter().map(|s| s.pos_error).filter(|e| e.is_finite()).collect();
                    median_of(&e)
                })
                .collect();
            modes.push(ModeSummary {
                mode,
                runs: list.len(),
                steps,
                failed_steps: steps - finite.len(),
                mean_m: if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 },
                median_m: cdf_quantile(&cdf, 0.5),
                p90_m: cdf_quantile(&cdf, 0.9),
                p95_m: cdf_quantile(&cdf, 0.95),
                per_run_median_m,
                cdf,
            });
        }

        // The channel stage is identical across modes, so one mode suffices.
        let reference = by_mode.values().next().expect("at least one mode");
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            modes,
            angle_mse: angle_mse(reference),
            detection: detection_stats(reference, deadline),
        })
    }

    pub fn mode(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean_finite(values: &[f64]) -> Option<f64> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn angle_mse(runs: &[&RunOutput]) -> AngleMse {
    let steps = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    let mut aod_per_step = Vec::with_capacity(steps);
    let mut aoa_per_step = Vec::with_capacity(steps);
    for k in 0..steps {
        let at = |f: fn(&StepRecord) -> &Vec<f64>| {
            let per_run: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.records.get(k))
                .filter_map(|s| mean_finite(f(s)))
                .collect();
            mean_finite(&per_run).unwrap_or(f64::NAN)
        };
        aod_per_step.push(at(|s| &s.aod_sq_err));
        aoa_per_step.push(at(|s| &s.aoa_sq_err));
    }
    let mut aod = Vec::new();
    let mut aoa = Vec::new();
    for s in runs.iter().flat_map(|r| &r.records).filter(|s| s.within_epoch) {
        if let (Some(d), Some(a)) = (mean_finite(&s.aod_sq_err), mean_finite(&s.aoa_sq_err)) {
            aod.push(d);
            aoa.push(a);
        }
    }
    AngleMse {
        aod_per_step,
        aoa_per_step,
        within_epoch_steps: aod.len(),
        within_epoch_aod: mean_finite(&aod).unwrap_or(f64::NAN),
        within_epoch_aoa: mean_finite(&aoa).unwrap_or(f64::NAN),
    }
}

fn detection_stats(runs: &[&RunOutput], deadline: usize) -> DetectionStats {
    let mut d = DetectionStats {
        deadline,
        boundaries: 0,
        timely: 0,
        liveness: f64::NAN,
        triggers: 0,
        quiet_steps: 0,
        false_alarms: 0,
        false_alarm_rate: f64::NAN,
        gain_fallbacks: 0,
    };
    for r in runs {
        let recs = &r.records;
        let mut near_boundary = vec![false; recs.len()];
        for k in 1..recs.len() {
            if recs[k].epoch_id == recs[k - 1].epoch_id {
                continue;
            }
            d.boundaries += 1;
            let end = (k + deadline).min(recs.len() - 1);
            near_boundary[k..=end].iter_mut().for_each(|b| *b = true);
            if recs[k..=end].iter().any(|s| s.reacquired) {
                d.timely += 1;
            }
        }
        for (s, near) in recs.iter().zip(&near_boundary) {
            d.triggers += s.triggered as usize;
            d.gain_fallbacks += s.gain_fallback as usize;
            if !near && s.nis.is_finite() {
                d.quiet_steps += 1;
                d.false_alarms += s.triggered as usize;
            }
        }
    }
    if d.boundaries > 0 {
        d.liveness = d.timely as f64 / d.boundaries as f64;
    }
    if d.quiet_steps > 0 {
        d.false_alarm_rate = d.false_alarms as f64 / d.quiet_steps as f64;
    }
    d
}

const FIXED_COLUMNS: [&str; 30] = [
    "run", "seed", "mode", "step", "t", "epoch_id", "num_paths", "true_x", "true_y", "true_gamma",
    "coarse_x", "coarse_y", "coarse_gamma", "coarse_cost", "coarse_status", "kf_x", "kf_y",
    "kf_gamma", "kf_nees", "est_x", "est_y", "est_gamma", "pos_error", "gamma_error", "nis",
    "threshold", "triggered", "reacquired", "gain_fallback", "within_epoch",
];
const PATH_COLUMNS: [&str; 4] = ["aod_est", "aoa_est", "aod_sq_err", "aoa_sq_err"];

fn status_str(s: PoseStatus) -> &'static str {
    match s {
        PoseStatus::Converged => "converged",
        PoseStatus::MaxIter => "max_iter",
        PoseStatus::Degenerate => "degenerate",
    }
}

fn parse_status(s: &str) -> Result<PoseStatus> {
    match s {
        "converged" => Ok(PoseStatus::Converged),
        "max_iter" => Ok(PoseStatus::MaxIter),
        "degenerate" => Ok(PoseStatus::Degenerate),
        other => Err(Error::MalformedTrace(format!("unknown pose status '{other}'"))),
    }
}

/// Writes a trace with a header row. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_trace<W: Write>(records: &[StepRecord], out: W) -> Result<()> {
    let l_max = records.first().map_or(0, |r| r.max_paths());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for l in 0..l_max {
        header.extend(PATH_COLUMNS.iter().map(|c| format!("{c}_{l}")));
    }
    w.write_record(&header)?;
    for r in records {
        if r.max_paths() != l_max {
            return Err(Error::DimensionMismatch {
                context: "trace path columns",
                expected: l_max,
                found: r.max_paths(),
            });
        }
        let b = |v: bool| if v { "1" } else { "0" }.to_string();
        let mut row = vec![
            r.run.to_string(),
            r.seed.to_string(),
            r.mode.as_str().to_string(),
            r.step.to_string(),
            r.t.to_string(),
            r.epoch_id.to_string(),
            r.num_paths.to_string(),
            r.true_x.to_string(),
            r.true_y.to_string(),
            r.true_gamma.to_string(),
            r.coarse_x.to_string(),
            r.coarse_y.to_string(),
            r.coarse_gamma.to_string(),
            r.coarse_cost.to_string(),
            status_str(r.coarse_status).to_string(),
            r.kf_x.to_string(),
            r.kf_y.to_string(),
            r.kf_gamma.to_string(),
            r.kf_nees.to_string(),
            r.est_x.to_string(),
            r.est_y.to_string(),
            r.est_gamma.to_string(),
            r.pos_error.to_string(),
            r.gamma_error.to_string(),
            r.nis.to_string(),
            r.threshold.to_string(),
            b(r.triggered),
            b(r.reacquired),
            b(r.gain_fallback),
            b(r.within_epoch),
        ];
        for l in 0..l_max {
            row.push(r.aod_est[l].to_string());
            row.push(r.aoa_est[l].to_string());
            row.push(r.aod_sq_err[l].to_string());
            row.push(r.aoa_sq_err[l].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]. An empty trace is an error.
pub fn read_trace<R: Read>(input: R, origin: &str) -> Result<Vec<StepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| Error::MalformedTrace(format!("{origin}: {e}")))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::NoRecords(origin.to_string()));
    }
    let names: Vec<&str> = header.iter().collect();
    if names.len() < FIXED_COLUMNS.len() || names[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(Error::MalformedTrace(format!("{origin}: unexpected header")));
    }
    let extra = names.len() - FIXED_COLUMNS.len();
    if !extra.is_multiple_of(PATH_COLUMNS.len()) {
        return Err(Error::MalformedTrace(format!("{origin}: ragged per-path columns")));
    }
    let l_max = extra / PATH_COLUMNS.len();
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let ctx = |col: &str| format!("{origin}: row {} column {col}", line + 2);
        let f = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|_| Error::MalformedTrace(ctx(names[i])))
        };
        let u = |i: usize| -> Result<u64> {
            row[i].parse::<u64>().map_err(|_| Error::MalformedTrace(ctx(names[i])))
        };
        let flag = |i: usize| -> Result<bool> {
            match &row[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(Error::MalformedTrace(ctx(names[i]))),
            }
        };
        let per_path = |k: usize| -> Result<Vec<f64>> {
            (0..l_max).map(|l| f(FIXED_COLUMNS.len() + l * PATH_COLUMNS.len() + k)).collect()
        };
        out.push(StepRecord {
            run: u(0)? as usize,
            seed: u(1)?,
            mode: row[2].parse().map_err(|_| Error::MalformedTrace(ctx("mode")))?,
            step: u(3)? as usize,
            t: f(4)?,
            epoch_id: u(5)? as usize,
            num_paths: u(6)? as usize,
            true_x: f(7)?,
            true_y: f(8)?,
            true_gamma: f(9)?,
            coarse_x: f(10)?,
            coarse_y: f(11)?,
            coarse_gamma: f(12)?,
            coarse_cost: f(13)?,
            coarse_status: parse_status(&row[14])?,
            kf_x: f(15)?,
            kf_y: f(16)?,
            kf_gamma: f(17)?,
            kf_nees: f(18)?,
            est_x: f(19)?,
            est_y: f(20)?,
            est_gamma: f(21)?,
            pos_error: f(22)?,
            gamma_error: f(23)?,
            nis: f(24)?,
            threshold: f(25)?,
            triggered: flag(26)?,
            reacquired: flag(27)?,
            gain_fallback: flag(28)?,
            within_epoch: flag(29)?,
            aod_est: per_path(0)?,
            aoa_est: per_path(1)?,
            aod_sq_err: per_path(2)?,
            aoa_sq_err: per_path(3)?,
        });
    }
    if out.is_empty() {
        return Err(Error::NoRecords(origin.to_string()));
    }
    Ok(out)
}

pub fn trace_file_name(mode: Mode, run: usize) -> String {
    format!("{}_run{run:03}.csv", mode.as_str())
}

/// Writes one trace per run into `dir`, creating it if needed.
pub fn write_traces(runs: &[RunOutput], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    runs.iter()
        .map(|r| {
            let path = dir.join(trace_file_name(r.mode, r.run));
            write_trace(&r.records, fs::File::create(&path)?)?;
            Ok(path)
        })
        .collect()
}

/// Loads every `*.csv` trace under `path` (a directory) or the single file `path`.
pub fn load_traces(path: &Path) -> Result<Vec<RunOutput>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::NoRecords(format!("{}: no trace files", path.display())));
    }
    let mut runs: BTreeMap<(Mode, usize, u64), Vec<StepRecord>> = BTreeMap::new();
    for file in files {
        let records = read_trace(fs::File::open(&file)?, &file.display().to_string())?;
        for r in records {
            runs.entry((r.mode, r.run, r.seed)).or_default().push(r);
        }
    }
    Ok(runs
        .into_iter()
        .map(|((mode, run, seed), mut records)| {
            records.sort_by_key(|r| r.step);
            RunOutput { run, seed, mode, records }
        })
        .collect())
}
