//! Trajectory CSVs and atomic file output.
//!
//! Floats go out with 17 significant digits, which is enough for any `f64`
//! to parse back to the same bits. The final row of a trajectory carries no
//! input (there is one fewer control than states), so its input columns are
//! left empty.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use spoofplan::dynamics::{RobotState, Trajectory, UnicycleState, WheelInput};
use spoofplan::{DiTrajectory, UnicycleTrajectory, Vec2};

use crate::CliError;

pub const DI_HEADER: [&str; 7] = ["t", "x1", "x2", "x3", "x4", "u1", "u2"];
pub const UNICYCLE_HEADER: [&str; 6] = ["t", "px", "py", "theta", "nu", "omega"];

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

/// Generic numeric table.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|x| fmt(*x)))?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

fn trajectory_csv<S: Clone, C: Clone>(
    traj: &Trajectory<S, C>,
    header: &[&str],
    state: impl Fn(&S) -> Vec<f64>,
    input: impl Fn(&C) -> Vec<f64>,
    input_width: usize,
) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for (k, s) in traj.states.iter().enumerate() {
        let mut rec = vec![fmt(traj.time(k))];
        rec.extend(state(s).into_iter().map(fmt));
        match traj.controls.get(k) {
            Some(c) => rec.extend(input(c).into_iter().map(fmt)),
            None => rec.extend(std::iter::repeat_n(String::new(), input_width)),
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn di_csv(traj: &DiTrajectory) -> anyhow::Result<Vec<u8>> {
    trajectory_csv(traj, &DI_HEADER, |s| s.to_array().to_vec(), |u| vec![u.x, u.y], 2)
}

pub fn unicycle_csv(traj: &UnicycleTrajectory) -> anyhow::Result<Vec<u8>> {
    trajectory_csv(traj, &UNICYCLE_HEADER, |s| vec![s.p.x, s.p.y, s.theta], |w| vec![w.nu, w.omega], 2)
}

struct Rows {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
}

fn schema(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("trajectory CSV: {msg}"))
}

fn read_rows(text: &str, header: &[&str], state_width: usize) -> Result<Rows, CliError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got = r.headers().map_err(schema)?.clone();
    if got.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(schema(format!("expected header `{}`, found `{}`", header.join(","), got.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Rows { times: Vec::new(), states: Vec::new(), inputs: Vec::new() };
    let mut open = true;
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(schema)?;
        if rec.len() != header.len() {
            return Err(schema(format!("line {line}: {} fields, expected {}", rec.len(), header.len())));
        }
        if !open {
            return Err(schema(format!("line {line}: rows after the final (input-free) row")));
        }
        let num = |j: usize| -> Result<f64, CliError> {
            rec[j].trim().parse::<f64>().map_err(|_| schema(format!("line {line}, column `{}`: not a number: `{}`", header[j], &rec[j])))
        };
        rows.times.push(num(0)?);
        rows.states.push((1..=state_width).map(num).collect::<Result<_, _>>()?);
        let cols = state_width + 1..header.len();
        if cols.clone().all(|j| rec[j].trim().is_empty()) {
            open = false;
        } else {
            rows.inputs.push(cols.map(num).collect::<Result<_, _>>()?);
        }
    }
    if rows.times.len() < 2 {
        return Err(schema("need at least two rows"));
    }
    if open {
        // No input-free terminal row: treat the last row as the final state.
        rows.inputs.pop();
    }
    Ok(rows)
}

/// Recovers `(t0, dt)` from the time column. Prefers a step that
/// regenerates every time stamp exactly; otherwise accepts a uniform grid up
/// to rounding.
fn grid(times: &[f64]) -> Result<(f64, f64), CliError> {
    let t0 = times[0];
    let n = (times.len() - 1) as f64;
    let span = times[times.len() - 1] - t0;
    let mean = span / n;
    if !(mean > 0.0) {
        return Err(schema("time column must increase"));
    }
    let mut candidates = vec![mean, times[1] - t0];
    let mut up = mean;
    let mut down = mean;
    for _ in 0..4 {
        up = f64::from_bits(up.to_bits() + 1);
        down = f64::from_bits(down.to_bits() - 1);
        candidates.extend([up, down]);
    }
    for dt in &candidates {
        if times.iter().enumerate().all(|(k, t)| t0 + k as f64 * dt == *t) {
            return Ok((t0, *dt));
        }
    }
    let slack = 1e-9 * (span.abs() + t0.abs()).max(1.0);
    if let Some((k, t)) = times.iter().enumerate().find(|(k, t)| (t0 + *k as f64 * mean - **t).abs() > slack) {
        return Err(schema(format!("non-uniform time grid at row {} (t = {t})", k + 1)));
    }
    Ok((t0, mean))
}

pub fn parse_di(text: &str) -> Result<DiTrajectory, CliError> {
    let rows = read_rows(text, &DI_HEADER, 4)?;
    let (t0, dt) = grid(&rows.times)?;
    let states = rows.states.iter().map(|s| RobotState::from_array([s[0], s[1], s[2], s[3]])).collect();
    let controls = rows.inputs.iter().map(|u| Vec2::new(u[0], u[1])).collect();
    Trajectory::new(t0, dt, states, controls).map_err(schema)
}

pub fn parse_unicycle(text: &str) -> Result<UnicycleTrajectory, CliError> {
    let rows = read_rows(text, &UNICYCLE_HEADER, 3)?;
    let (t0, dt) = grid(&rows.times)?;
    let states = rows.states.iter().map(|s| UnicycleState::new(Vec2::new(s[0], s[1]), s[2])).collect();
    let controls = rows.inputs.iter().map(|u| WheelInput::new(u[0], u[1])).collect();
    Trajectory::new(t0, dt, states, controls).map_err(schema)
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
