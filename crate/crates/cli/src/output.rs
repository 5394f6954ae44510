//! CSV and JSON emission. Files are written to a temporary file in the target
//! directory and renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use fsmpc_core::mpc::ClosedLoopResult;
use serde::Serialize;

use crate::CliError;

/// Shortest representation that parses back to the same double; independent
/// of locale.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn trajectory_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    cols.extend((1..=m).map(|j| format!("u_{j}")));
    cols.extend(["V", "solve_status", "contraction_residual", "solve_iterations"].map(String::from));
    cols.join(",")
}

/// Row cells after `t` for one run at time `t`. Steps without a solve (inputs
/// committed earlier by a multi-step plan) report `open_loop`; the final row
/// has no applied input.
fn row_cells(r: &ClosedLoopResult, t: usize, m: usize) -> Vec<String> {
    let mut cells: Vec<String> = r.trajectory.states[t].iter().map(|v| fmt_f64(*v)).collect();
    match r.trajectory.inputs.get(t) {
        Some(u) => cells.extend(u.iter().map(|v| fmt_f64(*v))),
        None => cells.extend(std::iter::repeat_n(String::new(), m)),
    }
    cells.push(fmt_f64(r.v_values[t]));
    match r.solve_at(t) {
        Some(s) => {
            cells.push(s.status.as_str().to_string());
            cells.push(fmt_f64(s.contraction_residual));
            cells.push((s.outer_iterations + s.inner_iterations).to_string());
        }
        None if t < r.trajectory.inputs.len() => {
            cells.extend(["open_loop".to_string(), String::new(), "0".to_string()]);
        }
        None => cells.extend([String::new(), String::new(), String::new()]),
    }
    cells
}

/// One row per time step `t = 0..=T`.
pub fn trajectory_csv(r: &ClosedLoopResult) -> String {
    let n = r.trajectory.states[0].len();
    let m = r.applied_inputs.input_dim();
    let mut out = trajectory_header(n, m);
    out.push('\n');
    for t in 0..r.trajectory.states.len() {
        let _ = writeln!(out, "{},{}", t, row_cells(r, t, m).join(","));
    }
    out
}

/// Runs side by side, columns prefixed with `label.`.
pub fn aligned_csv(runs: &[(String, &ClosedLoopResult)]) -> String {
    let mut out = String::from("t");
    for (label, r) in runs {
        let n = r.trajectory.states[0].len();
        let m = r.applied_inputs.input_dim();
        for col in trajectory_header(n, m).split(',').skip(1) {
            let _ = write!(out, ",{label}.{col}");
        }
    }
    out.push('\n');
    let len = runs.iter().map(|(_, r)| r.trajectory.states.len()).max().unwrap_or(0);
    for t in 0..len {
        out.push_str(&t.to_string());
        for (_, r) in runs {
            out.push(',');
            out.push_str(&row_cells(r, t, r.applied_inputs.input_dim()).join(","));
        }
        out.push('\n');
    }
    out
}
