//! Solver state and the per-iteration records written to CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Point;

/// Column order of the trace CSV. Downstream plotting reads this contract.
pub const CSV_HEADER: &str = "iter,fevals,alpha,grad_norm,min_grad_norm_sq,gap,dist,wall_ms";

/// Solver state between iterations.
///
/// The meaning of the secondary fields depends on the method:
///
/// * `z` is always the reported iterate and `f_curr` is `F(z)` whenever the
///   method evaluates `F` there.
/// * GRAAL family: `z_bar` is the most recent anchor `z̄^{k-1}`.
/// * Popov: `z_bar` is the base sequence that the leading point `z` is
///   extrapolated from.
/// * FoRB / PRG / shadow-DR: `z_prev` and `f_prev` hold the previous iterate
///   and its operator value.
#[derive(Clone, Debug, PartialEq)]
pub struct IterState {
    pub k: usize,
    pub z: Point,
    pub z_bar: Point,
    pub z_prev: Point,
    pub f_curr: Point,
    pub f_prev: Point,
    pub alpha_k: f64,
    pub alpha_prev: f64,
    pub theta_k: f64,
    pub fevals: u64,
}

impl IterState {
    /// State at `k = 0` with the convention `z^{-1} = z̄^{-1} = z^0`.
    pub fn initial(z0: Point, f0: Point, alpha: f64, theta: f64) -> Self {
        IterState {
            k: 0,
            z_bar: z0.clone(),
            z_prev: z0.clone(),
            z: z0,
            f_prev: f0.clone(),
            f_curr: f0,
            alpha_k: alpha,
            alpha_prev: alpha,
            theta_k: theta,
            fevals: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub fevals: u64,
    pub alpha: f64,
    pub grad_norm: f64,
    pub min_grad_norm_sq: f64,
    pub gap: Option<f64>,
    pub dist: Option<f64>,
    pub wall_ms: f64,
    /// False when the reported iterate lies outside `C` (possible for FBF
    /// and shadow-DR, whose correction step follows the projection).
    pub feasible: bool,
}

impl TraceRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.fevals,
            fmt_f64(self.alpha),
            fmt_f64(self.grad_norm),
            fmt_f64(self.min_grad_norm_sq),
            opt(self.gap),
            opt(self.dist),
            fmt_f64(self.wall_ms),
        )
    }
}

/// Shortest decimal string that parses back to the same `f64`.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    GradTol,
    Diverged,
    NonFinite,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub problem: String,
    pub algorithm: String,
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
    pub final_point: Point,
    /// Ergodic average at termination (weighted by steps for aGRAAL).
    pub average: Option<Point>,
    pub alphas: Vec<f64>,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn min_grad_norm_sq(&self) -> f64 {
        self.rows.last().map_or(f64::INFINITY, |r| r.min_grad_norm_sq)
    }

    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iter)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(w, "{}", row.to_csv_line())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Same rows with the wall-clock column blanked, for determinism checks.
    pub fn csv_without_wall(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let line = row.to_csv_line();
            let cut = line.rfind(',').map_or(line.len(), |i| i + 1);
            out.push_str(&line[..cut]);
            out.push('\n');
        }
        out
    }
}

/// Parses a trace CSV back into rows (the feasibility flag is not stored and
/// reads back as `true`).
pub fn read_csv(text: &str) -> Result<Vec<TraceRow>> {
    use crate::error::VIError;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(VIError::Parse(format!("unexpected trace header {other:?}")));
        }
    }
    let num =
        |s: &str, col: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| VIError::Parse(format!("{col}: {e}"))) };
    let opt = |s: &str, col: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, col).map(Some)
        }
    };
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(VIError::Parse(format!("expected 8 fields, got {}", f.len())));
        }
        rows.push(TraceRow {
            iter: f[0].parse().map_err(|e| VIError::Parse(format!("iter: {e}")))?,
            fevals: f[1].parse().map_err(|e| VIError::Parse(format!("fevals: {e}")))?,
            alpha: num(f[2], "alpha")?,
            grad_norm: num(f[3], "grad_norm")?,
            min_grad_norm_sq: num(f[4], "min_grad_norm_sq")?,
            gap: opt(f[5], "gap")?,
            dist: opt(f[6], "dist")?,
            wall_ms: num(f[7], "wall_ms")?,
            feasible: true,
        });
    }
    Ok(rows)
}
