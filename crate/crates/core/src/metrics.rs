//! Per-iteration metrics CSV.

use std::io::{self, Write};

use crate::trajectory::{PhaseTimings, Trajectory};

pub const METRICS_HEADER: &str =
    "iter,loss,batch_loss,Q_max,Q_mean,K,t_query_ns,t_forward_ns,t_delta_ns,t_update_ns,divergence";

/// One CSV row. Empty cells are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub loss: Option<f64>,
    pub batch_loss: Option<f64>,
    pub q_max: Option<usize>,
    pub q_mean: Option<f64>,
    pub k: Option<usize>,
    pub timings: Option<PhaseTimings>,
    pub divergence: Option<f64>,
}

/// Row 0 carries the initial loss; row `t` the step-`t` record and, on
/// evaluation iterations, the full loss after the step.
///
/// `divergence[t]`, when given, fills the last column of row `t`.
pub fn rows_from_trajectory(traj: &Trajectory, divergence: Option<&[f64]>) -> Vec<MetricsRow> {
    let div = |t: usize| divergence.and_then(|d| d.get(t).copied());
    let mut rows = vec![MetricsRow {
        iter: 0,
        loss: traj.loss_at(0),
        divergence: div(0),
        ..Default::default()
    }];
    for s in &traj.steps {
        rows.push(MetricsRow {
            iter: s.t,
            loss: traj.loss_at(s.t),
            batch_loss: Some(s.batch_loss),
            q_max: Some(s.q_max()),
            q_mean: Some(s.q_mean()),
            k: Some(s.changed),
            timings: Some(s.timings),
            divergence: div(s.t),
        });
    }
    rows
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn real_cell(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

/// Shortest round-trip form; exponent notation for very small or large
/// magnitudes so columns stay readable.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let t = self.timings;
        [
            self.iter.to_string(),
            real_cell(self.loss),
            real_cell(self.batch_loss),
            cell(self.q_max),
            real_cell(self.q_mean),
            cell(self.k),
            cell(t.map(|t| t.query_ns)),
            cell(t.map(|t| t.forward_ns)),
            cell(t.map(|t| t.delta_ns)),
            cell(t.map(|t| t.update_ns)),
            real_cell(self.divergence),
        ]
        .join(",")
    }
}

pub fn write_csv<W: Write>(mut out: W, rows: &[MetricsRow]) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::StepRecord;

    #[test]
    fn empty_run_has_only_init_row() {
        let traj = Trajectory {
            evals: vec![(0, 2.5)],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows_from_trajectory(&traj, None)).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{METRICS_HEADER}\n0,2.5,,,,,,,,,\n"));
    }

    #[test]
    fn loss_only_on_evaluation_rows() {
        let step = |t| StepRecord {
            t,
            batch: vec![0, 1],
            u_batch: vec![0.0, 0.0],
            batch_loss: 1.0,
            fire_counts: vec![3, 1],
            changed: 4,
            timings: PhaseTimings::default(),
            grad_ratio: None,
        };
        let traj = Trajectory {
            steps: vec![step(1), step(2)],
            evals: vec![(0, 3.0), (2, 1.5)],
            ..Default::default()
        };
        let rows = rows_from_trajectory(&traj, Some(&[0.0, 1e-12, 2e-12]));
        assert_eq!(rows[1].to_csv(), "1,,1,3,2,4,0,0,0,0,1e-12");
        assert_eq!(rows[2].loss, Some(1.5));
        assert_eq!(rows[2].divergence, Some(2e-12));
    }
}
