//! CSV and JSON writers for every computed artifact.
//!
//! CSV dialect: comma separated, header row, LF line endings, floats in
//! scientific notation with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::adjoint::{AdjointSolution, PhaseResponseCurve};
use crate::bifurcation::{EquilibriumBranch, Skeleton};
use crate::direct::{DirectSweep, PerturbationResult};
use crate::integrate::Trajectory;
use crate::isochron::Isochron;
use crate::orbit::{BurstOrbit, PeriodicOrbit, SpikeTemplate};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Scientific notation with 17 significant digits; lossless for f64.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// An in-memory CSV table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt_num(x)).collect());
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<(), ExportError> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ExportError> {
        self.to_writer(BufWriter::new(File::create(path)?))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<(), ExportError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn state_header(first: &[&str], names: &[&str]) -> Vec<String> {
    first.iter().chain(names).map(|s| s.to_string()).collect()
}

/// Every accepted step endpoint of a trajectory.
pub fn trajectory_table<const N: usize>(traj: &Trajectory<N>, names: &[&str; N]) -> Table {
    let mut t = Table::new(&state_header(&["t"], names));
    let mut push = |time: f64, y: &[f64; N]| {
        let mut row = vec![time];
        row.extend_from_slice(y);
        t.push_nums(&row);
    };
    push(traj.t_start(), &traj.y_start());
    if traj.steps().is_empty() {
        push(traj.t_end(), &traj.y_end());
    }
    for s in traj.steps() {
        push(s.t1, &s.y1);
    }
    t
}

pub fn events_table<const N: usize>(traj: &Trajectory<N>, names: &[&str; N]) -> Table {
    let mut t = Table::new(&state_header(&["event_id", "t"], names));
    for e in traj.events() {
        let mut row = vec![e.id.clone(), fmt_num(e.t)];
        row.extend(e.state.iter().map(|&x| fmt_num(x)));
        t.push(row);
    }
    t
}

/// Orbit sample table: phase, time, state.
pub fn orbit_table<const N: usize>(orbit: &PeriodicOrbit<N>, names: &[&str; N]) -> Table {
    let mut t = Table::new(&state_header(&["theta", "t"], names));
    for s in &orbit.samples {
        let mut row = vec![s.theta, s.theta * orbit.period];
        row.extend_from_slice(&s.state);
        t.push_nums(&row);
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitSummary {
    pub period: f64,
    pub spike_count: usize,
    pub spike_phases: Vec<f64>,
    pub vmin_phases: Vec<f64>,
    pub hmin_phase: Option<f64>,
    pub hmax_phase: Option<f64>,
    pub h_range: (f64, f64),
    pub anchor: Vec<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
}

impl OrbitSummary {
    pub fn of(orbit: &BurstOrbit) -> Self {
        Self {
            period: orbit.period,
            spike_count: orbit.spike_count(),
            spike_phases: orbit.markers.spike_phases.clone(),
            vmin_phases: orbit.markers.vmin_phases.clone(),
            hmin_phase: orbit.markers.hmin_phase,
            hmax_phase: orbit.markers.hmax_phase,
            h_range: orbit.component_range(2),
            anchor: orbit.anchor.to_vec(),
            residual: orbit.residual,
            newton_iterations: orbit.newton_iterations,
        }
    }
}

pub fn template_table(tpl: &SpikeTemplate) -> Table {
    let mut t = Table::new(&["t", "V"]);
    for (time, v) in tpl.times().zip(&tpl.voltage) {
        t.push_nums(&[time, *v]);
    }
    t
}

pub fn equilibrium_table(branches: &[EquilibriumBranch]) -> Table {
    let mut t = Table::new(&["h", "V", "n", "stability", "branch_id"]);
    for b in branches {
        for s in &b.samples {
            t.push(vec![
                fmt_num(s.h),
                fmt_num(s.v),
                fmt_num(s.n),
                b.stability.as_str().into(),
                b.id.to_string(),
            ]);
        }
    }
    t
}

/// Quiescent-branch, saddle and spiking-cycle tables of a skeleton.
pub fn skeleton_tables(sk: &Skeleton) -> [(&'static str, Table); 3] {
    let mut q = Table::new(&["h", "V", "n"]);
    for s in &sk.quiescent {
        q.push_nums(&[s.h, s.v, s.n]);
    }
    let mut sd = Table::new(&["h", "V", "n", "lambda_unstable", "lambda_stable"]);
    for s in &sk.saddles {
        sd.push_nums(&[s.h, s.v, s.n, s.lambda_unstable, s.lambda_stable]);
    }
    let mut c = Table::new(&["h", "V", "n"]);
    for (h, ring) in &sk.cycles {
        for x in ring {
            c.push_nums(&[*h, x[0], x[1]]);
        }
    }
    [
        ("skeleton_quiescent", q),
        ("skeleton_saddle", sd),
        ("skeleton_cycles", c),
    ]
}

pub fn prc_table(prc: &PhaseResponseCurve) -> Table {
    let mut t = Table::new(&["theta", "dtheta"]);
    for (th, d) in prc.theta.iter().zip(&prc.dtheta) {
        t.push_nums(&[*th, *d]);
    }
    t
}

pub fn adjoint_table(sol: &AdjointSolution) -> Table {
    let mut t = Table::new(&["theta", "Z_V", "Z_n", "Z_h"]);
    for (th, z) in sol.theta.iter().zip(&sol.z) {
        t.push_nums(&[*th, z[0], z[1], z[2]]);
    }
    t
}

/// One row per perturbation phase; failed points carry NaN shifts and their
/// error code as status.
pub fn sweep_table(sweep: &DirectSweep) -> Table {
    let n = sweep.n_orders;
    let mut header: Vec<String> = vec!["theta".into()];
    header.extend((1..=n).map(|k| format!("dtheta_{k}")));
    header.extend((0..=n).map(|k| format!("spikes_{k}")));
    header.extend(["classification".into(), "status".into()]);
    let mut t = Table::new(&header);
    for p in &sweep.points {
        let mut row = vec![fmt_num(p.theta)];
        match &p.result {
            Ok(r) => {
                row.extend((0..n).map(|k| fmt_num(r.dtheta.get(k).copied().unwrap_or(f64::NAN))));
                row.extend((0..=n).map(|k| r.spike_counts.get(k).map_or(String::new(), |c| c.to_string())));
                row.extend([r.classification.as_str().into(), "ok".into()]);
            }
            Err(e) => {
                row.extend((0..n).map(|_| fmt_num(f64::NAN)));
                row.extend((0..=n).map(|_| String::new()));
                let class = if matches!(e, crate::direct::DirectError::Silenced { .. }) {
                    "silenced"
                } else {
                    ""
                };
                row.extend([class.into(), e.code().into()]);
            }
        }
        t.push(row);
    }
    t
}

/// Perturbed trajectory labelled by segment: unperturbed lead-in, injection
/// window, free evolution afterwards.
pub fn perturbation_table(orbit: &BurstOrbit, result: &PerturbationResult) -> Table {
    let mut t = Table::new(&["segment", "t", "V", "n", "h", "s"]);
    let mut push = |seg: &str, time: f64, y: &[f64]| {
        let mut row = vec![seg.to_string(), fmt_num(time)];
        row.extend(y.iter().map(|&x| fmt_num(x)));
        row.resize(6, fmt_num(0.0));
        t.push(row);
    };
    for s in orbit.samples.iter().filter(|s| s.theta * orbit.period < result.onset) {
        push("pre", s.theta * orbit.period, &s.state);
    }
    for (label, tr) in [("during", &result.window), ("post", &result.post)] {
        if let Some(tr) = tr {
            push(label, tr.t_start(), &tr.y_start());
            for s in tr.steps() {
                push(label, s.t1, &s.y1);
            }
        }
    }
    t
}

pub fn isochron_table(iso: &Isochron) -> Table {
    let mut t = Table::new(&["phase", "branch", "V", "n", "backward_time"]);
    for p in iso.inner.iter().chain(&iso.outer) {
        t.push(vec![
            fmt_num(iso.theta),
            p.branch.as_str().into(),
            fmt_num(p.v),
            fmt_num(p.n),
            fmt_num(p.backward_time),
        ]);
    }
    t
}

pub fn plane_table(points: &[[f64; 2]]) -> Table {
    let mut t = Table::new(&["V", "n"]);
    for p in points {
        t.push_nums(p);
    }
    t
}
