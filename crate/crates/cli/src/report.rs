//! Running one resolved configuration and rendering the outcome.

use std::io::Write;

use cavent::measures::fidelity;
use cavent::models::ValidityReport;
use cavent::protocols::{run, run_bell_noisy, IntegratorStats, Timings};
use cavent::SystemDims;
use serde::Serialize;

use crate::config::{Basis, Resolved};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRow {
    pub outcome: String,
    pub probability: f64,
    pub target_fidelity: Option<f64>,
    /// True for an outcome too improbable to carry a state.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub engine: String,
    pub agreement_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisySummary {
    pub kappa_a: f64,
    pub kappa_b: f64,
    pub gamma_atom: f64,
    pub dims: SystemDims,
    pub fidelity: f64,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
    pub steps: usize,
}

/// Everything reported for one run, independent of output format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub protocol: String,
    pub engine: String,
    pub params: cavent::ProtocolParams,
    pub dims: SystemDims,
    pub timings: Timings,
    /// Joint fidelity (entangled coherent) or field fidelity (Bell) with
    /// the protocol target, before measurement.
    pub target_fidelity: f64,
    pub atom_purity: f64,
    pub concurrence: Option<f64>,
    pub branches: Vec<BranchRow>,
    pub validity: ValidityReport,
    pub leakage: f64,
    pub integrator: Vec<IntegratorStats>,
    pub comparison: Option<Comparison>,
    pub noise: Option<NoisySummary>,
}

pub fn execute(r: &Resolved) -> Result<Record, CliError> {
    let result = run(r.kind, &r.params, &r.settings, r.measure_basis())?;
    let comparison = match r.compare {
        Some(engine) => {
            let mut settings = r.settings;
            settings.engine = engine;
            let other = run(r.kind, &r.params, &settings, None)?;
            Some(Comparison {
                engine: engine.name().to_string(),
                agreement_fidelity: fidelity(&result.final_joint_state, &other.final_joint_state)?,
            })
        }
        None => None,
    };
    let noise = match r.noise {
        Some((noise, dims, steps)) => {
            let n = run_bell_noisy(r.kind, &r.params, dims, &noise, steps)?;
            Some(NoisySummary {
                kappa_a: noise.kappa_a,
                kappa_b: noise.kappa_b,
                gamma_atom: noise.gamma_atom,
                dims,
                fidelity: n.fidelity,
                max_trace_drift: n.max_trace_drift,
                min_eigenvalue: n.min_eigenvalue,
                steps: n.steps,
            })
        }
        None => None,
    };
    let branches = if r.basis == Basis::None {
        Vec::new()
    } else {
        result
            .branches
            .iter()
            .map(|b| BranchRow {
                outcome: b.outcome.name().to_string(),
                probability: b.probability,
                target_fidelity: b.target_fidelity,
                empty: b.field.is_none(),
            })
            .collect()
    };
    Ok(Record {
        protocol: r.kind.name().to_string(),
        engine: r.settings.engine.name().to_string(),
        params: r.params,
        dims: r.settings.dims,
        timings: result.timings,
        target_fidelity: result.target_fidelity,
        atom_purity: result.atom_purity,
        concurrence: result.concurrence,
        branches,
        validity: result.validity,
        leakage: result.leakage,
        integrator: result.integrator,
        comparison,
        noise,
    })
}

impl Record {
    /// Rows for tabular output; an unmeasured run gives a single row
    /// carrying the pre-measurement target fidelity.
    pub fn rows(&self) -> Vec<BranchRow> {
        if self.branches.is_empty() {
            vec![BranchRow {
                outcome: "unmeasured".into(),
                probability: 1.0,
                target_fidelity: Some(self.target_fidelity),
                empty: false,
            }]
        } else {
            self.branches.clone()
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulateJson<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub unit_conversions: &'a [String],
    pub seed: Option<u64>,
    pub wall_clock_seconds: f64,
    #[serde(flatten)]
    pub record: &'a Record,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

pub const SIMULATE_HEADERS: [&str; 10] = [
    "protocol",
    "engine",
    "branch",
    "probability",
    "target_fidelity",
    "leakage",
    "t_a",
    "t_b",
    "total_time",
    "agreement_fidelity",
];

pub fn write_simulate_csv<W: Write>(out: W, record: &Record) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIMULATE_HEADERS)?;
    for row in record.rows() {
        w.write_record([
            record.protocol.clone(),
            record.engine.clone(),
            row.outcome.clone(),
            format!("{:.12e}", row.probability),
            opt(row.target_fidelity),
            format!("{:.6e}", record.leakage),
            format!("{:.12e}", record.timings.t_a),
            format!("{:.12e}", record.timings.t_b),
            format!("{:.12e}", record.timings.total),
            opt(record.comparison.as_ref().map(|c| c.agreement_fidelity)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep table: axis values, then the fixed columns below.
pub const SWEEP_HEADERS: [&str; 7] = [
    "branch",
    "probability",
    "target_fidelity",
    "leakage",
    "total_time",
    "agreement_fidelity",
    "noisy_fidelity",
];

pub fn write_sweep_csv<W: Write>(
    out: W,
    axes: &[String],
    points: &[(Vec<f64>, Record)],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = axes.iter().map(String::as_str).chain(SWEEP_HEADERS).collect();
    w.write_record(&header)?;
    for (values, record) in points {
        for row in record.rows() {
            let mut cells: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
            cells.extend([
                row.outcome.clone(),
                format!("{:.12e}", row.probability),
                opt(row.target_fidelity),
                format!("{:.6e}", record.leakage),
                format!("{:.12e}", record.timings.total),
                opt(record.comparison.as_ref().map(|c| c.agreement_fidelity)),
                opt(record.noise.as_ref().map(|n| n.fidelity)),
            ]);
            w.write_record(&cells)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SweepPoint<'a> {
    pub axes: Vec<(&'a str, f64)>,
    #[serde(flatten)]
    pub record: &'a Record,
}

#[derive(Debug, Serialize)]
pub struct SweepJson<'a> {
    pub schema_version: u32,
    pub command: &'static str,
    pub unit_conversions: &'a [String],
    pub seed: Option<u64>,
    pub points: Vec<SweepPoint<'a>>,
}
