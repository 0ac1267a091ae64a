//! Runtime sweep on the double integrator with zero-output residual
//! networks: phase-resolved cycle times and evaluation counts for naive and
//! rtn modes across network sizes.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{embedded, BENCH};
use crate::dynamics::double_integrator::DoubleIntegrator;
use crate::dynamics::residual::{DoubleIntegratorFeatures, ResidualModel, ResidualVariant};
use crate::error::{Error, Result};
use crate::integrator::{rk4_step_model, EvalCounts};
use crate::neural::{Activation, MlpModel};
use crate::sim::median;
use crate::sqp::{Mode, OcpConfig, PhaseTiming, ReferenceWindow, RtiController};
use crate::Vector;

/// Largest command difference accepted as "identical".
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    /// Hidden layer counts.
    pub depths: Vec<usize>,
    /// Hidden layer widths.
    pub widths: Vec<usize>,
    pub modes: Vec<Mode>,
    /// Timed cycles per configuration.
    pub repetitions: usize,
    /// Untimed cycles before timing starts.
    pub warmup: usize,
    /// Also run without any network.
    pub include_baseline: bool,
    /// Cycles slower than this end the configuration, s.
    pub timeout_s: f64,
    pub seed: u64,
    /// Run configurations concurrently. Timings are then unreliable.
    #[serde(default)]
    pub parallel: bool,
}

impl Default for BenchSpec {
    fn default() -> Self {
        embedded(BENCH, "bench.toml")
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 10 {
            return Err(Error::Config(format!("repetitions must be at least 10, got {}", self.repetitions)));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("widths must be a non-empty list of positive integers".into()));
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::Config("depths must be a non-empty list of positive integers".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("at least one mode is required".into()));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::Config("timeout_s must be positive".into()));
        }
        Ok(())
    }
}

/// Tanh network with random hidden layers and an all-zero output layer:
/// full evaluation cost, exactly zero output and Jacobian.
pub fn make_zero_network(depth: usize, width: usize, variant: ResidualVariant, seed: u64) -> Result<MlpModel> {
    if depth == 0 || width == 0 {
        return Err(Error::Config(format!("zero network needs positive depth and width, got {depth}x{width}")));
    }
    let mut sizes = vec![variant.feature_dim()];
    sizes.extend(std::iter::repeat_n(width, depth));
    sizes.push(variant.output_dim());
    let mut net = MlpModel::new(&sizes, Activation::Tanh, variant, seed)?;
    net.zero_output_layer();
    Ok(net)
}

/// Double-integrator residual around a zero network.
pub fn zero_residual(depth: usize, width: usize, seed: u64) -> Result<ResidualModel> {
    let net = make_zero_network(depth, width, ResidualVariant::DiState, seed)?;
    ResidualModel::new(Arc::new(net), Arc::new(DoubleIntegratorFeatures))
}

/// Sinusoidal position reference window starting at `t`.
pub fn sine_reference(t: f64, horizon: usize, dt: f64) -> ReferenceWindow {
    let w = 0.5;
    let at = |k: usize| t + k as f64 * dt;
    ReferenceWindow {
        xs: (0..=horizon)
            .map(|k| Vector::from_column_slice(&[(w * at(k)).sin(), w * (w * at(k)).cos()]))
            .collect(),
        us: (0..horizon).map(|k| Vector::from_element(1, -w * w * (w * at(k)).sin())).collect(),
    }
}

/// Closed-loop run of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigRun {
    pub commands: Vec<f64>,
    pub timing: Vec<PhaseTiming>,
    /// Per-cycle evaluation counts.
    pub counts: Vec<EvalCounts>,
    pub timed_out: bool,
}

/// Fly the double integrator for `cycles` controller calls against the sine
/// reference, stopping early if a cycle exceeds `timeout_s`.
pub fn run_config(
    ocp: &OcpConfig,
    residual: Option<ResidualModel>,
    cycles: usize,
    timeout_s: f64,
) -> Result<ConfigRun> {
    let plant = DoubleIntegrator;
    let mut x = Vector::from_column_slice(&[0.5, 0.0]);
    let start = sine_reference(0.0, ocp.horizon, ocp.dt);
    let mut ctrl = RtiController::new(ocp.clone(), Arc::new(DoubleIntegrator), residual, &x, &start)?;
    let period = ocp.control_period();
    let mut run = ConfigRun {
        commands: Vec::with_capacity(cycles),
        timing: Vec::with_capacity(cycles),
        counts: Vec::with_capacity(cycles),
        timed_out: false,
    };
    let mut scratch = EvalCounts::default();
    for i in 0..cycles {
        let window = sine_reference(i as f64 * period, ocp.horizon, ocp.dt);
        let report = ctrl.rti_cycle(&x, &window)?;
        if let Some(msg) = report.failure {
            return Err(Error::Qp(format!("cycle {i}: {msg}")));
        }
        run.commands.push(report.command[0]);
        run.counts.push(report.counts);
        run.timing.push(report.timing);
        if report.timing.total_ms() > timeout_s * 1e3 {
            run.timed_out = true;
            break;
        }
        x = rk4_step_model(&plant, &x, &report.command, period, &mut scratch)?;
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub depth: usize,
    pub width: usize,
    pub params: usize,
    pub mode: Mode,
    pub timed_cycles: usize,
    pub prep_dd_median_ms: f64,
    pub prep_qp_median_ms: f64,
    pub feedback_median_ms: f64,
    pub total_median_ms: f64,
    pub total_p95_ms: f64,
    pub freq_hz: f64,
    pub net_batches: u64,
    pub net_batch_points: u64,
    pub net_value: u64,
    pub net_jacobian: u64,
    pub max_command_diff: f64,
    pub equivalence_pass: bool,
    pub timed_out: bool,
}

/// Columns that carry wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 6] = [
    "prep_dd_median_ms",
    "prep_qp_median_ms",
    "feedback_median_ms",
    "total_median_ms",
    "total_p95_ms",
    "freq_hz",
];

fn percentile(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = ((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
    s[idx]
}

fn summarize(
    depth: usize,
    width: usize,
    params: usize,
    mode: Mode,
    run: &ConfigRun,
    warmup: usize,
    baseline: &[f64],
) -> SweepRow {
    let timed: &[PhaseTiming] = run.timing.get(warmup..).unwrap_or(&[]);
    let col = |f: fn(&PhaseTiming) -> f64| timed.iter().map(f).collect::<Vec<f64>>();
    let totals = col(PhaseTiming::total_ms);
    let total_median = median(totals.clone());
    let last = run.counts.last().copied().unwrap_or_default();
    let max_diff = run
        .commands
        .iter()
        .zip(baseline)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    SweepRow {
        depth,
        width,
        params,
        mode,
        timed_cycles: timed.len(),
        prep_dd_median_ms: median(col(|t| t.prep_dd_ms)),
        prep_qp_median_ms: median(col(|t| t.prep_qp_ms)),
        feedback_median_ms: median(col(|t| t.feedback_ms)),
        total_median_ms: total_median,
        total_p95_ms: percentile(&totals, 0.95),
        freq_hz: 1e3 / total_median,
        net_batches: last.net_batches,
        net_batch_points: last.net_batch_points,
        net_value: last.net_value,
        net_jacobian: last.net_jacobian,
        max_command_diff: max_diff,
        equivalence_pass: max_diff < EQUIVALENCE_TOLERANCE && run.commands.len() <= baseline.len(),
        timed_out: run.timed_out,
    }
}

/// Run every `(depth, width, mode)` configuration of `spec` on the
/// double-integrator OCP `ocp`. Commands of every configuration are compared
/// against the network-free run.
pub fn run_sweep(spec: &BenchSpec, ocp: &OcpConfig) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cycles = spec.warmup + spec.repetitions;
    let with_mode = |m: Mode| OcpConfig { mode: m, ..ocp.clone() };
    let baseline = run_config(&with_mode(Mode::Rtn), None, cycles, f64::INFINITY)?;

    let mut jobs: Vec<(usize, usize, Mode)> = Vec::new();
    if spec.include_baseline {
        jobs.extend(spec.modes.iter().map(|&m| (0, 0, m)));
    }
    for &d in &spec.depths {
        for &w in &spec.widths {
            jobs.extend(spec.modes.iter().map(|&m| (d, w, m)));
        }
    }
    let job = |&(d, w, m): &(usize, usize, Mode)| -> Result<SweepRow> {
        let (residual, params) = if d == 0 {
            (None, 0)
        } else {
            let r = zero_residual(d, w, spec.seed)?;
            let p = r.network.param_count();
            (Some(r), p)
        };
        let run = run_config(&with_mode(m), residual, cycles, spec.timeout_s)?;
        log::info!("sweep {d}x{w} {m}: {} cycles", run.commands.len());
        Ok(summarize(d, w, params, m, &run, spec.warmup, &baseline.commands))
    };
    if spec.parallel {
        jobs.par_iter().map(job).collect()
    } else {
        jobs.iter().map(job).collect()
    }
}

/// Results CSV, one row per configuration.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "depth,width,params,mode,timed_cycles,{},net_batches,net_batch_points,net_value,net_jacobian,max_command_diff,equivalence_pass,timed_out",
        TIMING_COLUMNS.join(",")
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:e},{},{}",
            r.depth,
            r.width,
            r.params,
            r.mode,
            r.timed_cycles,
            r.prep_dd_median_ms,
            r.prep_qp_median_ms,
            r.feedback_median_ms,
            r.total_median_ms,
            r.total_p95_ms,
            r.freq_hz,
            r.net_batches,
            r.net_batch_points,
            r.net_value,
            r.net_jacobian,
            r.max_command_diff,
            r.equivalence_pass,
            r.timed_out
        )?;
    }
    w.flush()?;
    Ok(())
}
