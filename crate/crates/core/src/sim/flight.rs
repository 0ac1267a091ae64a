use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::simulator::{NoiseMode, Simulator};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::integrator::EvalCounts;
use crate::sqp::{PhaseTiming, RtiController};
use crate::Vector;

/// A position error beyond this is treated as a crash, m.
pub const DIVERGENCE_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleTelemetry {
    pub qp_iterations: usize,
    /// The QP failed and the previous command was reused.
    pub reused_command: bool,
    pub counts: EvalCounts,
}

/// One closed-loop flight sampled at the controller rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightLog {
    pub trajectory: String,
    pub speed: f64,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    pub control_period: f64,
    /// Samples before this time are excluded from the tracking metric.
    pub ramp_time: f64,
    pub times: Vec<f64>,
    /// Measured state at each cycle, before the command is applied.
    pub states: Vec<Vector>,
    pub commands: Vec<Vector>,
    pub references: Vec<Vector>,
    pub telemetry: Vec<CycleTelemetry>,
    /// Phase wall times; excluded from the deterministic CSV.
    pub timing: Vec<PhaseTiming>,
    /// Why the flight stopped early, if it did.
    pub failure: Option<String>,
}

impl FlightLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Flight log CSV: header comment, then one row per cycle. Contains no
    /// wall-clock data, so identical runs give identical bytes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "# trajectory={} speed={} seed={} noise_mode={} control_period={} failure={}",
            self.trajectory,
            self.speed,
            self.seed,
            self.noise_mode.name(),
            self.control_period,
            self.failure.as_deref().unwrap_or("none")
        )?;
        let mut header = vec!["t".to_string()];
        for prefix in ["x", "u", "xref"] {
            let n = if prefix == "u" { 4 } else { 13 };
            header.extend((0..n).map(|i| format!("{prefix}{i}")));
        }
        header.extend(
            ["qp_iterations", "reused_command", "net_batches", "net_batch_points", "net_value", "net_jacobian"]
                .map(String::from),
        );
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{}", self.times[k])];
            for v in [&self.states[k], &self.commands[k], &self.references[k]] {
                row.extend(v.iter().map(|e| format!("{e:e}")));
            }
            let tel = &self.telemetry[k];
            row.push(tel.qp_iterations.to_string());
            row.push(u8::from(tel.reused_command).to_string());
            for c in [tel.counts.net_batches, tel.counts.net_batch_points, tel.counts.net_value, tel.counts.net_jacobian] {
                row.push(c.to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-cycle phase wall times, milliseconds.
    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "cycle,prep_dd_ms,prep_qp_ms,feedback_ms,total_ms")?;
        for (k, t) in self.timing.iter().enumerate() {
            writeln!(w, "{k},{},{},{},{}", t.prep_dd_ms, t.prep_qp_ms, t.feedback_ms, t.total_ms())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Median of each phase over the flight.
    pub fn median_timing(&self) -> PhaseTiming {
        let med = |f: fn(&PhaseTiming) -> f64| median(self.timing.iter().map(f).collect());
        PhaseTiming {
            prep_dd_ms: med(|t| t.prep_dd_ms),
            prep_qp_ms: med(|t| t.prep_qp_ms),
            feedback_ms: med(|t| t.feedback_ms),
        }
    }
}

/// Median; NaN for an empty sample.
pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fly `traj` with `controller` in `sim`, one controller call per control
/// period of simulated time. The controller must have been initialized at
/// [`Trajectory::initial_state`]. Controller errors and divergence end the
/// flight early with a failure marker instead of failing the call.
pub fn run_closed_loop(controller: &mut RtiController, sim: &mut Simulator, traj: &Trajectory) -> Result<FlightLog> {
    let cfg = controller.config().clone();
    let period = cfg.control_period();
    sim.config().validate(period)?;
    let cycles = (traj.duration() / period).floor() as usize;
    let mut log = FlightLog {
        trajectory: traj.kind.name().to_string(),
        speed: traj.speed,
        seed: sim.config().seed,
        noise_mode: sim.config().noise_mode,
        control_period: period,
        ramp_time: traj.ramp_time(),
        times: Vec::with_capacity(cycles),
        states: Vec::with_capacity(cycles),
        commands: Vec::with_capacity(cycles),
        references: Vec::with_capacity(cycles),
        telemetry: Vec::with_capacity(cycles),
        timing: Vec::with_capacity(cycles),
        failure: None,
    };
    let mut x = traj.initial_state();
    for i in 0..cycles {
        let t = i as f64 * period;
        let window = traj.window(t, cfg.horizon, cfg.dt);
        let reference = window.xs[0].clone();
        let err = (x.rows(0, 3) - reference.rows(0, 3)).norm();
        if !(err <= DIVERGENCE_LIMIT) || x.iter().any(|v| !v.is_finite()) {
            log.failure = Some(format!("diverged at t={t:.2}s"));
            break;
        }
        let report = match controller.rti_cycle(&x, &window) {
            Ok(r) => r,
            Err(Error::Io(e)) => return Err(Error::Io(e)),
            Err(e) => {
                log.failure = Some(format!("controller error at t={t:.2}s: {e}"));
                break;
            }
        };
        log.times.push(t);
        log.states.push(x.clone());
        log.commands.push(report.command.clone());
        log.references.push(reference);
        log.telemetry.push(CycleTelemetry {
            qp_iterations: report.qp_iterations,
            reused_command: report.failure.is_some(),
            counts: report.counts,
        });
        log.timing.push(report.timing);
        x = sim.simulate_step(&x, &report.command, period)?;
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingError {
    pub mean: f64,
    /// Per-sample Euclidean position error after the ramp.
    pub series: Vec<f64>,
}

/// Mean Euclidean distance between measured and reference positions,
/// ramp-in excluded.
pub fn tracking_error(log: &FlightLog) -> Result<TrackingError> {
    let series: Vec<f64> = (0..log.len())
        .filter(|&k| log.times[k] >= log.ramp_time)
        .map(|k| (log.states[k].rows(0, 3) - log.references[k].rows(0, 3)).norm())
        .collect();
    if series.is_empty() {
        return Err(Error::InputDomain("flight log has no samples after the ramp".into()));
    }
    Ok(TrackingError {
        mean: series.iter().sum::<f64>() / series.len() as f64,
        series,
    })
}
