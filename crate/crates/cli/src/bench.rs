use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use neural_mpc::config;
use neural_mpc::sweep::{run_sweep, write_sweep_csv, BenchSpec};
use neural_mpc::{Mode, OcpConfig};

use crate::settings::load_or;
use crate::{CliError, CliResult, Outcome, Seeded};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Sweep specification [default: configs/bench.toml].
    #[arg(long, value_name = "TOML")]
    pub spec: Option<PathBuf>,
    /// Double-integrator OCP [default: configs/ocp_double_integrator.toml].
    #[arg(long, value_name = "TOML")]
    pub ocp: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    /// Comma-separated subset of rtn,naive.
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    pub modes: Option<Vec<Mode>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Run configurations concurrently (timings become unreliable).
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, default_value = "out/bench")]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRun {
    pub spec: BenchSpec,
    pub ocp: OcpConfig,
}

impl Seeded for BenchRun {
    fn seed(&self) -> u64 {
        self.spec.seed
    }
}

impl BenchArgs {
    pub fn resolve(&self) -> CliResult<BenchRun> {
        let mut spec: BenchSpec = load_or(self.spec.as_deref(), config::BENCH, "bench.toml")?;
        if let Some(w) = &self.widths {
            spec.widths = w.clone();
        }
        if let Some(d) = &self.depths {
            spec.depths = d.clone();
        }
        if let Some(m) = &self.modes {
            spec.modes = m.clone();
        }
        if let Some(r) = self.repetitions {
            spec.repetitions = r;
        }
        spec.parallel |= self.parallel;
        spec.validate()?;
        let ocp = load_or(self.ocp.as_deref(), config::OCP_DOUBLE_INTEGRATOR, "ocp_double_integrator.toml")?;
        Ok(BenchRun { spec, ocp })
    }
}

/// `bench.csv` holds one row per (depth, width, mode); the network-free
/// reference rows go to `bench_baseline.csv`.
pub fn execute(run: &BenchRun, out: &Path) -> CliResult<Outcome> {
    let rows = run_sweep(&run.spec, &run.ocp)?;
    let (baseline, nets): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.depth == 0);
    let mut outputs = vec![PathBuf::from("bench.csv")];
    write_sweep_csv(&nets, &out.join("bench.csv"))?;
    if !baseline.is_empty() {
        write_sweep_csv(&baseline, &out.join("bench_baseline.csv"))?;
        outputs.push("bench_baseline.csv".into());
    }

    println!("{:>5} {:>5} {:>6} {:>12} {:>12} {:>10}  equal", "depth", "width", "mode", "dd prep ms", "total ms", "Hz");
    for r in baseline.iter().chain(&nets) {
        println!(
            "{:>5} {:>5} {:>6} {:>12.4} {:>12.4} {:>10.0}  {}{}",
            r.depth,
            r.width,
            r.mode,
            r.prep_dd_median_ms,
            r.total_median_ms,
            r.freq_hz,
            r.equivalence_pass,
            if r.timed_out { " (timed out)" } else { "" }
        );
    }
    let mismatched = nets.iter().filter(|r| !r.equivalence_pass && !r.timed_out).count();
    if mismatched > 0 {
        log::warn!("{mismatched} configurations differ from the network-free commands");
    }
    if nets.iter().all(|r| r.timed_cycles == 0) {
        return Err(CliError::runtime("every configuration timed out before timing started"));
    }
    Ok(Outcome {
        outputs,
        ..Outcome::default()
    })
}
