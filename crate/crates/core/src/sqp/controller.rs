//! The three-phase real-time iteration controller.
//!
//! Per cycle: (1) data-driven preparation builds Taylor approximations of the
//! residual at all nodes in one batched call (rtn mode only); (2) QP
//! preparation linearizes, builds cost blocks and condenses; (3) feedback
//! substitutes the measured state, solves the box QP, applies the full step
//! and returns `u_0`. The iterate is then shifted as the next warm start.
//! Phases run sequentially on the calling thread.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::build::build_qp;
use super::config::{Mode, OcpConfig};
use super::iterate::{init_iterate, Iterate, ReferenceWindow};
use super::qp_data::QpData;
use super::residual_terms::{NaiveResidual, NoResidual, TaylorResidual};
use crate::dynamics::residual::ResidualModel;
use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::integrator::EvalCounts;
use crate::qp::{solve_box_qp, BoundState, Condensing, QpStatus};
use crate::taylor::{prepare_nodes, TaylorApprox};
use crate::Vector;

/// Wall time of each phase of the last cycle, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub prep_dd_ms: f64,
    pub prep_qp_ms: f64,
    pub feedback_ms: f64,
}

impl PhaseTiming {
    pub fn total_ms(&self) -> f64 {
        self.prep_dd_ms + self.prep_qp_ms + self.feedback_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackResult {
    pub command: Vector,
    pub dx: Vec<Vector>,
    pub du: Vec<Vector>,
    pub qp_iterations: usize,
    pub lambda_lb: Vector,
    pub lambda_ub: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub index: usize,
    pub command: Vector,
    pub timing: PhaseTiming,
    pub qp_iterations: usize,
    pub qp_status: Option<QpStatus>,
    /// Evaluations charged during this cycle.
    pub counts: EvalCounts,
    /// Set when the QP failed and the previous command was reused.
    pub failure: Option<String>,
}

struct Prepared {
    qp: QpData,
    condensing: Condensing,
}

pub struct RtiController {
    config: OcpConfig,
    nominal: Arc<dyn Dynamics>,
    residual: Option<ResidualModel>,
    iterate: Iterate,
    prepared: Option<Prepared>,
    approximations: Vec<TaylorApprox>,
    warm_active: Option<Vec<BoundState>>,
    last_command: Vector,
    counts: EvalCounts,
    timing: PhaseTiming,
    cycles: usize,
}

impl RtiController {
    /// Controller with its iterate initialized from `reference` and `x0`.
    pub fn new(
        config: OcpConfig,
        nominal: Arc<dyn Dynamics>,
        residual: Option<ResidualModel>,
        x0: &Vector,
        reference: &ReferenceWindow,
    ) -> Result<Self> {
        config.validate(nominal.state_dim(), nominal.input_dim())?;
        if let Some(r) = &residual {
            if r.variant() != config.residual_variant {
                return Err(Error::Config(format!(
                    "residual model uses variant {} but the controller is configured for {}",
                    r.variant(),
                    config.residual_variant
                )));
            }
            if r.variant().state_dim() != nominal.state_dim() {
                return Err(Error::shape("residual state", nominal.state_dim(), r.variant().state_dim()));
            }
        }
        reference.validate(config.horizon, nominal.state_dim(), nominal.input_dim())?;
        let iterate = init_iterate(nominal.as_ref(), x0, reference)?;
        let last_command = iterate.us[0].clone();
        Ok(Self {
            config,
            nominal,
            residual,
            iterate,
            prepared: None,
            approximations: Vec::new(),
            warm_active: None,
            last_command,
            counts: EvalCounts::default(),
            timing: PhaseTiming::default(),
            cycles: 0,
        })
    }

    pub fn config(&self) -> &OcpConfig {
        &self.config
    }

    pub fn iterate(&self) -> &Iterate {
        &self.iterate
    }

    pub fn set_iterate(&mut self, iterate: Iterate) -> Result<()> {
        iterate.validate(self.config.horizon, self.nominal.state_dim(), self.nominal.input_dim())?;
        self.iterate = iterate;
        self.prepared = None;
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Cumulative evaluation counters.
    pub fn counts(&self) -> EvalCounts {
        self.counts
    }

    pub fn last_timing(&self) -> PhaseTiming {
        self.timing
    }

    pub fn last_command(&self) -> &Vector {
        &self.last_command
    }

    /// QP prepared for the upcoming feedback, if any.
    pub fn prepared_qp(&self) -> Option<&QpData> {
        self.prepared.as_ref().map(|p| &p.qp)
    }

    /// Taylor approximations of the last data-driven preparation.
    pub fn approximations(&self) -> &[TaylorApprox] {
        &self.approximations
    }

    /// Both preparation phases for the current iterate.
    pub fn prepare(&mut self, reference: &ReferenceWindow) -> Result<()> {
        self.prepared = None;
        let t0 = Instant::now();
        let mut counts = EvalCounts::default();
        let mut prep_dd_ms = 0.0;
        let qp = match (&self.residual, self.config.mode) {
            (None, _) => {
                let t1 = Instant::now();
                let qp = build_qp(
                    self.nominal.as_ref(),
                    &NoResidual,
                    &self.iterate,
                    reference,
                    &self.config,
                    &mut counts,
                )?;
                self.timing.prep_qp_ms = ms(t1);
                qp
            }
            (Some(res), Mode::Rtn) => {
                self.approximations = prepare_nodes(res, &self.iterate, self.config.taylor_order, &mut counts)?;
                prep_dd_ms = ms(t0);
                let t1 = Instant::now();
                let term = TaylorResidual::new(&self.approximations, res.features.as_ref());
                let qp = build_qp(self.nominal.as_ref(), &term, &self.iterate, reference, &self.config, &mut counts)?;
                self.timing.prep_qp_ms = ms(t1);
                qp
            }
            (Some(res), Mode::Naive) => {
                let t1 = Instant::now();
                let anchors = &self.iterate.xs[..self.config.horizon];
                let term = NaiveResidual::new(res, anchors);
                let qp = build_qp(self.nominal.as_ref(), &term, &self.iterate, reference, &self.config, &mut counts)?;
                counts.net_value += term.value_calls();
                counts.net_jacobian += term.jacobian_calls();
                self.timing.prep_qp_ms = ms(t1);
                qp
            }
        };
        let t2 = Instant::now();
        let condensing = Condensing::new(&qp)?;
        self.timing.prep_qp_ms += ms(t2);
        self.timing.prep_dd_ms = prep_dd_ms;
        self.counts += counts;
        self.prepared = Some(Prepared { qp, condensing });
        Ok(())
    }

    /// Solve the prepared QP for the measured state and apply the full step.
    pub fn feedback(&mut self, x_measured: &Vector) -> Result<FeedbackResult> {
        let t0 = Instant::now();
        let prepared = self
            .prepared
            .take()
            .ok_or_else(|| Error::Config("feedback requires a prepared QP for this cycle".into()))?;
        let nx = self.nominal.state_dim();
        let nu = self.nominal.input_dim();
        if x_measured.len() != nx {
            return Err(Error::shape("measured state", nx, x_measured.len()));
        }
        if x_measured.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("measured state has non-finite entries".into()));
        }
        let dx0 = x_measured - &self.iterate.xs[0];
        let cq = prepared.condensing.fix_initial_state(&dx0)?;
        let sol = solve_box_qp(&cq, self.warm_active.as_deref())?;
        self.counts.qp_solves += 1;
        if sol.status != QpStatus::Optimal {
            return Err(Error::Qp(format!(
                "active-set solver stopped after {} iterations",
                sol.iterations
            )));
        }
        let dx = cq.recover_states(&sol.x);
        let du = cq.split_inputs(&sol.x, nu);
        if dx.iter().chain(&du).any(|v| v.iter().any(|e| !e.is_finite())) {
            return Err(Error::Qp("non-finite QP step".into()));
        }
        for (x, d) in self.iterate.xs.iter_mut().zip(&dx) {
            *x += d;
            self.nominal.normalize(x);
        }
        for (k, (u, d)) in self.iterate.us.iter_mut().zip(&du).enumerate() {
            *u += d;
            // Active bounds are met exactly, not up to rounding.
            for i in 0..nu {
                match sol.active[k * nu + i] {
                    BoundState::Lower => u[i] = self.config.u_min[i],
                    BoundState::Upper => u[i] = self.config.u_max[i],
                    BoundState::Free => {}
                }
            }
        }
        self.warm_active = Some(sol.active.clone());
        let command = self.iterate.us[0].clone();
        self.last_command = command.clone();
        self.timing.feedback_ms = ms(t0);
        Ok(FeedbackResult {
            command,
            dx,
            du,
            qp_iterations: sol.iterations,
            lambda_lb: sol.lambda_lb,
            lambda_ub: sol.lambda_ub,
        })
    }

    /// Advance the warm start by one control period.
    pub fn shift(&mut self) {
        self.iterate.shift(self.config.shift_fraction(), self.nominal.as_ref());
    }

    /// One real-time iteration: prepare, feedback, shift.
    ///
    /// A failed QP leaves the iterate untouched and reuses the previous
    /// command (flagged in the report); other failures are returned as errors,
    /// also with the iterate untouched.
    pub fn rti_cycle(&mut self, x_measured: &Vector, reference: &ReferenceWindow) -> Result<CycleReport> {
        let before = self.counts;
        let saved = self.iterate.clone();
        let index = self.cycles;
        self.cycles += 1;
        if let Err(e) = self.prepare(reference) {
            self.iterate = saved;
            return Err(e);
        }
        match self.feedback(x_measured) {
            Ok(fb) => {
                self.shift();
                Ok(CycleReport {
                    index,
                    command: fb.command,
                    timing: self.timing,
                    qp_iterations: fb.qp_iterations,
                    qp_status: Some(QpStatus::Optimal),
                    counts: self.counts - before,
                    failure: None,
                })
            }
            Err(Error::Qp(msg)) => {
                self.iterate = saved;
                log::warn!("cycle {index}: {msg}; reusing previous command");
                Ok(CycleReport {
                    index,
                    command: self.last_command.clone(),
                    timing: self.timing,
                    qp_iterations: 0,
                    qp_status: None,
                    counts: self.counts - before,
                    failure: Some(msg),
                })
            }
            Err(e) => {
                self.iterate = saved;
                Err(e)
            }
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
