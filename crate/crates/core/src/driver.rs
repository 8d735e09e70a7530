//! Quasi-static load stepping: elastic pre-solve, then one warm-started
//! training run per prescribed displacement.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energy::{
    coefficient_of_variation, element_midpoint_forces, postprocess, AreaProfile, CollocationSet, EnergyBreakdown,
    FieldSamples, PlasticNorm,
};
use crate::error::{Error, Result};
use crate::fields::FieldModel;
use crate::kernels::Evaluator;
use crate::material::{cohesive_energy_density, cohesive_traction, MaterialSpec};
use crate::optim::{lbfgs_minimize, AdamWConfig, AdamWState, LbfgsConfig, Schedule, StopReason};

/// Training knobs for one load step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub adamw_epochs: usize,
    pub lbfgs_enabled: bool,
    pub lbfgs_rounds: usize,
    pub abs_energy_guard: bool,
    /// Boundary-loss threshold of the gate.
    pub lambda: f64,
    /// Weight of the boundary loss once the gate is open.
    pub bc_weight: f64,
    /// Decay the AdamW rate to zero over each step's epoch budget.
    pub cosine_decay: bool,
    pub presolve_epochs: usize,
    pub presolve_lbfgs: bool,
    /// Retry a diverging step once with the absolute-energy guard.
    pub retry_with_guard: bool,
    pub continue_on_flag: bool,
    pub adamw: AdamWConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            adamw_epochs: 3000,
            lbfgs_enabled: true,
            lbfgs_rounds: 1,
            abs_energy_guard: false,
            lambda: 1e-4,
            bc_weight: 1e3,
            cosine_decay: true,
            presolve_epochs: 3000,
            presolve_lbfgs: true,
            retry_with_guard: true,
            continue_on_flag: true,
            adamw: AdamWConfig::default(),
            lbfgs: LbfgsConfig {
                loss_floor: Some(-1e6),
                ..LbfgsConfig::default()
            },
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::config("protocol.lambda", "must be positive"));
        }
        if !(self.bc_weight > 0.0) {
            return Err(Error::config("protocol.bc_weight", "must be positive"));
        }
        self.adamw.validate()?;
        self.lbfgs.validate()
    }

    fn adamw_config(&self, epochs: usize) -> AdamWConfig {
        AdamWConfig {
            schedule: if self.cosine_decay {
                Schedule::Cosine { total: epochs.max(1) }
            } else {
                Schedule::Constant
            },
            ..self.adamw
        }
    }
}

/// Monotone sequence of prescribed displacements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProgram {
    pub steps: Vec<f64>,
    /// Load level of the elastic pre-solve; skipped when absent.
    #[serde(default)]
    pub presolve_delta: Option<f64>,
    #[serde(default)]
    pub protocol: Protocol,
}

impl LoadProgram {
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        let mut prev = self.presolve_delta.unwrap_or(0.0);
        for (k, &d) in self.steps.iter().enumerate() {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::config(
                    format!("program.steps[{k}]"),
                    "must be finite and non-negative",
                ));
            }
            if d < prev {
                return Err(Error::config(
                    format!("program.steps[{k}]"),
                    format!("load must not decrease ({d} after {prev})"),
                ));
            }
            prev = d;
        }
        Ok(())
    }
}

/// Everything about the boundary value problem except the trainable state.
#[derive(Clone, Debug)]
pub struct Problem {
    pub material: MaterialSpec,
    pub collocation: CollocationSet,
    pub norm: PlasticNorm,
    /// Cross-section of the bar (1D only).
    pub area: Option<AreaProfile>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Presolve,
    Adamw,
    Lbfgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub phase: Phase,
    pub iteration: usize,
    pub loss: f64,
    /// Not recorded for L-BFGS iterations.
    pub bc_loss: Option<f64>,
    pub energy: Option<f64>,
    pub gate_open: bool,
}

/// Converged band unknowns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandState {
    pub alpha: f64,
    pub y_p: f64,
    pub jump: f64,
    pub jump_norm: f64,
    /// 1D: band midpoint. 2D: height of the midline at `x = 0.5`.
    pub position: Option<f64>,
    /// 2D: tilt of the band normal away from the vertical axis.
    pub tilt_deg: Option<f64>,
}

impl BandState {
    pub fn of(model: &FieldModel) -> Self {
        let b = &model.band;
        let (position, tilt_deg) = if b.dim == 1 {
            (Some(b.y_p), None)
        } else {
            (b.crossing_height(0.5), Some(b.normal_tilt_from_vertical_deg()))
        };
        Self {
            alpha: b.alpha,
            y_p: b.y_p,
            jump: b.jump,
            jump_norm: b.jump_norm(),
            position,
            tilt_deg,
        }
    }
}

/// Which remediation knobs produced a result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knobs {
    pub adamw_epochs: usize,
    pub lbfgs_rounds: usize,
    pub abs_energy_guard: bool,
    /// The step diverged once and was rerun with the guard.
    pub guard_retry: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub delta: f64,
    pub band: BandState,
    pub breakdown: EnergyBreakdown,
    /// `ψ(‖w‖)` and `t_c(‖w‖)` with the yield stress at the band midpoint.
    pub cohesive_energy: f64,
    pub cohesive_force: f64,
    /// 1D: mean axial force over element midpoints.
    pub force_mean: Option<f64>,
    pub force_cv: Option<f64>,
    /// 2D: area-weighted mean shear stress.
    pub shear_stress_mean: Option<f64>,
    pub initial_loss: f64,
    pub history: Vec<HistoryEntry>,
    /// First AdamW epoch at which the energy entered the loss.
    pub gate_epoch: Option<usize>,
    pub lbfgs_stops: Vec<StopReason>,
    pub knobs: Knobs,
    pub flagged: bool,
    pub flag_reason: Option<String>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub samples: FieldSamples,
}

fn frozen_band(model: &FieldModel) -> Vec<bool> {
    let mut f = vec![false; model.param_count()];
    for k in model.band_param_range() {
        f[k] = true;
    }
    f
}

struct Trained {
    theta: Vec<f64>,
    history: Vec<HistoryEntry>,
    gate_epoch: Option<usize>,
    lbfgs_stops: Vec<StopReason>,
    initial_loss: f64,
}

fn train(
    eval: &Evaluator,
    theta0: &[f64],
    p: &Protocol,
    epochs: usize,
    lbfgs_rounds: usize,
    guard: bool,
    frozen: Option<&[bool]>,
    phase: Phase,
) -> Result<Trained> {
    let mut theta = theta0.to_vec();
    let mut history = Vec::with_capacity(epochs + 1);
    let mut opt = AdamWState::new(theta.len(), p.adamw_config(epochs));
    let mut gate_epoch = None;
    let mut initial_loss = None;
    for epoch in 0..epochs {
        let t = eval.evaluate(&theta, true)?;
        let open = gate_epoch.is_some() || t.breakdown.bc_loss <= p.lambda;
        if open && gate_epoch.is_none() {
            gate_epoch = Some(epoch);
        }
        let (loss, grad) = if open {
            t.combined(guard, p.bc_weight)
        } else {
            (t.breakdown.bc_loss, t.grad_bc)
        };
        initial_loss.get_or_insert(loss);
        history.push(HistoryEntry {
            phase,
            iteration: epoch,
            loss,
            bc_loss: Some(t.breakdown.bc_loss),
            energy: Some(t.breakdown.total),
            gate_open: open,
        });
        opt.step(&mut theta, &grad, frozen)?;
    }
    let mut lbfgs_stops = Vec::new();
    for _ in 0..lbfgs_rounds {
        let out = lbfgs_minimize(
            |x| {
                let t = eval.evaluate(x, true)?;
                Ok(t.combined(guard, p.bc_weight))
            },
            &theta,
            &p.lbfgs,
            frozen,
        )?;
        initial_loss.get_or_insert(out.history[0]);
        for (k, &loss) in out.history.iter().enumerate().skip(1) {
            history.push(HistoryEntry {
                phase: Phase::Lbfgs,
                iteration: k,
                loss,
                bc_loss: None,
                energy: None,
                gate_open: true,
            });
        }
        theta = out.params;
        lbfgs_stops.push(out.stop);
    }
    let initial_loss = match initial_loss {
        Some(v) => v,
        None => eval.evaluate(&theta, false)?.gated(p.lambda, guard, p.bc_weight).0,
    };
    Ok(Trained {
        theta,
        history,
        gate_epoch,
        lbfgs_stops,
        initial_loss,
    })
}

/// Trains the regular field to the elastic state at `delta` with the band
/// frozen and its jump set to zero.
pub fn elastic_presolve(
    model: &FieldModel,
    problem: &mut Problem,
    delta: f64,
    protocol: &Protocol,
) -> Result<FieldModel> {
    protocol.validate()?;
    let mut start = model.clone();
    start.band.jump = 0.0;
    problem.collocation.set_delta(delta);
    let eval = Evaluator::new(&start, &problem.material, &problem.collocation, problem.norm)?;
    let frozen = frozen_band(&start);
    let rounds = usize::from(protocol.presolve_lbfgs);
    let out = train(
        &eval,
        &start.params(),
        protocol,
        protocol.presolve_epochs,
        rounds,
        false,
        Some(&frozen),
        Phase::Presolve,
    )?;
    let end = eval.evaluate(&out.theta, false)?;
    if end.breakdown.bc_loss > protocol.lambda {
        return Err(Error::NonConvergence {
            bc_loss: end.breakdown.bc_loss,
            lambda: protocol.lambda,
            history: out.history.iter().map(|h| h.loss).collect(),
        });
    }
    start.set_params(&out.theta)?;
    Ok(start)
}

fn step_report(
    model: &FieldModel,
    problem: &Problem,
    eval: &Evaluator,
    delta: f64,
    trained: Option<&Trained>,
    knobs: Knobs,
    flag: Option<String>,
    started: Instant,
) -> Result<StepReport> {
    let theta = model.params();
    let breakdown = match eval.evaluate(&theta, false) {
        Ok(t) => t.breakdown,
        Err(Error::Divergence { breakdown, .. }) => breakdown.map(|b| *b).unwrap_or_default(),
        Err(e) => return Err(e),
    };
    let m = &problem.material;
    let band = BandState::of(model);
    let sigma_p = m.sigma_p_at(&model.band.midline_point(&[0.5, 0.5])[..model.dim()]);
    let j = band.jump_norm;
    let samples = postprocess(model, m, &problem.collocation, problem.norm)?;
    let (force_mean, force_cv, shear_stress_mean) = match &problem.area {
        Some(area) if model.dim() == 1 => {
            let f: Vec<f64> = element_midpoint_forces(model, m, area)?
                .into_iter()
                .map(|(_, f)| f)
                .collect();
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            (Some(mean), Some(coefficient_of_variation(&f)), None)
        }
        _ if model.dim() == 2 => {
            let q = &problem.collocation;
            let wsum: f64 = q.weights.iter().sum();
            let tau: f64 = samples.rows.iter().zip(&q.weights).map(|(r, w)| r.sigma[2] * w).sum();
            (None, None, Some(tau / wsum))
        }
        _ => (None, None, None),
    };
    Ok(StepReport {
        delta,
        band,
        breakdown,
        cohesive_energy: cohesive_energy_density(j, m.hbar, sigma_p)?,
        cohesive_force: cohesive_traction(j, m.hbar, sigma_p)?,
        force_mean,
        force_cv,
        shear_stress_mean,
        initial_loss: trained.map_or(f64::NAN, |t| t.initial_loss),
        history: trained.map(|t| t.history.clone()).unwrap_or_default(),
        gate_epoch: trained.and_then(|t| t.gate_epoch),
        lbfgs_stops: trained.map(|t| t.lbfgs_stops.clone()).unwrap_or_default(),
        knobs,
        flagged: flag.is_some(),
        flag_reason: flag,
        wall_time_s: started.elapsed().as_secs_f64(),
        samples,
    })
}

/// Trains from `model_prev` at load level `delta`: AdamW on the gated loss,
/// then L-BFGS rounds on energy plus weighted boundary loss. A diverging run
/// is repeated once with the absolute-energy guard; if that also diverges
/// the report is flagged and the returned model is `model_prev`.
pub fn solve_load_step(
    model_prev: &FieldModel,
    problem: &mut Problem,
    delta: f64,
    protocol: &Protocol,
) -> Result<(FieldModel, StepReport)> {
    protocol.validate()?;
    let started = Instant::now();
    problem.collocation.set_delta(delta);
    let eval = Evaluator::new(model_prev, &problem.material, &problem.collocation, problem.norm)?;
    let rounds = if protocol.lbfgs_enabled {
        protocol.lbfgs_rounds
    } else {
        0
    };
    let mut knobs = Knobs {
        adamw_epochs: protocol.adamw_epochs,
        lbfgs_rounds: rounds,
        abs_energy_guard: protocol.abs_energy_guard,
        guard_retry: false,
    };
    let theta0 = model_prev.params();
    let run = |guard: bool| {
        train(
            &eval,
            &theta0,
            protocol,
            protocol.adamw_epochs,
            rounds,
            guard,
            None,
            Phase::Adamw,
        )
    };
    let mut outcome = run(protocol.abs_energy_guard);
    if matches!(outcome, Err(Error::Divergence { .. })) && protocol.retry_with_guard && !protocol.abs_energy_guard {
        knobs.guard_retry = true;
        knobs.abs_energy_guard = true;
        outcome = run(true);
    }
    match outcome {
        Ok(trained) => {
            let mut model = model_prev.clone();
            model.set_params(&trained.theta)?;
            let bc = eval.evaluate(&trained.theta, false)?.breakdown.bc_loss;
            let flag = (bc > protocol.lambda)
                .then(|| format!("boundary loss {bc:.3e} above threshold {:.1e}", protocol.lambda));
            let report = step_report(&model, problem, &eval, delta, Some(&trained), knobs, flag, started)?;
            Ok((model, report))
        }
        Err(Error::Divergence { reason, .. }) => {
            let report = step_report(
                model_prev,
                problem,
                &eval,
                delta,
                None,
                knobs,
                Some(format!("diverged: {reason}")),
                started,
            )?;
            Ok((model_prev.clone(), report))
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct ProgramOutcome {
    pub reports: Vec<StepReport>,
    pub model: FieldModel,
}

impl ProgramOutcome {
    pub fn any_flagged(&self) -> bool {
        self.reports.iter().any(|r| r.flagged)
    }
}

/// Runs the pre-solve (if requested) and every load step in order, threading
/// the trained model from one step into the next.
pub fn run_load_program(program: &LoadProgram, problem: &mut Problem, initial: FieldModel) -> Result<ProgramOutcome> {
    program.validate()?;
    if program.steps.is_empty() {
        return Ok(ProgramOutcome {
            reports: Vec::new(),
            model: initial,
        });
    }
    let mut model = match program.presolve_delta {
        Some(d) => elastic_presolve(&initial, problem, d, &program.protocol)?,
        None => initial,
    };
    let mut reports = Vec::with_capacity(program.steps.len());
    for &delta in &program.steps {
        let (next, report) = solve_load_step(&model, problem, delta, &program.protocol)?;
        let stop = report.flagged && !program.protocol.continue_on_flag;
        reports.push(report);
        model = next;
        if stop {
            break;
        }
    }
    Ok(ProgramOutcome { reports, model })
}
