//! Fixtures shared by the benchmarks.

use strainloc_core::{Evaluator, FieldModel, ProblemKind, Result, RunConfig};

/// Evaluator and parameter vector for the default configuration of `kind`,
/// with the collocation set at prescribed displacement `delta`.
pub fn evaluator(kind: ProblemKind, delta: f64) -> Result<(Evaluator, Vec<f64>)> {
    let cfg = RunConfig::defaults(kind);
    let mut problem = cfg.build_problem()?;
    problem.collocation.set_delta(delta);
    let mut model: FieldModel = cfg.initial_model()?;
    model.band.jump = 0.1;
    let eval = Evaluator::new(&model, &problem.material, &problem.collocation, problem.norm)?;
    Ok((eval, model.params()))
}
