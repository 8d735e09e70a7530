use strainloc_core::driver::{elastic_presolve, run_load_program, solve_load_step, LoadProgram, Problem, Protocol};
use strainloc_core::energy::{AreaProfile, CollocationSet, PlasticNorm, Quadrature};
use strainloc_core::fields::{BandGeometry, FieldModel, RegularField};
use strainloc_core::kernels::Evaluator;
use strainloc_core::material::MaterialSpec;
use strainloc_core::oracle::{bar_onset, solve_bar, BarMaterial};
use strainloc_core::Error;

const TAPERED_BAR: BarMaterial = BarMaterial {
    youngs: 2.0,
    yield_stress: 1.0,
    hbar: -2.0 / 11.0,
};

fn bar_problem(points: usize) -> Problem {
    let area = AreaProfile::tapered_bar();
    Problem {
        material: MaterialSpec::bar_default(),
        collocation: CollocationSet::bar(10.0, points, &area, Quadrature::Trapezoid, 0.0).unwrap(),
        norm: PlasticNorm::JumpNorm,
        area: Some(area),
    }
}

fn bar_model(nodes: usize) -> FieldModel {
    FieldModel::bar(10.0, nodes, BandGeometry::new_1d(4.0, 1.0, 100.0, 0.0)).unwrap()
}

fn quick() -> Protocol {
    Protocol {
        adamw_epochs: 600,
        presolve_epochs: 300,
        ..Protocol::default()
    }
}

#[test]
fn presolve_matches_elastic_bar() {
    let area = AreaProfile::tapered_bar();
    let dy = bar_onset(TAPERED_BAR, &area, 10.0).unwrap();
    let mut p = bar_problem(1001);
    let model = bar_model(11);
    let trained = elastic_presolve(&model, &mut p, dy, &quick()).unwrap();
    let oracle = solve_bar(dy, TAPERED_BAR, &area, 10.0).unwrap();
    let worst = (0..=200)
        .map(|i| {
            let x = 10.0 * i as f64 / 200.0;
            (trained.eval_total(&[x]).unwrap()[0] - oracle.displacement(x, &area)).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 0.02, "max error {worst}");
    assert_eq!(trained.band.jump, 0.0);
    assert_eq!(trained.band.y_p, model.band.y_p);
}

#[test]
fn presolve_at_zero_load_gives_zero_fields() {
    let mut p = bar_problem(201);
    let trained = elastic_presolve(&bar_model(11), &mut p, 0.0, &quick()).unwrap();
    let RegularField::Fem1d(f) = &trained.regular else {
        unreachable!()
    };
    assert!(f.nodal_values.iter().all(|v| v.abs() < 1e-6), "{:?}", f.nodal_values);
    let eval = Evaluator::new(&trained, &p.material, &p.collocation, p.norm).unwrap();
    assert!(eval.evaluate(&trained.params(), false).unwrap().breakdown.total.abs() < 1e-10);
}

#[test]
fn presolve_never_moves_band_parameters() {
    let mut p = bar_problem(201);
    let model = FieldModel::bar(10.0, 11, BandGeometry::new_1d(4.0, 1.0, 100.0, 0.7)).unwrap();
    let trained = elastic_presolve(&model, &mut p, 3.0, &quick()).unwrap();
    assert_eq!(trained.band.y_p.to_bits(), model.band.y_p.to_bits());
    assert_eq!(trained.band.jump, 0.0);
}

#[test]
fn presolve_reports_non_convergence() {
    let mut p = bar_problem(201);
    let protocol = Protocol {
        presolve_epochs: 1,
        presolve_lbfgs: false,
        ..Protocol::default()
    };
    let e = elastic_presolve(&bar_model(11), &mut p, 3.0, &protocol).unwrap_err();
    assert!(
        matches!(e, Error::NonConvergence { ref history, .. } if history.len() == 1),
        "{e}"
    );
}

#[test]
fn single_step_localizes_in_the_middle() {
    let area = AreaProfile::tapered_bar();
    let dy = bar_onset(TAPERED_BAR, &area, 10.0).unwrap();
    let mut p = bar_problem(1001);
    let protocol = quick();
    let model = elastic_presolve(&bar_model(11), &mut p, dy, &protocol).unwrap();
    let (_, r) = solve_load_step(&model, &mut p, 4.5, &protocol).unwrap();
    assert!(!r.flagged, "{:?}", r.flag_reason);
    assert!((r.band.position.unwrap() - 5.0).abs() < 0.51);
    assert!(r.force_cv.unwrap() <= 0.02);
    assert!(r.gate_epoch.is_some());
    assert!(r.band.jump > 1.5);
    // The boundary condition is met to within the penalty accuracy.
    let tip = r.samples.rows.last().unwrap().u[0];
    assert!((tip - 4.5).abs() < 1e-2, "{tip}");
}

#[test]
fn warm_start_threads_parameters() {
    let mut p = bar_problem(401);
    let protocol = quick();
    let program = LoadProgram {
        steps: vec![4.25, 4.5],
        presolve_delta: Some(3.9),
        protocol: protocol.clone(),
    };
    let out = run_load_program(&program, &mut p, bar_model(11)).unwrap();
    assert_eq!(out.reports.len(), 2);
    // Re-run the first step by hand and check the second step started from it.
    let mut q = bar_problem(401);
    let start = elastic_presolve(&bar_model(11), &mut q, 3.9, &protocol).unwrap();
    let (after_first, _) = solve_load_step(&start, &mut q, 4.25, &protocol).unwrap();
    q.collocation.set_delta(4.5);
    let eval = Evaluator::new(&after_first, &q.material, &q.collocation, q.norm).unwrap();
    let t = eval.evaluate(&after_first.params(), false).unwrap();
    let expected = t
        .gated(protocol.lambda, protocol.abs_energy_guard, protocol.bc_weight)
        .0;
    assert_eq!(out.reports[1].initial_loss.to_bits(), expected.to_bits());
}

#[test]
fn empty_program_gives_no_reports() {
    let mut p = bar_problem(101);
    let program = LoadProgram {
        steps: vec![],
        presolve_delta: Some(3.9),
        protocol: Protocol::default(),
    };
    let out = run_load_program(&program, &mut p, bar_model(11)).unwrap();
    assert!(out.reports.is_empty());
}

#[test]
fn decreasing_load_is_rejected() {
    let mut p = bar_problem(101);
    let program = LoadProgram {
        steps: vec![4.5, 4.25],
        presolve_delta: None,
        protocol: Protocol::default(),
    };
    assert!(matches!(
        run_load_program(&program, &mut p, bar_model(11)),
        Err(Error::Config { .. })
    ));
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let mut p = bar_problem(301);
        let program = LoadProgram {
            steps: vec![4.5],
            presolve_delta: Some(3.9),
            protocol: quick(),
        };
        run_load_program(&program, &mut p, bar_model(11)).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.reports[0].history, b.reports[0].history);
}

#[test]
fn unbounded_energy_is_retried_with_guard() {
    // Softening steep enough that the energy has no lower bound in the jump.
    let mut p = bar_problem(201);
    p.material.hbar = -5.0;
    let protocol = Protocol {
        adamw_epochs: 200,
        presolve_epochs: 200,
        ..Protocol::default()
    };
    let model = elastic_presolve(&bar_model(11), &mut p, 3.0, &protocol).unwrap();
    let (_, r) = solve_load_step(&model, &mut p, 4.5, &protocol).unwrap();
    assert!(r.knobs.guard_retry, "{:?}", r.flag_reason);
    assert!(r.knobs.abs_energy_guard);
}
