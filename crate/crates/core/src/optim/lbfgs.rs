use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::apply_mask;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
    /// A loss below this value is treated as divergence.
    pub loss_floor: Option<f64>,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 20,
            c1: 1e-4,
            c2: 0.9,
            max_iter: 500,
            grad_tol: 1e-9,
            max_line_search: 25,
            loss_floor: None,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::config("protocol.lbfgs.memory", "must be positive"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::config("protocol.lbfgs.c1", "need 0 < c1 < c2 < 1"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::config("protocol.lbfgs.grad_tol", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No further decrease representable in floating point.
    Stalled,
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
    /// Loss after each accepted iteration, starting with the initial loss.
    pub history: Vec<f64>,
}

impl LbfgsOutcome {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::GradientTolerance | StopReason::Stalled)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Evaluated {
    f: f64,
    g: Vec<f64>,
}

struct Objective<'a, F> {
    f: F,
    frozen: Option<&'a [bool]>,
    floor: Option<f64>,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Objective<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<Evaluated> {
        self.evaluations += 1;
        let (f, mut g) = (self.f)(x)?;
        if !f.is_finite() {
            return Err(Error::Divergence {
                reason: format!("non-finite loss {f}"),
                breakdown: None,
            });
        }
        if let Some(floor) = self.floor {
            if f < floor {
                return Err(Error::Divergence {
                    reason: format!("loss {f:.3e} fell below {floor:.1e}"),
                    breakdown: None,
                });
            }
        }
        apply_mask(&mut g, self.frozen);
        Ok(Evaluated { f, g })
    }
}

/// Minimizer of the cubic interpolating `(a, fa, ga)` and `(b, fb, gb)`;
/// `None` when the cubic has no local minimizer.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> Option<f64> {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// [`cubic_min`] safeguarded into the middle 80% of the bracket.
fn cubic_step(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo);
    match cubic_min(a, fa, ga, b, fb, gb) {
        Some(t) => t.clamp(lo + margin, hi - margin),
        None => 0.5 * (lo + hi),
    }
}

struct Point {
    alpha: f64,
    f: f64,
    gd: f64,
    g: Vec<f64>,
}

/// Strong-Wolfe line search along `d`. Returns the accepted point, or the
/// best sufficient-decrease point with `false` when the conditions could not
/// be met within the evaluation budget.
fn line_search<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    obj: &mut Objective<'_, F>,
    x: &[f64],
    f0: f64,
    gd0: f64,
    d: &[f64],
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<(Option<Point>, bool)> {
    let mut trial = vec![0.0; x.len()];
    let mut probe = |obj: &mut Objective<'_, F>, alpha: f64| -> Result<Point> {
        for (t, (xi, di)) in trial.iter_mut().zip(x.iter().zip(d)) {
            *t = xi + alpha * di;
        }
        let e = obj.eval(&trial)?;
        Ok(Point {
            alpha,
            f: e.f,
            gd: dot(&e.g, d),
            g: e.g,
        })
    };
    // Approximate Wolfe: slope condition in place of sufficient decrease,
    // with f allowed to rise by a few ulps.
    let f_noise = 4.0 * f64::EPSILON * f0.abs();
    let approx_wolfe = |p: &Point| p.f <= f0 + f_noise && cfg.c2 * gd0 <= p.gd && p.gd <= (2.0 * cfg.c1 - 1.0) * gd0;
    let armijo = |p: &Point| p.f <= f0 + cfg.c1 * p.alpha * gd0 || approx_wolfe(p);
    let curvature = |p: &Point| p.gd.abs() <= -cfg.c2 * gd0 || approx_wolfe(p);
    let mut best: Option<Point> = None;
    let keep_best = |best: &mut Option<Point>, p: &Point| {
        if armijo(p) && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(Point {
                alpha: p.alpha,
                f: p.f,
                gd: p.gd,
                g: p.g.clone(),
            });
        }
    };

    let mut prev = Point {
        alpha: 0.0,
        f: f0,
        gd: gd0,
        g: Vec::new(),
    };
    let mut alpha = alpha0;
    let mut evals = 0;
    let (mut lo, mut hi);
    loop {
        let p = probe(obj, alpha)?;
        evals += 1;
        keep_best(&mut best, &p);
        if !armijo(&p) || (evals > 1 && p.f >= prev.f) {
            lo = prev;
            hi = p;
            break;
        }
        if curvature(&p) {
            return Ok((Some(p), true));
        }
        if p.gd >= 0.0 {
            hi = prev;
            lo = p;
            break;
        }
        if evals >= cfg.max_line_search {
            return Ok((best, false));
        }
        alpha = 2.0 * p.alpha;
        prev = p;
    }
    // zoom
    while evals < cfg.max_line_search {
        if (hi.alpha - lo.alpha).abs() <= f64::EPSILON * lo.alpha.abs().max(hi.alpha.abs()) {
            break;
        }
        let a = cubic_step(lo.alpha, lo.f, lo.gd, hi.alpha, hi.f, hi.gd);
        let p = probe(obj, a)?;
        evals += 1;
        keep_best(&mut best, &p);
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Ok((Some(p), true));
            }
            if p.gd * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    Ok((best, false))
}

/// One extra evaluation at the minimizer of the cubic through the start and
/// the accepted point. The cubic is exact on quadratics, so there the search
/// becomes exact. The new point is kept only if it is a better strong-Wolfe
/// point.
#[allow(clippy::too_many_arguments)]
fn refine<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    obj: &mut Objective<'_, F>,
    x: &[f64],
    f0: f64,
    gd0: f64,
    d: &[f64],
    p: Point,
    cfg: &LbfgsConfig,
) -> Result<Point> {
    if p.gd.abs() <= 1e-3 * gd0.abs() {
        return Ok(p);
    }
    let Some(t) = cubic_min(0.0, f0, gd0, p.alpha, p.f, p.gd).filter(|t| *t > 0.0 && *t <= 4.0 * p.alpha) else {
        return Ok(p);
    };
    let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t * di).collect();
    let e = match obj.eval(&trial) {
        Ok(e) => e,
        Err(Error::Divergence { .. }) => return Ok(p),
        Err(e) => return Err(e),
    };
    let gd = dot(&e.g, d);
    if e.f < p.f && e.f <= f0 + cfg.c1 * t * gd0 && gd.abs() <= -cfg.c2 * gd0 {
        Ok(Point {
            alpha: t,
            f: e.f,
            gd,
            g: e.g,
        })
    } else {
        Ok(p)
    }
}

/// Limited-memory BFGS with a strong-Wolfe line search. `f` returns the loss
/// and its gradient; entries flagged in `frozen` never move.
pub fn lbfgs_minimize<F>(f: F, x0: &[f64], cfg: &LbfgsConfig, frozen: Option<&[bool]>) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut obj = Objective {
        f,
        frozen,
        floor: cfg.loss_floor,
        evaluations: 0,
    };
    let mut x = x0.to_vec();
    let first = obj.eval(&x)?;
    let (mut fx, mut g) = (first.f, first.g);
    let mut history = vec![fx];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut stalled = 0;
    let stop = loop {
        let gn = norm(&g);
        if gn <= cfg.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= cfg.max_iter {
            break StopReason::MaxIterations;
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            gd = -gn * gn;
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / g.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let (point, ok) = line_search(&mut obj, &x, fx, gd, &d, alpha0, cfg)?;
        let point = match point {
            Some(p) if ok => Some(refine(&mut obj, &x, fx, gd, &d, p, cfg)?),
            other => other,
        };
        let Some(p) = point else {
            if !pairs.is_empty() {
                pairs.clear();
                continue;
            }
            break StopReason::LineSearchFailed;
        };
        let s: Vec<f64> = d.iter().map(|v| p.alpha * v).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s.clone(), y, 1.0 / sy));
        }
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let decrease = fx - p.f;
        fx = p.f;
        g = p.g;
        iterations += 1;
        history.push(fx);
        if decrease <= 4.0 * f64::EPSILON * fx.abs().max(1e-300) {
            stalled += 1;
            if stalled >= 3 {
                break StopReason::Stalled;
            }
        } else {
            stalled = 0;
        }
        if !ok && pairs.is_empty() {
            break StopReason::LineSearchFailed;
        }
    };
    Ok(LbfgsOutcome {
        grad_norm: norm(&g),
        params: x,
        loss: fx,
        iterations,
        evaluations: obj.evaluations,
        stop,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let diag = [1.0, 2.0, 3.0, 4.0, 5.0];
        let c = [1.0, -2.0, 0.5, 3.0, 0.0];
        let mut f = 0.0;
        let mut g = vec![0.0; 5];
        for i in 0..5 {
            let r = x[i] - c[i];
            f += 0.5 * diag[i] * r * r;
            g[i] = diag[i] * r;
        }
        // a coupling term keeps the Hessian non-diagonal
        f += 0.5 * (x[0] - x[1]).powi(2);
        g[0] += x[0] - x[1];
        g[1] -= x[0] - x[1];
        Ok((f, g))
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn quadratic_converges_fast() {
        let cfg = LbfgsConfig {
            grad_tol: 1e-10,
            ..Default::default()
        };
        let out = lbfgs_minimize(quadratic, &[0.0; 5], &cfg, None).unwrap();
        assert!(out.grad_norm <= 1e-10, "{out:?}");
        assert!(out.iterations <= 10, "{}", out.iterations);
    }

    #[test]
    fn diagonal_quadratics_terminate_early() {
        for k in 0..20 {
            let d: Vec<f64> = (0..5).map(|i| 1.0 + ((i * 7 + k * 3) % 10) as f64).collect();
            let f = |x: &[f64]| {
                let v = x
                    .iter()
                    .zip(&d)
                    .map(|(x, d)| 0.5 * d * (x - 1.0) * (x - 1.0))
                    .sum::<f64>();
                Ok((v, x.iter().zip(&d).map(|(x, d)| d * (x - 1.0)).collect()))
            };
            let cfg = LbfgsConfig {
                grad_tol: 1e-10,
                ..Default::default()
            };
            let out = lbfgs_minimize(f, &[0.0; 5], &cfg, None).unwrap();
            assert!(out.iterations <= 10 && out.grad_norm <= 1e-10, "{out:?}");
        }
    }

    #[test]
    fn rosenbrock_benchmark() {
        let out = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), None).unwrap();
        assert!(out.loss <= 1e-8, "{out:?}");
        assert!(out.iterations <= 200);
    }

    #[test]
    fn already_converged_takes_no_steps() {
        let x = [1.0, -2.0, 0.5, 3.0, 0.0];
        let (_, g) = quadratic(&x).unwrap();
        let cfg = LbfgsConfig {
            grad_tol: 2.0 * norm(&g) + 1e-12,
            ..Default::default()
        };
        let out = lbfgs_minimize(quadratic, &x, &cfg, None).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.params, x.to_vec());
    }

    #[test]
    fn history_is_monotone() {
        let out = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), None).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0] + 4.0 * f64::EPSILON * w[0].abs());
        }
    }

    #[test]
    fn frozen_coordinates_stay() {
        let out = lbfgs_minimize(
            quadratic,
            &[0.0; 5],
            &LbfgsConfig::default(),
            Some(&[false, false, true, false, false]),
        )
        .unwrap();
        assert_eq!(out.params[2], 0.0);
        assert!((out.params[3] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn unbounded_loss_is_reported_as_divergence() {
        let cfg = LbfgsConfig {
            loss_floor: Some(-1e8),
            ..Default::default()
        };
        let res = lbfgs_minimize(
            |x: &[f64]| Ok((-x[0] * x[0] - x[0], vec![-2.0 * x[0] - 1.0])),
            &[1.0],
            &cfg,
            None,
        );
        assert!(matches!(res, Err(Error::Divergence { .. })));
        let res = lbfgs_minimize(|x: &[f64]| Ok(((x[0] * 1e3).exp(), vec![f64::NAN])), &[1.0], &cfg, None);
        assert!(matches!(res, Err(Error::Divergence { .. })));
    }

    #[test]
    fn deterministic() {
        let a = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), None).unwrap();
        let b = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &LbfgsConfig::default(), None).unwrap();
        assert_eq!(a, b);
    }
}
