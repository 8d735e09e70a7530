//! Energy functional, boundary-condition loss and postprocessing.
//!
//! The total energy is a weighted sum over collocation points of
//! `Ψe(∇ˢu_R) + ½H p² + σ_p(x) p`. The plastic strain is carried entirely by
//! the jump field, so the elastic strain is the symmetric gradient of the
//! regular part alone.
//!
//! This module holds the pointwise reference implementation. The batched
//! evaluator used for training lives in [`crate::kernels`]; an expression-graph
//! route ([`assemble_via_graph`]) serves as an independent check of both.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ExprGraph, NodeId};
use crate::error::{Error, Result};
use crate::fields::{band_profile_slope, FieldModel, RegularField};
use crate::material::{elastic_energy_density, stress, MaterialSpec, Tensor2, YieldProfile};

/// Cross-section of the bar as a function of the axial coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AreaProfile {
    Uniform {
        value: f64,
    },
    /// `min + (max − min)(2x/L − 1)²`: `min` at the midpoint, `max` at both ends.
    Parabolic {
        min: f64,
        max: f64,
        length: f64,
    },
}

impl AreaProfile {
    pub fn tapered_bar() -> Self {
        AreaProfile::Parabolic {
            min: 1.0,
            max: 2.0,
            length: 10.0,
        }
    }

    pub fn at(&self, x: f64) -> f64 {
        match *self {
            AreaProfile::Uniform { value } => value,
            AreaProfile::Parabolic { min, max, length } => {
                let s = 2.0 * x / length - 1.0;
                min + (max - min) * s * s
            }
        }
    }

    pub fn minimum(&self) -> f64 {
        match *self {
            AreaProfile::Uniform { value } => value,
            AreaProfile::Parabolic { min, max, .. } => min.min(max),
        }
    }

    pub fn argmin(&self, length: f64) -> f64 {
        match *self {
            AreaProfile::Uniform { .. } => 0.5 * length,
            AreaProfile::Parabolic { min, max, length: l } => {
                if min <= max {
                    0.5 * l
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫₀ˣ dξ / A(ξ)` in closed form.
    pub fn inverse_integral(&self, x: f64) -> f64 {
        match *self {
            AreaProfile::Uniform { value } => x / value,
            AreaProfile::Parabolic { min, max, length } => {
                let mid = 0.5 * length;
                let k = (max - min) / (mid * mid);
                if k == 0.0 {
                    return x / min;
                }
                let r = (k / min).sqrt();
                ((r * (x - mid)).atan() + (r * mid).atan()) / (min * k).sqrt()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            AreaProfile::Uniform { value } => value > 0.0,
            AreaProfile::Parabolic { min, max, length } => min > 0.0 && max > 0.0 && length > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("geometry.area", "cross-section must be positive"))
        }
    }
}

/// Rule turning the uniform collocation grid into quadrature weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Every point carries the full cell measure.
    Riemann,
    /// Boundary points carry half the cell measure.
    Trapezoid,
}

/// How the equivalent plastic strain is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlasticNorm {
    /// `p = ‖w‖·|∂Φ/∂n|`.
    JumpNorm,
    /// `p = ‖εᵖ‖`, smaller by `1/√2` in 2D.
    TensorNorm,
}

impl PlasticNorm {
    pub fn factor(self, dim: usize) -> f64 {
        match (self, dim) {
            (PlasticNorm::TensorNorm, 2) => std::f64::consts::FRAC_1_SQRT_2,
            _ => 1.0,
        }
    }
}

/// Points on which a displacement is prescribed. `mask[d]` selects which
/// components are constrained.
#[derive(Clone, Debug, PartialEq)]
pub struct BcGroup {
    pub name: String,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<[f64; 2]>,
    pub mask: [bool; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub dim: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Cross-section at each point (1 in 2D); already folded into `weights`.
    pub area: Vec<f64>,
    pub bc_groups: Vec<BcGroup>,
    /// Points per axis.
    pub grid: [usize; 2],
}

fn axis(n: usize, lo: f64, hi: f64, rule: Quadrature) -> (Vec<f64>, Vec<f64>) {
    let cell = (hi - lo) / (n - 1) as f64;
    let xs = (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let ws = (0..n)
        .map(|i| match rule {
            Quadrature::Trapezoid if i == 0 || i + 1 == n => 0.5 * cell,
            _ => cell,
        })
        .collect();
    (xs, ws)
}

impl CollocationSet {
    /// Uniform points on `[0, L]`, fixed at `x = 0` and pulled to `δ` at `x = L`.
    pub fn bar(length: f64, n: usize, area: &AreaProfile, rule: Quadrature, delta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::config("collocation.points", "need at least two points"));
        }
        area.validate()?;
        let (xs, ws) = axis(n, 0.0, length, rule);
        let a: Vec<f64> = xs.iter().map(|&x| area.at(x)).collect();
        Ok(Self {
            dim: 1,
            points: xs.iter().map(|&x| [x, 0.0]).collect(),
            weights: ws.iter().zip(&a).map(|(w, a)| w * a).collect(),
            area: a,
            bc_groups: vec![BcGroup {
                name: "ends".into(),
                points: vec![[0.0, 0.0], [length, 0.0]],
                values: vec![[0.0, 0.0], [delta, 0.0]],
                mask: [true, false],
            }],
            grid: [n, 1],
        })
    }

    /// `nx × ny` grid on the unit square. The bottom edge is fixed, the top
    /// edge moves horizontally by `δ`; with `rollers` the lateral edges
    /// are restrained vertically.
    pub fn shear(nx: usize, ny: usize, rule: Quadrature, rollers: bool, delta: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::config("collocation.grid", "need at least two points per axis"));
        }
        let (xs, wx) = axis(nx, 0.0, 1.0, rule);
        let (ys, wy) = axis(ny, 0.0, 1.0, rule);
        let mut points = Vec::with_capacity(nx * ny);
        let mut weights = Vec::with_capacity(nx * ny);
        for (j, &y) in ys.iter().enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                points.push([x, y]);
                weights.push(wx[i] * wy[j]);
            }
        }
        let mut dirichlet = BcGroup {
            name: "top_bottom".into(),
            points: Vec::new(),
            values: Vec::new(),
            mask: [true, true],
        };
        for &x in &xs {
            dirichlet.points.push([x, 0.0]);
            dirichlet.values.push([0.0, 0.0]);
        }
        for &x in &xs {
            dirichlet.points.push([x, 1.0]);
            dirichlet.values.push([delta, 0.0]);
        }
        let mut bc_groups = vec![dirichlet];
        if rollers {
            let mut side = BcGroup {
                name: "lateral".into(),
                points: Vec::new(),
                values: Vec::new(),
                mask: [false, true],
            };
            for &y in &ys[1..ny - 1] {
                for x in [0.0, 1.0] {
                    side.points.push([x, y]);
                    side.values.push([0.0, 0.0]);
                }
            }
            bc_groups.push(side);
        }
        Ok(Self {
            dim: 2,
            points,
            area: vec![1.0; nx * ny],
            weights,
            bc_groups,
            grid: [nx, ny],
        })
    }

    /// Re-targets the moving boundary to a new load level.
    pub fn set_delta(&mut self, delta: f64) {
        for g in &mut self.bc_groups {
            match g.name.as_str() {
                "ends" => g.values[1][0] = delta,
                "top_bottom" => {
                    for (p, v) in g.points.iter().zip(g.values.iter_mut()) {
                        if p[1] == 1.0 {
                            v[0] = delta;
                        }
                    }
                }
                _ => {}
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub plastic_quadratic: f64,
    pub plastic_linear: f64,
    pub total: f64,
    pub bc_loss: f64,
}

impl EnergyBreakdown {
    pub fn plastic(&self) -> f64 {
        self.plastic_quadratic + self.plastic_linear
    }

    pub fn is_finite(&self) -> bool {
        [
            self.elastic,
            self.plastic_quadratic,
            self.plastic_linear,
            self.total,
            self.bc_loss,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlasticMeasures {
    pub eps_p: Tensor2,
    pub p: f64,
}

/// `εᵖ = ∇ˢ(w Φ)` and the equivalent plastic strain at `x`.
pub fn plastic_measures(fields: &FieldModel, x: &[f64], norm: PlasticNorm) -> PlasticMeasures {
    let dim = fields.dim();
    let eps_p = Tensor2::sym_grad(dim, &fields.jump_gradient(x));
    let p = match norm {
        PlasticNorm::JumpNorm => {
            let slope = band_profile_slope(fields.band.z(x), fields.band.beta) / fields.band.c;
            fields.band.jump_norm() * slope.abs()
        }
        PlasticNorm::TensorNorm => eps_p.norm(),
    };
    PlasticMeasures { eps_p, p }
}

fn divergence(reason: impl Into<String>, b: EnergyBreakdown) -> Error {
    Error::Divergence {
        reason: reason.into(),
        breakdown: Some(Box::new(b)),
    }
}

/// Collocation sum of the energy density; `bc_loss` is filled in as well.
pub fn assemble_energy(
    fields: &FieldModel,
    m: &MaterialSpec,
    q: &CollocationSet,
    norm: PlasticNorm,
) -> Result<EnergyBreakdown> {
    check_dims(fields, m, q)?;
    let h_mod = m.softening();
    let mut b = EnergyBreakdown::default();
    for (pt, &w) in q.points.iter().zip(&q.weights) {
        let x = &pt[..q.dim];
        let eps_e = Tensor2::sym_grad(q.dim, &fields.regular_gradient(x)?);
        let pm = plastic_measures(fields, x, norm);
        b.elastic += w * elastic_energy_density(&eps_e, m);
        b.plastic_quadratic += w * 0.5 * h_mod * pm.p * pm.p;
        b.plastic_linear += w * m.sigma_p_at(x) * pm.p;
    }
    b.total = b.elastic + b.plastic_quadratic + b.plastic_linear;
    b.bc_loss = boundary_loss(fields, q)?;
    if !b.is_finite() {
        return Err(divergence("non-finite energy", b));
    }
    Ok(b)
}

fn check_dims(fields: &FieldModel, m: &MaterialSpec, q: &CollocationSet) -> Result<()> {
    if fields.dim() != q.dim || m.dim != q.dim {
        return Err(Error::Dimension {
            what: "problem dimension",
            expected: q.dim,
            got: fields.dim(),
        });
    }
    Ok(())
}

/// Sum over boundary groups of the mean squared (masked) displacement error.
pub fn boundary_loss(fields: &FieldModel, q: &CollocationSet) -> Result<f64> {
    if q.bc_groups.iter().all(|g| g.points.is_empty()) {
        return Err(Error::Argument("no boundary points".into()));
    }
    let mut total = 0.0;
    for g in &q.bc_groups {
        if g.points.is_empty() {
            continue;
        }
        let mut s = 0.0;
        for (pt, val) in g.points.iter().zip(&g.values) {
            let u = fields.eval_total(&pt[..q.dim])?;
            for d in 0..q.dim {
                if g.mask[d] {
                    let e = u[d] - val[d];
                    s += e * e;
                }
            }
        }
        total += s / g.points.len() as f64;
    }
    Ok(total)
}

/// Whether the gate of the training loss is open, i.e. the energy is included.
pub fn gate_open(bc_loss: f64, lambda: f64) -> bool {
    bc_loss <= lambda
}

/// `L_BC` while `L_BC > λ`, otherwise `L_VF + κ·L_BC` (with `|L_VF|` under
/// the guard).
pub fn gated_value(b: &EnergyBreakdown, lambda: f64, abs_energy_guard: bool, bc_weight: f64) -> f64 {
    if !gate_open(b.bc_loss, lambda) {
        b.bc_loss
    } else {
        let vf = if abs_energy_guard { b.total.abs() } else { b.total };
        vf + bc_weight * b.bc_loss
    }
}

pub fn gated_loss(
    fields: &FieldModel,
    m: &MaterialSpec,
    q: &CollocationSet,
    lambda: f64,
    abs_energy_guard: bool,
    bc_weight: f64,
    norm: PlasticNorm,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::config("protocol.lambda", "must be positive"));
    }
    let b = assemble_energy(fields, m, q, norm)?;
    Ok(gated_value(&b, lambda, abs_energy_guard, bc_weight))
}

/// Per-point field samples. Tensor entries are `[xx, yy, xy]` (1D uses `xx`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRow {
    pub x: [f64; 2],
    pub u: [f64; 2],
    pub eps: [f64; 3],
    pub eps_p: [f64; 3],
    pub p: f64,
    pub sigma: [f64; 3],
    /// Axial force `σA` (1D only).
    pub force: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSamples {
    pub dim: usize,
    pub rows: Vec<SampleRow>,
}

fn components(t: &Tensor2) -> [f64; 3] {
    if t.dim == 1 {
        [t.m[0][0], 0.0, 0.0]
    } else {
        [t.m[0][0], t.m[1][1], t.m[0][1]]
    }
}

pub fn postprocess(
    fields: &FieldModel,
    m: &MaterialSpec,
    q: &CollocationSet,
    norm: PlasticNorm,
) -> Result<FieldSamples> {
    check_dims(fields, m, q)?;
    let dim = q.dim;
    let mut rows = Vec::with_capacity(q.len());
    for (k, pt) in q.points.iter().enumerate() {
        let x = &pt[..dim];
        let u = fields.eval_total(x)?;
        let gr = fields.regular_gradient(x)?;
        let gj = fields.jump_gradient(x);
        let mut g = gr;
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += gj[i][j];
            }
        }
        let eps = Tensor2::sym_grad(dim, &g);
        let eps_e = Tensor2::sym_grad(dim, &gr);
        let pm = plastic_measures(fields, x, norm);
        let sigma = stress(&eps_e, m);
        rows.push(SampleRow {
            x: *pt,
            u: [u[0], if dim == 2 { u[1] } else { 0.0 }],
            eps: components(&eps),
            eps_p: components(&pm.eps_p),
            p: pm.p,
            sigma: components(&sigma),
            force: (dim == 1).then(|| sigma.m[0][0] * q.area[k]),
        });
    }
    Ok(FieldSamples { dim, rows })
}

/// Axial force `E·u_R'·A` at the midpoint of every element of the 1D field.
pub fn element_midpoint_forces(fields: &FieldModel, m: &MaterialSpec, area: &AreaProfile) -> Result<Vec<(f64, f64)>> {
    let RegularField::Fem1d(f) = &fields.regular else {
        return Err(Error::Argument("element forces need the 1D field".into()));
    };
    Ok(f.knots
        .windows(2)
        .enumerate()
        .map(|(e, k)| {
            let xm = 0.5 * (k[0] + k[1]);
            let slope = (f.nodal_values[e + 1] - f.nodal_values[e]) / (k[1] - k[0]);
            (xm, m.youngs * slope * area.at(xm))
        })
        .collect())
}

/// Population standard deviation over the magnitude of the mean.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Energy density at one point as an expression graph whose inputs are the
/// coordinates and whose parameters are the flat field parameters. The
/// elastic strain is built from symbolic input-gradients of `u_R`, so the
/// parameter gradient of the density exercises second-order composition.
pub struct DensityGraph {
    pub graph: ExprGraph,
    pub elastic: NodeId,
    pub plastic_quadratic: NodeId,
    pub plastic_linear: NodeId,
    pub density: NodeId,
}

pub fn density_graph(fields: &FieldModel, m: &MaterialSpec, norm: PlasticNorm) -> Result<DensityGraph> {
    let dim = fields.dim();
    let mut g = ExprGraph::new(dim, fields.param_count());
    let nodes = fields.build_graph(&mut g)?;
    let inputs: Vec<NodeId> = (0..dim).map(|d| g.input(d)).collect();
    let grad_ur: Vec<Vec<NodeId>> = nodes.u_regular.iter().map(|&u| g.gradient(u, &inputs)).collect();
    let elastic = if dim == 1 {
        let e = grad_ur[0][0];
        let e2 = g.mul(e, e);
        g.scale(e2, 0.5 * m.youngs)
    } else {
        let (lambda, mu) = m.lame();
        let e11 = grad_ur[0][0];
        let e22 = grad_ur[1][1];
        let shear = g.add(grad_ur[0][1], grad_ur[1][0]);
        let e12 = g.scale(shear, 0.5);
        let tr = g.add(e11, e22);
        let tr2 = g.mul(tr, tr);
        let vol = g.scale(tr2, 0.5 * lambda);
        let a = g.mul(e11, e11);
        let b = g.mul(e22, e22);
        let c = g.mul(e12, e12);
        let c2 = g.scale(c, 2.0);
        let dev = g.sum(&[a, b, c2]);
        let dev = g.scale(dev, mu);
        g.add(vol, dev)
    };
    let grad_phi = g.gradient(nodes.phi, &inputs);
    let dphi_dn = g.dot(&grad_phi, &nodes.normal[..dim]);
    let dphi_dn = g.abs(dphi_dn);
    let wnorm = g.norm(&nodes.jump_vector[..dim]);
    let p = g.mul(wnorm, dphi_dn);
    let p = g.scale(p, norm.factor(dim));
    let p2 = g.mul(p, p);
    let plastic_quadratic = g.scale(p2, 0.5 * m.softening());
    let sigma_p = match m.yield_stress {
        YieldProfile::Uniform { value } => g.constant(value),
        YieldProfile::ParabolicY { min, max } => {
            let y = if dim == 2 { g.input(1) } else { g.constant(0.5) };
            let s = g.scale(y, 2.0);
            let s = g.add_const(s, -1.0);
            let s2 = g.mul(s, s);
            let s2 = g.scale(s2, max - min);
            g.add_const(s2, min)
        }
    };
    let plastic_linear = g.mul(sigma_p, p);
    let density = g.sum(&[elastic, plastic_quadratic, plastic_linear]);
    Ok(DensityGraph {
        graph: g,
        elastic,
        plastic_quadratic,
        plastic_linear,
        density,
    })
}

/// Energy and its parameter gradient assembled through [`density_graph`].
/// Slow; meant for verification.
pub fn assemble_via_graph(
    fields: &FieldModel,
    m: &MaterialSpec,
    q: &CollocationSet,
    norm: PlasticNorm,
) -> Result<(EnergyBreakdown, Vec<f64>)> {
    check_dims(fields, m, q)?;
    let dg = density_graph(fields, m, norm)?;
    let theta = fields.params();
    let mut grad = vec![0.0; theta.len()];
    let mut b = EnergyBreakdown::default();
    for (pt, &w) in q.points.iter().zip(&q.weights) {
        let x = &pt[..q.dim];
        let vals = dg.graph.eval_nodes(dg.density, &theta, x)?;
        let gb = dg.graph.eval_with_gradients(dg.density, &theta, x)?;
        b.elastic += w * vals[dg.elastic.index()];
        b.plastic_quadratic += w * vals[dg.plastic_quadratic.index()];
        b.plastic_linear += w * vals[dg.plastic_linear.index()];
        for (gk, dk) in grad.iter_mut().zip(&gb.dparams) {
            *gk += w * dk;
        }
    }
    b.total = b.elastic + b.plastic_quadratic + b.plastic_linear;
    b.bc_loss = boundary_loss(fields, q)?;
    Ok((b, grad))
}
