//! Batched loss and gradient evaluation used in training.
//!
//! The energy splits into an elastic part that depends only on the regular
//! field and a plastic part that depends only on the band parameters; the two
//! interact through the boundary loss. The perceptron path propagates value
//! and input-tangent arrays through the layers in chunks of points laid out
//! neuron-major, then runs the reverse sweep over the tangent arrays. All
//! reductions run in a fixed order, so results are bit-reproducible.

use crate::energy::{CollocationSet, EnergyBreakdown, PlasticNorm};
use crate::error::{Error, Result};
use crate::fields::{
    band_profile, band_profile_curvature, band_profile_slope, FieldModel, RegularField, RegularField2D,
};
use crate::material::MaterialSpec;

const CHUNK: usize = 64;

/// Energy breakdown plus the unweighted gradients of the energy and the
/// boundary loss.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerms {
    pub breakdown: EnergyBreakdown,
    pub grad_energy: Vec<f64>,
    pub grad_bc: Vec<f64>,
}

impl LossTerms {
    /// Gated loss and its gradient; the flag reports whether the gate is open.
    pub fn gated(&self, lambda: f64, abs_energy_guard: bool, bc_weight: f64) -> (f64, Vec<f64>, bool) {
        if self.breakdown.bc_loss > lambda {
            (self.breakdown.bc_loss, self.grad_bc.clone(), false)
        } else {
            let (v, g) = self.combined(abs_energy_guard, bc_weight);
            (v, g, true)
        }
    }

    /// `L_VF + κ·L_BC` irrespective of the gate.
    pub fn combined(&self, abs_energy_guard: bool, bc_weight: f64) -> (f64, Vec<f64>) {
        let total = self.breakdown.total;
        let sign = if abs_energy_guard && total < 0.0 { -1.0 } else { 1.0 };
        let value = sign * total + bc_weight * self.breakdown.bc_loss;
        let grad = self
            .grad_energy
            .iter()
            .zip(&self.grad_bc)
            .map(|(e, b)| sign * e + bc_weight * b)
            .collect();
        (value, grad)
    }
}

#[derive(Clone, Debug)]
enum Regular {
    Fem {
        knots: Vec<f64>,
        /// Quadrature weight collected by each element.
        element_weight: Vec<f64>,
    },
    Mlp {
        widths: Vec<usize>,
        offsets: Vec<(usize, usize)>,
    },
}

#[derive(Clone, Debug)]
struct BcBatch {
    xs: Vec<f64>,
    ys: Vec<f64>,
    targets: Vec<[f64; 2]>,
    mask: [bool; 2],
    scale: f64,
}

/// Loss evaluator bound to one field structure, material and collocation set.
#[derive(Clone, Debug)]
pub struct Evaluator {
    dim: usize,
    regular: Regular,
    n_regular: usize,
    n_params: usize,
    beta: f64,
    c: f64,
    h_mod: f64,
    p_factor: f64,
    youngs: f64,
    lambda: f64,
    mu: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    w: Vec<f64>,
    sigma_p: Vec<f64>,
    bc: Vec<BcBatch>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let r = ca.remainder();
    for x in ca {
        acc[0] += x[0];
        acc[1] += x[1];
        acc[2] += x[2];
        acc[3] += x[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for x in r {
        s += x;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Per-layer activation storage for one chunk, neuron-major.
struct MlpBuffers {
    a: Vec<Vec<f64>>,
    tx: Vec<Vec<f64>>,
    ty: Vec<Vec<f64>>,
    adj_x: [Vec<f64>; 2],
    adj_y: [Vec<f64>; 2],
}

impl MlpBuffers {
    fn new(widths: &[usize]) -> Self {
        let layers = widths.len() - 1;
        let maxw = *widths.iter().max().unwrap();
        Self {
            a: (0..layers).map(|l| vec![0.0; widths[l + 1] * CHUNK]).collect(),
            tx: (0..layers).map(|l| vec![0.0; widths[l + 1] * CHUNK]).collect(),
            ty: (0..layers).map(|l| vec![0.0; widths[l + 1] * CHUNK]).collect(),
            adj_x: [vec![0.0; maxw * CHUNK], vec![0.0; maxw * CHUNK]],
            adj_y: [vec![0.0; maxw * CHUNK], vec![0.0; maxw * CHUNK]],
        }
    }
}

/// Forward pass over one chunk; with `tangents` also propagates `∂/∂x`, `∂/∂y`.
fn mlp_forward(
    widths: &[usize],
    offsets: &[(usize, usize)],
    params: &[f64],
    xs: &[f64],
    ys: &[f64],
    tangents: bool,
    buf: &mut MlpBuffers,
) {
    let np = xs.len();
    let last = offsets.len() - 1;
    for (l, &(wo, bo)) in offsets.iter().enumerate() {
        let (nin, nout) = (widths[l], widths[l + 1]);
        let (prev, rest) = buf.a.split_at_mut(l);
        let a_out = &mut rest[0];
        let (tprev_x, trest_x) = buf.tx.split_at_mut(l);
        let (tprev_y, trest_y) = buf.ty.split_at_mut(l);
        let (tx_out, ty_out) = (&mut trest_x[0], &mut trest_y[0]);
        for o in 0..nout {
            let row = &params[wo + o * nin..wo + (o + 1) * nin];
            let z = &mut a_out[o * CHUNK..o * CHUNK + np];
            z.fill(params[bo + o]);
            if l == 0 {
                axpy(z, row[0], xs);
                axpy(z, row[1], ys);
                if tangents {
                    tx_out[o * CHUNK..o * CHUNK + np].fill(row[0]);
                    ty_out[o * CHUNK..o * CHUNK + np].fill(row[1]);
                }
            } else {
                let a_in = &prev[l - 1];
                for (i, &wv) in row.iter().enumerate() {
                    axpy(z, wv, &a_in[i * CHUNK..i * CHUNK + np]);
                }
                if tangents {
                    let tx = &mut tx_out[o * CHUNK..o * CHUNK + np];
                    tx.fill(0.0);
                    for (i, &wv) in row.iter().enumerate() {
                        axpy(tx, wv, &tprev_x[l - 1][i * CHUNK..i * CHUNK + np]);
                    }
                    let ty = &mut ty_out[o * CHUNK..o * CHUNK + np];
                    ty.fill(0.0);
                    for (i, &wv) in row.iter().enumerate() {
                        axpy(ty, wv, &tprev_y[l - 1][i * CHUNK..i * CHUNK + np]);
                    }
                }
            }
            if l < last {
                let base = o * CHUNK;
                for p in 0..np {
                    if a_out[base + p] <= 0.0 {
                        a_out[base + p] = 0.0;
                        if tangents {
                            tx_out[base + p] = 0.0;
                            ty_out[base + p] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Reverse sweep of the tangent arrays. The adjoints of the output tangents
/// must be in `buf.adj_x[0]`/`buf.adj_y[0]` (rows 0 and 1).
fn mlp_tangent_reverse(
    widths: &[usize],
    offsets: &[(usize, usize)],
    params: &[f64],
    np: usize,
    buf: &mut MlpBuffers,
    grad: &mut [f64],
) {
    let last = offsets.len() - 1;
    let mut cur = 0;
    for l in (0..offsets.len()).rev() {
        let (wo, _) = offsets[l];
        let (nin, nout) = (widths[l], widths[l + 1]);
        let nxt = 1 - cur;
        if l < last {
            let a_out = &buf.a[l];
            for o in 0..nout {
                let base = o * CHUNK;
                for p in 0..np {
                    if a_out[base + p] <= 0.0 {
                        buf.adj_x[cur][base + p] = 0.0;
                        buf.adj_y[cur][base + p] = 0.0;
                    }
                }
            }
        }
        if l == 0 {
            for o in 0..nout {
                let gx = &buf.adj_x[cur][o * CHUNK..o * CHUNK + np];
                let gy = &buf.adj_y[cur][o * CHUNK..o * CHUNK + np];
                grad[wo + o * nin] += sum(gx);
                grad[wo + o * nin + 1] += sum(gy);
            }
            break;
        }
        let (tx_in, ty_in) = (&buf.tx[l - 1], &buf.ty[l - 1]);
        let [ax0, ax1] = &mut buf.adj_x;
        let [ay0, ay1] = &mut buf.adj_y;
        let (gx_cur, gx_nxt) = if cur == 0 { (&*ax0, ax1) } else { (&*ax1, ax0) };
        let (gy_cur, gy_nxt) = if cur == 0 { (&*ay0, ay1) } else { (&*ay1, ay0) };
        for i in 0..nin {
            gx_nxt[i * CHUNK..i * CHUNK + np].fill(0.0);
            gy_nxt[i * CHUNK..i * CHUNK + np].fill(0.0);
        }
        for o in 0..nout {
            let gx = &gx_cur[o * CHUNK..o * CHUNK + np];
            let gy = &gy_cur[o * CHUNK..o * CHUNK + np];
            for i in 0..nin {
                let txi = &tx_in[i * CHUNK..i * CHUNK + np];
                let tyi = &ty_in[i * CHUNK..i * CHUNK + np];
                grad[wo + o * nin + i] += dot(gx, txi) + dot(gy, tyi);
                let wv = params[wo + o * nin + i];
                axpy(&mut gx_nxt[i * CHUNK..i * CHUNK + np], wv, gx);
                axpy(&mut gy_nxt[i * CHUNK..i * CHUNK + np], wv, gy);
            }
        }
        cur = nxt;
    }
}

/// Reverse sweep of the values given output adjoints in `buf.adj_x[0]` rows 0 and 1.
fn mlp_value_reverse(
    widths: &[usize],
    offsets: &[(usize, usize)],
    params: &[f64],
    xs: &[f64],
    ys: &[f64],
    buf: &mut MlpBuffers,
    grad: &mut [f64],
) {
    let np = xs.len();
    let last = offsets.len() - 1;
    let mut cur = 0;
    for l in (0..offsets.len()).rev() {
        let (wo, bo) = offsets[l];
        let (nin, nout) = (widths[l], widths[l + 1]);
        if l < last {
            let a_out = &buf.a[l];
            for o in 0..nout {
                let base = o * CHUNK;
                for p in 0..np {
                    if a_out[base + p] <= 0.0 {
                        buf.adj_x[cur][base + p] = 0.0;
                    }
                }
            }
        }
        let [g0, g1] = &mut buf.adj_x;
        let (g_cur, g_nxt) = if cur == 0 { (&*g0, g1) } else { (&*g1, g0) };
        if l > 0 {
            for i in 0..nin {
                g_nxt[i * CHUNK..i * CHUNK + np].fill(0.0);
            }
        }
        for o in 0..nout {
            let g = &g_cur[o * CHUNK..o * CHUNK + np];
            grad[bo + o] += sum(g);
            if l == 0 {
                grad[wo + o * nin] += dot(g, xs);
                grad[wo + o * nin + 1] += dot(g, ys);
            } else {
                let a_in = &buf.a[l - 1];
                for i in 0..nin {
                    grad[wo + o * nin + i] += dot(g, &a_in[i * CHUNK..i * CHUNK + np]);
                    axpy(&mut g_nxt[i * CHUNK..i * CHUNK + np], params[wo + o * nin + i], g);
                }
            }
        }
        cur = 1 - cur;
    }
}

impl Evaluator {
    pub fn new(model: &FieldModel, m: &MaterialSpec, q: &CollocationSet, norm: PlasticNorm) -> Result<Self> {
        if model.dim() != q.dim || m.dim != q.dim {
            return Err(Error::Dimension {
                what: "problem dimension",
                expected: q.dim,
                got: model.dim(),
            });
        }
        let (lambda, mu) = m.lame();
        let xs: Vec<f64> = q.points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = q.points.iter().map(|p| p[1]).collect();
        let sigma_p = q.points.iter().map(|p| m.sigma_p_at(&p[..q.dim])).collect();
        let regular = match &model.regular {
            RegularField::Fem1d(f) => {
                let mut element_weight = vec![0.0; f.knots.len() - 1];
                for (&x, &w) in xs.iter().zip(&q.weights) {
                    element_weight[f.element_of(x)] += w;
                }
                Regular::Fem {
                    knots: f.knots.clone(),
                    element_weight,
                }
            }
            RegularField::Mlp2d(f) => Regular::Mlp {
                widths: f.widths.clone(),
                offsets: RegularField2D::layer_offsets(&f.widths),
            },
        };
        let bc = q
            .bc_groups
            .iter()
            .filter(|g| !g.points.is_empty())
            .map(|g| BcBatch {
                xs: g.points.iter().map(|p| p[0]).collect(),
                ys: g.points.iter().map(|p| p[1]).collect(),
                targets: g.values.clone(),
                mask: g.mask,
                scale: 1.0 / g.points.len() as f64,
            })
            .collect();
        Ok(Self {
            dim: q.dim,
            regular,
            n_regular: model.regular_param_count(),
            n_params: model.param_count(),
            beta: model.band.beta,
            c: model.band.c,
            h_mod: m.softening(),
            p_factor: norm.factor(q.dim),
            youngs: m.youngs,
            lambda,
            mu,
            xs,
            ys,
            w: q.weights.clone(),
            sigma_p,
            bc,
        })
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn evaluate(&self, theta: &[f64], with_grad: bool) -> Result<LossTerms> {
        if theta.len() != self.n_params {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.n_params,
                got: theta.len(),
            });
        }
        let n = if with_grad { self.n_params } else { 0 };
        let mut ge = vec![0.0; n];
        let mut gb = vec![0.0; n];
        let mut b = EnergyBreakdown {
            elastic: self.elastic(theta, with_grad.then_some(&mut ge[..]))?,
            ..Default::default()
        };
        let (pq, pl) = self.plastic(theta, with_grad.then_some(&mut ge[..]));
        b.plastic_quadratic = pq;
        b.plastic_linear = pl;
        b.total = b.elastic + pq + pl;
        b.bc_loss = self.boundary(theta, with_grad.then_some(&mut gb[..]));
        if !b.is_finite() {
            return Err(Error::Divergence {
                reason: "non-finite energy".into(),
                breakdown: Some(Box::new(b)),
            });
        }
        if ge.iter().chain(&gb).any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                reason: "non-finite gradient".into(),
                breakdown: Some(Box::new(b)),
            });
        }
        Ok(LossTerms {
            breakdown: b,
            grad_energy: ge,
            grad_bc: gb,
        })
    }

    fn elastic(&self, theta: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        match &self.regular {
            Regular::Fem { knots, element_weight } => {
                let mut e = 0.0;
                let mut grad = grad;
                for (k, &we) in element_weight.iter().enumerate() {
                    let dx = knots[k + 1] - knots[k];
                    let s = (theta[k + 1] - theta[k]) / dx;
                    e += 0.5 * self.youngs * s * s * we;
                    if let Some(g) = grad.as_deref_mut() {
                        let d = self.youngs * s * we / dx;
                        g[k + 1] += d;
                        g[k] -= d;
                    }
                }
                Ok(e)
            }
            Regular::Mlp { widths, offsets } => {
                let params = &theta[..self.n_regular];
                let mut buf = MlpBuffers::new(widths);
                let mut grad = grad;
                let mut energy = 0.0;
                let (lam, mu) = (self.lambda, self.mu);
                let last = offsets.len() - 1;
                for start in (0..self.xs.len()).step_by(CHUNK) {
                    let end = (start + CHUNK).min(self.xs.len());
                    let np = end - start;
                    let (xs, ys, ws) = (&self.xs[start..end], &self.ys[start..end], &self.w[start..end]);
                    mlp_forward(widths, offsets, params, xs, ys, true, &mut buf);
                    let (tx, ty) = (&buf.tx[last], &buf.ty[last]);
                    let mut chunk_energy = 0.0;
                    for p in 0..np {
                        let (ux, vx) = (tx[p], tx[CHUNK + p]);
                        let (uy, vy) = (ty[p], ty[CHUNK + p]);
                        let e12 = 0.5 * (uy + vx);
                        let tr = ux + vy;
                        let psi = 0.5 * lam * tr * tr + mu * (ux * ux + vy * vy + 2.0 * e12 * e12);
                        chunk_energy += ws[p] * psi;
                        if grad.is_some() {
                            let s11 = lam * tr + 2.0 * mu * ux;
                            let s22 = lam * tr + 2.0 * mu * vy;
                            let s12 = 2.0 * mu * e12;
                            buf.adj_x[0][p] = ws[p] * s11;
                            buf.adj_y[0][p] = ws[p] * s12;
                            buf.adj_x[0][CHUNK + p] = ws[p] * s12;
                            buf.adj_y[0][CHUNK + p] = ws[p] * s22;
                        }
                    }
                    energy += chunk_energy;
                    if let Some(g) = grad.as_deref_mut() {
                        mlp_tangent_reverse(widths, offsets, params, np, &mut buf, &mut g[..self.n_regular]);
                    }
                }
                Ok(energy)
            }
        }
    }

    fn band(&self, theta: &[f64]) -> (f64, f64, f64) {
        let r = self.n_regular;
        if self.dim == 1 {
            (0.0, theta[r], theta[r + 1])
        } else {
            (theta[r], theta[r + 1], theta[r + 2])
        }
    }

    fn plastic(&self, theta: &[f64], grad: Option<&mut [f64]>) -> (f64, f64) {
        let (alpha, y_p, jump) = self.band(theta);
        let (sa, ca) = if self.dim == 1 { (0.0, 1.0) } else { alpha.sin_cos() };
        let inv_c = 1.0 / self.c;
        let jabs = jump.abs();
        let jsign = if jump > 0.0 {
            1.0
        } else if jump < 0.0 {
            -1.0
        } else {
            0.0
        };
        let (mut quad, mut lin) = (0.0, 0.0);
        let (mut d_alpha, mut d_yp, mut d_jump) = (0.0, 0.0, 0.0);
        let want = grad.is_some();
        for k in 0..self.xs.len() {
            let (x, y) = (self.xs[k], self.ys[k]);
            let z = (x * ca + y * sa - y_p) * inv_c;
            if z.abs() > 40.0 / self.beta + 1.0 {
                // Both logistic terms are saturated to within e^{-40}.
                continue;
            }
            let slope = band_profile_slope(z, self.beta);
            let p = self.p_factor * jabs * slope * inv_c;
            let w = self.w[k];
            quad += w * 0.5 * self.h_mod * p * p;
            lin += w * self.sigma_p[k] * p;
            if want {
                let gp = w * (self.h_mod * p + self.sigma_p[k]);
                let dp_dz = self.p_factor * jabs * band_profile_curvature(z, self.beta) * inv_c;
                d_jump += gp * self.p_factor * jsign * slope * inv_c;
                d_yp -= gp * dp_dz * inv_c;
                d_alpha += gp * dp_dz * (-x * sa + y * ca) * inv_c;
            }
        }
        if let Some(g) = grad {
            let r = self.n_regular;
            if self.dim == 1 {
                g[r] += d_yp;
                g[r + 1] += d_jump;
            } else {
                g[r] += d_alpha;
                g[r + 1] += d_yp;
                g[r + 2] += d_jump;
            }
        }
        (quad, lin)
    }

    fn boundary(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (alpha, y_p, jump) = self.band(theta);
        let (sa, ca) = if self.dim == 1 { (0.0, 1.0) } else { alpha.sin_cos() };
        let t = if self.dim == 1 { [1.0, 0.0] } else { [-sa, ca] };
        let inv_c = 1.0 / self.c;
        let mut grad = grad;
        let mut total = 0.0;
        let (mut d_alpha, mut d_yp, mut d_jump) = (0.0, 0.0, 0.0);
        for g in &self.bc {
            let npts = g.xs.len();
            let mut ur = vec![[0.0f64; 2]; npts];
            self.regular_values(theta, &g.xs, &g.ys, &mut ur);
            let mut adj = vec![[0.0f64; 2]; npts];
            let mut s = 0.0;
            for k in 0..npts {
                let (x, y) = (g.xs[k], g.ys[k]);
                let z = (x * ca + y * sa - y_p) * inv_c;
                let phi = band_profile(z, self.beta);
                let mut e = [0.0; 2];
                for d in 0..self.dim {
                    if g.mask[d] {
                        e[d] = ur[k][d] + jump * t[d] * phi - g.targets[k][d];
                        s += e[d] * e[d];
                    }
                }
                if grad.is_some() {
                    let a = [2.0 * g.scale * e[0], 2.0 * g.scale * e[1]];
                    adj[k] = a;
                    let at = a[0] * t[0] + a[1] * t[1];
                    let slope = band_profile_slope(z, self.beta);
                    d_jump += at * phi;
                    d_yp -= jump * at * slope * inv_c;
                    if self.dim == 2 {
                        // dt/dα = −n
                        let an = a[0] * ca + a[1] * sa;
                        d_alpha += jump * (-an * phi + at * slope * (-x * sa + y * ca) * inv_c);
                    }
                }
            }
            total += s * g.scale;
            if let Some(gr) = grad.as_deref_mut() {
                self.regular_value_adjoint(theta, &g.xs, &g.ys, &adj, gr);
            }
        }
        if let Some(gr) = grad {
            let r = self.n_regular;
            if self.dim == 1 {
                gr[r] += d_yp;
                gr[r + 1] += d_jump;
            } else {
                gr[r] += d_alpha;
                gr[r + 1] += d_yp;
                gr[r + 2] += d_jump;
            }
        }
        total
    }

    fn fem_locate(knots: &[f64], x: f64) -> (usize, f64) {
        let n = knots.len();
        let l = knots[n - 1];
        let e = ((x * (n - 1) as f64 / l).ceil() as isize - 1).clamp(0, n as isize - 2) as usize;
        (e, (x - knots[e]) / (knots[e + 1] - knots[e]))
    }

    fn regular_values(&self, theta: &[f64], xs: &[f64], ys: &[f64], out: &mut [[f64; 2]]) {
        match &self.regular {
            Regular::Fem { knots, .. } => {
                for (k, &x) in xs.iter().enumerate() {
                    let (e, s) = Self::fem_locate(knots, x);
                    out[k][0] = theta[e] * (1.0 - s) + theta[e + 1] * s;
                }
            }
            Regular::Mlp { widths, offsets } => {
                let mut buf = MlpBuffers::new(widths);
                let last = offsets.len() - 1;
                for start in (0..xs.len()).step_by(CHUNK) {
                    let end = (start + CHUNK).min(xs.len());
                    mlp_forward(
                        widths,
                        offsets,
                        &theta[..self.n_regular],
                        &xs[start..end],
                        &ys[start..end],
                        false,
                        &mut buf,
                    );
                    for p in 0..end - start {
                        out[start + p] = [buf.a[last][p], buf.a[last][CHUNK + p]];
                    }
                }
            }
        }
    }

    fn regular_value_adjoint(&self, theta: &[f64], xs: &[f64], ys: &[f64], adj: &[[f64; 2]], grad: &mut [f64]) {
        match &self.regular {
            Regular::Fem { knots, .. } => {
                for (k, &x) in xs.iter().enumerate() {
                    let (e, s) = Self::fem_locate(knots, x);
                    grad[e] += adj[k][0] * (1.0 - s);
                    grad[e + 1] += adj[k][0] * s;
                }
            }
            Regular::Mlp { widths, offsets } => {
                let mut buf = MlpBuffers::new(widths);
                let params = &theta[..self.n_regular];
                for start in (0..xs.len()).step_by(CHUNK) {
                    let end = (start + CHUNK).min(xs.len());
                    let (cx, cy) = (&xs[start..end], &ys[start..end]);
                    mlp_forward(widths, offsets, params, cx, cy, false, &mut buf);
                    for p in 0..end - start {
                        buf.adj_x[0][p] = adj[start + p][0];
                        buf.adj_x[0][CHUNK + p] = adj[start + p][1];
                    }
                    mlp_value_reverse(widths, offsets, params, cx, cy, &mut buf, &mut grad[..self.n_regular]);
                }
            }
        }
    }
}
