//! Displacement ansatz `u* = u_R + w·Φ(x)`.
//!
//! The regular part `u_R` is either a piecewise-linear "FEM-like" field on
//! equally spaced knots (1D) or a ReLU perceptron (2D). The jump part is a
//! constant jump vector `w` modulated by the band activation
//!
//! ```text
//! y = x·n,   z = (y − y_p)/c,   Φ = S(z + ½; β) − S(z − ½; β)
//! ```
//!
//! where `S` is the softplus. In 2D the jump is always `γ·t` with
//! `t = (−sin α, cos α)` tangent to the band, so `w·n = 0` holds exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{logistic, ExprGraph, NodeId};
use crate::error::{Error, Result};

/// Band profile `Φ(z)`.
///
/// Evaluated as `Φ = ½ + [ln cosh(β(z+½)/2) − ln cosh(β(z−½)/2)]/β` with
/// the piecewise-linear part of the log-cosh difference split off exactly,
/// which keeps `Φ` inside `[0, 1]`, `Φ(0) = ½` and `Φ(z) + Φ(−z) = 1`
/// free of cancellation.
pub fn band_profile(z: f64, beta: f64) -> f64 {
    let tail = |x: f64| (-2.0 * x.abs()).exp().ln_1p();
    let a = 0.5 * beta * (z + 0.5);
    let b = 0.5 * beta * (z - 0.5);
    let ramp = if z >= 0.5 {
        1.0
    } else if z <= -0.5 {
        0.0
    } else {
        0.5 + z
    };
    ramp + (tail(a) - tail(b)) / beta
}

/// `dΦ/dz`.
pub fn band_profile_slope(z: f64, beta: f64) -> f64 {
    logistic(z + 0.5, beta) - logistic(z - 0.5, beta)
}

/// `d²Φ/dz²`.
pub fn band_profile_curvature(z: f64, beta: f64) -> f64 {
    let a = logistic(z + 0.5, beta);
    let b = logistic(z - 0.5, beta);
    beta * (a * (1.0 - a) - b * (1.0 - b))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandGeometry {
    pub dim: usize,
    /// Angle of the band normal from the +x axis (2D only).
    pub alpha: f64,
    /// Offset of the band midline along the normal.
    pub y_p: f64,
    /// Band width.
    pub c: f64,
    /// Sharpness of the softplus transitions.
    pub beta: f64,
    /// Signed jump magnitude: the 1D jump, or `γ` along the tangent in 2D.
    pub jump: f64,
}

impl BandGeometry {
    pub fn new_1d(y_p: f64, c: f64, beta: f64, jump: f64) -> Self {
        Self {
            dim: 1,
            alpha: 0.0,
            y_p,
            c,
            beta,
            jump,
        }
    }

    pub fn new_2d(alpha: f64, y_p: f64, c: f64, beta: f64, jump: f64) -> Self {
        Self {
            dim: 2,
            alpha,
            y_p,
            c,
            beta,
            jump,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::config("band.width", "band width must be positive"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("band.beta", "sharpness must be positive"));
        }
        Ok(())
    }

    pub fn normal(&self) -> [f64; 2] {
        if self.dim == 1 {
            [1.0, 0.0]
        } else {
            [self.alpha.cos(), self.alpha.sin()]
        }
    }

    pub fn tangent(&self) -> [f64; 2] {
        if self.dim == 1 {
            [1.0, 0.0]
        } else {
            [-self.alpha.sin(), self.alpha.cos()]
        }
    }

    pub fn jump_vector(&self) -> [f64; 2] {
        let t = self.tangent();
        [self.jump * t[0], self.jump * t[1]]
    }

    pub fn jump_norm(&self) -> f64 {
        self.jump.abs()
    }

    /// Normalized coordinate across the band.
    pub fn z(&self, x: &[f64]) -> f64 {
        let n = self.normal();
        let y = if self.dim == 1 { x[0] } else { x[0] * n[0] + x[1] * n[1] };
        (y - self.y_p) / self.c
    }

    /// The point on the band midline closest to `centre`.
    pub fn midline_point(&self, centre: &[f64]) -> [f64; 2] {
        if self.dim == 1 {
            return [self.y_p, 0.0];
        }
        let n = self.normal();
        let off = self.y_p - (centre[0] * n[0] + centre[1] * n[1]);
        [centre[0] + off * n[0], centre[1] + off * n[1]]
    }

    /// Height at which the midline crosses the vertical line `x = x0`
    /// (2D), or the midline position (1D). `None` for a vertical band.
    pub fn crossing_height(&self, x0: f64) -> Option<f64> {
        if self.dim == 1 {
            return Some(self.y_p);
        }
        let (s, c) = self.alpha.sin_cos();
        if s.abs() < 1e-12 {
            None
        } else {
            Some((self.y_p - x0 * c) / s)
        }
    }

    /// Angle between the band normal and the vertical axis, in degrees, in [0, 90].
    pub fn normal_tilt_from_vertical_deg(&self) -> f64 {
        let n = self.normal();
        n[1].abs().min(1.0).acos().to_degrees()
    }
}

/// `Φ(x)` for the given band.
pub fn band_activation(x: &[f64], g: &BandGeometry) -> f64 {
    band_profile(g.z(x), g.beta)
}

/// `∇Φ(x) = Φ'(z)·n / c`.
pub fn band_activation_spatial_gradient(x: &[f64], g: &BandGeometry) -> Vec<f64> {
    let s = band_profile_slope(g.z(x), g.beta) / g.c;
    let n = g.normal();
    n[..g.dim].iter().map(|ni| s * ni).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularField1D {
    pub knots: Vec<f64>,
    pub nodal_values: Vec<f64>,
}

impl RegularField1D {
    pub fn new(length: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::config("network.nodes", "need at least two nodes"));
        }
        if !(length > 0.0) {
            return Err(Error::config("geometry.length", "must be positive"));
        }
        let knots = (0..nodes).map(|k| length * k as f64 / (nodes - 1) as f64).collect();
        Ok(Self {
            knots,
            nodal_values: vec![0.0; nodes],
        })
    }

    pub fn length(&self) -> f64 {
        *self.knots.last().expect("non-empty knots")
    }

    pub fn spacing(&self) -> f64 {
        self.knots[1] - self.knots[0]
    }

    fn check(&self, x: f64) -> Result<()> {
        let l = self.length();
        let tol = 1e-12 * l;
        if x < -tol || x > l + tol || x.is_nan() {
            return Err(Error::Domain { point: vec![x] });
        }
        Ok(())
    }

    /// Element containing `x`. A point on an interior knot belongs to the
    /// element on its left (the ReLU convention `ReLU'(0) = 0`); `x = 0`
    /// belongs to the first element.
    pub fn element_of(&self, x: f64) -> usize {
        let n = self.knots.len();
        let t = x * (n - 1) as f64 / self.length();
        (t.ceil() as isize - 1).clamp(0, n as isize - 2) as usize
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        let e = self.element_of(x);
        let (x0, x1) = (self.knots[e], self.knots[e + 1]);
        let s = (x - x0) / (x1 - x0);
        Ok(self.nodal_values[e] * (1.0 - s) + self.nodal_values[e + 1] * s)
    }

    pub fn slope(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        let e = self.element_of(x);
        Ok((self.nodal_values[e + 1] - self.nodal_values[e]) / (self.knots[e + 1] - self.knots[e]))
    }
}

/// Fully connected ReLU perceptron with a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularField2D {
    pub widths: Vec<usize>,
    /// Per layer: weights (row-major, `out × in`) followed by biases.
    pub params: Vec<f64>,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl RegularField2D {
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths[0] != 2 || *widths.last().unwrap() != 2 {
            return Err(Error::config(
                "network.hidden",
                "perceptron must map 2 inputs to 2 outputs",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::config("network.hidden", "layer widths must be positive"));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; Self::param_count(widths)],
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn xavier(widths: &[usize], seed: u64) -> Result<Self> {
        let mut f = Self::zeros(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut f.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(f)
    }

    /// Offsets of `(weights, biases)` for each layer.
    pub fn layer_offsets(widths: &[usize]) -> Vec<(usize, usize)> {
        let mut off = 0;
        widths
            .windows(2)
            .map(|w| {
                let wo = off;
                let bo = off + w[0] * w[1];
                off = bo + w[1];
                (wo, bo)
            })
            .collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        let inside = (0..2).all(|d| {
            let tol = 1e-12 * (self.upper[d] - self.lower[d]);
            x[d] >= self.lower[d] - tol && x[d] <= self.upper[d] + tol
        });
        if !inside {
            return Err(Error::Domain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Output and Jacobian `J[i][j] = ∂u_i/∂x_j`.
    pub fn eval_with_jacobian(&self, x: &[f64]) -> Result<([f64; 2], [[f64; 2]; 2])> {
        self.check(x)?;
        let offsets = Self::layer_offsets(&self.widths);
        let mut a = x[..2].to_vec();
        let mut t = vec![vec![1.0, 0.0], vec![0.0, 1.0]]; // t[d][i] = ∂a_i/∂x_d
        let last = offsets.len() - 1;
        for (l, &(wo, bo)) in offsets.iter().enumerate() {
            let (nin, nout) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[wo..wo + nin * nout];
            let b = &self.params[bo..bo + nout];
            let mut z = b.to_vec();
            let mut tz = vec![vec![0.0; nout]; 2];
            for o in 0..nout {
                for i in 0..nin {
                    z[o] += w[o * nin + i] * a[i];
                    for d in 0..2 {
                        tz[d][o] += w[o * nin + i] * t[d][i];
                    }
                }
            }
            if l < last {
                for o in 0..nout {
                    if z[o] <= 0.0 {
                        z[o] = 0.0;
                        tz[0][o] = 0.0;
                        tz[1][o] = 0.0;
                    }
                }
            }
            a = z;
            t = tz;
        }
        Ok(([a[0], a[1]], [[t[0][0], t[1][0]], [t[0][1], t[1][1]]]))
    }

    pub fn eval(&self, x: &[f64]) -> Result<[f64; 2]> {
        Ok(self.eval_with_jacobian(x)?.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegularField {
    Fem1d(RegularField1D),
    Mlp2d(RegularField2D),
}

/// The full trainable state: regular field plus band.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub regular: RegularField,
    pub band: BandGeometry,
}

impl FieldModel {
    pub fn bar(length: f64, nodes: usize, band: BandGeometry) -> Result<Self> {
        band.validate()?;
        if band.dim != 1 {
            return Err(Error::config("band", "1D field needs a 1D band"));
        }
        Ok(Self {
            regular: RegularField::Fem1d(RegularField1D::new(length, nodes)?),
            band,
        })
    }

    pub fn shear(widths: &[usize], seed: u64, band: BandGeometry) -> Result<Self> {
        band.validate()?;
        if band.dim != 2 {
            return Err(Error::config("band", "2D field needs a 2D band"));
        }
        Ok(Self {
            regular: RegularField::Mlp2d(RegularField2D::xavier(widths, seed)?),
            band,
        })
    }

    pub fn dim(&self) -> usize {
        self.band.dim
    }

    pub fn regular_param_count(&self) -> usize {
        match &self.regular {
            RegularField::Fem1d(f) => f.nodal_values.len(),
            RegularField::Mlp2d(f) => f.params.len(),
        }
    }

    pub fn band_param_count(&self) -> usize {
        if self.dim() == 1 {
            2
        } else {
            3
        }
    }

    pub fn param_count(&self) -> usize {
        self.regular_param_count() + self.band_param_count()
    }

    /// Flat parameter indices of the band unknowns: 1D `[y_p, jump]`,
    /// 2D `[alpha, y_p, gamma]`.
    pub fn band_param_range(&self) -> std::ops::Range<usize> {
        let r = self.regular_param_count();
        r..r + self.band_param_count()
    }

    pub fn jump_param_index(&self) -> usize {
        self.param_count() - 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = match &self.regular {
            RegularField::Fem1d(f) => f.nodal_values.clone(),
            RegularField::Mlp2d(f) => f.params.clone(),
        };
        if self.dim() == 1 {
            p.extend([self.band.y_p, self.band.jump]);
        } else {
            p.extend([self.band.alpha, self.band.y_p, self.band.jump]);
        }
        p
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::Dimension {
                what: "field parameters",
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        let r = self.regular_param_count();
        match &mut self.regular {
            RegularField::Fem1d(f) => f.nodal_values.copy_from_slice(&theta[..r]),
            RegularField::Mlp2d(f) => f.params.copy_from_slice(&theta[..r]),
        }
        if self.band.dim == 1 {
            self.band.y_p = theta[r];
            self.band.jump = theta[r + 1];
        } else {
            self.band.alpha = theta[r];
            self.band.y_p = theta[r + 1];
            self.band.jump = theta[r + 2];
        }
        Ok(())
    }

    pub fn eval_regular(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.regular {
            RegularField::Fem1d(f) => Ok(vec![f.eval(x[0])?]),
            RegularField::Mlp2d(f) => Ok(f.eval(x)?.to_vec()),
        }
    }

    /// `u*(x) = u_R(x) + w·Φ(x)`.
    pub fn eval_total(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut u = self.eval_regular(x)?;
        let phi = band_activation(x, &self.band);
        let w = self.band.jump_vector();
        for (d, ud) in u.iter_mut().enumerate() {
            *ud += w[d] * phi;
        }
        Ok(u)
    }

    /// `∇u_R`, as `g[i][j] = ∂u_i/∂x_j` padded to 3×3.
    pub fn regular_gradient(&self, x: &[f64]) -> Result<[[f64; 3]; 3]> {
        let mut g = [[0.0; 3]; 3];
        match &self.regular {
            RegularField::Fem1d(f) => g[0][0] = f.slope(x[0])?,
            RegularField::Mlp2d(f) => {
                let (_, j) = f.eval_with_jacobian(x)?;
                for i in 0..2 {
                    g[i][..2].copy_from_slice(&j[i]);
                }
            }
        }
        Ok(g)
    }

    /// `∇u_J = w ⊗ ∇Φ`.
    pub fn jump_gradient(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let w = self.band.jump_vector();
        let gphi = band_activation_spatial_gradient(x, &self.band);
        let mut g = [[0.0; 3]; 3];
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                g[i][j] = w[i] * gphi[j];
            }
        }
        g
    }

    /// Builds `u_R`, `Φ` and `u*` as nodes of `g`, which must have
    /// `dim` inputs and `param_count()` parameters laid out as [`FieldModel::params`].
    pub fn build_graph(&self, g: &mut ExprGraph) -> Result<FieldNodes> {
        if g.n_inputs() != self.dim() || g.n_params() != self.param_count() {
            return Err(Error::Dimension {
                what: "field graph leaves",
                expected: self.param_count(),
                got: g.n_params(),
            });
        }
        let u_regular = match &self.regular {
            RegularField::Fem1d(f) => vec![build_fem_graph(f, g)],
            RegularField::Mlp2d(f) => build_mlp_graph(f, g),
        };
        let r = self.regular_param_count();
        let beta = self.band.beta;
        let (y, n, t, jump, y_p);
        if self.dim() == 1 {
            y = g.input(0);
            y_p = g.param(r);
            jump = g.param(r + 1);
            let one = g.constant(1.0);
            n = vec![one];
            t = vec![one];
        } else {
            let alpha = g.param(r);
            y_p = g.param(r + 1);
            jump = g.param(r + 2);
            let quarter = std::f64::consts::FRAC_PI_2;
            let centre = (self.band.alpha / quarter).round() * quarter;
            let (c, s) = trig_nodes_about(g, alpha, centre);
            let (x0, x1) = (g.input(0), g.input(1));
            y = g.dot(&[x0, x1], &[c, s]);
            let ns = g.neg(s);
            n = vec![c, s];
            t = vec![ns, c];
        }
        let dy = g.sub(y, y_p);
        let z = g.scale(dy, 1.0 / self.band.c);
        let zp = g.add_const(z, 0.5);
        let zm = g.add_const(z, -0.5);
        let sp = g.softplus(zp, beta);
        let sm = g.softplus(zm, beta);
        let phi = g.sub(sp, sm);
        let w: Vec<NodeId> = t.iter().map(|&ti| g.mul(jump, ti)).collect();
        let u_total = u_regular
            .iter()
            .zip(&w)
            .map(|(&ur, &wd)| {
                let uj = g.mul(wd, phi);
                g.add(ur, uj)
            })
            .collect();
        Ok(FieldNodes {
            u_regular,
            phi,
            u_total,
            jump_vector: w,
            normal: n,
            jump,
        })
    }
}

/// Node handles produced by [`FieldModel::build_graph`].
#[derive(Clone, Debug)]
pub struct FieldNodes {
    pub u_regular: Vec<NodeId>,
    pub phi: NodeId,
    pub u_total: Vec<NodeId>,
    pub jump_vector: Vec<NodeId>,
    pub normal: Vec<NodeId>,
    /// Signed jump magnitude parameter.
    pub jump: NodeId,
}

/// Hat-function realization of the piecewise-linear field with ReLU units:
/// `φ_k = [r_{k−1} − 2r_k + r_{k+1}]/Δ` with `r_k = ReLU(x − x_k)`, except
/// that `r_0 = x − x_0` so the left boundary takes the first element's slope.
fn build_fem_graph(f: &RegularField1D, g: &mut ExprGraph) -> NodeId {
    let n = f.knots.len();
    let delta = f.spacing();
    let x = g.input(0);
    let r: Vec<NodeId> = (0..n)
        .map(|k| {
            let shifted = g.add_const(x, -f.knots[k]);
            if k == 0 {
                shifted
            } else {
                g.relu(shifted)
            }
        })
        .collect();
    let mut terms = Vec::with_capacity(n);
    for k in 0..n {
        let mut parts = Vec::new();
        if k == 0 {
            parts.push(g.constant(delta));
        } else {
            parts.push(r[k - 1]);
        }
        parts.push(g.scale(r[k], if k == 0 { -1.0 } else { -2.0 }));
        if k + 1 < n {
            parts.push(r[k + 1]);
        }
        let sum = g.sum(&parts);
        let hat = g.scale(sum, 1.0 / delta);
        terms.push(g.mul(g.param(k), hat));
    }
    g.sum(&terms)
}

fn build_mlp_graph(f: &RegularField2D, g: &mut ExprGraph) -> Vec<NodeId> {
    let offsets = RegularField2D::layer_offsets(&f.widths);
    let mut a = vec![g.input(0), g.input(1)];
    let last = offsets.len() - 1;
    for (l, &(wo, bo)) in offsets.iter().enumerate() {
        let (nin, nout) = (f.widths[l], f.widths[l + 1]);
        let mut next = Vec::with_capacity(nout);
        for o in 0..nout {
            let w: Vec<NodeId> = (0..nin).map(|i| g.param(wo + o * nin + i)).collect();
            let d = g.dot(&w, &a);
            let z = g.add(d, g.param(bo + o));
            next.push(if l < last { g.relu(z) } else { z });
        }
        a = next;
    }
    a
}

/// `cos α` and `sin α` as graph nodes. The node set has no trigonometric
/// primitives, so both are Taylor polynomials in `α − centre`; callers pick
/// `centre` near the angle they evaluate at.
pub(crate) fn trig_nodes_about(g: &mut ExprGraph, alpha: NodeId, centre: f64) -> (NodeId, NodeId) {
    // cos(c + d) and sin(c + d) with d = α − c, from the series of cos d and sin d.
    let d = g.add_const(alpha, -centre);
    let mut cos_d = vec![g.constant(1.0)];
    let mut sin_d = vec![d];
    let mut power = d;
    let mut fact = 1.0;
    for k in 2..=24usize {
        power = g.mul(power, d);
        fact *= k as f64;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let term = g.scale(power, sign / fact);
        if k % 2 == 0 {
            cos_d.push(term);
        } else {
            sin_d.push(term);
        }
    }
    let cd = g.sum(&cos_d);
    let sd = g.sum(&sin_d);
    let (sc, cc) = centre.sin_cos();
    let a = g.scale(cd, cc);
    let b = g.scale(sd, -sc);
    let cos = g.add(a, b);
    let a = g.scale(sd, cc);
    let b = g.scale(cd, sc);
    let sin = g.add(a, b);
    (cos, sin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_band_1d() -> BandGeometry {
        BandGeometry::new_1d(5.0, 1.0, 100.0, 0.0)
    }

    #[test]
    fn activation_midpoint_is_half() {
        for beta in [1.0, 10.0, 100.0, 1000.0] {
            let g = BandGeometry::new_2d(0.3, 0.4, 0.1, beta, 0.0);
            // choose x on the midline
            let n = g.normal();
            let x = [g.y_p * n[0], g.y_p * n[1]];
            assert_eq!(band_profile(0.0, beta), 0.5);
            assert!((band_activation(&x, &g) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn activation_far_field_limits() {
        assert!(band_profile(-10.0, 100.0) <= 1e-8);
        assert!(1.0 - band_profile(10.0, 100.0) <= 1e-8);
    }

    #[test]
    fn activation_gradient_examples() {
        let g = BandGeometry::new_1d(5.0, 1.0, 100.0, 0.0);
        let d = band_activation_spatial_gradient(&[5.0], &g);
        assert!((d[0] - 1.0).abs() < 1e-10);
        assert!((d[0] - (25.0f64).tanh()).abs() < 1e-12);
        let g = BandGeometry::new_1d(5.0, 0.1, 100.0, 0.0);
        let d = band_activation_spatial_gradient(&[5.0], &g);
        assert!((d[0] - 10.0).abs() < 1e-9);
        for z in [-10.0, 10.0] {
            let d = band_activation_spatial_gradient(&[5.0 + 0.1 * z], &g);
            assert!(d[0].abs() <= 1e-8);
        }
    }

    #[test]
    fn peak_slope_is_tanh() {
        for beta in [2.0, 10.0, 100.0] {
            let s = band_profile_slope(0.0, beta);
            assert!((s - (beta / 4.0).tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn regular_1d_examples() {
        let mut f = RegularField1D::new(10.0, 11).unwrap();
        for x in [0.0, 0.37, 5.0, 9.99, 10.0] {
            assert_eq!(f.eval(x).unwrap(), 0.0);
        }
        f.nodal_values = f.knots.clone();
        for i in 0..=100 {
            let x = i as f64 * 0.1;
            assert!((f.eval(x).unwrap() - x).abs() < 1e-12);
            assert!((f.slope(x).unwrap() - 1.0).abs() < 1e-12);
        }
        for (k, &x) in f.knots.iter().enumerate() {
            assert_eq!(f.eval(x).unwrap(), f.nodal_values[k]);
        }
        assert!(matches!(f.eval(-0.5), Err(Error::Domain { .. })));
        assert!(f.eval(10.5).is_err());
        assert!(RegularField1D::new(10.0, 1).is_err());
    }

    #[test]
    fn knot_points_take_left_element() {
        let f = RegularField1D::new(10.0, 11).unwrap();
        assert_eq!(f.element_of(0.0), 0);
        assert_eq!(f.element_of(1.0), 0);
        assert_eq!(f.element_of(1.0000001), 1);
        assert_eq!(f.element_of(10.0), 9);
        assert_eq!(f.element_of(5.0), 4);
    }

    #[test]
    fn regular_2d_zero_weights() {
        let f = RegularField2D::zeros(&[2, 10, 10, 10, 10, 2]).unwrap();
        assert_eq!(f.params.len(), 382);
        assert_eq!(f.eval(&[0.3, 0.8]).unwrap(), [0.0, 0.0]);
        let mut f = f;
        let n = f.params.len();
        f.params[n - 2] = 0.25;
        f.params[n - 1] = -1.5;
        assert_eq!(f.eval(&[0.1, 0.9]).unwrap(), [0.25, -1.5]);
        assert!(f.eval(&[1.5, 0.0]).is_err());
    }

    #[test]
    fn xavier_is_seeded_and_bounded() {
        let a = RegularField2D::xavier(&[2, 10, 10, 2], 7).unwrap();
        let b = RegularField2D::xavier(&[2, 10, 10, 2], 7).unwrap();
        let c = RegularField2D::xavier(&[2, 10, 10, 2], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let offs = RegularField2D::layer_offsets(&a.widths);
        let (wo, bo) = offs[1];
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(a.params[wo..bo].iter().all(|w| w.abs() <= bound));
        assert!(a.params[bo..bo + 10].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn eval_total_examples() {
        let mut m = FieldModel::bar(10.0, 11, default_band_1d()).unwrap();
        for x in [0.0, 4.9, 5.0, 7.2] {
            assert_eq!(m.eval_total(&[x]).unwrap(), m.eval_regular(&[x]).unwrap());
        }
        m.band.jump = 2.0;
        let far = m.eval_total(&[9.5]).unwrap()[0];
        assert!((far - 2.0).abs() < 1e-12);
        let mid = m.eval_total(&[5.0]).unwrap()[0];
        assert!((mid - 1.0).abs() < 1e-15);

        let band = BandGeometry::new_2d(std::f64::consts::FRAC_PI_2, 0.5, 0.1, 100.0, 0.3);
        let mut m = FieldModel::shear(&[2, 10, 10, 2], 1, band).unwrap();
        if let RegularField::Mlp2d(f) = &mut m.regular {
            f.params.iter_mut().for_each(|p| *p = 0.0);
        }
        let top = m.eval_total(&[0.3, 1.0]).unwrap();
        // tangent of a horizontal band with upward normal is (−1, 0)
        assert!((top[0] + 0.3).abs() < 1e-12 && top[1].abs() < 1e-12);
        let mid = m.eval_total(&[0.3, 0.5]).unwrap();
        assert!((mid[0] + 0.15).abs() < 1e-12);
    }

    #[test]
    fn jump_is_tangential() {
        for k in 0..50 {
            let alpha = -3.0 + 0.13 * k as f64;
            let g = BandGeometry::new_2d(alpha, 0.2, 0.1, 100.0, 0.7 - 0.03 * k as f64);
            let w = g.jump_vector();
            let n = g.normal();
            assert!((w[0] * n[0] + w[1] * n[1]).abs() <= 4.0 * f64::EPSILON * g.jump.abs());
        }
    }

    #[test]
    fn params_round_trip() {
        let band = BandGeometry::new_2d(0.2, 0.25, 0.1, 100.0, 0.0);
        let mut m = FieldModel::shear(&[2, 10, 10, 10, 10, 2], 3, band).unwrap();
        assert_eq!(m.param_count(), 385);
        let mut p = m.params();
        p[383] = 0.6;
        p[0] = 1.0;
        m.set_params(&p).unwrap();
        assert_eq!(m.band.y_p, 0.6);
        assert_eq!(m.params(), p);
        assert!(m.set_params(&p[..10]).is_err());
        assert_eq!(m.band_param_range(), 382..385);
    }

    #[test]
    fn trig_series_is_accurate() {
        let mut g = ExprGraph::new(0, 1);
        let a = g.param(0);
        let (c, s) = trig_nodes_about(&mut g, a, std::f64::consts::FRAC_PI_2);
        for k in 0..40 {
            let alpha = -0.5 + 0.09 * k as f64;
            let cv = g.eval(c, &[alpha], &[]).unwrap();
            let sv = g.eval(s, &[alpha], &[]).unwrap();
            assert!((cv - alpha.cos()).abs() < 1e-13, "{alpha}");
            assert!((sv - alpha.sin()).abs() < 1e-13);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn profile_is_monotone(z1 in -20.0f64..20.0, z2 in -20.0f64..20.0, beta in 1.0f64..500.0) {
                let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
                prop_assert!(band_profile(lo, beta) <= band_profile(hi, beta));
            }

            #[test]
            fn profile_is_antisymmetric_about_half(z in -30.0f64..30.0, beta in 1.0f64..500.0) {
                let s = band_profile(z, beta) + band_profile(-z, beta);
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn profile_inside_unit_interval(z in -5.0f64..5.0) {
                let v = band_profile(z, 100.0);
                prop_assert!((0.0..=1.0).contains(&v));
            }

            #[test]
            fn profile_approaches_ramp(z in -3.0f64..3.0, beta in 10.0f64..1000.0) {
                let ramp = (z + 0.5).clamp(0.0, 1.0);
                prop_assert!((band_profile(z, beta) - ramp).abs() <= 2f64.ln() / beta + 1e-15);
            }
        }
    }
}
