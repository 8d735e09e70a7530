//! Constitutive relations: linear elasticity, the induced cohesive law and the
//! yield function used as a post-hoc diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Second-order tensor in 1, 2 or 3 dimensions, stored padded to 3×3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor2 {
    pub dim: usize,
    pub m: [[f64; 3]; 3],
}

impl Tensor2 {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=3).contains(&dim));
        Self { dim, m: [[0.0; 3]; 3] }
    }

    pub fn scalar(v: f64) -> Self {
        let mut t = Self::zeros(1);
        t.m[0][0] = v;
        t
    }

    pub fn from_2d(xx: f64, yy: f64, xy: f64) -> Self {
        let mut t = Self::zeros(2);
        t.m[0][0] = xx;
        t.m[1][1] = yy;
        t.m[0][1] = xy;
        t.m[1][0] = xy;
        t
    }

    /// Symmetric part of a displacement gradient `g[i][j] = ∂u_i/∂x_j`.
    pub fn sym_grad(dim: usize, g: &[[f64; 3]; 3]) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                t.m[i][j] = 0.5 * (g[i][j] + g[j][i]);
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn ddot(&self, other: &Tensor2) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * other.m[i][j];
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn deviator(&self) -> Self {
        let mean = self.trace() / self.dim as f64;
        let mut d = *self;
        for i in 0..self.dim {
            d.m[i][i] -= mean;
        }
        d
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| (self.m[i][j] - self.m[j][i]).abs() <= tol))
    }

    pub fn add(&self, other: &Tensor2) -> Self {
        let mut t = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] += other.m[i][j];
            }
        }
        t
    }
}

/// Yield stress as a function of position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YieldProfile {
    Uniform {
        value: f64,
    },
    /// `min + (max − min)(2y − 1)²` on the unit square: `min` along the
    /// horizontal centre line, `max` on the top and bottom edges.
    ParabolicY {
        min: f64,
        max: f64,
    },
}

impl YieldProfile {
    pub fn at(&self, x: &[f64]) -> f64 {
        match *self {
            YieldProfile::Uniform { value } => value,
            YieldProfile::ParabolicY { min, max } => {
                let y = x.get(1).copied().unwrap_or(0.5);
                let s = 2.0 * y - 1.0;
                min + (max - min) * s * s
            }
        }
    }

    /// Smallest yield stress over the domain.
    pub fn minimum(&self) -> f64 {
        match *self {
            YieldProfile::Uniform { value } => value,
            YieldProfile::ParabolicY { min, max } => min.min(max),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialSpec {
    pub youngs: f64,
    pub poisson: f64,
    pub yield_stress: YieldProfile,
    /// Intrinsic softening modulus H̄ (stress per length, negative for softening).
    pub hbar: f64,
    /// Regularization bandwidth.
    pub h: f64,
    pub dim: usize,
}

impl MaterialSpec {
    pub fn bar_default() -> Self {
        Self {
            youngs: 2.0,
            poisson: 0.0,
            yield_stress: YieldProfile::Uniform { value: 1.0 },
            hbar: -2.0 / 11.0,
            h: 1.0,
            dim: 1,
        }
    }

    pub fn shear_default(h: f64) -> Self {
        Self {
            youngs: 5.6,
            poisson: 0.4,
            yield_stress: YieldProfile::ParabolicY { min: 0.75, max: 1.0 },
            hbar: -1.0,
            h,
            dim: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs > 0.0) {
            return Err(Error::config("material.E", "must be positive"));
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return Err(Error::config("material.nu", "must lie in (-1, 0.5)"));
        }
        if !(self.h > 0.0) {
            return Err(Error::config("material.h", "must be positive"));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::config("material.dim", "must be 1, 2 or 3"));
        }
        match self.yield_stress {
            YieldProfile::Uniform { value } if !(value > 0.0) => {
                return Err(Error::config("material.sigma_p.value", "must be positive"))
            }
            YieldProfile::ParabolicY { min, max } if !(min > 0.0 && max > 0.0) => {
                return Err(Error::config("material.sigma_p", "min and max must be positive"))
            }
            _ => {}
        }
        if !self.hbar.is_finite() {
            return Err(Error::config("material.Hbar", "must be finite"));
        }
        Ok(())
    }

    /// Softening modulus `H = h·H̄`.
    pub fn softening(&self) -> f64 {
        self.h * self.hbar
    }

    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs, self.poisson);
        let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mu = e / (2.0 * (1.0 + nu));
        (lambda, mu)
    }

    pub fn shear_modulus(&self) -> f64 {
        self.lame().1
    }

    pub fn sigma_p_at(&self, x: &[f64]) -> f64 {
        self.yield_stress.at(x)
    }

    /// `f = ‖dev σ‖ − k_N(σ_p + H p)` at position `x`. In 1D `‖dev σ‖` is
    /// taken as `|σ|`, so onset happens at `σ = σ_p`.
    pub fn yield_diagnostic(&self, sigma: &Tensor2, p: f64, x: &[f64]) -> Result<f64> {
        if p < 0.0 {
            return Err(Error::Argument(format!("negative plastic strain {p}")));
        }
        let k = k_factor(self.dim)?;
        let dev_norm = if self.dim == 1 {
            sigma.m[0][0].abs()
        } else {
            sigma.deviator().norm()
        };
        Ok(dev_norm - k * (self.sigma_p_at(x) + self.softening() * p))
    }
}

/// Dimension factor relating the deviatoric stress norm to the uniaxial yield stress.
pub fn k_factor(dim: usize) -> Result<f64> {
    match dim {
        1 => Ok(1.0),
        2 | 3 => Ok(((dim - 1) as f64).sqrt() / dim as f64),
        _ => Err(Error::config(
            "material.dim",
            format!("spatial dimension {dim} not in {{1, 2, 3}}"),
        )),
    }
}

/// Elastic energy density. 1D: `½Eε²`; otherwise isotropic
/// `½λ(tr ε)² + μ ε:ε` (plane strain in 2D).
pub fn elastic_energy_density(eps: &Tensor2, m: &MaterialSpec) -> f64 {
    if eps.dim == 1 {
        let e = eps.m[0][0];
        return 0.5 * m.youngs * e * e;
    }
    let (lambda, mu) = m.lame();
    let tr = eps.trace();
    0.5 * lambda * tr * tr + mu * eps.ddot(eps)
}

pub fn stress(eps: &Tensor2, m: &MaterialSpec) -> Tensor2 {
    if eps.dim == 1 {
        return Tensor2::scalar(m.youngs * eps.m[0][0]);
    }
    let (lambda, mu) = m.lame();
    let tr = eps.trace();
    let mut s = Tensor2::zeros(eps.dim);
    for i in 0..eps.dim {
        for j in 0..eps.dim {
            s.m[i][j] = 2.0 * mu * eps.m[i][j];
        }
        s.m[i][i] += lambda * tr;
    }
    s
}

fn check_jump(j: f64) -> Result<()> {
    if j < 0.0 || j.is_nan() {
        return Err(Error::Argument(format!("jump magnitude must be non-negative, got {j}")));
    }
    Ok(())
}

/// Cohesive energy per unit surface `ψ(j) = ½H̄j² + σ_p j`.
pub fn cohesive_energy_density(j: f64, hbar: f64, sigma_p: f64) -> Result<f64> {
    check_jump(j)?;
    Ok(0.5 * hbar * j * j + sigma_p * j)
}

/// Cohesive traction magnitude `t_c(j) = σ_p + H̄j` along the jump direction.
pub fn cohesive_traction(j: f64, hbar: f64, sigma_p: f64) -> Result<f64> {
    check_jump(j)?;
    Ok(sigma_p + hbar * j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ExprGraph;

    fn shear_material() -> MaterialSpec {
        MaterialSpec::shear_default(0.1)
    }

    #[test]
    fn k_factor_values() {
        assert_eq!(k_factor(1).unwrap(), 1.0);
        assert_eq!(k_factor(2).unwrap(), 0.5);
        assert_eq!(k_factor(3).unwrap(), 2f64.sqrt() / 3.0);
        assert!(matches!(k_factor(4), Err(Error::Config { .. })));
        assert!(k_factor(0).is_err());
    }

    #[test]
    fn default_shear_material_has_unit_shear_modulus_two() {
        let (lambda, mu) = shear_material().lame();
        assert!((mu - 2.0).abs() < 1e-14);
        assert!((lambda - 8.0).abs() < 1e-12);
    }

    #[test]
    fn elastic_energy_examples() {
        let bar = MaterialSpec::bar_default();
        assert_eq!(elastic_energy_density(&Tensor2::zeros(1), &bar), 0.0);
        assert_eq!(elastic_energy_density(&Tensor2::scalar(1.0), &bar), 1.0);
        let gamma = 0.3;
        let eps = Tensor2::from_2d(0.0, 0.0, gamma / 2.0);
        let psi = elastic_energy_density(&eps, &shear_material());
        assert!((psi - 0.09).abs() < 1e-14, "{psi}");
    }

    #[test]
    fn stress_examples() {
        let bar = MaterialSpec::bar_default();
        assert_eq!(stress(&Tensor2::zeros(1), &bar).m[0][0], 0.0);
        assert_eq!(stress(&Tensor2::scalar(0.5), &bar).m[0][0], 1.0);
        let s = stress(&Tensor2::from_2d(0.0, 0.0, 0.15), &shear_material());
        assert!((s.m[0][1] - 0.6).abs() < 1e-14);
        assert!(s.is_symmetric(0.0));
        assert!(stress(&Tensor2::zeros(2), &shear_material()).norm() == 0.0);
    }

    #[test]
    fn stress_is_ad_gradient_of_energy() {
        // Ψ as a graph in the four in-plane strain components.
        let m = shear_material();
        let (lambda, mu) = m.lame();
        let mut g = ExprGraph::new(4, 0);
        let e: Vec<_> = (0..4).map(|i| g.input(i)).collect();
        let tr = g.add(e[0], e[3]);
        let tr2 = g.mul(tr, tr);
        let vol = g.scale(tr2, 0.5 * lambda);
        let sq = g.dot(&e, &e);
        let dev = g.scale(sq, mu);
        let psi = g.add(vol, dev);
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let (xx, yy, xy) = (next(), next(), next());
            let b = g.eval_with_gradients(psi, &[], &[xx, xy, xy, yy]).unwrap();
            let s = stress(&Tensor2::from_2d(xx, yy, xy), &m);
            assert!((b.dinputs[0] - s.m[0][0]).abs() <= 1e-12);
            assert!((b.dinputs[1] - s.m[0][1]).abs() <= 1e-12);
            assert!((b.dinputs[3] - s.m[1][1]).abs() <= 1e-12);
            let direct = elastic_energy_density(&Tensor2::from_2d(xx, yy, xy), &m);
            assert!((b.value - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn cohesive_examples() {
        assert_eq!(cohesive_energy_density(0.0, -1.0, 1.0).unwrap(), 0.0);
        let psi = cohesive_energy_density(5.5, -2.0 / 11.0, 1.0).unwrap();
        assert!((psi - 2.75).abs() < 1e-14);
        let psi = cohesive_energy_density(0.5, -1.0, 0.75).unwrap();
        assert!((psi - 0.25).abs() < 1e-15);
        assert_eq!(cohesive_traction(0.0, -2.0 / 11.0, 1.0).unwrap(), 1.0);
        assert!(cohesive_traction(5.5, -2.0 / 11.0, 1.0).unwrap().abs() < 1e-15);
        assert!((cohesive_traction(0.375, -1.0, 0.75).unwrap() - 0.375).abs() < 1e-15);
        assert!(matches!(
            cohesive_energy_density(-0.1, -1.0, 1.0),
            Err(Error::Argument(_))
        ));
        assert!(cohesive_traction(-1e-9, -1.0, 1.0).is_err());
    }

    #[test]
    fn traction_is_derivative_of_cohesive_energy() {
        let (hbar, sp) = (-2.0 / 11.0, 1.0);
        for i in 0..100 {
            let j = 0.05 + 0.06 * i as f64;
            let eps = 1e-6;
            let fd = (cohesive_energy_density(j + eps, hbar, sp).unwrap()
                - cohesive_energy_density(j - eps, hbar, sp).unwrap())
                / (2.0 * eps);
            let t = cohesive_traction(j, hbar, sp).unwrap();
            // ψ is quadratic, so the central difference is exact up to rounding.
            assert!((fd - t).abs() < 1e-8, "j={j}");
        }
    }

    #[test]
    fn cohesive_energy_peaks_at_full_softening() {
        let (hbar, sp): (f64, f64) = (-2.0 / 11.0, 1.0);
        let jstar = -sp / hbar;
        assert!((jstar - 5.5).abs() < 1e-14);
        assert!(cohesive_traction(jstar, hbar, sp).unwrap().abs() < 1e-14);
        let peak = cohesive_energy_density(jstar, hbar, sp).unwrap();
        for d in [1e-3, 0.1, 1.0] {
            assert!(cohesive_energy_density(jstar + d, hbar, sp).unwrap() < peak);
            assert!(cohesive_energy_density(jstar - d, hbar, sp).unwrap() < peak);
        }
    }

    #[test]
    fn yield_diagnostic_examples() {
        let bar = MaterialSpec::bar_default();
        let f = bar.yield_diagnostic(&Tensor2::zeros(1), 0.0, &[3.0]).unwrap();
        assert_eq!(f, -1.0);
        let f = bar.yield_diagnostic(&Tensor2::scalar(1.0), 0.0, &[3.0]).unwrap();
        assert_eq!(f, 0.0);

        let m = shear_material();
        let x = [0.5, 0.5];
        let f0 = m.yield_diagnostic(&Tensor2::zeros(2), 0.0, &x).unwrap();
        assert_eq!(f0, -0.5 * 0.75);
        let (tau, p) = (0.4, 2.0);
        let f = m.yield_diagnostic(&Tensor2::from_2d(0.0, 0.0, tau), p, &x).unwrap();
        let expected = 2f64.sqrt() * tau - 0.5 * (0.75 + m.softening() * p);
        assert!((f - expected).abs() < 1e-14);
        assert!(m.yield_diagnostic(&Tensor2::zeros(2), -1.0, &x).is_err());
    }

    #[test]
    fn parabolic_yield_profile() {
        let prof = YieldProfile::ParabolicY { min: 0.75, max: 1.0 };
        assert_eq!(prof.at(&[0.3, 0.5]), 0.75);
        assert_eq!(prof.at(&[0.3, 0.0]), 1.0);
        assert_eq!(prof.at(&[0.9, 1.0]), 1.0);
        assert!((prof.at(&[0.0, 0.25]) - 0.8125).abs() < 1e-15);
    }

    #[test]
    fn validation_names_keys() {
        let mut m = MaterialSpec::bar_default();
        m.youngs = -2.0;
        match m.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "material.E"),
            other => panic!("{other:?}"),
        }
        let mut m = shear_material();
        m.poisson = 0.5;
        assert!(m.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn elastic_energy_nonnegative(
                xx in -1.0f64..1.0, yy in -1.0f64..1.0, xy in -1.0f64..1.0,
                nu in -0.99f64..0.499, e in 0.1f64..10.0,
            ) {
                let mut m = MaterialSpec::shear_default(0.1);
                m.youngs = e;
                m.poisson = nu;
                prop_assert!(elastic_energy_density(&Tensor2::from_2d(xx, yy, xy), &m) >= 0.0);
            }
        }
    }
}
