//! Sharp-discontinuity reference solutions for the tapered bar and the
//! simple-shear specimen.

use serde::Serialize;

use crate::energy::AreaProfile;
use crate::error::{Error, Result};
use crate::material::cohesive_energy_density;

/// `∫₀ᴸ dx / (E·A(x))` by composite Simpson with `n_quad` intervals.
pub fn compliance_integral(area: impl Fn(f64) -> f64, e: f64, length: f64, n_quad: usize) -> Result<f64> {
    if n_quad < 1000 {
        return Err(Error::Argument(format!("n_quad must be at least 1000, got {n_quad}")));
    }
    if !(e > 0.0) || !(length > 0.0) {
        return Err(Error::Argument("E and L must be positive".into()));
    }
    Ok(simpson(|x| 1.0 / area(x), 0.0, length, n_quad)? / e)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Result<f64> {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + h * i as f64;
        let fx = f(x);
        if !(fx.is_finite() && fx > 0.0) {
            return Err(Error::Argument(format!(
                "area must be positive, got 1/A = {fx} at x = {x}"
            )));
        }
        acc += if i % 2 == 1 { 4.0 * fx } else { 2.0 * fx };
    }
    Ok(acc * h / 3.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarSolution {
    pub delta: f64,
    /// Axial force.
    pub force: f64,
    pub jump: f64,
    pub x_band: f64,
    pub compliance: f64,
    pub area_min: f64,
    /// Total energy `P²C/2 + A_min ψ(j)`.
    pub energy: f64,
    pub elastic_energy: f64,
    pub cohesive_energy: f64,
    youngs: f64,
}

impl BarSolution {
    /// `u(x) = (P/E)∫₀ˣ dξ/A + j·H(x − x_band)`.
    pub fn displacement(&self, x: f64, area: &AreaProfile) -> f64 {
        let elastic = if x <= 0.0 {
            0.0
        } else {
            self.force * area.inverse_integral(x) / self.youngs
        };
        let jump = if x > self.x_band {
            self.jump
        } else if x == self.x_band {
            0.5 * self.jump
        } else {
            0.0
        };
        elastic + jump
    }

    pub fn strain(&self, x: f64, area: &AreaProfile) -> f64 {
        self.force / (self.youngs * area.at(x))
    }
}

/// Parameters of the tapered bar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarMaterial {
    pub youngs: f64,
    pub yield_stress: f64,
    pub hbar: f64,
}

/// Closed-form minimizer of `W(j) = (δ − j)²/(2C) + A_min ψ(j)` over
/// `0 ≤ j ≤ j* = −σ_p/H̄`.
pub fn solve_bar(delta: f64, m: BarMaterial, area: &AreaProfile, length: f64) -> Result<BarSolution> {
    if !(delta >= 0.0) {
        return Err(Error::Argument(format!(
            "prescribed displacement must be non-negative, got {delta}"
        )));
    }
    if !(m.hbar < 0.0) {
        return Err(Error::Oracle("bar oracle needs softening (H̄ < 0)".into()));
    }
    let c = compliance_integral(|x| area.at(x), m.youngs, length, 20_000)?;
    let a_min = area.minimum();
    let x_band = area.argmin(length);
    if 1.0 / c + a_min * m.hbar <= 0.0 {
        return Err(Error::Oracle(format!(
            "snap-back: 1/C + A_min·H̄ = {} is not positive, the minimizer is not unique",
            1.0 / c + a_min * m.hbar
        )));
    }
    let j_full = -m.yield_stress / m.hbar;
    let delta_y = m.yield_stress * a_min * c;
    let (force, jump) = if delta <= delta_y {
        (delta / c, 0.0)
    } else {
        let j = (delta - m.yield_stress * a_min * c) / (1.0 + a_min * m.hbar * c);
        if j >= j_full {
            (0.0, delta)
        } else {
            (a_min * (m.yield_stress + m.hbar * j), j)
        }
    };
    let elastic_energy = 0.5 * force * force * c;
    let cohesive_energy = a_min * cohesive_energy_density(jump.min(j_full), m.hbar, m.yield_stress)?;
    Ok(BarSolution {
        delta,
        force,
        jump,
        x_band,
        compliance: c,
        area_min: a_min,
        energy: elastic_energy + cohesive_energy,
        elastic_energy,
        cohesive_energy,
        youngs: m.youngs,
    })
}

/// Reduced bar energy `W(j)` used by [`solve_bar`].
pub fn bar_reduced_energy(delta: f64, j: f64, m: BarMaterial, compliance: f64, area_min: f64) -> Result<f64> {
    let j_full = -m.yield_stress / m.hbar;
    let force = (delta - j) / compliance;
    Ok(0.5 * force * force * compliance + area_min * cohesive_energy_density(j.min(j_full), m.hbar, m.yield_stress)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShearSolution {
    pub delta: f64,
    pub tau: f64,
    pub gamma_e: f64,
    pub jump: f64,
    /// Total energy per unit volume.
    pub energy: f64,
    pub cohesive_energy: f64,
    pub cohesive_force: f64,
}

/// Parameters of the unit shear specimen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShearMaterial {
    pub mu: f64,
    pub hbar: f64,
    /// Yield stress on the band row.
    pub sigma_p_min: f64,
}

fn shear_energy(delta: f64, j: f64, m: ShearMaterial) -> f64 {
    let g = delta - j;
    0.5 * m.mu * g * g + 0.5 * m.hbar * j * j + m.sigma_p_min * j
}

/// Minimizes `W(j) = μ(δ − j)²/2 + ½H̄j² + σ_p j` over `j ∈ [0, δ]` on a grid
/// of spacing `step`.
pub fn brute_force_shear(delta: f64, m: ShearMaterial, step: f64) -> f64 {
    let n = (delta / step).ceil() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let j = (i as f64 * step).min(delta);
        let w = shear_energy(delta, j, m);
        if w < best.0 {
            best = (w, j);
        }
    }
    best.1
}

/// Closed-form stationarity solution of the reduced shear energy, verified
/// against a 1e-5 grid search. Rejects parameter sets whose reduced energy
/// is not strictly convex (`μ + H̄ ≤ 0`).
pub fn solve_shear(delta: f64, m: ShearMaterial) -> Result<ShearSolution> {
    if !(delta >= 0.0) {
        return Err(Error::Argument(format!(
            "prescribed displacement must be non-negative, got {delta}"
        )));
    }
    if !(m.mu > 0.0) {
        return Err(Error::Argument("shear modulus must be positive".into()));
    }
    if m.mu + m.hbar <= 0.0 {
        return Err(Error::Oracle(format!(
            "μ + H̄ = {} is not positive, the reduced energy has no unique minimizer",
            m.mu + m.hbar
        )));
    }
    let stationary = (m.mu * delta - m.sigma_p_min) / (m.mu + m.hbar);
    let jump = stationary.clamp(0.0, delta);
    let grid = brute_force_shear(delta, m, 1e-5);
    if (grid - jump).abs() > 1e-5 {
        return Err(Error::Oracle(format!(
            "closed form j = {jump} disagrees with grid search j = {grid}"
        )));
    }
    let gamma_e = delta - jump;
    Ok(ShearSolution {
        delta,
        tau: m.mu * gamma_e,
        gamma_e,
        jump,
        energy: shear_energy(delta, jump, m),
        cohesive_energy: 0.5 * m.hbar * jump * jump + m.sigma_p_min * jump,
        cohesive_force: m.sigma_p_min + m.hbar * jump,
    })
}

/// Prescribed displacement at which the shear specimen localizes.
pub fn shear_onset(m: ShearMaterial) -> f64 {
    m.sigma_p_min / m.mu
}

/// Prescribed displacement at which the bar yields.
pub fn bar_onset(m: BarMaterial, area: &AreaProfile, length: f64) -> Result<f64> {
    let c = compliance_integral(|x| area.at(x), m.youngs, length, 20_000)?;
    Ok(m.yield_stress * area.minimum() * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bar() -> (BarMaterial, AreaProfile) {
        (
            BarMaterial {
                youngs: 2.0,
                yield_stress: 1.0,
                hbar: -2.0 / 11.0,
            },
            AreaProfile::tapered_bar(),
        )
    }

    fn shear() -> ShearMaterial {
        ShearMaterial {
            mu: 2.0,
            hbar: -1.0,
            sigma_p_min: 0.75,
        }
    }

    #[test]
    fn compliance_examples() {
        let c = compliance_integral(|_| 1.0, 1.0, 10.0, 1000).unwrap();
        assert!((c - 10.0).abs() < 1e-12);
        let a = AreaProfile::tapered_bar();
        let c = compliance_integral(|x| a.at(x), 1.0, 10.0, 4000).unwrap();
        assert!((c - 2.5 * PI).abs() < 1e-9);
        let c = compliance_integral(|x| a.at(x), 2.0, 10.0, 4000).unwrap();
        assert!((c - 1.25 * PI).abs() < 1e-9);
        assert!(compliance_integral(|_| 1.0, 1.0, 10.0, 10).is_err());
    }

    #[test]
    fn bar_examples() {
        let (m, a) = bar();
        let dy = bar_onset(m, &a, 10.0).unwrap();
        assert!((dy - 1.25 * PI).abs() < 1e-9);
        let s = solve_bar(dy, m, &a, 10.0).unwrap();
        assert!((s.force - 1.0).abs() < 1e-12 && s.jump == 0.0);

        let s = solve_bar(4.5, m, &a, 10.0).unwrap();
        let p = 1.0 / (5.5 - 1.25 * PI);
        assert!((s.force - p).abs() < 1e-9);
        assert!((s.jump - 5.5 * (1.0 - p)).abs() < 1e-9);
        assert!((s.force - 0.635724).abs() < 1e-6);
        assert!((s.jump - 2.003517).abs() < 1e-6);
        assert_eq!(s.x_band, 5.0);

        let s = solve_bar(5.5, m, &a, 10.0).unwrap();
        assert!(s.force.abs() < 1e-12);
        assert!((s.jump - 5.5).abs() < 1e-12);
        assert!(solve_bar(-1.0, m, &a, 10.0).is_err());
    }

    #[test]
    fn bar_defining_equations() {
        let (m, a) = bar();
        for delta in [4.0, 4.5, 5.0, 5.5] {
            let s = solve_bar(delta, m, &a, 10.0).unwrap();
            let traction = s.force / s.area_min - (m.yield_stress + m.hbar * s.jump);
            let compat = s.force * s.compliance + s.jump - delta;
            assert!(traction.abs() <= 1e-12, "{delta}: {traction}");
            assert!(compat.abs() <= 1e-12, "{delta}: {compat}");
        }
    }

    #[test]
    fn bar_oracle_is_minimum() {
        let (m, a) = bar();
        for k in 0..50 {
            let delta = 0.5 + 0.1 * k as f64;
            let s = solve_bar(delta, m, &a, 10.0).unwrap();
            for dj in [-1e-3, 1e-3] {
                let j = s.jump + dj;
                if !(0.0..=5.5).contains(&j) {
                    continue;
                }
                let w = bar_reduced_energy(delta, j, m, s.compliance, s.area_min).unwrap();
                assert!(w >= s.energy - 1e-14, "δ={delta} dj={dj}");
            }
        }
    }

    #[test]
    fn bar_displacement_matches_closed_form() {
        let (m, a) = bar();
        let s = solve_bar(4.5, m, &a, 10.0).unwrap();
        for x in [0.0, 2.0, 4.99, 5.01, 10.0] {
            let elastic = s.force / 2.0 * 5.0 * (((x - 5.0) / 5.0f64).atan() + (1.0f64).atan());
            let expected = elastic + if x > 5.0 { s.jump } else { 0.0 };
            assert!((s.displacement(x, &a) - expected).abs() < 1e-10, "{x}");
        }
        assert!((s.displacement(10.0, &a) - 4.5).abs() < 1e-9);
    }

    #[test]
    fn shear_examples() {
        let m = shear();
        assert_eq!(shear_onset(m), 0.375);
        let s = solve_shear(0.375, m).unwrap();
        assert!(s.jump.abs() < 1e-12);
        let s = solve_shear(0.55, m).unwrap();
        assert!((s.jump - 0.35).abs() < 1e-12);
        assert!((s.tau - 0.40).abs() < 1e-12);
        let s = solve_shear(0.7, m).unwrap();
        assert!((s.jump - 0.65).abs() < 1e-12);
        assert!((s.tau - 0.10).abs() < 1e-12);
        let s = solve_shear(0.1, m).unwrap();
        assert_eq!(s.jump, 0.0);
    }

    #[test]
    fn shear_rejects_non_convex() {
        let m = ShearMaterial {
            mu: 1.0,
            hbar: -1.5,
            sigma_p_min: 0.5,
        };
        assert!(matches!(solve_shear(0.7, m), Err(Error::Oracle(_))));
    }

    #[test]
    fn shear_closed_form_matches_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let m = ShearMaterial {
                mu: rng.random_range(0.5..5.0),
                hbar: rng.random_range(-3.0..-0.01),
                sigma_p_min: rng.random_range(0.1..2.0),
            };
            let delta = rng.random_range(0.0..1.0);
            match solve_shear(delta, m) {
                Ok(s) => {
                    let g = brute_force_shear(delta, m, 1e-5);
                    assert!((g - s.jump).abs() <= 1e-5);
                    checked += 1;
                }
                Err(Error::Oracle(_)) => assert!(m.mu + m.hbar <= 0.0),
                Err(e) => panic!("{e}"),
            }
        }
    }
}
