//! Run configuration in TOML.
//!
//! A file names the problem and overrides any subset of the problem's
//! defaults; everything else is filled in. Unknown keys are rejected. The
//! resolved configuration serializes back to TOML and reloads to an equal
//! value.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::{run_load_program, LoadProgram, Problem, ProgramOutcome, Protocol};
use crate::energy::{AreaProfile, CollocationSet, PlasticNorm, Quadrature};
use crate::error::{Error, Result};
use crate::fields::{BandGeometry, FieldModel};
use crate::material::{MaterialSpec, YieldProfile};
use crate::optim::AdamWConfig;
use crate::oracle::{bar_onset, BarMaterial, ShearMaterial};
use crate::report::write_program;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "STRAINLOC_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Bar1d,
    Shear2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialBlock {
    #[serde(rename = "E")]
    pub youngs: f64,
    pub nu: f64,
    pub sigma_p: YieldProfile,
    #[serde(rename = "Hbar")]
    pub hbar: f64,
    /// Bandwidth; also the band width parameter `c`.
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    /// Bar length (1D); the 2D specimen is the unit square.
    pub length: f64,
    /// Bar cross-section (1D only).
    pub area: AreaProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationBlock {
    /// Point count along the bar (1D).
    pub points: usize,
    /// Points per axis (2D).
    pub grid: [usize; 2],
    pub quadrature: Quadrature,
    /// Restrain the lateral edges vertically (2D).
    pub rollers: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    /// Nodes of the piecewise-linear field (1D).
    pub nodes: usize,
    /// Perceptron layer widths including input and output (2D).
    pub widths: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandBlock {
    /// 1D: band midpoint. 2D: height at which the band midline crosses `x = 0.5`.
    pub position: f64,
    /// 1D: read `position` as a fraction of the bar length.
    pub position_is_fraction: bool,
    /// 2D: tilt of the band normal away from the downward vertical, in
    /// degrees, rotating counter-clockwise.
    pub angle_deg: f64,
    pub jump: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub plastic_norm: PlasticNorm,
    pub material: MaterialBlock,
    pub geometry: GeometryBlock,
    pub collocation: CollocationBlock,
    pub network: NetworkBlock,
    pub band: BandBlock,
    pub program: LoadProgram,
}

impl RunConfig {
    pub fn defaults(problem: ProblemKind) -> Self {
        match problem {
            ProblemKind::Bar1d => {
                let area = AreaProfile::tapered_bar();
                let m = BarMaterial {
                    youngs: 2.0,
                    yield_stress: 1.0,
                    hbar: -2.0 / 11.0,
                };
                Self {
                    problem,
                    seed: 0,
                    output_dir: PathBuf::from("out"),
                    plastic_norm: PlasticNorm::JumpNorm,
                    material: MaterialBlock {
                        youngs: m.youngs,
                        nu: 0.0,
                        sigma_p: YieldProfile::Uniform { value: m.yield_stress },
                        hbar: m.hbar,
                        h: 1.0,
                    },
                    geometry: GeometryBlock { length: 10.0, area },
                    collocation: CollocationBlock {
                        points: 1001,
                        grid: [1001, 1],
                        quadrature: Quadrature::Trapezoid,
                        rollers: false,
                    },
                    network: NetworkBlock {
                        nodes: 11,
                        widths: Vec::new(),
                    },
                    band: BandBlock {
                        position: 0.4,
                        position_is_fraction: true,
                        angle_deg: 0.0,
                        jump: 0.0,
                        beta: 100.0,
                    },
                    program: LoadProgram {
                        steps: vec![4.25, 4.5, 4.75, 5.0, 5.25, 5.5],
                        presolve_delta: bar_onset(m, &area, 10.0).ok(),
                        protocol: Protocol::default(),
                    },
                }
            }
            ProblemKind::Shear2d => Self {
                problem,
                seed: 0,
                output_dir: PathBuf::from("out"),
                plastic_norm: PlasticNorm::JumpNorm,
                material: MaterialBlock {
                    youngs: 5.6,
                    nu: 0.4,
                    sigma_p: YieldProfile::ParabolicY { min: 0.75, max: 1.0 },
                    hbar: -1.0,
                    h: 0.1,
                },
                geometry: GeometryBlock {
                    length: 1.0,
                    area: AreaProfile::Uniform { value: 1.0 },
                },
                collocation: CollocationBlock {
                    points: 101 * 101,
                    grid: [101, 101],
                    quadrature: Quadrature::Trapezoid,
                    rollers: true,
                },
                network: NetworkBlock {
                    nodes: 0,
                    widths: vec![2, 10, 10, 10, 10, 2],
                },
                band: BandBlock {
                    position: 0.25,
                    position_is_fraction: false,
                    angle_deg: 0.0,
                    jump: 0.0,
                    beta: 100.0,
                },
                program: LoadProgram {
                    steps: vec![0.375, 0.4, 0.55, 0.7],
                    presolve_delta: Some(0.375),
                    protocol: Protocol {
                        adamw_epochs: 5000,
                        lbfgs_enabled: false,
                        presolve_epochs: 2000,
                        adamw: AdamWConfig {
                            lr0: 3e-3,
                            ..AdamWConfig::default()
                        },
                        ..Protocol::default()
                    },
                },
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.material;
        if !(m.youngs > 0.0) {
            return Err(Error::config("material.E", "must be positive"));
        }
        if !(m.nu > -1.0 && m.nu < 0.5) {
            return Err(Error::config("material.nu", "must lie in (-1, 0.5)"));
        }
        if !(m.h > 0.0) {
            return Err(Error::config("material.h", "must be positive"));
        }
        if !m.hbar.is_finite() {
            return Err(Error::config("material.Hbar", "must be finite"));
        }
        match m.sigma_p {
            YieldProfile::Uniform { value } if !(value > 0.0) => {
                return Err(Error::config("material.sigma_p.value", "must be positive"))
            }
            YieldProfile::ParabolicY { min, max } if !(min > 0.0 && max > 0.0) => {
                return Err(Error::config("material.sigma_p", "min and max must be positive"))
            }
            _ => {}
        }
        if !(self.band.beta > 0.0) {
            return Err(Error::config("band.beta", "must be positive"));
        }
        if !self.band.position.is_finite() || !self.band.angle_deg.is_finite() || !self.band.jump.is_finite() {
            return Err(Error::config("band", "position, angle_deg and jump must be finite"));
        }
        match self.problem {
            ProblemKind::Bar1d => {
                if !(self.geometry.length > 0.0) {
                    return Err(Error::config("geometry.length", "must be positive"));
                }
                self.geometry.area.validate()?;
                if self.collocation.points < 2 {
                    return Err(Error::config("collocation.points", "need at least two points"));
                }
                if self.network.nodes < 2 {
                    return Err(Error::config("network.nodes", "need at least two nodes"));
                }
            }
            ProblemKind::Shear2d => {
                if self.collocation.grid.iter().any(|&n| n < 2) {
                    return Err(Error::config("collocation.grid", "need at least two points per axis"));
                }
                let w = &self.network.widths;
                if w.len() < 2 || w[0] != 2 || w[w.len() - 1] != 2 || w.contains(&0) {
                    return Err(Error::config(
                        "network.widths",
                        "need input and output width 2 and positive hidden widths",
                    ));
                }
            }
        }
        self.program.validate()
    }

    pub fn material_spec(&self) -> MaterialSpec {
        MaterialSpec {
            youngs: self.material.youngs,
            poisson: self.material.nu,
            yield_stress: self.material.sigma_p,
            hbar: self.material.hbar,
            h: self.material.h,
            dim: self.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        match self.problem {
            ProblemKind::Bar1d => 1,
            ProblemKind::Shear2d => 2,
        }
    }

    /// Problem definition with the moving boundary at zero.
    pub fn build_problem(&self) -> Result<Problem> {
        let material = self.material_spec();
        material.validate()?;
        let c = &self.collocation;
        Ok(match self.problem {
            ProblemKind::Bar1d => Problem {
                collocation: CollocationSet::bar(
                    self.geometry.length,
                    c.points,
                    &self.geometry.area,
                    c.quadrature,
                    0.0,
                )?,
                material,
                norm: self.plastic_norm,
                area: Some(self.geometry.area),
            },
            ProblemKind::Shear2d => Problem {
                collocation: CollocationSet::shear(c.grid[0], c.grid[1], c.quadrature, c.rollers, 0.0)?,
                material,
                norm: self.plastic_norm,
                area: None,
            },
        })
    }

    /// Sharp-limit bar parameters, using the smallest yield stress.
    pub fn bar_material(&self) -> BarMaterial {
        BarMaterial {
            youngs: self.material.youngs,
            yield_stress: self.material.sigma_p.minimum(),
            hbar: self.material.hbar,
        }
    }

    /// Sharp-limit shear parameters, using the smallest yield stress.
    pub fn shear_material(&self) -> ShearMaterial {
        ShearMaterial {
            mu: self.material.youngs / (2.0 * (1.0 + self.material.nu)),
            hbar: self.material.hbar,
            sigma_p_min: self.material.sigma_p.minimum(),
        }
    }

    /// Band geometry at initialization.
    pub fn initial_band(&self) -> BandGeometry {
        let b = &self.band;
        match self.problem {
            ProblemKind::Bar1d => {
                let x = if b.position_is_fraction {
                    b.position * self.geometry.length
                } else {
                    b.position
                };
                BandGeometry::new_1d(x, self.material.h, b.beta, b.jump)
            }
            ProblemKind::Shear2d => {
                let alpha = -std::f64::consts::FRAC_PI_2 + b.angle_deg.to_radians();
                let y_p = 0.5 * alpha.cos() + b.position * alpha.sin();
                BandGeometry::new_2d(alpha, y_p, self.material.h, b.beta, b.jump)
            }
        }
    }

    pub fn initial_model(&self) -> Result<FieldModel> {
        let band = self.initial_band();
        match self.problem {
            ProblemKind::Bar1d => FieldModel::bar(self.geometry.length, self.network.nodes, band),
            ProblemKind::Shear2d => FieldModel::shear(&self.network.widths, self.seed, band),
        }
    }

    /// Builds the problem and runs the whole load program.
    pub fn run(&self) -> Result<ProgramOutcome> {
        self.validate()?;
        let mut problem = self.build_problem()?;
        run_load_program(&self.program, &mut problem, self.initial_model()?)
    }

    /// Runs the program and writes the resolved configuration, every step's
    /// files and the summary into `output_dir`.
    pub fn run_and_write(&self) -> Result<ProgramOutcome> {
        self.write_echo(&self.output_dir)?;
        let out = self.run()?;
        write_program(&out.reports, &self.output_dir)?;
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Writes the resolved configuration to `dir/resolved.toml`.
    pub fn write_echo(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("resolved.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !is_tagged(b) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Tagged enums (`kind = ...`) are replaced wholesale rather than merged.
fn is_tagged(t: &toml::Table) -> bool {
    t.contains_key("kind")
}

/// Parses and validates a configuration from TOML text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<file>", e.message()))?;
    let problem = match table.get("problem") {
        None => return Err(Error::config("problem", "missing required key")),
        Some(v) => v
            .clone()
            .try_into::<ProblemKind>()
            .map_err(|_| Error::config("problem", "expected \"bar1d\" or \"shear2d\""))?,
    };
    let defaults = RunConfig::defaults(problem);
    let mut base: toml::Table = toml::Table::try_from(&defaults).map_err(|e| Error::Serialize(e.to_string()))?;
    if let Some(toml::Value::Table(prog)) = table.get("program") {
        // A user-supplied program without a presolve level means none.
        if prog.contains_key("steps") && !prog.contains_key("presolve_delta") {
            if let Some(toml::Value::Table(p)) = base.get_mut("program") {
                p.remove("presolve_delta");
            }
        }
    }
    merge(&mut base, table);
    let cfg: RunConfig = serde_path_to_error::deserialize(base).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().message().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a configuration file; the output directory may be overridden by
/// [`OUTPUT_DIR_ENV`].
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_bar_config() {
        let c = parse_config("problem = \"bar1d\"\n").unwrap();
        assert_eq!(c.collocation.points, 1001);
        assert_eq!(c.network.nodes, 11);
        assert_eq!(c.program.steps.len(), 6);
        assert!((c.initial_band().y_p - 4.0).abs() < 1e-12);
    }

    #[test]
    fn shear_config_with_bandwidth() {
        let c = parse_config("problem = \"shear2d\"\n[material]\nh = 0.1\n").unwrap();
        assert_eq!(c.collocation.grid, [101, 101]);
        assert_eq!(c.program.protocol.adamw_epochs, 5000);
        assert!(!c.program.protocol.lbfgs_enabled);
        let b = c.initial_band();
        assert_eq!(b.c, 0.1);
        assert!((b.crossing_height(0.5).unwrap() - 0.25).abs() < 1e-12);
        assert!(b.normal_tilt_from_vertical_deg() < 1e-9);
    }

    #[test]
    fn negative_modulus_names_key() {
        let e = parse_config("problem = \"bar1d\"\n[material]\nE = -1.0\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "material.E"), "{e}");
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let e = parse_config("problem = \"bar1d\"\n[material]\nyoung = 3.0\n").unwrap_err();
        assert!(
            matches!(&e, Error::Config { key, .. } if key.starts_with("material")),
            "{e}"
        );
        let e = parse_config("problem = \"bar1d\"\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
    }

    #[test]
    fn missing_problem_is_rejected() {
        let e = parse_config("seed = 3\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "problem"));
    }

    #[test]
    fn nested_protocol_override() {
        let c = parse_config(
            "problem = \"bar1d\"\n[program.protocol]\nadamw_epochs = 100\n[program.protocol.adamw]\nlr0 = 0.05\n",
        )
        .unwrap();
        assert_eq!(c.program.protocol.adamw_epochs, 100);
        assert_eq!(c.program.protocol.adamw.lr0, 0.05);
        assert_eq!(c.program.protocol.lbfgs_rounds, 1);
    }

    #[test]
    fn tagged_profiles_replace_defaults() {
        let c = parse_config("problem = \"bar1d\"\n[material.sigma_p]\nkind = \"uniform\"\nvalue = 2.0\n").unwrap();
        assert_eq!(c.material.sigma_p, YieldProfile::Uniform { value: 2.0 });
        let c =
            parse_config("problem = \"shear2d\"\n[material]\nsigma_p = { kind = \"uniform\", value = 0.8 }\n").unwrap();
        assert_eq!(c.material.sigma_p, YieldProfile::Uniform { value: 0.8 });
    }

    #[test]
    fn explicit_steps_drop_default_presolve() {
        let c = parse_config("problem = \"bar1d\"\n[program]\nsteps = [4.5]\n").unwrap();
        assert_eq!(c.program.presolve_delta, None);
        let c = parse_config("problem = \"bar1d\"\n[program]\nsteps = [4.5]\npresolve_delta = 3.9\n").unwrap();
        assert_eq!(c.program.presolve_delta, Some(3.9));
    }

    #[test]
    fn decreasing_program_is_rejected() {
        let e = parse_config("problem = \"bar1d\"\n[program]\nsteps = [4.5, 4.0]\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "program.steps[1]"));
    }
}
