//! Parameter studies built from a base configuration.

use serde::{Deserialize, Serialize};

use crate::config::{ProblemKind, RunConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vary {
    /// Bandwidth `h ∈ {0.05, 0.1, 0.2}` (2D).
    H,
    /// Initial band position `{0.2, 0.5, 0.8}` × normal tilt `{0, 15, …, 75}°` (2D).
    Init,
    /// Collocation density: 1D `{901, 1001, 1101}` points, 2D `{91², 101², 111²}`.
    Collocation,
    /// Node count of the 1D field `{6, 11, 21}`.
    Nodes,
}

pub const BANDWIDTHS: [f64; 3] = [0.05, 0.1, 0.2];
pub const INIT_POSITIONS: [f64; 3] = [0.2, 0.5, 0.8];
pub const INIT_ANGLES_DEG: [f64; 6] = [0.0, 15.0, 30.0, 45.0, 60.0, 75.0];

/// A labelled variant whose output directory is `<base output>/<label>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub config: RunConfig,
}

fn variant(base: &RunConfig, label: String, edit: impl FnOnce(&mut RunConfig)) -> Variant {
    let mut config = base.clone();
    edit(&mut config);
    config.output_dir = base.output_dir.join(&label);
    Variant { label, config }
}

pub fn variants(base: &RunConfig, vary: Vary) -> Result<Vec<Variant>> {
    let need = |kind: ProblemKind, what: &str| -> Result<()> {
        if base.problem == kind {
            Ok(())
        } else {
            Err(Error::config("problem", format!("sweep over {what} needs {kind:?}")))
        }
    };
    let out = match vary {
        Vary::H => {
            need(ProblemKind::Shear2d, "h")?;
            BANDWIDTHS
                .iter()
                .map(|&h| variant(base, format!("h_{h}"), |c| c.material.h = h))
                .collect()
        }
        Vary::Init => {
            need(ProblemKind::Shear2d, "initial band")?;
            let mut v = Vec::new();
            for &pos in &INIT_POSITIONS {
                for &ang in &INIT_ANGLES_DEG {
                    v.push(variant(base, format!("pos_{pos}_angle_{ang}"), |c| {
                        c.band.position = pos;
                        c.band.angle_deg = ang;
                    }));
                }
            }
            v
        }
        Vary::Collocation => match base.problem {
            ProblemKind::Bar1d => [901, 1001, 1101]
                .iter()
                .map(|&n| variant(base, format!("points_{n}"), |c| c.collocation.points = n))
                .collect(),
            ProblemKind::Shear2d => [91, 101, 111]
                .iter()
                .map(|&n| {
                    variant(base, format!("grid_{n}"), |c| {
                        c.collocation.grid = [n, n];
                        c.collocation.points = n * n;
                    })
                })
                .collect(),
        },
        Vary::Nodes => {
            need(ProblemKind::Bar1d, "node count")?;
            [6, 11, 21]
                .iter()
                .map(|&n| variant(base, format!("nodes_{n}"), |c| c.network.nodes = n))
                .collect()
        }
    };
    Ok(out)
}
