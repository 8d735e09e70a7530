//! Minimizers over flat parameter vectors.

pub mod adamw;
pub mod lbfgs;

pub use adamw::{cosine_lr, AdamWConfig, AdamWState, Schedule};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsOutcome, StopReason};

/// Zeroes the entries of `g` whose index is frozen.
pub(crate) fn apply_mask(g: &mut [f64], frozen: Option<&[bool]>) {
    if let Some(mask) = frozen {
        for (gi, &f) in g.iter_mut().zip(mask) {
            if f {
                *gi = 0.0;
            }
        }
    }
}
