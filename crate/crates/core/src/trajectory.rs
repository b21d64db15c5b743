//! Snapshots emitted by the time integrators.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::grid::DensityField;
use crate::scalar::Real;

/// State of a run at one output time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Snapshot<T: Real> {
    pub step: usize,
    pub time: T,
    pub density: DensityField<T>,
    /// Trace of the density operator (QLE) or `dx sum n` (QDD).
    pub trace: T,
    /// Mass removed by truncation so far.
    pub discarded_mass: T,
    /// Chemical potential, when the solver has one.
    pub chemical_potential: Option<Vec<T>>,
    /// Poisson potential, when the solver has one.
    pub poisson_potential: Option<Vec<T>>,
}

/// Outcome of a time integration. A solver failure does not discard the
/// snapshots taken before it.
#[derive(Debug)]
pub struct Run<T: Real, S> {
    pub snapshots: Vec<Snapshot<T>>,
    /// Last state reached.
    pub final_state: S,
    pub steps_completed: usize,
    /// Time of the last completed step.
    pub final_time: T,
    pub failure: Option<Error>,
}

impl<T: Real, S> Run<T, S> {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Turns a failed run into its error.
    pub fn into_result(self) -> Result<Self, Error> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }

    pub fn times(&self) -> Vec<T> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

/// Number of steps of size `h` that best approximates `final_time`.
pub fn step_count<T: Real>(final_time: T, h: T) -> usize {
    (final_time / h).round().to_f64_lossy().max(0.0) as usize
}
