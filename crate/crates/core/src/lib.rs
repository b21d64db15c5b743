//! Splitting solver for the one-dimensional quantum Liouville-BGK equation
//! and the quantum drift-diffusion model it relaxes to in the diffusive
//! limit.
//!
//! All quantities are nondimensional. The solvers are generic over the real
//! scalar type (see [`Real`]); the `*64` aliases below fix it to `f64`, which
//! is what the command-line driver and the validation suite use.

pub mod config;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod qdd;
pub mod qle;
pub mod scalar;
pub mod scenarios;
pub mod state;
pub mod trajectory;

pub use config::{preset, SimConfig};
pub use error::{Error, Result};
pub use harness::{ComparisonReport, ConvergenceStudy, RunManifest};
pub use grid::{DensityField, DifferenceOperators, Grid, Tridiagonal};
pub use linalg::{ComplexMatrix, SpectralDecomposition};
pub use scalar::{Cplx, Real};
pub use qdd::{QddConfig, QddSolver, QddState};
pub use qle::{QleConfig, QleSolver};
pub use trajectory::{Run, Snapshot};
pub use state::{Checkpoint, DensityOperator, PotentialSet};
pub use scenarios::{BarrierLayout, PacketShape, Scenario, ScenarioKind, ScenarioParams};
pub use equilibrium::{Equilibrium, EquilibriumSolver, GibbsSpectrum, MinimizeReport, NlcgOptions};

pub type Grid64 = Grid<f64>;
pub type DensityField64 = DensityField<f64>;
pub type Tridiagonal64 = Tridiagonal<f64>;
pub type DensityOperator64 = DensityOperator<f64>;
pub type PotentialSet64 = PotentialSet<f64>;
pub type EquilibriumSolver64 = EquilibriumSolver<f64>;
pub type NlcgOptions64 = NlcgOptions<f64>;
pub type QleConfig64 = QleConfig<f64>;
pub type QleSolver64 = QleSolver<f64>;
pub type Snapshot64 = Snapshot<f64>;
pub type QddConfig64 = QddConfig<f64>;
pub type QddSolver64 = QddSolver<f64>;
pub type QddState64 = QddState<f64>;
pub type Scenario64 = Scenario<f64>;
