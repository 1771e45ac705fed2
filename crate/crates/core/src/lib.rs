//! Monte Carlo and analytic tools for trading feedback bits per user
//! against the number of users feeding back in a MIMO broadcast channel.
//!
//! Modules, bottom up:
//!
//! * [`numerics`]: small dense complex linear algebra (Haar bases, ZF beams).
//! * [`channel`]: i.i.d. Rayleigh block fading and deterministic substreams.
//! * [`quantizer`]: RVQ / orthonormal / PU²RC codebooks and quantization.
//! * [`schemes`]: per-frame RBF, ZF-RVQ, PU²RC and perfect-CSIT ZF.
//! * [`analytic`]: approximate rate model and optimal-bits solvers.
//! * [`simulator`]: runs, sweeps, empirical optimum, CSV/JSON output.
//! * [`presets`]: experiment tables behind the standard figures.

pub mod analytic;
pub mod channel;
pub mod error;
pub mod numerics;
pub mod presets;
pub mod quantizer;
pub mod schemes;
pub mod simulator;

pub use error::{Error, Result};
pub use schemes::Scheme;
pub use simulator::{ExperimentConfig, SimulationResult};
