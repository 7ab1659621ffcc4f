//! Geometric kernel block models on the one-dimensional torus.
//!
//! Nodes carry hidden `±1` communities and observed positions on the torus
//! `(-1/2, 1/2]`. Two nodes link with probability `p * psi` inside a community
//! and `q * psi` across, where `psi` is a compactly supported kernel evaluated
//! at the rescaled distance `n / ln(n) * d(x, y)`.
//!
//! The crate samples such graphs ([`model`]), recovers the communities with a
//! two-phase pipeline that is linear in the number of edges ([`recovery`]),
//! computes the recovery threshold and related constants ([`info`]), provides
//! brute-force references for small instances ([`oracle`]), and runs seeded
//! Monte Carlo sweeps ([`harness`]).

pub mod cli;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod info;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod recovery;

pub use error::{GkbmError, Result};
pub use geometry::{torus_distance, BlockPartition, TorusPoint};
pub use kernel::{Kernel, KernelShape, SimpleApproximation};
pub use model::{GkbmInstance, GkbmParams, Labeling};
