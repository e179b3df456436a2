//! Production-network inference from firm growth co-movements.
//!
//! The crate covers the whole chain: loading quarterly sales, building
//! rescaled growth panels, cleaning common modes out of the correlation
//! spectrum, relating correlations to a known network, and reconstructing a
//! network from correlations with a spectrally constrained graph learner.

pub mod error;
pub mod evalx;
pub mod netstats;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod sgl;
pub mod spectral;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use netstats::{Network, Partition};
pub use panel::{GrowthPanel, SalesPanel};
pub use spectral::CorrMatrix;
