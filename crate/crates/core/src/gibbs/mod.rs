//! Gibbs sampler for MTAR models with Gaussian variance-mixture noise.

mod priors;
mod sampler;
mod state;
pub mod thresholds;

pub use priors::{ExtraPrior, Priors, RegimePrior};
pub use sampler::{run_chain, GibbsSampler};
pub use state::{ChainControl, ChainState, Draw, PosteriorDraws};
