//! Analysis and simulation toolkit for event-ready CHSH Bell tests.
//!
//! - [`trial`]: trial records, adapted CHSH scoring for ψ⁻/ψ⁺ heralds, S and correlators.
//! - [`pvalue`]: conventional and complete P-values, winning-probability bounds, combination.
//! - [`lhv`]: local-hidden-variable adversaries with biased and early setting generators.
//! - [`herald`]: station-C window filtering, synthetic photon streams and offset sweeps.
//! - [`extract`]: parity bits from text messages, block combination, XOR combiner, bias.
//! - [`audit`]: uniformity and independence tests of setting choices with look-elsewhere MC.
//!
//! Monte Carlo routines take an [`McConfig`]; results depend only on its seed,
//! repetition count and chunk size, whether chunks run in parallel or not.

pub mod audit;
pub mod error;
pub mod exact;
pub mod exec;
pub mod extract;
pub mod herald;
pub mod lhv;
pub mod pvalue;
pub mod report;
pub mod special;
pub mod trial;

pub use error::{Error, Result};
pub use exec::{Exec, McConfig};
pub use pvalue::{BetaForm, BiasParams};
pub use trial::{HeraldTag, Outcome, Tally, Trial, TrialMeta, TrialSet};
