//! Scoring, sensitivity analysis, manipulation search and funding-effect
//! estimation for composite-indicator designation tools.
//!
//! The usual flow: read tracts with [`data::ingest_tracts`], score them with
//! [`engine::run_model`], then audit the designations with
//! [`sensitivity`], [`adversarial`], [`rdd`] and [`matching`]. Funding
//! ledgers are turned into per-tract totals by [`funding`].
//!
//! ```
//! use ces_audit::engine::run_model;
//! use ces_audit::schema::ModelSpec;
//! use ces_audit::synth::{generate_tracts, SynthConfig};
//!
//! let config = SynthConfig { n_tracts: 100, ..SynthConfig::default() };
//! let records = generate_tracts(&config)?;
//! let results = run_model(&records, &config.schema(), &ModelSpec::baseline())?;
//! assert_eq!(results.iter().filter(|r| r.designated).count(), 26);
//! # Ok::<(), ces_audit::Error>(())
//! ```

// `!(x > y)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod data;
pub mod engine;
pub mod error;
pub mod funding;
pub mod linalg;
pub mod matching;
pub mod pipeline;
pub mod quantreg;
pub mod rdd;
pub mod schema;
pub mod sensitivity;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

// The guide's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/sensitivity.md")]
    mod sensitivity {}
    #[doc = include_str!("../../../book/src/adversarial.md")]
    mod adversarial {}
    #[doc = include_str!("../../../book/src/causal.md")]
    mod causal {}
    #[doc = include_str!("../../../book/src/funding.md")]
    mod funding {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
