//! Gender-bias auditing for image-captioning evaluation metrics.
//!
//! The crate builds gender-contrastive caption pairs, scores them with
//! n-gram and embedding metrics, tests whether each metric separates the
//! correct-gender caption from the wrong-gender one equally well for both
//! genders, and simulates how a biased metric used as a training reward
//! propagates bias into a captioning policy.

pub mod audit;
pub mod captions;
pub mod corpus;
pub mod correlation;
pub mod embed;
pub mod error;
pub mod fixtures;
pub mod jsonl;
pub mod metric;
pub mod ngram;
pub mod report;
pub mod rl;
pub mod score;
pub mod seed;
pub mod tokenize;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/audit.md")]
    mod audit {}
    #[doc = include_str!("../../../book/src/captions.md")]
    mod captions {}
    #[doc = include_str!("../../../book/src/correlation.md")]
    mod correlation {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/outputs.md")]
    mod outputs {}
}
