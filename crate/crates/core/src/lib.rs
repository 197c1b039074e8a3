//! Sentence selection for fine-tuning by greedy D-optimal design over
//! token embeddings.
//!
//! A corpus is a list of sentences, each a sequence of `(token, context
//! embedding)` positions. Selection picks the `n` sentences whose embeddings
//! most increase `log det(σ₀²I + Σ xxᵀ)`. The crate also carries the
//! softmax next-token model used to judge a selection, the baselines it is
//! compared against, a synthetic data generator and an experiment harness.
//!
//! ```
//! use fishersft::datagen::SyntheticConfig;
//! use fishersft::selection::{fisher_sft, greedy_naive};
//!
//! let problem = SyntheticConfig { corpus_size: 300, ..SyntheticConfig::default() }
//!     .generate(7)
//!     .unwrap();
//! let lazy = fisher_sft(&problem.dataset, 20, 16, 1.0).unwrap();
//! let naive = greedy_naive(&problem.dataset, 20, 1.0).unwrap();
//! assert_eq!(lazy.chosen, naive.chosen);
//! assert!(lazy.gain_evaluations < naive.gain_evaluations);
//! ```

pub mod baselines;
pub mod datagen;
pub mod design;
pub mod error;
pub mod eval;
mod io_util;
pub mod rng;
pub mod selection;
pub mod softmax;

pub use datagen::{Dataset, TokenizedSentence};
pub use design::{DesignMatrix, GainQuery};
pub use error::{Error, FormatError, Result};
pub use selection::{fisher_sft, greedy_naive, SelectionResult};
pub use softmax::ParamMatrix;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/design-matrix.md")]
    pub mod design_matrix {}
    #[doc = include_str!("../../../book/src/lazy-greedy.md")]
    pub mod lazy_greedy {}
    #[doc = include_str!("../../../book/src/softmax-model.md")]
    pub mod softmax_model {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub mod baselines {}
    #[doc = include_str!("../../../book/src/formats.md")]
    pub mod formats {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
