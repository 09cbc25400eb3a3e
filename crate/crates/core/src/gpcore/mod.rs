//! Conditioning the operator-kernel prior on heteroscedastic, masked data.

mod data;
mod optimize;
mod posterior;

pub use data::{DataPoint, Dataset, Role};
pub use optimize::{optimize_hyperparams, HyperBounds, Optimum};
pub use posterior::{
    assemble_gram, log_marginal_likelihood, sample_posterior, PosteriorGp, MAX_JITTER,
};
