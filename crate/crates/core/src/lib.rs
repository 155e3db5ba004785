//! Identify users across two datasets by matching their histograms, and
//! measure how well anonymization holds up against that attack.

pub mod anonymize;
pub mod error;
pub mod events;
pub mod harness;
pub mod histogram;
pub mod io;
pub mod matcher;
pub mod metrics;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
pub use histogram::{build_histogram, Alphabet, GroundTruth, Histogram, HistogramSet, LocationId};
pub use matcher::{
    build_instance, generalized_log_likelihood, match_bruteforce, match_cardinality, match_greedy,
    match_min_weight, Algorithm, BipartiteInstance, MatchResult, MatchedPair, WeightGraph,
};
pub use metrics::MetricKind;
