//! Synthetic populations of i.i.d. users.
//!
//! Each user owns a categorical distribution over `M` locations drawn from a
//! symmetric Dirichlet prior. A user's data in either dataset is an i.i.d.
//! string from that distribution, summarized as a histogram.
//!
//! Randomness comes from ChaCha8 with one stream per user and purpose, so
//! parallel generation reproduces sequential generation bit for bit.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{build_histogram, GroundTruth, HistogramSet, LocationId};

/// Generator name recorded in output metadata.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), one stream per user";

/// Default Dirichlet concentration.
pub const DEFAULT_CONCENTRATION: f64 = 0.1;

const DOMAIN_POPULATION: u64 = 0x706f_7075;
const DOMAIN_SELECT: u64 = 0x7365_6c65;
const DOMAIN_LEFT: u64 = 0x6c65_6674;
const DOMAIN_RIGHT: u64 = 0x7269_6768;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_users: usize,
    pub alphabet_size: usize,
    pub concentration: f64,
    pub seed: u64,
}

impl PopulationSpec {
    fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.alphabet_size == 0 {
            return Err(Error::InvalidPopulation("n_users and alphabet_size must be positive".into()));
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(Error::InvalidPopulation(format!(
                "concentration {} must be positive",
                self.concentration
            )));
        }
        if self.alphabet_size == 1 && self.n_users > 1 {
            return Err(Error::InvalidPopulation(
                "a one-symbol alphabet admits a single distinct distribution".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapSpec {
    pub n_left: usize,
    pub n_right: usize,
    /// Users present in both sets.
    pub r: usize,
}

impl OverlapSpec {
    /// Same `n` users on both sides.
    pub fn full(n: usize) -> Self {
        OverlapSpec { n_left: n, n_right: n, r: n }
    }

    fn validate(&self, population: usize) -> Result<()> {
        if self.r > self.n_left.min(self.n_right) {
            return Err(Error::InvalidOverlap(format!(
                "r = {} exceeds min({}, {})",
                self.r, self.n_left, self.n_right
            )));
        }
        if self.n_left + self.n_right - self.r > population {
            return Err(Error::InvalidOverlap(format!(
                "{} distinct users needed, population has {population}",
                self.n_left + self.n_right - self.r
            )));
        }
        Ok(())
    }
}

/// A user's location distribution, dense over the synthetic alphabet.
pub type UserDistribution = Vec<f64>;

/// Synthetic location id for symbol `j`.
pub fn symbol(j: usize) -> LocationId {
    LocationId::new(format!("L{j}")).expect("non-empty")
}

/// Independent generator for (`seed`, purpose, index).
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_dirichlet(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, m: usize) -> UserDistribution {
    loop {
        let g: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return g.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Draws `n_users` pairwise distinct Dirichlet(α, …, α) distributions.
pub fn sample_population(spec: &PopulationSpec) -> Result<Vec<UserDistribution>> {
    spec.validate()?;
    let gamma = Gamma::new(spec.concentration, 1.0)
        .map_err(|e| Error::InvalidPopulation(e.to_string()))?;
    let mut users: Vec<(ChaCha8Rng, UserDistribution)> = (0..spec.n_users)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(spec.seed, DOMAIN_POPULATION, i as u64);
            let p = draw_dirichlet(&mut rng, &gamma, spec.alphabet_size);
            (rng, p)
        })
        .collect();
    // Exact collisions are redrawn from the colliding user's own stream.
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(users.len());
    for (rng, p) in users.iter_mut() {
        while !seen.insert(p.iter().map(|x| x.to_bits()).collect()) {
            *p = draw_dirichlet(rng, &gamma, spec.alphabet_size);
        }
    }
    Ok(users.into_iter().map(|(_, p)| p).collect())
}

/// Unlabeled and labeled sets drawn from a population, with the identities
/// of the users present in both.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub unlabeled: HistogramSet,
    pub labeled: HistogramSet,
    pub truth: GroundTruth,
}

/// Draws the two datasets of a matching problem.
///
/// `overlap.r` users appear on both sides; the others appear on one side
/// only. Every present user contributes an independent i.i.d. string of
/// length `t1` (unlabeled side) or `t2` (labeled side). Labeled owners are
/// `u<user>`, in user order; unlabeled owners are `x<position>` in a random
/// order.
pub fn generate_pair(
    distributions: &[UserDistribution],
    t1: usize,
    t2: usize,
    overlap: OverlapSpec,
    seed: u64,
) -> Result<SyntheticPair> {
    overlap.validate(distributions.len())?;
    if t1 == 0 || t2 == 0 {
        return Err(Error::InvalidInput("string lengths must be positive".into()));
    }
    let OverlapSpec { n_left, n_right, r } = overlap;
    let mut rng = stream_rng(seed, DOMAIN_SELECT, 0);
    let mut users: Vec<usize> = (0..distributions.len()).collect();
    users.shuffle(&mut rng);
    let common = &users[..r];
    let left_only = &users[r..n_left];
    let right_only = &users[n_left..n_left + n_right - r];

    let mut left_users: Vec<usize> = common.iter().chain(left_only).copied().collect();
    left_users.sort_unstable();
    left_users.shuffle(&mut rng);
    let mut right_users: Vec<usize> = common.iter().chain(right_only).copied().collect();
    right_users.sort_unstable();

    let alphabet: Vec<LocationId> =
        (0..distributions.first().map_or(0, Vec::len)).map(symbol).collect();
    let draw = |user: usize, t: usize, domain: u64| -> Result<_> {
        let mut rng = stream_rng(seed, domain, user as u64);
        let sampler = WeightedAliasIndex::new(distributions[user].clone())
            .map_err(|e| Error::InvalidPopulation(format!("user {user}: {e}")))?;
        let s: Vec<LocationId> = (0..t).map(|_| alphabet[sampler.sample(&mut rng)].clone()).collect();
        build_histogram(&s)
    };

    let left_entries = left_users
        .par_iter()
        .enumerate()
        .map(|(pos, &u)| Ok((format!("x{pos}"), draw(u, t1, DOMAIN_LEFT)?)))
        .collect::<Result<Vec<_>>>()?;
    let right_entries = right_users
        .par_iter()
        .map(|&u| Ok((format!("u{u}"), draw(u, t2, DOMAIN_RIGHT)?)))
        .collect::<Result<Vec<_>>>()?;

    let common_set: HashSet<usize> = common.iter().copied().collect();
    let truth = GroundTruth::new(
        left_users
            .iter()
            .enumerate()
            .filter(|(_, u)| common_set.contains(u))
            .map(|(pos, u)| (format!("x{pos}"), format!("u{u}"))),
    )?;
    Ok(SyntheticPair {
        unlabeled: HistogramSet::new(left_entries, false)?,
        labeled: HistogramSet::new(right_entries, true)?,
        truth,
    })
}
