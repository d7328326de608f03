//! Seeded synthetic instances standing in for real access logs.
//!
//! Sales follow `quality_i × attractiveness_j × noise`, with attractiveness
//! decaying down the list. Similarity comes from simulated browsing sessions
//! counted the same way as real co-browse logs. In the clustered profile most
//! sessions stay inside one planted cluster, so items of a cluster end up
//! similar to each other.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::{count_co_occurrence, znormalize};
use crate::error::{invalid, Error, Result};
use crate::matrix::SquareMatrix;
use crate::model::{banded_adjacency, ListingInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Clustered,
    Uniform,
}

const SESSIONS_PER_ITEM: usize = 20;
const IN_CLUSTER_SHARE: f64 = 0.8;

/// Cluster label of each item: `i % k` with `k = max(2, n / 4)` clusters, or
/// a single cluster for the uniform profile.
pub fn planted_clusters(n: usize, profile: Profile) -> Vec<usize> {
    match profile {
        Profile::Clustered => {
            let k = (n / 4).max(2);
            (0..n).map(|i| i % k).collect()
        }
        Profile::Uniform => vec![0; n],
    }
}

fn draw_items<'a>(rng: &mut impl Rng, pool: &'a [usize], count: usize) -> impl Iterator<Item = usize> + 'a {
    let count = count.min(pool.len());
    sample(rng, pool.len(), count).into_iter().map(move |k| pool[k])
}

pub fn generate_synthetic(n: usize, seed: u64, profile: Profile) -> Result<ListingInstance> {
    if n < 2 {
        return invalid(format!("synthetic instances need at least 2 items, got {n}"));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);

    let quality_dist = Normal::<f64>::new(0.0, 0.5).expect("valid normal");
    let noise_dist = Normal::<f64>::new(0.0, 0.15).expect("valid normal");
    let quality: Vec<f64> = (0..n).map(|_| quality_dist.sample(&mut rng).exp()).collect();
    let raw_sales = SquareMatrix::from_fn(n, |i, j| {
        let attractiveness = 1.0 / (1.0 + 0.3 * j as f64);
        quality[i] * attractiveness * noise_dist.sample(&mut rng).exp()
    });
    let sales = znormalize(&raw_sales, false)?;

    let clusters = planted_clusters(n, profile);
    let k = clusters.iter().max().map_or(1, |m| m + 1);
    let members: Vec<Vec<usize>> = (0..k).map(|c| (0..n).filter(|&i| clusters[i] == c).collect()).collect();
    let everyone: Vec<usize> = (0..n).collect();

    let mut sessions = Vec::with_capacity(SESSIONS_PER_ITEM * n);
    for _ in 0..SESSIONS_PER_ITEM * n {
        let size = rng.random_range(2..=4);
        let mut viewed = BTreeSet::new();
        if profile == Profile::Clustered && rng.random::<f64>() < IN_CLUSTER_SHARE {
            let c = rng.random_range(0..k);
            viewed.extend(draw_items(&mut rng, &members[c], size));
        } else {
            viewed.extend(draw_items(&mut rng, &everyone, size));
        }
        sessions.push(viewed);
    }
    let raw_similarity = count_co_occurrence(n, &sessions);
    let similarity = match znormalize(&raw_similarity, true) {
        Ok(f) => f,
        // every pair co-browsed equally often (always the case for n = 2)
        Err(Error::DegenerateInput(_)) => SquareMatrix::zeros(n),
        Err(e) => return Err(e),
    };

    Ok(ListingInstance::new(sales, similarity, banded_adjacency(n, 1)?, 1.0))
}
