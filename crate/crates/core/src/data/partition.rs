use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;

use super::{PartitionMode, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Distributes samples over `num_clients` clients and stamps each sample's
/// `client_id` with its client index.
///
/// IID shuffles and deals round-robin, so client sizes differ by at most one.
/// Dirichlet groups samples by label (unlabeled samples form their own group),
/// draws client proportions per group and cuts each shuffled group at the
/// rounded cumulative proportions. Dirichlet clients may end up empty.
pub fn partition_clients(
    samples: Vec<Sample>,
    num_clients: usize,
    mode: PartitionMode,
    seed: u64,
) -> Result<Vec<Vec<Sample>>> {
    if num_clients == 0 {
        return Err(Error::Config("num_clients must be >= 1".into()));
    }
    if samples.len() < num_clients {
        return Err(Error::Config(format!(
            "{} samples cannot be spread over {num_clients} clients",
            samples.len()
        )));
    }
    let mut rng = rng::stream(&[tag::PARTITION, seed]);
    let mut parts: Vec<Vec<Sample>> = (0..num_clients).map(|_| Vec::new()).collect();
    match mode {
        PartitionMode::Iid => {
            let mut samples = samples;
            samples.shuffle(&mut rng);
            for (i, s) in samples.into_iter().enumerate() {
                parts[i % num_clients].push(s);
            }
        }
        PartitionMode::Dirichlet(beta) => {
            let gamma = Gamma::new(beta, 1.0)
                .map_err(|e| Error::Config(format!("dirichlet beta {beta}: {e}")))?;
            let mut groups: BTreeMap<Option<usize>, Vec<Sample>> = BTreeMap::new();
            for s in samples {
                groups.entry(s.label).or_default().push(s);
            }
            for (_, mut group) in groups {
                group.shuffle(&mut rng);
                let draws: Vec<f64> = (0..num_clients).map(|_| rng.sample(gamma)).collect();
                let total: f64 = draws.iter().sum();
                let n = group.len();
                let mut cuts = Vec::with_capacity(num_clients);
                let mut cum = 0.0;
                for (k, d) in draws.iter().enumerate() {
                    cum += d;
                    let cut = if k + 1 == num_clients || total <= 0.0 {
                        n
                    } else {
                        ((cum / total) * n as f64).round() as usize
                    };
                    cuts.push(cut.min(n));
                }
                let mut it = group.into_iter();
                let mut taken = 0;
                for (k, cut) in cuts.into_iter().enumerate() {
                    let take = cut.saturating_sub(taken);
                    parts[k].extend(it.by_ref().take(take));
                    taken += take;
                }
            }
        }
    }
    for (k, part) in parts.iter_mut().enumerate() {
        for s in part.iter_mut() {
            s.client_id = k;
        }
    }
    Ok(parts)
}
