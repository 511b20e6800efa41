use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            validation: 0.2,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.validation, self.test];
        if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("split ratios must be >= 0, got {r:?}")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Splits labeled samples into train/validation/test, stratified by label.
/// Unlabeled samples only ever feed training, so all of them go to train.
///
/// Each label stratum is shuffled, strata are laid end to end, and every
/// sample goes to the split furthest behind its quota so far. This keeps each
/// split within one sample of its share of every stratum prefix.
pub fn split_dataset(
    samples: Vec<Sample>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    ratios.validate()?;
    let mut rng = rng::stream(&[tag::SPLIT, seed]);
    let mut strata: BTreeMap<usize, Vec<Sample>> = BTreeMap::new();
    let mut train = Vec::new();
    for s in samples {
        match s.label {
            Some(y) => strata.entry(y).or_default().push(s),
            None => train.push(s),
        }
    }
    let quota = [ratios.train, ratios.validation, ratios.test];
    let mut counts = [0usize; 3];
    let mut out: [Vec<Sample>; 3] = Default::default();
    let mut seen = 0usize;
    for (_, mut stratum) in strata {
        stratum.shuffle(&mut rng);
        for s in stratum {
            seen += 1;
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for k in 0..3 {
                let deficit = quota[k] * seen as f64 - counts[k] as f64;
                if deficit > best_deficit + 1e-9 {
                    best = k;
                    best_deficit = deficit;
                }
            }
            counts[best] += 1;
            out[best].push(s);
        }
    }
    let [tr, va, te] = out;
    let mut labeled_train = tr;
    labeled_train.extend(train);
    Ok((labeled_train, va, te))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Payload;

    fn samples(n: usize, positive_every: usize, unlabeled_every: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                payload: Payload::Features(vec![i as f64]),
                label: if unlabeled_every > 0 && i % unlabeled_every == 1 {
                    None
                } else {
                    Some(usize::from(i % positive_every == 0))
                },
                client_id: 0,
                time_index: 0,
            })
            .collect()
    }

    #[test]
    fn exact_sizes_for_round_counts() {
        let (tr, va, te) = split_dataset(samples(1000, 5, 0), SplitRatios::default(), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (700, 200, 100));
    }

    #[test]
    fn union_is_input_multiset() {
        let input = samples(333, 3, 4);
        let (tr, va, te) = split_dataset(input.clone(), SplitRatios::default(), 2).unwrap();
        let key = |s: &Sample| match s.payload {
            Payload::Features(ref f) => f[0],
            _ => unreachable!(),
        };
        let mut all: Vec<f64> = tr.iter().chain(&va).chain(&te).map(key).collect();
        all.sort_by(f64::total_cmp);
        let expected: Vec<f64> = input.iter().map(key).collect();
        assert_eq!(all, expected);
        assert!(va.iter().chain(&te).all(Sample::is_labeled));
    }

    #[test]
    fn stratified_prevalence() {
        let input = samples(10_000, 6, 0);
        let global = input.iter().filter(|s| s.label == Some(1)).count() as f64 / 10_000.0;
        let (tr, va, te) = split_dataset(input, SplitRatios::default(), 3).unwrap();
        for part in [tr, va, te] {
            let p = part.iter().filter(|s| s.label == Some(1)).count() as f64 / part.len() as f64;
            assert!((p - global).abs() <= 0.03);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = split_dataset(samples(200, 3, 0), SplitRatios::default(), 9).unwrap();
        let b = split_dataset(samples(200, 3, 0), SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_ratios_rejected() {
        let r = SplitRatios {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(matches!(split_dataset(samples(10, 2, 0), r, 0), Err(Error::Config(_))));
    }
}
