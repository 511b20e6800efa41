use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{partition_clients, ClientData, Payload, Sample, StreamBatch};
use crate::error::{Error, Result};
use crate::graph::build_mobility_graph;
use crate::rng::{self, tag, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Features,
    Graphs,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Features => "features",
            Modality::Graphs => "graphs",
        }
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features" => Ok(Modality::Features),
            "graphs" => Ok(Modality::Graphs),
            _ => Err(Error::Config(format!("unknown modality '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PartitionMode {
    Iid,
    /// Per-class client proportions drawn from a symmetric Dirichlet(beta).
    Dirichlet(f64),
}

impl PartitionMode {
    pub fn name(self) -> String {
        match self {
            PartitionMode::Iid => "iid".into(),
            PartitionMode::Dirichlet(b) => format!("dirichlet:{b}"),
        }
    }
}

impl FromStr for PartitionMode {
    type Err = Error;
    /// Accepts `iid`, `dirichlet` (beta 0.5) or `dirichlet:<beta>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "iid" => Ok(PartitionMode::Iid),
            None if s == "dirichlet" => Ok(PartitionMode::Dirichlet(0.5)),
            Some(("dirichlet", b)) => {
                let beta: f64 = b
                    .parse()
                    .map_err(|_| Error::Config(format!("bad dirichlet beta '{b}'")))?;
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::Config(format!("dirichlet beta must be > 0, got {beta}")));
                }
                Ok(PartitionMode::Dirichlet(beta))
            }
            _ => Err(Error::Config(format!("unknown partition mode '{s}'"))),
        }
    }
}

/// Parameters of the synthetic stream.
///
/// Features: each class is a Gaussian with unit covariance. Class means sit at
/// `±separation/2` along a direction in the plane of coordinates 0 and 1 that
/// turns by `rotation` radians per batch, and both means translate by `drift`
/// per batch along the diagonal direction.
///
/// Graphs: trajectories are Markov chains over `num_places` places. Negative
/// samples leave home more often than positive ones; `drift` scales the
/// exploration rates per batch and `rotation` moves the popular places around
/// the ring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_clients: usize,
    pub samples_per_client: usize,
    pub labeled_fraction: f64,
    pub prevalence: f64,
    pub drift: f64,
    pub rotation: f64,
    pub partition: PartitionMode,
    pub modality: Modality,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub num_places: usize,
    pub trajectory_len: usize,
    pub holdout_per_batch: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_clients: 10,
            samples_per_client: 200,
            labeled_fraction: 0.217,
            prevalence: 0.18,
            drift: 0.25,
            rotation: 0.25,
            partition: PartitionMode::Iid,
            modality: Modality::Features,
            feature_dim: 16,
            class_separation: 3.0,
            num_places: 8,
            trajectory_len: 24,
            holdout_per_batch: 0,
            seed: 0,
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        unit("labeled_fraction", self.labeled_fraction)?;
        unit("prevalence", self.prevalence)?;
        if self.num_clients == 0 {
            return Err(Error::Config("num_clients must be >= 1".into()));
        }
        if self.samples_per_client == 0 {
            return Err(Error::Config("samples_per_client must be >= 1".into()));
        }
        for (name, v) in [
            ("drift", self.drift),
            ("rotation", self.rotation),
            ("class_separation", self.class_separation),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.class_separation < 0.0 {
            return Err(Error::Config("class_separation must be >= 0".into()));
        }
        if let PartitionMode::Dirichlet(b) = self.partition {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Config(format!("dirichlet beta must be > 0, got {b}")));
            }
        }
        match self.modality {
            Modality::Features if self.feature_dim < 2 => {
                Err(Error::Config("feature_dim must be >= 2".into()))
            }
            Modality::Graphs if self.num_places < 2 || self.trajectory_len < 2 => Err(
                Error::Config("num_places and trajectory_len must be >= 2".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Width of a model input: feature_dim, or the node feature width for graphs.
    pub fn input_dim(&self) -> usize {
        match self.modality {
            Modality::Features => self.feature_dim,
            Modality::Graphs => self.num_places + 1,
        }
    }
}

/// Generator parameters in effect at one time index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub time_index: usize,
    pub angle: f64,
    pub shift: f64,
    pub explore_scale: f64,
}

pub fn domain_at(cfg: &GeneratorConfig, t: usize) -> DomainDescriptor {
    let t_f = t as f64;
    DomainDescriptor {
        time_index: t,
        angle: cfg.rotation * t_f,
        shift: cfg.drift * t_f,
        explore_scale: (1.0 + cfg.drift * t_f).max(0.0),
    }
}

fn feature_sample(cfg: &GeneratorConfig, d: &DomainDescriptor, label: usize, rng: &mut StreamRng) -> Vec<f64> {
    let dim = cfg.feature_dim;
    let sign = if label == 1 { 0.5 } else { -0.5 };
    let diag = d.shift / (dim as f64).sqrt();
    let mut x: Vec<f64> = (0..dim)
        .map(|_| diag + rng.sample::<f64, _>(StandardNormal))
        .collect();
    x[0] += sign * cfg.class_separation * d.angle.cos();
    x[1] += sign * cfg.class_separation * d.angle.sin();
    x
}

const EXPLORE_NEG: f64 = 0.35;
const EXPLORE_POS: f64 = 0.15;
const RETURN_HOME: f64 = 0.5;

fn place_weights(cfg: &GeneratorConfig, d: &DomainDescriptor) -> Vec<f64> {
    let p = cfg.num_places as f64;
    let center = d.angle / (2.0 * PI) * p;
    (0..cfg.num_places)
        .map(|i| {
            let raw = (i as f64 - center).rem_euclid(p);
            let dist = raw.min(p - raw);
            (-0.5 * dist).exp()
        })
        .collect()
}

fn draw_weighted(weights: &[f64], rng: &mut StreamRng) -> u32 {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    (weights.len() - 1) as u32
}

fn trajectory(cfg: &GeneratorConfig, d: &DomainDescriptor, label: usize, weights: &[f64], rng: &mut StreamRng) -> Vec<u32> {
    let base = if label == 1 { EXPLORE_POS } else { EXPLORE_NEG };
    let explore = (base * d.explore_scale).clamp(0.0, 1.0);
    let home = draw_weighted(weights, rng);
    let mut at = home;
    let mut seq = Vec::with_capacity(cfg.trajectory_len);
    seq.push(at);
    for _ in 1..cfg.trajectory_len {
        if at == home {
            if rng.random_bool(explore) {
                at = draw_weighted(weights, rng);
            }
        } else if rng.random_bool(RETURN_HOME) {
            at = home;
        } else if rng.random_bool(explore) {
            at = draw_weighted(weights, rng);
        }
        seq.push(at);
    }
    seq
}

fn draw_labeled(cfg: &GeneratorConfig, d: &DomainDescriptor, n: usize, rng: &mut StreamRng) -> Result<Vec<Sample>> {
    let weights = place_weights(cfg, d);
    (0..n)
        .map(|_| {
            let label = usize::from(rng.random_bool(cfg.prevalence));
            let payload = match cfg.modality {
                Modality::Features => Payload::Features(feature_sample(cfg, d, label, rng)),
                Modality::Graphs => {
                    let seq = trajectory(cfg, d, label, &weights, rng);
                    Payload::Graph(build_mobility_graph(&seq, cfg.num_places)?)
                }
            };
            Ok(Sample {
                payload,
                label: Some(label),
                client_id: 0,
                time_index: d.time_index,
            })
        })
        .collect()
}

/// Generates batches `t = 0..batches`, each distributed over the clients.
///
/// Labels are hidden independently with probability `1 - labeled_fraction`.
/// Holdout samples keep their labels and carry `client_id = num_clients`.
pub fn generate_stream(cfg: &GeneratorConfig, batches: usize) -> Result<Vec<StreamBatch>> {
    cfg.validate()?;
    if batches == 0 {
        return Err(Error::Config("stream must have at least one batch".into()));
    }
    (0..batches)
        .map(|t| {
            let domain = domain_at(cfg, t);
            let n = cfg.num_clients * cfg.samples_per_client;
            let mut gen = rng::stream(&[tag::GENERATE, cfg.seed, t as u64]);
            let samples = draw_labeled(cfg, &domain, n, &mut gen)?;
            let parts = partition_clients(
                samples,
                cfg.num_clients,
                cfg.partition,
                rng::derive_seed(&[cfg.seed, t as u64]),
            )?;
            let mut mask = rng::stream(&[tag::LABEL_MASK, cfg.seed, t as u64]);
            let clients = parts
                .into_iter()
                .enumerate()
                .map(|(k, part)| {
                    let masked = part.into_iter().map(|mut s| {
                        if !mask.random_bool(cfg.labeled_fraction) {
                            s.label = None;
                        }
                        s
                    });
                    ClientData::from_samples(k, masked)
                })
                .collect();
            let mut hold = rng::stream(&[tag::GENERATE, cfg.seed, t as u64, 1]);
            let mut holdout = draw_labeled(cfg, &domain, cfg.holdout_per_batch, &mut hold)?;
            for s in &mut holdout {
                s.client_id = cfg.num_clients;
            }
            Ok(StreamBatch {
                time_index: t,
                clients,
                holdout,
                domain,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            num_clients: 4,
            samples_per_client: 50,
            ..Default::default()
        }
    }

    #[test]
    fn zero_drift_keeps_parameters_fixed() {
        let cfg = GeneratorConfig {
            drift: 0.0,
            rotation: 0.0,
            ..small()
        };
        let mut a = domain_at(&cfg, 0);
        let mut b = domain_at(&cfg, 5);
        a.time_index = 0;
        b.time_index = 0;
        assert_eq!(a, b);
    }

    #[test]
    fn full_labeling_leaves_no_unlabeled() {
        let cfg = GeneratorConfig {
            labeled_fraction: 1.0,
            ..small()
        };
        let stream = generate_stream(&cfg, 3).unwrap();
        assert!(stream.iter().all(|b| b.clients.iter().all(|c| c.unlabeled.is_empty())));
    }

    #[test]
    fn stream_is_deterministic_and_ordered() {
        for modality in [Modality::Features, Modality::Graphs] {
            let cfg = GeneratorConfig { modality, ..small() };
            let a = generate_stream(&cfg, 3).unwrap();
            let b = generate_stream(&cfg, 3).unwrap();
            assert_eq!(a, b);
            for (t, batch) in a.iter().enumerate() {
                assert_eq!(batch.time_index, t);
                assert!(batch.samples().all(|s| s.time_index == t));
                assert_eq!(batch.samples().count(), 200);
            }
            let c = generate_stream(&GeneratorConfig { seed: 1, ..cfg }, 3).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn graph_samples_have_place_width_features() {
        let cfg = GeneratorConfig {
            modality: Modality::Graphs,
            ..small()
        };
        let stream = generate_stream(&cfg, 1).unwrap();
        for s in stream[0].samples() {
            let Payload::Graph(g) = &s.payload else { panic!("expected graph") };
            assert_eq!(g.feature_dim(), cfg.input_dim());
            assert!(g.edges().iter().all(|&(a, b)| a < b && b < g.num_nodes()));
        }
    }

    #[test]
    fn invalid_fractions_are_config_errors() {
        for cfg in [
            GeneratorConfig { labeled_fraction: 1.2, ..small() },
            GeneratorConfig { prevalence: -0.1, ..small() },
            GeneratorConfig { num_clients: 0, ..small() },
        ] {
            assert!(matches!(generate_stream(&cfg, 1), Err(Error::Config(_))));
        }
    }

    #[test]
    fn partition_modes_parse() {
        assert_eq!("iid".parse::<PartitionMode>().unwrap(), PartitionMode::Iid);
        assert_eq!(
            "dirichlet:0.1".parse::<PartitionMode>().unwrap(),
            PartitionMode::Dirichlet(0.1)
        );
        assert!("dirichlet:-1".parse::<PartitionMode>().is_err());
        let m = PartitionMode::Dirichlet(0.25);
        assert_eq!(m.name().parse::<PartitionMode>().unwrap(), m);
    }
}
