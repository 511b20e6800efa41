//! Property tests for cross-module invariants.

use proptest::prelude::*;

use fedmobile::data::{
    generate_stream, perturb_graph, read_samples, write_samples, GeneratorConfig, Modality,
    PartitionMode, Payload,
};
use fedmobile::experiment::{prepare_data, ExperimentConfig};
use fedmobile::fl::{fedavg_aggregate, incremental_local_update_cr, FedMobileConfig, LocalContext, PreparedClient};
use fedmobile::graph::TrajectoryGraph;
use fedmobile::losses::{cr_loss, kd_loss, CrGradient, KdDirection};
use fedmobile::metrics::{confusion, pr_auc, precision_recall_f1, MetricsReport};
use fedmobile::nn::{xavier_init, ArchitectureSpec, DenseMatrix, ModelKind};
use fedmobile::rng;

fn gen_config(seed: u64, graphs: bool, dirichlet: bool) -> GeneratorConfig {
    GeneratorConfig {
        num_clients: 3,
        samples_per_client: 12,
        modality: if graphs { Modality::Graphs } else { Modality::Features },
        partition: if dirichlet {
            PartitionMode::Dirichlet(0.5)
        } else {
            PartitionMode::Iid
        },
        feature_dim: 3,
        num_places: 5,
        trajectory_len: 7,
        holdout_per_batch: 2,
        seed,
        ..GeneratorConfig::default()
    }
}

fn graph_is_valid(g: &TrajectoryGraph) -> bool {
    g.edges().iter().all(|&(a, b)| a < b && b < g.num_nodes())
}

fn logits(rows: usize, seed: u64) -> DenseMatrix {
    use rand::Rng;
    let mut r = rng::stream(&[800, seed]);
    let v = (0..rows * 2).map(|_| r.random_range(-4.0..4.0)).collect();
    DenseMatrix::from_vec(rows, 2, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn streams_are_deterministic_ordered_and_serializable(seed in 0u64..500, graphs: bool, dirichlet: bool) {
        let cfg = gen_config(seed, graphs, dirichlet);
        let a = generate_stream(&cfg, 3).unwrap();
        let b = generate_stream(&cfg, 3).unwrap();
        for (t, (x, y)) in a.iter().zip(&b).enumerate() {
            prop_assert_eq!(x.time_index, t);
            prop_assert!(x.samples().chain(&x.holdout).all(|s| s.time_index == t));
            let xs: Vec<_> = x.samples().cloned().collect();
            let ys: Vec<_> = y.samples().cloned().collect();
            let mut buf_x = Vec::new();
            let mut buf_y = Vec::new();
            write_samples(&mut buf_x, &xs).unwrap();
            write_samples(&mut buf_y, &ys).unwrap();
            prop_assert_eq!(&buf_x, &buf_y);
            prop_assert_eq!(read_samples(buf_x.as_slice()).unwrap(), xs);
        }
    }

    #[test]
    fn generated_and_perturbed_graphs_stay_valid(seed in 0u64..500, p in 0.0f64..=1.0) {
        let stream = generate_stream(&gen_config(seed, true, false), 1).unwrap();
        let mut r = rng::stream(&[801, seed]);
        for s in stream[0].samples() {
            let Payload::Graph(g) = &s.payload else { unreachable!() };
            prop_assert!(graph_is_valid(g));
            let h = perturb_graph(g, p, &mut r).unwrap();
            prop_assert!(graph_is_valid(&h));
            prop_assert_eq!(h.num_nodes(), g.num_nodes());
        }
    }

    #[test]
    fn splits_keep_labels_out_of_unlabeled_pools(seed in 0u64..200) {
        let mut cfg = ExperimentConfig::default();
        cfg.generator = gen_config(seed, false, false);
        cfg.fl.stream_batches = 2;
        cfg.fl.model = ArchitectureSpec::new(ModelKind::Mlp, 3);
        let data = prepare_data(&cfg, seed).unwrap();
        let mut train = 0;
        for b in &data.train {
            for c in &b.clients {
                prop_assert!(c.unlabeled.iter().all(|s| s.label.is_none() && s.client_id == c.client_id));
                prop_assert!(c.labeled.iter().all(|s| s.label.is_some() && s.client_id == c.client_id));
                train += c.len();
            }
        }
        let holdout = 3 * 2;
        prop_assert_eq!(train + data.validation.len() + data.test.len(), 3 * 36 + holdout);
        prop_assert!(data.retention.iter().all(|s| s.time_index == 0));
    }

    #[test]
    fn aggregating_identical_weights_is_exact(seed in 0u64..1000, sizes in prop::collection::vec(1usize..500, 1..8)) {
        let spec = ArchitectureSpec::new(ModelKind::Mlp, 4).with_hidden(&[5]);
        let w = xavier_init(&spec, seed).unwrap();
        let copies = vec![w.clone(); sizes.len()];
        prop_assert_eq!(fedavg_aggregate(&copies, &sizes).unwrap(), w);
    }

    #[test]
    fn metrics_are_bounded_and_f1_is_the_harmonic_mean(
        pairs in prop::collection::vec((0.0f64..1.0, 0usize..2), 1..200)
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let pred: Vec<usize> = scores.iter().map(|&s| (s >= 0.5) as usize).collect();
        let report = MetricsReport::from_predictions(&pred, &scores, &labels).unwrap();
        for v in [report.precision, report.recall, report.f1, report.pr_auc] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let (p, r, f1) = precision_recall_f1(&confusion(&pred, &labels).unwrap());
        if p > 0.0 && r > 0.0 {
            prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
        }
        if labels.contains(&1) {
            prop_assert_eq!(pr_auc(&scores, &labels).unwrap(), report.pr_auc);
        }
    }

    #[test]
    fn loss_terms_are_finite_nonnegative_and_cr_is_linear(seed in 0u64..1000, lambda in 0.0f64..1.0) {
        let a = logits(6, seed);
        let b = logits(6, seed + 1);
        let one = cr_loss(Some((&a, &b)), lambda, CrGradient::Both).unwrap();
        let two = cr_loss(Some((&a, &b)), 2.0 * lambda, CrGradient::Both).unwrap();
        prop_assert!(one.value.is_finite() && one.value >= 0.0);
        prop_assert_eq!(two.value, 2.0 * one.value);
        for dir in [KdDirection::TeacherToStudent, KdDirection::StudentToTeacher] {
            let (kd, g) = kd_loss(&a, &b, 1.5, dir).unwrap();
            prop_assert!(kd.is_finite() && kd >= 0.0);
            prop_assert!(g.is_finite());
        }
    }

    #[test]
    fn expert_is_untouched_by_incremental_updates(seed in 0u64..200) {
        let stream = generate_stream(&GeneratorConfig {
            labeled_fraction: 0.5,
            ..gen_config(seed, false, false)
        }, 1).unwrap();
        let spec = ArchitectureSpec::new(ModelKind::Mlp, 3).with_hidden(&[4]);
        let cfg = FedMobileConfig { batch_size: 4, ..FedMobileConfig::new(spec.clone()) };
        let expert = xavier_init(&spec, seed).unwrap();
        let before = expert.to_bits();
        let apprentice = xavier_init(&spec, seed + 1).unwrap();
        let ctx = LocalContext { cfg: &cfg, loss: cfg.loss, optimizer: cfg.optimizer, seed, round: 0 };
        for c in &stream[0].clients {
            let client = PreparedClient::new(c).unwrap();
            incremental_local_update_cr(&client, &apprentice, &expert, &ctx).unwrap();
        }
        prop_assert_eq!(expert.to_bits(), before);
    }
}
