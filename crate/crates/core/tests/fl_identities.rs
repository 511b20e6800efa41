//! Exact identities and small oracles for the federated trainers.

use fedmobile::data::{generate_stream, ClientData, GeneratorConfig, StreamBatch};
use fedmobile::fl::{
    centralized_train, fedavg_supervised, fedsem_ft, local_update_cr, train_apprentice_stream,
    train_expert, FedMobileConfig, LocalContext, LocalOutcome, NoopObserver, Phase, PreparedClient,
    RoundLog, RoundObserver,
};
use fedmobile::losses::{composite_step2_loss, BatchLogits, LossConfig};
use fedmobile::nn::{
    forward, xavier_init, ArchitectureSpec, DenseMatrix, ModelInput, ModelKind, ModelParams,
    OptimizerConfig,
};
use fedmobile::{rng, Error};

fn small_stream(num_clients: usize, batches: usize, labeled_fraction: f64, seed: u64) -> Vec<StreamBatch> {
    let cfg = GeneratorConfig {
        num_clients,
        samples_per_client: 40,
        labeled_fraction,
        feature_dim: 4,
        seed,
        ..GeneratorConfig::default()
    };
    generate_stream(&cfg, batches).unwrap()
}

fn small_config(dim: usize) -> FedMobileConfig {
    let spec = ArchitectureSpec::new(ModelKind::Mlp, dim).with_hidden(&[6]);
    FedMobileConfig {
        expert_rounds: 3,
        rounds_per_batch: 2,
        stream_batches: 2,
        local_epochs: 2,
        batch_size: 8,
        ..FedMobileConfig::new(spec)
    }
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.to_bits()
}

#[test]
fn one_client_fedavg_matches_centralized_under_sgd() {
    let stream = small_stream(1, 1, 0.5, 3);
    let client = &stream[0].clients[0];
    let mut cfg = small_config(4);
    cfg.optimizer = OptimizerConfig::sgd(0.05);
    let (fed, _) = train_expert(std::slice::from_ref(client), &cfg, 11, &mut NoopObserver).unwrap();
    let epochs = cfg.expert_rounds * cfg.local_epochs;
    let (central, logs) = centralized_train(client, &cfg, epochs, 11, &mut NoopObserver).unwrap();
    assert_eq!(logs.len(), epochs);
    assert_eq!(bits(&fed), bits(&central));
}

#[test]
fn zero_learning_rate_keeps_the_initialization() {
    let stream = small_stream(3, 1, 0.3, 4);
    let mut cfg = small_config(4);
    for opt in [OptimizerConfig::sgd(0.0), OptimizerConfig::adamw(0.0)] {
        cfg.optimizer = opt;
        let (trained, logs) = train_expert(&stream[0].clients, &cfg, 5, &mut NoopObserver).unwrap();
        assert_eq!(logs.len(), 3);
        let untrained = train_expert(
            &stream[0].clients,
            &FedMobileConfig {
                expert_rounds: 0,
                ..cfg.clone()
            },
            5,
            &mut NoopObserver,
        )
        .unwrap();
        assert!(untrained.1.is_empty());
        assert_eq!(bits(&trained), bits(&untrained.0));
    }
}

#[test]
fn zero_expert_rounds_return_the_seeded_initialization() {
    let stream = small_stream(2, 1, 0.3, 5);
    let cfg = FedMobileConfig {
        expert_rounds: 0,
        ..small_config(4)
    };
    let (model, logs) = train_expert(&stream[0].clients, &cfg, 21, &mut NoopObserver).unwrap();
    assert!(logs.is_empty());
    assert_eq!(model, xavier_init(&cfg.model, rng::derive_seed(&[21, 0])).unwrap());
}

#[test]
fn fedavg_ignores_unlabeled_data() {
    let stream = small_stream(3, 1, 0.3, 6);
    let clients = &stream[0].clients;
    let stripped: Vec<ClientData> = clients.iter().map(ClientData::labeled_only).collect();
    let cfg = small_config(4);
    let (a, _) = fedavg_supervised(clients, &cfg, 2, &mut NoopObserver).unwrap();
    let (b, _) = fedavg_supervised(&stripped, &cfg, 2, &mut NoopObserver).unwrap();
    assert_eq!(bits(&a), bits(&b));
    let no_cr = FedMobileConfig {
        loss: LossConfig {
            lambda: 0.0,
            ..cfg.loss
        },
        ..cfg.clone()
    };
    let (c, _) = train_expert(&stripped, &no_cr, 2, &mut NoopObserver).unwrap();
    assert_eq!(bits(&a), bits(&c));
}

#[test]
fn consistency_term_changes_training_when_unlabeled_data_exists() {
    let stream = small_stream(2, 1, 0.3, 7);
    let cfg = small_config(4);
    let (with_cr, _) = train_expert(&stream[0].clients, &cfg, 3, &mut NoopObserver).unwrap();
    let (without, _) = fedavg_supervised(&stream[0].clients, &cfg, 3, &mut NoopObserver).unwrap();
    assert!(with_cr.max_abs_diff(&without) > 0.0);
}

#[test]
fn alpha_zero_makes_the_expert_irrelevant() {
    let stream = small_stream(2, 3, 0.4, 8);
    let cfg = FedMobileConfig {
        loss: LossConfig {
            alpha: 0.0,
            ..LossConfig::default()
        },
        ..small_config(4)
    };
    let e1 = xavier_init(&cfg.model, 100).unwrap();
    let e2 = xavier_init(&cfg.model, 200).unwrap();
    let (a, _) = train_apprentice_stream(&e1, &stream[1..], &cfg, 4, &mut NoopObserver).unwrap();
    let (b, _) = train_apprentice_stream(&e2, &stream[1..], &cfg, 4, &mut NoopObserver).unwrap();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn distillation_pulls_towards_the_expert() {
    let stream = small_stream(2, 3, 0.4, 8);
    let cfg = small_config(4);
    let e1 = xavier_init(&cfg.model, 100).unwrap();
    let e2 = xavier_init(&cfg.model, 200).unwrap();
    let (a, _) = train_apprentice_stream(&e1, &stream[1..], &cfg, 4, &mut NoopObserver).unwrap();
    let (b, _) = train_apprentice_stream(&e2, &stream[1..], &cfg, 4, &mut NoopObserver).unwrap();
    assert!(a.max_abs_diff(&b) > 0.0);
}

#[derive(Default)]
struct Snapshots {
    pairs: Vec<(usize, ModelParams, ModelParams)>,
    rounds: Vec<(usize, Phase)>,
}

impl RoundObserver for Snapshots {
    fn on_round(&mut self, log: &RoundLog, _model: &ModelParams) -> fedmobile::Result<()> {
        self.rounds.push((log.round, log.phase));
        Ok(())
    }

    fn on_batch_end(&mut self, batch: usize, expert: &ModelParams, apprentice: &ModelParams) -> fedmobile::Result<()> {
        self.pairs.push((batch, expert.clone(), apprentice.clone()));
        Ok(())
    }
}

#[test]
fn expert_is_replaced_by_the_apprentice_snapshot_after_each_batch() {
    let stream = small_stream(2, 4, 0.4, 9);
    let cfg = small_config(4);
    let expert = xavier_init(&cfg.model, 1).unwrap();
    let before = expert.clone();
    let mut obs = Snapshots::default();
    let (last, logs) = train_apprentice_stream(&expert, &stream[1..], &cfg, 6, &mut obs).unwrap();
    assert_eq!(expert, before);
    assert_eq!(obs.pairs.len(), 3);
    for (i, (batch, e, a)) in obs.pairs.iter().enumerate() {
        assert_eq!(*batch, i + 1);
        assert_eq!(e, a);
    }
    assert_eq!(&obs.pairs[2].2, &last);
    // Stream rounds continue the numbering after the expert rounds.
    let numbers: Vec<usize> = logs.iter().map(|l| l.round).collect();
    assert_eq!(numbers, (4..=9).collect::<Vec<_>>());
    assert_eq!(obs.rounds[0], (4, Phase::Stream { batch: 1 }));
}

#[test]
fn empty_stream_returns_the_apprentice_initialization() {
    let cfg = small_config(4);
    let expert = xavier_init(&cfg.model, 1).unwrap();
    let (a, logs) = train_apprentice_stream(&expert, &[], &cfg, 13, &mut NoopObserver).unwrap();
    assert!(logs.is_empty());
    assert_eq!(a, xavier_init(&cfg.model, rng::derive_seed(&[13, 1])).unwrap());
    let warm = FedMobileConfig {
        warm_start: true,
        ..cfg
    };
    let (w, _) = train_apprentice_stream(&expert, &[], &warm, 13, &mut NoopObserver).unwrap();
    assert_eq!(w, expert);
}

fn full_run(concurrent: bool) -> (ModelParams, ModelParams, Vec<RoundLog>) {
    let stream = small_stream(4, 3, 0.3, 10);
    let cfg = FedMobileConfig {
        concurrent,
        ..small_config(4)
    };
    let (expert, mut logs) = train_expert(&stream[0].clients, &cfg, 8, &mut NoopObserver).unwrap();
    let (app, more) = train_apprentice_stream(&expert, &stream[1..], &cfg, 8, &mut NoopObserver).unwrap();
    logs.extend(more);
    (expert, app, logs)
}

#[test]
fn sequential_and_concurrent_clients_are_bit_identical() {
    let (e1, a1, l1) = full_run(false);
    let (e2, a2, l2) = full_run(true);
    assert_eq!(bits(&e1), bits(&e2));
    assert_eq!(bits(&a1), bits(&a2));
    assert_eq!(l1, l2);
}

#[test]
fn one_sgd_step_on_logistic_regression_matches_hand_gradient() {
    // Softmax regression, one full batch, one epoch, no regularization.
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 4).with_hidden(&[]);
    let stream = small_stream(1, 1, 1.0, 12);
    let mut client = stream[0].clients[0].clone();
    client.labeled.truncate(10);
    let lr = 0.2;
    let mut cfg = FedMobileConfig::new(spec.clone());
    cfg.expert_rounds = 1;
    cfg.local_epochs = 1;
    cfg.batch_size = 64;
    cfg.loss.lambda = 0.0;
    cfg.loss.l2_coeff = 0.0;
    cfg.optimizer = OptimizerConfig::sgd(lr);
    let w0 = xavier_init(&spec, rng::derive_seed(&[1, 0])).unwrap();
    let (w1, _) = train_expert(std::slice::from_ref(&client), &cfg, 1, &mut NoopObserver).unwrap();

    let xs: Vec<Vec<f64>> = client
        .labeled
        .iter()
        .map(|s| match &s.payload {
            fedmobile::data::Payload::Features(x) => x.clone(),
            _ => unreachable!(),
        })
        .collect();
    let ys: Vec<usize> = client.labeled.iter().map(|s| s.label.unwrap()).collect();
    let n = xs.len() as f64;
    let layer = &w0.layers()[0];
    let mut gw = [[0.0; 2]; 4];
    let mut gb = [0.0; 2];
    for (x, &y) in xs.iter().zip(&ys) {
        let z: Vec<f64> = (0..2)
            .map(|o| layer.bias[o] + (0..4).map(|i| x[i] * layer.weight.get(i, o)).sum::<f64>())
            .collect();
        let m = z[0].max(z[1]);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s = e[0] + e[1];
        for o in 0..2 {
            let d = e[o] / s - if o == y { 1.0 } else { 0.0 };
            gb[o] += d / n;
            for i in 0..4 {
                gw[i][o] += x[i] * d / n;
            }
        }
    }
    let got = &w1.layers()[0];
    for o in 0..2 {
        assert!((got.bias[o] - (layer.bias[o] - lr * gb[o])).abs() < 1e-12);
        for i in 0..4 {
            let want = layer.weight.get(i, o) - lr * gw[i][o];
            assert!((got.weight.get(i, o) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn alpha_one_gradient_ignores_labels() {
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 3).with_hidden(&[4]);
    let p = xavier_init(&spec, 3).unwrap();
    let expert = xavier_init(&spec, 4).unwrap();
    let x = DenseMatrix::from_rows(&[[0.1, -0.4, 0.9], [1.2, 0.3, -0.7], [-0.5, 0.8, 0.2]]).unwrap();
    let input = ModelInput::Features(x);
    let logits = forward(&p, &input).unwrap().logits().clone();
    let teacher = forward(&expert, &input).unwrap().logits().clone();
    let cfg = LossConfig {
        alpha: 1.0,
        ..LossConfig::default()
    };
    let run = |labels: &[usize]| {
        let batch = BatchLogits {
            labeled: &logits,
            labels,
            unlabeled: None,
        };
        composite_step2_loss(batch, &teacher, &p, &cfg).unwrap()
    };
    let (b1, g1) = run(&[0, 1, 0]);
    let (b2, g2) = run(&[1, 1, 1]);
    assert_ne!(b1.ce, b2.ce);
    assert_eq!(b1.total, b2.total);
    assert_eq!(g1.labeled, g2.labeled);
}

#[test]
fn clients_without_labels_sit_out_and_all_empty_is_an_error() {
    let stream = small_stream(3, 1, 0.5, 14);
    let mut clients = stream[0].clients.clone();
    clients[1].labeled.clear();
    let cfg = small_config(4);
    let (_, logs) = train_expert(&clients, &cfg, 1, &mut NoopObserver).unwrap();
    assert!(logs.iter().all(|l| l.skipped == vec![1] && l.clients.len() == 2));

    let prepared = PreparedClient::new(&clients[1]).unwrap();
    let ctx = LocalContext {
        cfg: &cfg,
        loss: cfg.loss,
        optimizer: cfg.optimizer,
        seed: 1,
        round: 0,
    };
    let w = xavier_init(&cfg.model, 1).unwrap();
    assert!(matches!(
        local_update_cr(&prepared, &w, &ctx).unwrap(),
        LocalOutcome::Skipped { client_id: 1 }
    ));

    for c in &mut clients {
        c.labeled.clear();
    }
    assert!(matches!(
        train_expert(&clients, &cfg, 1, &mut NoopObserver),
        Err(Error::Round { round: 1, .. })
    ));
}

#[test]
fn fedsem_logs_expert_then_stream_rounds() {
    let stream = small_stream(2, 3, 0.4, 15);
    let cfg = small_config(4);
    let (_, logs) = fedsem_ft(&stream[0].clients, &stream[1..], &cfg, 0.9, 2, &mut NoopObserver).unwrap();
    assert_eq!(logs.len(), 3 + 2 * 2);
    assert!(logs[..3].iter().all(|l| l.phase == Phase::Expert));
    assert_eq!(logs[3].phase, Phase::Stream { batch: 1 });
    assert!(fedsem_ft(&stream[0].clients, &stream[1..], &cfg, 0.5, 2, &mut NoopObserver).is_err());
}

#[test]
fn architecture_mismatch_between_expert_and_config_is_rejected() {
    let stream = small_stream(2, 2, 0.4, 16);
    let cfg = small_config(4);
    let other = xavier_init(&ArchitectureSpec::new(ModelKind::Mlp, 4).with_hidden(&[3]), 1).unwrap();
    assert!(matches!(
        train_apprentice_stream(&other, &stream[1..], &cfg, 1, &mut NoopObserver),
        Err(Error::Dimension(_))
    ));
}
