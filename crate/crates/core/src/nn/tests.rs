use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::error::Error;
use crate::graph::TrajectoryGraph;
use crate::rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = rng::stream(&[99, seed]);
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn randomize_biases(p: &mut ModelParams, seed: u64) {
    let mut r = rng::stream(&[98, seed]);
    for i in 0..p.num_params() {
        if !p.is_weight_index(i) {
            p.set_flat(i, r.random_range(-0.5..0.5));
        }
    }
}

/// Plain nested-loop forward pass, written independently of the ndarray path.
fn reference_mlp(p: &ModelParams, x: &DenseMatrix) -> Vec<Vec<f64>> {
    let act = p.spec().activation;
    let last = p.layers().len() - 1;
    (0..x.rows())
        .map(|r| {
            let mut h = x.row(r).to_vec();
            for (l, layer) in p.layers().iter().enumerate() {
                let (fan_in, fan_out) = layer.weight.shape();
                let mut next = vec![0.0; fan_out];
                for (o, out) in next.iter_mut().enumerate() {
                    let mut s = layer.bias[o];
                    for (i, hv) in h.iter().enumerate().take(fan_in) {
                        s += hv * layer.weight.get(i, o);
                    }
                    *out = if l == last { s } else { act.apply(s) };
                }
                h = next;
            }
            h
        })
        .collect()
}

fn graph(nodes: usize, edges: &[(usize, usize)], dim: usize, seed: u64) -> TrajectoryGraph {
    let f = random_matrix(nodes, dim, seed);
    TrajectoryGraph::new(
        (0..nodes as u32).collect(),
        edges.iter().copied(),
        (0..nodes).map(|i| f.row(i).to_vec()).collect(),
    )
    .unwrap()
}

#[test]
fn zero_parameters_give_zero_logits() {
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 3).with_hidden(&[4, 4]);
    let p = ModelParams::zeros(&spec).unwrap();
    let t = forward_mlp(&p, &random_matrix(5, 3, 1)).unwrap();
    assert!(t.logits().values().iter().all(|&v| v == 0.0));
    assert_eq!(t.depth(), 3);
    assert_eq!(t.logits().cols(), 2);

    let spec = ArchitectureSpec::new(ModelKind::Gcn, 3).with_hidden(&[4, 4]);
    let p = ModelParams::zeros(&spec).unwrap();
    let t = forward_gcn(&p, &[graph(3, &[(0, 1)], 3, 2)]).unwrap();
    assert!(t.logits().values().iter().all(|&v| v == 0.0));
    assert_eq!(t.depth(), 3);
}

#[test]
fn identity_linear_layer_passes_features_through() {
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 3)
        .with_hidden(&[])
        .with_classes(3);
    let p = ModelParams::from_layers(
        spec,
        vec![Layer {
            weight: DenseMatrix::identity(3),
            bias: vec![0.0; 3],
        }],
    )
    .unwrap();
    let x = random_matrix(4, 3, 3);
    let t = forward_mlp(&p, &x).unwrap();
    assert_eq!(t.logits(), &x);
}

#[test]
fn mlp_matches_loop_reference() {
    for activation in [Activation::Relu, Activation::Tanh] {
        let spec = ArchitectureSpec::new(ModelKind::Mlp, 6)
            .with_hidden(&[8, 5])
            .with_activation(activation);
        let mut p = xavier_init(&spec, 17).unwrap();
        randomize_biases(&mut p, 17);
        let x = random_matrix(7, 6, 4);
        let t = forward_mlp(&p, &x).unwrap();
        let reference = reference_mlp(&p, &x);
        for (r, row) in reference.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((t.logits().get(r, c) - v).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn mlp_shape_mismatch_is_a_dimension_error() {
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 6).with_hidden(&[4]);
    let p = xavier_init(&spec, 1).unwrap();
    assert!(matches!(
        forward_mlp(&p, &random_matrix(2, 5, 1)),
        Err(Error::Dimension(_))
    ));
    assert!(forward(&p, &ModelInput::Graphs(vec![graph(2, &[], 6, 1)])).is_err());
}

#[test]
fn edgeless_gcn_matches_hand_arithmetic() {
    // One ReLU conv layer (2 -> 2) on two isolated nodes, so Â = I:
    //   H1 = relu(X W1 + b1), pooled = mean(H1 rows), logits = pooled W2 + b2.
    let spec = ArchitectureSpec::new(ModelKind::Gcn, 2).with_hidden(&[2]);
    let p = ModelParams::from_layers(
        spec,
        vec![
            Layer {
                weight: DenseMatrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap(),
                bias: vec![0.1, 0.0],
            },
            Layer {
                weight: DenseMatrix::from_rows(&[[1.0, -1.0], [2.0, 0.0]]).unwrap(),
                bias: vec![0.0, 0.5],
            },
        ],
    )
    .unwrap();
    let g = TrajectoryGraph::new(vec![0, 1], [], vec![vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap();
    // Node 0: [1 + 1 + 0.1, 2 - 2] = [2.1, 0]; node 1: [3 + 0.1, 6] = [3.1, 6].
    // pooled = [2.6, 3]; logits = [2.6 + 6, -2.6 + 0.5] = [8.6, -2.1].
    let t = forward_gcn(&p, &[g]).unwrap();
    assert!((t.logits().get(0, 0) - 8.6).abs() < 1e-12);
    assert!((t.logits().get(0, 1) + 2.1).abs() < 1e-12);
}

#[test]
fn gcn_rejects_bad_feature_dimension() {
    let spec = ArchitectureSpec::new(ModelKind::Gcn, 3).with_hidden(&[4]);
    let p = xavier_init(&spec, 1).unwrap();
    assert!(matches!(
        forward_gcn(&p, &[graph(2, &[], 4, 1)]),
        Err(Error::Dimension(_))
    ));
    assert!(matches!(forward_gcn(&p, &[]), Err(Error::DegenerateInput(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gcn_logits_invariant_under_node_relabeling(seed in 0u64..1000, shift in 1usize..5) {
        let spec = ArchitectureSpec::new(ModelKind::Gcn, 3).with_hidden(&[6, 4]);
        let mut p = xavier_init(&spec, seed).unwrap();
        randomize_biases(&mut p, seed);
        let g = graph(5, &[(0, 1), (1, 2), (0, 3), (3, 4)], 3, seed);
        let order: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let permuted = g.permuted(&order).unwrap();
        let a = forward_gcn(&p, &[g]).unwrap();
        let b = forward_gcn(&p, &[permuted]).unwrap();
        for (x, y) in a.logits().values().iter().zip(b.logits().values()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let spec = ArchitectureSpec::new(ModelKind::Mlp, 4).with_hidden(&[5]);
        let p = xavier_init(&spec, seed).unwrap();
        let x = random_matrix(3, 4, seed);
        let a = forward_mlp(&p, &x).unwrap();
        let b = forward_mlp(&p, &x).unwrap();
        prop_assert_eq!(a.logits(), b.logits());
    }
}

#[test]
fn zero_logit_gradient_gives_zero_parameter_gradient() {
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 4).with_hidden(&[5, 3]);
    let p = xavier_init(&spec, 2).unwrap();
    let t = forward_mlp(&p, &random_matrix(6, 4, 2)).unwrap();
    let g = backward(&p, &t, &DenseMatrix::zeros(6, 2)).unwrap();
    assert!(g.flat_values().iter().all(|&v| v == 0.0));
}

#[test]
fn linear_squared_error_gradient_is_closed_form() {
    // z = x W + b, L = ½ Σ (z − y)²  ⇒  ∂L/∂W = xᵀ (z − y), ∂L/∂b = Σ_rows (z − y).
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 2).with_hidden(&[]);
    let p = ModelParams::from_layers(
        spec,
        vec![Layer {
            weight: DenseMatrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]).unwrap(),
            bias: vec![0.25, 0.0],
        }],
    )
    .unwrap();
    let x = DenseMatrix::from_rows(&[[2.0, 1.0]]).unwrap();
    let y = [1.0, 1.0];
    let t = forward_mlp(&p, &x).unwrap();
    // z = [2 + 0.5 + 0.25, -2 + 2] = [2.75, 0.0]; residual r = [1.75, -1].
    let z = t.logits();
    assert!((z.get(0, 0) - 2.75).abs() < 1e-15 && z.get(0, 1).abs() < 1e-15);
    let residual = DenseMatrix::from_rows(&[[z.get(0, 0) - y[0], z.get(0, 1) - y[1]]]).unwrap();
    let g = backward(&p, &t, &residual).unwrap();
    let expected_w = [3.5, -2.0, 1.75, -1.0];
    assert_eq!(g.layers()[0].weight.values(), &expected_w);
    assert_eq!(g.layers()[0].bias, vec![1.75, -1.0]);
}

fn dot_loss(p: &ModelParams, input: &ModelInput, weights: &DenseMatrix) -> f64 {
    let t = forward(p, input).unwrap();
    t.logits()
        .values()
        .iter()
        .zip(weights.values())
        .map(|(a, b)| a * b)
        .sum()
}

fn check_against_finite_differences(p: &ModelParams, input: &ModelInput, seed: u64) {
    let t = forward(p, input).unwrap();
    let upstream = random_matrix(t.logits().rows(), t.logits().cols(), seed);
    let analytic = backward(p, &t, &upstream).unwrap();
    let report = finite_diff_check(
        p,
        &analytic,
        |q| dot_loss(q, input, &upstream),
        GradCheckOptions {
            sample: Some((150, seed)),
            ..Default::default()
        },
    );
    assert!(report.checked >= 100);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn mlp_backward_matches_finite_differences() {
    for (activation, seed) in [(Activation::Tanh, 1), (Activation::Relu, 2)] {
        let spec = ArchitectureSpec::new(ModelKind::Mlp, 5)
            .with_hidden(&[9, 7])
            .with_activation(activation);
        let mut p = xavier_init(&spec, seed).unwrap();
        randomize_biases(&mut p, seed);
        check_against_finite_differences(&p, &ModelInput::Features(random_matrix(6, 5, seed)), seed);
    }
}

#[test]
fn gcn_backward_matches_finite_differences() {
    for (activation, seed) in [(Activation::Tanh, 3), (Activation::Relu, 4)] {
        let spec = ArchitectureSpec::new(ModelKind::Gcn, 4)
            .with_hidden(&[8, 7])
            .with_activation(activation);
        let mut p = xavier_init(&spec, seed).unwrap();
        randomize_biases(&mut p, seed);
        let graphs = vec![
            graph(4, &[(0, 1), (1, 2), (2, 3)], 4, seed),
            graph(3, &[(0, 2)], 4, seed + 10),
            graph(1, &[], 4, seed + 20),
        ];
        check_against_finite_differences(&p, &ModelInput::Graphs(graphs), seed);
    }
}

#[test]
fn mismatched_trace_is_a_state_error() {
    let spec = ArchitectureSpec::new(ModelKind::Mlp, 4).with_hidden(&[5]);
    let p = xavier_init(&spec, 1).unwrap();
    let other = xavier_init(&spec.clone().with_hidden(&[5, 5]), 1).unwrap();
    let t = forward_mlp(&p, &random_matrix(2, 4, 1)).unwrap();
    assert!(matches!(
        backward(&other, &t, &DenseMatrix::zeros(2, 2)),
        Err(Error::State(_))
    ));
    assert!(matches!(
        backward(&p, &t, &DenseMatrix::zeros(3, 2)),
        Err(Error::Dimension(_))
    ));
}
