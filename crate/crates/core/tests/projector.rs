mod common;

use common::*;
use gwm_core::embed::{
    fuse, projector_loss_and_gradient, train_projector_proxy, Activation, AffineMap, GraphTargets, HopStack, Projector,
    TargetScope, TrainConfig, TrainingPair,
};
use gwm_core::store::{load_projector, projector_from_bytes, projector_to_bytes, save_projector};
use gwm_core::{GwmError, NodeId, Projector32};
use ndarray::{array, Array1, Array2};

fn stack() -> HopStack<f64> {
    let ids: Vec<NodeId> = ["a", "b", "c"].iter().map(|s| NodeId::from(*s)).collect();
    let hops = vec![
        array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        array![[0.5, 0.5], [0.5, 0.5], [0.0, 1.0]],
    ];
    HopStack::new(hops, ids, 0).unwrap()
}

fn identity(hops: usize) -> Projector<f64> {
    let layers = (0..=hops).map(|_| AffineMap { weight: Array2::eye(2), bias: Array1::zeros(2) }).collect();
    Projector::new(layers, Activation::Identity).unwrap()
}

#[test]
fn one_token_per_hop_and_scope_member() {
    let p = identity(1);
    assert_eq!(fuse(&stack(), &p, &TargetScope::Node("c".into())).unwrap().len(), 2);
    assert_eq!(fuse(&stack(), &p, &TargetScope::Edge("a".into(), "c".into())).unwrap().len(), 4);
    let g = fuse(&stack(), &p, &TargetScope::Graph(GraphTargets::All)).unwrap();
    assert_eq!(g.len(), 2);
    assert_eq!(g.tokens[0], array![2.0 / 3.0, 2.0 / 3.0]);
}

#[test]
fn each_hop_has_its_own_map() {
    let mut p = identity(1);
    p.layers_mut()[1].bias = array![10.0, 20.0];
    let t = fuse(&stack(), &p, &TargetScope::Node("a".into())).unwrap();
    assert_eq!(t.tokens, vec![array![1.0, 0.0], array![10.5, 20.5]]);
}

#[test]
fn scope_errors_are_reported() {
    let p = identity(1);
    assert!(matches!(fuse(&stack(), &p, &TargetScope::Node("zz".into())), Err(GwmError::ScopeUnresolved(_))));
    let wide = Projector::<f64>::zeros(1, 3, 2, Activation::Tanh);
    assert!(matches!(fuse(&stack(), &wide, &TargetScope::Node("a".into())), Err(GwmError::ShapeMismatch(_))));
}

#[test]
fn gradient_of_identity_map_matches_closed_form() {
    // loss = mean((W x + b - t)^2) for a single node and hop
    let ids = vec![NodeId::from("a")];
    let pair = TrainingPair {
        stack: HopStack::new(vec![array![[1.0, 2.0]]], ids, 0).unwrap(),
        scope: TargetScope::Node("a".into()),
        target: array![0.0, 1.0],
    };
    let p = Projector::new(
        vec![AffineMap { weight: array![[1.0, 0.0], [0.0, 1.0]], bias: array![0.0, 0.0] }],
        Activation::Identity,
    )
    .unwrap();
    let (loss, grad) = projector_loss_and_gradient(&[pair], &p).unwrap();
    // residual r = (1, 1); loss = (1 + 1) / 2; dL/dW = r x^T; dL/db = r
    assert_eq!(loss, 1.0);
    assert_eq!(grad.layers[0].weight, array![[1.0, 2.0], [1.0, 2.0]]);
    assert_eq!(grad.layers[0].bias, array![1.0, 1.0]);
}

#[test]
fn trainer_reduces_loss_and_validates_input() {
    let mut r = rng(4);
    let ids = vec![NodeId::from("a"), NodeId::from("b")];
    let pairs: Vec<TrainingPair<f64>> = (0..3)
        .map(|_| TrainingPair {
            stack: HopStack::new(vec![random_matrix(&mut r, 2, 3), random_matrix(&mut r, 2, 3)], ids.clone(), 0).unwrap(),
            scope: TargetScope::Edge("a".into(), "b".into()),
            target: Array1::from_vec(vec![0.1, -0.2]),
        })
        .collect();
    let mut p = Projector::<f64>::random(1, 3, 2, Activation::Tanh, 0);
    let report = train_projector_proxy(&pairs, &mut p, TrainConfig { steps: 200, learning_rate: 0.2, seed: 0 }).unwrap();
    assert!(report.final_loss < report.initial_loss);
    let bad = TrainConfig { steps: 0, learning_rate: 0.1, seed: 0 };
    assert!(matches!(train_projector_proxy(&pairs, &mut p, bad), Err(GwmError::InvalidArgument(_))));
    assert!(matches!(projector_loss_and_gradient(&[], &p), Err(GwmError::InvalidArgument(_))));
}

#[test]
fn checkpoints_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.gwmp");
    let p: Projector32 = Projector::random(2, 5, 3, Activation::Tanh, 8);
    save_projector(&p, &path).unwrap();
    assert_eq!(load_projector::<f32>(&path).unwrap(), p);
    let wide = load_projector::<f64>(&path).unwrap();
    assert_eq!(wide.hops(), 2);
    assert_eq!((wide.d_in(), wide.d_out()), (5, 3));
}

#[test]
fn checkpoint_headers_are_validated() {
    let mut bytes = projector_to_bytes(&Projector::<f64>::zeros(0, 2, 2, Activation::Identity));
    bytes[0] = b'X';
    assert!(matches!(projector_from_bytes::<f64>(&bytes), Err(GwmError::SchemaViolation(_))));
    let mut bytes = projector_to_bytes(&Projector::<f64>::zeros(0, 2, 2, Activation::Identity));
    bytes[20] = 9;
    assert!(matches!(projector_from_bytes::<f64>(&bytes), Err(GwmError::SchemaViolation(_))));
    let mut bytes = projector_to_bytes(&Projector::<f64>::zeros(0, 2, 2, Activation::Identity));
    bytes.push(0);
    assert!(matches!(projector_from_bytes::<f64>(&bytes), Err(GwmError::SchemaViolation(_))));
}
