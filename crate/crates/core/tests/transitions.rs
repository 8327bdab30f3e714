mod common;

use common::*;
use gwm_core::graph::{EdgeKey, GraphOptions, ModalityPayload};
use gwm_core::mock::{Fault, FaultyDecoder, MockDecoder};
use gwm_core::step::{step, Pipeline, StepContext};
use gwm_core::tasks::TaskFixture;
use gwm_core::templates::TemplateRegistry;
use gwm_core::transition::{apply, replay, NodePatch, Provenance, Transition, TransitionKind, TransitionLog};
use gwm_core::{Edge, EdgeKind, GraphState, GwmError, MultiModalNode};

fn provenance(n: usize) -> Provenance {
    Provenance { action_id: format!("a{n}"), response_id: format!("r{n}") }
}

fn base() -> GraphState {
    GraphState::new(GraphOptions { allow_self_loops: false, dims: SMALL_DIMS })
        .add_node(MultiModalNode::text_node("a", "alpha"))
        .unwrap()
        .add_node(MultiModalNode::text_node("b", "beta"))
        .unwrap()
}

fn fixture(name: &str) -> TaskFixture {
    TaskFixture::load(fixture_dir().join("tasks").join(format!("{name}.task.json"))).unwrap()
}

#[test]
fn each_kind_applies_as_one_new_version() {
    let s = base();
    let add = TransitionKind::UpdateGraph {
        nodes: vec![MultiModalNode::text_node("c", "gamma")],
        edges: vec![Edge::explicit("a", "c")],
    };
    let s1 = apply(&s, &Transition::new(add, provenance(0), &s)).unwrap();
    assert_eq!(s1.version(), s.version() + 1);
    assert!(s1.connected("a", "c"));

    let patch = TransitionKind::UpdateNodes {
        patches: vec![NodePatch { id: "b".into(), payload: ModalityPayload::Text("new".into()) }],
    };
    let s2 = apply(&s1, &Transition::new(patch, provenance(1), &s1)).unwrap();
    assert_eq!(s2.node("b").unwrap().text(), Some("new"));

    let key = EdgeKey::new("a".into(), "c".into(), EdgeKind::Explicit, None);
    let rewire = TransitionKind::UpdateEdges { add: vec![Edge::explicit("b", "c")], remove: vec![key] };
    let s3 = apply(&s2, &Transition::new(rewire, provenance(2), &s2)).unwrap();
    assert!(!s3.connected("a", "c") && s3.connected("b", "c"));
    assert_eq!(s3.version(), s2.version() + 1);
}

#[test]
fn stale_and_invalid_transitions_leave_the_state_alone() {
    let s = base();
    let t = Transition::new(TransitionKind::UpdateEdges { add: vec![Edge::explicit("a", "b")], remove: vec![] }, provenance(0), &s);
    let s1 = apply(&s, &t).unwrap();
    assert!(matches!(apply(&s1, &t), Err(GwmError::StaleTransition(_))));

    let missing = EdgeKey::new("a".into(), "b".into(), EdgeKind::Implicit, None);
    let t = Transition::new(TransitionKind::UpdateEdges { add: vec![], remove: vec![missing] }, provenance(1), &s1);
    assert!(matches!(apply(&s1, &t), Err(GwmError::StaleTransition(_))));

    let t = Transition::new(TransitionKind::UpdateEdges { add: vec![Edge::explicit("a", "zz")], remove: vec![] }, provenance(2), &s1);
    assert!(matches!(apply(&s1, &t), Err(GwmError::DanglingEndpoint(_))));
    assert_eq!(s1.edge_count(), 1);
}

#[test]
fn logs_round_trip_and_replay_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    let s0 = base();
    let mut s = s0.clone();
    let mut log = TransitionLog::open(&path).unwrap();
    let mut written = Vec::new();
    for i in 0..4 {
        let id = format!("n{i}");
        let kind = TransitionKind::UpdateGraph {
            nodes: vec![MultiModalNode::text_node(id.as_str(), "x")],
            edges: vec![Edge::implicit("a", id.as_str(), 0.25)],
        };
        let t = Transition::new(kind, provenance(i), &s);
        s = apply(&s, &t).unwrap();
        log.append(&t).unwrap();
        written.push(t);
    }
    drop(log);
    let read = TransitionLog::read(&path).unwrap();
    assert_eq!(read, written);
    assert_eq!(replay(&s0, &read).unwrap(), s);
}

#[test]
fn corrupt_log_lines_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    std::fs::write(&path, "{\"kind\": 1}\n").unwrap();
    assert!(TransitionLog::read(&path).is_err());
}

#[test]
fn decoder_faults_never_change_the_state() {
    let registry = TemplateRegistry::builtin();
    let ctx = StepContext::new(&registry);
    let opts = GraphOptions { allow_self_loops: false, dims: SMALL_DIMS };
    let mock = MockDecoder::new(0, SMALL_DIMS);
    for name in ["recommendation", "planning", "node-classification-cora"] {
        let fx = fixture(name);
        let state = fx.build_graph(&mock, opts).unwrap();
        for fault in [Fault::Unavailable, Fault::Overloaded, Fault::CompletionsUnavailable] {
            let faulty = FaultyDecoder::new(MockDecoder::new(0, SMALL_DIMS), fault);
            let failure = step(&state, &fx.action, Pipeline::Token, &faulty, &fx.spec, &ctx).unwrap_err();
            assert!(
                matches!(
                    failure.error,
                    GwmError::DecoderUnavailable(_) | GwmError::Overloaded(_) | GwmError::CaptionerUnavailable(_)
                ),
                "{name}: {:?}",
                failure.error
            );
            assert!(failure.response.is_none());
        }
        let ok = step(&state, &fx.action, Pipeline::Token, &mock, &fx.spec, &ctx).unwrap();
        assert!(ok.transition.is_some() || ok.prediction.is_some());
    }
}

#[test]
fn garbled_answers_keep_the_response() {
    let registry = TemplateRegistry::builtin();
    let ctx = StepContext::new(&registry);
    let mock = MockDecoder::new(0, SMALL_DIMS);
    let fx = fixture("recommendation");
    let state = fx.build_graph(&mock, GraphOptions { allow_self_loops: false, dims: SMALL_DIMS }).unwrap();
    let garbled = FaultyDecoder::new(MockDecoder::new(0, SMALL_DIMS), Fault::Garbled);
    let failure = step(&state, &fx.action, Pipeline::Token, &garbled, &fx.spec, &ctx).unwrap_err();
    assert!(matches!(failure.error, GwmError::UnparseableResponse(_)));
    assert!(failure.response.is_some());
}

#[test]
fn successful_steps_publish_one_version() {
    let registry = TemplateRegistry::builtin();
    let ctx = StepContext::new(&registry);
    let mock = MockDecoder::new(0, SMALL_DIMS);
    let fx = fixture("recommendation");
    let state = fx.build_graph(&mock, GraphOptions { allow_self_loops: false, dims: SMALL_DIMS }).unwrap();
    let out = step(&state, &fx.action, Pipeline::Token, &mock, &fx.spec, &ctx).unwrap();
    let t = out.transition.unwrap();
    assert_eq!(out.state.version(), state.version() + 1);
    assert_eq!(apply(&state, &t).unwrap(), out.state);
}
