use std::collections::BTreeMap;

use lie_tangent::groups::{GroupElement, GroupKind};
use lie_tangent::io_g2o::{
    parse_g2o, serialize_g2o, synth_graph, write_tum, Edge, PoseGraph, SynthKind, SynthNoise,
};
use lie_tangent::numcheck::{sample_element, trial_rng};
use lie_tangent::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

/// A 20-vertex graph with random poses, edges and SPD information.
fn random_graph(seed: u64) -> PoseGraph {
    let mut rng = trial_rng(seed, 0);
    let mut vertices = BTreeMap::new();
    while vertices.len() < 20 {
        let id = rng.random_range(0..1000u64);
        let x = sample_element(GroupKind::SE3, &mut rng);
        vertices.insert(id, GroupElement::se3(*x.rotation(), x.translation() * 10.0));
    }
    let ids: Vec<u64> = vertices.keys().copied().collect();
    let edges = (0..40)
        .map(|_| {
            let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-3.0..3.0));
            Edge {
                from: ids[rng.random_range(0..ids.len())],
                to: ids[rng.random_range(0..ids.len())],
                measurement: sample_element(GroupKind::SE3, &mut rng),
                information: &a * a.transpose()
                    + DMatrix::identity(6, 6) * rng.random_range(0.1..1e4),
            }
        })
        .collect();
    PoseGraph { vertices, edges }
}

fn max_difference(a: &PoseGraph, b: &PoseGraph) -> f64 {
    assert_eq!(
        a.vertices.keys().collect::<Vec<_>>(),
        b.vertices.keys().collect::<Vec<_>>()
    );
    assert_eq!(a.edges.len(), b.edges.len());
    let pose = |x: &GroupElement, y: &GroupElement| {
        let dq = (x.rotation().coords - y.rotation().coords).amax();
        dq.max((x.translation() - y.translation()).amax())
    };
    let mut worst = 0.0f64;
    for (x, y) in a.vertices.values().zip(b.vertices.values()) {
        worst = worst.max(pose(x, y));
    }
    for (e, f) in a.edges.iter().zip(&b.edges) {
        assert_eq!((e.from, e.to), (f.from, f.to));
        worst = worst.max(pose(&e.measurement, &f.measurement));
        worst = worst.max((&e.information - &f.information).amax());
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_serialize_fixpoint(seed in any::<u64>()) {
        let original = random_graph(seed);
        let g = parse_g2o(&serialize_g2o(&original)).unwrap();
        prop_assert!(max_difference(&original, &g) <= 1e-9);
        let again = parse_g2o(&serialize_g2o(&g)).unwrap();
        prop_assert!(max_difference(&g, &again) <= 1e-9);
        prop_assert_eq!(serialize_g2o(&g), serialize_g2o(&again));
        for x in again.vertices.values() {
            prop_assert!((x.rotation().norm() - 1.0).abs() < 1e-12);
        }
        for e in &again.edges {
            prop_assert!((&e.information - e.information.transpose()).amax() == 0.0);
        }
    }

    #[test]
    fn tum_has_one_line_per_vertex(seed in any::<u64>()) {
        let g = random_graph(seed);
        let tum = write_tum(&g.vertices);
        prop_assert_eq!(tum.lines().count(), g.vertices.len());
        for (line, (id, x)) in tum.lines().zip(&g.vertices) {
            let fields: Vec<f64> = line.split(' ').map(|f| f.parse().unwrap()).collect();
            prop_assert_eq!(fields.len(), 8);
            prop_assert_eq!(fields[0], *id as f64);
            prop_assert!((fields[1] - x.translation().x).abs() <= 5e-10);
            prop_assert!((fields[7] - x.rotation().w).abs() <= 5e-10);
        }
    }
}

#[test]
fn synthetic_graphs_roundtrip() {
    let noise = SynthNoise {
        rotation: 0.05,
        translation: 0.1,
    };
    for kind in [SynthKind::Ring, SynthKind::Grid, SynthKind::Sphere] {
        let (g, _) = synth_graph(kind, 40, noise, 9).unwrap();
        let back = parse_g2o(&serialize_g2o(&g)).unwrap();
        assert!(max_difference(&g, &back) <= 1e-9);
    }
}

#[test]
fn malformed_edge_reports_its_line() {
    let info = vec!["1"; 21].join(" ");
    let text = format!(
        "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nVERTEX_SE3:QUAT 1 1 0 0 0 0 0 1\n# note\nEDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 {}\nEDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 {info} 7\n",
        vec!["1"; 20].join(" ")
    );
    match parse_g2o(&text) {
        Err(Error::Parse { line: 4, message }) => assert!(message.contains("30"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_finite_fields_are_rejected() {
    assert!(matches!(
        parse_g2o("VERTEX_SE3:QUAT 0 nan 0 0 0 0 0 1"),
        Err(Error::Parse { line: 1, .. })
    ));
    assert!(matches!(
        parse_g2o("\n\nVERTEX_SE3:QUAT 0 inf 0 0 0 0 0 1"),
        Err(Error::Parse { line: 3, .. })
    ));
    assert!(matches!(
        parse_g2o("VERTEX_SE3:QUAT -1 0 0 0 0 0 0 1"),
        Err(Error::Parse { line: 1, .. })
    ));
}
