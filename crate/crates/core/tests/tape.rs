use lie_tangent::groups::{GroupElement, GroupKind, TangentVector};
use lie_tangent::numcheck::{fd_jacobian, sample_element, trial_rng};
use lie_tangent::optim::{sgd_step, SgdConfig, SgdState};
use lie_tangent::{Error, Tape};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

/// `|Log(X Y^-1) + Log(X)|^2 + |X p|^2` with `X` used three times.
fn composite(
    tape: &mut Tape,
    x: GroupElement,
    y: &GroupElement,
) -> (lie_tangent::NodeId, lie_tangent::NodeId) {
    let xn = tape.leaf(x);
    let yn = tape.leaf(y.clone());
    let d = tape.ominus(xn, yn).unwrap();
    let l = tape.log(xn).unwrap();
    let s = tape.add(d, l).unwrap();
    let a = tape.dot(s, s).unwrap();
    let p = tape.leaf(Vector3::new(0.3, -1.0, 2.0));
    let q = tape.act(xn, p).unwrap();
    let b = tape.dot(q, q).unwrap();
    (xn, tape.add(a, b).unwrap())
}

fn composite_value(x: &GroupElement, y: &GroupElement) -> f64 {
    let mut tape = Tape::new();
    let (_, loss) = composite(&mut tape, x.clone(), y);
    tape.scalar(loss).unwrap()
}

#[test]
fn fan_out_accumulates_against_finite_differences() {
    for kind in [GroupKind::SO3, GroupKind::SE3, GroupKind::RxSO3] {
        for trial in 0..20 {
            let mut rng = trial_rng(11, trial);
            let y = sample_element(kind, &mut rng);
            let x = y
                .oplus(
                    &TangentVector::new(kind, DVector::from_element(kind.tangent_dim(), 0.2))
                        .unwrap(),
                )
                .unwrap();
            let x = GroupElement::exp(&x.log().unwrap().scaled(0.5));
            let mut tape = Tape::new();
            let (xn, loss) = composite(&mut tape, x.clone(), &y);
            let g = tape.backward(loss).unwrap().get(xn).unwrap();
            let fd = fd_jacobian(|x| Ok(composite_value(x, &y)), &x, 1e-6).unwrap();
            let fd = fd.row(0).transpose();
            assert!(
                (&g - &fd).amax() < 1e-6 * (1.0 + fd.amax()),
                "{kind} trial {trial}: {g} vs {fd}"
            );
        }
    }
}

#[test]
fn backward_is_deterministic() {
    let mut rng = trial_rng(3, 0);
    let x = sample_element(GroupKind::Sim3, &mut rng);
    let y = x
        .oplus(
            &TangentVector::from_slice(GroupKind::Sim3, &[0.1, 0.2, 0.3, 0.1, -0.2, 0.1, 0.05])
                .unwrap(),
        )
        .unwrap();
    let run = || {
        let mut tape = Tape::new();
        let (xn, loss) = composite(&mut tape, x.clone(), &y);
        tape.backward(loss).unwrap().get(xn).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn second_backward_requires_reset() {
    let mut tape = Tape::new();
    let x = tape.leaf(GroupElement::identity(GroupKind::SO3));
    let l = tape.log(x).unwrap();
    let n = tape.dot(l, l).unwrap();
    tape.backward(n).unwrap();
    assert!(matches!(tape.backward(n), Err(Error::TapeConsumed)));
    tape.reset();
    assert!(tape.backward(n).is_ok());
}

#[test]
fn nodes_from_other_tapes_are_rejected() {
    let mut a = Tape::new();
    let mut b = Tape::new();
    let x = a.leaf(GroupElement::identity(GroupKind::SE3));
    assert!(matches!(b.log(x), Err(Error::ForeignNode)));
}

/// Rotation angle from the trace of the rotation matrix, independent of the
/// quaternion logarithm used by the library.
fn trace_angle(x: &GroupElement) -> f64 {
    let r = x.rotation_matrix();
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[test]
fn sgd_on_squared_angle_matches_trace_oracle() {
    let cfg = SgdConfig {
        lr: 0.1,
        ..SgdConfig::default()
    };
    for trial in 0..10 {
        let mut rng = trial_rng(5, trial);
        let mut vars = vec![sample_element(GroupKind::SO3, &mut rng)];
        let mut state = SgdState::new(&vars);
        let mut prev = f64::INFINITY;
        for step in 0..200 {
            let mut tape = Tape::new();
            let x = tape.leaf(vars[0].clone());
            let l = tape.log(x).unwrap();
            let loss = tape.dot(l, l).unwrap();
            let value = tape.scalar(loss).unwrap();
            let oracle = trace_angle(&vars[0]).powi(2);
            assert!((value - oracle).abs() < 1e-7, "{value} vs {oracle}");
            assert!(value <= prev + 1e-15);
            prev = value;
            // The gradient of theta^2 is 2 phi, so a step of lr shrinks the angle by (1 - 2 lr).
            let g = tape.backward(loss).unwrap().get(x).unwrap();
            sgd_step(&mut vars, &[g], &mut state, &cfg, step).unwrap();
            let expected = (1.0 - 2.0 * cfg.lr) * oracle.sqrt();
            assert!((trace_angle(&vars[0]) - expected).abs() < 1e-7);
        }
        assert!(prev < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Splitting a rotation into quaternion and matrix descriptions of the
    /// same element gives the same optimizer trajectory.
    #[test]
    fn sgd_is_representation_independent(axis in prop::array::uniform3(-1.0..1.0f64), angle in 0.1..2.5f64) {
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 1e-3);
        let phi = axis.normalize() * angle;
        let from_quat = GroupElement::exp(&TangentVector::from_parts(GroupKind::SO3, Vector3::zeros(), phi, 0.0));
        let m = nalgebra::Rotation3::new(phi);
        let from_matrix = GroupElement::so3(nalgebra::UnitQuaternion::from_rotation_matrix(&m));
        let cfg = SgdConfig { lr: 0.05, momentum: 0.5, ..SgdConfig::default() };
        let mut a = vec![from_quat];
        let mut b = vec![from_matrix];
        let (mut sa, mut sb) = (SgdState::new(&a), SgdState::new(&b));
        for step in 0..30 {
            for (vars, state) in [(&mut a, &mut sa), (&mut b, &mut sb)] {
                let mut tape = Tape::new();
                let x = tape.leaf(vars[0].clone());
                let l = tape.log(x).unwrap();
                let loss = tape.dot(l, l).unwrap();
                let g = tape.backward(loss).unwrap().get(x).unwrap();
                sgd_step(vars, &[g], state, &cfg, step).unwrap();
            }
            prop_assert!(a[0].matrix_distance(&b[0]) < 1e-9);
        }
    }
}
