use lie_tangent::groups::GroupKind;
use lie_tangent::ik::{
    forward_kinematics, loss_and_gradients, random_problem, run_benchmark, solve_ik, ArmChain,
    IkConfig,
};
use lie_tangent::numcheck::{fd_jacobian, sample_element, trial_rng};
use lie_tangent::optim::SgdConfig;
use nalgebra::Vector3;

fn random_chain(kind: GroupKind, joints: usize, seed: u64) -> (ArmChain, Vector3<f64>) {
    let mut rng = trial_rng(seed, 0);
    let (start, target) = random_problem(kind, joints, seed).unwrap();
    let js = (0..joints)
        .map(|_| sample_element(kind, &mut rng))
        .collect();
    (ArmChain::new(start.lengths().to_vec(), js).unwrap(), target)
}

#[test]
fn joint_gradients_match_finite_differences() {
    for kind in [GroupKind::SO3, GroupKind::RxSO3] {
        for seed in 0..10 {
            let (chain, target) = random_chain(kind, 5, seed);
            let (_, grads) = loss_and_gradients(&chain, &target).unwrap();
            for (i, g) in grads.iter().enumerate() {
                let loss_with = |x: &lie_tangent::GroupElement| {
                    let mut joints = chain.joints().to_vec();
                    joints[i] = x.clone();
                    let c = ArmChain::new(chain.lengths().to_vec(), joints)?;
                    Ok((forward_kinematics(&c)? - target).norm_squared())
                };
                let fd = fd_jacobian(loss_with, &chain.joints()[i], 1e-5)
                    .unwrap()
                    .row(0)
                    .transpose();
                let rel = (g - &fd).amax() / fd.amax().max(1e-8);
                assert!(rel < 1e-5, "{kind} seed {seed} joint {i}: rel {rel}");
            }
        }
    }
}

#[test]
fn small_steps_never_increase_the_loss() {
    let cfg = IkConfig {
        max_iters: 300,
        sgd: SgdConfig {
            lr: 0.02,
            momentum: 0.0,
            decay: 1.0,
            steps: 300,
        },
        ..IkConfig::default()
    };
    for kind in [GroupKind::SO3, GroupKind::RxSO3] {
        for seed in 0..10 {
            let (chain, target) = random_problem(kind, 8, seed).unwrap();
            let (run, out) = solve_ik(&chain, &target, &cfg).unwrap();
            assert!(
                run.losses.windows(2).all(|w| w[1] <= w[0]),
                "{kind} seed {seed}"
            );
            for j in out.joints() {
                assert!((j.rotation().norm() - 1.0).abs() < 1e-12);
                assert!(j.scale() > 0.0);
            }
        }
    }
}

#[test]
fn benchmark_is_reproducible_and_ordered() {
    let cfg = IkConfig::default();
    let a = run_benchmark(GroupKind::SO3, 12, 6, 40, &cfg).unwrap();
    let b = run_benchmark(GroupKind::SO3, 12, 6, 40, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a.iter().map(|r| r.seed).collect::<Vec<_>>(),
        (40..52).collect::<Vec<_>>()
    );
    for r in &a {
        assert_eq!(r.converged, r.final_error < cfg.tolerance);
        assert!(r.iterations <= cfg.max_iters);
    }
}

#[test]
fn targets_are_reachable() {
    for kind in [GroupKind::SO3, GroupKind::RxSO3] {
        for seed in 0..20 {
            let (chain, target) = random_problem(kind, 8, seed).unwrap();
            // Scales compound along the chain, so link i stretches by at most e^{0.2 i}.
            let growth = if kind == GroupKind::SO3 { 0.0 } else { 0.2 };
            let bound: f64 = chain
                .lengths()
                .iter()
                .enumerate()
                .map(|(i, d)| d * (growth * (i + 1) as f64).exp())
                .sum();
            assert!(target.norm() <= bound + 1e-12);
        }
    }
}
