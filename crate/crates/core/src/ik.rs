//! Inverse kinematics for chains of rotational (or rotation-and-scale)
//! joints, solved by tangent-space gradient descent through the tape.

use std::str::FromStr;

use nalgebra::{DVector, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::groups::{GroupElement, GroupKind};
use crate::optim::{sgd_step, SgdConfig, SgdState};
use crate::tape::{NodeId, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct ArmChain {
    lengths: Vec<f64>,
    kind: GroupKind,
    joints: Vec<GroupElement>,
}

impl ArmChain {
    pub fn new(lengths: Vec<f64>, joints: Vec<GroupElement>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidConfig(
                "a chain needs at least one joint".into(),
            ));
        }
        if lengths.len() != joints.len() {
            return Err(Error::DimensionMismatch {
                expected: lengths.len(),
                found: joints.len(),
            });
        }
        if let Some(d) = lengths.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "joint lengths must be positive, got {d}"
            )));
        }
        let kind = joints[0].kind();
        if !matches!(kind, GroupKind::SO3 | GroupKind::RxSO3) {
            return Err(Error::InvalidConfig(format!(
                "joints must be SO3 or RxSO3, got {kind}"
            )));
        }
        if let Some(j) = joints.iter().find(|j| j.kind() != kind) {
            return Err(Error::KindMismatch {
                left: kind,
                right: j.kind(),
            });
        }
        Ok(Self {
            lengths,
            kind,
            joints,
        })
    }

    /// A chain with every joint at the identity.
    pub fn straight(lengths: Vec<f64>, kind: GroupKind) -> Result<Self> {
        let joints = vec![GroupElement::identity(kind); lengths.len()];
        Self::new(lengths, joints)
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn joints(&self) -> &[GroupElement] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

/// Records the end position of the chain on `tape`, with joint `i` read
/// from `joints[i]`. Link frames accumulate as `R_i = dR_i R_{i-1}`.
pub fn record_forward(tape: &mut Tape, joints: &[NodeId], lengths: &[f64]) -> Result<NodeId> {
    if joints.len() != lengths.len() || joints.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: lengths.len(),
            found: joints.len(),
        });
    }
    let mut frame = joints[0];
    let mut end: Option<NodeId> = None;
    for (k, (&joint, &d)) in joints.iter().zip(lengths).enumerate() {
        if k > 0 {
            frame = tape.mul(joint, frame)?;
        }
        let link = tape.leaf(Vector3::new(d, 0.0, 0.0));
        let p = tape.act(frame, link)?;
        end = Some(match end {
            Some(acc) => tape.add(acc, p)?,
            None => p,
        });
    }
    Ok(end.expect("chain is non-empty"))
}

pub fn forward_kinematics(chain: &ArmChain) -> Result<Vector3<f64>> {
    let mut tape = Tape::new();
    let joints: Vec<NodeId> = chain.joints.iter().map(|j| tape.leaf(j.clone())).collect();
    let y = record_forward(&mut tape, &joints, &chain.lengths)?;
    let v = tape.vector(y)?;
    Ok(Vector3::new(v[0], v[1], v[2]))
}

/// `L = |y - target|^2` and its cogradient with respect to every joint.
pub fn loss_and_gradients(
    chain: &ArmChain,
    target: &Vector3<f64>,
) -> Result<(f64, Vec<DVector<f64>>)> {
    let mut tape = Tape::new();
    let joints: Vec<NodeId> = chain.joints.iter().map(|j| tape.leaf(j.clone())).collect();
    let y = record_forward(&mut tape, &joints, &chain.lengths)?;
    let t = tape.leaf(*target);
    let diff = tape.sub(y, t)?;
    let loss = tape.dot(diff, diff)?;
    let value = tape.scalar(loss)?;
    let grads = tape.backward(loss)?;
    let per_joint = joints
        .iter()
        .map(|&j| grads.get(j))
        .collect::<Result<_>>()?;
    Ok((value, per_joint))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkConfig {
    pub max_iters: usize,
    /// Convergence threshold on `|y - target|`.
    pub tolerance: f64,
    pub sgd: SgdConfig,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tolerance: 1e-4,
            sgd: SgdConfig {
                lr: 0.2,
                momentum: 0.5,
                decay: 1.0,
                steps: 1000,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkRun {
    pub seed: u64,
    pub kind: GroupKind,
    pub target: Vector3<f64>,
    pub iterations: usize,
    pub final_error: f64,
    pub converged: bool,
    /// Loss before each update, followed by the final loss.
    pub losses: Vec<f64>,
}

/// Gradient descent on `|y - target|^2`. The returned chain holds the final
/// joints; `iterations` counts the updates taken.
pub fn solve_ik(
    chain: &ArmChain,
    target: &Vector3<f64>,
    cfg: &IkConfig,
) -> Result<(IkRun, ArmChain)> {
    cfg.sgd.validate()?;
    if !(cfg.tolerance > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {}",
            cfg.tolerance
        )));
    }
    let mut chain = chain.clone();
    let mut state = SgdState::new(&chain.joints);
    let mut losses = Vec::new();
    let mut iterations = 0;
    loop {
        let (loss, grads) = loss_and_gradients(&chain, target)?;
        losses.push(loss);
        let error = loss.sqrt();
        if error < cfg.tolerance || iterations == cfg.max_iters || !error.is_finite() {
            let run = IkRun {
                seed: 0,
                kind: chain.kind,
                target: *target,
                iterations,
                final_error: error,
                converged: error < cfg.tolerance,
                losses,
            };
            return Ok((run, chain));
        }
        sgd_step(&mut chain.joints, &grads, &mut state, &cfg.sgd, iterations)?;
        iterations += 1;
    }
}

/// Largest joint rotation of the hidden chain that generates targets.
const MAX_TARGET_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
/// Hidden RxSO3 joints draw `log(scale)` from `U(-MAX_LOG_SCALE, MAX_LOG_SCALE)`.
const MAX_LOG_SCALE: f64 = 0.2;

fn random_joint<R: Rng + ?Sized>(kind: GroupKind, max_angle: f64, rng: &mut R) -> GroupElement {
    let axis = loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        if let Some(u) = Unit::try_new(v, 1e-9) {
            break u;
        }
    };
    let angle = rng.random_range(0.0..max_angle);
    let r = UnitQuaternion::from_axis_angle(&axis, angle);
    match kind {
        GroupKind::RxSO3 => {
            let s = Uniform::new(-MAX_LOG_SCALE, MAX_LOG_SCALE)
                .expect("valid range")
                .sample(rng)
                .exp();
            GroupElement::rxso3(r, s).expect("positive scale")
        }
        _ => GroupElement::so3(r),
    }
}

/// A straight starting chain with lengths `U(0.5, 1.5) / joints` and a
/// target reached by a hidden random chain with the same lengths.
pub fn random_problem(
    kind: GroupKind,
    joints: usize,
    seed: u64,
) -> Result<(ArmChain, Vector3<f64>)> {
    if joints == 0 {
        return Err(Error::InvalidConfig(
            "a chain needs at least one joint".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lengths: Vec<f64> = (0..joints)
        .map(|_| rng.random_range(0.5..1.5) / joints as f64)
        .collect();
    let hidden: Vec<GroupElement> = (0..joints)
        .map(|_| random_joint(kind, MAX_TARGET_ANGLE, &mut rng))
        .collect();
    let target = forward_kinematics(&ArmChain::new(lengths.clone(), hidden)?)?;
    Ok((ArmChain::straight(lengths, kind)?, target))
}

/// `runs` independent problems with seeds `seed, seed + 1, ...`, solved in
/// parallel. Results are ordered by seed.
pub fn run_benchmark(
    kind: GroupKind,
    runs: usize,
    joints: usize,
    seed: u64,
    cfg: &IkConfig,
) -> Result<Vec<IkRun>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let (chain, target) = random_problem(kind, joints, s)?;
            let (mut run, _) = solve_ik(&chain, &target, cfg)?;
            run.seed = s;
            Ok(run)
        })
        .collect()
}

/// Joint group accepted by the benchmark, parsed from `so3` or `rxso3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JointKind(pub GroupKind);

impl FromStr for JointKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "so3" => Ok(JointKind(GroupKind::SO3)),
            "rxso3" => Ok(JointKind(GroupKind::RxSO3)),
            other => Err(format!(
                "unknown joint kind '{other}' (expected so3 or rxso3)"
            )),
        }
    }
}
