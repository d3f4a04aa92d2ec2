//! Central finite differences in tangent coordinates, used as the
//! independent oracle for every analytic derivative in the crate.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Unit, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::groups::{GroupElement, GroupKind, Jacobian, Sim3Jacobian, TangentVector};
use crate::tape::{Tape, Value};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Denominator floor for relative errors.
pub const ABS_FLOOR: f64 = 1e-8;
/// Upper bound of the sampled rotation angle.
pub const MAX_SAMPLE_ANGLE: f64 = 2.5;

/// Difference of two outputs: `a (-) b` for group values, `a - b` otherwise.
fn output_diff(a: &Value, b: &Value) -> Result<DVector<f64>> {
    match (a, b) {
        (Value::Group(x), Value::Group(y)) => Ok(x.ominus(y)?.into_coords()),
        (Value::Vector(x), Value::Vector(y)) => Ok(x - y),
        (Value::Scalar(x), Value::Scalar(y)) => Ok(DVector::from_element(1, x - y)),
        _ => Err(Error::TypeMismatch {
            expected: "matching output types",
            found: "mixed",
        }),
    }
}

/// Perturbs `input` by `delta` in its own coordinates.
fn perturb(input: &Value, delta: &DVector<f64>) -> Result<Value> {
    Ok(match input {
        Value::Group(x) => Value::Group(x.oplus(&TangentVector::new(x.kind(), delta.clone())?)?),
        Value::Vector(v) => Value::Vector(v + delta),
        Value::Scalar(s) => Value::Scalar(s + delta[0]),
    })
}

/// Central-difference Jacobian of `f` at `input`. Group inputs are perturbed
/// as `(h e_i) (+) X`; group outputs are differenced with `(-)`.
pub fn fd_jacobian_value<F>(f: F, input: &Value, h: f64) -> Result<Jacobian>
where
    F: Fn(&Value) -> Result<Value>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step must be positive, got {h}"
        )));
    }
    let k = input.grad_dim();
    let mut columns = Vec::with_capacity(k);
    for i in 0..k {
        let mut delta = DVector::zeros(k);
        delta[i] = h;
        let plus = f(&perturb(input, &delta)?)?;
        let minus = f(&perturb(input, &-delta)?)?;
        columns.push(output_diff(&plus, &minus)? / (2.0 * h));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, k, |r, c| columns[c][r]))
}

/// [`fd_jacobian_value`] for a function of one group element.
pub fn fd_jacobian<F, O>(f: F, x: &GroupElement, h: f64) -> Result<Jacobian>
where
    F: Fn(&GroupElement) -> Result<O>,
    O: Into<Value>,
{
    fd_jacobian_value(
        |v| f(v.as_group()?).map(Into::into),
        &Value::Group(x.clone()),
        h,
    )
}

/// Operations with recorded backward rules on group elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpName {
    Exp,
    Log,
    Inv,
    Mul,
    Adj,
    AdjT,
    Act,
    Act4,
    Oplus,
    Ominus,
    GeodesicDistance,
}

impl OpName {
    pub const ALL: [OpName; 11] = [
        OpName::Exp,
        OpName::Log,
        OpName::Inv,
        OpName::Mul,
        OpName::Adj,
        OpName::AdjT,
        OpName::Act,
        OpName::Act4,
        OpName::Oplus,
        OpName::Ominus,
        OpName::GeodesicDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpName::Exp => "exp",
            OpName::Log => "log",
            OpName::Inv => "inv",
            OpName::Mul => "mul",
            OpName::Adj => "adj",
            OpName::AdjT => "adjT",
            OpName::Act => "act",
            OpName::Act4 => "act4",
            OpName::Oplus => "oplus",
            OpName::Ominus => "ominus",
            OpName::GeodesicDistance => "geodesic_distance",
        }
    }
}

impl fmt::Display for OpName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        OpName::ALL
            .into_iter()
            .find(|op| {
                op.name().to_ascii_lowercase() == lower
                    || (lower == "geodesic" && *op == OpName::GeodesicDistance)
            })
            .ok_or_else(|| {
                let names: Vec<_> = OpName::ALL.iter().map(|o| o.name()).collect();
                format!("unknown op '{s}' (expected one of {})", names.join(", "))
            })
    }
}

/// Random tangent vector: `|phi| ~ U(0, 2.5)` along a uniform axis,
/// `tau ~ N(0, I)`, `sigma ~ U(-1, 1)`.
pub fn sample_tangent<R: Rng + ?Sized>(kind: GroupKind, rng: &mut R) -> TangentVector {
    let axis = loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        if let Some(u) = Unit::try_new(v, 1e-9) {
            break u;
        }
    };
    let angle = Uniform::new(0.0, MAX_SAMPLE_ANGLE)
        .expect("valid range")
        .sample(rng);
    let tau = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
    let sigma = Uniform::new(-1.0, 1.0).expect("valid range").sample(rng);
    TangentVector::from_parts(kind, tau, axis.into_inner() * angle, sigma)
}

pub fn sample_element<R: Rng + ?Sized>(kind: GroupKind, rng: &mut R) -> GroupElement {
    GroupElement::exp(&sample_tangent(kind, rng))
}

fn normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random inputs for `op`. Pairs passed to logarithms are drawn as
/// `Exp(w) * X` so that the logarithm stays on its principal branch.
pub fn sample_inputs<R: Rng + ?Sized>(op: OpName, kind: GroupKind, rng: &mut R) -> Vec<Value> {
    let k = kind.tangent_dim();
    let x = sample_element(kind, rng);
    match op {
        OpName::Exp => vec![sample_tangent(kind, rng).into()],
        OpName::Log | OpName::Inv => vec![x.into()],
        OpName::Mul => vec![x.into(), sample_element(kind, rng).into()],
        OpName::Adj | OpName::AdjT => vec![x.into(), normal_vector(k, rng).into()],
        OpName::Act => vec![x.into(), normal_vector(3, rng).into()],
        OpName::Act4 => vec![x.into(), normal_vector(4, rng).into()],
        OpName::Oplus => vec![sample_tangent(kind, rng).into(), x.into()],
        OpName::Ominus => {
            let y = x;
            let x = y.oplus(&sample_tangent(kind, rng)).expect("same kind");
            vec![x.into(), y.into()]
        }
        OpName::GeodesicDistance => {
            let y = x.oplus(&sample_tangent(kind, rng)).expect("same kind");
            vec![x.into(), y.into()]
        }
    }
}

fn vec3(v: &DVector<f64>) -> Result<Vector3<f64>> {
    if v.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: v.len(),
        });
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

/// Forward evaluation through the group functions, independent of the tape.
pub fn evaluate(op: OpName, kind: GroupKind, inputs: &[Value]) -> Result<Value> {
    let group = |i: usize| inputs[i].as_group();
    let tangent = |i: usize| TangentVector::new(kind, inputs[i].as_vector()?.clone());
    Ok(match op {
        OpName::Exp => GroupElement::exp(&tangent(0)?).into(),
        OpName::Log => group(0)?.log()?.into(),
        OpName::Inv => group(0)?.inv().into(),
        OpName::Mul => group(0)?.mul(group(1)?)?.into(),
        OpName::Adj => group(0)?.adj(&tangent(1)?)?.into(),
        OpName::AdjT => group(0)?.adj_t(&tangent(1)?)?.into(),
        OpName::Act => group(0)?.act(&vec3(inputs[1].as_vector()?)?).into(),
        OpName::Act4 => {
            let p = inputs[1].as_vector()?;
            let out = group(0)?.act4(&Vector4::new(p[0], p[1], p[2], p[3]));
            Value::Vector(DVector::from_column_slice(out.as_slice()))
        }
        OpName::Oplus => group(1)?.oplus(&tangent(0)?)?.into(),
        OpName::Ominus => group(0)?.ominus(group(1)?)?.into(),
        OpName::GeodesicDistance => Value::Scalar(group(0)?.geodesic_distance(group(1)?)?),
    })
}

/// Records `op` on a fresh tape and returns the cogradient of every input
/// for the output cogradient `seed`.
pub fn analytic_vjp(
    op: OpName,
    kind: GroupKind,
    inputs: &[Value],
    seed: &DVector<f64>,
    sim3: Sim3Jacobian,
) -> Result<Vec<DVector<f64>>> {
    let mut tape = Tape::with_sim3_jacobian(sim3);
    let ids: Vec<_> = inputs.iter().map(|v| tape.leaf(v.clone())).collect();
    let out = match op {
        OpName::Exp => tape.exp(ids[0], kind)?,
        OpName::Log => tape.log(ids[0])?,
        OpName::Inv => tape.inv(ids[0])?,
        OpName::Mul => tape.mul(ids[0], ids[1])?,
        OpName::Adj => tape.adj(ids[0], ids[1])?,
        OpName::AdjT => tape.adj_t(ids[0], ids[1])?,
        OpName::Act => tape.act(ids[0], ids[1])?,
        OpName::Act4 => tape.act4(ids[0], ids[1])?,
        OpName::Oplus => tape.oplus(ids[0], ids[1])?,
        OpName::Ominus => tape.ominus(ids[0], ids[1])?,
        OpName::GeodesicDistance => tape.geodesic_distance(ids[0], ids[1])?,
    };
    let grads = tape.vjp(out, seed.clone())?;
    ids.iter().map(|&id| grads.get(id)).collect()
}

/// The same cogradients from finite-difference Jacobians: `J_i^T seed`.
pub fn numeric_vjp(
    op: OpName,
    kind: GroupKind,
    inputs: &[Value],
    seed: &DVector<f64>,
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    (0..inputs.len())
        .map(|i| {
            let f = |v: &Value| {
                let mut args = inputs.to_vec();
                args[i] = v.clone();
                evaluate(op, kind, &args)
            };
            Ok(fd_jacobian_value(f, &inputs[i], h)?.tr_mul(seed))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub op: OpName,
    pub kind: GroupKind,
    pub trials: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Inputs of the trial with the largest relative error.
    pub worst_input: String,
    pub tolerance: f64,
    /// Trials where either side raised an error.
    pub failures: usize,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.max_rel_error <= self.tolerance
    }
}

impl fmt::Display for FdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} op={} group={} trials={} max_rel={:.3e} max_abs={:.3e} tol={:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.op,
            self.kind,
            self.trials,
            self.max_rel_error,
            self.max_abs_error,
            self.tolerance
        )?;
        if self.failures > 0 {
            write!(f, " errors={}", self.failures)?;
        }
        if !self.passed() {
            write!(f, " worst={}", self.worst_input)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub sim3: Sim3Jacobian,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            sim3: Sim3Jacobian::default(),
        }
    }
}

/// Relative and absolute error between stacked analytic and numeric
/// cogradients.
pub fn compare(analytic: &[DVector<f64>], numeric: &[DVector<f64>]) -> (f64, f64) {
    let mut abs = 0.0f64;
    let mut scale = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        abs = abs.max((a - n).amax());
        scale = scale.max(n.amax());
    }
    (abs / scale.max(ABS_FLOOR), abs)
}

/// Stream of per-trial seeds derived from a suite seed.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn describe(inputs: &[Value]) -> String {
    inputs
        .iter()
        .map(|v| match v {
            Value::Group(x) => x.to_string(),
            Value::Vector(v) => format!("{:?}", v.as_slice()),
            Value::Scalar(s) => s.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ; ")
}

/// Compares the recorded backward rule of `op` with finite differences over
/// `cfg.trials` seeded random inputs.
pub fn gradcheck(op: OpName, kind: GroupKind, cfg: &GradcheckConfig) -> Result<FdReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig(
            "gradcheck needs at least one trial".into(),
        ));
    }
    let outcomes: Vec<_> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let inputs = sample_inputs(op, kind, &mut rng);
            let result = (|| {
                let out_dim = evaluate(op, kind, &inputs)?.grad_dim();
                let seed = normal_vector(out_dim, &mut rng);
                let a = analytic_vjp(op, kind, &inputs, &seed, cfg.sim3)?;
                let n = numeric_vjp(op, kind, &inputs, &seed, cfg.step)?;
                Ok::<_, Error>(compare(&a, &n))
            })();
            (result, inputs)
        })
        .collect();

    let mut report = FdReport {
        op,
        kind,
        trials: cfg.trials,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_input: String::new(),
        tolerance: cfg.tolerance,
        failures: 0,
    };
    for (result, inputs) in outcomes {
        match result {
            Ok((rel, abs)) => {
                if rel > report.max_rel_error || report.worst_input.is_empty() {
                    report.max_rel_error = report.max_rel_error.max(rel);
                    report.worst_input = describe(&inputs);
                }
                report.max_abs_error = report.max_abs_error.max(abs);
            }
            Err(e) => {
                report.failures += 1;
                report.worst_input = format!("{} ({e})", describe(&inputs));
            }
        }
    }
    Ok(report)
}
