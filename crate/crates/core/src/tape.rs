//! Reverse-mode differentiation over graphs that mix group elements with
//! Euclidean vectors and scalars.
//!
//! Every node keeps a snapshot of its forward value. The cogradient of a
//! group-valued node is a covector in the left-trivialized tangent space, so
//! it has the tangent dimension of the group (3 for SO3), never the size of an
//! embedding. Scalars carry length-1 cogradients.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::groups::{
    curlyhat, inv_left_jacobian_with, left_jacobian_with, skew, GroupElement, GroupKind,
    Sim3Jacobian, TangentVector,
};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Handle to a node, valid only on the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

impl NodeId {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Group(GroupElement),
    Vector(DVector<f64>),
    Scalar(f64),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Group(_) => "group element",
            Value::Vector(_) => "vector",
            Value::Scalar(_) => "scalar",
        }
    }

    /// Length of the cogradient attached to this value.
    pub fn grad_dim(&self) -> usize {
        match self {
            Value::Group(x) => x.kind().tangent_dim(),
            Value::Vector(v) => v.len(),
            Value::Scalar(_) => 1,
        }
    }

    pub fn as_group(&self) -> Result<&GroupElement> {
        match self {
            Value::Group(x) => Ok(x),
            other => Err(Error::TypeMismatch {
                expected: "group element",
                found: other.type_name(),
            }),
        }
    }

    pub fn as_vector(&self) -> Result<&DVector<f64>> {
        match self {
            Value::Vector(v) => Ok(v),
            other => Err(Error::TypeMismatch {
                expected: "vector",
                found: other.type_name(),
            }),
        }
    }

    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(s) => Ok(*s),
            other => Err(Error::TypeMismatch {
                expected: "scalar",
                found: other.type_name(),
            }),
        }
    }
}

impl From<GroupElement> for Value {
    fn from(x: GroupElement) -> Self {
        Value::Group(x)
    }
}

impl From<DVector<f64>> for Value {
    fn from(v: DVector<f64>) -> Self {
        Value::Vector(v)
    }
}

impl From<TangentVector> for Value {
    fn from(v: TangentVector) -> Self {
        Value::Vector(v.into_coords())
    }
}

impl From<Vector3<f64>> for Value {
    fn from(v: Vector3<f64>) -> Self {
        Value::Vector(DVector::from_column_slice(v.as_slice()))
    }
}

impl From<f64> for Value {
    fn from(s: f64) -> Self {
        Value::Scalar(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Leaf,
    Exp(usize),
    Log(usize),
    Inv(usize),
    Mul(usize, usize),
    Adj(usize, usize),
    AdjT(usize, usize),
    Act(usize, usize),
    Act4(usize, usize),
    Oplus(usize, usize),
    Ominus(usize, usize),
    GeodesicDistance(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Dot(usize, usize),
    Norm2(usize),
    Sum(usize),
    ExpScalar(usize),
    MulElementwise(usize, usize),
}

impl Op {
    pub fn parents(&self) -> Vec<usize> {
        match *self {
            Op::Leaf => vec![],
            Op::Exp(a)
            | Op::Log(a)
            | Op::Inv(a)
            | Op::Scale(a, _)
            | Op::Norm2(a)
            | Op::Sum(a)
            | Op::ExpScalar(a) => {
                vec![a]
            }
            Op::Mul(a, b)
            | Op::Adj(a, b)
            | Op::AdjT(a, b)
            | Op::Act(a, b)
            | Op::Act4(a, b)
            | Op::Oplus(a, b)
            | Op::Ominus(a, b)
            | Op::GeodesicDistance(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Dot(a, b)
            | Op::MulElementwise(a, b) => vec![a, b],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub value: Value,
}

/// Append-only record of a forward computation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
    sim3: Sim3Jacobian,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Cogradients produced by a backward pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<DVector<f64>>>,
    dims: Vec<usize>,
}

impl Gradients {
    /// Cogradient of `node`; zeros when the node does not reach the output.
    pub fn get(&self, node: NodeId) -> Result<DVector<f64>> {
        if node.tape != self.tape {
            return Err(Error::ForeignNode);
        }
        let dim = *self
            .dims
            .get(node.index)
            .ok_or(Error::UnknownNode(node.index))?;
        Ok(self.grads[node.index]
            .clone()
            .unwrap_or_else(|| DVector::zeros(dim)))
    }

    /// Cogradient of a group node as a tangent vector of its kind.
    pub fn tangent(&self, node: NodeId, kind: GroupKind) -> Result<TangentVector> {
        TangentVector::new(kind, self.get(node)?)
    }

    pub fn scalar(&self, node: NodeId) -> Result<f64> {
        let g = self.get(node)?;
        if g.len() == 1 {
            Ok(g[0])
        } else {
            Err(Error::NotScalar)
        }
    }
}

/// Free-function form of [`Gradients::get`].
pub fn grad_of(grads: &Gradients, node: NodeId) -> Result<DVector<f64>> {
    grads.get(node)
}

fn dim_check(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `d (Exp(e) p') / d e` at `e = 0`, for a point already transformed.
fn act_jacobian(kind: GroupKind, p: &Vector3<f64>) -> DMatrix<f64> {
    let k = kind.tangent_dim();
    let mut j = DMatrix::zeros(3, k);
    let o = match kind {
        GroupKind::SO3 | GroupKind::RxSO3 => 0,
        GroupKind::SE3 | GroupKind::Sim3 => {
            j.view_mut((0, 0), (3, 3)).fill_with_identity();
            3
        }
    };
    j.view_mut((0, o), (3, 3)).copy_from(&(-skew(p)));
    if kind.has_scale() {
        j.view_mut((0, k - 1), (3, 1)).copy_from(p);
    }
    j
}

/// `d (hat(e) p') / d e` for the homogeneous action.
fn act4_jacobian(kind: GroupKind, p: &Vector4<f64>) -> DMatrix<f64> {
    let xyz = Vector3::new(p.x, p.y, p.z);
    let mut inner = act_jacobian(kind, &xyz);
    if kind.has_translation() {
        inner.view_mut((0, 0), (3, 3)).fill_diagonal(p.w);
    }
    let mut j = DMatrix::zeros(4, kind.tangent_dim());
    j.view_mut((0, 0), (3, kind.tangent_dim()))
        .copy_from(&inner);
    j
}

impl Tape {
    pub fn new() -> Self {
        Self::with_sim3_jacobian(Sim3Jacobian::default())
    }

    /// Tape whose Sim3 exp/log backward passes use the given Jacobian mode.
    pub fn with_sim3_jacobian(sim3: Sim3Jacobian) -> Self {
        Self {
            id: fresh_id(),
            nodes: Vec::new(),
            consumed: false,
            sim3,
        }
    }

    pub fn sim3_jacobian(&self) -> Sim3Jacobian {
        self.sim3
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Allows another backward pass over the same record.
    pub fn reset(&mut self) {
        self.consumed = false;
    }

    /// Drops every node. Ids issued before the call become foreign.
    pub fn clear(&mut self) {
        self.id = fresh_id();
        self.nodes.clear();
        self.consumed = false;
    }

    fn resolve(&self, node: NodeId) -> Result<usize> {
        if node.tape != self.id {
            return Err(Error::ForeignNode);
        }
        if node.index >= self.nodes.len() {
            return Err(Error::UnknownNode(node.index));
        }
        Ok(node.index)
    }

    pub fn value(&self, node: NodeId) -> Result<&Value> {
        Ok(&self.nodes[self.resolve(node)?].value)
    }

    pub fn group(&self, node: NodeId) -> Result<&GroupElement> {
        self.value(node)?.as_group()
    }

    pub fn vector(&self, node: NodeId) -> Result<&DVector<f64>> {
        self.value(node)?.as_vector()
    }

    pub fn scalar(&self, node: NodeId) -> Result<f64> {
        self.value(node)?.as_scalar()
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn g(&self, i: usize) -> &GroupElement {
        match &self.nodes[i].value {
            Value::Group(x) => x,
            _ => unreachable!("checked at record time"),
        }
    }

    fn v(&self, i: usize) -> &DVector<f64> {
        match &self.nodes[i].value {
            Value::Vector(v) => v,
            _ => unreachable!("checked at record time"),
        }
    }

    fn group_arg(&self, node: NodeId) -> Result<(usize, &GroupElement)> {
        let i = self.resolve(node)?;
        Ok((i, self.nodes[i].value.as_group()?))
    }

    fn vector_arg(&self, node: NodeId) -> Result<(usize, &DVector<f64>)> {
        let i = self.resolve(node)?;
        Ok((i, self.nodes[i].value.as_vector()?))
    }

    fn tangent_arg(&self, node: NodeId, kind: GroupKind) -> Result<(usize, TangentVector)> {
        let (i, v) = self.vector_arg(node)?;
        Ok((i, TangentVector::new(kind, v.clone())?))
    }

    pub fn leaf(&mut self, value: impl Into<Value>) -> NodeId {
        self.push(Op::Leaf, value.into())
    }

    pub fn exp(&mut self, v: NodeId, kind: GroupKind) -> Result<NodeId> {
        let (i, t) = self.tangent_arg(v, kind)?;
        Ok(self.push(Op::Exp(i), Value::Group(GroupElement::exp(&t))))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let (i, g) = self.group_arg(x)?;
        let phi = g.log()?;
        Ok(self.push(Op::Log(i), phi.into()))
    }

    pub fn inv(&mut self, x: NodeId) -> Result<NodeId> {
        let (i, g) = self.group_arg(x)?;
        let y = g.inv();
        Ok(self.push(Op::Inv(i), Value::Group(y)))
    }

    pub fn mul(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (i, a) = self.group_arg(x)?;
        let (j, b) = self.group_arg(y)?;
        let z = a.mul(b)?;
        Ok(self.push(Op::Mul(i, j), Value::Group(z)))
    }

    /// `Adj_X w`
    pub fn adj(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (i, a) = self.group_arg(x)?;
        let kind = a.kind();
        let (j, t) = self.tangent_arg(w, kind)?;
        let out = self.g(i).adj(&t)?;
        Ok(self.push(Op::Adj(i, j), out.into()))
    }

    /// `Adj_X^T g`
    pub fn adj_t(&mut self, x: NodeId, g: NodeId) -> Result<NodeId> {
        let (i, a) = self.group_arg(x)?;
        let kind = a.kind();
        let (j, t) = self.tangent_arg(g, kind)?;
        let out = self.g(i).adj_t(&t)?;
        Ok(self.push(Op::AdjT(i, j), out.into()))
    }

    pub fn act(&mut self, x: NodeId, p: NodeId) -> Result<NodeId> {
        let (i, a) = self.group_arg(x)?;
        let a = a.clone();
        let (j, p) = self.vector_arg(p)?;
        dim_check(3, p.len())?;
        let out = a.act(&Vector3::new(p[0], p[1], p[2]));
        Ok(self.push(Op::Act(i, j), out.into()))
    }

    pub fn act4(&mut self, x: NodeId, p: NodeId) -> Result<NodeId> {
        let (i, a) = self.group_arg(x)?;
        let a = a.clone();
        let (j, p) = self.vector_arg(p)?;
        dim_check(4, p.len())?;
        let out = a.act4(&Vector4::new(p[0], p[1], p[2], p[3]));
        Ok(self.push(
            Op::Act4(i, j),
            Value::Vector(DVector::from_column_slice(out.as_slice())),
        ))
    }

    /// `Exp(v) * X`
    pub fn oplus(&mut self, v: NodeId, x: NodeId) -> Result<NodeId> {
        let (j, a) = self.group_arg(x)?;
        let kind = a.kind();
        let (i, t) = self.tangent_arg(v, kind)?;
        let out = self.g(j).oplus(&t)?;
        Ok(self.push(Op::Oplus(i, j), Value::Group(out)))
    }

    /// `Log(X * Y^-1)`
    pub fn ominus(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (i, a) = self.group_arg(x)?;
        let (j, b) = self.group_arg(y)?;
        let out = a.ominus(b)?;
        Ok(self.push(Op::Ominus(i, j), out.into()))
    }

    /// `|Log(Y * X^-1)|`
    pub fn geodesic_distance(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (i, a) = self.group_arg(x)?;
        let (j, b) = self.group_arg(y)?;
        let d = a.geodesic_distance(b)?;
        Ok(self.push(Op::GeodesicDistance(i, j), Value::Scalar(d)))
    }

    fn euclidean_pair(&self, a: NodeId, b: NodeId) -> Result<(usize, usize)> {
        let i = self.resolve(a)?;
        let j = self.resolve(b)?;
        match (&self.nodes[i].value, &self.nodes[j].value) {
            (Value::Scalar(_), Value::Scalar(_)) => Ok((i, j)),
            (Value::Vector(x), Value::Vector(y)) => {
                dim_check(x.len(), y.len())?;
                Ok((i, j))
            }
            (Value::Group(_), _) | (_, Value::Group(_)) => Err(Error::TypeMismatch {
                expected: "vector or scalar",
                found: "group element",
            }),
            (x, _) => Err(Error::TypeMismatch {
                expected: x.type_name(),
                found: if matches!(x, Value::Scalar(_)) {
                    "vector"
                } else {
                    "scalar"
                },
            }),
        }
    }

    fn zip(&mut self, op: Op, a: usize, b: usize, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let value = match (&self.nodes[a].value, &self.nodes[b].value) {
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(f(*x, *y)),
            (Value::Vector(x), Value::Vector(y)) => Value::Vector(x.zip_map(y, &f)),
            _ => unreachable!("checked by euclidean_pair"),
        };
        self.push(op, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (i, j) = self.euclidean_pair(a, b)?;
        Ok(self.zip(Op::Add(i, j), i, j, |x, y| x + y))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (i, j) = self.euclidean_pair(a, b)?;
        Ok(self.zip(Op::Sub(i, j), i, j, |x, y| x - y))
    }

    pub fn mul_elementwise(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (i, j) = self.euclidean_pair(a, b)?;
        Ok(self.zip(Op::MulElementwise(i, j), i, j, |x, y| x * y))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let i = self.resolve(a)?;
        let value = match &self.nodes[i].value {
            Value::Scalar(x) => Value::Scalar(c * x),
            Value::Vector(x) => Value::Vector(x * c),
            Value::Group(_) => {
                return Err(Error::TypeMismatch {
                    expected: "vector or scalar",
                    found: "group element",
                })
            }
        };
        Ok(self.push(Op::Scale(i, c), value))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (i, x) = self.vector_arg(a)?;
        let (j, y) = self.vector_arg(b)?;
        dim_check(x.len(), y.len())?;
        let d = x.dot(y);
        Ok(self.push(Op::Dot(i, j), Value::Scalar(d)))
    }

    /// Euclidean norm; its gradient at zero is taken as zero.
    pub fn norm2(&mut self, a: NodeId) -> Result<NodeId> {
        let (i, x) = self.vector_arg(a)?;
        let n = x.norm();
        Ok(self.push(Op::Norm2(i), Value::Scalar(n)))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let (i, x) = self.vector_arg(a)?;
        let s = x.sum();
        Ok(self.push(Op::Sum(i), Value::Scalar(s)))
    }

    pub fn exp_scalar(&mut self, a: NodeId) -> Result<NodeId> {
        let i = self.resolve(a)?;
        let x = self.nodes[i].value.as_scalar()?;
        Ok(self.push(Op::ExpScalar(i), Value::Scalar(x.exp())))
    }

    /// Reverse pass seeded with `dL/dloss = 1`. Marks the tape consumed.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let i = self.resolve(loss)?;
        if !matches!(self.nodes[i].value, Value::Scalar(_)) {
            return Err(Error::NotScalar);
        }
        let grads = self.vjp(loss, DVector::from_element(1, 1.0))?;
        self.consumed = true;
        Ok(grads)
    }

    /// Vector-Jacobian product of `output` with a cogradient `seed`, without
    /// consuming the tape.
    pub fn vjp(&self, output: NodeId, seed: DVector<f64>) -> Result<Gradients> {
        let out = self.resolve(output)?;
        dim_check(self.nodes[out].value.grad_dim(), seed.len())?;
        let mut grads: Vec<Option<DVector<f64>>> = vec![None; out + 1];
        grads[out] = Some(seed);

        for idx in (0..=out).rev() {
            let Some(g) = grads[idx].take() else { continue };
            for (parent, contribution) in self.node_vjp(idx, &g)? {
                match &mut grads[parent] {
                    Some(acc) => *acc += contribution,
                    slot => *slot = Some(contribution),
                }
            }
            grads[idx] = Some(g);
        }

        let dims = self.nodes.iter().map(|n| n.value.grad_dim()).collect();
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            tape: self.id,
            grads,
            dims,
        })
    }

    /// Contributions of node `idx` with cogradient `g` to its parents.
    fn node_vjp(&self, idx: usize, g: &DVector<f64>) -> Result<Vec<(usize, DVector<f64>)>> {
        let node = &self.nodes[idx];
        Ok(match node.op {
            Op::Leaf => vec![],
            Op::Exp(a) => {
                let x = node.value.as_group()?;
                let v = TangentVector::new(x.kind(), self.v(a).clone())?;
                vec![(a, left_jacobian_with(&v, self.sim3).tr_mul(g))]
            }
            Op::Log(a) => {
                let kind = self.g(a).kind();
                let phi = TangentVector::new(kind, self.v(idx).clone())?;
                vec![(a, inv_left_jacobian_with(&phi, self.sim3)?.tr_mul(g))]
            }
            Op::Inv(a) => {
                let y = node.value.as_group()?;
                vec![(a, -y.adj_matrix().tr_mul(g))]
            }
            Op::Mul(a, b) => vec![(a, g.clone()), (b, self.g(a).adj_matrix().tr_mul(g))],
            Op::Adj(a, b) => {
                let x = self.g(a);
                let upsilon = TangentVector::new(x.kind(), self.v(idx).clone())?;
                vec![
                    (a, -curlyhat(&upsilon).tr_mul(g)),
                    (b, x.adj_matrix().tr_mul(g)),
                ]
            }
            Op::AdjT(a, b) => {
                let x = self.g(a);
                let w = TangentVector::new(x.kind(), x.adj_matrix() * g)?;
                let input = self.v(b);
                vec![(a, -curlyhat(&w).tr_mul(input)), (b, w.into_coords())]
            }
            Op::Act(a, b) => {
                let x = self.g(a);
                let out = self.v(idx);
                let p = Vector3::new(out[0], out[1], out[2]);
                let gp = x.linear().tr_mul(&Vector3::new(g[0], g[1], g[2]));
                vec![
                    (a, act_jacobian(x.kind(), &p).tr_mul(g)),
                    (b, DVector::from_column_slice(gp.as_slice())),
                ]
            }
            Op::Act4(a, b) => {
                let x = self.g(a);
                let out = self.v(idx);
                let p = Vector4::new(out[0], out[1], out[2], out[3]);
                let gp = x.matrix().tr_mul(&Vector4::new(g[0], g[1], g[2], g[3]));
                vec![
                    (a, act4_jacobian(x.kind(), &p).tr_mul(g)),
                    (b, DVector::from_column_slice(gp.as_slice())),
                ]
            }
            Op::Oplus(a, b) => {
                let kind = self.g(b).kind();
                let v = TangentVector::new(kind, self.v(a).clone())?;
                let step = GroupElement::exp(&v);
                vec![
                    (a, left_jacobian_with(&v, self.sim3).tr_mul(g)),
                    (b, step.adj_matrix().tr_mul(g)),
                ]
            }
            Op::Ominus(a, b) => {
                let z = self.g(a).mul(&self.g(b).inv())?;
                let phi = TangentVector::new(z.kind(), self.v(idx).clone())?;
                let gz = inv_left_jacobian_with(&phi, self.sim3)?.tr_mul(g);
                let gy = -z.adj_matrix().tr_mul(&gz);
                vec![(a, gz), (b, gy)]
            }
            Op::GeodesicDistance(a, b) => {
                // d = |Log(Z)| with Z = Y X^-1.
                let z = self.g(b).mul(&self.g(a).inv())?;
                let phi = z.log()?;
                let d = phi.norm();
                if d == 0.0 {
                    let k = z.kind().tangent_dim();
                    vec![(a, DVector::zeros(k)), (b, DVector::zeros(k))]
                } else {
                    let gphi = phi.coords() * (g[0] / d);
                    let gz = inv_left_jacobian_with(&phi, self.sim3)?.tr_mul(&gphi);
                    let gx = -z.adj_matrix().tr_mul(&gz);
                    vec![(a, gx), (b, gz)]
                }
            }
            Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            Op::Sub(a, b) => vec![(a, g.clone()), (b, -g)],
            Op::Scale(a, c) => vec![(a, g * c)],
            Op::MulElementwise(a, b) => {
                let (x, y) = (self.euclid(a), self.euclid(b));
                vec![(a, g.component_mul(&y)), (b, g.component_mul(&x))]
            }
            Op::Dot(a, b) => vec![(a, self.v(b) * g[0]), (b, self.v(a) * g[0])],
            Op::Norm2(a) => {
                let x = self.v(a);
                let n = x.norm();
                if n == 0.0 {
                    vec![(a, DVector::zeros(x.len()))]
                } else {
                    vec![(a, x * (g[0] / n))]
                }
            }
            Op::Sum(a) => vec![(a, DVector::from_element(self.v(a).len(), g[0]))],
            Op::ExpScalar(a) => vec![(a, g * node.value.as_scalar()?)],
        })
    }

    /// Value of a Euclidean node as a vector (scalars become length 1).
    fn euclid(&self, i: usize) -> DVector<f64> {
        match &self.nodes[i].value {
            Value::Scalar(s) => DVector::from_element(1, *s),
            Value::Vector(v) => v.clone(),
            Value::Group(_) => unreachable!("checked at record time"),
        }
    }
}
