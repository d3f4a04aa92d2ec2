//! Two-stage pose graph optimization: gradient descent on all rotations
//! under a saturating geodesic cost, a linear solve for translations, then
//! Gauss-Newton on the full SE3 problem.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::groups::{inv_left_jacobian, GroupElement};
use crate::io_g2o::{rotation_subgraph, PoseGraph, RotationGraph};
use crate::optim::{
    gauss_newton, sgd_step, BlockSystem, GnConfig, IterationRecord, LinearSolver, ResidualBlock,
    ResidualProblem, SgdConfig, SgdState, Termination,
};
use crate::tape::{NodeId, Tape};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReshapedCostConfig {
    /// Saturation rate of the cost.
    pub b: f64,
    pub sgd: SgdConfig,
}

impl Default for ReshapedCostConfig {
    fn default() -> Self {
        Self {
            b: 1.5,
            sgd: SgdConfig {
                lr: 0.1,
                momentum: 0.5,
                decay: 0.995,
                steps: 1000,
            },
        }
    }
}

impl ReshapedCostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "b must be positive, got {}",
                self.b
            )));
        }
        self.sgd.validate()
    }
}

/// `1/b - (1/b + theta) exp(-b theta)`: zero at the origin, quadratic near
/// it and saturating at `1/b`.
pub fn reshaped_loss(theta: f64, b: f64) -> f64 {
    1.0 / b - (1.0 / b + theta) * (-b * theta).exp()
}

/// Vertex ids mapped to positions in a rotation vector, in ascending order.
fn positions(rg: &RotationGraph) -> BTreeMap<u64, usize> {
    rg.vertices
        .keys()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect()
}

/// Records the summed reshaped cost over every edge of `rg`, with vertex
/// rotations read from `nodes` (ascending id order).
pub fn record_reshaped_cost(
    tape: &mut Tape,
    rg: &RotationGraph,
    nodes: &[NodeId],
    b: f64,
) -> Result<NodeId> {
    if nodes.len() != rg.vertices.len() {
        return Err(Error::DimensionMismatch {
            expected: rg.vertices.len(),
            found: nodes.len(),
        });
    }
    let index = positions(rg);
    let inv_b = tape.leaf(1.0 / b);
    let mut total = tape.leaf(0.0);
    for e in &rg.edges {
        let tagged = |err: Error| Error::Edge {
            from: e.from,
            to: e.to,
            source: Box::new(err),
        };
        let (Some(&i), Some(&j)) = (index.get(&e.from), index.get(&e.to)) else {
            return Err(tagged(Error::InvalidConfig(
                "edge endpoint is not a vertex".into(),
            )));
        };
        let ri_inv = tape.inv(nodes[i])?;
        let rel = tape.mul(ri_inv, nodes[j])?;
        let meas_inv = tape.leaf(e.measurement.inv());
        let err = tape.mul(rel, meas_inv)?;
        let phi = tape.log(err).map_err(tagged)?;
        let theta = tape.norm2(phi)?;
        // 1/b - (1/b + theta) exp(-b theta)
        let decay = tape.scale(theta, -b)?;
        let decay = tape.exp_scalar(decay)?;
        let lever = tape.add(inv_b, theta)?;
        let product = tape.mul_elementwise(lever, decay)?;
        let term = tape.sub(inv_b, product)?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}

/// Reshaped cost and its cogradient with respect to each rotation.
pub fn reshaped_cost_and_gradients(
    rg: &RotationGraph,
    rotations: &[GroupElement],
    b: f64,
) -> Result<(f64, Vec<DVector<f64>>)> {
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = rotations.iter().map(|r| tape.leaf(r.clone())).collect();
    let loss = record_reshaped_cost(&mut tape, rg, &nodes, b)?;
    let value = tape.scalar(loss)?;
    let grads = tape.backward(loss)?;
    let per_vertex = nodes.iter().map(|&n| grads.get(n)).collect::<Result<_>>()?;
    Ok((value, per_vertex))
}

pub fn reshaped_cost(rg: &RotationGraph, rotations: &[GroupElement], b: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = rotations.iter().map(|r| tape.leaf(r.clone())).collect();
    let loss = record_reshaped_cost(&mut tape, rg, &nodes, b)?;
    tape.scalar(loss)
}

/// Rotations after `cfg.sgd.steps` joint gradient steps from the graph's
/// vertex rotations, with the cost before each step and after the last.
pub fn rotation_init(
    rg: &RotationGraph,
    cfg: &ReshapedCostConfig,
) -> Result<(Vec<GroupElement>, Vec<f64>)> {
    cfg.validate()?;
    let mut rotations: Vec<GroupElement> = rg.vertices.values().cloned().collect();
    let mut state = SgdState::new(&rotations);
    let mut trace = Vec::with_capacity(cfg.sgd.steps + 1);
    for step in 0..cfg.sgd.steps {
        let (loss, grads) = reshaped_cost_and_gradients(rg, &rotations, cfg.b)?;
        trace.push(loss);
        sgd_step(&mut rotations, &grads, &mut state, &cfg.sgd, step)?;
    }
    trace.push(reshaped_cost(rg, &rotations, cfg.b)?);
    Ok((rotations, trace))
}

/// Least-squares translations for fixed rotations: every edge asks for
/// `R_i^T (t_j - t_i) = t_ij`, weighted by its translation information.
/// The first vertex keeps its translation.
pub fn translation_init(g: &PoseGraph, rotations: &[GroupElement]) -> Result<Vec<GroupElement>> {
    let n = g.vertices.len();
    if rotations.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rotations.len(),
        });
    }
    let current: Vec<&GroupElement> = g.vertices.values().collect();
    if n <= 1 {
        return Ok(rotations
            .iter()
            .zip(&current)
            .map(|(r, x)| GroupElement::se3(*r.rotation(), *x.translation()))
            .collect());
    }
    let index = g.index_of();
    let anchor = *current[0].translation();
    let mut system = BlockSystem::new(vec![3; n - 1]);
    for e in &g.edges {
        let (i, j) = (index[&e.from], index[&e.to]);
        if i == j {
            continue;
        }
        let ri = rotations[i].rotation_matrix();
        let omega: Matrix3<f64> = e.information.fixed_view::<3, 3>(0, 0).into_owned();
        // Residual in world frame: t_j - t_i - R_i t_ij, weight R_i Omega R_i^T.
        let w = ri * omega * ri.transpose();
        let target = ri * e.measurement.translation();
        let w_dyn = DMatrix::from_column_slice(3, 3, w.as_slice());
        let mut rhs_j = w * target;
        let mut rhs_i = -(w * target);
        if i == 0 {
            rhs_j += w * anchor;
        }
        if j == 0 {
            rhs_i += w * anchor;
        }
        if i > 0 {
            system.add_block(i - 1, i - 1, &w_dyn);
            system.add_rhs(i - 1, &DVector::from_column_slice(rhs_i.as_slice()));
        }
        if j > 0 {
            system.add_block(j - 1, j - 1, &w_dyn);
            system.add_rhs(j - 1, &DVector::from_column_slice(rhs_j.as_slice()));
        }
        if i > 0 && j > 0 {
            system.add_block(i - 1, j - 1, &(-&w_dyn));
        }
    }
    let t = system.solve(LinearSolver::SparseBlockCholesky)?;
    Ok(rotations
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let tk = if k == 0 {
                anchor
            } else {
                t.fixed_rows::<3>(3 * (k - 1)).into_owned()
            };
            GroupElement::se3(*r.rotation(), tk)
        })
        .collect())
}

/// Full SE3 pose graph chi2 with `r = Log((X_i^-1 X_j) Z^-1)` per edge.
pub struct PoseGraphProblem<'a> {
    graph: &'a PoseGraph,
    index: BTreeMap<u64, usize>,
}

impl<'a> PoseGraphProblem<'a> {
    pub fn new(graph: &'a PoseGraph) -> Self {
        Self {
            graph,
            index: graph.index_of(),
        }
    }

    /// Vertices of the graph in the variable order used by the problem.
    pub fn variables(&self) -> Vec<GroupElement> {
        self.graph.vertices.values().cloned().collect()
    }
}

impl ResidualProblem for PoseGraphProblem<'_> {
    fn residual_blocks(&self, vars: &[GroupElement]) -> Result<Vec<ResidualBlock>> {
        self.graph
            .edges
            .par_iter()
            .map(|e| {
                let tagged = |err: Error| Error::Edge {
                    from: e.from,
                    to: e.to,
                    source: Box::new(err),
                };
                let (i, j) = (self.index[&e.from], self.index[&e.to]);
                let xi_inv = vars[i].inv();
                let rel = xi_inv.mul(&vars[j]).map_err(tagged)?;
                let r = rel.ominus(&e.measurement).map_err(tagged)?;
                let jac = inv_left_jacobian(&r).map_err(tagged)? * xi_inv.adj_matrix();
                Ok(ResidualBlock {
                    residual: r.into_coords(),
                    information: e.information.clone(),
                    jacobians: vec![(i, -&jac), (j, jac)],
                })
            })
            .collect()
    }
}

/// Chi2 of `vertices` (ascending id order) against the edges of `g`.
pub fn chi2(g: &PoseGraph, vertices: &[GroupElement]) -> Result<f64> {
    PoseGraphProblem::new(g).chi2(vertices)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PgoConfig {
    pub rotation: ReshapedCostConfig,
    pub gn: GnConfig,
}

#[derive(Clone, Debug)]
pub struct PgoResult {
    pub vertices: BTreeMap<u64, GroupElement>,
    pub rotation_trace: Vec<f64>,
    pub gn_trace: Vec<IterationRecord>,
    pub termination: Termination,
    pub rotation_seconds: f64,
    pub translation_seconds: f64,
    pub gn_seconds: f64,
}

impl PgoResult {
    pub fn final_chi2(&self) -> f64 {
        self.gn_trace.last().map_or(f64::NAN, |r| r.chi2)
    }
}

/// Gauss-Newton from the given vertices (ascending id order).
pub fn refine(
    g: &PoseGraph,
    vertices: &mut [GroupElement],
    cfg: &GnConfig,
) -> Result<crate::optim::GnReport> {
    gauss_newton(&PoseGraphProblem::new(g), vertices, cfg)
}

pub fn solve_pgo(g: &PoseGraph, cfg: &PgoConfig) -> Result<PgoResult> {
    let clock = Instant::now();
    let rg = rotation_subgraph(g);
    let (rotations, rotation_trace) =
        rotation_init(&rg, &cfg.rotation).map_err(|e| e.in_stage("rotation"))?;
    let rotation_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut vertices = translation_init(g, &rotations).map_err(|e| e.in_stage("translation"))?;
    let translation_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let report = refine(g, &mut vertices, &cfg.gn).map_err(|e| e.in_stage("gauss-newton"))?;
    let gn_seconds = clock.elapsed().as_secs_f64();

    Ok(PgoResult {
        vertices: g.vertices.keys().copied().zip(vertices).collect(),
        rotation_trace,
        gn_trace: report.trace,
        termination: report.termination,
        rotation_seconds,
        translation_seconds,
        gn_seconds,
    })
}

/// Vertices of `g` with their rotations replaced, keeping translations.
pub fn with_rotations(g: &PoseGraph, rotations: &[GroupElement]) -> Vec<GroupElement> {
    g.vertices
        .values()
        .zip(rotations)
        .map(|(x, r)| GroupElement::se3(*r.rotation(), *x.translation()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::GroupKind;
    use crate::io_g2o::{synth_graph, SynthKind, SynthNoise};

    const CLEAN: SynthNoise = SynthNoise {
        rotation: 0.0,
        translation: 0.0,
    };

    #[test]
    fn loss_shape() {
        assert_eq!(reshaped_loss(0.0, 1.5), 0.0);
        let mut prev = 0.0;
        for k in 1..200 {
            let v = reshaped_loss(k as f64 * 0.1, 1.5);
            assert!(v > prev && v < 1.0 / 1.5);
            prev = v;
        }
        assert!((reshaped_loss(40.0, 1.5) - 1.0 / 1.5).abs() < 1e-20);
    }

    #[test]
    fn loss_at_one() {
        // 2/3 - (5/3) e^{-3/2}, evaluated with 50-digit arithmetic.
        let oracle = 0.294_783_066_419_283_62;
        assert!((reshaped_loss(1.0, 1.5) - oracle).abs() < 1e-15);
    }

    #[test]
    fn consistent_graph_has_zero_cost() {
        let (_, truth) = synth_graph(SynthKind::Ring, 10, CLEAN, 1).unwrap();
        let rg = rotation_subgraph(&truth);
        let rotations: Vec<_> = rg.vertices.values().cloned().collect();
        assert!(reshaped_cost(&rg, &rotations, 1.5).unwrap() < 1e-24);
        assert!(
            chi2(
                &truth,
                &truth.vertices.values().cloned().collect::<Vec<_>>()
            )
            .unwrap()
                < 1e-20
        );
    }

    #[test]
    fn translation_init_recovers_truth_for_exact_rotations() {
        let noise = SynthNoise {
            rotation: 0.0,
            translation: 0.0,
        };
        let (g, truth) = synth_graph(SynthKind::Grid, 16, noise, 3).unwrap();
        let rotations: Vec<_> = truth
            .vertices
            .values()
            .map(GroupElement::rotation_part)
            .collect();
        let scrambled = PoseGraph {
            vertices: g
                .vertices
                .iter()
                .map(|(&id, x)| {
                    (
                        id,
                        if id == 0 {
                            x.clone()
                        } else {
                            GroupElement::identity(GroupKind::SE3)
                        },
                    )
                })
                .collect(),
            edges: g.edges.clone(),
        };
        let init = translation_init(&scrambled, &rotations).unwrap();
        for (x, t) in init.iter().zip(truth.vertices.values()) {
            assert!(x.matrix_distance(t) < 1e-9);
        }
    }

    #[test]
    fn clean_ring_solves_exactly() {
        let (g, _) = synth_graph(SynthKind::Ring, 10, CLEAN, 1).unwrap();
        let result = solve_pgo(&g, &PgoConfig::default()).unwrap();
        assert!(result.final_chi2() < 1e-12, "{}", result.final_chi2());
        assert!(*result.rotation_trace.last().unwrap() < 1e-6);
    }

    #[test]
    fn edge_errors_name_the_edge() {
        let (g, _) = synth_graph(SynthKind::Ring, 4, CLEAN, 1).unwrap();
        let mut rg = rotation_subgraph(&g);
        let half_turn = GroupElement::so3(nalgebra::UnitQuaternion::from_axis_angle(
            &nalgebra::Vector3::x_axis(),
            std::f64::consts::PI,
        ));
        rg.edges[0].measurement = rg.edges[0].measurement.mul(&half_turn).unwrap();
        let rotations: Vec<_> = rg.vertices.values().cloned().collect();
        match reshaped_cost(&rg, &rotations, 1.5) {
            Err(Error::Edge { from: 0, to: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
