//! g2o pose graphs (`VERTEX_SE3:QUAT`, `EDGE_SE3:QUAT`), TUM trajectories
//! and synthetic benchmark graphs.
//!
//! Edge information matrices are written as the 21 entries of the upper
//! triangle in row-major order, in the `(x, y, z, qx, qy, qz)` order that
//! matches the `(tau, phi)` tangent coordinates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, Quaternion, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::groups::{GroupElement, GroupKind, TangentVector};

pub const VERTEX_TAG: &str = "VERTEX_SE3:QUAT";
pub const EDGE_TAG: &str = "EDGE_SE3:QUAT";

/// Quaternions further than this from unit norm are reported when loaded.
const QUAT_NORM_WARN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: u64,
    pub to: u64,
    pub measurement: GroupElement,
    /// Symmetric 6x6 information matrix in `(tau, phi)` order.
    pub information: DMatrix<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseGraph {
    pub vertices: BTreeMap<u64, GroupElement>,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RotationEdge {
    pub from: u64,
    pub to: u64,
    pub measurement: GroupElement,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RotationGraph {
    pub vertices: BTreeMap<u64, GroupElement>,
    pub edges: Vec<RotationEdge>,
}

impl PoseGraph {
    pub fn vertex_ids(&self) -> Vec<u64> {
        self.vertices.keys().copied().collect()
    }

    /// Position of each vertex id in ascending id order.
    pub fn index_of(&self) -> BTreeMap<u64, usize> {
        self.vertices
            .keys()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect()
    }
}

/// Drops translations, keeping vertices, topology and measured rotations.
pub fn rotation_subgraph(g: &PoseGraph) -> RotationGraph {
    RotationGraph {
        vertices: g
            .vertices
            .iter()
            .map(|(&id, x)| (id, x.rotation_part()))
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| RotationEdge {
                from: e.from,
                to: e.to,
                measurement: e.measurement.rotation_part(),
            })
            .collect(),
    }
}

fn parse_fields(line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("malformed number '{f}'"),
                })
        })
        .collect()
}

fn parse_id(line: usize, field: &str) -> Result<u64> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("malformed id '{field}'"),
    })
}

fn pose_from(line: usize, v: &[f64]) -> Result<GroupElement> {
    let q = Quaternion::new(v[6], v[3], v[4], v[5]);
    let norm = q.norm();
    if norm == 0.0 {
        return Err(Error::Parse {
            line,
            message: "zero quaternion".into(),
        });
    }
    if (norm - 1.0).abs() > QUAT_NORM_WARN {
        log::warn!("line {line}: quaternion norm {norm} renormalized");
    }
    Ok(GroupElement::se3(
        UnitQuaternion::from_quaternion(q),
        Vector3::new(v[0], v[1], v[2]),
    ))
}

fn expect_len(line: usize, tag: &str, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() == n {
        Ok(())
    } else {
        Err(Error::Parse {
            line,
            message: format!("{tag} expects {n} fields, found {}", fields.len()),
        })
    }
}

pub fn parse_g2o(text: &str) -> Result<PoseGraph> {
    let mut graph = PoseGraph::default();
    let mut edge_lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let (tag, rest) = (tokens[0], &tokens[1..]);
        match tag {
            VERTEX_TAG => {
                expect_len(line, tag, rest, 8)?;
                let id = parse_id(line, rest[0])?;
                let v = parse_fields(line, &rest[1..])?;
                if graph.vertices.insert(id, pose_from(line, &v)?).is_some() {
                    return Err(Error::Parse {
                        line,
                        message: format!("duplicate vertex {id}"),
                    });
                }
            }
            EDGE_TAG => {
                expect_len(line, tag, rest, 30)?;
                let from = parse_id(line, rest[0])?;
                let to = parse_id(line, rest[1])?;
                let v = parse_fields(line, &rest[2..])?;
                let mut information = DMatrix::zeros(6, 6);
                let mut k = 7;
                for r in 0..6 {
                    for c in r..6 {
                        information[(r, c)] = v[k];
                        information[(c, r)] = v[k];
                        k += 1;
                    }
                }
                graph.edges.push(Edge {
                    from,
                    to,
                    measurement: pose_from(line, &v)?,
                    information,
                });
                edge_lines.push(line);
            }
            other => log::warn!("line {line}: skipping unsupported record '{other}'"),
        }
    }
    for (edge, &line) in graph.edges.iter().zip(&edge_lines) {
        for vertex in [edge.from, edge.to] {
            if !graph.vertices.contains_key(&vertex) {
                return Err(Error::DanglingEdge { line, vertex });
            }
        }
    }
    Ok(graph)
}

/// Fixed-point decimal with nine fractional digits, trailing zeros removed.
pub fn format_number(x: f64) -> String {
    let mut s = format!("{x:.9}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn push_pose(out: &mut String, x: &GroupElement) {
    let t = x.translation();
    let q = x.rotation().quaternion();
    for v in [t.x, t.y, t.z, q.i, q.j, q.k, q.w] {
        out.push(' ');
        out.push_str(&format_number(v));
    }
}

/// Vertices in id order, then edges in stored order.
pub fn serialize_g2o(g: &PoseGraph) -> String {
    let mut out = String::new();
    for (id, x) in &g.vertices {
        let _ = write!(out, "{VERTEX_TAG} {id}");
        push_pose(&mut out, x);
        out.push('\n');
    }
    for e in &g.edges {
        let _ = write!(out, "{EDGE_TAG} {} {}", e.from, e.to);
        push_pose(&mut out, &e.measurement);
        for r in 0..6 {
            for c in r..6 {
                out.push(' ');
                out.push_str(&format_number(e.information[(r, c)]));
            }
        }
        out.push('\n');
    }
    out
}

/// `t x y z qx qy qz qw` per vertex, with the id as timestamp.
pub fn write_tum(vertices: &BTreeMap<u64, GroupElement>) -> String {
    let mut out = String::new();
    for (id, x) in vertices {
        let _ = write!(out, "{id}");
        push_pose(&mut out, x);
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Ring,
    Grid,
    Sphere,
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ring" => Ok(SynthKind::Ring),
            "grid" => Ok(SynthKind::Grid),
            "sphere" => Ok(SynthKind::Sphere),
            other => Err(format!(
                "unknown graph kind '{other}' (expected ring, grid or sphere)"
            )),
        }
    }
}

/// Standard deviations of the tangent-space measurement noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthNoise {
    pub rotation: f64,
    pub translation: f64,
}

fn pose(yaw: f64, pitch: f64, position: Vector3<f64>) -> GroupElement {
    let r = UnitQuaternion::from_euler_angles(0.0, pitch, yaw);
    GroupElement::se3(r, position)
}

/// Ground-truth poses and edge list `(i, j)` of a synthetic layout.
fn layout(kind: SynthKind, n: usize) -> (Vec<GroupElement>, Vec<(usize, usize)>) {
    use std::f64::consts::{PI, TAU};
    match kind {
        SynthKind::Ring => {
            let radius = n as f64 / TAU;
            let poses = (0..n)
                .map(|k| {
                    let a = TAU * k as f64 / n as f64;
                    pose(
                        a + PI / 2.0,
                        0.0,
                        Vector3::new(radius * a.cos(), radius * a.sin(), 0.0),
                    )
                })
                .collect();
            let mut edges: Vec<_> = (0..n).map(|k| (k, (k + 1) % n)).collect();
            edges.push((0, n / 2));
            (poses, edges)
        }
        SynthKind::Grid => {
            let side = (n as f64).sqrt().ceil() as usize;
            let cell = |k: usize| {
                let (row, col) = (k / side, k % side);
                // Serpentine order so consecutive poses are lattice neighbours.
                let col = if row % 2 == 0 { col } else { side - 1 - col };
                (row, col)
            };
            let poses = (0..n)
                .map(|k| {
                    let (row, col) = cell(k);
                    let yaw = if row % 2 == 0 { 0.0 } else { PI };
                    pose(yaw, 0.0, Vector3::new(col as f64, row as f64, 0.0))
                })
                .collect();
            let mut edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
            let index: BTreeMap<(usize, usize), usize> = (0..n).map(|k| (cell(k), k)).collect();
            for k in 0..n {
                let (row, col) = cell(k);
                if let Some(&up) = index.get(&(row + 1, col)) {
                    if up != k + 1 {
                        edges.push((k, up));
                    }
                }
            }
            (poses, edges)
        }
        SynthKind::Sphere => {
            let per_ring = (n as f64).sqrt().ceil() as usize;
            let rings = n.div_ceil(per_ring);
            let radius = 5.0;
            let poses = (0..n)
                .map(|k| {
                    let (ring, j) = (k / per_ring, k % per_ring);
                    let lat = PI * (ring as f64 + 1.0) / (rings as f64 + 1.0) - PI / 2.0;
                    let lon = TAU * j as f64 / per_ring as f64;
                    let p = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
                        * radius;
                    pose(lon + PI / 2.0, -lat, p)
                })
                .collect();
            let mut edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
            edges.extend((0..n.saturating_sub(per_ring)).map(|k| (k, k + per_ring)));
            (poses, edges)
        }
    }
}

fn information(noise: &SynthNoise) -> DMatrix<f64> {
    let weight = |s: f64| if s > 0.0 { 1.0 / (s * s) } else { 1.0 };
    let mut info = DMatrix::zeros(6, 6);
    for k in 0..3 {
        info[(k, k)] = weight(noise.translation);
        info[(k + 3, k + 3)] = weight(noise.rotation);
    }
    info
}

/// A synthetic graph with noisy measurements `Z = Exp(nu) X_i^-1 X_j`,
/// initial estimates chained from the first pose through the odometry edges,
/// and the ground-truth poses.
pub fn synth_graph(
    kind: SynthKind,
    n: usize,
    noise: SynthNoise,
    seed: u64,
) -> Result<(PoseGraph, PoseGraph)> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!(
            "synthetic graphs need at least 3 vertices, got {n}"
        )));
    }
    if !(noise.rotation >= 0.0 && noise.translation >= 0.0) {
        return Err(Error::InvalidConfig(
            "noise levels must be non-negative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = Normal::new(0.0, noise.rotation).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let trans =
        Normal::new(0.0, noise.translation).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (truth, pairs) = layout(kind, n);
    let info = information(&noise);

    let mut edges = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        let relative = truth[i].inv().mul(&truth[j])?;
        let tau = Vector3::from_fn(|_, _| trans.sample(&mut rng));
        let phi = Vector3::from_fn(|_, _| rot.sample(&mut rng));
        let nu = TangentVector::from_parts(GroupKind::SE3, tau, phi, 0.0);
        edges.push(Edge {
            from: i as u64,
            to: j as u64,
            measurement: relative.oplus(&nu)?,
            information: info.clone(),
        });
    }

    let mut estimate = vec![truth[0].clone()];
    for k in 1..n {
        let odometry = edges
            .iter()
            .find(|e| e.from == (k - 1) as u64 && e.to == k as u64)
            .expect("every layout chains consecutive poses");
        let next = estimate[k - 1].mul(&odometry.measurement)?;
        estimate.push(next);
    }

    let to_map = |poses: Vec<GroupElement>| {
        poses
            .into_iter()
            .enumerate()
            .map(|(k, x)| (k as u64, x))
            .collect()
    };
    let truth_graph = PoseGraph {
        vertices: to_map(truth),
        edges: edges.clone(),
    };
    let graph = PoseGraph {
        vertices: to_map(estimate),
        edges,
    };
    Ok((graph, truth_graph))
}
