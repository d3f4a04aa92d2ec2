use std::fmt;

use nalgebra::{DVector, Vector3};

use super::GroupKind;
use crate::error::{Error, Result};

/// Coordinates of a Lie algebra element.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    kind: GroupKind,
    coords: DVector<f64>,
}

impl TangentVector {
    pub fn new(kind: GroupKind, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != kind.tangent_dim() {
            return Err(Error::DimensionMismatch {
                expected: kind.tangent_dim(),
                found: coords.len(),
            });
        }
        Ok(Self { kind, coords })
    }

    pub fn from_slice(kind: GroupKind, coords: &[f64]) -> Result<Self> {
        Self::new(kind, DVector::from_column_slice(coords))
    }

    pub fn zeros(kind: GroupKind) -> Self {
        Self {
            kind,
            coords: DVector::zeros(kind.tangent_dim()),
        }
    }

    pub fn from_parts(kind: GroupKind, tau: Vector3<f64>, phi: Vector3<f64>, sigma: f64) -> Self {
        let coords = match kind {
            GroupKind::SO3 => DVector::from_column_slice(phi.as_slice()),
            GroupKind::SE3 => DVector::from_iterator(6, tau.iter().chain(phi.iter()).copied()),
            GroupKind::Sim3 => DVector::from_iterator(
                7,
                tau.iter()
                    .chain(phi.iter())
                    .copied()
                    .chain(std::iter::once(sigma)),
            ),
            GroupKind::RxSO3 => {
                DVector::from_iterator(4, phi.iter().copied().chain(std::iter::once(sigma)))
            }
        };
        Self { kind, coords }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coords.as_slice()
    }

    /// Translational part; zero for groups without translation.
    pub fn tau(&self) -> Vector3<f64> {
        if self.kind.has_translation() {
            Vector3::new(self.coords[0], self.coords[1], self.coords[2])
        } else {
            Vector3::zeros()
        }
    }

    pub fn phi(&self) -> Vector3<f64> {
        let o = self.kind.phi_offset();
        Vector3::new(self.coords[o], self.coords[o + 1], self.coords[o + 2])
    }

    /// Log-scale part; zero for groups without scale.
    pub fn sigma(&self) -> f64 {
        if self.kind.has_scale() {
            self.coords[self.coords.len() - 1]
        } else {
            0.0
        }
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kind: self.kind,
            coords: &self.coords * factor,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

impl fmt::Display for TangentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.kind)?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c:.6e}")?;
        }
        f.write_str("]")
    }
}
