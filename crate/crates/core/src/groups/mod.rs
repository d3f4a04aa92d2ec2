//! Closed-form operations on the 3D transformation groups SO(3), SE(3),
//! Sim(3) and R+ x SO(3).
//!
//! Rotations are stored as unit quaternions with a non-negative scalar part.
//! Tangent vectors are coordinates in R^k with the component orders
//!
//! | group  | k | coordinates          |
//! |--------|---|----------------------|
//! | SO3    | 3 | phi                  |
//! | SE3    | 6 | (tau, phi)           |
//! | Sim3   | 7 | (tau, phi, sigma)    |
//! | RxSO3  | 4 | (phi, sigma)         |
//!
//! All differentials use the left perturbation `Exp(v) * X`.

use std::fmt;
use std::str::FromStr;

mod algebra;
pub(crate) mod coeffs;
mod element;
mod jacobian;
mod tangent;

pub use algebra::{curlyhat, hat, skew, vee};
pub use element::GroupElement;
pub use jacobian::{
    inv_left_jacobian, inv_left_jacobian_with, left_jacobian, left_jacobian_with, Sim3Jacobian,
};
pub use tangent::TangentVector;

/// Dense matrix of a differential between tangent spaces.
pub type Jacobian = nalgebra::DMatrix<f64>;

/// Angle and scale-log magnitude below which Taylor expansions replace the
/// closed forms.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Logarithms are rejected once the rotation angle reaches `pi - BRANCH_MARGIN`.
pub const BRANCH_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupKind {
    SO3,
    SE3,
    Sim3,
    RxSO3,
}

impl GroupKind {
    pub const ALL: [GroupKind; 4] = [
        GroupKind::SO3,
        GroupKind::SE3,
        GroupKind::Sim3,
        GroupKind::RxSO3,
    ];

    pub const fn tangent_dim(self) -> usize {
        match self {
            GroupKind::SO3 => 3,
            GroupKind::SE3 => 6,
            GroupKind::Sim3 => 7,
            GroupKind::RxSO3 => 4,
        }
    }

    pub const fn has_translation(self) -> bool {
        matches!(self, GroupKind::SE3 | GroupKind::Sim3)
    }

    pub const fn has_scale(self) -> bool {
        matches!(self, GroupKind::Sim3 | GroupKind::RxSO3)
    }

    /// Offset of phi inside the tangent coordinates.
    pub(crate) const fn phi_offset(self) -> usize {
        match self {
            GroupKind::SO3 | GroupKind::RxSO3 => 0,
            GroupKind::SE3 | GroupKind::Sim3 => 3,
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GroupKind::SO3 => "SO3",
            GroupKind::SE3 => "SE3",
            GroupKind::Sim3 => "Sim3",
            GroupKind::RxSO3 => "RxSO3",
        };
        f.write_str(name)
    }
}

impl FromStr for GroupKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "so3" => Ok(GroupKind::SO3),
            "se3" => Ok(GroupKind::SE3),
            "sim3" => Ok(GroupKind::Sim3),
            "rxso3" => Ok(GroupKind::RxSO3),
            other => Err(format!(
                "unknown group '{other}' (expected so3, se3, sim3 or rxso3)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_dims() {
        assert_eq!(GroupKind::SO3.tangent_dim(), 3);
        assert_eq!(GroupKind::SE3.tangent_dim(), 6);
        assert_eq!(GroupKind::Sim3.tangent_dim(), 7);
        assert_eq!(GroupKind::RxSO3.tangent_dim(), 4);
    }

    #[test]
    fn parse_kind() {
        assert_eq!("SIM3".parse::<GroupKind>().unwrap(), GroupKind::Sim3);
        assert_eq!("rxso3".parse::<GroupKind>().unwrap(), GroupKind::RxSO3);
        assert!("se2".parse::<GroupKind>().is_err());
    }
}
