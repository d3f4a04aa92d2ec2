use std::fmt;

use nalgebra::{DMatrix, Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};

use super::algebra::skew;
use super::coeffs::{
    half_angle, inv_jacobian_coeff, one_minus_cos_sq, sim3_w, theta_minus_sin_cube,
};
use super::{GroupKind, TangentVector, BRANCH_MARGIN};
use crate::error::{Error, Result};

/// Below this norm of the quaternion's vector part the logarithm uses the
/// series of `atan2(n, w) / n`.
const SMALL_QUAT_VEC: f64 = 1e-6;

/// Minimum determinant accepted when inverting the Sim3 `W` matrix.
const MIN_W_DET: f64 = 1e-12;

/// An element of SO3, SE3, Sim3 or RxSO3.
///
/// Parts that a group does not have are held at their neutral values
/// (zero translation, unit scale).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    kind: GroupKind,
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

/// Renormalize and choose the representative with `w >= 0`.
fn canonical(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let q = if q.w < 0.0 { -q } else { q };
    UnitQuaternion::new_normalize(q)
}

/// Rotation `Exp(phi)` together with `theta = |phi|`.
fn so3_exp(phi: &Vector3<f64>) -> (UnitQuaternion<f64>, f64) {
    let theta = phi.norm();
    let (c, k) = half_angle(theta);
    (
        canonical(Quaternion::new(c, k * phi.x, k * phi.y, k * phi.z)),
        theta,
    )
}

/// `V = I + (1 - cos)/theta^2 phi^ + (theta - sin)/theta^3 (phi^)^2`
fn se3_v(phi: &Vector3<f64>, theta: f64) -> Matrix3<f64> {
    let ph = skew(phi);
    Matrix3::identity() + ph * one_minus_cos_sq(theta) + ph * ph * theta_minus_sin_cube(theta)
}

fn sim3_w_matrix(phi: &Vector3<f64>, theta: f64, sigma: f64) -> Matrix3<f64> {
    let (a, b, c) = sim3_w(theta, sigma);
    let ph = skew(phi);
    Matrix3::identity() * a + ph * b + ph * ph * c
}

impl GroupElement {
    /// Builds an element from its parts. Parts the group does not have must be
    /// neutral; the quaternion is renormalized.
    pub fn from_parts(
        kind: GroupKind,
        rotation: Quaternion<f64>,
        translation: Vector3<f64>,
        scale: f64,
    ) -> Result<Self> {
        let norm = rotation.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidElement(format!("quaternion norm {norm}")));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidElement("non-finite translation".into()));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidElement(format!(
                "scale must be positive, got {scale}"
            )));
        }
        if !kind.has_translation() && translation != Vector3::zeros() {
            return Err(Error::InvalidElement(format!("{kind} has no translation")));
        }
        if !kind.has_scale() && scale != 1.0 {
            return Err(Error::InvalidElement(format!("{kind} has no scale")));
        }
        Ok(Self {
            kind,
            rotation: canonical(rotation),
            translation,
            scale,
        })
    }

    pub fn identity(kind: GroupKind) -> Self {
        Self {
            kind,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn so3(rotation: UnitQuaternion<f64>) -> Self {
        Self {
            kind: GroupKind::SO3,
            rotation: canonical(rotation.into_inner()),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn se3(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            kind: GroupKind::SE3,
            rotation: canonical(rotation.into_inner()),
            translation,
            scale: 1.0,
        }
    }

    pub fn sim3(
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
        scale: f64,
    ) -> Result<Self> {
        Self::from_parts(GroupKind::Sim3, rotation.into_inner(), translation, scale)
    }

    pub fn rxso3(rotation: UnitQuaternion<f64>, scale: f64) -> Result<Self> {
        Self::from_parts(
            GroupKind::RxSO3,
            rotation.into_inner(),
            Vector3::zeros(),
            scale,
        )
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Same rotation, translation dropped, as an SO3 element.
    pub fn rotation_part(&self) -> GroupElement {
        GroupElement::so3(self.rotation)
    }

    /// Linear part `sR` of the action.
    pub fn linear(&self) -> Matrix3<f64> {
        self.rotation_matrix() * self.scale
    }

    /// Homogeneous 4x4 matrix `[[sR, t], [0, 1]]`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.linear());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.coords.iter().all(|x| x.is_finite())
            && self.translation.iter().all(|x| x.is_finite())
            && self.scale.is_finite()
    }

    fn check_kind(&self, other: GroupKind) -> Result<()> {
        if self.kind == other {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                left: self.kind,
                right: other,
            })
        }
    }

    pub fn exp(v: &TangentVector) -> Self {
        let kind = v.kind();
        let phi = v.phi();
        let (rotation, theta) = so3_exp(&phi);
        match kind {
            GroupKind::SO3 => Self::so3(rotation),
            GroupKind::SE3 => Self {
                kind,
                rotation,
                translation: se3_v(&phi, theta) * v.tau(),
                scale: 1.0,
            },
            GroupKind::Sim3 => {
                let sigma = v.sigma();
                Self {
                    kind,
                    rotation,
                    translation: sim3_w_matrix(&phi, theta, sigma) * v.tau(),
                    scale: sigma.exp(),
                }
            }
            GroupKind::RxSO3 => Self {
                kind,
                rotation,
                translation: Vector3::zeros(),
                scale: v.sigma().exp(),
            },
        }
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.rotation.quaternion();
        2.0 * q.vector().norm().atan2(q.w)
    }

    fn log_rotation(&self) -> Result<Vector3<f64>> {
        let q = self.rotation.quaternion();
        let qv = q.vector().into_owned();
        let n = qv.norm();
        let w = q.w;
        let theta = 2.0 * n.atan2(w);
        if theta >= std::f64::consts::PI - BRANCH_MARGIN {
            return Err(Error::BranchCut { angle: theta });
        }
        let factor = if n < SMALL_QUAT_VEC {
            // 2 atan2(n, w) / n expanded in n, with w close to 1.
            2.0 / w * (1.0 - n * n / (3.0 * w * w))
        } else {
            theta / n
        };
        Ok(qv * factor)
    }

    pub fn log(&self) -> Result<TangentVector> {
        let phi = self.log_rotation()?;
        let theta = phi.norm();
        let kind = self.kind;
        Ok(match kind {
            GroupKind::SO3 => TangentVector::from_parts(kind, Vector3::zeros(), phi, 0.0),
            GroupKind::SE3 => {
                let ph = skew(&phi);
                let v_inv = Matrix3::identity() - ph * 0.5 + ph * ph * inv_jacobian_coeff(theta);
                TangentVector::from_parts(kind, v_inv * self.translation, phi, 0.0)
            }
            GroupKind::Sim3 => {
                let sigma = self.scale.ln();
                let w = sim3_w_matrix(&phi, theta, sigma);
                let det = w.determinant();
                if det.abs() <= MIN_W_DET {
                    return Err(Error::Singular(format!("Sim3 W matrix, det {det:e}")));
                }
                let w_inv = w
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("Sim3 W matrix".into()))?;
                TangentVector::from_parts(kind, w_inv * self.translation, phi, sigma)
            }
            GroupKind::RxSO3 => {
                TangentVector::from_parts(kind, Vector3::zeros(), phi, self.scale.ln())
            }
        })
    }

    pub fn inv(&self) -> Self {
        let rotation = self.rotation.inverse();
        let scale = 1.0 / self.scale;
        let translation = -(rotation * self.translation) * scale;
        Self {
            kind: self.kind,
            rotation: canonical(rotation.into_inner()),
            translation,
            scale,
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_kind(other.kind)?;
        Ok(Self {
            kind: self.kind,
            rotation: canonical((self.rotation * other.rotation).into_inner()),
            translation: self.translation + (self.rotation * other.translation) * self.scale,
            scale: self.scale * other.scale,
        })
    }

    /// `sRp + t`
    pub fn act(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.rotation * p) * self.scale + self.translation
    }

    /// Homogeneous action `matrix() * p`, without dehomogenization.
    pub fn act4(&self, p: &Vector4<f64>) -> Vector4<f64> {
        let xyz = Vector3::new(p.x, p.y, p.z);
        let top = (self.rotation * xyz) * self.scale + self.translation * p.w;
        Vector4::new(top.x, top.y, top.z, p.w)
    }

    /// Matrix of `Adj_X`, so that `X * Exp(a) == Exp(Adj_X a) * X`.
    pub fn adj_matrix(&self) -> DMatrix<f64> {
        let r = self.rotation_matrix();
        let k = self.kind.tangent_dim();
        let mut m = DMatrix::zeros(k, k);
        match self.kind {
            GroupKind::SO3 => m.copy_from(&r),
            GroupKind::SE3 => {
                m.view_mut((0, 0), (3, 3)).copy_from(&r);
                m.view_mut((0, 3), (3, 3))
                    .copy_from(&(skew(&self.translation) * r));
                m.view_mut((3, 3), (3, 3)).copy_from(&r);
            }
            GroupKind::Sim3 => {
                m.view_mut((0, 0), (3, 3)).copy_from(&(r * self.scale));
                m.view_mut((0, 3), (3, 3))
                    .copy_from(&(skew(&self.translation) * r));
                m.view_mut((0, 6), (3, 1)).copy_from(&(-self.translation));
                m.view_mut((3, 3), (3, 3)).copy_from(&r);
                m[(6, 6)] = 1.0;
            }
            GroupKind::RxSO3 => {
                m.view_mut((0, 0), (3, 3)).copy_from(&r);
                m[(3, 3)] = 1.0;
            }
        }
        m
    }

    pub fn adj(&self, w: &TangentVector) -> Result<TangentVector> {
        self.check_kind(w.kind())?;
        TangentVector::new(self.kind, self.adj_matrix() * w.coords())
    }

    /// Transpose of the adjoint, acting on covectors.
    pub fn adj_t(&self, g: &TangentVector) -> Result<TangentVector> {
        self.check_kind(g.kind())?;
        TangentVector::new(self.kind, self.adj_matrix().transpose() * g.coords())
    }

    /// `Exp(v) * self`
    pub fn oplus(&self, v: &TangentVector) -> Result<Self> {
        GroupElement::exp(v).mul(self)
    }

    /// `Log(self * other^-1)`
    pub fn ominus(&self, other: &Self) -> Result<TangentVector> {
        self.mul(&other.inv())?.log()
    }

    /// `|other (-) self|`, the norm of `Log(other * self^-1)`.
    pub fn geodesic_distance(&self, other: &Self) -> Result<f64> {
        Ok(other.ominus(self)?.norm())
    }

    /// Largest absolute entry of the difference of the homogeneous matrices.
    pub fn matrix_distance(&self, other: &Self) -> f64 {
        (self.matrix() - other.matrix()).amax()
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        write!(
            f,
            "{}(q=[{:.6}, {:.6}, {:.6}, {:.6}]",
            self.kind, q.w, q.i, q.j, q.k
        )?;
        if self.kind.has_translation() {
            let t = &self.translation;
            write!(f, ", t=[{:.6}, {:.6}, {:.6}]", t.x, t.y, t.z)?;
        }
        if self.kind.has_scale() {
            write!(f, ", s={:.6}", self.scale)?;
        }
        f.write_str(")")
    }
}
