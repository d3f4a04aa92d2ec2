use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{GroupKind, TangentVector};
use crate::error::{Error, Result};

const PATTERN_TOL: f64 = 1e-9;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Matrix form of a Lie algebra element.
///
/// SO3 and RxSO3 give 3x3 matrices (`phi^ + sigma I` for RxSO3); SE3 and Sim3
/// give 4x4 matrices whose last row is zero, so that the matrix exponential of
/// `hat(v)` equals the homogeneous matrix of `Exp(v)`.
pub fn hat(v: &TangentVector) -> DMatrix<f64> {
    let phi = v.phi();
    let sigma = v.sigma();
    let top = skew(&phi) + Matrix3::identity() * sigma;
    match v.kind() {
        GroupKind::SO3 | GroupKind::RxSO3 => DMatrix::from_iterator(3, 3, top.iter().copied()),
        GroupKind::SE3 | GroupKind::Sim3 => {
            let tau = v.tau();
            let mut m = DMatrix::zeros(4, 4);
            m.view_mut((0, 0), (3, 3)).copy_from(&top);
            m.view_mut((0, 3), (3, 1)).copy_from(&tau);
            m
        }
    }
}

/// Inverse of [`hat`]. Entries forced by the algebra's structure must hold to
/// within 1e-9.
pub fn vee(m: &DMatrix<f64>, kind: GroupKind) -> Result<TangentVector> {
    let n = match kind {
        GroupKind::SO3 | GroupKind::RxSO3 => 3,
        GroupKind::SE3 | GroupKind::Sim3 => 4,
    };
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::PatternViolation {
            kind,
            reason: format!("expected a {n}x{n} matrix, got {}x{}", m.nrows(), m.ncols()),
        });
    }
    let violation = |reason: String| Error::PatternViolation { kind, reason };

    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        if (m[(i, j)] + m[(j, i)]).abs() > PATTERN_TOL {
            return Err(violation(format!("block is not skew at ({i},{j})")));
        }
    }
    let sigma = m[(0, 0)];
    let scaled = kind.has_scale();
    for i in 0..3 {
        let expected = if scaled { sigma } else { 0.0 };
        if (m[(i, i)] - expected).abs() > PATTERN_TOL {
            return Err(violation(format!("unexpected diagonal entry at ({i},{i})")));
        }
    }
    if n == 4 {
        for j in 0..4 {
            if m[(3, j)].abs() > PATTERN_TOL {
                return Err(violation(format!(
                    "last row must be zero, found {} at column {j}",
                    m[(3, j)]
                )));
            }
        }
    }

    let phi = Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]);
    let tau = if n == 4 {
        Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
    } else {
        Vector3::zeros()
    };
    Ok(TangentVector::from_parts(
        kind,
        tau,
        phi,
        if scaled { sigma } else { 0.0 },
    ))
}

/// Matrix of the algebra adjoint `ad_v`, i.e. `curlyhat(a) * b == [a, b]`.
pub fn curlyhat(v: &TangentVector) -> DMatrix<f64> {
    let phi_hat = skew(&v.phi());
    let k = v.kind().tangent_dim();
    let mut m = DMatrix::zeros(k, k);
    match v.kind() {
        GroupKind::SO3 => m.copy_from(&phi_hat),
        GroupKind::RxSO3 => m.view_mut((0, 0), (3, 3)).copy_from(&phi_hat),
        GroupKind::SE3 => {
            let tau_hat = skew(&v.tau());
            m.view_mut((0, 0), (3, 3)).copy_from(&phi_hat);
            m.view_mut((0, 3), (3, 3)).copy_from(&tau_hat);
            m.view_mut((3, 3), (3, 3)).copy_from(&phi_hat);
        }
        GroupKind::Sim3 => {
            let tau = v.tau();
            let top = phi_hat + Matrix3::identity() * v.sigma();
            m.view_mut((0, 0), (3, 3)).copy_from(&top);
            m.view_mut((0, 3), (3, 3)).copy_from(&skew(&tau));
            m.view_mut((0, 6), (3, 1)).copy_from(&(-tau));
            m.view_mut((3, 3), (3, 3)).copy_from(&phi_hat);
        }
    }
    m
}
