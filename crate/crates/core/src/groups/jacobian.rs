//! Left Jacobians `J_l(v)`, the differential of `Exp` at `v` in left
//! coordinates, and their inverses.
//!
//! SO3, SE3 and RxSO3 use closed forms. Sim3 uses the series
//! `J_l = sum_n ad^n / (n+1)!` and `J_l^-1 = sum_n B_n / n! ad^n`
//! truncated after a chosen number of terms, or an exact evaluation through
//! a block matrix exponential.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::algebra::{curlyhat, skew};
use super::coeffs::{inv_jacobian_coeff, one_minus_cos_sq, se3_coupling, theta_minus_sin_cube};
use super::{GroupKind, Jacobian, TangentVector, BRANCH_MARGIN};
use crate::error::{Error, Result};

/// Bernoulli numbers `B_0..B_4` with `B_1 = -1/2`.
const BERNOULLI: [f64; 5] = [1.0, -0.5, 1.0 / 6.0, 0.0, -1.0 / 30.0];

pub const MAX_SERIES_ORDER: usize = 5;

/// How Sim3 left Jacobians are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sim3Jacobian {
    /// First `n` terms of the series, `1 <= n <= 5`.
    Series(usize),
    /// Matrix-exponential evaluation of the full series.
    Exact,
}

impl Default for Sim3Jacobian {
    fn default() -> Self {
        Sim3Jacobian::Series(3)
    }
}

impl Sim3Jacobian {
    pub fn series(order: usize) -> Result<Self> {
        if (1..=MAX_SERIES_ORDER).contains(&order) {
            Ok(Sim3Jacobian::Series(order))
        } else {
            Err(Error::InvalidConfig(format!(
                "Sim3 series order must be in 1..={MAX_SERIES_ORDER}, got {order}"
            )))
        }
    }
}

fn so3_jl(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let ph = skew(phi);
    Matrix3::identity() + ph * one_minus_cos_sq(theta) + ph * ph * theta_minus_sin_cube(theta)
}

fn so3_jl_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let ph = skew(phi);
    Matrix3::identity() - ph * 0.5 + ph * ph * inv_jacobian_coeff(theta)
}

/// Upper-right block `Q` of the SE3 left Jacobian.
fn se3_q(tau: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let (c1, c2, c3) = se3_coupling(phi.norm());
    let p = skew(phi);
    let t = skew(tau);
    let pt = p * t;
    let tp = t * p;
    let ptp = p * t * p;
    let pp = p * p;
    t * 0.5
        + (pt + tp + ptp) * c1
        + (pp * t + t * pp - ptp * 3.0) * c2
        + (ptp * p + pp * t * p) * c3
}

fn embed(m: &mut DMatrix<f64>, row: usize, col: usize, block: &Matrix3<f64>) {
    m.view_mut((row, col), (3, 3)).copy_from(block);
}

fn check_branch(v: &TangentVector) -> Result<()> {
    let theta = v.phi().norm();
    if theta >= std::f64::consts::PI - BRANCH_MARGIN {
        Err(Error::BranchCut { angle: theta })
    } else {
        Ok(())
    }
}

/// `exp` of a square matrix by scaling and squaring with a Taylor kernel.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.amax() * n as f64;
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn sim3_jl_exact(ad: &DMatrix<f64>) -> DMatrix<f64> {
    // exp([[ad, I], [0, 0]]) has (e^ad - I)/ad as its upper-right block.
    let k = ad.nrows();
    let mut block = DMatrix::zeros(2 * k, 2 * k);
    block.view_mut((0, 0), (k, k)).copy_from(ad);
    block.view_mut((0, k), (k, k)).fill_with_identity();
    expm(&block).view((0, k), (k, k)).clone_owned()
}

fn series(ad: &DMatrix<f64>, order: usize, coeff: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let k = ad.nrows();
    let mut power = DMatrix::identity(k, k);
    let mut sum = DMatrix::zeros(k, k);
    for n in 0..order {
        if n > 0 {
            power = &power * ad;
        }
        sum += &power * coeff(n);
    }
    sum
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Left Jacobian with the default Sim3 evaluation.
pub fn left_jacobian(v: &TangentVector) -> Jacobian {
    left_jacobian_with(v, Sim3Jacobian::default())
}

/// Inverse left Jacobian with the default Sim3 evaluation.
pub fn inv_left_jacobian(v: &TangentVector) -> Result<Jacobian> {
    inv_left_jacobian_with(v, Sim3Jacobian::default())
}

pub fn left_jacobian_with(v: &TangentVector, sim3: Sim3Jacobian) -> Jacobian {
    let phi = v.phi();
    let k = v.kind().tangent_dim();
    let mut m = DMatrix::zeros(k, k);
    match v.kind() {
        GroupKind::SO3 => embed(&mut m, 0, 0, &so3_jl(&phi)),
        GroupKind::RxSO3 => {
            embed(&mut m, 0, 0, &so3_jl(&phi));
            m[(3, 3)] = 1.0;
        }
        GroupKind::SE3 => {
            let j = so3_jl(&phi);
            embed(&mut m, 0, 0, &j);
            embed(&mut m, 0, 3, &se3_q(&v.tau(), &phi));
            embed(&mut m, 3, 3, &j);
        }
        GroupKind::Sim3 => {
            let ad = curlyhat(v);
            m = match sim3 {
                Sim3Jacobian::Series(order) => series(&ad, order, |n| 1.0 / factorial(n + 1)),
                Sim3Jacobian::Exact => sim3_jl_exact(&ad),
            };
        }
    }
    m
}

pub fn inv_left_jacobian_with(v: &TangentVector, sim3: Sim3Jacobian) -> Result<Jacobian> {
    check_branch(v)?;
    let phi = v.phi();
    let k = v.kind().tangent_dim();
    let mut m = DMatrix::zeros(k, k);
    match v.kind() {
        GroupKind::SO3 => embed(&mut m, 0, 0, &so3_jl_inv(&phi)),
        GroupKind::RxSO3 => {
            embed(&mut m, 0, 0, &so3_jl_inv(&phi));
            m[(3, 3)] = 1.0;
        }
        GroupKind::SE3 => {
            let j_inv = so3_jl_inv(&phi);
            let q = se3_q(&v.tau(), &phi);
            embed(&mut m, 0, 0, &j_inv);
            embed(&mut m, 0, 3, &(-j_inv * q * j_inv));
            embed(&mut m, 3, 3, &j_inv);
        }
        GroupKind::Sim3 => {
            let ad = curlyhat(v);
            m = match sim3 {
                Sim3Jacobian::Series(order) => series(&ad, order, |n| BERNOULLI[n] / factorial(n)),
                Sim3Jacobian::Exact => sim3_jl_exact(&ad)
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("Sim3 left Jacobian".into()))?,
            };
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::GroupElement;

    fn tv(kind: GroupKind, c: &[f64]) -> TangentVector {
        TangentVector::from_slice(kind, c).unwrap()
    }

    /// Central-difference Jacobian of `Exp` in left coordinates.
    fn fd_exp(v: &TangentVector) -> DMatrix<f64> {
        let k = v.kind().tangent_dim();
        let x = GroupElement::exp(v);
        let h = 1e-6;
        let mut j = DMatrix::zeros(k, k);
        for i in 0..k {
            let mut plus = v.coords().clone();
            let mut minus = v.coords().clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = GroupElement::exp(&TangentVector::new(v.kind(), plus).unwrap())
                .ominus(&x)
                .unwrap();
            let fm = GroupElement::exp(&TangentVector::new(v.kind(), minus).unwrap())
                .ominus(&x)
                .unwrap();
            j.set_column(i, &((fp.coords() - fm.coords()) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn identity_at_zero() {
        for kind in GroupKind::ALL {
            let k = kind.tangent_dim();
            let z = TangentVector::zeros(kind);
            assert_eq!(left_jacobian(&z), DMatrix::identity(k, k));
            assert_eq!(inv_left_jacobian(&z).unwrap(), DMatrix::identity(k, k));
        }
    }

    #[test]
    fn closed_forms_match_finite_differences() {
        let cases: [(GroupKind, &[f64]); 4] = [
            (GroupKind::SO3, &[0.5, 0.0, 0.0]),
            (GroupKind::SO3, &[0.9, -1.4, 0.3]),
            (GroupKind::SE3, &[0.7, -1.2, 0.4, 0.9, -1.4, 0.3]),
            (GroupKind::RxSO3, &[0.9, -1.4, 0.3, -0.6]),
        ];
        for (kind, c) in cases {
            let v = tv(kind, c);
            let fd = fd_exp(&v);
            assert!((left_jacobian(&v) - &fd).amax() < 1e-8, "{kind}");
        }
        let v = tv(GroupKind::Sim3, &[0.7, -1.2, 0.4, 0.9, -1.4, 0.3, 0.5]);
        assert!((left_jacobian_with(&v, Sim3Jacobian::Exact) - fd_exp(&v)).amax() < 1e-8);
    }

    #[test]
    fn inverse_is_inverse() {
        for (kind, c) in [
            (GroupKind::SO3, &[0.3, 0.4, -0.5][..]),
            (GroupKind::SE3, &[0.5, -0.2, 0.1, 0.3, 0.4, -0.5][..]),
            (GroupKind::RxSO3, &[0.3, 0.4, -0.5, 0.8][..]),
        ] {
            let v = tv(kind, c);
            let prod = left_jacobian(&v) * inv_left_jacobian(&v).unwrap();
            let k = kind.tangent_dim();
            assert!((prod - DMatrix::identity(k, k)).amax() < 1e-12);
        }
        let v = tv(GroupKind::Sim3, &[0.5, -0.2, 0.1, 0.3, 0.4, -0.5, 0.2]);
        let prod = left_jacobian_with(&v, Sim3Jacobian::Exact)
            * inv_left_jacobian_with(&v, Sim3Jacobian::Exact).unwrap();
        assert!((prod - DMatrix::identity(7, 7)).amax() < 1e-12);
    }

    #[test]
    fn so3_inverse_matches_bernoulli_series() {
        // B_0..B_10, enough for the n = 10 truncation.
        let bernoulli = [
            1.0,
            -0.5,
            1.0 / 6.0,
            0.0,
            -1.0 / 30.0,
            0.0,
            1.0 / 42.0,
            0.0,
            -1.0 / 30.0,
            0.0,
            5.0 / 66.0,
        ];
        let v = tv(GroupKind::SO3, &[0.3 * 0.6, 0.3 * 0.8, 0.0]);
        let ad = curlyhat(&v);
        let want = series(&ad, 11, |n| bernoulli[n] / factorial(n));
        assert!((inv_left_jacobian(&v).unwrap() - want).amax() < 1e-8);
    }

    #[test]
    fn sim3_series_converges_to_exact() {
        let v = tv(GroupKind::Sim3, &[0.2, -0.1, 0.3, 0.25, -0.3, 0.2, 0.15]);
        let exact = inv_left_jacobian_with(&v, Sim3Jacobian::Exact).unwrap();
        let errs: Vec<f64> = [1, 2, 3]
            .iter()
            .map(|&n| {
                (inv_left_jacobian_with(&v, Sim3Jacobian::Series(n)).unwrap() - &exact).amax()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[2] < 1e-3);
    }

    #[test]
    fn se3_coupling_at_small_angle() {
        let v = tv(GroupKind::SE3, &[1.0, 2.0, 3.0, 1e-9, 0.0, 0.0]);
        let j = left_jacobian(&v);
        let half_tau = skew(&Vector3::new(1.0, 2.0, 3.0)) * 0.5;
        let q = j.view((0, 3), (3, 3)).clone_owned();
        assert!((q - DMatrix::from_iterator(3, 3, half_tau.iter().copied())).amax() < 1e-8);
    }

    #[test]
    fn order_validation() {
        assert!(Sim3Jacobian::series(0).is_err());
        assert!(Sim3Jacobian::series(6).is_err());
        assert_eq!(Sim3Jacobian::series(5).unwrap(), Sim3Jacobian::Series(5));
    }

    #[test]
    fn branch_cut_reported() {
        let v = tv(
            GroupKind::SE3,
            &[0.0, 0.0, 0.0, std::f64::consts::PI, 0.0, 0.0],
        );
        assert!(matches!(
            inv_left_jacobian(&v),
            Err(Error::BranchCut { .. })
        ));
    }
}
