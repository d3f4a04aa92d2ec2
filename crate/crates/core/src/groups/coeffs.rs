//! Scalar coefficient functions with removable singularities at zero.
//!
//! Each function switches to a truncated Taylor series below its threshold.
//! The closed forms are written so that their rounding error, once multiplied
//! by the matching power of `phi^`, stays at machine-epsilon level.

use super::SMALL_ANGLE;

/// Threshold for the SE3 Jacobian coupling coefficients, whose closed forms
/// cancel to O(theta^4) and O(theta^5).
const SMALL_COUPLING: f64 = 2e-2;

/// `(cos(theta/2), sin(theta/2)/theta)` for the quaternion exponential.
pub(crate) fn half_angle(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 8.0, 0.5 - t2 / 48.0)
    } else {
        let half = 0.5 * theta;
        (half.cos(), half.sin() / theta)
    }
}

/// `(1 - cos(theta)) / theta^2`
pub(crate) fn one_minus_cos_sq(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        0.5 - theta * theta / 24.0
    } else {
        let s = (0.5 * theta).sin();
        2.0 * s * s / (theta * theta)
    }
}

/// `(theta - sin(theta)) / theta^3`
pub(crate) fn theta_minus_sin_cube(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        1.0 / 6.0 - theta * theta / 120.0
    } else {
        (theta - theta.sin()) / (theta * theta * theta)
    }
}

/// `(1 - (theta/2) cot(theta/2)) / theta^2`, the `(phi^)^2` coefficient of
/// the inverse SO3 left Jacobian.
pub(crate) fn inv_jacobian_coeff(theta: f64) -> f64 {
    if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / (theta * theta)
    }
}

/// Coefficients of the SE3 left-Jacobian coupling block
/// `Q = 1/2 tau^ + c1 (..) + c2 (..) + c3 (..)`.
pub(crate) fn se3_coupling(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_COUPLING {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0,
            1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0,
            1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let t4 = t2 * t2;
        let half_sin = 2.0 * (0.5 * theta).sin();
        (
            (theta - s) / (t2 * theta),
            (theta - half_sin) * (theta + half_sin) / (2.0 * t4),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t4 * theta),
        )
    }
}

/// `integral_0^1 s^k e^(sigma s) ds`
pub(crate) fn exp_moment(k: u32, sigma: f64) -> f64 {
    if sigma.abs() < 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 0..40u32 {
            let contrib = term / f64::from(n + k + 1);
            sum += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
            term *= sigma / f64::from(n + 1);
        }
        sum
    } else {
        let e = sigma.exp();
        let mut m = sigma.exp_m1() / sigma;
        for j in 1..=k {
            m = (e - f64::from(j) * m) / sigma;
        }
        m
    }
}

/// Cutoff below which both W parameters are handled by double series.
const W_SERIES_LIMIT: f64 = 1.0;

/// `integral_0^1 s^k sin(theta s) / theta ds`; closed forms need `k <= 2`.
fn sin_moment(k: u32, theta: f64) -> f64 {
    if theta < W_SERIES_LIMIT {
        let t2 = theta * theta;
        let mut term = 1.0; // (-1)^n theta^(2n) / (2n+1)!
        let mut sum = 0.0;
        for n in 0..30u32 {
            let contrib = term / f64::from(2 * n + k + 2);
            sum += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
            term *= -t2 / f64::from((2 * n + 2) * (2 * n + 3));
        }
        sum
    } else {
        let (sn, cs) = theta.sin_cos();
        let t2 = theta * theta;
        match k {
            0 => one_minus_cos_sq(theta),
            1 => (sn - theta * cs) / (t2 * theta),
            _ => ((2.0 - t2) * cs + 2.0 * theta * sn - 2.0) / (t2 * t2),
        }
    }
}

/// `integral_0^1 s^k (1 - cos(theta s)) / theta^2 ds`; closed forms need `k <= 2`.
fn cos_moment(k: u32, theta: f64) -> f64 {
    if theta < W_SERIES_LIMIT {
        let t2 = theta * theta;
        let mut term = 0.5; // (-1)^(n+1) theta^(2n-2) / (2n)!
        let mut sum = 0.0;
        for n in 1..30u32 {
            let contrib = term / f64::from(2 * n + k + 1);
            sum += contrib;
            if contrib.abs() < 1e-18 {
                break;
            }
            term *= -t2 / f64::from((2 * n + 1) * (2 * n + 2));
        }
        sum
    } else {
        let (sn, cs) = theta.sin_cos();
        let t2 = theta * theta;
        match k {
            0 => theta_minus_sin_cube(theta),
            1 => (0.5 * t2 + 1.0 - cs - theta * sn) / (t2 * t2),
            _ => (1.0 / 3.0 - ((t2 - 2.0) * sn + 2.0 * theta * cs) / (t2 * theta)) / t2,
        }
    }
}

/// `sum_k sigma^k / k! * moment(k)`, for `|sigma| < 1`.
fn sigma_series(sigma: f64, moment: impl Fn(u32) -> f64) -> f64 {
    let mut weight = 1.0;
    let mut sum = 0.0;
    for k in 0..40u32 {
        let contrib = weight * moment(k);
        sum += contrib;
        if contrib.abs() < 1e-18 {
            break;
        }
        weight *= sigma / f64::from(k + 1);
    }
    sum
}

/// Coefficients `(a, b, c)` of `W = a I + b phi^ + c (phi^)^2`, the matrix
/// mapping tau to the translation of a Sim3 exponential.
///
/// `W = integral_0^1 e^(sigma s) Exp(s phi) ds`, so `a`, `b`, `c` are the
/// exponentially weighted moments of `1`, `sin(theta s)/theta` and
/// `(1 - cos(theta s))/theta^2`. Below 1e-4 in either variable a second-order
/// expansion in that variable is used. With neither small, the closed form
/// cancels badly when both are still below one, so that region is summed as a
/// double series instead.
pub(crate) fn sim3_w(theta: f64, sigma: f64) -> (f64, f64, f64) {
    let small_theta = theta < SMALL_ANGLE;
    let small_sigma = sigma.abs() < SMALL_ANGLE;
    let (s2, t2) = (sigma * sigma, theta * theta);
    match (small_theta, small_sigma) {
        (true, true) => (
            1.0 + sigma / 2.0 + s2 / 6.0,
            0.5 + sigma / 3.0 + s2 / 8.0 - t2 / 24.0,
            1.0 / 6.0 + sigma / 8.0 + s2 / 20.0 - t2 / 120.0,
        ),
        (true, false) => (
            sigma.exp_m1() / sigma,
            exp_moment(1, sigma) - t2 * exp_moment(3, sigma) / 6.0,
            exp_moment(2, sigma) / 2.0 - t2 * exp_moment(4, sigma) / 24.0,
        ),
        (false, true) => (
            1.0 + sigma / 2.0 + s2 / 6.0,
            sin_moment(0, theta) + sigma * sin_moment(1, theta) + 0.5 * s2 * sin_moment(2, theta),
            cos_moment(0, theta) + sigma * cos_moment(1, theta) + 0.5 * s2 * cos_moment(2, theta),
        ),
        (false, false) if theta < W_SERIES_LIMIT && sigma.abs() < W_SERIES_LIMIT => (
            sigma.exp_m1() / sigma,
            sigma_series(sigma, |k| sin_moment(k, theta)),
            sigma_series(sigma, |k| cos_moment(k, theta)),
        ),
        (false, false) => {
            let e = sigma.exp();
            let em1 = sigma.exp_m1();
            let sinc = theta.sin() / theta;
            let omc = one_minus_cos_sq(theta);
            let denom = s2 + t2;
            (
                em1 / sigma,
                (sigma * e * sinc - em1 + e * t2 * omc) / denom,
                (em1 + s2 * e * omc - sigma * e * sinc) / (sigma * denom),
            )
        }
    }
}
