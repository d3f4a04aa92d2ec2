use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::linear::{BlockSystem, LinearSolver};
use crate::error::{Error, Result};
use crate::groups::{GroupElement, TangentVector};

/// One weighted residual term `r^T Omega r` and its Jacobians with respect
/// to the left tangent coordinates of the variables it touches.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub residual: DVector<f64>,
    pub information: DMatrix<f64>,
    pub jacobians: Vec<(usize, DMatrix<f64>)>,
}

impl ResidualBlock {
    pub fn chi2(&self) -> f64 {
        self.residual.dot(&(&self.information * &self.residual))
    }
}

pub trait ResidualProblem {
    fn residual_blocks(&self, vars: &[GroupElement]) -> Result<Vec<ResidualBlock>>;

    fn chi2(&self, vars: &[GroupElement]) -> Result<f64> {
        Ok(self
            .residual_blocks(vars)?
            .iter()
            .map(ResidualBlock::chi2)
            .sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Gauge {
    /// Hold the first variable fixed.
    #[default]
    FixFirst,
    /// Optimize every variable, for problems without gauge freedom.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnConfig {
    pub iterations: usize,
    pub damping: f64,
    pub solver: LinearSolver,
    pub gauge: Gauge,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            iterations: 7,
            damping: 1e-6,
            solver: LinearSolver::SparseBlockCholesky,
            gauge: Gauge::FixFirst,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub chi2: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    MaxIterations,
    /// The update vanished.
    Converged,
    /// The normal equations could not be solved; variables hold the last
    /// successful iterate.
    SingularSystem(String),
}

#[derive(Clone, Debug)]
pub struct GnReport {
    /// Entry 0 is the starting cost; entry `i` follows iteration `i`.
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
}

impl GnReport {
    pub fn final_chi2(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.chi2)
    }
}

/// Step norm below which the iteration stops early.
const MIN_STEP: f64 = 1e-14;

/// Gauss-Newton with updates `X_i <- Exp(delta_i) X_i`.
pub fn gauss_newton<P: ResidualProblem + ?Sized>(
    problem: &P,
    vars: &mut [GroupElement],
    cfg: &GnConfig,
) -> Result<GnReport> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidConfig(
            "Gauss-Newton needs at least one iteration".into(),
        ));
    }
    if !(cfg.damping >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "damping must be non-negative, got {}",
            cfg.damping
        )));
    }
    let start = Instant::now();
    let first_free = match cfg.gauge {
        Gauge::FixFirst => 1,
        Gauge::Free => 0,
    };
    let dims: Vec<usize> = vars[first_free.min(vars.len())..]
        .iter()
        .map(|x| x.kind().tangent_dim())
        .collect();

    let mut blocks = problem.residual_blocks(vars)?;
    let mut chi2 = total_chi2(&blocks)?;
    let mut trace = vec![IterationRecord {
        iteration: 0,
        chi2,
        elapsed_ms: 0.0,
    }];
    let mut termination = Termination::MaxIterations;

    for iteration in 1..=cfg.iterations {
        if dims.is_empty() {
            termination = Termination::Converged;
            break;
        }
        let mut system = BlockSystem::new(dims.clone());
        for block in &blocks {
            let weighted: Vec<(usize, DMatrix<f64>)> = block
                .jacobians
                .iter()
                .filter(|(v, _)| *v >= first_free)
                .map(|(v, j)| (v - first_free, j.tr_mul(&block.information)))
                .collect();
            for (a, (va, jt_w)) in weighted.iter().enumerate() {
                system.add_rhs(*va, &-(jt_w * &block.residual));
                for (vb, jb) in block
                    .jacobians
                    .iter()
                    .filter(|(v, _)| *v >= first_free)
                    .skip(a)
                {
                    system.add_block(*va, vb - first_free, &(jt_w * jb));
                }
            }
        }
        system.add_diagonal(cfg.damping);

        let delta = match system.solve(cfg.solver) {
            Ok(d) => d,
            Err(Error::Singular(msg)) => {
                log::warn!("Gauss-Newton iteration {iteration}: {msg}");
                termination = Termination::SingularSystem(msg);
                break;
            }
            Err(e) => return Err(e),
        };
        if !delta.iter().all(|d| d.is_finite()) {
            termination = Termination::SingularSystem("non-finite update".into());
            break;
        }

        let mut offset = 0;
        for x in vars[first_free..].iter_mut() {
            let k = x.kind().tangent_dim();
            let step = TangentVector::new(x.kind(), delta.rows(offset, k).into_owned())?;
            *x = x.oplus(&step)?;
            offset += k;
        }
        blocks = problem.residual_blocks(vars)?;
        chi2 = total_chi2(&blocks)?;
        trace.push(IterationRecord {
            iteration,
            chi2,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if delta.amax() < MIN_STEP {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(GnReport { trace, termination })
}

fn total_chi2(blocks: &[ResidualBlock]) -> Result<f64> {
    let chi2: f64 = blocks.iter().map(ResidualBlock::chi2).sum();
    if chi2.is_finite() {
        Ok(chi2)
    } else {
        Err(Error::NonFinite("residual".into()))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::groups::{inv_left_jacobian, GroupKind};
    use crate::numcheck::sample_element;

    /// `r = X (-) target` for a single variable.
    struct Prior {
        target: GroupElement,
    }

    impl ResidualProblem for Prior {
        fn residual_blocks(&self, vars: &[GroupElement]) -> Result<Vec<ResidualBlock>> {
            let r = vars[0].ominus(&self.target)?;
            let j = inv_left_jacobian(&r)?;
            let k = r.kind().tangent_dim();
            Ok(vec![ResidualBlock {
                residual: r.into_coords(),
                information: DMatrix::identity(k, k),
                jacobians: vec![(0, j)],
            }])
        }
    }

    #[test]
    fn single_variable_converges_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = sample_element(GroupKind::SE3, &mut rng);
        let start = target
            .oplus(
                &TangentVector::from_slice(GroupKind::SE3, &[0.5, -0.3, 0.2, 0.4, 0.3, -0.6])
                    .unwrap(),
            )
            .unwrap();
        let mut vars = vec![start];
        let cfg = GnConfig {
            iterations: 3,
            gauge: Gauge::Free,
            damping: 0.0,
            ..Default::default()
        };
        let report = gauss_newton(
            &Prior {
                target: target.clone(),
            },
            &mut vars,
            &cfg,
        )
        .unwrap();
        assert!(vars[0].geodesic_distance(&target).unwrap() < 1e-10);
        assert!(report.trace.windows(2).all(|w| w[1].chi2 <= w[0].chi2));
    }

    #[test]
    fn zero_residual_keeps_variables() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let target = sample_element(GroupKind::Sim3, &mut rng);
        let mut vars = vec![target.clone()];
        let cfg = GnConfig {
            gauge: Gauge::Free,
            ..Default::default()
        };
        let report = gauss_newton(
            &Prior {
                target: target.clone(),
            },
            &mut vars,
            &cfg,
        )
        .unwrap();
        assert!(report.trace[0].chi2 < 1e-28);
        assert!(vars[0].matrix_distance(&target) < 1e-15);
        assert_eq!(report.termination, Termination::Converged);
    }

    #[test]
    fn singular_system_is_reported_not_raised() {
        struct Flat;
        impl ResidualProblem for Flat {
            fn residual_blocks(&self, _: &[GroupElement]) -> Result<Vec<ResidualBlock>> {
                Ok(vec![ResidualBlock {
                    residual: DVector::from_element(1, 1.0),
                    information: DMatrix::identity(1, 1),
                    jacobians: vec![(0, DMatrix::zeros(1, 3))],
                }])
            }
        }
        let mut vars = vec![GroupElement::identity(GroupKind::SO3)];
        let cfg = GnConfig {
            gauge: Gauge::Free,
            damping: 0.0,
            ..Default::default()
        };
        let report = gauss_newton(&Flat, &mut vars, &cfg).unwrap();
        assert!(matches!(report.termination, Termination::SingularSystem(_)));
        assert_eq!(vars[0], GroupElement::identity(GroupKind::SO3));
    }

    #[test]
    fn rejects_zero_iterations() {
        let mut vars = vec![GroupElement::identity(GroupKind::SO3)];
        let cfg = GnConfig {
            iterations: 0,
            ..Default::default()
        };
        let target = vars[0].clone();
        assert!(gauss_newton(&Prior { target }, &mut vars, &cfg).is_err());
    }
}
