//! Jackknife residuals and solution separations.
//!
//! Both statistics are linear in the measurement error vector. Each one is
//! returned together with its coefficient vector so that the nominal
//! distribution can be formed from the same linear form the statistic came from.

use nalgebra::{DMatrix, DVector};

use crate::estimator::{normal_factor, SubsetSolution, WlsSolution};
use crate::geometry::LinearSystem;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeResidual {
    pub k: usize,
    /// `t_k = y_k - g_k x^(k)`, meters.
    pub statistic: f64,
    /// Row `k` of `I - G S^(k)`; `t_k = coefficients . e`.
    pub coefficients: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationVector {
    pub k: usize,
    /// `d_k = x - x^(k)`.
    pub separation: DVector<f64>,
    /// `S - S^(k)`; row `q` maps the error vector onto `d_k[q]`.
    pub coefficients: DMatrix<f64>,
}

pub fn jackknife_residual(
    sys: &LinearSystem,
    sub: &SubsetSolution,
    k: usize,
) -> Result<JackknifeResidual> {
    if sub.excluded() != k {
        return Err(Error::invalid(format!(
            "subset solution excludes {} but residual requested for {k}",
            sub.excluded()
        )));
    }
    let g_k = sys.row(k);
    let statistic = sys.y()[k] - (&g_k * sub.state())[0];
    let mut coefficients = -(g_k * sub.solution_matrix()).transpose();
    // column k of S^(k) is zero, so the own-error weight is exactly one
    coefficients[k] = 1.0;
    Ok(JackknifeResidual {
        k,
        statistic,
        coefficients,
    })
}

pub fn separation_vector(full: &WlsSolution, sub: &SubsetSolution) -> SeparationVector {
    SeparationVector {
        k: sub.excluded(),
        separation: full.state() - sub.state(),
        coefficients: full.solution_matrix() - sub.solution_matrix(),
    }
}

/// `dx/dy_k = (G^T W G)^-1 g_k^T W_kk`.
pub fn solution_derivative(sys: &LinearSystem, k: usize) -> Result<DVector<f64>> {
    if k >= sys.n() {
        return Err(Error::invalid(format!("index {k} out of range")));
    }
    let chol = normal_factor(sys)?;
    let rhs: DVector<f64> = sys.row(k).transpose() * sys.weights()[k];
    Ok(chol.solve(&rhs))
}

/// Solution separation recovered from the jackknife residual: the solution
/// derivative scaled by `t_k`.
pub fn ss_from_jackknife(sys: &LinearSystem, k: usize, t_k: f64) -> Result<DVector<f64>> {
    Ok(solution_derivative(sys, k)? * t_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{subset_solution, wls_solve};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones_example() -> LinearSystem {
        LinearSystem::new(
            DVector::from_column_slice(&[1.0, 2.0, 3.0]),
            DMatrix::from_element(3, 1, 1.0),
            DVector::from_element(3, 1.0),
        )
        .unwrap()
    }

    fn random_geometry(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 4, |_, j| {
            if j == 3 {
                1.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
    }

    #[test]
    fn ones_column_values() {
        let sys = ones_example();
        let sub = subset_solution(&sys, 2).unwrap();
        let jk = jackknife_residual(&sys, &sub, 2).unwrap();
        assert!((jk.statistic - 1.5).abs() < 1e-14);
        let full = wls_solve(&sys).unwrap();
        let ss = separation_vector(&full, &sub);
        assert!((ss.separation[0] - 0.5).abs() < 1e-14);
        let mapped = ss_from_jackknife(&sys, 2, jk.statistic).unwrap();
        assert!((mapped[0] - 0.5).abs() < 1e-14);
        assert!((solution_derivative(&sys, 2).unwrap()[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!(jackknife_residual(&sys, &sub, 1).is_err());
    }

    #[test]
    fn coefficients_reproduce_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(5..12);
            let g = random_geometry(&mut rng, n);
            let x = DVector::from_fn(4, |_, _| rng.random_range(-100.0..100.0));
            let e = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let w = DVector::from_fn(n, |_, _| rng.random_range(0.1..4.0));
            let sys = LinearSystem::new(&g * &x + &e, g, w).unwrap();
            let full = wls_solve(&sys).unwrap();
            for k in 0..n {
                let sub = subset_solution(&sys, k).unwrap();
                let jk = jackknife_residual(&sys, &sub, k).unwrap();
                assert_eq!(jk.coefficients[k], 1.0);
                let diff = (jk.coefficients.dot(&e) - jk.statistic).abs();
                assert!(diff < 1e-10 * jk.statistic.abs().max(1.0));
                let ss = separation_vector(&full, &sub);
                let via_coeffs = &ss.coefficients * &e;
                assert!(
                    (via_coeffs - &ss.separation).amax() < 1e-10 * ss.separation.amax().max(1.0)
                );
                // normal-equation form of the mapping
                let lhs = crate::estimator::normal_matrix(sys.g(), sys.weights()) * &ss.separation;
                let rhs = sys.row(k).transpose() * (sys.weights()[k] * jk.statistic);
                assert!((&lhs - &rhs).amax() < 1e-9 * rhs.amax().max(1.0));
            }
        }
    }

    #[test]
    fn residual_is_state_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 9;
        let g = random_geometry(&mut rng, n);
        let e = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let w = DVector::from_element(n, 1.0);
        let stats = |x: &DVector<f64>| -> Vec<f64> {
            let sys = LinearSystem::new(&g * x + &e, g.clone(), w.clone()).unwrap();
            (0..n)
                .map(|k| {
                    jackknife_residual(&sys, &subset_solution(&sys, k).unwrap(), k)
                        .unwrap()
                        .statistic
                })
                .collect()
        };
        let a = stats(&DVector::zeros(4));
        let b = stats(&DVector::from_column_slice(&[120.0, -40.0, 75.0, 3.0e3]));
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_statistics_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = random_geometry(&mut rng, 7);
        let x = DVector::from_column_slice(&[3.0, 1.0, -2.0, 10.0]);
        let sys = LinearSystem::new(&g * &x, g, DVector::from_element(7, 2.0)).unwrap();
        let full = wls_solve(&sys).unwrap();
        for k in 0..7 {
            let sub = subset_solution(&sys, k).unwrap();
            assert!(jackknife_residual(&sys, &sub, k).unwrap().statistic.abs() < 1e-10);
            assert!(separation_vector(&full, &sub).separation.amax() < 1e-10);
        }
        assert_eq!(ss_from_jackknife(&sys, 0, 0.0).unwrap().amax(), 0.0);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let n = rng.random_range(5..12);
            let g = random_geometry(&mut rng, n);
            let y = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
            let w = DVector::from_fn(n, |_, _| rng.random_range(0.1..4.0));
            let sys = LinearSystem::new(y.clone(), g, w.clone()).unwrap();
            for k in 0..n {
                let d = solution_derivative(&sys, k).unwrap();
                let delta = 1e-3;
                let mut up = y.clone();
                up[k] += delta;
                let mut down = y.clone();
                down[k] -= delta;
                let xu = wls_solve(&sys.with_observations(up).unwrap()).unwrap();
                let xd = wls_solve(&sys.with_observations(down).unwrap()).unwrap();
                let fd = (xu.state() - xd.state()) / (2.0 * delta);
                for q in 0..4 {
                    let scale = d[q].abs().max(1e-6);
                    assert!((fd[q] - d[q]).abs() / scale < 1e-6, "{} vs {}", fd[q], d[q]);
                }
                let scaled = sys.with_weights(&w * 7.5).unwrap();
                let d2 = solution_derivative(&scaled, k).unwrap();
                assert!((d2 - &d).amax() < 1e-12 * (1.0 + d.amax()));
            }
        }
    }
}
