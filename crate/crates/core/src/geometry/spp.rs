//! Single point positioning linearization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{EcefPosition, LinearSystem};
use crate::estimator::wls_solve;
use crate::{Error, Result};

/// Carrier pair for the ionosphere-free combination, in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonoFreeFrequencies {
    pub f1_mhz: f64,
    pub f2_mhz: f64,
}

impl IonoFreeFrequencies {
    pub const GPS_L1_L5: Self = Self {
        f1_mhz: 1575.42,
        f2_mhz: 1176.45,
    };

    pub fn gamma(&self) -> f64 {
        (self.f1_mhz / self.f2_mhz).powi(2)
    }
}

impl Default for IonoFreeFrequencies {
    fn default() -> Self {
        Self::GPS_L1_L5
    }
}

/// L1/L5 ionosphere-free pseudorange.
pub fn iono_free_combine(rho_l1: f64, rho_l5: f64) -> Result<f64> {
    iono_free_combine_with(rho_l1, rho_l5, IonoFreeFrequencies::GPS_L1_L5)
}

pub fn iono_free_combine_with(rho_1: f64, rho_2: f64, freqs: IonoFreeFrequencies) -> Result<f64> {
    if !(rho_1.is_finite() && rho_2.is_finite()) {
        return Err(Error::invalid("pseudorange must be finite"));
    }
    let gamma = freqs.gamma();
    Ok((gamma * rho_1 - rho_2) / (gamma - 1.0))
}

/// Linearizes the pseudorange model about `x0 = [ux, uy, uz, ut]`.
///
/// Row `i` of `G` is `[a_i1, a_i2, a_i3, 1]`, the unit line of sight from the
/// linearization point to satellite `i` followed by the clock column, and
/// `y_i = rho_i0 - rho_i` where `rho_i0` is the predicted pseudorange at `x0`.
/// The returned system carries unit weights.
pub fn linearize_spp(
    sats: &[EcefPosition],
    measurements: &[f64],
    x0: &[f64; 4],
) -> Result<LinearSystem> {
    let n = sats.len();
    if n == 0 {
        return Err(Error::invalid("no satellites"));
    }
    if measurements.len() != n {
        return Err(Error::invalid(format!(
            "{} measurements for {n} satellites",
            measurements.len()
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("linearization point must be finite"));
    }
    let user = EcefPosition::new(x0[0], x0[1], x0[2]);
    let mut g = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    for (i, (sat, rho)) in sats.iter().zip(measurements).enumerate() {
        let los = sat.to_vector() - user.to_vector();
        let range = los.norm();
        if !(range > 1e-3) {
            return Err(Error::DegenerateGeometry(format!(
                "satellite {i} coincides with the linearization point"
            )));
        }
        let unit = los / range;
        g[(i, 0)] = unit.x;
        g[(i, 1)] = unit.y;
        g[(i, 2)] = unit.z;
        g[(i, 3)] = 1.0;
        y[i] = range + x0[3] - rho;
    }
    LinearSystem::with_point(
        y,
        g,
        DVector::from_element(n, 1.0),
        DVector::from_column_slice(x0),
    )
}

/// Iterates the linearization point to convergence with Gauss-Newton steps.
///
/// The state correction `x` solves `y = G x` with `x = [du, -dut]`, so the clock
/// update enters with a flipped sign. Stops once the step falls below 0.1 mm or
/// after 10 passes.
pub fn solve_position(
    sats: &[EcefPosition],
    measurements: &[f64],
    weights: &DVector<f64>,
    initial: [f64; 4],
) -> Result<[f64; 4]> {
    const MAX_PASSES: usize = 10;
    const STEP_TOL: f64 = 1e-4;
    let mut x0 = initial;
    for _ in 0..MAX_PASSES {
        let sys = linearize_spp(sats, measurements, &x0)?.with_weights(weights.clone())?;
        let sol = wls_solve(&sys)?;
        let dx = sol.state();
        x0[0] += dx[0];
        x0[1] += dx[1];
        x0[2] += dx[2];
        x0[3] -= dx[3];
        if dx.norm() < STEP_TOL {
            return Ok(x0);
        }
    }
    Ok(x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_aligned_row() {
        let r_earth = 6.371e6;
        let sats = [
            EcefPosition::new(2.0e7 + r_earth, 0.0, 0.0),
            EcefPosition::new(r_earth, 2.0e7, 0.0),
            EcefPosition::new(r_earth, 0.0, 2.0e7),
            EcefPosition::new(r_earth, -2.0e7, 0.0),
        ];
        let sys = linearize_spp(&sats, &[2.0e7; 4], &[r_earth, 0.0, 0.0, 0.0]).unwrap();
        let row: Vec<f64> = sys.g().row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(sys.y()[0], 0.0);
    }

    fn random_sats(rng: &mut ChaCha8Rng, n: usize) -> Vec<EcefPosition> {
        (0..n)
            .map(|_| {
                let v = nalgebra::Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.2..1.0),
                )
                .normalize()
                    * 2.66e7;
                EcefPosition::from_vector(&v)
            })
            .collect()
    }

    #[test]
    fn exact_ranges_at_truth_give_zero_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sats = random_sats(&mut rng, 7);
        let truth = [1.0e3, -2.0e3, 6.37e6, 35.0];
        let rho: Vec<f64> = sats
            .iter()
            .map(|s| s.distance(EcefPosition::new(truth[0], truth[1], truth[2])) + truth[3])
            .collect();
        let sys = linearize_spp(&sats, &rho, &truth).unwrap();
        assert!(sys.y().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn direction_cosines_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sats = random_sats(&mut rng, 6);
        let sys = linearize_spp(&sats, &[2.2e7; 6], &[0.0, 0.0, 6.37e6, 0.0]).unwrap();
        for i in 0..6 {
            let g = sys.g();
            let norm = (g[(i, 0)].powi(2) + g[(i, 1)].powi(2) + g[(i, 2)].powi(2)).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert_eq!(g[(i, 3)], 1.0);
        }
    }

    #[test]
    fn coincident_satellite_is_degenerate() {
        let sat = EcefPosition::new(1.0, 2.0, 3.0);
        let r = linearize_spp(&[sat], &[0.0], &[1.0, 2.0, 3.0, 0.0]);
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn iono_free_examples() {
        assert!((iono_free_combine(100.0, 100.0).unwrap() - 100.0).abs() < 1e-9);
        // gamma = (154/115)^2 = 23716/13225, gamma/(gamma-1) = 23716/10491
        let expected = 100.0 * 23716.0 / 10491.0;
        let got = iono_free_combine(100.0, 0.0).unwrap();
        assert!((got - expected).abs() < 1e-9, "{got}");
        assert!((got - 226.06).abs() < 0.01);
        assert!(iono_free_combine(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn iono_free_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a: f64 = rng.random_range(-1e7..1e7);
            let b: f64 = rng.random_range(-1e7..1e7);
            let c: f64 = rng.random_range(-1e3..1e3);
            let lhs = iono_free_combine(a + c, b + c).unwrap();
            let rhs = iono_free_combine(a, b).unwrap() + c;
            assert!((lhs - rhs).abs() < 1e-6 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn gauss_newton_recovers_truth_from_earth_centre() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sats = random_sats(&mut rng, 8);
        let truth = [3.0e5, -1.0e5, 6.36e6, 1234.5];
        let p = EcefPosition::new(truth[0], truth[1], truth[2]);
        let rho: Vec<f64> = sats.iter().map(|s| s.distance(p) + truth[3]).collect();
        let x = solve_position(&sats, &rho, &DVector::from_element(8, 1.0), [0.0; 4]).unwrap();
        for i in 0..4 {
            assert!(
                (x[i] - truth[i]).abs() < 1e-4,
                "{i}: {} vs {}",
                x[i],
                truth[i]
            );
        }
    }
}
