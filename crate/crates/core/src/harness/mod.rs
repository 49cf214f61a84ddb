//! Experiment drivers: the worldwide detection-rate simulation, replay of
//! pseudorange scenarios with an injected step fault, and the detector timing
//! benchmark.

mod bench;
mod replay;
mod world;

pub use bench::{bench_detectors, write_bench_csv, BenchConfig, BenchReport, BenchRow};
pub use replay::{
    elevation_scale, generate_scenario, generate_training_residuals, read_scenario_csv, run_replay,
    write_scenario_csv, write_timeline_csv, FaultWindow, ReplayReport, ReplayScenario,
    ScenarioConfig, TimelineRow,
};
pub use world::{
    run_world_sim, AgreementSummary, DetectionRateGrid, LocationRate, PairResult, PairSummary,
    WorldSimConfig, WorldSimReport,
};

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dist::NigParams;
use crate::overbound::{fit_model, EmpiricalSample, FitMethod, OverboundModel};
use crate::{Error, Result};

/// True distribution of the simulated measurement errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    Nig { delta0: f64 },
    Gaussian { sigma: f64 },
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self::Nig { delta0: 0.65 }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Nig { delta0 } => NigParams::new(delta0).map(|_| ()),
            Self::Gaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            Self::Gaussian { sigma } => Err(Error::invalid(format!(
                "sigma must be positive, got {sigma}"
            ))),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Nig { delta0 } => NigParams::new(delta0).expect("validated").draw(rng),
            Self::Gaussian { sigma } => sigma * rng.sample::<f64, _>(rand_distr::StandardNormal),
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| self.draw(&mut rng)).collect())
    }
}

/// Overbound of the error model. A Gaussian error is its own Gaussian
/// overbound; everything else is fitted to `samples` draws.
pub fn nominal_model(
    error: &ErrorModel,
    method: FitMethod,
    samples: usize,
    seed: u64,
) -> Result<OverboundModel> {
    if let (ErrorModel::Gaussian { sigma }, FitMethod::Gaussian) = (error, method) {
        error.validate()?;
        return Ok(OverboundModel::Gaussian { sigma: *sigma });
    }
    let sample = EmpiricalSample::new(error.sample(samples, seed)?)?;
    fit_model(&sample, method)
}

/// `y` with `bias` added to element `k`.
pub fn inject_fault(y: &DVector<f64>, k: usize, bias: f64) -> Result<DVector<f64>> {
    if k >= y.len() {
        return Err(Error::invalid(format!(
            "fault index {k} out of range for {} measurements",
            y.len()
        )));
    }
    let mut out = y.clone();
    out[k] += bias;
    Ok(out)
}

/// Reads a JSON configuration; missing fields take their defaults.
pub fn load_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inject_fault_examples() {
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(inject_fault(&y, 2, 0.0).unwrap(), y);
        let f = inject_fault(&y, 2, 10.0).unwrap();
        for i in 0..5 {
            assert_eq!(f[i] - y[i], if i == 2 { 10.0 } else { 0.0 });
        }
        assert_eq!(inject_fault(&f, 2, -10.0).unwrap(), y);
        assert!(inject_fault(&y, 5, 1.0).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn gaussian_error_is_its_own_overbound() {
        let m = nominal_model(
            &ErrorModel::Gaussian { sigma: 2.0 },
            FitMethod::Gaussian,
            0,
            0,
        )
        .unwrap();
        assert_eq!(m, OverboundModel::Gaussian { sigma: 2.0 });
        assert!(ErrorModel::Gaussian { sigma: 0.0 }.validate().is_err());
        assert!(ErrorModel::Nig { delta0: -1.0 }.sample(10, 0).is_err());
    }

    #[test]
    fn error_model_json() {
        let e: ErrorModel = serde_json::from_str(r#"{"kind": "nig", "delta0": 0.65}"#).unwrap();
        assert_eq!(e, ErrorModel::Nig { delta0: 0.65 });
    }
}
