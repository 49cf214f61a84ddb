//! Fault detection: the per-subset origin test, the Bonferroni-corrected
//! jackknife detector, and the solution-separation detector.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dist::{linear_combination_pdf_with, std_normal_quantile, GridConfig, GriddedPdf};
use crate::estimator::{subset_solution, wls_solve};
use crate::geometry::{linearize_spp, solve_position, EcefPosition, EpochRecord, LinearSystem};
use crate::overbound::{ModelBank, OverboundModel};
use crate::residual::{jackknife_residual, separation_vector};
use crate::{Error, Result};

/// Satellites needed for single point positioning with a fault test.
pub const MIN_SPP_SATELLITES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Jackknife,
    SolutionSeparation,
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jk" | "jackknife" => Ok(Self::Jackknife),
            "ss" | "solution_separation" | "solution-separation" => Ok(Self::SolutionSeparation),
            other => Err(Error::invalid(format!("unknown detector {other:?}"))),
        }
    }
}

/// How the nominal distribution of each statistic is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    /// Closed form when every model is Gaussian, gridded convolution otherwise.
    #[default]
    Auto,
    /// Always convolve gridded densities.
    Gridded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Family-wise false alarm budget.
    pub tau: f64,
    pub kind: DetectorKind,
    pub threshold: ThresholdMethod,
    pub grid: GridConfig,
    pub elevation_mask_deg: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            kind: DetectorKind::Jackknife,
            threshold: ThresholdMethod::Auto,
            grid: GridConfig::default(),
            elevation_mask_deg: 5.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        self.grid.validate()
    }

    pub fn with_kind(self, kind: DetectorKind) -> Self {
        Self { kind, ..self }
    }
}

/// An overbound model together with its gridded density.
#[derive(Debug, Clone)]
pub struct NominalError {
    model: OverboundModel,
    grid: Arc<GriddedPdf>,
}

impl NominalError {
    pub fn new(model: OverboundModel, grid: &GridConfig) -> Result<Self> {
        let pdf = model.to_gridded_pdf(grid)?;
        Ok(Self {
            model,
            grid: Arc::new(pdf),
        })
    }

    pub fn model(&self) -> &OverboundModel {
        &self.model
    }

    pub fn grid(&self) -> &GriddedPdf {
        &self.grid
    }

    pub fn variance(&self) -> f64 {
        self.model.variance()
    }
}

/// Nominal errors for every bin of a model bank, gridded once.
#[derive(Debug, Clone)]
pub struct NominalBank {
    bank: ModelBank,
    errors: Vec<NominalError>,
}

impl NominalBank {
    pub fn new(bank: ModelBank, grid: &GridConfig) -> Result<Self> {
        let errors = bank
            .models
            .iter()
            .map(|b| NominalError::new(b.model, grid))
            .collect::<Result<_>>()?;
        Ok(Self { bank, errors })
    }

    pub fn uniform(model: OverboundModel, grid: &GridConfig) -> Result<Self> {
        let method = match model {
            OverboundModel::Gaussian { .. } => crate::overbound::FitMethod::Gaussian,
            OverboundModel::Pgo(_) => crate::overbound::FitMethod::Pgo,
        };
        Self::new(ModelBank::uniform(method, model), grid)
    }

    pub fn for_elevation(&self, elevation_deg: f64) -> &NominalError {
        &self.errors[self.bank.bin_index(elevation_deg)]
    }

    pub fn bank(&self) -> &ModelBank {
        &self.bank
    }
}

/// Distribution of a statistic under the fault-free hypothesis.
#[derive(Debug, Clone, Copy)]
pub enum Nominal<'a> {
    /// Zero-mean Gaussian with this variance.
    Variance(f64),
    Grid(&'a GriddedPdf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginTest {
    pub threshold: f64,
    pub rejected: bool,
}

/// Two-sided test of `statistic` at level `alpha`: the threshold is the
/// `1 - alpha / 2` quantile of the nominal distribution and the hypothesis is
/// rejected only when `|statistic|` strictly exceeds it.
pub fn origin_test(statistic: f64, nominal: Nominal<'_>, alpha: f64) -> Result<OriginTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let threshold = match nominal {
        Nominal::Variance(v) if v >= 0.0 => v.sqrt() * std_normal_quantile(1.0 - 0.5 * alpha),
        Nominal::Variance(v) => return Err(Error::invalid(format!("negative variance {v}"))),
        Nominal::Grid(f) => f.quantile(1.0 - 0.5 * alpha)?,
    };
    Ok(OriginTest {
        threshold,
        rejected: statistic.abs() > threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    FaultClaimed,
    NoFault,
    InsufficientGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTest {
    pub k: usize,
    /// State component for solution-separation tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub statistic: f64,
    pub threshold: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSubset {
    pub k: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub epoch: f64,
    pub kind: DetectorKind,
    pub decision: Decision,
    pub tests: Vec<SubsetTest>,
    /// Measurement indices whose test rejected.
    pub flagged: Vec<usize>,
    /// Satellite ids of the measurements, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub satellite_ids: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedSubset>,
    /// Wall time spent on thresholds and tests, seconds.
    pub threshold_seconds: f64,
}

impl DetectionResult {
    fn insufficient(epoch: f64, kind: DetectorKind) -> Self {
        Self {
            epoch,
            kind,
            decision: Decision::InsufficientGeometry,
            tests: Vec::new(),
            flagged: Vec::new(),
            satellite_ids: Vec::new(),
            skipped: Vec::new(),
            threshold_seconds: 0.0,
        }
    }

    pub fn fault_claimed(&self) -> bool {
        self.decision == Decision::FaultClaimed
    }

    pub fn flagged_ids(&self) -> Vec<u32> {
        self.flagged
            .iter()
            .filter_map(|k| self.satellite_ids.get(*k).copied())
            .collect()
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn check_models(sys: &LinearSystem, models: &[NominalError]) -> Result<()> {
    if models.len() != sys.n() {
        return Err(Error::invalid(format!(
            "{} models for {} measurements",
            models.len(),
            sys.n()
        )));
    }
    Ok(())
}

fn use_closed_form(models: &[NominalError], method: ThresholdMethod) -> bool {
    method == ThresholdMethod::Auto
        && models
            .iter()
            .all(|m| matches!(m.model, OverboundModel::Gaussian { .. }))
}

/// Level-`alpha` test of a statistic that equals `coeffs . e`.
fn test_linear_form(
    statistic: f64,
    coeffs: &[f64],
    models: &[NominalError],
    closed_form: bool,
    alpha: f64,
    grid: &GridConfig,
) -> Result<OriginTest> {
    if coeffs.iter().all(|c| *c == 0.0) {
        return Ok(OriginTest {
            threshold: 0.0,
            rejected: statistic.abs() > 0.0,
        });
    }
    if closed_form {
        let var = coeffs
            .iter()
            .zip(models)
            .map(|(c, m)| c * c * m.variance())
            .sum();
        origin_test(statistic, Nominal::Variance(var), alpha)
    } else {
        let grids: Vec<&GriddedPdf> = models.iter().map(|m| m.grid()).collect();
        let pdf = linear_combination_pdf_with(coeffs, &grids, grid.points)?;
        origin_test(statistic, Nominal::Grid(&pdf), alpha)
    }
}

/// Runs the configured detector on a linear system. Weights are replaced by
/// the inverse model variances.
pub fn detect(
    sys: &LinearSystem,
    models: &[NominalError],
    cfg: &DetectorConfig,
) -> Result<DetectionResult> {
    match cfg.kind {
        DetectorKind::Jackknife => jackknife_detect(sys, models, cfg),
        DetectorKind::SolutionSeparation => ss_detect(sys, models, cfg),
    }
}

pub fn jackknife_detect(
    sys: &LinearSystem,
    models: &[NominalError],
    cfg: &DetectorConfig,
) -> Result<DetectionResult> {
    run_detector(sys, models, cfg, DetectorKind::Jackknife)
}

pub fn ss_detect(
    sys: &LinearSystem,
    models: &[NominalError],
    cfg: &DetectorConfig,
) -> Result<DetectionResult> {
    run_detector(sys, models, cfg, DetectorKind::SolutionSeparation)
}

fn run_detector(
    sys: &LinearSystem,
    models: &[NominalError],
    cfg: &DetectorConfig,
    kind: DetectorKind,
) -> Result<DetectionResult> {
    cfg.validate()?;
    check_models(sys, models)?;
    let (n, m) = (sys.n(), sys.m());
    if n < m + 1 {
        return Ok(DetectionResult::insufficient(0.0, kind));
    }
    let weights = DVector::from_iterator(n, models.iter().map(|e| 1.0 / e.variance()));
    let sys = sys.with_weights(weights)?;
    let full = match kind {
        DetectorKind::SolutionSeparation => Some(wls_solve(&sys)?),
        DetectorKind::Jackknife => None,
    };
    let alpha = cfg.tau / n as f64;
    let closed_form = use_closed_form(models, cfg.threshold);

    let mut tests = Vec::new();
    let mut skipped = Vec::new();
    let mut elapsed = 0.0;
    for k in 0..n {
        let sub = match subset_solution(&sys, k) {
            Ok(s) => s,
            Err(Error::SubsetDegenerate { k, reason }) => {
                skipped.push(SkippedSubset { k, reason });
                continue;
            }
            Err(e) => return Err(e),
        };
        match &full {
            None => {
                let jk = jackknife_residual(&sys, &sub, k)?;
                let start = Instant::now();
                let t = test_linear_form(
                    jk.statistic,
                    jk.coefficients.as_slice(),
                    models,
                    closed_form,
                    alpha,
                    &cfg.grid,
                )?;
                elapsed += start.elapsed().as_secs_f64();
                tests.push(SubsetTest {
                    k,
                    component: None,
                    statistic: jk.statistic,
                    threshold: t.threshold,
                    rejected: t.rejected,
                });
            }
            Some(full) => {
                let ss = separation_vector(full, &sub);
                for q in 0..m {
                    let coeffs: Vec<f64> = ss.coefficients.row(q).iter().copied().collect();
                    let start = Instant::now();
                    let t = test_linear_form(
                        ss.separation[q],
                        &coeffs,
                        models,
                        closed_form,
                        alpha,
                        &cfg.grid,
                    )?;
                    elapsed += start.elapsed().as_secs_f64();
                    tests.push(SubsetTest {
                        k,
                        component: Some(q),
                        statistic: ss.separation[q],
                        threshold: t.threshold,
                        rejected: t.rejected,
                    });
                }
            }
        }
    }
    let mut flagged: Vec<usize> = tests.iter().filter(|t| t.rejected).map(|t| t.k).collect();
    flagged.dedup();
    let decision = if flagged.is_empty() {
        Decision::NoFault
    } else {
        Decision::FaultClaimed
    };
    Ok(DetectionResult {
        epoch: 0.0,
        kind,
        decision,
        tests,
        flagged,
        satellite_ids: Vec::new(),
        skipped,
        threshold_seconds: elapsed,
    })
}

/// Masks, positions and tests one epoch of pseudoranges.
pub fn detect_epoch(
    record: &EpochRecord,
    bank: &NominalBank,
    cfg: &DetectorConfig,
) -> Result<DetectionResult> {
    record.validate()?;
    let used: Vec<_> = record
        .satellites
        .iter()
        .filter(|s| s.elevation_deg >= cfg.elevation_mask_deg)
        .collect();
    if used.len() < MIN_SPP_SATELLITES {
        let mut r = DetectionResult::insufficient(record.epoch, cfg.kind);
        r.satellite_ids = used.iter().map(|s| s.id).collect();
        return Ok(r);
    }
    let positions: Vec<EcefPosition> = used.iter().map(|s| s.position).collect();
    let ranges: Vec<f64> = used.iter().map(|s| s.pseudorange).collect();
    let models: Vec<NominalError> = used
        .iter()
        .map(|s| bank.for_elevation(s.elevation_deg).clone())
        .collect();
    let weights = DVector::from_iterator(models.len(), models.iter().map(|e| 1.0 / e.variance()));
    let x = solve_position(&positions, &ranges, &weights, [0.0; 4])?;
    let sys = linearize_spp(&positions, &ranges, &x)?;
    let mut result = detect(&sys, &models, cfg)?;
    result.epoch = record.epoch;
    result.satellite_ids = used.iter().map(|s| s.id).collect();
    Ok(result)
}
