//! Worldwide simulation: a grid of users, a Walker constellation, random
//! nominal errors and one biased measurement per epoch. Each location gets a
//! detection rate, detected epochs over valid epochs.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{median, nominal_model, ErrorModel};
use crate::detector::{
    detect_epoch, Decision, DetectorConfig, DetectorKind, NominalBank, ThresholdMethod,
    MIN_SPP_SATELLITES,
};
use crate::dist::GridConfig;
use crate::geometry::{
    propagate_walker, user_grid, visible_satellites, ConstellationConfig, EcefPosition,
    EpochRecord, SatelliteObservation,
};
use crate::overbound::{FitMethod, OverboundModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSimConfig {
    pub grid_spacing_deg: f64,
    pub epoch_step_s: f64,
    pub epochs: usize,
    pub start_s: f64,
    pub constellation: ConstellationConfig,
    pub error: ErrorModel,
    pub bias_m: f64,
    pub tau: f64,
    pub detectors: Vec<DetectorKind>,
    pub overbounds: Vec<FitMethod>,
    /// Draws from the error model used to fit each overbound.
    pub fit_samples: usize,
    pub threshold: ThresholdMethod,
    pub grid: GridConfig,
    pub seed: u64,
}

impl Default for WorldSimConfig {
    fn default() -> Self {
        Self {
            grid_spacing_deg: 30.0,
            epoch_step_s: 1800.0,
            epochs: 48,
            start_s: 0.0,
            constellation: ConstellationConfig::default(),
            error: ErrorModel::default(),
            bias_m: 10.0,
            tau: 0.05,
            detectors: vec![DetectorKind::Jackknife, DetectorKind::SolutionSeparation],
            overbounds: vec![FitMethod::Gaussian, FitMethod::Pgo],
            fit_samples: 1_000_000,
            threshold: ThresholdMethod::Auto,
            grid: GridConfig::default(),
            seed: 1,
        }
    }
}

impl WorldSimConfig {
    /// The full-scale run: 10 degree grid, 288 epochs 5 minutes apart.
    pub fn full_scale() -> Self {
        Self {
            grid_spacing_deg: 10.0,
            epoch_step_s: 300.0,
            epochs: 288,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constellation.validate()?;
        self.error.validate()?;
        self.grid.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("at least one epoch is required"));
        }
        if !(self.epoch_step_s > 0.0) {
            return Err(Error::invalid("epoch step must be positive"));
        }
        if !(self.bias_m >= 0.0 && self.bias_m.is_finite()) {
            return Err(Error::invalid("bias must be non-negative"));
        }
        if self.detectors.is_empty() || self.overbounds.is_empty() {
            return Err(Error::invalid(
                "choose at least one detector and one overbound",
            ));
        }
        self.detector_config(DetectorKind::Jackknife).validate()
    }

    fn detector_config(&self, kind: DetectorKind) -> DetectorConfig {
        DetectorConfig {
            tau: self.tau,
            kind,
            threshold: self.threshold,
            grid: self.grid,
            elevation_mask_deg: self.constellation.elevation_mask_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRate {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub valid: usize,
    pub detected: usize,
    /// `detected / valid`; absent when no epoch was valid.
    pub rate: Option<f64>,
}

pub type DetectionRateGrid = Vec<LocationRate>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub detector: DetectorKind,
    pub overbound: FitMethod,
    pub model: OverboundModel,
    pub median_rate: Option<f64>,
    pub mean_rate: Option<f64>,
    pub valid_epochs: usize,
    pub detected_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub summary: PairSummary,
    pub locations: DetectionRateGrid,
}

/// Epochs on which the jackknife and solution-separation decisions matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub overbound: FitMethod,
    pub compared_epochs: usize,
    pub agreeing_epochs: usize,
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSimReport {
    pub config: WorldSimConfig,
    pub pairs: Vec<PairResult>,
    pub agreement: Vec<AgreementSummary>,
    /// Epochs where the detector failed on degenerate geometry.
    pub failed_epochs: usize,
}

#[derive(Default, Clone)]
struct LocationTally {
    valid: Vec<usize>,
    detected: Vec<usize>,
    compared: Vec<usize>,
    agreeing: Vec<usize>,
    failed: usize,
}

pub fn run_world_sim(cfg: &WorldSimConfig) -> Result<WorldSimReport> {
    cfg.validate()?;
    let locations = user_grid(cfg.grid_spacing_deg)?;
    let models: Vec<OverboundModel> = cfg
        .overbounds
        .iter()
        .enumerate()
        .map(|(i, m)| {
            nominal_model(
                &cfg.error,
                *m,
                cfg.fit_samples,
                cfg.seed.wrapping_add(i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let banks: Vec<NominalBank> = models
        .iter()
        .map(|m| NominalBank::uniform(*m, &cfg.grid))
        .collect::<Result<_>>()?;
    let constellations: Vec<Vec<EcefPosition>> = (0..cfg.epochs)
        .map(|e| {
            propagate_walker(
                &cfg.constellation,
                cfg.start_s + e as f64 * cfg.epoch_step_s,
            )
        })
        .collect::<Result<_>>()?;
    let detectors: Vec<DetectorConfig> = cfg
        .detectors
        .iter()
        .map(|d| cfg.detector_config(*d))
        .collect();
    let pair_count = banks.len() * detectors.len();
    let jk_slot = cfg
        .detectors
        .iter()
        .position(|d| *d == DetectorKind::Jackknife);
    let ss_slot = cfg
        .detectors
        .iter()
        .position(|d| *d == DetectorKind::SolutionSeparation);
    let compare = jk_slot.is_some() && ss_slot.is_some();

    let tallies: Vec<LocationTally> = locations
        .par_iter()
        .enumerate()
        .map(|(li, loc)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(li as u64 + 1);
            let mut tally = LocationTally {
                valid: vec![0; pair_count],
                detected: vec![0; pair_count],
                compared: vec![0; banks.len()],
                agreeing: vec![0; banks.len()],
                failed: 0,
            };
            for (e, sats) in constellations.iter().enumerate() {
                let vis =
                    visible_satellites(loc.position, sats, cfg.constellation.elevation_mask_deg);
                if vis.len() < MIN_SPP_SATELLITES {
                    continue;
                }
                let faulty = rng.random_range(0..vis.len());
                let satellites = vis
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let bias = if i == faulty { cfg.bias_m } else { 0.0 };
                        SatelliteObservation {
                            id: v.index as u32,
                            position: sats[v.index],
                            pseudorange: sats[v.index].distance(loc.position)
                                + cfg.error.draw(&mut rng)
                                + bias,
                            elevation_deg: v.elevation_deg,
                        }
                    })
                    .collect();
                let record = EpochRecord {
                    epoch: cfg.start_s + e as f64 * cfg.epoch_step_s,
                    satellites,
                    truth: Some(loc.position),
                };
                for (b, bank) in banks.iter().enumerate() {
                    let mut decisions = Vec::with_capacity(detectors.len());
                    for (d, det) in detectors.iter().enumerate() {
                        let slot = b * detectors.len() + d;
                        match detect_epoch(&record, bank, det) {
                            Ok(r) if r.decision != Decision::InsufficientGeometry => {
                                tally.valid[slot] += 1;
                                tally.detected[slot] += usize::from(r.fault_claimed());
                                decisions.push(Some(r.decision));
                            }
                            Ok(_) => decisions.push(None),
                            Err(_) => {
                                tally.failed += 1;
                                decisions.push(None);
                            }
                        }
                    }
                    if let (Some(j), Some(s)) = (jk_slot, ss_slot) {
                        if let (Some(a), Some(c)) = (decisions[j], decisions[s]) {
                            tally.compared[b] += 1;
                            tally.agreeing[b] += usize::from(a == c);
                        }
                    }
                }
            }
            tally
        })
        .collect();

    let mut pairs = Vec::with_capacity(pair_count);
    for (b, method) in cfg.overbounds.iter().enumerate() {
        for (d, kind) in cfg.detectors.iter().enumerate() {
            let slot = b * detectors.len() + d;
            let grid: DetectionRateGrid = locations
                .iter()
                .zip(&tallies)
                .map(|(loc, t)| LocationRate {
                    lat_deg: loc.lat_deg,
                    lon_deg: loc.lon_deg,
                    valid: t.valid[slot],
                    detected: t.detected[slot],
                    rate: (t.valid[slot] > 0)
                        .then(|| t.detected[slot] as f64 / t.valid[slot] as f64),
                })
                .collect();
            let mut rates: Vec<f64> = grid.iter().filter_map(|l| l.rate).collect();
            let mean_rate =
                (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
            pairs.push(PairResult {
                summary: PairSummary {
                    detector: *kind,
                    overbound: *method,
                    model: models[b],
                    median_rate: median(&mut rates),
                    mean_rate,
                    valid_epochs: grid.iter().map(|l| l.valid).sum(),
                    detected_epochs: grid.iter().map(|l| l.detected).sum(),
                },
                locations: grid,
            });
        }
    }
    let agreement = if compare {
        cfg.overbounds
            .iter()
            .enumerate()
            .map(|(b, method)| {
                let compared: usize = tallies.iter().map(|t| t.compared[b]).sum();
                let agreeing: usize = tallies.iter().map(|t| t.agreeing[b]).sum();
                AgreementSummary {
                    overbound: *method,
                    compared_epochs: compared,
                    agreeing_epochs: agreeing,
                    fraction: (compared > 0).then(|| agreeing as f64 / compared as f64),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(WorldSimReport {
        config: cfg.clone(),
        pairs,
        agreement,
        failed_epochs: tallies.iter().map(|t| t.failed).sum(),
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a WorldSimConfig,
    pairs: Vec<&'a PairSummary>,
    agreement: &'a [AgreementSummary],
    failed_epochs: usize,
}

impl WorldSimReport {
    pub fn pair(&self, detector: DetectorKind, overbound: FitMethod) -> Option<&PairResult> {
        self.pairs
            .iter()
            .find(|p| p.summary.detector == detector && p.summary.overbound == overbound)
    }

    pub fn write_rate_csv<W: Write>(writer: W, grid: &DetectionRateGrid) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in grid {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Summary {
            config: &self.config,
            pairs: self.pairs.iter().map(|p| &p.summary).collect(),
            agreement: &self.agreement,
            failed_epochs: self.failed_epochs,
        })?)
    }

    /// Writes `rates_<detector>_<overbound>.csv` per pair and `summary.json`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for p in &self.pairs {
            let name = format!(
                "rates_{}_{}.csv",
                match p.summary.detector {
                    DetectorKind::Jackknife => "jk",
                    DetectorKind::SolutionSeparation => "ss",
                },
                p.summary.overbound
            );
            let path = dir.join(name);
            Self::write_rate_csv(std::fs::File::create(&path)?, &p.locations)?;
            written.push(path);
        }
        let path = dir.join("summary.json");
        std::fs::write(&path, self.summary_json()?)?;
        written.push(path);
        Ok(written)
    }
}
