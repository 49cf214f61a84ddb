//! Replay of pseudorange scenarios through the detector, epoch by epoch, with
//! an optional step fault on one satellite.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ErrorModel;
use crate::detector::{detect_epoch, Decision, DetectorConfig, NominalBank};
use crate::geometry::{
    geodetic_to_ecef, propagate_walker, visible_satellites, ConstellationConfig, EcefPosition,
    EpochRecord, SatelliteObservation,
};
use crate::{Error, Result};

/// Step bias added to one satellite's pseudorange for epochs in
/// `(start_s, end_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultWindow {
    pub sat_id: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub bias_m: f64,
}

impl FaultWindow {
    pub fn active(&self, epoch: f64) -> bool {
        epoch > self.start_s && epoch <= self.end_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayScenario {
    records: Vec<EpochRecord>,
    fault: Option<FaultWindow>,
}

impl ReplayScenario {
    pub fn new(records: Vec<EpochRecord>, fault: Option<FaultWindow>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("scenario has no epochs"));
        }
        if records.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
            return Err(Error::invalid(
                "scenario epochs must be strictly increasing",
            ));
        }
        if let Some(f) = fault {
            let (first, last) = (records[0].epoch, records[records.len() - 1].epoch);
            if !(f.start_s >= first && f.start_s <= last && f.end_s >= f.start_s && f.end_s <= last)
            {
                return Err(Error::invalid(format!(
                    "fault window ({}, {}] outside epochs [{first}, {last}]",
                    f.start_s, f.end_s
                )));
            }
            if !f.bias_m.is_finite() {
                return Err(Error::invalid("fault bias must be finite"));
            }
        }
        Ok(Self { records, fault })
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn fault(&self) -> Option<FaultWindow> {
        self.fault
    }

    /// The record as the receiver sees it, fault included.
    pub fn observed(&self, index: usize) -> EpochRecord {
        let mut r = self.records[index].clone();
        if let Some(f) = self.fault.filter(|f| f.active(r.epoch)) {
            for s in r.satellites.iter_mut().filter(|s| s.id == f.sat_id) {
                s.pseudorange += f.bias_m;
            }
        }
        r
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    epoch_s: f64,
    sat_id: u32,
    sat_x_m: f64,
    sat_y_m: f64,
    sat_z_m: f64,
    pseudorange_m: f64,
    elevation_deg: f64,
}

/// Reads the one-row-per-satellite scenario CSV into epoch records. Rows of
/// one epoch must be contiguous.
pub fn read_scenario_csv<R: Read>(reader: R) -> Result<Vec<EpochRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records: Vec<EpochRecord> = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let sat = SatelliteObservation {
            id: row.sat_id,
            position: EcefPosition::new(row.sat_x_m, row.sat_y_m, row.sat_z_m),
            pseudorange: row.pseudorange_m,
            elevation_deg: row.elevation_deg,
        };
        match records.last_mut() {
            Some(r) if r.epoch == row.epoch_s => r.satellites.push(sat),
            _ => records.push(EpochRecord {
                epoch: row.epoch_s,
                satellites: vec![sat],
                truth: None,
            }),
        }
    }
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn write_scenario_csv<W: Write>(writer: W, records: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        for s in &r.satellites {
            w.serialize(CsvRow {
                epoch_s: r.epoch,
                sat_id: s.id,
                sat_x_m: s.position.x,
                sat_y_m: s.position.y,
                sat_z_m: s.position.z,
                pseudorange_m: s.pseudorange,
                elevation_deg: s.elevation_deg,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

impl ReplayScenario {
    pub fn from_csv_path(path: impl AsRef<Path>, fault: Option<FaultWindow>) -> Result<Self> {
        Self::new(read_scenario_csv(std::fs::File::open(path)?)?, fault)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub epoch_s: f64,
    pub satellites: usize,
    /// 1 when a fault is claimed.
    pub state: u8,
    pub valid: u8,
    pub in_fault: u8,
    /// Flagged satellite ids joined by `;`.
    pub flagged: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub timeline: Vec<TimelineRow>,
    pub first_detection_s: Option<f64>,
    /// First claimed epoch inside the fault window minus its start.
    pub delay_s: Option<f64>,
    pub false_alarm_epochs: usize,
    pub valid_epochs: usize,
}

pub fn run_replay(
    scenario: &ReplayScenario,
    bank: &NominalBank,
    cfg: &DetectorConfig,
) -> Result<ReplayReport> {
    cfg.validate()?;
    let mut timeline = Vec::with_capacity(scenario.records.len());
    let mut first_detection_s = None;
    let mut false_alarm_epochs = 0;
    let mut valid_epochs = 0;
    for i in 0..scenario.records.len() {
        let record = scenario.observed(i);
        let r = detect_epoch(&record, bank, cfg)?;
        let in_fault = scenario.fault.is_some_and(|f| f.active(record.epoch));
        let valid = r.decision != Decision::InsufficientGeometry;
        let claimed = r.fault_claimed();
        valid_epochs += usize::from(valid);
        if claimed && in_fault && first_detection_s.is_none() {
            first_detection_s = Some(record.epoch);
        }
        if claimed && !in_fault {
            false_alarm_epochs += 1;
        }
        timeline.push(TimelineRow {
            epoch_s: record.epoch,
            satellites: r.satellite_ids.len(),
            state: u8::from(claimed),
            valid: u8::from(valid),
            in_fault: u8::from(in_fault),
            flagged: r
                .flagged_ids()
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        });
    }
    let delay_s = first_detection_s
        .zip(scenario.fault)
        .map(|(t, f)| t - f.start_s);
    Ok(ReplayReport {
        timeline,
        first_detection_s,
        delay_s,
        false_alarm_epochs,
        valid_epochs,
    })
}

pub fn write_timeline_csv<W: Write>(writer: W, timeline: &[TimelineRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in timeline {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Multiplier on the nominal error at a given elevation: larger near the
/// horizon, tending to one overhead.
pub fn elevation_scale(elevation_deg: f64) -> f64 {
    1.0 + 1.5 * (-(elevation_deg - 5.0).max(0.0) / 15.0).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub constellation: ConstellationConfig,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub start_s: f64,
    pub epochs: usize,
    pub step_s: f64,
    pub error: ErrorModel,
    /// Scale errors with elevation via [`elevation_scale`].
    pub elevation_dependent: bool,
    /// Receiver clock bias, meters.
    pub clock_bias_m: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            constellation: ConstellationConfig::default(),
            lat_deg: -49.35,
            lon_deg: 70.26,
            start_s: 0.0,
            epochs: 240,
            step_s: 30.0,
            error: ErrorModel::default(),
            elevation_dependent: true,
            clock_bias_m: 120.0,
            seed: 7,
        }
    }
}

/// Synthesizes a fault-free scenario at one receiver.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Vec<EpochRecord>> {
    cfg.constellation.validate()?;
    cfg.error.validate()?;
    if cfg.epochs == 0 || !(cfg.step_s > 0.0) {
        return Err(Error::invalid("scenario needs epochs and a positive step"));
    }
    let user = geodetic_to_ecef(cfg.lat_deg, cfg.lon_deg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.epochs)
        .map(|e| {
            let epoch = cfg.start_s + e as f64 * cfg.step_s;
            let sats = propagate_walker(&cfg.constellation, epoch)?;
            let satellites = visible_satellites(user, &sats, cfg.constellation.elevation_mask_deg)
                .into_iter()
                .map(|v| {
                    let scale = if cfg.elevation_dependent {
                        elevation_scale(v.elevation_deg)
                    } else {
                        1.0
                    };
                    SatelliteObservation {
                        id: v.index as u32 + 1,
                        position: sats[v.index],
                        pseudorange: sats[v.index].distance(user)
                            + cfg.clock_bias_m
                            + scale * cfg.error.draw(&mut rng),
                        elevation_deg: v.elevation_deg,
                    }
                })
                .collect();
            Ok(EpochRecord {
                epoch,
                satellites,
                truth: Some(user),
            })
        })
        .collect()
}

/// `(elevation_deg, error)` pairs with elevations uniform over `[5, 90)`, for
/// fitting elevation-binned models that match [`generate_scenario`].
pub fn generate_training_residuals(
    error: &ErrorModel,
    count: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    error.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let elev = rng.random_range(5.0..90.0);
            (elev, elevation_scale(elev) * error.draw(&mut rng))
        })
        .collect())
}
