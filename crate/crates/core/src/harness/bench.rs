//! Threshold-computation timing of the jackknife and solution-separation
//! detectors on identical epochs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::replay::{generate_scenario, ScenarioConfig};
use super::{median, nominal_model, ErrorModel};
use crate::detector::{
    detect_epoch, Decision, DetectorConfig, DetectorKind, NominalBank, ThresholdMethod,
};
use crate::dist::GridConfig;
use crate::geometry::ConstellationConfig;
use crate::overbound::{FitMethod, OverboundModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub constellation: ConstellationConfig,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub epochs: usize,
    pub step_s: f64,
    pub error: ErrorModel,
    pub overbound: FitMethod,
    pub fit_samples: usize,
    pub threshold: ThresholdMethod,
    pub tau: f64,
    pub grid: GridConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            constellation: ConstellationConfig::default(),
            lat_deg: 22.3,
            lon_deg: 114.2,
            epochs: 200,
            step_s: 300.0,
            error: ErrorModel::default(),
            overbound: FitMethod::Pgo,
            fit_samples: 200_000,
            threshold: ThresholdMethod::Auto,
            tau: 0.05,
            grid: GridConfig::default(),
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub epoch_s: f64,
    pub satellites: usize,
    pub jk_seconds: f64,
    pub ss_seconds: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: OverboundModel,
    pub rows: Vec<BenchRow>,
    pub median_ratio: f64,
    pub median_jk_seconds: f64,
    pub median_ss_seconds: f64,
    pub max_jk_seconds: f64,
}

/// Runs both detectors on every epoch of a generated scenario on the calling
/// thread and records the time each spends on thresholds and tests.
pub fn bench_detectors(cfg: &BenchConfig) -> Result<BenchReport> {
    let model = nominal_model(&cfg.error, cfg.overbound, cfg.fit_samples, cfg.seed)?;
    let bank = NominalBank::uniform(model, &cfg.grid)?;
    let records = generate_scenario(&ScenarioConfig {
        constellation: cfg.constellation.clone(),
        lat_deg: cfg.lat_deg,
        lon_deg: cfg.lon_deg,
        start_s: 0.0,
        epochs: cfg.epochs,
        step_s: cfg.step_s,
        error: cfg.error,
        elevation_dependent: false,
        clock_bias_m: 0.0,
        seed: cfg.seed,
    })?;
    let base = DetectorConfig {
        tau: cfg.tau,
        kind: DetectorKind::Jackknife,
        threshold: cfg.threshold,
        grid: cfg.grid,
        elevation_mask_deg: cfg.constellation.elevation_mask_deg,
    };
    let mut rows = Vec::with_capacity(records.len());
    for record in &records {
        let jk = detect_epoch(record, &bank, &base)?;
        if jk.decision == Decision::InsufficientGeometry {
            continue;
        }
        let ss = detect_epoch(
            record,
            &bank,
            &base.with_kind(DetectorKind::SolutionSeparation),
        )?;
        rows.push(BenchRow {
            epoch_s: record.epoch,
            satellites: jk.satellite_ids.len(),
            jk_seconds: jk.threshold_seconds,
            ss_seconds: ss.threshold_seconds,
            ratio: ss.threshold_seconds / jk.threshold_seconds,
        });
    }
    if rows.is_empty() {
        return Err(Error::invalid("no epoch had enough satellites"));
    }
    let col = |f: fn(&BenchRow) -> f64| -> f64 {
        let mut v: Vec<f64> = rows.iter().map(f).collect();
        median(&mut v).expect("non-empty")
    };
    let median_ratio = col(|r| r.ratio);
    let median_jk_seconds = col(|r| r.jk_seconds);
    let median_ss_seconds = col(|r| r.ss_seconds);
    let max_jk_seconds = rows.iter().map(|r| r.jk_seconds).fold(0.0, f64::max);
    Ok(BenchReport {
        model,
        rows,
        median_ratio,
        median_jk_seconds,
        median_ss_seconds,
        max_jk_seconds,
    })
}

pub fn write_bench_csv<W: Write>(writer: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_reports_every_epoch() {
        let cfg = BenchConfig {
            epochs: 4,
            fit_samples: 20_000,
            grid: GridConfig::with_points(1023),
            ..BenchConfig::default()
        };
        let r = bench_detectors(&cfg).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r
            .rows
            .iter()
            .all(|row| row.jk_seconds > 0.0 && row.ss_seconds > 0.0));
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &r.rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
