//! Satellite/user geometry and the linearized measurement system.

mod constellation;
mod spp;

pub use constellation::{
    elevation_deg, geodetic_to_ecef, propagate_walker, user_grid, visible_satellites,
    ConstellationConfig, GridPoint, Visible, EARTH_MU, EARTH_ROTATION_RATE, WGS84_A, WGS84_F,
};
pub use spp::{
    iono_free_combine, iono_free_combine_with, linearize_spp, solve_position, IonoFreeFrequencies,
};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point in the Earth-centred Earth-fixed frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcefPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefPosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn distance(self, other: EcefPosition) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// One epoch of the linearized model `y = G x + e` with a diagonal weighting.
///
/// The weight matrix is stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    y: DVector<f64>,
    g: DMatrix<f64>,
    weights: DVector<f64>,
    x0: DVector<f64>,
}

impl LinearSystem {
    /// Builds a system linearized about the origin of the state space.
    pub fn new(y: DVector<f64>, g: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        let m = g.ncols();
        Self::with_point(y, g, weights, DVector::zeros(m))
    }

    pub fn with_point(
        y: DVector<f64>,
        g: DMatrix<f64>,
        weights: DVector<f64>,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let (n, m) = g.shape();
        if m == 0 {
            return Err(Error::invalid("geometry matrix has no columns"));
        }
        if n < m {
            return Err(Error::invalid(format!(
                "{n} measurements cannot determine {m} states"
            )));
        }
        if y.len() != n || weights.len() != n {
            return Err(Error::invalid(format!(
                "dimension mismatch: G is {n}x{m}, y has {}, W has {}",
                y.len(),
                weights.len()
            )));
        }
        if x0.len() != m {
            return Err(Error::invalid(
                "linearization point length differs from state size",
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!(
                "weight {w} is not strictly positive"
            )));
        }
        if !y.iter().all(|v| v.is_finite()) || !g.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite entry in y or G"));
        }
        Ok(Self { y, g, weights, x0 })
    }

    /// Number of measurements.
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// Number of states.
    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Diagonal of the weight matrix.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.weights)
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    /// Row `k` of the geometry matrix as a row vector.
    pub fn row(&self, k: usize) -> nalgebra::RowDVector<f64> {
        self.g.row(k).into_owned()
    }

    /// Copy of the system with a different observation vector.
    pub fn with_observations(&self, y: DVector<f64>) -> Result<Self> {
        Self::with_point(y, self.g.clone(), self.weights.clone(), self.x0.clone())
    }

    /// Copy of the system with a different weight diagonal.
    pub fn with_weights(&self, weights: DVector<f64>) -> Result<Self> {
        Self::with_point(self.y.clone(), self.g.clone(), weights, self.x0.clone())
    }

    /// The system with row `k` removed.
    pub fn without_row(&self, k: usize) -> Result<Self> {
        if k >= self.n() {
            return Err(Error::invalid(format!("row {k} out of range")));
        }
        Self::with_point(
            self.y.clone().remove_row(k),
            self.g.clone().remove_row(k),
            self.weights.clone().remove_row(k),
            self.x0.clone(),
        )
    }
}

/// One satellite's contribution to an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteObservation {
    pub id: u32,
    pub position: EcefPosition,
    /// Pseudorange in meters.
    pub pseudorange: f64,
    pub elevation_deg: f64,
}

/// Everything the detector needs for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// GPS seconds.
    pub epoch: f64,
    pub satellites: Vec<SatelliteObservation>,
    /// Evaluation only; never read by the detector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<EcefPosition>,
}

impl EpochRecord {
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.satellites.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "satellite {} appears twice in epoch {}",
                w[0], self.epoch
            )));
        }
        for s in &self.satellites {
            if !(-90.0..=90.0).contains(&s.elevation_deg) {
                return Err(Error::invalid(format!(
                    "satellite {} elevation {} outside [-90, 90]",
                    s.id, s.elevation_deg
                )));
            }
            if !s.position.is_finite() || !s.pseudorange.is_finite() {
                return Err(Error::invalid(format!(
                    "satellite {} has non-finite data",
                    s.id
                )));
            }
        }
        Ok(())
    }
}
