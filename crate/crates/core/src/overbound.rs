//! Nominal error overbounds: the minimal Gaussian overbound of an empirical
//! sample, and the principal Gaussian overbound (PGO) built from a zero-mean
//! two-component Gaussian mixture fitted by EM.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{
    from_gaussian_with, normal_cdf, normal_pdf, std_normal_cdf, GridConfig, GriddedPdf,
};
use crate::{Error, Result};

/// Smallest sample accepted by any fit.
pub const MIN_FIT_COUNT: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    values: Vec<f64>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empty sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample contains non-finite values"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    /// Reads a single-column CSV; a non-numeric first line is taken as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut values = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let line = i + 1;
            let field = record.get(0).unwrap_or("").trim();
            match field.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if i == 0 => continue,
                Err(_) => {
                    return Err(Error::Parse {
                        line,
                        message: format!("not a number: {field:?}"),
                    })
                }
            }
        }
        Self::new(values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.count() as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.count() as f64).sqrt()
    }

    /// Fraction of values `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|v| *v <= x) as f64 / self.count() as f64
    }

    /// Fraction of values `< x`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.values.partition_point(|v| *v < x) as f64 / self.count() as f64
    }

    /// Empirical `p`-quantile (order statistic `ceil(p n)`).
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.count();
        let i = ((p * n as f64).ceil() as usize).clamp(1, n);
        self.values[i - 1]
    }

    fn check_fit_size(&self) -> Result<()> {
        if self.count() < MIN_FIT_COUNT {
            return Err(Error::invalid(format!(
                "fitting needs at least {MIN_FIT_COUNT} values, got {}",
                self.count()
            )));
        }
        Ok(())
    }
}

/// Tail counts of the symmetrized sample: for each distinct `|x|` in
/// ascending order, the fraction of the mirrored sample lying strictly beyond
/// it on one side, `#{|x_i| > a} / 2n`.
fn symmetric_tail_fractions(sample: &EmpiricalSample) -> Vec<(f64, f64)> {
    let mut abs: Vec<f64> = sample
        .values
        .iter()
        .map(|v| v.abs())
        .filter(|a| *a > 0.0)
        .collect();
    abs.sort_by(f64::total_cmp);
    let n2 = 2.0 * sample.count() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < abs.len() {
        let a = abs[i];
        while i < abs.len() && abs[i] == a {
            i += 1;
        }
        out.push((a, (abs.len() - i) as f64 / n2));
    }
    out
}

/// Confidence level of the central band excluded from the dominance check.
const CORE_BAND_ALPHA: f64 = 0.05;

/// Half-width of the Dvoretzky-Kiefer-Wolfowitz band around the empirical CDF.
fn dkw_epsilon(count: usize) -> f64 {
    ((2.0 / CORE_BAND_ALPHA).ln() / (2.0 * count as f64)).sqrt()
}

/// Points at which the overbound condition is enforced: everything except the
/// central band where the empirical CDF is within its DKW half-width of 1/2.
fn checked_tails(sample: &EmpiricalSample) -> Vec<(f64, f64)> {
    let limit = 0.5 - dkw_epsilon(sample.count());
    symmetric_tail_fractions(sample)
        .into_iter()
        .filter(|(_, q)| *q <= limit)
        .collect()
}

fn dominates(tails: &[(f64, f64)], sigma: f64) -> bool {
    tails
        .iter()
        .all(|(a, frac)| std_normal_cdf(-a / sigma) >= *frac)
}

/// Smallest `sigma` (to within `1e-4` sample standard deviations) for which
/// `N(0, sigma^2)` dominates the empirical CDF for `x < 0` and is dominated by
/// it for `x > 0`.
///
/// The sample is mirrored about zero first, so both conditions reduce to one
/// condition on `|x|`. The empirical CDF is taken as its left limit at
/// negative sample points and its right limit at positive ones. Points whose
/// empirical CDF lies within the DKW band (95%) of 1/2 are not checked: there
/// the order statistics, not the error law, decide the result.
pub fn gaussian_overbound(sample: &EmpiricalSample) -> Result<f64> {
    sample.check_fit_size()?;
    let sd = sample.std();
    if !(sd > 0.0) {
        return Err(Error::invalid("sample has no spread"));
    }
    let tails = checked_tails(sample);
    let (mut lo, mut hi) = (0.5 * sd, 20.0 * sd);
    if dominates(&tails, lo) {
        return Ok(lo);
    }
    if !dominates(&tails, hi) {
        return Err(Error::invalid(format!("no Gaussian overbound below {hi}")));
    }
    while hi - lo > 1e-4 * sd {
        let mid = 0.5 * (lo + hi);
        if dominates(&tails, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Zero-mean mixture `p1 N(0, sigma1^2) + (1 - p1) N(0, sigma2^2)` with
/// `sigma2 > sigma1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bgmm {
    pub p1: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Bgmm {
    /// Builds a mixture, relabelling so the second component is the wider one.
    pub fn new(p1: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::invalid(format!(
                "mixture weight must lie in (0, 1), got {p1}"
            )));
        }
        if !(sigma1 > 0.0 && sigma2 > 0.0 && sigma1.is_finite() && sigma2.is_finite()) {
            return Err(Error::invalid("mixture scales must be positive"));
        }
        if sigma1 == sigma2 {
            return Err(Error::invalid("mixture components coincide"));
        }
        Ok(if sigma1 < sigma2 {
            Self { p1, sigma1, sigma2 }
        } else {
            Self {
                p1: 1.0 - p1,
                sigma1: sigma2,
                sigma2: sigma1,
            }
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.p1 * normal_pdf(x, self.sigma1) + (1.0 - self.p1) * normal_pdf(x, self.sigma2)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.p1 * normal_cdf(x, self.sigma1) + (1.0 - self.p1) * normal_cdf(x, self.sigma2)
    }

    pub fn variance(&self) -> f64 {
        self.p1 * self.sigma1.powi(2) + (1.0 - self.p1) * self.sigma2.powi(2)
    }

    pub fn log_likelihood(&self, sample: &EmpiricalSample) -> f64 {
        EmState::from(*self).e_step(&sample.values).log_likelihood
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub restarts: usize,
    /// Iterations each random restart is run before the best start is refined.
    pub screening_iterations: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            relative_tolerance: 1e-8,
            restarts: 10,
            screening_iterations: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub bgmm: Bgmm,
    /// Log-likelihood before each parameter update of the refined run.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct EmState {
    p1: f64,
    var1: f64,
    var2: f64,
}

struct EStep {
    log_likelihood: f64,
    next: EmState,
}

impl From<Bgmm> for EmState {
    fn from(b: Bgmm) -> Self {
        Self {
            p1: b.p1,
            var1: b.sigma1.powi(2),
            var2: b.sigma2.powi(2),
        }
    }
}

impl EmState {
    fn e_step(&self, x: &[f64]) -> EStep {
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let lw1 = self.p1.ln() - 0.5 * self.var1.ln();
        let lw2 = (1.0 - self.p1).ln() - 0.5 * self.var2.ln();
        let (h1, h2) = (0.5 / self.var1, 0.5 / self.var2);
        let (mut ll, mut r1_sum, mut r1_u, mut r2_u) = (0.0, 0.0, 0.0, 0.0);
        for v in x {
            let u = v * v;
            let l1 = lw1 - u * h1;
            let l2 = lw2 - u * h2;
            let (hi, d) = if l1 >= l2 {
                (l1, l2 - l1)
            } else {
                (l2, l1 - l2)
            };
            let e = d.exp();
            ll += hi + e.ln_1p();
            let r1 = if l1 >= l2 {
                1.0 / (1.0 + e)
            } else {
                e / (1.0 + e)
            };
            r1_sum += r1;
            r1_u += r1 * u;
            r2_u += (1.0 - r1) * u;
        }
        let n = x.len() as f64;
        let r2_sum = n - r1_sum;
        let mut next = *self;
        next.p1 = r1_sum / n;
        if r1_sum > 0.0 {
            next.var1 = r1_u / r1_sum;
        }
        if r2_sum > 0.0 {
            next.var2 = r2_u / r2_sum;
        }
        EStep {
            log_likelihood: ll - n * half_log_2pi,
            next,
        }
    }

    fn usable(&self, floor: f64) -> bool {
        self.p1 > 0.0 && self.p1 < 1.0 && self.var1.sqrt() >= floor && self.var2.sqrt() >= floor
    }
}

/// Runs up to `iterations` EM steps; returns the final state, the
/// log-likelihood history and whether the tolerance was met.
fn run_em(
    x: &[f64],
    mut state: EmState,
    iterations: usize,
    tol: f64,
    floor: f64,
) -> Result<(EmState, Vec<f64>, bool)> {
    let mut history = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let step = state.e_step(x);
        let converged = history.last().is_some_and(|prev: &f64| {
            (step.log_likelihood - prev).abs() < tol * step.log_likelihood.abs()
        });
        history.push(step.log_likelihood);
        if converged {
            return Ok((state, history, true));
        }
        if !step.next.usable(floor) {
            return Err(Error::FitDegenerate(format!(
                "p1 = {}, sigma1 = {}, sigma2 = {}",
                step.next.p1,
                step.next.var1.sqrt(),
                step.next.var2.sqrt()
            )));
        }
        state = step.next;
    }
    Ok((state, history, false))
}

/// Fits a zero-mean two-component mixture with the default EM settings.
pub fn fit_bgmm_em(sample: &EmpiricalSample) -> Result<Bgmm> {
    Ok(fit_bgmm_em_with(sample, &EmConfig::default())?.bgmm)
}

/// EM over weights and variances only. The fixed start `p1 = 0.9`,
/// `sigma = (0.5, 2) sd` and `restarts` random starts are each run for a few
/// iterations; the start with the highest likelihood is then iterated to
/// convergence.
pub fn fit_bgmm_em_with(sample: &EmpiricalSample, config: &EmConfig) -> Result<EmFit> {
    sample.check_fit_size()?;
    let sd = sample.std();
    if !(sd > 0.0) {
        return Err(Error::FitDegenerate("sample has no spread".into()));
    }
    let floor = 1e-8 * sd;
    let x = sample.values();
    let mut starts = vec![EmState {
        p1: 0.9,
        var1: (0.5 * sd).powi(2),
        var2: (2.0 * sd).powi(2),
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        starts.push(EmState {
            p1: rng.random_range(0.5..0.99),
            var1: (rng.random_range(0.2..1.0) * sd).powi(2),
            var2: (rng.random_range(1.2..4.0) * sd).powi(2),
        });
    }

    let mut best: Option<(f64, EmState)> = None;
    let mut first_error = None;
    for start in starts {
        match run_em(x, start, config.screening_iterations.max(1), 0.0, floor) {
            Ok((state, history, _)) => {
                let ll = *history.last().unwrap();
                if best.is_none_or(|(b, _)| ll > b) {
                    best = Some((ll, state));
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((_, start)) = best else {
        return Err(first_error.unwrap_or_else(|| Error::FitDegenerate("no usable start".into())));
    };
    let (state, log_likelihoods, converged) = run_em(
        x,
        start,
        config.max_iterations,
        config.relative_tolerance,
        floor,
    )?;
    let bgmm = Bgmm::new(state.p1, state.var1.sqrt(), state.var2.sqrt())
        .map_err(|e| Error::FitDegenerate(e.to_string()))?;
    Ok(EmFit {
        bgmm,
        log_likelihoods,
        converged,
    })
}

/// Principal Gaussian overbound: inside `[-x_rp, x_rp]` the density is
/// `p1 N(0, sigma1^2) + c`, outside it is `(1 + k)(1 - p1) N(0, sigma2^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgoParams {
    pub p1: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub k: f64,
    pub c: f64,
    pub x_rp: f64,
}

/// Second moment of `N(0, sigma^2)` restricted to `[0, a]`.
fn half_second_moment(sigma: f64, a: f64) -> f64 {
    let z = a / sigma;
    sigma * sigma * ((std_normal_cdf(z) - 0.5) - z * normal_pdf(z, 1.0))
}

impl PgoParams {
    pub fn pdf(&self, x: f64) -> f64 {
        if x.abs() <= self.x_rp {
            self.p1 * normal_pdf(x, self.sigma1) + self.c
        } else {
            (1.0 + self.k) * (1.0 - self.p1) * normal_pdf(x, self.sigma2)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let a = self.x_rp;
        let tail = (1.0 + self.k) * (1.0 - self.p1);
        if x < -a {
            tail * normal_cdf(x, self.sigma2)
        } else if x <= a {
            tail * normal_cdf(-a, self.sigma2)
                + self.p1 * (normal_cdf(x, self.sigma1) - normal_cdf(-a, self.sigma1))
                + self.c * (x + a)
        } else {
            1.0 - self.cdf(-x)
        }
    }

    /// Density jump at `x_rp` (zero when continuous).
    pub fn continuity_residual(&self) -> f64 {
        let a = self.x_rp;
        (self.p1 * normal_pdf(a, self.sigma1) + self.c)
            - (1.0 + self.k) * (1.0 - self.p1) * normal_pdf(a, self.sigma2)
    }

    pub fn total_mass(&self) -> f64 {
        let a = self.x_rp;
        self.p1 * (2.0 * normal_cdf(a, self.sigma1) - 1.0)
            + 2.0 * self.c * a
            + (1.0 + self.k) * (1.0 - self.p1) * 2.0 * normal_cdf(-a, self.sigma2)
    }

    pub fn variance(&self) -> f64 {
        pgo_variance(self)
    }

    /// Half-width used when sampling onto a grid.
    pub fn support_half_width(&self, config: &GridConfig) -> f64 {
        (config.support_sigmas * self.sigma2).max(self.x_rp + 5.0 * self.sigma2)
    }
}

/// Splits the mixture where the two weighted components are equal and solves
/// the tail inflation `k` and core offset `c` from continuity at `x_rp` and
/// unit total mass.
pub fn build_pgo(bgmm: &Bgmm) -> Result<PgoParams> {
    let Bgmm { p1, sigma1, sigma2 } = *bgmm;
    let ratio = (p1 * sigma2 / ((1.0 - p1) * sigma1)).ln();
    let curvature = 1.0 / sigma1.powi(2) - 1.0 / sigma2.powi(2);
    if !(ratio > 0.0 && curvature > 0.0) {
        return Err(Error::PartitionFailure(format!(
            "core component never dominates (p1 = {p1}, sigma1 = {sigma1}, sigma2 = {sigma2})"
        )));
    }
    let x_rp = (2.0 * ratio / curvature).sqrt();
    if !(x_rp < 20.0 * sigma2) {
        return Err(Error::PartitionFailure(format!(
            "crossing at {x_rp} is beyond 20 sigma2"
        )));
    }
    let v = p1 * normal_pdf(x_rp, sigma1);
    let core = p1 * (2.0 * normal_cdf(x_rp, sigma1) - 1.0);
    let tail = (1.0 - p1) * 2.0 * normal_cdf(-x_rp, sigma2);
    let k = (1.0 - core - tail) / (2.0 * v * x_rp + tail);
    Ok(PgoParams {
        p1,
        sigma1,
        sigma2,
        k,
        c: k * v,
        x_rp,
    })
}

/// Variance of the PGO density, from the closed-form second moments of each
/// piece.
pub fn pgo_variance(params: &PgoParams) -> f64 {
    let a = params.x_rp;
    let core = params.p1 * half_second_moment(params.sigma1, a) + params.c * a.powi(3) / 3.0;
    let tail = (1.0 + params.k)
        * (1.0 - params.p1)
        * (0.5 * params.sigma2.powi(2) - half_second_moment(params.sigma2, a));
    2.0 * (core + tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OverboundModel {
    Gaussian { sigma: f64 },
    Pgo(PgoParams),
}

impl OverboundModel {
    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian { sigma } => sigma * sigma,
            Self::Pgo(p) => pgo_variance(p),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { sigma } => normal_pdf(x, *sigma),
            Self::Pgo(p) => p.pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { sigma } => normal_cdf(x, *sigma),
            Self::Pgo(p) => p.cdf(x),
        }
    }

    /// Same model with the error scaled by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Self::Gaussian { sigma } => Self::Gaussian {
                sigma: sigma * factor,
            },
            Self::Pgo(p) => Self::Pgo(PgoParams {
                sigma1: p.sigma1 * factor,
                sigma2: p.sigma2 * factor,
                c: p.c / factor,
                x_rp: p.x_rp * factor,
                ..p
            }),
        }
    }

    pub fn to_gridded_pdf(&self, config: &GridConfig) -> Result<GriddedPdf> {
        to_gridded_pdf(self, config)
    }
}

pub fn to_gridded_pdf(model: &OverboundModel, config: &GridConfig) -> Result<GriddedPdf> {
    config.validate()?;
    match model {
        OverboundModel::Gaussian { sigma } => from_gaussian_with(*sigma, config),
        OverboundModel::Pgo(p) => {
            GriddedPdf::from_fn(p.support_half_width(config), config.points, |x| p.pdf(x))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Gaussian,
    Pgo,
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "go" => Ok(Self::Gaussian),
            "pgo" => Ok(Self::Pgo),
            other => Err(Error::invalid(format!(
                "unknown overbound method {other:?}"
            ))),
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Pgo => "pgo",
        })
    }
}

pub fn fit_model(sample: &EmpiricalSample, method: FitMethod) -> Result<OverboundModel> {
    Ok(match method {
        FitMethod::Gaussian => OverboundModel::Gaussian {
            sigma: gaussian_overbound(sample)?,
        },
        FitMethod::Pgo => OverboundModel::Pgo(build_pgo(&fit_bgmm_em(sample)?)?),
    })
}

/// Elevation bins of fixed width; elevations outside the covered range use
/// the nearest bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationBins {
    pub lower_deg: f64,
    pub upper_deg: f64,
    pub width_deg: f64,
}

impl Default for ElevationBins {
    fn default() -> Self {
        Self {
            lower_deg: 15.0,
            upper_deg: 75.0,
            width_deg: 5.0,
        }
    }
}

impl ElevationBins {
    pub fn count(&self) -> usize {
        ((self.upper_deg - self.lower_deg) / self.width_deg).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_deg > 0.0 && self.upper_deg > self.lower_deg) || self.count() == 0 {
            return Err(Error::invalid(
                "elevation bins need positive width and range",
            ));
        }
        Ok(())
    }

    pub fn index(&self, elevation_deg: f64) -> usize {
        let i = ((elevation_deg - self.lower_deg) / self.width_deg).floor();
        (i.max(0.0) as usize).min(self.count() - 1)
    }

    pub fn range(&self, index: usize) -> (f64, f64) {
        let lo = self.lower_deg + index as f64 * self.width_deg;
        (lo, lo + self.width_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedModel {
    pub lower_deg: f64,
    pub upper_deg: f64,
    pub count: usize,
    pub model: OverboundModel,
}

/// Fitted overbounds, one per elevation bin. Serialized as the model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBank {
    pub method: FitMethod,
    pub bins: ElevationBins,
    pub models: Vec<BinnedModel>,
}

impl ModelBank {
    /// Same model at every elevation.
    pub fn uniform(method: FitMethod, model: OverboundModel) -> Self {
        let bins = ElevationBins {
            lower_deg: -90.0,
            upper_deg: 90.0,
            width_deg: 180.0,
        };
        Self {
            method,
            bins,
            models: vec![BinnedModel {
                lower_deg: -90.0,
                upper_deg: 90.0,
                count: 0,
                model,
            }],
        }
    }

    /// Fits each elevation bin from `(elevation_deg, residual)` pairs.
    pub fn fit(data: &[(f64, f64)], method: FitMethod, bins: ElevationBins) -> Result<Self> {
        bins.validate()?;
        let mut groups = vec![Vec::new(); bins.count()];
        for (elev, r) in data {
            groups[bins.index(*elev)].push(*r);
        }
        let models = groups
            .into_iter()
            .enumerate()
            .map(|(i, values)| {
                let (lo, hi) = bins.range(i);
                let count = values.len();
                let sample = EmpiricalSample::new(values)
                    .map_err(|_| Error::invalid(format!("elevation bin [{lo}, {hi}) is empty")))?;
                let model = fit_model(&sample, method).map_err(|e| match e {
                    Error::InvalidArgument(m) => {
                        Error::invalid(format!("elevation bin [{lo}, {hi}): {m}"))
                    }
                    other => other,
                })?;
                Ok(BinnedModel {
                    lower_deg: lo,
                    upper_deg: hi,
                    count,
                    model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            method,
            bins,
            models,
        })
    }

    pub fn model_for(&self, elevation_deg: f64) -> &OverboundModel {
        &self.models[self.bins.index(elevation_deg)].model
    }

    pub fn bin_index(&self, elevation_deg: f64) -> usize {
        self.bins.index(elevation_deg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: Self = serde_json::from_str(text)?;
        bank.bins.validate()?;
        if bank.models.len() != bank.bins.count() {
            return Err(Error::invalid(format!(
                "{} models for {} elevation bins",
                bank.models.len(),
                bank.bins.count()
            )));
        }
        if bank.models.iter().any(|m| !(m.model.variance() > 0.0)) {
            return Err(Error::invalid("model variance must be positive"));
        }
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ElevationResidual {
    elevation_deg: f64,
    residual_m: f64,
}

/// Reads `elevation_deg,residual_m` rows for elevation-binned fitting.
pub fn read_elevation_residuals<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize::<ElevationResidual>()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            Ok((row.elevation_deg, row.residual_m))
        })
        .collect()
}

pub fn write_elevation_residuals<W: Write>(writer: W, data: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for &(elevation_deg, residual_m) in data {
        w.serialize(ElevationResidual {
            elevation_deg,
            residual_m,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub x: f64,
    pub empirical: f64,
    pub gaussian_ob: f64,
    /// Empty when no PGO could be built for the sample.
    pub pgo: Option<f64>,
}

/// Empirical, Gaussian-overbound and PGO CDFs at `points` abscissae spanning
/// the sample range.
pub fn cdf_table(
    sample: &EmpiricalSample,
    sigma: f64,
    pgo: Option<&PgoParams>,
    points: usize,
) -> Vec<CdfRow> {
    let lim = sample.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let points = points.max(2);
    (0..points)
        .map(|i| {
            let x = -lim + 2.0 * lim * i as f64 / (points - 1) as f64;
            CdfRow {
                x,
                empirical: sample.cdf(x),
                gaussian_ob: normal_cdf(x, sigma),
                pgo: pgo.map(|p| p.cdf(x)),
            }
        })
        .collect()
}

/// Complementary form of [`cdf_table`].
pub fn ccdf_table(rows: &[CdfRow]) -> Vec<CdfRow> {
    rows.iter()
        .map(|r| CdfRow {
            x: r.x,
            empirical: 1.0 - r.empirical,
            gaussian_ob: 1.0 - r.gaussian_ob,
            pgo: r.pgo.map(|v| 1.0 - v),
        })
        .collect()
}

pub fn write_cdf_csv<W: Write>(writer: W, rows: &[CdfRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
