//! Quadrature noise spectra of a self-phase-locked type-II OPO above
//! threshold, the pump filtering cavity and the homodyne detection losses.
//!
//! The normalized analysis frequency is `Ω = f / (Δν/2)` with `Δν` the
//! infrared cavity linewidth (FWHM), so the cavity Lorentzian `1/(1+Ω²)`
//! is halved at the cavity half-width.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{build_covariance, TwoModeCovariance};

/// Beyond this distance from threshold the pump-noise coupling of `G_Y`
/// is used outside the regime it was derived for.
pub const SIGMA_WARN_DISTANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpoParams {
    /// Output-coupler transmission `T`.
    pub t_out: f64,
    /// Intracavity extra losses `μ`.
    pub mu_loss: f64,
    /// Pump amplitude normalized to threshold `σ`.
    pub sigma_pump: f64,
    pub cavity_fwhm_hz: f64,
    /// Optional 1-σ uncertainty on `mu_loss`, propagated into the spectra.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_loss_err: Option<f64>,
}

impl OpoParams {
    pub fn new(t_out: f64, mu_loss: f64, sigma_pump: f64, cavity_fwhm_hz: f64) -> Result<Self> {
        let p = Self {
            t_out,
            mu_loss,
            sigma_pump,
            cavity_fwhm_hz,
            mu_loss_err: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// `σ = √(P/P_th)` since σ is an amplitude ratio.
    pub fn sigma_from_power_ratio(power_ratio: f64) -> f64 {
        power_ratio.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_out > 0.0 && self.t_out <= 1.0) {
            return Err(Error::invalid("opo.t_out", "0 < t_out <= 1", self.t_out));
        }
        if !(self.mu_loss >= 0.0) || !self.mu_loss.is_finite() {
            return Err(Error::invalid("opo.mu_loss", "mu_loss >= 0", self.mu_loss));
        }
        if !(self.sigma_pump >= 1.0) || !self.sigma_pump.is_finite() {
            return Err(Error::invalid(
                "opo.sigma_pump",
                "sigma_pump >= 1 (above threshold)",
                self.sigma_pump,
            ));
        }
        if !(self.cavity_fwhm_hz > 0.0) || !self.cavity_fwhm_hz.is_finite() {
            return Err(Error::invalid(
                "opo.cavity_fwhm_hz",
                "cavity_fwhm_hz > 0",
                self.cavity_fwhm_hz,
            ));
        }
        if let Some(e) = self.mu_loss_err {
            if !(e >= 0.0) {
                return Err(Error::invalid("opo.mu_loss_err", "mu_loss_err >= 0", e));
            }
        }
        Ok(())
    }

    /// Escape efficiency `T/(T+μ)`.
    pub fn escape_efficiency(&self) -> Result<f64> {
        let total = self.t_out + self.mu_loss;
        if total <= 0.0 {
            return Err(Error::Domain("t_out + mu_loss must be non-zero".into()));
        }
        Ok(self.t_out / total)
    }

    fn escape_efficiency_dmu(&self) -> f64 {
        let total = self.t_out + self.mu_loss;
        -self.t_out / (total * total)
    }
}

/// Raw pump phase noise `V₀` before the filtering cavity, in shot-noise units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PumpNoiseSpectrum {
    Constant(f64),
    /// `(freq_hz, v0)` samples, linearly interpolated, clamped at the ends.
    Table(Vec<PumpNoiseSample>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpNoiseSample {
    pub freq_hz: f64,
    pub v0: f64,
}

impl PumpNoiseSpectrum {
    pub fn at(&self, freq_hz: f64) -> f64 {
        match self {
            PumpNoiseSpectrum::Constant(v) => *v,
            PumpNoiseSpectrum::Table(samples) => {
                let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.freq_hz, s.v0)).collect();
                interpolate_clamped(&pts, freq_hz)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PumpNoiseSpectrum::Constant(v) => {
                if !(*v >= 1.0) || !v.is_finite() {
                    return Err(Error::invalid("pump.v0_raw", "v0_raw >= 1", v));
                }
            }
            PumpNoiseSpectrum::Table(samples) => {
                if samples.is_empty() {
                    return Err(Error::invalid("pump.v0_raw", "a non-empty table", "[]"));
                }
                for w in samples.windows(2) {
                    if !(w[1].freq_hz > w[0].freq_hz) {
                        return Err(Error::invalid(
                            "pump.v0_raw.freq_hz",
                            "strictly increasing frequencies",
                            w[1].freq_hz,
                        ));
                    }
                }
                for s in samples {
                    if !(s.v0 >= 1.0) || !s.v0.is_finite() {
                        return Err(Error::invalid("pump.v0_raw.v0", "v0 >= 1", s.v0));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpNoiseModel {
    pub v0_raw: PumpNoiseSpectrum,
    /// Optional absolute 1-σ uncertainty on the raw level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0_raw_err: Option<f64>,
    pub filter_fwhm_hz: f64,
    pub filter_enabled: bool,
}

impl PumpNoiseModel {
    pub fn validate(&self) -> Result<()> {
        self.v0_raw.validate()?;
        if !(self.filter_fwhm_hz > 0.0) || !self.filter_fwhm_hz.is_finite() {
            return Err(Error::invalid(
                "pump.filter_fwhm_hz",
                "filter_fwhm_hz > 0",
                self.filter_fwhm_hz,
            ));
        }
        if let Some(e) = self.v0_raw_err {
            if !(e >= 0.0) {
                return Err(Error::invalid("pump.v0_raw_err", "v0_raw_err >= 0", e));
            }
        }
        Ok(())
    }

    /// Power transmission of the filter at sideband frequency `freq_hz`.
    fn filter_transmission(&self, freq_hz: f64) -> f64 {
        if !self.filter_enabled {
            return 1.0;
        }
        let x = freq_hz / (self.filter_fwhm_hz / 2.0);
        1.0 / (1.0 + x * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub quantum_efficiency: f64,
    pub visibility: f64,
    #[serde(default)]
    pub extra_electronic_loss: f64,
}

impl DetectionChain {
    pub fn ideal() -> Self {
        Self {
            quantum_efficiency: 1.0,
            visibility: 1.0,
            extra_electronic_loss: 0.0,
        }
    }

    /// `η = qe · visibility² · (1 − extra)`.
    pub fn efficiency(&self) -> f64 {
        self.quantum_efficiency * self.visibility * self.visibility * (1.0 - self.extra_electronic_loss)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(Error::invalid(
                "detection.quantum_efficiency",
                "0 < quantum_efficiency <= 1",
                self.quantum_efficiency,
            ));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(Error::invalid(
                "detection.visibility",
                "0 < visibility <= 1",
                self.visibility,
            ));
        }
        if !(self.extra_electronic_loss >= 0.0 && self.extra_electronic_loss < 1.0) {
            return Err(Error::invalid(
                "detection.extra_electronic_loss",
                "0 <= extra_electronic_loss < 1",
                self.extra_electronic_loss,
            ));
        }
        Ok(())
    }
}

/// Source (pre-detection) individual-beam variance vs frequency, in dB.
///
/// Entries are linearly interpolated in dB and clamped outside the table.
/// The spectra raise the value, when needed, to the smallest level
/// compatible with the uncertainty principle given the rotated-mode
/// variances at that frequency.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IndividualNoiseTable {
    pub entries: Vec<IndividualNoiseEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndividualNoiseEntry {
    pub freq_hz: f64,
    pub db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err_db: Option<f64>,
}

impl IndividualNoiseTable {
    pub fn constant_db(db: f64) -> Self {
        Self {
            entries: vec![IndividualNoiseEntry {
                freq_hz: 0.0,
                db,
                err_db: None,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.entries.windows(2) {
            if !(w[1].freq_hz > w[0].freq_hz) {
                return Err(Error::invalid(
                    "v_ind.freq_hz",
                    "strictly increasing frequencies",
                    w[1].freq_hz,
                ));
            }
        }
        for e in &self.entries {
            if !e.db.is_finite() {
                return Err(Error::invalid("v_ind.db", "a finite number", e.db));
            }
        }
        Ok(())
    }

    /// Linear variance and its 1-σ error at `freq_hz`; shot noise if empty.
    pub fn at(&self, freq_hz: f64) -> (f64, Option<f64>) {
        if self.entries.is_empty() {
            return (1.0, None);
        }
        let pts: Vec<(f64, f64)> = self.entries.iter().map(|e| (e.freq_hz, e.db)).collect();
        let db = interpolate_clamped(&pts, freq_hz);
        let err_pts: Vec<(f64, f64)> = self
            .entries
            .iter()
            .filter_map(|e| e.err_db.map(|err| (e.freq_hz, err)))
            .collect();
        let linear = 10f64.powf(db / 10.0);
        let err = if err_pts.is_empty() {
            None
        } else {
            Some(std::f64::consts::LN_10 / 10.0 * linear * interpolate_clamped(&err_pts, freq_hz))
        };
        (linear, err)
    }
}

/// Noise record at one analysis frequency, in detected shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub freq_hz: f64,
    pub omega: f64,
    /// `⟨ΔX₋⟩²`
    pub g_x: f64,
    /// `⟨ΔY₊⟩²`
    pub g_y: f64,
    pub v_ind_x: f64,
    pub v_ind_y: f64,
    pub err_g_x: Option<f64>,
    pub err_g_y: Option<f64>,
    pub err_v_ind_x: Option<f64>,
    pub err_v_ind_y: Option<f64>,
}

impl NoisePoint {
    /// A point from scalar variances with no analysis frequency attached.
    pub fn from_variances(g_x: f64, g_y: f64, v_ind_x: f64, v_ind_y: f64) -> Self {
        Self {
            freq_hz: 0.0,
            omega: 0.0,
            g_x,
            g_y,
            v_ind_x,
            v_ind_y,
            err_g_x: None,
            err_g_y: None,
            err_v_ind_x: None,
            err_v_ind_y: None,
        }
    }
}

pub fn normalized_frequency(freq_hz: f64, params: &OpoParams) -> f64 {
    freq_hz / (params.cavity_fwhm_hz / 2.0)
}

/// `G_X = 1 − T/(T+μ) · 1/(1+Ω²)`, noise of the difference amplitude quadrature.
pub fn g_x_spectrum(omega: f64, params: &OpoParams) -> Result<f64> {
    let escape = params.escape_efficiency()?;
    Ok(1.0 - escape / (1.0 + omega * omega))
}

/// `G_Y = 1 − T/(T+μ) · [1 − 2(V₀−1)(σ−1)] / (Ω²+σ²)`, noise of the sum phase
/// quadrature degraded by pump phase noise `v0_at_freq`.
pub fn g_y_spectrum(omega: f64, params: &OpoParams, v0_at_freq: f64) -> Result<f64> {
    if !(v0_at_freq >= 1.0) {
        return Err(Error::invalid("v0", "v0 >= 1", v0_at_freq));
    }
    if !(params.sigma_pump >= 1.0) {
        return Err(Error::invalid(
            "sigma_pump",
            "sigma_pump >= 1",
            params.sigma_pump,
        ));
    }
    let escape = params.escape_efficiency()?;
    let s = params.sigma_pump;
    let numerator = 1.0 - 2.0 * (v0_at_freq - 1.0) * (s - 1.0);
    Ok(1.0 - escape * numerator / (omega * omega + s * s))
}

/// Pump phase noise after the filtering cavity: the excess above shot noise
/// is attenuated by the cavity Lorentzian.
pub fn filtered_pump_noise(freq_hz: f64, noise: &PumpNoiseModel) -> f64 {
    let raw = noise.v0_raw.at(freq_hz);
    1.0 + (raw - 1.0) * noise.filter_transmission(freq_hz)
}

/// Beam-splitter loss model `ηV + (1 − η)`.
pub fn apply_detection(variance_source: f64, chain: &DetectionChain) -> f64 {
    let eta = chain.efficiency();
    eta * variance_source + (1.0 - eta)
}

/// Everything needed to turn an analysis frequency into a [`NoisePoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct Apparatus {
    pub opo: OpoParams,
    pub pump: PumpNoiseModel,
    pub detection: DetectionChain,
    pub v_ind: IndividualNoiseTable,
}

impl Apparatus {
    pub fn validate(&self) -> Result<()> {
        self.opo.validate()?;
        self.pump.validate()?;
        self.detection.validate()?;
        self.v_ind.validate()
    }

    pub fn point_at(&self, freq_hz: f64) -> Result<NoisePoint> {
        noise_point(freq_hz, &self.opo, &self.pump, &self.detection, &self.v_ind)
    }
}

fn noise_point(
    freq_hz: f64,
    params: &OpoParams,
    noise: &PumpNoiseModel,
    chain: &DetectionChain,
    v_ind_model: &IndividualNoiseTable,
) -> Result<NoisePoint> {
    if !(freq_hz >= 0.0) || !freq_hz.is_finite() {
        return Err(Error::invalid("freq_hz", "freq_hz >= 0", freq_hz));
    }
    let omega = normalized_frequency(freq_hz, params);
    let v0 = filtered_pump_noise(freq_hz, noise);
    let gx_src = g_x_spectrum(omega, params)?;
    let gy_src = g_y_spectrum(omega, params, v0)?;
    if !(gx_src > 0.0) {
        return Err(Error::NonPositive {
            what: "source g_x",
            value: gx_src,
        });
    }
    if !(gy_src > 0.0) {
        return Err(Error::NonPositive {
            what: "source g_y",
            value: gy_src,
        });
    }

    let (v_table, v_table_err) = v_ind_model.at(freq_hz);
    // smallest phase-insensitive individual variance keeping both rotated
    // modes at or above the Heisenberg bound
    let floor = f64::max((1.0 / gy_src + gx_src) / 2.0, (1.0 / gx_src + gy_src) / 2.0);
    let (v_src, v_src_err) = if v_table >= floor {
        (v_table, v_table_err)
    } else {
        (floor, None)
    };

    let eta = chain.efficiency();
    let omega_term = omega * omega + params.sigma_pump * params.sigma_pump;
    let s1 = params.sigma_pump - 1.0;
    let numerator = 1.0 - 2.0 * (v0 - 1.0) * s1;
    let d_escape = params.escape_efficiency_dmu();

    // first-order propagation from mu_loss and v0_raw uncertainties
    let err_g_x = params
        .mu_loss_err
        .map(|e| eta * (d_escape / (1.0 + omega * omega)).abs() * e);
    let err_gy_mu = params
        .mu_loss_err
        .map(|e| (d_escape * numerator / omega_term).abs() * e);
    let escape = params.escape_efficiency()?;
    let err_gy_v0 = noise
        .v0_raw_err
        .map(|e| (escape * 2.0 * s1 / omega_term * noise.filter_transmission(freq_hz)).abs() * e);
    let err_g_y = match (err_gy_mu, err_gy_v0) {
        (None, None) => None,
        (a, b) => Some(eta * (a.unwrap_or(0.0).powi(2) + b.unwrap_or(0.0).powi(2)).sqrt()),
    };
    let err_v = v_src_err.map(|e| eta * e);

    Ok(NoisePoint {
        freq_hz,
        omega,
        g_x: apply_detection(gx_src, chain),
        g_y: apply_detection(gy_src, chain),
        v_ind_x: apply_detection(v_src, chain),
        v_ind_y: apply_detection(v_src, chain),
        err_g_x,
        err_g_y,
        err_v_ind_x: err_v,
        err_v_ind_y: err_v,
    })
}

/// Detected noise record at each frequency of an ascending, non-empty list.
pub fn spectrum_sweep(
    freqs: &[f64],
    params: &OpoParams,
    noise: &PumpNoiseModel,
    chain: &DetectionChain,
    v_ind_model: &IndividualNoiseTable,
) -> Result<Vec<NoisePoint>> {
    if freqs.is_empty() {
        return Err(Error::invalid("freqs", "a non-empty frequency list", "[]"));
    }
    if let Some(w) = freqs.windows(2).find(|w| w[1] < w[0]) {
        return Err(Error::invalid("freqs", "ascending frequencies", w[1]));
    }
    params.validate()?;
    noise.validate()?;
    chain.validate()?;
    if (params.sigma_pump - 1.0).abs() > SIGMA_WARN_DISTANCE {
        log::warn!(
            "sigma_pump = {} is far from threshold; pump-noise coupling may not hold",
            params.sigma_pump
        );
    }
    freqs
        .iter()
        .map(|&f| {
            noise_point(f, params, noise, chain, v_ind_model).map_err(|e| Error::AtFrequency {
                freq_hz: f,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn build_state_at(point: &NoisePoint) -> Result<TwoModeCovariance> {
    build_covariance(point.g_x, point.g_y, point.v_ind_x, point.v_ind_y)
}

fn interpolate_clamped(pts: &[(f64, f64)], x: f64) -> f64 {
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = pts.partition_point(|p| p.0 <= x);
    let (x0, y0) = pts[i - 1];
    let (x1, y1) = pts[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}
