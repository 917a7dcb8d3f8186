//! Run configuration: apparatus parameters plus per-scenario settings, read
//! from a TOML file. Unknown keys anywhere in the file are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fit::{Bounds, FreeParam, FreeParameter, Observation, Quantity};
use crate::criteria::DbValue;
use crate::model::{
    Apparatus, DetectionChain, IndividualNoiseEntry, IndividualNoiseTable, OpoParams,
    PumpNoiseModel, PumpNoiseSpectrum,
};

/// The shipped configuration describing the reference apparatus.
pub const DEFAULT_CONFIG: &str = include_str!("../data/default.toml");
/// The shipped observation file used by the default `fit` scenario.
pub const DEFAULT_OBSERVATIONS: &str = include_str!("../data/observations.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceMode {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectraSettings {
    pub min_hz: f64,
    pub max_hz: f64,
    pub points: usize,
}

impl Default for SpectraSettings {
    fn default() -> Self {
        Self {
            min_hz: 1e6,
            max_hz: 30e6,
            points: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriteriaSettings {
    pub freq_hz: f64,
}

impl Default for CriteriaSettings {
    fn default() -> Self {
        Self { freq_hz: 20e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSettings {
    pub freq_hz: f64,
    pub mode: TraceMode,
    pub phase_points: usize,
    /// Spectrum-analyzer resolution bandwidth; recorded, not simulated.
    pub rbw_hz: f64,
    /// Spectrum-analyzer video bandwidth; recorded, not simulated.
    pub vbw_hz: f64,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            freq_hz: 3.5e6,
            mode: TraceMode::Minus,
            phase_points: 360,
            rbw_hz: 100e3,
            vbw_hz: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitBounds {
    pub mu_loss: Bounds,
    pub v0_raw_level: Bounds,
    pub v_ind_level: Bounds,
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            mu_loss: Bounds { lo: 1e-3, hi: 0.5 },
            v0_raw_level: Bounds { lo: 1.0, hi: 1000.0 },
            v_ind_level: Bounds { lo: 0.5, hi: 20.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSettings {
    /// Observation CSV, relative to the config file.
    pub observations: Option<String>,
    pub free: Vec<FreeParam>,
    pub bounds: FitBounds,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            observations: None,
            free: vec![FreeParam::MuLoss, FreeParam::V0RawLevel],
            bounds: FitBounds::default(),
        }
    }
}

impl FitSettings {
    pub fn free_parameters(&self) -> Vec<FreeParameter> {
        self.free
            .iter()
            .map(|&p| {
                let b = match p {
                    FreeParam::MuLoss => self.bounds.mu_loss,
                    FreeParam::V0RawLevel => self.bounds.v0_raw_level,
                    FreeParam::VIndLevel => self.bounds.v_ind_level,
                };
                FreeParameter { param: p, bounds: b }
            })
            .collect()
    }
}

/// Measured locked-quadrature noise levels used for comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSettings {
    pub freq_hz: f64,
    pub g_x_db: f64,
    pub g_x_err_db: f64,
    pub g_y_db: f64,
    pub g_y_err_db: f64,
    pub v_ind_db: f64,
    pub v_ind_err_db: Option<f64>,
    pub locked_freq_hz: f64,
    pub locked_minus_db: f64,
    pub locked_minus_err_db: f64,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self {
            freq_hz: 20e6,
            g_x_db: -1.7,
            g_x_err_db: 0.8,
            g_y_db: -0.8,
            g_y_err_db: 0.7,
            v_ind_db: 0.0,
            v_ind_err_db: None,
            locked_freq_hz: 3.5e6,
            locked_minus_db: -2.6,
            locked_minus_err_db: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub apparatus: Apparatus,
    pub spectra: SpectraSettings,
    pub criteria: CriteriaSettings,
    pub trace: TraceSettings,
    pub fit: FitSettings,
    pub reference: ReferenceSettings,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    opo: RawOpo,
    pump: RawPump,
    detection: RawDetection,
    #[serde(default)]
    v_ind: Vec<IndividualNoiseEntry>,
    #[serde(default)]
    spectra: SpectraSettings,
    #[serde(default)]
    criteria: CriteriaSettings,
    #[serde(default)]
    trace: TraceSettings,
    #[serde(default)]
    fit: FitSettings,
    #[serde(default)]
    reference: ReferenceSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOpo {
    t_out: f64,
    mu_loss: f64,
    mu_loss_err: Option<f64>,
    sigma_pump: Option<f64>,
    pump_power_ratio: Option<f64>,
    cavity_fwhm_hz: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPump {
    v0_raw: PumpNoiseSpectrum,
    v0_raw_err: Option<f64>,
    filter_fwhm_hz: f64,
    #[serde(default = "default_true")]
    filter_enabled: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    quantum_efficiency: f64,
    visibility: f64,
    #[serde(default)]
    extra_electronic_loss: f64,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_string(),
            message: e.to_string().replace('\n', " ").trim().to_string(),
        })?;

        let sigma_pump = match (raw.opo.sigma_pump, raw.opo.pump_power_ratio) {
            (Some(s), None) => s,
            (None, Some(r)) => {
                if !(r >= 1.0) {
                    return Err(Error::invalid("opo.pump_power_ratio", "pump_power_ratio >= 1", r));
                }
                OpoParams::sigma_from_power_ratio(r)
            }
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "opo.sigma_pump",
                    "either sigma_pump or pump_power_ratio, not both",
                    "both set",
                ))
            }
            (None, None) => {
                return Err(Error::invalid(
                    "opo.sigma_pump",
                    "sigma_pump or pump_power_ratio to be set",
                    "neither set",
                ))
            }
        };
        let apparatus = Apparatus {
            opo: OpoParams {
                t_out: raw.opo.t_out,
                mu_loss: raw.opo.mu_loss,
                sigma_pump,
                cavity_fwhm_hz: raw.opo.cavity_fwhm_hz,
                mu_loss_err: raw.opo.mu_loss_err,
            },
            pump: PumpNoiseModel {
                v0_raw: raw.pump.v0_raw,
                v0_raw_err: raw.pump.v0_raw_err,
                filter_fwhm_hz: raw.pump.filter_fwhm_hz,
                filter_enabled: raw.pump.filter_enabled,
            },
            detection: DetectionChain {
                quantum_efficiency: raw.detection.quantum_efficiency,
                visibility: raw.detection.visibility,
                extra_electronic_loss: raw.detection.extra_electronic_loss,
            },
            v_ind: IndividualNoiseTable { entries: raw.v_ind },
        };
        let cfg = RunConfig {
            apparatus,
            spectra: raw.spectra,
            criteria: raw.criteria,
            trace: raw.trace,
            fit: raw.fit,
            reference: raw.reference,
            base_dir: base_dir.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The shipped configuration, with paths resolved against this crate's `data/`.
    pub fn shipped_default() -> Self {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        Self::from_toml_str(DEFAULT_CONFIG, "default.toml", dir)
            .expect("shipped default config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.apparatus.validate()?;
        let s = &self.spectra;
        if !(s.min_hz >= 0.0 && s.max_hz >= s.min_hz) {
            return Err(Error::invalid("spectra", "0 <= min_hz <= max_hz", format!("[{}, {}]", s.min_hz, s.max_hz)));
        }
        if s.points == 0 {
            return Err(Error::invalid("spectra.points", "points >= 1", 0));
        }
        if !(self.criteria.freq_hz >= 0.0) {
            return Err(Error::invalid("criteria.freq_hz", "freq_hz >= 0", self.criteria.freq_hz));
        }
        let t = &self.trace;
        if !(t.freq_hz >= 0.0) {
            return Err(Error::invalid("trace.freq_hz", "freq_hz >= 0", t.freq_hz));
        }
        if t.phase_points < 2 {
            return Err(Error::invalid("trace.phase_points", "phase_points >= 2", t.phase_points));
        }
        if !(t.rbw_hz > 0.0 && t.vbw_hz > 0.0) {
            return Err(Error::invalid("trace", "rbw_hz > 0 and vbw_hz > 0", format!("{}/{}", t.rbw_hz, t.vbw_hz)));
        }
        if self.fit.free.is_empty() {
            return Err(Error::invalid("fit.free", "at least one parameter", "[]"));
        }
        Ok(())
    }

    /// Resolves the configured observation file, if any.
    pub fn observations_path(&self) -> Option<PathBuf> {
        self.fit.observations.as_ref().map(|p| self.base_dir.join(p))
    }

    /// The measured reference point: rotated-mode and individual variances
    /// with their errors, as linear values.
    pub fn reference_point(&self) -> crate::model::NoisePoint {
        use crate::criteria::db_to_linear;
        let r = &self.reference;
        let gx = db_to_linear(DbValue::new(r.g_x_db, r.g_x_err_db));
        let gy = db_to_linear(DbValue::new(r.g_y_db, r.g_y_err_db));
        let v = db_to_linear(DbValue {
            db: r.v_ind_db,
            err_db: r.v_ind_err_db,
        });
        let v_err = r.v_ind_err_db.map(|_| v.err);
        crate::model::NoisePoint {
            freq_hz: r.freq_hz,
            omega: crate::model::normalized_frequency(r.freq_hz, &self.apparatus.opo),
            g_x: gx.value,
            g_y: gy.value,
            v_ind_x: v.value,
            v_ind_y: v.value,
            err_g_x: Some(gx.err),
            err_g_y: Some(gy.err),
            err_v_ind_x: v_err,
            err_v_ind_y: v_err,
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::from_toml_str(&text, &path.display().to_string(), base)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationRecord {
    freq_hz: f64,
    quantity: Quantity,
    measured_db: f64,
    err_db: Option<f64>,
}

/// Parses an observation CSV with header `freq_hz,quantity,measured_db,err_db`.
/// Lines starting with `#` are comments; an empty `err_db` means unknown.
pub fn parse_observations(text: &str) -> Result<Vec<Observation>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize::<ObservationRecord>()
        .map(|rec| {
            let rec = rec?;
            Ok(Observation::new(
                rec.freq_hz,
                rec.quantity,
                DbValue {
                    db: rec.measured_db,
                    err_db: rec.err_db,
                },
            ))
        })
        .collect()
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_observations(&text)
}
