//! Least-squares inference of the apparatus parameters that are not measured
//! directly: intracavity losses, pump phase-noise level and, optionally, the
//! individual-beam noise level.
//!
//! The search is deterministic: an exhaustive coarse grid followed by
//! coordinate descent with golden-section line searches and a pattern move
//! along the last displacement. Parameters are searched in a unit-box
//! coordinate, log-mapped when the lower bound is positive and the parameter
//! is a loss or a noise level.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::criteria::{linear_to_db, DbValue};
use crate::error::{Error, Result};
use crate::model::{Apparatus, IndividualNoiseTable, PumpNoiseSpectrum};

pub const GRID_POINTS: usize = 32;
pub const MAX_ITERATIONS: usize = 200;
pub const IMPROVEMENT_TOL: f64 = 1e-10;
/// Error assumed for observations that do not state one.
pub const DEFAULT_ERR_DB: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "GX")]
    GX,
    #[serde(rename = "GY")]
    GY,
    #[serde(rename = "VIND")]
    VInd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub freq_hz: f64,
    pub quantity: Quantity,
    pub measured: DbValue,
}

impl Observation {
    pub fn new(freq_hz: f64, quantity: Quantity, measured: DbValue) -> Self {
        Self {
            freq_hz,
            quantity,
            measured,
        }
    }

    /// Observation known only to lie in `[lo, hi]` (linear units): the dB
    /// midpoint with the dB half-width as its error.
    pub fn from_bracket(freq_hz: f64, quantity: Quantity, lo: f64, hi: f64) -> Self {
        let (a, b) = (linear_to_db(lo), linear_to_db(hi));
        Self::new(freq_hz, quantity, DbValue::new(0.5 * (a + b), 0.5 * (b - a)))
    }

    fn err_db(&self) -> f64 {
        self.measured.err_db.unwrap_or(DEFAULT_ERR_DB)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    MuLoss,
    V0RawLevel,
    VIndLevel,
}

impl FreeParam {
    pub fn name(self) -> &'static str {
        match self {
            FreeParam::MuLoss => "mu_loss",
            FreeParam::V0RawLevel => "v0_raw_level",
            FreeParam::VIndLevel => "v_ind_level",
        }
    }

    fn log_scaled(self) -> bool {
        matches!(self, FreeParam::MuLoss | FreeParam::V0RawLevel)
    }

    /// Current value of this parameter in `apparatus`, if it has a single one.
    pub fn value_in(self, apparatus: &Apparatus) -> Option<f64> {
        match self {
            FreeParam::MuLoss => Some(apparatus.opo.mu_loss),
            FreeParam::V0RawLevel => match apparatus.pump.v0_raw {
                PumpNoiseSpectrum::Constant(v) => Some(v),
                PumpNoiseSpectrum::Table(_) => None,
            },
            FreeParam::VIndLevel => match apparatus.v_ind.entries.as_slice() {
                [only] => Some(10f64.powf(only.db / 10.0)),
                _ => None,
            },
        }
    }

    fn apply(self, apparatus: &mut Apparatus, value: f64) {
        match self {
            FreeParam::MuLoss => apparatus.opo.mu_loss = value,
            FreeParam::V0RawLevel => apparatus.pump.v0_raw = PumpNoiseSpectrum::Constant(value),
            FreeParam::VIndLevel => {
                apparatus.v_ind = IndividualNoiseTable::constant_db(linear_to_db(value))
            }
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FreeParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu_loss" => Ok(FreeParam::MuLoss),
            "v0_raw_level" => Ok(FreeParam::V0RawLevel),
            "v_ind_level" => Ok(FreeParam::VIndLevel),
            other => Err(Error::invalid(
                "fit.free",
                "one of mu_loss, v0_raw_level, v_ind_level",
                other,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeParameter {
    pub param: FreeParam,
    pub bounds: Bounds,
}

impl FreeParameter {
    pub fn new(param: FreeParam, lo: f64, hi: f64) -> Self {
        Self {
            param,
            bounds: Bounds { lo, hi },
        }
    }

    fn log_mapped(&self) -> bool {
        self.param.log_scaled() && self.bounds.lo > 0.0
    }

    /// Unit coordinate `u ∈ [0, 1]` to parameter value.
    fn value(&self, u: f64) -> f64 {
        let Bounds { lo, hi } = self.bounds;
        let u = u.clamp(0.0, 1.0);
        if self.log_mapped() {
            lo * (hi / lo).powf(u)
        } else {
            lo + (hi - lo) * u
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub observations: Vec<Observation>,
    pub free: Vec<FreeParameter>,
    /// Values for everything not being fitted.
    pub base: Apparatus,
}

impl FitProblem {
    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::invalid("fit.free", "at least one free parameter", "[]"));
        }
        if self.observations.len() < self.free.len() {
            return Err(Error::invalid(
                "fit.observations",
                format!("at least {} observations", self.free.len()),
                self.observations.len(),
            ));
        }
        for (i, fp) in self.free.iter().enumerate() {
            if self.free[..i].iter().any(|o| o.param == fp.param) {
                return Err(Error::invalid("fit.free", "distinct parameters", fp.param));
            }
            let Bounds { lo, hi } = fp.bounds;
            let field = format!("fit.bounds.{}", fp.param);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(field, "finite bounds with lo < hi", format!("[{lo}, {hi}]")));
            }
            let min = match fp.param {
                FreeParam::MuLoss => 0.0,
                FreeParam::V0RawLevel => 1.0,
                FreeParam::VIndLevel => f64::MIN_POSITIVE,
            };
            if lo < min {
                return Err(Error::invalid(field, format!("lo >= {min}"), lo));
            }
        }
        for o in &self.observations {
            if !(o.freq_hz > 0.0) {
                return Err(Error::invalid("observation.freq_hz", "freq_hz > 0", o.freq_hz));
            }
            if !o.measured.db.is_finite() {
                return Err(Error::invalid("observation.measured_db", "a finite number", o.measured.db));
            }
            if let Some(e) = o.measured.err_db {
                if !(e > 0.0) {
                    return Err(Error::invalid("observation.err_db", "err_db > 0", e));
                }
            }
        }
        Ok(())
    }

    fn apparatus_for(&self, candidate: &[f64]) -> Apparatus {
        let mut app = self.base.clone();
        for (fp, &v) in self.free.iter().zip(candidate) {
            fp.param.apply(&mut app, v);
        }
        app
    }
}

/// Model prediction in dB for one observation.
pub fn predict_db(obs: &Observation, apparatus: &Apparatus) -> Result<f64> {
    let p = apparatus.point_at(obs.freq_hz)?;
    let v = match obs.quantity {
        Quantity::GX => p.g_x,
        Quantity::GY => p.g_y,
        Quantity::VInd => p.v_ind_x,
    };
    Ok(linear_to_db(v))
}

fn residuals(candidate: &[f64], problem: &FitProblem) -> Result<Vec<f64>> {
    let app = problem.apparatus_for(candidate);
    app.validate()?;
    problem
        .observations
        .iter()
        .map(|o| Ok((predict_db(o, &app)? - o.measured.db) / o.err_db()))
        .collect()
}

/// Weighted sum of squared dB residuals; `+∞` where the model is undefined.
pub fn objective(candidate: &[f64], problem: &FitProblem) -> f64 {
    match residuals(candidate, problem) {
        Ok(r) => {
            let s: f64 = r.iter().map(|x| x * x).sum();
            if s.is_finite() {
                s
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub best_params: Vec<(FreeParam, f64)>,
    /// `(predicted − measured)/err` per observation, in input order.
    pub residuals: Vec<f64>,
    pub objective: f64,
    /// True when refinement stopped on the improvement tolerance rather
    /// than the iteration cap.
    pub converged: bool,
    pub evaluations: usize,
    pub iterations: usize,
    /// The base apparatus with the fitted values substituted.
    pub apparatus: Apparatus,
}

impl FitResult {
    pub fn value_of(&self, param: FreeParam) -> Option<f64> {
        self.best_params
            .iter()
            .find(|(p, _)| *p == param)
            .map(|(_, v)| *v)
    }
}

struct Search<'a> {
    problem: &'a FitProblem,
    evaluations: usize,
}

impl Search<'_> {
    fn eval(&mut self, u: &[f64]) -> f64 {
        self.evaluations += 1;
        let x: Vec<f64> = self
            .problem
            .free
            .iter()
            .zip(u)
            .map(|(fp, &ui)| fp.value(ui))
            .collect();
        objective(&x, self.problem)
    }

    /// Minimizes along `origin + t·dir` for `t ∈ [a, b]`; returns the best
    /// `(t, f)` including the supplied `t = 0` value.
    fn line_search(&mut self, origin: &[f64], dir: &[f64], a: f64, b: f64, f0: f64) -> (f64, f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let point = |t: f64| -> Vec<f64> {
            origin
                .iter()
                .zip(dir)
                .map(|(o, d)| (o + t * d).clamp(0.0, 1.0))
                .collect()
        };
        let (mut lo, mut hi) = (a, b);
        let mut c = hi - INV_PHI * (hi - lo);
        let mut d = lo + INV_PHI * (hi - lo);
        let mut fc = self.eval(&point(c));
        let mut fd = self.eval(&point(d));
        while hi - lo > 1e-13 {
            if fc <= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - INV_PHI * (hi - lo);
                fc = self.eval(&point(c));
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + INV_PHI * (hi - lo);
                fd = self.eval(&point(d));
            }
        }
        let mut best = (0.0, f0);
        for (t, f) in [(c, fc), (d, fd)] {
            if f < best.1 {
                best = (t, f);
            }
        }
        for t in [a, b] {
            let f = self.eval(&point(t));
            if f < best.1 {
                best = (t, f);
            }
        }
        best
    }
}

pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;
    problem.base.validate()?;
    let dim = problem.free.len();
    let mut search = Search {
        problem,
        evaluations: 0,
    };

    // coarse grid, row-major over the free parameters; first minimum wins ties
    let step = 1.0 / (GRID_POINTS - 1) as f64;
    let total = GRID_POINTS.pow(dim as u32);
    let mut best_u = vec![0.0; dim];
    let mut best_f = f64::INFINITY;
    let mut u = vec![0.0; dim];
    for idx in 0..total {
        let mut rest = idx;
        for k in (0..dim).rev() {
            u[k] = (rest % GRID_POINTS) as f64 * step;
            rest /= GRID_POINTS;
        }
        let f = search.eval(&u);
        if f < best_f {
            best_f = f;
            best_u.copy_from_slice(&u);
        }
    }
    if !best_f.is_finite() {
        return Err(Error::Fit("model undefined at every grid point".into()));
    }

    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let start_u = best_u.clone();
        let start_f = best_f;
        for k in 0..dim {
            let mut dir = vec![0.0; dim];
            dir[k] = 1.0;
            let a = (-step).max(-best_u[k]);
            let b = step.min(1.0 - best_u[k]);
            let (t, f) = search.line_search(&best_u.clone(), &dir, a, b, best_f);
            if f < best_f {
                best_u[k] = (best_u[k] + t).clamp(0.0, 1.0);
                best_f = f;
            }
        }
        let dir: Vec<f64> = best_u.iter().zip(&start_u).map(|(n, o)| n - o).collect();
        if dim > 1 && dir.iter().any(|d| *d != 0.0) {
            let t_max = dir
                .iter()
                .zip(&best_u)
                .map(|(&d, &x)| {
                    if d > 0.0 {
                        (1.0 - x) / d
                    } else if d < 0.0 {
                        -x / d
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(4.0, f64::min);
            if t_max > 0.0 {
                let (t, f) = search.line_search(&best_u.clone(), &dir, 0.0, t_max, best_f);
                if f < best_f {
                    for (x, d) in best_u.iter_mut().zip(&dir) {
                        *x = (*x + t * d).clamp(0.0, 1.0);
                    }
                    best_f = f;
                }
            }
        }
        if start_f - best_f < IMPROVEMENT_TOL {
            converged = true;
            break;
        }
    }

    let best_x: Vec<f64> = problem
        .free
        .iter()
        .zip(&best_u)
        .map(|(fp, &ui)| fp.value(ui))
        .collect();
    let residuals = residuals(&best_x, problem)?;
    Ok(FitResult {
        best_params: problem
            .free
            .iter()
            .zip(&best_x)
            .map(|(fp, &v)| (fp.param, v))
            .collect(),
        residuals,
        objective: best_f,
        converged,
        evaluations: search.evaluations,
        iterations,
        apparatus: problem.apparatus_for(&best_x),
    })
}
