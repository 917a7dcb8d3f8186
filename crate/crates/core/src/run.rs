//! Scenario drivers behind the command-line subcommands. Each returns
//! in-memory tables; writing them is left to the caller.

use std::f64::consts::TAU;
use std::io::Write;

use serde::Serialize;

use crate::config::{RunConfig, TraceMode};
use crate::criteria::{evaluate_all, linear_to_db, CriteriaResult, EprOutcome};
use crate::error::{Error, Result};
use crate::fit::{fit, FitProblem, FitResult, FreeParam, Observation};
use crate::gaussian::{
    generalized_variance, rotate_basis, ModeBasis, Mode, QuadratureSelector,
};
use crate::model::{build_state_at, spectrum_sweep, NoisePoint};

pub const SPECTRA_HEADER: [&str; 7] = [
    "freq_hz", "omega", "g_x_db", "g_y_db", "v_ind_db", "g_x_err_db", "g_y_err_db",
];
pub const CRITERIA_HEADER: [&str; 8] = [
    "freq_hz", "mancini", "mancini_err", "duan", "duan_err", "epr", "epr_err", "epr_evaluable",
];
pub const TRACE_HEADER: [&str; 3] = ["phase_rad", "variance", "variance_db"];
pub const TABLE1_HEADER: [&str; 5] = [
    "criterion", "model_value", "paper_value", "paper_err", "within_error",
];
pub const LOCKED_HEADER: [&str; 6] = [
    "mode", "quadrature", "model_db", "paper_db", "paper_err_db", "within_error",
];
pub const FIT_HEADER: [&str; 7] = [
    "mu_loss", "v0_raw_level", "v_ind_level", "objective", "converged", "evaluations", "iterations",
];
pub const FIG3_TRACE_HEADER: [&str; 5] = [
    "phase_rad", "plus_variance", "plus_db", "minus_variance", "minus_db",
];

/// Reference inseparability and EPR values at 20 MHz: `(name, value, err)`.
pub const REFERENCE_CRITERIA: [(&str, f64, f64); 3] = [
    ("mancini", 0.55, 0.10),
    ("duan", 0.7, 0.1),
    ("epr", 0.85, 0.10),
];

/// Formats a number with 12 significant digits: plain decimal notation,
/// switching to exponent form below 1e-5 in magnitude.
pub fn format_number(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded != 0.0 && rounded.abs() < 1e-5 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn opt_number(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<output>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// `points` frequencies evenly spaced over `[min_hz, max_hz]`, both included.
pub fn frequency_grid(min_hz: f64, max_hz: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(Error::invalid("points", "points >= 1", 0));
    }
    if !(min_hz >= 0.0 && max_hz >= min_hz && max_hz.is_finite()) {
        return Err(Error::invalid("frequency range", "0 <= min <= max", format!("[{min_hz}, {max_hz}]")));
    }
    if points == 1 {
        return Ok(vec![min_hz]);
    }
    let step = (max_hz - min_hz) / (points - 1) as f64;
    Ok((0..points)
        .map(|k| if k == points - 1 { max_hz } else { min_hz + step * k as f64 })
        .collect())
}

fn db_err(value: f64, err: Option<f64>) -> Option<f64> {
    err.map(|e| 10.0 / std::f64::consts::LN_10 * e / value)
}

pub fn sweep(config: &RunConfig, freqs: &[f64]) -> Result<Vec<NoisePoint>> {
    let a = &config.apparatus;
    spectrum_sweep(freqs, &a.opo, &a.pump, &a.detection, &a.v_ind)
}

pub fn run_spectra(config: &RunConfig, min_hz: f64, max_hz: f64, points: usize) -> Result<Table> {
    let freqs = frequency_grid(min_hz, max_hz, points)?;
    let pts = sweep(config, &freqs)?;
    let mut t = Table::new(&SPECTRA_HEADER);
    for p in pts {
        t.push(vec![
            format_number(p.freq_hz),
            format_number(p.omega),
            format_number(linear_to_db(p.g_x)),
            format_number(linear_to_db(p.g_y)),
            format_number(linear_to_db(p.v_ind_x)),
            opt_number(db_err(p.g_x, p.err_g_x)),
            opt_number(db_err(p.g_y, p.err_g_y)),
        ]);
    }
    Ok(t)
}

pub fn criteria_at(config: &RunConfig, freq_hz: f64) -> Result<(NoisePoint, CriteriaResult)> {
    let p = config.apparatus.point_at(freq_hz).map_err(|e| Error::AtFrequency {
        freq_hz,
        source: Box::new(e),
    })?;
    Ok((p, evaluate_all(&p)?))
}

fn criteria_row(freq_hz: f64, r: &CriteriaResult) -> Vec<String> {
    let (epr, epr_err, ok) = match r.epr {
        EprOutcome::Evaluated(e) => (format_number(e.value), format_number(e.err), "true"),
        EprOutcome::NotEvaluable { .. } => (String::new(), String::new(), "false"),
    };
    vec![
        format_number(freq_hz),
        format_number(r.mancini.value),
        format_number(r.mancini.err),
        format_number(r.duan.value),
        format_number(r.duan.err),
        epr,
        epr_err,
        ok.to_string(),
    ]
}

pub fn run_criteria(config: &RunConfig, freq_hz: f64) -> Result<Table> {
    let (_, r) = criteria_at(config, freq_hz)?;
    let mut t = Table::new(&CRITERIA_HEADER);
    t.push(criteria_row(freq_hz, &r));
    Ok(t)
}

/// Homodyne variance of one rotated mode while the local-oscillator phase is scanned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomodyneTrace {
    pub freq_hz: f64,
    pub mode: &'static str,
    pub phases: Vec<f64>,
    pub variances: Vec<f64>,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
}

impl HomodyneTrace {
    pub fn min_variance(&self) -> f64 {
        self.variances.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&TRACE_HEADER);
        for (&ph, &v) in self.phases.iter().zip(&self.variances) {
            t.push(vec![format_number(ph), format_number(v), format_number(linear_to_db(v))]);
        }
        t
    }
}

/// Phase grid `k·2π/n`, `k = 0..n`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

pub fn run_trace(config: &RunConfig, freq_hz: f64, mode: TraceMode) -> Result<HomodyneTrace> {
    let p = config.apparatus.point_at(freq_hz).map_err(|e| Error::AtFrequency {
        freq_hz,
        source: Box::new(e),
    })?;
    trace_from_point(&p, mode, config.trace.phase_points, config.trace.rbw_hz, config.trace.vbw_hz)
}

pub fn trace_from_point(
    point: &NoisePoint,
    mode: TraceMode,
    phase_points: usize,
    rbw_hz: f64,
    vbw_hz: f64,
) -> Result<HomodyneTrace> {
    let state = build_state_at(point)?;
    let rotated = rotate_basis(&state, ModeBasis::SignalIdler, ModeBasis::RotatedPlusMinus)?;
    let (slot, label) = match mode {
        TraceMode::Plus => (Mode::PLUS, "plus"),
        TraceMode::Minus => (Mode::MINUS, "minus"),
    };
    let phases = phase_grid(phase_points);
    let variances = phases
        .iter()
        .map(|&th| generalized_variance(&rotated, QuadratureSelector::at_phase(slot, th)))
        .collect();
    Ok(HomodyneTrace {
        freq_hz: point.freq_hz,
        mode: label,
        phases,
        variances,
        rbw_hz,
        vbw_hz,
    })
}

pub fn fit_problem(config: &RunConfig, observations: Vec<Observation>) -> FitProblem {
    FitProblem {
        observations,
        free: config.fit.free_parameters(),
        base: config.apparatus.clone(),
    }
}

pub fn run_fit(config: &RunConfig, observations: Vec<Observation>) -> Result<(FitResult, Table)> {
    let result = fit(&fit_problem(config, observations))?;
    let value = |p: FreeParam| {
        result
            .value_of(p)
            .or_else(|| p.value_in(&result.apparatus))
    };
    let mut t = Table::new(&FIT_HEADER);
    t.push(vec![
        opt_number(value(FreeParam::MuLoss)),
        opt_number(value(FreeParam::V0RawLevel)),
        opt_number(value(FreeParam::VIndLevel)),
        format_number(result.objective),
        result.converged.to_string(),
        result.evaluations.to_string(),
        result.iterations.to_string(),
    ]);
    Ok((result, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReproduceTarget {
    Fig2,
    Fig3,
    Table1,
}

impl ReproduceTarget {
    pub fn name(self) -> &'static str {
        match self {
            ReproduceTarget::Fig2 => "fig2",
            ReproduceTarget::Fig3 => "fig3",
            ReproduceTarget::Table1 => "table1",
        }
    }
}

fn within(model: f64, reference: f64, err: f64) -> bool {
    (model - reference).abs() <= err
}

/// One row per criterion, first from the measured reference levels, then
/// (suffixed `_model`) from the model at the reference frequency.
pub fn table1(config: &RunConfig) -> Result<Table> {
    let measured = evaluate_all(&config.reference_point())?;
    let (_, modelled) = criteria_at(config, config.reference.freq_hz)?;
    let mut t = Table::new(&TABLE1_HEADER);
    for (suffix, r) in [("", measured), ("_model", modelled)] {
        for (name, value, err) in REFERENCE_CRITERIA {
            let model_value = match name {
                "mancini" => Some(r.mancini.value),
                "duan" => Some(r.duan.value),
                _ => r.epr.estimate().map(|e| e.value),
            };
            t.push(vec![
                format!("{name}{suffix}"),
                opt_number(model_value),
                format_number(value),
                format_number(err),
                model_value.is_some_and(|m| within(m, value, err)).to_string(),
            ]);
        }
    }
    Ok(t)
}

fn locked_rows(t: &mut Table, point: &NoisePoint, reference: [Option<(f64, f64)>; 2]) {
    let entries = [("plus", "Y", point.g_y), ("minus", "X", point.g_x)];
    for ((mode, quad, v), r) in entries.into_iter().zip(reference) {
        let model_db = linear_to_db(v);
        let (ref_db, err, ok) = match r {
            Some((db, err)) => (
                format_number(db),
                format_number(err),
                within(model_db, db, err).to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        t.push(vec![mode.into(), quad.into(), format_number(model_db), ref_db, err, ok]);
    }
}

/// Named CSV artifacts for a reproduction target.
pub fn run_reproduce(config: &RunConfig, target: ReproduceTarget) -> Result<Vec<(String, Table)>> {
    let r = &config.reference;
    match target {
        ReproduceTarget::Table1 => Ok(vec![("table1.csv".into(), table1(config)?)]),
        ReproduceTarget::Fig2 => {
            let p = config.apparatus.point_at(r.freq_hz)?;
            let mut t = Table::new(&LOCKED_HEADER);
            locked_rows(
                &mut t,
                &p,
                [Some((r.g_y_db, r.g_y_err_db)), Some((r.g_x_db, r.g_x_err_db))],
            );
            Ok(vec![("fig2.csv".into(), t)])
        }
        ReproduceTarget::Fig3 => {
            let f = r.locked_freq_hz;
            let p = config.apparatus.point_at(f)?;
            let tr = &config.trace;
            let plus = trace_from_point(&p, TraceMode::Plus, tr.phase_points, tr.rbw_hz, tr.vbw_hz)?;
            let minus = trace_from_point(&p, TraceMode::Minus, tr.phase_points, tr.rbw_hz, tr.vbw_hz)?;
            let mut trace = Table::new(&FIG3_TRACE_HEADER);
            for k in 0..plus.phases.len() {
                trace.push(vec![
                    format_number(plus.phases[k]),
                    format_number(plus.variances[k]),
                    format_number(linear_to_db(plus.variances[k])),
                    format_number(minus.variances[k]),
                    format_number(linear_to_db(minus.variances[k])),
                ]);
            }
            let mut locked = Table::new(&LOCKED_HEADER);
            locked_rows(
                &mut locked,
                &p,
                [None, Some((r.locked_minus_db, r.locked_minus_err_db))],
            );
            Ok(vec![
                ("fig3_trace.csv".into(), trace),
                ("fig3_locked.csv".into(), locked),
            ])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn format_number_uses_twelve_digits() {
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(20e6), "20000000");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(-1.234567890123456), "-1.23456789012");
        assert_eq!(format_number(3.483720077931e-22), "3.48372007793e-22");
        assert_eq!(format_number(0.0), "0");
    }

    #[test]
    fn frequency_grid_endpoints() {
        let g = frequency_grid(1e6, 30e6, 30).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(g[0], 1e6);
        assert_eq!(g[29], 30e6);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(frequency_grid(5e6, 9e6, 1).unwrap(), vec![5e6]);
        assert!(frequency_grid(5e6, 1e6, 3).is_err());
        assert!(frequency_grid(1e6, 5e6, 0).is_err());
    }

    #[test]
    fn vacuum_trace_is_flat() {
        let p = NoisePoint::from_variances(1.0, 1.0, 1.0, 1.0);
        let t = trace_from_point(&p, TraceMode::Plus, 64, 1e5, 300.0).unwrap();
        for v in t.variances {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn trace_minimum_is_locked_level() {
        let p = NoisePoint::from_variances(0.5370, 0.8913, 4.467, 4.467);
        let minus = trace_from_point(&p, TraceMode::Minus, 360, 1e5, 300.0).unwrap();
        assert_abs_diff_eq!(minus.min_variance(), 0.5370, epsilon = 1e-12);
        let plus = trace_from_point(&p, TraceMode::Plus, 360, 1e5, 300.0).unwrap();
        assert_abs_diff_eq!(plus.min_variance(), 0.8913, epsilon = 1e-12);
    }

    #[test]
    fn criteria_row_marks_unevaluable_epr() {
        let r = evaluate_all(&NoisePoint::from_variances(0.9, 0.8, 0.3, 1.0)).unwrap();
        let row = criteria_row(1e6, &r);
        assert_eq!(row[5], "");
        assert_eq!(row[7], "false");
    }
}
