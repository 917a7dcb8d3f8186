//! Browser bindings: noise spectra, homodyne traces and criteria from dB levels.
//!
//! Every function returns a flat `Vec<f64>` (a `Float64Array` in JS) or
//! throws a string on invalid input.

use wasm_bindgen::prelude::*;

use opo_epr::config::TraceMode;
use opo_epr::criteria::{db_to_linear, evaluate_all, linear_to_db, DbValue};
use opo_epr::model::{NoisePoint, PumpNoiseSpectrum};
use opo_epr::run;
use opo_epr::RunConfig;

fn js_err(e: opo_epr::Error) -> JsError {
    JsError::new(&format!("{}: {e}", e.kind()))
}

/// Default apparatus with the knobs exposed on the page overridden.
fn configured(mu_loss: f64, pump_power_ratio: f64, v0_raw: f64, filter_enabled: bool) -> Result<RunConfig, opo_epr::Error> {
    let mut c = RunConfig::shipped_default();
    c.apparatus.opo.mu_loss = mu_loss;
    c.apparatus.opo.sigma_pump = pump_power_ratio.sqrt();
    c.apparatus.pump.v0_raw = PumpNoiseSpectrum::Constant(v0_raw);
    c.apparatus.pump.filter_enabled = filter_enabled;
    c.apparatus.validate()?;
    Ok(c)
}

/// Detected spectra as rows of `[freq_hz, g_x_db, g_y_db, v_ind_db]`.
pub fn spectra_rows(
    mu_loss: f64,
    pump_power_ratio: f64,
    v0_raw: f64,
    filter_enabled: bool,
    min_hz: f64,
    max_hz: f64,
    points: usize,
) -> Result<Vec<f64>, opo_epr::Error> {
    let c = configured(mu_loss, pump_power_ratio, v0_raw, filter_enabled)?;
    let freqs = run::frequency_grid(min_hz, max_hz, points)?;
    let pts = run::sweep(&c, &freqs)?;
    Ok(pts
        .iter()
        .flat_map(|p| [p.freq_hz, linear_to_db(p.g_x), linear_to_db(p.g_y), linear_to_db(p.v_ind_x)])
        .collect())
}

/// Homodyne variance of one rotated mode over a full LO turn,
/// as rows of `[phase_rad, variance_db]`.
pub fn trace_rows(
    mu_loss: f64,
    pump_power_ratio: f64,
    v0_raw: f64,
    filter_enabled: bool,
    freq_hz: f64,
    plus: bool,
    phase_points: usize,
) -> Result<Vec<f64>, opo_epr::Error> {
    let c = configured(mu_loss, pump_power_ratio, v0_raw, filter_enabled)?;
    let mode = if plus { TraceMode::Plus } else { TraceMode::Minus };
    let p = c.apparatus.point_at(freq_hz)?;
    let t = run::trace_from_point(&p, mode, phase_points, c.trace.rbw_hz, c.trace.vbw_hz)?;
    Ok(t.phases
        .iter()
        .zip(&t.variances)
        .flat_map(|(&ph, &v)| [ph, linear_to_db(v)])
        .collect())
}

/// `[mancini, err, duan, err, epr, err]`; EPR entries are NaN when the
/// product is not evaluable.
pub fn criteria_values(
    g_x_db: f64,
    g_x_err_db: f64,
    g_y_db: f64,
    g_y_err_db: f64,
    v_ind_db: f64,
) -> Result<Vec<f64>, opo_epr::Error> {
    let gx = db_to_linear(DbValue::new(g_x_db, g_x_err_db));
    let gy = db_to_linear(DbValue::new(g_y_db, g_y_err_db));
    let v = db_to_linear(DbValue::exact(v_ind_db)).value;
    let mut point = NoisePoint::from_variances(gx.value, gy.value, v, v);
    point.err_g_x = Some(gx.err);
    point.err_g_y = Some(gy.err);
    let r = evaluate_all(&point)?;
    let epr = r.epr.estimate();
    Ok(vec![
        r.mancini.value,
        r.mancini.err,
        r.duan.value,
        r.duan.err,
        epr.map_or(f64::NAN, |e| e.value),
        epr.map_or(f64::NAN, |e| e.err),
    ])
}

#[wasm_bindgen]
pub fn spectra(
    mu_loss: f64,
    pump_power_ratio: f64,
    v0_raw: f64,
    filter_enabled: bool,
    min_hz: f64,
    max_hz: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    spectra_rows(mu_loss, pump_power_ratio, v0_raw, filter_enabled, min_hz, max_hz, points).map_err(js_err)
}

#[wasm_bindgen]
pub fn homodyne_trace(
    mu_loss: f64,
    pump_power_ratio: f64,
    v0_raw: f64,
    filter_enabled: bool,
    freq_hz: f64,
    plus: bool,
    phase_points: usize,
) -> Result<Vec<f64>, JsError> {
    trace_rows(mu_loss, pump_power_ratio, v0_raw, filter_enabled, freq_hz, plus, phase_points).map_err(js_err)
}

#[wasm_bindgen]
pub fn criteria(
    g_x_db: f64,
    g_x_err_db: f64,
    g_y_db: f64,
    g_y_err_db: f64,
    v_ind_db: f64,
) -> Result<Vec<f64>, JsError> {
    criteria_values(g_x_db, g_x_err_db, g_y_db, g_y_err_db, v_ind_db).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spectra_have_four_columns() {
        let rows = spectra_rows(0.036, 1.1, 100.7, true, 1e6, 30e6, 30).unwrap();
        assert_eq!(rows.len(), 120);
        let at_20 = rows.chunks(4).find(|r| r[0] == 20e6).unwrap();
        assert!((at_20[1] + 1.697).abs() < 1e-3);
    }

    #[test]
    fn minus_trace_dips_below_shot_noise() {
        let rows = trace_rows(0.036, 1.1, 100.7, true, 20e6, false, 90).unwrap();
        let min = rows.chunks(2).map(|r| r[1]).fold(f64::INFINITY, f64::min);
        assert!((min + 1.697).abs() < 1e-3);
    }

    #[test]
    fn measured_levels_give_reference_criteria() {
        let c = criteria_values(-1.7, 0.8, -0.8, 0.7, 0.0).unwrap();
        assert!((c[0] - 0.562).abs() < 1e-3);
        assert!((c[2] - 0.754).abs() < 1e-3);
        assert!((c[4] - 0.870).abs() < 1e-3);
    }

    #[test]
    fn negative_loss_is_rejected() {
        let e = spectra_rows(-0.1, 1.1, 100.7, true, 1e6, 30e6, 30).unwrap_err();
        assert_eq!(e.kind(), "validation");
    }
}
