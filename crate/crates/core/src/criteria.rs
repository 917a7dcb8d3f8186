//! Inseparability (product and sum forms) and Reid EPR criteria.
//!
//! Uncertainties are independent 1-σ errors propagated to first order.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{conditional_variance, check_physical, Mode, QuadratureSelector, TwoModeCovariance};
use crate::model::NoisePoint;

/// A value with a 1-σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

impl Estimate {
    pub fn new(value: f64, err: f64) -> Self {
        Self { value, err }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, err: 0.0 }
    }
}

impl From<f64> for Estimate {
    fn from(value: f64) -> Self {
        Estimate::exact(value)
    }
}

/// Decibels relative to shot noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbValue {
    pub db: f64,
    #[serde(default)]
    pub err_db: Option<f64>,
}

impl DbValue {
    pub fn new(db: f64, err_db: f64) -> Self {
        Self {
            db,
            err_db: Some(err_db),
        }
    }

    pub fn exact(db: f64) -> Self {
        Self { db, err_db: None }
    }
}

pub fn db_to_linear(v: DbValue) -> Estimate {
    let value = 10f64.powf(v.db / 10.0);
    let err = LN_10 / 10.0 * value * v.err_db.unwrap_or(0.0);
    Estimate { value, err }
}

pub fn linear_to_db(value: f64) -> f64 {
    10.0 * value.log10()
}

/// `G_X · G_Y`; below 1 for inseparable states.
pub fn mancini(g_x: Estimate, g_y: Estimate) -> Estimate {
    Estimate {
        value: g_x.value * g_y.value,
        err: (g_y.value * g_x.err).hypot(g_x.value * g_y.err),
    }
}

/// `(G_X + G_Y)/2`, the "separability"; below 1 for inseparable states.
pub fn duan(g_x: Estimate, g_y: Estimate) -> Estimate {
    Estimate {
        value: 0.5 * (g_x.value + g_y.value),
        err: 0.5 * g_x.err.hypot(g_y.err),
    }
}

/// Conditional-variance factor `2G − G²/V` and its partials `(∂/∂G, ∂/∂V)`.
fn epr_factor(g: f64, v: f64) -> (f64, f64, f64) {
    (2.0 * g - g * g / v, 2.0 - 2.0 * g / v, g * g / (v * v))
}

/// `(2G_Y − G_Y²/⟨ΔY⟩²)(2G_X − G_X²/⟨ΔX⟩²)`, the EPR product in terms of the
/// rotated-mode and individual-beam variances.
pub fn epr_closed_form(g_x: Estimate, g_y: Estimate, v_x: Estimate, v_y: Estimate) -> Result<Estimate> {
    if !(v_x.value > 0.0) {
        return Err(Error::NonPositive {
            what: "v_x",
            value: v_x.value,
        });
    }
    if !(v_y.value > 0.0) {
        return Err(Error::NonPositive {
            what: "v_y",
            value: v_y.value,
        });
    }
    let (fx, dfx_dg, dfx_dv) = epr_factor(g_x.value, v_x.value);
    let (fy, dfy_dg, dfy_dv) = epr_factor(g_y.value, v_y.value);
    if !(fx > 0.0) {
        return Err(Error::EprFactor {
            factor: "x",
            value: fx,
        });
    }
    if !(fy > 0.0) {
        return Err(Error::EprFactor {
            factor: "y",
            value: fy,
        });
    }
    let terms = [
        fy * dfx_dg * g_x.err,
        fy * dfx_dv * v_x.err,
        fx * dfy_dg * g_y.err,
        fx * dfy_dv * v_y.err,
    ];
    Ok(Estimate {
        value: fx * fy,
        err: terms.iter().map(|t| t * t).sum::<f64>().sqrt(),
    })
}

/// `V(X₁|X₂) · V(Y₁|Y₂)` from a signal/idler covariance matrix.
pub fn epr_from_covariance(cov: &TwoModeCovariance) -> Result<f64> {
    let vx = conditional_variance(
        cov,
        QuadratureSelector::x(Mode::SIGNAL),
        QuadratureSelector::x(Mode::IDLER),
    )?;
    let vy = conditional_variance(
        cov,
        QuadratureSelector::y(Mode::SIGNAL),
        QuadratureSelector::y(Mode::IDLER),
    )?;
    Ok(vx * vy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EprOutcome {
    Evaluated(Estimate),
    /// A conditional-variance factor of the closed form is non-positive.
    NotEvaluable { factor: &'static str, value: f64 },
}

impl EprOutcome {
    pub fn estimate(&self) -> Option<Estimate> {
        match self {
            EprOutcome::Evaluated(e) => Some(*e),
            EprOutcome::NotEvaluable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriteriaResult {
    pub mancini: Estimate,
    pub duan: Estimate,
    pub epr: EprOutcome,
    /// EPR product via conditional variances of the rebuilt covariance,
    /// present only when that state is physical.
    pub epr_covariance: Option<f64>,
    pub verdict_inseparable_mancini: bool,
    pub verdict_inseparable_duan: bool,
    pub verdict_epr: bool,
}

fn estimate_of(value: f64, err: Option<f64>) -> Estimate {
    Estimate::new(value, err.unwrap_or(0.0))
}

pub fn evaluate_all(point: &NoisePoint) -> Result<CriteriaResult> {
    for (what, value) in [
        ("g_x", point.g_x),
        ("g_y", point.g_y),
        ("v_ind_x", point.v_ind_x),
        ("v_ind_y", point.v_ind_y),
    ] {
        if !(value > 0.0) {
            return Err(Error::NonPositive { what, value });
        }
    }
    let gx = estimate_of(point.g_x, point.err_g_x);
    let gy = estimate_of(point.g_y, point.err_g_y);
    let vx = estimate_of(point.v_ind_x, point.err_v_ind_x);
    let vy = estimate_of(point.v_ind_y, point.err_v_ind_y);

    let m = mancini(gx, gy);
    let d = duan(gx, gy);
    let epr = match epr_closed_form(gx, gy, vx, vy) {
        Ok(e) => EprOutcome::Evaluated(e),
        Err(Error::EprFactor { factor, value }) => EprOutcome::NotEvaluable { factor, value },
        Err(e) => return Err(e),
    };

    let epr_covariance = match crate::gaussian::symmetric_covariance(gx.value, gy.value, vx.value, vy.value) {
        Ok(cov) if check_physical(&cov).physical => Some(epr_from_covariance(&cov)?),
        _ => None,
    };
    if let (EprOutcome::Evaluated(e), Some(c)) = (epr, epr_covariance) {
        debug_assert!((e.value - c).abs() <= 1e-9 * e.value.max(1.0));
    }

    Ok(CriteriaResult {
        mancini: m,
        duan: d,
        epr,
        epr_covariance,
        verdict_inseparable_mancini: m.value < 1.0,
        verdict_inseparable_duan: d.value < 1.0,
        verdict_epr: matches!(epr, EprOutcome::Evaluated(e) if e.value < 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{build_covariance, symmetric_covariance};
    use approx::assert_abs_diff_eq;

    #[test]
    fn db_conversion_examples() {
        assert_eq!(db_to_linear(DbValue::exact(0.0)).value, 1.0);
        let e = db_to_linear(DbValue::new(-1.7, 0.8));
        assert_abs_diff_eq!(e.value, 0.6761, epsilon = 1e-4);
        assert_abs_diff_eq!(e.err, 0.1245, epsilon = 1e-4);
        let e = db_to_linear(DbValue::new(6.5, 0.5));
        assert_abs_diff_eq!(e.value, 4.467, epsilon = 1e-3);
        assert_abs_diff_eq!(e.err, 0.514, epsilon = 1e-3);
        assert_abs_diff_eq!(linear_to_db(e.value), 6.5, epsilon = 1e-12);
    }

    #[test]
    fn mancini_examples() {
        assert_eq!(mancini(1.0.into(), 1.0.into()).value, 1.0);
        assert_abs_diff_eq!(mancini(0.6761.into(), 0.8318.into()).value, 0.5624, epsilon = 1e-4);
        assert_abs_diff_eq!(mancini(0.5370.into(), 0.8913.into()).value, 0.4786, epsilon = 1e-4);
    }

    #[test]
    fn duan_examples() {
        assert_eq!(duan(1.0.into(), 1.0.into()).value, 1.0);
        let d = duan(Estimate::new(0.6761, 0.1246), Estimate::new(0.8318, 0.1341));
        assert_abs_diff_eq!(d.value, 0.75395, epsilon = 1e-5);
        assert_abs_diff_eq!(d.err, 0.0915, epsilon = 1e-4);
        assert_abs_diff_eq!(duan(0.5370.into(), 0.8913.into()).value, 0.71415, epsilon = 1e-5);
    }

    #[test]
    fn epr_closed_form_examples() {
        let one = Estimate::exact(1.0);
        assert_eq!(epr_closed_form(one, one, one, one).unwrap().value, 1.0);
        let e = epr_closed_form(0.6761.into(), 0.8318.into(), one, one).unwrap();
        assert_abs_diff_eq!(e.value, 0.870, epsilon = 1e-3);
        let v = Estimate::exact(4.467);
        let e = epr_closed_form(0.5370.into(), 0.8913.into(), v, v).unwrap();
        assert_abs_diff_eq!(e.value, 1.620, epsilon = 1e-3);
    }

    #[test]
    fn epr_closed_form_refuses_negative_factor() {
        // V < G/2 makes 2G − G²/V negative
        let err = epr_closed_form(0.9.into(), 0.8.into(), 0.3.into(), 1.0.into()).unwrap_err();
        assert!(matches!(err, Error::EprFactor { factor: "x", .. }));
        let err = epr_closed_form(0.9.into(), 0.8.into(), 1.0.into(), 0.3.into()).unwrap_err();
        assert!(matches!(err, Error::EprFactor { factor: "y", .. }));
    }

    #[test]
    fn epr_closed_form_error_matches_finite_differences() {
        let base = [0.6761, 0.8318, 1.1, 1.3];
        let errs = [0.12, 0.13, 0.05, 0.07];
        let f = |p: [f64; 4]| {
            epr_closed_form(p[0].into(), p[1].into(), p[2].into(), p[3].into())
                .unwrap()
                .value
        };
        let mut var = 0.0;
        for k in 0..4 {
            let h = 1e-6;
            let mut hi = base;
            hi[k] += h;
            let mut lo = base;
            lo[k] -= h;
            let d = (f(hi) - f(lo)) / (2.0 * h);
            var += (d * errs[k]).powi(2);
        }
        let e = epr_closed_form(
            Estimate::new(base[0], errs[0]),
            Estimate::new(base[1], errs[1]),
            Estimate::new(base[2], errs[2]),
            Estimate::new(base[3], errs[3]),
        )
        .unwrap();
        assert_abs_diff_eq!(e.err, var.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn epr_covariance_route_examples() {
        assert_abs_diff_eq!(
            epr_from_covariance(&TwoModeCovariance::vacuum()).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let one = Estimate::exact(1.0);
        let cov = symmetric_covariance(0.6761, 0.8318, 1.0, 1.0).unwrap();
        let closed = epr_closed_form(0.6761.into(), 0.8318.into(), one, one).unwrap().value;
        assert_abs_diff_eq!(epr_from_covariance(&cov).unwrap(), closed, epsilon = 1e-12);

        let cov = build_covariance(0.5370, 0.8913, 4.467, 4.467).unwrap();
        assert_abs_diff_eq!(epr_from_covariance(&cov).unwrap(), 1.620, epsilon = 1e-3);
    }

    #[test]
    fn evaluate_all_vacuum() {
        let r = evaluate_all(&NoisePoint::from_variances(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(r.mancini.value, 1.0);
        assert_eq!(r.duan.value, 1.0);
        assert_eq!(r.epr.estimate().unwrap().value, 1.0);
        assert!(!r.verdict_inseparable_mancini && !r.verdict_inseparable_duan && !r.verdict_epr);
        assert_eq!(r.epr_covariance, Some(1.0));
    }

    #[test]
    fn evaluate_all_measured_20mhz() {
        let gx = db_to_linear(DbValue::new(-1.7, 0.8));
        let gy = db_to_linear(DbValue::new(-0.8, 0.7));
        let mut p = NoisePoint::from_variances(gx.value, gy.value, 1.0, 1.0);
        p.err_g_x = Some(gx.err);
        p.err_g_y = Some(gy.err);
        let r = evaluate_all(&p).unwrap();
        assert_abs_diff_eq!(r.mancini.value, 0.562, epsilon = 1e-3);
        assert_abs_diff_eq!(r.duan.value, 0.754, epsilon = 1e-3);
        assert_abs_diff_eq!(r.epr.estimate().unwrap().value, 0.870, epsilon = 1e-3);
        assert!(r.verdict_inseparable_mancini && r.verdict_inseparable_duan && r.verdict_epr);
        // shot-noise individual beams at this squeezing are below the Heisenberg bound
        assert_eq!(r.epr_covariance, None);
    }

    #[test]
    fn evaluate_all_records_not_evaluable() {
        let r = evaluate_all(&NoisePoint::from_variances(0.9, 0.8, 0.3, 1.0)).unwrap();
        assert!(matches!(r.epr, EprOutcome::NotEvaluable { factor: "x", .. }));
        assert!(!r.verdict_epr);
    }

    #[test]
    fn zero_input_errors_give_zero_output_errors() {
        let one = Estimate::exact(1.3);
        let g = Estimate::exact(0.7);
        assert_eq!(mancini(g, one).err, 0.0);
        assert_eq!(duan(g, one).err, 0.0);
        assert_eq!(epr_closed_form(g, g, one, one).unwrap().err, 0.0);
    }
}
