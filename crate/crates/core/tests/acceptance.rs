//! Acceptance checks, one PASS/FAIL line each. Exits nonzero when any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

use opo_epr::config::{parse_observations, DEFAULT_OBSERVATIONS};
use opo_epr::criteria::{
    db_to_linear, duan, epr_closed_form, epr_from_covariance, evaluate_all, linear_to_db, mancini,
    DbValue,
};
use opo_epr::fit::{fit, predict_db, FitProblem, FreeParam, FreeParameter, Observation, Quantity};
use opo_epr::gaussian::{check_physical, rotate_basis, symmetric_covariance, ModeBasis, TwoModeCovariance};
use opo_epr::model::{g_x_spectrum, g_y_spectrum, NoisePoint, OpoParams, PumpNoiseSpectrum};
use opo_epr::run;
use opo_epr::RunConfig;

const SAMPLES: usize = 1000;

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn table1_measured() -> Outcome {
    let start = Instant::now();
    let t = run::table1(&RunConfig::shipped_default()).unwrap();
    let elapsed = start.elapsed();
    let measured: Vec<&Vec<String>> = t.rows.iter().filter(|r| !r[0].ends_with("_model")).collect();
    let values: Vec<String> = measured.iter().map(|r| format!("{}={:.3}", r[0], r[1].parse::<f64>().unwrap())).collect();
    let all = measured.len() == 3 && measured.iter().all(|r| r[4] == "true");
    outcome(
        all && elapsed < Duration::from_millis(100),
        format!("{} within_error={all} ({elapsed:.2?})", values.join(" ")),
    )
}

fn six_mhz_regime() -> Outcome {
    let g_x = db_to_linear(DbValue::exact(-2.7)).value;
    let g_y = db_to_linear(DbValue::exact(-0.5)).value;
    let v = db_to_linear(DbValue::exact(6.5)).value;
    let r = evaluate_all(&NoisePoint::from_variances(g_x, g_y, v, v)).unwrap();
    let cv_x = 2.0 * g_x - g_x * g_x / v;
    let cv_y = 2.0 * g_y - g_y * g_y / v;
    let pass = (r.duan.value - 0.7).abs() <= 0.1 && cv_x > 1.0 && cv_y > 1.0 && !r.verdict_epr;
    outcome(
        pass,
        format!(
            "duan={:.3} V(X1|X2)={cv_x:.4} V(Y1|Y2)={cv_y:.4} epr_verdict={}",
            r.duan.value, r.verdict_epr
        ),
    )
}

fn model_path() -> Outcome {
    let start = Instant::now();
    let config = RunConfig::shipped_default();
    let pts = run::sweep(&config, &[3.5e6, 20e6]).unwrap();
    let elapsed = start.elapsed();
    let gx20 = linear_to_db(pts[1].g_x);
    let gy35 = pts[0].g_y;
    let pass = (gx20 + 1.7).abs() <= 0.3 && gy35 > 1.0 && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("G_X(20 MHz)={gx20:.3} dB G_Y(3.5 MHz)={gy35:.3} ({elapsed:.2?})"),
    )
}

fn route_equivalence() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let strategy = (0.1f64..=1.0, 0.1f64..=1.0, 0.0f64..10.0, 0.0f64..10.0);
    let mut worst = 0.0f64;
    let mut unphysical = 0;
    let mut example = None;
    for _ in 0..SAMPLES {
        let (g_x, g_y, dx, dy) = strategy.new_tree(&mut runner).unwrap().current();
        if g_x == 0.1 || g_y == 0.1 {
            continue;
        }
        let (v_x, v_y) = (g_x + dx, g_y + dy);
        let s = symmetric_covariance(g_x, g_y, v_x, v_y).unwrap();
        let cov = epr_from_covariance(&s).unwrap();
        let closed = epr_closed_form(g_x.into(), g_y.into(), v_x.into(), v_y.into()).unwrap().value;
        worst = worst.max((cov - closed).abs());
        if !check_physical(&s).physical {
            unphysical += 1;
            example.get_or_insert((g_x, g_y, v_x, v_y));
        }
    }
    let mut detail = format!("max|diff|={worst:.1e} unphysical={unphysical}/{SAMPLES}");
    if let Some((a, b, c, d)) = example {
        detail += &format!(" e.g. g=({a:.3},{b:.3}) v=({c:.3},{d:.3})");
    }
    outcome(worst < 1e-10 && unphysical == 0, detail)
}

fn algebraic_identities() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let spectra = (0.001f64..=1.0, 0.0f64..0.5, 0.0f64..20.0, 1.0f64..1e4);
    let pairs = (1e-3f64..10.0, 1e-3f64..10.0);
    let entries = proptest::array::uniform16(-1.0f64..1.0);
    let (mut d_spec, mut d_inv, mut violations) = (0.0f64, 0.0f64, 0);
    for _ in 0..SAMPLES {
        let (t, mu, omega, v0) = spectra.new_tree(&mut runner).unwrap().current();
        let p = OpoParams::new(t, mu, 1.0, 50e6).unwrap();
        d_spec = d_spec.max((g_x_spectrum(omega, &p).unwrap() - g_y_spectrum(omega, &p, v0).unwrap()).abs());

        let (a, b) = pairs.new_tree(&mut runner).unwrap().current();
        let d = duan(a.into(), b.into()).value;
        if mancini(a.into(), b.into()).value > d * d * (1.0 + 1e-15) {
            violations += 1;
        }

        let a = entries.new_tree(&mut runner).unwrap().current();
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = (0..4).map(|k| a[4 * i + k] * a[4 * j + k]).sum::<f64>();
            }
            m[i][i] += 1.0;
        }
        let s = TwoModeCovariance::new(m).unwrap();
        let r = rotate_basis(&s, ModeBasis::SignalIdler, ModeBasis::RotatedPlusMinus).unwrap();
        let back = rotate_basis(&r, ModeBasis::RotatedPlusMinus, ModeBasis::SignalIdler).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                d_inv = d_inv.max((back.get(i, j) - s.get(i, j)).abs());
            }
        }
    }
    outcome(
        d_spec <= 1e-14 && violations == 0 && d_inv <= 1e-12,
        format!("|g_y-g_x|max={d_spec:.1e} mancini>duan^2: {violations} involution max={d_inv:.1e}"),
    )
}

fn fit_self_consistency() -> Outcome {
    let start = Instant::now();
    let base = RunConfig::shipped_default().apparatus;
    let (mu_true, v0_true) = (0.042, 180.0);
    let mut truth = base.clone();
    truth.opo.mu_loss = mu_true;
    truth.pump.v0_raw = PumpNoiseSpectrum::Constant(v0_true);
    let observations = [
        (3.5e6, Quantity::GX),
        (20e6, Quantity::GX),
        (3.5e6, Quantity::GY),
        (6e6, Quantity::GY),
        (12e6, Quantity::GY),
    ]
    .iter()
    .map(|&(f, q)| {
        let db = predict_db(&Observation::new(f, q, DbValue::exact(0.0)), &truth).unwrap();
        Observation::new(f, q, DbValue::new(db, 0.5))
    })
    .collect();
    let synthetic = fit(&FitProblem {
        observations,
        free: vec![
            FreeParameter::new(FreeParam::MuLoss, 1e-3, 0.5),
            FreeParameter::new(FreeParam::V0RawLevel, 1.0, 1000.0),
        ],
        base: base.clone(),
    })
    .unwrap();
    let mu_rel = (synthetic.value_of(FreeParam::MuLoss).unwrap() - mu_true).abs() / mu_true;
    let v0_rel = (synthetic.value_of(FreeParam::V0RawLevel).unwrap() - v0_true).abs() / v0_true;

    let real: Vec<Observation> = parse_observations(DEFAULT_OBSERVATIONS)
        .unwrap()
        .into_iter()
        .filter(|o| o.freq_hz == 20e6 && o.quantity == Quantity::GX)
        .collect();
    let mu_real = fit(&FitProblem {
        observations: real,
        free: vec![FreeParameter::new(FreeParam::MuLoss, 1e-3, 0.5)],
        base,
    })
    .unwrap()
    .value_of(FreeParam::MuLoss)
    .unwrap();
    let elapsed = start.elapsed();
    let pass = mu_rel < 1e-3
        && v0_rel < 1e-3
        && (0.030..=0.045).contains(&mu_real)
        && elapsed < Duration::from_secs(10);
    outcome(
        pass,
        format!("rel err mu={mu_rel:.1e} v0={v0_rel:.1e}; 20 MHz mu={mu_real:.4} ({elapsed:.2?})"),
    )
}

fn duan_error() -> Outcome {
    let g_y = db_to_linear(DbValue::new(-0.8, 0.7));
    let g_x = db_to_linear(DbValue::new(-1.7, 0.8));
    let d = duan(g_x, g_y);
    outcome(
        (d.err - 0.1).abs() <= 0.03,
        format!("duan={:.3}±{:.4}", d.value, d.err),
    )
}

fn main() -> ExitCode {
    let checks: [Check; 7] = [
        ("1 table1 measured path", table1_measured),
        ("2 6 MHz regime", six_mhz_regime),
        ("3 model path at default config", model_path),
        ("4 covariance route and physicality", route_equivalence),
        ("5 algebraic identities", algebraic_identities),
        ("6 fit self-consistency", fit_self_consistency),
        ("7 Duan error propagation", duan_error),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
