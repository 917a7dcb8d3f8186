use opo_epr::criteria::DbValue;
use opo_epr::fit::{
    fit, objective, predict_db, FitProblem, FreeParam, FreeParameter, Observation, Quantity,
    GRID_POINTS,
};
use opo_epr::model::{Apparatus, IndividualNoiseTable, PumpNoiseSpectrum};
use opo_epr::RunConfig;

fn base() -> Apparatus {
    RunConfig::shipped_default().apparatus
}

fn synthetic(truth: &Apparatus, specs: &[(f64, Quantity)]) -> Vec<Observation> {
    specs
        .iter()
        .map(|&(f, q)| {
            let probe = Observation::new(f, q, DbValue::exact(0.0));
            Observation::new(f, q, DbValue::new(predict_db(&probe, truth).unwrap(), 0.5))
        })
        .collect()
}

fn two_param_problem(mu: f64, v0: f64) -> FitProblem {
    let mut truth = base();
    truth.opo.mu_loss = mu;
    truth.pump.v0_raw = PumpNoiseSpectrum::Constant(v0);
    let obs = synthetic(
        &truth,
        &[
            (3.5e6, Quantity::GX),
            (20e6, Quantity::GX),
            (3.5e6, Quantity::GY),
            (6e6, Quantity::GY),
            (12e6, Quantity::GY),
        ],
    );
    FitProblem {
        observations: obs,
        free: vec![
            FreeParameter::new(FreeParam::MuLoss, 1e-3, 0.5),
            FreeParameter::new(FreeParam::V0RawLevel, 1.0, 1000.0),
        ],
        base: base(),
    }
}

#[test]
fn noiseless_round_trip_recovers_parameters() {
    for (mu, v0) in [(0.036, 100.7), (0.02, 40.0), (0.11, 420.0)] {
        let r = fit(&two_param_problem(mu, v0)).unwrap();
        assert!(r.converged);
        let mu_fit = r.value_of(FreeParam::MuLoss).unwrap();
        let v0_fit = r.value_of(FreeParam::V0RawLevel).unwrap();
        assert!(((mu_fit - mu) / mu).abs() < 1e-3, "mu {mu_fit} vs {mu}");
        assert!(((v0_fit - v0) / v0).abs() < 1e-3, "v0 {v0_fit} vs {v0}");
        for res in &r.residuals {
            assert!(res.abs() < 1e-6, "residual {res}");
        }
    }
}

#[test]
fn fit_is_bit_deterministic() {
    let p = two_param_problem(0.05, 60.0);
    let a = fit(&p).unwrap();
    let b = fit(&p).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    for ((_, x), (_, y)) in a.best_params.iter().zip(&b.best_params) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    assert_eq!(a.evaluations, b.evaluations);
}

#[test]
fn result_beats_every_grid_point() {
    // noisy observations so the optimum is not exactly zero
    let mut p = two_param_problem(0.04, 80.0);
    for (k, o) in p.observations.iter_mut().enumerate() {
        o.measured.db += if k % 2 == 0 { 0.2 } else { -0.15 };
    }
    let r = fit(&p).unwrap();
    let best = [
        r.value_of(FreeParam::MuLoss).unwrap(),
        r.value_of(FreeParam::V0RawLevel).unwrap(),
    ];
    let f_best = objective(&best, &p);
    assert!((f_best - r.objective).abs() <= 1e-12 * (1.0 + f_best));
    for i in 0..GRID_POINTS {
        for j in 0..GRID_POINTS {
            let u = i as f64 / (GRID_POINTS - 1) as f64;
            let w = j as f64 / (GRID_POINTS - 1) as f64;
            let mu = 1e-3 * (0.5f64 / 1e-3).powf(u);
            let v0 = 1000f64.powf(w);
            assert!(r.objective <= objective(&[mu, v0], &p) + 1e-15);
        }
    }
}

#[test]
fn individual_level_is_fittable() {
    let mut truth = base();
    truth.v_ind = IndividualNoiseTable::constant_db(6.5);
    let obs = synthetic(&truth, &[(6e6, Quantity::VInd), (8e6, Quantity::VInd)]);
    let p = FitProblem {
        observations: obs,
        free: vec![FreeParameter::new(FreeParam::VIndLevel, 0.5, 20.0)],
        base: base(),
    };
    let r = fit(&p).unwrap();
    let v = r.value_of(FreeParam::VIndLevel).unwrap();
    assert!((v - 10f64.powf(0.65)).abs() < 1e-6 * v);
}
