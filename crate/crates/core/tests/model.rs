mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use ridgecast::autodiff::Tensor;
use ridgecast::dataset::{ForecastTask, TimeSeries};
use ridgecast::model::*;
use ridgecast::model::Strategy;

fn with_tensor(mut p: GlobalParams, name: &str, t: Tensor) -> GlobalParams {
    *p.get_mut(name).unwrap() = t;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ridge_matches_gradient_descent_oracle(
        d in 1usize..=20,
        n in 1usize..=200,
        gamma in 0.05f64..10.0,
        anchored in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let h = random_tensor(&mut r, n, d, 1.0);
        let z: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let anchor: Option<Vec<f64>> = anchored.then(|| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect());
        let w = fit_local(&h, &z, gamma, anchor.as_deref()).unwrap();
        let oracle = ridge_by_gradient_descent(&h, &z, gamma, anchor.as_deref());
        let gap = w.w.iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(gap < 1e-6, "gap {gap}");
        let (res, rhs) = normal_equation_residual(&h, &z, gamma, anchor.as_deref(), &w.w);
        prop_assert!(res <= 1e-8 * (1.0 + rhs), "residual {res}");
    }

    #[test]
    fn ridge_norm_shrinks_with_gamma(d in 1usize..=10, n in 1usize..=40, seed in any::<u64>()) {
        let mut r = rng(seed);
        let h = random_tensor(&mut r, n, d, 1.0);
        let z: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&g| fit_local(&h, &z, g, None).unwrap().w.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        for pair in norms.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "{norms:?}");
        }
    }
}

fn all_models() -> Vec<GlobalParams> {
    let mut out = Vec::new();
    for (i, kind) in BackboneKind::ALL.into_iter().enumerate() {
        for adaptation in Adaptation::ALL {
            let mut c = small_config(kind, 5, 16, true);
            c.adaptation = adaptation;
            out.push(params(c, 10 + i as u64));
        }
    }
    out
}

#[test]
fn iterated_forecasts_ignore_horizon_values() {
    let series = wave("a", 40, 50.0, 1);
    for p in all_models() {
        let base = predict(&task(&series, &p, 30, 8), &p).unwrap();
        let mut mutated = series.clone();
        for v in &mut mutated.values[30..] {
            *v = *v * 7.0 + 1000.0;
        }
        let again = predict(&task(&mutated, &p, 30, 8), &p).unwrap();
        assert_eq!(base, again, "{:?}", p.config.backbone);
        // the context representation is untouched as well
        let r1 = represent(&task(&series, &p, 30, 8), &p).unwrap();
        let r2 = represent(&task(&mutated, &p, 30, 8), &p).unwrap();
        assert_eq!(r1.slice_rows(0, 16), r2.slice_rows(0, 16));
    }
}

#[test]
fn eval_forecasting_is_deterministic() {
    let series = wave("a", 40, 50.0, 2);
    for p in all_models() {
        let t = task(&series, &p, 34, 6);
        assert_eq!(predict(&t, &p).unwrap(), predict(&t, &p).unwrap());
    }
}

#[test]
fn representation_shape() {
    let p = params(small_config(BackboneKind::Rnn, 6, 20, true), 3);
    for (len, h) in [(40, 8), (10, 3), (25, 1)] {
        let s = wave("a", len, 10.0, 5);
        let r = represent(&task(&s, &p, len, h), &p).unwrap();
        assert_eq!(r.shape(), [20 + h, 6]);
    }
}

#[test]
fn identity_linear_backbone_returns_covariates() {
    let c = small_config(BackboneKind::Linear, 14, 12, true);
    assert_eq!(c.input_dim(), 14);
    let p = with_tensor(params(c, 1), "lin.weight", Tensor::identity(14));
    let s = wave("a", 30, 20.0, 3);
    let t = task(&s, &p, 30, 1);
    let r = represent(&t, &p).unwrap();
    for pos in 1..=12 {
        let x = t.covariates(pos, &[]).unwrap().to_vec();
        assert_eq!(r.slice_rows(pos - 1, 1).data(), &x[..]);
    }
}

fn pad_task(series: &TimeSeries, p: &GlobalParams, context_len: usize, horizon: usize) -> ForecastTask {
    ForecastTask::new(series, series.len(), context_len, horizon, features(p), false).unwrap()
}

#[test]
fn padding_changes_neither_head_nor_forecasts() {
    let series = wave("a", 14, 30.0, 4);
    let mut models = vec![
        params(small_config(BackboneKind::Linear, 4, 14, true), 1),
        params(small_config(BackboneKind::Ff, 4, 14, true), 2),
    ];
    let mut rnn = small_config(BackboneKind::Rnn, 4, 14, true);
    rnn.warmup_through_padding = false;
    models.push(params(rnn, 3));
    for p in models {
        let opts = ForwardOptions::prediction(&p);
        let run = |ctx: usize| {
            let t = pad_task(&series, &p, ctx, 5);
            let mut tape = ridgecast::autodiff::Tape::new();
            let vars = ModelVars::register(&mut tape, &p, false).unwrap();
            let out = forward_task(&mut tape, &vars, &p, &t, &opts, &mut rng(0)).unwrap();
            let w = tape.value(out.local_weights.unwrap()).clone();
            let f: Vec<f64> = out.forecasts.iter().map(|v| tape.value(*v).item()).collect();
            (w, f)
        };
        let base = run(14);
        for k in [1, 5, 30] {
            assert_eq!(run(14 + k), base, "{:?} with {k} padding rows", p.config.backbone);
        }
    }
}

#[test]
fn forecasts_scale_with_the_series_without_log_scale() {
    let series = wave("a", 36, 40.0, 6);
    for kind in BackboneKind::ALL {
        let p = params(small_config(kind, 5, 16, false), 7);
        let base = predict(&task(&series, &p, 30, 6), &p).unwrap();
        for c in [0.25, 2.0, 1024.0, 3.7, 1e-3] {
            let mut scaled = series.clone();
            scaled.values.iter_mut().for_each(|v| *v *= c);
            let out = predict(&task(&scaled, &p, 30, 6), &p).unwrap();
            for (a, b) in out.iter().zip(&base) {
                if c.log2().fract() == 0.0 {
                    assert_eq!(*a, c * b, "{kind:?} c={c}");
                } else {
                    assert!((a - c * b).abs() <= 1e-12 * (c * b).abs().max(1e-300), "{kind:?} c={c}");
                }
            }
        }
    }
}

#[test]
fn global_head_set_to_the_ridge_fit_reproduces_meta_forecasts() {
    let series = wave("a", 40, 25.0, 8);
    let p = params(small_config(BackboneKind::Rnn, 5, 20, true), 9);
    let t = task(&series, &p, 34, 6);
    let mut tape = ridgecast::autodiff::Tape::new();
    let vars = ModelVars::register(&mut tape, &p, false).unwrap();
    let opts = ForwardOptions::new(Mode::Eval, Strategy::Iterated, HeadMode::Local { gamma: None, anchored: false });
    let out = forward_task(&mut tape, &vars, &p, &t, &opts, &mut rng(0)).unwrap();
    let w = tape.value(out.local_weights.unwrap()).clone();
    let meta = forecast(&t, &p, Mode::Eval, Strategy::Iterated, &mut rng(0)).unwrap();
    let q = with_tensor(p.clone(), "head", w);
    assert_eq!(forecast_global_head(&t, &q, Strategy::Iterated).unwrap(), meta);

    let zero = with_tensor(p, "head", Tensor::zeros(5, 1));
    assert!(forecast_global_head(&t, &zero, Strategy::Iterated).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn prediction_only_adaptation_limits() {
    let series = wave("a", 40, 25.0, 10);
    let mut c = small_config(BackboneKind::Rnn, 5, 20, true);
    c.adaptation = Adaptation::GlobalHead;
    let mut p = params(c, 11);
    // a head that yields clearly positive forecasts
    let t = task(&series, &p, 34, 6);
    let h = represent(&t, &p).unwrap();
    let w = fit_local(&h.slice_rows(0, 20), &t.scaled_context(), 1.0, None).unwrap();
    *p.get_mut("head").unwrap() = Tensor::column(w.w);
    let global = forecast_global_head(&t, &p, Strategy::Iterated).unwrap();
    let anchored = adapt_at_prediction_only(&t, &p, 1e8, true).unwrap();
    for (a, g) in anchored.iter().zip(&global) {
        assert!((a - g).abs() <= 1e-4 * g.abs().max(1.0), "{a} vs {g}");
    }
    let shrunk = adapt_at_prediction_only(&t, &p, 1e12, false).unwrap();
    assert!(shrunk.iter().all(|v| v.abs() < 1e-6 * t.scale), "{shrunk:?}");
}

#[test]
fn constant_series_is_forecast_exactly() {
    let c = small_config(BackboneKind::Linear, 3, 16, true);
    let p = params(c, 12);
    let p_dim = p.config.input_dim();
    let mut w = Tensor::zeros(3, p_dim);
    w.set(0, 0, 1.0); // representation coordinate 0 = lag-1 slot
    let p = with_tensor(with_tensor(p, "lin.weight", w), "gamma_raw", Tensor::scalar(-30.0));
    let series = TimeSeries::new("c", ridgecast::dataset::Frequency::Quarterly, vec![37.5; 30]);
    let out = predict(&task(&series, &p, 30, 8), &p).unwrap();
    for v in out {
        assert!((v - 37.5).abs() < 1e-9, "{v}");
    }
}

#[test]
fn negative_outputs_are_clamped_to_zero() {
    let mut c = small_config(BackboneKind::Linear, 2, 8, true);
    c.adaptation = Adaptation::GlobalHead;
    let p = params(c, 1);
    let p = with_tensor(p, "lin.weight", Tensor::zeros(2, 14));
    let p = with_tensor(p, "lin.bias", Tensor::filled(2, 1, 1.0));
    let p = with_tensor(p, "head", Tensor::filled(2, 1, -1.0));
    let series = wave("a", 20, 5.0, 1);
    assert_eq!(predict(&task(&series, &p, 20, 4), &p).unwrap(), vec![0.0; 4]);
}

#[test]
fn reloaded_model_forecasts_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let p = params(small_config(BackboneKind::Rnn, 5, 16, true), 13);
    p.save(&path).unwrap();
    let q = GlobalParams::load(&path).unwrap();
    let series = wave("a", 40, 25.0, 8);
    let t = task(&series, &p, 40, 6);
    assert_eq!(predict(&t, &p).unwrap(), predict(&t, &q).unwrap());
}
