use std::f64::consts::PI;

use borglev_core::estimates::{
    check_lemma1, check_lemma2, check_lemma3, eval_series_i, geometric_sweep, i_sharp, i_sharp_b0_nu2,
    lemma3_prediction, probe_sharpness, write_bound_csv, EigenSource, LemmaQuery, MixedDenominator, Regime,
    SLOPE_TOLERANCE,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn taus() -> Vec<f64> {
    geometric_sweep(8.0, 256.0, 11)
}

fn unit_spacing(mu: f64, nu: f64) -> LemmaQuery {
    LemmaQuery {
        eigen: EigenSource::Synthetic {
            c_tilde: 1.0,
            jitter: 0.0,
            phase: 1.0,
        },
        ..LemmaQuery::synthetic(2, mu, nu)
    }
}

/// Neumaier-compensated sum of `1 / |lambda - j|^2` over `j = 1..=m` plus
/// the midpoint-rule tail `int_{m+1/2}^inf dx / ((x - a)^2 + b^2)`.
fn lorentzian_oracle(lambda: Complex64, m: usize) -> f64 {
    let (a, b) = (lambda.re, lambda.im.abs());
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for j in 1..=m {
        let t = 1.0 / ((j as f64 - a).powi(2) + b * b);
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    let start = m as f64 + 0.5;
    sum + comp + (PI / 2.0 - ((start - a) / b).atan()) / b
}

#[test]
fn basel_series() {
    let q = LemmaQuery::synthetic(2, -2.0, 0.0);
    let v = eval_series_i(&q, Complex64::new(-1.0, 0.0), Some(1000)).unwrap();
    let exact = PI * PI / 6.0;
    assert!(v.partial <= exact && exact <= v.partial + v.tail_bound);
    assert!((v.value() - exact).abs() < 1e-9, "{}", v.value() - exact);
}

#[test]
fn unit_spacing_series_matches_direct_summation() {
    let q = unit_spacing(0.0, 2.0);
    for tau in [2.0, 3.0, 5.0] {
        let lambda = Complex64::new(tau, 1.0).powi(2);
        let v = eval_series_i(&q, lambda, None).unwrap().value();
        let oracle = lorentzian_oracle(lambda, 2_000_000);
        assert!(((v - oracle) / oracle).abs() < 1e-8, "tau {tau}: {v} vs {oracle}");
    }
}

#[test]
fn doubling_the_cut_halves_the_tail_bound() {
    let q = LemmaQuery::synthetic(2, 0.0, 2.0);
    let lambda = Complex64::new(-4.0, 3.0);
    let mut last = f64::INFINITY;
    for k in [500, 1000, 2000, 4000] {
        let t = eval_series_i(&q, lambda, Some(k)).unwrap().tail_bound;
        assert!(t.is_finite());
        assert!(t <= 0.5 * last * (1.0 + 1e-12), "{t} vs {last}");
        last = t;
    }
}

#[test]
fn divergent_series_rejected() {
    assert!(eval_series_i(&LemmaQuery::synthetic(2, 1.0, 2.0), Complex64::new(-1.0, 0.0), None).is_err());
    assert!(eval_series_i(&LemmaQuery::synthetic(2, -1.0, 0.0), Complex64::new(-1.0, 0.0), None).is_err());
}

#[test]
fn lemma1_first_regime() {
    let r = check_lemma1(&LemmaQuery::synthetic(2, 0.0, 2.0), &taus()).unwrap();
    assert_eq!(r.regime, Regime::BNonNegative);
    assert_eq!(r.predicted_slope, -1.0);
    assert!((r.fitted_slope + 1.0).abs() <= SLOPE_TOLERANCE, "{}", r.fitted_slope);
    assert!(r.pass);
}

#[test]
fn lemma1_strongly_negative_mu() {
    let r = check_lemma1(&LemmaQuery::synthetic(2, -2.0, 1.0), &taus()).unwrap();
    assert_eq!(r.regime, Regime::BBelowMinusOne);
    assert_eq!(r.predicted_slope, -1.0);
    assert!(r.pass, "{}", r.fitted_slope);
}

#[test]
fn lemma1_intermediate_regime() {
    let q = LemmaQuery {
        eps: 0.05,
        ..LemmaQuery::synthetic(2, -0.1, 1.0)
    };
    let r = check_lemma1(&q, &taus()).unwrap();
    assert_eq!(r.regime, Regime::BMinusOneToZero);
    assert!(r.fitted_slope <= 0.05 + (-0.1 + 1.0) - 1.0 + SLOPE_TOLERANCE, "{}", r.fitted_slope);
    assert!(r.pass);
}

#[test]
fn lemma1_middle_band_is_reported() {
    let q = LemmaQuery {
        eigen: EigenSource::Synthetic {
            c_tilde: (4.0 * PI).sqrt(),
            jitter: 0.3,
            phase: 0.7,
        },
        ..LemmaQuery::synthetic(2, 0.0, 2.0)
    };
    let r = check_lemma1(&q, &taus()).unwrap();
    let band = r.middle_band.unwrap();
    assert_eq!(band.predicted_slope, 2.0 - 1.0 + 0.0 - 2.0);
    assert!(band.values.iter().zip(&r.values).all(|(b, v)| *b > 0.0 && b <= v));
    assert!(r.pass);
}

#[test]
fn lemma1_rejects_short_sweeps() {
    let q = LemmaQuery::synthetic(2, 0.0, 2.0);
    assert!(check_lemma1(&q, &[8.0, 16.0, 32.0]).is_err());
    assert!(check_lemma1(&q, &[8.0, 100.0]).is_err());
}

#[test]
fn lemma2_closed_form_case() {
    for tau in taus() {
        let num = i_sharp(0.0, 2.0, tau).unwrap();
        let exact = i_sharp_b0_nu2(tau);
        assert!(((num - exact) / exact).abs() < 1e-9, "tau {tau}: {num} vs {exact}");
    }
    let r = check_lemma2(0.0, 2.0, 0.0, &taus()).unwrap();
    assert!((r.fitted_slope + 1.0).abs() < 0.05, "{}", r.fitted_slope);
    assert!(r.consistency_defect.unwrap() < 1e-8);
}

#[test]
fn lemma2_other_regimes() {
    let eps = 0.05;
    let r = check_lemma2(-0.5, 1.0, eps, &taus()).unwrap();
    assert!(r.fitted_slope <= eps - 0.5 + SLOPE_TOLERANCE && r.pass);
    let r = check_lemma2(-2.0, 1.0, eps, &taus()).unwrap();
    assert!(r.fitted_slope <= -1.0 + SLOPE_TOLERANCE && r.pass);
    assert!(check_lemma2(0.0, 1.0, 0.0, &taus()).is_err());
}

#[test]
fn sharpness_cases() {
    let rows = probe_sharpness(&[(0.5, 2.0), (-0.25, 1.0), (-2.0, 1.0)], &taus()).unwrap();
    let sharp = &rows[0];
    assert!((sharp.upper_slope - 0.0).abs() < 0.1 && (sharp.lower_slope - 0.0).abs() < 0.1);
    // for b < -1 the mass sits at t = O(1), where the denominator is tau^(2 nu)
    let floor = &rows[2];
    assert!((floor.upper_slope + 2.0).abs() < 0.1 && (floor.lower_slope + 2.0).abs() < 0.1);
    assert!(floor.upper_slope <= floor.predicted);
    let mid = &rows[1];
    assert!(mid.lower_slope.is_finite() && mid.slope_with_log.is_finite());
    assert_eq!(mid.first_case, -0.5);
}

#[test]
fn lemma3_along_the_negative_axis() {
    let lambdas: Vec<Complex64> = geometric_sweep(8.0, 256.0, 11).iter().map(|t| Complex64::new(-t, 0.0)).collect();
    let r = check_lemma3(&LemmaQuery::synthetic(2, -2.0, 1.0), &lambdas).unwrap();
    assert_eq!(r.predicted_slope, lemma3_prediction(-2.0, 1.0, 2));
    assert_eq!(r.printed_slope, -3.0);
    // I(-t) = sum j^-2 / (t + lambda_j) approaches (pi^2/6)/t with a log t / t^2 correction
    assert!((r.fitted_slope + 1.0).abs() < 0.1, "{}", r.fitted_slope);
    assert!(r.pass);
}

#[test]
fn lemma3_constant_without_denominator() {
    let lambdas: Vec<Complex64> = [10.0, 100.0, 1000.0].iter().map(|t| Complex64::new(-t, 0.0)).collect();
    let r = check_lemma3(&LemmaQuery::synthetic(2, -2.0, 0.0), &lambdas).unwrap();
    let exact = PI * PI / 6.0;
    assert!(r.values.iter().all(|v| (v - exact).abs() < 1e-9));
    assert!(r.fitted_slope.abs() < 1e-9);
}

#[test]
fn lemma3_mixed_denominator_matches_square() {
    let lambdas: Vec<Complex64> = geometric_sweep(8.0, 256.0, 11).iter().map(|t| Complex64::new(-t, 1.0)).collect();
    let plain = check_lemma3(&LemmaQuery::synthetic(2, 0.0, 2.0), &lambdas).unwrap();
    let mixed = LemmaQuery {
        mixed: Some(MixedDenominator {
            nu1: 1.0,
            second: EigenSource::Synthetic {
                c_tilde: 3.3,
                jitter: 0.2,
                phase: 1.0,
            },
        }),
        ..LemmaQuery::synthetic(2, 0.0, 2.0)
    };
    let mixed = check_lemma3(&mixed, &lambdas).unwrap();
    assert_eq!(mixed.predicted_slope, plain.predicted_slope);
    assert!((mixed.fitted_slope - plain.fitted_slope).abs() < 0.05);
    assert!(mixed.pass && plain.pass);
}

#[test]
fn lemma3_rejects_right_half_plane() {
    let q = LemmaQuery::synthetic(2, -2.0, 1.0);
    let bad = [Complex64::new(-10.0, 0.0), Complex64::new(5.0, -3.0), Complex64::new(-100.0, 0.0)];
    assert!(check_lemma3(&q, &bad).is_err());
}

#[test]
fn series_and_integral_model_agree() {
    // lambda_j = j, b = mu = 0, nu = 2
    let q = unit_spacing(0.0, 2.0);
    for tau in [16.0, 64.0] {
        let lambda = Complex64::new(tau, 1.0).powi(2);
        let series = eval_series_i(&q, lambda, None).unwrap().value();
        let model = i_sharp(0.0, 2.0, tau).unwrap();
        let peak = 1.0 / (4.0 * tau * tau);
        let first = 1.0 / (lambda - 1.0).norm_sqr();
        assert!((series - model).abs() <= 3.0 * peak + first, "tau {tau}: {series} vs {model}");
    }
}

#[test]
fn bound_csv_layout() {
    let r = check_lemma2(0.0, 2.0, 0.0, &taus()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lemmas.csv");
    write_bound_csv(&[r], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "lemma,mu,nu,b,regime,tau,value,predicted_slope,fitted_slope,pass"
    );
    assert_eq!(lines.count(), taus().len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn series_monotone_in_mu_antitone_in_nu(mu in -4.0..-1.5f64, dmu in 0.01..0.4f64, nu in 0.5..2.0f64, dnu in 0.01..0.5f64, t in 1.0..50.0f64) {
        let lambda = Complex64::new(-t, 0.0);
        let cut = Some(4000);
        let base = eval_series_i(&LemmaQuery::synthetic(2, mu, nu), lambda, cut).unwrap().partial;
        let more_mu = eval_series_i(&LemmaQuery::synthetic(2, mu + dmu, nu), lambda, cut).unwrap().partial;
        let more_nu = eval_series_i(&LemmaQuery::synthetic(2, mu, nu + dnu), lambda, cut).unwrap().partial;
        prop_assert!(more_mu >= base);
        prop_assert!(more_nu <= base);
    }
}
