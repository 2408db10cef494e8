use borglev_core::dtn::{
    boundary_layer, divided_difference, dtn_derivative_series, dtn_difference_series, dtn_direct, dtn_spectral,
    solve_bvp, split_hat_tilde, verify_dtn_decay, verify_integral_formula, BvpSolver, DtnKind, DtnMatrix, DtnOperator,
    SeriesOptions, TailModel,
};
use borglev_core::numerics::fit::loglog_slope;
use borglev_core::spectral::{NodeOrdering, DEFAULT_CLUSTER_TOL};
use borglev_core::{
    align_traces, build_grid, solve_eigen, weyl_validate, BoundaryField, Error, GridSpec, HsNorm, Potential,
    PotentialSpec,
};
use faer::Mat;
use num_complex::Complex64;
use proptest::prelude::*;

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn gaussian(g: &GridSpec, cx0: f64, cy0: f64, width: f64, amp: f64) -> Potential {
    PotentialSpec::Gaussian {
        center: [cx0, cy0],
        width,
        amp,
    }
    .build(g)
    .unwrap()
}

fn random(g: &GridSpec, seed: u64, amp: f64) -> Potential {
    PotentialSpec::Random {
        seed,
        smoothness: 1.0,
        amp,
    }
    .build(g)
    .unwrap()
}

fn wrap(g: &GridSpec, entries: Mat<Complex64>, lambda: Complex64) -> DtnMatrix {
    DtnMatrix {
        entries,
        lambda,
        potential_id: String::new(),
        grid: g.clone(),
        kind: DtnKind::Combination,
        tail_bound: None,
    }
}

fn l2_norm_of(g: &GridSpec, hs: &HsNorm, m: &Mat<Complex64>) -> f64 {
    wrap(g, m.clone(), cx(0.0, 0.0)).norms(hs).unwrap().l2_to_l2
}

#[test]
fn harmonic_extension_of_constant_and_linear_data() {
    let g = build_grid(1.0, 1.2, 10, 12).unwrap();
    let q = Potential::zero(&g);
    let one = BoundaryField::from_real(&vec![1.0; g.n_bd()]);
    let u = solve_bvp(&q, cx(0.0, 0.0), &one, &g).unwrap();
    assert!(u.iter().all(|v| (v - 1.0).norm() < 1e-12));
    let fx = g.sample_boundary(|x, _| cx(x, 0.0));
    let u = solve_bvp(&q, cx(0.0, 0.0), &fx, &g).unwrap();
    for (p, v) in u.iter().enumerate() {
        let (x, _) = g.interior_point(p);
        assert!((v - x).norm() < 1e-12);
    }
}

#[test]
fn node_orderings_agree() {
    let g = build_grid(1.0, 1.0, 16, 16).unwrap();
    let q = gaussian(&g, 0.5, 0.5, 0.15, 10.0);
    let lambda = cx(5.0, 1.0).powi(2);
    let f = g.sample_boundary(|x, y| cx((3.0 * x).cos(), x * y));
    let a = BvpSolver::with_ordering(&q, &g, lambda, NodeOrdering::RowMajor).unwrap().solve(&f).unwrap();
    let b = BvpSolver::with_ordering(&q, &g, lambda, NodeOrdering::ColumnMajor).unwrap().solve(&f).unwrap();
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).norm() < 1e-9 * scale);
    }
}

#[test]
fn solve_refuses_eigenvalue_frequency() {
    let g = build_grid(1.0, 1.0, 10, 10).unwrap();
    let q = Potential::zero(&g);
    let sd = solve_eigen(&q, &g, 1).unwrap();
    let f = BoundaryField::from_real(&vec![1.0; g.n_bd()]);
    let err = solve_bvp(&q, cx(sd.eigenvalues[0], 0.0), &f, &g).unwrap_err();
    assert!(matches!(err, Error::NearSpectrum { .. }), "{err}");
}

#[test]
fn dtn_of_constant_vanishes_at_zero_frequency() {
    let g = build_grid(1.0, 1.0, 12, 12).unwrap();
    let d = dtn_direct(&Potential::zero(&g), cx(0.0, 0.0), &g).unwrap();
    let one = BoundaryField::from_real(&vec![1.0; g.n_bd()]);
    let out = DtnOperator::apply(&d, &one).unwrap();
    assert!(out.max_abs() < 1e-10, "{}", out.max_abs());
}

#[test]
fn direct_map_is_symmetric() {
    let g = build_grid(1.0, 1.0, 14, 14).unwrap();
    let q = random(&g, 17, 5.0);
    let d = dtn_direct(&q, cx(3.0, 1.0).powi(2), &g).unwrap();
    assert!(d.symmetry_defect() < 1e-8);
    let f = g.sample_boundary(|x, y| cx(x.sin(), y));
    let h = g.sample_boundary(|x, y| cx(y * y, x - y));
    let a = d.pairing(&f, &h).unwrap();
    let b = d.pairing(&h, &f).unwrap();
    assert!((a - b).norm() < 1e-8 * d.max_abs());
}

#[test]
fn difference_stays_bounded_under_refinement() {
    let lambda = cx(3.0, 1.0).powi(2);
    let norms: Vec<f64> = [24, 32, 48]
        .iter()
        .map(|&n| {
            let g = build_grid(1.0, 1.0, n, n).unwrap();
            let q1 = gaussian(&g, 0.5, 0.5, 0.12, 3.0);
            let q2 = gaussian(&g, 0.45, 0.55, 0.1, -2.0);
            let d = dtn_direct(&q1, lambda, &g).unwrap().difference(&dtn_direct(&q2, lambda, &g).unwrap()).unwrap();
            d.norms(&HsNorm::new(&g).unwrap()).unwrap().h12_to_l2
        })
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] < 1.1 * w[0], "{norms:?}");
    }
}

#[test]
fn spectral_map_with_full_spectrum_equals_direct() {
    let g = build_grid(1.0, 1.0, 10, 10).unwrap();
    let q = random(&g, 1, 4.0);
    let lambda = cx(2.0, 1.0).powi(2);
    let sd = solve_eigen(&q, &g, g.n_int()).unwrap();
    let a = dtn_spectral(&sd, lambda).unwrap();
    let b = dtn_direct(&q, lambda, &g).unwrap();
    let diff = a.difference(&b).unwrap();
    assert!(diff.max_abs() < 1e-8 * b.max_abs());
}

#[test]
fn second_derivative_series_matches_divided_difference() {
    // the complete discrete spectrum of a 20 x 20 grid has 400 pairs
    let g = build_grid(1.0, 1.0, 20, 20).unwrap();
    let q = Potential::zero(&g);
    let sd = solve_eigen(&q, &g, 400).unwrap();
    let lambda = cx(-10.0, 0.0);
    let series = dtn_derivative_series(&sd, lambda, 2, 0, &SeriesOptions::default()).unwrap();
    let oracle = divided_difference(|z| dtn_direct(&q, z, &g).map(|d| d.entries), lambda, 2, 1e-2).unwrap();
    let hs = HsNorm::new(&g).unwrap();
    let rel = l2_norm_of(&g, &hs, &(&series.entries - &oracle)) / l2_norm_of(&g, &hs, &oracle);
    assert!(rel < 1e-3, "relative difference {rel:e}");
}

#[test]
fn derivative_series_rejects_small_order() {
    let g = build_grid(1.0, 1.0, 8, 8).unwrap();
    let sd = solve_eigen(&Potential::zero(&g), &g, 10).unwrap();
    assert!(dtn_derivative_series(&sd, cx(-5.0, 0.0), 1, 0, &SeriesOptions::default()).is_err());
}

#[test]
fn derivative_series_with_full_shift_is_zero() {
    let g = build_grid(1.0, 1.0, 8, 8).unwrap();
    let sd = solve_eigen(&Potential::zero(&g), &g, 20).unwrap();
    let s = dtn_derivative_series(&sd, cx(-5.0, 1.0), 2, 20, &SeriesOptions::default()).unwrap();
    assert_eq!(s.max_abs(), 0.0);
}

#[test]
fn derivative_series_partial_sums_are_cauchy_within_tail_bound() {
    let g = build_grid(1.0, 1.0, 16, 16).unwrap();
    let q = random(&g, 4, 3.0);
    let sd = solve_eigen(&q, &g, g.n_int()).unwrap();
    let tail = TailModel::from_report(&weyl_validate(&sd, 2, 0.25).unwrap());
    let hs = HsNorm::new(&g).unwrap();
    let lambda = cx(-20.0, 0.0);
    let full = dtn_derivative_series(&sd, lambda, 2, 0, &SeriesOptions::default()).unwrap();
    let mut last_bound = f64::INFINITY;
    let mut last_dist = f64::INFINITY;
    for k in [60, 100, 160, 220] {
        let part = sd.truncated(k).unwrap();
        let s = dtn_derivative_series(&part, lambda, 2, 0, &SeriesOptions::with_tail(tail)).unwrap();
        let bound = s.tail_bound.unwrap();
        let dist = l2_norm_of(&g, &hs, &(&full.entries - &s.entries));
        // the omitted terms are controlled by the analytic tail bound
        assert!(dist <= bound, "K={k}: {dist:e} > {bound:e}");
        assert!(bound < last_bound);
        assert!(dist <= last_dist + (last_bound - bound).max(0.0));
        last_bound = bound;
        last_dist = dist;
    }
}

#[test]
fn tail_tolerance_reports_required_k() {
    let g = build_grid(1.0, 1.0, 12, 12).unwrap();
    let sd = solve_eigen(&Potential::zero(&g), &g, 100).unwrap();
    let tail = TailModel::from_report(&weyl_validate(&sd, 2, 0.25).unwrap());
    let opts = SeriesOptions {
        tail: Some(tail),
        tolerance: Some(1e-12),
    };
    let err = dtn_derivative_series(&sd.truncated(60).unwrap(), cx(-10.0, 0.0), 2, 0, &opts).unwrap_err();
    assert!(matches!(err, Error::TailAboveTolerance { required_k, .. } if required_k > 60));
}

#[test]
fn derivative_series_is_conjugate_symmetric() {
    let g = build_grid(1.0, 1.0, 10, 10).unwrap();
    let sd = solve_eigen(&random(&g, 8, 2.0), &g, 60).unwrap();
    let z = cx(3.0, 2.5);
    let a = dtn_derivative_series(&sd, z, 2, 0, &SeriesOptions::default()).unwrap();
    let b = dtn_derivative_series(&sd, z.conj(), 2, 0, &SeriesOptions::default()).unwrap();
    for i in 0..g.n_bd() {
        for j in 0..g.n_bd() {
            assert!((a.entries[(i, j)].conj() - b.entries[(i, j)]).norm() <= 1e-14 * a.max_abs());
        }
    }
}

#[test]
fn first_derivative_satisfies_resolvent_identity() {
    let g = build_grid(1.0, 1.0, 10, 10).unwrap();
    let q = random(&g, 12, 3.0);
    let sd = solve_eigen(&q, &g, g.n_int()).unwrap();
    let lambda = cx(-7.0, 2.0);
    let n = g.n_bd();
    let w = g.weights();
    // d/dlambda of boundary layer + sum <., t_k> t_k / (lambda - lambda_k)
    let layer = boundary_layer(&g).derivative();
    let mut d1 = layer.clone();
    for (l, t) in sd.eigenvalues.iter().zip(&sd.traces) {
        let c = -(lambda - l).powi(-2);
        for i in 0..n {
            for j in 0..n {
                d1[(i, j)] += c * t[i] * t[j] * w[j];
            }
        }
    }
    let base = dtn_direct(&q, lambda, &g).unwrap();
    let mut errs = Vec::new();
    for step in [1e-1, 5e-2, 2.5e-2] {
        let moved = dtn_direct(&q, lambda + step, &g).unwrap();
        let quotient = Mat::from_fn(n, n, |i, j| (moved.entries[(i, j)] - base.entries[(i, j)]) / step);
        errs.push((&quotient - &d1).norm_max() / d1.norm_max());
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.4).contains(&ratio), "errors {errs:?}");
    }
}

#[test]
fn difference_series_of_identical_data_is_zero() {
    let g = build_grid(1.0, 1.0, 10, 10).unwrap();
    let sd = solve_eigen(&random(&g, 3, 2.0), &g, 50).unwrap();
    let d = dtn_difference_series(&sd, &sd, cx(4.0, 1.0).powi(2), 0, &SeriesOptions::default()).unwrap();
    assert_eq!(d.total.max_abs(), 0.0);
}

#[test]
fn difference_series_matches_direct_difference() {
    let g = build_grid(1.0, 1.0, 24, 24).unwrap();
    let q1 = gaussian(&g, 0.5, 0.5, 0.12, 3.0);
    let q2 = gaussian(&g, 0.4, 0.55, 0.15, -2.0);
    let s1 = solve_eigen(&q1, &g, 400).unwrap();
    let s2 = solve_eigen(&q2, &g, 400).unwrap();
    let (a1, a2) = align_traces(&s1, &s2, DEFAULT_CLUSTER_TOL).unwrap();
    let lambda = cx(4.0, 1.0).powi(2);
    let series = dtn_difference_series(&a1, &a2, lambda, 0, &SeriesOptions::default()).unwrap();
    let direct = dtn_direct(&q1, lambda, &g).unwrap().difference(&dtn_direct(&q2, lambda, &g).unwrap()).unwrap();
    let hs = HsNorm::new(&g).unwrap();
    let rel = l2_norm_of(&g, &hs, &(&series.total.entries - &direct.entries)) / l2_norm_of(&g, &hs, &direct.entries);
    assert!(rel < 5e-2, "relative difference {rel:e}");
    let parts = &(&series.i1.entries + &series.i2.entries) + &series.i3.entries;
    assert!((&parts - &series.total.entries).norm_max() <= 1e-14 * series.total.max_abs());
}

/// Spectral data that coincide with `sd` beyond the first `n` pairs.
fn perturb_leading_pairs(sd: &borglev_core::SpectralData, n: usize) -> borglev_core::SpectralData {
    let mut out = sd.clone();
    for k in 0..n {
        out.eigenvalues[k] += 1.5;
        for v in out.traces[k].iter_mut() {
            *v *= 1.1;
        }
    }
    out
}

#[test]
fn difference_decays_when_data_agree_beyond_n() {
    let g = build_grid(3.0, 3.0, 16, 16).unwrap();
    let sd = solve_eigen(&gaussian(&g, 1.5, 1.5, 0.36, 3.0), &g, g.n_int()).unwrap();
    let other = perturb_leading_pairs(&sd, 5);
    let hs = HsNorm::new(&g).unwrap();
    let taus: Vec<f64> = (2..=10).map(f64::from).collect();
    let norms: Vec<f64> = taus
        .iter()
        .map(|t| {
            let d = dtn_difference_series(&sd, &other, cx(*t, 1.0).powi(2), 0, &SeriesOptions::default()).unwrap();
            d.total.norms(&hs).unwrap().l2_to_l2
        })
        .collect();
    let slope = loglog_slope(&taus, &norms).unwrap();
    assert!(slope < -0.5, "slope {slope}");
}

#[test]
fn decay_check_for_identical_potentials() {
    let g = build_grid(1.0, 1.0, 12, 12).unwrap();
    let q = random(&g, 2, 3.0);
    let lambdas: Vec<Complex64> = [-20.0, -40.0, -80.0].iter().map(|r| cx(*r, 0.0)).collect();
    let r = verify_dtn_decay(&q, &q, 2, 0.25, &lambdas, &g).unwrap();
    assert!(r.pass());
    for row in &r.rows {
        assert!(row.norms.iter().all(|n| *n == 0.0));
        assert!(row.fitted_slope.is_none());
    }
}

#[test]
fn decay_check_rejects_right_half_plane() {
    let g = build_grid(1.0, 1.0, 8, 8).unwrap();
    let q = random(&g, 2, 3.0);
    assert!(verify_dtn_decay(&q, &q, 1, 0.25, &[cx(-2.0, 0.0)], &g).is_err());
    assert!(verify_dtn_decay(&q, &q, 1, 0.25, &[cx(5.0, 0.0)], &g).is_err());
}

#[test]
fn decay_slopes_for_distinct_potentials() {
    let g = build_grid(1.0, 1.0, 24, 24).unwrap();
    let q1 = gaussian(&g, 0.5, 0.5, 0.12, 3.0);
    let q2 = gaussian(&g, 0.45, 0.55, 0.1, -2.0);
    let lambdas: Vec<Complex64> = [-20.0, -40.0, -80.0, -160.0].iter().map(|r| cx(*r, 0.0)).collect();
    let r = verify_dtn_decay(&q1, &q2, 1, 0.25, &lambdas, &g).unwrap();
    for row in &r.rows {
        let s = row.fitted_slope.unwrap();
        assert!(s <= row.bound_exponent + 0.1, "order {}: slope {s}", row.order);
        assert!(row.c_min.is_finite() && row.c_min > 0.0);
    }
}

#[test]
fn integral_formula_for_identical_data_is_exact() {
    let g = build_grid(1.0, 1.0, 8, 8).unwrap();
    let sd = solve_eigen(&random(&g, 6, 2.0), &g, g.n_int()).unwrap();
    let r = verify_integral_formula(&sd, &sd, cx(3.0, 1.0).powi(2), 2, 100.0).unwrap();
    assert_eq!(r.residual, 0.0);
}

#[test]
fn integral_formula_residual_shrinks_with_cutoff() {
    let g = build_grid(1.0, 1.0, 10, 10).unwrap();
    let q1 = gaussian(&g, 0.5, 0.5, 0.15, 3.0);
    let q2 = gaussian(&g, 0.4, 0.6, 0.12, -2.0);
    let s1 = solve_eigen(&q1, &g, g.n_int()).unwrap();
    let s2 = solve_eigen(&q2, &g, g.n_int()).unwrap();
    let (a1, a2) = align_traces(&s1, &s2, DEFAULT_CLUSTER_TOL).unwrap();
    let lambda = cx(3.0, 1.0).powi(2);
    let mut last = f64::INFINITY;
    for r_cut in [50.0, 100.0, 200.0] {
        let r = verify_integral_formula(&a1, &a2, lambda, 2, r_cut).unwrap();
        assert!(r.residual <= r.tail_estimate + 5e-2 * r.reference_norm, "{r:?}");
        assert!(r.residual < last);
        last = r.residual;
    }
}

#[test]
fn hat_part_with_no_modes_is_zero() {
    let g = build_grid(1.0, 1.0, 8, 8).unwrap();
    let sd = solve_eigen(&Potential::zero(&g), &g, 10).unwrap();
    let (hat, tilde) = split_hat_tilde(&sd, cx(6.0, 1.0).powi(2), 0).unwrap();
    assert_eq!(hat.max_abs(), 0.0);
    assert_eq!(tilde.n, 0);
    assert!(split_hat_tilde(&sd, cx(6.0, 1.0).powi(2), 10).is_err());
}

#[test]
fn hat_part_decays_like_inverse_square() {
    // on a 3 x 3 square the first five eigenvalues lie below 25, so the whole
    // sweep satisfies tau^2 >= 2 c N
    let g = build_grid(3.0, 3.0, 16, 16).unwrap();
    let sd = solve_eigen(&random(&g, 21, 4.0), &g, 20).unwrap();
    let hs = HsNorm::new(&g).unwrap();
    let taus = [5.0, 10.0, 20.0, 40.0];
    let norms: Vec<f64> = taus
        .iter()
        .map(|t| {
            let (hat, _) = split_hat_tilde(&sd, cx(*t, 1.0).powi(2), 5).unwrap();
            hat.norms(&hs).unwrap().l2_to_l2
        })
        .collect();
    let slope = loglog_slope(&taus, &norms).unwrap();
    assert!(slope <= -1.8, "slope {slope}");
    let res = [-40.0, -80.0, -160.0, -320.0, -640.0];
    let norms: Vec<f64> = res
        .iter()
        .map(|r| {
            let (hat, _) = split_hat_tilde(&sd, cx(*r, 3.0), 5).unwrap();
            hat.norms(&hs).unwrap().l2_to_l2
        })
        .collect();
    let abs: Vec<f64> = res.iter().map(|r: &f64| r.abs()).collect();
    let slope = loglog_slope(&abs, &norms).unwrap();
    assert!(slope <= -0.9, "slope {slope}");
}

#[test]
fn hat_plus_tilde_difference_recovers_full_difference() {
    let g = build_grid(1.0, 1.0, 10, 10).unwrap();
    let s1 = solve_eigen(&random(&g, 1, 2.0), &g, 60).unwrap();
    let s2 = solve_eigen(&random(&g, 2, 2.0), &g, 60).unwrap();
    let (a1, a2) = align_traces(&s1, &s2, DEFAULT_CLUSTER_TOL).unwrap();
    let lambda = cx(5.0, 1.0).powi(2);
    let (h1, t1) = split_hat_tilde(&a1, lambda, 5).unwrap();
    let (h2, t2) = split_hat_tilde(&a2, lambda, 5).unwrap();
    let tilde = t1.difference(&t2, lambda, &SeriesOptions::default()).unwrap();
    let hat = h1.difference(&h2).unwrap();
    let full = dtn_difference_series(&a1, &a2, lambda, 0, &SeriesOptions::default()).unwrap().total;
    let recombined = hat.sum(&tilde).unwrap();
    assert!(recombined.difference(&full).unwrap().max_abs() < 1e-10 * full.max_abs());
}

#[test]
fn export_writes_metadata_and_entries() {
    let g = build_grid(1.0, 1.0, 8, 8).unwrap();
    let d = dtn_direct(&Potential::zero(&g), cx(-3.0, 0.0), &g).unwrap();
    let dir = tempfile::tempdir().unwrap();
    d.export(dir.path(), "map").unwrap();
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("map.json")).unwrap()).unwrap();
    assert_eq!(meta["kind"]["kind"], "direct");
    assert_eq!(meta["lambda"][0], -3.0);
    let rows = std::fs::read_to_string(dir.path().join("map.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + g.n_bd() * g.n_bd());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn direct_maps_are_symmetric(seed in 0u64..500, amp in 0.0..8.0f64, tau in 1.5..6.0f64) {
        let g = build_grid(1.0, 1.3, 9, 11).unwrap();
        let q = random(&g, seed, amp);
        let d = dtn_direct(&q, cx(tau, 1.0).powi(2), &g).unwrap();
        prop_assert!(d.symmetry_defect() < 1e-8);
    }

    #[test]
    fn direct_map_is_reproducible(seed in 0u64..500) {
        let g = build_grid(1.0, 1.0, 9, 9).unwrap();
        let q = random(&g, seed, 3.0);
        let a = dtn_direct(&q, cx(2.0, 1.0), &g).unwrap();
        let b = dtn_direct(&q, cx(2.0, 1.0), &g).unwrap();
        prop_assert_eq!(a.entries, b.entries);
    }
}
