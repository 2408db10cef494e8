use borglev_core::probe::ReconstructionOptions;
use borglev_core::spectral::weighted_norm;
use borglev_core::stability::{
    asymptotic_noise_experiment, compute_delta, corrupt_spectral_data, delta_unaligned, gamma_of, holder_experiment,
    noise_cut, write_asymptotic_csv, write_holder_csv, AsymptoticConfig, DeltaOptions, HolderOptions,
};
use borglev_core::{align_traces, build_grid, solve_eigen, GridSpec, Potential, PotentialSpec, SpectralData};
use proptest::prelude::*;

fn grid20() -> GridSpec {
    build_grid(1.0, 1.0, 20, 20).unwrap()
}

fn bump(g: &GridSpec, center: [f64; 2], amp: f64) -> Potential {
    PotentialSpec::Bump {
        center,
        radius: 0.25,
        amp,
    }
    .build(g)
    .unwrap()
}

fn full(q: &Potential, g: &GridSpec) -> SpectralData {
    solve_eigen(q, g, g.n_int()).unwrap()
}

fn opts() -> DeltaOptions {
    DeltaOptions::default()
}

#[test]
fn identical_data_has_zero_distance() {
    let g = grid20();
    let sd = full(&bump(&g, [0.4, 0.55], 2.0), &g);
    let d = compute_delta(&sd, &sd, 0, 2, &opts()).unwrap();
    assert_eq!((d.delta0, d.delta1, d.delta), (0.0, 0.0, 0.0));
}

#[test]
fn uniform_eigenvalue_shift_is_delta0() {
    let g = grid20();
    let sd = full(&Potential::zero(&g), &g);
    let eps = 0.037;
    let mut shifted = sd.clone();
    shifted.eigenvalues.iter_mut().for_each(|l| *l += eps);
    let d = compute_delta(&sd, &shifted, 3, 2, &opts()).unwrap();
    let lmax = sd.eigenvalues.last().unwrap();
    assert!((d.delta0 - eps).abs() <= 4.0 * f64::EPSILON * lmax, "{}", d.delta0);
    assert_eq!(d.delta1, 0.0);
    assert_eq!(d.delta, d.delta0 + d.delta1);
}

#[test]
fn delta_is_linear_for_small_perturbations() {
    let g = grid20();
    let sd0 = full(&Potential::zero(&g), &g);
    let ratios: Vec<f64> = [1e-3, 1e-2, 1e-1]
        .iter()
        .map(|&t| compute_delta(&full(&bump(&g, [0.4, 0.55], t), &g), &sd0, 0, 2, &opts()).unwrap().delta / t)
        .collect();
    for r in &ratios {
        assert!((r / ratios[0] - 1.0).abs() < 0.1, "{ratios:?}");
    }
}

#[test]
fn delta1_matches_shifted_weighted_sum() {
    let g = grid20();
    let sd1 = full(&bump(&g, [0.5, 0.5], 1.5), &g);
    let sd2 = full(&bump(&g, [0.45, 0.5], 1.0), &g);
    let (_, b) = align_traces(&sd1, &sd2, 1e-6).unwrap();
    let n_drop = 3;
    let mut oracle = 0.0;
    let mut sup = 0.0f64;
    for k in 1..=(sd1.k() - n_drop) {
        let idx = k + n_drop - 1;
        let d: Vec<f64> = sd1.traces[idx].iter().zip(&b.traces[idx]).map(|(x, y)| x - y).collect();
        let w = g.weights();
        let norm = d.iter().zip(&w).map(|(v, wi)| v * v * wi).sum::<f64>().sqrt();
        oracle += norm / (k as f64 * k as f64);
        sup = sup.max((sd1.eigenvalues[idx] - b.eigenvalues[idx]).abs());
    }
    let d = compute_delta(&sd1, &sd2, n_drop, 2, &opts()).unwrap();
    assert!((d.delta1 - oracle).abs() < 1e-12 * oracle, "{} vs {oracle}", d.delta1);
    assert_eq!(d.delta0, sup);
}

#[test]
fn shared_alignment_gives_a_pseudometric() {
    let g = grid20();
    let reference = full(&Potential::zero(&g), &g);
    let data: Vec<SpectralData> = [([0.5, 0.5], 1.0), ([0.4, 0.55], 0.7), ([0.6, 0.45], -0.5)]
        .iter()
        .map(|(c, a)| align_traces(&reference, &full(&bump(&g, *c, *a), &g), 1e-6).unwrap().1)
        .collect();
    let d = |i: usize, j: usize| delta_unaligned(&data[i], &data[j], 2, 2, &opts()).unwrap();
    for i in 0..3 {
        assert_eq!(d(i, i).delta, 0.0);
        for j in 0..3 {
            let (a, b) = (d(i, j), d(j, i));
            assert!((a.delta0 - b.delta0).abs() <= 1e-12 && (a.delta1 - b.delta1).abs() <= 1e-12);
            for k in 0..3 {
                let (c, x) = (d(i, k), d(k, j));
                assert!(a.delta0 <= c.delta0 + x.delta0 + 1e-12);
                assert!(a.delta1 <= c.delta1 + x.delta1 + 1e-12);
            }
        }
    }
}

#[test]
fn sign_flips_do_not_change_delta1() {
    let g = grid20();
    let sd1 = full(&bump(&g, [0.4, 0.55], 1.0), &g);
    let sd2 = full(&bump(&g, [0.5, 0.5], 0.3), &g);
    let mut flipped = sd2.clone();
    for idx in (0..flipped.k()).step_by(3) {
        flipped.traces[idx].iter_mut().for_each(|v| *v = -*v);
    }
    let a = compute_delta(&sd1, &sd2, 0, 2, &opts()).unwrap();
    let b = compute_delta(&sd1, &flipped, 0, 2, &opts()).unwrap();
    assert!((a.delta1 - b.delta1).abs() <= 1e-10, "{} vs {}", a.delta1, b.delta1);
}

#[test]
fn delta0_does_not_grow_with_n() {
    let g = grid20();
    let sd1 = full(&bump(&g, [0.4, 0.55], 0.8), &g);
    let sd0 = full(&Potential::zero(&g), &g);
    let d0: Vec<f64> = (0..12).map(|n| compute_delta(&sd1, &sd0, n, 2, &opts()).unwrap().delta0).collect();
    assert!(d0.windows(2).all(|w| w[1] <= w[0]), "{d0:?}");
}

#[test]
fn delta_requires_enough_pairs() {
    let g = grid20();
    let sd = solve_eigen(&Potential::zero(&g), &g, 25).unwrap();
    assert!(compute_delta(&sd, &sd, 5, 2, &opts()).is_err());
    assert!(compute_delta(&sd, &sd, 4, 2, &opts()).is_ok());
}

#[test]
fn exponent_bundle_for_the_square() {
    let b = gamma_of(2, 2, 0.25).unwrap();
    assert_eq!(b.gamma, 1.0 / (4.0 + 8.0 * (8.0 + 2.0 + 1.25)));
    assert!((b.gamma - 1.0 / 94.0).abs() < 1e-16);
    assert_eq!(b.alpha_threshold, 1.75);
    assert!(b.kappa > 1.0);
    assert!((b.rho(10.0) - 20f64.powi(4)).abs() < 1e-6);
}

#[test]
fn exponent_limits_near_half() {
    let mut last = gamma_of(2, 2, 0.4).unwrap();
    for eps in [0.45, 0.49, 0.499, 0.4999, 0.49999] {
        let b = gamma_of(2, 2, eps).unwrap();
        assert!(b.sigma < last.sigma && b.kappa > last.kappa && b.gamma < last.gamma);
        last = b;
    }
    assert!(last.sigma > 0.0 && last.gamma > 0.0 && last.gamma < 1e-4);
}

#[test]
fn exponent_rejects_invalid_parameters() {
    assert!(gamma_of(2, 1, 0.25).is_err());
    assert!(gamma_of(3, 2, 0.25).is_err());
    assert!(gamma_of(2, 2, 0.5).is_err());
    assert!(gamma_of(0, 2, 0.25).is_err());
}

fn family(g: &GridSpec, ts: &[f64]) -> Vec<(Potential, Potential)> {
    ts.iter().map(|&t| (bump(g, [0.5, 0.5], t), Potential::zero(g))).collect()
}

fn holder_opts(n_drop: usize, g: &GridSpec) -> HolderOptions {
    HolderOptions {
        n_drop,
        m: 2,
        eps: 0.25,
        k: g.n_int(),
        delta: DeltaOptions::default(),
    }
}

#[test]
fn holder_fit_on_scaled_bumps() {
    let g = grid20();
    let fam = family(&g, &[0.05, 0.1, 0.2, 0.4, 0.8]);
    let r = holder_experiment(&fam, &g, &holder_opts(0, &g)).unwrap();
    let gamma = r.gamma_emp.unwrap();
    // the distance is linear in t up to second order, so the fit is Lipschitz
    assert!((gamma - 1.0).abs() < 1e-3, "{gamma}");
    assert!(gamma >= r.gamma_paper);
    assert!(r.monotone && !r.degenerate && r.fit_points == 5);
    let c = r.c_fit.unwrap();
    for p in &r.points {
        assert!(p.l2_diff <= c * p.delta.powf(gamma) * (1.0 + 1e-12));
    }
}

#[test]
fn holder_fit_of_identical_pairs_is_degenerate() {
    let g = grid20();
    let q = bump(&g, [0.5, 0.5], 1.0);
    let fam: Vec<_> = (0..5).map(|_| (q.clone(), q.clone())).collect();
    let r = holder_experiment(&fam, &g, &holder_opts(0, &g)).unwrap();
    assert!(r.degenerate && r.gamma_emp.is_none());
    assert!(r.points.iter().all(|p| p.delta == 0.0 && p.l2_diff == 0.0));
}

#[test]
fn holder_leaves_l2_differences_alone_when_dropping_pairs() {
    let g = grid20();
    let fam = family(&g, &[0.05, 0.1, 0.2, 0.4, 0.8]);
    let a = holder_experiment(&fam, &g, &holder_opts(0, &g)).unwrap();
    let b = holder_experiment(&fam, &g, &holder_opts(5, &g)).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert_eq!(p.l2_diff, q.l2_diff);
        assert!(q.delta0 <= p.delta0);
    }
}

#[test]
fn holder_input_validation() {
    let g = grid20();
    assert!(holder_experiment(&family(&g, &[0.1, 0.2, 0.3, 0.4]), &g, &holder_opts(0, &g)).is_err());
    let touching = PotentialSpec::Constant { value: 1.0 }.build(&g).unwrap();
    let mut fam = family(&g, &[0.1, 0.2, 0.3, 0.4]);
    fam.push((touching, Potential::zero(&g)));
    assert!(holder_experiment(&fam, &g, &holder_opts(0, &g)).is_err());
}

#[test]
fn holder_csv_has_expected_columns() {
    let g = grid20();
    let fam = family(&g, &[0.05, 0.1, 0.2, 0.4, 0.8]);
    let r = holder_experiment(&fam, &g, &holder_opts(0, &g)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("holder.csv");
    write_holder_csv(&r, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "pair_id,delta0,delta1,delta,l2_diff");
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn noise_cut_examples() {
    assert_eq!(noise_cut(1e-2, 2.0), 10);
    assert_eq!(noise_cut(1e-4, 2.0), 100);
    assert_eq!(noise_cut(3e-2, 2.0), 6);
    assert_eq!(noise_cut(0.0, 2.0), 0);
}

#[test]
fn corruption_without_noise_is_identity() {
    let g = grid20();
    let sd = full(&bump(&g, [0.4, 0.55], 1.0), &g);
    let c = corrupt_spectral_data(&sd, 0.0, 0.0, 2.0, 2).unwrap();
    assert_eq!(c.eigenvalues, sd.eigenvalues);
    assert_eq!(c.traces, sd.traces);
    assert!(corrupt_spectral_data(&sd, -1.0, 0.0, 2.0, 2).is_err());
}

#[test]
fn corruption_saturates_both_bounds() {
    let g = grid20();
    let sd = full(&bump(&g, [0.4, 0.55], 1.0), &g);
    let (delta, a, alpha) = (0.03, 1.0, 2.0);
    let c = corrupt_spectral_data(&sd, delta, a, alpha, 2).unwrap();
    for idx in 0..sd.k() {
        let k = (idx + 1) as f64;
        let level = delta + a * k.powf(-alpha);
        assert!(((c.eigenvalues[idx] - sd.eigenvalues[idx]) - level).abs() < 1e-12 * sd.eigenvalues[idx]);
        let d: Vec<f64> = c.traces[idx].iter().zip(&sd.traces[idx]).map(|(x, y)| x - y).collect();
        // with m = 2, n = 2 the trace weight is k^(1 - 2m/n) = 1/k
        let weighted = weighted_norm(&g, &d) / k;
        assert!((weighted - level).abs() < 1e-9 * level, "k={k}: {weighted} vs {level}");
    }
}

fn asymptotic_config(deltas: Vec<f64>, a: f64, alpha: f64, g: &GridSpec) -> AsymptoticConfig {
    AsymptoticConfig {
        deltas,
        a,
        alpha,
        m: 2,
        k: g.n_int(),
        tau: 16.0,
        exact_drop: 5,
        recon: ReconstructionOptions {
            cutoff_multiplier: 6.0,
            min_modes_per_axis: 3,
        },
    }
}

fn mode(g: &GridSpec) -> Potential {
    PotentialSpec::Mode { jx: 2, jy: 2, amp: 3.0 }.build(g).unwrap()
}

#[test]
fn asymptotic_rejects_subcritical_alpha() {
    let g = grid20();
    let cfg = asymptotic_config(vec![1e-2], 1.0, 1.75, &g);
    assert!(asymptotic_noise_experiment(&mode(&g), &Potential::zero(&g), &g, &cfg).is_err());
}

#[test]
fn asymptotic_without_noise_reproduces_baseline() {
    let g = grid20();
    let cfg = asymptotic_config(vec![0.0], 0.0, 2.0, &g);
    let r = asymptotic_noise_experiment(&mode(&g), &Potential::zero(&g), &g, &cfg).unwrap();
    assert_eq!(r.rows[0].l2_error, r.baseline_error);
    assert_eq!(r.rows[0].n_cut, 0);
}

#[test]
fn asymptotic_sweep_is_monotone() {
    let g = build_grid(1.0, 1.0, 32, 32).unwrap();
    let cfg = asymptotic_config(vec![1e-1, 3e-2, 1e-2], 1.0, 2.0, &g);
    let r = asymptotic_noise_experiment(&mode(&g), &Potential::zero(&g), &g, &cfg).unwrap();
    assert!(r.monotone);
    assert!(r.rows.iter().all(|row| row.split_holds));
    assert_eq!(r.rows.iter().map(|row| row.n_cut).collect::<Vec<_>>(), vec![4, 6, 10]);
    assert!(r.exact_drop_error <= 2.0 * r.baseline_error, "{} vs {}", r.exact_drop_error, r.baseline_error);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("asym.csv");
    write_asymptotic_csv(&r, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("delta,n_cut,l2_error,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_decreases_in_m_and_eps(m in 2u32..12, eps in 0.01..0.48f64, de in 0.001..0.01f64) {
        let a = gamma_of(2, m, eps).unwrap();
        let b = gamma_of(2, m + 1, eps).unwrap();
        let c = gamma_of(2, m, eps + de).unwrap();
        prop_assert!(b.gamma < a.gamma);
        prop_assert!(c.gamma < a.gamma);
        prop_assert!(a.gamma > 0.0 && a.gamma < 1.0 && a.kappa > 1.0);
        prop_assert!(a.gamma_variant < a.gamma);
    }

    #[test]
    fn noise_cut_covers_the_power(delta in 1e-6..0.9f64, alpha in 1.8..4.0f64) {
        let n = noise_cut(delta, alpha) as f64;
        let x = delta.powf(-1.0 / alpha);
        prop_assert!(n >= x - 1e-9 && n < x + 1.0);
    }
}
