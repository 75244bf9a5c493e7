mod support;

use num_complex::Complex64;
use proptest::prelude::*;

use preamble_forge::channel::{gen_channel, monte_carlo, transmit, ChannelModel, MonteCarlo};
use preamble_forge::design::{equipowered, juxtapose, nef, solve};
use preamble_forge::estimation::{ls_time_estimate, mmse_estimate, zf_estimate, ToneGrid};
use preamble_forge::{DesignProblem, Estimator, FrameConfig, Mask, SpectrumOperator};

use support::*;

fn cplx_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

/// Small frame with a contiguous estimation band away from the edges.
fn small_frame() -> impl Strategy<Value = FrameConfig> {
    (8usize..=16, 2usize..=4, 2usize..=4, any::<bool>(), 0usize..=2).prop_flat_map(
        |(n, width, l_os, pinch, l_w)| {
            (2..=n - width - 2).prop_map(move |lo| {
                FrameConfig::new(n, n / 4, l_w, l_os, pinch, (lo..lo + width).collect()).unwrap()
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dft_is_unitary(n in 1usize..=64) {
        prop_assert!(dft_unitarity_error(n) < 1e-12);
    }

    #[test]
    fn operator_is_linear(
        cfg in small_frame(),
        pq in cplx_vec(32),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let op = SpectrumOperator::<f64>::new(&cfg).unwrap();
        let (p, q) = (&pq[..cfg.n], &pq[16..16 + cfg.n]);
        prop_assert!(linearity_error(&op, p, q, a, b) < 1e-12);
    }

    #[test]
    fn fractional_oob_is_scale_invariant(cfg in small_frame(), c in 1e-3..1e3f64, phase in 0.0..std::f64::consts::TAU) {
        let op = SpectrumOperator::<f64>::new(&cfg).unwrap();
        let p: Vec<Complex64> = (0..cfg.n)
            .map(|k| Complex64::from_polar(1.0 + (k as f64 + phase).sin().abs(), phase * k as f64))
            .collect();
        prop_assert!(scale_invariance_error(&op, &p, c) < 1e-10);
    }

    #[test]
    fn juxtaposition_tiles_a_block(
        m in 2usize..=8,
        copies in 1usize..=6,
        w0 in 0usize..64,
        values in prop::collection::vec(0.1..5.0f64, 8),
    ) {
        let n = m * copies;
        let vals = &values[..m];
        prop_assert!(tiling_holds(vals, w0 % n, m, copies));
        let mut block = vec![0.0; n];
        for (i, &v) in vals.iter().enumerate() {
            block[(w0 + i) % n] = v;
        }
        let window: Vec<usize> = (0..m).map(|i| (w0 + i) % n).collect();
        let full = juxtapose(&block, m, n).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let nef_block: f64 = nef(&block, &window).unwrap();
        let nef_full: f64 = nef(&full, &all).unwrap();
        prop_assert!((nef_full - copies as f64 * nef_block).abs() <= 1e-12 * nef_full);
    }

    #[test]
    fn oob_gradient_matches_finite_differences(cfg in small_frame(), shift in 0.0..3.0f64) {
        let op = SpectrumOperator::<f64>::new(&cfg).unwrap();
        let p: Vec<f64> = (0..cfg.n).map(|k| (k as f64 * 0.7 + shift).cos() + 1.2).collect();
        prop_assert!(oob_gradient_error(&op, &p) < 1e-6);
    }

    #[test]
    fn nef_gradient_matches_finite_differences(p in prop::collection::vec(0.2..3.0f64, 6)) {
        let k_set = [0usize, 2, 3, 5];
        for &k in &k_set {
            let h = 1e-6 * p[k];
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (nef::<f64, f64>(&plus, &k_set).unwrap() - nef::<f64, f64>(&minus, &k_set).unwrap()) / (2.0 * h);
            let exact = -2.0 / p[k].powi(3);
            prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn min_nef_solutions_are_feasible_and_stationary(
        cfg in small_frame(),
        efv in any::<bool>(),
        t_p in 1.0..50.0f64,
        frac in 0.05..2.0f64,
    ) {
        let mask = if efv { Mask::Efv } else { Mask::Afv };
        let op = SpectrumOperator::<f64>::new(&cfg).unwrap();
        let eq = equipowered(cfg.n, &cfg.k_set, t_p);
        let eps = frac * op.oob_power(&eq.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
        let sol = solve(&DesignProblem::min_nef(cfg.clone(), mask, t_p, eps)).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.kkt_residual <= 1e-6, "kkt {}", sol.kkt_residual);
        prop_assert!(sol.total_power <= t_p * (1.0 + 1e-9));
        prop_assert!(sol.oob_power <= eps * (1.0 + 1e-9));
        for &k in &cfg.k_set {
            prop_assert!(sol.preamble[k] > 0.0);
        }
        if efv {
            for k in (0..cfg.n).filter(|k| !cfg.k_set.contains(k)) {
                prop_assert_eq!(sol.preamble[k], 0.0);
            }
        }
    }

    #[test]
    fn min_nef_is_homogeneous(cfg in small_frame(), c in 0.1..10.0f64, frac in 0.1..1.0f64) {
        let op = SpectrumOperator::<f64>::new(&cfg).unwrap();
        let eq = equipowered(cfg.n, &cfg.k_set, 10.0);
        let eps = frac * op.oob_power(&eq.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>());
        let a = solve(&DesignProblem::min_nef(cfg.clone(), Mask::Afv, 10.0, eps)).unwrap();
        let b = solve(&DesignProblem::min_nef(cfg, Mask::Afv, 10.0 * c, eps * c)).unwrap();
        prop_assert!((a.nef - c * b.nef).abs() <= 1e-6 * a.nef);
        prop_assert!((a.fractional_oob - b.fractional_oob).abs() <= 1e-6 * a.fractional_oob.max(1e-12));
    }
}

#[test]
fn unconstrained_min_nef_is_equipowered() {
    for cfg in [
        FrameConfig::new(16, 4, 0, 4, false, vec![6, 7, 8]).unwrap(),
        FrameConfig::new(160, 12, 6, 8, false, (76..=80).collect()).unwrap(),
    ] {
        let sol = solve(&DesignProblem::min_nef(cfg.clone(), Mask::Afv, 100.0, 1e9)).unwrap();
        assert!(sol.oob_inactive);
        let eq = equipowered(cfg.n, &cfg.k_set, 100.0);
        for (a, b) in sol.preamble.iter().zip(&eq) {
            let d: f64 = a - b;
            assert!(d.abs() < 1e-6 * eq.iter().cloned().fold(0.0, f64::max));
        }
    }
}

#[test]
fn zf_is_unbiased_and_noise_calibrated() {
    let n = 16;
    let k_set = [3usize, 4, 9, 12];
    let p: Vec<f64> = (0..n).map(|k| 0.5 + 0.25 * k as f64).collect();
    let ch = gen_channel::<f64>(4, 0.15, n, 3).unwrap();
    let sigma2 = 0.7;
    let draws = 25_000;
    let mut mean = vec![Complex64::new(0.0, 0.0); k_set.len()];
    let mut power = vec![0.0; k_set.len()];
    for d in 0..draws {
        let y = transmit(&p, &ch, sigma2, 1000 + d).unwrap();
        let est = zf_estimate(&y, &p, &k_set).unwrap();
        for (i, &k) in k_set.iter().enumerate() {
            let e = est[i] - ch.freq_response[k];
            mean[i] += e;
            power[i] += e.norm_sqr();
        }
    }
    for (i, &k) in k_set.iter().enumerate() {
        let expected = sigma2 / (p[k] * p[k]);
        let m = mean[i] / draws as f64;
        let v = power[i] / draws as f64;
        // 4 standard errors of the sample mean
        assert!(m.norm() < 4.0 * (expected / draws as f64).sqrt(), "bias {m} at {k}");
        assert!((v / expected - 1.0).abs() < 0.02, "variance {v} vs {expected} at {k}");
    }
    // the total over all bins pins the per-sample calibration across 1e5 samples
    let total: f64 = power.iter().sum::<f64>() / draws as f64;
    let expected: f64 = k_set.iter().map(|&k| sigma2 / (p[k] * p[k])).sum();
    assert!((total / expected - 1.0).abs() < 0.02);
}

#[test]
fn noiseless_zf_recovers_the_channel() {
    let ch = gen_channel::<f64>(11, 0.15, 32, 9).unwrap();
    let p: Vec<f64> = (0..32).map(|k| 1.0 + (k % 3) as f64).collect();
    let y = transmit(&p, &ch, 0.0, 1).unwrap();
    let all: Vec<usize> = (0..32).collect();
    let est = zf_estimate(&y, &p, &all).unwrap();
    for (a, b) in est.iter().zip(&ch.freq_response) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let p: Vec<f64> = (0..32).map(|k| 1.0 + (k as f64 * 0.3).sin().abs()).collect();
    for estimator in [Estimator::Zf, Estimator::Ls, Estimator::Mmse] {
        let mc = MonteCarlo {
            snr_db: vec![0.0, 15.0],
            trials: 300,
            estimator,
            k_set: (9..=24).collect(),
            l_c: 10,
            channel: ChannelModel::IdentityPrior { taps: 10 },
            seed: 77,
        };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo(&p, &mc).unwrap())
        };
        let a = run(1);
        let b = run(4);
        let c = run(4);
        assert_eq!(a.empirical_mse, b.empirical_mse);
        assert_eq!(b.empirical_mse, c.empirical_mse);
        assert_eq!(a.std_error, b.std_error);
    }
}

#[test]
fn mmse_equals_ls_without_noise_on_a_square_grid() {
    // spread tones keep the square F_T well conditioned
    let k_prime: Vec<usize> = (0..32).step_by(3).take(10).collect();
    let grid = ToneGrid::<f64>::new(k_prime, 10, 32).unwrap();
    let tones: Vec<Complex64> = (0..10)
        .map(|i| Complex64::new((i as f64).cos(), (i as f64 * 0.6).sin()))
        .collect();
    let p_tones = vec![1.3; 10];
    let ls = ls_time_estimate(&tones, &grid).unwrap();
    let mmse = mmse_estimate(&tones, &p_tones, 0.0, &grid).unwrap();
    for (a, b) in ls.iter().zip(&mmse) {
        assert!((a - b).norm() < 1e-8);
    }
}
