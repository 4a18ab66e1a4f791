use phidiv::estimators::*;
use phidiv::optimize::nelder_mead_max;
use phidiv::{BandwidthRule, Bounds, DivergenceSpec, Family, KdeSpec, KernelKind, ModelSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn opts() -> FitOptions {
    FitOptions::default()
}

fn draw(m: &ModelSpec, theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    m.sample(theta, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

/// Composite Simpson on [a, b] with k (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, k: usize) -> f64 {
    let h = (b - a) / k as f64;
    let mut s = f(a) + f(b);
    for i in 1..k {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Likelihood maximizer of N(μ, σ²): σ with divisor n.
fn gaussian_ml(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    vec![m, (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()]
}

fn specs() -> Vec<DivergenceSpec> {
    vec![
        DivergenceSpec::hellinger(),
        DivergenceSpec::cressie_read(-0.5).unwrap(),
        DivergenceSpec::cressie_read(2.0).unwrap(),
        DivergenceSpec::ModifiedKl,
    ]
}

#[test]
fn dual_objective_vanishes_at_alpha_equal_phi() {
    let cases: Vec<(ModelSpec, Vec<f64>, Vec<f64>)> = vec![
        (ModelSpec::new(Family::Gaussian), vec![0.3, 1.7], vec![-0.2, 0.9]),
        (ModelSpec::new(Family::GaussMix2), vec![0.35, -2.0, 1.5], vec![0.3, -1.0, 2.0]),
        (ModelSpec::new(Family::Gpd), vec![0.7, 3.0], vec![0.5, 2.0]),
        (ModelSpec::new(Family::weibull_mix2()), vec![0.35, 1.2, 2.0], vec![0.4, 1.0, 1.5]),
    ];
    for (m, phi, theta) in cases {
        let y = draw(&m, &theta, 60, 3);
        for s in specs() {
            let v = dual_inner_objective(&m, &phi, &phi, &y, &s, &opts().quad).unwrap();
            assert_eq!(v, 0.0, "{:?} {:?}", m.family, s);
        }
    }
}

#[test]
fn dual_objective_matches_simpson_oracle() {
    // Gaussian goes through the closed form, the mixture through quadrature
    let s = DivergenceSpec::hellinger();
    let g = 0.5;
    let cases: Vec<(ModelSpec, Vec<f64>, Vec<f64>)> = vec![
        (ModelSpec::new(Family::Gaussian), vec![0.3, 1.2], vec![-0.4, 0.8]),
        (ModelSpec::new(Family::GaussMix2), vec![0.35, -2.0, 1.5], vec![0.5, -1.0, 2.0]),
    ];
    for (m, phi, alpha) in cases {
        let y = draw(&m, &phi, 40, 9);
        let integral = simpson(
            |x| {
                let p = m.pdf(&phi, x).unwrap();
                let q = m.pdf(&alpha, x).unwrap();
                (p.powf(g) * q.powf(1.0 - g) - p) / (g - 1.0)
            },
            -30.0,
            30.0,
            20_000,
        );
        let sum: f64 = y
            .iter()
            .map(|&v| {
                let t = m.pdf(&phi, v).unwrap() / m.pdf(&alpha, v).unwrap();
                (t.powf(g) - 1.0) / g
            })
            .sum();
        let want = integral - sum / y.len() as f64;
        let got = dual_inner_objective(&m, &phi, &alpha, &y, &s, &opts().quad).unwrap();
        assert!((got - want).abs() < 1e-7, "{:?}: {got} vs {want}", m.family);
    }
}

#[test]
fn kernel_objective_with_modified_kl_is_likelihood_plus_constant() {
    let m = ModelSpec::new(Family::Gaussian);
    let y = draw(&m, &[0.0, 1.0], 80, 5);
    let kde = phidiv::DensityEstimate::new(KdeSpec::new(KernelKind::Gaussian, BandwidthRule::Silverman), &y).unwrap();
    let mean_ln_k = kde.ln_at_sample().iter().sum::<f64>() / y.len() as f64;
    for phi in [[0.0, 1.0], [0.5, 2.0], [-1.0, 0.7]] {
        let mean_ll = y.iter().map(|&v| m.ln_pdf(&phi, v).unwrap()).sum::<f64>() / y.len() as f64;
        let got = kernel_dual_objective(&m, &phi, &kde, &DivergenceSpec::ModifiedKl, &opts().quad).unwrap();
        assert!((got - (mean_ln_k - mean_ll)).abs() < 1e-6, "{got}");
    }
}

#[test]
fn kernel_estimator_with_modified_kl_is_the_mle() {
    let g = ModelSpec::new(Family::Gaussian);
    let mix = ModelSpec::new(Family::GaussMix2);
    let kspec = KdeSpec::new(KernelKind::Gaussian, BandwidthRule::Silverman);
    for seed in 0..4 {
        let y = draw(&g, &[0.5, 1.5], 100, seed);
        let ml = gaussian_ml(&y);
        let r = kernel_mdphide(&g, &y, kspec, &DivergenceSpec::ModifiedKl, &[0.0, 1.0], &opts()).unwrap();
        for (a, b) in r.theta_hat.iter().zip(&ml) {
            assert!((a - b).abs() < 1e-3, "{:?} vs {:?}", r.theta_hat, ml);
        }
        let y = draw(&mix, &[0.35, -2.0, 1.5], 100, 100 + seed);
        let ml = mle(&mix, &y, &[0.35, -2.0, 1.5], &opts()).unwrap();
        let r = kernel_mdphide(&mix, &y, kspec, &DivergenceSpec::ModifiedKl, &[0.35, -2.0, 1.5], &opts()).unwrap();
        for (a, b) in r.theta_hat.iter().zip(&ml.theta_hat) {
            assert!((a - b).abs() < 1e-3, "{:?} vs {:?}", r.theta_hat, ml.theta_hat);
        }
    }
}

#[test]
fn classical_estimator_is_the_gaussian_mle() {
    let g = ModelSpec::new(Family::Gaussian);
    for seed in 0..3 {
        let y = draw(&g, &[-1.0, 2.0], 100, 40 + seed);
        let ml = gaussian_ml(&y);
        let r = classical_mdphide(&g, &y, &DivergenceSpec::hellinger(), &[0.0, 1.0], &opts()).unwrap();
        for (a, b) in r.theta_hat.iter().zip(&ml) {
            assert!((a - b).abs() < 2e-3, "{:?} vs {:?}", r.theta_hat, ml);
        }
        assert!(matches!(r.witness, Witness::Dual { .. }));
    }
}

#[test]
fn escort_at_the_mle_is_returned() {
    let g = ModelSpec::new(Family::Gaussian);
    let y = draw(&g, &[0.0, 1.0], 100, 77);
    let ml = gaussian_ml(&y);
    let r = dphide(&g, &ml, &y, &DivergenceSpec::hellinger(), &[0.3, 1.3], &opts()).unwrap();
    for (a, b) in r.theta_hat.iter().zip(&ml) {
        assert!((a - b).abs() < 1e-3, "{:?} vs {:?}", r.theta_hat, ml);
    }
    assert!(r.objective_value >= -1e-12);
}

#[test]
fn negative_power_dual_is_a_penalized_power_objective() {
    // For γ = -a: dual(α; θ) = -(1/(1+a)) [∫ r^{1+a} p_θ - ((1+a)/a) mean r^a + 1/a]
    // with r = p_α / p_θ
    let cases: Vec<(ModelSpec, Vec<[f64; 3]>)> = vec![
        (ModelSpec::new(Family::Gaussian), vec![[0.0, 1.0, 0.0], [0.3, 1.2, 0.0], [-0.5, 0.9, 0.0]]),
        (ModelSpec::new(Family::GaussMix2), vec![[0.35, -2.0, 1.5], [0.4, -1.7, 1.4]]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (m, points) in cases {
        let d = m.dim();
        let y = m.sample(&points[0][..d], 50, &mut rng).unwrap();
        for a in [0.25, 0.5] {
            let spec = DivergenceSpec::cressie_read(-a).unwrap();
            for (i, th) in points.iter().enumerate() {
                let theta = &th[..d];
                let alpha = &points[(i + 1) % points.len()][..d];
                let r = |x: f64| m.pdf(alpha, x).unwrap() / m.pdf(theta, x).unwrap();
                let int = simpson(|x| r(x).powf(1.0 + a) * m.pdf(theta, x).unwrap(), -25.0, 25.0, 20_000);
                let mr = y.iter().map(|&v| r(v).powf(a)).sum::<f64>() / y.len() as f64;
                let want = -(int - (1.0 + a) / a * mr + 1.0 / a) / (1.0 + a);
                let got = dual_inner_objective(&m, theta, alpha, &y, &spec, &opts().quad).unwrap();
                assert!((got - want).abs() < 1e-7, "a={a}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn em_log_likelihood_is_monotone() {
    let m = ModelSpec::new(Family::GaussMix2);
    let y = draw(&m, &[0.35, -2.0, 1.5], 100, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    use rand::Rng;
    for _ in 0..50 {
        let init = [rng.random_range(0.1..0.9), rng.random_range(-5.0..0.0), rng.random_range(0.0..5.0)];
        let r = em_gauss_mix2(&m, &y, &init, &EmOptions::default()).unwrap();
        let Witness::Em { trace, .. } = r.witness else { panic!("no EM witness") };
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(r.theta_hat[1] <= r.theta_hat[2]);
    }
    let wm = ModelSpec::new(Family::weibull_mix2());
    let y = draw(&wm, &[0.35, 1.2, 2.0], 200, 8);
    for init in [[0.35, 1.2, 2.0], [0.6, 0.5, 4.0], [0.2, 3.0, 1.0]] {
        let r = em_weibull_mix2(&wm, &y, &init, &EmOptions::default()).unwrap();
        let Witness::Em { trace, .. } = r.witness else { panic!("no EM witness") };
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }
}

#[test]
fn mle_recovers_parameters_on_large_samples() {
    let gpd = ModelSpec::new(Family::Gpd);
    let y = draw(&gpd, &[0.7, 3.0], 4000, 1);
    let r = mle(&gpd, &y, &[0.5, 2.0], &opts()).unwrap();
    assert!((r.theta_hat[0] - 0.7).abs() < 0.08 && (r.theta_hat[1] - 3.0).abs() < 0.25, "{:?}", r.theta_hat);
    let wm = ModelSpec::new(Family::weibull_mix2());
    let y = draw(&wm, &[0.35, 1.2, 2.0], 4000, 2);
    let r = mle(&wm, &y, &[0.5, 1.0, 1.0], &opts()).unwrap();
    assert!((r.theta_hat[0] - 0.35).abs() < 0.05, "{:?}", r.theta_hat);
    assert!((r.theta_hat[1] - 1.2).abs() < 0.15 && (r.theta_hat[2] - 2.0).abs() < 0.2, "{:?}", r.theta_hat);
    let g = ModelSpec::new(Family::Gaussian);
    let y = [1.0, 2.0, 4.0];
    let r = mle(&g, &y, &[0.0, 1.0], &opts()).unwrap();
    assert_eq!(r.theta_hat[0], 7.0 / 3.0);
    assert!((r.theta_hat[1] - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn small_power_tradeoff_approaches_the_mle() {
    let g = ModelSpec::new(Family::Gaussian);
    let y = draw(&g, &[0.0, 1.0], 100, 21);
    let ml = gaussian_ml(&y);
    let r = mpd(&g, &y, 0.01, &[0.2, 1.2], &opts()).unwrap();
    for (a, b) in r.theta_hat.iter().zip(&ml) {
        assert!((a - b).abs() < 0.01, "{:?} vs {ml:?}", r.theta_hat);
    }
}

#[test]
fn power_objective_quadrature_matches_closed_form() {
    // GaussianLocation uses the closed form; the same density as a degenerate
    // mixture goes through quadrature
    let loc = ModelSpec::new(Family::GaussianLocation { sigma: 1.0 });
    let mix = ModelSpec::new(Family::GaussMix2);
    let y = [0.1, -0.4, 1.3, 2.2];
    for a in [0.1, 0.5, 1.0] {
        let c = mpd_objective(&loc, &[0.7], &y, a, &opts().quad).unwrap();
        let q = mpd_objective(&mix, &[0.5, 0.7, 0.7], &y, a, &opts().quad).unwrap();
        assert!((c - q).abs() < 1e-8, "{c} vs {q}");
    }
}

#[test]
fn robust_estimators_resist_a_shifted_cluster() {
    let g = ModelSpec::new(Family::Gaussian);
    let mut y = draw(&g, &[0.0, 1.0], 100, 4);
    y.sort_by(|a, b| a.total_cmp(b));
    for v in y.iter_mut().rev().take(10) {
        *v = 10.0;
    }
    let kspec = KdeSpec::new(KernelKind::Gaussian, BandwidthRule::Silverman);
    let h = DivergenceSpec::hellinger();
    let ml = mle(&g, &y, &[0.0, 1.0], &opts()).unwrap();
    assert!(ml.theta_hat[1] > 2.5);
    for r in [
        kernel_mdphide(&g, &y, kspec, &h, &[0.0, 1.0], &opts()).unwrap(),
        basu_lindsay(&g, &y, kspec, &h, &[0.0, 1.0], &opts()).unwrap(),
        beran(&g, &y, kspec, &h, &[0.0, 1.0], &opts()).unwrap(),
        mpd(&g, &y, 0.5, &[0.0, 1.0], &opts()).unwrap(),
    ] {
        assert!(r.theta_hat[0].abs() < 0.4 && r.theta_hat[1] < 1.3, "{:?}", r.theta_hat);
    }
}

#[test]
fn basu_lindsay_rejects_asymmetric_kernels() {
    let m = ModelSpec::new(Family::Gpd);
    let y = draw(&m, &[0.5, 1.0], 50, 2);
    let r = basu_lindsay(&m, &y, KdeSpec::new(KernelKind::Rig, BandwidthRule::Fixed(0.1)), &DivergenceSpec::hellinger(), &[0.5, 1.0], &opts());
    assert!(matches!(r, Err(phidiv::Error::Unsupported(_))));
}

#[test]
fn gpd_kernel_fit_runs_through_the_quantile_path() {
    let m = ModelSpec::new(Family::Gpd);
    let y = draw(&m, &[0.7, 3.0], 100, 6);
    let r = kernel_mdphide(&m, &y, KdeSpec::new(KernelKind::Rig, BandwidthRule::Fixed(0.01)), &DivergenceSpec::hellinger(), &[0.7, 3.0], &opts())
        .unwrap();
    assert!(r.objective_value.is_finite());
    assert!(m.bounds.contains(&r.theta_hat));
}

fn contaminated_gaussian(n: usize, seed: u64) -> Vec<f64> {
    // 0.9 N(0,1) + 0.1 N(10, 2²)
    let g = ModelSpec::new(Family::Gaussian);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = n / 10;
    let mut y = g.sample(&[0.0, 1.0], n - k, &mut rng).unwrap();
    y.extend(g.sample(&[10.0, 2.0], k, &mut rng).unwrap());
    y
}

#[test]
fn forcing_lambda_to_zero_gives_the_classical_estimator() {
    let g = ModelSpec::new(Family::Gaussian);
    let y = draw(&g, &[0.0, 1.0], 100, 12);
    let h = DivergenceSpec::hellinger();
    let classical = classical_mdphide(&g, &y, &h, &[0.1, 1.1], &opts()).unwrap();
    let init = ContaminationInit {
        phi0: vec![0.1, 1.1],
        alpha0: vec![0.1, 1.1],
        noise0: vec![5.0, 2.0],
        lambda0: 0.0,
        lambda_max: 0.5,
        force_zero: true,
    };
    let r = contamination_mdphide(&g, &default_noise_model(&g), &y, &h, &init, &opts()).unwrap();
    assert_eq!(r.theta_hat, classical.theta_hat);
    assert_eq!(r.objective_value, classical.objective_value);
    let Witness::Contamination { lambda, noise, .. } = r.witness else { panic!() };
    assert_eq!(lambda, 0.0);
    assert_eq!(noise, vec![5.0, 2.0]);
}

#[test]
fn contamination_objective_is_continuous_at_zero_weight() {
    let g = ModelSpec::new(Family::Gaussian);
    let y = contaminated_gaussian(100, 2);
    let h = DivergenceSpec::hellinger();
    let phi = [0.2, 1.1];
    let c = dual_inner_objective(&g, &phi, &[0.0, 1.3], &y, &h, &opts().quad).unwrap();
    let inner = [0.0, 1.3, 10.0, 2.0, 1e-200];
    let m = contamination_dual_objective(&g, &default_noise_model(&g), &phi, &inner, &y, &h, &opts().quad).unwrap();
    assert!((c - m).abs() < 1e-8, "{c} vs {m}");
}

#[test]
fn contamination_sup_dominates_the_classical_sup() {
    let g = ModelSpec::new(Family::Gaussian);
    let noise = default_noise_model(&g);
    let y = contaminated_gaussian(200, 3);
    let h = DivergenceSpec::hellinger();
    let q = opts().quad;
    let o = opts().optim;
    for phi in [[0.0, 1.0], [0.8, 3.0]] {
        let classical = nelder_mead_max(
            |a| dual_inner_objective(&g, &phi, a, &y, &h, &q).unwrap_or(f64::NAN),
            &phi,
            &g.bounds,
            &o,
        )
        .unwrap();
        let bounds = g.bounds.concat(&noise.bounds).concat(&Bounds::new(vec![0.0], vec![0.5]).unwrap());
        let mut start = classical.x.clone();
        start.extend([10.0, 2.0, 0.05]);
        let rich = nelder_mead_max(
            |t| contamination_dual_objective(&g, &noise, &phi, t, &y, &h, &q).unwrap_or(f64::NAN),
            &start,
            &bounds,
            &o,
        )
        .unwrap();
        assert!(rich.f >= classical.f - 1e-10, "{} < {}", rich.f, classical.f);
    }
    // on contaminated data the richer class is strictly better at the clean fit
    let phi = [0.0, 1.0];
    let classical = nelder_mead_max(|a| dual_inner_objective(&g, &phi, a, &y, &h, &q).unwrap_or(f64::NAN), &phi, &g.bounds, &o)
        .unwrap();
    let v = contamination_dual_objective(&g, &noise, &phi, &[0.0, 1.0, 10.0, 2.0, 0.1], &y, &h, &q).unwrap();
    assert!(v > classical.f + 0.01, "{v} vs {}", classical.f);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dual_objective_zero_on_random_points(
        mu in -3.0f64..3.0, s in 0.3f64..3.0, g in prop::sample::select(vec![-0.9, -0.3, 0.2, 0.5, 0.8, 1.5, 3.0])
    ) {
        let m = ModelSpec::new(Family::Gaussian);
        let y = draw(&m, &[0.0, 1.0], 30, 1);
        let spec = DivergenceSpec::cressie_read(g).unwrap();
        prop_assert_eq!(dual_inner_objective(&m, &[mu, s], &[mu, s], &y, &spec, &opts().quad).unwrap(), 0.0);
    }

    #[test]
    fn estimates_stay_inside_the_box(seed in 0u64..1000, a in 0.1f64..1.0) {
        let m = ModelSpec::new(Family::Gaussian);
        let y = draw(&m, &[0.0, 1.0], 40, seed);
        let r = mpd(&m, &y, a, &[0.0, 1.0], &opts()).unwrap();
        prop_assert!(m.bounds.contains(&r.theta_hat));
        prop_assert!(r.objective_value.is_finite());
    }
}
