use phidiv::density::{
    bandwidth_lscv, bandwidth_silverman, bandwidth_sj, ln_smooth_model, lscv_score, lscv_score_gaussian, smooth_model,
};
use phidiv::quadrature::{integrate, integrate_semi_infinite};
use phidiv::{DensityEstimate, Error, Family, KdeSpec, KernelKind, ModelSpec, QuadratureConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn q() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn normal_scores(n: usize) -> Vec<f64> {
    let g = ModelSpec::new(Family::Gaussian);
    (1..=n).map(|i| g.quantile(&[0.0, 1.0], (i as f64 - 0.5) / n as f64).unwrap()).collect()
}

fn draw(family: Family, theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelSpec::new(family).sample(theta, n, &mut rng).unwrap()
}

fn brute_gaussian(x: f64, data: &[f64], w: f64) -> f64 {
    data.iter().map(|y| (-0.5 * ((x - y) / w).powi(2)).exp()).sum::<f64>()
        / (data.len() as f64 * w * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn gaussian_estimate_matches_direct_sum() {
    let data = draw(Family::Gaussian, &[0.0, 1.0], 100, 1);
    let est = DensityEstimate::with_bandwidth(KernelKind::Gaussian, 0.35, &data).unwrap();
    for &x in &[-3.0, -0.4, 0.0, 1.3, 2.9, 4.5] {
        let direct = brute_gaussian(x, &data, 0.35);
        assert!((est.eval(x).unwrap() - direct).abs() <= 1e-12 * direct, "x={x}");
    }
    // far tail: only the nearest points contribute, in log space
    let lx = est.ln_eval(40.0);
    let m = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let expected = -0.5 * ((40.0 - m) / 0.35f64).powi(2) - (100.0 * 0.35 * (2.0 * std::f64::consts::PI).sqrt()).ln();
    assert!((lx - expected).abs() < 1e-6 * expected.abs());
}

#[test]
fn sample_log_density_follows_input_order() {
    let data = vec![0.5, -1.0, 2.0, 0.1];
    let est = DensityEstimate::with_bandwidth(KernelKind::Gaussian, 0.5, &data).unwrap();
    for (y, l) in data.iter().zip(est.ln_at_sample()) {
        assert!((brute_gaussian(*y, &data, 0.5).ln() - l).abs() < 1e-12);
    }
}

#[test]
fn asymmetric_estimates_integrate_to_one() {
    let data = draw(Family::Gpd, &[0.7, 3.0], 100, 2);
    for (k, w) in [(KernelKind::Gamma, 0.1), (KernelKind::Rig, 0.01), (KernelKind::Rig, 0.3), (KernelKind::Varying, 8.0)] {
        let est = DensityEstimate::with_bandwidth(k, w, &data).unwrap();
        let mass = integrate_semi_infinite(|x| est.ln_eval(x).exp(), 0.0, 3.0, &est.breakpoints(), &q()).unwrap().value;
        assert!((mass - 1.0).abs() < 1e-5, "{k:?} w={w}: {mass}");
    }
    let mt = DensityEstimate::with_bandwidth(KernelKind::Varying, 8.0, &data).unwrap();
    assert!((mt.raw_mass() - 1.0).abs() < 1e-12);
    assert_eq!(mt.eval(0.0).unwrap(), 0.0);
}

#[test]
fn rig_kernel_matches_direct_sum() {
    let data = [0.3, 1.0, 2.5, 7.0];
    let w = 0.2;
    let est = DensityEstimate::with_bandwidth(KernelKind::Rig, w, &data).unwrap();
    for &x in &[0.05, 0.9, 3.0] {
        let xi = f64::max(x - w, w / 2.0);
        let raw: f64 = data
            .iter()
            .map(|&t| (2.0 * std::f64::consts::PI * w * t).powf(-0.5) * (-(xi / (2.0 * w)) * (t / xi - 2.0 + xi / t)).exp())
            .sum::<f64>()
            / 4.0;
        let v = est.eval(x).unwrap() * est.raw_mass();
        assert!((v - raw).abs() < 1e-12 * raw.max(1e-300), "x={x}");
    }
}

#[test]
fn gamma_kernel_matches_direct_sum() {
    let data = [0.3, 1.0, 2.5, 7.0];
    let w = 0.4f64;
    let est = DensityEstimate::with_bandwidth(KernelKind::Gamma, w, &data).unwrap();
    for &x in &[0.0, 0.9, 3.0] {
        let a = x / w;
        let raw: f64 = data
            .iter()
            .map(|&y: &f64| (a * y.ln() - y / w - libm_lgamma(1.0 + a) - (1.0 + a) * w.ln()).exp())
            .sum::<f64>()
            / 4.0;
        let v = est.eval(x).unwrap() * est.raw_mass();
        assert!((v - raw).abs() < 1e-12 * raw, "x={x}");
    }
}

fn libm_lgamma(x: f64) -> f64 {
    // Stirling series after shifting the argument above 40
    let mut x = x;
    let mut acc = 0.0;
    while x < 40.0 {
        acc -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
}

#[test]
fn half_line_estimates_reject_negative_points() {
    let est = DensityEstimate::with_bandwidth(KernelKind::Gamma, 0.1, &[1.0, 2.0]).unwrap();
    assert!(matches!(est.eval(-0.1), Err(Error::Domain(_))));
    assert!(DensityEstimate::with_bandwidth(KernelKind::Rig, 0.1, &[0.0, 2.0]).is_err());
    assert!(DensityEstimate::with_bandwidth(KernelKind::Varying, 2.5, &[1.0, 2.0]).is_err());
}

#[test]
fn silverman_formula() {
    let data = draw(Family::Gaussian, &[0.0, 1.0], 100, 3);
    let mut s = data.clone();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q7 = |p: f64| {
        let h = 99.0 * p;
        let lo = h.floor() as usize;
        s[lo] + (h - lo as f64) * (s[lo + 1] - s[lo])
    };
    let mean = data.iter().sum::<f64>() / 100.0;
    let sd = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    let expected = 0.9 * sd.min((q7(0.75) - q7(0.25)) / 1.34) * 100f64.powf(-0.2);
    assert!((bandwidth_silverman(&data).unwrap() - expected).abs() < 1e-14);
    assert!((0.9 * 100f64.powf(-0.2) - 0.358_296_5).abs() < 1e-7);
}

#[test]
fn sheather_jones_matches_independent_solver() {
    let mut x = normal_scores(50);
    x.extend([6.0, 7.5]);
    let r = bandwidth_sj(&x).unwrap();
    assert!(r.warning.is_none());
    assert!((r.value - 0.564_028_759_435_126_4).abs() < 1e-8, "{}", r.value);
    let x2: Vec<f64> = (1..=80).map(|i| 0.1 * i as f64 + (i as f64).sin()).collect();
    assert!((bandwidth_sj(&x2).unwrap().value - 1.118_762_005_395_763_2).abs() < 1e-8);
}

#[test]
fn sheather_jones_degenerate_samples() {
    assert!(bandwidth_sj(&[1.0, 1.0, 1.0, 1.0]).is_err());
    let r = bandwidth_sj(&[1.0, 2.0]).unwrap();
    assert!(r.warning.is_some());
    assert_eq!(r.value, bandwidth_silverman(&[1.0, 2.0]).unwrap());
}

#[test]
fn bandwidth_averages_on_normal_samples() {
    let reps = 300;
    let (mut s_clean, mut j_clean, mut s_cont, mut j_cont) = (0.0, 0.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = ModelSpec::new(Family::Gaussian);
    for _ in 0..reps {
        let x = g.sample(&[0.0, 1.0], 100, &mut rng).unwrap();
        s_clean += bandwidth_silverman(&x).unwrap();
        j_clean += bandwidth_sj(&x).unwrap().value;
        let mut y = g.sample(&[0.0, 1.0], 90, &mut rng).unwrap();
        y.extend(g.sample(&[10.0, 1.0], 10, &mut rng).unwrap());
        s_cont += bandwidth_silverman(&y).unwrap();
        j_cont += bandwidth_sj(&y).unwrap().value;
    }
    let r = reps as f64;
    assert!((s_clean / r - 0.35).abs() < 0.02, "{}", s_clean / r);
    assert!((0.36..=0.42).contains(&(j_clean / r)), "{}", j_clean / r);
    assert!((s_cont / r - 0.41).abs() < 0.03, "{}", s_cont / r);
    assert!((j_cont / r - 0.427).abs() < 0.04, "{}", j_cont / r);
}

#[test]
fn gaussian_lscv_closed_form_matches_quadrature() {
    let data = draw(Family::Gaussian, &[0.0, 1.0], 40, 4);
    for &h in &[0.15, 0.4, 0.9] {
        let int_sq = integrate(|x| brute_gaussian(x, &data, h).powi(2), -15.0, 15.0, &q()).unwrap().value;
        let n = data.len() as f64;
        let loo: f64 = (0..data.len())
            .map(|i| {
                let others: Vec<f64> = data.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                brute_gaussian(data[i], &others, h)
            })
            .sum::<f64>()
            / n;
        let oracle = int_sq - 2.0 * loo;
        assert!((lscv_score_gaussian(&data, h) - oracle).abs() < 1e-8, "h={h}");
    }
}

#[test]
fn lscv_generic_score_matches_brute_force() {
    let data = draw(Family::Gpd, &[0.5, 1.0], 30, 5);
    let w = 0.2;
    let est = DensityEstimate::with_bandwidth(KernelKind::Varying, 6.0, &data).unwrap();
    let int_sq = integrate_semi_infinite(|x| est.eval(x).unwrap().powi(2), 0.0, 1.0, &data, &q()).unwrap().value;
    let loo: f64 = (0..data.len())
        .map(|i| {
            let others: Vec<f64> = data.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
            DensityEstimate::with_bandwidth(KernelKind::Varying, 6.0, &others).unwrap().eval(data[i]).unwrap()
        })
        .sum::<f64>()
        / data.len() as f64;
    let score = lscv_score(&data, KernelKind::Varying, 6.0, &q()).unwrap();
    assert!((score - (int_sq - 2.0 * loo)).abs() < 1e-6, "{score} vs {}", int_sq - 2.0 * loo);
    let _ = w;
}

#[test]
fn lscv_selects_interior_bandwidth_and_flags_spikes() {
    let data = draw(Family::Gaussian, &[0.0, 1.0], 100, 6);
    let r = bandwidth_lscv(&data, KernelKind::Gaussian, &q()).unwrap();
    assert!(r.value > 0.05 && r.value < 1.5 && r.warning.is_none(), "{r:?}");
    let m = bandwidth_lscv(&draw(Family::Gpd, &[0.5, 1.0], 60, 7), KernelKind::Varying, &q()).unwrap();
    assert_eq!(m.value.fract(), 0.0);
    let spike = [2.0, 2.0, 2.0, 2.0, 2.0, 2.0000001];
    let s = bandwidth_lscv(&spike, KernelKind::Gaussian, &q()).unwrap();
    assert!(s.warning.is_some());
}

#[test]
fn gaussian_smoothing_matches_convolution() {
    let cfg = q();
    let cases: Vec<(Family, Vec<f64>)> = vec![
        (Family::Gaussian, vec![0.5, 1.3]),
        (Family::GaussianLocation { sigma: 1.0 }, vec![-0.3]),
        (Family::GaussMix2, vec![0.35, -2.0, 1.5]),
        (Family::Gpd, vec![0.7, 3.0]),
        (Family::weibull_mix2(), vec![0.35, 1.2, 2.0]),
    ];
    for (fam, th) in cases {
        let m = ModelSpec::new(fam);
        let w = 0.5;
        for &x in &[-0.8, 0.3, 2.0, 6.0] {
            let conv = integrate(
                |y| m.pdf(&th, y).unwrap() * (-0.5 * ((x - y) / w).powi(2)).exp() / (w * (2.0 * std::f64::consts::PI).sqrt()),
                x - 15.0 * w,
                x + 15.0 * w,
                &cfg,
            )
            .unwrap()
            .value;
            let s = smooth_model(KernelKind::Gaussian, w, &m, &th, x, &cfg).unwrap();
            assert!((s - conv).abs() < 1e-7 * conv.max(1e-3), "{fam:?} x={x}: {s} vs {conv}");
        }
    }
}

#[test]
fn varying_smoothing_matches_direct_integral() {
    let m = ModelSpec::new(Family::Gpd);
    let th = [0.5, 2.0];
    let a = 7.0f64;
    let lg = libm_lgamma(a);
    for &x in &[0.2, 1.0, 5.0] {
        let direct = integrate_semi_infinite(
            |y| {
                let t = a * x / y;
                (-(y.ln()) - lg + a * t.ln() - t).exp() * m.pdf(&th, y).unwrap()
            },
            0.0,
            x,
            &[x],
            &q(),
        )
        .unwrap()
        .value;
        let s = smooth_model(KernelKind::Varying, a, &m, &th, x, &q()).unwrap();
        assert!((s - direct).abs() < 1e-6 * direct, "x={x}: {s} vs {direct}");
    }
}

#[test]
fn unsupported_smoothing_is_rejected() {
    let m = ModelSpec::new(Family::Gpd);
    for k in [KernelKind::Gamma, KernelKind::Rig] {
        assert!(matches!(ln_smooth_model(k, 0.1, &m, &[0.5, 1.0], 1.0, &q()), Err(Error::Unsupported(_))));
    }
    let g = ModelSpec::new(Family::Gaussian);
    assert!(ln_smooth_model(KernelKind::Varying, 3.0, &g, &[0.0, 1.0], 1.0, &q()).is_err());
}

#[test]
fn rule_based_construction() {
    let data = draw(Family::Gaussian, &[0.0, 1.0], 100, 8);
    let est = DensityEstimate::new(KdeSpec::new(KernelKind::Gaussian, phidiv::BandwidthRule::Silverman), &data).unwrap();
    assert_eq!(est.bandwidth(), bandwidth_silverman(&data).unwrap());
    assert!(DensityEstimate::new(KdeSpec::new(KernelKind::Varying, phidiv::BandwidthRule::Silverman), &[1.0, 2.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gaussian_estimate_is_a_density(seed in 0u64..1000, w in 0.05f64..2.0) {
        let data = draw(Family::GaussMix2, &[0.4, -1.0, 2.0], 50, seed);
        let est = DensityEstimate::with_bandwidth(KernelKind::Gaussian, w, &data).unwrap();
        let mass = est.integrate(|x| est.ln_eval(x).exp(), &q()).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-6);
        for &x in &[-5.0, 0.0, 3.0, 100.0] {
            prop_assert!(est.eval(x).unwrap() >= 0.0);
        }
    }
}
