use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use srb_core::estimator::{
    birkhoff_average, contraction_series, generating_function, interval_probability_check, rate_function,
    window_rates, ContractionWindow, Observable,
};
use srb_core::{Lattice, SineCoupling, SrbError, ZeroCoupling};

/// η ~ N(μ, s²/V), so P(ζ) = μζ + s²ζ²/2 and F(η) = (η − μ)²/(2s²).
fn gaussian_etas(mu: f64, s: f64, volume: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mu, s / (volume as f64).sqrt()).unwrap();
    (0..n).map(|_| d.sample(&mut r)).collect()
}

#[test]
fn gaussian_generating_function_and_rate() {
    let (mu, s, v) = (-0.01, 0.05, 100);
    let etas = gaussian_etas(mu, s, v, 40_000, 1);
    let zeta: Vec<f64> = (0..21).map(|k| -1.0 + 0.1 * k as f64).collect();
    let g = generating_function(&etas, v, &zeta).unwrap();
    assert!(g.collapsed.iter().all(|c| !c));
    for ((z, p), e) in zeta.iter().zip(&g.p).zip(&g.err) {
        let exact = mu * z + s * s * z * z / 2.0;
        assert!((p - exact).abs() < 4.0 * e + 1e-5, "ζ={z}: {p} vs {exact} ± {e}");
    }
    let ldp = rate_function(&g.zeta, &g.p, &g.err, 201).unwrap();
    assert!((ldp.eta_plus - mu).abs() < 2e-4, "{}", ldp.eta_plus);
    assert!(ldp.f.iter().all(|&f| f >= -1e-12));
    let eta = mu + 0.5 * s * s;
    let exact = (eta - mu).powi(2) / (2.0 * s * s);
    assert!((ldp.f_at(eta) - exact).abs() < 0.1 * exact + 1e-5, "{} vs {exact}", ldp.f_at(eta));
    assert_eq!(ldp.f_at(ldp.domain.1 + 1.0), f64::INFINITY);
}

#[test]
fn gaussian_interval_probability_approaches_rate() {
    let (mu, s) = (0.0, 1.0);
    let interval = (0.1, 0.2);
    let zeta: Vec<f64> = (0..21).map(|k| -0.5 + 0.05 * k as f64).collect();
    let p: Vec<f64> = zeta.iter().map(|z| mu * z + s * s * z * z / 2.0).collect();
    let ldp = rate_function(&zeta, &p, &vec![0.0; p.len()], 401).unwrap();
    let mut gaps = Vec::new();
    for v in [25, 100, 400] {
        let etas = gaussian_etas(mu, s, v, 200_000, v as u64);
        let chk = interval_probability_check(&etas, v, interval, &ldp).unwrap();
        assert!((chk.predicted + 0.005).abs() < 1e-4, "{}", chk.predicted);
        gaps.push((chk.empirical - chk.predicted).abs());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn rare_and_misplaced_intervals_are_rejected() {
    let zeta = [-0.5, 0.0, 0.5];
    let ldp = rate_function(&zeta, &[0.125, 0.0, 0.125], &[0.0; 3], 101).unwrap();
    let etas = gaussian_etas(0.0, 1.0, 400, 1000, 3);
    assert!(matches!(interval_probability_check(&etas, 400, (0.15, 0.2), &ldp), Err(SrbError::EventTooRare { .. })));
    assert!(matches!(interval_probability_check(&etas, 400, (0.2, 0.3), &ldp), Err(SrbError::InvalidConfig(_))));
}

#[test]
fn birkhoff_averages_agree_across_seeds() {
    let lat = Lattice::new(1, 2).unwrap();
    let obs = Observable::cos_first(0);
    let a = birkhoff_average(&obs, &SineCoupling, lat, 0.05, 100_000, 1000, 1).unwrap();
    let b = birkhoff_average(&obs, &SineCoupling, lat, 0.05, 100_000, 1000, 2).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!(a.stderr > 0.0 && (a.mean - b.mean).abs() < 4.0 * se, "{a:?} {b:?}");
}

#[test]
fn free_contraction_rate_is_zero() {
    let lat = Lattice::new(1, 2).unwrap();
    let v0: Vec<usize> = (0..lat.len()).collect();
    let s = contraction_series(lat, &ZeroCoupling, 0.0, &v0, 1000, 10, 4).unwrap();
    let w = ContractionWindow::full(&lat, 10).unwrap();
    let r = window_rates(&s, &w);
    assert_eq!(r.len(), 1000 / 22);
    assert!(r.iter().all(|&e| e == 0.0));
}

#[test]
fn coupled_contraction_rate_is_negative_on_average() {
    let lat = Lattice::new(1, 2).unwrap();
    let v0: Vec<usize> = (0..lat.len()).collect();
    let s = contraction_series(lat, &SineCoupling, 0.1, &v0, 100_000, 1000, 5).unwrap();
    let (m, se) = srb_core::stats::batch_means(&s, 20);
    assert!(m < -3.0 * se, "{m} ± {se}");
}

#[test]
fn window_shape_is_validated() {
    let lat = Lattice::new(1, 1).unwrap();
    assert!(ContractionWindow::full(&lat, 7).is_err());
    assert!(ContractionWindow::new(&lat, vec![5], 4).is_err());
    let w = ContractionWindow::new(&lat, vec![0, 1], 50).unwrap();
    assert_eq!((w.steps(), w.volume()), (51, 102));
}
