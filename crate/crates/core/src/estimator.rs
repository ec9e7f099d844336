//! Orbit estimators: Birkhoff means, the contraction rate η_{Λ₀}, the
//! Green–Kubo coefficient and the large-deviation machinery.

use crate::coupling::Coupling;
use crate::error::{Result, SrbError};
use crate::lattice::{differential_ds_eps, lambda, step_s_eps, v_plus, Lattice, LatticeState};
use crate::stats::{batch_means, jackknife};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Batches used for every batch-means error bar.
pub const BATCHES: usize = 20;

type Evaluator = dyn Fn(&Lattice, &[[f64; 2]]) -> f64 + Send + Sync;

/// Local observable: the evaluator sees ψ on `support` only, all other sites
/// read as 0.
pub struct Observable {
    pub name: String,
    pub support: Vec<usize>,
    pub analytic: bool,
    eval: Box<Evaluator>,
}

impl Observable {
    pub fn new(name: &str, support: Vec<usize>, eval: impl Fn(&Lattice, &[[f64; 2]]) -> f64 + Send + Sync + 'static) -> Self {
        Observable { name: name.into(), support, analytic: true, eval: Box::new(eval) }
    }

    pub fn constant(c: f64) -> Self {
        Observable::new("constant", vec![], move |_, _| c)
    }

    /// cos(ψ¹_site).
    pub fn cos_first(site: usize) -> Self {
        Observable::new("cos", vec![site], move |_, psi| psi[site][0].cos())
    }

    pub fn eval(&self, lat: &Lattice, psi: &[[f64; 2]], scratch: &mut Vec<[f64; 2]>) -> f64 {
        scratch.clear();
        scratch.resize(psi.len(), [0.0; 2]);
        for &s in &self.support {
            scratch[s] = psi[s];
        }
        (self.eval)(lat, scratch)
    }
}

/// Iterate S_ε from a Lebesgue-random start, calling `f(t, ψ_t)` for
/// t = 0..t_total after `burn_in` discarded steps.
pub fn run_orbit<F: FnMut(usize, &[[f64; 2]]) -> Result<()>>(
    lat: Lattice,
    coupling: &dyn Coupling,
    eps: f64,
    t_total: usize,
    burn_in: usize,
    seed: u64,
    mut f: F,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = LatticeState::random(lat, &mut rng).psi;
    let mut next = Vec::with_capacity(psi.len());
    for _ in 0..burn_in {
        step_s_eps(&lat, &psi, &mut next, coupling, eps);
        std::mem::swap(&mut psi, &mut next);
    }
    for t in 0..t_total {
        f(t, &psi)?;
        step_s_eps(&lat, &psi, &mut next, coupling, eps);
        std::mem::swap(&mut psi, &mut next);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

pub fn birkhoff_average(obs: &Observable, coupling: &dyn Coupling, lat: Lattice, eps: f64, t: usize, burn_in: usize, seed: u64) -> Result<Estimate> {
    if t < 10 * burn_in || t == 0 {
        return Err(SrbError::InvalidConfig(format!("T = {t} must be ≥ 10·burn_in = {}", 10 * burn_in)));
    }
    let mut xs = Vec::with_capacity(t);
    let mut scratch = Vec::new();
    run_orbit(lat, coupling, eps, t, burn_in, seed, |_, psi| {
        xs.push(obs.eval(&lat, psi, &mut scratch));
        Ok(())
    })?;
    let (mean, stderr) = batch_means(&xs, BATCHES);
    Ok(Estimate { mean, stderr })
}

/// log|det (DS_ε)_{V₀}| at ψ; exactly 0 at ε = 0 where the minor is ⊕A.
pub fn log_det_minor(state: &LatticeState, coupling: &dyn Coupling, eps: f64, v0: &[usize], step: usize) -> Result<f64> {
    if eps == 0.0 {
        return Ok(0.0);
    }
    let jac = differential_ds_eps(state, coupling, eps);
    let m = if v0.len() == state.lattice.len() && v0.iter().enumerate().all(|(i, &s)| i == s) { jac.to_dense() } else { jac.minor(v0) };
    let det = m.lu().determinant();
    if det == 0.0 || !det.is_finite() {
        return Err(SrbError::SingularMinor { step });
    }
    Ok(det.abs().ln())
}

/// Λ₀ = V₀ × I_{T₀} with |I_{T₀}| = T₀ + 1.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionWindow {
    pub v0: Vec<usize>,
    pub t0: usize,
}

impl ContractionWindow {
    pub fn new(lat: &Lattice, v0: Vec<usize>, t0: usize) -> Result<Self> {
        if v0.is_empty() || v0.iter().any(|&s| s >= lat.len()) {
            return Err(SrbError::InvalidConfig("V₀ must be a nonempty set of lattice sites".into()));
        }
        if t0 < 2 || t0 % 2 != 0 {
            return Err(SrbError::InvalidConfig(format!("T₀ = {t0} must be even and ≥ 2")));
        }
        Ok(ContractionWindow { v0, t0 })
    }

    pub fn full(lat: &Lattice, t0: usize) -> Result<Self> {
        ContractionWindow::new(lat, (0..lat.len()).collect(), t0)
    }

    pub fn steps(&self) -> usize {
        self.t0 + 1
    }

    pub fn volume(&self) -> usize {
        self.v0.len() * self.steps()
    }
}

/// η_{Λ₀} on a window of T₀ + 1 consecutive orbit points.
pub fn contraction_rate(window: &[LatticeState], coupling: &dyn Coupling, eps: f64, w: &ContractionWindow) -> Result<f64> {
    if window.len() < w.steps() {
        return Err(SrbError::InsufficientData(format!("window needs {} orbit points, got {}", w.steps(), window.len())));
    }
    let mut acc = 0.0;
    for (j, st) in window[..w.steps()].iter().enumerate() {
        acc += log_det_minor(st, coupling, eps, &w.v0, j)?;
    }
    Ok(acc / w.volume() as f64)
}

/// Per-step g_t = log|det (DS_ε)_{V₀}(ψ_t)| along one orbit.
pub fn contraction_series(
    lat: Lattice,
    coupling: &dyn Coupling,
    eps: f64,
    v0: &[usize],
    t_total: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(t_total);
    run_orbit(lat, coupling, eps, t_total, burn_in, seed, |t, psi| {
        let st = LatticeState { lattice: lat, psi: psi.to_vec() };
        out.push(log_det_minor(&st, coupling, eps, v0, t)?);
        Ok(())
    })?;
    Ok(out)
}

/// η_{Λ₀} over disjoint windows separated by gaps of one window length.
pub fn window_rates(series: &[f64], w: &ContractionWindow) -> Vec<f64> {
    let s = w.steps();
    let vol = w.volume() as f64;
    series.chunks_exact(2 * s).map(|c| c[..s].iter().sum::<f64>() / vol).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenKubo {
    pub d: usize,
    pub eps: Vec<f64>,
    pub eta: Vec<f64>,
    pub eta_err: Vec<f64>,
    pub c1: f64,
    pub c1_err: f64,
    pub c2: f64,
    pub c2_err: f64,
    /// −d/(1+λ⁻²).
    pub predicted_c2: f64,
    /// −d λ² (v₊)₁², the ε² coefficient of the mean of log|det DS_ε|/|V| for
    /// the sine coupling.
    pub recomputed_c2: f64,
    pub chi2: f64,
}

pub fn predicted_c2(d: usize) -> f64 {
    let l = lambda();
    -(d as f64) / (1.0 + l.powi(-2))
}

pub fn recomputed_c2(d: usize) -> f64 {
    let l = lambda();
    -(d as f64) * l * l * v_plus()[0].powi(2)
}

/// η̂₊(ε) = mean of log|det DS_ε|/|V| for each ε, then the weighted fit
/// η̂₊ = c₁ε + c₂ε².
pub fn green_kubo_check(coupling: &(dyn Coupling + Sync), lat: Lattice, eps: &[f64], t: usize, burn_in: usize, seed: u64) -> Result<GreenKubo> {
    let good = eps.iter().filter(|&&e| e > 0.0 && e <= 0.1).count();
    if good < 3 {
        return Err(SrbError::InsufficientEpsPoints(good));
    }
    let v: Vec<usize> = (0..lat.len()).collect();
    let n = lat.len() as f64;
    let rows: Vec<Result<(f64, f64)>> = eps
        .par_iter()
        .enumerate()
        .map(|(k, &e)| {
            let s = contraction_series(lat, coupling, e, &v, t, burn_in, seed.wrapping_add(k as u64))?;
            let scaled: Vec<f64> = s.iter().map(|x| x / n).collect();
            Ok(batch_means(&scaled, BATCHES))
        })
        .collect();
    let mut eta = Vec::new();
    let mut err = Vec::new();
    for r in rows {
        let (m, s) = r?;
        eta.push(m);
        err.push(s);
    }
    // weighted normal equations with known errors
    let mut a = nalgebra::Matrix2::<f64>::zeros();
    let mut b = nalgebra::Vector2::<f64>::zeros();
    for ((&e, &y), &s) in eps.iter().zip(&eta).zip(&err) {
        if e == 0.0 {
            continue;
        }
        let w = 1.0 / (s * s).max(1e-300);
        let x = nalgebra::Vector2::new(e, e * e);
        a += w * x * x.transpose();
        b += w * y * x;
    }
    let cov = a.try_inverse().ok_or_else(|| SrbError::InsufficientData("singular Green–Kubo fit".into()))?;
    let c = cov * b;
    let chi2 = eps
        .iter()
        .zip(&eta)
        .zip(&err)
        .filter(|((&e, _), _)| e != 0.0)
        .map(|((&e, &y), &s)| ((y - c[0] * e - c[1] * e * e) / s).powi(2))
        .sum();
    Ok(GreenKubo {
        d: lat.d,
        eps: eps.to_vec(),
        eta,
        eta_err: err,
        c1: c[0],
        c1_err: cov[(0, 0)].sqrt(),
        c2: c[1],
        c2_err: cov[(1, 1)].sqrt(),
        predicted_c2: predicted_c2(lat.d),
        recomputed_c2: recomputed_c2(lat.d),
        chi2,
    })
}

/// Default grid of 21 points on [−1, 1].
pub fn default_zeta_grid() -> Vec<f64> {
    (0..21).map(|k| -1.0 + 0.1 * k as f64).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratingFunction {
    pub volume: usize,
    pub zeta: Vec<f64>,
    pub p: Vec<f64>,
    pub err: Vec<f64>,
    /// (Σw)²/Σw² of the exponential weights.
    pub ess: Vec<f64>,
    /// Points whose effective sample size fell below 1% of the windows.
    pub collapsed: Vec<bool>,
    pub windows: usize,
}

fn scgf(etas: &[f64], idx: &[usize], z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let m = idx.iter().map(|&i| z * etas[i]).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = idx.iter().map(|&i| (z * etas[i] - m).exp()).sum();
    m + (s / idx.len() as f64).ln()
}

/// P̂(ζ) = (1/|Λ₀|) log mean exp(ζ|Λ₀|η) with delete-one-block jackknife errors.
pub fn generating_function(etas: &[f64], volume: usize, zeta: &[f64]) -> Result<GeneratingFunction> {
    if etas.len() < 2 * BATCHES {
        return Err(SrbError::InsufficientData(format!("{} windows", etas.len())));
    }
    let v = volume as f64;
    let scaled: Vec<f64> = etas.iter().map(|e| e * v).collect();
    let mut p = Vec::new();
    let mut err = Vec::new();
    let mut ess = Vec::new();
    let mut collapsed = Vec::new();
    for &z in zeta {
        let (full, se) = jackknife(scaled.len(), BATCHES, |idx| scgf(&scaled, idx, z) / v);
        p.push(full);
        err.push(if z == 0.0 { 0.0 } else { se });
        let m = scaled.iter().map(|x| z * x).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = scaled.iter().map(|x| (z * x - m).exp()).collect();
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        let e = s1 * s1 / s2;
        ess.push(e);
        collapsed.push(e < 0.01 * etas.len() as f64);
    }
    Ok(GeneratingFunction { volume, zeta: zeta.to_vec(), p, err, ess, collapsed, windows: etas.len() })
}

#[derive(Debug, Clone, Serialize)]
pub struct LdpEstimate {
    pub zeta: Vec<f64>,
    pub p: Vec<f64>,
    pub p_err: Vec<f64>,
    /// [P̂′(ζ_first), P̂′(ζ_last)].
    pub domain: (f64, f64),
    pub eta: Vec<f64>,
    pub f: Vec<f64>,
    /// argmin F̂.
    pub eta_plus: f64,
}

impl LdpEstimate {
    /// F̂(η) = max_k (ζ_k η − P̂_k) on the domain, +∞ outside.
    pub fn f_at(&self, eta: f64) -> f64 {
        let (lo, hi) = self.domain;
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if eta < lo - tol || eta > hi + tol {
            return f64::INFINITY;
        }
        self.zeta.iter().zip(&self.p).map(|(z, p)| z * eta - p).fold(f64::NEG_INFINITY, f64::max)
    }

    /// max_η (ζη − F̂(η)) over the η grid.
    pub fn inverse(&self, zeta: f64) -> f64 {
        self.eta.iter().zip(&self.f).map(|(e, f)| zeta * e - f).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Discrete Legendre transform of a convex P̂ grid.
pub fn rate_function(zeta: &[f64], p: &[f64], p_err: &[f64], eta_points: usize) -> Result<LdpEstimate> {
    let n = zeta.len();
    if n < 3 || p.len() != n || p_err.len() != n {
        return Err(SrbError::InsufficientData("rate_function needs ≥ 3 grid points".into()));
    }
    for k in 1..n - 1 {
        let h1 = zeta[k] - zeta[k - 1];
        let h2 = zeta[k + 1] - zeta[k];
        let d2 = (p[k + 1] - p[k]) / h2 - (p[k] - p[k - 1]) / h1;
        let tol = 3.0 * (p_err[k - 1] + 2.0 * p_err[k] + p_err[k + 1]) / h1.min(h2) + 1e-12;
        if d2 < -tol {
            return Err(SrbError::NonconvexInput { index: k, value: d2 });
        }
    }
    let lo = (p[1] - p[0]) / (zeta[1] - zeta[0]);
    let hi = (p[n - 1] - p[n - 2]) / (zeta[n - 1] - zeta[n - 2]);
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    let m = if hi - lo <= 1e-15 * (1.0 + lo.abs()) { 1 } else { eta_points.max(2) };
    let eta: Vec<f64> = (0..m).map(|i| if m == 1 { lo } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 }).collect();
    let mut est = LdpEstimate { zeta: zeta.to_vec(), p: p.to_vec(), p_err: p_err.to_vec(), domain: (lo, hi), eta: eta.clone(), f: vec![], eta_plus: 0.0 };
    est.f = eta.iter().map(|&e| est.f_at(e)).collect();
    // F̂ is flat between the chord slopes at its minimum; take the midpoint.
    let fmin = est.f.iter().cloned().fold(f64::INFINITY, f64::min);
    let flat = 1e-14 * (1.0 + fmin.abs());
    let first = est.f.iter().position(|&v| v <= fmin + flat).unwrap_or(0);
    let last = est.f.iter().rposition(|&v| v <= fmin + flat).unwrap_or(0);
    est.eta_plus = 0.5 * (eta[first] + eta[last]);
    Ok(est)
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalCheck {
    pub interval: (f64, f64),
    pub volume: usize,
    pub count: usize,
    pub windows: usize,
    /// (1/|Λ₀|) log of the empirical frequency.
    pub empirical: f64,
    /// max_{η∈[a,b]} −(F̂(η) − F̂(η̂₊)).
    pub predicted: f64,
}

pub fn interval_probability_check(etas: &[f64], volume: usize, interval: (f64, f64), ldp: &LdpEstimate) -> Result<IntervalCheck> {
    let (a, b) = interval;
    if !(a <= b && a > ldp.domain.0 && b < ldp.domain.1) {
        return Err(SrbError::InvalidConfig(format!("[{a}, {b}] not inside ({}, {})", ldp.domain.0, ldp.domain.1)));
    }
    let count = etas.iter().filter(|&&e| e >= a && e <= b).count();
    if count < 20 {
        return Err(SrbError::EventTooRare { observed: count, required: 20 });
    }
    let fmin = ldp.f_at(ldp.eta_plus);
    let mut best = f64::INFINITY;
    let k = 200;
    for i in 0..=k {
        let e = a + (b - a) * i as f64 / k as f64;
        best = best.min(ldp.f_at(e) - fmin);
    }
    Ok(IntervalCheck {
        interval,
        volume,
        count,
        windows: etas.len(),
        empirical: (count as f64 / etas.len() as f64).ln() / volume as f64,
        predicted: -best.max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{SineCoupling, ZeroCoupling};

    #[test]
    fn constant_and_cosine_averages() {
        let lat = Lattice::new(1, 1).unwrap();
        let e = birkhoff_average(&Observable::constant(1.0), &ZeroCoupling, lat, 0.0, 2000, 10, 1).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
        let e = birkhoff_average(&Observable::cos_first(0), &ZeroCoupling, lat, 0.0, 20000, 100, 2).unwrap();
        assert!(e.mean.abs() < 3.0 * e.stderr + 1e-12, "{e:?}");
        assert!(birkhoff_average(&Observable::constant(1.0), &ZeroCoupling, lat, 0.0, 50, 10, 1).is_err());
    }

    #[test]
    fn observable_ignores_other_sites() {
        let lat = Lattice::new(1, 1).unwrap();
        let o = Observable::new("sum", vec![1], |_, psi| psi.iter().map(|p| p[0] + p[1]).sum());
        let mut s = Vec::new();
        let a = o.eval(&lat, &[[1.0, 2.0], [0.5, 0.25], [3.0, 3.0]], &mut s);
        let b = o.eval(&lat, &[[9.0, 9.0], [0.5, 0.25], [0.0, 1.0]], &mut s);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_eps_contraction_vanishes() {
        let lat = Lattice::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states: Vec<LatticeState> = (0..5).map(|_| LatticeState::random(lat, &mut rng)).collect();
        let w = ContractionWindow::full(&lat, 4).unwrap();
        assert_eq!(contraction_rate(&states, &SineCoupling, 0.0, &w).unwrap(), 0.0);
        let w = ContractionWindow::new(&lat, vec![1, 2], 4).unwrap();
        assert_eq!(contraction_rate(&states, &SineCoupling, 0.0, &w).unwrap(), 0.0);
        assert!(ContractionWindow::new(&lat, vec![1], 3).is_err());
    }

    #[test]
    fn nonzero_eps_minor_is_finite() {
        let lat = Lattice::new(1, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let states: Vec<LatticeState> = (0..3).map(|_| LatticeState::random(lat, &mut rng)).collect();
        let w = ContractionWindow::new(&lat, vec![0, 1], 2).unwrap();
        assert!(contraction_rate(&states, &SineCoupling, 0.05, &w).unwrap().is_finite());
    }

    #[test]
    fn predicted_coefficients() {
        assert!((predicted_c2(1) + 0.12732).abs() < 1e-5);
        assert!((predicted_c2(2) + 0.25464).abs() < 1e-5);
    }

    #[test]
    fn green_kubo_needs_points() {
        let lat = Lattice::new(1, 1).unwrap();
        assert!(matches!(green_kubo_check(&SineCoupling, lat, &[0.02, 0.0], 100, 0, 0), Err(SrbError::InsufficientEpsPoints(1))));
    }

    #[test]
    fn quadratic_is_self_dual() {
        let z: Vec<f64> = (0..41).map(|k| -1.0 + 0.05 * k as f64).collect();
        let p: Vec<f64> = z.iter().map(|x| x * x / 2.0).collect();
        let e = vec![0.0; z.len()];
        let r = rate_function(&z, &p, &e, 101).unwrap();
        for (&eta, &f) in r.eta.iter().zip(&r.f) {
            if eta.abs() < 0.9 {
                assert!((f - eta * eta / 2.0).abs() < 0.05f64.powi(2), "{eta}: {f}");
            }
        }
        assert!(r.eta_plus.abs() < 0.02);
        for (&zz, &pp) in z.iter().zip(&p).skip(2).take(36) {
            assert!((r.inverse(zz) - pp).abs() < 0.05 * 0.05);
        }
    }

    #[test]
    fn flat_generating_function_collapses_domain() {
        let z = default_zeta_grid();
        let r = rate_function(&z, &vec![0.0; 21], &vec![0.0; 21], 101).unwrap();
        assert_eq!(r.eta, vec![0.0]);
        assert_eq!(r.f_at(0.0), 0.0);
        assert_eq!(r.f_at(0.1), f64::INFINITY);
    }

    #[test]
    fn nonconvex_input_is_rejected() {
        let z = default_zeta_grid();
        let p: Vec<f64> = z.iter().map(|x| -x * x).collect();
        assert!(matches!(rate_function(&z, &p, &vec![0.0; 21], 11), Err(SrbError::NonconvexInput { .. })));
    }

    #[test]
    fn generating_function_basics() {
        let etas: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 - 50.0) * 1e-3).collect();
        let g = generating_function(&etas, 10, &default_zeta_grid()).unwrap();
        assert_eq!(g.p[10], 0.0);
        let zero = generating_function(&vec![0.0; 200], 10, &default_zeta_grid()).unwrap();
        assert!(zero.p.iter().all(|&p| p == 0.0));
    }
}
