//! Acceptance criteria 1–10. Each criterion prints one `criterion N: PASS|FAIL`
//! line; the binary exits nonzero when any fails. Arguments filter by name.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srb_core::conjugation::{residual_from_series, ConjugationSeries};
use srb_core::coupling::{derivative, TrigPolynomialCoupling};
use srb_core::estimator::{
    contraction_series, default_zeta_grid, generating_function, green_kubo_check, interval_probability_check,
    rate_function, window_rates, ContractionWindow, LdpEstimate,
};
use srb_core::gibbs::decimation::{decimate, default_toy_shapes, perron_frobenius, toy_potentials, DecimatedLattice};
use srb_core::gibbs::polymer::{mayer_weight, pressure_truncated, ursell_weight, PolymerCaps, PressureMode};
use srb_core::gibbs::potentials::{assemble_srb_potentials, decay_report, PotentialConfig};
use srb_core::gibbs::telescope::telescope_function;
use srb_core::lattice::{lambda, torus_dist, Alpha};
use srb_core::stats::{loglog_slope, mean, ols};
use srb_core::symbolic::build_cat_partition;
use srb_core::unstable::{unstable_frame_qr, UnstableSeries};
use srb_core::{Lattice, LatticeState, SineCoupling, SrbError, SymbolField};
use std::time::Instant;

fn report(n: usize, pass: bool, detail: String, start: Instant) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} {detail} ({:.1} s)", start.elapsed().as_secs_f64());
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn criterion_01_conjugacy_residual_scaling() {
    let start = Instant::now();
    let lat = Lattice::new(1, 2).unwrap();
    let eps = [0.02, 0.04, 0.08];
    let mut r = rng(101);
    let states: Vec<LatticeState> = (0..100).map(|_| LatticeState::random(lat, &mut r)).collect();
    let mut worst = [[0.0f64; 3]; 3];
    for st in &states {
        let mut s = ConjugationSeries::new(st, &SineCoupling, 60);
        for k in 1..=3 {
            for (i, &e) in eps.iter().enumerate() {
                worst[k - 1][i] = worst[k - 1][i].max(residual_from_series(&mut s, e, k).unwrap());
            }
        }
    }
    let slopes: Vec<f64> = worst.iter().map(|w| loglog_slope(&eps, w).unwrap()).collect();
    let pass = slopes.iter().enumerate().all(|(k, s)| (s - (k + 2) as f64).abs() <= 0.3);
    report(1, pass, format!("slopes K=1,2,3: {:.3} {:.3} {:.3} (targets 2,3,4 ± 0.3)", slopes[0], slopes[1], slopes[2]), start);
    assert!(pass, "{slopes:?} {worst:?}");
}

fn criterion_02_green_kubo() {
    let start = Instant::now();
    let lat = Lattice::new(1, 3).unwrap();
    let gk = green_kubo_check(&SineCoupling, lat, &[0.02, 0.04, 0.06, 0.08], 2_000_000, 1000, 202).unwrap();
    let c1_ok = gk.c1.abs() <= 3.0 * gk.c1_err;
    let c2_ok = ((gk.c2 - gk.predicted_c2) / gk.predicted_c2).abs() <= 0.15;
    report(
        2,
        c1_ok && c2_ok,
        format!(
            "c1 = {:.3e} ± {:.1e} ({}); c2 = {:.5} ± {:.5} vs target {:.5} ({}); recomputed coefficient {:.5}",
            gk.c1,
            gk.c1_err,
            if c1_ok { "within 3σ" } else { "outside 3σ" },
            gk.c2,
            gk.c2_err,
            gk.predicted_c2,
            if c2_ok { "within 15%" } else { "outside 15%" },
            gk.recomputed_c2
        ),
        start,
    );
    assert!(c1_ok, "c1 = {} ± {}", gk.c1, gk.c1_err);
    assert!(c2_ok, "c2 = {} ± {} vs {}", gk.c2, gk.c2_err, gk.predicted_c2);
}

/// Time-averaged |Σ_ξ Λ^ξ − QR growth| along h(S_0^t ψ), with the exact
/// frame-volume boundary term removed.
fn lambda_vs_qr(st: &LatticeState, coupling: &TrigPolynomialCoupling, eps: f64, steps: i64) -> f64 {
    let transient = 30i64;
    let mut conj = ConjugationSeries::new(st, coupling, 60);
    let orbit: Vec<LatticeState> = (-transient..=steps).map(|t| conj.conjugate_at(eps, 3, t).unwrap()).collect();
    let qr = unstable_frame_qr(&orbit, coupling, eps, transient as usize).unwrap();
    let mut us = UnstableSeries::new(st, coupling, 60);
    let pert: f64 = (0..steps).map(|t| us.lambda_at(eps, 2, t).unwrap().iter().sum::<f64>()).sum();
    let half_log_gram = |us: &mut UnstableSeries, t: i64| {
        let f = us.frame(eps, 2, t).unwrap();
        let n = f.len();
        let m = DMatrix::from_fn(2 * n, n, |i, j| f[j][i / 2][i % 2]);
        0.5 * (m.transpose() * &m).determinant().ln()
    };
    let boundary = half_log_gram(&mut us, steps) - half_log_gram(&mut us, 0);
    let growth: f64 = qr.growth.iter().sum();
    (growth - pert - boundary).abs() / steps as f64
}

fn criterion_03_perturbative_vs_qr_growth() {
    let start = Instant::now();
    let lat = Lattice::new(1, 1).unwrap();
    let c = TrigPolynomialCoupling::standard(1);
    let eps = [0.0125, 0.025, 0.05, 0.1];
    let mut r = rng(303);
    let states: Vec<LatticeState> = (0..3).map(|_| LatticeState::random(lat, &mut r)).collect();
    let diffs: Vec<f64> = eps.iter().map(|&e| states.iter().map(|s| lambda_vs_qr(s, &c, e, 200)).fold(0.0, f64::max)).collect();
    let slope = loglog_slope(&eps, &diffs).unwrap();
    let cst = diffs.iter().zip(&eps).map(|(d, e)| d / e.powi(3)).fold(0.0, f64::max);
    let at = diffs[2];
    let pass = slope >= 2.7 && at <= cst * 0.05f64.powi(3);
    report(3, pass, format!("diff at ε=0.05: {at:.3e}, C = {cst:.3}, sweep slope {slope:.3} (≥ 2.7)"), start);
    assert!(pass, "{diffs:?}");
}

fn criterion_04_coding_round_trip() {
    let start = Instant::now();
    let part = build_cat_partition();
    let lam = lambda();
    let c = 20.0;
    let ms: Vec<usize> = (5..=25).step_by(5).collect();
    let mut worst = vec![0.0f64; ms.len()];
    let mut r = rng(404);
    let mut points = 0;
    let mut redraws = 0;
    while points < 1000 {
        let p = [rand::Rng::gen::<f64>(&mut r) * std::f64::consts::TAU, rand::Rng::gen::<f64>(&mut r) * std::f64::consts::TAU];
        let w = match part.encode(p, 25, 1e-9) {
            Ok(w) => w,
            Err(SrbError::BoundaryAmbiguous { .. }) => {
                redraws += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        points += 1;
        for (i, &m) in ms.iter().enumerate() {
            let q = part.decode(&w[25 - m..=25 + m], m).unwrap();
            worst[i] = worst[i].max(torus_dist(p, q));
        }
    }
    let bound_ok = worst.iter().zip(&ms).all(|(w, &m)| *w <= c * lam.powi(m as i32));
    let x: Vec<Vec<f64>> = ms.iter().map(|&m| vec![m as f64]).collect();
    let y: Vec<f64> = worst.iter().map(|w| w.ln()).collect();
    let rate = -ols(&x, &y).unwrap().coef[1];
    let pass = bound_ok && rate >= 0.95 * (-lam.ln());
    report(
        4,
        pass,
        format!("max error at m=25: {:.3e} (bound {:.3e}), rate {rate:.4} vs 0.95·{:.4}; {redraws} boundary redraws", worst[4], c * lam.powi(25), -lam.ln()),
        start,
    );
    assert!(pass, "{worst:?}");
}

fn criterion_05_perron_frobenius_gap() {
    let start = Instant::now();
    let part = build_cat_partition();
    let h0s = [2usize, 4, 8, 16];
    let pfs: Vec<_> = h0s.iter().map(|&h| perron_frobenius(&part.compat.c, part.a(), h).unwrap()).collect();
    let positive = pfs[0].ca.iter().flatten().all(|&v| v > 0.0);
    let imax: Vec<f64> = pfs.iter().map(|p| p.max_abs_i()).collect();
    let rates: Vec<f64> = (0..3).map(|k| (imax[k] / imax[k + 1]).ln() / (h0s[k + 1] - h0s[k]) as f64).collect();
    let exp_ok = imax.iter().all(|v| *v > 0.0) && rates.iter().all(|r| *r >= 0.5 * rates[0] && *r > 0.0);
    let pass = positive && exp_ok;
    report(
        5,
        pass,
        format!("C^a > 0: {positive}; max|I| = {:.3e} {:.3e} {:.3e} {:.3e}; decay rates per h0 {:.3} {:.3} {:.3}", imax[0], imax[1], imax[2], imax[3], rates[0], rates[1], rates[2]),
        start,
    );
    assert!(pass, "{imax:?}");
}

fn criterion_06_cluster_vs_brute_force() {
    let start = Instant::now();
    let part = build_cat_partition();
    let dl = DecimatedLattice::new(1, 2, 2, part.a()).unwrap();
    let pots = toy_potentials(&dl, part.n(), 1e-3, 7, &default_toy_shapes(1));
    let sys = decimate(dl, &part.compat.c, pots).unwrap();
    let brute = sys.brute_log_z(1_000_000).unwrap();
    let caps = PolymerCaps { molecules: 8, blocks: 64, assignments: 1e9, count: 1_000_000, prune: 0.0 };
    let closed = pressure_truncated(&sys, &caps, 6, PressureMode::Closed).unwrap();
    let diff = (closed.value - brute).abs();
    let bulk_dl = DecimatedLattice::new(1, 8, 1, part.a()).unwrap();
    let free = decimate(bulk_dl, &part.compat.c, toy_potentials(&bulk_dl, part.n(), 0.0, 7, &default_toy_shapes(1))).unwrap();
    let bulk = pressure_truncated(&free, &PolymerCaps::default(), 3, PressureMode::Bulk).unwrap();
    let exact = free.pf.l.ln() / part.a() as f64;
    let pass = diff <= 1e-10 && bulk.pressure == exact && closed.truncated == 0;
    report(
        6,
        pass,
        format!("|log Ξ cluster − brute| = {diff:.2e} over {} polymers; free bulk P = {:.16} vs (1/a) log l = {exact:.16}", closed.polymers, bulk.pressure),
        start,
    );
    assert!(pass);
}

/// Connected spanning subgraphs of the overlap graph, counted directly.
fn graph_counts(ms: &[u64]) -> (u64, i64) {
    let n = ms.len();
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| ms[i] & ms[j] != 0).collect();
    let (mut count, mut signed) = (0u64, 0i64);
    for sub in 0u32..(1 << edges.len()) {
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            if c[x] != x {
                let r = find(c, c[x]);
                c[x] = r;
            }
            c[x]
        }
        let mut k = 0;
        for (e, &(i, j)) in edges.iter().enumerate() {
            if sub >> e & 1 == 1 {
                k += 1;
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a] = b;
            }
        }
        let root = find(&mut comp, 0);
        if (0..n).all(|v| find(&mut comp, v) == root) {
            count += 1;
            signed += if k % 2 == 0 { 1 } else { -1 };
        }
    }
    (count, signed)
}

fn criterion_07_ursell_weights() {
    let start = Instant::now();
    let fixture = [0b0000_0011u64, 0b0000_0110, 0b0000_1100, 0b0011_0000, 0b0101_0101, 0b1000_0000, 0b1111_0000];
    let mut checked = 0;
    let mut bad = 0;
    let n = fixture.len();
    for size in 1..=4 {
        // multisets as nondecreasing index sequences
        let mut idx = vec![0usize; size];
        loop {
            let ms: Vec<u64> = idx.iter().map(|&i| fixture[i]).collect();
            let (count, signed) = graph_counts(&ms);
            if ursell_weight(&ms).unwrap() != count || mayer_weight(&ms).unwrap() != signed {
                bad += 1;
            }
            checked += 1;
            let mut p = size;
            while p > 0 && idx[p - 1] == n - 1 {
                p -= 1;
            }
            if p == 0 {
                break;
            }
            idx[p - 1] += 1;
            for q in p..size {
                idx[q] = idx[p - 1];
            }
        }
    }
    let pass = bad == 0 && checked == 329;
    report(7, pass, format!("{checked} multisets of ≤ 4 polymers, {bad} mismatches"), start);
    assert!(pass, "checked {checked}, bad {bad}");
}

fn criterion_08_potential_decay() {
    let start = Instant::now();
    let part = build_cat_partition();
    let c = TrigPolynomialCoupling::standard(1);
    let lat = Lattice::new(1, 2).unwrap();
    let cfg = PotentialConfig { eps: 0.05, order: 2, j_max: 12, samples: 8, ..Default::default() };
    let fam = assemble_srb_potentials(&part, &c, lat, cfg).unwrap();
    let rep = decay_report(&fam.records().unwrap()).unwrap();
    let pass = !rep.all_zero && rep.kappa > 0.0 && rep.r2 >= 0.9;
    report(
        8,
        pass,
        format!("{} classes: κ = {:.4}, κ_R = {:.4}, ν = {:.4}, R² = {:.4}", rep.n_points, rep.kappa, rep.kappa_r, rep.nu, rep.r2),
        start,
    );
    assert!(pass, "{rep:?}");
}

struct LdpRun {
    etas: Vec<f64>,
    volume: usize,
    ldp: LdpEstimate,
}

fn criterion_09_ldp_machinery() {
    let start = Instant::now();
    let lat = Lattice::new(1, 3).unwrap();
    let v0: Vec<usize> = (0..lat.len()).collect();
    let series = contraction_series(lat, &SineCoupling, 0.08, &v0, 4_000_000, 1000, 909).unwrap();
    let zeta = default_zeta_grid();
    let mut runs = Vec::new();
    let mut lines = Vec::new();
    let mut props_ok = true;
    for t0 in [50usize, 100] {
        let w = ContractionWindow::full(&lat, t0).unwrap();
        let etas = window_rates(&series, &w);
        let g = generating_function(&etas, w.volume(), &zeta).unwrap();
        let ldp = match rate_function(&g.zeta, &g.p, &g.err, 401) {
            Ok(l) => l,
            Err(e) => {
                report(9, false, format!("|Λ₀| = {}: {e}", w.volume()), start);
                panic!("{e}");
            }
        };
        let fmin = ldp.f_at(ldp.eta_plus);
        let f_nonneg = ldp.f.iter().all(|&f| f >= -1e-12) && fmin.abs() <= 1e-9;
        let m = mean(&etas);
        let se = (etas.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (etas.len() - 1) as f64).sqrt() / (etas.len() as f64).sqrt();
        let spacing = (ldp.domain.1 - ldp.domain.0) / 400.0;
        let min_ok = (ldp.eta_plus - m).abs() <= 3.0 * se + spacing;
        props_ok &= f_nonneg && min_ok && !g.collapsed.iter().any(|&c| c);
        lines.push(format!(
            "|Λ₀|={}: {} windows, η̂₊ = {:.4e} vs mean {:.4e} ± {:.1e}, min F̂ = {fmin:.1e}",
            w.volume(),
            etas.len(),
            ldp.eta_plus,
            m,
            se
        ));
        runs.push(LdpRun { etas, volume: w.volume(), ldp });
    }
    // Interval above η̂₊, inside both η domains.
    let eta_plus = runs[1].ldp.eta_plus;
    let hi = runs.iter().map(|r| r.ldp.domain.1).fold(f64::INFINITY, f64::min);
    let interval = (eta_plus + 0.3 * (hi - eta_plus), eta_plus + 0.6 * (hi - eta_plus));
    let mut gaps = Vec::new();
    for run in &runs {
        match interval_probability_check(&run.etas, run.volume, interval, &run.ldp) {
            Ok(chk) => {
                gaps.push((chk.empirical - chk.predicted).abs());
                lines.push(format!("|Λ₀|={}: empirical {:.3e} vs −ΔF̂ {:.3e} ({} hits)", run.volume, chk.empirical, chk.predicted, chk.count));
            }
            Err(e) => {
                lines.push(format!("|Λ₀|={}: {e}", run.volume));
                gaps.push(f64::INFINITY);
            }
        }
    }
    let trend_ok = gaps[1] < gaps[0];
    let pass = props_ok && trend_ok;
    report(9, pass, lines.join("; "), start);
    assert!(pass, "{lines:?}");
}

fn criterion_10_telescoping_exactness() {
    let start = Instant::now();
    let part = build_cat_partition();
    let c = TrigPolynomialCoupling::standard(1);
    let lat = Lattice::new(1, 1).unwrap();
    let o = lat.origin();
    let lam = lambda();
    let j_max = 12;
    let mut r = rng(1010);
    let mut exact = 0;
    for _ in 0..100 {
        let field = SymbolField::random(lat, -40, 40, &part, &mut r);
        let t = telescope_function(&part, &field, j_max, |f| {
            let st = part.lattice_code(f, 40)?;
            Ok(lam * derivative(&c, &lat, &st.psi, (o, Alpha::Plus), &[(o, Alpha::Plus)])?)
        })
        .unwrap();
        if t.partial_sum(j_max).to_bits() == t.restricted_value.to_bits() {
            exact += 1;
        }
    }
    let pass = exact == 100;
    report(10, pass, format!("{exact}/100 fields bit-exact at j_max = {j_max}"), start);
    assert!(pass);
}

fn main() -> std::process::ExitCode {
    let criteria: [(&str, fn()); 10] = [
        ("criterion_01_conjugacy_residual_scaling", criterion_01_conjugacy_residual_scaling),
        ("criterion_02_green_kubo", criterion_02_green_kubo),
        ("criterion_03_perturbative_vs_qr_growth", criterion_03_perturbative_vs_qr_growth),
        ("criterion_04_coding_round_trip", criterion_04_coding_round_trip),
        ("criterion_05_perron_frobenius_gap", criterion_05_perron_frobenius_gap),
        ("criterion_06_cluster_vs_brute_force", criterion_06_cluster_vs_brute_force),
        ("criterion_07_ursell_weights", criterion_07_ursell_weights),
        ("criterion_08_potential_decay", criterion_08_potential_decay),
        ("criterion_09_ldp_machinery", criterion_09_ldp_machinery),
        ("criterion_10_telescoping_exactness", criterion_10_telescoping_exactness),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        if std::panic::catch_unwind(run).is_err() {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if failed.is_empty() {
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
