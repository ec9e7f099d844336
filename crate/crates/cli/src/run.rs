//! Subcommand pipelines. Each returns the artifact file names it wrote.

use crate::config::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use srb_core::conjugation::{residual_from_series, ConjugationSeries};
use srb_core::estimator::{
    contraction_series, generating_function, green_kubo_check, rate_function, window_rates, ContractionWindow,
};
use srb_core::gibbs::decimation::{decimate, default_toy_shapes, toy_potentials, DecimatedLattice};
use srb_core::gibbs::polymer::{pressure_truncated, PolymerCaps, PressureMode};
use srb_core::gibbs::potentials::{assemble_srb_potentials, decay_report, PotentialConfig, PotentialRecord};
use srb_core::lattice::torus_dist;
use srb_core::orbit_io::{free_recurrence_violations, simulate, write_orbit};
use srb_core::stats::{loglog_slope, mean};
use srb_core::symbolic::build_cat_partition;
use srb_core::unstable::{unstable_frame_qr, UnstableSeries};
use srb_core::{Coupling, LatticeState, Result, SrbError};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub hash: &'a str,
    pub out: &'a Path,
    pub seed: u64,
}

impl Ctx<'_> {
    fn csv(&self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(self.out.join(name))
            .map_err(csv_err)?;
        let mut head = vec!["config_hash"];
        head.extend_from_slice(header);
        w.write_record(&head).map_err(csv_err)?;
        for r in rows {
            let mut rec = vec![self.hash.to_string()];
            rec.extend(r);
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(name.to_string())
    }

    fn json(&self, name: &str, mut value: serde_json::Value) -> Result<String> {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("config_hash".into(), json!(self.hash));
        }
        let mut f = BufWriter::new(File::create(self.out.join(name))?);
        serde_json::to_writer_pretty(&mut f, &value).map_err(|e| SrbError::Io(e.into()))?;
        writeln!(f)?;
        f.flush()?;
        Ok(name.to_string())
    }

    fn coupling(&self) -> Result<Box<dyn Coupling>> {
        self.cfg.coupling_spec().build(&self.cfg.lattice())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn csv_err(e: csv::Error) -> SrbError {
    SrbError::Io(std::io::Error::other(e))
}

fn f(x: f64) -> String {
    x.to_string()
}

pub fn simulate_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let c = ctx.coupling()?;
    let orbit = simulate(cfg.lattice(), c.as_ref(), cfg.model.eps, cfg.estimator.t, cfg.estimator.burn_in, ctx.seed);
    let mut w = BufWriter::new(File::create(ctx.out.join("orbit.srbl"))?);
    write_orbit(&orbit, &mut w)?;
    let violations = if cfg.model.eps == 0.0 { Some(free_recurrence_violations(&orbit).len()) } else { None };
    let summary = ctx.json(
        "simulate.json",
        json!({
            "d": cfg.model.d, "n": cfg.model.n, "eps": cfg.model.eps, "coupling": c.id(),
            "frames": orbit.len(), "burn_in": cfg.estimator.burn_in, "seed": ctx.seed,
            "free_recurrence_violations": violations,
        }),
    )?;
    Ok(vec!["orbit.srbl".into(), summary])
}

pub fn conjugate_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let lat = cfg.lattice();
    let c = ctx.coupling()?;
    let eps = &cfg.model.eps_list;
    let kmax = cfg.expansion.k_max;
    let mut r = ctx.rng();
    // residual[k][i] over states
    let mut res = vec![vec![Vec::new(); eps.len()]; kmax];
    for _ in 0..cfg.expansion.states {
        let st = LatticeState::random(lat, &mut r);
        let mut s = ConjugationSeries::new(&st, c.as_ref(), cfg.expansion.p_max);
        for k in 1..=kmax {
            for (i, &e) in eps.iter().enumerate() {
                res[k - 1][i].push(residual_from_series(&mut s, e, k)?);
            }
        }
    }
    let mut rows = Vec::new();
    for (k, per_eps) in res.iter().enumerate() {
        let maxes: Vec<f64> = per_eps.iter().map(|v| v.iter().cloned().fold(0.0, f64::max)).collect();
        let slope = loglog_slope(eps, &maxes).unwrap_or(f64::NAN);
        for (i, &e) in eps.iter().enumerate() {
            rows.push(vec![(k + 1).to_string(), f(e), f(maxes[i]), f(mean(&per_eps[i])), f(slope)]);
        }
    }
    Ok(vec![ctx.csv("conjugate.csv", &["K", "eps", "max_residual", "mean_residual", "slope"], rows)?])
}

/// Time averages of Λ^ξ along a pseudo-orbit h(S₀^t ψ), perturbative against QR.
pub fn spectrum_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let lat = cfg.lattice();
    let c = ctx.coupling()?;
    let x = &cfg.expansion;
    let st = LatticeState::random(lat, &mut ctx.rng());
    let (steps, tr) = (x.steps as i64, x.transient as i64);
    let mut rows = Vec::new();
    for &e in &cfg.model.eps_list {
        let mut conj = ConjugationSeries::new(&st, c.as_ref(), x.p_max);
        let orbit: Vec<LatticeState> = (-tr..=steps).map(|t| conj.conjugate_at(e, x.k_max, t)).collect::<Result<_>>()?;
        let qr = unstable_frame_qr(&orbit, c.as_ref(), e, x.transient)?;
        let mut us = UnstableSeries::new(&st, c.as_ref(), x.p_max);
        let mut pert = vec![0.0; lat.len()];
        for t in 0..steps {
            for (p, l) in pert.iter_mut().zip(us.lambda_at(e, x.k, t)?) {
                *p += l / steps as f64;
            }
        }
        for site in 0..lat.len() {
            let q = qr.diag.iter().map(|d| d[site]).sum::<f64>() / qr.diag.len() as f64;
            rows.push(vec![f(e), x.k.to_string(), site.to_string(), f(pert[site]), f(q), f((pert[site] - q).abs())]);
        }
    }
    Ok(vec![ctx.csv("spectrum.csv", &["eps", "K", "site", "Lambda_pert", "Lambda_qr", "abs_diff"], rows)?])
}

pub fn encode_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let s = &ctx.cfg.symbolic;
    let part = build_cat_partition();
    std::fs::write(ctx.out.join("partition.txt"), part.artifact_text())?;
    let mut r = ctx.rng();
    let tau = std::f64::consts::TAU;
    let mut rows = Vec::new();
    for i in 0..s.points {
        let p = [r.gen::<f64>() * tau, r.gen::<f64>() * tau];
        match part.encode(p, s.m, s.margin) {
            Ok(w) => {
                let q = part.decode(&w, s.m)?;
                let word: String = w.iter().map(|d| char::from(b'0' + d)).collect();
                rows.push(vec![i.to_string(), f(p[0]), f(p[1]), word, f(q[0]), f(q[1]), f(torus_dist(p, q)), String::new()]);
            }
            Err(e @ SrbError::BoundaryAmbiguous { .. }) => {
                rows.push(vec![i.to_string(), f(p[0]), f(p[1]), String::new(), String::new(), String::new(), String::new(), e.name().into()]);
            }
            Err(e) => return Err(e),
        }
    }
    let csv = ctx.csv("encode.csv", &["point", "x", "y", "word", "decoded_x", "decoded_y", "error", "status"], rows)?;
    Ok(vec!["partition.txt".into(), csv])
}

#[derive(Serialize)]
struct TaggedRecord<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    record: &'a PotentialRecord,
}

pub fn potentials_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let part = build_cat_partition();
    let c = ctx.coupling()?;
    let pc = PotentialConfig {
        eps: cfg.model.eps,
        order: cfg.expansion.k,
        j_max: cfg.expansion.j_max,
        radius: cfg.expansion.radius,
        samples: cfg.expansion.samples,
        seed: ctx.seed,
        ..Default::default()
    };
    let fam = assemble_srb_potentials(&part, c.as_ref(), cfg.lattice(), pc)?;
    let recs = fam.records()?;
    let mut w = BufWriter::new(File::create(ctx.out.join("potentials.jsonl"))?);
    for rec in &recs {
        serde_json::to_writer(&mut w, &TaggedRecord { config_hash: ctx.hash, record: rec }).map_err(|e| SrbError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let rep = decay_report(&recs)?;
    let decay = ctx.json(
        "decay.json",
        json!({
            "eps": cfg.model.eps, "order": cfg.expansion.k, "j_max": cfg.expansion.j_max,
            "truncation_bound": fam.truncation_bound, "classes": recs.len(),
            "kappa": rep.kappa, "kappa_r": rep.kappa_r, "nu": rep.nu, "c": rep.c, "r2": rep.r2,
            "n_points": rep.n_points, "all_zero": rep.all_zero,
        }),
    )?;
    Ok(vec!["potentials.jsonl".into(), decay])
}

/// Cluster-expansion pressure for toy tabulated potentials on the decimated lattice.
pub fn pressure_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let g = &ctx.cfg.gibbs;
    let part = build_cat_partition();
    let dl = DecimatedLattice::new(g.columns, g.ell, g.h0, part.a())?;
    let pots = toy_potentials(&dl, part.n(), g.amplitude, ctx.seed, &default_toy_shapes(g.columns));
    let sys = decimate(dl, &part.compat.c, pots)?;
    let caps = PolymerCaps { molecules: g.molecules, blocks: g.blocks, ..Default::default() };
    let mode = if g.mode == "closed" { PressureMode::Closed } else { PressureMode::Bulk };
    let rep = pressure_truncated(&sys, &caps, g.n_max, mode)?;
    let out = ctx.json("pressure.json", json!({ "columns": g.columns, "ell": g.ell, "h0": g.h0, "amplitude": g.amplitude, "seed": ctx.seed, "report": rep }))?;
    Ok(vec![out])
}

pub fn green_kubo_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let e = &cfg.estimator;
    let c = ctx.coupling()?;
    let gk = green_kubo_check(c.as_ref(), cfg.lattice(), &cfg.model.eps_list, e.t, e.burn_in, ctx.seed)?;
    let c1_pass = gk.c1.abs() <= e.c1_sigmas * gk.c1_err;
    let c2_pass = ((gk.c2 - gk.predicted_c2) / gk.predicted_c2).abs() <= e.c2_rel_tol;
    let rows = gk.eps.iter().zip(&gk.eta).zip(&gk.eta_err).map(|((x, y), z)| vec![f(*x), f(*y), f(*z)]).collect();
    let csv = ctx.csv("green_kubo.csv", &["eps", "eta_plus", "stderr"], rows)?;
    let js = ctx.json(
        "green_kubo.json",
        json!({
            "inputs": { "d": cfg.model.d, "n": cfg.model.n, "t": e.t, "burn_in": e.burn_in, "eps": gk.eps, "seed": ctx.seed, "coupling": c.id() },
            "fit": { "c1": gk.c1, "c1_err": gk.c1_err, "c2": gk.c2, "c2_err": gk.c2_err, "chi2": gk.chi2 },
            "predicted_c2": gk.predicted_c2,
            "recomputed_c2": gk.recomputed_c2,
            "tolerances": { "c1_sigmas": e.c1_sigmas, "c2_rel_tol": e.c2_rel_tol },
            "pass": { "c1": c1_pass, "c2": c2_pass },
        }),
    )?;
    Ok(vec![csv, js])
}

pub fn ldp_cmd(ctx: &Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let e = &cfg.estimator;
    let lat = cfg.lattice();
    let c = ctx.coupling()?;
    let v0 = cfg.v0();
    let series = contraction_series(lat, c.as_ref(), cfg.model.eps, &v0, e.t, e.burn_in, ctx.seed)?;
    let (mut gf_rows, mut f_rows, mut summary) = (Vec::new(), Vec::new(), Vec::new());
    for &t0 in &e.t0 {
        let w = ContractionWindow::new(&lat, v0.clone(), t0)?;
        let etas = window_rates(&series, &w);
        let g = generating_function(&etas, w.volume(), &e.zeta)?;
        for k in 0..g.zeta.len() {
            gf_rows.push(vec![t0.to_string(), w.volume().to_string(), f(g.zeta[k]), f(g.p[k]), f(g.err[k]), f(g.ess[k]), g.collapsed[k].to_string()]);
        }
        let (convex, ldp) = match rate_function(&g.zeta, &g.p, &g.err, e.eta_points) {
            Ok(l) => (true, Some(l)),
            Err(SrbError::NonconvexInput { .. }) => (false, None),
            Err(err) => return Err(err),
        };
        if let Some(l) = &ldp {
            for (x, y) in l.eta.iter().zip(&l.f) {
                f_rows.push(vec![t0.to_string(), w.volume().to_string(), f(*x), f(*y)]);
            }
        }
        let f_nonneg = ldp.as_ref().map(|l| l.f.iter().all(|&v| v >= -1e-12));
        summary.push(json!({
            "t0": t0, "volume": w.volume(), "windows": etas.len(), "mean_eta": mean(&etas),
            "eta_plus": ldp.as_ref().map(|l| l.eta_plus), "domain": ldp.as_ref().map(|l| l.domain),
            "pass": { "convex": convex, "f_nonnegative": f_nonneg, "no_ess_collapse": !g.collapsed.iter().any(|&b| b) },
        }));
    }
    let gf = ctx.csv("generating_function.csv", &["t0", "volume", "zeta", "p", "err", "ess", "collapsed"], gf_rows)?;
    let rf = ctx.csv("rate_function.csv", &["t0", "volume", "eta", "f"], f_rows)?;
    let js = ctx.json(
        "ldp.json",
        json!({
            "inputs": { "d": cfg.model.d, "n": cfg.model.n, "t": e.t, "burn_in": e.burn_in, "eps": cfg.model.eps, "v0": v0, "seed": ctx.seed, "coupling": c.id() },
            "windows": summary,
        }),
    )?;
    Ok(vec![gf, rf, js])
}
