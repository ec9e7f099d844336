//! Experiment configuration: TOML sections, `--set` overrides, validation.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srb_core::{CouplingSpec, Lattice};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub expansion: Expansion,
    pub symbolic: Symbolic,
    pub gibbs: Gibbs,
    pub estimator: Estimator,
    pub output: Output,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Model {
    pub d: usize,
    pub n: usize,
    /// zero, sine or trig.
    pub coupling: String,
    pub eps: f64,
    pub eps_list: Vec<f64>,
}

impl Default for Model {
    fn default() -> Self {
        Model { d: 1, n: 3, coupling: "sine".into(), eps: 0.05, eps_list: vec![0.02, 0.04, 0.06, 0.08] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expansion {
    pub k: usize,
    pub k_max: usize,
    pub p_max: usize,
    pub j_max: usize,
    pub radius: usize,
    pub samples: usize,
    /// random states for residual tables
    pub states: usize,
    /// pseudo-orbit length for `spectrum`
    pub steps: usize,
    pub transient: usize,
}

impl Default for Expansion {
    fn default() -> Self {
        Expansion { k: 2, k_max: 3, p_max: 60, j_max: 12, radius: 3, samples: 8, states: 20, steps: 100, transient: 30 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Symbolic {
    pub margin: f64,
    pub m: usize,
    pub points: usize,
}

impl Default for Symbolic {
    fn default() -> Self {
        Symbolic { margin: 1e-9, m: 20, points: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gibbs {
    pub h0: usize,
    pub ell: usize,
    pub columns: usize,
    pub amplitude: f64,
    pub molecules: usize,
    pub blocks: usize,
    pub n_max: usize,
    /// bulk or closed
    pub mode: String,
}

impl Default for Gibbs {
    fn default() -> Self {
        Gibbs { h0: 1, ell: 4, columns: 1, amplitude: 1e-3, molecules: 3, blocks: 6, n_max: 3, mode: "bulk".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Estimator {
    pub t: usize,
    pub burn_in: usize,
    /// sites of Λ₀; empty means the whole lattice
    pub v0: Vec<usize>,
    pub t0: Vec<usize>,
    pub zeta: Vec<f64>,
    pub eta_points: usize,
    pub seed: u64,
    pub c1_sigmas: f64,
    pub c2_rel_tol: f64,
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator {
            t: 200_000,
            burn_in: 1000,
            v0: vec![],
            t0: vec![50, 100],
            zeta: srb_core::estimator::default_zeta_grid(),
            eta_points: 401,
            seed: 1,
            c1_sigmas: 3.0,
            c2_rel_tol: 0.15,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: String,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: "out".into() }
    }
}

/// Parse `value` as a TOML literal, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {value}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (key, value) = o.split_once('=').with_context(|| format!("override {o:?} is not KEY=VALUE"))?;
        let (section, field) = key.trim().split_once('.').with_context(|| format!("override key {key:?} is not section.key"))?;
        let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let Some(sec) = entry.as_table_mut() else { bail!("{section} is not a section") };
        sec.insert(field.to_string(), parse_value(value.trim()));
    }
    let cfg: ExperimentConfig = toml::Value::Table(table).try_into().context("invalid configuration")?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.model.d, self.model.n).expect("validated")
    }

    pub fn coupling_spec(&self) -> CouplingSpec {
        CouplingSpec::from_id(&self.model.coupling).expect("validated")
    }

    /// Sites of Λ₀.
    pub fn v0(&self) -> Vec<usize> {
        if self.estimator.v0.is_empty() {
            (0..self.lattice().len()).collect()
        } else {
            self.estimator.v0.clone()
        }
    }

    /// Checks every module precondition before anything runs.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let lat = Lattice::new(m.d, m.n).map_err(anyhow::Error::from)?;
        CouplingSpec::from_id(&m.coupling)?.build(&lat)?;
        if !m.eps.is_finite() || m.eps < 0.0 {
            bail!("model.eps must be finite and ≥ 0");
        }
        if m.eps_list.iter().any(|e| !e.is_finite() || *e <= 0.0) {
            bail!("model.eps_list entries must be finite and > 0");
        }
        let x = &self.expansion;
        if x.k == 0 || x.k_max == 0 || x.p_max == 0 || x.steps == 0 || x.states == 0 || x.samples == 0 {
            bail!("expansion.k, k_max, p_max, steps, states and samples must be ≥ 1");
        }
        if !(1..=2).contains(&x.k) {
            bail!("expansion.k must be 1 or 2 (unstable-frame orders)");
        }
        let s = &self.symbolic;
        if !(s.margin >= 0.0 && s.margin.is_finite()) || s.m == 0 || s.points == 0 {
            bail!("symbolic.margin must be ≥ 0, m and points ≥ 1");
        }
        let g = &self.gibbs;
        if g.h0 == 0 || g.ell == 0 || g.columns == 0 || g.molecules == 0 || g.blocks == 0 || g.n_max == 0 {
            bail!("gibbs sizes must be ≥ 1");
        }
        if !g.amplitude.is_finite() {
            bail!("gibbs.amplitude must be finite");
        }
        match g.mode.as_str() {
            "bulk" if g.ell < 4 => bail!("gibbs.mode = bulk needs ell ≥ 4"),
            "bulk" | "closed" => {}
            other => bail!("gibbs.mode {other:?} is not bulk or closed"),
        }
        let e = &self.estimator;
        if e.t == 0 {
            bail!("estimator.t must be ≥ 1");
        }
        if e.v0.iter().any(|&i| i >= lat.len()) {
            bail!("estimator.v0 has a site outside V_N");
        }
        if e.t0.is_empty() || e.t0.iter().any(|t| *t == 0 || t % 2 == 1) {
            bail!("estimator.t0 entries must be positive and even");
        }
        if e.zeta.len() < 3 || e.zeta.windows(2).any(|w| w[1] <= w[0]) || !e.zeta.contains(&0.0) {
            bail!("estimator.zeta must be increasing, contain 0 and have ≥ 3 points");
        }
        if e.eta_points < 2 || !(e.c1_sigmas > 0.0) || !(e.c2_rel_tol > 0.0) {
            bail!("estimator.eta_points ≥ 2, c1_sigmas and c2_rel_tol > 0");
        }
        if self.output.dir.is_empty() {
            bail!("output.dir is empty");
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration, output block excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = Output::default();
        let text = toml::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
