//! Taylor coefficients δh_(k) of the conjugacy h_ε = Id + δh_ε.
//!
//! Coefficients are evaluated recursively along the exact S_0 orbit of the
//! base state, memoized on (order, time shift). For x = (ξ, α):
//!
//! δh^x_(k)(ψ) = (−α) Σ_{p=0}^{P} λ^{p+ρ_α} T^x_k(S_0^{α(p+1−ρ_α)} ψ),
//!
//! with T^x_1 = f^x and, for k ≥ 2, T^x_k the sum over s and ordered
//! compositions k_1+…+k_s = k−1 of D^s f^x[δh_(k_1), …, δh_(k_s)] / s!.

use crate::coupling::{check_order, Coupling};
use crate::error::{Result, SrbError};
use crate::lattice::{self, from_w_basis, wrap_angle, Alpha, FreeOrbit, Lattice, LatticeState};
use std::collections::HashMap;
use std::rc::Rc;

/// Per-site coefficients [c_+, c_-] in the w_{0,±} basis.
pub type CoefField = Vec<[f64; 2]>;

/// Truncation parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExpansionOrder {
    pub k: usize,
    pub p_max: usize,
    pub beta: f64,
}

impl ExpansionOrder {
    pub const DEFAULT_P_MAX: usize = 60;

    pub fn new(k: usize) -> Self {
        ExpansionOrder { k, p_max: Self::DEFAULT_P_MAX, beta: 0.5 }
    }

    /// Σ_{p>P} λ^p = λ^{P+1}/(1−λ).
    pub fn tail(p_max: usize) -> f64 {
        let l = lattice::lambda();
        l.powi(p_max as i32 + 1) / (1.0 - l)
    }

    /// Smallest P with tail below `tol`.
    pub fn p_max_for_tolerance(tol: f64) -> usize {
        (0..10_000).find(|&p| Self::tail(p) <= tol).unwrap_or(10_000)
    }
}

/// All ordered compositions of `n` into positive parts.
pub fn compositions(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for mut rest in compositions(n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub(crate) fn factorial(s: usize) -> f64 {
    (1..=s).map(|i| i as f64).product()
}

/// Memoized evaluator of δh_(k)(S_0^t ψ) for one base state ψ.
pub struct ConjugationSeries<'a> {
    coupling: &'a dyn Coupling,
    lattice: Lattice,
    p_max: usize,
    orbit: FreeOrbit,
    coef: HashMap<(usize, i64), Rc<CoefField>>,
    node: HashMap<(usize, i64), Rc<CoefField>>,
    disp: HashMap<(usize, i64), Rc<Vec<[f64; 2]>>>,
    comps: Vec<Vec<Vec<usize>>>,
}

impl<'a> ConjugationSeries<'a> {
    pub fn new(state: &LatticeState, coupling: &'a dyn Coupling, p_max: usize) -> Self {
        ConjugationSeries {
            coupling,
            lattice: state.lattice,
            p_max,
            orbit: FreeOrbit::new(state),
            coef: HashMap::new(),
            node: HashMap::new(),
            disp: HashMap::new(),
            comps: Vec::new(),
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn coupling(&self) -> &'a dyn Coupling {
        self.coupling
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    /// S_0^t ψ.
    pub fn point(&mut self, t: i64) -> Vec<[f64; 2]> {
        self.orbit.at(t).to_vec()
    }

    pub fn orbit(&mut self) -> &mut FreeOrbit {
        &mut self.orbit
    }

    fn compositions_of(&mut self, n: usize) -> Vec<Vec<usize>> {
        while self.comps.len() <= n {
            let m = self.comps.len();
            self.comps.push(compositions(m));
        }
        self.comps[n].clone()
    }

    /// Cartesian displacement field of δh_(k)(S_0^t ψ).
    pub fn displacement(&mut self, k: usize, t: i64) -> Result<Rc<Vec<[f64; 2]>>> {
        if let Some(d) = self.disp.get(&(k, t)) {
            return Ok(d.clone());
        }
        let c = self.coefficient(k, t)?;
        let d = Rc::new(from_w_basis(&c));
        self.disp.insert((k, t), d.clone());
        Ok(d)
    }

    /// T^x_k at S_0^τ ψ for every x.
    fn node_field(&mut self, k: usize, tau: i64) -> Result<Rc<CoefField>> {
        if let Some(v) = self.node.get(&(k, tau)) {
            return Ok(v.clone());
        }
        let lat = self.lattice;
        let n = lat.len();
        let mut out = vec![[0.0; 2]; n];
        let psi = self.orbit.at(tau).to_vec();
        if k == 1 {
            for (s, o) in out.iter_mut().enumerate() {
                for a in Alpha::BOTH {
                    if !self.coupling.vanishes(a) {
                        o[a.index()] = self.coupling.value(&lat, &psi, s, a);
                    }
                }
            }
        } else {
            let comps = self.compositions_of(k - 1);
            let mut disps: HashMap<usize, Rc<Vec<[f64; 2]>>> = HashMap::new();
            for j in 1..k {
                disps.insert(j, self.displacement(j, tau)?);
            }
            for c in &comps {
                check_order(self.coupling, c.len())?;
                let weight = 1.0 / factorial(c.len());
                let fields: Vec<&[[f64; 2]]> = c.iter().map(|j| disps[j].as_slice()).collect();
                for (s, o) in out.iter_mut().enumerate() {
                    for a in Alpha::BOTH {
                        if self.coupling.vanishes(a) {
                            continue;
                        }
                        o[a.index()] += weight * self.coupling.differential(&lat, &psi, s, a, &fields)?;
                    }
                }
            }
        }
        let rc = Rc::new(out);
        self.node.insert((k, tau), rc.clone());
        Ok(rc)
    }

    /// δh_(k)(S_0^t ψ).
    pub fn coefficient(&mut self, k: usize, t: i64) -> Result<Rc<CoefField>> {
        if k == 0 {
            return Err(SrbError::InvalidConfig("order must be at least 1".into()));
        }
        if let Some(v) = self.coef.get(&(k, t)) {
            return Ok(v.clone());
        }
        let lat = self.lattice;
        let lam = lattice::lambda();
        let mut out = vec![[0.0; 2]; lat.len()];
        for a in Alpha::BOTH {
            if self.coupling.vanishes(a) {
                continue;
            }
            let rho = a.rho();
            // Sum from the smallest weights up for a fixed summation order.
            for p in (0..=self.p_max as i64).rev() {
                let shift = if a == Alpha::Plus { p } else { -(p + 1) };
                let w = -a.sign() * lam.powi((p + rho) as i32);
                let nf = self.node_field(k, t + shift)?;
                for (o, v) in out.iter_mut().zip(nf.iter()) {
                    o[a.index()] += w * v[a.index()];
                }
            }
        }
        let rc = Rc::new(out);
        self.coef.insert((k, t), rc.clone());
        Ok(rc)
    }

    /// Σ_{k=1}^{K} ε^k δh_(k)(S_0^t ψ) as coefficient field.
    pub fn truncated_sum(&mut self, eps: f64, kmax: usize, t: i64) -> Result<CoefField> {
        let n = self.lattice.len();
        let mut acc = vec![[0.0; 2]; n];
        for k in (1..=kmax).rev() {
            let c = self.coefficient(k, t)?;
            let e = eps.powi(k as i32);
            for (o, v) in acc.iter_mut().zip(c.iter()) {
                o[0] += e * v[0];
                o[1] += e * v[1];
            }
        }
        Ok(acc)
    }

    /// h_ε(S_0^t ψ) truncated at order K.
    pub fn conjugate_at(&mut self, eps: f64, kmax: usize, t: i64) -> Result<LatticeState> {
        let base = self.orbit.at(t).to_vec();
        if eps == 0.0 || kmax == 0 {
            return Ok(LatticeState { lattice: self.lattice, psi: base });
        }
        let c = self.truncated_sum(eps, kmax, t)?;
        let u = from_w_basis(&c);
        let psi = base
            .iter()
            .zip(&u)
            .map(|(p, d)| [wrap_angle(p[0] + d[0]), wrap_angle(p[1] + d[1])])
            .collect();
        Ok(LatticeState { lattice: self.lattice, psi })
    }
}

/// δh_(1)(ψ).
pub fn delta_h_first_order(state: &LatticeState, coupling: &dyn Coupling, p_max: usize) -> CoefField {
    let mut s = ConjugationSeries::new(state, coupling, p_max);
    s.coefficient(1, 0).map(|c| (*c).clone()).unwrap_or_else(|_| vec![[0.0; 2]; state.lattice.len()])
}

/// δh_(k)(ψ), k ≥ 1.
pub fn delta_h_order_k(state: &LatticeState, coupling: &dyn Coupling, k: usize, p_max: usize) -> Result<CoefField> {
    let mut s = ConjugationSeries::new(state, coupling, p_max);
    Ok((*s.coefficient(k, 0)?).clone())
}

/// ψ + Σ_{k≤K} ε^k δh_(k)(ψ) mod 2π.
pub fn conjugate(state: &LatticeState, coupling: &dyn Coupling, eps: f64, kmax: usize, p_max: usize) -> Result<LatticeState> {
    let mut s = ConjugationSeries::new(state, coupling, p_max);
    s.conjugate_at(eps, kmax, 0)
}

/// Max-site torus distance between S_ε(h(ψ)) and h(S_0ψ).
pub fn conjugacy_residual(state: &LatticeState, coupling: &dyn Coupling, eps: f64, kmax: usize, p_max: usize) -> Result<f64> {
    let mut s = ConjugationSeries::new(state, coupling, p_max);
    residual_from_series(&mut s, eps, kmax)
}

/// Residual using an existing series (reuses cached coefficients across ε and K).
pub fn residual_from_series(s: &mut ConjugationSeries<'_>, eps: f64, kmax: usize) -> Result<f64> {
    let h0 = s.conjugate_at(eps, kmax, 0)?;
    let h1 = s.conjugate_at(eps, kmax, 1)?;
    let lhs = lattice::apply_s_eps(&h0, s.coupling(), eps);
    Ok(lhs.max_site_dist(&h1))
}

/// Empirical sup of |δh(ψ) − δh(ψ')| / d̂(ψ_ξ', ψ'_ξ')^β over pairs differing at one site.
pub fn holder_diagnostic(
    coupling: &dyn Coupling,
    eps: f64,
    kmax: usize,
    beta: f64,
    p_max: usize,
    pairs: &[(LatticeState, LatticeState)],
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for (a, b) in pairs {
        let diff_sites: Vec<usize> = (0..a.lattice.len()).filter(|&s| a.psi[s] != b.psi[s]).collect();
        if diff_sites.len() != 1 {
            return Err(SrbError::InvalidState(format!(
                "pair must differ at exactly one site, differs at {}",
                diff_sites.len()
            )));
        }
        let dist = lattice::torus_dist(a.psi[diff_sites[0]], b.psi[diff_sites[0]]);
        let ha = ConjugationSeries::new(a, coupling, p_max).truncated_sum(eps, kmax, 0)?;
        let hb = ConjugationSeries::new(b, coupling, p_max).truncated_sum(eps, kmax, 0)?;
        let num = ha
            .iter()
            .zip(&hb)
            .flat_map(|(x, y)| [(x[0] - y[0]).abs(), (x[1] - y[1]).abs()])
            .fold(0.0, f64::max);
        if num > 0.0 {
            sup = sup.max(num / dist.powf(beta));
        }
    }
    Ok(sup)
}

/// Value of the convergence-radius bound ε_β for the given coupling:
/// [8 (2d+1) G / (r0 (1 − λ^{1−β}))]^{-1}.
pub fn epsilon_beta_bound(coupling: &dyn Coupling, d: usize, beta: f64) -> f64 {
    let an = coupling.analyticity();
    if an.g == 0.0 {
        return f64::INFINITY;
    }
    let l = lattice::lambda();
    let bracket = 8.0 * (2 * d + 1) as f64 * an.g / (an.r0 * (1.0 - l.powf(1.0 - beta)));
    1.0 / bracket
}
