//! Coupling functions g and their derivative oracles.
//!
//! A coupling supplies the components f^{ξα} of the increment
//! g(ρ^ξψ) = f^{ξ+} v_+ + f^{ξ-} v_- and its differentials of every order.
//! Differentials are taken on Cartesian displacement fields; the mixed
//! partials f^{x,x_1…x_s} in the w_{0,±} basis are the special case of unit
//! fields, see [`derivative`].

use crate::error::{Result, SrbError};
use crate::lattice::{eigvec, Alpha, Lattice};
use serde::{Deserialize, Serialize};

/// Strip width r0 and sup bound G on the complex strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Analyticity {
    pub r0: f64,
    pub g: f64,
}

impl Analyticity {
    /// G·s!/r0^s.
    pub fn cauchy_bound(&self, s: usize) -> f64 {
        let mut f = 1.0;
        for i in 1..=s {
            f *= i as f64;
        }
        self.g * f / self.r0.powi(s as i32)
    }
}

pub trait Coupling: Send + Sync + std::fmt::Debug {
    fn id(&self) -> String;

    /// f^{ξα}(ψ).
    fn value(&self, lat: &Lattice, psi: &[[f64; 2]], site: usize, alpha: Alpha) -> f64;

    /// D^s f^{ξα}(ψ)[u_1, …, u_s] for Cartesian displacement fields u_i.
    fn differential(
        &self,
        lat: &Lattice,
        psi: &[[f64; 2]],
        site: usize,
        alpha: Alpha,
        fields: &[&[[f64; 2]]],
    ) -> Result<f64>;

    /// ∂f^{ξα}/∂ψ_η as a Cartesian covector.
    fn gradient(&self, lat: &Lattice, psi: &[[f64; 2]], site: usize, alpha: Alpha, eta: usize) -> [f64; 2];

    /// Highest differential order supported, `None` for all orders.
    fn max_order(&self) -> Option<usize> {
        None
    }

    /// True if f^{ξα} vanishes identically.
    fn vanishes(&self, _alpha: Alpha) -> bool {
        false
    }

    fn analyticity(&self) -> Analyticity;
}

/// s-th derivative of sin at x.
#[inline]
fn dsin(s: usize, x: f64) -> f64 {
    match s % 4 {
        0 => x.sin(),
        1 => x.cos(),
        2 => -x.sin(),
        _ => -x.cos(),
    }
}

/// s-th derivative of cos at x.
#[inline]
fn dcos(s: usize, x: f64) -> f64 {
    match s % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    }
}

/// g ≡ 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCoupling;

impl Coupling for ZeroCoupling {
    fn id(&self) -> String {
        "zero".into()
    }
    fn value(&self, _: &Lattice, _: &[[f64; 2]], _: usize, _: Alpha) -> f64 {
        0.0
    }
    fn differential(&self, _: &Lattice, _: &[[f64; 2]], _: usize, _: Alpha, _: &[&[[f64; 2]]]) -> Result<f64> {
        Ok(0.0)
    }
    fn gradient(&self, _: &Lattice, _: &[[f64; 2]], _: usize, _: Alpha, _: usize) -> [f64; 2] {
        [0.0; 2]
    }
    fn vanishes(&self, _: Alpha) -> bool {
        true
    }
    fn analyticity(&self) -> Analyticity {
        Analyticity { r0: 1.0, g: 0.0 }
    }
}

/// f^{ξ+} = Σ_{η∈nn(ξ)} sin(ψ¹_ξ − ψ¹_η), f^{ξ-} = 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct SineCoupling;

impl Coupling for SineCoupling {
    fn id(&self) -> String {
        "sine".into()
    }

    fn value(&self, lat: &Lattice, psi: &[[f64; 2]], site: usize, alpha: Alpha) -> f64 {
        if alpha == Alpha::Minus {
            return 0.0;
        }
        let x = psi[site][0];
        lat.neighbors(site).iter().map(|&e| (x - psi[e][0]).sin()).sum()
    }

    fn differential(
        &self,
        lat: &Lattice,
        psi: &[[f64; 2]],
        site: usize,
        alpha: Alpha,
        fields: &[&[[f64; 2]]],
    ) -> Result<f64> {
        if alpha == Alpha::Minus {
            return Ok(0.0);
        }
        let s = fields.len();
        let x = psi[site][0];
        let mut total = 0.0;
        for &e in lat.neighbors(site).iter().skip(1) {
            let mut prod = 1.0;
            for u in fields {
                prod *= u[site][0] - u[e][0];
                if prod == 0.0 {
                    break;
                }
            }
            if prod != 0.0 {
                total += prod * dsin(s, x - psi[e][0]);
            }
        }
        Ok(total)
    }

    fn gradient(&self, lat: &Lattice, psi: &[[f64; 2]], site: usize, alpha: Alpha, eta: usize) -> [f64; 2] {
        if alpha == Alpha::Minus {
            return [0.0; 2];
        }
        let x = psi[site][0];
        let mut g = 0.0;
        for &e in lat.neighbors(site).iter().skip(1) {
            let c = (x - psi[e][0]).cos();
            if eta == site {
                g += c;
            }
            if eta == e {
                g -= c;
            }
        }
        [g, 0.0]
    }

    fn vanishes(&self, alpha: Alpha) -> bool {
        alpha == Alpha::Minus
    }

    fn analyticity(&self) -> Analyticity {
        // |sin z| ≤ cosh(Im z), Im(ψ¹_ξ − ψ¹_η) ≤ 2 r0, at most 2d ≤ 6 terms.
        Analyticity { r0: 1.0, g: 6.0 * 2f64.cosh() }
    }
}

/// One term a·cos(Σ_j k_j·ψ_{nn_j(ξ)} + phase) of component `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub alpha: Alpha,
    pub amplitude: f64,
    pub phase: f64,
    /// (slot in the nn list, integer wave vector).
    pub wave: Vec<(usize, [i64; 2])>,
}

/// Finite trigonometric polynomial coupling; derivatives are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomialCoupling {
    pub terms: Vec<TrigTerm>,
    pub r0: f64,
}

impl TrigPolynomialCoupling {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        TrigPolynomialCoupling { terms, r0: 1.0 }
    }

    /// A fixed test polynomial with both components nonzero, valid for any d.
    pub fn standard(d: usize) -> Self {
        let mut terms = vec![
            TrigTerm { alpha: Alpha::Plus, amplitude: 0.7, phase: 0.3, wave: vec![(0, [1, 0]), (1, [0, -1])] },
            TrigTerm { alpha: Alpha::Plus, amplitude: 0.4, phase: -1.1, wave: vec![(0, [0, 1]), (2, [1, 1])] },
            TrigTerm { alpha: Alpha::Minus, amplitude: 0.6, phase: 0.8, wave: vec![(0, [1, 1]), (2, [-1, 0])] },
            TrigTerm { alpha: Alpha::Minus, amplitude: 0.5, phase: 2.0, wave: vec![(1, [1, 0])] },
        ];
        if d >= 2 {
            terms.push(TrigTerm { alpha: Alpha::Plus, amplitude: 0.3, phase: 0.5, wave: vec![(0, [1, 0]), (3, [0, 1])] });
        }
        TrigPolynomialCoupling::new(terms)
    }

    fn validate(&self, lat: &Lattice) -> Result<()> {
        let slots = 2 * lat.d + 1;
        for t in &self.terms {
            if t.wave.iter().any(|(s, _)| *s >= slots) {
                return Err(SrbError::InvalidConfig(format!("trig term slot outside nn(0) for d = {}", lat.d)));
            }
        }
        Ok(())
    }

    pub fn check(&self, lat: &Lattice) -> Result<()> {
        self.validate(lat)
    }
}

impl Coupling for TrigPolynomialCoupling {
    fn id(&self) -> String {
        "trig".into()
    }

    fn value(&self, lat: &Lattice, psi: &[[f64; 2]], site: usize, alpha: Alpha) -> f64 {
        let nn = lat.neighbors(site);
        self.terms
            .iter()
            .filter(|t| t.alpha == alpha)
            .map(|t| {
                let th: f64 = t
                    .wave
                    .iter()
                    .map(|(sl, k)| k[0] as f64 * psi[nn[*sl]][0] + k[1] as f64 * psi[nn[*sl]][1])
                    .sum();
                t.amplitude * (th + t.phase).cos()
            })
            .sum()
    }

    fn differential(
        &self,
        lat: &Lattice,
        psi: &[[f64; 2]],
        site: usize,
        alpha: Alpha,
        fields: &[&[[f64; 2]]],
    ) -> Result<f64> {
        let nn = lat.neighbors(site);
        let s = fields.len();
        let mut total = 0.0;
        for t in self.terms.iter().filter(|t| t.alpha == alpha) {
            let mut prod = t.amplitude;
            for u in fields {
                let kd: f64 = t
                    .wave
                    .iter()
                    .map(|(sl, k)| k[0] as f64 * u[nn[*sl]][0] + k[1] as f64 * u[nn[*sl]][1])
                    .sum();
                prod *= kd;
                if prod == 0.0 {
                    break;
                }
            }
            if prod == 0.0 {
                continue;
            }
            let th: f64 = t
                .wave
                .iter()
                .map(|(sl, k)| k[0] as f64 * psi[nn[*sl]][0] + k[1] as f64 * psi[nn[*sl]][1])
                .sum();
            total += prod * dcos(s, th + t.phase);
        }
        Ok(total)
    }

    fn gradient(&self, lat: &Lattice, psi: &[[f64; 2]], site: usize, alpha: Alpha, eta: usize) -> [f64; 2] {
        let nn = lat.neighbors(site);
        let mut g = [0.0; 2];
        for t in self.terms.iter().filter(|t| t.alpha == alpha) {
            let mut k_eta = [0.0; 2];
            let mut th = 0.0;
            for (sl, k) in &t.wave {
                let e = nn[*sl];
                th += k[0] as f64 * psi[e][0] + k[1] as f64 * psi[e][1];
                if e == eta {
                    k_eta[0] += k[0] as f64;
                    k_eta[1] += k[1] as f64;
                }
            }
            let c = -t.amplitude * (th + t.phase).sin();
            g[0] += c * k_eta[0];
            g[1] += c * k_eta[1];
        }
        g
    }

    fn vanishes(&self, alpha: Alpha) -> bool {
        !self.terms.iter().any(|t| t.alpha == alpha && t.amplitude != 0.0)
    }

    fn analyticity(&self) -> Analyticity {
        let g = self
            .terms
            .iter()
            .map(|t| {
                let k1: i64 = t.wave.iter().map(|(_, k)| k[0].abs() + k[1].abs()).sum();
                t.amplitude.abs() * (self.r0 * k1 as f64).cosh()
            })
            .sum();
        Analyticity { r0: self.r0, g }
    }
}

/// Mixed partial f^{x, x_1…x_s}(ψ) along the unit directions w_{0,α_i} at sites ξ_i.
pub fn derivative(
    coupling: &dyn Coupling,
    lat: &Lattice,
    psi: &[[f64; 2]],
    x: (usize, Alpha),
    dirs: &[(usize, Alpha)],
) -> Result<f64> {
    check_order(coupling, dirs.len())?;
    let fields: Vec<Vec<[f64; 2]>> = dirs
        .iter()
        .map(|&(site, a)| {
            let mut u = vec![[0.0; 2]; lat.len()];
            u[site] = eigvec(a);
            u
        })
        .collect();
    let refs: Vec<&[[f64; 2]]> = fields.iter().map(|u| u.as_slice()).collect();
    coupling.differential(lat, psi, x.0, x.1, &refs)
}

pub fn check_order(coupling: &dyn Coupling, s: usize) -> Result<()> {
    match coupling.max_order() {
        Some(m) if s > m => Err(SrbError::DerivativeOrderUnsupported { requested: s, supported: m }),
        _ => Ok(()),
    }
}

/// Serializable choice of built-in coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CouplingSpec {
    Zero,
    Sine,
    Trig { terms: Vec<TrigTerm> },
    /// [`TrigPolynomialCoupling::standard`].
    TrigStandard,
}

impl CouplingSpec {
    pub fn build(&self, lat: &Lattice) -> Result<Box<dyn Coupling>> {
        Ok(match self {
            CouplingSpec::Zero => Box::new(ZeroCoupling),
            CouplingSpec::Sine => Box::new(SineCoupling),
            CouplingSpec::Trig { terms } => {
                let c = TrigPolynomialCoupling::new(terms.clone());
                c.check(lat)?;
                Box::new(c)
            }
            CouplingSpec::TrigStandard => Box::new(TrigPolynomialCoupling::standard(lat.d)),
        })
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "zero" => Ok(CouplingSpec::Zero),
            "sine" => Ok(CouplingSpec::Sine),
            "trig" | "trig-standard" => Ok(CouplingSpec::TrigStandard),
            other => Err(SrbError::InvalidConfig(format!("unknown coupling id {other:?}"))),
        }
    }
}
