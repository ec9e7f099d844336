//! Unstable-frame corrections δV, Lyapunov matrix corrections δL and the
//! diagonal log-expansion Λ^ξ, plus the orbit-following QR oracle.
//!
//! The frame is v^{(ρ)} = Σ_x V^{(ρ)}_x w_x with the gauge V^{(ρ)}_{η+} = δ_{ηρ},
//! and satisfies DS_ε(h(ψ)) v^{(ρ)}(ψ) = Σ_ζ v^{(ζ)}(S_0ψ) L^{ζρ}(ψ).
//! Solving the ξ^- rows backward in time gives
//!
//! δV^{(ρ)}_{ξ-}(ψ) = Σ_{j≥0} λ^{2j+1} R^{ξρ}(S_0^{-(j+1)} ψ),
//!
//! where R collects the order-by-order right-hand side.

use crate::conjugation::{compositions, factorial, ConjugationSeries};
use crate::coupling::{check_order, Coupling};
use crate::error::{Result, SrbError};
use crate::lattice::{self, differential_ds_eps, v_minus, v_plus, Alpha, Lattice, LatticeState};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::rc::Rc;

/// Memoized evaluator of δL_(k), δV_(k) along the S_0 orbit of a base state.
pub struct UnstableSeries<'a> {
    conj: ConjugationSeries<'a>,
    lattice: Lattice,
    p_max: usize,
    v_shift: i64,
    dl: HashMap<(usize, i64), Rc<DMatrix<f64>>>,
    dv: HashMap<(usize, i64), Rc<DMatrix<f64>>>,
    unit_plus: Vec<Vec<[f64; 2]>>,
}

impl<'a> UnstableSeries<'a> {
    pub fn new(state: &LatticeState, coupling: &'a dyn Coupling, p_max: usize) -> Self {
        let lat = state.lattice;
        let vp = v_plus();
        let unit_plus = (0..lat.len())
            .map(|r| {
                let mut u = vec![[0.0; 2]; lat.len()];
                u[r] = vp;
                u
            })
            .collect();
        UnstableSeries {
            conj: ConjugationSeries::new(state, coupling, p_max),
            lattice: lat,
            p_max,
            v_shift: 1,
            dl: HashMap::new(),
            dv: HashMap::new(),
            unit_plus,
        }
    }

    /// Evaluate the backward sum at S_0^{-(j+shift)}; only `shift = 1` solves
    /// the invariance equation. Exposed for regression tests.
    #[doc(hidden)]
    pub fn with_backward_shift(mut self, shift: i64) -> Self {
        self.v_shift = shift;
        self
    }

    pub fn conjugation(&mut self) -> &mut ConjugationSeries<'a> {
        &mut self.conj
    }

    fn coupling(&self) -> &'a dyn Coupling {
        self.conj.coupling()
    }

    /// Cartesian field η ↦ δV^{(ρ)}_{η-(k)} v_- for column ρ.
    fn v_field(m: &DMatrix<f64>, rho: usize) -> Vec<[f64; 2]> {
        let vm = v_minus();
        (0..m.nrows()).map(|eta| [m[(eta, rho)] * vm[0], m[(eta, rho)] * vm[1]]).collect()
    }

    /// Row sums shared by δL (component +) and R (component −):
    /// Σ_s Σ_{comp of k} D^{s+1}f^{ξα}[e_ρ+, u…]/s! + D^s f^{ξα}[V_(k1), u…]/(s−1)!.
    fn taylor_block(&mut self, alpha: Alpha, k: usize, tau: i64) -> Result<DMatrix<f64>> {
        let lat = self.lattice;
        let n = lat.len();
        let mut out = DMatrix::<f64>::zeros(n, n);
        if self.coupling().vanishes(alpha) {
            return Ok(out);
        }
        let psi = self.conj.point(tau);
        let coupling = self.coupling();
        if k == 0 {
            check_order(coupling, 1)?;
            for xi in 0..n {
                for &rho in lat.neighbors(xi).iter() {
                    let f = [self.unit_plus[rho].as_slice()];
                    out[(xi, rho)] = coupling.differential(&lat, &psi, xi, alpha, &f)?;
                }
            }
            return Ok(out);
        }
        let mut disps = HashMap::new();
        for j in 1..=k {
            disps.insert(j, self.conj.displacement(j, tau)?);
        }
        let mut vcols: HashMap<usize, Vec<Vec<[f64; 2]>>> = HashMap::new();
        for j in 1..=k {
            let m = self.delta_v(j, tau)?;
            vcols.insert(j, (0..n).map(|rho| Self::v_field(&m, rho)).collect());
        }
        for c in compositions(k) {
            let s = c.len();
            check_order(coupling, s + 1)?;
            let w1 = 1.0 / factorial(s);
            let w2 = 1.0 / factorial(s - 1);
            for rho in 0..n {
                let mut f1: Vec<&[[f64; 2]]> = vec![self.unit_plus[rho].as_slice()];
                f1.extend(c.iter().map(|j| disps[j].as_slice()));
                let mut f2: Vec<&[[f64; 2]]> = vec![vcols[&c[0]][rho].as_slice()];
                f2.extend(c[1..].iter().map(|j| disps[j].as_slice()));
                for xi in 0..n {
                    let near = lat.dist(xi, rho) <= 1;
                    let a = if near { coupling.differential(&lat, &psi, xi, alpha, &f1)? } else { 0.0 };
                    let b = coupling.differential(&lat, &psi, xi, alpha, &f2)?;
                    out[(xi, rho)] += w1 * a + w2 * b;
                }
            }
        }
        Ok(out)
    }

    /// δL_(k)(S_0^t ψ), rows ξ, columns ρ.
    pub fn delta_l(&mut self, k: usize, t: i64) -> Result<Rc<DMatrix<f64>>> {
        if k == 0 {
            return Err(SrbError::InvalidConfig("order must be at least 1".into()));
        }
        if let Some(m) = self.dl.get(&(k, t)) {
            return Ok(m.clone());
        }
        let m = Rc::new(self.taylor_block(Alpha::Plus, k - 1, t)?);
        self.dl.insert((k, t), m.clone());
        Ok(m)
    }

    /// R_(k) at S_0^τ ψ.
    fn rhs(&mut self, k: usize, tau: i64) -> Result<DMatrix<f64>> {
        let mut r = self.taylor_block(Alpha::Minus, k - 1, tau)?;
        for k1 in 1..k {
            let v_next = self.delta_v(k1, tau + 1)?;
            let l = self.delta_l(k - k1, tau)?;
            r -= &*v_next * &*l;
        }
        Ok(r)
    }

    /// δV^{(ρ)}_{ξ-(k)}(S_0^t ψ), rows ξ, columns ρ. The ξ^+ rows vanish by gauge.
    pub fn delta_v(&mut self, k: usize, t: i64) -> Result<Rc<DMatrix<f64>>> {
        if k == 0 {
            return Err(SrbError::InvalidConfig("order must be at least 1".into()));
        }
        if let Some(m) = self.dv.get(&(k, t)) {
            return Ok(m.clone());
        }
        let n = self.lattice.len();
        let mut acc = DMatrix::<f64>::zeros(n, n);
        let frame_trivial = self.coupling().vanishes(Alpha::Minus);
        if !frame_trivial {
            let lam = lattice::lambda();
            for j in (0..=self.p_max as i64).rev() {
                let r = self.rhs(k, t - (j + self.v_shift))?;
                acc += r * lam.powi((2 * j + 1) as i32);
            }
        }
        let m = Rc::new(acc);
        self.dv.insert((k, t), m.clone());
        Ok(m)
    }

    /// δΛ^ξ_(k) for every ξ: Σ_{comp of k} (−1)^{s+1}/s · λ^s [δL_(k1)⋯δL_(ks)]^{ξξ}.
    pub fn delta_lambda(&mut self, k: usize, t: i64) -> Result<Vec<f64>> {
        let n = self.lattice.len();
        let lam = lattice::lambda();
        let mut out = vec![0.0; n];
        for c in compositions(k) {
            let s = c.len();
            let mut prod = (*self.delta_l(c[0], t)?).clone();
            for &kk in &c[1..] {
                prod = prod * &*self.delta_l(kk, t)?;
            }
            let w = if s % 2 == 1 { 1.0 } else { -1.0 } / s as f64 * lam.powi(s as i32);
            for (xi, o) in out.iter_mut().enumerate() {
                *o += w * prod[(xi, xi)];
            }
        }
        Ok(out)
    }

    /// Λ^ξ(S_0^t ψ) = −log λ + Σ_{k≤K} ε^k δΛ^ξ_(k).
    pub fn lambda_at(&mut self, eps: f64, kmax: usize, t: i64) -> Result<Vec<f64>> {
        let n = self.lattice.len();
        let base = -lattice::lambda().ln();
        let mut out = vec![0.0; n];
        for k in (1..=kmax).rev() {
            if eps == 0.0 {
                break;
            }
            let d = self.delta_lambda(k, t)?;
            let e = eps.powi(k as i32);
            for (o, v) in out.iter_mut().zip(d) {
                *o += e * v;
            }
        }
        Ok(out.into_iter().map(|v| base + v).collect())
    }

    /// L(S_0^t ψ) = λ^{-1} Id + Σ ε^k δL_(k).
    pub fn l_matrix(&mut self, eps: f64, kmax: usize, t: i64) -> Result<DMatrix<f64>> {
        let n = self.lattice.len();
        let mut m = DMatrix::<f64>::identity(n, n) / lattice::lambda();
        for k in 1..=kmax {
            m += &*self.delta_l(k, t)? * eps.powi(k as i32);
        }
        Ok(m)
    }

    /// Σ ε^k δV_(k)(S_0^t ψ).
    pub fn v_matrix(&mut self, eps: f64, kmax: usize, t: i64) -> Result<DMatrix<f64>> {
        let n = self.lattice.len();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 1..=kmax {
            m += &*self.delta_v(k, t)? * eps.powi(k as i32);
        }
        Ok(m)
    }

    /// Perturbative frame vectors v^{(ρ)} (Cartesian tangent fields) at S_0^t ψ.
    pub fn frame(&mut self, eps: f64, kmax: usize, t: i64) -> Result<Vec<Vec<[f64; 2]>>> {
        let n = self.lattice.len();
        let v = self.v_matrix(eps, kmax, t)?;
        let vp = v_plus();
        let vm = v_minus();
        Ok((0..n)
            .map(|rho| {
                (0..n)
                    .map(|eta| {
                        let cp = if eta == rho { 1.0 } else { 0.0 };
                        let cm = v[(eta, rho)];
                        [cp * vp[0] + cm * vm[0], cp * vp[1] + cm * vm[1]]
                    })
                    .collect()
            })
            .collect())
    }

    /// Max-norm residual of DS_ε(h(ψ)) V(ψ) − V(S_0ψ) L(ψ) in the w basis.
    pub fn invariance_residual(&mut self, eps: f64, kmax: usize) -> Result<f64> {
        let n = self.lattice.len();
        let h = self.conj.conjugate_at(eps, kmax, 0)?;
        let jac = differential_ds_eps(&h, self.coupling(), eps);
        let v0 = self.frame(eps, kmax, 0)?;
        let v1 = self.frame(eps, kmax, 1)?;
        let l = self.l_matrix(eps, kmax, 0)?;
        let mut worst: f64 = 0.0;
        for rho in 0..n {
            let lhs = jac.apply(&v0[rho]);
            let mut rhs = vec![[0.0; 2]; n];
            for (zeta, vz) in v1.iter().enumerate() {
                let c = l[(zeta, rho)];
                if c == 0.0 {
                    continue;
                }
                for (r, x) in rhs.iter_mut().zip(vz) {
                    r[0] += c * x[0];
                    r[1] += c * x[1];
                }
            }
            let diff: Vec<[f64; 2]> = lhs.iter().zip(&rhs).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
            for c in lattice::to_w_basis(&diff) {
                worst = worst.max(c[0].abs()).max(c[1].abs());
            }
        }
        Ok(worst)
    }
}

/// (δL_(1), δV_(1)) at ψ.
pub fn delta_l_v_first_order(
    state: &LatticeState,
    coupling: &dyn Coupling,
    p_max: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    delta_l_v_order_k(state, coupling, 1, p_max)
}

/// (δL_(k), δV_(k)) at ψ.
pub fn delta_l_v_order_k(
    state: &LatticeState,
    coupling: &dyn Coupling,
    k: usize,
    p_max: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut s = UnstableSeries::new(state, coupling, p_max);
    let l = (*s.delta_l(k, 0)?).clone();
    let v = (*s.delta_v(k, 0)?).clone();
    Ok((l, v))
}

/// Λ^ξ(ψ) truncated at order K.
pub fn lambda_expansion(state: &LatticeState, coupling: &dyn Coupling, eps: f64, kmax: usize, p_max: usize) -> Result<Vec<f64>> {
    UnstableSeries::new(state, coupling, p_max).lambda_at(eps, kmax, 0)
}

/// Output of the orbit-following orthonormalization.
#[derive(Debug, Clone)]
pub struct QrFrame {
    /// Orthonormal frame at the last orbit point, one Cartesian field per vector.
    pub frame: Vec<Vec<[f64; 2]>>,
    /// Σ_i log r_ii for every step after the transient.
    pub growth: Vec<f64>,
    /// log r_ii per frame vector, for every step after the transient.
    pub diag: Vec<Vec<f64>>,
}

/// Push the w_{0,+} frame along `orbit` with DS_ε and modified Gram–Schmidt.
///
/// Step t maps the frame at `orbit[t]` to `orbit[t+1]`; steps t ≥ n_transient
/// are recorded.
pub fn unstable_frame_qr(orbit: &[LatticeState], coupling: &dyn Coupling, eps: f64, n_transient: usize) -> Result<QrFrame> {
    if orbit.len() <= n_transient + 1 {
        return Err(SrbError::InsufficientData(format!(
            "orbit of length {} does not exceed the transient {n_transient}",
            orbit.len()
        )));
    }
    let lat = orbit[0].lattice;
    let n = lat.len();
    let vp = v_plus();
    let mut frame: Vec<Vec<[f64; 2]>> = (0..n)
        .map(|r| {
            let mut u = vec![[0.0; 2]; n];
            u[r] = vp;
            u
        })
        .collect();
    let mut growth = Vec::new();
    let mut diag = Vec::new();
    for (step, point) in orbit[..orbit.len() - 1].iter().enumerate() {
        let jac = differential_ds_eps(point, coupling, eps);
        let mut pushed: Vec<Vec<[f64; 2]>> = frame.iter().map(|u| jac.apply(u)).collect();
        let logs = modified_gram_schmidt(&mut pushed, step)?;
        frame = pushed;
        if step >= n_transient {
            growth.push(logs.iter().sum());
            diag.push(logs);
        }
    }
    Ok(QrFrame { frame, growth, diag })
}

fn dot(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x[0] * y[0] + x[1] * y[1]).sum()
}

/// In-place MGS; returns log r_ii.
pub fn modified_gram_schmidt(vs: &mut [Vec<[f64; 2]>], step: usize) -> Result<Vec<f64>> {
    let m = vs.len();
    let mut logs = Vec::with_capacity(m);
    for i in 0..m {
        let r = dot(&vs[i], &vs[i]).sqrt();
        if !(r > 1e-280) || !r.is_finite() {
            return Err(SrbError::DegenerateFrame { step, value: r });
        }
        for x in vs[i].iter_mut() {
            x[0] /= r;
            x[1] /= r;
        }
        logs.push(r.ln());
        let (head, tail) = vs.split_at_mut(i + 1);
        let qi = &head[i];
        for v in tail.iter_mut() {
            let c = dot(qi, v);
            for (x, q) in v.iter_mut().zip(qi) {
                x[0] -= c * q[0];
                x[1] -= c * q[1];
            }
        }
    }
    Ok(logs)
}

/// Largest principal angle between the spans of two frames.
pub fn max_principal_angle(a: &[Vec<[f64; 2]>], b: &[Vec<[f64; 2]>]) -> f64 {
    let to_mat = |f: &[Vec<[f64; 2]>]| {
        let rows = 2 * f[0].len();
        DMatrix::from_fn(rows, f.len(), |i, j| f[j][i / 2][i % 2])
    };
    let qa = to_mat(a).qr().q();
    let qb = to_mat(b).qr().q();
    let m = qa.transpose() * qb;
    let sv = m.singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min).clamp(-1.0, 1.0);
    smin.acos()
}
