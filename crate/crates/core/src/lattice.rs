//! Torus lattice phase space, the cat map and the coupled map S_ε.

use crate::coupling::Coupling;
use crate::error::{Result, SrbError};
use std::f64::consts::TAU;

/// The golden ratio.
pub const PHI: f64 = 1.618_033_988_749_895;

/// The cat matrix A = [[1,1],[1,2]].
pub const CAT_MATRIX: [[i64; 2]; 2] = [[1, 1], [1, 2]];

/// Expanding/contracting label of a tangent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Alpha {
    Plus,
    Minus,
}

impl Alpha {
    pub const BOTH: [Alpha; 2] = [Alpha::Plus, Alpha::Minus];

    /// +1 or -1.
    pub fn sign(self) -> f64 {
        match self {
            Alpha::Plus => 1.0,
            Alpha::Minus => -1.0,
        }
    }

    /// ρ_α = (1+α)/2.
    pub fn rho(self) -> i64 {
        match self {
            Alpha::Plus => 1,
            Alpha::Minus => 0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Alpha::Plus => 0,
            Alpha::Minus => 1,
        }
    }
}

/// Spectral data of the cat map.
#[derive(Debug, Clone, Copy)]
pub struct CatMap {
    pub matrix: [[i64; 2]; 2],
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
}

impl CatMap {
    pub fn new() -> Self {
        let s5 = 5f64.sqrt();
        let norm = (1.0 + PHI * PHI).sqrt();
        CatMap {
            matrix: CAT_MATRIX,
            lambda_plus: (3.0 + s5) / 2.0,
            lambda_minus: (3.0 - s5) / 2.0,
            v_plus: [1.0 / norm, PHI / norm],
            v_minus: [PHI / norm, -1.0 / norm],
        }
    }

    pub fn eigvec(&self, alpha: Alpha) -> [f64; 2] {
        match alpha {
            Alpha::Plus => self.v_plus,
            Alpha::Minus => self.v_minus,
        }
    }

    /// Eigenvalue λ^{-α}: λ_+ for the expanding direction.
    pub fn eigval(&self, alpha: Alpha) -> f64 {
        match alpha {
            Alpha::Plus => self.lambda_plus,
            Alpha::Minus => self.lambda_minus,
        }
    }
}

impl Default for CatMap {
    fn default() -> Self {
        Self::new()
    }
}

/// λ = λ_- , the contraction factor.
pub fn lambda() -> f64 {
    (3.0 - 5f64.sqrt()) / 2.0
}

/// Unit eigenvectors, cached.
pub fn v_plus() -> [f64; 2] {
    CatMap::new().v_plus
}

pub fn v_minus() -> [f64; 2] {
    CatMap::new().v_minus
}

pub fn eigvec(alpha: Alpha) -> [f64; 2] {
    match alpha {
        Alpha::Plus => v_plus(),
        Alpha::Minus => v_minus(),
    }
}

/// Reduce an angle to [0, 2π).
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed difference a - b folded into [-π, π).
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d >= std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

/// Flat distance on T².
pub fn torus_dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    let a = angle_diff(p[0], q[0]);
    let b = angle_diff(p[1], q[1]);
    (a * a + b * b).sqrt()
}

/// A·p mod 2π in floating point.
pub fn apply_s0(p: [f64; 2]) -> [f64; 2] {
    fixed_to_point(cat_fixed(point_to_fixed(p)))
}

/// A^{-1}·p mod 2π.
pub fn apply_s0_inv(p: [f64; 2]) -> [f64; 2] {
    fixed_to_point(cat_inv_fixed(point_to_fixed(p)))
}

// Points of T² as 64-bit binary fractions of 2π. The cat map acts on them
// exactly through wrapping integer arithmetic.

const TWO64: f64 = 18_446_744_073_709_551_616.0;

#[inline]
pub fn angle_to_fixed(x: f64) -> u64 {
    let u = wrap_angle(x) / TAU;
    let v = u * TWO64;
    if v >= TWO64 {
        0
    } else {
        v.round() as u128 as u64
    }
}

#[inline]
pub fn fixed_to_angle(x: u64) -> f64 {
    wrap_angle(x as f64 / TWO64 * TAU)
}

pub fn point_to_fixed(p: [f64; 2]) -> [u64; 2] {
    [angle_to_fixed(p[0]), angle_to_fixed(p[1])]
}

pub fn fixed_to_point(p: [u64; 2]) -> [f64; 2] {
    [fixed_to_angle(p[0]), fixed_to_angle(p[1])]
}

#[inline]
pub fn cat_fixed(p: [u64; 2]) -> [u64; 2] {
    [p[0].wrapping_add(p[1]), p[0].wrapping_add(p[1].wrapping_mul(2))]
}

#[inline]
pub fn cat_inv_fixed(p: [u64; 2]) -> [u64; 2] {
    [p[0].wrapping_mul(2).wrapping_sub(p[1]), p[1].wrapping_sub(p[0])]
}

/// A^t applied exactly, t of either sign.
pub fn cat_power_fixed(mut p: [u64; 2], t: i64) -> [u64; 2] {
    if t >= 0 {
        for _ in 0..t {
            p = cat_fixed(p);
        }
    } else {
        for _ in 0..(-t) {
            p = cat_inv_fixed(p);
        }
    }
    p
}

/// Periodic cube V_N of side 2N+1 in d dimensions, row-major indexing.
///
/// Site `i` has axis coordinates c_k ∈ [0, 2N+1) with i = Σ c_k (2N+1)^{d-1-k};
/// the lattice point is ξ_k = c_k - N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Lattice {
    pub d: usize,
    pub n: usize,
}

impl Lattice {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(SrbError::InvalidLattice(format!("d = {d} not in 1..=3")));
        }
        if n == 0 {
            return Err(SrbError::InvalidLattice("N must be at least 1".into()));
        }
        let lat = Lattice { d, n };
        if lat.len() > 100_000 {
            return Err(SrbError::InvalidLattice("lattice too large".into()));
        }
        Ok(lat)
    }

    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let l = self.side();
        let mut c = vec![0; self.d];
        let mut s = site;
        for k in (0..self.d).rev() {
            c[k] = s % l;
            s /= l;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let l = self.side();
        coords.iter().fold(0, |acc, &c| acc * l + c)
    }

    /// Lattice point ξ ∈ [-N, N]^d of a site.
    pub fn point(&self, site: usize) -> Vec<i64> {
        self.coords(site)
            .into_iter()
            .map(|c| c as i64 - self.n as i64)
            .collect()
    }

    /// Site of the lattice point ξ (wrapped).
    pub fn site_of(&self, point: &[i64]) -> usize {
        let l = self.side() as i64;
        let c: Vec<usize> = point
            .iter()
            .map(|&x| (x + self.n as i64).rem_euclid(l) as usize)
            .collect();
        self.index(&c)
    }

    pub fn origin(&self) -> usize {
        self.site_of(&vec![0; self.d])
    }

    /// Translate a site by an offset.
    pub fn shift(&self, site: usize, offset: &[i64]) -> usize {
        let p = self.point(site);
        let q: Vec<i64> = p.iter().zip(offset).map(|(a, b)| a + b).collect();
        self.site_of(&q)
    }

    /// Minimal periodic offset from `a` to `b`.
    pub fn offset(&self, a: usize, b: usize) -> Vec<i64> {
        let l = self.side() as i64;
        let pa = self.point(a);
        let pb = self.point(b);
        pa.iter()
            .zip(&pb)
            .map(|(x, y)| {
                let mut d = (y - x).rem_euclid(l);
                if d > self.n as i64 {
                    d -= l;
                }
                d
            })
            .collect()
    }

    /// ℓ¹ periodic distance.
    pub fn dist(&self, a: usize, b: usize) -> usize {
        self.offset(a, b).iter().map(|x| x.unsigned_abs() as usize).sum()
    }

    /// |ξ| = ℓ¹ norm of the lattice point.
    pub fn norm(&self, site: usize) -> usize {
        self.point(site).iter().map(|x| x.unsigned_abs() as usize).sum()
    }

    /// nn(ξ) in the fixed order: ξ, ξ-e_1, ξ+e_1, …, ξ-e_d, ξ+e_d.
    pub fn neighbors(&self, site: usize) -> Nbrs {
        let l = self.side();
        let mut buf = [site; 7];
        let mut stride = 1;
        for k in (0..self.d).rev() {
            let c = (site / stride) % l;
            let base = site - c * stride;
            let dn = (c + l - 1) % l;
            let up = (c + 1) % l;
            buf[1 + 2 * k] = base + dn * stride;
            buf[2 + 2 * k] = base + up * stride;
            stride *= l;
        }
        Nbrs { buf, len: 2 * self.d + 1 }
    }

    /// Neighbor tables for all sites.
    pub fn neighbor_table(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|s| self.neighbors(s).to_vec()).collect()
    }
}

/// Fixed-capacity neighbor list (d ≤ 3).
#[derive(Debug, Clone, Copy)]
pub struct Nbrs {
    buf: [usize; 7],
    len: usize,
}

impl std::ops::Deref for Nbrs {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.buf[..self.len]
    }
}

/// A point ψ of (T²)^{V_N}.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatticeState {
    pub lattice: Lattice,
    pub psi: Vec<[f64; 2]>,
}

impl LatticeState {
    pub fn new(lattice: Lattice, psi: Vec<[f64; 2]>) -> Result<Self> {
        if psi.len() != lattice.len() {
            return Err(SrbError::InvalidState(format!(
                "expected {} sites, got {}",
                lattice.len(),
                psi.len()
            )));
        }
        if psi.iter().flatten().any(|x| !x.is_finite()) {
            return Err(SrbError::InvalidState("non-finite angle".into()));
        }
        let psi = psi.into_iter().map(|p| [wrap_angle(p[0]), wrap_angle(p[1])]).collect();
        Ok(LatticeState { lattice, psi })
    }

    pub fn uniform(lattice: Lattice, p: [f64; 2]) -> Self {
        LatticeState {
            lattice,
            psi: vec![[wrap_angle(p[0]), wrap_angle(p[1])]; lattice.len()],
        }
    }

    pub fn random<R: rand::Rng>(lattice: Lattice, rng: &mut R) -> Self {
        let psi = (0..lattice.len())
            .map(|_| [rng.gen::<f64>() * TAU, rng.gen::<f64>() * TAU])
            .collect();
        LatticeState { lattice, psi }
    }

    /// Lattice translation: (ρ^ξ ψ)_η = ψ_{η+ξ}.
    pub fn translate(&self, offset: &[i64]) -> Self {
        let lat = self.lattice;
        let psi = (0..lat.len()).map(|s| self.psi[lat.shift(s, offset)]).collect();
        LatticeState { lattice: lat, psi }
    }

    pub fn to_fixed(&self) -> Vec<[u64; 2]> {
        self.psi.iter().map(|&p| point_to_fixed(p)).collect()
    }

    pub fn from_fixed(lattice: Lattice, f: &[[u64; 2]]) -> Self {
        LatticeState {
            lattice,
            psi: f.iter().map(|&p| fixed_to_point(p)).collect(),
        }
    }

    /// Largest per-site torus distance.
    pub fn max_site_dist(&self, other: &LatticeState) -> f64 {
        self.psi
            .iter()
            .zip(&other.psi)
            .map(|(&a, &b)| torus_dist(a, b))
            .fold(0.0, f64::max)
    }
}

/// d(ψ,ψ') = Σ_ξ 2^{-|ξ|} d̂(ψ_ξ, ψ'_ξ).
pub fn metric(a: &LatticeState, b: &LatticeState) -> f64 {
    let lat = a.lattice;
    (0..lat.len())
        .map(|s| 0.5f64.powi(lat.norm(s) as i32) * torus_dist(a.psi[s], b.psi[s]))
        .sum()
}

/// S_0 sitewise.
pub fn free_map(state: &LatticeState) -> LatticeState {
    LatticeState {
        lattice: state.lattice,
        psi: state.psi.iter().map(|&p| apply_s0(p)).collect(),
    }
}

/// S_0^t sitewise, exact on the binary-fraction representation.
pub fn free_map_power(state: &LatticeState, t: i64) -> LatticeState {
    LatticeState {
        lattice: state.lattice,
        psi: state
            .psi
            .iter()
            .map(|&p| fixed_to_point(cat_power_fixed(point_to_fixed(p), t)))
            .collect(),
    }
}

/// Increment g(ρ^ξψ) = f^{ξ+} v_+ + f^{ξ-} v_- at one site.
pub fn coupling_increment(coupling: &dyn Coupling, lat: &Lattice, psi: &[[f64; 2]], site: usize) -> [f64; 2] {
    let vp = v_plus();
    let vm = v_minus();
    let fp = coupling.value(lat, psi, site, Alpha::Plus);
    let fm = if coupling.vanishes(Alpha::Minus) {
        0.0
    } else {
        coupling.value(lat, psi, site, Alpha::Minus)
    };
    [fp * vp[0] + fm * vm[0], fp * vp[1] + fm * vm[1]]
}

/// S_ε(ψ)_ξ = Aψ_ξ + ε g(ρ^ξψ) mod 2π; exact sitewise cat map when g ≡ 0 or ε = 0.
pub fn apply_s_eps(state: &LatticeState, coupling: &dyn Coupling, eps: f64) -> LatticeState {
    let lat = state.lattice;
    let free = eps == 0.0 || (coupling.vanishes(Alpha::Plus) && coupling.vanishes(Alpha::Minus));
    let mut psi = Vec::with_capacity(lat.len());
    for s in 0..lat.len() {
        let p = state.psi[s];
        let ap = [p[0] + p[1], p[0] + 2.0 * p[1]];
        if free {
            psi.push(apply_s0(p));
            continue;
        }
        let g = coupling_increment(coupling, &lat, &state.psi, s);
        psi.push([wrap_angle(ap[0] + eps * g[0]), wrap_angle(ap[1] + eps * g[1])]);
    }
    LatticeState { lattice: lat, psi }
}

/// In-place variant used by long orbit loops.
pub fn step_s_eps(lat: &Lattice, psi: &[[f64; 2]], out: &mut Vec<[f64; 2]>, coupling: &dyn Coupling, eps: f64) {
    out.clear();
    for s in 0..lat.len() {
        let p = psi[s];
        let mut x = [p[0] + p[1], p[0] + 2.0 * p[1]];
        if eps != 0.0 {
            let g = coupling_increment(coupling, lat, psi, s);
            x[0] += eps * g[0];
            x[1] += eps * g[1];
        }
        out.push([wrap_angle(x[0]), wrap_angle(x[1])]);
    }
}

/// Nonzero 2×2 blocks of DS_ε, block (ξ, η) for η ∈ nn(ξ).
#[derive(Debug, Clone)]
pub struct BlockJacobian {
    pub lattice: Lattice,
    /// For each row site ξ: list of (column site η, block).
    pub rows: Vec<Vec<(usize, [[f64; 2]; 2])>>,
}

impl BlockJacobian {
    pub fn nonzero_blocks(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn block(&self, xi: usize, eta: usize) -> [[f64; 2]; 2] {
        self.rows[xi]
            .iter()
            .find(|(c, _)| *c == eta)
            .map(|(_, b)| *b)
            .unwrap_or([[0.0; 2]; 2])
    }

    /// Dense 2|V|×2|V| matrix, rows/cols ordered (site, component).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.lattice.len();
        let mut m = nalgebra::DMatrix::<f64>::zeros(2 * n, 2 * n);
        for (xi, row) in self.rows.iter().enumerate() {
            for (eta, b) in row {
                for i in 0..2 {
                    for j in 0..2 {
                        m[(2 * xi + i, 2 * eta + j)] += b[i][j];
                    }
                }
            }
        }
        m
    }

    /// Dense minor restricted to the sites of `v0`.
    pub fn minor(&self, v0: &[usize]) -> nalgebra::DMatrix<f64> {
        let k = v0.len();
        let mut m = nalgebra::DMatrix::<f64>::zeros(2 * k, 2 * k);
        for (a, &xi) in v0.iter().enumerate() {
            for (eta, blk) in &self.rows[xi] {
                if let Some(b) = v0.iter().position(|s| s == eta) {
                    for i in 0..2 {
                        for j in 0..2 {
                            m[(2 * a + i, 2 * b + j)] += blk[i][j];
                        }
                    }
                }
            }
        }
        m
    }

    /// Apply to a tangent vector field (Cartesian components per site).
    pub fn apply(&self, u: &[[f64; 2]]) -> Vec<[f64; 2]> {
        self.rows
            .iter()
            .map(|row| {
                let mut acc = [0.0; 2];
                for (eta, b) in row {
                    let x = u[*eta];
                    acc[0] += b[0][0] * x[0] + b[0][1] * x[1];
                    acc[1] += b[1][0] * x[0] + b[1][1] * x[1];
                }
                acc
            })
            .collect()
    }
}

/// DS_ε at ψ.
pub fn differential_ds_eps(state: &LatticeState, coupling: &dyn Coupling, eps: f64) -> BlockJacobian {
    let lat = state.lattice;
    let vp = v_plus();
    let vm = v_minus();
    let a = [[1.0, 1.0], [1.0, 2.0]];
    let mut rows = Vec::with_capacity(lat.len());
    for xi in 0..lat.len() {
        let nn = lat.neighbors(xi);
        let mut row: Vec<(usize, [[f64; 2]; 2])> = Vec::with_capacity(nn.len());
        for &eta in nn.iter() {
            if row.iter().any(|(c, _)| *c == eta) {
                continue;
            }
            let mut b = if eta == xi { a } else { [[0.0; 2]; 2] };
            if eps != 0.0 {
                let gp = coupling.gradient(&lat, &state.psi, xi, Alpha::Plus, eta);
                let gm = if coupling.vanishes(Alpha::Minus) {
                    [0.0; 2]
                } else {
                    coupling.gradient(&lat, &state.psi, xi, Alpha::Minus, eta)
                };
                for i in 0..2 {
                    for j in 0..2 {
                        b[i][j] += eps * (vp[i] * gp[j] + vm[i] * gm[j]);
                    }
                }
            }
            row.push((eta, b));
        }
        rows.push(row);
    }
    BlockJacobian { lattice: lat, rows }
}

/// Coefficients of a Cartesian tangent field in the w_{0,±} basis: [c_+, c_-] per site.
pub fn to_w_basis(u: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let vp = v_plus();
    let vm = v_minus();
    u.iter()
        .map(|x| [x[0] * vp[0] + x[1] * vp[1], x[0] * vm[0] + x[1] * vm[1]])
        .collect()
}

/// Inverse of [`to_w_basis`].
pub fn from_w_basis(c: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let vp = v_plus();
    let vm = v_minus();
    c.iter()
        .map(|x| [x[0] * vp[0] + x[1] * vm[0], x[0] * vp[1] + x[1] * vm[1]])
        .collect()
}

/// Exact S_0 orbit of a state, cached around time 0.
#[derive(Debug, Clone)]
pub struct FreeOrbit {
    pub lattice: Lattice,
    base: Vec<[u64; 2]>,
    forward: Vec<Vec<[f64; 2]>>,
    backward: Vec<Vec<[f64; 2]>>,
    fwd_fixed: Vec<[u64; 2]>,
    bwd_fixed: Vec<[u64; 2]>,
}

impl FreeOrbit {
    pub fn new(state: &LatticeState) -> Self {
        let base = state.to_fixed();
        let p0: Vec<[f64; 2]> = base.iter().map(|&p| fixed_to_point(p)).collect();
        FreeOrbit {
            lattice: state.lattice,
            fwd_fixed: base.clone(),
            bwd_fixed: base.clone(),
            forward: vec![p0],
            backward: vec![],
            base,
        }
    }

    /// S_0^t ψ.
    pub fn at(&mut self, t: i64) -> &[[f64; 2]] {
        if t >= 0 {
            let t = t as usize;
            while self.forward.len() <= t {
                for p in self.fwd_fixed.iter_mut() {
                    *p = cat_fixed(*p);
                }
                self.forward.push(self.fwd_fixed.iter().map(|&p| fixed_to_point(p)).collect());
            }
            &self.forward[t]
        } else {
            let t = (-t) as usize;
            while self.backward.len() < t {
                for p in self.bwd_fixed.iter_mut() {
                    *p = cat_inv_fixed(*p);
                }
                self.backward.push(self.bwd_fixed.iter().map(|&p| fixed_to_point(p)).collect());
            }
            &self.backward[t - 1]
        }
    }

    pub fn base_fixed(&self) -> &[[u64; 2]] {
        &self.base
    }
}
