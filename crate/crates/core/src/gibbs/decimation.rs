//! Perron–Frobenius control of C^a, the decimated lattice Λ_D and the
//! effective potentials W_Y.

use super::geometry::Cell;
use crate::error::{Result, SrbError};
use crate::stats::fsum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;

type Mat = Vec<Vec<f64>>;

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect()).collect()
}

fn matpow(a: &Mat, p: usize) -> Mat {
    let n = a.len();
    let mut r: Mat = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..p {
        r = matmul(&r, a);
    }
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct PerronFrobenius {
    pub n: usize,
    pub a: usize,
    pub h0: usize,
    /// Leading eigenvalue of C^a.
    pub l: f64,
    /// Right eigenvector, Σ π = 1.
    pub pi: Vec<f64>,
    /// Left eigenvector, Σ π* π = 1.
    pub pi_star: Vec<f64>,
    /// −log(1 − m²) with m the smallest within-row ratio of entries of C^a.
    pub alpha: f64,
    /// q^{−2a}.
    pub alpha_bound: f64,
    pub ca: Mat,
    /// Z(β, β′) = (C^{a h0})_{ββ′}.
    pub z: Mat,
    /// I(β, β′).
    pub i_table: Mat,
}

impl PerronFrobenius {
    pub fn max_abs_i(&self) -> f64 {
        self.i_table.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Normalized B-spin weight e^{−U}/Σ e^{−U} at block index i of 0..=ℓ.
    pub fn b_weight(&self, i: usize, ell: usize, beta: u8) -> f64 {
        let b = beta as usize;
        if i == 0 {
            self.pi[b] / self.pi.iter().sum::<f64>()
        } else if i == ell {
            self.pi_star[b] / self.pi_star.iter().sum::<f64>()
        } else {
            self.pi[b] * self.pi_star[b]
        }
    }
}

/// l, π, π*, α and the two-body table I of C^a with blocks of h0 periods.
pub fn perron_frobenius(c: &[Vec<u8>], a: usize, h0: usize) -> Result<PerronFrobenius> {
    let n = c.len();
    if n == 0 || a == 0 || h0 == 0 {
        return Err(SrbError::InvalidConfig("perron_frobenius needs n, a, h0 ≥ 1".into()));
    }
    let cm: Mat = c.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let ca = matpow(&cm, a);
    if ca.iter().flatten().any(|&v| v <= 0.0) {
        return Err(SrbError::NotMixing { a });
    }
    let power = |m: &Mat, transpose: bool| -> Vec<f64> {
        let mut v = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut w: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| if transpose { m[j][i] * v[j] } else { m[i][j] * v[j] }).sum())
                .collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let diff = w.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            v = w;
            if diff == 0.0 {
                break;
            }
        }
        v
    };
    let pi = power(&ca, false);
    let mut pi_star = power(&ca, true);
    let l = fsum((0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| ca[i][j] * pi[j]));
    let dot: f64 = pi.iter().zip(&pi_star).map(|(x, y)| x * y).sum();
    pi_star.iter_mut().for_each(|x| *x /= dot);
    let mut ratio = f64::INFINITY;
    for row in &ca {
        let mx = row.iter().cloned().fold(f64::MIN, f64::max);
        let mn = row.iter().cloned().fold(f64::MAX, f64::min);
        ratio = ratio.min(mn / mx);
    }
    let alpha = -(1.0 - ratio * ratio).ln();
    let alpha_bound = (n as f64).powi(-2 * a as i32);
    // Deflated matrix D = C^a/l − π π*ᵀ; (l^{-1}C^a)^{h0} − ππ*ᵀ = D^{h0}.
    let d: Mat = (0..n).map(|i| (0..n).map(|j| ca[i][j] / l - pi[i] * pi_star[j]).collect()).collect();
    let dh = matpow(&d, h0);
    let i_table: Mat = (0..n).map(|b| (0..n).map(|bp| -(dh[b][bp] / (pi[b] * pi_star[bp])).ln_1p()).collect()).collect();
    let z = matpow(&ca, h0);
    Ok(PerronFrobenius { n, a, h0, l, pi, pi_star, alpha, alpha_bound, ca, z, i_table })
}

/// Block layout B_0, H_0, B_1, …, H_{ℓ−1}, B_ℓ on every column; cells have
/// times 0..=ℓ h0 a, B_i at t = i h0 a.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecimatedLattice {
    pub columns: usize,
    pub ell: usize,
    pub h0: usize,
    pub a: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    B(usize),
    H(usize),
}

impl DecimatedLattice {
    pub fn new(columns: usize, ell: usize, h0: usize, a: usize) -> Result<Self> {
        let dl = DecimatedLattice { columns, ell, h0, a };
        if columns == 0 || ell == 0 || h0 == 0 || a == 0 || h0 * a < 2 {
            return Err(SrbError::InvalidConfig("decimation needs columns, ℓ, h0, a ≥ 1 and h0·a ≥ 2".into()));
        }
        if dl.points() > 64 {
            return Err(SrbError::InvalidConfig(format!("|Λ_D| = {} exceeds 64", dl.points())));
        }
        Ok(dl)
    }

    /// h = h0 a − 1.
    pub fn h(&self) -> usize {
        self.h0 * self.a - 1
    }

    pub fn period(&self) -> usize {
        self.h0 * self.a
    }

    /// |I_T| = ℓ h0 a + 1.
    pub fn times(&self) -> usize {
        self.ell * self.period() + 1
    }

    /// |Λ| in cells.
    pub fn volume(&self) -> usize {
        self.columns * self.times()
    }

    fn per_column(&self) -> usize {
        2 * self.ell + 1
    }

    pub fn points(&self) -> usize {
        self.columns * self.per_column()
    }

    pub fn point(&self, col: usize, b: Block) -> usize {
        let tau = match b {
            Block::B(i) => 2 * i,
            Block::H(i) => 2 * i + 1,
        };
        col * self.per_column() + tau
    }

    pub fn block(&self, p: usize) -> (usize, Block) {
        let col = p / self.per_column();
        let tau = p % self.per_column();
        let b = if tau % 2 == 0 { Block::B(tau / 2) } else { Block::H(tau / 2) };
        (col, b)
    }

    pub fn block_of(&self, cell: Cell) -> usize {
        let t = cell.1 as usize;
        let per = self.period();
        let b = if t % per == 0 { Block::B(t / per) } else { Block::H(t / per) };
        self.point(cell.0, b)
    }

    pub fn cells(&self, p: usize) -> Vec<Cell> {
        let (col, b) = self.block(p);
        let per = self.period() as i64;
        match b {
            Block::B(i) => vec![(col, i as i64 * per)],
            Block::H(i) => (i as i64 * per + 1..(i as i64 + 1) * per).map(|t| (col, t)).collect(),
        }
    }

    pub fn closure_point(&self, p: usize) -> u64 {
        let (col, b) = self.block(p);
        match b {
            Block::B(_) => 1 << p,
            Block::H(i) => (1 << p) | (1 << self.point(col, Block::B(i))) | (1 << self.point(col, Block::B(i + 1))),
        }
    }

    pub fn closure(&self, mask: u64) -> u64 {
        let mut out = 0;
        for p in bits(mask) {
            out |= self.closure_point(p);
        }
        out
    }

    /// Y(X): the smallest set of blocks covering the cells.
    pub fn cover(&self, cells: &[Cell]) -> u64 {
        cells.iter().fold(0, |m, &c| m | (1 << self.block_of(c)))
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.columns && cell.1 >= 0 && (cell.1 as usize) < self.times()
    }
}

pub fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| mask >> i & 1 == 1)
}

/// Spin configuration σ_{(col, t)} on the whole window; entries outside the
/// blocks being summed are ignored.
pub type Spins = Vec<Vec<u8>>;

/// Potential φ_X tabulated on all σ_X, index Σ_k σ_k n^k over `cells` order.
#[derive(Debug, Clone, Serialize)]
pub struct LocalPotential {
    pub cells: Vec<Cell>,
    pub table: Vec<f64>,
}

impl LocalPotential {
    pub fn eval(&self, n: usize, spins: &Spins) -> f64 {
        let mut idx = 0usize;
        let mut mul = 1usize;
        for &(c, t) in &self.cells {
            idx += spins[c][t as usize] as usize * mul;
            mul *= n;
        }
        self.table[idx]
    }
}

/// Translation-invariant toy family: for every shape, one table of values in
/// [−amplitude, amplitude], placed at every position inside the window.
pub fn toy_potentials(dl: &DecimatedLattice, n: usize, amplitude: f64, seed: u64, shapes: &[Vec<(i64, i64)>]) -> Vec<LocalPotential> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for shape in shapes {
        let size = n.pow(shape.len() as u32);
        let table: Vec<f64> = (0..size).map(|_| amplitude * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        for col in 0..dl.columns {
            for t in 0..dl.times() as i64 {
                let cells: Vec<Cell> = shape
                    .iter()
                    .map(|&(dc, dt)| (((col as i64 + dc).rem_euclid(dl.columns as i64)) as usize, t + dt))
                    .collect();
                if cells.iter().all(|&c| dl.contains(c)) && (dl.columns > 1 || shape.iter().all(|s| s.0 == 0)) {
                    out.push(LocalPotential { cells, table: table.clone() });
                }
            }
        }
    }
    out
}

/// Singletons, time pairs at distances 1 and 2 and, for several columns, a
/// space pair.
pub fn default_toy_shapes(columns: usize) -> Vec<Vec<(i64, i64)>> {
    let mut s = vec![vec![(0, 0)], vec![(0, 0), (0, 1)], vec![(0, 0), (0, 2)]];
    if columns > 1 {
        s.push(vec![(0, 0), (1, 0)]);
    }
    s
}

/// One effective potential W_Y.
#[derive(Debug, Clone)]
pub struct WTerm {
    pub mask: u64,
    pub closure: u64,
    pub potentials: Vec<usize>,
    /// Column and index i of an I(β_i, β_{i+1}) bond.
    pub bonds: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct DecimatedSystem {
    pub dl: DecimatedLattice,
    pub compat: Vec<Vec<u8>>,
    pub pf: PerronFrobenius,
    pub potentials: Vec<LocalPotential>,
    pub w: Vec<WTerm>,
    /// Admissible η chains for each (β, β′).
    chains: Vec<Vec<Vec<Vec<u8>>>>,
}

/// Regroup φ_X by Y(X) into Φ_Y and add the I bonds, giving W_Y.
pub fn decimate(dl: DecimatedLattice, compat: &[Vec<u8>], potentials: Vec<LocalPotential>) -> Result<DecimatedSystem> {
    let pf = perron_frobenius(compat, dl.a, dl.h0)?;
    let n = compat.len();
    let mut groups: BTreeMap<u64, WTerm> = BTreeMap::new();
    for (k, p) in potentials.iter().enumerate() {
        if !p.cells.iter().all(|&c| dl.contains(c)) {
            return Err(SrbError::InvalidConfig(format!("potential support {:?} leaves the window", p.cells)));
        }
        if p.table.len() != n.pow(p.cells.len() as u32) {
            return Err(SrbError::InvalidConfig("potential table size mismatch".into()));
        }
        let y = dl.cover(&p.cells);
        groups.entry(y).or_insert_with(|| WTerm { mask: y, closure: dl.closure(y), potentials: vec![], bonds: vec![] }).potentials.push(k);
    }
    for col in 0..dl.columns {
        for i in 0..dl.ell {
            let y = (1 << dl.point(col, Block::B(i))) | (1 << dl.point(col, Block::B(i + 1)));
            groups.entry(y).or_insert_with(|| WTerm { mask: y, closure: dl.closure(y), potentials: vec![], bonds: vec![] }).bonds.push((col, i));
        }
    }
    let h = dl.h();
    let mut chains = vec![vec![Vec::new(); n]; n];
    let mut stack: Vec<u8> = Vec::with_capacity(h);
    fn rec(c: &[Vec<u8>], h: usize, start: u8, stack: &mut Vec<u8>, out: &mut [Vec<Vec<Vec<u8>>>]) {
        let last = *stack.last().unwrap_or(&start);
        if stack.len() == h {
            for (bp, slot) in out[start as usize].iter_mut().enumerate() {
                if c[last as usize][bp] == 1 {
                    slot.push(stack.clone());
                }
            }
            return;
        }
        for s in 0..c.len() as u8 {
            if c[last as usize][s as usize] == 1 {
                stack.push(s);
                rec(c, h, start, stack, out);
                stack.pop();
            }
        }
    }
    for b in 0..n as u8 {
        rec(compat, h, b, &mut stack, &mut chains);
    }
    Ok(DecimatedSystem { dl, compat: compat.to_vec(), pf, potentials, w: groups.into_values().collect(), chains })
}

impl DecimatedSystem {
    pub fn n(&self) -> usize {
        self.compat.len()
    }

    pub fn w_value(&self, term: &WTerm, spins: &Spins) -> f64 {
        let n = self.n();
        let per = self.dl.period();
        let mut v = 0.0;
        for &k in &term.potentials {
            v += self.potentials[k].eval(n, spins);
        }
        for &(col, i) in &term.bonds {
            let b = spins[col][i * per] as usize;
            let bp = spins[col][(i + 1) * per] as usize;
            v += self.pf.i_table[b][bp];
        }
        v
    }

    pub fn chains(&self, b: u8, bp: u8) -> &[Vec<u8>] {
        &self.chains[b as usize][bp as usize]
    }

    /// Number of spin assignments on the blocks of a closed mask.
    pub fn assignment_count(&self, mask: u64) -> f64 {
        let n = self.n() as f64;
        let mut c = 1.0;
        for p in bits(mask) {
            c *= match self.dl.block(p).1 {
                Block::B(_) => n,
                Block::H(_) => n.powi(self.dl.h() as i32),
            };
        }
        c
    }

    /// Visit every assignment of the blocks of a closed mask with its m weight.
    pub fn for_each_assignment<F: FnMut(&Spins, f64)>(&self, mask: u64, mut f: F) {
        let dl = self.dl;
        let mut spins: Spins = vec![vec![0; dl.times()]; dl.columns];
        let bs: Vec<usize> = bits(mask).filter(|&p| matches!(dl.block(p).1, Block::B(_))).collect();
        let hs: Vec<usize> = bits(mask).filter(|&p| matches!(dl.block(p).1, Block::H(_))).collect();
        self.rec_b(&bs, &hs, 0, 1.0, &mut spins, &mut f);
    }

    fn rec_b<F: FnMut(&Spins, f64)>(&self, bs: &[usize], hs: &[usize], k: usize, w: f64, spins: &mut Spins, f: &mut F) {
        let dl = self.dl;
        if k == bs.len() {
            self.rec_h(hs, 0, w, spins, f);
            return;
        }
        let (col, b) = dl.block(bs[k]);
        let Block::B(i) = b else { unreachable!() };
        for beta in 0..self.n() as u8 {
            spins[col][i * dl.period()] = beta;
            let wb = self.pf.b_weight(i, dl.ell, beta);
            self.rec_b(bs, hs, k + 1, w * wb, spins, f);
        }
    }

    fn rec_h<F: FnMut(&Spins, f64)>(&self, hs: &[usize], k: usize, w: f64, spins: &mut Spins, f: &mut F) {
        let dl = self.dl;
        if k == hs.len() {
            f(spins, w);
            return;
        }
        let (col, b) = dl.block(hs[k]);
        let Block::H(i) = b else { unreachable!() };
        let per = dl.period();
        let beta = spins[col][i * per];
        let beta2 = spins[col][(i + 1) * per];
        let zbb = self.pf.z[beta as usize][beta2 as usize];
        for eta in &self.chains[beta as usize][beta2 as usize] {
            spins[col][i * per + 1..(i + 1) * per].copy_from_slice(eta);
            self.rec_h(hs, k + 1, w / zbb, spins, f);
        }
    }

    /// log Z = log Σ_{admissible σ} exp(−Σ_X φ_X(σ_X)) by exhaustive summation.
    pub fn brute_log_z(&self, limit: usize) -> Result<f64> {
        let dl = self.dl;
        let n = self.n();
        let mut per_col: Vec<Vec<u8>> = Vec::new();
        let mut stack = Vec::with_capacity(dl.times());
        fn rec(c: &[Vec<u8>], len: usize, stack: &mut Vec<u8>, out: &mut Vec<Vec<u8>>, limit: usize) -> bool {
            if out.len() > limit {
                return false;
            }
            if stack.len() == len {
                out.push(stack.clone());
                return true;
            }
            for s in 0..c.len() as u8 {
                if stack.last().map_or(true, |&l| c[l as usize][s as usize] == 1) {
                    stack.push(s);
                    if !rec(c, len, stack, out, limit) {
                        return false;
                    }
                    stack.pop();
                }
            }
            true
        }
        if !rec(&self.compat, dl.times(), &mut stack, &mut per_col, limit) {
            return Err(SrbError::TooManyPolymers { count: per_col.len(), limit });
        }
        let total = (per_col.len() as f64).powi(dl.columns as i32);
        if total > limit as f64 {
            return Err(SrbError::TooManyPolymers { count: total as usize, limit });
        }
        let mut terms = Vec::with_capacity(total as usize);
        let mut idx = vec![0usize; dl.columns];
        let mut spins: Spins = vec![vec![0; dl.times()]; dl.columns];
        let _ = n;
        loop {
            for (c, &i) in idx.iter().enumerate() {
                spins[c].copy_from_slice(&per_col[i]);
            }
            let e: f64 = self.potentials.iter().map(|p| p.eval(self.n(), &spins)).sum();
            terms.push((-e).exp());
            let mut k = 0;
            loop {
                if k == dl.columns {
                    return Ok(fsum(terms).ln());
                }
                idx[k] += 1;
                if idx[k] < per_col.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// |V| ℓ h0 log l + |V| log(Σπ · Σπ*): the part of log Z carried by the
    /// decimation before the polymer gas.
    pub fn log_z_free(&self) -> f64 {
        let dl = self.dl;
        let z0: f64 = self.pf.pi.iter().sum();
        let zl: f64 = self.pf.pi_star.iter().sum();
        dl.columns as f64 * (dl.ell as f64 * dl.h0 as f64 * self.pf.l.ln() + (z0 * zl).ln())
    }
}
