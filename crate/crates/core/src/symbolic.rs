//! Markov partition for the cat map, symbolic coding and the restriction
//! σ ↦ σ^j.
//!
//! Rectangles live in the scaled eigen-coordinates U = x + φy, S = φx − y of the
//! unit torus (x, y) = ψ/2π. A acts as U ↦ λ_+ U, S ↦ λ_- S and the integer
//! lattice maps to Z(1, φ) + Z(φ, −1), so every corner is exact in Z[φ].

use crate::error::{Result, SrbError};
use crate::lattice::{cat_power_fixed, point_to_fixed, Lattice, LatticeState, PHI};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// a + bφ with integer a, b.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Zphi {
    pub a: i64,
    pub b: i64,
}

impl Zphi {
    pub const ZERO: Zphi = Zphi { a: 0, b: 0 };
    pub const ONE: Zphi = Zphi { a: 1, b: 0 };
    pub const PHI: Zphi = Zphi { a: 0, b: 1 };
    /// λ_+ = φ².
    pub const LAMBDA_PLUS: Zphi = Zphi { a: 1, b: 1 };
    /// λ_- = 2 − φ.
    pub const LAMBDA_MINUS: Zphi = Zphi { a: 2, b: -1 };

    pub const fn new(a: i64, b: i64) -> Self {
        Zphi { a, b }
    }

    pub fn to_f64(self) -> f64 {
        // a + bφ = (2a + b + b√5)/2; avoid cancellation for moderate a, b.
        self.a as f64 + self.b as f64 * PHI
    }

    /// Sign of a + bφ, exactly.
    pub fn signum(self) -> i32 {
        let p = 2 * self.a as i128 + self.b as i128;
        let q = self.b as i128;
        let sp = p.signum() as i32;
        let sq = q.signum() as i32;
        if sp >= 0 && sq >= 0 {
            return if sp == 0 && sq == 0 { 0 } else { 1 };
        }
        if sp <= 0 && sq <= 0 {
            return -1;
        }
        // p + q√5 with opposite signs.
        match (p * p).cmp(&(5 * q * q)) {
            Ordering::Greater => sp,
            Ordering::Less => sq,
            Ordering::Equal => 0,
        }
    }
}

impl Add for Zphi {
    type Output = Zphi;
    fn add(self, o: Zphi) -> Zphi {
        Zphi::new(self.a + o.a, self.b + o.b)
    }
}

impl Sub for Zphi {
    type Output = Zphi;
    fn sub(self, o: Zphi) -> Zphi {
        Zphi::new(self.a - o.a, self.b - o.b)
    }
}

impl Neg for Zphi {
    type Output = Zphi;
    fn neg(self) -> Zphi {
        Zphi::new(-self.a, -self.b)
    }
}

impl Mul for Zphi {
    type Output = Zphi;
    fn mul(self, o: Zphi) -> Zphi {
        // φ² = φ + 1
        let bd = self.b * o.b;
        Zphi::new(self.a * o.a + bd, self.a * o.b + self.b * o.a + bd)
    }
}

impl PartialOrd for Zphi {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Zphi {
    fn cmp(&self, other: &Self) -> Ordering {
        (*self - *other).signum().cmp(&0)
    }
}

impl fmt::Display for Zphi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.a, self.b) {
            (a, 0) => write!(f, "{a}"),
            (0, b) => write!(f, "{b}φ"),
            (a, b) if b < 0 => write!(f, "{a}-{}φ", -b),
            (a, b) => write!(f, "{a}+{b}φ"),
        }
    }
}

/// U, S coordinates of the lattice vector (p, q) ∈ Z².
fn lattice_vec(p: i64, q: i64) -> (Zphi, Zphi) {
    (Zphi::new(p, q), Zphi::new(-q, p))
}

/// Axis-aligned rectangle in (U, S): [u0, u1) × [s0, s1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rect {
    pub u: [Zphi; 2],
    pub s: [Zphi; 2],
}

impl Rect {
    fn intersect(&self, o: &Rect) -> Option<Rect> {
        let u0 = self.u[0].max(o.u[0]);
        let u1 = self.u[1].min(o.u[1]);
        let s0 = self.s[0].max(o.s[0]);
        let s1 = self.s[1].min(o.s[1]);
        (u0 < u1 && s0 < s1).then_some(Rect { u: [u0, u1], s: [s0, s1] })
    }

    fn translate(&self, du: Zphi, ds: Zphi) -> Rect {
        Rect { u: [self.u[0] + du, self.u[1] + du], s: [self.s[0] + ds, self.s[1] + ds] }
    }

    fn image(&self) -> Rect {
        Rect {
            u: [self.u[0] * Zphi::LAMBDA_PLUS, self.u[1] * Zphi::LAMBDA_PLUS],
            s: [self.s[0] * Zphi::LAMBDA_MINUS, self.s[1] * Zphi::LAMBDA_MINUS],
        }
    }

    fn preimage(&self) -> Rect {
        Rect {
            u: [self.u[0] * Zphi::LAMBDA_MINUS, self.u[1] * Zphi::LAMBDA_MINUS],
            s: [self.s[0] * Zphi::LAMBDA_PLUS, self.s[1] * Zphi::LAMBDA_PLUS],
        }
    }

    /// Area in (U, S) units, exact.
    pub fn area(&self) -> Zphi {
        (self.u[1] - self.u[0]) * (self.s[1] - self.s[0])
    }

    /// Corner (U, S) = (u0, s0) in standard torus coordinates x, y ∈ R (not reduced).
    pub fn corner_xy(&self) -> [f64; 2] {
        scaled_to_xy(self.u[0].to_f64(), self.s[0].to_f64())
    }
}

/// 1/(1 + φ²) = 1/(φ + 2).
fn inv_det() -> f64 {
    1.0 / (PHI + 2.0)
}

fn scaled_to_xy(u: f64, s: f64) -> [f64; 2] {
    [(u + PHI * s) * inv_det(), (PHI * u - s) * inv_det()]
}

fn xy_to_scaled(x: f64, y: f64) -> (f64, f64) {
    (x + PHI * y, PHI * x - y)
}

/// One partition element with its provenance: base square `i`, image square `j`
/// and the lattice translation used in the refinement.
#[derive(Debug, Clone, Serialize)]
pub struct Rectangle {
    pub rect: Rect,
    pub base: usize,
    pub target: usize,
    pub shift: [i64; 2],
}

/// Refined Adler–Weiss partition together with the transition structure.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovPartition {
    pub rectangles: Vec<Rectangle>,
    /// Lattice offset n_kl with A Q_k ∩ (Q_l + n_kl) of positive area.
    offsets: Vec<Vec<Option<[i64; 2]>>>,
    pub compat: CompatibilityMatrix,
    /// Reference digit: constant σ̂.
    pub reference: Reference,
}

/// σ̂ as an eventually periodic column: `cycle` repeated, with σ̂_t = cycle[t mod len].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reference {
    pub cycle: Vec<u8>,
}

impl Reference {
    pub fn at(&self, t: i64) -> u8 {
        let n = self.cycle.len() as i64;
        self.cycle[t.rem_euclid(n) as usize]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityMatrix {
    pub c: Vec<Vec<u8>>,
    /// Smallest a with C^a > 0 entrywise.
    pub a: usize,
    /// Σ(s, s′): admissible strings of length a − 1 joining s to s′.
    pub connectors: Vec<Vec<Vec<u8>>>,
}

impl CompatibilityMatrix {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn allowed(&self, s: u8, t: u8) -> bool {
        self.c[s as usize][t as usize] == 1
    }

    pub fn is_admissible(&self, w: &[u8]) -> bool {
        w.iter().all(|&s| (s as usize) < self.n()) && w.windows(2).all(|p| self.allowed(p[0], p[1]))
    }

    pub fn first_violation(&self, w: &[u8]) -> Option<usize> {
        w.windows(2).position(|p| !self.allowed(p[0], p[1]))
    }

    pub fn connector(&self, s: u8, t: u8) -> &[u8] {
        &self.connectors[s as usize][t as usize]
    }

    fn from_matrix(c: Vec<Vec<u8>>) -> Result<Self> {
        let n = c.len();
        let mul = |x: &Vec<Vec<u64>>, y: &Vec<Vec<u8>>| -> Vec<Vec<u64>> {
            (0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j] as u64).sum::<u64>().min(1 << 40)).collect())
                .collect()
        };
        let mut p: Vec<Vec<u64>> = c.iter().map(|r| r.iter().map(|&v| v as u64).collect()).collect();
        let mut a = 1;
        while !p.iter().all(|r| r.iter().all(|&v| v > 0)) {
            if a > n * n + 1 {
                return Err(SrbError::NotMixing { a });
            }
            p = mul(&p, &c);
            a += 1;
        }
        let connectors = (0..n as u8).map(|s| (0..n as u8).map(|t| bfs_connector(&c, s, t, a - 1)).collect()).collect();
        Ok(CompatibilityMatrix { c, a, connectors })
    }

    /// Lexicographically smallest self-compatible digit, else smallest 2-cycle.
    fn reference(&self) -> Reference {
        let n = self.n() as u8;
        if let Some(s) = (0..n).find(|&s| self.allowed(s, s)) {
            return Reference { cycle: vec![s] };
        }
        for s in 0..n {
            for t in 0..n {
                if self.allowed(s, t) && self.allowed(t, s) {
                    return Reference { cycle: vec![s, t] };
                }
            }
        }
        // a mixing matrix always has a cycle; fall back to the shortest one through digit 0
        let mut cycle = vec![0u8];
        let back = bfs_path(&self.c, 0, 0);
        cycle.extend(back);
        Reference { cycle }
    }
}

/// Lexicographically smallest admissible interior string of length `len`
/// joining s and t (s w t admissible).
fn bfs_connector(c: &[Vec<u8>], s: u8, t: u8, len: usize) -> Vec<u8> {
    // Layered search: reachable[i][x] = x can end in t after len − i further steps.
    let n = c.len();
    let mut can = vec![vec![false; n]; len + 1];
    for (x, slot) in can[len].iter_mut().enumerate() {
        *slot = c[x][t as usize] == 1;
    }
    for i in (0..len).rev() {
        for x in 0..n {
            can[i][x] = (0..n).any(|y| c[x][y] == 1 && can[i + 1][y]);
        }
    }
    let mut out = Vec::with_capacity(len);
    let mut cur = s as usize;
    for i in 1..=len {
        let next = (0..n).find(|&y| c[cur][y] == 1 && can[i][y]).expect("connector exists when C^a > 0");
        out.push(next as u8);
        cur = next;
    }
    out
}

fn bfs_path(c: &[Vec<u8>], s: u8, t: u8) -> Vec<u8> {
    let n = c.len();
    let mut prev = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for y in 0..n {
        if c[s as usize][y] == 1 && prev[y] == usize::MAX {
            prev[y] = n;
            q.push_back(y);
        }
    }
    while let Some(x) = q.pop_front() {
        if x == t as usize {
            break;
        }
        for y in 0..n {
            if c[x][y] == 1 && prev[y] == usize::MAX {
                prev[y] = x;
                q.push_back(y);
            }
        }
    }
    let mut path = vec![];
    let mut cur = t as usize;
    while prev[cur] != n {
        path.push(cur as u8);
        cur = prev[cur];
    }
    path.push(cur as u8);
    path.reverse();
    path.pop();
    path
}

const SHIFT_RANGE: i64 = 4;

/// Build the refined partition, C, a, connectors and σ̂.
pub fn build_cat_partition() -> MarkovPartition {
    MarkovPartition::build().expect("cat-map partition construction is deterministic")
}

impl MarkovPartition {
    fn build() -> Result<Self> {
        let base = [
            Rect { u: [Zphi::ZERO, Zphi::PHI], s: [Zphi::ZERO, Zphi::PHI] },
            Rect { u: [-Zphi::ONE, Zphi::ZERO], s: [Zphi::ZERO, Zphi::ONE] },
        ];
        let mut rectangles = Vec::new();
        for (i, bi) in base.iter().enumerate() {
            for (j, bj) in base.iter().enumerate() {
                let pre = bj.preimage();
                for p in -SHIFT_RANGE..=SHIFT_RANGE {
                    for q in -SHIFT_RANGE..=SHIFT_RANGE {
                        let (du, ds) = lattice_vec(p, q);
                        if let Some(r) = bi.intersect(&pre.translate(du, ds)) {
                            rectangles.push(Rectangle { rect: r, base: i, target: j, shift: [p, q] });
                        }
                    }
                }
            }
        }
        let n = rectangles.len();
        let mut c = vec![vec![0u8; n]; n];
        let mut offsets = vec![vec![None; n]; n];
        for k in 0..n {
            let img = rectangles[k].rect.image();
            for l in 0..n {
                for p in -3 * SHIFT_RANGE..=3 * SHIFT_RANGE {
                    for q in -3 * SHIFT_RANGE..=3 * SHIFT_RANGE {
                        let (du, ds) = lattice_vec(p, q);
                        if img.intersect(&rectangles[l].rect.translate(du, ds)).is_some() {
                            if offsets[k][l].is_some() {
                                return Err(SrbError::InvalidConfig(format!("transition {k}->{l} crosses twice")));
                            }
                            offsets[k][l] = Some([p, q]);
                            c[k][l] = 1;
                        }
                    }
                }
            }
        }
        let compat = CompatibilityMatrix::from_matrix(c)?;
        let reference = compat.reference();
        Ok(MarkovPartition { rectangles, offsets, compat, reference })
    }

    pub fn n(&self) -> usize {
        self.rectangles.len()
    }

    pub fn a(&self) -> usize {
        self.compat.a
    }

    /// Area of every rectangle as a fraction of the torus, exact numerator
    /// (divide by φ + 2).
    pub fn areas(&self) -> Vec<Zphi> {
        self.rectangles.iter().map(|r| r.rect.area()).collect()
    }

    /// Areas in (2π)² units.
    pub fn areas_torus(&self) -> Vec<f64> {
        self.areas().iter().map(|a| a.to_f64() * inv_det() * TAU * TAU).collect()
    }

    /// Lattice offset of the transition k → l.
    pub fn offset(&self, k: usize, l: usize) -> Option<[i64; 2]> {
        self.offsets[k][l]
    }

    /// Geometric Markov check: A Q_k crosses each Q_l + n_kl fully along U and
    /// lies inside it along S.
    pub fn markov_property_holds(&self) -> bool {
        (0..self.n()).all(|k| {
            let img = self.rectangles[k].rect.image();
            (0..self.n()).all(|l| match self.offsets[k][l] {
                None => true,
                Some([p, q]) => {
                    let (du, ds) = lattice_vec(p, q);
                    let t = self.rectangles[l].rect.translate(du, ds);
                    img.u[0] <= t.u[0] && img.u[1] >= t.u[1] && img.s[0] >= t.s[0] && img.s[1] <= t.s[1]
                }
            })
        })
    }

    /// Rectangle containing a unit-torus point and its distance (in U, S units)
    /// to that rectangle's boundary.
    fn locate_unit(&self, x: f64, y: f64) -> Option<(u8, f64)> {
        let (u, s) = xy_to_scaled(x, y);
        let mut best: Option<(u8, f64)> = None;
        for (k, r) in self.rectangles.iter().enumerate() {
            let (u0, u1) = (r.rect.u[0].to_f64(), r.rect.u[1].to_f64());
            let (s0, s1) = (r.rect.s[0].to_f64(), r.rect.s[1].to_f64());
            for p in -3..=3 {
                for q in -3..=3 {
                    let uu = u - (p as f64 + q as f64 * PHI);
                    let ss = s - (p as f64 * PHI - q as f64);
                    if uu >= u0 && uu < u1 && ss >= s0 && ss < s1 {
                        let dist = (uu - u0).min(u1 - uu).min(ss - s0).min(s1 - ss);
                        if best.map_or(true, |(_, d)| dist > d) {
                            best = Some((k as u8, dist));
                        }
                    }
                }
            }
        }
        best
    }

    /// Digit of a torus point (angles), with the margin check.
    pub fn symbol_of(&self, p: [f64; 2], margin: f64, time: i64) -> Result<u8> {
        let f = point_to_fixed(p);
        self.symbol_of_fixed(f, margin, time)
    }

    fn symbol_of_fixed(&self, f: [u64; 2], margin: f64, time: i64) -> Result<u8> {
        const TWO64: f64 = 18_446_744_073_709_551_616.0;
        let x = f[0] as f64 / TWO64;
        let y = f[1] as f64 / TWO64;
        match self.locate_unit(x, y) {
            Some((k, d)) if d == 0.0 || d >= margin => Ok(k),
            Some((_, d)) => Err(SrbError::BoundaryAmbiguous { time, distance: d }),
            None => Err(SrbError::BoundaryAmbiguous { time, distance: 0.0 }),
        }
    }

    /// (σ_{−m}, …, σ_m) for the S_0 orbit of p.
    pub fn encode(&self, p: [f64; 2], m: usize, margin: f64) -> Result<Vec<u8>> {
        let f = point_to_fixed(p);
        let m = m as i64;
        let mut out = Vec::with_capacity(2 * m as usize + 1);
        let mut cur = cat_power_fixed(f, -m);
        for t in -m..=m {
            out.push(self.symbol_of_fixed(cur, margin, t)?);
            cur = cat_power_fixed(cur, 1);
        }
        Ok(out)
    }

    /// Point coded by `word`, where `word[center]` is the digit at time 0.
    /// Both ends are continued by a connector and `tail` digits of σ̂.
    pub fn decode_at(&self, word: &[u8], center: usize, tail: usize) -> Result<[f64; 2]> {
        self.validate(word, center)?;
        let a = self.a() as i64;
        let t_lo = -(center as i64);
        let t_hi = t_lo + word.len() as i64 - 1;
        // Extended word indexed by time.
        let mut ext: Vec<u8> = Vec::new();
        let left_ref = t_lo - a;
        let left_start = left_ref - tail as i64 + 1;
        for t in left_start..=left_ref {
            ext.push(self.reference.at(t));
        }
        ext.extend_from_slice(self.compat.connector(self.reference.at(left_ref), word[0]));
        ext.extend_from_slice(word);
        let right_ref = t_hi + a;
        ext.extend_from_slice(self.compat.connector(word[word.len() - 1], self.reference.at(right_ref)));
        for t in right_ref..right_ref + tail as i64 {
            ext.push(self.reference.at(t));
        }
        let zero = tail + self.a() - 1 + center;
        debug_assert_eq!(ext[zero], word[center]);
        Ok(self.decode_exact(&ext, zero))
    }

    /// Nested-interval decode of the word alone (midpoint of the coded box).
    pub fn decode(&self, word: &[u8], center: usize) -> Result<[f64; 2]> {
        self.validate(word, center)?;
        Ok(self.decode_exact(word, center))
    }

    fn validate(&self, word: &[u8], center: usize) -> Result<()> {
        if word.is_empty() || center >= word.len() {
            return Err(SrbError::InadmissibleString { position: 0, from: 0, to: 0 });
        }
        if let Some(&bad) = word.iter().find(|&&s| s as usize >= self.n()) {
            return Err(SrbError::InadmissibleString { position: 0, from: bad as usize, to: bad as usize });
        }
        if let Some(i) = self.compat.first_violation(word) {
            return Err(SrbError::InadmissibleString { position: i as i64, from: word[i] as usize, to: word[i + 1] as usize });
        }
        Ok(())
    }

    fn decode_exact(&self, w: &[u8], zero: usize) -> [f64; 2] {
        let rect = |k: u8| &self.rectangles[k as usize].rect;
        let off = |k: u8, l: u8| {
            let [p, q] = self.offsets[k as usize][l as usize].expect("admissible");
            (p as f64 + q as f64 * PHI, p as f64 * PHI - q as f64)
        };
        // Future digits pin U: walk backward from the last digit.
        let last = w.len() - 1;
        let r = rect(w[last]);
        let (mut lo, mut hi) = (r.u[0].to_f64(), r.u[1].to_f64());
        for i in (zero..last).rev() {
            let (du, _) = off(w[i], w[i + 1]);
            let r = rect(w[i]);
            lo = ((lo + du) / (PHI + 1.0)).max(r.u[0].to_f64());
            hi = ((hi + du) / (PHI + 1.0)).min(r.u[1].to_f64());
        }
        let u = 0.5 * (lo + hi);
        // Past digits pin S: walk forward from the first digit.
        let r = rect(w[0]);
        let (mut lo, mut hi) = (r.s[0].to_f64(), r.s[1].to_f64());
        for i in 0..zero {
            let (_, ds) = off(w[i], w[i + 1]);
            let r = rect(w[i + 1]);
            let lam = 2.0 - PHI;
            lo = (lo * lam - ds).max(r.s[0].to_f64());
            hi = (hi * lam - ds).min(r.s[1].to_f64());
        }
        let s = 0.5 * (lo + hi);
        let [x, y] = scaled_to_xy(u, s);
        [crate::lattice::wrap_angle(x * TAU), crate::lattice::wrap_angle(y * TAU)]
    }

    /// Structured text rendition of the partition.
    pub fn artifact_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# cat-map Markov partition\n");
        s.push_str("# coordinates: U = x + phi*y, S = phi*x - y on the unit torus; rectangles are [u0,u1) x [s0,s1)\n");
        s.push_str("# corner_xy = standard coordinates (x, y) of (u0, s0), exact as (u0 + phi*s0)/(phi+2), (phi*u0 - s0)/(phi+2)\n");
        s.push_str(&format!("n = {}\n", self.n()));
        s.push_str(&format!("a = {}\n", self.a()));
        for (k, r) in self.rectangles.iter().enumerate() {
            let q = &r.rect;
            let c = q.corner_xy();
            let du = q.u[1] - q.u[0];
            let dsl = q.s[1] - q.s[0];
            s.push_str(&format!(
                "rect {k}: U=[{}, {}) S=[{}, {}) | U=[{:.15}, {:.15}) S=[{:.15}, {:.15}) | corner_xy=({:.15}, {:.15}) edges_US=({du}, {dsl}) area=({})/(phi+2)={:.15}\n",
                q.u[0],
                q.u[1],
                q.s[0],
                q.s[1],
                q.u[0].to_f64(),
                q.u[1].to_f64(),
                q.s[0].to_f64(),
                q.s[1].to_f64(),
                c[0],
                c[1],
                q.area(),
                q.area().to_f64() * inv_det(),
            ));
        }
        s.push_str("C =\n");
        for row in &self.compat.c {
            s.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
            s.push('\n');
        }
        s.push_str(&format!(
            "reference = {}\n",
            self.reference.cycle.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        ));
        s.push_str("connectors:\n");
        for i in 0..self.n() {
            for j in 0..self.n() {
                let w = self.compat.connector(i as u8, j as u8);
                s.push_str(&format!(
                    "  {i} -> {j}: [{}]\n",
                    w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
                ));
            }
        }
        s
    }

    /// Restriction σ ↦ σ^j: keep |t| ≤ j, connectors on j < |t| < j + a,
    /// σ̂ beyond.
    pub fn restrict_sigma(&self, field: &SymbolField, j: usize) -> SymbolField {
        let mut out = field.clone();
        let j = j as i64;
        let a = self.a() as i64;
        for site in 0..field.lattice.len() {
            let col = |t: i64| field.get(site, t);
            let mut newcol: Vec<u8> = Vec::with_capacity(field.width());
            for t in field.t_min..=field.t_max {
                let v = if t.abs() <= j {
                    col(t)
                } else if t.abs() >= j + a {
                    self.reference.at(t)
                } else if t > 0 {
                    // σ_j, Σ(σ_j, σ̂_{j+a}), σ̂_{j+a}
                    let from = field_or_reference(field, &self.reference, site, j);
                    self.compat.connector(from, self.reference.at(j + a))[(t - j - 1) as usize]
                } else {
                    let to = field_or_reference(field, &self.reference, site, -j);
                    self.compat.connector(self.reference.at(-j - a), to)[(t + j + a - 1) as usize]
                };
                newcol.push(v);
            }
            for (i, t) in (field.t_min..=field.t_max).enumerate() {
                out.set(site, t, newcol[i]);
            }
        }
        out
    }

    /// Per-site decode of a symbol field at time 0.
    pub fn lattice_code(&self, field: &SymbolField, tail: usize) -> Result<LatticeState> {
        if !(field.t_min..=field.t_max).contains(&0) {
            return Err(SrbError::InvalidState("symbol window must contain time 0".into()));
        }
        let center = (-field.t_min) as usize;
        let psi = (0..field.lattice.len())
            .map(|site| self.decode_at(field.column(site), center, tail))
            .collect::<Result<Vec<_>>>()?;
        LatticeState::new(field.lattice, psi)
    }

    /// Per-site encode of a state over [−m, m].
    pub fn encode_state(&self, state: &LatticeState, m: usize, margin: f64) -> Result<SymbolField> {
        let lat = state.lattice;
        let mut symbols = Vec::with_capacity(lat.len() * (2 * m + 1));
        for p in &state.psi {
            symbols.extend(self.encode(*p, m, margin)?);
        }
        Ok(SymbolField { lattice: lat, t_min: -(m as i64), t_max: m as i64, symbols, reference: self.reference.clone() })
    }
}

fn field_or_reference(field: &SymbolField, r: &Reference, site: usize, t: i64) -> u8 {
    if (field.t_min..=field.t_max).contains(&t) {
        field.get(site, t)
    } else {
        r.at(t)
    }
}

/// Symbols σ_{(ξ,t)} on V_N × [t_min, t_max], column-major by site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolField {
    pub lattice: Lattice,
    pub t_min: i64,
    pub t_max: i64,
    symbols: Vec<u8>,
    pub reference: Reference,
}

impl SymbolField {
    pub fn new(lattice: Lattice, t_min: i64, t_max: i64, symbols: Vec<u8>, reference: Reference) -> Result<Self> {
        if t_max < t_min || symbols.len() != lattice.len() * (t_max - t_min + 1) as usize {
            return Err(SrbError::InvalidState("symbol field shape mismatch".into()));
        }
        Ok(SymbolField { lattice, t_min, t_max, symbols, reference })
    }

    /// Constant reference field.
    pub fn reference_field(lattice: Lattice, t_min: i64, t_max: i64, reference: &Reference) -> Self {
        let col: Vec<u8> = (t_min..=t_max).map(|t| reference.at(t)).collect();
        let symbols = (0..lattice.len()).flat_map(|_| col.iter().copied()).collect();
        SymbolField { lattice, t_min, t_max, symbols, reference: reference.clone() }
    }

    pub fn width(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn get(&self, site: usize, t: i64) -> u8 {
        self.symbols[site * self.width() + (t - self.t_min) as usize]
    }

    pub fn set(&mut self, site: usize, t: i64, v: u8) {
        let w = self.width();
        self.symbols[site * w + (t - self.t_min) as usize] = v;
    }

    pub fn column(&self, site: usize) -> &[u8] {
        let w = self.width();
        &self.symbols[site * w..(site + 1) * w]
    }

    pub fn is_admissible(&self, c: &CompatibilityMatrix) -> bool {
        (0..self.lattice.len()).all(|s| c.is_admissible(self.column(s)))
    }

    /// Time shift by τ: the window moves, symbols stay (σ′_t = σ_{t+τ}).
    pub fn time_shift(&self, tau: i64) -> Self {
        let mut out = self.clone();
        out.t_min -= tau;
        out.t_max -= tau;
        out
    }

    /// Random admissible field: each column is a Markov chain on C started
    /// uniformly.
    pub fn random<R: rand::Rng>(lattice: Lattice, t_min: i64, t_max: i64, part: &MarkovPartition, rng: &mut R) -> Self {
        let width = (t_max - t_min + 1) as usize;
        let n = part.n();
        let mut symbols = Vec::with_capacity(lattice.len() * width);
        for _ in 0..lattice.len() {
            let mut cur = rng.gen_range(0..n) as u8;
            symbols.push(cur);
            for _ in 1..width {
                let succ: Vec<u8> = (0..n as u8).filter(|&t| part.compat.allowed(cur, t)).collect();
                cur = succ[rng.gen_range(0..succ.len())];
                symbols.push(cur);
            }
        }
        SymbolField { lattice, t_min, t_max, symbols, reference: part.reference.clone() }
    }
}
