//! Finitely supported potentials φ_X built from the expansion of Λ^ξ.
//!
//! δΛ^ξ_(1) and δΛ^ξ_(2) are written as sums of monomials c·Π_i a_i, where
//! every atom a_i is a mixed partial of f at a single site and a single time.
//! Each atom is telescoped on its own cylinder nn(site) × [t−j, t+j]; the
//! product pieces have unions of cylinders as supports.

use super::geometry::{normalize, translate, Cell, SupportGeometry};
use crate::coupling::{derivative, Coupling};
use crate::error::{Result, SrbError};
use crate::lattice::{self, Alpha, FreeOrbit, Lattice, LatticeState};
use crate::stats::ols;
use crate::symbolic::{MarkovPartition, SymbolField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::io::Write;

/// f^{(site,α), dirs}(S_0^time ψ).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub site: usize,
    pub alpha: Alpha,
    pub dirs: Vec<(usize, Alpha)>,
    pub time: i64,
}

impl Atom {
    fn new(site: usize, alpha: Alpha, dirs: Vec<(usize, Alpha)>, time: i64) -> Self {
        Atom { site, alpha, dirs, time }
    }

    fn value_at(&self, coupling: &dyn Coupling, lat: &Lattice, psi: &[[f64; 2]]) -> Result<f64> {
        if self.dirs.is_empty() {
            Ok(coupling.value(lat, psi, self.site, self.alpha))
        } else {
            derivative(coupling, lat, psi, (self.site, self.alpha), &self.dirs)
        }
    }

    pub fn eval(&self, coupling: &dyn Coupling, orbit: &mut FreeOrbit) -> Result<f64> {
        let lat = orbit.lattice;
        let psi = orbit.at(self.time).to_vec();
        self.value_at(coupling, &lat, &psi)
    }

    /// Space offset and time shift applied to every site.
    pub fn translate(&self, lat: &Lattice, off: &[i64], dt: i64) -> Atom {
        Atom {
            site: lat.shift(self.site, off),
            alpha: self.alpha,
            dirs: self.dirs.iter().map(|&(s, a)| (lat.shift(s, off), a)).collect(),
            time: self.time + dt,
        }
    }

    /// nn(site) × [time − j, time + j].
    pub fn cylinder(&self, lat: &Lattice, j: usize) -> Vec<Cell> {
        let j = j as i64;
        let mut out = Vec::new();
        for &s in lat.neighbors(self.site).iter() {
            for t in self.time - j..=self.time + j {
                out.push((s, t));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Monomial {
    pub order: usize,
    pub coef: f64,
    pub atoms: Vec<Atom>,
}

impl Monomial {
    pub fn eval(&self, coupling: &dyn Coupling, orbit: &mut FreeOrbit) -> Result<f64> {
        let mut v = self.coef;
        for a in &self.atoms {
            v *= a.eval(coupling, orbit)?;
        }
        Ok(v)
    }
}

/// Monomials of δΛ^{center}_(k) for k = `order` (1 or 2), with the p- and
/// j-sums of δh and δV cut at `p_cap`.
pub fn lambda_monomials(lat: &Lattice, coupling: &dyn Coupling, center: usize, order: usize, p_cap: usize) -> Result<Vec<Monomial>> {
    let lam = lattice::lambda();
    let xi = center;
    let p = Alpha::Plus;
    let m = Alpha::Minus;
    let mut out = Vec::new();
    if coupling.vanishes(p) {
        // δL carries f^{ξ+} in every term.
        return Ok(out);
    }
    match order {
        1 => out.push(Monomial { order: 1, coef: lam, atoms: vec![Atom::new(xi, p, vec![(xi, p)], 0)] }),
        2 => {
            let nn: Vec<usize> = lat.neighbors(xi).to_vec();
            let mut nn_u = nn.clone();
            nn_u.sort_unstable();
            nn_u.dedup();
            for &eta in &nn_u {
                // λ·D²f^{ξ+}[e_ξ+, δh_(1)]
                for beta in Alpha::BOTH {
                    if coupling.vanishes(beta) {
                        continue;
                    }
                    for q in 0..=p_cap as i64 {
                        let shift = if beta == p { q } else { -(q + 1) };
                        let w = -beta.sign() * lam.powi((q + beta.rho()) as i32);
                        out.push(Monomial {
                            order: 2,
                            coef: lam * w,
                            atoms: vec![Atom::new(xi, p, vec![(xi, p), (eta, beta)], 0), Atom::new(eta, beta, vec![], shift)],
                        });
                    }
                }
                // λ·Df^{ξ+}[δV^{(ξ)}_(1)]
                if !coupling.vanishes(m) {
                    for j in 0..=p_cap as i64 {
                        out.push(Monomial {
                            order: 2,
                            coef: lam * lam.powi((2 * j + 1) as i32),
                            atoms: vec![Atom::new(xi, p, vec![(eta, m)], 0), Atom::new(eta, m, vec![(xi, p)], -(j + 1))],
                        });
                    }
                }
                // −λ²/2 (δL_(1)²)^{ξξ}
                out.push(Monomial {
                    order: 2,
                    coef: -0.5 * lam * lam,
                    atoms: vec![Atom::new(xi, p, vec![(eta, p)], 0), Atom::new(eta, p, vec![(xi, p)], 0)],
                });
            }
        }
        _ => {
            return Err(SrbError::InvalidConfig(format!("potential order {order} not supported (1 or 2)")));
        }
    }
    Ok(out)
}

/// Σ_monomials at ψ. Agrees with the recursive δΛ_(k) when p_cap equals its P_max.
pub fn eval_monomials(monos: &[Monomial], coupling: &dyn Coupling, state: &LatticeState) -> Result<f64> {
    let mut orbit = FreeOrbit::new(state);
    let mut acc = 0.0;
    for m in monos {
        acc += m.eval(coupling, &mut orbit)?;
    }
    Ok(acc)
}

/// Decode one column of `field` on [t − j, t + j], continued by connectors and σ̂.
pub fn decode_window(part: &MarkovPartition, field: &SymbolField, site: usize, t: i64, j: usize, tail: usize) -> Result<[f64; 2]> {
    let j = j as i64;
    if t - j < field.t_min || t + j > field.t_max {
        return Err(SrbError::InvalidState(format!(
            "window [{}, {}] outside the symbol field [{}, {}]",
            t - j,
            t + j,
            field.t_min,
            field.t_max
        )));
    }
    let col = field.column(site);
    let lo = (t - j - field.t_min) as usize;
    let hi = (t + j - field.t_min) as usize;
    part.decode_at(&col[lo..=hi], j as usize, tail)
}

/// Telescoped pieces a_(0..=j_max) of an atom on a coded field.
pub fn atom_pieces(
    part: &MarkovPartition,
    coupling: &dyn Coupling,
    lat: &Lattice,
    field: &SymbolField,
    atom: &Atom,
    j_max: usize,
    tail: usize,
) -> Result<Vec<f64>> {
    let cols: Vec<usize> = lat.neighbors(atom.site).to_vec();
    let mut psi = vec![[0.0; 2]; lat.len()];
    let mut out = Vec::with_capacity(j_max + 1);
    let mut prev = 0.0;
    for j in 0..=j_max {
        for &c in &cols {
            psi[c] = decode_window(part, field, c, atom.time, j, tail)?;
        }
        let v = atom.value_at(coupling, lat, &psi)?;
        out.push(v - prev);
        prev = v;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialConfig {
    pub eps: f64,
    pub order: usize,
    pub j_max: usize,
    /// Cut of the p- and j-sums in δh and δV (time radius of the atoms).
    pub radius: usize,
    pub samples: usize,
    pub seed: u64,
    /// σ̂ digits appended beyond every connector when decoding.
    pub tail: usize,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { eps: 0.05, order: 2, j_max: 12, radius: 3, samples: 8, seed: 0, tail: 40 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialRecord {
    pub cells: Vec<Cell>,
    pub n_x: usize,
    pub d_c: f64,
    pub sum_r: usize,
    pub diameter: usize,
    pub sup_norm: f64,
    /// Lowest ε order contributing to φ_X.
    pub order: usize,
}

#[derive(Debug, Clone)]
struct Entry {
    mono: usize,
    js: Vec<usize>,
}

/// φ_X for every translation class X produced by the centered family.
pub struct PotentialFamily<'a> {
    part: &'a MarkovPartition,
    coupling: &'a dyn Coupling,
    pub lattice: Lattice,
    pub config: PotentialConfig,
    monos: Vec<Monomial>,
    entries: Vec<Entry>,
    /// Relative support (center at (origin, 0)) → entry indices.
    index: HashMap<Vec<Cell>, Vec<usize>>,
    /// Canonical class representatives.
    classes: Vec<Vec<Cell>>,
    /// Estimate of the discarded j > j_max and time-cap tails, per center.
    pub truncation_bound: f64,
}

impl<'a> PotentialFamily<'a> {
    pub fn monomials(&self) -> &[Monomial] {
        &self.monos
    }

    pub fn classes(&self) -> &[Vec<Cell>] {
        &self.classes
    }

    /// Contributions (entry, center) to φ_X for an absolute support X.
    fn contributions(&self, x: &[Cell]) -> Vec<(usize, Cell)> {
        let origin = (self.lattice.origin(), 0);
        let mut out = Vec::new();
        for &c in x {
            let rel = translate(&self.lattice, x, c, origin);
            if let Some(es) = self.index.get(&rel) {
                out.extend(es.iter().map(|&e| (e, c)));
            }
        }
        out
    }

    /// φ_X(σ) = Σ_{c ∈ X} φ^{(c)}_X(σ).
    pub fn evaluate(&self, x: &[Cell], field: &SymbolField) -> Result<f64> {
        let mut cache = HashMap::new();
        let contrib = self.contributions(x);
        self.evaluate_with(&contrib, field, &mut cache)
    }

    fn evaluate_with(&self, contrib: &[(usize, Cell)], field: &SymbolField, cache: &mut HashMap<Atom, Vec<f64>>) -> Result<f64> {
        let lat = self.lattice;
        let origin = lat.origin();
        let mut acc = 0.0;
        for &(e, c) in contrib {
            let entry = &self.entries[e];
            let mono = &self.monos[entry.mono];
            let off = lat.offset(origin, c.0);
            let mut v = mono.coef * self.config.eps.powi(mono.order as i32);
            for (atom, &j) in mono.atoms.iter().zip(&entry.js) {
                let a = atom.translate(&lat, &off, c.1);
                if !cache.contains_key(&a) {
                    let p = atom_pieces(self.part, self.coupling, &lat, field, &a, self.config.j_max, self.config.tail)?;
                    cache.insert(a.clone(), p);
                }
                v *= cache[&a][j];
            }
            acc += v;
        }
        Ok(acc)
    }

    /// Time range [lo, hi] spanned by the class representatives.
    pub fn time_span(&self) -> (i64, i64) {
        let mut lo = 0;
        let mut hi = 0;
        for x in &self.classes {
            for &(_, t) in x {
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        (lo, hi)
    }

    /// Sup norms over `config.samples` random admissible fields.
    pub fn records(&self) -> Result<Vec<PotentialRecord>> {
        let lat = self.lattice;
        let (lo, hi) = self.time_span();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let contribs: Vec<Vec<(usize, Cell)>> = self.classes.iter().map(|x| self.contributions(x)).collect();
        let mut sup = vec![0.0f64; self.classes.len()];
        for _ in 0..self.config.samples {
            let jm = self.config.j_max as i64;
            let field = SymbolField::random(lat, lo - jm - 1, hi + jm + 1, self.part, &mut rng);
            let mut cache = HashMap::new();
            for (k, c) in contribs.iter().enumerate() {
                let v = self.evaluate_with(c, &field, &mut cache)?;
                sup[k] = sup[k].max(v.abs());
            }
        }
        Ok(self
            .classes
            .iter()
            .zip(&contribs)
            .zip(sup)
            .map(|((x, c), s)| {
                let g = SupportGeometry::of(&lat, x);
                let order = c.iter().map(|&(e, _)| self.monos[self.entries[e].mono].order).min().unwrap_or(0);
                PotentialRecord { cells: x.clone(), n_x: g.n_x, d_c: g.d_c, sum_r: g.sum_r, diameter: g.diameter, sup_norm: s, order }
            })
            .collect())
    }
}

/// Build the centered family from the monomials of δΛ up to `config.order`
/// and group it into translation classes.
pub fn assemble_srb_potentials<'a>(
    part: &'a MarkovPartition,
    coupling: &'a dyn Coupling,
    lat: Lattice,
    config: PotentialConfig,
) -> Result<PotentialFamily<'a>> {
    if config.order == 0 || config.order > 2 {
        return Err(SrbError::InvalidConfig(format!("potential order {} not supported (1 or 2)", config.order)));
    }
    let origin = lat.origin();
    let mut monos = Vec::new();
    if config.eps != 0.0 {
        for k in 1..=config.order {
            monos.extend(lambda_monomials(&lat, coupling, origin, k, config.radius)?);
        }
    }
    let mut entries = Vec::new();
    let mut index: HashMap<Vec<Cell>, Vec<usize>> = HashMap::new();
    for (mi, m) in monos.iter().enumerate() {
        let r = m.atoms.len();
        let combos = (config.j_max + 1).pow(r as u32);
        for code in 0..combos {
            let mut js = Vec::with_capacity(r);
            let mut c = code;
            for _ in 0..r {
                js.push(c % (config.j_max + 1));
                c /= config.j_max + 1;
            }
            let mut cells = vec![(origin, 0)];
            for (a, &j) in m.atoms.iter().zip(&js) {
                cells.extend(a.cylinder(&lat, j));
            }
            normalize(&mut cells);
            index.entry(cells).or_default().push(entries.len());
            entries.push(Entry { mono: mi, js });
        }
    }
    let mut seen: HashMap<Vec<Cell>, ()> = HashMap::new();
    let mut classes = Vec::new();
    let mut keys: Vec<&Vec<Cell>> = index.keys().collect();
    keys.sort();
    for s in keys {
        let c = canonical_fast(&lat, s);
        if seen.insert(c.clone(), ()).is_none() {
            classes.push(c);
        }
    }
    classes.sort();
    let lam = lattice::lambda();
    let an = coupling.analyticity();
    let nn = lat.neighbors(origin).len() as f64;
    let truncation_bound = if config.eps == 0.0 {
        0.0
    } else {
        let e = config.eps.abs();
        // Coded points move by O(λ^j) between levels; atoms are Lipschitz
        // with constant ≤ Cauchy bound of one more derivative.
        let j_tail = e * lam * an.cauchy_bound(2) * nn * 2.0 * lam.powi(config.j_max as i32 + 1) / (1.0 - lam);
        let t_tail = if config.order >= 2 {
            e * e * lam * 2.0 * nn * an.cauchy_bound(2) * an.cauchy_bound(1).max(an.g) * lam.powi(config.radius as i32 + 1) / (1.0 - lam)
        } else {
            0.0
        };
        j_tail + t_tail
    };
    Ok(PotentialFamily { part, coupling, lattice: lat, config, monos, entries, index, classes, truncation_bound })
}

/// Canonical form using only the earliest cells as anchors.
fn canonical_fast(lat: &Lattice, cells: &[Cell]) -> Vec<Cell> {
    let tmin = cells.iter().map(|c| c.1).min().unwrap_or(0);
    let origin = (lat.origin(), 0);
    let anchors: Vec<Cell> = cells.iter().copied().filter(|c| c.1 == tmin).collect();
    // Every translate of X has the translated earliest cells as its own
    // earliest cells, so the minimum over these anchors is class invariant.
    anchors.iter().map(|&c| translate(lat, cells, c, origin)).min().unwrap_or_default()
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(records: &[PotentialRecord], mut w: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| SrbError::InvalidState(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub all_zero: bool,
    pub c: f64,
    /// Rate in the tree distance d_c.
    pub kappa: f64,
    /// Rate in Σ|R_i|.
    pub kappa_r: f64,
    /// NaN when n_X is constant over the family.
    pub nu: f64,
    pub r2: f64,
    pub n_points: usize,
    pub n_shapes: usize,
    pub residuals: Vec<f64>,
}

/// Fit log‖φ_X‖ = log c − κ d_c − κ_R Σ|R_i| + n_X log ν. Regressors that are
/// constant over the family are dropped and their coefficients reported NaN.
pub fn decay_report(records: &[PotentialRecord]) -> Result<DecayReport> {
    let nonzero: Vec<&PotentialRecord> = records.iter().filter(|r| r.sup_norm > 0.0 && r.sup_norm.is_finite()).collect();
    if !records.is_empty() && nonzero.is_empty() {
        return Ok(DecayReport {
            all_zero: true,
            c: 0.0,
            kappa: 0.0,
            kappa_r: 0.0,
            nu: 0.0,
            r2: 0.0,
            n_points: 0,
            n_shapes: records.len(),
            residuals: vec![],
        });
    }
    let mut shapes: Vec<(usize, u64, usize)> = nonzero.iter().map(|r| (r.n_x, r.d_c.to_bits(), r.sum_r)).collect();
    shapes.sort_unstable();
    shapes.dedup();
    if shapes.len() < 5 {
        return Err(SrbError::InsufficientData(format!("{} distinct support shapes, need 5", shapes.len())));
    }
    let cols: [Box<dyn Fn(&PotentialRecord) -> f64>; 3] =
        [Box::new(|r| r.d_c), Box::new(|r| r.sum_r as f64), Box::new(|r| r.n_x as f64)];
    let used: Vec<usize> = (0..3)
        .filter(|&k| {
            let f = &cols[k];
            let v0 = f(nonzero[0]);
            nonzero.iter().any(|r| f(r) != v0)
        })
        .collect();
    let x: Vec<Vec<f64>> = nonzero.iter().map(|r| used.iter().map(|&k| cols[k](r)).collect()).collect();
    let y: Vec<f64> = nonzero.iter().map(|r| r.sup_norm.ln()).collect();
    let fit = ols(&x, &y).ok_or_else(|| SrbError::InsufficientData("singular decay design".into()))?;
    let mut coef = [f64::NAN; 3];
    for (i, &k) in used.iter().enumerate() {
        coef[k] = fit.coef[i + 1];
    }
    Ok(DecayReport {
        all_zero: false,
        c: fit.coef[0].exp(),
        kappa: -coef[0],
        kappa_r: -coef[1],
        nu: coef[2].exp(),
        r2: fit.r2,
        n_points: nonzero.len(),
        n_shapes: shapes.len(),
        residuals: fit.residuals,
    })
}
