//! Polymer activities on Λ_D, Ursell weights and truncated cluster sums.

use super::decimation::{bits, Block, DecimatedSystem};
use crate::error::{Result, SrbError};
use crate::stats::fsum;
use serde::Serialize;
use std::collections::{BTreeSet, HashSet};

/// Largest multiset handled by the connected-graph sums.
pub const URSELL_MAX: usize = 8;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Polymer {
    pub mask: u64,
    pub activity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolymerTable {
    pub polymers: Vec<Polymer>,
    /// Polymers dropped because |ρ| < prune.
    pub pruned: usize,
    /// Largest |ρ| among the dropped ones.
    pub pruned_max: f64,
    pub prune: f64,
    /// Polymers whose spin sum exceeds the assignment cap; left out of the
    /// gas.
    pub truncated: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
pub struct PolymerCaps {
    /// Most W terms joined into one polymer.
    pub molecules: usize,
    /// Most blocks in one polymer.
    pub blocks: usize,
    /// Most spin assignments summed for one activity.
    pub assignments: f64,
    /// Most polymers kept.
    pub count: usize,
    pub prune: f64,
}

impl Default for PolymerCaps {
    fn default() -> Self {
        PolymerCaps { molecules: 3, blocks: 10, assignments: 2e6, count: 20_000, prune: 1e-15 }
    }
}

/// Unions of connected families of W-term closures, filtered by `keep`.
pub fn enumerate_polymers(sys: &DecimatedSystem, caps: &PolymerCaps, keep: impl Fn(u64) -> bool) -> Result<Vec<u64>> {
    let mols: Vec<u64> = sys.w.iter().map(|w| w.closure).collect::<BTreeSet<_>>().into_iter().collect();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut frontier: Vec<u64> = mols.iter().copied().filter(|m| m.count_ones() as usize <= caps.blocks).collect();
    seen.extend(frontier.iter().copied());
    for _ in 1..caps.molecules {
        let mut next = Vec::new();
        for &u in &frontier {
            for &m in &mols {
                let v = u | m;
                if u & m != 0 && v != u && v.count_ones() as usize <= caps.blocks && seen.insert(v) {
                    next.push(v);
                }
            }
        }
        if seen.len() > 50 * caps.count {
            return Err(SrbError::TooManyPolymers { count: seen.len(), limit: 50 * caps.count });
        }
        frontier = next;
    }
    let mut out: Vec<u64> = seen.into_iter().filter(|&m| keep(m)).collect();
    out.sort_unstable();
    if out.len() > caps.count {
        return Err(SrbError::TooManyPolymers { count: out.len(), limit: caps.count });
    }
    Ok(out)
}

/// Relabel the bits of γ as 0..k so subsets of γ are indexed by k-bit words.
fn compress(gamma: u64, mask: u64) -> usize {
    let mut out = 0;
    for (k, b) in bits(gamma).enumerate() {
        if mask >> b & 1 == 1 {
            out |= 1 << k;
        }
    }
    out
}

/// ρ(γ) = E_m[ Σ_{connected families of W terms, ∪ closures = γ} Π (e^{−W} − 1) ].
pub fn activity(sys: &DecimatedSystem, gamma: u64, caps: &PolymerCaps) -> Result<f64> {
    let count = sys.assignment_count(gamma);
    if count > caps.assignments {
        return Err(SrbError::TooManyPolymers { count: count as usize, limit: caps.assignments as usize });
    }
    let k = gamma.count_ones() as usize;
    let full = (1usize << k) - 1;
    let terms: Vec<(usize, usize)> =
        sys.w.iter().enumerate().filter(|(_, w)| w.closure & !gamma == 0).map(|(i, w)| (i, compress(gamma, w.closure))).collect();
    let size = 1usize << k;
    let mut g = vec![0.0f64; size];
    let mut rho = vec![0.0f64; size];
    let mut acc = Vec::with_capacity(count as usize);
    sys.for_each_assignment(gamma, |spins, m| {
        // E(S) = Π_{cl(Y) ⊆ S} e^{−W_Y}
        g.iter_mut().for_each(|x| *x = 1.0);
        for &(i, cl) in &terms {
            let e = (-sys.w_value(&sys.w[i], spins)).exp();
            g[cl] *= e;
        }
        // Product over subsets: zeta transform in multiplicative form.
        for b in 0..k {
            for s in 0..size {
                if s >> b & 1 == 1 {
                    g[s] *= g[s ^ (1 << b)];
                }
            }
        }
        // Möbius: families whose union is exactly S.
        for b in 0..k {
            for s in 0..size {
                if s >> b & 1 == 1 {
                    g[s] -= g[s ^ (1 << b)];
                }
            }
        }
        // Proper subsets come first in numeric order.
        for s in 1..size {
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            let mut r = g[s];
            if rest != 0 {
                let mut t = (rest - 1) & rest;
                loop {
                    let tt = t | low;
                    r -= rho[tt] * g[s ^ tt];
                    if t == 0 {
                        break;
                    }
                    t = (t - 1) & rest;
                }
            }
            rho[s] = r;
        }
        acc.push(m * rho[full]);
    });
    Ok(fsum(acc))
}

pub fn polymer_table(sys: &DecimatedSystem, caps: &PolymerCaps, keep: impl Fn(u64) -> bool) -> Result<PolymerTable> {
    let masks = enumerate_polymers(sys, caps, keep)?;
    let mut polymers = Vec::new();
    let mut pruned = 0;
    let mut pruned_max = 0.0f64;
    let mut truncated = Vec::new();
    for m in masks {
        if sys.assignment_count(m) > caps.assignments {
            truncated.push(m);
            continue;
        }
        let a = activity(sys, m, caps)?;
        if a.abs() < caps.prune {
            pruned += 1;
            pruned_max = pruned_max.max(a.abs());
        } else {
            polymers.push(Polymer { mask: m, activity: a });
        }
    }
    Ok(PolymerTable { polymers, pruned, pruned_max, prune: caps.prune, truncated })
}

/// Sum over connected spanning subgraphs g of the overlap graph of Π_{e∈g} w,
/// by inclusion–exclusion on the component of vertex 0.
fn connected_sum(masks: &[u64], w: i64) -> i64 {
    let n = masks.len();
    let size = 1usize << n;
    let mut tot = vec![1i64; size];
    for s in 1..size {
        let hi = 63 - (s as u64).leading_zeros() as usize;
        let rest = s ^ (1 << hi);
        let mut e = 0u32;
        for j in bits(rest as u64) {
            if masks[j] & masks[hi] != 0 {
                e += 1;
            }
        }
        tot[s] = tot[rest] * (1 + w).pow(e);
    }
    let mut conn = vec![0i64; size];
    for s in 1..size {
        let low = s & s.wrapping_neg();
        let mut c = tot[s];
        let rest = s ^ low;
        let mut t = (rest.wrapping_sub(1)) & rest;
        if rest != 0 {
            loop {
                let tt = t | low;
                c -= conn[tt] * tot[s ^ tt];
                if t == 0 {
                    break;
                }
                t = (t - 1) & rest;
            }
        }
        conn[s] = c;
    }
    conn[size - 1]
}

/// Number of connected subgraphs of the overlap graph spanning all polymers of
/// the multiset (repeats overlap each other).
pub fn ursell_weight(polymers: &[u64]) -> Result<u64> {
    if polymers.len() > URSELL_MAX {
        return Err(SrbError::TooManyPolymers { count: polymers.len(), limit: URSELL_MAX });
    }
    if polymers.is_empty() {
        return Ok(0);
    }
    Ok(connected_sum(polymers, 1) as u64)
}

/// Σ_{g connected spanning} (−1)^{|g|}: the coefficient of Π ρ in log Ξ.
pub fn mayer_weight(polymers: &[u64]) -> Result<i64> {
    if polymers.len() > URSELL_MAX {
        return Err(SrbError::TooManyPolymers { count: polymers.len(), limit: URSELL_MAX });
    }
    if polymers.is_empty() {
        return Ok(0);
    }
    Ok(connected_sum(polymers, -1))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSum {
    pub value: f64,
    /// Contribution of multisets with exactly n polymers, index n − 1.
    pub by_order: Vec<f64>,
    /// Geometric tail estimate from the last two orders.
    pub tail: f64,
    pub clusters: usize,
}

fn tail_estimate(by_order: &[f64]) -> f64 {
    let n = by_order.len();
    let last = by_order.last().map_or(0.0, |v| v.abs());
    if n < 2 || last == 0.0 {
        return last;
    }
    let r = last / by_order[n - 2].abs().max(f64::MIN_POSITIVE);
    if r < 1.0 {
        last * r / (1.0 - r)
    } else {
        last
    }
}

/// Σ over connected multisets Γ with |Γ| ≤ n_max of
/// φ^T(Γ) Π ρ / Π mult! · weight(∪Γ), only for Γ with `anchor(∪Γ)`.
pub fn cluster_sum(polys: &[Polymer], n_max: usize, anchor: impl Fn(u64) -> Option<f64>) -> Result<ClusterSum> {
    cluster_sum_rooted(polys, polys.len(), n_max, anchor)
}

/// As `cluster_sum`, restricted to clusters containing one of the first
/// `roots` polymers.
pub fn cluster_sum_rooted(polys: &[Polymer], roots: usize, n_max: usize, anchor: impl Fn(u64) -> Option<f64>) -> Result<ClusterSum> {
    if n_max > URSELL_MAX {
        return Err(SrbError::TooManyPolymers { count: n_max, limit: URSELL_MAX });
    }
    let p = polys.len();
    let adj: Vec<Vec<usize>> =
        (0..p).map(|i| (0..p).filter(|&j| j != i && polys[i].mask & polys[j].mask != 0).collect()).collect();
    let mut by_order = vec![Vec::new(); n_max];
    let mut clusters = 0usize;
    // ESU enumeration of connected vertex sets, each exactly once.
    let mut visit = |set: &[usize]| -> Result<()> {
        let union = set.iter().fold(0u64, |m, &i| m | polys[i].mask);
        let Some(wt) = anchor(union) else { return Ok(()) };
        let k = set.len();
        let mut mult = vec![1usize; k];
        loop {
            let total: usize = mult.iter().sum();
            if total <= n_max {
                let mut ms = Vec::with_capacity(total);
                let mut coef = 1.0;
                for (j, &i) in set.iter().enumerate() {
                    for _ in 0..mult[j] {
                        ms.push(polys[i].mask);
                    }
                    coef *= polys[i].activity.powi(mult[j] as i32) / crate::conjugation::factorial(mult[j]);
                }
                let phi = mayer_weight(&ms)? as f64;
                by_order[total - 1].push(phi * coef * wt);
                clusters += 1;
            }
            // next multiplicity vector with Σ ≤ n_max
            let mut j = 0;
            loop {
                if j == k {
                    return Ok(());
                }
                mult[j] += 1;
                if mult.iter().sum::<usize>() <= n_max {
                    break;
                }
                mult[j] = 1;
                j += 1;
            }
        }
    };
    fn extend(
        set: &mut Vec<usize>,
        ext: Vec<usize>,
        v: usize,
        adj: &[Vec<usize>],
        n_max: usize,
        visit: &mut dyn FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        visit(set)?;
        if set.len() == n_max {
            return Ok(());
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &adj[w] {
                if u > v && !set.contains(&u) && !ext.contains(&u) && !set.iter().any(|&s| adj[s].contains(&u)) && !next.contains(&u) {
                    next.push(u);
                }
            }
            set.push(w);
            extend(set, next, v, adj, n_max, visit)?;
            set.pop();
        }
        Ok(())
    }
    for v in 0..roots.min(p) {
        let ext: Vec<usize> = adj[v].iter().copied().filter(|&u| u > v).collect();
        extend(&mut vec![v], ext, v, &adj, n_max, &mut visit)?;
    }
    let by_order: Vec<f64> = by_order.into_iter().map(fsum).collect();
    let value = fsum(by_order.iter().copied());
    let tail = tail_estimate(&by_order);
    Ok(ClusterSum { value, by_order, tail, clusters })
}

/// log Ξ of the hard-core gas by direct summation over families of pairwise
/// disjoint polymers.
pub fn hard_core_log_xi(polys: &[Polymer], limit: usize) -> Result<f64> {
    let mut terms = Vec::new();
    fn rec(polys: &[Polymer], start: usize, used: u64, w: f64, terms: &mut Vec<f64>, limit: usize) -> bool {
        if used != 0 {
            terms.push(w);
        }
        if terms.len() > limit {
            return false;
        }
        for i in start..polys.len() {
            if polys[i].mask & used == 0 && !rec(polys, i + 1, used | polys[i].mask, w * polys[i].activity, terms, limit) {
                return false;
            }
        }
        true
    }
    if !rec(polys, 0, 0, 1.0, &mut terms, limit) {
        return Err(SrbError::TooManyPolymers { count: terms.len(), limit });
    }
    Ok(fsum(terms).ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PressureMode {
    /// Clusters through an interior B and H point, per unit space-time volume.
    Bulk,
    /// The whole window as a closed system; `value` is log Z_Λ.
    Closed,
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureReport {
    pub mode: PressureMode,
    /// (1/a) log l for `Bulk`, the free part of log Z_Λ for `Closed`.
    pub free: f64,
    pub value: f64,
    /// value per cell: P for `Bulk`, log Z_Λ / |Λ| for `Closed`.
    pub pressure: f64,
    pub tail: f64,
    pub polymers: usize,
    pub pruned: usize,
    pub truncated: usize,
    pub clusters: usize,
    pub by_order: Vec<f64>,
}

/// Bulk: P = (1/a) log l + (S_B + S_H)/(h0 a), where S_B and S_H sum the
/// clusters through an interior B and H point of column 0, each weighted by
/// 1/|∪Γ|. Closed: log Z_Λ = |V| ℓ h0 log l + |V| log(Σπ Σπ*) + log Ξ.
pub fn pressure_truncated(sys: &DecimatedSystem, caps: &PolymerCaps, n_max: usize, mode: PressureMode) -> Result<PressureReport> {
    let dl = sys.dl;
    if mode == PressureMode::Closed {
        let table = polymer_table(sys, caps, |_| true)?;
        let cs = cluster_sum(&table.polymers, n_max, |_| Some(1.0))?;
        let free = sys.log_z_free();
        let value = free + cs.value;
        return Ok(PressureReport {
            mode,
            free,
            value,
            pressure: value / dl.volume() as f64,
            tail: cs.tail,
            polymers: table.polymers.len(),
            pruned: table.pruned,
            truncated: table.truncated.len(),
            clusters: cs.clusters,
            by_order: cs.by_order,
        });
    }
    let mid = dl.ell / 2;
    if mid == 0 || mid + 1 >= dl.ell {
        return Err(SrbError::InvalidConfig("bulk pressure needs ℓ ≥ 4".into()));
    }
    let pb = 1u64 << dl.point(0, Block::B(mid));
    let ph = 1u64 << dl.point(0, Block::H(mid));
    let table = polymer_table(sys, caps, |m| m & (pb | ph) != 0)?;
    // Clusters reaching the window edge are not bulk.
    let edge: u64 = (0..dl.columns)
        .map(|c| (1u64 << dl.point(c, Block::B(0))) | (1u64 << dl.point(c, Block::B(dl.ell))))
        .fold(0, |a, b| a | b);
    let anchored_sum = |pt: u64| -> Result<ClusterSum> {
        let (mut through, rest): (Vec<Polymer>, Vec<Polymer>) = table.polymers.iter().partition(|q| q.mask & pt != 0);
        let roots = through.len();
        through.extend(rest);
        cluster_sum_rooted(&through, roots, n_max, |u| if u & pt != 0 && u & edge == 0 { Some(1.0 / u.count_ones() as f64) } else { None })
    };
    let sb = anchored_sum(pb)?;
    let sh = anchored_sum(ph)?;
    let scale = 1.0 / (dl.h0 * dl.a) as f64;
    let free = sys.pf.l.ln() / dl.a as f64;
    let by_order: Vec<f64> = sb.by_order.iter().zip(&sh.by_order).map(|(x, y)| scale * (x + y)).collect();
    let tail = tail_estimate(&by_order);
    let value = free + scale * (sb.value + sh.value);
    Ok(PressureReport {
        mode,
        free,
        value,
        pressure: value,
        tail,
        polymers: table.polymers.len(),
        pruned: table.pruned,
        truncated: table.truncated.len(),
        clusters: sb.clusters + sh.clusters,
        by_order,
    })
}
