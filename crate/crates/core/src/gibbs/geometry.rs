//! Space-time supports: time-like segments, tree distance and diameter.

use crate::lattice::Lattice;
use serde::Serialize;

/// A space-time cell (site, time).
pub type Cell = (usize, i64);

/// Maximal time-connected run of cells in one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub site: usize,
    pub t0: i64,
    pub t1: i64,
}

impl Segment {
    pub fn len(&self) -> usize {
        (self.t1 - self.t0 + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportGeometry {
    pub segments: Vec<Segment>,
    pub n_x: usize,
    /// Total length of the ℓ¹ minimum spanning tree over segment centers.
    pub d_c: f64,
    /// Σ_i |R_i(X)|, the cell count.
    pub sum_r: usize,
    pub diameter: usize,
}

/// Sorted, deduplicated cells.
pub fn normalize(cells: &mut Vec<Cell>) {
    cells.sort_unstable();
    cells.dedup();
}

pub fn segments(cells: &[Cell]) -> Vec<Segment> {
    let mut c = cells.to_vec();
    normalize(&mut c);
    let mut out: Vec<Segment> = Vec::new();
    for (site, t) in c {
        match out.last_mut() {
            Some(s) if s.site == site && s.t1 + 1 == t => s.t1 = t,
            _ => out.push(Segment { site, t0: t, t1: t }),
        }
    }
    out
}

impl SupportGeometry {
    pub fn of(lat: &Lattice, cells: &[Cell]) -> Self {
        let segs = segments(cells);
        let sum_r = segs.iter().map(Segment::len).sum();
        let centers: Vec<(usize, f64)> = segs.iter().map(|s| (s.site, 0.5 * (s.t0 + s.t1) as f64)).collect();
        let dist = |a: &(usize, f64), b: &(usize, f64)| lat.dist(a.0, b.0) as f64 + (a.1 - b.1).abs();
        // Prim on the complete graph.
        let m = centers.len();
        let mut d_c = 0.0;
        if m > 1 {
            let mut in_tree = vec![false; m];
            let mut best = vec![f64::INFINITY; m];
            best[0] = 0.0;
            for _ in 0..m {
                let (i, _) = best
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !in_tree[*i])
                    .fold((usize::MAX, f64::INFINITY), |acc, (i, &b)| if b < acc.1 { (i, b) } else { acc });
                in_tree[i] = true;
                d_c += best[i];
                for j in 0..m {
                    if !in_tree[j] {
                        best[j] = best[j].min(dist(&centers[i], &centers[j]));
                    }
                }
            }
        }
        let mut diameter = 0;
        for a in cells {
            for b in cells {
                diameter = diameter.max(lat.dist(a.0, b.0) + (a.1 - b.1).unsigned_abs() as usize);
            }
        }
        SupportGeometry { n_x: segs.len(), segments: segs, d_c, sum_r, diameter }
    }
}

/// Translate cells so that `from` lands on `to` (space offset on the torus, time shift).
pub fn translate(lat: &Lattice, cells: &[Cell], from: Cell, to: Cell) -> Vec<Cell> {
    let off = lat.offset(from.0, to.0);
    let dt = to.1 - from.1;
    let mut out: Vec<Cell> = cells.iter().map(|&(s, t)| (lat.shift(s, &off), t + dt)).collect();
    normalize(&mut out);
    out
}

/// Canonical representative of the translation class of a support: the
/// lexicographically smallest translate placing one of its cells at (origin, 0).
pub fn canonical(lat: &Lattice, cells: &[Cell]) -> Vec<Cell> {
    let origin = (lat.origin(), 0);
    cells
        .iter()
        .map(|&c| translate(lat, cells, c, origin))
        .min()
        .unwrap_or_default()
}
