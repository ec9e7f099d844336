//! Telescoping F(c_0(σ)) into pieces F_(j) that depend on σ through |t| ≤ j.

use crate::error::Result;
use crate::stats::{fsum, two_sum};
use crate::symbolic::{MarkovPartition, SymbolField};

/// F_(j) stored as an unevaluated sum hi + lo with no rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub j: usize,
    pub hi: f64,
    pub lo: f64,
}

impl Piece {
    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Debug, Clone)]
pub struct Telescoped {
    pub pieces: Vec<Piece>,
    /// F(c_0(σ^{j_max})).
    pub restricted_value: f64,
}

impl Telescoped {
    /// Σ_{i ≤ j} F_(i), correctly rounded.
    pub fn partial_sum(&self, j: usize) -> f64 {
        fsum(self.pieces.iter().take(j + 1).flat_map(|p| [p.hi, p.lo]))
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.pieces.iter().map(|p| p.value().abs()).collect()
    }
}

/// Pieces F_(0) = F(σ^0) and F_(j) = F(σ^j) − F(σ^{j−1}) for j ≤ j_max.
///
/// Partial sums reproduce F(σ^j) bit for bit.
pub fn telescope_function<F>(part: &MarkovPartition, field: &SymbolField, j_max: usize, mut f: F) -> Result<Telescoped>
where
    F: FnMut(&SymbolField) -> Result<f64>,
{
    let mut pieces = Vec::with_capacity(j_max + 1);
    let mut prev = f(&part.restrict_sigma(field, 0))?;
    pieces.push(Piece { j: 0, hi: prev, lo: 0.0 });
    for j in 1..=j_max {
        let cur = f(&part.restrict_sigma(field, j))?;
        let (hi, lo) = two_sum(cur, -prev);
        pieces.push(Piece { j, hi, lo });
        prev = cur;
    }
    Ok(Telescoped { pieces, restricted_value: prev })
}
