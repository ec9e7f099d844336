//! Coupled cat-map lattices and their SRB measures at desk scale.
//!
//! The crate is organized bottom-up: [`lattice`] and [`coupling`] define the
//! dynamics, [`conjugation`] and [`unstable`] compute the perturbative series
//! for the conjugacy and the unstable frame, [`symbolic`] builds the Markov
//! coding, [`gibbs`] turns expansion coefficients into potentials and cluster
//! sums, and [`estimator`] measures SRB averages along orbits.

pub mod conjugation;
pub mod coupling;
pub mod error;
pub mod estimator;
pub mod gibbs;
pub mod lattice;
pub mod orbit_io;
pub mod stats;
pub mod symbolic;
pub mod unstable;

pub use coupling::{Analyticity, Coupling, CouplingSpec, SineCoupling, TrigPolynomialCoupling, TrigTerm, ZeroCoupling};
pub use error::{Result, SrbError};
pub use lattice::{Alpha, CatMap, Lattice, LatticeState};
pub use symbolic::{MarkovPartition, SymbolField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
