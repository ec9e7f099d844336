//! Gibbs representation: potentials on space-time supports, decimation and
//! the polymer gas.

pub mod decimation;
pub mod geometry;
pub mod polymer;
pub mod potentials;
pub mod telescope;

pub use decimation::{decimate, perron_frobenius, DecimatedLattice, DecimatedSystem, LocalPotential, PerronFrobenius};
pub use geometry::{Cell, SupportGeometry};
pub use polymer::{cluster_sum, mayer_weight, pressure_truncated, ursell_weight, ClusterSum, Polymer, PolymerCaps, PressureMode, PressureReport};
pub use potentials::{assemble_srb_potentials, decay_report, DecayReport, PotentialConfig, PotentialFamily, PotentialRecord};
