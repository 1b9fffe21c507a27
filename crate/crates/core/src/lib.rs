//! Evolving the initial design domain of a SIMP topology optimiser.
//!
//! A genome places rectangular voids in the design domain; each genome is
//! decoded into a passive mask, optimised with SIMP, and filed into a
//! MAP-Elites archive keyed on the entropy of the void sizes and the spread
//! of the void centroids.

pub mod fem2d;
pub mod genome;
pub mod map_elites;
pub mod problems;
pub mod simp;

pub use fem2d::{FemError, LoadCase, Material, Mesh2D, SolverKind, SolverOptions};
pub use genome::{Descriptor, DispersionStat, Genome, GenomeBounds, MutationParams, VoidGene};
pub use map_elites::{Archive, ArchiveEntry, ArchiveMetrics, DescriptorSpace, InsertOutcome, Provenance};
pub use problems::{ObjectiveKind, ProblemSpec};
pub use simp::{DensityField, ElementState, InitialDensity, PassiveMask, SimpError, SimpParams, SimpResult, VoidMode};
